//! Capacities, equilibrium measures and optimality certificates.
//!
//! The solver maximizes the concave dual `mu -> 2 mu(E) - E_pi[mu]` over
//! nonnegative measures on `E`. Every iterate yields a dual lower bound
//! `mu(E)^2 / E_pi[mu]` (the best rescaling of `mu`) and a primal upper bound
//! `E_pi[mu] / (min_E V^mu)^2` from the admissible function
//! `I* mu / min_E V^mu`, so the returned gap is a certificate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::polytree::{BoundaryCell, RectangularSet, TreeSpec, Vertex};
use crate::potential::{Field, Operators};
use crate::weights::{predecessors, Weight};

/// A finite subset `E` of the closed truncated tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetSet {
    #[serde(default)]
    pub vertices: BTreeSet<Vertex>,
    #[serde(default)]
    pub cells: BTreeSet<BoundaryCell>,
}

impl TargetSet {
    pub fn new(
        tree: &TreeSpec,
        vertices: impl IntoIterator<Item = Vertex>,
        cells: impl IntoIterator<Item = BoundaryCell>,
    ) -> Result<Self> {
        let t = TargetSet {
            vertices: vertices.into_iter().collect(),
            cells: cells.into_iter().collect(),
        };
        t.check(tree)?;
        Ok(t)
    }

    pub fn vertex(v: Vertex) -> Self {
        TargetSet {
            vertices: [v].into(),
            cells: BTreeSet::new(),
        }
    }

    pub fn full_boundary(tree: &TreeSpec) -> Self {
        TargetSet {
            vertices: BTreeSet::new(),
            cells: tree.cells().collect(),
        }
    }

    /// The boundary cells of a rectangular set.
    pub fn from_rect(tree: &TreeSpec, set: &RectangularSet) -> Self {
        TargetSet {
            vertices: BTreeSet::new(),
            cells: set.cells(tree).into_iter().collect(),
        }
    }

    pub fn check(&self, tree: &TreeSpec) -> Result<()> {
        self.vertices
            .iter()
            .try_for_each(|v| tree.check_vertex(v))?;
        self.cells.iter().try_for_each(|c| tree.check_cell(c))
    }

    pub fn len(&self) -> usize {
        self.vertices.len() + self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &TargetSet) -> bool {
        self.vertices.is_subset(&other.vertices) && self.cells.is_subset(&other.cells)
    }

    /// Coordinate projection onto one axis, as a target set of a 1-d tree.
    pub fn projection(&self, axis: usize) -> TargetSet {
        TargetSet {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vertex::new(vec![v.coords[axis]]))
                .collect(),
            cells: self
                .cells
                .iter()
                .map(|c| BoundaryCell::new(vec![c.cell[axis]]))
                .collect(),
        }
    }

    /// Cartesian product of per-axis sets. Mixing interior and boundary
    /// coordinates would land on a non-distinguished boundary stratum, which
    /// is not representable, so each factor must be all-vertex or all-cell
    /// and all factors must agree.
    pub fn product(tree: &TreeSpec, factors: &[TargetSet]) -> Result<TargetSet> {
        if factors.len() != tree.dim() {
            return invalid("one factor per axis is required");
        }
        if factors.iter().any(TargetSet::is_empty) {
            return Ok(TargetSet::default());
        }
        let all_cells = factors.iter().all(|f| f.vertices.is_empty());
        let all_vertices = factors.iter().all(|f| f.cells.is_empty());
        if !(all_cells || all_vertices) {
            return invalid(
                "product of interior and boundary factors lies on a mixed boundary stratum",
            );
        }
        let mut out = TargetSet::default();
        if all_vertices {
            let mut acc: Vec<Vec<_>> = vec![vec![]];
            for f in factors {
                acc = acc
                    .iter()
                    .flat_map(|p| {
                        f.vertices
                            .iter()
                            .map(move |v| [p.clone(), v.coords.clone()].concat())
                    })
                    .collect();
            }
            out.vertices = acc.into_iter().map(Vertex::new).collect();
        } else {
            let mut acc: Vec<Vec<u64>> = vec![vec![]];
            for f in factors {
                acc = acc
                    .iter()
                    .flat_map(|p| {
                        f.cells
                            .iter()
                            .map(move |c| [p.clone(), c.cell.clone()].concat())
                    })
                    .collect();
            }
            out.cells = acc.into_iter().map(BoundaryCell::new).collect();
        }
        out.check(tree)?;
        Ok(out)
    }

    /// Vertex-grid position of every point; cells map to their leaf vertex.
    fn positions(&self, tree: &TreeSpec) -> Vec<usize> {
        self.vertices
            .iter()
            .map(|v| tree.vertex_index(v))
            .chain(
                self.cells
                    .iter()
                    .map(|c| tree.vertex_index(&tree.cell_vertex(c))),
            )
            .collect()
    }

    fn point_vertices(&self, tree: &TreeSpec) -> Vec<Vertex> {
        self.vertices
            .iter()
            .cloned()
            .chain(self.cells.iter().map(|c| tree.cell_vertex(c)))
            .collect()
    }

    /// A measure with the given mass on each point, in `positions` order.
    fn measure(&self, tree: &TreeSpec, masses: &[f64]) -> Result<Measure> {
        let nv = self.vertices.len();
        Measure::from_atoms(
            tree,
            self.vertices
                .iter()
                .cloned()
                .zip(masses[..nv].iter().map(|m| m.max(0.0))),
            self.cells
                .iter()
                .cloned()
                .zip(masses[nv..].iter().map(|m| m.max(0.0))),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    /// Defaults to `50 * #E` when `None`.
    pub max_iters: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iters: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Certified lower bound on the capacity, equal to `mu_E(E) = E[mu_E]`.
    pub cap: f64,
    pub mu_e: Measure,
    /// Admissible capacitary function `I* mu_E / min_E V^{mu_E}`.
    pub f_e: Field,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Capacity of `E` by projected gradient ascent on the dual problem.
///
/// Steps are spectral (Barzilai-Borwein) along the projected direction, then
/// shortened by an exact line search on the quadratic dual, which also
/// guarantees monotone ascent.
pub fn solve_capacity(
    tree: &TreeSpec,
    target: &TargetSet,
    weight: &Weight,
    opts: &SolverOptions,
) -> Result<EquilibriumResult> {
    target.check(tree)?;
    if !(opts.tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let ops = Operators::new(tree, weight)?;
    let n = target.len();
    if n == 0 {
        return Ok(EquilibriumResult {
            cap: 0.0,
            mu_e: Measure::zero(tree),
            f_e: Field::on_vertices(tree, vec![0.0; tree.vertex_count()])?,
            primal_value: 0.0,
            dual_value: 0.0,
            gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let pos = target.positions(tree);
    let max_iters = opts.max_iters.unwrap_or(50 * n);
    let potential_at = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; tree.vertex_count()];
        for (&p, &m) in pos.iter().zip(x) {
            g[p] += m;
        }
        ops.potential_in_place(&mut g);
        pos.iter().map(|&p| g[p]).collect()
    };

    let dpi: Vec<f64> = target
        .point_vertices(tree)
        .iter()
        .map(|v| weight.d_pi(tree, v))
        .collect();
    let deepest = dpi.iter().copied().fold(0.0, f64::max);
    let mut mu = vec![1.0 / (deepest * n as f64); n];
    let mut v = potential_at(&mu);
    let step_floor = 1e-12 / deepest;
    let step_ceil = 1e12 / deepest;
    let mut step = 1.0 / (2.0 * deepest);

    // (mu(E), E[mu], min_E V, dual, primal, max V on the support after rescaling)
    let certificate = |mu: &[f64], v: &[f64]| {
        let a: f64 = mu.iter().sum();
        let e: f64 = mu.iter().zip(v).map(|(m, x)| m * x).sum();
        let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
        let vsupp = mu
            .iter()
            .zip(v)
            .filter(|(m, _)| **m > 0.0)
            .map(|(_, x)| *x)
            .fold(0.0, f64::max);
        let dual = if e > 0.0 { a * a / e } else { 0.0 };
        let primal = if vmin > 0.0 {
            e / (vmin * vmin)
        } else {
            f64::INFINITY
        };
        let slack = if e > 0.0 {
            vsupp * a / e
        } else {
            f64::INFINITY
        };
        (a, e, vmin, dual, primal, slack)
    };
    let done = |dual: f64, primal: f64| primal - dual <= opts.tol * dual.max(1.0);

    let mut iterations = 0;
    let mut g = vec![0.0; n];
    let mut p = vec![0.0; n];
    while iterations < max_iters {
        let (_, _, _, dual, primal, _) = certificate(&mu, &v);
        if done(dual, primal) {
            break;
        }
        iterations += 1;
        for i in 0..n {
            g[i] = 2.0 * (1.0 - v[i]);
            p[i] = (mu[i] + step * g[i]).max(0.0) - mu[i];
        }
        let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            // projected gradient vanished: stationary up to rounding
            break;
        }
        let vp = potential_at(&p);
        let curv: f64 = p.iter().zip(&vp).map(|(a, b)| a * b).sum();
        let t = if curv > 0.0 {
            (slope / (2.0 * curv)).min(1.0)
        } else {
            1.0
        };
        for i in 0..n {
            mu[i] = (mu[i] + t * p[i]).max(0.0);
            v[i] += t * vp[i];
        }
        let ss: f64 = p.iter().map(|x| x * x).sum::<f64>() * t * t;
        let sy = 2.0 * curv * t * t;
        step = if sy > 0.0 {
            (ss / sy).clamp(step_floor, step_ceil)
        } else {
            step_ceil
        };
        if iterations % 32 == 0 {
            v = potential_at(&mu);
        }
    }
    v = potential_at(&mu);
    let (mut a, mut e, mut vmin, mut dual, mut primal, slack) = certificate(&mu, &v);
    let mut converged = done(dual, primal);
    if converged && slack > 1.0 + opts.tol {
        // Atoms whose potential still exceeds 1 carry vanishing mass at the
        // optimum; drop them if the certificate survives.
        let cut = (1.0 + opts.tol) * e / a;
        let pruned: Vec<f64> = mu
            .iter()
            .zip(&v)
            .map(|(&m, &x)| if x > cut { 0.0 } else { m })
            .collect();
        let pv = potential_at(&pruned);
        let c = certificate(&pruned, &pv);
        if done(c.3, c.4) {
            mu = pruned;
            (a, e, vmin, dual, primal) = (c.0, c.1, c.2, c.3, c.4);
            converged = true;
        }
    }
    let scale = if e > 0.0 { a / e } else { 0.0 };
    let masses: Vec<f64> = mu.iter().map(|m| m * scale).collect();
    let mu_e = target.measure(tree, &masses)?;
    let mut f = mu_e.vertex_grid();
    ops.adjoint_in_place(&mut f);
    let vmin_e = vmin * scale;
    if vmin_e > 0.0 {
        f.iter_mut().for_each(|x| *x /= vmin_e);
    }
    Ok(EquilibriumResult {
        cap: dual,
        mu_e,
        f_e: Field::on_vertices(tree, f)?,
        primal_value: primal,
        dual_value: dual,
        gap: primal - dual,
        iterations,
        converged,
    })
}

/// `cap(E_1 x ... x E_d) = prod_j cap_j(E_j)` for a product weight.
///
/// Each factor is a target set of the one-dimensional tree of its axis.
pub fn product_capacity(
    tree: &TreeSpec,
    factors: &[TargetSet],
    weight: &Weight,
    opts: &SolverOptions,
) -> Result<f64> {
    if !weight.is_product() {
        return invalid("product capacity needs a product weight");
    }
    weight.check(tree)?;
    if factors.len() != tree.dim() {
        return invalid("one factor per axis is required");
    }
    let mut value = 1.0;
    for (j, f) in factors.iter().enumerate() {
        if f.is_empty() {
            return Ok(0.0);
        }
        let axis_tree = TreeSpec::new(vec![tree.depth(j)])?;
        value *= solve_capacity(&axis_tree, f, &weight.axis_weight(j)?, opts)?.cap;
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub min_potential_on_e: f64,
    pub max_potential_on_support: f64,
    pub mass: f64,
    pub energy: f64,
    pub identity_error: f64,
    pub support_violations: Vec<String>,
    pub passed: bool,
}

/// Checks the equilibrium conditions `V >= 1` on `E`, `V <= 1` on the support
/// and `mu(E) = E[mu]`, each within `tol`.
pub fn kkt_check(
    tree: &TreeSpec,
    target: &TargetSet,
    mu: &Measure,
    weight: &Weight,
    tol: f64,
) -> Result<KktReport> {
    target.check(tree)?;
    if mu.tree() != tree {
        return invalid("measure lives on a different tree");
    }
    let mut violations = Vec::new();
    for (v, _) in mu.interior() {
        if !target.vertices.contains(&v) {
            violations.push(v.to_string());
        }
    }
    for (i, &m) in mu.boundary().iter().enumerate() {
        let c = tree.cell_at(i);
        if m > 0.0 && !target.cells.contains(&c) {
            violations.push(format!("cell{:?}", c.cell));
        }
    }
    let ops = Operators::new(tree, weight)?;
    let mut v = mu.vertex_grid();
    ops.potential_in_place(&mut v);
    let pos = target.positions(tree);
    let min_e = pos.iter().map(|&p| v[p]).fold(f64::INFINITY, f64::min);
    let support = mu.interior_indexed().map(|(i, _)| i).chain(
        tree.cell_vertex_indices()
            .into_iter()
            .zip(mu.boundary())
            .filter(|(_, &m)| m > 0.0)
            .map(|(p, _)| p),
    );
    let max_supp = support.map(|p| v[p]).fold(0.0, f64::max);
    let mass = mu.total_mass();
    let energy = crate::potential::energy(mu, mu, weight)?;
    let identity_error = (mass - energy).abs();
    let min_ok = target.is_empty() || min_e >= 1.0 - tol;
    let passed = violations.is_empty() && min_ok && max_supp <= 1.0 + tol && identity_error <= tol;
    Ok(KktReport {
        min_potential_on_e: if target.is_empty() { 0.0 } else { min_e },
        max_potential_on_support: max_supp,
        mass,
        energy,
        identity_error,
        support_violations: violations,
        passed,
    })
}

/// Dense reference optimizer used to cross-check [`solve_capacity`].
///
/// Builds the kernel `d_pi(p ^ q)` by explicit predecessor enumeration and
/// runs plain projected gradient ascent with a fixed step `1 / (2 tr K)`.
/// Returns the rescaled dual value `mu(E)^2 / E[mu]` after `iters` steps.
pub fn reference_capacity(
    tree: &TreeSpec,
    target: &TargetSet,
    weight: &Weight,
    iters: usize,
) -> Result<f64> {
    target.check(tree)?;
    weight.check(tree)?;
    let pts = target.point_vertices(tree);
    let n = pts.len();
    if n == 0 {
        return Ok(0.0);
    }
    let kernel: Vec<f64> = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| a.meet(b)))
        .map(|m| predecessors(&m).map(|g| weight.pi(tree, &g)).sum())
        .collect();
    let trace: f64 = (0..n).map(|i| kernel[i * n + i]).sum();
    let step = 1.0 / (2.0 * trace);
    let mut mu = vec![0.0; n];
    let mut kmu = vec![0.0; n];
    for _ in 0..iters {
        for i in 0..n {
            mu[i] = (mu[i] + step * 2.0 * (1.0 - kmu[i])).max(0.0);
        }
        for i in 0..n {
            kmu[i] = kernel[i * n..(i + 1) * n]
                .iter()
                .zip(&mu)
                .map(|(k, m)| k * m)
                .sum();
        }
    }
    let a: f64 = mu.iter().sum();
    let e: f64 = mu.iter().zip(&kmu).map(|(m, k)| m * k).sum();
    if e > 0.0 {
        Ok(a * a / e)
    } else {
        Err(Error::Precondition(
            "reference optimizer made no progress".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::md_measure;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            tol: 1e-10,
            max_iters: Some(20_000),
        }
    }

    #[test]
    fn point_capacity_closed_form() {
        let t = TreeSpec::uniform(1, 6).unwrap();
        let r =
            solve_capacity(&t, &TargetSet::vertex(v("4:3")), &Weight::unit(1), &tight()).unwrap();
        assert!((r.cap - 0.2).abs() < 1e-12);
        assert!(r.converged);
        assert!(r.gap <= 1e-10);
    }

    #[test]
    fn full_boundary_closed_form() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let r = solve_capacity(
            &t,
            &TargetSet::full_boundary(&t),
            &Weight::unit(1),
            &tight(),
        )
        .unwrap();
        assert!((r.cap - 4.0 / 7.0).abs() < 1e-9, "{}", r.cap);
    }

    #[test]
    fn empty_target() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let r = solve_capacity(
            &t,
            &TargetSet::default(),
            &Weight::unit(2),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.cap, 0.0);
        assert!(r.mu_e.is_zero());
    }

    #[test]
    fn certificate_sandwich() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let e = TargetSet::new(
            &t,
            [v("1:0×2:3"), v("2:1×0:0")],
            [BoundaryCell::new(vec![3, 0])],
        )
        .unwrap();
        let r = solve_capacity(
            &t,
            &e,
            &Weight::polynomial(vec![0.5, 0.2]).unwrap(),
            &tight(),
        )
        .unwrap();
        assert!(r.dual_value <= r.cap + 1e-15 && r.cap <= r.primal_value);
        assert!(r.converged);
    }

    #[test]
    fn product_capacity_examples() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let t1 = TreeSpec::uniform(1, 3).unwrap();
        let full = TargetSet::full_boundary(&t1);
        let w = Weight::unit(2);
        let c = product_capacity(&t, &[full.clone(), full.clone()], &w, &tight()).unwrap();
        assert!((c - 16.0 / 49.0).abs() < 1e-9);
        assert_eq!(
            product_capacity(&t, &[full.clone(), TargetSet::default()], &w, &tight()).unwrap(),
            0.0
        );
        let a = TargetSet::vertex(v("2:1"));
        let b = TargetSet::vertex(v("1:0"));
        let c = product_capacity(&t, &[a, b], &w, &tight()).unwrap();
        assert!((c - 1.0 / 6.0).abs() < 1e-12);
        let dense = Weight::dense(&t, vec![1.0; t.vertex_count()]).unwrap();
        assert!(product_capacity(&t, &[full.clone(), full], &dense, &tight()).is_err());
    }

    #[test]
    fn kkt_examples() {
        let t = TreeSpec::uniform(1, 5).unwrap();
        let w = Weight::unit(1);
        let e = TargetSet::vertex(v("3:2"));
        let r = solve_capacity(&t, &e, &w, &tight()).unwrap();
        assert!(kkt_check(&t, &e, &r.mu_e, &w, 1e-6).unwrap().passed);
        assert!(
            !kkt_check(&t, &e, &r.mu_e.scaled(2.0).unwrap(), &w, 1e-6)
                .unwrap()
                .passed
        );

        let n = 4;
        let t = TreeSpec::uniform(1, n).unwrap();
        let mu = md_measure(&t)
            .scaled(1.0 / (2.0 * (1.0 - (-(n as f64)).exp2())))
            .unwrap();
        let report = kkt_check(&t, &TargetSet::full_boundary(&t), &mu, &w, 1e-9).unwrap();
        assert!(report.passed, "{report:?}");

        let off = Measure::from_atoms(&t, [(v("1:1"), 0.1)], []).unwrap();
        let bad = kkt_check(&t, &e, &off, &w, 1e-6).unwrap();
        assert_eq!(bad.support_violations, vec!["1:1".to_string()]);
        assert!(!bad.passed);
    }

    #[test]
    fn reference_agrees_on_small_problem() {
        let t = TreeSpec::uniform(2, 2).unwrap();
        let e = TargetSet::new(&t, [v("1:0×1:1")], [BoundaryCell::new(vec![1, 0])]).unwrap();
        let w = Weight::unit(2);
        let fast = solve_capacity(&t, &e, &w, &tight()).unwrap().cap;
        let slow = reference_capacity(&t, &e, &w, 200_000).unwrap();
        assert!((fast - slow).abs() <= 1e-8 * fast, "{fast} vs {slow}");
    }

    #[test]
    fn product_target_rejects_mixed_strata() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let a = TargetSet {
            vertices: [v("1:0")].into(),
            cells: BTreeSet::new(),
        };
        let b = TargetSet {
            vertices: BTreeSet::new(),
            cells: [BoundaryCell::new(vec![1])].into(),
        };
        assert!(TargetSet::product(&t, &[a.clone(), b]).is_err());
        assert_eq!(
            TargetSet::product(&t, &[a.clone(), a])
                .unwrap()
                .vertices
                .len(),
            1
        );
    }
}
