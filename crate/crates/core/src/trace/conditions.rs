use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{solve_capacity, SolverOptions, TargetSet};
use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::phi::TestFunctionPhi;
use crate::polytree::RectangularSet;
use crate::potential::{energy, Operators};
use crate::weights::Weight;

use super::{hardy_norm, maximal_constant_estimate};

/// Knobs for the expensive parts of a [`ConditionReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    pub hardy_tol: f64,
    pub cap: SolverOptions,
    pub maximal_budget: usize,
    pub seed: u64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            hardy_tol: 1e-9,
            cap: SolverOptions::default(),
            maximal_budget: 200,
            seed: 0,
        }
    }
}

/// Per-set values of the charge-energy functionals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetRow {
    pub index: usize,
    pub set: RectangularSet,
    pub mass: f64,
    /// `E[mu|_E] = sum_Q mu(Q ∩ E)^2 pi(Q)` over all boxes.
    pub global_energy: f64,
    /// `sum_{Q ⊆ E} mu(Q)^2 pi(Q)`.
    pub local_energy: f64,
    pub capacity: f64,
    pub capacity_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub hardy_norm: f64,
    pub global_ratio: f64,
    pub local_ratio: f64,
    pub subcap_ratio: f64,
    pub maximal_lower_bound: f64,
    pub family: String,
    pub rows: Vec<SetRow>,
    /// Indices of sets with `mu(E) = 0`, left out of the ratios.
    pub skipped: Vec<usize>,
    /// Set when some weight value is below 1; the necessity chain is not
    /// guaranteed in that case.
    pub sub_unit_weight: bool,
}

/// Evaluates the global and local charge-energy conditions and the
/// subcapacitary ratio of `mu` over a family of rectangular sets, together
/// with the Hardy constant and a maximal-function lower bound.
pub fn charge_energy_report(
    mu: &Measure,
    family: &[RectangularSet],
    weight: &Weight,
    opts: &ConditionOptions,
) -> Result<ConditionReport> {
    if !mu.is_boundary_supported() {
        return Err(Error::Precondition(
            "trace measures must be boundary-supported".into(),
        ));
    }
    if family.is_empty() {
        return invalid("the family of sets is empty");
    }
    let tree = mu.tree();
    family.iter().try_for_each(|e| e.check(tree))?;
    let ops = Operators::new(tree, weight)?;

    let mut box_mass = mu.vertex_grid();
    ops.adjoint_in_place(&mut box_mass);
    let mut box_cells = ops.scatter_cells(&vec![1.0; tree.cell_count()]);
    ops.adjoint_in_place(&mut box_cells);

    let rows: Vec<Result<Option<SetRow>>> = family
        .par_iter()
        .enumerate()
        .map(|(index, set)| {
            let restricted = mu.restrict(set);
            let mass = restricted.total_mass();
            if !(mass > 0.0) {
                return Ok(None);
            }
            let global_energy = energy(&restricted, &restricted, weight)?;
            let mask: Vec<f64> = set
                .cell_mask(tree)
                .iter()
                .map(|&k| if k { 1.0 } else { 0.0 })
                .collect();
            let mut inside = ops.scatter_cells(&mask);
            ops.adjoint_in_place(&mut inside);
            // Q ⊆ E exactly when every cell below Q is in E; counts are exact integers
            let local_energy = (0..tree.vertex_count())
                .filter(|&i| inside[i] == box_cells[i])
                .map(|i| box_mass[i] * box_mass[i] * ops.pi()[i])
                .sum();
            let cap = solve_capacity(tree, &TargetSet::from_rect(tree, set), weight, &opts.cap)?;
            Ok(Some(SetRow {
                index,
                set: set.clone(),
                mass,
                global_energy,
                local_energy,
                capacity: cap.cap,
                capacity_converged: cap.converged,
            }))
        })
        .collect();
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        match r? {
            Some(row) => kept.push(row),
            None => skipped.push(i),
        }
    }
    let sup = |f: &dyn Fn(&SetRow) -> f64| kept.iter().map(f).fold(0.0, f64::max);
    let global_ratio = sup(&|r| r.global_energy / r.mass);
    let local_ratio = sup(&|r| r.local_energy / r.mass);
    let subcap_ratio = sup(&|r| {
        if r.capacity > 0.0 {
            r.mass / r.capacity
        } else {
            f64::INFINITY
        }
    });
    let hardy = hardy_norm(mu, weight, opts.hardy_tol)?.c;
    let maximal_lower_bound = if mu.is_zero() {
        0.0
    } else {
        maximal_constant_estimate(mu, opts.maximal_budget, opts.seed)?.lower_bound
    };
    Ok(ConditionReport {
        hardy_norm: hardy,
        global_ratio,
        local_ratio,
        subcap_ratio,
        maximal_lower_bound,
        family: format!("{} rectangular sets", family.len()),
        rows: kept,
        skipped,
        sub_unit_weight: !weight.bounded_below_by_one(),
    })
}

/// Outcome of the single-box sufficient condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleBoxReport {
    pub eligible: bool,
    pub monotone: bool,
    pub convergent: bool,
    /// `sum_n phi(2^{-n}) pi(n)` over the level cube `[0, N)^d`.
    pub integral_proxy: f64,
    /// Tail ratio of the last two octaves of the series.
    pub tail_ratio: f64,
    pub box_check: bool,
    /// `max_alpha mu(Q_alpha) / phi(M(Q_alpha))`.
    pub worst_box_ratio: f64,
    pub potential_sup: f64,
}

const PROXY_MIN_LEVELS: u32 = 64;
const DIVERGENCE_RATIO: f64 = 0.99;

/// Single-box sufficient test for a polynomial weight.
///
/// The series runs over levels `n_j < N` with `N = max(64, depth)`, with
/// the weight of the level-`n` box being `2^{sum_j s_j (n_j + 1)}`. With
/// `box_check` true, every cell potential is bounded by the proxy.
/// Divergence is a heuristic: the series is flagged when the octave
/// `max_j n_j in [N/2, N)` carries at least 0.99 times the mass of the
/// octave `[N/4, N/2)`.
pub fn single_box_test(
    mu: &Measure,
    phi: &TestFunctionPhi,
    weight: &Weight,
) -> Result<SingleBoxReport> {
    let Some(s) = weight.exponents() else {
        return invalid("the single-box test needs a polynomial weight");
    };
    phi.check()?;
    let tree = mu.tree();
    weight.check(tree)?;
    if phi.dim() != Some(tree.dim()) {
        return invalid("phi dimension does not match the tree");
    }
    let levels = tree
        .depths()
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(PROXY_MIN_LEVELS);
    let (integral_proxy, tail_ratio) = series(phi, s, levels);
    let monotone = phi.is_monotone(levels);
    let convergent = integral_proxy.is_finite() && tail_ratio < DIVERGENCE_RATIO;

    let ops = Operators::new(tree, weight)?;
    let mut grid = mu.vertex_grid();
    ops.adjoint_in_place(&mut grid);
    let mut worst: f64 = 0.0;
    let mut box_check = true;
    let mut lv = vec![0; tree.dim()];
    for (i, &m) in grid.iter().enumerate() {
        tree.levels_at(i, &mut lv);
        let t: Vec<f64> = lv.iter().map(|&l| (-(l as f64)).exp2()).collect();
        let bound = phi.eval(&t);
        if m > bound * (1.0 + 1e-12) {
            box_check = false;
        }
        if m > 0.0 {
            worst = worst.max(if bound > 0.0 {
                m / bound
            } else {
                f64::INFINITY
            });
        }
    }
    ops.forward_in_place(&mut grid);
    let potential_sup = ops.at_cells(&grid).into_iter().fold(0.0, f64::max);
    Ok(SingleBoxReport {
        eligible: monotone && convergent,
        monotone,
        convergent,
        integral_proxy,
        tail_ratio,
        box_check,
        worst_box_ratio: worst,
        potential_sup,
    })
}

/// The proxy series and its tail ratio, using the per-axis factorization
/// when `phi` is a product.
fn series(phi: &TestFunctionPhi, s: &[f64], levels: u32) -> (f64, f64) {
    let d = s.len();
    let q = levels as usize;
    let (a, b) = (q / 4, q / 2);
    let term = |j: usize, n: usize| -> f64 {
        phi.axis_factor(j, (-(n as f64)).exp2()) * (s[j] * (n + 1) as f64).exp2()
    };
    if phi.is_product() {
        // S(m) = sum over n with max_j n_j < m = prod_j prefix_j(m)
        let prefix: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let mut acc = vec![0.0; q + 1];
                for n in 0..q {
                    acc[n + 1] = acc[n] + term(j, n);
                }
                acc
            })
            .collect();
        let upto = |m: usize| prefix.iter().map(|p| p[m]).product::<f64>();
        let total = upto(q);
        return (total, octave_ratio(upto(a), upto(b), total));
    }
    let mut total = 0.0;
    let mut below_a = 0.0;
    let mut below_b = 0.0;
    let mut n = vec![0usize; d];
    loop {
        let t: Vec<f64> = n.iter().map(|&x| (-(x as f64)).exp2()).collect();
        let w: f64 = n
            .iter()
            .zip(s)
            .map(|(&x, sj)| (sj * (x + 1) as f64).exp2())
            .product();
        let v = phi.eval(&t) * w;
        let top = n.iter().copied().max().unwrap_or(0);
        total += v;
        if top < a {
            below_a += v;
        }
        if top < b {
            below_b += v;
        }
        let mut j = d;
        loop {
            if j == 0 {
                return (total, octave_ratio(below_a, below_b, total));
            }
            j -= 1;
            n[j] += 1;
            if n[j] < q {
                break;
            }
            n[j] = 0;
        }
    }
}

fn octave_ratio(below_a: f64, below_b: f64, total: f64) -> f64 {
    let first = below_b - below_a;
    let last = total - below_b;
    if first > 0.0 {
        last / first
    } else if last > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}
