//! The Hardy operator, its adjoints, potentials, energies and the
//! `mu`-maximal function.
//!
//! Sweep mode evaluates everything with axis-sequential grid passes. Kernel
//! mode evaluates `V(alpha) = sum_tau d_pi(alpha ^ tau) mu(tau)` directly and
//! serves as an independent oracle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::polytree::{AxisVertex, BoundaryCell, TreeSpec, Vertex};
use crate::sweep::{prefix_max, prefix_sum, subtree_sum};
use crate::weights::Weight;

/// A real function on vertices and/or boundary cells, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    #[serde(skip)]
    tree: TreeSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Vertices,
    Cells,
    VerticesAndCells,
}

impl Field {
    fn build(tree: &TreeSpec, vertices: Option<Vec<f64>>, cells: Option<Vec<f64>>) -> Result<Self> {
        if let Some(v) = &vertices {
            if v.len() != tree.vertex_count() {
                return invalid(format!(
                    "field has {} vertex values, tree has {}",
                    v.len(),
                    tree.vertex_count()
                ));
            }
        }
        if let Some(c) = &cells {
            if c.len() != tree.cell_count() {
                return invalid(format!(
                    "field has {} cell values, tree has {}",
                    c.len(),
                    tree.cell_count()
                ));
            }
        }
        if vertices
            .iter()
            .chain(cells.iter())
            .flatten()
            .any(|x| !x.is_finite())
        {
            return invalid("field values must be finite");
        }
        Ok(Field {
            tree: tree.clone(),
            vertices,
            cells,
        })
    }

    pub fn on_vertices(tree: &TreeSpec, values: Vec<f64>) -> Result<Self> {
        Self::build(tree, Some(values), None)
    }

    pub fn on_cells(tree: &TreeSpec, values: Vec<f64>) -> Result<Self> {
        Self::build(tree, None, Some(values))
    }

    pub fn on_both(tree: &TreeSpec, vertices: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        Self::build(tree, Some(vertices), Some(cells))
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn domain(&self) -> Domain {
        match (&self.vertices, &self.cells) {
            (Some(_), Some(_)) => Domain::VerticesAndCells,
            (None, Some(_)) => Domain::Cells,
            _ => Domain::Vertices,
        }
    }

    pub fn vertex_values(&self) -> Option<&[f64]> {
        self.vertices.as_deref()
    }

    pub fn cell_values(&self) -> Option<&[f64]> {
        self.cells.as_deref()
    }

    pub fn at_vertex(&self, v: &Vertex) -> Option<f64> {
        self.vertices.as_ref().map(|x| x[self.tree.vertex_index(v)])
    }

    pub fn at_cell(&self, c: &BoundaryCell) -> Option<f64> {
        self.cells.as_ref().map(|x| x[self.tree.cell_index(c)])
    }

    /// Rows `(label, value)` for tabular output: vertices first, then cells.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(v) = &self.vertices {
            out.extend(
                v.iter()
                    .enumerate()
                    .map(|(i, &x)| (self.tree.vertex_at(i).to_string(), x)),
            );
        }
        if let Some(c) = &self.cells {
            out.extend(c.iter().enumerate().map(|(i, &x)| {
                let cell = self
                    .tree
                    .cell_at(i)
                    .cell
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                (format!("cell[{cell}]"), x)
            }));
        }
        out
    }
}

/// Evaluation strategy for potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sweep,
    Kernel,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep" => Ok(Mode::Sweep),
            "kernel" => Ok(Mode::Kernel),
            other => Err(Error::Parse(format!(
                "unknown mode '{other}' (expected sweep or kernel)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sweep => "sweep",
            Mode::Kernel => "kernel",
        })
    }
}

/// Cached grid operators for one tree and weight.
#[derive(Debug, Clone)]
pub struct Operators {
    tree: TreeSpec,
    pi: Vec<f64>,
    leaf_pos: Vec<usize>,
}

impl Operators {
    pub fn new(tree: &TreeSpec, weight: &Weight) -> Result<Self> {
        weight.check(tree)?;
        Ok(Operators {
            tree: tree.clone(),
            pi: weight.materialize(tree),
            leaf_pos: tree.cell_vertex_indices(),
        })
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Vertex position of the leaf above each cell.
    pub fn leaf_positions(&self) -> &[usize] {
        &self.leaf_pos
    }

    /// `I* mu` from masses already gathered on the vertex grid (in place).
    pub fn adjoint_in_place(&self, grid: &mut [f64]) {
        subtree_sum(&self.tree, grid);
    }

    /// `I f` on vertices (in place).
    pub fn forward_in_place(&self, f: &mut [f64]) {
        f.iter_mut().zip(&self.pi).for_each(|(x, p)| *x *= p);
        prefix_sum(&self.tree, f);
    }

    /// `V = I(pi . I* mu)` from gathered masses (in place).
    pub fn potential_in_place(&self, grid: &mut [f64]) {
        subtree_sum(&self.tree, grid);
        self.forward_in_place(grid);
    }

    /// `<a, b>_{L^2(pi)}` on vertex grids.
    pub fn pi_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.pi)
            .map(|((x, y), p)| x * y * p)
            .sum()
    }

    /// Reads a vertex field at the cells.
    pub fn at_cells(&self, grid: &[f64]) -> Vec<f64> {
        self.leaf_pos.iter().map(|&p| grid[p]).collect()
    }

    /// Scatters cell values onto the leaf vertices of a fresh grid.
    pub fn scatter_cells(&self, cells: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.tree.vertex_count()];
        for (&p, &x) in self.leaf_pos.iter().zip(cells) {
            g[p] += x;
        }
        g
    }
}

fn same_tree(a: &TreeSpec, b: &TreeSpec) -> Result<()> {
    if a != b {
        return invalid(format!("objects live on different trees ({a} vs {b})"));
    }
    Ok(())
}

fn require_boundary(mu: &Measure) -> Result<()> {
    if !mu.is_boundary_supported() {
        return Err(Error::Precondition(
            "measure must be boundary-supported (push it down first)".into(),
        ));
    }
    Ok(())
}

/// `(I f)(alpha) = sum_{gamma >= alpha} f(gamma) pi(gamma)` at vertices and cells.
pub fn apply_i(f: &Field, weight: &Weight) -> Result<Field> {
    let Some(values) = f.vertex_values() else {
        return invalid("the Hardy operator acts on vertex fields");
    };
    if f.domain() != Domain::Vertices {
        return invalid("the Hardy operator expects a vertex-only field");
    }
    let ops = Operators::new(&f.tree, weight)?;
    let mut g = values.to_vec();
    ops.forward_in_place(&mut g);
    let cells = ops.at_cells(&g);
    Field::on_both(&f.tree, g, cells)
}

/// `(I* mu)(beta) = mu(S(beta))`.
pub fn apply_i_star(mu: &Measure) -> Field {
    let mut g = mu.vertex_grid();
    subtree_sum(mu.tree(), &mut g);
    Field {
        tree: mu.tree().clone(),
        vertices: Some(g),
        cells: None,
    }
}

/// The potential `V^mu_pi` at every vertex and cell.
pub fn potential(mu: &Measure, weight: &Weight, mode: Mode) -> Result<Field> {
    let tree = mu.tree();
    weight.check(tree)?;
    let values = match mode {
        Mode::Sweep => {
            let ops = Operators::new(tree, weight)?;
            let mut g = mu.vertex_grid();
            ops.potential_in_place(&mut g);
            g
        }
        Mode::Kernel => kernel_potential(mu, weight),
    };
    let cells = tree
        .cell_vertex_indices()
        .iter()
        .map(|&p| values[p])
        .collect();
    Field::on_both(tree, values, cells)
}

/// Support of a measure as `(vertex, mass)`, with cells replaced by their leaf vertex.
fn support_points(mu: &Measure) -> Vec<(Vertex, f64)> {
    let tree = mu.tree();
    let mut pts: Vec<(Vertex, f64)> = mu.interior().collect();
    for (i, &m) in mu.boundary().iter().enumerate() {
        if m > 0.0 {
            pts.push((tree.cell_vertex(&tree.cell_at(i)), m));
        }
    }
    pts
}

fn kernel_potential(mu: &Measure, weight: &Weight) -> Vec<f64> {
    let tree = mu.tree();
    let support = support_points(mu);
    let eval: Vec<Vertex> = tree.vertices().collect();
    match weight {
        Weight::DenseTable { .. } => {
            let dpi = weight.materialize_d_pi(tree);
            eval.iter()
                .map(|a| {
                    support
                        .iter()
                        .map(|(t, m)| m * dpi[tree.vertex_index(&a.meet(t))])
                        .sum()
                })
                .collect()
        }
        _ => {
            let tables: Vec<Vec<f64>> = (0..tree.dim())
                .map(|j| (0..tree.depth(j)).map(|l| weight.axis_d_pi(j, l)).collect())
                .collect();
            eval.iter()
                .map(|a| {
                    support
                        .iter()
                        .map(|(t, m)| {
                            let k: f64 = a
                                .coords
                                .iter()
                                .zip(&t.coords)
                                .enumerate()
                                .map(|(j, (x, y))| {
                                    tables[j][AxisVertex::meet(*x, *y).level as usize]
                                })
                                .product();
                            m * k
                        })
                        .sum()
                })
                .collect()
        }
    }
}

/// Mutual energy `E_pi[mu, nu] = <I* mu, I* nu>_{L^2(pi)}`.
pub fn energy(mu: &Measure, nu: &Measure, weight: &Weight) -> Result<f64> {
    same_tree(mu.tree(), nu.tree())?;
    let ops = Operators::new(mu.tree(), weight)?;
    let a = apply_i_star(mu);
    let b = apply_i_star(nu);
    Ok(ops.pi_dot(
        a.vertices.as_deref().unwrap(),
        b.vertices.as_deref().unwrap(),
    ))
}

/// `int V^nu dmu`, the other side of the energy identity.
pub fn integrate(field: &Field, mu: &Measure) -> Result<f64> {
    same_tree(field.tree(), mu.tree())?;
    let (Some(v), Some(c)) = (field.vertex_values(), field.cell_values()) else {
        return invalid("integration needs a field on vertices and cells");
    };
    let interior: f64 = mu.interior_indexed().map(|(i, m)| v[i] * m).sum();
    let boundary: f64 = c.iter().zip(mu.boundary()).map(|(x, m)| x * m).sum();
    Ok(interior + boundary)
}

/// `(I*_mu g)(alpha) = int_{S(alpha)} g dmu` for a boundary-supported `mu`.
pub fn apply_i_star_mu(g: &Field, mu: &Measure) -> Result<Field> {
    same_tree(g.tree(), mu.tree())?;
    require_boundary(mu)?;
    let Some(gc) = g.cell_values() else {
        return invalid("I*_mu acts on cell fields");
    };
    let tree = mu.tree();
    let mut grid = vec![0.0; tree.vertex_count()];
    for ((&p, &x), &m) in tree.cell_vertex_indices().iter().zip(gc).zip(mu.boundary()) {
        grid[p] += x * m;
    }
    subtree_sum(tree, &mut grid);
    Field::on_vertices(tree, grid)
}

/// `(M_mu g)(omega) = sup_{alpha >= omega} mu(Q_alpha)^{-1} int_{Q_alpha} g dmu`.
///
/// Boxes with `mu(Q_alpha) = 0` are skipped; a cell with no charged box above
/// it gets 0.
pub fn maximal_function(g: &Field, mu: &Measure) -> Result<Field> {
    same_tree(g.tree(), mu.tree())?;
    require_boundary(mu)?;
    let Some(gc) = g.cell_values() else {
        return invalid("the maximal function acts on cell fields");
    };
    if gc.iter().any(|&x| x < 0.0) {
        return Err(Error::Precondition("maximal function needs g >= 0".into()));
    }
    let tree = mu.tree();
    let ops = MaximalOperator::new(mu);
    Field::on_cells(tree, ops.apply(gc))
}

/// Reusable evaluation of `M_mu` for a fixed measure.
pub(crate) struct MaximalOperator {
    tree: TreeSpec,
    leaf_pos: Vec<usize>,
    box_mass: Vec<f64>,
    cell_mass: Vec<f64>,
}

impl MaximalOperator {
    pub(crate) fn new(mu: &Measure) -> Self {
        let tree = mu.tree().clone();
        let mut box_mass = mu.vertex_grid();
        subtree_sum(&tree, &mut box_mass);
        MaximalOperator {
            leaf_pos: tree.cell_vertex_indices(),
            tree,
            box_mass,
            cell_mass: mu.boundary().to_vec(),
        }
    }

    pub(crate) fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut grid = vec![0.0; self.tree.vertex_count()];
        for ((&p, &x), &m) in self.leaf_pos.iter().zip(g).zip(&self.cell_mass) {
            grid[p] += x * m;
        }
        subtree_sum(&self.tree, &mut grid);
        for (a, &b) in grid.iter_mut().zip(&self.box_mass) {
            *a = if b > 0.0 { *a / b } else { f64::NEG_INFINITY };
        }
        prefix_max(&self.tree, &mut grid);
        self.leaf_pos
            .iter()
            .map(|&p| if grid[p].is_finite() { grid[p] } else { 0.0 })
            .collect()
    }

    /// `||M g||^2_{L^2(mu)} / ||g||^2_{L^2(mu)}`, or `None` when `g = 0` mu-a.e.
    pub(crate) fn ratio(&self, g: &[f64]) -> Option<f64> {
        let den: f64 = g.iter().zip(&self.cell_mass).map(|(x, m)| x * x * m).sum();
        if !(den > 0.0) {
            return None;
        }
        let mg = self.apply(g);
        let num: f64 = mg.iter().zip(&self.cell_mass).map(|(x, m)| x * x * m).sum();
        Some(num / den)
    }

    pub(crate) fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::md_measure;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn hardy_operator_examples() {
        let t = TreeSpec::new(vec![3, 2]).unwrap();
        let w = Weight::unit(2);
        let mut unit_root = vec![0.0; t.vertex_count()];
        unit_root[0] = 1.0;
        let f = apply_i(&Field::on_vertices(&t, unit_root).unwrap(), &w).unwrap();
        assert!(f.vertex_values().unwrap().iter().all(|&x| x == 1.0));
        assert!(f.cell_values().unwrap().iter().all(|&x| x == 1.0));

        let ones = apply_i(
            &Field::on_vertices(&t, vec![1.0; t.vertex_count()]).unwrap(),
            &w,
        )
        .unwrap();
        for a in t.vertices() {
            assert_eq!(ones.at_vertex(&a).unwrap(), a.d_t() as f64);
        }

        let t1 = TreeSpec::uniform(1, 5).unwrap();
        let w1 = Weight::polynomial(vec![0.5]).unwrap();
        let ones = apply_i(
            &Field::on_vertices(&t1, vec![1.0; t1.vertex_count()]).unwrap(),
            &w1,
        )
        .unwrap();
        for a in t1.vertices() {
            assert!(close(ones.at_vertex(&a).unwrap(), w1.d_pi(&t1, &a)));
        }
        assert!(apply_i(&Field::on_cells(&t1, vec![0.0; 16]).unwrap(), &w1).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let t = TreeSpec::uniform(1, 4).unwrap();
        let cell = BoundaryCell::new(vec![5]);
        let mu = Measure::from_atoms(&t, [], [(cell.clone(), 1.0)]).unwrap();
        let leaf = t.cell_vertex(&cell);
        let f = apply_i_star(&mu);
        for a in t.vertices() {
            assert_eq!(
                f.at_vertex(&a).unwrap(),
                if leaf.leq(&a) { 1.0 } else { 0.0 }
            );
        }
        let m = apply_i_star(&md_measure(&t));
        for a in t.vertices() {
            assert_eq!(
                m.at_vertex(&a).unwrap(),
                (-(a.coords[0].level as f64)).exp2()
            );
        }
        let beta = v("2:1");
        let atom = apply_i_star(&Measure::from_atoms(&t, [(beta.clone(), 1.0)], []).unwrap());
        for a in t.vertices() {
            assert_eq!(
                atom.at_vertex(&a).unwrap(),
                if beta.leq(&a) { 1.0 } else { 0.0 }
            );
        }
    }

    #[test]
    fn potential_examples() {
        let t = TreeSpec::uniform(1, 4).unwrap();
        let w = Weight::unit(1);
        let mu = Measure::from_atoms(&t, [], [(BoundaryCell::new(vec![2]), 1.0)]).unwrap();
        for mode in [Mode::Sweep, Mode::Kernel] {
            let p = potential(&mu, &w, mode).unwrap();
            assert_eq!(p.at_cell(&BoundaryCell::new(vec![2])).unwrap(), 4.0);
            assert_eq!(p.at_cell(&BoundaryCell::new(vec![3])).unwrap(), 3.0);
        }
        let t3 = TreeSpec::uniform(1, 3).unwrap();
        let p = potential(&md_measure(&t3), &w, Mode::Sweep).unwrap();
        assert!(p.cell_values().unwrap().iter().all(|&x| close(x, 1.75)));
    }

    #[test]
    fn product_measures_have_product_potentials() {
        let t = TreeSpec::new(vec![3, 4]).unwrap();
        let w = Weight::polynomial(vec![0.3, 0.6]).unwrap();
        let a = vec![0.1, 0.0, 0.5, 0.2];
        let b = vec![0.3, 0.1, 0.0, 0.0, 0.2, 0.05, 0.0, 0.4];
        let mu = Measure::product(&t, &[a.clone(), b.clone()]).unwrap();
        let p = potential(&mu, &w, Mode::Sweep).unwrap();
        let t1 = TreeSpec::uniform(1, 3).unwrap();
        let t2 = TreeSpec::uniform(1, 4).unwrap();
        let p1 = potential(
            &Measure::boundary_only(&t1, a).unwrap(),
            &w.axis_weight(0).unwrap(),
            Mode::Sweep,
        )
        .unwrap();
        let p2 = potential(
            &Measure::boundary_only(&t2, b).unwrap(),
            &w.axis_weight(1).unwrap(),
            Mode::Sweep,
        )
        .unwrap();
        for x in t.vertices() {
            let x1 = Vertex::new(vec![x.coords[0]]);
            let x2 = Vertex::new(vec![x.coords[1]]);
            assert!(close(
                p.at_vertex(&x).unwrap(),
                p1.at_vertex(&x1).unwrap() * p2.at_vertex(&x2).unwrap()
            ));
        }
    }

    #[test]
    fn energy_examples() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let w = Weight::unit(1);
        let m = md_measure(&t);
        assert!(close(energy(&m, &m, &w).unwrap(), 1.75));
        for n in 1..7 {
            let t = TreeSpec::uniform(1, n).unwrap();
            let atom = Measure::from_atoms(&t, [], [(BoundaryCell::new(vec![0]), 1.0)]).unwrap();
            assert_eq!(energy(&atom, &atom, &w).unwrap(), n as f64);
        }
    }

    #[test]
    fn i_star_mu_examples() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let mu = md_measure(&t);
        let ones = Field::on_cells(&t, vec![1.0; t.cell_count()]).unwrap();
        assert_eq!(apply_i_star_mu(&ones, &mu).unwrap(), apply_i_star(&mu));

        let cell = BoundaryCell::new(vec![1, 3]);
        let mut ind = vec![0.0; t.cell_count()];
        ind[t.cell_index(&cell)] = 1.0;
        let r = apply_i_star_mu(&Field::on_cells(&t, ind).unwrap(), &mu).unwrap();
        let leaf = t.cell_vertex(&cell);
        for a in t.vertices() {
            let expected = if leaf.leq(&a) {
                mu.cell_mass(&cell)
            } else {
                0.0
            };
            assert_eq!(r.at_vertex(&a).unwrap(), expected);
        }

        let signs: Vec<f64> = (0..t.cell_count())
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let expected: f64 = signs.iter().sum::<f64>() / t.cell_count() as f64;
        let r = apply_i_star_mu(&Field::on_cells(&t, signs).unwrap(), &mu).unwrap();
        assert!(close(r.at_vertex(&t.root()).unwrap(), expected));

        let interior = Measure::from_atoms(&t, [(t.root(), 1.0)], []).unwrap();
        assert!(matches!(
            apply_i_star_mu(&ones, &interior),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn maximal_examples() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let mu = md_measure(&t);
        let c = maximal_function(&Field::on_cells(&t, vec![2.5; 4]).unwrap(), &mu).unwrap();
        assert!(c.cell_values().unwrap().iter().all(|&x| close(x, 2.5)));
        let left =
            maximal_function(&Field::on_cells(&t, vec![1.0, 1.0, 0.0, 0.0]).unwrap(), &mu).unwrap();
        assert_eq!(left.cell_values().unwrap(), &[1.0, 1.0, 0.5, 0.5]);

        let zero = Measure::zero(&t);
        let z = maximal_function(&Field::on_cells(&t, vec![1.0; 4]).unwrap(), &zero).unwrap();
        assert!(z.cell_values().unwrap().iter().all(|&x| x == 0.0));

        // only the root box is charged for cells 2 and 3's sibling half
        let one = Measure::from_atoms(&t, [], [(BoundaryCell::new(vec![0]), 1.0)]).unwrap();
        let g = Field::on_cells(&t, vec![3.0, 0.0, 7.0, 7.0]).unwrap();
        let r = maximal_function(&g, &one).unwrap();
        assert_eq!(r.cell_values().unwrap(), &[3.0, 3.0, 3.0, 3.0]);
        assert!(maximal_function(&Field::on_cells(&t, vec![-1.0; 4]).unwrap(), &mu).is_err());
    }
}
