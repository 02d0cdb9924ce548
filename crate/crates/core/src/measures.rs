//! Nonnegative measures on the truncated closed poly-tree.
//!
//! A [`Measure`] carries point masses on interior vertices and a dense table
//! of masses on the leaf-cell grid that models the distinguished boundary.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::phi::TestFunctionPhi;
use crate::polytree::{
    rect::random_vertex, AxisVertex, BoundaryCell, RectangularSet, TreeSpec, Vertex,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    tree: TreeSpec,
    interior: BTreeMap<usize, f64>,
    boundary: Vec<f64>,
    total: f64,
}

/// `M(dS(alpha_j)) = 2^{-d_T(alpha_j)+1}`: the length of a dyadic interval.
pub fn lebesgue_cell_mass(a: AxisVertex) -> f64 {
    (-(a.level as f64)).exp2()
}

/// `M_d` of a box: product of axis lengths.
pub fn lebesgue_box_mass(v: &Vertex) -> f64 {
    v.coords.iter().map(|&a| lebesgue_cell_mass(a)).product()
}

/// The product Lebesgue measure `M_d`: every leaf cell gets the same mass, total 1.
pub fn md_measure(tree: &TreeSpec) -> Measure {
    let m = 1.0 / tree.cell_count() as f64;
    Measure::boundary_only(tree, vec![m; tree.cell_count()]).expect("uniform masses are valid")
}

fn check_mass(m: f64) -> Result<()> {
    if m.is_finite() && m >= 0.0 {
        Ok(())
    } else {
        invalid(format!("mass {m} is not a finite nonnegative number"))
    }
}

impl Measure {
    pub fn zero(tree: &TreeSpec) -> Self {
        Measure {
            tree: tree.clone(),
            interior: BTreeMap::new(),
            boundary: vec![0.0; tree.cell_count()],
            total: 0.0,
        }
    }

    /// A measure from interior atoms and boundary atoms; repeated points add up.
    pub fn from_atoms(
        tree: &TreeSpec,
        interior: impl IntoIterator<Item = (Vertex, f64)>,
        boundary: impl IntoIterator<Item = (BoundaryCell, f64)>,
    ) -> Result<Self> {
        let mut out = Measure::zero(tree);
        for (v, m) in interior {
            tree.check_vertex(&v)?;
            check_mass(m)?;
            if m > 0.0 {
                *out.interior.entry(tree.vertex_index(&v)).or_insert(0.0) += m;
            }
        }
        for (c, m) in boundary {
            tree.check_cell(&c)?;
            check_mass(m)?;
            out.boundary[tree.cell_index(&c)] += m;
        }
        out.retotal();
        Ok(out)
    }

    /// A boundary-supported measure from a dense table in canonical cell order.
    pub fn boundary_only(tree: &TreeSpec, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != tree.cell_count() {
            return invalid(format!(
                "expected {} cell masses, got {}",
                tree.cell_count(),
                masses.len()
            ));
        }
        masses.iter().try_for_each(|&m| check_mass(m))?;
        let mut out = Measure {
            tree: tree.clone(),
            interior: BTreeMap::new(),
            boundary: masses,
            total: 0.0,
        };
        out.retotal();
        Ok(out)
    }

    /// Product of one-dimensional boundary measures, one table per axis.
    pub fn product(tree: &TreeSpec, axes: &[Vec<f64>]) -> Result<Self> {
        if axes.len() != tree.dim() {
            return invalid("one axis table per dimension is required");
        }
        let mut masses = vec![1.0];
        for (j, a) in axes.iter().enumerate() {
            if a.len() != tree.axis_cells(j) {
                return invalid(format!(
                    "axis {j} table has {} cells, expected {}",
                    a.len(),
                    tree.axis_cells(j)
                ));
            }
            masses = masses
                .iter()
                .flat_map(|&x| a.iter().map(move |&y| x * y))
                .collect();
        }
        Measure::boundary_only(tree, masses)
    }

    fn retotal(&mut self) {
        self.total = self.interior.values().sum::<f64>() + self.boundary.iter().sum::<f64>();
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0.0
    }

    pub fn is_boundary_supported(&self) -> bool {
        self.interior.is_empty()
    }

    /// Interior atoms as `(vertex, mass)` in canonical order.
    pub fn interior(&self) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        self.interior
            .iter()
            .map(|(&i, &m)| (self.tree.vertex_at(i), m))
    }

    pub(crate) fn interior_indexed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.interior.iter().map(|(&i, &m)| (i, m))
    }

    /// Dense boundary masses in canonical cell order.
    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn cell_mass(&self, c: &BoundaryCell) -> f64 {
        self.boundary[self.tree.cell_index(c)]
    }

    pub fn vertex_mass(&self, v: &Vertex) -> f64 {
        self.interior
            .get(&self.tree.vertex_index(v))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        check_mass(c)?;
        let mut out = self.clone();
        out.interior.values_mut().for_each(|m| *m *= c);
        out.interior.retain(|_, m| *m > 0.0);
        out.boundary.iter_mut().for_each(|m| *m *= c);
        out.retotal();
        Ok(out)
    }

    pub fn plus(&self, other: &Measure) -> Result<Self> {
        if self.tree != other.tree {
            return invalid("measures live on different trees");
        }
        let mut out = self.clone();
        for (&i, &m) in &other.interior {
            *out.interior.entry(i).or_insert(0.0) += m;
        }
        out.boundary
            .iter_mut()
            .zip(&other.boundary)
            .for_each(|(a, b)| *a += b);
        out.retotal();
        Ok(out)
    }

    /// Masses gathered on the vertex grid: interior atoms at their vertex and
    /// each boundary cell at the leaf vertex above it.
    pub(crate) fn vertex_grid(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.tree.vertex_count()];
        for (&i, &m) in &self.interior {
            g[i] += m;
        }
        for (&pos, &m) in self.tree.cell_vertex_indices().iter().zip(&self.boundary) {
            g[pos] += m;
        }
        g
    }

    /// Boundary pushdown `mu_b`: every interior atom is spread uniformly (with
    /// respect to `M_d`) over the leaf cells below it; boundary mass is kept.
    pub fn pushdown(&self) -> Measure {
        let mut boundary = self.boundary.clone();
        for (&i, &m) in &self.interior {
            let v = self.tree.vertex_at(i);
            let share = m / self.tree.cells_below(&v) as f64;
            crate::polytree::rect::for_each_cell_in(&self.tree, &self.tree.cell_ranges(&v), |c| {
                boundary[c] += share
            });
        }
        let mut out = Measure {
            tree: self.tree.clone(),
            interior: BTreeMap::new(),
            boundary,
            total: 0.0,
        };
        out.retotal();
        out
    }

    /// `mu|_E`. Interior atoms survive only when their whole shadow lies in `E`.
    pub fn restrict(&self, set: &RectangularSet) -> Measure {
        let mask = set.cell_mask(&self.tree);
        let boundary = self
            .boundary
            .iter()
            .zip(&mask)
            .map(|(&m, &k)| if k { m } else { 0.0 })
            .collect();
        let interior = self
            .interior
            .iter()
            .filter(|(&i, _)| set.contains_box(&self.tree, &self.tree.vertex_at(i)))
            .map(|(&i, &m)| (i, m))
            .collect();
        let mut out = Measure {
            tree: self.tree.clone(),
            interior,
            boundary,
            total: 0.0,
        };
        out.retotal();
        out
    }

    /// `mu(E)` for a rectangular set `E` of the boundary.
    pub fn mass_of(&self, set: &RectangularSet) -> f64 {
        self.restrict(set).total_mass()
    }

    /// Interchange form. `dense` selects the boundary encoding.
    pub fn to_json(&self, dense: bool) -> Value {
        let interior: Vec<Value> = self
            .interior()
            .map(|(v, m)| json!({"v": v.to_string(), "m": m}))
            .collect();
        let boundary = if dense {
            json!({"encoding": "dense", "masses": self.boundary})
        } else {
            let cells: Vec<Value> = self
                .boundary
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(i, &m)| json!({"c": self.tree.cell_at(i).cell, "m": m}))
                .collect();
            json!({"encoding": "sparse", "cells": cells})
        };
        json!({"interior": interior, "boundary": boundary})
    }

    /// Parses either a literal measure or a generator descriptor (`{"gen": ...}`).
    pub fn from_json(tree: &TreeSpec, value: &Value) -> Result<Self> {
        if value.get("gen").is_some() {
            let spec: MeasureGen = serde_json::from_value(value.clone())
                .map_err(|e| Error::Parse(format!("measure: {e}")))?;
            return spec.build(tree);
        }
        let lit: LiteralMeasure = serde_json::from_value(value.clone())
            .map_err(|e| Error::Parse(format!("measure: {e}")))?;
        let interior: Vec<(Vertex, f64)> = lit.interior.into_iter().map(|a| (a.v, a.m)).collect();
        let mut out = Measure::from_atoms(tree, interior, std::iter::empty())?;
        match lit.boundary {
            None => {}
            Some(LiteralBoundary::Dense { masses }) => {
                let b = Measure::boundary_only(tree, masses)?;
                out = out.plus(&b)?;
            }
            Some(LiteralBoundary::Sparse { cells }) => {
                let b = Measure::from_atoms(
                    tree,
                    std::iter::empty(),
                    cells.into_iter().map(|c| (c.c, c.m)),
                )?;
                out = out.plus(&b)?;
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiteralMeasure {
    #[serde(default)]
    interior: Vec<LiteralAtom>,
    #[serde(default)]
    boundary: Option<LiteralBoundary>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiteralAtom {
    v: Vertex,
    m: f64,
}

#[derive(Deserialize)]
#[serde(tag = "encoding", rename_all = "lowercase")]
enum LiteralBoundary {
    Dense { masses: Vec<f64> },
    Sparse { cells: Vec<LiteralCell> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiteralCell {
    c: BoundaryCell,
    m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Interior,
    #[default]
    Boundary,
}

/// Named measure generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureGen {
    /// Product Lebesgue measure.
    Md,
    /// A single boundary atom.
    AtomCell {
        cell: BoundaryCell,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Product of dyadic Cantor measures: each node sends `ratio` of its mass
    /// to its leftmost grandchild and the rest to its rightmost grandchild,
    /// for `depth` two-level steps, then spreads uniformly.
    Cantor { ratio: f64, depth: u32 },
    /// Uniform mass on the diagonal cells.
    Diagonal,
    /// `k` atoms at random positions with random masses, total mass 1.
    RandomAtoms {
        k: usize,
        seed: u64,
        #[serde(default)]
        support: Support,
    },
    /// Product measure greedily saturating `mu(Q) <= phi(M(Q_1), ..., M(Q_d))`.
    PhiSaturated { phi: TestFunctionPhi },
}

fn one() -> f64 {
    1.0
}

impl MeasureGen {
    pub fn build(&self, tree: &TreeSpec) -> Result<Measure> {
        match self {
            MeasureGen::Md => Ok(md_measure(tree)),
            MeasureGen::AtomCell { cell, mass } => {
                Measure::from_atoms(tree, [], [(cell.clone(), *mass)])
            }
            MeasureGen::Cantor { ratio, depth } => {
                if !(0.0..=1.0).contains(ratio) {
                    return invalid(format!("cantor ratio {ratio} outside [0, 1]"));
                }
                let axes: Vec<Vec<f64>> = (0..tree.dim())
                    .map(|j| cantor_axis(tree.leaf_level(j), *ratio, *depth))
                    .collect();
                Measure::product(tree, &axes)
            }
            MeasureGen::Diagonal => {
                let n = (0..tree.dim())
                    .map(|j| tree.axis_cells(j))
                    .min()
                    .unwrap_or(1);
                let cells = (0..n).map(|k| {
                    let cell = (0..tree.dim())
                        .map(|j| (k * (tree.axis_cells(j) / n)) as u64)
                        .collect();
                    (BoundaryCell::new(cell), 1.0 / n as f64)
                });
                Measure::from_atoms(tree, [], cells)
            }
            MeasureGen::RandomAtoms { k, seed, support } => random_atoms(tree, *k, *seed, *support),
            MeasureGen::PhiSaturated { phi } => phi_saturated(tree, phi),
        }
    }
}

fn cantor_axis(leaf_level: u32, ratio: f64, depth: u32) -> Vec<f64> {
    let steps = depth.min(leaf_level / 2);
    let mut masses = vec![1.0];
    for _ in 0..steps {
        let mut next = vec![0.0; masses.len() * 4];
        for (i, &m) in masses.iter().enumerate() {
            next[4 * i] = m * ratio;
            next[4 * i + 3] = m * (1.0 - ratio);
        }
        masses = next;
    }
    let spread = 1usize << (leaf_level - 2 * steps);
    masses
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m / spread as f64, spread))
        .collect()
}

pub fn random_atoms(tree: &TreeSpec, k: usize, seed: u64, support: Support) -> Result<Measure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<f64> = Vec::with_capacity(k);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for _ in 0..k {
        let m = 1.0 - rng.random::<f64>();
        raw.push(m);
        match support {
            Support::Interior => interior.push(random_vertex(tree, &mut rng)),
            Support::Boundary => boundary.push(BoundaryCell::new(
                (0..tree.dim())
                    .map(|j| rng.random_range(0..tree.axis_cells(j) as u64))
                    .collect(),
            )),
        }
    }
    let total: f64 = raw.iter().sum();
    let norm = |m: f64| if total > 0.0 { m / total } else { 0.0 };
    Measure::from_atoms(
        tree,
        interior.into_iter().zip(raw.iter().map(|&m| norm(m))),
        boundary.into_iter().zip(raw.iter().map(|&m| norm(m))),
    )
}

/// Largest-at-the-root one-dimensional measure with `mass(I) <= cap(level(I))`
/// for every dyadic interval, filling left children first.
pub(crate) fn saturate_axis(leaf_level: u32, cap: impl Fn(u32) -> f64) -> Vec<f64> {
    let n = leaf_level as usize + 1;
    let len = (1usize << n) - 1;
    let mut room = vec![0.0; len];
    for h in (0..len).rev() {
        let level = AxisVertex::from_heap(h).level;
        room[h] = if level == leaf_level {
            cap(level)
        } else {
            cap(level).min(room[2 * h + 1] + room[2 * h + 2])
        };
    }
    let mut mass = vec![0.0; len];
    mass[0] = room[0];
    for h in 0..len {
        if AxisVertex::from_heap(h).level < leaf_level {
            let left = mass[h].min(room[2 * h + 1]);
            mass[2 * h + 1] = left;
            mass[2 * h + 2] = (mass[h] - left).max(0.0);
        }
    }
    mass[len - (1usize << leaf_level)..].to_vec()
}

fn phi_saturated(tree: &TreeSpec, phi: &TestFunctionPhi) -> Result<Measure> {
    if phi.dim() != Some(tree.dim()) {
        return invalid("phi dimension does not match the tree");
    }
    let axes = (0..tree.dim())
        .map(|j| {
            if !phi.is_product() {
                return invalid("phi-saturated measures need a product test function");
            }
            Ok(saturate_axis(tree.leaf_level(j), |level| {
                phi.axis_factor(j, (-(level as f64)).exp2())
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Measure::product(tree, &axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Vertex {
        s.parse().unwrap()
    }

    #[test]
    fn lebesgue_masses() {
        assert_eq!(lebesgue_cell_mass(AxisVertex::ROOT), 1.0);
        assert_eq!(lebesgue_cell_mass(AxisVertex { level: 3, index: 5 }), 0.125);
        assert_eq!(lebesgue_box_mass(&v("1:1×2:0")), 0.125);
    }

    #[test]
    fn md_examples() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        assert_eq!(md_measure(&t).boundary(), &[0.25; 4]);
        let t2 = TreeSpec::uniform(2, 2).unwrap();
        assert_eq!(md_measure(&t2).boundary(), &[0.25; 4]);
        for depths in [vec![1], vec![3, 5], vec![2, 2, 4]] {
            let t = TreeSpec::new(depths).unwrap();
            assert!((md_measure(&t).total_mass() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pushdown_examples() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let b = md_measure(&t);
        assert_eq!(b.pushdown(), b);
        let atom = Measure::from_atoms(&t, [(v("1:0"), 1.0)], []).unwrap();
        assert_eq!(atom.pushdown().boundary(), &[0.5, 0.5, 0.0, 0.0]);
        let root = Measure::from_atoms(&t, [(t.root(), 1.0)], []).unwrap();
        assert_eq!(root.pushdown(), md_measure(&t));
    }

    #[test]
    fn restrict_examples() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        let m = md_measure(&t);
        assert_eq!(m.restrict(&RectangularSet::full(&t)), m);
        assert!(m.restrict(&RectangularSet::empty()).is_zero());
        let left = RectangularSet::new(&t, vec![v("1:0")]).unwrap();
        assert_eq!(m.restrict(&left).total_mass(), 0.5);
        let mixed = Measure::from_atoms(&t, [(v("1:0"), 1.0), (v("0:0"), 2.0)], []).unwrap();
        assert_eq!(mixed.restrict(&left).total_mass(), 1.0);
    }

    #[test]
    fn rejects_negative_mass() {
        let t = TreeSpec::uniform(1, 3).unwrap();
        assert!(Measure::from_atoms(&t, [(v("1:0"), -1.0)], []).is_err());
        assert!(Measure::boundary_only(&t, vec![0.1, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = TreeSpec::uniform(2, 3).unwrap();
        let m = Measure::from_atoms(
            &t,
            [(v("1:0×2:3"), 0.5)],
            [(BoundaryCell::new(vec![1, 2]), 0.25)],
        )
        .unwrap();
        for dense in [true, false] {
            assert_eq!(Measure::from_json(&t, &m.to_json(dense)).unwrap(), m);
        }
        let g = Measure::from_json(&t, &json!({"gen": "md"})).unwrap();
        assert_eq!(g, md_measure(&t));
        assert!(Measure::from_json(&t, &json!({"gen": "bogus"})).is_err());
        assert!(Measure::from_json(&t, &json!({"interior": 3})).is_err());
    }

    #[test]
    fn generators() {
        let t = TreeSpec::uniform(2, 5).unwrap();
        let c = MeasureGen::Cantor {
            ratio: 0.5,
            depth: 2,
        }
        .build(&t)
        .unwrap();
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(c.boundary().iter().filter(|&&m| m > 0.0).count(), 16);
        let d = MeasureGen::Diagonal.build(&t).unwrap();
        assert_eq!(d.boundary().iter().filter(|&&m| m > 0.0).count(), 16);
        let r1 = MeasureGen::RandomAtoms {
            k: 5,
            seed: 9,
            support: Support::Interior,
        }
        .build(&t)
        .unwrap();
        let r2 = MeasureGen::RandomAtoms {
            k: 5,
            seed: 9,
            support: Support::Interior,
        }
        .build(&t)
        .unwrap();
        assert_eq!(r1, r2);
        assert!(!r1.is_boundary_supported());
        assert!((r1.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturation_respects_caps() {
        let cap = |l: u32| 1.0 / (2.0 + l as f64).powi(2);
        let leaf = 5;
        let cells = saturate_axis(leaf, cap);
        // check every dyadic interval
        for level in 0..=leaf {
            let width = 1usize << (leaf - level);
            for chunk in cells.chunks(width) {
                assert!(chunk.iter().sum::<f64>() <= cap(level) * (1.0 + 1e-12));
            }
        }
        assert!(cells.iter().sum::<f64>() > 0.0);
    }
}
