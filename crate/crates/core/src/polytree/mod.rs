//! Finite truncations of the d-fold product of dyadic trees.
//!
//! Every axis is a complete binary tree whose vertices are dyadic intervals.
//! Axis vertices are addressed by `(level, index)` and stored in heap order
//! (`2^level - 1 + index`), so a vertex of the product tree has a linear
//! position in row-major order with axis 0 varying slowest. That order is the
//! canonical order used by every dense field in the crate.
//!
//! The distinguished boundary is modelled by the grid of leaf cells: on axis
//! `j` with depth `n_j` the leaves live on level `n_j - 1` and each leaf owns
//! exactly one boundary cell.

pub(crate) mod rect;

pub use rect::{boundary_shadow, rect_family, FamilySpec, RectangularSet};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Default cap on the number of product-tree vertices a [`TreeSpec`] may hold.
pub const DEFAULT_VERTEX_BUDGET: u128 = 1 << 24;

/// Largest supported depth of a single axis.
pub const MAX_AXIS_DEPTH: u32 = 40;

/// A vertex of one dyadic axis: the interval `[k 2^-l, (k+1) 2^-l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisVertex {
    pub level: u32,
    pub index: u64,
}

impl AxisVertex {
    pub const ROOT: AxisVertex = AxisVertex { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level >= 63 || index >= 1u64 << level {
            return invalid(format!("axis vertex {level}:{index} out of range"));
        }
        Ok(AxisVertex { level, index })
    }

    /// Number of ancestors including itself (the root has `d_T = 1`).
    pub fn d_t(self) -> u32 {
        self.level + 1
    }

    pub fn heap(self) -> usize {
        ((1u64 << self.level) - 1 + self.index) as usize
    }

    pub fn from_heap(h: usize) -> Self {
        let h = h as u64 + 1;
        let level = 63 - h.leading_zeros();
        AxisVertex {
            level,
            index: h - (1u64 << level),
        }
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| AxisVertex {
            level: self.level - 1,
            index: self.index >> 1,
        })
    }

    pub fn children(self) -> [Self; 2] {
        let level = self.level + 1;
        [
            AxisVertex {
                level,
                index: self.index << 1,
            },
            AxisVertex {
                level,
                index: (self.index << 1) | 1,
            },
        ]
    }

    /// True iff `ancestor` lies on the path from `self` to the root.
    pub fn is_below(self, ancestor: Self) -> bool {
        ancestor.level <= self.level
            && self.index >> (self.level - ancestor.level) == ancestor.index
    }

    /// Least common ancestor, via the longest common prefix of the index bits.
    pub fn meet(self, other: Self) -> Self {
        let level = self.level.min(other.level);
        let a = self.index >> (self.level - level);
        let b = other.index >> (other.level - level);
        let shift = 64 - (a ^ b).leading_zeros();
        AxisVertex {
            level: level - shift,
            index: a >> shift,
        }
    }
}

impl fmt::Display for AxisVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.index)
    }
}

/// Shape of a truncated product tree: one depth `n_j >= 1` per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TreeSpec {
    depths: Vec<u32>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    cell_strides: Vec<usize>,
}

#[derive(Deserialize)]
struct RawTreeSpec {
    depths: Vec<u32>,
}

impl<'de> Deserialize<'de> for TreeSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTreeSpec::deserialize(de)?;
        TreeSpec::new(raw.depths).map_err(serde::de::Error::custom)
    }
}

impl TreeSpec {
    pub fn new(depths: Vec<u32>) -> Result<Self> {
        Self::with_budget(depths, DEFAULT_VERTEX_BUDGET)
    }

    /// Same dimension-`d` tree with every axis of depth `n`.
    pub fn uniform(d: usize, n: u32) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn with_budget(depths: Vec<u32>, budget: u128) -> Result<Self> {
        if depths.is_empty() {
            return invalid("tree dimension must be at least 1");
        }
        if let Some(&n) = depths.iter().find(|&&n| n == 0 || n > MAX_AXIS_DEPTH) {
            return invalid(format!("axis depth {n} outside 1..={MAX_AXIS_DEPTH}"));
        }
        let vertices = depths
            .iter()
            .fold(1u128, |acc, &n| acc.saturating_mul((1u128 << n) - 1));
        if vertices > budget {
            return Err(Error::Budget { vertices, budget });
        }
        let d = depths.len();
        let mut strides = vec![1usize; d];
        let mut cell_strides = vec![1usize; d];
        for j in (0..d - 1).rev() {
            strides[j] = strides[j + 1] * ((1usize << depths[j + 1]) - 1);
            cell_strides[j] = cell_strides[j + 1] * (1usize << (depths[j + 1] - 1));
        }
        Ok(TreeSpec {
            depths,
            strides,
            cell_strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.depths.len()
    }

    pub fn depths(&self) -> &[u32] {
        &self.depths
    }

    pub fn depth(&self, axis: usize) -> u32 {
        self.depths[axis]
    }

    /// Number of vertices on one axis, `2^n - 1`.
    pub fn axis_len(&self, axis: usize) -> usize {
        (1usize << self.depths[axis]) - 1
    }

    /// Number of leaf cells on one axis, `2^(n-1)`.
    pub fn axis_cells(&self, axis: usize) -> usize {
        1usize << (self.depths[axis] - 1)
    }

    pub fn leaf_level(&self, axis: usize) -> u32 {
        self.depths[axis] - 1
    }

    pub fn vertex_count(&self) -> usize {
        (0..self.dim()).map(|j| self.axis_len(j)).product()
    }

    pub fn cell_count(&self) -> usize {
        (0..self.dim()).map(|j| self.axis_cells(j)).product()
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn root(&self) -> Vertex {
        Vertex {
            coords: vec![AxisVertex::ROOT; self.dim()],
        }
    }

    pub fn check_vertex(&self, v: &Vertex) -> Result<()> {
        if v.coords.len() != self.dim() {
            return invalid(format!(
                "vertex {v} has dimension {}, tree has {}",
                v.coords.len(),
                self.dim()
            ));
        }
        for (j, a) in v.coords.iter().enumerate() {
            if a.level >= self.depths[j] || a.index >= 1u64 << a.level {
                return invalid(format!("vertex {v} is not in the tree (axis {j})"));
            }
        }
        Ok(())
    }

    pub fn check_cell(&self, c: &BoundaryCell) -> Result<()> {
        if c.cell.len() != self.dim() {
            return invalid(format!(
                "cell {c:?} has dimension {}, tree has {}",
                c.cell.len(),
                self.dim()
            ));
        }
        for (j, &k) in c.cell.iter().enumerate() {
            if k as usize >= self.axis_cells(j) {
                return invalid(format!("cell index {k} out of range on axis {j}"));
            }
        }
        Ok(())
    }

    /// Row-major position of a vertex in dense vertex fields.
    pub fn vertex_index(&self, v: &Vertex) -> usize {
        v.coords
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a.heap() * s)
            .sum()
    }

    pub fn vertex_at(&self, mut idx: usize) -> Vertex {
        let coords = (0..self.dim())
            .map(|j| {
                let h = idx / self.strides[j];
                idx %= self.strides[j];
                AxisVertex::from_heap(h)
            })
            .collect();
        Vertex { coords }
    }

    pub fn cell_index(&self, c: &BoundaryCell) -> usize {
        c.cell
            .iter()
            .zip(&self.cell_strides)
            .map(|(&k, s)| k as usize * s)
            .sum()
    }

    pub fn cell_at(&self, mut idx: usize) -> BoundaryCell {
        let cell = (0..self.dim())
            .map(|j| {
                let k = idx / self.cell_strides[j];
                idx %= self.cell_strides[j];
                k as u64
            })
            .collect();
        BoundaryCell { cell }
    }

    /// The all-leaf vertex sitting directly above a boundary cell.
    pub fn cell_vertex(&self, c: &BoundaryCell) -> Vertex {
        let coords = c
            .cell
            .iter()
            .enumerate()
            .map(|(j, &k)| AxisVertex {
                level: self.leaf_level(j),
                index: k,
            })
            .collect();
        Vertex { coords }
    }

    /// Dense vertex position of the leaf vertex above each cell, in cell order.
    pub fn cell_vertex_indices(&self) -> Vec<usize> {
        let mut out = vec![0usize; 1];
        for j in 0..self.dim() {
            let first_leaf = (1usize << self.leaf_level(j)) - 1;
            let mut next = Vec::with_capacity(out.len() * self.axis_cells(j));
            for &base in &out {
                for k in 0..self.axis_cells(j) {
                    next.push(base + (first_leaf + k) * self.strides[j]);
                }
            }
            out = next;
        }
        out
    }

    /// Per-axis levels of the vertex at a dense position.
    pub(crate) fn levels_at(&self, mut idx: usize, out: &mut [u32]) {
        for (j, slot) in out.iter_mut().enumerate() {
            let h = idx / self.strides[j];
            idx %= self.strides[j];
            *slot = 63 - (h as u64 + 1).leading_zeros();
        }
    }

    /// Number of leaf cells under a vertex.
    pub fn cells_below(&self, v: &Vertex) -> usize {
        v.coords
            .iter()
            .enumerate()
            .map(|(j, a)| 1usize << (self.leaf_level(j) - a.level))
            .product()
    }

    /// Cells under a vertex as per-axis half-open index ranges.
    pub fn cell_ranges(&self, v: &Vertex) -> Vec<std::ops::Range<u64>> {
        v.coords
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let shift = self.leaf_level(j) - a.level;
                (a.index << shift)..((a.index + 1) << shift)
            })
            .collect()
    }

    /// Iterate over all vertices in canonical order.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.vertex_count()).map(move |i| self.vertex_at(i))
    }

    pub fn cells(&self) -> impl Iterator<Item = BoundaryCell> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// `alpha <= beta`: `beta` is a coordinatewise ancestor-or-equal of `alpha`.
    ///
    /// This is also the kernel `G(alpha, beta)`.
    pub fn leq(&self, alpha: &Vertex, beta: &Vertex) -> Result<bool> {
        self.check_vertex(alpha)?;
        self.check_vertex(beta)?;
        Ok(alpha.leq(beta))
    }

    pub fn meet(&self, alpha: &Vertex, beta: &Vertex) -> Result<Vertex> {
        self.check_vertex(alpha)?;
        self.check_vertex(beta)?;
        Ok(alpha.meet(beta))
    }

    /// The metric `delta = sum_j delta_j` on vertices and boundary cells.
    pub fn delta(&self, a: &Point, b: &Point) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok((0..self.dim())
            .map(|j| axis_delta(self.axis_point(a, j), self.axis_point(b, j)))
            .sum())
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        match p {
            Point::Vertex(v) => self.check_vertex(v),
            Point::Cell(c) => self.check_cell(c),
        }
    }

    fn axis_point(&self, p: &Point, j: usize) -> AxisPoint {
        match p {
            Point::Vertex(v) => AxisPoint::Vertex(v.coords[j]),
            Point::Cell(c) => AxisPoint::Cell(AxisVertex {
                level: self.leaf_level(j),
                index: c.cell[j],
            }),
        }
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n: Vec<String> = self.depths.iter().map(|n| n.to_string()).collect();
        write!(f, "d={},n={}", self.dim(), n.join(","))
    }
}

/// A vertex of the product tree, identified with a dyadic rectangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub coords: Vec<AxisVertex>,
}

impl Vertex {
    pub fn new(coords: Vec<AxisVertex>) -> Self {
        Vertex { coords }
    }

    /// Build from `(level, index)` pairs, one per axis.
    pub fn from_pairs(pairs: &[(u32, u64)]) -> Result<Self> {
        pairs
            .iter()
            .map(|&(l, k)| AxisVertex::new(l, k))
            .collect::<Result<Vec<_>>>()
            .map(Vertex::new)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `d_{T^d}`: number of predecessors, `prod_j (l_j + 1)`.
    pub fn d_t(&self) -> u64 {
        self.coords.iter().map(|a| a.d_t() as u64).product()
    }

    /// Unchecked order test; both vertices must live on the same tree.
    pub fn leq(&self, other: &Vertex) -> bool {
        self.coords
            .iter()
            .zip(&other.coords)
            .all(|(a, b)| a.is_below(*b))
    }

    pub fn meet(&self, other: &Vertex) -> Vertex {
        Vertex {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a.meet(*b))
                .collect(),
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, a) in self.coords.iter().enumerate() {
            if j > 0 {
                f.write_str("×")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for Vertex {
    type Err = Error;

    /// Parses `l:k` per axis joined by `×` (ASCII `x` is accepted too).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Parse("empty vertex".into()));
        }
        let coords =
            s.split(['×', 'x', 'X'])
                .map(|part| {
                    let (l, k) = part.trim().split_once(':').ok_or_else(|| {
                        Error::Parse(format!("bad axis vertex '{part}' in '{s}'"))
                    })?;
                    let l: u32 = l
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad level in '{s}'")))?;
                    let k: u64 = k
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad index in '{s}'")))?;
                    AxisVertex::new(l, k).map_err(|e| Error::Parse(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
        Ok(Vertex { coords })
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One distinguished-boundary cell at leaf resolution: a leaf index per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryCell {
    pub cell: Vec<u64>,
}

impl BoundaryCell {
    pub fn new(cell: Vec<u64>) -> Self {
        BoundaryCell { cell }
    }
}

/// A point of the closed truncated tree: an interior vertex or a boundary cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    Vertex(Vertex),
    Cell(BoundaryCell),
}

#[derive(Clone, Copy)]
enum AxisPoint {
    Vertex(AxisVertex),
    /// Boundary point below the given leaf vertex.
    Cell(AxisVertex),
}

// Boundary points sit infinitely deep, so their 2^{-d_T} term vanishes.
fn axis_delta(a: AxisPoint, b: AxisPoint) -> f64 {
    let (va, ea) = match a {
        AxisPoint::Vertex(v) => (v, (-(v.d_t() as f64)).exp2()),
        AxisPoint::Cell(v) => (v, 0.0),
    };
    let (vb, eb) = match b {
        AxisPoint::Vertex(v) => (v, (-(v.d_t() as f64)).exp2()),
        AxisPoint::Cell(v) => (v, 0.0),
    };
    if let (AxisPoint::Cell(x), AxisPoint::Cell(y)) = (a, b) {
        if x == y {
            return 0.0;
        }
    }
    let m = (-(va.meet(vb).d_t() as f64)).exp2();
    m - 0.5 * (ea + eb)
}
