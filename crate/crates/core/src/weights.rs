//! Vertex weights `pi` and the weighted predecessor count `d_pi`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::polytree::{TreeSpec, Vertex};

/// A strictly positive weight on the vertices of the product tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Weight {
    /// Standard polynomial weight `prod_j 2^{s_j d_T(alpha_j)}`, `0 <= s_j < 1`.
    #[serde(rename = "polynomial")]
    ProductPolynomial { s: Vec<f64> },
    /// Product of per-axis tables indexed by level.
    #[serde(rename = "table")]
    ProductTable { axes: Vec<Vec<f64>> },
    /// One value per vertex in canonical order.
    #[serde(rename = "dense")]
    DenseTable { values: Vec<f64> },
}

impl Weight {
    pub fn polynomial(s: Vec<f64>) -> Result<Self> {
        let w = Weight::ProductPolynomial { s };
        w.check_values()?;
        Ok(w)
    }

    /// The unweighted case `pi = 1` in dimension `d`.
    pub fn unit(d: usize) -> Self {
        Weight::ProductPolynomial { s: vec![0.0; d] }
    }

    pub fn table(axes: Vec<Vec<f64>>) -> Result<Self> {
        let w = Weight::ProductTable { axes };
        w.check_values()?;
        Ok(w)
    }

    pub fn dense(tree: &TreeSpec, values: Vec<f64>) -> Result<Self> {
        let w = Weight::DenseTable { values };
        w.check(tree)?;
        Ok(w)
    }

    fn check_values(&self) -> Result<()> {
        match self {
            Weight::ProductPolynomial { s } => {
                if let Some(x) = s.iter().find(|x| !(0.0..1.0).contains(*x)) {
                    return invalid(format!("polynomial exponent {x} outside [0, 1)"));
                }
            }
            Weight::ProductTable { axes } => {
                if axes.iter().flatten().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return invalid("weight tables must be finite and strictly positive");
                }
            }
            Weight::DenseTable { values } => {
                if values.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return invalid("dense weights must be finite and strictly positive");
                }
            }
        }
        Ok(())
    }

    /// Validates the weight against a tree shape.
    pub fn check(&self, tree: &TreeSpec) -> Result<()> {
        self.check_values()?;
        match self {
            Weight::ProductPolynomial { s } if s.len() != tree.dim() => invalid(format!(
                "weight has {} exponents, tree has dimension {}",
                s.len(),
                tree.dim()
            )),
            Weight::ProductTable { axes } => {
                if axes.len() != tree.dim() {
                    return invalid(format!(
                        "weight has {} axis tables, tree has dimension {}",
                        axes.len(),
                        tree.dim()
                    ));
                }
                for (j, t) in axes.iter().enumerate() {
                    if t.len() < tree.depth(j) as usize {
                        return invalid(format!(
                            "axis {j} table has {} levels, tree needs {}",
                            t.len(),
                            tree.depth(j)
                        ));
                    }
                }
                Ok(())
            }
            Weight::DenseTable { values } if values.len() != tree.vertex_count() => {
                invalid(format!(
                    "dense weight has {} values, tree has {} vertices",
                    values.len(),
                    tree.vertex_count()
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn is_product(&self) -> bool {
        !matches!(self, Weight::DenseTable { .. })
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self, Weight::ProductPolynomial { .. })
    }

    /// Per-axis exponents of a polynomial weight.
    pub fn exponents(&self) -> Option<&[f64]> {
        match self {
            Weight::ProductPolynomial { s } => Some(s),
            _ => None,
        }
    }

    /// `inf pi >= 1`; some potential-theoretic facts rely on it.
    pub fn bounded_below_by_one(&self) -> bool {
        match self {
            Weight::ProductPolynomial { .. } => true,
            Weight::ProductTable { axes } => axes.iter().flatten().all(|&x| x >= 1.0),
            Weight::DenseTable { values } => values.iter().all(|&x| x >= 1.0),
        }
    }

    /// Axis factor `pi_j` at a level. Panics for dense weights.
    pub fn axis_pi(&self, axis: usize, level: u32) -> f64 {
        match self {
            Weight::ProductPolynomial { s } => (s[axis] * (level + 1) as f64).exp2(),
            Weight::ProductTable { axes } => axes[axis][level as usize],
            Weight::DenseTable { .. } => panic!("axis_pi on a non-product weight"),
        }
    }

    /// `sum_{k <= level} pi_j(k)`, the weighted ancestor count on one axis.
    pub fn axis_d_pi(&self, axis: usize, level: u32) -> f64 {
        match self {
            Weight::ProductPolynomial { s } => geometric_d_pi(s[axis], level + 1),
            Weight::ProductTable { axes } => axes[axis][..=level as usize].iter().sum(),
            Weight::DenseTable { .. } => panic!("axis_d_pi on a non-product weight"),
        }
    }

    /// One-dimensional factor of a product weight.
    pub fn axis_weight(&self, axis: usize) -> Result<Weight> {
        match self {
            Weight::ProductPolynomial { s } => Ok(Weight::ProductPolynomial { s: vec![s[axis]] }),
            Weight::ProductTable { axes } => Ok(Weight::ProductTable {
                axes: vec![axes[axis].clone()],
            }),
            Weight::DenseTable { .. } => invalid("a dense weight has no axis factors"),
        }
    }

    pub fn pi(&self, tree: &TreeSpec, v: &Vertex) -> f64 {
        match self {
            Weight::DenseTable { values } => values[tree.vertex_index(v)],
            _ => v
                .coords
                .iter()
                .enumerate()
                .map(|(j, a)| self.axis_pi(j, a.level))
                .product(),
        }
    }

    /// `d_pi(v) = sum_{gamma >= v} pi(gamma)`.
    pub fn d_pi(&self, tree: &TreeSpec, v: &Vertex) -> f64 {
        match self {
            Weight::DenseTable { .. } => predecessors(v).map(|g| self.pi(tree, &g)).sum(),
            _ => v
                .coords
                .iter()
                .enumerate()
                .map(|(j, a)| self.axis_d_pi(j, a.level))
                .product(),
        }
    }

    /// Dense table of `pi` over all vertices in canonical order.
    pub fn materialize(&self, tree: &TreeSpec) -> Vec<f64> {
        match self {
            Weight::DenseTable { values } => values.clone(),
            _ => outer_by_level(tree, |j, level| self.axis_pi(j, level)),
        }
    }

    /// Dense table of `d_pi` over all vertices in canonical order.
    pub fn materialize_d_pi(&self, tree: &TreeSpec) -> Vec<f64> {
        match self {
            Weight::DenseTable { .. } => tree.vertices().map(|v| self.d_pi(tree, &v)).collect(),
            _ => outer_by_level(tree, |j, level| self.axis_d_pi(j, level)),
        }
    }
}

/// `sum_{k=1}^{depth} 2^{s k}` without cancellation for small `s`.
fn geometric_d_pi(s: f64, depth: u32) -> f64 {
    if s == 0.0 {
        return depth as f64;
    }
    let ln2 = std::f64::consts::LN_2;
    s.exp2() * (s * depth as f64 * ln2).exp_m1() / (s * ln2).exp_m1()
}

fn outer_by_level(tree: &TreeSpec, f: impl Fn(usize, u32) -> f64) -> Vec<f64> {
    let mut out = vec![1.0];
    for j in 0..tree.dim() {
        let axis: Vec<f64> = (0..tree.axis_len(j))
            .map(|h| f(j, crate::polytree::AxisVertex::from_heap(h).level))
            .collect();
        out = out
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| a * b))
            .collect();
    }
    out
}

/// All predecessors of a vertex (coordinatewise ancestors-or-equal).
pub fn predecessors(v: &Vertex) -> impl Iterator<Item = Vertex> {
    let chains: Vec<Vec<_>> = v
        .coords
        .iter()
        .map(|a| std::iter::successors(Some(*a), |x| x.parent()).collect())
        .collect();
    let total: usize = chains.iter().map(Vec::len).product();
    (0..total).map(move |mut i| {
        let coords = chains
            .iter()
            .rev()
            .map(|c| {
                let a = c[i % c.len()];
                i /= c.len();
                a
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        Vertex { coords }
    })
}
