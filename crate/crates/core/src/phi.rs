//! Test functions `phi` on `[0, 2]^d` for single-box trace conditions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A nonnegative function of the box side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionPhi {
    /// `prod_j t_j^{a_j}`.
    ProductPower { a: Vec<f64> },
    /// `prod_j log(scale / t_j)^{-b_j}`; `scale` defaults to `2e`.
    ProductLog {
        b: Vec<f64>,
        #[serde(default = "two_e")]
        scale: f64,
    },
    /// Step function on the dyadic grid: `values[n]` is used for
    /// `t_j in (2^{-n_j-1}, 2^{-n_j}]` (and `t_j > 1` maps to `n_j = 0`),
    /// row-major over `n in [0, levels)^dim`.
    Tabulated {
        dim: usize,
        levels: u32,
        values: Vec<f64>,
    },
}

fn two_e() -> f64 {
    2.0 * std::f64::consts::E
}

impl TestFunctionPhi {
    pub fn product_power(a: Vec<f64>) -> Self {
        TestFunctionPhi::ProductPower { a }
    }

    pub fn product_log(b: Vec<f64>) -> Self {
        TestFunctionPhi::ProductLog { b, scale: two_e() }
    }

    pub fn product_log_scaled(b: Vec<f64>, scale: f64) -> Self {
        TestFunctionPhi::ProductLog { b, scale }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            TestFunctionPhi::ProductPower { a } if a.iter().any(|x| !x.is_finite()) => {
                invalid("phi exponents must be finite")
            }
            TestFunctionPhi::ProductLog { b, scale } => {
                if b.iter().any(|x| !x.is_finite()) {
                    return invalid("phi exponents must be finite");
                }
                if !(*scale > 2.0) {
                    return invalid(format!("phi log scale {scale} must exceed 2 so the logarithm is positive on [0, 2]"));
                }
                Ok(())
            }
            TestFunctionPhi::Tabulated {
                dim,
                levels,
                values,
            } => {
                if *levels == 0 || values.len() as u128 != (*levels as u128).pow(*dim as u32) {
                    return invalid("tabulated phi needs levels^dim values");
                }
                if values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return invalid("tabulated phi values must be finite and nonnegative");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            TestFunctionPhi::ProductPower { a } => Some(a.len()),
            TestFunctionPhi::ProductLog { b, .. } => Some(b.len()),
            TestFunctionPhi::Tabulated { dim, .. } => Some(*dim),
        }
    }

    pub fn is_product(&self) -> bool {
        !matches!(self, TestFunctionPhi::Tabulated { .. })
    }

    /// The one-dimensional factor of a product `phi`.
    pub fn axis_factor(&self, axis: usize, t: f64) -> f64 {
        match self {
            TestFunctionPhi::ProductPower { a } => t.max(0.0).powf(a[axis]),
            TestFunctionPhi::ProductLog { b, scale } => {
                if t <= 0.0 {
                    if b[axis] > 0.0 {
                        0.0
                    } else if b[axis] == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (scale / t).ln().powf(-b[axis])
                }
            }
            TestFunctionPhi::Tabulated { .. } => panic!("tabulated phi has no axis factors"),
        }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        match self {
            TestFunctionPhi::Tabulated { levels, values, .. } => {
                let idx = t.iter().fold(0usize, |acc, &x| {
                    let n = if x >= 1.0 {
                        0
                    } else if x <= 0.0 {
                        levels - 1
                    } else {
                        ((-x.log2()).ceil() as u32).min(levels - 1)
                    };
                    acc * *levels as usize + n as usize
                });
                values[idx]
            }
            _ => t
                .iter()
                .enumerate()
                .map(|(j, &x)| self.axis_factor(j, x))
                .product(),
        }
    }

    /// Checks "increasing in each variable" on the grid `t_j = 2^{1-k}`,
    /// `k = 0..samples`, plus `t_j = 0`.
    pub fn is_monotone(&self, samples: u32) -> bool {
        let Some(d) = self.dim() else { return false };
        let mut grid: Vec<f64> = (0..samples).map(|k| (1.0 - k as f64).exp2()).collect();
        grid.push(0.0);
        grid.reverse();
        let m = grid.len();
        let total = m.pow(d as u32);
        let mut vals = Vec::with_capacity(total);
        let mut point = vec![0.0; d];
        for i in 0..total {
            let mut r = i;
            for slot in point.iter_mut().rev() {
                *slot = grid[r % m];
                r /= m;
            }
            let v = self.eval(&point);
            if !(v >= 0.0) {
                return false;
            }
            vals.push(v);
        }
        let mut stride = 1;
        for _ in 0..d {
            for i in 0..total {
                if (i / stride) % m + 1 < m && vals[i + stride] < vals[i] {
                    return false;
                }
            }
            stride *= m;
        }
        true
    }
}
