use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::potential::{Field, Operators};
use crate::weights::Weight;

const MAX_ITERS: usize = 100_000;

/// Best constant of the Hardy inequality for one trace measure.
#[derive(Debug, Clone, PartialEq)]
pub struct HardyNorm {
    pub c: f64,
    /// Approximate maximizer, normalized in `L^2(pi)`.
    pub extremal_f: Field,
    pub iterations: usize,
    pub converged: bool,
}

/// `C_mu`, the top eigenvalue of `f -> I*_mu (I f)`, which is self-adjoint
/// and positive in `L^2(pi)`.
///
/// Power iteration from `f = 1`; the kernel is positive, so the start vector
/// has a nonzero component along the positive top eigenvector. Stops once the
/// Rayleigh quotient changes by at most `tol` relatively.
pub fn hardy_norm(mu: &Measure, weight: &Weight, tol: f64) -> Result<HardyNorm> {
    if !mu.is_boundary_supported() {
        return Err(Error::Precondition(
            "trace measures must be boundary-supported".into(),
        ));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let tree = mu.tree();
    let ops = Operators::new(tree, weight)?;
    let nv = tree.vertex_count();
    if mu.is_zero() {
        return Ok(HardyNorm {
            c: 0.0,
            extremal_f: Field::on_vertices(tree, vec![0.0; nv])?,
            iterations: 0,
            converged: true,
        });
    }
    let cell_mass = mu.boundary();
    let apply = |f: &[f64]| -> Vec<f64> {
        let mut g = f.to_vec();
        ops.forward_in_place(&mut g);
        let weighted: Vec<f64> = ops
            .at_cells(&g)
            .iter()
            .zip(cell_mass)
            .map(|(x, m)| x * m)
            .collect();
        let mut out = ops.scatter_cells(&weighted);
        ops.adjoint_in_place(&mut out);
        out
    };
    let norm = |f: &[f64]| ops.pi_dot(f, f).sqrt();

    let mut f = vec![1.0; nv];
    let n0 = norm(&f);
    f.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let af = apply(&f);
        let next = ops.pi_dot(&f, &af);
        let na = norm(&af);
        let done = (next - lambda).abs() <= tol * next;
        lambda = next;
        f = af;
        f.iter_mut().for_each(|x| *x /= na);
        if done {
            converged = true;
            break;
        }
    }
    Ok(HardyNorm {
        c: lambda,
        extremal_f: Field::on_vertices(tree, f)?,
        iterations,
        converged,
    })
}
