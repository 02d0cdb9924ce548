use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::polytree::rect::random_vertex;
use crate::potential::{Field, MaximalOperator};

/// A certified lower bound for the dyadic maximal constant of `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalEstimate {
    pub lower_bound: f64,
    /// The cell function attaining `lower_bound`.
    pub witness_g: Field,
    pub evaluations: usize,
}

/// Searches for `g >= 0` with a large ratio
/// `||M_mu g||^2_{L^2(mu)} / ||g||^2_{L^2(mu)}`.
///
/// Half of `budget` goes to random candidates (box indicators, two-level
/// profiles, atoms, power profiles around a cell, noise), the rest to greedy
/// coordinate moves `g(w) -> 2 g(w), g(w) / 2, 0` from the best candidate.
pub fn maximal_constant_estimate(
    mu: &Measure,
    budget: usize,
    seed: u64,
) -> Result<MaximalEstimate> {
    if !mu.is_boundary_supported() {
        return Err(Error::Precondition(
            "trace measures must be boundary-supported".into(),
        ));
    }
    if mu.is_zero() {
        return invalid("the maximal constant of the zero measure is undefined");
    }
    let tree = mu.tree();
    let op = MaximalOperator::new(mu);
    let cells = tree.cell_count();
    let support: Vec<usize> = (0..cells).filter(|&i| op.cell_mass()[i] > 0.0).collect();

    let mut best_g = vec![1.0; cells];
    let mut best = op.ratio(&best_g).unwrap_or(1.0);
    let mut evaluations = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_budget = budget.div_ceil(2);

    let mut box_mass = mu.vertex_grid();
    crate::sweep::subtree_sum(tree, &mut box_mass);

    while evaluations < random_budget.max(1) && budget > 0 {
        let g = match rng.random_range(0..5) {
            0 => {
                let mut g = vec![0.0; cells];
                for _ in 0..rng.random_range(1..=3) {
                    let b = random_vertex(tree, &mut rng);
                    crate::polytree::rect::for_each_cell_in(tree, &tree.cell_ranges(&b), |i| {
                        g[i] = 1.0
                    });
                }
                g
            }
            1 => {
                let b = random_vertex(tree, &mut rng);
                let axis = rng.random_range(0..tree.dim());
                let mut ranges = tree.cell_ranges(&b);
                let r = ranges[axis].clone();
                let mid = r.start + (r.end - r.start) / 2;
                let (hi, lo) = (1.0, rng.random::<f64>());
                let mut g = vec![0.0; cells];
                ranges[axis] = r.start..mid.max(r.start + 1);
                crate::polytree::rect::for_each_cell_in(tree, &ranges, |i| g[i] = hi);
                if mid > r.start {
                    ranges[axis] = mid..r.end;
                    crate::polytree::rect::for_each_cell_in(tree, &ranges, |i| g[i] = lo);
                }
                g
            }
            2 => {
                let mut g = vec![0.0; cells];
                g[support[rng.random_range(0..support.len())]] = 1.0;
                g
            }
            3 => {
                // g ~ mu(Q(w ^ w0))^{-p}: mass concentrated around one cell
                let p = 0.1 + 0.4 * rng.random::<f64>();
                let w0 = tree.cell_at(support[rng.random_range(0..support.len())]);
                (0..cells)
                    .map(|i| {
                        let c = tree.cell_at(i);
                        let meet = tree.cell_vertex(&c).meet(&tree.cell_vertex(&w0));
                        let m = box_mass[tree.vertex_index(&meet)];
                        if m > 0.0 {
                            m.powf(-p)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            _ => (0..cells).map(|_| rng.random::<f64>()).collect(),
        };
        evaluations += 1;
        if let Some(r) = op.ratio(&g) {
            if r > best {
                best = r;
                best_g = g;
            }
        }
    }

    let mut improved = true;
    while improved && evaluations < budget {
        improved = false;
        let top = best_g.iter().copied().fold(0.0, f64::max);
        for &i in &support {
            let old = best_g[i];
            let moves: &[f64] = if old > 0.0 {
                &[2.0 * old, 0.5 * old, 0.0]
            } else {
                &[top]
            };
            for &x in moves {
                if evaluations >= budget {
                    break;
                }
                best_g[i] = x;
                evaluations += 1;
                match op.ratio(&best_g) {
                    Some(r) if r > best * (1.0 + 1e-12) => {
                        best = r;
                        improved = true;
                        break;
                    }
                    _ => best_g[i] = old,
                }
            }
        }
    }
    Ok(MaximalEstimate {
        lower_bound: best,
        witness_g: Field::on_cells(tree, best_g)?,
        evaluations,
    })
}
