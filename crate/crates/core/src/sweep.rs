//! Axis-sequential sweeps over dense vertex grids.
//!
//! Sums over the product order factorize into one-dimensional sums, so every
//! operator runs `d` passes, one per axis, in fixed order `0..d`.

use crate::polytree::TreeSpec;

fn for_each_line(tree: &TreeSpec, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let m = tree.axis_len(axis);
    let s = tree.stride(axis);
    let outer = tree.vertex_count() / (m * s);
    for o in 0..outer {
        f(o * m * s, m, s);
    }
}

/// In place: `g(beta) <- sum_{alpha <= beta} g(alpha)` (leaf to root).
pub(crate) fn subtree_sum(tree: &TreeSpec, g: &mut [f64]) {
    for axis in 0..tree.dim() {
        for_each_line(tree, axis, |base, m, s| {
            for h in (0..m / 2).rev() {
                let (p, c1, c2) = (base + h * s, base + (2 * h + 1) * s, base + (2 * h + 2) * s);
                for t in 0..s {
                    g[p + t] += g[c1 + t] + g[c2 + t];
                }
            }
        });
    }
}

/// In place: `g(alpha) <- sum_{gamma >= alpha} g(gamma)` (root to leaf).
pub(crate) fn prefix_sum(tree: &TreeSpec, g: &mut [f64]) {
    for axis in 0..tree.dim() {
        for_each_line(tree, axis, |base, m, s| {
            for h in 1..m {
                let (c, p) = (base + h * s, base + ((h - 1) / 2) * s);
                for t in 0..s {
                    g[c + t] += g[p + t];
                }
            }
        });
    }
}

/// In place: `g(alpha) <- max_{gamma >= alpha} g(gamma)`.
pub(crate) fn prefix_max(tree: &TreeSpec, g: &mut [f64]) {
    for axis in 0..tree.dim() {
        for_each_line(tree, axis, |base, m, s| {
            for h in 1..m {
                let (c, p) = (base + h * s, base + ((h - 1) / 2) * s);
                for t in 0..s {
                    g[c + t] = g[c + t].max(g[p + t]);
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytree::Vertex;

    #[test]
    fn sweeps_match_order_enumeration() {
        let tree = TreeSpec::new(vec![3, 2]).unwrap();
        let n = tree.vertex_count();
        let base: Vec<f64> = (0..n).map(|i| (i * 7 % 11) as f64 - 3.0).collect();
        let verts: Vec<Vertex> = tree.vertices().collect();

        let mut sub = base.clone();
        subtree_sum(&tree, &mut sub);
        let mut pre = base.clone();
        prefix_sum(&tree, &mut pre);
        let mut mx = base.clone();
        prefix_max(&tree, &mut mx);
        for (i, a) in verts.iter().enumerate() {
            let below: f64 = verts
                .iter()
                .zip(&base)
                .filter(|(b, _)| b.leq(a))
                .map(|(_, x)| x)
                .sum();
            let above: f64 = verts
                .iter()
                .zip(&base)
                .filter(|(b, _)| a.leq(b))
                .map(|(_, x)| x)
                .sum();
            let top = verts
                .iter()
                .zip(&base)
                .filter(|(b, _)| a.leq(b))
                .map(|(_, x)| *x)
                .fold(f64::MIN, f64::max);
            assert_eq!(sub[i], below);
            assert_eq!(pre[i], above);
            assert_eq!(mx[i], top);
        }
    }
}
