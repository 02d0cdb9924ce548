//! Brute-force oracles shared by the integration tests. Everything here
//! works from first principles (explicit enumeration of predecessors and
//! boxes) and never calls the engine's sweeps or weight tables.
#![allow(dead_code)]

use polycap::{AxisVertex, BoundaryCell, Measure, TreeSpec, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `pi(gamma) = 2^{sum_j s_j d_T(gamma_j)}` with `d_T = level + 1`.
pub fn pi(s: &[f64], g: &Vertex) -> f64 {
    g.coords
        .iter()
        .zip(s)
        .map(|(a, sj)| (sj * (a.level + 1) as f64).exp2())
        .product()
}

/// All `gamma >= v` in the product order, by walking each axis to the root.
pub fn predecessors(v: &Vertex) -> Vec<Vertex> {
    let mut out = vec![vec![]];
    for &a in &v.coords {
        let chain: Vec<AxisVertex> = (0..=a.level)
            .map(|l| AxisVertex {
                level: l,
                index: a.index >> (a.level - l),
            })
            .collect();
        out = out
            .iter()
            .flat_map(|p: &Vec<AxisVertex>| {
                chain.iter().map(move |c| [p.clone(), vec![*c]].concat())
            })
            .collect();
    }
    out.into_iter().map(Vertex::new).collect()
}

pub fn d_pi(s: &[f64], v: &Vertex) -> f64 {
    predecessors(v).iter().map(|g| pi(s, g)).sum()
}

/// Axis-wise meet by comparing ancestor chains one level at a time.
pub fn meet(a: &Vertex, b: &Vertex) -> Vertex {
    Vertex::new(
        a.coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| {
                let mut l = x.level.min(y.level);
                while (x.index >> (x.level - l)) != (y.index >> (y.level - l)) {
                    l -= 1;
                }
                AxisVertex {
                    level: l,
                    index: x.index >> (x.level - l),
                }
            })
            .collect(),
    )
}

/// `b <= a`: `b` lies in the successor set of `a`.
pub fn below(b: &Vertex, a: &Vertex) -> bool {
    a.coords
        .iter()
        .zip(&b.coords)
        .all(|(x, y)| y.level >= x.level && (y.index >> (y.level - x.level)) == x.index)
}

/// Support of a measure as points of the vertex grid (cells become leaves).
pub fn atoms(mu: &Measure) -> Vec<(Vertex, f64)> {
    let t = mu.tree();
    let mut out: Vec<(Vertex, f64)> = mu.interior().collect();
    for c in t.cells() {
        let m = mu.cell_mass(&c);
        if m > 0.0 {
            out.push((t.cell_vertex(&c), m));
        }
    }
    out
}

/// `V(alpha) = sum_tau d_pi(alpha ^ tau) mu(tau)`.
pub fn kernel_potential(s: &[f64], mu: &Measure, alpha: &Vertex) -> f64 {
    atoms(mu)
        .iter()
        .map(|(t, m)| m * d_pi(s, &meet(alpha, t)))
        .sum()
}

/// `(I* mu)(beta) = mu(S(beta))`.
pub fn box_mass(mu: &Measure, beta: &Vertex) -> f64 {
    atoms(mu)
        .iter()
        .filter(|(t, _)| below(t, beta))
        .map(|(_, m)| m)
        .sum()
}

pub fn brute_energy(s: &[f64], mu: &Measure) -> f64 {
    mu.tree()
        .vertices()
        .map(|b| box_mass(mu, &b).powi(2) * pi(s, &b))
        .sum()
}

pub fn random_vertex(t: &TreeSpec, r: &mut ChaCha8Rng) -> Vertex {
    Vertex::new(
        t.depths()
            .iter()
            .map(|&n| {
                let level = r.random_range(0..n);
                AxisVertex {
                    level,
                    index: r.random_range(0..1u64 << level),
                }
            })
            .collect(),
    )
}

pub fn random_cell(t: &TreeSpec, r: &mut ChaCha8Rng) -> BoundaryCell {
    BoundaryCell::new(
        (0..t.dim())
            .map(|j| r.random_range(0..t.axis_cells(j) as u64))
            .collect(),
    )
}

/// A boundary measure with `k` atoms of random mass.
pub fn random_boundary_measure(t: &TreeSpec, k: usize, r: &mut ChaCha8Rng) -> Measure {
    let atoms: Vec<_> = (0..k)
        .map(|_| (random_cell(t, r), r.random_range(0.05..1.0)))
        .collect();
    Measure::from_atoms(t, [], atoms).unwrap()
}

pub fn random_interior_measure(t: &TreeSpec, k: usize, r: &mut ChaCha8Rng) -> Measure {
    let atoms: Vec<_> = (0..k)
        .map(|_| (random_vertex(t, r), r.random_range(0.05..1.0)))
        .collect();
    Measure::from_atoms(t, atoms, []).unwrap()
}

pub fn random_mixed_measure(t: &TreeSpec, k: usize, r: &mut ChaCha8Rng) -> Measure {
    let inner: Vec<_> = (0..k)
        .map(|_| (random_vertex(t, r), r.random_range(0.05..1.0)))
        .collect();
    let outer: Vec<_> = (0..k)
        .map(|_| (random_cell(t, r), r.random_range(0.05..1.0)))
        .collect();
    Measure::from_atoms(t, inner, outer).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
