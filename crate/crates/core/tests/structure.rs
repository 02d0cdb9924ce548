mod common;

use common::*;
use polycap::*;
use proptest::prelude::*;
use rand::Rng;

fn tree_strategy(max_d: usize, max_n: u32) -> impl Strategy<Value = TreeSpec> {
    prop::collection::vec(1..=max_n, 1..=max_d).prop_map(|d| TreeSpec::new(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn order_axioms(t in tree_strategy(3, 5), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c) = (random_vertex(&t, &mut r), random_vertex(&t, &mut r), random_vertex(&t, &mut r));
        prop_assert!(a.leq(&a));
        prop_assert_eq!(a.leq(&b), below(&a, &b));
        if a.leq(&b) && b.leq(&a) {
            prop_assert_eq!(&a, &b);
        }
        if a.leq(&b) && b.leq(&c) {
            prop_assert!(a.leq(&c));
        }
        // comparable pairs are the common case on the same root path
        let up = meet(&a, &t.root());
        prop_assert!(a.leq(&up));
    }

    #[test]
    fn meet_is_the_greatest_common_lower_bound(t in tree_strategy(3, 5), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_vertex(&t, &mut r), random_vertex(&t, &mut r));
        let m = t.meet(&a, &b).unwrap();
        prop_assert_eq!(&m, &meet(&a, &b));
        prop_assert!(a.leq(&m) && b.leq(&m));
        for j in 0..t.dim() {
            if m.coords[j].level + 1 < t.depth(j) {
                for child in m.coords[j].children() {
                    let mut c = m.clone();
                    c.coords[j] = child;
                    prop_assert!(!(a.leq(&c) && b.leq(&c)));
                }
            }
        }
        prop_assert_eq!(m.d_t(), predecessors(&m).len() as u64);
    }

    #[test]
    fn shadow_matches_cell_scan(t in tree_strategy(2, 5), seed in any::<u64>(), k in 1usize..4) {
        let mut r = rng(seed);
        let boxes: Vec<Vertex> = (0..k).map(|_| random_vertex(&t, &mut r)).collect();
        let (_, cells) = boundary_shadow(&t, &boxes).unwrap();
        let scan: Vec<BoundaryCell> =
            t.cells().filter(|c| boxes.iter().any(|b| below(&t.cell_vertex(c), b))).collect();
        prop_assert_eq!(cells, scan);
    }

    #[test]
    fn d_pi_matches_enumeration(t in tree_strategy(2, 4), s in prop::collection::vec(0.0f64..0.95, 2)) {
        let s = &s[..t.dim()];
        let w = Weight::polynomial(s.to_vec()).unwrap();
        for v in t.vertices() {
            prop_assert!(rel_err(w.d_pi(&t, &v), d_pi(s, &v)) <= 1e-12);
            for g in predecessors(&v) {
                prop_assert!(w.d_pi(&t, &v) >= w.d_pi(&t, &g));
            }
        }
    }

    #[test]
    fn table_weights_match_enumeration(n in 1u32..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = TreeSpec::uniform(2, n).unwrap();
        let axes: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| r.random_range(0.5..3.0)).collect()).collect();
        let w = Weight::table(axes.clone()).unwrap();
        for v in t.vertices() {
            let brute: f64 = predecessors(&v)
                .iter()
                .map(|g| g.coords.iter().enumerate().map(|(j, a)| axes[j][a.level as usize]).product::<f64>())
                .sum();
            prop_assert!(rel_err(w.d_pi(&t, &v), brute) <= 1e-12);
        }
    }

    #[test]
    fn pushdown_preserves_mass_and_is_idempotent(t in tree_strategy(3, 4), seed in any::<u64>(), k in 1usize..8) {
        let mut r = rng(seed);
        let mu = random_mixed_measure(&t, k, &mut r);
        let b = mu.pushdown();
        prop_assert!(b.is_boundary_supported());
        prop_assert!(rel_err(b.total_mass(), mu.total_mass()) <= 1e-12);
        prop_assert_eq!(b.pushdown(), b.clone());
        for c in t.cells() {
            let spread: f64 = mu
                .interior()
                .filter(|(v, _)| below(&t.cell_vertex(&c), v))
                .map(|(v, m)| m / t.cells_below(&v) as f64)
                .sum();
            prop_assert!((b.cell_mass(&c) - mu.cell_mass(&c) - spread).abs() <= 1e-12);
        }
    }
}

#[test]
fn root_atom_pushes_to_lebesgue() {
    for depths in [vec![3], vec![2, 4], vec![2, 2, 3]] {
        let t = TreeSpec::new(depths).unwrap();
        let root = Measure::from_atoms(&t, [(t.root(), 1.0)], []).unwrap();
        assert_eq!(root.pushdown(), md_measure(&t));
    }
}

#[test]
fn d_pi_asymptotic_regimes() {
    let t = TreeSpec::with_budget(vec![40], 1 << 41).unwrap();
    let flat = Weight::unit(1);
    let deep = |l: u32| Vertex::from_pairs(&[(l, 0)]).unwrap();
    for l in 0..39 {
        assert_eq!(flat.d_pi(&t, &deep(l)), (l + 1) as f64);
    }
    for s in [0.2, 0.5, 0.8] {
        let w = Weight::polynomial(vec![s]).unwrap();
        let ratio = w.d_pi(&t, &deep(39)) / w.d_pi(&t, &deep(38));
        assert!((ratio - s.exp2()).abs() < 1e-3, "s={s}: ratio {ratio}");
        let early = w.d_pi(&t, &deep(2)) / w.d_pi(&t, &deep(1));
        assert!((early - s.exp2()).abs() > (ratio - s.exp2()).abs());
    }
}

#[test]
fn slice_charging_energy_diverges() {
    // A measure charging a full slice {w_0} x T has energy at least the energy
    // of its projection onto the slice axis, which grows with depth.
    let mut last = 0.0;
    for n in 3..=8 {
        let t = TreeSpec::uniform(2, n).unwrap();
        let cells = t.axis_cells(1) as u64;
        let atoms: Vec<_> = (0..cells)
            .map(|k| (BoundaryCell::new(vec![0, k]), 1.0 / cells as f64))
            .collect();
        let mu = Measure::from_atoms(&t, [], atoms).unwrap();
        let e = energy(&mu, &mu, &Weight::unit(2)).unwrap();
        assert!(e > last + 0.5, "depth {n}: {e} after {last}");
        last = e;
    }
}
