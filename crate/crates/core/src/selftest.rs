//! Closed-form sanity checks runnable from an installed binary.

use serde::Serialize;

use crate::capacity::{kkt_check, product_capacity, solve_capacity, SolverOptions, TargetSet};
use crate::error::Result;
use crate::measures::{md_measure, Measure};
use crate::polytree::{BoundaryCell, TreeSpec, Vertex};
use crate::potential::{energy, potential, Mode};
use crate::trace::hardy_norm;
use crate::weights::Weight;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub expected: f64,
    pub actual: f64,
    pub tol: f64,
    pub passed: bool,
}

fn check(name: &'static str, expected: f64, actual: f64, tol: f64) -> Check {
    Check {
        name,
        expected,
        actual,
        tol,
        passed: (expected - actual).abs() <= tol * expected.abs().max(1.0),
    }
}

/// Runs every check; errors only on internal failures.
pub fn run() -> Result<Vec<Check>> {
    let opts = SolverOptions {
        tol: 1e-10,
        max_iters: Some(10_000),
    };
    let mut out = Vec::new();

    let t = TreeSpec::uniform(1, 4)?;
    let atom = Measure::from_atoms(&t, [], [(BoundaryCell::new(vec![0]), 1.0)])?;
    let v = potential(&atom, &Weight::unit(1), Mode::Sweep)?;
    out.push(check(
        "potential of a cell atom at the cell",
        4.0,
        v.at_cell(&BoundaryCell::new(vec![0])).unwrap_or(f64::NAN),
        1e-12,
    ));
    out.push(check(
        "potential of a cell atom at the sibling cell",
        3.0,
        v.at_cell(&BoundaryCell::new(vec![1])).unwrap_or(f64::NAN),
        1e-12,
    ));

    let t = TreeSpec::uniform(1, 3)?;
    let m = md_measure(&t);
    out.push(check(
        "energy of Lebesgue measure, depth 3",
        1.75,
        energy(&m, &m, &Weight::unit(1))?,
        1e-12,
    ));

    let t = TreeSpec::uniform(1, 6)?;
    let vtx: Vertex = "4:3".parse()?;
    out.push(check(
        "capacity of a level-4 vertex",
        0.2,
        solve_capacity(&t, &TargetSet::vertex(vtx), &Weight::unit(1), &opts)?.cap,
        1e-9,
    ));

    for n in [3u32, 6] {
        let t = TreeSpec::uniform(1, n)?;
        let full = TargetSet::full_boundary(&t);
        let r = solve_capacity(&t, &full, &Weight::unit(1), &opts)?;
        let exact = (n as f64 - 1.0).exp2() / ((n as f64).exp2() - 1.0);
        out.push(check(
            if n == 3 {
                "full boundary capacity, depth 3"
            } else {
                "full boundary capacity, depth 6"
            },
            exact,
            r.cap,
            1e-8,
        ));
        let kkt = kkt_check(&t, &full, &r.mu_e, &Weight::unit(1), 1e-6)?;
        out.push(check(
            "equilibrium conditions hold",
            1.0,
            if kkt.passed { 1.0 } else { 0.0 },
            0.0,
        ));
    }

    let t = TreeSpec::uniform(2, 3)?;
    let t1 = TreeSpec::uniform(1, 3)?;
    let full = TargetSet::full_boundary(&t1);
    out.push(check(
        "product capacity of the full boundary",
        16.0 / 49.0,
        product_capacity(&t, &[full.clone(), full], &Weight::unit(2), &opts)?,
        1e-8,
    ));

    let t = TreeSpec::uniform(2, 4)?;
    let atom = Measure::from_atoms(&t, [], [(BoundaryCell::new(vec![3, 5]), 1.0)])?;
    out.push(check(
        "Hardy constant of a point mass",
        16.0,
        hardy_norm(&atom, &Weight::unit(2), 1e-12)?.c,
        1e-9,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_pass() {
        for c in super::run().unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
