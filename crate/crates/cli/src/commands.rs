//! One function per subcommand: resolve the spec, run the engine, build the result.

use polycap::capacity::reference_capacity;
use polycap::trace::{ConditionOptions, SearchConfig, GENERATORS};
use polycap::{
    charge_energy_report, counterexample_search, hardy_norm, kkt_check, potential, rect_family,
    single_box_test, solve_capacity, FamilySpec, Measure, Mode, SolverOptions, TreeSpec, Weight,
};
use serde_json::{json, Value};

use crate::spec::{schema, ProblemSpec, SchemaError};

/// What a command produces besides its JSON result.
pub struct Outcome {
    pub result: Value,
    /// Header plus rows for `--out csv`.
    pub table: Option<Vec<Vec<String>>>,
    /// Streamed JSON lines (counterexample search).
    pub lines: Option<Vec<Value>>,
    pub failed: bool,
}

impl Outcome {
    fn json(result: Value) -> Self {
        Outcome {
            result,
            table: None,
            lines: None,
            failed: false,
        }
    }
}

type Run = anyhow::Result<Outcome>;

fn engine(field: &'static str) -> impl Fn(polycap::Error) -> SchemaError {
    move |e| schema(field, e)
}

/// Fills in the weight default (`s = 0` on every axis) and returns it.
fn weight(spec: &mut ProblemSpec, tree: &TreeSpec) -> Result<Weight, SchemaError> {
    let w = spec
        .weight
        .get_or_insert_with(|| Weight::unit(tree.dim()))
        .clone();
    w.check(tree).map_err(engine("weight"))?;
    Ok(w)
}

fn measure(spec: &ProblemSpec, tree: &TreeSpec) -> Result<Measure, SchemaError> {
    let v = spec
        .measure
        .as_ref()
        .ok_or_else(|| schema("measure", "required"))?;
    Measure::from_json(tree, v).map_err(engine("measure"))
}

fn tol(spec: &mut ProblemSpec, default: f64) -> Result<f64, SchemaError> {
    let t = *spec.tol.get_or_insert(default);
    if !(t > 0.0 && t.is_finite()) {
        return Err(schema("tol", "must be a positive number"));
    }
    Ok(t)
}

fn seed(spec: &ProblemSpec) -> Result<u64, SchemaError> {
    spec.seed
        .ok_or_else(|| schema("seed", "randomized commands need an explicit seed"))
}

fn values(x: &[f64]) -> Value {
    json!(x)
}

pub fn tree_info(spec: &mut ProblemSpec) -> Run {
    let t = spec.tree()?.clone();
    Ok(Outcome::json(json!({
        "dim": t.dim(),
        "depths": t.depths(),
        "leaf_levels": (0..t.dim()).map(|j| t.leaf_level(j)).collect::<Vec<_>>(),
        "vertex_count": t.vertex_count(),
        "cell_count": t.cell_count(),
        "root": t.root().to_string(),
    })))
}

pub fn capacity(spec: &mut ProblemSpec, full: bool) -> Run {
    let t = spec.tree()?.clone();
    let w = weight(spec, &t)?;
    let target = spec
        .target
        .clone()
        .ok_or_else(|| schema("target", "required"))?
        .resolve(&t)?;
    let tol = tol(spec, 1e-6)?;
    let opts = SolverOptions {
        tol,
        max_iters: spec.max_iters,
    };
    let r = solve_capacity(&t, &target, &w, &opts).map_err(engine("target"))?;
    let mut result = json!({
        "cap": r.cap,
        "primal_value": r.primal_value,
        "dual_value": r.dual_value,
        "gap": r.gap,
        "iterations": r.iterations,
        "converged": r.converged,
        "target_size": target.len(),
    });
    if full {
        let kkt = kkt_check(&t, &target, &r.mu_e, &w, tol).map_err(engine("target"))?;
        result["mu_E"] = r.mu_e.to_json(false);
        result["f_E"] = values(r.f_e.vertex_values().unwrap_or(&[]));
        result["kkt"] = serde_json::to_value(kkt)?;
    }
    if *spec.oracle.get_or_insert(false) {
        let iters = *spec.budget.get_or_insert(100_000);
        let reference = reference_capacity(&t, &target, &w, iters).map_err(engine("target"))?;
        let rel = (reference - r.cap).abs() / reference.abs().max(f64::MIN_POSITIVE);
        result["oracle"] = json!({"cap": reference, "iterations": iters, "rel_diff": rel});
    }
    Ok(Outcome::json(result))
}

pub fn potential_cmd(spec: &mut ProblemSpec) -> Run {
    let t = spec.tree()?.clone();
    let w = weight(spec, &t)?;
    let mu = measure(spec, &t)?;
    let mode = *spec.mode.get_or_insert(Mode::Sweep);
    let v = potential(&mu, &w, mode).map_err(engine("measure"))?;
    let mut result = json!({
        "mode": mode,
        "vertices": values(v.vertex_values().unwrap_or(&[])),
        "cells": values(v.cell_values().unwrap_or(&[])),
    });
    if *spec.oracle.get_or_insert(false) {
        let other = if mode == Mode::Sweep {
            Mode::Kernel
        } else {
            Mode::Sweep
        };
        let u = potential(&mu, &w, other).map_err(engine("measure"))?;
        let a = v.vertex_values().unwrap_or(&[]);
        let b = u.vertex_values().unwrap_or(&[]);
        let scale = a.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / scale;
        result["oracle"] = json!({"mode": other, "max_rel_diff": diff});
    }
    let mut table = vec![vec!["point".to_string(), "value".to_string()]];
    table.extend(v.rows().into_iter().map(|(p, x)| vec![p, x.to_string()]));
    Ok(Outcome {
        result,
        table: Some(table),
        lines: None,
        failed: false,
    })
}

pub fn pushdown(spec: &mut ProblemSpec) -> Run {
    let t = spec.tree()?.clone();
    let mu = measure(spec, &t)?;
    let b = mu.pushdown();
    let mut table = vec![vec!["cell".to_string(), "mass".to_string()]];
    table.extend(t.cells().zip(b.boundary()).map(|(c, m)| {
        let name = c
            .cell
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        vec![name, m.to_string()]
    }));
    let result = json!({"total_mass": b.total_mass(), "measure": b.to_json(false)});
    Ok(Outcome {
        result,
        table: Some(table),
        lines: None,
        failed: false,
    })
}

pub fn hardy(spec: &mut ProblemSpec) -> Run {
    let t = spec.tree()?.clone();
    let w = weight(spec, &t)?;
    let mu = measure(spec, &t)?;
    let tol = tol(spec, 1e-9)?;
    let h = hardy_norm(&mu, &w, tol).map_err(engine("measure"))?;
    Ok(Outcome::json(json!({
        "C": h.c,
        "iterations": h.iterations,
        "converged": h.converged,
        "extremal_f": values(h.extremal_f.vertex_values().unwrap_or(&[])),
    })))
}

pub fn conditions(spec: &mut ProblemSpec) -> Run {
    let t = spec.tree()?.clone();
    let w = weight(spec, &t)?;
    let mu = measure(spec, &t)?;
    let family_spec = spec
        .family
        .get_or_insert_with(|| FamilySpec::single_boxes(2))
        .clone();
    let family = rect_family(&t, &family_spec).map_err(engine("family"))?;
    let tol = tol(spec, 1e-6)?;
    let budget = *spec.maximal_budget.get_or_insert(200);
    let seed = if budget > 0 {
        seed(spec)?
    } else {
        spec.seed.unwrap_or(0)
    };
    let opts = ConditionOptions {
        cap: SolverOptions {
            tol,
            max_iters: spec.max_iters,
        },
        maximal_budget: budget,
        seed,
        ..Default::default()
    };
    let mut report = charge_energy_report(&mu, &family, &w, &opts).map_err(engine("measure"))?;
    report.family = serde_json::to_string(&family_spec)?;
    if report.sub_unit_weight {
        eprintln!("warning: weight takes values below 1; the charge-energy bounds may not apply");
    }
    let mut table = vec![[
        "index",
        "mass",
        "global_energy",
        "local_energy",
        "capacity",
        "capacity_converged",
    ]
    .map(String::from)
    .to_vec()];
    table.extend(report.rows.iter().map(|r| {
        vec![
            r.index.to_string(),
            r.mass.to_string(),
            r.global_energy.to_string(),
            r.local_energy.to_string(),
            r.capacity.to_string(),
            r.capacity_converged.to_string(),
        ]
    }));
    let mut result = serde_json::to_value(&report)?;
    if let Some(phi) = &spec.phi {
        let sb = single_box_test(&mu, phi, &w).map_err(engine("phi"))?;
        result["single_box"] = serde_json::to_value(sb)?;
    }
    Ok(Outcome {
        result,
        table: Some(table),
        lines: None,
        failed: false,
    })
}

pub fn search(spec: &mut ProblemSpec) -> Run {
    let seed = seed(spec)?;
    let budget = spec.budget.ok_or_else(|| schema("budget", "required"))?;
    let depth = spec.depth.ok_or_else(|| schema("depth", "required"))?;
    let mut config = SearchConfig::new(*spec.dim.get_or_insert(2), depth, seed, budget);
    config.s = *spec.s.get_or_insert(0.0);
    config.families = spec
        .families
        .get_or_insert_with(|| GENERATORS.iter().map(|g| g.to_string()).collect())
        .clone();
    config.local_ceiling = spec.local_ceiling;
    config.maximal_budget = *spec.maximal_budget.get_or_insert(200);
    if let Some(f) = &spec.family {
        config.max_level = f.max_level.ok_or_else(|| {
            schema(
                "family",
                "only single-boxes:max-level=... is supported here",
            )
        })?;
    }
    let field = if config.dim < 2 { "dim" } else { "families" };
    let found = counterexample_search(&config).map_err(engine(field))?;
    let lines = found
        .iter()
        .enumerate()
        .map(|(rank, c)| {
            let mut v = serde_json::to_value(c)?;
            v["rank"] = json!(rank);
            Ok(v)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut table = vec![[
        "rank",
        "generator",
        "seed_index",
        "maximal_lower_bound",
        "local_ratio",
        "subcap_ratio",
        "hardy_norm",
    ]
    .map(String::from)
    .to_vec()];
    table.extend(found.iter().enumerate().map(|(rank, c)| {
        vec![
            rank.to_string(),
            c.generator.clone(),
            c.seed_index.to_string(),
            c.maximal_lower_bound.to_string(),
            c.local_ratio.to_string(),
            c.subcap_ratio.to_string(),
            c.report.hardy_norm.to_string(),
        ]
    }));
    Ok(Outcome {
        result: json!({"candidates": found.len()}),
        table: Some(table),
        lines: Some(lines),
        failed: false,
    })
}

pub fn selftest() -> Run {
    let checks = polycap::selftest::run()?;
    let failed = checks.iter().any(|c| !c.passed);
    Ok(Outcome {
        result: json!({"passed": !failed, "checks": checks}),
        table: None,
        lines: None,
        failed,
    })
}
