use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::SolverOptions;
use crate::error::{invalid, Result};
use crate::measures::{MeasureGen, Support};
use crate::polytree::{rect_family, FamilySpec, TreeSpec};
use crate::weights::Weight;

use super::{charge_energy_report, ConditionOptions, ConditionReport};

/// Measure generators known to the search, in generator-id order.
pub const GENERATORS: [&str; 3] = ["product-cantor", "diagonal", "random-atoms"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub dim: usize,
    pub depth: u32,
    pub seed: u64,
    /// Number of candidate measures.
    pub budget: usize,
    /// Polynomial weight exponent, shared by all axes.
    pub s: f64,
    pub families: Vec<String>,
    /// Candidates whose local ratio exceeds this are dropped.
    pub local_ceiling: Option<f64>,
    /// Sets tested: all single boxes with every axis level at most this.
    pub max_level: u32,
    pub maximal_budget: usize,
}

impl SearchConfig {
    pub fn new(dim: usize, depth: u32, seed: u64, budget: usize) -> Self {
        SearchConfig {
            dim,
            depth,
            seed,
            budget,
            s: 0.0,
            families: GENERATORS.iter().map(|s| s.to_string()).collect(),
            local_ceiling: None,
            max_level: 2,
            maximal_budget: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub generator: String,
    pub generator_id: usize,
    pub seed_index: usize,
    pub params: MeasureGen,
    pub maximal_lower_bound: f64,
    pub local_ratio: f64,
    pub subcap_ratio: f64,
    pub report: ConditionReport,
}

/// Scores `budget` generated measures and ranks them by maximal-function
/// lower bound (descending), breaking ties by generator id and seed index.
///
/// Candidate `i` uses generator `families[i % len]` with parameters drawn
/// from a stream seeded by `(seed, i)`, so results do not depend on thread
/// scheduling.
pub fn counterexample_search(config: &SearchConfig) -> Result<Vec<Candidate>> {
    if config.dim < 2 {
        return invalid("counterexample search needs at least two dimensions");
    }
    if config.families.is_empty() {
        return invalid("no measure families configured");
    }
    let ids = config
        .families
        .iter()
        .map(|f| match GENERATORS.iter().position(|g| g == f) {
            Some(i) => Ok(i),
            None => invalid(format!("unknown measure family '{f}'")),
        })
        .collect::<Result<Vec<_>>>()?;
    let tree = TreeSpec::uniform(config.dim, config.depth)?;
    let weight = Weight::polynomial(vec![config.s; config.dim])?;
    let family = rect_family(&tree, &FamilySpec::single_boxes(config.max_level))?;
    let opts = ConditionOptions {
        hardy_tol: 1e-9,
        cap: SolverOptions::default(),
        maximal_budget: config.maximal_budget,
        seed: config.seed,
    };

    let scored: Vec<Result<Option<Candidate>>> = (0..config.budget)
        .into_par_iter()
        .map(|seed_index| {
            let generator_id = ids[seed_index % ids.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(seed_index as u64);
            let params = match generator_id {
                0 => MeasureGen::Cantor {
                    ratio: rng.random_range(0.05..0.5),
                    depth: rng.random_range(1..=config.depth / 2 + 1),
                },
                1 => MeasureGen::Diagonal,
                _ => MeasureGen::RandomAtoms {
                    k: rng.random_range(1..=tree.cell_count().min(64)),
                    seed: rng.random(),
                    support: Support::Boundary,
                },
            };
            let mu = params.build(&tree)?;
            let report = charge_energy_report(&mu, &family, &weight, &opts)?;
            if config.local_ceiling.is_some_and(|c| report.local_ratio > c) {
                return Ok(None);
            }
            Ok(Some(Candidate {
                generator: GENERATORS[generator_id].to_string(),
                generator_id,
                seed_index,
                params,
                maximal_lower_bound: report.maximal_lower_bound,
                local_ratio: report.local_ratio,
                subcap_ratio: report.subcap_ratio,
                report,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for c in scored {
        out.extend(c?);
    }
    out.sort_by(|a, b| {
        b.maximal_lower_bound
            .total_cmp(&a.maximal_lower_bound)
            .then(a.generator_id.cmp(&b.generator_id))
            .then(a.seed_index.cmp(&b.seed_index))
    });
    Ok(out)
}
