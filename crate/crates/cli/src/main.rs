//! `polycap`: batch front end for the poly-tree potential theory engine.

mod commands;
mod spec;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polycap::Mode;
use serde_json::json;

use spec::{
    parse_family, parse_measure, parse_phi, parse_target, parse_tree, parse_weight, schema,
    ProblemSpec, SchemaError,
};

#[derive(Parser)]
#[command(
    name = "polycap",
    version,
    about = "Potentials, capacities and trace conditions on weighted dyadic poly-trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Vertex and cell counts of a tree.
    TreeInfo(Flags),
    /// Capacity of a target set with duality certificates.
    Capacity(Flags),
    /// Capacity plus equilibrium measure, capacitary function and KKT report.
    Equilibrium(Flags),
    /// Potential of a measure at every vertex and cell.
    Potential(Flags),
    /// Boundary pushdown of a measure.
    Pushdown(Flags),
    /// Best constant of the Hardy inequality for a trace measure.
    HardyNorm(Flags),
    /// Charge-energy, subcapacity and maximal-function report over a family of sets.
    Conditions(Flags),
    /// Randomized search for measures separating the trace conditions (JSON lines).
    SearchCounterexample(Flags),
    /// Closed-form self checks.
    Selftest(Flags),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Out {
    Json,
    Csv,
}

#[derive(Args)]
struct Flags {
    /// Problem specification file (JSON, `-` for stdin); flags override its fields.
    #[arg(long)]
    spec: Option<String>,
    /// `d=2,n=3,4`, `n=5` or JSON.
    #[arg(long)]
    tree: Option<String>,
    /// `s=0.5` (every axis), `s=0.5,0` or JSON.
    #[arg(long)]
    weight: Option<String>,
    /// Generator (`md`, `random-atoms:k=4,seed=1`, ...), JSON, or `@file`.
    #[arg(long)]
    measure: Option<String>,
    /// `full-boundary`, JSON boxes `["1:0x2:3"]`, JSON `{"vertices":[...],"cells":[...]}`, or `@file`.
    #[arg(long)]
    target: Option<String>,
    /// `single-boxes:max-level=2`, `random-unions:k=3,count=10,seed=1`, JSON, or `@file`.
    #[arg(long)]
    family: Option<String>,
    /// Test function for the single-box test: `product-log:b=3,3`, `product-power:a=1,1` or JSON.
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, env = "POLYCAP_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Cross-check against the slow reference computation.
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_enum, default_value = "json")]
    out: Out,
    /// Search candidates, or reference iterations with `--oracle`.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    depth: Option<u32>,
    /// Polynomial weight exponent for the search.
    #[arg(long)]
    s: Option<f64>,
    /// Comma-separated measure generators for the search.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    local_ceiling: Option<f64>,
    /// Evaluations spent on the maximal-function lower bound.
    #[arg(long)]
    maximal_budget: Option<usize>,
    /// Add wall-clock timing to the report (breaks byte-for-byte reproducibility).
    #[arg(long)]
    timing: bool,
}

impl Flags {
    fn resolve(&self, command: &str) -> Result<ProblemSpec, SchemaError> {
        let mut spec = match &self.spec {
            Some(path) => ProblemSpec::load(path)?,
            None => ProblemSpec::default(),
        };
        match spec.command.as_deref() {
            Some(c) if c != command => {
                return Err(schema(
                    "command",
                    format!("spec is for '{c}', not '{command}'"),
                ))
            }
            _ => spec.command = Some(command.to_string()),
        }
        if let Some(t) = &self.tree {
            spec.tree = Some(parse_tree(t)?);
        }
        if let Some(w) = &self.weight {
            let dim = spec.tree.as_ref().map_or(1, |t| t.dim());
            spec.weight = Some(parse_weight(w, dim)?);
        }
        if let Some(m) = &self.measure {
            spec.measure = Some(parse_measure(m)?);
        }
        if let Some(t) = &self.target {
            spec.target = Some(parse_target(t)?);
        }
        if let Some(f) = &self.family {
            spec.family = Some(parse_family(f)?);
        }
        if let Some(p) = &self.phi {
            spec.phi = Some(parse_phi(p)?);
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_some() { spec.$f = self.$f.clone(); } )* };
        }
        take!(
            tol,
            max_iters,
            seed,
            mode,
            budget,
            dim,
            depth,
            s,
            families,
            local_ceiling,
            maximal_budget
        );
        if self.oracle {
            spec.oracle = Some(true);
        }
        Ok(spec)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<SchemaError>() || err.is::<polycap::Error>() || err.is::<serde_json::Error>() {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (name, flags) = match &cli.command {
        Command::TreeInfo(f) => ("tree-info", f),
        Command::Capacity(f) => ("capacity", f),
        Command::Equilibrium(f) => ("equilibrium", f),
        Command::Potential(f) => ("potential", f),
        Command::Pushdown(f) => ("pushdown", f),
        Command::HardyNorm(f) => ("hardy-norm", f),
        Command::Conditions(f) => ("conditions", f),
        Command::SearchCounterexample(f) => ("search-counterexample", f),
        Command::Selftest(f) => ("selftest", f),
    };
    if let Some(n) = flags.threads {
        if n == 0 {
            return Err(schema("threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let mut spec = flags.resolve(name)?;
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::TreeInfo(_) => commands::tree_info(&mut spec),
        Command::Capacity(_) => commands::capacity(&mut spec, false),
        Command::Equilibrium(_) => commands::capacity(&mut spec, true),
        Command::Potential(_) => commands::potential_cmd(&mut spec),
        Command::Pushdown(_) => commands::pushdown(&mut spec),
        Command::HardyNorm(_) => commands::hardy(&mut spec),
        Command::Conditions(_) => commands::conditions(&mut spec),
        Command::SearchCounterexample(_) => commands::search(&mut spec),
        Command::Selftest(_) => commands::selftest(),
    }?;
    let elapsed = start.elapsed();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if flags.out == Out::Csv {
        let Some(table) = &outcome.table else {
            return Err(schema("out", format!("csv output is not available for {name}")).into());
        };
        let mut w = csv::Writer::from_writer(&mut out);
        for row in table {
            w.write_record(row)?;
        }
        w.flush()?;
        return Ok(!outcome.failed);
    }
    let mut header = json!({
        "command": name,
        "version": polycap::VERSION,
        "spec": spec,
        "result": outcome.result,
    });
    if flags.timing {
        header["timing"] = json!({"elapsed_ms": elapsed.as_secs_f64() * 1e3});
    }
    if let Some(lines) = &outcome.lines {
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for l in lines {
            writeln!(out, "{}", serde_json::to_string(l)?)?;
        }
    } else {
        writeln!(out, "{}", serde_json::to_string_pretty(&header)?)?;
    }
    Ok(!outcome.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
