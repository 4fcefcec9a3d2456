use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rspin_core::correlators::{
    fit_extended_primaries, load_base_table, Choice, CorrelatorTable, Evaluator, Gate, OpenSource,
};
use rspin_core::hierarchy::{default_e_min, Fault};
use rspin_core::potentials::dump;
use rspin_core::verify::{default_weight, recursion_base, run_suite, Bounds};
use rspin_core::{open_potential, solve_l, CorrelatorKey, Insertion, Rational, Sector, SolveOptions};

#[derive(Parser)]
#[command(name = "rspin", version, about = "Exact open r-spin intersection numbers")]
struct Cli {
    /// Worker threads for the parallel parts (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a single correlator.
    Correlator(CorrelatorArgs),
    /// Write every correlator of a genus-0 or genus-1 potential.
    Potential(PotentialArgs),
    /// Run the property suite and the pipeline cross-check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Solver {
    #[arg(long)]
    r: u32,
    /// Truncation weight; defaults to 10, 9 and 8 for r = 2, 3 and r >= 4.
    #[arg(long)]
    weight: Option<u32>,
    /// How many exponents below the default to keep in operator roots.
    #[arg(long, default_value_t = 0)]
    window_extra: i32,
}

impl Solver {
    fn weight(&self) -> u32 {
        self.weight.unwrap_or_else(|| default_weight(self.r))
    }

    fn options(&self) -> SolveOptions {
        SolveOptions { e_min: Some(default_e_min(self.r, self.weight()) - self.window_extra), fault: None }
    }

    /// Genus-0 and genus-1 open tables from the hierarchy.
    fn pipeline_a(&self) -> anyhow::Result<CorrelatorTable> {
        let mut sol = solve_l(self.r, self.weight(), self.options())?;
        sol.solve_wave_function()?;
        let mut table = open_potential(&sol, 0)?.table()?;
        table.merge(&open_potential(&sol, 1)?.table()?)?;
        Ok(table)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pipeline {
    A,
    B,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Args)]
struct CorrelatorArgs {
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    g: u32,
    /// Internal insertion `a:d`, repeatable.
    #[arg(long = "ins", value_parser = parse_insertion)]
    ins: Vec<Insertion>,
    /// Boundary markings.
    #[arg(long, default_value_t = 0)]
    k: u32,
    /// Closed extended correlator instead of an open one.
    #[arg(long)]
    ext: bool,
    #[arg(long, value_enum, default_value_t = Pipeline::Both)]
    pipeline: Pipeline,
    /// Primaries for the recursion, as JSON lines.
    #[arg(long, env = "RSPIN_BASE_TABLE")]
    base_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    format: Format,
}

#[derive(Args)]
struct PotentialArgs {
    #[command(flatten)]
    solver: Solver,
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=1))]
    g: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FaultArg {
    Flow,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    r: Vec<u32>,
    #[arg(long)]
    weight: Option<u32>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    random_operators: usize,
    #[arg(long, default_value_t = 50)]
    triples: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, value_enum)]
    fault_inject: Option<FaultArg>,
}

fn parse_insertion(s: &str) -> Result<Insertion, String> {
    let (a, d) = s.split_once(':').ok_or_else(|| format!("expected a:d, got {s:?}"))?;
    let a = a.trim().parse::<i32>().map_err(|e| format!("twist {a:?}: {e}"))?;
    let d = d.trim().parse::<u32>().map_err(|e| format!("descendant {d:?}: {e}"))?;
    Ok(Insertion::new(a, d))
}

/// Errors that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Correlator(args) => correlator(args),
        Command::Potential(args) => potential(args),
        Command::Verify(args) => verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn correlator(args: CorrelatorArgs) -> anyhow::Result<ExitCode> {
    let r = args.solver.r;
    if r < 2 {
        return Err(Usage("r must be at least 2".into()).into());
    }
    let key = if args.ext {
        if args.g != 0 || args.k != 0 {
            return Err(Usage("extended correlators take neither --g nor --k".into()).into());
        }
        CorrelatorKey::ext(args.ins.iter().copied())
    } else {
        CorrelatorKey::open(args.g, args.ins.iter().copied(), args.k)
    };
    let gate = key.dimension_gate(r).map_err(|e| Usage(e.to_string()))?;
    let w = args.solver.weight();
    if gate == Gate::Zero || !key.is_stable() {
        let why = if gate == Gate::Zero { "dimension gate" } else { "unstable" };
        print_values(&key, &[(Rational::from_integer(0.into()), why.to_string())], args.format)?;
        return Ok(ExitCode::SUCCESS);
    }
    if key.weight(r) > w as i64 {
        bail!("{key} has weight {} above the truncation weight {w}", key.weight(r));
    }

    let needs_a = args.pipeline != Pipeline::B || args.base_table.is_none();
    let a = if needs_a { Some(args.solver.pipeline_a()?) } else { None };
    let mut values = Vec::new();
    if args.pipeline != Pipeline::B {
        match (key.sector, a.as_ref().and_then(|t| t.get(&key))) {
            (Sector::Open, Some(v)) => values.push((v.clone(), format!("pipeline A, W={w}"))),
            (Sector::Open, None) => bail!("{key} is missing from the pipeline A table"),
            (Sector::Ext, _) if args.pipeline == Pipeline::A => bail!("extended correlators come only from the recursion"),
            (Sector::Ext, _) => {}
        }
    }
    if args.pipeline != Pipeline::A {
        let (base, source) = match &args.base_table {
            Some(path) => {
                let t = load_base_table(path, r).with_context(|| format!("loading {}", path.display()))?;
                (t, format!("base table {}", path.display()))
            }
            None => {
                let open = a.as_ref().expect("pipeline A computed");
                let fit = fit_extended_primaries(open, r)?;
                (recursion_base(open, &fit)?, format!("fitted primaries, W={w}"))
            }
        };
        let mut ev = Evaluator::new(r, &base, OpenSource::Recursion, Choice::First);
        values.push((ev.value(&key)?, format!("pipeline B, {source}")));
    }
    print_values(&key, &values, args.format)?;
    if values.windows(2).any(|p| p[0].0 != p[1].0) {
        bail!("pipelines disagree on {key}");
    }
    Ok(ExitCode::SUCCESS)
}

fn print_values(key: &CorrelatorKey, values: &[(Rational, String)], format: Format) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    for (v, provenance) in values {
        match format {
            Format::Pretty => writeln!(out, "{key} = {v} ({provenance})")?,
            Format::Csv => writeln!(out, "{key},{v},{provenance}")?,
            Format::Json => writeln!(
                out,
                "{}",
                serde_json::json!({ "key": key.to_string(), "value": v.to_string(), "provenance": provenance })
            )?,
        }
    }
    Ok(())
}

fn potential(args: PotentialArgs) -> anyhow::Result<ExitCode> {
    let w = args.solver.weight();
    let rows = if w == 0 {
        Vec::new()
    } else {
        let mut sol = solve_l(args.solver.r, w, args.solver.options())?;
        sol.solve_wave_function()?;
        dump(&open_potential(&sol, args.g)?)?
    };
    let mut text = String::new();
    match args.format {
        Format::Json => {
            for row in &rows {
                text.push_str(&serde_json::to_string(row)?);
                text.push('\n');
            }
        }
        Format::Csv => {
            text.push_str("g,ins,k,value,monomial\n");
            for row in &rows {
                let rec = &row.record;
                let ins: Vec<String> = rec.ins.iter().map(|(a, d)| format!("{a}:{d}")).collect();
                text.push_str(&format!("{},{},{},{},{}\n", rec.g, ins.join(" "), rec.k, rec.value, row.monomial));
            }
        }
        Format::Pretty => {
            for row in &rows {
                text.push_str(&format!("{} = {}\n", row.record.key(), row.record.value));
            }
        }
    }
    match args.out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    if let Some(r) = args.r.iter().find(|&&r| r < 2) {
        return Err(Usage(format!("r = {r} is not supported")).into());
    }
    let bounds = Bounds {
        random_operators: args.random_operators,
        triples: args.triples,
        seed: args.seed,
        fault: args.fault_inject.map(|FaultArg::Flow| Fault::Flow),
        ..Bounds::default()
    };
    let report = run_suite(&args.r, args.weight, &bounds);
    if let Some(path) = &args.report {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    for c in &report.checks {
        let status = if c.counterexample.is_some() { "FAIL" } else { "ok" };
        println!("{status:>4} r={} W={} {} ({} cases, {:.2}s)", c.r, c.weight, c.name, c.cases, c.seconds);
        if let Some(ce) = &c.counterexample {
            println!("     counterexample: {ce}");
        }
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
