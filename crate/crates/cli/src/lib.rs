//! Command-line front end: `score`, `gen`, `baseline` and `leaderboard`.
//!
//! Exit codes: 0 on success, 1 for input errors (unreadable or invalid
//! files, bad flags), 2 for scoring errors (unknown measure, nothing
//! scorable, baseline failures).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gapscore::baselines::{self, WeightBaseline};
use gapscore::report::{self, format_sig12, ScoreReport};
use gapscore::synth::{self, GapFn, MeasureKind, PlantSpec};
use gapscore::{Population, ScoreOptions, TensorArchive, Weighting};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Scoring(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Scoring(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn input(msg: impl std::fmt::Display) -> CliError {
    CliError::Input(msg.to_string())
}

fn scoring(msg: impl std::fmt::Display) -> CliError {
    CliError::Scoring(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "gapscore",
    version,
    about = "Score complexity measures against generalization gaps"
)]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score measures on one or more population manifests.
    Score(ScoreArgs),
    /// Generate a synthetic population on a preset task grid.
    Gen(GenArgs),
    /// Append a baseline measure to a manifest.
    Baseline(BaselineArgs),
    /// Rank the measures found in score reports.
    Leaderboard(LeaderboardArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Equal,
    Pairs,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Equal => Weighting::Equal,
            WeightingArg::Pairs => Weighting::Pairs,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Population manifests, one per task.
    #[arg(long = "manifest", required = true, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    /// Measure names to score.
    #[arg(long = "measure", required = true, num_args = 1..)]
    pub measures: Vec<String>,
    /// Largest conditioning set for the conditional-MI score.
    #[arg(long = "kmax", default_value_t = gapscore::metrics::DEFAULT_K_MAX)]
    pub k_max: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Equal)]
    pub weighting: WeightingArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-model time budget in seconds; over-budget baseline timings are reported, never enforced.
    #[arg(long = "budget-secs", default_value_t = 300)]
    pub budget_secs: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Preset task grid (task1, task2, task4 ... task9).
    #[arg(long)]
    pub preset: String,
    /// Plant specification JSON; defaults to the preset's default gap function with an oracle measure.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    /// Overrides the plant's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub replicas: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// param_count, vc_proxy, log_frobenius_product, log_spectral_product or noisy_oracle.
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory that record `weights` paths are resolved against; defaults to the manifest's directory.
    #[arg(long)]
    pub archives: Option<PathBuf>,
    /// Noise standard deviation for noisy_oracle.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Seed for noisy_oracle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LeaderboardArgs {
    #[arg(long = "reports", required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let command = cli.command;
    match cli.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| input(format!("--jobs {n}: {e}")))?;
            pool.install(|| dispatch(command))
        }
        None => dispatch(command),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Score(a) => cmd_score(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Leaderboard(a) => cmd_leaderboard(&a),
    }
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn load_manifest(path: &Path) -> CliResult<Population> {
    let bytes = fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    Population::parse_manifest(&bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Per-model wall-clock seconds for one baseline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineTiming {
    pub measure: String,
    pub models: Vec<ModelTiming>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTiming {
    pub record: usize,
    pub model: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
struct OverBudget<'a> {
    manifest: String,
    measure: &'a str,
    record: usize,
    model: &'a str,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct ScoreTiming<'a> {
    budget_secs: u64,
    phases: Vec<(String, Vec<(String, f64)>)>,
    over_budget: Vec<OverBudget<'a>>,
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult<()> {
    let pops = args
        .manifests
        .iter()
        .map(|p| load_manifest(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mut tasks = BTreeSet::new();
    for (pop, path) in pops.iter().zip(&args.manifests) {
        if !tasks.insert(pop.task_id()) {
            return Err(input(format!(
                "{}: task '{}' appears in more than one manifest",
                path.display(),
                pop.task_id()
            )));
        }
    }
    let mut measures = args.measures.clone();
    measures.sort();
    if let Some(w) = measures.windows(2).find(|w| w[0] == w[1]) {
        return Err(input(format!("measure '{}' given more than once", w[0])));
    }
    for (pop, path) in pops.iter().zip(&args.manifests) {
        for m in &measures {
            pop.measure(m)
                .map_err(|e| scoring(format!("{}: {e}", path.display())))?;
        }
    }

    let opts = ScoreOptions {
        k_max: args.k_max,
        weighting: args.weighting.into(),
    };
    let reports: Vec<ScoreReport> = measures
        .par_iter()
        .map(|m| {
            report::score_populations(&pops, m, &opts)
                .map_err(|e| scoring(format!("measure '{m}': {e}")))
        })
        .collect::<CliResult<_>>()?;

    let body = match args.format {
        Format::Json => report::reports_to_json(&reports),
        Format::Csv => report::reports_to_csv(&reports),
    };
    write(&args.out, &body)?;

    // Budget check against timings left by `baseline`.
    let timings: Vec<(String, BaselineTiming)> = args
        .manifests
        .iter()
        .filter_map(|p| {
            let side = sidecar(p, ".timing.json");
            let bytes = fs::read(&side).ok()?;
            let t = serde_json::from_slice::<BaselineTiming>(&bytes).ok()?;
            Some((p.display().to_string(), t))
        })
        .collect();
    let budget = args.budget_secs as f64;
    let over_budget: Vec<OverBudget> = timings
        .iter()
        .flat_map(|(path, t)| {
            t.models
                .iter()
                .filter(|m| m.seconds > budget)
                .map(|m| OverBudget {
                    manifest: path.clone(),
                    measure: &t.measure,
                    record: m.record,
                    model: &m.model,
                    seconds: m.seconds,
                })
        })
        .collect();
    const SHOWN: usize = 5;
    for o in over_budget.iter().take(SHOWN) {
        eprintln!(
            "note: {} record {} ({}) took {:.3} s for '{}', over the {} s budget",
            o.manifest, o.record, o.model, o.seconds, o.measure, args.budget_secs
        );
    }
    if over_budget.len() > SHOWN {
        eprintln!(
            "note: {} more over-budget models listed in {}",
            over_budget.len() - SHOWN,
            sidecar(&args.out, ".timing.json").display()
        );
    }
    let timing = ScoreTiming {
        budget_secs: args.budget_secs,
        phases: reports
            .iter()
            .map(|r| (r.measure.clone(), r.timing.phases.clone()))
            .collect(),
        over_budget,
    };
    write(&sidecar(&args.out, ".timing.json"), &to_pretty(&timing))
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let space = synth::preset_space(&args.preset).map_err(input)?;
    let mut plant = match &args.plant {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            serde_json::from_slice::<PlantSpec>(&bytes)
                .map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => PlantSpec::new(GapFn::default_for(&space), MeasureKind::Oracle, 0),
    };
    if let Some(seed) = args.seed {
        plant.seed = seed;
    }
    let (pop, truth) =
        synth::generate_population(&args.preset, &space, &plant, args.replicas).map_err(input)?;
    for w in &truth.warnings {
        eprintln!("warning: {w}");
    }
    write(&args.out, &pop.to_manifest_json())?;
    write(&sidecar(&args.out, ".truth.json"), &to_pretty(&truth))
}

pub fn cmd_baseline(args: &BaselineArgs) -> CliResult<()> {
    let pop = load_manifest(&args.manifest)?;
    let manifest = args.manifest.display();
    if pop.measures().contains_key(&args.name) {
        return Err(input(format!(
            "{manifest}: measure '{}' already exists",
            args.name
        )));
    }

    let (measure, models) = if args.name == "noisy_oracle" {
        let sigma = args
            .sigma
            .ok_or_else(|| input("noisy_oracle needs --sigma"))?;
        let start = Instant::now();
        let m = baselines::noisy_oracle(&pop, sigma, args.seed).map_err(input)?;
        let per_model = start.elapsed().as_secs_f64() / pop.len().max(1) as f64;
        let models = (0..pop.len())
            .map(|i| ModelTiming {
                record: i,
                model: model_label(&pop, i),
                seconds: per_model,
            })
            .collect();
        (m, models)
    } else {
        let baseline = WeightBaseline::from_id(&args.name).ok_or_else(|| {
            input(format!(
                "unknown baseline '{}' (expected param_count, vc_proxy, log_frobenius_product, log_spectral_product or noisy_oracle)",
                args.name
            ))
        })?;
        let root = match &args.archives {
            Some(dir) => dir.clone(),
            None => args
                .manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        };
        let results = (0..pop.len())
            .into_par_iter()
            .map(|i| {
                let start = Instant::now();
                let value = weight_baseline(&pop, i, baseline, &root).map_err(|e| match e {
                    CliError::Input(m) => input(format!("{manifest}: {m}")),
                    CliError::Scoring(m) => scoring(format!("{manifest}: {m}")),
                })?;
                Ok((value, start.elapsed().as_secs_f64()))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let values = results.iter().map(|r| r.0).collect();
        let models = results
            .iter()
            .enumerate()
            .map(|(i, r)| ModelTiming {
                record: i,
                model: model_label(&pop, i),
                seconds: r.1,
            })
            .collect();
        (gapscore::MeasureVector::new(baseline.id(), values), models)
    };

    let out = pop
        .with_measure(measure)
        .map_err(|e| input(format!("{manifest}: {e}")))?;
    write(&args.out, &out.to_manifest_json())?;
    let timing = BaselineTiming {
        measure: args.name.clone(),
        models,
    };
    write(&sidecar(&args.out, ".timing.json"), &to_pretty(&timing))
}

fn model_label(pop: &Population, i: usize) -> String {
    let r = &pop.records()[i];
    format!("{}, replica {}", pop.space().describe(&r.coord), r.replica)
}

fn weight_baseline(
    pop: &Population,
    i: usize,
    baseline: WeightBaseline,
    root: &Path,
) -> CliResult<f64> {
    let label = || format!("record {i} ({})", model_label(pop, i));
    let weights = pop.records()[i]
        .weights
        .as_deref()
        .ok_or_else(|| input(format!("{}: no weights archive", label())))?;
    let dir = root.join(weights);
    let arch = TensorArchive::read(&dir).map_err(|e| input(format!("{}: {e}", label())))?;
    baseline
        .evaluate(&arch)
        .map_err(|e| scoring(format!("{}: {e}", label())))
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standing {
    pub rank: usize,
    pub measure: String,
    pub metric2: f64,
    pub metric1: f64,
}

/// Orders measures by aggregate J, then Ψ, both descending, then by name.
///
/// Every report must cover the same tasks and name a distinct measure.
pub fn rank(reports: &[ScoreReport]) -> std::result::Result<Vec<Standing>, String> {
    let Some(first) = reports.first() else {
        return Err("no reports to rank".into());
    };
    let tasks: Vec<&String> = first.per_task.keys().collect();
    let mut names = BTreeSet::new();
    for r in reports {
        if !names.insert(r.measure.as_str()) {
            return Err(format!(
                "measure '{}' appears in more than one report",
                r.measure
            ));
        }
        let these: Vec<&String> = r.per_task.keys().collect();
        if these != tasks {
            return Err(format!(
                "measure '{}' covers tasks {:?}, but '{}' covers {:?}",
                r.measure, these, first.measure, tasks
            ));
        }
    }
    let mut rows: Vec<&ScoreReport> = reports.iter().collect();
    rows.sort_by(|a, b| {
        b.aggregate
            .metric2
            .total_cmp(&a.aggregate.metric2)
            .then(b.aggregate.metric1.total_cmp(&a.aggregate.metric1))
            .then_with(|| a.measure.cmp(&b.measure))
    });
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| Standing {
            rank: i + 1,
            measure: r.measure.clone(),
            metric2: r.aggregate.metric2,
            metric1: r.aggregate.metric1,
        })
        .collect())
}

fn table(rows: &[Standing]) -> String {
    let width = rows
        .iter()
        .map(|r| r.measure.len())
        .max()
        .unwrap_or(0)
        .max(7);
    let mut out = format!(
        "{:>4}  {:<width$}  {:>14}  {:>14}\n",
        "rank", "measure", "metric2", "metric1"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>4}  {:<width$}  {:>14}  {:>14}\n",
            r.rank,
            r.measure,
            format_sig12(r.metric2),
            format_sig12(r.metric1)
        ));
    }
    out
}

pub fn cmd_leaderboard(args: &LeaderboardArgs) -> CliResult<()> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let bytes = fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let parsed = report::reports_from_json(&bytes)
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        reports.extend(parsed);
    }
    let rows = rank(&reports).map_err(input)?;
    print!("{}", table(&rows));
    if let Some(out) = &args.out {
        write(out, &to_pretty(&rows))?;
    }
    Ok(())
}
