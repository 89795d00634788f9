//! Command-line surface: run/resume searches, export Pareto fronts,
//! compute cost reports for genome files, and run engine-validation
//! benchmarks.
//!
//! Run-directory layout written by `search`:
//!
//! ```text
//! out/
//!   config.snapshot        verbatim copy of the input config
//!   checkpoints/gen-00000  one JSON checkpoint per generation
//!   front.json             final archive (genomes + objectives)
//!   history.csv            generation, hypervolume, best per objective
//!   run.log                one progress line per generation
//! ```
//!
//! Exit codes: 0 success, 1 internal error, 2 config error, 3 I/O error,
//! 4 evaluator error, 5 checkpoint error. Log verbosity follows the
//! `RUST_LOG` environment variable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::SearchConfig;
use crate::eval::{
    zdt1_front_distance, zdt1_front_hypervolume, CellSearchProblem, ExternalEvaluator, Zdt1Problem,
};
use crate::evolution::{self, Checkpoint, EvolutionError, Individual, SearchState};
use crate::genome::Genome;
use crate::network::{speed, CostModel, MacroConfig, MacroTemplate};
use crate::pareto::ObjectiveVector;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_EVALUATOR: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;

/// A failed command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    fn io(context: &str, error: std::io::Error) -> Self {
        CliError { code: EXIT_IO, message: format!("{context}: {error}") }
    }

    fn checkpoint(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CHECKPOINT, message: message.into() }
    }
}

impl From<EvolutionError> for CliError {
    fn from(error: EvolutionError) -> Self {
        let code = match &error {
            EvolutionError::Config(_) => EXIT_CONFIG,
            EvolutionError::Dispatch(_) => EXIT_EVALUATOR,
            EvolutionError::Checkpoint(_) => EXIT_CHECKPOINT,
            EvolutionError::Observer(_) => EXIT_IO,
            _ => EXIT_INTERNAL,
        };
        CliError { code, message: error.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "evocell", version, about = "Multi-objective evolutionary cell-architecture search")]
pub struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Run (or resume) a search described by a config file.
    Search {
        /// Path to the JSON search config.
        config: PathBuf,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the latest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Print the analytic cost report for a genome file.
    Cost {
        /// Path to a genome in canonical JSON form.
        genome: PathBuf,
        #[arg(long, value_enum, default_value_t = TemplateArg::Cifar10)]
        template: TemplateArg,
        /// Normal cells per stack (N).
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// First-stack filter count (F).
        #[arg(long, default_value_t = 32)]
        f: usize,
        /// Input resolution; defaults per template (32 / 224).
        #[arg(long)]
        resolution: Option<usize>,
        /// Class count; defaults per template (10 / 1000).
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Export the Pareto front from a run directory or checkpoint file.
    Front {
        /// Run directory (latest checkpoint is used) or checkpoint path.
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = FrontFormat::Json)]
        format: FrontFormat,
    },
    /// Validate the engine on a benchmark with a known Pareto front.
    Bench {
        #[arg(long, default_value = "zdt1")]
        problem: String,
        #[arg(long, default_value_t = 8)]
        n_vars: usize,
        #[arg(long, default_value_t = 150)]
        generations: u64,
        #[arg(long, default_value_t = 32)]
        pop: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TemplateArg {
    Cifar10,
    Imagenet,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FrontFormat {
    Json,
    Csv,
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn run_cli() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(error) => {
            eprintln!("error: {}", error.message);
            error.code
        }
    }
}

fn execute(command: CliCommand) -> Result<(), CliError> {
    match command {
        CliCommand::Search { config, out, resume } => cmd_search(&config, &out, resume),
        CliCommand::Cost { genome, template, n, f, resolution, classes } => {
            cmd_cost(&genome, template, n, f, resolution, classes)
        }
        CliCommand::Front { path, format } => {
            let text = cmd_front(&path, format)?;
            println!("{text}");
            Ok(())
        }
        CliCommand::Bench { problem, n_vars, generations, pop, seed } => {
            let report = cmd_bench(&problem, n_vars, generations, pop, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

fn checkpoint_path(out_dir: &Path, generation: u64) -> PathBuf {
    out_dir.join("checkpoints").join(format!("gen-{generation:05}"))
}

fn build_problem(config: &SearchConfig) -> Result<CellSearchProblem, CliError> {
    let has_external = config.evaluator.is_some()
        && crate::eval::external_slot_count(&config.objectives) > 0;
    if has_external {
        let settings = config.evaluator.as_ref().expect("checked");
        let evaluator = ExternalEvaluator::from_settings(settings, config.parallelism)
            .map_err(|e| CliError { code: EXIT_EVALUATOR, message: e.to_string() })?;
        Ok(CellSearchProblem::with_external(
            config.genome_blocks,
            config.macro_config.clone(),
            config.objectives.clone(),
            config.cost_model(),
            config.parallelism,
            evaluator,
        ))
    } else {
        CellSearchProblem::in_process(
            config.genome_blocks,
            config.macro_config.clone(),
            config.objectives.clone(),
            config.cost_model(),
            config.parallelism,
        )
        .map_err(|e| CliError::config(e.to_string()))
    }
}

/// Runs or resumes a search, writing checkpoints every generation and
/// the final `front.json` / `history.csv` on completion.
pub fn cmd_search(config_path: &Path, out_dir: &Path, resume: bool) -> Result<(), CliError> {
    let config_text = fs::read_to_string(config_path)
        .map_err(|e| CliError::io(&format!("read config {}", config_path.display()), e))?;
    let config = SearchConfig::from_json(&config_text).map_err(CliError::config)?;
    config.validate().map_err(CliError::config)?;
    let config_hash = config.hash();
    let settings = config.engine_settings();

    let snapshot_path = out_dir.join("config.snapshot");
    let initial_state: Option<SearchState<Genome>> = if resume {
        let snapshot = fs::read_to_string(&snapshot_path)
            .map_err(|e| CliError::io("read config.snapshot (is this a run directory?)", e))?;
        let snapshot_config = SearchConfig::from_json(&snapshot).map_err(CliError::config)?;
        if snapshot_config.hash() != config_hash {
            return Err(CliError::checkpoint(
                "config does not match the run directory's config.snapshot",
            ));
        }
        let generation = latest_checkpoint_generation(out_dir)?
            .ok_or_else(|| CliError::checkpoint("no checkpoints found to resume from"))?;
        let checkpoint = read_checkpoint(&checkpoint_path(out_dir, generation))?;
        Some(checkpoint.into_state(&config_hash)?)
    } else {
        if snapshot_path.exists() {
            return Err(CliError::config(format!(
                "{} already holds a run (use --resume to continue it)",
                out_dir.display()
            )));
        }
        None
    };

    let mut problem = build_problem(&config)?;

    if !resume {
        fs::create_dir_all(out_dir.join("checkpoints"))
            .map_err(|e| CliError::io("create run directory", e))?;
        fs::write(&snapshot_path, &config_text)
            .map_err(|e| CliError::io("write config.snapshot", e))?;
    }

    let log_path = out_dir.join("run.log");
    let mut run_log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| CliError::io("open run.log", e))?;

    let observer = |state: &SearchState<Genome>| -> std::io::Result<()> {
        let checkpoint = Checkpoint::from_state(state, &config_hash);
        fs::write(checkpoint_path(out_dir, state.generation), checkpoint.to_json())?;
        writeln!(
            run_log,
            "generation={} hypervolume={:.9} archive={} population={}",
            state.generation,
            state.hypervolume_history.last().copied().unwrap_or(0.0),
            state.archive.len(),
            state.population.len(),
        )
    };

    let result = match initial_state {
        Some(state) => evolution::resume(state, &settings, &mut problem, observer)?,
        None => evolution::run(&settings, &mut problem, observer)?,
    };

    let front = export_front_json(&result.state.archive)?;
    fs::write(out_dir.join("front.json"), front)
        .map_err(|e| CliError::io("write front.json", e))?;
    let history = build_history_csv(out_dir, &config, result.state.generation)?;
    fs::write(out_dir.join("history.csv"), history)
        .map_err(|e| CliError::io("write history.csv", e))?;

    println!(
        "search finished: {} generations, {} evaluations ({} cache hits), archive size {}",
        result.state.generation,
        result.evaluations,
        result.cache_hits,
        result.state.archive.len()
    );
    println!("results in {}", out_dir.display());
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint<Genome>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("read checkpoint {}", path.display()), e))?;
    Ok(Checkpoint::from_json(&text)?)
}

fn latest_checkpoint_generation(out_dir: &Path) -> Result<Option<u64>, CliError> {
    let dir = out_dir.join("checkpoints");
    let entries = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&format!("list {}", dir.display()), e))?;
    let mut latest = None;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io("list checkpoints", e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(number) = name.strip_prefix("gen-").and_then(|s| s.parse::<u64>().ok()) {
            latest = Some(latest.map_or(number, |best: u64| best.max(number)));
        }
    }
    Ok(latest)
}

/// Archive sorted for export: first objective descending, id ascending
/// on ties.
fn export_order(archive: &[Individual<Genome>]) -> Result<Vec<&Individual<Genome>>, CliError> {
    let mut rows: Vec<&Individual<Genome>> = archive.iter().collect();
    for row in &rows {
        let vector = row.objectives.as_ref().ok_or_else(|| CliError {
            code: EXIT_INTERNAL,
            message: format!("archive member {} has no objectives", row.id),
        })?;
        for other in &rows {
            let other_vector = other.objectives.as_ref().expect("checked in same loop");
            if other.id != row.id && other_vector.dominates(vector) {
                return Err(CliError {
                    code: EXIT_INTERNAL,
                    message: "archive export failed the mutual non-domination check".into(),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        let av = a.objectives.as_ref().expect("checked").values()[0];
        let bv = b.objectives.as_ref().expect("checked").values()[0];
        bv.partial_cmp(&av)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    Ok(rows)
}

#[derive(Serialize)]
struct FrontEntry<'a> {
    id: u64,
    generation: u64,
    objectives: &'a [f64],
    genome: &'a Genome,
}

/// The archive as plot-ready JSON (points verified mutually
/// non-dominated, sorted by first objective descending).
pub fn export_front_json(archive: &[Individual<Genome>]) -> Result<String, CliError> {
    let rows = export_order(archive)?;
    let entries: Vec<FrontEntry> = rows
        .iter()
        .map(|ind| FrontEntry {
            id: ind.id,
            generation: ind.birth_generation,
            objectives: ind.objectives.as_ref().expect("checked").values(),
            genome: &ind.genome,
        })
        .collect();
    serde_json::to_string_pretty(&entries)
        .map_err(|e| CliError { code: EXIT_INTERNAL, message: e.to_string() })
}

/// The archive as CSV: id, generation, one column per objective, genome
/// text.
pub fn export_front_csv(archive: &[Individual<Genome>]) -> Result<String, CliError> {
    let rows = export_order(archive)?;
    let objective_count = rows
        .first()
        .map(|r| r.objectives.as_ref().expect("checked").len())
        .unwrap_or(0);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "generation".to_string()];
    header.extend((0..objective_count).map(|i| format!("objective_{i}")));
    header.push("genome".to_string());
    writer
        .write_record(&header)
        .map_err(|e| CliError { code: EXIT_INTERNAL, message: e.to_string() })?;
    for ind in rows {
        let mut record = vec![ind.id.to_string(), ind.birth_generation.to_string()];
        record.extend(
            ind.objectives
                .as_ref()
                .expect("checked")
                .values()
                .iter()
                .map(|v| v.to_string()),
        );
        record.push(ind.genome.to_canonical());
        writer
            .write_record(&record)
            .map_err(|e| CliError { code: EXIT_INTERNAL, message: e.to_string() })?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError { code: EXIT_INTERNAL, message: e.to_string() })?;
    String::from_utf8(bytes).map_err(|e| CliError { code: EXIT_INTERNAL, message: e.to_string() })
}

/// Exports the archive of a run directory (latest checkpoint) or an
/// explicit checkpoint file.
pub fn cmd_front(path: &Path, format: FrontFormat) -> Result<String, CliError> {
    let checkpoint_file = if path.is_dir() {
        let generation = latest_checkpoint_generation(path)?
            .ok_or_else(|| CliError::checkpoint("run directory has no checkpoints"))?;
        checkpoint_path(path, generation)
    } else {
        path.to_path_buf()
    };
    let checkpoint = read_checkpoint(&checkpoint_file)?;
    match format {
        FrontFormat::Json => export_front_json(&checkpoint.archive),
        FrontFormat::Csv => export_front_csv(&checkpoint.archive),
    }
}

/// Rebuilds history.csv from the run's checkpoints: one row per
/// generation with the archive hypervolume and the best value per
/// objective.
fn build_history_csv(
    out_dir: &Path,
    config: &SearchConfig,
    final_generation: u64,
) -> Result<String, CliError> {
    let mut out = String::from("generation,hypervolume");
    for objective in &config.objectives {
        out.push_str(&format!(",best_{}", objective.name()));
    }
    out.push('\n');
    for generation in 0..=final_generation {
        let checkpoint = read_checkpoint(&checkpoint_path(out_dir, generation))?;
        let hypervolume = checkpoint
            .hypervolume_history
            .last()
            .copied()
            .unwrap_or(0.0);
        let mut best = vec![f64::NEG_INFINITY; config.objectives.len()];
        for member in &checkpoint.archive {
            if let Some(vector) = &member.objectives {
                for (slot, value) in best.iter_mut().zip(vector.values()) {
                    *slot = slot.max(*value);
                }
            }
        }
        out.push_str(&format!("{generation},{hypervolume}"));
        for value in best {
            out.push_str(&format!(",{value}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct CostOutput {
    mult_adds: u64,
    flops: u64,
    params: u64,
    speed: f64,
}

/// Prints the analytic cost report for a genome file.
pub fn cmd_cost(
    genome_path: &Path,
    template: TemplateArg,
    n: usize,
    f: usize,
    resolution: Option<usize>,
    classes: Option<usize>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(genome_path)
        .map_err(|e| CliError::io(&format!("read genome {}", genome_path.display()), e))?;
    let genome = Genome::from_canonical(&text).map_err(|e| CliError::config(e.to_string()))?;
    let template = match template {
        TemplateArg::Cifar10 => MacroTemplate::Cifar,
        TemplateArg::Imagenet => MacroTemplate::Imagenet,
    };
    let macro_config = MacroConfig {
        template,
        repeats: n,
        filters: f,
        input_resolution: resolution.unwrap_or_else(|| template.default_resolution()),
        class_count: classes.unwrap_or_else(|| template.default_classes()),
    };
    macro_config
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let cost = CostModel::default()
        .network_cost(&genome, &macro_config)
        .map_err(|e| CliError::config(e.to_string()))?;
    let output = CostOutput {
        mult_adds: cost.mult_adds,
        flops: cost.flops,
        params: cost.params,
        speed: speed(&cost).map_err(|e| CliError::config(e.to_string()))?,
    };
    println!("{}", serde_json::to_string_pretty(&output).expect("report serializes"));
    Ok(())
}

/// Benchmark run report.
#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub problem: String,
    pub n_vars: usize,
    pub population: usize,
    pub generations_run: u64,
    pub final_hypervolume: f64,
    pub analytic_hypervolume: f64,
    pub gap_percent: f64,
    pub mean_front_distance: f64,
    pub archive_size: usize,
}

/// Runs the engine on a benchmark problem and reports the gap to the
/// analytic front.
pub fn cmd_bench(
    problem_name: &str,
    n_vars: usize,
    generations: u64,
    pop: usize,
    seed: u64,
) -> Result<BenchReport, CliError> {
    if problem_name != "zdt1" {
        return Err(CliError::config(format!(
            "unsupported benchmark problem {problem_name:?} (available: zdt1)"
        )));
    }
    if n_vars == 0 {
        return Err(CliError::config("n-vars must be at least 1"));
    }
    let mut settings = SearchConfig::default().engine_settings();
    settings.population_size = pop;
    settings.max_generations = generations;
    settings.seed = seed;
    // Benchmarks run to the full generation budget.
    settings.plateau_epsilon = 0.0;
    let mut problem = Zdt1Problem::new(n_vars, 1);
    let result = evolution::run(&settings, &mut problem, |_| Ok(()))?;

    let final_hypervolume = result
        .state
        .hypervolume_history
        .last()
        .copied()
        .unwrap_or(0.0);
    let analytic = zdt1_front_hypervolume();
    let points: Vec<ObjectiveVector> = result
        .state
        .archive
        .iter()
        .filter_map(|i| i.objectives.clone())
        .collect();
    let mean_front_distance = if points.is_empty() {
        f64::NAN
    } else {
        points.iter().map(zdt1_front_distance).sum::<f64>() / points.len() as f64
    };
    Ok(BenchReport {
        problem: problem_name.to_string(),
        n_vars,
        population: pop,
        generations_run: result.state.generation,
        final_hypervolume,
        analytic_hypervolume: analytic,
        gap_percent: 100.0 * (analytic - final_hypervolume) / analytic,
        mean_front_distance,
        archive_size: result.state.archive.len(),
    })
}
