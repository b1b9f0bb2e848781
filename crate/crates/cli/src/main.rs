//! `lsmo`: train, sweep, refine, tabulate and serve solution-manifold models.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsmo_core::generative::{TrainLog, VaeModel};
use lsmo_pipeline::adapt::adaptation_check;
use lsmo_pipeline::config::{load_scene, ExperimentConfig, Problem};
use lsmo_pipeline::output::{ensure_dir, read_json, write_json};
use lsmo_pipeline::planar::{self, PlanarContext};
use lsmo_pipeline::records::SolutionRecord;
use lsmo_pipeline::testfunc::{self, TestfuncSummary};
use lsmo_pipeline::{tables, PipelineError, Result};

#[derive(Debug, Parser)]
#[command(name = "lsmo", version, about)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel scoring and refinement.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample, train and sweep a test-function model, refining with CEM.
    TrainTestfunc,
    /// Sample trajectories, train and sweep a planning model, refining with CHOMP.
    TrainPlanar,
    /// Decode the latent sweep of a trained model without refinement.
    Sweep {
        #[arg(long)]
        model: PathBuf,
    },
    /// Refine every record of a solutions file.
    Finetune {
        #[arg(long)]
        solutions: PathBuf,
    },
    /// Write table1.csv, table5.csv and the merged solutions.json.
    Tables {
        /// Run directories holding summary.json and solutions.json.
        #[arg(long, num_args = 0..)]
        runs: Vec<PathBuf>,
    },
    /// Re-check stored solutions against a changed scene.
    Adapt {
        #[arg(long)]
        solutions: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Serve a trained planning model over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of static files served for non-API paths.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::config("this command needs --config"))?;
    Ok(ExperimentConfig::load(path)?.with_seed(cli.seed))
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn write_run(dir: &Path, model: &VaeModel, log: &TrainLog, records: &[SolutionRecord], summary: &impl serde::Serialize) -> Result<()> {
    model.save(&dir.join("model.json"))?;
    write_json(&dir.join("train_log.json"), log)?;
    write_json(&dir.join("solutions.json"), &records)?;
    write_json(&dir.join("summary.json"), summary)
}

fn train_testfunc(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let run = testfunc::run_lsmo_testfunc(&cfg)?;
    let s = &run.summary;
    eprintln!(
        "{}: raw {}  refined {}  gmm best {:.6}",
        s.function,
        s.raw.display(),
        s.refined.map(|r| r.display()).unwrap_or_default(),
        s.gmm.as_ref().map_or(f64::NAN, |g| g.best)
    );
    write_run(&dir, &run.model, &run.log, &run.records, &run.summary)
}

fn train_planar(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let run = planar::run_mpsm(&cfg)?;
    let s = &run.summary;
    eprintln!(
        "raw {}  final {}  free raw {:.2} final {:.2}  classes {:?}  best proposal {:.4}",
        s.raw.display(),
        s.final_scores.display(),
        s.collision_free_raw_fraction,
        s.collision_free_final_fraction,
        s.homotopy_counts,
        s.proposals.best_score
    );
    write_run(&dir, &run.model, &run.log, &run.records, &run.summary)
}

fn sweep(cli: &Cli, model: &Path) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let model = VaeModel::load(model)?;
    let records = match &cfg.problem {
        Problem::Testfunc(_) => testfunc::sweep_testfunc(&model, &cfg, false)?,
        Problem::Planar(_) => {
            let ctx = PlanarContext::from_config(&cfg)?;
            planar::sweep_planar(&model, &ctx, &cfg.sweep, None)?
        }
    };
    write_json(&dir.join("solutions.json"), &records)
}

fn finetune(cli: &Cli, solutions: &Path) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let mut records: Vec<SolutionRecord> = read_json(solutions)?;
    match &cfg.problem {
        Problem::Testfunc(_) => testfunc::refine_records(&mut records, &cfg)?,
        Problem::Planar(_) => {
            let ctx = PlanarContext::from_config(&cfg)?;
            let rtp = planar::rtp_meta(&cfg)?.rtp()?;
            let chomp = cfg.refine.chomp.unwrap_or_default();
            planar::refine_records(&mut records, &ctx, &rtp, &chomp)?;
        }
    }
    write_json(&dir.join("solutions.json"), &records)
}

fn run_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn emit_tables(cli: &Cli, runs: &[PathBuf]) -> Result<()> {
    let dir = out_dir(cli, None)?;
    let mut summaries = Vec::new();
    let mut all = BTreeMap::new();
    for run in runs {
        let summary = run.join("summary.json");
        if summary.exists() {
            // Planning summaries have a different shape and are skipped here.
            if let Ok(s) = read_json::<TestfuncSummary>(&summary) {
                summaries.push(s);
            }
        }
        let records: Vec<SolutionRecord> = read_json(&run.join("solutions.json"))?;
        all.insert(run_name(run), records);
    }
    tables::write_table1(&dir.join("table1.csv"), &summaries)?;
    for r in tables::write_table5(&dir.join("table5.csv"))? {
        eprintln!("{} {}: {:.4e}", r.basis, r.parameter, r.condition_number);
    }
    tables::write_solutions(&dir.join("solutions.json"), &all)
}

fn adapt(cli: &Cli, solutions: &Path, scene: &Path) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let ctx = PlanarContext::from_config(&cfg)?;
    let records: Vec<SolutionRecord> = read_json(solutions)?;
    let report = adaptation_check(&records, &load_scene(scene)?, &ctx.arm)?;
    eprintln!(
        "{} of {} survive {:?}; slowest check {:.2} ms",
        report.survivors.len(),
        report.checked,
        report.class_counts,
        report.max_check_time().as_secs_f64() * 1e3
    );
    write_json(&dir.join("adapt.json"), &report)
}

fn serve(cli: &Cli, model: &Path, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(cli)?;
    let model = model.to_path_buf();
    let load = move || {
        let m = VaeModel::load(&model).map_err(|e| e.to_string())?;
        lsmo_serve::Session::from_config(&cfg, m).map_err(|e| e.to_string())
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::io("starting runtime", e))?;
    rt.block_on(lsmo_serve::serve(addr, load, static_dir))
        .map_err(|e| PipelineError::io(format!("serving on {addr}"), e))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::TrainTestfunc => train_testfunc(cli),
        Command::TrainPlanar => train_planar(cli),
        Command::Sweep { model } => sweep(cli, model),
        Command::Finetune { solutions } => finetune(cli, solutions),
        Command::Tables { runs } => emit_tables(cli, runs),
        Command::Adapt { solutions, scene } => adapt(cli, solutions, scene),
        Command::Serve { model, addr, static_dir } => serve(cli, model, *addr, static_dir.clone()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
