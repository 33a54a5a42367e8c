//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code:
//! 0 success, 1 I/O failure, 2 invalid arguments, 3 training failure,
//! 4 non-convergence under `--strict`, 5 unknown experiment.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::data::{make_dataset, Task};
use crate::device::{hysteresis_metrics, iv_sweep, set_onset_voltage, DeviceKind, Presets};
use crate::error::{Error, Result};
use crate::experiments::{
    ablation_artifacts, apply_initial_state, cycles_to_full_scale, d2d_network, matrix_artifacts, run_accuracy_matrices,
    run_conductance_error_sweep, run_reset_ablation, run_training_cycles_trace, sub_seed, sweep_artifacts,
    trace_artifacts, Artifact, ExperimentConfig, InitialState, Stream, Variant,
};
use crate::kv::{parse_list, KvMap};
use crate::network::CrossbarNetwork;
use crate::onchip::{program_network, run_inference, TrainConfig};
use crate::svg::{line_plot, Series};
use crate::trainer::{map_weights, train_reference, TrainHyper, WeightsFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_STRICT: i32 = 4;
pub const EXIT_UNKNOWN_EXPERIMENT: i32 = 5;

pub const EXPERIMENTS: [&str; 5] = ["fig7", "fig8", "fig9", "fig10", "fig11"];

#[derive(Debug, Parser)]
#[command(name = "memsim", version, about = "Memristor-crossbar network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Key/value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; default = machine parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sinusoidal I-V sweep of a pristine device.
    SweepIv {
        #[arg(long, default_value = "carbon")]
        kind: String,
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        #[arg(long, default_value_t = 1.0)]
        freq: f64,
        #[arg(long, default_value_t = 2)]
        cycles: u32,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Reference (software) training; writes a weights file.
    Train {
        #[arg(long, default_value = "xo")]
        task: String,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value = "0")]
        seed: String,
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Programs a weights file into a crossbar and runs inference.
    Program {
        #[arg(long)]
        weights: PathBuf,
        /// Single preset for all cells.
        #[arg(long, conflicts_with = "d2d_seed")]
        kind: Option<String>,
        /// Random per-cell presets drawn from this seed.
        #[arg(long)]
        d2d_seed: Option<u64>,
        #[arg(long, overrides_with = "no_reset")]
        reset: bool,
        #[arg(long)]
        no_reset: bool,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        strict: bool,
        /// Seed of the test set and of the starting state.
        #[arg(long, default_value = "0")]
        seed: String,
        #[arg(long, default_value_t = 0.0)]
        test_noise: f64,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        /// `pristine` or `used` (random prior state drawn from the seed).
        #[arg(long, default_value = "pristine")]
        initial_state: String,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a named study: fig7 (programming traces), fig8 (XO accuracy
    /// matrices), fig9 (TH accuracy matrices), fig10 (tolerance sweep),
    /// fig11 (reset ablation).
    Experiment {
        name: String,
        /// Comma-separated seed list, overriding the config.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        no_reset: bool,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Preset of the ideal-hardware variant.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Re-executes the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

/// Record of one invocation, written to `<out>/manifest.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub version: String,
    pub wall_seconds: f64,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut kv = KvMap::new();
        kv.insert("command", &self.command);
        // Unit separator keeps arguments containing commas or spaces intact.
        kv.insert("args", self.args.join("\u{1f}"));
        kv.insert("config", self.config.as_ref().map_or(String::new(), |p| p.display().to_string()));
        kv.insert("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        kv.insert("out", self.out.display());
        kv.insert("version", &self.version);
        kv.insert("wall_seconds", self.wall_seconds);
        kv.insert("files", self.files.join(","));
        format!("# memsim run manifest\n{}", kv.render())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let config = kv.get_str("config").filter(|s| !s.is_empty()).map(PathBuf::from);
        let split = |s: &str, sep: char| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(sep).map(str::to_string).collect()
            }
        };
        Ok(Self {
            command: kv.require_str("command")?.to_string(),
            args: split(kv.require_str("args")?, '\u{1f}'),
            config,
            seeds: kv.get_list("seeds")?.unwrap_or_default(),
            out: PathBuf::from(kv.require_str("out")?),
            version: kv.require_str("version")?.to_string(),
            wall_seconds: kv.require("wall_seconds")?,
            files: split(kv.get_str("files").unwrap_or(""), ','),
        })
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NanLoss(_) => EXIT_TRAINING,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure { code, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INVALID, message: message.into() }
}

fn seeds_of(raw: &str) -> std::result::Result<Vec<u64>, Failure> {
    let seeds: Vec<u64> = parse_list(raw).map_err(|_| invalid(format!("bad seed list `{raw}`")))?;
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    Ok(seeds)
}

fn write_artifacts(out: &Path, artifacts: &[Artifact]) -> Result<Vec<String>> {
    std::fs::create_dir_all(out)?;
    let mut names = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        std::fs::write(out.join(&a.name), &a.contents)?;
        names.push(a.name.clone());
    }
    Ok(names)
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> std::result::Result<T, Failure> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(invalid("--workers must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let presets = Presets::from_env()?;
    match &common.config {
        None => Ok(ExperimentConfig { presets, ..Default::default() }),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?;
            Ok(ExperimentConfig::from_kv(&KvMap::parse(&text)?, presets)?)
        }
    }
}

struct Outcome {
    seeds: Vec<u64>,
    files: Vec<String>,
    /// Non-fatal failure code (strict mode) reported after the manifest is written.
    code: i32,
}

fn cmd_sweep_iv(kind: &str, amplitude: f64, freq: f64, cycles: u32, dt: f64, common: &Common) -> std::result::Result<Outcome, Failure> {
    let kind: DeviceKind = kind.parse()?;
    let params = Presets::from_env()?.get(kind);
    let trace = iv_sweep(&params, amplitude, freq, cycles, dt)?;
    let m = hysteresis_metrics(&trace)?;
    let onset = set_onset_voltage(&trace).map_or("none".to_string(), |v| v.to_string());
    let summary = format!(
        "kind = {kind}\namplitude_V = {amplitude}\nlobe_area_VA = {}\nlrs_slope_S = {}\nhrs_slope_S = {}\nset_onset_V = {onset}\n",
        m.lobe_area, m.lrs_slope, m.hrs_slope
    );
    let svg = line_plot(
        &format!("{kind} I-V sweep, {amplitude} V"),
        "voltage (V)",
        "current (mA)",
        &[Series::new(kind.name(), trace.samples.iter().map(|s| (s.v, s.i * 1e3)).collect())],
    );
    let files = write_artifacts(
        &common.out,
        &[
            Artifact { name: format!("sweep_iv_{kind}.csv"), contents: trace.to_csv() },
            Artifact { name: format!("sweep_iv_{kind}.svg"), contents: svg },
            Artifact { name: format!("sweep_iv_{kind}_metrics.txt"), contents: summary },
        ],
    )?;
    Ok(Outcome { seeds: Vec::new(), files, code: EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(task: &str, noise: f64, seed: &str, n_train: usize, epochs: usize, lr: f64, common: &Common) -> std::result::Result<Outcome, Failure> {
    let task: Task = task.parse()?;
    let seeds = seeds_of(seed)?;
    let mut files = Vec::new();
    for &s in &seeds {
        let data = make_dataset(task, n_train, noise, sub_seed(s, Stream::TrainSet, (noise * 1000.0).round() as u64))?;
        let hyper = TrainHyper { lr, epochs, seed: sub_seed(s, Stream::TrainerInit, 0) };
        let outcome = train_reference(&data, &hyper)?;
        let wf = WeightsFile { task, noise, seed: s, epochs, final_loss: outcome.final_loss, weights: outcome.weights };
        let mut history = String::from("epoch,loss\n");
        for (k, l) in outcome.loss_history.iter().enumerate() {
            history.push_str(&format!("{k},{l}\n"));
        }
        let metrics = format!(
            "task = {task}\nnoise = {noise}\nseed = {s}\nfinal_loss = {}\ntrain_accuracy = {}\n",
            outcome.final_loss, outcome.train_accuracy
        );
        let stem = format!("train_{task}_{}_{s}", (noise * 1000.0).round() as u64);
        files.extend(write_artifacts(
            &common.out,
            &[
                Artifact { name: format!("weights_{task}_{}_{s}.txt", (noise * 1000.0).round() as u64), contents: wf.to_text() },
                Artifact { name: format!("{stem}_loss.csv"), contents: history },
                Artifact { name: format!("{stem}_metrics.txt"), contents: metrics },
            ],
        )?);
    }
    Ok(Outcome { seeds, files, code: EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn cmd_program(
    weights: &Path,
    kind: Option<&str>,
    d2d_seed: Option<u64>,
    no_reset: bool,
    tolerance: f64,
    strict: bool,
    seed: &str,
    test_noise: f64,
    n_test: usize,
    initial_state: &str,
    common: &Common,
) -> std::result::Result<Outcome, Failure> {
    let text = std::fs::read_to_string(weights).map_err(|e| invalid(format!("cannot read {}: {e}", weights.display())))?;
    let wf = WeightsFile::from_text(&text)?;
    let cfg = load_config(common)?;
    let initial: InitialState = initial_state.parse()?;
    let seeds = seeds_of(seed)?;
    let program = TrainConfig { reset_enabled: !no_reset, g_tolerance_rel: tolerance, ..cfg.program };
    program.validate()?;
    let (targets, biases) = map_weights(&wf.weights, program.v_read)?;
    let label = match (kind, d2d_seed) {
        (_, Some(d)) => format!("d2d{d}"),
        (Some(k), None) => k.parse::<DeviceKind>()?.to_string(),
        (None, None) => cfg.ideal_kind.to_string(),
    };
    let mut files = Vec::new();
    let mut code = EXIT_OK;
    for &s in &seeds {
        let mut net = match d2d_seed {
            Some(d) => d2d_network(&cfg.presets, d)?,
            None => CrossbarNetwork::uniform(cfg.presets.get(label.parse()?))?,
        };
        net.v_read = program.v_read;
        apply_initial_state(&mut net, initial, s);
        let report = program_network(&mut net, &targets, &biases, &program)?;
        let bad = report.non_converged().count();
        if bad > 0 {
            eprintln!("warning: {bad} cell(s) did not reach tolerance");
            if strict {
                code = EXIT_STRICT;
            }
        }
        let test = make_dataset(wf.task, n_test, test_noise, sub_seed(s, Stream::TestSet, (test_noise * 1000.0).round() as u64))?;
        let inf = run_inference(&net, &test, &program)?;
        let summary = format!(
            "network = {label}\nreset = {}\ntolerance = {tolerance}\nconverged = {}\nprogram_time_s = {}\nprogram_energy_J = {}\nprogram_cycles = {}\ntest_noise = {test_noise}\naccuracy = {}\ninference_time_s = {}\ninference_energy_per_item_J = {}\n",
            !no_reset,
            report.converged,
            report.total_time,
            report.total_energy,
            report.total_cycles(),
            inf.accuracy,
            inf.time,
            inf.energy_per_item
        );
        let stem = format!("program_{}_{label}_{}_{s}", wf.task, if no_reset { "noreset" } else { "reset" });
        files.extend(write_artifacts(
            &common.out,
            &[
                Artifact { name: format!("{stem}.csv"), contents: report.to_csv() },
                Artifact { name: format!("{stem}_summary.txt"), contents: summary },
                Artifact { name: format!("{stem}_network.txt"), contents: net.snapshot().to_text() },
            ],
        )?);
    }
    Ok(Outcome { seeds, files, code })
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    name: &str,
    seed: Option<&str>,
    no_reset: bool,
    tolerance: Option<f64>,
    kind: Option<&str>,
    strict: bool,
    common: &Common,
) -> std::result::Result<Outcome, Failure> {
    if !EXPERIMENTS.contains(&name) {
        return Err(Failure {
            code: EXIT_UNKNOWN_EXPERIMENT,
            message: format!("unknown experiment `{name}`; expected one of: {}", EXPERIMENTS.join(", ")),
        });
    }
    let mut cfg = load_config(common)?;
    if let Some(s) = seed {
        cfg.seeds = seeds_of(s)?;
    }
    if no_reset {
        cfg.program.reset_enabled = false;
    }
    if let Some(t) = tolerance {
        cfg.program.g_tolerance_rel = t;
    }
    if let Some(k) = kind {
        cfg.ideal_kind = k.parse()?;
    }
    if name == "fig9" {
        cfg.task = Task::TH;
    }
    cfg.validate()?;
    let (artifacts, non_converged) = with_pool(common.workers, || experiment_artifacts(name, &cfg))??;
    if non_converged > 0 {
        eprintln!("warning: {non_converged} programmed cell(s) did not reach tolerance");
    }
    let files = write_artifacts(&common.out, &artifacts)?;
    let code = if strict && non_converged > 0 { EXIT_STRICT } else { EXIT_OK };
    Ok(Outcome { seeds: cfg.seeds.clone(), files, code })
}

/// Artifacts of a named experiment and the number of non-converged cells.
pub fn experiment_artifacts(name: &str, cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, usize)> {
    match name {
        "fig7" => {
            let study = run_training_cycles_trace(cfg)?;
            let mut a = trace_artifacts(name, cfg.task, &study);
            let mut summary = String::from("kind,reset,cells,total_cycles,max_cycles,first_post_set_min_S,cycles_to_2.5mS\n");
            for s in &study.sets {
                let first = study.first_post_set_reads(s.kind, s.reset);
                let min_first = first.iter().copied().fold(f64::INFINITY, f64::min);
                let full = cycles_to_full_scale(&cfg.presets.get(s.kind), &TrainConfig { reset_enabled: s.reset, ..cfg.program })?;
                summary.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.kind,
                    if s.reset { "on" } else { "off" },
                    s.curves.len(),
                    s.report.total_cycles(),
                    s.curves.iter().map(|c| c.cycles()).max().unwrap_or(0),
                    if min_first.is_finite() { min_first.to_string() } else { String::new() },
                    full
                ));
            }
            a.push(Artifact { name: format!("{name}_{}_summary_{}.csv", cfg.task, study.seed), contents: summary });
            let nc = study.sets.iter().map(|s| s.report.non_converged().count()).sum();
            Ok((a, nc))
        }
        "fig8" | "fig9" => {
            let ms = run_accuracy_matrices(cfg, &Variant::ALL)?;
            let nc = ms.iter().map(|m| m.non_converged()).sum();
            Ok((matrix_artifacts(name, &ms, &cfg.seeds), nc))
        }
        "fig10" => {
            let sweep = run_conductance_error_sweep(cfg)?;
            let nc = sweep.matrices.iter().map(|m| m.non_converged()).sum();
            Ok((sweep_artifacts(name, cfg.task, &sweep, &cfg.seeds), nc))
        }
        "fig11" => {
            let table = run_reset_ablation(cfg)?;
            let nc = table.rows.iter().map(|r| r.non_converged).sum();
            Ok((ablation_artifacts(name, cfg.task, &table, &cfg.seeds), nc))
        }
        other => Err(Error::InvalidParam(format!("unknown experiment `{other}`"))),
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(Outcome, &'static str, Option<&Common>), Failure> {
    match &cli.command {
        Command::SweepIv { kind, amplitude, freq, cycles, dt, common } => {
            Ok((cmd_sweep_iv(kind, *amplitude, *freq, *cycles, *dt, common)?, "sweep-iv", Some(common)))
        }
        Command::Train { task, noise, seed, n_train, epochs, lr, common } => {
            Ok((cmd_train(task, *noise, seed, *n_train, *epochs, *lr, common)?, "train", Some(common)))
        }
        Command::Program {
            weights,
            kind,
            d2d_seed,
            reset: _,
            no_reset,
            tolerance,
            strict,
            seed,
            test_noise,
            n_test,
            initial_state,
            common,
        } => Ok((
            cmd_program(
                weights,
                kind.as_deref(),
                *d2d_seed,
                *no_reset,
                *tolerance,
                *strict,
                seed,
                *test_noise,
                *n_test,
                initial_state,
                common,
            )?,
            "program",
            Some(common),
        )),
        Command::Experiment { name, seed, no_reset, tolerance, kind, strict, common } => Ok((
            cmd_experiment(name, seed.as_deref(), *no_reset, *tolerance, kind.as_deref(), *strict, common)?,
            "experiment",
            Some(common),
        )),
        Command::Replay { .. } => unreachable!("handled by run"),
    }
}

/// Entry point shared by the binary and the tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Command::Replay { manifest } = &cli.command {
        return match std::fs::read_to_string(manifest).map_err(Error::from).and_then(|t| RunManifest::from_text(&t)) {
            Ok(m) => {
                let mut replay = vec!["memsim".to_string()];
                replay.extend(m.args);
                run(replay)
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INVALID
            }
        };
    }
    let started = Instant::now();
    match dispatch(&cli) {
        Ok((outcome, command, common)) => {
            let common = common.expect("every command has common flags");
            let manifest = RunManifest {
                command: command.to_string(),
                args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
                config: common.config.clone(),
                seeds: outcome.seeds,
                out: common.out.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_seconds: started.elapsed().as_secs_f64(),
                files: outcome.files,
            };
            if let Err(e) = std::fs::write(common.out.join("manifest.txt"), manifest.to_text()) {
                eprintln!("error: cannot write manifest: {e}");
                return EXIT_IO;
            }
            if outcome.code == EXIT_STRICT {
                eprintln!("error: non-converged cells under --strict");
            }
            outcome.code
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.code == EXIT_UNKNOWN_EXPERIMENT {
                use clap::CommandFactory;
                let _ = Cli::command().find_subcommand_mut("experiment").map(|c| c.print_help());
            }
            f.code
        }
    }
}
