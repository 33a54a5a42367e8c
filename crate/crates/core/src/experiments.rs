//! Scripted studies: accuracy matrices over train/test noise, the
//! programming-tolerance sweep, the reset ablation and per-cell programming
//! traces.
//!
//! Every random quantity is drawn from a sub-seed derived from a run seed
//! (see [`sub_seed`]), so results do not depend on scheduling: jobs run in
//! parallel and are reduced in a fixed order.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{make_dataset, Dataset, Task};
use crate::device::{DeviceKind, DeviceParams, MemristorState, Presets, CHROMIUM_JUMP_G, G_CAP};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::network::{Cell, CellId, CrossbarNetwork};
use crate::onchip::{program_memristor, program_network, program_network_traced, run_inference, TrainConfig, TrainingReport};
use crate::svg::{heatmap, line_plot, Series};
use crate::trainer::{evaluate_reference, map_weights, train_reference, Biases, TargetConductances, TrainHyper, TrainOutcome};

pub const NOISE_LEVELS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];
pub const TOLERANCES: [f64; 3] = [0.05, 0.10, 0.15];

/// Independent random streams hanging off one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    TrainSet = 1,
    TestSet = 2,
    TrainerInit = 3,
    D2dAssignment = 4,
    PriorState = 5,
}

/// Deterministic sub-seed: the first word of ChaCha8 stream
/// `(stream << 32) | index` keyed by `seed`.
pub fn sub_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | (index & 0xffff_ffff));
    rng.gen()
}

/// Noise levels are keyed by their value in per-mille so that the same level
/// always sees the same data, whatever list it appears in.
fn noise_key(p: f64) -> u64 {
    (p * 1000.0).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Software,
    IdealHardware,
    D2DHardware,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Software, Variant::IdealHardware, Variant::D2DHardware];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Software => "software",
            Variant::IdealHardware => "ideal",
            Variant::D2DHardware => "d2d",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "software" => Ok(Variant::Software),
            "ideal" => Ok(Variant::IdealHardware),
            "d2d" => Ok(Variant::D2DHardware),
            other => Err(Error::InvalidParam(format!("unknown variant `{other}`"))),
        }
    }
}

/// State of the crossbar before programming starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Every cell empty with its latch armed.
    Pristine,
    /// A previously used chip: per-cell x ~ U(0, 1) drawn from the run seed,
    /// first SET already spent.
    Used,
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pristine" => Ok(InitialState::Pristine),
            "used" => Ok(InitialState::Used),
            other => Err(Error::InvalidParam(format!("unknown initial_state `{other}`"))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialState::Pristine => "pristine",
            InitialState::Used => "used",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub train_noises: Vec<f64>,
    pub test_noises: Vec<f64>,
    /// Programming tolerances visited by the conductance-error sweep.
    pub tolerances: Vec<f64>,
    /// Preset used for every cell of the IdealHardware variant.
    pub ideal_kind: DeviceKind,
    /// Starting state of the accuracy-study networks.
    pub initial_state: InitialState,
    /// Starting state of the ablation and trace networks.
    pub ablation_initial_state: InitialState,
    /// Training noise of the network used by the ablation and trace studies.
    pub ablation_noise: f64,
    pub hyper: TrainHyper,
    /// Programming settings; `reset_enabled` and `g_tolerance_rel` here are
    /// the defaults for the accuracy studies.
    pub program: TrainConfig,
    pub presets: Presets,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::XO,
            n_train: 1000,
            n_test: 100,
            seeds: (0..5).collect(),
            train_noises: NOISE_LEVELS.to_vec(),
            test_noises: NOISE_LEVELS.to_vec(),
            tolerances: TOLERANCES.to_vec(),
            ideal_kind: DeviceKind::Carbon,
            initial_state: InitialState::Pristine,
            ablation_initial_state: InitialState::Used,
            ablation_noise: 0.15,
            hyper: TrainHyper::default(),
            program: TrainConfig::default(),
            presets: Presets::embedded(),
        }
    }
}

/// Keys accepted in an experiment config file.
pub const CONFIG_KEYS: [&str; 20] = [
    "task",
    "n_train",
    "n_test",
    "seeds",
    "train_noises",
    "test_noises",
    "tolerances",
    "tolerance",
    "reset",
    "ideal_kind",
    "initial_state",
    "ablation_initial_state",
    "ablation_noise",
    "epochs",
    "lr",
    "width_gain",
    "g_floor",
    "max_cycles",
    "dt_sub",
    "t_restore",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.n_train < 2 || self.n_test == 0 {
            return bad(format!("need n_train >= 2 and n_test > 0 (got {} / {})", self.n_train, self.n_test));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.train_noises.is_empty() || self.test_noises.is_empty() || self.tolerances.is_empty() {
            return bad("noise and tolerance lists must be non-empty".into());
        }
        for &p in self.train_noises.iter().chain(&self.test_noises).chain(std::iter::once(&self.ablation_noise)) {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("noise level {p} outside [0, 1]"));
            }
        }
        for &t in &self.tolerances {
            TrainConfig { g_tolerance_rel: t, ..self.program }.validate()?;
        }
        self.program.validate()?;
        self.presets.validate()
    }

    /// Overrides defaults with the keys present in `kv`; unknown keys are
    /// rejected so that typos do not silently fall back to defaults.
    pub fn from_kv(kv: &KvMap, presets: Presets) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Error::InvalidParam(format!("unknown config key `{k}`")));
        }
        let mut c = Self { presets, ..Self::default() };
        if let Some(s) = kv.get_str("task") {
            c.task = s.parse()?;
        }
        if let Some(v) = kv.get("n_train")? {
            c.n_train = v;
        }
        if let Some(v) = kv.get("n_test")? {
            c.n_test = v;
        }
        if let Some(v) = kv.get_list("seeds")? {
            c.seeds = v;
        }
        if let Some(v) = kv.get_list("train_noises")? {
            c.train_noises = v;
        }
        if let Some(v) = kv.get_list("test_noises")? {
            c.test_noises = v;
        }
        if let Some(v) = kv.get_list("tolerances")? {
            c.tolerances = v;
        }
        if let Some(v) = kv.get("tolerance")? {
            c.program.g_tolerance_rel = v;
        }
        if let Some(v) = kv.get("reset")? {
            c.program.reset_enabled = v;
        }
        if let Some(s) = kv.get_str("ideal_kind") {
            c.ideal_kind = s.parse()?;
        }
        if let Some(s) = kv.get_str("initial_state") {
            c.initial_state = s.parse()?;
        }
        if let Some(s) = kv.get_str("ablation_initial_state") {
            c.ablation_initial_state = s.parse()?;
        }
        if let Some(v) = kv.get("ablation_noise")? {
            c.ablation_noise = v;
        }
        if let Some(v) = kv.get("epochs")? {
            c.hyper.epochs = v;
        }
        if let Some(v) = kv.get("lr")? {
            c.hyper.lr = v;
        }
        if let Some(v) = kv.get("width_gain")? {
            c.program.width_gain = v;
        }
        if let Some(v) = kv.get("g_floor")? {
            c.program.g_floor = v;
        }
        if let Some(v) = kv.get("max_cycles")? {
            c.program.max_cycles = v;
        }
        if let Some(v) = kv.get("dt_sub")? {
            c.program.dt_sub = v;
        }
        if let Some(v) = kv.get("t_restore")? {
            c.program.t_restore = v;
        }
        c.validate()?;
        Ok(c)
    }

    /// The effective configuration in config-file form.
    pub fn to_kv(&self) -> KvMap {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut kv = KvMap::new();
        kv.insert("task", self.task);
        kv.insert("n_train", self.n_train);
        kv.insert("n_test", self.n_test);
        kv.insert("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        kv.insert("train_noises", list(&self.train_noises));
        kv.insert("test_noises", list(&self.test_noises));
        kv.insert("tolerances", list(&self.tolerances));
        kv.insert("tolerance", self.program.g_tolerance_rel);
        kv.insert("reset", self.program.reset_enabled);
        kv.insert("ideal_kind", self.ideal_kind);
        kv.insert("initial_state", self.initial_state);
        kv.insert("ablation_initial_state", self.ablation_initial_state);
        kv.insert("ablation_noise", self.ablation_noise);
        kv.insert("epochs", self.hyper.epochs);
        kv.insert("lr", self.hyper.lr);
        kv.insert("width_gain", self.program.width_gain);
        kv.insert("g_floor", self.program.g_floor);
        kv.insert("max_cycles", self.program.max_cycles);
        kv.insert("dt_sub", self.program.dt_sub);
        kv.insert("t_restore", self.program.t_restore);
        kv
    }

    pub fn train_set(&self, seed: u64, noise: f64) -> Result<Dataset> {
        make_dataset(self.task, self.n_train, noise, sub_seed(seed, Stream::TrainSet, noise_key(noise)))
    }

    pub fn test_set(&self, seed: u64, noise: f64) -> Result<Dataset> {
        make_dataset(self.task, self.n_test, noise, sub_seed(seed, Stream::TestSet, noise_key(noise)))
    }
}

/// One reference model trained for a (seed, train noise) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub seed: u64,
    pub train_noise: f64,
    pub outcome: TrainOutcome,
    pub targets: TargetConductances,
    pub biases: Biases,
}

pub fn train_model(cfg: &ExperimentConfig, seed: u64, noise: f64) -> Result<TrainedModel> {
    let data = cfg.train_set(seed, noise)?;
    let hyper = TrainHyper { seed: sub_seed(seed, Stream::TrainerInit, 0), ..cfg.hyper };
    let outcome = train_reference(&data, &hyper)?;
    let (targets, biases) = map_weights(&outcome.weights, cfg.program.v_read)?;
    Ok(TrainedModel { seed, train_noise: noise, outcome, targets, biases })
}

/// Models for every (seed, train noise), seed-major. Training failures are
/// kept per entry so one bad cell does not abort a matrix.
pub fn train_models(cfg: &ExperimentConfig) -> Vec<Result<TrainedModel>> {
    let jobs: Vec<(u64, f64)> =
        cfg.seeds.iter().flat_map(|&s| cfg.train_noises.iter().map(move |&p| (s, p))).collect();
    jobs.par_iter().map(|&(s, p)| train_model(cfg, s, p)).collect()
}

/// Per-cell device kinds of the D2D variant (CellId::all order): uniform over
/// the three presets, independent per cell, fixed per seed.
pub fn d2d_assignment(seed: u64) -> Vec<DeviceKind> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, Stream::D2dAssignment, 0));
    CellId::all().map(|_| DeviceKind::ALL[rng.gen_range(0..3)]).collect()
}

/// Network whose cells use presets drawn by [`d2d_assignment`].
pub fn d2d_network(presets: &Presets, seed: u64) -> Result<CrossbarNetwork> {
    let kinds = d2d_assignment(seed);
    let ids: Vec<CellId> = CellId::all().collect();
    CrossbarNetwork::from_fn(|id| {
        let k = ids.iter().position(|c| *c == id).expect("known cell id");
        presets.get(kinds[k])
    })
}

/// Puts every cell into the configured starting state for `seed`.
pub fn apply_initial_state(net: &mut CrossbarNetwork, initial: InitialState, seed: u64) {
    if initial == InitialState::Pristine {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, Stream::PriorState, 0));
    for id in CellId::all() {
        net.cell_mut(id).state = MemristorState { x: rng.gen::<f64>(), has_set: true };
    }
}

/// Unprogrammed crossbar for a hardware variant (None for Software).
pub fn build_network(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<Option<CrossbarNetwork>> {
    let mut net = match variant {
        Variant::Software => return Ok(None),
        Variant::IdealHardware => CrossbarNetwork::uniform(cfg.presets.get(cfg.ideal_kind))?,
        Variant::D2DHardware => d2d_network(&cfg.presets, seed)?,
    };
    net.v_read = cfg.program.v_read;
    apply_initial_state(&mut net, cfg.initial_state, seed);
    Ok(Some(net))
}

/// Raw outcome of one (seed, train noise) cell row of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRun {
    pub seed: u64,
    pub train_noise: f64,
    /// Accuracy per test noise; empty when the run failed.
    pub accuracies: Vec<f64>,
    pub report: Option<TrainingReport>,
    pub error: Option<String>,
}

impl MatrixRun {
    pub fn non_converged(&self) -> usize {
        self.report.as_ref().map_or(0, |r| r.non_converged().count())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    pub variant: Variant,
    pub task: Task,
    pub tolerance: f64,
    pub train_noises: Vec<f64>,
    pub test_noises: Vec<f64>,
    /// Seed means, `values[train][test]`. NaN where no run succeeded.
    pub values: Vec<Vec<f64>>,
    pub runs: Vec<MatrixRun>,
}

fn find(levels: &[f64], p: f64) -> Option<usize> {
    levels.iter().position(|&q| (q - p).abs() < 1e-12)
}

impl AccuracyMatrix {
    /// Mean accuracy at (train noise, test noise), if both levels exist.
    pub fn at(&self, train_noise: f64, test_noise: f64) -> Option<f64> {
        Some(self.values[find(&self.train_noises, train_noise)?][find(&self.test_noises, test_noise)?])
    }

    pub fn non_converged(&self) -> usize {
        self.runs.iter().map(MatrixRun::non_converged).sum()
    }

    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn reports(&self) -> impl Iterator<Item = &TrainingReport> {
        self.runs.iter().filter_map(|r| r.report.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.train_noises.len()
            || self.values.iter().any(|r| r.len() != self.test_noises.len())
        {
            return Err(Error::Dimension { expected: self.train_noises.len(), got: self.values.len() });
        }
        if let Some(v) = self.values.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParam(format!("accuracy {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// `train_noise,test_noise,accuracy` seed means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_noise,test_noise,accuracy\n");
        for (i, p) in self.train_noises.iter().enumerate() {
            for (j, q) in self.test_noises.iter().enumerate() {
                let _ = writeln!(out, "{p},{q},{}", self.values[i][j]);
            }
        }
        out
    }

    /// Raw per-seed values for one seed.
    pub fn seed_csv(&self, seed: u64) -> String {
        let mut out = String::from("seed,train_noise,test_noise,accuracy,non_converged_cells,error\n");
        for r in self.runs.iter().filter(|r| r.seed == seed) {
            let err = r.error.as_deref().unwrap_or("").replace(',', ";");
            if r.accuracies.is_empty() {
                let _ = writeln!(out, "{seed},{},,,{},{err}", r.train_noise, r.non_converged());
            }
            for (q, a) in self.test_noises.iter().zip(&r.accuracies) {
                let _ = writeln!(out, "{seed},{},{q},{a},{},{err}", r.train_noise, r.non_converged());
            }
        }
        out
    }

    pub fn to_svg(&self, title: &str) -> String {
        let rows: Vec<String> = self.train_noises.iter().map(|p| format!("train {p}")).collect();
        let cols: Vec<String> = self.test_noises.iter().map(|q| format!("test {q}")).collect();
        heatmap(title, &rows, &cols, &self.values, 0.5, 1.0)
    }
}

fn seed_means(
    cfg: &ExperimentConfig,
    runs: &[MatrixRun],
) -> Vec<Vec<f64>> {
    cfg.train_noises
        .iter()
        .map(|&p| {
            (0..cfg.test_noises.len())
                .map(|j| {
                    let vals: Vec<f64> = runs
                        .iter()
                        .filter(|r| r.train_noise == p && !r.accuracies.is_empty())
                        .map(|r| r.accuracies[j])
                        .collect();
                    if vals.is_empty() {
                        f64::NAN
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    }
                })
                .collect()
        })
        .collect()
}

fn evaluate_run(
    cfg: &ExperimentConfig,
    model: &Result<TrainedModel>,
    seed: u64,
    train_noise: f64,
    variant: Variant,
    program: &TrainConfig,
    tests: &[Dataset],
) -> MatrixRun {
    let mut run = MatrixRun { seed, train_noise, accuracies: Vec::new(), report: None, error: None };
    let m = match model {
        Ok(m) => m,
        Err(e) => {
            run.error = Some(e.to_string());
            return run;
        }
    };
    let res: Result<()> = (|| {
        match build_network(cfg, variant, seed)? {
            None => {
                for t in tests {
                    run.accuracies.push(evaluate_reference(&m.outcome.weights, t)?);
                }
            }
            Some(mut net) => {
                let report = program_network(&mut net, &m.targets, &m.biases, program)?;
                for t in tests {
                    run.accuracies.push(run_inference(&net, t, program)?.accuracy);
                }
                run.report = Some(report);
            }
        }
        Ok(())
    })();
    if let Err(e) = res {
        run.accuracies.clear();
        run.error = Some(e.to_string());
    }
    run
}

fn matrices_from_models(
    cfg: &ExperimentConfig,
    models: &[Result<TrainedModel>],
    variants: &[Variant],
    tolerance: f64,
) -> Result<Vec<AccuracyMatrix>> {
    let program = TrainConfig { g_tolerance_rel: tolerance, ..cfg.program };
    program.validate()?;
    let tests: Vec<Vec<Dataset>> = cfg
        .seeds
        .iter()
        .map(|&s| cfg.test_noises.iter().map(|&q| cfg.test_set(s, q)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let n_noise = cfg.train_noises.len();
    let jobs: Vec<(usize, usize)> = (0..variants.len()).flat_map(|v| (0..models.len()).map(move |m| (v, m))).collect();
    let runs: Vec<MatrixRun> = jobs
        .par_iter()
        .map(|&(v, m)| {
            let (si, pi) = (m / n_noise, m % n_noise);
            evaluate_run(cfg, &models[m], cfg.seeds[si], cfg.train_noises[pi], variants[v], &program, &tests[si])
        })
        .collect();
    Ok(variants
        .iter()
        .enumerate()
        .map(|(v, &variant)| {
            let runs: Vec<MatrixRun> = runs[v * models.len()..(v + 1) * models.len()].to_vec();
            AccuracyMatrix {
                variant,
                task: cfg.task,
                tolerance,
                train_noises: cfg.train_noises.clone(),
                test_noises: cfg.test_noises.clone(),
                values: seed_means(cfg, &runs),
                runs,
            }
        })
        .collect())
}

/// Several variants sharing the same trained models and test sets.
pub fn run_accuracy_matrices(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<AccuracyMatrix>> {
    cfg.validate()?;
    let models = train_models(cfg);
    matrices_from_models(cfg, &models, variants, cfg.program.g_tolerance_rel)
}

pub fn run_accuracy_matrix(cfg: &ExperimentConfig, variant: Variant) -> Result<AccuracyMatrix> {
    Ok(run_accuracy_matrices(cfg, &[variant])?.remove(0))
}

/// IdealHardware matrices at each programming tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSweep {
    pub tolerances: Vec<f64>,
    pub matrices: Vec<AccuracyMatrix>,
}

impl ToleranceSweep {
    /// `values[k] − values[0]` per cell (negative = accuracy lost).
    pub fn delta(&self, k: usize) -> Vec<Vec<f64>> {
        let base = &self.matrices[0].values;
        self.matrices[k]
            .values
            .iter()
            .zip(base)
            .map(|(r, b)| r.iter().zip(b).map(|(v, b)| v - b).collect())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tolerance,train_noise,test_noise,accuracy,delta_vs_base\n");
        for (k, m) in self.matrices.iter().enumerate() {
            let d = self.delta(k);
            for (i, p) in m.train_noises.iter().enumerate() {
                for (j, q) in m.test_noises.iter().enumerate() {
                    let _ = writeln!(out, "{},{p},{q},{},{}", self.tolerances[k], m.values[i][j], d[i][j]);
                }
            }
        }
        out
    }
}

pub fn run_conductance_error_sweep(cfg: &ExperimentConfig) -> Result<ToleranceSweep> {
    cfg.validate()?;
    let models = train_models(cfg);
    let mut matrices = Vec::with_capacity(cfg.tolerances.len());
    for &t in &cfg.tolerances {
        matrices.extend(matrices_from_models(cfg, &models, &[Variant::IdealHardware], t)?);
    }
    Ok(ToleranceSweep { tolerances: cfg.tolerances.clone(), matrices })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub kind: DeviceKind,
    pub reset: bool,
    /// Seed means.
    pub cycles: f64,
    pub time: f64,
    pub energy: f64,
    pub non_converged: usize,
    pub reports: Vec<TrainingReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Kind-major: carbon on, carbon off, tungsten on, ...
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, kind: DeviceKind, reset: bool) -> &AblationRow {
        self.rows.iter().find(|r| r.kind == kind && r.reset == reset).expect("all six settings present")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,reset,cycles,time_s,energy_J,non_converged_cells\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{}",
                r.kind,
                if r.reset { "on" } else { "off" },
                r.cycles,
                r.time,
                r.energy,
                r.non_converged
            );
        }
        out
    }
}

/// Network used by the ablation and trace studies for one seed.
pub fn ablation_model(cfg: &ExperimentConfig, seed: u64) -> Result<TrainedModel> {
    train_model(cfg, seed, cfg.ablation_noise)
}

fn hardware_for(cfg: &ExperimentConfig, kind: DeviceKind, seed: u64) -> Result<CrossbarNetwork> {
    let mut net = CrossbarNetwork::uniform(cfg.presets.get(kind))?;
    net.v_read = cfg.program.v_read;
    apply_initial_state(&mut net, cfg.ablation_initial_state, seed);
    Ok(net)
}

/// Programs identical targets (and identical starting states) under every
/// kind × reset setting; values are averaged over the configured seeds.
pub fn run_reset_ablation(cfg: &ExperimentConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let models: Vec<TrainedModel> =
        cfg.seeds.par_iter().map(|&s| ablation_model(cfg, s)).collect::<Result<_>>()?;
    let settings: Vec<(DeviceKind, bool)> =
        DeviceKind::ALL.iter().flat_map(|&k| [(k, true), (k, false)]).collect();
    let rows = settings
        .par_iter()
        .map(|&(kind, reset)| {
            let program = TrainConfig { reset_enabled: reset, ..cfg.program };
            let reports = models
                .iter()
                .map(|m| {
                    let mut net = hardware_for(cfg, kind, m.seed)?;
                    program_network(&mut net, &m.targets, &m.biases, &program)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = reports.len() as f64;
            Ok(AblationRow {
                kind,
                reset,
                cycles: reports.iter().map(|r| r.total_cycles() as f64).sum::<f64>() / n,
                time: reports.iter().map(|r| r.total_time).sum::<f64>() / n,
                energy: reports.iter().map(|r| r.total_energy).sum::<f64>() / n,
                non_converged: reports.iter().map(|r| r.non_converged().count()).sum(),
                reports,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

/// Conductance-vs-cycle curve of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCurve {
    pub id: CellId,
    pub target: f64,
    /// Read values: the first read, then one per pulse.
    pub reads: Vec<f64>,
}

impl CellCurve {
    pub fn cycles(&self) -> usize {
        self.reads.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub kind: DeviceKind,
    pub reset: bool,
    pub curves: Vec<CellCurve>,
    pub report: TrainingReport,
}

impl CurveSet {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,row,col,target_S,cycle,g_S\n");
        for c in &self.curves {
            for (k, g) in c.reads.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{:e},{k},{g:e}", c.id.layer, c.id.row, c.id.col, c.target);
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let series: Vec<Series> = self
            .curves
            .iter()
            .map(|c| {
                Series::new(
                    format!("L{} {}-{}", c.id.layer, c.id.row, c.id.col),
                    c.reads.iter().enumerate().map(|(k, g)| (k as f64, g * 1e3)).collect(),
                )
            })
            .collect();
        let title = format!("{} programming, reset {}", self.kind, if self.reset { "on" } else { "off" });
        line_plot(&title, "training cycle", "conductance (mS)", &series)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStudy {
    pub seed: u64,
    pub sets: Vec<CurveSet>,
}

impl TraceStudy {
    pub fn get(&self, kind: DeviceKind, reset: bool) -> &CurveSet {
        self.sets.iter().find(|s| s.kind == kind && s.reset == reset).expect("all six settings present")
    }

    /// Reads taken right after a first forward pulse, for cells whose first
    /// pulse was forward.
    pub fn first_post_set_reads(&self, kind: DeviceKind, reset: bool) -> Vec<f64> {
        self.get(kind, reset)
            .curves
            .iter()
            .filter(|c| c.reads.len() >= 2 && c.reads[0] < c.target)
            .map(|c| c.reads[1])
            .collect()
    }

    /// Fraction of cells whose cycle count with reset is ≤ the count without.
    pub fn reset_not_worse_fraction(&self, kind: DeviceKind) -> f64 {
        let on = &self.get(kind, true).curves;
        let off = &self.get(kind, false).curves;
        let n = on.len().min(off.len());
        if n == 0 {
            return 1.0;
        }
        on.iter().zip(off).filter(|(a, b)| a.cycles() <= b.cycles()).count() as f64 / n as f64
    }
}

/// Per-cell programming curves for all kinds, with and without reset, on the
/// first configured seed.
pub fn run_training_cycles_trace(cfg: &ExperimentConfig) -> Result<TraceStudy> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let model = ablation_model(cfg, seed)?;
    let settings: Vec<(DeviceKind, bool)> =
        DeviceKind::ALL.iter().flat_map(|&k| [(k, true), (k, false)]).collect();
    let sets = settings
        .par_iter()
        .map(|&(kind, reset)| {
            let program = TrainConfig { reset_enabled: reset, ..cfg.program };
            let mut net = hardware_for(cfg, kind, seed)?;
            let mut traces = Vec::new();
            let report = program_network_traced(&mut net, &model.targets, &model.biases, &program, Some(&mut traces))?;
            let curves = traces
                .into_iter()
                .map(|(id, reads)| {
                    let target = report.per_cell.iter().find(|c| c.id == id).map_or(0.0, |c| c.outcome.target_g);
                    CellCurve { id, target, reads }
                })
                .collect();
            Ok(CurveSet { kind, reset, curves, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceStudy { seed, sets })
}

/// Programming cycles needed to take a pristine device to the 2.5 mS cap.
pub fn cycles_to_full_scale(params: &DeviceParams, program: &TrainConfig) -> Result<u32> {
    let mut cell = Cell::pristine(*params);
    match program_memristor(&mut cell, G_CAP, program) {
        Ok(o) => Ok(o.cycles),
        Err(Error::NonConvergent(o)) => Ok(o.cycles),
        Err(e) => Err(e),
    }
}

/// True when the jump floor is visible: g ≥ 0.5 mS.
pub fn shows_chromium_jump(g: f64) -> bool {
    g >= CHROMIUM_JUMP_G * (1.0 - 1e-9)
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: String, contents: String) -> Self {
        Self { name, contents }
    }
}

/// Files for a set of matrices: per-seed raw CSVs, seed-mean CSVs and heatmaps,
/// named `{experiment}_{task}_{variant}_{seed|mean}`.
pub fn matrix_artifacts(experiment: &str, matrices: &[AccuracyMatrix], seeds: &[u64]) -> Vec<Artifact> {
    let mut out = Vec::new();
    for m in matrices {
        let stem = format!("{experiment}_{}_{}", m.task, m.variant);
        for &s in seeds {
            out.push(Artifact::new(format!("{stem}_{s}.csv"), m.seed_csv(s)));
        }
        out.push(Artifact::new(format!("{stem}_mean.csv"), m.to_csv()));
        out.push(Artifact::new(
            format!("{stem}_mean.svg"),
            m.to_svg(&format!("{} accuracy, {} (tolerance {})", m.variant, m.task, m.tolerance)),
        ));
        for r in &m.runs {
            if let Some(rep) = &r.report {
                out.push(Artifact::new(
                    format!("{stem}_{}_program_train{}.csv", r.seed, noise_key(r.train_noise)),
                    rep.to_csv(),
                ));
            }
        }
    }
    out
}

pub fn sweep_artifacts(experiment: &str, task: Task, sweep: &ToleranceSweep, seeds: &[u64]) -> Vec<Artifact> {
    let mut out = Vec::new();
    for m in &sweep.matrices {
        let stem = format!("{experiment}_{task}_tol{}", noise_key(m.tolerance));
        for &s in seeds {
            out.push(Artifact::new(format!("{stem}_{s}.csv"), m.seed_csv(s)));
        }
        out.push(Artifact::new(format!("{stem}_mean.csv"), m.to_csv()));
        out.push(Artifact::new(
            format!("{stem}_mean.svg"),
            m.to_svg(&format!("ideal accuracy, {task}, tolerance {}", m.tolerance)),
        ));
    }
    out.push(Artifact::new(format!("{experiment}_{task}_sweep_mean.csv"), sweep.to_csv()));
    out
}

pub fn ablation_artifacts(experiment: &str, task: Task, table: &AblationTable, seeds: &[u64]) -> Vec<Artifact> {
    let mut out = vec![Artifact::new(format!("{experiment}_{task}_ablation_mean.csv"), table.to_csv())];
    for r in &table.rows {
        let setting = format!("{}-{}", r.kind, if r.reset { "reset" } else { "noreset" });
        for (rep, s) in r.reports.iter().zip(seeds) {
            out.push(Artifact::new(format!("{experiment}_{task}_{setting}_{s}.csv"), rep.to_csv()));
        }
    }
    let bars = |f: fn(&AblationRow) -> f64| -> Vec<Series> {
        [true, false]
            .iter()
            .map(|&reset| {
                Series::new(
                    if reset { "reset on" } else { "reset off" },
                    DeviceKind::ALL.iter().enumerate().map(|(k, &kind)| (k as f64, f(table.get(kind, reset)))).collect(),
                )
            })
            .collect()
    };
    out.push(Artifact::new(
        format!("{experiment}_{task}_ablation_time.svg"),
        line_plot("training time (0 carbon, 1 tungsten, 2 chromium)", "device kind", "time (s)", &bars(|r| r.time)),
    ));
    out.push(Artifact::new(
        format!("{experiment}_{task}_ablation_energy.svg"),
        line_plot("training energy (0 carbon, 1 tungsten, 2 chromium)", "device kind", "energy (J)", &bars(|r| r.energy)),
    ));
    out
}

pub fn trace_artifacts(experiment: &str, task: Task, study: &TraceStudy) -> Vec<Artifact> {
    let mut out = Vec::new();
    for s in &study.sets {
        let stem = format!(
            "{experiment}_{task}_{}-{}_{}",
            s.kind,
            if s.reset { "reset" } else { "noreset" },
            study.seed
        );
        out.push(Artifact::new(format!("{stem}.csv"), s.to_csv()));
        out.push(Artifact::new(format!("{stem}.svg"), s.to_svg()));
    }
    out
}
