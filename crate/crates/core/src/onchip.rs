//! Closed-loop write-verify programming (reset → read → ΔG → pulse, repeat)
//! and inference-phase pulse accounting.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::device::{
    apply_pulse, read_conductance, read_energy, Pulse, DEFAULT_T_READ, DEFAULT_V_READ, G_CAP,
    MAX_PULSE_AMPLITUDE,
};
use crate::error::{ensure_finite, Error, Result};
use crate::network::{classify, forward_trace, Cell, CellId, CrossbarNetwork, N_HIDDEN, N_INPUTS};
use crate::trainer::{Biases, TargetConductances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub reset_enabled: bool,
    pub reset_pulse: Pulse,
    /// Forward amplitude after the driver divider, volts.
    pub pot_amplitude: f64,
    /// Reverse amplitude after the driver divider, volts.
    pub dep_amplitude: f64,
    pub series_resistance: f64,
    pub g_tolerance_rel: f64,
    pub width_min: f64,
    pub width_max: f64,
    /// Proportional constant of the pulse-width law, seconds. Small enough
    /// that the shortest reverse pulse cannot overshoot a tolerance band.
    pub width_gain: f64,
    /// Lower bound on the normaliser of the width law, siemens.
    pub g_floor: f64,
    pub max_cycles: u32,
    pub v_read: f64,
    pub t_read: f64,
    /// Width of the post-read restore pulse during inference.
    pub t_restore: f64,
    /// Integration substep for pulses.
    pub dt_sub: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reset_enabled: true,
            reset_pulse: Pulse { amplitude: -0.5, width: 0.2, series_resistance: 1000.0 },
            pot_amplitude: 1.0,
            dep_amplitude: -0.5,
            series_resistance: 1000.0,
            g_tolerance_rel: 0.05,
            width_min: 1e-3,
            width_max: 0.05,
            width_gain: 0.005,
            g_floor: 1e-6,
            max_cycles: 10_000,
            v_read: DEFAULT_V_READ,
            t_read: DEFAULT_T_READ,
            t_restore: 0.05,
            dt_sub: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.reset_pulse.validate()?;
        for (v, name) in [
            (self.pot_amplitude, "pot_amplitude"),
            (self.dep_amplitude, "dep_amplitude"),
            (self.series_resistance, "series_resistance"),
            (self.g_tolerance_rel, "g_tolerance_rel"),
            (self.width_min, "width_min"),
            (self.width_max, "width_max"),
            (self.width_gain, "width_gain"),
            (self.g_floor, "g_floor"),
            (self.v_read, "v_read"),
            (self.t_read, "t_read"),
            (self.t_restore, "t_restore"),
            (self.dt_sub, "dt_sub"),
        ] {
            ensure_finite(v, name)?;
        }
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if !(self.width_min > 0.0 && self.width_min <= self.width_max) {
            return bad("need 0 < width_min <= width_max");
        }
        if !(self.g_tolerance_rel > 0.0 && self.g_tolerance_rel < 0.5) {
            return bad("g_tolerance_rel must lie in (0, 0.5)");
        }
        if self.pot_amplitude <= 0.0 || self.dep_amplitude >= 0.0 {
            return bad("pot_amplitude must be positive and dep_amplitude negative");
        }
        if self.pot_amplitude.abs() > MAX_PULSE_AMPLITUDE || self.dep_amplitude.abs() > MAX_PULSE_AMPLITUDE {
            return bad("pulse amplitudes must stay within the 5 V supply");
        }
        if self.series_resistance < 0.0 || self.width_gain <= 0.0 || self.g_floor <= 0.0 {
            return bad("series_resistance >= 0, width_gain > 0 and g_floor > 0 required");
        }
        if self.t_read <= 0.0 || self.t_restore < 0.0 || self.v_read <= 0.0 {
            return bad("read timing and level must be positive");
        }
        if self.dt_sub <= 0.0 || self.dt_sub > self.width_min {
            return bad("dt_sub must lie in (0, width_min]");
        }
        if self.max_cycles == 0 {
            return bad("max_cycles must be >= 1");
        }
        Ok(())
    }

    /// Pulse chosen by the width law for the current error.
    pub fn pulse_for(&self, delta_g: f64, target_g: f64) -> Pulse {
        let width = (self.width_gain * delta_g.abs() / target_g.max(self.g_floor))
            .clamp(self.width_min, self.width_max);
        let amplitude = if delta_g > 0.0 { self.pot_amplitude } else { self.dep_amplitude };
        Pulse { amplitude, width, series_resistance: self.series_resistance }
    }
}

/// Result of programming one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome {
    pub target_g: f64,
    pub final_g: f64,
    /// Number of programming pulses applied.
    pub cycles: u32,
    pub time: f64,
    pub energy: f64,
    pub converged: bool,
    pub reset_applied: bool,
}

/// Programs one cell toward `target_g`. Returns `Error::NonConvergent` with
/// the partial outcome if `max_cycles` pulses do not reach tolerance; the
/// cell keeps whatever state programming left it in.
pub fn program_memristor(cell: &mut Cell, target_g: f64, cfg: &TrainConfig) -> Result<CellOutcome> {
    program_memristor_traced(cell, target_g, cfg, None)
}

/// As [`program_memristor`], additionally recording every read value
/// (the initial read, then one per applied pulse).
pub fn program_memristor_traced(
    cell: &mut Cell,
    target_g: f64,
    cfg: &TrainConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<CellOutcome> {
    cfg.validate()?;
    ensure_finite(target_g, "target conductance")?;
    if !(0.0..=G_CAP).contains(&target_g) {
        return Err(Error::InvalidTarget(target_g));
    }
    let mut out = CellOutcome {
        target_g,
        final_g: cell.conductance(),
        cycles: 0,
        time: 0.0,
        energy: 0.0,
        converged: true,
        reset_applied: false,
    };
    if target_g == 0.0 {
        return Ok(out);
    }
    if cfg.reset_enabled {
        let (s, e) = apply_pulse(&cell.params, &cell.state, &cfg.reset_pulse, cfg.dt_sub)?;
        cell.state = s;
        out.time += cfg.reset_pulse.width;
        out.energy += e;
        out.reset_applied = true;
    }
    let tol = cfg.g_tolerance_rel * target_g;
    loop {
        let g = read_conductance(&cell.params, &cell.state, cfg.v_read, cfg.t_read)?;
        out.time += cfg.t_read;
        out.energy += read_energy(g, cfg.v_read, cfg.t_read);
        out.final_g = g;
        if let Some(t) = trace.as_deref_mut() {
            t.push(g);
        }
        let delta = target_g - g;
        if delta.abs() <= tol {
            out.converged = true;
            return Ok(out);
        }
        if out.cycles >= cfg.max_cycles {
            out.converged = false;
            return Err(Error::NonConvergent(out));
        }
        let pulse = cfg.pulse_for(delta, target_g);
        let (s, e) = apply_pulse(&cell.params, &cell.state, &pulse, cfg.dt_sub)?;
        cell.state = s;
        out.cycles += 1;
        out.time += pulse.width;
        out.energy += e;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellReport {
    pub id: CellId,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub per_cell: Vec<CellReport>,
    pub total_time: f64,
    pub total_energy: f64,
    pub converged: bool,
}

impl TrainingReport {
    pub fn total_cycles(&self) -> u64 {
        self.per_cell.iter().map(|c| c.outcome.cycles as u64).sum()
    }

    pub fn non_converged(&self) -> impl Iterator<Item = &CellReport> {
        self.per_cell.iter().filter(|c| !c.outcome.converged)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,row,col,target_S,final_S,cycles,time_s,energy_J\n");
        for c in &self.per_cell {
            let o = &c.outcome;
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{},{:e},{:e}",
                c.id.layer, c.id.row, c.id.col, o.target_g, o.final_g, o.cycles, o.time, o.energy
            );
        }
        let _ = writeln!(
            out,
            "total,,,,,{},{:e},{:e}",
            self.total_cycles(),
            self.total_time,
            self.total_energy
        );
        out
    }
}

fn target_of(t: &TargetConductances, id: CellId) -> f64 {
    match id.layer {
        1 => t.g1[id.row][id.col],
        _ => t.g2[id.row],
    }
}

/// Programs all 30 cells one at a time and installs the biases.
pub fn program_network(
    net: &mut CrossbarNetwork,
    targets: &TargetConductances,
    biases: &Biases,
    cfg: &TrainConfig,
) -> Result<TrainingReport> {
    program_network_traced(net, targets, biases, cfg, None)
}

/// As [`program_network`], collecting each cell's read trace.
pub fn program_network_traced(
    net: &mut CrossbarNetwork,
    targets: &TargetConductances,
    biases: &Biases,
    cfg: &TrainConfig,
    mut traces: Option<&mut Vec<(CellId, Vec<f64>)>>,
) -> Result<TrainingReport> {
    cfg.validate()?;
    targets.validate()?;
    net.validate()?;
    let mut per_cell = Vec::with_capacity(N_INPUTS * N_HIDDEN + N_HIDDEN);
    for id in CellId::all() {
        let target = target_of(targets, id);
        let mut trace = Vec::new();
        let rec = traces.is_some().then_some(&mut trace);
        let outcome = match program_memristor_traced(net.cell_mut(id), target, cfg, rec) {
            Ok(o) => o,
            Err(Error::NonConvergent(o)) => o,
            Err(e) => return Err(e),
        };
        if let Some(t) = traces.as_deref_mut() {
            if target > 0.0 {
                t.push((id, trace));
            }
        }
        per_cell.push(CellReport { id, outcome });
    }
    net.set_biases(biases.hidden, biases.out)?;
    let total_time = per_cell.iter().map(|c| c.outcome.time).sum();
    let total_energy = per_cell.iter().map(|c| c.outcome.energy).sum();
    let converged = per_cell.iter().all(|c| c.outcome.converged);
    Ok(TrainingReport { per_cell, total_time, total_energy, converged })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub time: f64,
    pub energy: f64,
    pub energy_per_item: f64,
    pub read_pulses: usize,
    pub restore_pulses: usize,
}

/// Classifies every item: one read pulse pattern (active pixels at `v_read`,
/// hidden voltages on layer 2), then an equal-magnitude restore pulse. Both
/// are sub-threshold on layer 1 and are charged ohmically; the network state
/// is not modified.
pub fn run_inference(net: &CrossbarNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<InferenceReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    net.validate()?;
    let g1 = net.g1();
    let g2 = net.g2();
    let mut correct = 0;
    let mut energy = 0.0;
    for item in &data.items {
        let tr = forward_trace(net, &item.pixels);
        if classify(tr.output) == item.label {
            correct += 1;
        }
        let v2 = net.v_read * net.v_read;
        let mut p_read: f64 = (0..N_INPUTS)
            .filter(|&i| item.pixels[i])
            .flat_map(|i| g1[i].iter())
            .map(|g| v2 * g)
            .sum();
        p_read += (0..N_HIDDEN).map(|j| tr.hidden[j] * tr.hidden[j] * g2[j]).sum::<f64>();
        energy += p_read * (cfg.t_read + cfg.t_restore);
    }
    let n = data.len();
    Ok(InferenceReport {
        accuracy: correct as f64 / n as f64,
        correct,
        total: n,
        time: n as f64 * (cfg.t_read + cfg.t_restore),
        energy,
        energy_per_item: energy / n as f64,
        read_pulses: n,
        restore_pulses: n,
    })
}
