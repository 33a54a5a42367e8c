//! Threshold-driven behavioral memristor model.
//!
//! The internal state `x ∈ [0, 1]` maps linearly onto conductance. Above the
//! SET threshold the state grows, below the negative RESET threshold it
//! shrinks, and in between nothing moves (ohmic dead zone). Chromium carries a
//! one-shot state floor applied on the first SET event after a reset; the
//! latch re-arms only after a sustained reverse pulse empties the channel.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{ensure_finite, Error, Result};
use crate::kv::KvMap;

/// Enforced conductance ceiling for every cell (2.5 mS).
pub const G_CAP: f64 = 2.5e-3;
/// Largest |amplitude| accepted for I-V sweeps.
pub const SAFE_SWEEP_AMPLITUDE: f64 = 0.75;
/// Largest |amplitude| the pulse driver can produce.
pub const MAX_PULSE_AMPLITUDE: f64 = 5.0;
/// Conductance reached by the Chromium first-SET jump.
pub const CHROMIUM_JUMP_G: f64 = 0.5e-3;
/// A sustained reverse pulse that leaves `x` at or below this re-arms the
/// first-SET latch.
pub const HRS_LATCH_X: f64 = 0.05;
/// Minimum width of a reverse pulse that can re-arm the first-SET latch.
/// Programming pulses are at most 50 ms; the reset pulse is 200 ms.
pub const LATCH_REARM_WIDTH: f64 = 0.1;
pub const DEFAULT_V_READ: f64 = 0.1;
pub const DEFAULT_T_READ: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceKind {
    Carbon,
    Tungsten,
    Chromium,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 3] = [DeviceKind::Carbon, DeviceKind::Tungsten, DeviceKind::Chromium];

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Carbon => "carbon",
            DeviceKind::Tungsten => "tungsten",
            DeviceKind::Chromium => "chromium",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "carbon" | "c" => Ok(DeviceKind::Carbon),
            "tungsten" | "w" => Ok(DeviceKind::Tungsten),
            "chromium" | "cr" => Ok(DeviceKind::Chromium),
            other => Err(Error::InvalidParam(format!(
                "unknown device kind `{other}` (expected carbon, tungsten or chromium)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub kind: DeviceKind,
    /// Siemens.
    pub g_min: f64,
    /// Siemens.
    pub g_max: f64,
    /// Positive SET threshold, volts.
    pub v_set: f64,
    /// Magnitude of the RESET threshold, volts.
    pub v_reset: f64,
    /// Potentiation rate, 1/(V·s).
    pub rate_p: f64,
    /// Depression rate, 1/(V·s).
    pub rate_n: f64,
    pub window_exp: f64,
    /// State floor applied on the first SET event (Chromium only).
    pub set_jump_x: f64,
}

impl DeviceParams {
    /// Checks the single-device invariants.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            (self.g_min, "g_min"),
            (self.g_max, "g_max"),
            (self.v_set, "v_set"),
            (self.v_reset, "v_reset"),
            (self.rate_p, "rate_p"),
            (self.rate_n, "rate_n"),
            (self.window_exp, "window_exp"),
            (self.set_jump_x, "set_jump_x"),
        ];
        for (v, name) in fields {
            ensure_finite(v, name)?;
        }
        let bad = |msg: String| Err(Error::InvalidParam(format!("{} preset: {msg}", self.kind)));
        if !(0.0 <= self.g_min && self.g_min < self.g_max && self.g_max <= G_CAP) {
            return bad(format!(
                "need 0 <= g_min < g_max <= {G_CAP} S, got g_min={} g_max={}",
                self.g_min, self.g_max
            ));
        }
        for (v, name) in [(self.v_set, "v_set"), (self.v_reset, "v_reset")] {
            if !(v > 0.1 && v <= SAFE_SWEEP_AMPLITUDE) {
                return bad(format!("{name} must lie in (0.1, 0.75] V, got {v}"));
            }
        }
        if self.rate_p <= 0.0 || self.rate_n <= 0.0 || self.window_exp < 0.0 {
            return bad("rates must be positive and window_exp non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.set_jump_x) {
            return bad(format!("set_jump_x must lie in [0, 1], got {}", self.set_jump_x));
        }
        match self.kind {
            DeviceKind::Chromium => {
                let g_jump = self.g_min + self.set_jump_x * (self.g_max - self.g_min);
                if (g_jump - CHROMIUM_JUMP_G).abs() > 1e-9 * CHROMIUM_JUMP_G {
                    return bad(format!("jump must land on 0.5 mS, lands on {g_jump} S"));
                }
            }
            _ if self.set_jump_x != 0.0 => return bad("set_jump_x must be 0".into()),
            _ => {}
        }
        Ok(())
    }

    /// Jump floor that lands exactly on 0.5 mS for the given conductance range.
    pub fn chromium_jump_x(g_min: f64, g_max: f64) -> f64 {
        (CHROMIUM_JUMP_G - g_min) / (g_max - g_min)
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let p = DeviceParams {
            kind: kv.require_str("kind")?.parse()?,
            g_min: kv.require("g_min")?,
            g_max: kv.require("g_max")?,
            v_set: kv.require("v_set")?,
            v_reset: kv.require("v_reset")?,
            rate_p: kv.require("rate_p")?,
            rate_n: kv.require("rate_n")?,
            window_exp: kv.require("window_exp")?,
            set_jump_x: kv.require("set_jump_x")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn to_kv_string(&self) -> String {
        let mut kv = KvMap::new();
        kv.insert("kind", self.kind);
        kv.insert("g_min", self.g_min);
        kv.insert("g_max", self.g_max);
        kv.insert("v_set", self.v_set);
        kv.insert("v_reset", self.v_reset);
        kv.insert("rate_p", self.rate_p);
        kv.insert("rate_n", self.rate_n);
        kv.insert("window_exp", self.window_exp);
        kv.insert("set_jump_x", self.set_jump_x);
        kv.render()
    }
}

/// The three shipped presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Presets {
    pub carbon: DeviceParams,
    pub tungsten: DeviceParams,
    pub chromium: DeviceParams,
}

/// Environment variable naming a directory with `{kind}.txt` preset files.
pub const PRESET_DIR_ENV: &str = "MEMSIM_PRESET_DIR";

const EMBEDDED_CARBON: &str = include_str!("../presets/carbon.txt");
const EMBEDDED_TUNGSTEN: &str = include_str!("../presets/tungsten.txt");
const EMBEDDED_CHROMIUM: &str = include_str!("../presets/chromium.txt");

impl Presets {
    /// Presets compiled into the binary from `presets/*.txt`.
    pub fn embedded() -> Self {
        Self::from_texts(EMBEDDED_CARBON, EMBEDDED_TUNGSTEN, EMBEDDED_CHROMIUM)
            .expect("embedded presets are valid")
    }

    pub fn from_texts(carbon: &str, tungsten: &str, chromium: &str) -> Result<Self> {
        let p = Presets {
            carbon: DeviceParams::from_kv_str(carbon)?,
            tungsten: DeviceParams::from_kv_str(tungsten)?,
            chromium: DeviceParams::from_kv_str(chromium)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |kind: DeviceKind| std::fs::read_to_string(dir.join(format!("{kind}.txt")));
        Self::from_texts(
            &read(DeviceKind::Carbon)?,
            &read(DeviceKind::Tungsten)?,
            &read(DeviceKind::Chromium)?,
        )
    }

    /// Honours `MEMSIM_PRESET_DIR`, falling back to the embedded presets.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(PRESET_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(Path::new(&dir)),
            _ => Ok(Self::embedded()),
        }
    }

    pub fn get(&self, kind: DeviceKind) -> DeviceParams {
        match kind {
            DeviceKind::Carbon => self.carbon,
            DeviceKind::Tungsten => self.tungsten,
            DeviceKind::Chromium => self.chromium,
        }
    }

    /// Cross-preset invariants on top of the per-device ones.
    pub fn validate(&self) -> Result<()> {
        for kind in DeviceKind::ALL {
            let p = self.get(kind);
            if p.kind != kind {
                return Err(Error::InvalidParam(format!(
                    "{kind} preset file declares kind = {}",
                    p.kind
                )));
            }
        }
        if !(self.chromium.v_set > self.carbon.v_set && self.chromium.v_set > self.tungsten.v_set) {
            return Err(Error::InvalidParam(
                "chromium v_set must exceed carbon and tungsten v_set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemristorState {
    pub x: f64,
    pub has_set: bool,
}

impl MemristorState {
    /// Fresh, never-programmed device: empty channel, latch armed.
    pub fn pristine() -> Self {
        Self { x: 0.0, has_set: false }
    }

    pub fn new(x: f64, has_set: bool) -> Result<Self> {
        ensure_finite(x, "x")?;
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParam(format!("state x must lie in [0, 1], got {x}")));
        }
        Ok(Self { x, has_set })
    }
}

impl Default for MemristorState {
    fn default() -> Self {
        Self::pristine()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub amplitude: f64,
    pub width: f64,
    pub series_resistance: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, width: f64, series_resistance: f64) -> Result<Self> {
        let p = Self { amplitude, width, series_resistance };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.amplitude, "pulse amplitude")?;
        ensure_finite(self.width, "pulse width")?;
        ensure_finite(self.series_resistance, "series resistance")?;
        if self.width <= 0.0 {
            return Err(Error::InvalidParam(format!("pulse width must be > 0, got {}", self.width)));
        }
        if self.amplitude.abs() > MAX_PULSE_AMPLITUDE {
            return Err(Error::InvalidParam(format!(
                "pulse amplitude {} V exceeds the {MAX_PULSE_AMPLITUDE} V supply",
                self.amplitude
            )));
        }
        if self.series_resistance < 0.0 {
            return Err(Error::InvalidParam("series resistance must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn conductance_of(state: &MemristorState, params: &DeviceParams) -> f64 {
    params.g_min + state.x * (params.g_max - params.g_min)
}

/// Advances the device by `dt` under a constant device voltage `v`.
///
/// The returned current uses the conductance at the start of the step.
pub fn step(
    params: &DeviceParams,
    state: &MemristorState,
    v: f64,
    dt: f64,
) -> Result<(MemristorState, f64)> {
    ensure_finite(v, "v")?;
    ensure_finite(dt, "dt")?;
    if dt <= 0.0 {
        return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    let current = conductance_of(state, params) * v;
    let mut next = *state;
    if v > params.v_set {
        if !next.has_set {
            next.x = next.x.max(params.set_jump_x);
            next.has_set = true;
        }
        let dx = params.rate_p * (v - params.v_set) * (1.0 - next.x).powf(params.window_exp) * dt;
        next.x = (next.x + dx).clamp(0.0, 1.0);
    } else if v < -params.v_reset {
        let dx = params.rate_n * (-v - params.v_reset) * next.x.powf(params.window_exp) * dt;
        next.x = (next.x - dx).clamp(0.0, 1.0);
    }
    Ok((next, current))
}

/// Integrates one rectangular pulse applied through a series resistor.
///
/// Returns the final state and the energy dissipated in device + resistor.
pub fn apply_pulse(
    params: &DeviceParams,
    state: &MemristorState,
    pulse: &Pulse,
    dt_sub: f64,
) -> Result<(MemristorState, f64)> {
    pulse.validate()?;
    ensure_finite(dt_sub, "dt_sub")?;
    if dt_sub <= 0.0 || dt_sub > pulse.width {
        return Err(Error::InvalidParam(format!(
            "dt_sub must lie in (0, width = {}], got {dt_sub}",
            pulse.width
        )));
    }
    let n_full = (pulse.width / dt_sub).floor() as u64;
    let rest = pulse.width - n_full as f64 * dt_sub;
    let mut s = *state;
    let mut energy = 0.0;
    let mut sub = |s: &mut MemristorState, dt: f64| -> Result<()> {
        let g = conductance_of(s, params);
        let v_dev = pulse.amplitude / (1.0 + pulse.series_resistance * g);
        let (next, i) = step(params, s, v_dev, dt)?;
        energy += (v_dev * i + i * i * pulse.series_resistance) * dt;
        *s = next;
        Ok(())
    };
    for _ in 0..n_full {
        sub(&mut s, dt_sub)?;
    }
    // Remainders below a femtosecond are rounding noise from width/dt_sub.
    if rest > 1e-15 {
        sub(&mut s, rest)?;
    }
    // Only a sustained reverse pulse that drives the channel back to HRS
    // dissolves the nucleus behind the first-SET jump.
    if pulse.amplitude < 0.0 && pulse.width >= LATCH_REARM_WIDTH && s.x <= HRS_LATCH_X {
        s.has_set = false;
    }
    Ok((s, energy))
}

/// Non-destructive read at a sub-threshold voltage.
pub fn read_conductance(
    params: &DeviceParams,
    state: &MemristorState,
    v_read: f64,
    t_read: f64,
) -> Result<f64> {
    ensure_finite(v_read, "v_read")?;
    ensure_finite(t_read, "t_read")?;
    if v_read <= 0.0 || t_read <= 0.0 {
        return Err(Error::InvalidParam("read voltage and duration must be > 0".into()));
    }
    if v_read >= params.v_set {
        return Err(Error::DisturbingRead { v_read, v_set: params.v_set });
    }
    // Below threshold the state is frozen and i = g·v holds exactly, so the
    // measured i/v is the conductance itself.
    Ok(conductance_of(state, params))
}

/// Ohmic energy of a sub-threshold read.
pub fn read_energy(g: f64, v_read: f64, t_read: f64) -> f64 {
    v_read * v_read * g * t_read
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvSample {
    pub t: f64,
    pub v: f64,
    pub i: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IvTrace {
    pub samples: Vec<IvSample>,
}

impl IvTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,v_V,i_A\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t, s.v, s.i);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t_s,v_V,i_A" => {}
            _ => return Err(Error::Parse("missing `t_s,v_V,i_A` header".into())),
        }
        let mut samples = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<f64> = crate::kv::parse_list(line)
                .map_err(|_| Error::Parse(format!("bad trace row `{line}`")))?;
            if cols.len() != 3 {
                return Err(Error::Parse(format!("trace row needs 3 columns: `{line}`")));
            }
            samples.push(IvSample { t: cols[0], v: cols[1], i: cols[2] });
        }
        Ok(Self { samples })
    }
}

/// Sinusoidal sweep of a pristine device, driven directly (no series resistor).
pub fn iv_sweep(
    params: &DeviceParams,
    amplitude: f64,
    freq: f64,
    cycles: u32,
    dt: f64,
) -> Result<IvTrace> {
    ensure_finite(amplitude, "amplitude")?;
    ensure_finite(freq, "freq")?;
    ensure_finite(dt, "dt")?;
    if amplitude.abs() > SAFE_SWEEP_AMPLITUDE {
        return Err(Error::UnsafeAmplitude(amplitude));
    }
    if amplitude <= 0.0 || freq <= 0.0 || dt <= 0.0 || cycles == 0 {
        return Err(Error::InvalidParam(
            "sweep needs amplitude > 0, freq > 0, dt > 0 and cycles >= 1".into(),
        ));
    }
    let n = (cycles as f64 / (freq * dt)).round() as usize;
    if n < 4 {
        return Err(Error::InvalidParam("dt too coarse for the requested sweep".into()));
    }
    let mut state = MemristorState::pristine();
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        // Reducing the phase first makes v exactly 0 at whole cycles.
        let v = amplitude * (2.0 * std::f64::consts::PI * (freq * t).fract()).sin();
        let (next, i) = step(params, &state, v, dt)?;
        samples.push(IvSample { t, v, i });
        state = next;
    }
    Ok(IvTrace { samples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisMetrics {
    /// Sum of |∮ i dv| over complete positive and negative half-cycles, V·A.
    pub lobe_area: f64,
    /// Largest chord conductance i/v on the high-field part of the trace.
    pub lrs_slope: f64,
    /// Smallest chord conductance i/v on the high-field part of the trace.
    pub hrs_slope: f64,
}

pub fn hysteresis_metrics(trace: &IvTrace) -> Result<HysteresisMetrics> {
    let s = &trace.samples;
    if s.len() < 4 {
        return Err(Error::ShortTrace);
    }
    // A lobe is a maximal run of same-signed voltage samples that is bounded on
    // both sides by a sample of another sign; runs touching either end of the
    // trace are incomplete and ignored.
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let mut pos_lobes = 0;
    let mut neg_lobes = 0;
    let mut area = 0.0;
    let mut k = 0;
    while k < s.len() {
        let sg = sign(s[k].v);
        let start = k;
        while k < s.len() && sign(s[k].v) == sg {
            k += 1;
        }
        if sg == 0 || start == 0 || k == s.len() {
            continue;
        }
        // Closed trapezoid loop from the sample before the run to the one after.
        let (a, b) = (start - 1, k);
        let mut lobe = 0.0;
        for j in a..b {
            lobe += 0.5 * (s[j].i + s[j + 1].i) * (s[j + 1].v - s[j].v);
        }
        lobe += 0.5 * (s[b].i + s[a].i) * (s[a].v - s[b].v);
        area += lobe.abs();
        if sg > 0 {
            pos_lobes += 1;
        } else {
            neg_lobes += 1;
        }
    }
    if pos_lobes == 0 || neg_lobes == 0 {
        return Err(Error::ShortTrace);
    }
    let v_peak = s.iter().map(|x| x.v.abs()).fold(0.0, f64::max);
    let mut lrs = f64::NEG_INFINITY;
    let mut hrs = f64::INFINITY;
    for smp in s.iter().filter(|x| x.v.abs() >= 0.1 * v_peak) {
        let g = smp.i / smp.v;
        lrs = lrs.max(g);
        hrs = hrs.min(g);
    }
    Ok(HysteresisMetrics { lobe_area: area, lrs_slope: lrs, hrs_slope: hrs.max(0.0) })
}

/// Voltage of the first sample whose chord conductance rises above the
/// starting one, i.e. where the device first switches on. `None` if never.
pub fn set_onset_voltage(trace: &IvTrace) -> Option<f64> {
    let mut g0 = None;
    for smp in &trace.samples {
        if smp.v <= 0.0 {
            continue;
        }
        let g = smp.i / smp.v;
        match g0 {
            None => g0 = Some(g),
            Some(base) if g > base * (1.0 + 1e-9) => return Some(smp.v),
            _ => {}
        }
    }
    None
}
