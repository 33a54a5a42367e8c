//! The 9×3×1 crossbar: column-current summation, sigmoid neurons and the
//! 0.5 V decision rule.

use std::fmt::Write as _;

use crate::device::{conductance_of, DeviceParams, MemristorState, DEFAULT_V_READ};
use crate::error::{ensure_finite, Error, Result};

pub const N_INPUTS: usize = 9;
pub const N_HIDDEN: usize = 3;
/// Neuron transimpedance gain, 1/A.
pub const NEURON_GAIN: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// The 'X' role (output ≥ 0.5 V).
    ClassA,
    /// The 'O' role.
    ClassB,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::ClassA => 'A',
            Label::ClassB => 'B',
        }
    }

    /// Training target: 1 for ClassA, 0 for ClassB.
    pub fn target(self) -> f64 {
        match self {
            Label::ClassA => 1.0,
            Label::ClassB => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Image3x3 {
    /// Row-major.
    pub pixels: [bool; N_INPUTS],
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub v_b: f64,
}

impl NeuronParams {
    pub fn new(v_b: f64) -> Result<Self> {
        ensure_finite(v_b, "neuron bias")?;
        Ok(Self { v_b })
    }

    pub fn gain(&self) -> f64 {
        NEURON_GAIN
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub state: MemristorState,
    pub params: DeviceParams,
}

impl Cell {
    pub fn pristine(params: DeviceParams) -> Self {
        Self { state: MemristorState::pristine(), params }
    }

    pub fn conductance(&self) -> f64 {
        conductance_of(&self.state, &self.params)
    }
}

/// Location of a cell in the crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    /// 1 or 2.
    pub layer: u8,
    pub row: usize,
    pub col: usize,
}

impl CellId {
    /// All 30 cells: layer 1 row-major, then layer 2.
    pub fn all() -> impl Iterator<Item = CellId> {
        let l1 = (0..N_INPUTS)
            .flat_map(|row| (0..N_HIDDEN).map(move |col| CellId { layer: 1, row, col }));
        let l2 = (0..N_HIDDEN).map(|row| CellId { layer: 2, row, col: 0 });
        l1.chain(l2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarNetwork {
    pub layer1: [[Cell; N_HIDDEN]; N_INPUTS],
    pub layer2: [Cell; N_HIDDEN],
    pub hidden_neurons: [NeuronParams; N_HIDDEN],
    pub output_neuron: NeuronParams,
    pub v_read: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardTrace {
    pub hidden_currents: [f64; N_HIDDEN],
    pub hidden: [f64; N_HIDDEN],
    pub output_current: f64,
    pub output: f64,
}

impl CrossbarNetwork {
    /// Every cell pristine with the same preset; zero biases.
    pub fn uniform(params: DeviceParams) -> Result<Self> {
        Self::from_fn(|_| params)
    }

    /// Builds a pristine network with per-cell presets.
    pub fn from_fn(mut params_of: impl FnMut(CellId) -> DeviceParams) -> Result<Self> {
        let zero = NeuronParams { v_b: 0.0 };
        let mut layer1 = [[Cell::pristine(params_of(CellId { layer: 1, row: 0, col: 0 })); N_HIDDEN]; N_INPUTS];
        for (row, cells) in layer1.iter_mut().enumerate() {
            for (col, cell) in cells.iter_mut().enumerate() {
                *cell = Cell::pristine(params_of(CellId { layer: 1, row, col }));
            }
        }
        let mut layer2 = [layer1[0][0]; N_HIDDEN];
        for (row, cell) in layer2.iter_mut().enumerate() {
            *cell = Cell::pristine(params_of(CellId { layer: 2, row, col: 0 }));
        }
        let net = Self {
            layer1,
            layer2,
            hidden_neurons: [zero; N_HIDDEN],
            output_neuron: zero,
            v_read: DEFAULT_V_READ,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.v_read, "v_read")?;
        let min_v_set = self.cells().map(|(_, c)| c.params.v_set).fold(f64::INFINITY, f64::min);
        if !(self.v_read > 0.0 && self.v_read < min_v_set) {
            return Err(Error::InvalidParam(format!(
                "v_read {} V must lie in (0, {min_v_set}) V",
                self.v_read
            )));
        }
        for n in self.hidden_neurons.iter().chain(std::iter::once(&self.output_neuron)) {
            ensure_finite(n.v_b, "neuron bias")?;
        }
        Ok(())
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        match id.layer {
            1 => &self.layer1[id.row][id.col],
            _ => &self.layer2[id.row],
        }
    }

    pub fn cell_mut(&mut self, id: CellId) -> &mut Cell {
        match id.layer {
            1 => &mut self.layer1[id.row][id.col],
            _ => &mut self.layer2[id.row],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (CellId, &Cell)> {
        CellId::all().map(move |id| (id, self.cell(id)))
    }

    pub fn g1(&self) -> [[f64; N_HIDDEN]; N_INPUTS] {
        self.layer1.map(|row| row.map(|c| c.conductance()))
    }

    pub fn g2(&self) -> [f64; N_HIDDEN] {
        self.layer2.map(|c| c.conductance())
    }

    pub fn set_biases(&mut self, b_hidden: [f64; N_HIDDEN], b_out: f64) -> Result<()> {
        for (n, b) in self.hidden_neurons.iter_mut().zip(b_hidden) {
            *n = NeuronParams::new(b)?;
        }
        self.output_neuron = NeuronParams::new(b_out)?;
        Ok(())
    }

    /// Plain-text dump of the 30 conductances and 4 biases.
    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            g1: self.g1(),
            g2: self.g2(),
            b_hidden: self.hidden_neurons.map(|n| n.v_b),
            b_out: self.output_neuron.v_b,
        }
    }
}

/// Σ over active pixels of `v_read·G`; inactive rows are switched out.
pub fn column_current(column: &[f64], pixels: &[bool], v_read: f64) -> Result<f64> {
    if column.len() != pixels.len() {
        return Err(Error::Dimension { expected: pixels.len(), got: column.len() });
    }
    Ok(column
        .iter()
        .zip(pixels)
        .filter(|(_, &on)| on)
        .map(|(g, _)| v_read * g)
        .sum())
}

/// Σ `v_i·G_i` for an analog drive vector.
pub fn driven_current(column: &[f64], voltages: &[f64]) -> Result<f64> {
    if column.len() != voltages.len() {
        return Err(Error::Dimension { expected: voltages.len(), got: column.len() });
    }
    Ok(column.iter().zip(voltages).map(|(g, v)| v * g).sum())
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn neuron_activation(i_in: f64, neuron: &NeuronParams) -> f64 {
    sigmoid(NEURON_GAIN * i_in + neuron.v_b)
}

pub fn forward_trace(net: &CrossbarNetwork, pixels: &[bool; N_INPUTS]) -> ForwardTrace {
    let g1 = net.g1();
    let mut hidden_currents = [0.0; N_HIDDEN];
    let mut hidden = [0.0; N_HIDDEN];
    for j in 0..N_HIDDEN {
        let col: [f64; N_INPUTS] = std::array::from_fn(|i| g1[i][j]);
        hidden_currents[j] = column_current(&col, pixels, net.v_read).expect("fixed dimensions");
        hidden[j] = neuron_activation(hidden_currents[j], &net.hidden_neurons[j]);
    }
    let output_current = driven_current(&net.g2(), &hidden).expect("fixed dimensions");
    let output = neuron_activation(output_current, &net.output_neuron);
    ForwardTrace { hidden_currents, hidden, output_current, output }
}

pub fn forward(net: &CrossbarNetwork, pixels: &[bool; N_INPUTS]) -> f64 {
    forward_trace(net, pixels).output
}

pub fn classify(v_out: f64) -> Label {
    if v_out >= 0.5 {
        Label::ClassA
    } else {
        Label::ClassB
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSnapshot {
    pub g1: [[f64; N_HIDDEN]; N_INPUTS],
    pub g2: [f64; N_HIDDEN],
    pub b_hidden: [f64; N_HIDDEN],
    pub b_out: f64,
}

impl NetworkSnapshot {
    /// Layout: `g1` block of 9 rows × 3 columns, a `g2` row of 3, a
    /// `b_hidden` row of 3 and a `b_out` row; `#` lines are comments. Values
    /// use Rust's shortest round-trip formatting, so parsing is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let row = |vals: &[f64]| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        out.push_str("# layer-1 conductances (S), 9 input rows x 3 hidden columns\ng1\n");
        for r in &self.g1 {
            let _ = writeln!(out, "{}", row(r));
        }
        out.push_str("# layer-2 conductances (S), one per hidden neuron\ng2\n");
        let _ = writeln!(out, "{}", row(&self.g2));
        out.push_str("# neuron biases (V)\nb_hidden\n");
        let _ = writeln!(out, "{}", row(&self.b_hidden));
        out.push_str("b_out\n");
        let _ = writeln!(out, "{}", row(&[self.b_out]));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .skip_while(|l| l.contains('='));
        let expect_tag = |tag: &str, lines: &mut dyn Iterator<Item = &str>| -> Result<()> {
            match lines.next() {
                Some(t) if t == tag => Ok(()),
                other => Err(Error::Parse(format!("expected `{tag}`, got {other:?}"))),
            }
        };
        let row = |n: usize, lines: &mut dyn Iterator<Item = &str>| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| Error::Parse("truncated snapshot".into()))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("bad snapshot row `{line}`")))?;
            if vals.len() != n {
                return Err(Error::Dimension { expected: n, got: vals.len() });
            }
            Ok(vals)
        };
        expect_tag("g1", &mut lines)?;
        let mut g1 = [[0.0; N_HIDDEN]; N_INPUTS];
        for r in g1.iter_mut() {
            r.copy_from_slice(&row(N_HIDDEN, &mut lines)?);
        }
        expect_tag("g2", &mut lines)?;
        let mut g2 = [0.0; N_HIDDEN];
        g2.copy_from_slice(&row(N_HIDDEN, &mut lines)?);
        expect_tag("b_hidden", &mut lines)?;
        let mut b_hidden = [0.0; N_HIDDEN];
        b_hidden.copy_from_slice(&row(N_HIDDEN, &mut lines)?);
        expect_tag("b_out", &mut lines)?;
        let b_out = row(1, &mut lines)?[0];
        Ok(Self { g1, g2, b_hidden, b_out })
    }
}
