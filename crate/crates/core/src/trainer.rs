//! Off-chip reference training of the 9×3×1 network with non-negative,
//! range-limited weights, and the weight → conductance mapping.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Task};
use crate::device::{DEFAULT_V_READ, G_CAP};
use crate::error::{ensure_finite, Error, Result};
use crate::kv::KvMap;
use crate::network::{classify, sigmoid, NetworkSnapshot, N_HIDDEN, N_INPUTS, NEURON_GAIN};

/// Largest effective weight; maps onto the 2.5 mS cap.
pub const W_MAX: f64 = 2.5;

/// Initial layer-1 weights are drawn from U(W1_INIT).
pub const W1_INIT: (f64, f64) = (0.0, 0.5);
/// Initial layer-2 weights are drawn from U(W2_INIT). Starting well away from
/// zero keeps the projected descent from collapsing the output layer.
pub const W2_INIT: (f64, f64) = (1.5, 2.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceWeights {
    pub w1: [[f64; N_HIDDEN]; N_INPUTS],
    pub w2: [f64; N_HIDDEN],
    pub b_hidden: [f64; N_HIDDEN],
    pub b_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetConductances {
    pub g1: [[f64; N_HIDDEN]; N_INPUTS],
    pub g2: [f64; N_HIDDEN],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biases {
    pub hidden: [f64; N_HIDDEN],
    pub out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { lr: 0.5, epochs: 2000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ReferenceWeights,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Loss before each update, then the final loss.
    pub loss_history: Vec<f64>,
}

impl ReferenceWeights {
    pub fn zeros() -> Self {
        Self { w1: [[0.0; N_HIDDEN]; N_INPUTS], w2: [0.0; N_HIDDEN], b_hidden: [0.0; N_HIDDEN], b_out: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for &w in self.w1.iter().flatten().chain(self.w2.iter()) {
            if !(0.0..=W_MAX).contains(&w) {
                return Err(Error::WeightOutOfRange(w));
            }
        }
        for &b in self.b_hidden.iter().chain(std::iter::once(&self.b_out)) {
            ensure_finite(b, "bias")?;
        }
        Ok(())
    }

    /// Matrix form of the crossbar forward pass. Binary pixels drive layer 1
    /// with unit inputs; the hidden voltages drive layer 2, whose effective
    /// gain is `w2 / v_read` because the weight scale is defined at the read level.
    pub fn forward(&self, pixels: &[bool; N_INPUTS], v_read: f64) -> ([f64; N_HIDDEN], f64) {
        let mut h = [0.0; N_HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let z: f64 = (0..N_INPUTS).filter(|&i| pixels[i]).map(|i| self.w1[i][j]).sum();
            *hj = sigmoid(z + self.b_hidden[j]);
        }
        let z: f64 = (0..N_HIDDEN).map(|j| h[j] * self.w2[j] / v_read).sum();
        (h, sigmoid(z + self.b_out))
    }

    fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(self.w2);
        v.extend(self.b_hidden);
        v.push(self.b_out);
        v
    }

    fn from_flat(v: &[f64]) -> Self {
        let mut w = Self::zeros();
        for (k, x) in v[..27].iter().enumerate() {
            w.w1[k / N_HIDDEN][k % N_HIDDEN] = *x;
        }
        w.w2.copy_from_slice(&v[27..30]);
        w.b_hidden.copy_from_slice(&v[30..33]);
        w.b_out = v[33];
        w
    }

    /// Parameters as one 34-vector: w1 row-major, w2, b_hidden, b_out.
    pub fn to_vec(&self) -> Vec<f64> {
        self.flat()
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() != 34 {
            return Err(Error::Dimension { expected: 34, got: v.len() });
        }
        Ok(Self::from_flat(v))
    }
}

/// Mean binary cross-entropy and its gradient (same layout as `to_vec`).
pub fn loss_and_gradient(w: &ReferenceWeights, data: &Dataset) -> Result<(f64, ReferenceWeights)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let v_read = DEFAULT_V_READ;
    let n = data.len() as f64;
    let mut g = ReferenceWeights::zeros();
    let mut loss = 0.0;
    for item in &data.items {
        let y = item.label.target();
        let (h, _) = w.forward(&item.pixels, v_read);
        let z: f64 = (0..N_HIDDEN).map(|j| h[j] * w.w2[j] / v_read).sum::<f64>() + w.b_out;
        // softplus(z) - y·z, evaluated without overflow.
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let d = sigmoid(z) - y;
        g.b_out += d;
        for (j, &hj) in h.iter().enumerate() {
            g.w2[j] += d * hj / v_read;
            let dh = d * w.w2[j] / v_read * hj * (1.0 - hj);
            g.b_hidden[j] += dh;
            for i in (0..N_INPUTS).filter(|&i| item.pixels[i]) {
                g.w1[i][j] += dh;
            }
        }
    }
    let mut v = g.flat();
    v.iter_mut().for_each(|x| *x /= n);
    Ok((loss / n, ReferenceWeights::from_flat(&v)))
}

fn initial_weights(seed: u64) -> ReferenceWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ReferenceWeights::zeros();
    for x in w.w1.iter_mut().flatten() {
        *x = rng.gen_range(W1_INIT.0..W1_INIT.1);
    }
    for x in w.w2.iter_mut() {
        *x = rng.gen_range(W2_INIT.0..W2_INIT.1);
    }
    w
}

/// Full-batch projected gradient descent on cross-entropy.
pub fn train_reference(data: &Dataset, hyper: &TrainHyper) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_finite(hyper.lr, "learning rate")?;
    if hyper.lr <= 0.0 {
        return Err(Error::InvalidParam("learning rate must be > 0".into()));
    }
    let mut w = initial_weights(hyper.seed);
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..hyper.epochs {
        let (loss, g) = loss_and_gradient(&w, data)?;
        if loss.is_nan() {
            return Err(Error::NanLoss(epoch));
        }
        history.push(loss);
        let (wv, gv) = (w.flat(), g.flat());
        let mut next: Vec<f64> = wv.iter().zip(&gv).map(|(a, b)| a - hyper.lr * b).collect();
        for x in &mut next[..30] {
            *x = x.clamp(0.0, W_MAX);
        }
        w = ReferenceWeights::from_flat(&next);
    }
    let (final_loss, _) = loss_and_gradient(&w, data)?;
    if final_loss.is_nan() {
        return Err(Error::NanLoss(hyper.epochs));
    }
    history.push(final_loss);
    Ok(TrainOutcome {
        weights: w,
        final_loss,
        train_accuracy: evaluate_reference(&w, data)?,
        loss_history: history,
    })
}

/// Mapped targets below this are treated as zero weights (left unprogrammed).
/// One µS is a thousandth of the weight range and far below read resolution
/// of the network's 1e4 gain.
pub const PRUNE_BELOW_S: f64 = 1e-6;

/// `G = w / (1e4·v_read)`, with targets under [`PRUNE_BELOW_S`] set to zero.
pub fn map_weights(w: &ReferenceWeights, v_read: f64) -> Result<(TargetConductances, Biases)> {
    w.validate()?;
    ensure_finite(v_read, "v_read")?;
    if v_read <= 0.0 {
        return Err(Error::InvalidParam("v_read must be > 0".into()));
    }
    let scale = NEURON_GAIN * v_read;
    let g = |x: f64| if x / scale < PRUNE_BELOW_S { 0.0 } else { x / scale };
    let t = TargetConductances { g1: w.w1.map(|r| r.map(g)), g2: w.w2.map(g) };
    Ok((t, Biases { hidden: w.b_hidden, out: w.b_out }))
}

/// Inverse of [`map_weights`].
pub fn unmap_weights(t: &TargetConductances, b: &Biases, v_read: f64) -> ReferenceWeights {
    let scale = NEURON_GAIN * v_read;
    ReferenceWeights {
        w1: t.g1.map(|r| r.map(|g| g * scale)),
        w2: t.g2.map(|g| g * scale),
        b_hidden: b.hidden,
        b_out: b.out,
    }
}

impl TargetConductances {
    pub fn validate(&self) -> Result<()> {
        for &g in self.g1.iter().flatten().chain(self.g2.iter()) {
            if !(0.0..=G_CAP).contains(&g) {
                return Err(Error::InvalidTarget(g));
            }
        }
        Ok(())
    }
}

pub fn evaluate_reference(w: &ReferenceWeights, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = data
        .items
        .iter()
        .filter(|it| classify(w.forward(&it.pixels, DEFAULT_V_READ).1) == it.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Weights file: a `key = value` header followed by the network snapshot
/// block expressed in effective-weight units.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub task: Task,
    pub noise: f64,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub weights: ReferenceWeights,
}

impl WeightsFile {
    pub fn to_text(&self) -> String {
        let mut kv = KvMap::new();
        kv.insert("task", self.task);
        kv.insert("noise", self.noise);
        kv.insert("seed", self.seed);
        kv.insert("epochs", self.epochs);
        kv.insert("final_loss", self.final_loss);
        let snap = NetworkSnapshot {
            g1: self.weights.w1,
            g2: self.weights.w2,
            b_hidden: self.weights.b_hidden,
            b_out: self.weights.b_out,
        };
        let mut out = String::from("# reference weights (effective units; G = w / (1e4 * v_read))\n");
        out.push_str(&kv.render());
        let _ = write!(out, "{}", snap.to_text().replace("conductances (S)", "weights"));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let header: String = text
            .lines()
            .take_while(|l| l.trim().is_empty() || l.trim_start().starts_with('#') || l.contains('='))
            .map(|l| format!("{l}\n"))
            .collect();
        let kv = KvMap::parse(&header)?;
        let snap = NetworkSnapshot::from_text(text)?;
        let weights = ReferenceWeights { w1: snap.g1, w2: snap.g2, b_hidden: snap.b_hidden, b_out: snap.b_out };
        weights.validate()?;
        Ok(Self {
            task: kv.require_str("task")?.parse()?,
            noise: kv.require("noise")?,
            seed: kv.require("seed")?,
            epochs: kv.require("epochs")?,
            final_loss: kv.require("final_loss")?,
            weights,
        })
    }
}
