//! 3×3 glyph datasets with independent pixel-flip noise.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Image3x3, Label, N_INPUTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Glyph {
    X,
    O,
    T,
    H,
}

const X_BITS: [u8; 9] = [1, 0, 1, 0, 1, 0, 1, 0, 1];
const O_BITS: [u8; 9] = [1, 1, 1, 1, 0, 1, 1, 1, 1];
const T_BITS: [u8; 9] = [1, 1, 1, 0, 1, 0, 0, 1, 0];
const H_BITS: [u8; 9] = [1, 0, 1, 1, 1, 1, 1, 0, 1];

impl Glyph {
    pub const ALL: [Glyph; 4] = [Glyph::X, Glyph::O, Glyph::T, Glyph::H];

    pub fn bitmap(self) -> [bool; N_INPUTS] {
        let bits = match self {
            Glyph::X => X_BITS,
            Glyph::O => O_BITS,
            Glyph::T => T_BITS,
            Glyph::H => H_BITS,
        };
        bits.map(|b| b == 1)
    }

    /// X and T play the ClassA role in their tasks, O and H the ClassB role.
    pub fn label(self) -> Label {
        match self {
            Glyph::X | Glyph::T => Label::ClassA,
            Glyph::O | Glyph::H => Label::ClassB,
        }
    }
}

impl FromStr for Glyph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(Glyph::X),
            "O" | "o" => Ok(Glyph::O),
            "T" | "t" => Ok(Glyph::T),
            "H" | "h" => Ok(Glyph::H),
            other => Err(Error::UnknownGlyph(other.to_string())),
        }
    }
}

impl fmt::Display for Glyph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    XO,
    TH,
}

impl Task {
    /// (ClassA glyph, ClassB glyph).
    pub fn glyphs(self) -> (Glyph, Glyph) {
        match self {
            Task::XO => (Glyph::X, Glyph::O),
            Task::TH => (Glyph::T, Glyph::H),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::XO => "xo",
            Task::TH => "th",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "xo" => Ok(Task::XO),
            "th" => Ok(Task::TH),
            other => Err(Error::InvalidParam(format!("unknown task `{other}` (expected xo or th)"))),
        }
    }
}

pub fn make_pattern(glyph: Glyph) -> Image3x3 {
    Image3x3 { pixels: glyph.bitmap(), label: glyph.label() }
}

/// Name-based lookup, e.g. `"X"`.
pub fn make_pattern_named(name: &str) -> Result<Image3x3> {
    Ok(make_pattern(name.parse()?))
}

/// Flips every pixel independently with probability `p`.
///
/// Always consumes exactly nine uniform draws, so streams stay aligned
/// across noise levels.
pub fn add_noise<R: Rng + ?Sized>(image: &Image3x3, p: f64, rng: &mut R) -> Image3x3 {
    let mut out = *image;
    for px in out.pixels.iter_mut() {
        let u: f64 = rng.gen();
        if u < p {
            *px = !*px;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Image3x3>,
    pub noise_level: f64,
    pub seed: u64,
}

/// Balanced dataset: even indices carry the ClassA glyph, odd the ClassB one.
pub fn make_dataset(task: Task, n: usize, p: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("dataset needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("noise level must lie in [0, 1], got {p}")));
    }
    let (a, b) = task.glyphs();
    let (clean_a, clean_b) = (make_pattern(a), make_pattern(b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|k| add_noise(if k % 2 == 0 { &clean_a } else { &clean_b }, p, &mut rng))
        .collect();
    Ok(Dataset { items, noise_level: p, seed })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p0,p1,p2,p3,p4,p5,p6,p7,p8,label\n");
        for item in &self.items {
            for px in item.pixels {
                out.push(if px { '1' } else { '0' });
                out.push(',');
            }
            let _ = writeln!(out, "{}", item.label.as_char());
        }
        out
    }

    /// Parses the CSV export. Noise level and seed are not stored in the
    /// file; they are filled from the arguments.
    pub fn from_csv(text: &str, noise_level: f64, seed: u64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "p0,p1,p2,p3,p4,p5,p6,p7,p8,label" => {}
            _ => return Err(Error::Parse("missing dataset header".into())),
        }
        let mut items = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != N_INPUTS + 1 {
                return Err(Error::Dimension { expected: N_INPUTS + 1, got: cols.len() });
            }
            let mut pixels = [false; N_INPUTS];
            for (px, c) in pixels.iter_mut().zip(&cols) {
                *px = match *c {
                    "0" => false,
                    "1" => true,
                    other => return Err(Error::Parse(format!("bad pixel `{other}`"))),
                };
            }
            let label = match cols[N_INPUTS] {
                "A" => Label::ClassA,
                "B" => Label::ClassB,
                other => return Err(Error::Parse(format!("bad label `{other}`"))),
            };
            items.push(Image3x3 { pixels, label });
        }
        Ok(Self { items, noise_level, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyph_table() {
        let x = make_pattern(Glyph::X);
        assert_eq!(x.pixels.map(u8::from), [1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(x.label, Label::ClassA);
        let o = make_pattern_named("O").unwrap();
        assert_eq!(o.pixels.map(u8::from), [1, 1, 1, 1, 0, 1, 1, 1, 1]);
        assert_eq!(o.label, Label::ClassB);
        let h = make_pattern(Glyph::H);
        assert_eq!(h.pixels.map(u8::from), [1, 0, 1, 1, 1, 1, 1, 0, 1]);
        assert_eq!(h.label, Label::ClassB);
        assert_eq!(make_pattern(Glyph::T).pixels.map(u8::from), [1, 1, 1, 0, 1, 0, 0, 1, 0]);
        assert!(matches!(make_pattern_named("Q"), Err(Error::UnknownGlyph(_))));
    }

    #[test]
    fn class_pairs_differ_in_at_least_three_pixels() {
        for (a, b) in [Task::XO.glyphs(), Task::TH.glyphs()] {
            let d = a.bitmap().iter().zip(b.bitmap()).filter(|(p, q)| **p != *q).count();
            assert!(d >= 3);
        }
    }

    #[test]
    fn noise_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = make_pattern(Glyph::X);
        assert_eq!(add_noise(&x, 0.0, &mut rng), x);
        let c = add_noise(&x, 1.0, &mut rng);
        assert_eq!(c.pixels, x.pixels.map(|b| !b));
        assert_eq!(c.label, x.label);
    }

    #[test]
    fn balanced_and_deterministic() {
        let d = make_dataset(Task::XO, 100, 0.05, 9).unwrap();
        let a = d.items.iter().filter(|i| i.label == Label::ClassA).count();
        assert_eq!(a, 50);
        assert_eq!(make_dataset(Task::XO, 100, 0.05, 9).unwrap(), d);
        assert_ne!(make_dataset(Task::XO, 100, 0.05, 10).unwrap(), d);
        assert!(make_dataset(Task::XO, 1, 0.05, 9).is_err());
        assert!(make_dataset(Task::XO, 10, 1.5, 9).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = make_dataset(Task::TH, 21, 0.2, 3).unwrap();
        assert_eq!(Dataset::from_csv(&d.to_csv(), 0.2, 3).unwrap(), d);
    }
}
