//! Behavioral simulator for memristor-crossbar neural networks.
//!
//! Layers, bottom-up: [`device`] (single-memristor physics), [`network`]
//! (9×3×1 crossbar inference), [`data`] (glyph datasets), [`trainer`]
//! (off-chip reference weights), [`onchip`] (closed-loop programming and
//! inference accounting), [`experiments`] (accuracy grids, tolerance sweeps,
//! reset ablation, programming traces) and [`cli`].

pub mod cli;
pub mod data;
pub mod device;
pub mod error;
pub mod experiments;
pub mod kv;
pub mod network;
pub mod onchip;
pub mod svg;
pub mod trainer;

pub use error::{Error, Result};
