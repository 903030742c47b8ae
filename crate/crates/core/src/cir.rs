//! Sampled channel impulse response vectors.
//!
//! A CIR vector covers a fixed delay window with bin width `dt_s`. Each bin
//! holds one complex tap stored interleaved, so the vector length is
//! `q = 2 * (floor((end - start) / dt) + 1)`. Paths are rounded to the
//! nearest bin; paths outside the window are dropped.

use crate::error::{Error, Result};
use crate::raytrace::PathComponent;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub dt_s: f64,
}

impl DelayWindow {
    /// Width of the auto window in bins (91 bins -> q = 182).
    const AUTO_BINS_AFTER_START: f64 = 90.0;
    /// Lead time placed before the earliest path by the auto window.
    const AUTO_LEAD_S: f64 = 5e-9;

    pub fn new(start_s: f64, end_s: f64, dt_s: f64) -> Result<Self> {
        if !(dt_s.is_finite() && dt_s > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {dt_s}")));
        }
        if !(start_s.is_finite() && end_s.is_finite() && end_s > start_s) {
            return Err(Error::Validation(format!(
                "delay window [{start_s}, {end_s}] is not increasing"
            )));
        }
        Ok(Self {
            start_s,
            end_s,
            dt_s,
        })
    }

    /// The fixed 220..310 ns window at 1 ns resolution (q = 182).
    pub fn paper() -> Self {
        Self {
            start_s: 220e-9,
            end_s: 310e-9,
            dt_s: 1e-9,
        }
    }

    /// Window derived from the earliest path delay of a dataset: starts
    /// 5 ns before it (rounded down to a bin edge) and spans 90 bins, so q
    /// stays 182 for any `dt`.
    pub fn auto(min_delay_s: f64, dt_s: f64) -> Result<Self> {
        if !(dt_s.is_finite() && dt_s > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {dt_s}")));
        }
        let start = ((min_delay_s - Self::AUTO_LEAD_S) / dt_s).floor() * dt_s;
        Self::new(start, start + Self::AUTO_BINS_AFTER_START * dt_s, dt_s)
    }

    /// Number of complex bins. The 1e-9 slack keeps a width that is an exact
    /// bin multiple from losing its last bin to float rounding.
    pub fn n_bins(&self) -> usize {
        ((self.end_s - self.start_s) / self.dt_s + 1e-9).floor() as usize + 1
    }

    /// Length of the interleaved real vector.
    pub fn q(&self) -> usize {
        2 * self.n_bins()
    }

    /// Nearest-bin index for a delay, if it falls inside the window.
    pub fn bin_of(&self, delay_s: f64) -> Option<usize> {
        let k = ((delay_s - self.start_s) / self.dt_s + 0.5).floor();
        if k >= 0.0 && (k as usize) < self.n_bins() {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// Interleaved complex CIR: bin k occupies `values[2k]` (re), `values[2k+1]`
/// (im).
#[derive(Debug, Clone, PartialEq)]
pub struct CirVector {
    pub values: Vec<f64>,
    pub window: DelayWindow,
}

impl CirVector {
    pub fn new(values: Vec<f64>, window: DelayWindow) -> Result<Self> {
        if values.len() != window.q() {
            return Err(Error::ShapeMismatch {
                what: "CIR vector",
                expected: window.q(),
                got: values.len(),
            });
        }
        Ok(Self { values, window })
    }

    pub fn zeros(window: DelayWindow) -> Self {
        Self {
            values: vec![0.0; window.q()],
            window,
        }
    }

    /// Indices of complex bins with nonzero magnitude.
    pub fn nonzero_bins(&self) -> Vec<usize> {
        (0..self.window.n_bins())
            .filter(|&k| self.values[2 * k] != 0.0 || self.values[2 * k + 1] != 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SynthesisReport {
    /// Bins that received more than one path (their gains were summed).
    pub collided_bins: usize,
    /// Paths whose delay fell outside the window.
    pub dropped_paths: usize,
}

/// Accumulate path gains into window bins. Colliding paths add coherently;
/// the report says how often that happened.
pub fn synthesize_cir(paths: &[PathComponent], window: DelayWindow) -> (CirVector, SynthesisReport) {
    let mut cir = CirVector::zeros(window);
    let mut hits = vec![0usize; window.n_bins()];
    let mut report = SynthesisReport::default();
    for p in paths {
        match window.bin_of(p.delay_s) {
            Some(k) => {
                cir.values[2 * k] += p.gain_re;
                cir.values[2 * k + 1] += p.gain_im;
                hits[k] += 1;
            }
            None => report.dropped_paths += 1,
        }
    }
    report.collided_bins = hits.iter().filter(|&&h| h > 1).count();
    (cir, report)
}
