//! Fourier amplitudes of evenly sampled series.
//!
//! A series `f` sampled at `2πi/n` for `i = 0..n` has coefficients
//! `f̂(L) = (1/n) Σ f_i exp(-2π√-1 L i / n)`, and the radius of its `L`-th
//! Liouville circle is `r_L = 2|f̂(L)|`. With this normalization `cos(Lt)`
//! has `r_L = 1`. Phases are discarded.
//!
//! For even `n` the Nyquist mode `n/2` is accepted, but its amplitude is
//! halved relative to the other modes because the mode is its own mirror
//! image: `cos(n t / 2)` yields `r = 2`, not 1, while `sin` vanishes on
//! the grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{EmphError, Result};

/// An evenly sampled real signal on `[0, 2π)`, optionally labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    label: Option<usize>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, label: Option<usize>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(EmphError::input(format!(
                "a time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(EmphError::input(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest admissible mode index, `⌊n/2⌋`.
    pub fn max_mode(&self) -> usize {
        self.samples.len() / 2
    }
}

/// Per-mode circle radii of a series' truncated Liouville torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleRadii {
    modes: Vec<usize>,
    radii: Vec<f64>,
}

impl LiouvilleRadii {
    /// Builds radii directly, e.g. for synthetic tori that do not come from a series.
    pub fn new(modes: Vec<usize>, radii: Vec<f64>) -> Result<Self> {
        validate_modes(&modes)?;
        if modes.len() != radii.len() {
            return Err(EmphError::input(format!(
                "{} modes but {} radii",
                modes.len(),
                radii.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(EmphError::domain(format!(
                "radii must be finite and nonnegative, got {r}"
            )));
        }
        Ok(Self { modes, radii })
    }

    /// Radii for modes `1..=N`, convenient in tests and examples.
    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        let modes = (1..=radii.len()).collect();
        Self::new(modes, radii)
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Number of retained modes `N`.
    pub fn dim(&self) -> usize {
        self.radii.len()
    }
}

fn validate_modes(modes: &[usize]) -> Result<()> {
    if modes.is_empty() {
        return Err(EmphError::input("at least one Fourier mode is required"));
    }
    if modes[0] == 0 {
        return Err(EmphError::domain("mode 0 is not an oscillatory mode"));
    }
    if let Some(w) = modes.windows(2).find(|w| w[0] >= w[1]) {
        return Err(EmphError::input(format!(
            "modes must be strictly increasing, found {} before {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Reusable FFT plan for many series of one length.
pub struct FourierAnalyzer {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl FourierAnalyzer {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(EmphError::input(format!(
                "a time series needs at least 2 samples, got {len}"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self { len, fft })
    }

    pub fn amplitudes(&self, series: &TimeSeries, modes: &[usize]) -> Result<LiouvilleRadii> {
        if series.len() != self.len {
            return Err(EmphError::input(format!(
                "analyzer planned for length {}, series has length {}",
                self.len,
                series.len()
            )));
        }
        validate_modes(modes)?;
        let max_mode = series.max_mode();
        if let Some(&m) = modes.iter().find(|&&m| m > max_mode) {
            return Err(EmphError::domain(format!(
                "mode {m} exceeds the largest resolvable mode {max_mode} for length {}",
                self.len
            )));
        }
        let mut buf: Vec<Complex<f64>> = series
            .samples()
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let scale = 2.0 / self.len as f64;
        let radii = modes.iter().map(|&m| scale * buf[m].norm()).collect();
        Ok(LiouvilleRadii {
            modes: modes.to_vec(),
            radii,
        })
    }
}

/// `r_L = 2|f̂(L)|` for each requested mode.
pub fn fourier_amplitudes(series: &TimeSeries, modes: &[usize]) -> Result<LiouvilleRadii> {
    FourierAnalyzer::new(series.len())?.amplitudes(series, modes)
}
