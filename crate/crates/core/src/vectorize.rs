//! Persistence images on a birth–persistence lattice, Min-Max scaling and
//! the analytic derivatives of pixels with respect to bar endpoints.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::barcode::{Bar, Barcode};
use crate::error::{EmphError, Result};

/// Uniform `r × r` lattice on `[x_lo, x_hi] × [y_lo, y_hi]`, endpoints
/// included. Pixel `v = ix·r + iy` sits at birth `x_ix`, persistence `y_iy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    resolution: usize,
    birth_range: (f64, f64),
    persistence_range: (f64, f64),
    sigma: f64,
}

impl ImageGrid {
    pub fn new(
        resolution: usize,
        birth_range: (f64, f64),
        persistence_range: (f64, f64),
        sigma: f64,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(EmphError::input("image resolution must be positive"));
        }
        for (name, (lo, hi)) in [("birth", birth_range), ("persistence", persistence_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(EmphError::input(format!(
                    "{name} range must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(EmphError::input(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self {
            resolution,
            birth_range,
            persistence_range,
            sigma,
        })
    }

    /// Grid covering `[0, c2·max birth] × [0, c2·max persistence]` over all
    /// finite bars. With every birth at zero the birth axis reuses the
    /// persistence span.
    pub fn covering<'a>(
        barcodes: impl IntoIterator<Item = &'a Barcode>,
        resolution: usize,
        sigma: f64,
        c2: f64,
    ) -> Result<Self> {
        let (mut max_birth, mut max_pers) = (0.0f64, 0.0f64);
        for bar in barcodes.into_iter().flat_map(|b| b.bars.iter()).filter(|b| b.is_finite()) {
            max_birth = max_birth.max(bar.birth);
            max_pers = max_pers.max(bar.persistence());
        }
        if max_pers <= 0.0 {
            return Err(EmphError::input(
                "cannot place an image grid: no finite bar with positive persistence",
            ));
        }
        let y_hi = c2 * max_pers;
        let x_hi = if max_birth > 0.0 { c2 * max_birth } else { y_hi };
        Self::new(resolution, (0.0, x_hi), (0.0, y_hi), sigma)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn birth_range(&self) -> (f64, f64) {
        self.birth_range
    }

    pub fn persistence_range(&self) -> (f64, f64) {
        self.persistence_range
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.resolution, self.birth_range, self.persistence_range, sigma)
    }

    /// Number of pixels, `r²`.
    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn axis(&self, (lo, hi): (f64, f64), i: usize) -> f64 {
        if self.resolution == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64
        }
    }

    /// `(x_v, y_v)` for every pixel in index order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let r = self.resolution;
        let mut out = Vec::with_capacity(r * r);
        for ix in 0..r {
            let x = self.axis(self.birth_range, ix);
            for iy in 0..r {
                out.push((x, self.axis(self.persistence_range, iy)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceImage {
    pub values: Vec<f64>,
}

impl PersistenceImage {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_finite(bars: &[Bar]) -> Result<()> {
    if let Some(j) = bars.iter().position(|b| !b.is_finite()) {
        return Err(EmphError::input(format!(
            "bar {j} has infinite death; filter dimension-0 bars before drawing an image"
        )));
    }
    Ok(())
}

/// Normalized isotropic Gaussian centred on `(b, d − b)`.
#[inline]
fn gaussian(bar: &Bar, x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let dx = x - bar.birth;
    let dy = y - bar.persistence();
    (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / (2.0 * PI * s2)
}

/// Persistence-weighted sum of Gaussians evaluated at the grid points.
pub fn persistence_image(barcode: &Barcode, grid: &ImageGrid) -> Result<PersistenceImage> {
    check_finite(&barcode.bars)?;
    let sigma = grid.sigma();
    let values = grid
        .points()
        .into_iter()
        .map(|(x, y)| {
            barcode
                .bars
                .iter()
                .map(|bar| bar.persistence() * gaussian(bar, x, y, sigma))
                .sum()
        })
        .collect();
    Ok(PersistenceImage { values })
}

/// Affine map sending the minimum to 0 and the maximum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScale {
    pub min: f64,
    pub max: f64,
    /// `max − min`, or 1 when the input is constant.
    pub divisor: f64,
    pub degenerate: bool,
    /// First index attaining the minimum / maximum.
    pub argmin: usize,
    pub argmax: usize,
}

pub fn minmax_scale(values: &[f64]) -> (Vec<f64>, MinMaxScale) {
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v < values[argmin] {
            argmin = i;
        }
        if v > values[argmax] {
            argmax = i;
        }
    }
    let (min, max) = match values.len() {
        0 => (0.0, 0.0),
        _ => (values[argmin], values[argmax]),
    };
    let degenerate = !(max > min);
    let divisor = if degenerate { 1.0 } else { max - min };
    let scaled = if degenerate {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| (v - min) / divisor).collect()
    };
    (
        scaled,
        MinMaxScale {
            min,
            max,
            divisor,
            degenerate,
            argmin,
            argmax,
        },
    )
}

/// How the backward pass treats the Min-Max scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleGradient {
    /// `I_max − I_min` held constant: `∂L/∂I = u / (I_max − I_min)`.
    #[default]
    Frozen,
    /// Also differentiates through the extreme pixels.
    Exact,
}

/// Pulls `∂L/∂Φ` (gradient w.r.t. the scaled image) back to `∂L/∂I`.
///
/// `scaled` is the forward output of [`minmax_scale`]. A constant image is
/// always handled as in [`ScaleGradient::Frozen`] with divisor 1.
pub fn minmax_pullback(
    upstream: &[f64],
    scaled: &[f64],
    scale: &MinMaxScale,
    mode: ScaleGradient,
) -> Vec<f64> {
    let d = scale.divisor;
    let mut g: Vec<f64> = upstream.iter().map(|u| u / d).collect();
    if mode == ScaleGradient::Exact && !scale.degenerate {
        let total: f64 = upstream.iter().sum();
        let weighted: f64 = upstream.iter().zip(scaled).map(|(u, p)| u * p).sum();
        g[scale.argmin] += (weighted - total) / d;
        g[scale.argmax] -= weighted / d;
    }
    g
}

/// `∂I_v/∂b_j` and `∂I_v/∂d_j` as `r² × p` matrices.
pub fn image_endpoint_gradients(
    barcode: &Barcode,
    grid: &ImageGrid,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_finite(&barcode.bars)?;
    let points = grid.points();
    let p = barcode.len();
    let sigma = grid.sigma();
    let s2 = sigma * sigma;
    let mut db = Array2::zeros((points.len(), p));
    let mut dd = Array2::zeros((points.len(), p));
    for (v, &(x, y)) in points.iter().enumerate() {
        for (j, bar) in barcode.bars.iter().enumerate() {
            let g = gaussian(bar, x, y, sigma);
            let pers = bar.persistence();
            db[[v, j]] = g * (-1.0 + pers * ((bar.death - 2.0 * bar.birth) + (x - y)) / s2);
            dd[[v, j]] = g * (1.0 + pers * (y - pers) / s2);
        }
    }
    Ok((db, dd))
}

/// `uᵀ ∂I/∂b` and `uᵀ ∂I/∂d` without materialising the matrices.
pub fn endpoint_pullback(
    upstream: &[f64],
    barcode: &Barcode,
    grid: &ImageGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_finite(&barcode.bars)?;
    if upstream.len() != grid.len() {
        return Err(EmphError::internal(format!(
            "image gradient has {} entries, grid has {} pixels",
            upstream.len(),
            grid.len()
        )));
    }
    let sigma = grid.sigma();
    let s2 = sigma * sigma;
    let p = barcode.len();
    let (mut gb, mut gd) = (vec![0.0; p], vec![0.0; p]);
    for ((x, y), &u) in grid.points().into_iter().zip(upstream) {
        if u == 0.0 {
            continue;
        }
        for (j, bar) in barcode.bars.iter().enumerate() {
            let g = u * gaussian(bar, x, y, sigma);
            let pers = bar.persistence();
            gb[j] += g * (-1.0 + pers * ((bar.death - 2.0 * bar.birth) + (x - y)) / s2);
            gd[j] += g * (1.0 + pers * (y - pers) / s2);
        }
    }
    Ok((gb, gd))
}
