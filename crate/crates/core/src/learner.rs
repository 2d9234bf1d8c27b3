//! Filtration learning.
//!
//! The loss gradient with respect to the network input is pulled back
//! through Min-Max scaling, the persistence image and the closed-form bar
//! endpoints onto the normalized directions `ρ(a^s)`, and finally through
//! `∂ρ/∂a`. Directions are updated by a projected subgradient step:
//! `a ← clamp(ρ(a − α∇a), m, M)`.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::barcode::{curve_barcode, BarOrigin, Barcode, CurveGeometry, FiltrationCurve};
use crate::dataset::{stratified_folds, Dataset};
use crate::error::{EmphError, Result};
use crate::network::{argmax, batch_loss, Adam, DenseNet};
use crate::spectral::{FourierAnalyzer, LiouvilleRadii};
use crate::vectorize::{
    endpoint_pullback, minmax_pullback, minmax_scale, persistence_image, ImageGrid, MinMaxScale,
    ScaleGradient,
};

pub use crate::direction::{rho, rho_jacobian};

/// Componentwise bounds `[lower, upper]` on normalized directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBox {
    pub lower: f64,
    pub upper: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ConstraintBox {
    pub fn new(lower: f64, upper: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(EmphError::domain(format!(
                "constraint box needs 0 < m <= M, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper, c1, c2 })
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().all(|&x| x >= self.lower && x <= self.upper)
    }
}

/// Smallest admissible lower bound, `0.01/√N`.
pub fn epsilon_floor(dim: usize) -> f64 {
    0.01 / (dim as f64).sqrt()
}

/// Box in ρ-space derived from barcodes taken along the diagonal.
///
/// Along a ray every endpoint scales like `ρ₀/ρ_L` with `ρ₀ = 1/√N`. The
/// lower bound `max(ε, ρ₀/c2)` keeps every endpoint below `c2` times its
/// diagonal value; the upper bound `min(1, ρ₀/c1)` keeps endpoints above
/// `c1` times the smallest diagonal birth. When that birth is zero (always
/// the case in dimension 1) the upper bound is the trivial 1.
pub fn constraint_bounds(
    barcodes: &[Barcode],
    dim: usize,
    c1: f64,
    c2: f64,
    eps_floor: f64,
) -> Result<ConstraintBox> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(EmphError::input(format!("c1 and c2 must be positive, got {c1}, {c2}")));
    }
    let min_birth = barcodes
        .iter()
        .flat_map(|b| b.bars.iter())
        .map(|b| b.birth)
        .fold(f64::INFINITY, f64::min);
    if !min_birth.is_finite() {
        return Err(EmphError::input("cannot derive constraint bounds from empty barcodes"));
    }
    let rho0 = 1.0 / (dim as f64).sqrt();
    let lower = eps_floor.max(rho0 / c2);
    let upper = if min_birth > 0.0 { (rho0 / c1).min(1.0) } else { 1.0 };
    ConstraintBox::new(lower, upper.max(lower), c1, c2)
}

/// Componentwise clamp into `[m, M]`; idempotent.
pub fn clamp_to_box(v: &[f64], bounds: &ConstraintBox) -> Vec<f64> {
    v.iter().map(|x| x.clamp(bounds.lower, bounds.upper)).collect()
}

/// `clamp(ρ(a_half), m, M)`. The result need not have unit norm.
pub fn project(a_half: &[f64], bounds: &ConstraintBox) -> Result<Vec<f64>> {
    Ok(clamp_to_box(&rho(a_half)?, bounds))
}

fn check_origins(radii: &LiouvilleRadii, origins: &[BarOrigin], segments: usize) -> Result<()> {
    for (j, o) in origins.iter().enumerate() {
        let consistent = o.composition.len() == radii.dim()
            && o.birth_segments.len() == radii.dim()
            && o.death_segments.len() == radii.dim()
            && o
                .birth_segments
                .iter()
                .chain(&o.death_segments)
                .all(|s| s.is_none_or(|s| s < segments));
        if !consistent {
            return Err(EmphError::internal(format!(
                "bar origin {j} does not belong to a {}-mode, {segments}-segment barcode",
                radii.dim()
            )));
        }
    }
    Ok(())
}

/// `∂b_j/∂ρ_L` and `∂d_j/∂ρ_L` (`p × N`) along the ray with unit direction `ρ`.
pub fn ray_sensitivities(
    radii: &LiouvilleRadii,
    rho: &[f64],
    origins: &[BarOrigin],
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_origins(radii, origins, 1)?;
    if rho.len() != radii.dim() {
        return Err(EmphError::internal("direction and radii disagree on N"));
    }
    let sqrt_n = (radii.dim() as f64).sqrt();
    let p = origins.len();
    let mut db = Array2::zeros((p, radii.dim()));
    let mut dd = Array2::zeros((p, radii.dim()));
    for (j, o) in origins.iter().enumerate() {
        let l = o.birth_mode;
        if o.composition[l] > 0 {
            db[[j, l]] = -o.birth_threshold(radii) / (sqrt_n * (rho[l] * rho[l]));
        }
        if let (Some(l), Some(u)) = (o.death_mode, o.death_threshold(radii)) {
            dd[[j, l]] = -u / (sqrt_n * (rho[l] * rho[l]));
        }
    }
    Ok((db, dd))
}

/// Calls `emit(i, ∂t/∂ρ^i_mode)` for the filtration time at which
/// coordinate `mode` reaches `threshold` on zero-based segment `seg`.
fn time_partials(geom: &CurveGeometry, mode: usize, seg: usize, threshold: f64, mut emit: impl FnMut(usize, f64)) {
    let r = geom.rhos[seg][mode];
    let r2 = r * r;
    let mut before = 0.0;
    for i in 0..seg {
        before += geom.rhos[i][mode];
        emit(i, -geom.step / r);
    }
    emit(seg, -threshold / (geom.sqrt_n * r2) + geom.step * before / r2);
}

/// Endpoint derivatives for one curve segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSensitivity {
    /// `∂b_j/∂ρ^s_L`, `p × N`.
    pub birth: Array2<f64>,
    /// `∂d_j/∂ρ^s_L`, `p × N`.
    pub death: Array2<f64>,
}

/// Endpoint derivatives with respect to every segment direction `ρ^s`.
pub fn curve_sensitivities(
    radii: &LiouvilleRadii,
    curve: &FiltrationCurve,
    origins: &[BarOrigin],
) -> Result<Vec<SegmentSensitivity>> {
    check_origins(radii, origins, curve.segments())?;
    let geom = CurveGeometry::new(curve)?;
    let (p, n) = (origins.len(), radii.dim());
    let mut out = vec![
        SegmentSensitivity {
            birth: Array2::zeros((p, n)),
            death: Array2::zeros((p, n)),
        };
        curve.segments()
    ];
    for (j, o) in origins.iter().enumerate() {
        let l = o.birth_mode;
        if let (true, Some(seg)) = (o.composition[l] > 0, o.birth_segments[l]) {
            time_partials(&geom, l, seg, o.birth_threshold(radii), |i, v| out[i].birth[[j, l]] = v);
        }
        if let (Some(l), Some(u)) = (o.death_mode, o.death_threshold(radii)) {
            let seg = o.death_segments[l].expect("finite death has a segment");
            time_partials(&geom, l, seg, u, |i, v| out[i].death[[j, l]] = v);
        }
    }
    Ok(out)
}

/// `∂L/∂a^s` for one sample from already-materialized factors.
///
/// `input_gradient` is `∂L/∂Φ` for the scaled image `scaled`;
/// `endpoint` holds `∂I/∂b` and `∂I/∂d` (`r² × p`).
pub fn direction_gradient(
    input_gradient: &[f64],
    scaled: &[f64],
    scale: &MinMaxScale,
    mode: ScaleGradient,
    endpoint: (&Array2<f64>, &Array2<f64>),
    sensitivities: &[SegmentSensitivity],
    curve: &FiltrationCurve,
) -> Result<Vec<Vec<f64>>> {
    let (di_db, di_dd) = endpoint;
    if input_gradient.len() != di_db.nrows() || scaled.len() != input_gradient.len() {
        return Err(EmphError::internal("image gradient and endpoint matrices disagree"));
    }
    if sensitivities.len() != curve.segments() {
        return Err(EmphError::internal("one sensitivity block per segment is required"));
    }
    let u = ndarray::Array1::from(minmax_pullback(input_gradient, scaled, scale, mode));
    let gb = di_db.t().dot(&u);
    let gd = di_dd.t().dot(&u);
    sensitivities
        .iter()
        .zip(curve.directions())
        .map(|(sens, a)| {
            if sens.birth.nrows() != gb.len() {
                return Err(EmphError::internal("sensitivities and image disagree on bar count"));
            }
            let grad_rho = sens.birth.t().dot(&gb) + sens.death.t().dot(&gd);
            Ok(rho_jacobian(a)?.dot(&grad_rho).to_vec())
        })
        .collect()
}

/// Adds `Σ_j g_b[j] ∂b_j/∂ρ^s + g_d[j] ∂d_j/∂ρ^s` into `acc[s]`.
fn accumulate_rho_gradient(
    geom: &CurveGeometry,
    radii: &LiouvilleRadii,
    origins: &[BarOrigin],
    gb: &[f64],
    gd: &[f64],
    acc: &mut [Vec<f64>],
) {
    for (j, o) in origins.iter().enumerate() {
        let l = o.birth_mode;
        if let (true, Some(seg)) = (o.composition[l] > 0, o.birth_segments[l]) {
            let c = gb[j];
            time_partials(geom, l, seg, o.birth_threshold(radii), |i, v| acc[i][l] += c * v);
        }
        if let (Some(l), Some(u)) = (o.death_mode, o.death_threshold(radii)) {
            let seg = o.death_segments[l].expect("finite death has a segment");
            let c = gd[j];
            time_partials(geom, l, seg, u, |i, v| acc[i][l] += c * v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// `α_k = α`.
    #[default]
    Constant,
    /// `α_k = α/(1 + k)`.
    Harmonic,
}

impl Schedule {
    pub fn rate(self, base: f64, epoch: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Harmonic => base / (1.0 + epoch as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    #[default]
    Exact,
    /// Forward differences of the full pipeline loss.
    FiniteDifference,
}

/// Update rule for the network weights. Directions always take projected
/// subgradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetOptimizer {
    /// Plain gradient descent on the summed loss.
    #[default]
    Sgd,
    Adam,
}

impl std::str::FromStr for NetOptimizer {
    type Err = EmphError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(EmphError::input(format!("unknown optimizer {other:?}; expected sgd or adam"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub modes: Vec<usize>,
    pub dimension: u32,
    pub segments: usize,
    /// Curve parameter length `Q`; defaults to the largest finite diagonal death.
    pub horizon: Option<f64>,
    pub resolution: usize,
    pub sigma: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Defaults to `learning_rate`.
    pub direction_learning_rate: Option<f64>,
    pub schedule: Schedule,
    pub optimizer: NetOptimizer,
    pub seed: u64,
    pub c1: f64,
    pub c2: f64,
    pub learn_filtration: bool,
    pub scale_gradient: ScaleGradient,
    pub gradient_method: GradientMethod,
    pub fd_step: f64,
    /// One vector per segment; all-ones when absent.
    pub initial_directions: Option<Vec<Vec<f64>>>,
    pub folds: usize,
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            modes: vec![1, 2],
            dimension: 1,
            segments: 1,
            horizon: None,
            resolution: 10,
            sigma: 0.05,
            hidden: vec![50],
            epochs: 10_000,
            learning_rate: 0.001,
            direction_learning_rate: None,
            schedule: Schedule::Constant,
            optimizer: NetOptimizer::Sgd,
            seed: 0,
            c1: 0.5,
            c2: 2.0,
            learn_filtration: true,
            scale_gradient: ScaleGradient::Frozen,
            gradient_method: GradientMethod::Exact,
            fd_step: 1e-6,
            initial_directions: None,
            folds: 5,
            test_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EmphError::input(msg));
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        if self.dimension == 0 {
            return bad("dimension 0 has only an infinite bar and cannot be imaged; use n >= 1".into());
        }
        if self.segments == 0 {
            return bad("segments must be at least 1".into());
        }
        if let Some(q) = self.horizon {
            if !(q.is_finite() && q > 0.0) {
                return bad(format!("horizon must be positive, got {q}"));
            }
        }
        if self.resolution == 0 {
            return bad("resolution must be positive".into());
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be nonnegative, got {}", self.learning_rate));
        }
        if let Some(lr) = self.direction_learning_rate {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("direction_learning_rate must be nonnegative, got {lr}"));
            }
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c1 <= 1.0 && self.c2 >= 1.0) {
            return bad(format!("need 0 < c1 <= 1 <= c2, got c1 = {}, c2 = {}", self.c1, self.c2));
        }
        if !(self.fd_step > 0.0) {
            return bad(format!("fd_step must be positive, got {}", self.fd_step));
        }
        if let Some(dirs) = &self.initial_directions {
            if dirs.len() != self.segments {
                return bad(format!(
                    "{} initial directions for {} segments",
                    dirs.len(),
                    self.segments
                ));
            }
            for d in dirs {
                crate::direction::validate_direction(d, self.modes.len())?;
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction must lie in [0, 1), got {}", self.test_fraction));
        }
        Ok(())
    }

    pub fn direction_rate(&self, epoch: usize) -> f64 {
        self.schedule
            .rate(self.direction_learning_rate.unwrap_or(self.learning_rate), epoch)
    }
}

/// Everything needed to classify new series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub modes: Vec<usize>,
    pub dimension: u32,
    pub curve: FiltrationCurve,
    pub grid: ImageGrid,
    pub network: DenseNet,
}

/// Radii of every series, computed once.
pub fn dataset_radii(data: &Dataset, modes: &[usize]) -> Result<Vec<LiouvilleRadii>> {
    let analyzer = FourierAnalyzer::new(data.series_len().max(2))?;
    data.series().iter().map(|s| analyzer.amplitudes(s, modes)).collect()
}

struct Features {
    barcodes: Vec<(Barcode, Vec<BarOrigin>)>,
    scaled: Array2<f64>,
    scales: Vec<MinMaxScale>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub barcode_secs: f64,
    pub image_secs: f64,
    pub network_secs: f64,
    pub update_secs: f64,
}

fn featurize(
    radii: &[LiouvilleRadii],
    curve: &FiltrationCurve,
    grid: &ImageGrid,
    dim: u32,
    frozen: Option<&[MinMaxScale]>,
    timings: &mut PhaseTimings,
) -> Result<Features> {
    let t0 = Instant::now();
    let barcodes = radii
        .iter()
        .map(|r| curve_barcode(r, curve, dim))
        .collect::<Result<Vec<_>>>()?;
    let t1 = Instant::now();
    let mut scaled = Array2::zeros((radii.len(), grid.len()));
    let mut scales = Vec::with_capacity(radii.len());
    for (i, (bc, _)) in barcodes.iter().enumerate() {
        let img = persistence_image(bc, grid)?;
        let (mut row, mut scale) = minmax_scale(&img.values);
        if let Some(fixed) = frozen {
            scale = fixed[i];
            row = img.values.iter().map(|v| (v - scale.min) / scale.divisor).collect();
        }
        scaled.row_mut(i).assign(&ndarray::Array1::from(row));
        scales.push(scale);
    }
    timings.barcode_secs += (t1 - t0).as_secs_f64();
    timings.image_secs += t1.elapsed().as_secs_f64();
    Ok(Features {
        barcodes,
        scaled,
        scales,
    })
}

impl Model {
    fn features_of(&self, radii: &[LiouvilleRadii]) -> Result<Array2<f64>> {
        Ok(featurize(radii, &self.curve, &self.grid, self.dimension, None, &mut PhaseTimings::default())?.scaled)
    }

    /// Scaled persistence images of every series, one row each.
    pub fn features(&self, data: &Dataset) -> Result<Array2<f64>> {
        self.features_of(&dataset_radii(data, &self.modes)?)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        let x = self.features(data)?;
        let cache = self.network.forward(x.view())?;
        Ok(cache
            .probabilities
            .rows()
            .into_iter()
            .map(|r| argmax(&r.to_vec()))
            .collect())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(EmphError::input("cannot score an empty dataset"));
        }
        let labels = data.labels();
        let correct = self
            .predict(data)?
            .iter()
            .zip(&labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    fn loss_of(&self, radii: &[LiouvilleRadii], labels: &[usize], frozen: Option<&[MinMaxScale]>) -> Result<f64> {
        let f = featurize(radii, &self.curve, &self.grid, self.dimension, frozen, &mut PhaseTimings::default())?;
        batch_loss(&self.network.forward(f.scaled.view())?.probabilities, labels)
    }

    /// Summed cross-entropy over `data`.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        self.loss_of(&dataset_radii(data, &self.modes)?, &data.labels(), None)
    }

    fn exact_gradient_of(
        &self,
        radii: &[LiouvilleRadii],
        labels: &[usize],
        mode: ScaleGradient,
    ) -> Result<Vec<Vec<f64>>> {
        let f = featurize(radii, &self.curve, &self.grid, self.dimension, None, &mut PhaseTimings::default())?;
        let cache = self.network.forward(f.scaled.view())?;
        let grads = self.network.backward(&cache, labels)?;
        exact_direction_gradient(&self.curve, &self.grid, radii, &f, &grads.input, mode)
    }

    /// `∂L/∂a^s` of the summed loss, assembled from the closed forms.
    pub fn direction_gradient(&self, data: &Dataset, mode: ScaleGradient) -> Result<Vec<Vec<f64>>> {
        self.exact_gradient_of(&dataset_radii(data, &self.modes)?, &data.labels(), mode)
    }

    /// Central (or forward) differences of the summed loss in every `a^s_L`.
    ///
    /// With `freeze_scale` each image keeps the Min-Max record of the
    /// unperturbed pipeline, which is what [`ScaleGradient::Frozen`] differentiates.
    pub fn numeric_direction_gradient(
        &self,
        data: &Dataset,
        step: f64,
        central: bool,
        freeze_scale: bool,
    ) -> Result<Vec<Vec<f64>>> {
        let radii = dataset_radii(data, &self.modes)?;
        let labels = data.labels();
        let frozen = if freeze_scale {
            Some(featurize(&radii, &self.curve, &self.grid, self.dimension, None, &mut PhaseTimings::default())?.scales)
        } else {
            None
        };
        let base = if central { 0.0 } else { self.loss_of(&radii, &labels, frozen.as_deref())? };
        self.numeric_gradient_of(&radii, &labels, step, central, frozen.as_deref(), base)
    }

    fn numeric_gradient_of(
        &self,
        radii: &[LiouvilleRadii],
        labels: &[usize],
        step: f64,
        central: bool,
        frozen: Option<&[MinMaxScale]>,
        base_loss: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let dirs = self.curve.directions();
        let mut out = vec![vec![0.0; self.modes.len()]; dirs.len()];
        for s in 0..dirs.len() {
            for l in 0..self.modes.len() {
                let shifted = |h: f64| -> Result<f64> {
                    let mut d = dirs.to_vec();
                    d[s][l] += h;
                    let probe = Model {
                        curve: self.curve.with_directions(d)?,
                        ..self.clone()
                    };
                    probe.loss_of(radii, labels, frozen)
                };
                out[s][l] = if central {
                    (shifted(step)? - shifted(-step)?) / (2.0 * step)
                } else {
                    (shifted(step)? - base_loss) / step
                };
            }
        }
        Ok(out)
    }
}

fn exact_direction_gradient(
    curve: &FiltrationCurve,
    grid: &ImageGrid,
    radii: &[LiouvilleRadii],
    f: &Features,
    input_grad: &Array2<f64>,
    mode: ScaleGradient,
) -> Result<Vec<Vec<f64>>> {
    let geom = CurveGeometry::new(curve)?;
    let n = curve.dim();
    let mut acc = vec![vec![0.0; n]; curve.segments()];
    for (i, ((bc, origins), r)) in f.barcodes.iter().zip(radii).enumerate() {
        let upstream = input_grad.row(i).to_vec();
        let scaled = f.scaled.row(i).to_vec();
        let u = minmax_pullback(&upstream, &scaled, &f.scales[i], mode);
        let (gb, gd) = endpoint_pullback(&u, bc, grid)?;
        accumulate_rho_gradient(&geom, r, origins, &gb, &gd, &mut acc);
    }
    curve
        .directions()
        .iter()
        .zip(acc)
        .map(|(a, g)| Ok(rho_jacobian(a)?.dot(&ndarray::Array1::from(g)).to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy of each epoch, measured before its update.
    pub losses: Vec<f64>,
    /// Directions `[epoch][segment][mode]`; entry 0 is the starting point.
    pub trajectory: Vec<Vec<Vec<f64>>>,
    pub constraint_box: ConstraintBox,
    pub horizon: f64,
    pub grid: ImageGrid,
    /// Post-update direction components found outside the box.
    pub projection_violations: usize,
    pub timings: PhaseTimings,
}

/// Runs filtration learning on `data` and returns the trained model.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(Model, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(EmphError::input("training set is empty"));
    }
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(EmphError::input("training set must contain at least two classes"));
    }
    let radii = dataset_radii(data, &config.modes)?;
    train_on(&radii, &data.labels(), data.classes(), config)
}

fn train_on(
    radii: &[LiouvilleRadii],
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let n_modes = config.modes.len();
    let m = radii.len();
    let diagonal = FiltrationCurve::ray(vec![1.0; n_modes])?;
    let diagonal_bars = radii
        .iter()
        .map(|r| curve_barcode(r, &diagonal, config.dimension).map(|b| b.0))
        .collect::<Result<Vec<_>>>()?;
    let horizon = match config.horizon {
        Some(q) => q,
        None => {
            let q = diagonal_bars
                .iter()
                .flat_map(|b| b.bars.iter())
                .filter(|b| b.is_finite())
                .fold(0.0f64, |acc, b| acc.max(b.death));
            if q > 0.0 {
                q
            } else {
                1.0
            }
        }
    };
    let bounds = constraint_bounds(&diagonal_bars, n_modes, config.c1, config.c2, epsilon_floor(n_modes))?;

    let start = config
        .initial_directions
        .clone()
        .unwrap_or_else(|| vec![vec![1.0; n_modes]; config.segments]);
    let mut curve = FiltrationCurve::new(start, horizon)?;
    let grid = ImageGrid::covering(&diagonal_bars, config.resolution, config.sigma, config.c2)?;
    if config.learn_filtration {
        let projected = curve
            .directions()
            .iter()
            .map(|a| project(a, &bounds))
            .collect::<Result<Vec<_>>>()?;
        curve = curve.with_directions(projected)?;
    }

    let mut model = Model {
        modes: config.modes.clone(),
        dimension: config.dimension,
        curve,
        grid: grid.clone(),
        network: DenseNet::new(grid.len(), &config.hidden, classes, config.seed)?,
    };
    let mut timings = PhaseTimings::default();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut trajectory = Vec::with_capacity(config.epochs + 1);
    trajectory.push(model.curve.directions().to_vec());
    let mut violations = 0;
    let mut adam = (config.optimizer == NetOptimizer::Adam).then(|| Adam::new(&model.network));

    for epoch in 0..config.epochs {
        let f = featurize(radii, &model.curve, &grid, config.dimension, None, &mut timings)?;
        let t_net = Instant::now();
        let cache = model.network.forward(f.scaled.view())?;
        let total_loss = batch_loss(&cache.probabilities, labels)?;
        let grads = model.network.backward(&cache, labels)?;
        timings.network_secs += t_net.elapsed().as_secs_f64();
        losses.push(total_loss / m as f64);

        let t_upd = Instant::now();
        let dir_grad = if config.learn_filtration {
            Some(match config.gradient_method {
                GradientMethod::Exact => {
                    exact_direction_gradient(&model.curve, &grid, radii, &f, &grads.input, config.scale_gradient)?
                }
                GradientMethod::FiniteDifference => {
                    model.numeric_gradient_of(radii, labels, config.fd_step, false, None, total_loss)?
                }
            })
        } else {
            None
        };
        let lr = config.schedule.rate(config.learning_rate, epoch);
        if lr != 0.0 {
            match adam.as_mut() {
                Some(opt) => opt.step(&mut model.network, &grads, lr),
                None => model.network.step(&grads, lr),
            }
        }
        if let Some(g) = dir_grad {
            let alpha = config.direction_rate(epoch);
            let updated = model
                .curve
                .directions()
                .iter()
                .zip(&g)
                .map(|(a, ga)| {
                    let half: Vec<f64> = a.iter().zip(ga).map(|(x, d)| x - alpha * d).collect();
                    project(&half, &bounds)
                })
                .collect::<Result<Vec<_>>>()?;
            violations += updated
                .iter()
                .flatten()
                .filter(|&&v| !(v >= bounds.lower && v <= bounds.upper))
                .count();
            model.curve = model.curve.with_directions(updated)?;
        }
        trajectory.push(model.curve.directions().to_vec());
        timings.update_secs += t_upd.elapsed().as_secs_f64();
    }

    let report = TrainReport {
        losses,
        trajectory,
        constraint_box: bounds,
        horizon,
        grid,
        projection_violations: violations,
        timings,
    };
    Ok((model, report))
}

/// Trained model plus the configuration and box that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub constraint_box: ConstraintBox,
    pub config: TrainConfig,
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub learning_rate: f64,
    pub sigma: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCellResult {
    pub cell: CvCell,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub cells: Vec<CvCellResult>,
    /// Index of the best cell; the first one wins ties.
    pub best: usize,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCellResult {
        &self.cells[self.best]
    }
}

/// Applies a cell to a base configuration.
pub fn apply_cell(base: &TrainConfig, cell: &CvCell) -> TrainConfig {
    TrainConfig {
        learning_rate: cell.learning_rate,
        sigma: cell.sigma,
        segments: cell.segments,
        ..base.clone()
    }
}

/// Stratified `folds`-fold cross-validation of every cell.
pub fn crossval(data: &Dataset, base: &TrainConfig, cells: &[CvCell], folds: usize) -> Result<CvReport> {
    if cells.is_empty() {
        return Err(EmphError::input("the hyperparameter grid is empty"));
    }
    let held_out = stratified_folds(data, folds, base.seed)?;
    let radii = dataset_radii(data, &base.modes)?;
    let labels = data.labels();
    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let config = apply_cell(base, cell);
        config.validate()?;
        let mut accs = Vec::with_capacity(folds);
        for test_idx in &held_out {
            let mut is_test = vec![false; data.len()];
            for &i in test_idx {
                is_test[i] = true;
            }
            let pick = |want: bool| -> (Vec<LiouvilleRadii>, Vec<usize>) {
                (0..data.len())
                    .filter(|&i| is_test[i] == want)
                    .map(|i| (radii[i].clone(), labels[i]))
                    .unzip()
            };
            let (train_r, train_y) = pick(false);
            let (test_r, test_y) = pick(true);
            let (model, _) = train_on(&train_r, &train_y, data.classes(), &config)?;
            let x = model.features_of(&test_r)?;
            let probs = model.network.forward(x.view())?.probabilities;
            let correct = probs
                .rows()
                .into_iter()
                .zip(&test_y)
                .filter(|(row, &y)| argmax(&row.to_vec()) == y)
                .count();
            accs.push(correct as f64 / test_y.len() as f64);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        results.push(CvCellResult {
            cell: *cell,
            fold_accuracies: accs,
            mean_accuracy: mean,
        });
    }
    let best = results
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.mean_accuracy > results[b].mean_accuracy { i } else { b });
    Ok(CvReport {
        folds,
        cells: results,
        best,
    })
}
