//! Closed-form barcodes of the Liouville torus along a filtration ray or a
//! piecewise-linear filtration curve.
//!
//! Each circle `r_L·S¹` of the torus contributes, in homology dimension
//! `n_L`, the interval `(0, ∞)` when `n_L = 0`, the interval between the
//! thresholds `2r sin(πk/(2k+1))` and `2r sin(π(k+1)/(2k+3))` when
//! `n_L = 2k+1`, and nothing for even `n_L ≥ 2`. The product filtration has
//! one bar per composition `n_1 + … + n_N = n`, equal to the intersection of
//! the per-mode intervals after each threshold is pulled back through the
//! filtration's `L`-th coordinate.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::direction::{rho, validate_direction};
use crate::error::{EmphError, Result};
use crate::spectral::LiouvilleRadii;

/// Per-mode homology dimensions `(n_1, …, n_N)`; each entry is zero or odd.
pub type Composition = Vec<u32>;

/// All compositions of `dim` into `n_modes` parts that are zero or odd.
///
/// Ordered by the number of nonzero parts, then lexicographically from the
/// largest leading part down, e.g. `(3,0,0), (0,3,0), (0,0,3), (1,1,1)`.
pub fn enumerate_compositions(n_modes: usize, dim: u32) -> Vec<Composition> {
    fn fill(pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Composition>) {
        let n_modes = current.len();
        if pos == n_modes {
            if remaining == 0 {
                out.push(current.clone());
            }
            return;
        }
        let mut part = remaining;
        loop {
            if part == 0 || part % 2 == 1 {
                current[pos] = part;
                fill(pos + 1, remaining - part, current, out);
            }
            if part == 0 {
                break;
            }
            part -= 1;
        }
        current[pos] = 0;
    }

    if n_modes == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    fill(0, dim, &mut vec![0; n_modes], &mut out);
    out.sort_by_key(|c| c.iter().filter(|&&p| p > 0).count());
    out
}

/// Barcode of a single circle of radius `r` in one homology dimension,
/// in unscaled filtration units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircleInterval {
    /// `(0, ∞)`, dimension 0.
    Always,
    /// `(birth, death]`.
    Between { birth: f64, death: f64 },
    /// No class in this dimension.
    Empty,
}

/// Birth and death thresholds of the class in dimension `2k+1`.
pub fn circle_thresholds(radius: f64, k: u32) -> (f64, f64) {
    let k = k as f64;
    let birth = 2.0 * radius * (PI * k / (2.0 * k + 1.0)).sin();
    let death = 2.0 * radius * (PI * (k + 1.0) / (2.0 * k + 3.0)).sin();
    (birth, death)
}

pub fn circle_interval(radius: f64, n_l: u32) -> Result<CircleInterval> {
    if n_l == 0 {
        return Ok(CircleInterval::Always);
    }
    if n_l % 2 == 0 {
        return Err(EmphError::domain(format!(
            "a circle has no persistent homology in even dimension {n_l}"
        )));
    }
    if radius <= 0.0 {
        return Ok(CircleInterval::Empty);
    }
    let (birth, death) = circle_thresholds(radius, (n_l - 1) / 2);
    Ok(CircleInterval::Between { birth, death })
}

/// A half-open interval `(birth, death]` in dimension `dimension`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub birth: f64,
    pub death: f64,
    pub dimension: u32,
}

impl Bar {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_finite(&self) -> bool {
        self.death.is_finite()
    }
}

/// Bars of one homology dimension, in a fixed order: by birth, then death,
/// then the position of the generating composition in
/// [`enumerate_compositions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barcode {
    pub dimension: u32,
    pub bars: Vec<Bar>,
}

impl Barcode {
    pub fn empty(dimension: u32) -> Self {
        Self {
            dimension,
            bars: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bar> {
        self.bars.iter()
    }
}

/// Which mode and which curve segment produced each endpoint of a bar.
///
/// `birth_mode` and `death_mode` are the arg-max / arg-min of the per-mode
/// endpoints, smallest mode index on ties. `death_mode` is `None` for an
/// infinite bar. Segment indices are zero-based and `None` for modes with
/// `n_L = 0`; along a ray every used segment index is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarOrigin {
    pub composition: Composition,
    pub birth_mode: usize,
    pub death_mode: Option<usize>,
    pub birth_segments: Vec<Option<usize>>,
    pub death_segments: Vec<Option<usize>>,
}

impl BarOrigin {
    /// Unscaled threshold of the mode that fixes the birth (0 when that mode has `n_L = 0`).
    pub fn birth_threshold(&self, radii: &LiouvilleRadii) -> f64 {
        match self.composition[self.birth_mode] {
            0 => 0.0,
            p => circle_thresholds(radii.radii()[self.birth_mode], (p - 1) / 2).0,
        }
    }

    /// Unscaled threshold of the mode that fixes the death, if finite.
    pub fn death_threshold(&self, radii: &LiouvilleRadii) -> Option<f64> {
        self.death_mode.map(|l| {
            let p = self.composition[l];
            circle_thresholds(radii.radii()[l], (p - 1) / 2).1
        })
    }
}

/// Piecewise-linear monotone curve made of `R` segments of parameter
/// length `Q/R`, each travelled at speed `√N` along `ρ(a^s)`.
///
/// A single segment is a ray through the origin. Past `t = Q` the last
/// segment is extended indefinitely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationCurve {
    directions: Vec<Vec<f64>>,
    horizon: f64,
}

impl FiltrationCurve {
    pub fn new(directions: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        let Some(first) = directions.first() else {
            return Err(EmphError::input("a filtration curve needs at least one segment"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(EmphError::input("direction vectors must be nonempty"));
        }
        for a in &directions {
            validate_direction(a, dim)?;
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(EmphError::domain(format!(
                "curve horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            directions,
            horizon,
        })
    }

    /// A ray along `a`.
    pub fn ray(a: Vec<f64>) -> Result<Self> {
        Self::new(vec![a], 1.0)
    }

    /// `R` copies of the all-ones direction in `N` dimensions.
    pub fn diagonal(dim: usize, segments: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![vec![1.0; dim]; segments.max(1)], horizon)
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> usize {
        self.directions.len()
    }

    pub fn dim(&self) -> usize {
        self.directions[0].len()
    }

    /// Same breakpoints, new directions.
    pub fn with_directions(&self, directions: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(directions, self.horizon)
    }
}

/// Precomputed normalized directions and breakpoint coordinates of a curve.
#[derive(Debug, Clone)]
pub(crate) struct CurveGeometry {
    /// `ρ^s_L`, indexed `[s][L]`.
    pub(crate) rhos: Vec<Vec<f64>>,
    /// `c̃_L(sQ/R)` for `s = 0..=R`, indexed `[s][L]`.
    pub(crate) breakpoints: Vec<Vec<f64>>,
    pub(crate) step: f64,
    pub(crate) sqrt_n: f64,
}

impl CurveGeometry {
    pub(crate) fn new(curve: &FiltrationCurve) -> Result<Self> {
        let dim = curve.dim();
        let sqrt_n = (dim as f64).sqrt();
        let step = curve.horizon / curve.segments() as f64;
        let rhos = curve
            .directions
            .iter()
            .map(|a| rho(a))
            .collect::<Result<Vec<_>>>()?;
        let mut breakpoints = vec![vec![0.0; dim]];
        for r in &rhos {
            let prev = breakpoints.last().unwrap();
            let next = (0..dim).map(|l| prev[l] + sqrt_n * step * r[l]).collect();
            breakpoints.push(next);
        }
        Ok(Self {
            rhos,
            breakpoints,
            step,
            sqrt_n,
        })
    }

    /// Zero-based segment whose image contains `threshold` on coordinate `mode`.
    pub(crate) fn segment_of(&self, mode: usize, threshold: f64) -> usize {
        let last = self.rhos.len() - 1;
        (0..last)
            .find(|&s| threshold <= self.breakpoints[s + 1][mode])
            .unwrap_or(last)
    }

    /// `c̃_L^{-1}(threshold)` and the segment used.
    pub(crate) fn invert(&self, mode: usize, threshold: f64) -> (f64, usize) {
        let s = self.segment_of(mode, threshold);
        let t = (threshold - self.breakpoints[s][mode]) / (self.sqrt_n * self.rhos[s][mode])
            + s as f64 * self.step;
        (t, s)
    }
}

/// Turns per-mode filtration times into bars. `time_of(mode, threshold)`
/// returns the filtration time at which coordinate `mode` reaches
/// `threshold`, plus the segment that was used.
fn assemble<F>(radii: &LiouvilleRadii, dim: u32, mut time_of: F) -> Result<(Barcode, Vec<BarOrigin>)>
where
    F: FnMut(usize, f64) -> (f64, usize),
{
    let n_modes = radii.dim();
    let mut found: Vec<(usize, Bar, BarOrigin)> = Vec::new();
    'comp: for (index, comp) in enumerate_compositions(n_modes, dim).into_iter().enumerate() {
        let mut birth = 0.0f64;
        let mut birth_mode = 0usize;
        let mut death = f64::INFINITY;
        let mut death_mode = None;
        let mut birth_segments = vec![None; n_modes];
        let mut death_segments = vec![None; n_modes];
        for (l, &part) in comp.iter().enumerate() {
            let (b, d) = match circle_interval(radii.radii()[l], part)? {
                CircleInterval::Always => (0.0, f64::INFINITY),
                CircleInterval::Empty => continue 'comp,
                CircleInterval::Between { birth, death } => {
                    let (tb, sb) = time_of(l, birth);
                    let (td, sd) = time_of(l, death);
                    birth_segments[l] = Some(sb);
                    death_segments[l] = Some(sd);
                    (tb, td)
                }
            };
            if b > birth {
                birth = b;
                birth_mode = l;
            }
            if d < death {
                death = d;
                death_mode = Some(l);
            }
        }
        if birth >= death {
            continue;
        }
        let bar = Bar {
            birth,
            death,
            dimension: dim,
        };
        let origin = BarOrigin {
            composition: comp,
            birth_mode,
            death_mode,
            birth_segments,
            death_segments,
        };
        found.push((index, bar, origin));
    }
    found.sort_by(|(ia, a, _), (ib, b, _)| {
        a.birth
            .total_cmp(&b.birth)
            .then(a.death.total_cmp(&b.death))
            .then(ia.cmp(ib))
    });
    let (bars, origins) = found.into_iter().map(|(_, b, o)| (b, o)).unzip();
    Ok((
        Barcode {
            dimension: dim,
            bars,
        },
        origins,
    ))
}

/// Barcode along the ray `t ↦ √N t a/‖a‖`.
pub fn ray_barcode(
    radii: &LiouvilleRadii,
    direction: &[f64],
    dim: u32,
) -> Result<(Barcode, Vec<BarOrigin>)> {
    validate_direction(direction, radii.dim())?;
    let rho = rho(direction)?;
    let sqrt_n = (radii.dim() as f64).sqrt();
    assemble(radii, dim, |l, threshold| (threshold / (sqrt_n * rho[l]) + 0.0, 0))
}

/// Barcode along a piecewise-linear filtration curve.
pub fn curve_barcode(
    radii: &LiouvilleRadii,
    curve: &FiltrationCurve,
    dim: u32,
) -> Result<(Barcode, Vec<BarOrigin>)> {
    if curve.dim() != radii.dim() {
        return Err(EmphError::input(format!(
            "curve lives in {} dimensions but the torus has {} modes",
            curve.dim(),
            radii.dim()
        )));
    }
    let geometry = CurveGeometry::new(curve)?;
    assemble(radii, dim, |l, threshold| geometry.invert(l, threshold))
}

/// A smooth increasing curve given as a dense table `t_i ↦ c(t_i)`.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    params: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl SampledCurve {
    /// Requires `c(t_0) = 0`, strictly increasing parameters, and every
    /// coordinate strictly increasing so that each `c_L` is invertible.
    pub fn new(params: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if params.len() < 2 || params.len() != points.len() {
            return Err(EmphError::input(
                "a sampled curve needs at least two (parameter, point) rows of matching length",
            ));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(EmphError::input("sampled points must share one nonzero dimension"));
        }
        if points[0].iter().any(|v| v.abs() > 1e-12) {
            return Err(EmphError::input("a filtration curve must start at the origin"));
        }
        for i in 1..params.len() {
            if !(params[i] > params[i - 1]) {
                return Err(EmphError::input(format!(
                    "curve parameters must increase strictly (row {i})"
                )));
            }
            if let Some(l) = (0..dim).find(|&l| !(points[i][l] > points[i - 1][l])) {
                return Err(EmphError::input(format!(
                    "coordinate {l} of the sampled curve is not strictly increasing at row {i}"
                )));
            }
        }
        Ok(Self { params, points })
    }

    /// Samples `f` at `samples` evenly spaced parameters in `[0, t_max]`.
    pub fn from_fn(t_max: f64, samples: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let samples = samples.max(2);
        let params: Vec<f64> = (0..samples)
            .map(|i| t_max * i as f64 / (samples - 1) as f64)
            .collect();
        let points = params.iter().map(|&t| f(t)).collect();
        Self::new(params, points)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Cumulative polyline length divided by `√N`, i.e. the parameter of
    /// the `√N`-speed reparametrisation.
    fn speed_params(&self) -> Vec<f64> {
        let sqrt_n = (self.dim() as f64).sqrt();
        let mut out = vec![0.0];
        for w in self.points.windows(2) {
            let seg: f64 = w[0]
                .iter()
                .zip(&w[1])
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt();
            out.push(out.last().unwrap() + seg / sqrt_n);
        }
        out
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[i], ys[i + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Max endpoint error of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementEntry {
    pub segments: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub entries: Vec<RefinementEntry>,
}

impl RefinementReport {
    pub fn is_non_increasing(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].max_error <= w[0].max_error)
    }
}

/// Compares the barcode of `R`-segment interpolants of a smooth curve with
/// the barcode obtained by inverting the dense sample table directly.
///
/// The curve is first reparametrised to constant speed `√N` (the speed of
/// every piecewise-linear filtration curve); interpolant `R` joins the
/// reparametrised curve's points at `sQ/R`.
pub fn refine_check(
    radii: &LiouvilleRadii,
    curve: &SampledCurve,
    segment_counts: &[usize],
    dim: u32,
) -> Result<RefinementReport> {
    if curve.dim() != radii.dim() {
        return Err(EmphError::input(format!(
            "curve lives in {} dimensions but the torus has {} modes",
            curve.dim(),
            radii.dim()
        )));
    }
    let taus = curve.speed_params();
    let horizon = *taus.last().unwrap();
    let coords: Vec<Vec<f64>> = (0..curve.dim())
        .map(|l| curve.points.iter().map(|p| p[l]).collect())
        .collect();
    let (limit, limit_origins) = assemble(radii, dim, |l, threshold| {
        (interpolate(&coords[l], &taus, threshold), 0)
    })?;

    let mut entries = Vec::with_capacity(segment_counts.len());
    for &r in segment_counts {
        if r == 0 {
            return Err(EmphError::input("segment counts must be positive"));
        }
        let knots: Vec<Vec<f64>> = (0..=r)
            .map(|s| {
                let tau = horizon * s as f64 / r as f64;
                coords.iter().map(|c| interpolate(&taus, c, tau)).collect()
            })
            .collect();
        let directions = knots
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect();
        let approx = FiltrationCurve::new(directions, horizon)?;
        let (bars, origins) = curve_barcode(radii, &approx, dim)?;
        entries.push(RefinementEntry {
            segments: r,
            max_error: barcode_distance(&limit, &limit_origins, &bars, &origins),
        });
    }
    Ok(RefinementReport { entries })
}

/// Max endpoint difference between bars generated by the same composition;
/// a bar present on one side only counts its half-persistence.
fn barcode_distance(a: &Barcode, ao: &[BarOrigin], b: &Barcode, bo: &[BarOrigin]) -> f64 {
    let endpoint_gap = |x: f64, y: f64| {
        if x == y {
            0.0
        } else {
            (x - y).abs()
        }
    };
    let mut worst = 0.0f64;
    for (bar, origin) in a.bars.iter().zip(ao) {
        match bo.iter().position(|o| o.composition == origin.composition) {
            Some(j) => {
                let other = &b.bars[j];
                worst = worst
                    .max(endpoint_gap(bar.birth, other.birth))
                    .max(endpoint_gap(bar.death, other.death));
            }
            None => worst = worst.max(bar.persistence() / 2.0),
        }
    }
    for (bar, origin) in b.bars.iter().zip(bo) {
        if !ao.iter().any(|o| o.composition == origin.composition) {
            worst = worst.max(bar.persistence() / 2.0);
        }
    }
    worst
}

/// Lexicographic comparison helper used by tests and callers that need a
/// canonical multiset order independent of origins.
pub fn compare_bars(a: &Bar, b: &Bar) -> Ordering {
    a.birth.total_cmp(&b.birth).then(a.death.total_cmp(&b.death))
}
