//! Two-parameter persistence image and landscape, evaluated on supplied
//! vineyard decompositions and fibered barcodes.
//!
//! Nothing here computes two-parameter persistence. The inputs come from a
//! [`MultiparamFixture`] (usually a JSON file) and the functions only
//! evaluate the vectorization formulas on a regular grid over the
//! rectangle `[a, b] x [c, d]`.
//!
//! Grid point `g[i][j]` sits at `(a + i*dx, c + j*dy)` and is stored at
//! flat index `i * n + j`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EmphError, Result};

pub type Point = [f64; 2];

/// Bundled copy of the small worked example (three diagonal rays on
/// `[0,2]^2`, one three-bar summand and one single-bar summand).
pub const EXAMPLE_FIXTURE_JSON: &str = include_str!("../fixtures/example_c3.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoParamGrid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub n: usize,
    pub rays: usize,
    pub sigma: f64,
    pub q: f64,
}

impl TwoParamGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.d, self.sigma, self.q]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(EmphError::domain("grid parameters must be finite"));
        }
        if self.a >= self.b || self.c >= self.d {
            return Err(EmphError::domain(format!(
                "grid rectangle [{}, {}] x [{}, {}] is empty",
                self.a, self.b, self.c, self.d
            )));
        }
        if self.n < 2 {
            return Err(EmphError::domain("grid side resolution must be at least 2"));
        }
        if self.sigma <= 0.0 {
            return Err(EmphError::domain("sigma must be positive"));
        }
        if self.rays == 0 {
            return Err(EmphError::domain("ray count must be positive"));
        }
        Ok(())
    }

    fn dx(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    fn dy(&self) -> f64 {
        (self.d - self.c) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        [self.a + i as f64 * self.dx(), self.c + j as f64 * self.dy()]
    }

    pub fn area(&self) -> f64 {
        (self.b - self.a) * (self.d - self.c)
    }

    /// Origins of the diagonal rays used by the image: offsets of
    /// `delta = (width + height) / rays` along the bottom edge and the left
    /// edge, `floor(rays / 2) + 1` on each, with the shared corner listed
    /// once.
    pub fn image_ray_origins(&self) -> Vec<Point> {
        let delta = ((self.b - self.a) + (self.d - self.c)) / self.rays as f64;
        let half = self.rays / 2;
        let mut out: Vec<Point> = (0..=half)
            .map(|i| [self.a + i as f64 * delta, self.c])
            .collect();
        out.extend((1..=half).map(|j| [self.a, self.c + j as f64 * delta]));
        out
    }

    /// Endpoint `o_i` of landscape ray `i`, for `i` in `-(n-1)..=(n-1)`.
    pub fn landscape_origin(&self, index: i64) -> Point {
        if index <= 0 {
            [self.a - index as f64 * self.dx(), self.c]
        } else {
            [self.a, self.c + index as f64 * self.dy()]
        }
    }

    /// Point on the boundary where `origin + t*unit` leaves the rectangle,
    /// as the parameter `t`. `None` when the ray never meets it.
    fn exit_parameter(&self, origin: Point, unit: Point) -> Option<f64> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for (o, u, lo, hi) in [
            (origin[0], unit[0], self.a, self.b),
            (origin[1], unit[1], self.c, self.d),
        ] {
            if u == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (t0, t1) = ((lo - o) / u, (hi - o) / u);
                t_enter = t_enter.max(t0.min(t1));
                t_exit = t_exit.min(t0.max(t1));
            }
        }
        (t_enter <= t_exit).then_some(t_exit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub id: usize,
    pub origin: Point,
    pub direction: Point,
}

impl Ray {
    fn unit(&self) -> Result<Point> {
        let [x, y] = self.direction;
        let norm = x.hypot(y);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(EmphError::input(format!(
                "ray {} has a degenerate direction",
                self.id
            )));
        }
        Ok([x / norm, y / norm])
    }

    /// `min` of the normalized direction components.
    pub fn weight(&self) -> Result<f64> {
        let [x, y] = self.unit()?;
        Ok(x.min(y))
    }

    fn at(&self, unit: Point, t: f64) -> Point {
        [self.origin[0] + t * unit[0], self.origin[1] + t * unit[1]]
    }

    /// Signed offset of the ray across its own direction; rays sharing a
    /// direction are ordered left to right by this value.
    fn offset(&self, unit: Point) -> f64 {
        unit[1] * self.origin[0] - unit[0] * self.origin[1]
    }
}

/// One bar of a vineyard summand. Birth and death are arc-length
/// parameters along the ray; a missing death (JSON `null`) is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummandBar {
    pub ray: usize,
    pub birth: f64,
    #[serde(with = "infinite_as_null")]
    pub death: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineyardSummand {
    pub bars: Vec<SummandBar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberedBar {
    pub birth: f64,
    #[serde(with = "infinite_as_null")]
    pub death: f64,
    #[serde(default = "one")]
    pub multiplicity: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberedRay {
    pub index: i64,
    pub origin: Point,
    pub bars: Vec<FiberedBar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberedBarcodeFixture {
    pub rays: Vec<FiberedRay>,
}

impl FiberedBarcodeFixture {
    /// Checks the ray index range against the grid and each recorded
    /// origin against the grid's own rule.
    pub fn validate(&self, grid: &TwoParamGrid) -> Result<()> {
        let span = grid.n as i64 - 1;
        for ray in &self.rays {
            if ray.index.abs() > span {
                return Err(EmphError::input(format!(
                    "fibered ray index {} outside -{span}..={span}",
                    ray.index
                )));
            }
            let want = grid.landscape_origin(ray.index);
            let gap = (want[0] - ray.origin[0]).hypot(want[1] - ray.origin[1]);
            if gap > 1e-9 * (1.0 + want[0].abs() + want[1].abs()) {
                return Err(EmphError::input(format!(
                    "fibered ray {} has origin {:?}, grid expects {:?}",
                    ray.index, ray.origin, want
                )));
            }
            if let Some(bar) = ray.bars.iter().find(|b| !(b.birth <= b.death)) {
                return Err(EmphError::input(format!(
                    "fibered ray {} has bar ({}, {}) with birth after death",
                    ray.index, bar.birth, bar.death
                )));
            }
        }
        Ok(())
    }

    fn ray(&self, index: i64) -> Option<&FiberedRay> {
        self.rays.iter().find(|r| r.index == index)
    }
}

/// Everything needed to evaluate both vectorizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiparamFixture {
    pub grid: TwoParamGrid,
    pub rays: Vec<Ray>,
    pub summands: Vec<VineyardSummand>,
    pub fibered: FiberedBarcodeFixture,
}

impl MultiparamFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let fixture: MultiparamFixture = serde_json::from_str(text)?;
        fixture.grid.validate()?;
        fixture.fibered.validate(&fixture.grid)?;
        Ok(fixture)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EmphError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn example() -> Self {
        Self::from_json(EXAMPLE_FIXTURE_JSON).expect("bundled fixture parses")
    }
}

/// Area of the convex hull of `points` (Andrew's monotone chain).
/// Empty, single-point and collinear sets give 0.
pub fn convex_hull_area(points: &[Point]) -> f64 {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: Point, p: Point, q: Point| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    polygon_area(&hull)
}

/// Absolute shoelace area of a simple polygon given in boundary order.
pub fn polygon_area(vertices: &[Point]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let twice: f64 = vertices
        .iter()
        .zip(vertices.iter().cycle().skip(1))
        .map(|(p, q)| p[0] * q[1] - q[0] * p[1])
        .sum();
    0.5 * twice.abs()
}

/// How a summand's area is measured for the weight `w1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AreaRule {
    /// Region swept by the bars: the polygon through the births in ray
    /// order followed by the deaths in reverse ray order.
    #[default]
    Ribbon,
    /// Convex hull of every bar endpoint.
    Hull,
}

struct ResolvedBar<'a> {
    ray: &'a Ray,
    unit: Point,
    birth: f64,
    death: f64,
}

fn resolve<'a>(summand: &VineyardSummand, rays: &'a [Ray]) -> Result<Vec<ResolvedBar<'a>>> {
    summand
        .bars
        .iter()
        .map(|bar| {
            let ray = rays.iter().find(|r| r.id == bar.ray).ok_or_else(|| {
                EmphError::input(format!("summand bar references unknown ray {}", bar.ray))
            })?;
            if !bar.birth.is_finite() || bar.birth < 0.0 || !(bar.birth <= bar.death) {
                return Err(EmphError::input(format!(
                    "summand bar ({}, {}) on ray {} is malformed",
                    bar.birth, bar.death, bar.ray
                )));
            }
            Ok(ResolvedBar {
                ray,
                unit: ray.unit()?,
                birth: bar.birth,
                death: bar.death,
            })
        })
        .collect()
}

/// Endpoints of each bar after clipping its parameters to where the ray
/// leaves the grid rectangle. Bars whose ray misses the rectangle are
/// skipped.
fn clipped_endpoints(bars: &[ResolvedBar<'_>], grid: &TwoParamGrid) -> Vec<(f64, Point, Point)> {
    bars.iter()
        .filter_map(|bar| {
            let exit = grid.exit_parameter(bar.ray.origin, bar.unit)?;
            let start = bar.ray.at(bar.unit, bar.birth.min(exit));
            let end = bar.ray.at(bar.unit, bar.death.min(exit));
            Some((bar.ray.offset(bar.unit), start, end))
        })
        .collect()
}

/// Area of one summand under `rule`, with infinite deaths clipped to the
/// grid rectangle.
pub fn summand_area(
    summand: &VineyardSummand,
    rays: &[Ray],
    grid: &TwoParamGrid,
    rule: AreaRule,
) -> Result<f64> {
    let bars = resolve(summand, rays)?;
    let mut ends = clipped_endpoints(&bars, grid);
    Ok(match rule {
        AreaRule::Hull => {
            let pts: Vec<Point> = ends.iter().flat_map(|&(_, s, e)| [s, e]).collect();
            convex_hull_area(&pts)
        }
        AreaRule::Ribbon => {
            ends.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut poly: Vec<Point> = ends.iter().map(|&(_, s, _)| s).collect();
            poly.extend(ends.iter().rev().map(|&(_, _, e)| e));
            polygon_area(&poly)
        }
    })
}

/// Euclidean distance from `p` to the part of the ray between parameters
/// `birth` and `death` (a half-line when `death` is infinite).
fn distance_to_bar(p: Point, bar: &ResolvedBar<'_>) -> f64 {
    let rel = [p[0] - bar.ray.origin[0], p[1] - bar.ray.origin[1]];
    let t = (rel[0] * bar.unit[0] + rel[1] * bar.unit[1]).clamp(bar.birth, bar.death);
    let q = bar.ray.at(bar.unit, t);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Two-parameter persistence image: for every grid point, the sum over
/// summands of `w1 * w2 * exp(-dist^2 / sigma^2)`, where `dist` is the
/// distance to the summand's nearest bar and `w2` is that bar's ray
/// weight. Ties go to the first bar listed.
pub fn two_param_persistence_image(
    vineyard: &[VineyardSummand],
    rays: &[Ray],
    grid: &TwoParamGrid,
    rule: AreaRule,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let n = grid.n;
    let mut out = vec![0.0; n * n];
    for summand in vineyard {
        let bars = resolve(summand, rays)?;
        if bars.is_empty() {
            continue;
        }
        let w1 = (summand_area(summand, rays, grid, rule)? / grid.area()).powf(grid.q);
        if w1 == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                let g = grid.point(i, j);
                let mut best = (f64::INFINITY, 0usize);
                for (k, bar) in bars.iter().enumerate() {
                    let dist = distance_to_bar(g, bar);
                    if dist < best.0 {
                        best = (dist, k);
                    }
                }
                let w2 = bars[best.1].ray.weight()?;
                out[i * n + j] += w1 * w2 * (-(best.0 * best.0) / (grid.sigma * grid.sigma)).exp();
            }
        }
    }
    Ok(out)
}

/// k-th two-parameter persistence landscape: at `g[i][j]`, the k-th
/// largest tent value over the bars (with multiplicity) of ray `j - i`,
/// measured by distance from that ray's origin. Fewer than `k` bars
/// give 0.
pub fn two_param_persistence_landscape(
    fixture: &FiberedBarcodeFixture,
    k: usize,
    grid: &TwoParamGrid,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(EmphError::domain("landscape level k must be at least 1"));
    }
    grid.validate()?;
    fixture.validate(grid)?;
    let n = grid.n;
    let mut out = vec![0.0; n * n];
    let mut values = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let index = j as i64 - i as i64;
            let ray = fixture.ray(index).ok_or_else(|| {
                EmphError::input(format!("fibered barcode fixture has no ray {index}"))
            })?;
            let g = grid.point(i, j);
            let r = (g[0] - ray.origin[0]).hypot(g[1] - ray.origin[1]);
            values.clear();
            for bar in &ray.bars {
                let tent = ((r - bar.birth) / 2f64.sqrt())
                    .min((bar.death - r) / 2f64.sqrt())
                    .max(0.0);
                values.extend(std::iter::repeat_n(tent, bar.multiplicity));
            }
            if values.len() >= k {
                values.sort_by(|x, y| y.total_cmp(x));
                out[i * n + j] = values[k - 1];
            }
        }
    }
    Ok(out)
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
