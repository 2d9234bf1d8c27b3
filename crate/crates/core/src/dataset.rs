//! Labelled collections of series: UCR-style text files, the synthetic
//! sinusoid benchmarks, and stratified splitting.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EmphError, Result};
use crate::spectral::TimeSeries;

/// Equal-length labelled series with dense labels `0..classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    series: Vec<TimeSeries>,
    classes: usize,
    /// Original label text of each dense class id.
    label_names: Vec<String>,
    pub note: String,
}

impl Dataset {
    pub fn new(series: Vec<TimeSeries>, classes: usize, note: impl Into<String>) -> Result<Self> {
        let label_names = (0..classes).map(|c| c.to_string()).collect();
        Self::with_label_names(series, label_names, note)
    }

    pub fn with_label_names(
        series: Vec<TimeSeries>,
        label_names: Vec<String>,
        note: impl Into<String>,
    ) -> Result<Self> {
        let classes = label_names.len();
        if let Some(first) = series.first() {
            for (i, s) in series.iter().enumerate() {
                if s.len() != first.len() {
                    return Err(EmphError::input(format!(
                        "series {i} has length {}, expected {}",
                        s.len(),
                        first.len()
                    )));
                }
                match s.label() {
                    Some(l) if l < classes => {}
                    Some(l) => {
                        return Err(EmphError::input(format!(
                            "series {i} has label {l} but only {classes} classes exist"
                        )))
                    }
                    None => return Err(EmphError::input(format!("series {i} is unlabelled"))),
                }
            }
        }
        Ok(Self {
            series,
            classes,
            label_names,
            note: note.into(),
        })
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn labels(&self) -> Vec<usize> {
        self.series.iter().map(|s| s.label().unwrap_or(0)).collect()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Common length `𝔫`, zero for an empty set.
    pub fn series_len(&self) -> usize {
        self.series.first().map_or(0, TimeSeries::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for l in self.labels() {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            series: indices.iter().map(|&i| self.series[i].clone()).collect(),
            classes: self.classes,
            label_names: self.label_names.clone(),
            note: self.note.clone(),
        }
    }
}

/// Reads a UCR archive file: one series per line, class label first,
/// values separated by tabs, commas or spaces.
pub fn load_ucr(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| EmphError::io(path, e))?;
    let mut ds = parse_ucr(&text)?;
    ds.note = format!("{} ({})", path.display(), ds.note);
    Ok(ds)
}

pub fn parse_ucr(text: &str) -> Result<Dataset> {
    let mut rows: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if trimmed.contains(',') {
            trimmed.split(',').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let label = fields[0].to_string();
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    EmphError::input(format!("line {line_no}: cannot parse value {f:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some((_, first, first_line)) = rows.first() {
            if first.len() != values.len() {
                return Err(EmphError::input(format!(
                    "line {line_no}: {} values, but line {first_line} has {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        rows.push((label, values, line_no));
    }
    if rows.is_empty() {
        return Err(EmphError::input("no series found"));
    }

    // Numeric labels sort by value, anything else by text.
    let mut distinct: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    distinct.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    distinct.dedup();
    let dense: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut series = Vec::with_capacity(rows.len());
    for (label, values, line_no) in &rows {
        let s = TimeSeries::new(values.clone(), Some(dense[label.as_str()]))
            .map_err(|e| EmphError::input(format!("line {line_no}: {e}")))?;
        series.push(s);
    }
    let mapping = distinct
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{s}->{i}"))
        .collect::<Vec<_>>()
        .join(", ");
    Dataset::with_label_names(series, distinct.clone(), format!("labels {mapping}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// `cos t` against `cos 5t`.
    TwoClass,
    /// `{cos t, cos 2t}`, `2 cos t` and `2 cos 2t`.
    ThreeClass,
}

impl std::str::FromStr for SynthKind {
    type Err = EmphError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-class" => Ok(Self::TwoClass),
            "three-class" => Ok(Self::ThreeClass),
            other => Err(EmphError::input(format!(
                "unknown synthetic dataset {other:?} (expected two-class or three-class)"
            ))),
        }
    }
}

pub const SYNTH_LEN: usize = 36;

/// Noisy sinusoids sampled at 36 points of `[0, 2π)`. `count` series are
/// drawn per signal; the three-class set has two signals in class 0.
pub fn synth_example(kind: SynthKind, count: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(EmphError::input("need at least one series per signal"));
    }
    let signals: Vec<(usize, fn(f64) -> f64)> = match kind {
        SynthKind::TwoClass => vec![(0, |t| t.cos()), (1, |t| (5.0 * t).cos())],
        SynthKind::ThreeClass => vec![
            (0, |t| t.cos()),
            (0, |t| (2.0 * t).cos()),
            (1, |t| 2.0 * t.cos()),
            (2, |t| 2.0 * (2.0 * t).cos()),
        ],
    };
    let classes = signals.iter().map(|s| s.0).max().unwrap() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(count * signals.len());
    for &(label, f) in &signals {
        for _ in 0..count {
            let samples = (0..SYNTH_LEN)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / SYNTH_LEN as f64;
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    f(t) + noise * eps
                })
                .collect();
            series.push(TimeSeries::new(samples, Some(label))?);
        }
    }
    let note = format!("synthetic {kind:?}, {count} per signal, noise {noise}, seed {seed}");
    Dataset::new(series, classes, note)
}

/// Two classes of random-phase mixtures of modes `1..=max_mode`, `len`
/// samples each, for timing runs. Class 0 weights odd modes by 1.5 and
/// even modes by 0.5; class 1 the reverse.
pub fn synth_mixture(total: usize, len: usize, max_mode: usize, seed: u64) -> Result<Dataset> {
    if total < 2 || max_mode == 0 || len < 2 * max_mode + 1 {
        return Err(EmphError::input(format!(
            "need at least 2 series and length > 2 * max mode (got {total} series, length {len}, max mode {max_mode})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(total);
    for i in 0..total {
        let label = i % 2;
        let phases: Vec<f64> = (0..max_mode).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let samples = (0..len)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / len as f64;
                let clean: f64 = (1..=max_mode)
                    .map(|l| {
                        let weight = if (l + label) % 2 == 1 { 1.5 } else { 0.5 };
                        weight * (l as f64 * t + phases[l - 1]).cos()
                    })
                    .sum();
                let eps: f64 = StandardNormal.sample(&mut rng);
                clean + 0.5 * eps
            })
            .collect();
        series.push(TimeSeries::new(samples, Some(label))?);
    }
    Dataset::new(series, 2, format!("mixture of modes 1..={max_mode}, {total} series, seed {seed}"))
}

fn shuffled_by_class(labels: &[usize], classes: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    groups
}

/// Splits each class so that `round(test_fraction · count)` of it goes to
/// the test side. Indices keep their original order within each side.
pub fn stratified_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(EmphError::input(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in shuffled_by_class(&data.labels(), data.classes(), seed) {
        let n_test = (test_fraction * group.len() as f64).round() as usize;
        test.extend_from_slice(&group[..n_test]);
        train.extend_from_slice(&group[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}

/// Held-out index sets of a stratified `folds`-way partition.
pub fn stratified_folds(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(EmphError::input(format!("need at least 2 folds, got {folds}")));
    }
    let counts = data.class_counts();
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < folds) {
        return Err(EmphError::input(format!(
            "class {c} has {n} samples, fewer than the {folds} folds"
        )));
    }
    let mut out = vec![Vec::new(); folds];
    for group in shuffled_by_class(&data.labels(), data.classes(), seed) {
        for (k, i) in group.into_iter().enumerate() {
            out[k % folds].push(i);
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}
