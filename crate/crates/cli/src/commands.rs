use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use emph::barcode::{curve_barcode, FiltrationCurve};
use emph::dataset::{load_ucr, stratified_split, synth_example, synth_mixture, Dataset, SynthKind};
use emph::learner::{self, apply_cell, dataset_radii, Checkpoint, ConstraintBox, CvCell, CvReport, GradientMethod, TrainConfig};
use emph::multipers_ref::{two_param_persistence_image, two_param_persistence_landscape, AreaRule, MultiparamFixture};
use emph::spectral::LiouvilleRadii;
use emph::vectorize::{minmax_scale, persistence_image, ImageGrid, ScaleGradient};
use emph::EmphError;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::{BarcodeArgs, BenchArgs, CrossvalArgs, DataArgs, DemoArgs, EvalArgs, ImageArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<EmphError> for CliError {
    fn from(e: EmphError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.0)
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| EmphError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| EmphError::io(path, e).into())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// The primary dataset plus the separate test file when one is given.
fn load_data(args: &DataArgs, run: &RunConfig) -> Result<(Dataset, Option<Dataset>), CliError> {
    let input = args.input.as_ref().or(run.input.as_ref());
    let data = match (input, &args.synth) {
        (Some(_), Some(_)) => return Err(input_err("give either --input or --synth, not both")),
        (Some(path), None) => load_ucr(path)?,
        (None, Some(kind)) => synth_example(kind.parse::<SynthKind>()?, args.count, args.noise, args.data_seed)?,
        (None, None) => return Err(input_err("no data: pass --input <file> or --synth <kind>")),
    };
    let test = match args.test_input.as_ref().or(run.test_input.as_ref()) {
        Some(path) => Some(load_ucr(path)?),
        None => None,
    };
    if let Some(t) = &test {
        if t.series_len() != data.series_len() {
            return Err(input_err(format!(
                "test series have length {}, training series {}",
                t.series_len(),
                data.series_len()
            )));
        }
    }
    Ok((data, test))
}

fn train_test(data: Dataset, test: Option<Dataset>, cfg: &TrainConfig) -> Result<(Dataset, Dataset), CliError> {
    Ok(match test {
        Some(t) => (data, t),
        None => stratified_split(&data, cfg.test_fraction, cfg.seed)?,
    })
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let data = synth_example(args.kind.parse()?, args.count, args.noise, args.seed)?;
    let mut text = String::new();
    for s in data.series() {
        let _ = write!(text, "{}", s.label().unwrap_or(0));
        for &v in s.samples() {
            let _ = write!(text, ",{}", num(v));
        }
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn parse_directions(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .map(|seg| {
            seg.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| input_err(format!("{t:?} is not a number"))))
                .collect()
        })
        .collect()
}

fn build_curve(args: &BarcodeArgs, dim: usize) -> Result<FiltrationCurve, CliError> {
    let dirs = match &args.directions {
        Some(text) => parse_directions(text)?,
        None => vec![vec![1.0; dim]],
    };
    if dirs.len() == 1 && args.horizon.is_none() {
        return Ok(FiltrationCurve::ray(dirs.into_iter().next().unwrap())?);
    }
    let horizon = args
        .horizon
        .ok_or_else(|| input_err("a curve with several segments needs --horizon"))?;
    Ok(FiltrationCurve::new(dirs, horizon)?)
}

/// Radii of the selected rows, each tagged with its row number.
fn selected_radii(args: &BarcodeArgs) -> Result<(Vec<(usize, LiouvilleRadii)>, Vec<LiouvilleRadii>), CliError> {
    let all = match &args.radii {
        Some(r) => vec![LiouvilleRadii::from_radii(r.clone())?],
        None => {
            let (data, _) = load_data(&args.data, &RunConfig::default())?;
            dataset_radii(&data, &args.modes)?
        }
    };
    let rows: Vec<(usize, LiouvilleRadii)> = match args.row {
        Some(i) if i >= all.len() => {
            return Err(input_err(format!("row {i} out of range for {} series", all.len())))
        }
        Some(i) => vec![(i, all[i].clone())],
        None => all.iter().cloned().enumerate().collect(),
    };
    Ok((rows, all))
}

/// Shortest text that parses back to the same `f64`, `inf` for infinities.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::Number::from_f64(v).map_or_else(|| v.to_string(), |n| n.to_string())
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn barcode(args: &BarcodeArgs) -> Result<(), CliError> {
    let (rows, _) = selected_radii(args)?;
    let curve = build_curve(args, rows[0].1.dim())?;
    let mut text = String::from("row,dimension,birth,death,composition\n");
    for (i, r) in &rows {
        let (bc, origins) = curve_barcode(r, &curve, args.dimension)?;
        for (bar, origin) in bc.bars.iter().zip(&origins) {
            let comp: Vec<String> = origin.composition.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(
                text,
                "{i},{},{},{},{}",
                bar.dimension,
                num(bar.birth),
                num(bar.death),
                comp.join(";")
            );
        }
    }
    emit(args.out.as_deref(), &text)
}

pub fn image(args: &ImageArgs) -> Result<(), CliError> {
    let b = &args.barcode;
    let (rows, all) = selected_radii(b)?;
    let dim = all[0].dim();
    let diagonal = FiltrationCurve::ray(vec![1.0; dim])?;
    let diagonal_bars = all
        .iter()
        .map(|r| curve_barcode(r, &diagonal, b.dimension).map(|x| x.0))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = ImageGrid::covering(&diagonal_bars, args.resolution, args.sigma, args.c2)?;
    let curve = build_curve(b, dim)?;
    let (_, r) = &rows[0];
    let (bc, _) = curve_barcode(r, &curve, b.dimension)?;
    let mut values = persistence_image(&bc, &grid)?.values;
    if args.scaled {
        values = minmax_scale(&values).0;
    }
    let res = grid.resolution();
    let mut text = String::new();
    for row in values.chunks(res) {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    emit(b.out.as_deref(), &text)
}

#[derive(Serialize)]
struct Metrics<'a> {
    dataset: &'a str,
    train_size: usize,
    test_size: usize,
    epochs: usize,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    final_loss: Option<f64>,
    losses: &'a [f64],
    directions: &'a [Vec<f64>],
    constraint_box: &'a ConstraintBox,
    horizon: f64,
    projection_violations: usize,
}

#[derive(Serialize)]
struct RunReport<'a> {
    wall_secs: f64,
    timings: &'a learner::PhaseTimings,
}

fn trajectory_csv(trajectory: &[Vec<Vec<f64>>]) -> String {
    let n = trajectory.first().and_then(|t| t.first()).map_or(0, Vec::len);
    let mut text = String::from("epoch,segment");
    for l in 1..=n {
        let _ = write!(text, ",a{l}");
    }
    text.push('\n');
    for (epoch, dirs) in trajectory.iter().enumerate() {
        for (s, a) in dirs.iter().enumerate() {
            let _ = write!(text, "{epoch},{s}");
            for &v in a {
                let _ = write!(text, ",{}", num(v));
            }
            text.push('\n');
        }
    }
    text
}

fn out_dir(run: &RunConfig) -> PathBuf {
    run.out.clone().unwrap_or_else(|| PathBuf::from("emph-out"))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let run = args.config.resolve()?;
    let cfg = &run.train;
    let (data, test) = load_data(&args.data, &run)?;
    let (train_set, test_set) = train_test(data, test, cfg)?;
    let start = Instant::now();
    let (model, report) = learner::train(&train_set, cfg)?;
    let wall_secs = start.elapsed().as_secs_f64();

    let train_accuracy = model.accuracy(&train_set)?;
    let test_accuracy = if test_set.is_empty() { None } else { Some(model.accuracy(&test_set)?) };
    let metrics = Metrics {
        dataset: &train_set.note,
        train_size: train_set.len(),
        test_size: test_set.len(),
        epochs: cfg.epochs,
        train_accuracy,
        test_accuracy,
        final_loss: report.losses.last().copied(),
        losses: &report.losses,
        directions: model.curve.directions(),
        constraint_box: &report.constraint_box,
        horizon: report.horizon,
        projection_violations: report.projection_violations,
    };
    let dir = out_dir(&run);
    write_file(&dir.join("metrics.json"), &to_json(&metrics)?)?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&report.trajectory))?;
    write_file(
        &dir.join("report.json"),
        &to_json(&RunReport {
            wall_secs,
            timings: &report.timings,
        })?,
    )?;
    let checkpoint = Checkpoint {
        model,
        constraint_box: report.constraint_box,
        config: cfg.clone(),
    };
    write_file(&dir.join("checkpoint.json"), &to_json(&checkpoint)?)?;
    let test_text = test_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
    println!(
        "train accuracy {train_accuracy:.4}, test accuracy {test_text}, {} epochs in {wall_secs:.1}s; wrote {}",
        cfg.epochs,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    test_size: usize,
    test_accuracy: f64,
    mean_loss: f64,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.checkpoint).map_err(|e| EmphError::io(&args.checkpoint, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| input_err(format!("{} is not a checkpoint: {e}", args.checkpoint.display())))?;
    let run = RunConfig {
        train: checkpoint.config.clone(),
        ..RunConfig::default()
    };
    let (data, test) = load_data(&args.data, &run)?;
    let test = match test {
        Some(t) => t,
        None if args.all => data,
        None => train_test(data, None, &checkpoint.config)?.1,
    };
    if test.is_empty() {
        return Err(input_err("nothing to evaluate: the test side is empty"));
    }
    let model = &checkpoint.model;
    let report = EvalReport {
        test_size: test.len(),
        test_accuracy: model.accuracy(&test)?,
        mean_loss: model.loss(&test)? / test.len() as f64,
    };
    emit(args.out.as_deref(), &to_json(&report)?)
}

#[derive(Serialize)]
struct FinalFit {
    cell: CvCell,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct CrossvalOutput {
    crossval: CvReport,
    final_fit: Option<FinalFit>,
}

pub fn crossval(args: &CrossvalArgs) -> Result<(), CliError> {
    let run = args.config.resolve()?;
    let cfg = &run.train;
    let (data, test) = load_data(&args.data, &run)?;
    let (train_set, test_set) = train_test(data, test, cfg)?;
    let or_default = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let lrs = or_default(&args.grid_learning_rate, cfg.learning_rate);
    let sigmas = or_default(&args.grid_sigma, cfg.sigma);
    let segments = if args.grid_segments.is_empty() { vec![cfg.segments] } else { args.grid_segments.clone() };
    let mut cells = Vec::new();
    for &learning_rate in &lrs {
        for &sigma in &sigmas {
            for &seg in &segments {
                cells.push(CvCell {
                    learning_rate,
                    sigma,
                    segments: seg,
                });
            }
        }
    }
    let report = learner::crossval(&train_set, cfg, &cells, cfg.folds)?;
    let final_fit = if args.final_fit {
        let cell = report.best_cell().cell;
        let (model, _) = learner::train(&train_set, &apply_cell(cfg, &cell))?;
        Some(FinalFit {
            cell,
            train_accuracy: model.accuracy(&train_set)?,
            test_accuracy: if test_set.is_empty() { None } else { Some(model.accuracy(&test_set)?) },
        })
    } else {
        None
    };
    let output = CrossvalOutput {
        crossval: report,
        final_fit,
    };
    let text = to_json(&output)?;
    match &run.out {
        Some(dir) => {
            write_file(&dir.join("crossval.json"), &text)?;
            let best = output.crossval.best_cell();
            println!(
                "best cell lr {} sigma {} segments {}: mean accuracy {:.4}; wrote {}",
                best.cell.learning_rate,
                best.cell.sigma,
                best.cell.segments,
                best.mean_accuracy,
                dir.display()
            );
            Ok(())
        }
        None => emit(None, &text),
    }
}

#[derive(Serialize)]
struct BenchReport {
    samples: usize,
    length: usize,
    modes: usize,
    epochs: usize,
    exact_secs: f64,
    finite_difference_secs: f64,
    speedup: f64,
    check_step: f64,
    /// `|g_exact - g_numeric| / |g_numeric|` at the starting directions.
    gradient_relative_error: f64,
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let data = synth_mixture(args.samples, args.length, args.max_mode, args.seed)?;
    let base = TrainConfig {
        modes: (1..=args.max_mode).collect(),
        epochs: args.epochs,
        seed: args.seed,
        scale_gradient: ScaleGradient::Exact,
        ..TrainConfig::default()
    };
    let timed = |method: GradientMethod| -> Result<f64, CliError> {
        let cfg = TrainConfig {
            gradient_method: method,
            ..base.clone()
        };
        let start = Instant::now();
        learner::train(&data, &cfg)?;
        Ok(start.elapsed().as_secs_f64())
    };
    let exact_secs = timed(GradientMethod::Exact)?;
    let finite_difference_secs = timed(GradientMethod::FiniteDifference)?;

    let (start_model, _) = learner::train(&data, &TrainConfig { epochs: 0, ..base.clone() })?;
    let exact = start_model.direction_gradient(&data, ScaleGradient::Exact)?;
    let numeric = start_model.numeric_direction_gradient(&data, args.check_step, true, false)?;
    let (mut diff, mut norm) = (0.0, 0.0);
    for (e, n) in exact.iter().flatten().zip(numeric.iter().flatten()) {
        diff += (e - n) * (e - n);
        norm += n * n;
    }
    let report = BenchReport {
        samples: args.samples,
        length: args.length,
        modes: args.max_mode,
        epochs: args.epochs,
        exact_secs,
        finite_difference_secs,
        speedup: finite_difference_secs / exact_secs,
        check_step: args.check_step,
        gradient_relative_error: diff.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE),
    };
    let text = to_json(&report)?;
    if let Some(path) = &args.out {
        write_file(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct DemoOutput {
    image: Vec<f64>,
    landscape: Vec<f64>,
    k: usize,
    area_rule: AreaRule,
}

pub fn multipers_demo(args: &DemoArgs) -> Result<(), CliError> {
    let fixture = match &args.fixture {
        Some(path) => MultiparamFixture::load(path)?,
        None => MultiparamFixture::example(),
    };
    let rule = match args.area.as_str() {
        "ribbon" => AreaRule::Ribbon,
        "hull" => AreaRule::Hull,
        other => return Err(input_err(format!("unknown area rule {other:?}; expected ribbon or hull"))),
    };
    let out = DemoOutput {
        image: two_param_persistence_image(&fixture.summands, &fixture.rays, &fixture.grid, rule)?,
        landscape: two_param_persistence_landscape(&fixture.fibered, args.k, &fixture.grid)?,
        k: args.k,
        area_rule: rule,
    };
    emit(None, &to_json(&out)?)
}
