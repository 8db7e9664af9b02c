use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chromfit::column::{self, Chromatogram, InjectionProfile};
use chromfit::datagen::{
    self, fit_norm, real_sample, regrid, split, Dataset, NoiseKind, NoiseSpec, NormStats, Sample,
    SplitManifest,
};
use chromfit::fnn::{
    cross_validate, grid_search, predict, top_per_structure, write_grid_csv, write_history_csv,
    write_percentiles_csv, CvSpec, Design, FnnModel, ModelFile, TargetTransform,
};
use chromfit::isotherm::PARAM_NAMES;
use chromfit::pipeline::{self, partition, PipelineConfig};
use chromfit::variational::{self, log_grid, Observation};
use chromfit::{Concentration2, IsothermParams};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TrainArgs};
use crate::{Command, Invalid};

const MODEL_FILE: &str = "model.json";
const NORM_FILE: &str = "norm.json";
const SPLIT_FILE: &str = "split.json";
const SUMMARY_FILE: &str = "summary.json";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, n, seed, out, plot_data } => {
            generate(config.as_deref(), n, seed, &out, plot_data)
        }
        Command::ImportReal { dataset, chromatogram, injection, target } => {
            import_real(&dataset, &chromatogram, &injection, target.as_deref())
        }
        Command::Train { dataset, config, seed, out, augment_shift, train } => {
            train_cmd(&dataset, config.as_deref(), seed, &out, augment_shift, &train)
        }
        Command::Evaluate { model, dataset, set, noise, noise_seed, regrid, out } => {
            evaluate(&model, &dataset, &set, noise.as_deref(), noise_seed, regrid, &out)
        }
        Command::Predict { model, chromatogram, injection, out } => {
            predict_cmd(&model, &chromatogram, &injection, out.as_deref())
        }
        Command::Simulate { config, params, injection, out, outlet } => {
            simulate(config.as_deref(), &params, &injection, &out, outlet)
        }
        Command::FitVariational { observations, config, alpha, initial, max_iterations, out } => {
            fit_variational(&observations, config.as_deref(), alpha, initial.as_deref(), max_iterations, &out)
        }
        Command::AlphaSweep { observations, config, log_min, log_max, points, out } => {
            alpha_sweep(&observations, config.as_deref(), log_min, log_max, points, &out)
        }
        Command::CrossValidate { dataset, config, seed, k, out, train } => {
            cross_validate_cmd(&dataset, config.as_deref(), seed, k, &out, &train)
        }
        Command::GridSearch { dataset, config, seed, top, out } => {
            grid_search_cmd(&dataset, config.as_deref(), seed, top, &out)
        }
    }
}

/// Loads the config, applies the master seed to every derived stream, validates.
fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.split.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
}

fn params(values: &[f64]) -> Result<IsothermParams> {
    Ok(IsothermParams::from_slice(values)?)
}

fn injection_pair(values: &[f64]) -> Result<[f64; 2]> {
    match values {
        [a, b] if *a >= 0.0 && *b >= 0.0 && a.is_finite() && b.is_finite() => Ok([*a, *b]),
        _ => Err(Invalid(format!("injection must be two values >= 0, got {values:?}")).into()),
    }
}

fn generate(config: Option<&Path>, n: usize, seed: Option<u64>, out: &Path, plot: bool) -> Result<()> {
    let cfg = load_config(config, seed)?;
    cfg.validate()?;
    if n == 0 {
        bail!(Invalid("--n must be at least 1".into()));
    }
    let ds = datagen::generate(n, &cfg.column, &cfg.detector, cfg.seed)?;
    ds.save(out)?;
    cfg.echo(out, "generate")?;
    if plot {
        let dir = out.join("plot");
        create_dir(&dir)?;
        let grid = ds.time_grid();
        for (k, s) in ds.samples.iter().take(4).enumerate() {
            let c = Chromatogram::new(grid.clone(), s.response.clone())?;
            c.save(&dir.join(format!("chromatogram_{}.csv", k + 1)))?;
        }
    }
    log::info!("wrote {n} samples to {} (horizon {} s)", out.display(), ds.meta.horizon);
    Ok(())
}

fn import_real(dir: &Path, chrom: &Path, injection: &[f64], target: Option<&[f64]>) -> Result<()> {
    let mut ds = Dataset::load(dir)?;
    let measured = Chromatogram::load(chrom)?;
    let target = target.map(params).transpose()?;
    let s = real_sample(&measured, injection_pair(injection)?, target, &ds.time_grid())?;
    ds.samples.push(s);
    ds.save(dir)?;
    log::info!("dataset now holds {} samples", ds.len());
    Ok(())
}

/// Facts about a training run needed to use its model later.
#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    transform: TargetTransform,
    horizon: f64,
    n_time_points: usize,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    train_r2: f64,
    val_r2: f64,
    test_r2: f64,
    counts: [usize; 3],
    augment_shift: u32,
    norm_fingerprint: String,
}

fn train_cmd(
    dataset: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    augment_shift: u32,
    args: &TrainArgs,
) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    args.apply(&mut cfg);
    cfg.validate()?;
    let ds = Dataset::load(dataset)?;
    let pcfg = PipelineConfig {
        split: cfg.split,
        hyperparams: cfg.hyperparams(),
        train: cfg.train.clone(),
        transform: cfg.model.transform,
        augment_shift,
    };
    let trained = pipeline::train_on_dataset(&ds, &pcfg)?;
    let test = pipeline::test_samples(&ds, &trained.manifest)?;
    let eval = pipeline::evaluate(&trained.model, &trained.stats, trained.transform, &test, None)?;

    create_dir(out)?;
    let fingerprint = trained.stats.fingerprint();
    trained.model.to_file(Some(fingerprint.clone())).save(&out.join(MODEL_FILE))?;
    trained.stats.save(&out.join(NORM_FILE))?;
    write_json(&out.join(SPLIT_FILE), &trained.manifest)?;
    write_history_csv(&out.join("history.csv"), &trained.outcome.history)?;
    write_percentiles_csv(&out.join("weights.csv"), &trained.outcome.weight_percentiles)?;
    let best = trained.outcome.history[trained.outcome.best_epoch - 1];
    let (a, b, c) = trained.manifest.counts();
    let summary = TrainSummary {
        transform: trained.transform,
        horizon: ds.meta.horizon,
        n_time_points: ds.meta.n_time_points,
        best_epoch: trained.outcome.best_epoch,
        epochs_run: trained.outcome.history.len(),
        stopped_early: trained.outcome.stopped_early,
        train_r2: best.train_r2,
        val_r2: best.val_r2,
        test_r2: eval.overall,
        counts: [a, b, c],
        augment_shift,
        norm_fingerprint: fingerprint,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    let mut echo = cfg.clone();
    echo.column = ds.meta.column.clone();
    echo.echo(out, &format!("train --augment-shift {augment_shift}"))?;
    log::info!(
        "best epoch {}: train R2 {:.4}, validation R2 {:.4}, test R2 {:.4}",
        summary.best_epoch,
        summary.train_r2,
        summary.val_r2,
        summary.test_r2
    );
    Ok(())
}

struct LoadedModel {
    model: FnnModel,
    stats: NormStats,
    summary: TrainSummary,
}

fn load_model(dir: &Path) -> Result<LoadedModel> {
    let file = ModelFile::load(&dir.join(MODEL_FILE))?;
    let stats = NormStats::load(&dir.join(NORM_FILE))?;
    let summary: TrainSummary = read_json(&dir.join(SUMMARY_FILE))?;
    if let Some(fp) = &file.norm_fingerprint {
        if *fp != stats.fingerprint() {
            bail!(Invalid("normalization statistics do not match the model".into()));
        }
    }
    Ok(LoadedModel {
        model: FnnModel::from_file(&file)?,
        stats,
        summary,
    })
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    set: String,
    noise: Option<String>,
    noise_seed: u64,
    n_samples: usize,
    overall_r2: f64,
    per_entry_r2: Vec<(String, f64)>,
}

fn evaluate(
    model_dir: &Path,
    dataset: &Path,
    set: &str,
    noise: Option<&str>,
    noise_seed: u64,
    allow_regrid: bool,
    out: &Path,
) -> Result<()> {
    let m = load_model(model_dir)?;
    let mut ds = Dataset::load(dataset)?;
    let model_grid = column_grid(m.summary.horizon, m.summary.n_time_points);
    let data_grid = ds.time_grid();
    if data_grid != model_grid {
        if !allow_regrid {
            bail!(Invalid(format!(
                "dataset grid ({} points to {} s) differs from the model's ({} points to {} s); pass --regrid",
                ds.meta.n_time_points, ds.meta.horizon, m.summary.n_time_points, m.summary.horizon
            )));
        }
        for s in &mut ds.samples {
            let c = Chromatogram::new(data_grid.clone(), s.response.clone())?;
            s.response = regrid(&c, &model_grid)?.response;
        }
    }
    let samples: Vec<Sample> = if set == "all" {
        ds.samples.clone()
    } else {
        let manifest: SplitManifest = read_json(&model_dir.join(SPLIT_FILE))?;
        let refs = match set {
            "test" => &manifest.test,
            "train" => &manifest.train,
            "validation" => &manifest.validation,
            other => bail!(Invalid(format!("unknown set `{other}`"))),
        };
        let (synthetic, real) = partition(&ds.samples);
        SplitManifest::resolve(refs, &synthetic, &real)?.into_iter().cloned().collect()
    };
    let spec = noise
        .map(|n| -> Result<NoiseSpec> {
            Ok(NoiseSpec {
                kind: n.parse::<NoiseKind>()?,
                seed: noise_seed,
            })
        })
        .transpose()?;
    let eval = pipeline::evaluate(&m.model, &m.stats, m.summary.transform, &samples, spec.as_ref())?;

    create_dir(out)?;
    let report = EvaluationReport {
        set: set.to_string(),
        noise: spec.as_ref().map(|s| s.kind.to_string()),
        noise_seed,
        n_samples: eval.n_samples,
        overall_r2: eval.overall,
        per_entry_r2: PARAM_NAMES.iter().map(|s| s.to_string()).zip(eval.per_entry.clone()).collect(),
    };
    write_json(&out.join("evaluation.json"), &report)?;
    let mut csv = String::from("parameter,r2\n");
    for (name, r) in &report.per_entry_r2 {
        writeln!(csv, "{name},{r:.6}")?;
    }
    writeln!(csv, "overall,{:.6}", eval.overall)?;
    write(&out.join("per_entry.csv"), csv)?;
    println!("R2 = {:.4} over {} samples", eval.overall, eval.n_samples);
    Ok(())
}

fn column_grid(horizon: f64, n: usize) -> Vec<f64> {
    chromfit::ColumnConfig {
        n_time_points: n,
        ..Default::default()
    }
    .output_grid(horizon)
}

fn predict_cmd(model_dir: &Path, chrom: &Path, injection: &[f64], out: Option<&Path>) -> Result<()> {
    let m = load_model(model_dir)?;
    let measured = Chromatogram::load(chrom)?;
    let grid = column_grid(m.summary.horizon, m.summary.n_time_points);
    let sample = real_sample(&measured, injection_pair(injection)?, None, &grid)?;
    let y = predict(&m.model, Some(&m.stats), &sample)?;
    let mut text = String::from("parameter,value\n");
    for (name, v) in PARAM_NAMES.iter().zip(y.as_array()) {
        writeln!(text, "{name},{v:.6}")?;
    }
    match out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(config: Option<&Path>, values: &[f64], injection: &[f64], out: &Path, outlet: bool) -> Result<()> {
    let cfg = load_config(config, None)?;
    cfg.validate()?;
    let y = params(values)?;
    let [h1, h2] = injection_pair(injection)?;
    let profile = InjectionProfile::new(h1, h2, cfg.column.injection_duration)?;
    let o = column::simulate(&cfg.column, &y, &profile, Concentration2::ZERO)?;
    if outlet {
        let file = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
        o.write_csv(std::io::BufWriter::new(file))?;
    } else {
        column::total_response(&o, &cfg.detector)?.save(out)?;
    }
    Ok(())
}

fn observations(specs: &[String], duration: f64) -> Result<Vec<Observation>> {
    specs
        .iter()
        .map(|spec| {
            let (file, inj) = spec
                .rsplit_once(':')
                .ok_or_else(|| Invalid(format!("observation `{spec}` must look like FILE:H1,H2")))?;
            let values: Vec<f64> = inj
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Invalid(format!("observation `{spec}`: {e}")))?;
            let [h1, h2] = injection_pair(&values)?;
            let c = Chromatogram::load(&PathBuf::from(file))?;
            Ok(Observation::new(c, InjectionProfile::new(h1, h2, duration)?)?)
        })
        .collect()
}

fn fit_variational(
    specs: &[String],
    config: Option<&Path>,
    alpha: Option<f64>,
    initial: Option<&[f64]>,
    max_iterations: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config, None)?;
    if let Some(a) = alpha {
        cfg.variational.alpha = a;
    }
    if let Some(v) = initial {
        cfg.variational.initial = params(v)?;
    }
    if let Some(n) = max_iterations {
        cfg.variational.max_iterations = n;
    }
    cfg.validate()?;
    let obs = observations(specs, cfg.fit_column.injection_duration)?;
    let report = variational::fit(&obs, &cfg.fit_column, &cfg.detector, &cfg.variational)?;
    create_dir(out)?;
    report.save(&out.join("fit_report.json"))?;
    let mut trace = String::from("iteration,best_objective\n");
    for (i, v) in report.trace.iter().enumerate() {
        writeln!(trace, "{i},{v:e}")?;
    }
    write(&out.join("trace.csv"), trace)?;
    cfg.echo(out, "fit-variational")?;
    if !report.converged {
        log::warn!("iteration cap reached before the tolerance was met");
    }
    println!(
        "objective {:.6e} (data {:.6e}) after {} iterations",
        report.objective.total, report.objective.data, report.iterations
    );
    for (name, v) in PARAM_NAMES.iter().zip(report.estimate.as_array()) {
        println!("{name} = {v:.6}");
    }
    Ok(())
}

fn alpha_sweep(
    specs: &[String],
    config: Option<&Path>,
    lo: f64,
    hi: f64,
    points: usize,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config, None)?;
    cfg.validate()?;
    if points == 0 || !(hi >= lo) {
        bail!(Invalid("need at least one point and log-max >= log-min".into()));
    }
    let obs = observations(specs, cfg.fit_column.injection_duration)?;
    let rows = variational::alpha_sweep(&obs, &cfg.fit_column, &cfg.detector, &cfg.variational, &log_grid(lo, hi, points))?;
    create_dir(out)?;
    let mut csv = format!("alpha,data,moment,total,converged,{}\n", PARAM_NAMES.join(","));
    for r in &rows {
        write!(csv, "{:e},{:e},{:e},{:e},{}", r.alpha, r.data, r.moment, r.total, r.converged)?;
        for v in r.estimate.as_array() {
            write!(csv, ",{v:.6}")?;
        }
        csv.push('\n');
    }
    write(&out.join("sweep.csv"), csv)?;
    cfg.echo(out, "alpha-sweep")
}

fn cross_validate_cmd(
    dataset: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    k: usize,
    out: &Path,
    args: &TrainArgs,
) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    args.apply(&mut cfg);
    cfg.validate()?;
    let ds = Dataset::load(dataset)?;
    let spec = CvSpec {
        k,
        seed: cfg.seed,
        real_ratio: cfg.split.real_ratio,
        transform: cfg.model.transform,
    };
    let report = cross_validate(&ds.samples, &cfg.hyperparams(), &cfg.train, &spec)?;
    create_dir(out)?;
    report.write_csv(&out.join("cv.csv"))?;
    write_json(&out.join("cv.json"), &report)?;
    cfg.echo(out, "cross-validate")?;
    println!("mean validation R2 {:.4} over {k} folds", report.mean_val_r2);
    Ok(())
}

fn grid_search_cmd(dataset: &Path, config: Option<&Path>, seed: Option<u64>, top: usize, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    cfg.validate()?;
    let ds = Dataset::load(dataset)?;
    let (synthetic, real) = partition(&ds.samples);
    let manifest = split(synthetic.len(), real.len(), &cfg.split)?;
    let tr = SplitManifest::resolve(&manifest.train, &synthetic, &real)?;
    let va = SplitManifest::resolve(&manifest.validation, &synthetic, &real)?;
    let owned: Vec<Sample> = tr.iter().map(|s| (*s).clone()).collect();
    let stats = fit_norm(&owned)?;
    let dtr = Design::new(&tr, &stats, cfg.model.transform)?;
    let dva = Design::new(&va, &stats, cfg.model.transform)?;
    let rows = grid_search(&cfg.grid, &dtr, &dva, &cfg.train)?;
    create_dir(out)?;
    write_grid_csv(&out.join("grid_full.csv"), &rows)?;
    write_grid_csv(&out.join("grid.csv"), &top_per_structure(&rows, top))?;
    cfg.echo(out, "grid-search")?;
    if let Some(best) = rows.first() {
        println!("best: {} (validation R2 {:.4})", best.hyperparams, best.val_r2);
    }
    Ok(())
}
