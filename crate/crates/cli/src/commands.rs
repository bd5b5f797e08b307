use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpforest::baselines::{bayes_linear_fit, BayesConfig, KnnModel};
use gpforest::dataio::{generate_synthetic, load_dataset, load_predictors, save_dataset, Dataset};
use gpforest::evaluation::{
    self, baseline_selection, record_columns, seed_for_plot, write_metrics, write_records,
    write_size_metrics, write_size_summary, Estimate, Method,
};
use gpforest::gpr::{train as gpr_train, TrainingSet};
use gpforest::persist::{load_model, save_model, SavedModel};
use gpforest::Error;
use log::info;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CommonArgs;

pub const INPUT: u8 = 2;
pub const TRAINING: u8 = 3;
pub const PREDICTION: u8 = 4;
pub const EVALUATION: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn fail(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure {
        code,
        message: e.to_string(),
    }
}

fn input_err(message: impl Into<String>) -> Failure {
    Failure {
        code: INPUT,
        message: message.into(),
    }
}

fn io_err(code: u8, path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure {
        code,
        message: format!("{}: {e}", path.display()),
    }
}

/// Input errors keep exit code 2; anything else gets the stage's code.
fn staged(code: u8) -> impl Fn(Error) -> Failure {
    move |e| {
        let c = match e {
            Error::InvalidInput(_) | Error::Data(_) => INPUT,
            _ => code,
        };
        Failure {
            code: c,
            message: e.to_string(),
        }
    }
}

struct Run {
    cfg: RunConfig,
    raw_config: Option<String>,
}

impl Run {
    fn header(&self) -> String {
        format!(
            "gpforest {}\nconfig_sha256={}\nseed={}",
            env!("CARGO_PKG_VERSION"),
            self.cfg.hash(),
            self.cfg.seed
        )
    }

    fn data(&self) -> Result<&Path, Failure> {
        self.cfg
            .paths
            .data
            .as_deref()
            .ok_or_else(|| input_err("--data is required"))
    }

    fn model(&self) -> Result<&Path, Failure> {
        self.cfg
            .paths
            .model
            .as_deref()
            .ok_or_else(|| input_err("--model is required"))
    }

    fn out(&self) -> Result<&Path, Failure> {
        self.cfg
            .paths
            .out
            .as_deref()
            .ok_or_else(|| input_err("--out is required"))
    }

    fn single_method(&self) -> Result<Method, Failure> {
        match self.cfg.methods.as_slice() {
            [m] => Ok(*m),
            _ => Err(input_err(
                "exactly one --method is required for this command",
            )),
        }
    }

    fn load_data(&self) -> Result<Dataset, Failure> {
        let path = self.data()?;
        let ds = load_dataset(path).map_err(fail(INPUT))?;
        info!("{}: {}", path.display(), ds.summary());
        Ok(ds)
    }

    /// Writes the effective configuration, and the supplied file verbatim,
    /// next to run outputs.
    fn write_provenance(&self, dir: &Path, code: u8) -> Result<(), Failure> {
        let p = dir.join("run_config.toml");
        fs::write(
            &p,
            format!(
                "# {}\n{}",
                self.header().replace('\n', "\n# "),
                self.cfg.to_toml()
            ),
        )
        .map_err(io_err(code, &p))?;
        if let Some(text) = &self.raw_config {
            let p = dir.join("config.toml");
            fs::write(&p, text).map_err(io_err(code, &p))?;
        }
        Ok(())
    }
}

fn settings(args: &CommonArgs) -> Result<Run, Failure> {
    let (mut cfg, raw_config) = match &args.config {
        Some(p) => {
            let (c, text) = RunConfig::load(p).map_err(input_err)?;
            (c, Some(text))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.method {
        cfg.methods = m
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(fail(INPUT))?;
        if cfg.methods.is_empty() {
            return Err(input_err("--method lists no methods"));
        }
    }
    if args.data.is_some() {
        cfg.paths.data = args.data.clone();
    }
    if args.model.is_some() {
        cfg.paths.model = args.model.clone();
    }
    if args.out.is_some() {
        cfg.paths.out = args.out.clone();
    }
    cfg.check_paths().map_err(input_err)?;
    Ok(Run { cfg, raw_config })
}

pub fn validate(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let ds = run.load_data()?;
    println!("{}", ds.summary());
    Ok(())
}

pub fn synth(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let out = run.out()?;
    let ds = generate_synthetic(&run.cfg.synth_config()).map_err(fail(INPUT))?;
    save_dataset(&ds, out, Some(&run.header())).map_err(fail(INPUT))?;
    info!("wrote {} ({})", out.display(), ds.summary());
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn baseline_subset(
    configured: Option<&Vec<usize>>,
    ts: &TrainingSet<f64>,
    run: &Run,
) -> Result<(Vec<usize>, serde_json::Value), Failure> {
    if let Some(s) = configured {
        return Ok((s.clone(), serde_json::Value::Null));
    }
    let sel = baseline_selection(ts, &run.cfg.eval_config()).map_err(fail(TRAINING))?;
    let info = json!({ "objective": sel.objective, "evaluations": sel.evaluations, "history": sel.history });
    Ok((sel.subset, info))
}

pub fn train(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let method = run.single_method()?;
    let out = run.out()?.to_path_buf();
    let ds = run.load_data()?;
    let ts = ds.to_training_set().map_err(fail(INPUT))?;
    let cfg = &run.cfg;

    cfg.gpr.to_config().validate().map_err(fail(INPUT))?;
    cfg.bayes.sampler.validate().map_err(fail(INPUT))?;

    let started = Instant::now();
    let (model, details) = match method {
        Method::Gpr => {
            let m = gpr_train(&ts, &cfg.gpr.to_config()).map_err(fail(TRAINING))?;
            let (jitter, level) = m.jitter();
            let d = json!({
                "gamma_jitter": jitter,
                "jitter_level": level,
                "kept_predictors": m.kept_predictors(),
                "warnings": m.warnings(),
            });
            (SavedModel::Gpr(m), d)
        }
        Method::Knn => {
            let (subset, selection) = baseline_subset(cfg.knn.subset.as_ref(), &ts, &run)?;
            let m = KnnModel::fit(&ts, &subset, cfg.knn.k, cfg.knn.aggregation)
                .map_err(fail(TRAINING))?;
            let d = json!({
                "subset": subset,
                "k": m.k,
                "squared_correlations": m.projection.squared_correlations,
                "ridge": m.projection.ridge,
                "selection": selection,
            });
            (SavedModel::Knn(m), d)
        }
        Method::Bayes => {
            let (subset, selection) = baseline_subset(cfg.bayes.subset.as_ref(), &ts, &run)?;
            let bcfg = BayesConfig {
                subset: Some(subset),
                ..cfg.bayes.clone()
            };
            let m = bayes_linear_fit(&ts, &bcfg).map_err(fail(TRAINING))?;
            let d = json!({ "subset": m.subset, "ridge": m.ridge, "selection": selection });
            (SavedModel::Bayes(m), d)
        }
    };
    let wall = started.elapsed().as_secs_f64();

    save_model(&model, &out).map_err(fail(TRAINING))?;
    let bytes = fs::read(&out).map_err(io_err(TRAINING, &out))?;
    let meta = json!({
        "tool": "gpforest",
        "version": env!("CARGO_PKG_VERSION"),
        "method": method,
        "config_sha256": cfg.hash(),
        "seed": cfg.seed,
        "model_sha256": hex::encode(Sha256::digest(&bytes)),
        "n_train": ts.n_points(),
        "n_attributes": ts.n_attributes(),
        "n_predictors": ts.n_predictors(),
        "attribute_names": ts.attribute_names,
        "predictor_names": ts.predictor_names,
        "details": details,
    });
    let meta_path = sidecar(&out, "meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("json") + "\n",
    )
    .map_err(io_err(TRAINING, &meta_path))?;
    let timing_path = sidecar(&out, "timing.json");
    let timing = json!({ "wall_time_seconds": wall, "jobs": rayon::current_num_threads() });
    fs::write(
        &timing_path,
        serde_json::to_string_pretty(&timing).expect("json") + "\n",
    )
    .map_err(io_err(TRAINING, &timing_path))?;
    info!(
        "trained {method} on {} plots in {wall:.3} s -> {}",
        ts.n_points(),
        out.display()
    );
    Ok(())
}

fn estimate(model: &SavedModel, x: &[f64], seed: u64) -> gpforest::Result<Estimate> {
    match model {
        SavedModel::Gpr(m) => Estimate::from_gpr(&m.predict(x)?),
        SavedModel::Knn(m) => Estimate::from_point(&m.predict(x)?),
        SavedModel::Bayes(m) => Estimate::from_bayes(&m.predict(x, seed)?),
    }
}

pub fn predict(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let model_path = run.model()?;
    let data_path = run.data()?;
    let out = run.out()?;
    let model = load_model(model_path).map_err(fail(INPUT))?;
    let table = load_predictors(data_path).map_err(fail(INPUT))?;
    let x = table
        .select(model.predictor_names())
        .map_err(fail(PREDICTION))?;
    let seed = run.cfg.seed;

    let estimates: Vec<Estimate> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            estimate(&model, x.row(i), seed_for_plot(seed, i)).map_err(|e| Failure {
                code: PREDICTION,
                message: format!("plot {}: {e}", table.plot_ids[i]),
            })
        })
        .collect::<Result<_, _>>()?;

    let file = File::create(out).map_err(io_err(PREDICTION, out))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        for line in run.header().lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(
            w,
            "# method={}; totals are sums over species of n, ba and v",
            model.method()
        )?;
        let head: Vec<String> = std::iter::once("plot_id".to_string())
            .chain(
                record_columns()
                    .into_iter()
                    .flat_map(|c| [c.clone(), format!("{c}_lower"), format!("{c}_upper")]),
            )
            .collect();
        writeln!(w, "{}", head.join(","))?;
        for (id, e) in table.plot_ids.iter().zip(&estimates) {
            let mut row = vec![id.clone()];
            for (j, p) in e.point.iter().enumerate() {
                row.push(p.to_string());
                match &e.intervals {
                    Some(iv) => {
                        row.push(iv[j].lower.to_string());
                        row.push(iv[j].upper.to_string());
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(PREDICTION, out))?;
    info!("wrote {} predictions to {}", estimates.len(), out.display());
    Ok(())
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn write_failures(
    path: &Path,
    header: &str,
    failures: &[evaluation::Failure],
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in header.lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "method,plot_id,size,rep,message")?;
    for f in failures {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            f.method,
            f.plot_id,
            opt(f.size),
            opt(f.rep),
            csv_quote(&f.message)
        )?;
    }
    w.flush()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(EVALUATION, path))
}

fn finish(w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.into_inner()
        .map_err(|e| Failure {
            code: EVALUATION,
            message: format!("{}: {e}", path.display()),
        })?
        .sync_all()
        .map_err(io_err(EVALUATION, path))
}

pub fn loocv(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let dir = run.out()?.to_path_buf();
    let ds = run.load_data()?;
    let result = evaluation::loocv(&ds, &run.cfg.methods, &run.cfg.eval_config())
        .map_err(staged(EVALUATION))?;

    fs::create_dir_all(&dir).map_err(io_err(EVALUATION, &dir))?;
    let header = run.header();
    let p = dir.join("records.csv");
    let mut w = create(&p)?;
    write_records(&result.records, &mut w, Some(&header)).map_err(fail(EVALUATION))?;
    finish(w, &p)?;
    let p = dir.join("metrics.csv");
    let mut w = create(&p)?;
    write_metrics(&result.metrics, &mut w, Some(&header)).map_err(fail(EVALUATION))?;
    finish(w, &p)?;
    let p = dir.join("failures.csv");
    write_failures(&p, &header, &result.failures).map_err(io_err(EVALUATION, &p))?;
    if let Some(sel) = &result.selection {
        let p = dir.join("selection.json");
        fs::write(&p, serde_json::to_string_pretty(sel).expect("json") + "\n")
            .map_err(io_err(EVALUATION, &p))?;
    }
    run.write_provenance(&dir, EVALUATION)?;
    for m in &run.cfg.methods {
        if let Some((lo, mean, hi)) = result.metrics.rmse_summary(*m) {
            info!("{m}: RMSE% min {lo:.2}, mean {mean:.2}, max {hi:.2}");
        }
    }
    if !result.failures.is_empty() {
        info!("{} folds failed (see failures.csv)", result.failures.len());
    }
    Ok(())
}

pub fn size_experiment(args: &CommonArgs) -> Result<(), Failure> {
    let run = settings(args)?;
    let dir = run.out()?.to_path_buf();
    let ds = run.load_data()?;
    let s = &run.cfg.size_experiment;
    let result = evaluation::size_experiment(
        &ds,
        &s.sizes,
        s.reps,
        run.cfg.seed,
        &run.cfg.methods,
        &run.cfg.eval_config(),
    )
    .map_err(staged(EVALUATION))?;

    fs::create_dir_all(&dir).map_err(io_err(EVALUATION, &dir))?;
    let header = run.header();
    let p = dir.join("size_summary.csv");
    let mut w = create(&p)?;
    write_size_summary(&result.rows, &mut w, Some(&header)).map_err(fail(EVALUATION))?;
    finish(w, &p)?;
    let p = dir.join("size_metrics.csv");
    let mut w = create(&p)?;
    write_size_metrics(&result.rows, &mut w, Some(&header)).map_err(fail(EVALUATION))?;
    finish(w, &p)?;
    let p = dir.join("failures.csv");
    write_failures(&p, &header, &result.failures).map_err(io_err(EVALUATION, &p))?;
    if let Some(sel) = &result.selection {
        let p = dir.join("selection.json");
        fs::write(&p, serde_json::to_string_pretty(sel).expect("json") + "\n")
            .map_err(io_err(EVALUATION, &p))?;
    }
    run.write_provenance(&dir, EVALUATION)?;
    for r in &result.rows {
        if let Some(mean) = r.rmse_mean {
            info!(
                "n_t={} {}: mean RMSE% {mean:.2} ({} failed)",
                r.size, r.method, r.n_failed
            );
        }
    }
    Ok(())
}
