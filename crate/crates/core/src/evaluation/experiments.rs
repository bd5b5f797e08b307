use log::{info, warn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics, Method, MetricsTable, PredictionRecord};
use crate::baselines::{
    bayes_linear_fit, sa_select_predictors, Aggregation, BayesConfig, KnnModel, SaSchedule,
    Selection,
};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::gpr::{loo_downdate, train, GprConfig, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LooStrategy {
    /// One shared input factorization, per-fold output statistics.
    #[default]
    Downdate,
    /// Independent training per fold.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub n_select: usize,
    pub aggregation: Aggregation,
    pub schedule: SaSchedule,
    /// Fixed predictor subset; `None` runs annealed selection once on the
    /// whole dataset.
    pub subset: Option<Vec<usize>>,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 5,
            n_select: 10,
            aggregation: Aggregation::Mean,
            schedule: SaSchedule::default(),
            subset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub gpr: GprConfig<f64>,
    pub loo_strategy: LooStrategy,
    pub knn: KnnConfig,
    pub bayes: BayesConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            gpr: GprConfig::default(),
            loo_strategy: LooStrategy::Downdate,
            knn: KnnConfig::default(),
            bayes: BayesConfig::default(),
            seed: 0,
        }
    }
}

/// A prediction that could not be produced; excluded from the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: Method,
    pub plot_id: String,
    pub size: Option<usize>,
    pub rep: Option<usize>,
    pub message: String,
}

/// MCMC seed for plot `index`: `base XOR index`.
pub fn seed_for_plot(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

/// Predictor subsets used by the kNN and Bayesian baselines.
struct Subsets {
    knn: Option<Vec<usize>>,
    bayes: Option<Vec<usize>>,
    selection: Option<Selection>,
}

/// Annealed predictor selection for the baselines, as configured in
/// `config.knn` and seeded with `config.seed`.
pub fn baseline_selection(ts: &TrainingSet<f64>, config: &EvalConfig) -> Result<Selection> {
    let n_select = config.knn.n_select.min(ts.n_predictors());
    info!(
        "selecting {n_select} of {} predictors by simulated annealing",
        ts.n_predictors()
    );
    let sel = sa_select_predictors(
        ts,
        n_select,
        config.knn.k,
        &config.knn.schedule,
        config.seed,
    )?;
    info!(
        "selected predictors {:?} (objective {:.3})",
        sel.subset, sel.objective
    );
    Ok(sel)
}

/// Runs annealed predictor selection once on the full dataset when a
/// baseline needs a subset and none is configured. The Bayesian baseline
/// shares the kNN subset unless given its own.
fn resolve_subsets(
    ts: &TrainingSet<f64>,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<Subsets> {
    let needs_knn = methods.contains(&Method::Knn);
    let needs_bayes = methods.contains(&Method::Bayes) && config.bayes.subset.is_none();
    let mut selection = None;
    let shared = match (&config.knn.subset, needs_knn || needs_bayes) {
        (Some(s), _) => Some(s.clone()),
        (None, true) => {
            let sel = baseline_selection(ts, config)?;
            let s = sel.subset.clone();
            selection = Some(sel);
            Some(s)
        }
        (None, false) => None,
    };
    let bayes = config.bayes.subset.clone().or_else(|| shared.clone());
    Ok(Subsets {
        knn: shared,
        bayes,
        selection,
    })
}

fn predict_one(
    method: Method,
    train_set: &TrainingSet<f64>,
    x: &[f64],
    observed: &[f64],
    plot_id: &str,
    subsets: &Subsets,
    config: &EvalConfig,
    seed: u64,
) -> Result<PredictionRecord> {
    match method {
        Method::Gpr => {
            let model = train(train_set, &config.gpr)?;
            PredictionRecord::from_gpr(plot_id, &model.predict(x)?, observed)
        }
        Method::Knn => {
            let subset = subsets.knn.as_deref().expect("kNN subset resolved");
            let model = KnnModel::fit(train_set, subset, config.knn.k, config.knn.aggregation)?;
            PredictionRecord::from_point(plot_id, Method::Knn, &model.predict(x)?, observed)
        }
        Method::Bayes => {
            let cfg = BayesConfig {
                subset: subsets.bayes.clone(),
                ..config.bayes.clone()
            };
            let model = bayes_linear_fit(train_set, &cfg)?;
            PredictionRecord::from_bayes(plot_id, &model.predict(x, seed)?, observed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvResult {
    pub records: Vec<PredictionRecord>,
    pub metrics: MetricsTable,
    pub failures: Vec<Failure>,
    pub selection: Option<Selection>,
}

fn dedup_methods(methods: &[Method]) -> Result<Vec<Method>> {
    if methods.is_empty() {
        return Err(Error::input("no methods requested"));
    }
    let mut m = methods.to_vec();
    m.sort();
    m.dedup();
    Ok(m)
}

/// Leave-one-out cross-validation: every plot is predicted from the others.
/// Folds that fail are recorded and excluded.
pub fn loocv(ds: &Dataset, methods: &[Method], config: &EvalConfig) -> Result<LoocvResult> {
    let n = ds.n();
    if n < 3 {
        return Err(Error::input(format!(
            "leave-one-out needs at least 3 plots, got {n}"
        )));
    }
    let methods = dedup_methods(methods)?;
    let ts = ds.to_training_set()?;
    let subsets = resolve_subsets(&ts, &methods, config)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut push = |method: Method, i: usize, r: Result<PredictionRecord>| match r {
        Ok(rec) => records.push(rec),
        Err(e) => {
            warn!("{method} fold {} failed: {e}", ds.plot_ids[i]);
            failures.push(Failure {
                method,
                plot_id: ds.plot_ids[i].clone(),
                size: None,
                rep: None,
                message: e.to_string(),
            })
        }
    };

    for &method in &methods {
        info!("leave-one-out: {method}, {n} folds");
        if method == Method::Gpr && config.loo_strategy == LooStrategy::Downdate {
            let dists = loo_downdate(&ts, &config.gpr)?;
            let out: Vec<Result<PredictionRecord>> = dists
                .into_par_iter()
                .enumerate()
                .map(|(i, d)| PredictionRecord::from_gpr(&ds.plot_ids[i], &d?, ds.y.row(i)))
                .collect();
            for (i, r) in out.into_iter().enumerate() {
                push(method, i, r);
            }
            continue;
        }
        let out: Vec<Result<PredictionRecord>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let fold = ts.subset(&rest)?;
                predict_one(
                    method,
                    &fold,
                    ds.x.row(i),
                    ds.y.row(i),
                    &ds.plot_ids[i],
                    &subsets,
                    config,
                    seed_for_plot(config.seed, i),
                )
            })
            .collect();
        for (i, r) in out.into_iter().enumerate() {
            push(method, i, r);
        }
    }
    if records.is_empty() {
        return Err(Error::Training("every leave-one-out fold failed".into()));
    }
    let metrics = metrics(&records)?;
    Ok(LoocvResult {
        records,
        metrics,
        failures,
        selection: subsets.selection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub size: usize,
    pub method: Method,
    pub metrics: MetricsTable,
    /// Lowest, average and highest RMSE% over the species attributes.
    pub rmse_min: Option<f64>,
    pub rmse_mean: Option<f64>,
    pub rmse_max: Option<f64>,
    pub n_evaluations: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeExperiment {
    pub rows: Vec<SizeRow>,
    pub failures: Vec<Failure>,
    pub selection: Option<Selection>,
}

impl SizeExperiment {
    pub fn row(&self, size: usize, method: Method) -> Option<&SizeRow> {
        self.rows
            .iter()
            .find(|r| r.size == size && r.method == method)
    }
}

/// Draws of one repetition: training indices and the single test plot.
fn draw(n: usize, size: usize, base_seed: u64, rep: usize) -> (Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(rep as u64));
    rng.set_stream(size as u64);
    let mut train_idx = sample(&mut rng, n, size).into_vec();
    train_idx.sort_unstable();
    let rest: Vec<usize> = (0..n)
        .filter(|i| train_idx.binary_search(i).is_err())
        .collect();
    let test = rest[rng.random_range(0..rest.len())];
    (train_idx, test)
}

/// Repeated random training sets of each size, each evaluated on one
/// held-out plot. Repetition `r` draws from a generator seeded with
/// `base_seed + r` on stream `size`, so results do not depend on the
/// execution order.
pub fn size_experiment(
    ds: &Dataset,
    sizes: &[usize],
    reps: usize,
    base_seed: u64,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<SizeExperiment> {
    let n = ds.n();
    if sizes.is_empty() || reps == 0 {
        return Err(Error::input(
            "size experiment needs at least one size and one repetition",
        ));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s >= n || s < 2) {
        return Err(Error::input(format!(
            "training size {bad} must lie in 2..{n}"
        )));
    }
    let methods = dedup_methods(methods)?;
    let ts = ds.to_training_set()?;
    let subsets = resolve_subsets(&ts, &methods, config)?;

    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..reps).map(move |r| (s, r)))
        .collect();
    info!(
        "size experiment: {} sizes × {reps} repetitions × {} methods",
        sizes.len(),
        methods.len()
    );
    let results: Vec<Vec<(Method, Result<PredictionRecord>, usize)>> = jobs
        .par_iter()
        .map(|&(size, rep)| {
            let (train_idx, test) = draw(n, size, base_seed, rep);
            let fold = ts.subset(&train_idx);
            methods
                .iter()
                .map(|&method| {
                    let r = fold
                        .as_ref()
                        .map_err(|e| Error::input(e.to_string()))
                        .and_then(|fold| {
                            predict_one(
                                method,
                                fold,
                                ds.x.row(test),
                                ds.y.row(test),
                                &ds.plot_ids[test],
                                &subsets,
                                config,
                                seed_for_plot(base_seed.wrapping_add(rep as u64), test),
                            )
                        });
                    (method, r, test)
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &size in sizes {
        for &method in &methods {
            let mut recs = Vec::new();
            let mut failed = 0;
            for (job, res) in jobs.iter().zip(&results) {
                if job.0 != size {
                    continue;
                }
                for (m, r, test) in res {
                    if *m != method {
                        continue;
                    }
                    match r {
                        Ok(rec) => recs.push(rec.clone()),
                        Err(e) => {
                            failed += 1;
                            failures.push(Failure {
                                method,
                                plot_id: ds.plot_ids[*test].clone(),
                                size: Some(size),
                                rep: Some(job.1),
                                message: e.to_string(),
                            });
                        }
                    }
                }
            }
            let table = if recs.is_empty() {
                MetricsTable::default()
            } else {
                metrics(&recs)?
            };
            let summary = table.rmse_summary(method);
            rows.push(SizeRow {
                size,
                method,
                rmse_min: summary.map(|s| s.0),
                rmse_mean: summary.map(|s| s.1),
                rmse_max: summary.map(|s| s.2),
                n_evaluations: recs.len(),
                n_failed: failed,
                metrics: table,
            });
        }
    }
    if !failures.is_empty() {
        warn!(
            "{} size-experiment predictions failed and were excluded",
            failures.len()
        );
    }
    Ok(SizeExperiment {
        rows,
        failures,
        selection: subsets.selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_disjoint_and_reproducible() {
        let (a, t) = draw(50, 20, 7, 3);
        assert_eq!(a.len(), 20);
        assert!(!a.contains(&t));
        assert_eq!(draw(50, 20, 7, 3), (a.clone(), t));
        assert_ne!(draw(50, 20, 7, 4).0, a);
    }
}
