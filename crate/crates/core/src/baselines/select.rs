use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::msn::{Aggregation, KnnModel};
use crate::error::{Error, Result};
use crate::gpr::TrainingSet;

/// Geometric cooling schedule for predictor selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaSchedule {
    pub cooling: f64,
    pub proposals_per_temperature: usize,
    pub max_temperatures: usize,
    /// Stop after this many consecutive temperatures without a new best.
    pub max_unimproved: usize,
    /// Random subsets used to set the initial temperature.
    pub calibration_subsets: usize,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            cooling: 0.95,
            proposals_per_temperature: 200,
            max_temperatures: 50,
            max_unimproved: 10,
            calibration_subsets: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected predictor indices, ascending.
    pub subset: Vec<usize>,
    pub objective: f64,
    /// Best objective after each temperature.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Mean over attributes of the leave-one-out kNN RMSE% on `ts`, with the
/// MSN projection fitted once on all of `ts`. Attributes with zero mean are
/// skipped.
pub fn loo_knn_objective(
    ts: &TrainingSet<f64>,
    subset: &[usize],
    k: usize,
    aggregation: Aggregation,
) -> Result<f64> {
    let model = KnnModel::fit(ts, subset, k.min(ts.n_points() - 1), aggregation)?;
    let pred = model.loo_predictions();
    let n = ts.n_points() as f64;
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..ts.n_attributes() {
        let mean = (0..ts.n_points()).map(|i| ts.y[(i, a)]).sum::<f64>() / n;
        if mean == 0.0 {
            continue;
        }
        let mse = (0..ts.n_points())
            .map(|i| (pred[(i, a)] - ts.y[(i, a)]).powi(2))
            .sum::<f64>()
            / n;
        total += 100.0 * mse.sqrt() / mean;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Training(
            "every attribute has zero mean; kNN objective undefined".into(),
        ));
    }
    Ok(total / count as f64)
}

struct Objective<'a> {
    ts: &'a TrainingSet<f64>,
    k: usize,
    aggregation: Aggregation,
    cache: HashMap<Vec<usize>, f64>,
}

impl Objective<'_> {
    fn eval(&mut self, subset: &[usize]) -> f64 {
        let mut key = subset.to_vec();
        key.sort_unstable();
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        // an unusable subset (e.g. singular) is simply never preferred
        let v = loo_knn_objective(self.ts, &key, self.k, self.aggregation).unwrap_or(f64::INFINITY);
        self.cache.insert(key, v);
        v
    }
}

fn sd(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return 0.0;
    }
    let m = finite.iter().sum::<f64>() / finite.len() as f64;
    (finite.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
}

/// Chooses `n_select` predictors minimizing [`loo_knn_objective`] by
/// simulated annealing with swap moves. Deterministic given `seed`.
pub fn sa_select_predictors(
    ts: &TrainingSet<f64>,
    n_select: usize,
    k: usize,
    schedule: &SaSchedule,
    seed: u64,
) -> Result<Selection> {
    let nx = ts.n_predictors();
    if n_select == 0 || n_select > nx {
        return Err(Error::input(format!(
            "cannot select {n_select} of {nx} predictors"
        )));
    }
    if !(schedule.cooling > 0.0 && schedule.cooling < 1.0) {
        return Err(Error::input("cooling factor must lie in (0, 1)"));
    }
    let mut obj = Objective {
        ts,
        k,
        aggregation: Aggregation::Mean,
        cache: HashMap::new(),
    };
    if n_select == nx {
        let subset: Vec<usize> = (0..nx).collect();
        let objective = obj.eval(&subset);
        if !objective.is_finite() {
            return Err(Error::Training(
                "kNN objective undefined for the full predictor set".into(),
            ));
        }
        return Ok(Selection {
            subset,
            objective,
            history: vec![objective],
            evaluations: 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..schedule.calibration_subsets.max(1) {
        let s = sample(&mut rng, nx, n_select).into_vec();
        let v = obj.eval(&s);
        starts.push((s, v));
    }
    let values: Vec<f64> = starts.iter().map(|s| s.1).collect();
    let (mut current, mut current_v) = starts
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    let mut temperature = sd(&values);
    if !(temperature > 0.0) {
        temperature = 1e-3 * current_v.abs().max(1.0);
    }
    let (mut best, mut best_v) = (current.clone(), current_v);
    let mut history = Vec::new();
    let mut unimproved = 0;

    for _ in 0..schedule.max_temperatures {
        let before = best_v;
        for _ in 0..schedule.proposals_per_temperature {
            let out_pos = rng.random_range(0..n_select);
            let candidates: Vec<usize> = (0..nx).filter(|j| !current.contains(j)).collect();
            let incoming = candidates[rng.random_range(0..candidates.len())];
            let mut proposal = current.clone();
            proposal[out_pos] = incoming;
            let v = obj.eval(&proposal);
            let delta = v - current_v;
            let u: f64 = rng.random();
            if delta <= 0.0 || (v.is_finite() && u < (-delta / temperature).exp()) {
                current = proposal;
                current_v = v;
                if current_v < best_v {
                    best = current.clone();
                    best_v = current_v;
                }
            }
        }
        history.push(best_v);
        unimproved = if best_v < before { 0 } else { unimproved + 1 };
        if unimproved >= schedule.max_unimproved {
            break;
        }
        temperature *= schedule.cooling;
    }
    if !best_v.is_finite() {
        return Err(Error::Training(
            "no predictor subset gave a finite kNN objective".into(),
        ));
    }
    best.sort_unstable();
    Ok(Selection {
        subset: best,
        objective: best_v,
        history,
        evaluations: obj.cache.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn toy() -> TrainingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 40;
        let y = Matrix::from_fn(n, 2, |_, _| rng.random_range(1.0..10.0));
        let x = Matrix::from_fn(n, 6, |i, j| {
            if j == 4 {
                y[(i, 0)]
            } else {
                rng.random_range(0.0..1.0)
            }
        });
        TrainingSet::from_matrices(x, y).unwrap()
    }

    #[test]
    fn full_set_evaluates_once() {
        let ts = toy();
        let s = sa_select_predictors(&ts, 6, 5, &SaSchedule::default(), 0).unwrap();
        assert_eq!(s.subset, (0..6).collect::<Vec<_>>());
        assert_eq!(s.evaluations, 1);
    }

    #[test]
    fn incumbent_never_worsens() {
        let ts = toy();
        let s = sa_select_predictors(&ts, 2, 5, &SaSchedule::default(), 1).unwrap();
        assert!(s.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*s.history.last().unwrap(), s.objective);
    }

    #[test]
    fn rejects_oversized_selection() {
        assert!(sa_select_predictors(&toy(), 7, 5, &SaSchedule::default(), 0).is_err());
    }

    #[test]
    fn deterministic() {
        let ts = toy();
        let a = sa_select_predictors(&ts, 3, 5, &SaSchedule::default(), 4).unwrap();
        let b = sa_select_predictors(&ts, 3, 5, &SaSchedule::default(), 4).unwrap();
        assert_eq!(a, b);
    }
}
