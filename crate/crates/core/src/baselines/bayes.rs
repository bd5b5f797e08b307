//! Bayesian inversion of a linear predictor model.
//!
//! Predictors are modelled as `x = A φ(y) + e` with `φ(y) = [1, y]` and
//! Gaussian residuals `e ~ N(μ_e, Γ_e)`; attributes carry the Gaussian
//! prior `N(μ_θ, Γ_y)`. The posterior predictive density of `y` given a new
//! `x` is this Gaussian likelihood × prior, set to zero for any negative
//! component, and is sampled by random-walk Metropolis.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::StandardizationStats;
use crate::error::{Error, Result};
use crate::gpr::TrainingSet;
use crate::linalg::{Cholesky, JitterSchedule, Matrix};
use crate::truncation::{map_nonneg, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    /// Total iterations including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    /// Initial proposal scale; `None` uses `2.38 / √d`.
    pub initial_scale: Option<f64>,
    pub target_acceptance: f64,
    /// Burn-in batch length between scale adaptations.
    pub adapt_interval: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            iterations: 50_000,
            burn_in: 10_000,
            initial_scale: None,
            target_acceptance: 0.3,
            adapt_interval: 100,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::input("burn-in must be shorter than the chain"));
        }
        if self.adapt_interval == 0
            || !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0)
        {
            return Err(Error::input("invalid sampler adaptation settings"));
        }
        if matches!(self.initial_scale, Some(s) if !(s > 0.0)) {
            return Err(Error::input("proposal scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    /// Predictor columns used; `None` uses all.
    pub subset: Option<Vec<usize>>,
    pub ridge: JitterSchedule,
    pub sampler: SamplerSettings,
}

impl Default for BayesConfig {
    fn default() -> Self {
        BayesConfig {
            subset: None,
            ridge: JitterSchedule {
                start: 1e-10,
                factor: 10.0,
                max: 1e-1,
            },
            sampler: SamplerSettings::default(),
        }
    }
}

/// Regularized Cholesky: bare matrix first, then `λ · max(mean diag, unit)`
/// on the diagonal along `schedule`.
fn ridge_cholesky(
    m: &Matrix<f64>,
    schedule: JitterSchedule,
    unit: f64,
) -> Result<(Cholesky<f64>, Matrix<f64>, f64)> {
    if let Ok(c) = Cholesky::factor(m) {
        return Ok((c, m.clone(), 0.0));
    }
    let d = m.diagonal();
    let scale = (d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64).max(unit);
    let mut level = schedule.start;
    while level <= schedule.max * (1.0 + 1e-9) {
        let mut r = m.clone();
        r.add_to_diagonal(level * scale);
        if let Ok(c) = Cholesky::factor(&r) {
            return Ok((c, r, level * scale));
        }
        level *= schedule.factor;
    }
    Err(Error::Training(format!(
        "matrix not positive definite even with ridge {:e}",
        schedule.max * scale
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesLinearModel {
    pub attribute_names: Vec<String>,
    pub predictor_names: Vec<String>,
    /// Predictor columns entering the likelihood.
    pub subset: Vec<usize>,
    pub input_stats: StandardizationStats<f64>,
    /// Â (standardized predictors × [1, y]).
    pub coefficients: Matrix<f64>,
    pub residual_mean: Vec<f64>,
    pub residual_cov: Matrix<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Matrix<f64>,
    /// Ridge added to (ΦᵀΦ, Γ_e, Γ_y).
    pub ridge: [f64; 3],
    pub sampler: SamplerSettings,
    // x ↦ posterior mean pieces, and the posterior covariance factor
    gain: Matrix<f64>,
    prior_term: Vec<f64>,
    posterior_cov: Matrix<f64>,
    posterior_chol: Matrix<f64>,
}

impl BayesLinearModel {
    /// Assembles a model from its statistics. `coefficients` is
    /// `n_subset × (n_y + 1)`, intercept first.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        attribute_names: Vec<String>,
        predictor_names: Vec<String>,
        subset: Vec<usize>,
        input_stats: StandardizationStats<f64>,
        coefficients: Matrix<f64>,
        residual_mean: Vec<f64>,
        residual_cov: Matrix<f64>,
        prior_mean: Vec<f64>,
        prior_cov: Matrix<f64>,
        sampler: SamplerSettings,
    ) -> Result<Self> {
        let ny = prior_mean.len();
        let p = subset.len();
        if attribute_names.len() != ny {
            return Err(Error::dims("attribute names", ny, attribute_names.len()));
        }
        if coefficients.shape() != (p, ny + 1) {
            return Err(Error::dims(
                "coefficient columns",
                ny + 1,
                coefficients.cols(),
            ));
        }
        if residual_cov.shape() != (p, p) || residual_mean.len() != p || input_stats.dim() != p {
            return Err(Error::dims("residual statistics", p, residual_mean.len()));
        }
        if prior_cov.shape() != (ny, ny) {
            return Err(Error::dims("prior covariance", ny, prior_cov.rows()));
        }
        if let Some(&bad) = subset.iter().find(|&&j| j >= predictor_names.len()) {
            return Err(Error::input(format!("predictor index {bad} out of range")));
        }
        sampler.validate()?;
        let ridge = BayesConfig::default().ridge;
        let (ce, residual_cov, re) = ridge_cholesky(&residual_cov, ridge, 1e-12)?;
        let (cy, prior_cov, ry) = ridge_cholesky(&prior_cov, ridge, 1e-12)?;

        let a1 = Matrix::from_fn(p, ny, |i, a| coefficients[(i, a + 1)]);
        let ge_a1 = ce.solve_matrix(&a1)?;
        let gain = ge_a1.transpose();
        let mut precision = gain.matmul(&a1)?.add(&cy.inverse()?)?;
        precision.symmetrize();
        let prior_term = cy.solve(&prior_mean)?;
        let (cq, _, _) = ridge_cholesky(&precision, ridge, 1e-12)?;
        let mut posterior_cov = cq.inverse()?;
        posterior_cov.symmetrize();
        let (cs, posterior_cov, _) = ridge_cholesky(&posterior_cov, ridge, 1e-300)?;
        let posterior_chol = cs.l().clone();
        Ok(BayesLinearModel {
            attribute_names,
            predictor_names,
            subset,
            input_stats,
            coefficients,
            residual_mean,
            residual_cov,
            prior_mean,
            prior_cov,
            ridge: [0.0, re, ry],
            sampler,
            gain,
            prior_term,
            posterior_cov,
            posterior_chol,
        })
    }

    pub fn n_attributes(&self) -> usize {
        self.prior_mean.len()
    }

    /// Â expressed in raw predictor units.
    pub fn coefficients_raw(&self) -> Matrix<f64> {
        let s = &self.input_stats;
        Matrix::from_fn(
            self.coefficients.rows(),
            self.coefficients.cols(),
            |i, j| {
                let v = self.coefficients[(i, j)] * s.sds[i];
                if j == 0 {
                    v + s.means[i]
                } else {
                    v
                }
            },
        )
    }

    /// Mean and covariance of the untruncated Gaussian posterior given `x_star`.
    pub fn gaussian_posterior(&self, x_star: &[f64]) -> Result<(Vec<f64>, &Matrix<f64>)> {
        if x_star.len() != self.predictor_names.len() {
            return Err(Error::dims(
                "Bayes predictor vector",
                self.predictor_names.len(),
                x_star.len(),
            ));
        }
        let raw: Vec<f64> = self.subset.iter().map(|&j| x_star[j]).collect();
        let u = self.input_stats.apply_row(&raw)?;
        let r: Vec<f64> = (0..u.len())
            .map(|i| u[i] - self.coefficients[(i, 0)] - self.residual_mean[i])
            .collect();
        let b: Vec<f64> = self
            .gain
            .matvec(&r)?
            .iter()
            .zip(&self.prior_term)
            .map(|(a, b)| a + b)
            .collect();
        Ok((self.posterior_cov.matvec(&b)?, &self.posterior_cov))
    }

    /// Runs one Metropolis chain for `x_star`; retained samples are the
    /// post-burn-in states.
    pub fn sample(&self, x_star: &[f64], settings: &SamplerSettings, seed: u64) -> Result<Chain> {
        settings.validate()?;
        let (mean, cov) = self.gaussian_posterior(x_star)?;
        let d = mean.len();
        let l = &self.posterior_chol;
        // whitened coordinates: y = mean + L ξ, log density −|ξ|²/2
        let start = map_nonneg(&mean, cov)?.point;
        let diff: Vec<f64> = start.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let mut xi = vec![0.0; d];
        for i in 0..d {
            let row = l.row(i);
            xi[i] = (diff[i] - (0..i).map(|j| row[j] * xi[j]).sum::<f64>()) / row[i];
        }
        let to_y = |xi: &[f64], out: &mut [f64]| {
            for i in 0..d {
                let row = l.row(i);
                out[i] = mean[i] + (0..=i).map(|j| row[j] * xi[j]).sum::<f64>();
            }
        };
        let mut y = vec![0.0; d];
        to_y(&xi, &mut y);
        // the mode may sit on the boundary up to rounding
        for (v, s) in y.iter_mut().zip(&start) {
            if *v < 0.0 && *s >= 0.0 {
                *v = 0.0;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("MCMC start is not finite".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scale = settings.initial_scale.unwrap_or(2.38 / (d as f64).sqrt());
        let keep = settings.iterations - settings.burn_in;
        let mut samples = Vec::with_capacity(keep * d);
        let mut energy = 0.5 * xi.iter().map(|v| v * v).sum::<f64>();
        let (mut batch_acc, mut batch_n, mut batches) = (0usize, 0usize, 0usize);
        let mut accepted = 0usize;
        let mut prop = vec![0.0; d];
        let mut y_prop = vec![0.0; d];
        for it in 0..settings.iterations {
            for (p, x) in prop.iter_mut().zip(&xi) {
                let z: f64 = rng.sample(StandardNormal);
                *p = x + scale * z;
            }
            to_y(&prop, &mut y_prop);
            let mut ok = false;
            if y_prop.iter().all(|&v| v >= 0.0) {
                let e = 0.5 * prop.iter().map(|v| v * v).sum::<f64>();
                let u: f64 = rng.random();
                if u.ln() < energy - e {
                    ok = true;
                    energy = e;
                    std::mem::swap(&mut xi, &mut prop);
                    y.copy_from_slice(&y_prop);
                }
            }
            if it < settings.burn_in {
                batch_acc += ok as usize;
                batch_n += 1;
                if batch_n == settings.adapt_interval {
                    batches += 1;
                    let rate = batch_acc as f64 / batch_n as f64;
                    scale *=
                        ((rate - settings.target_acceptance) * 2.0 / (batches as f64).sqrt()).exp();
                    batch_acc = 0;
                    batch_n = 0;
                }
            } else {
                accepted += ok as usize;
                samples.extend_from_slice(&y);
            }
        }
        let acceptance_rate = accepted as f64 / keep as f64;
        let mut warnings = Vec::new();
        if !(0.05..=0.7).contains(&acceptance_rate) {
            warnings.push(format!(
                "MCMC acceptance rate {acceptance_rate:.3} outside [0.05, 0.7]"
            ));
        }
        if accepted == 0 {
            return Err(Error::Numerical(
                "MCMC chain never moved after burn-in".into(),
            ));
        }
        Ok(Chain {
            samples: Matrix::new(keep, d, samples)?,
            acceptance_rate,
            proposal_scale: scale,
            warnings,
        })
    }

    pub fn predict(&self, x_star: &[f64], seed: u64) -> Result<BayesPrediction> {
        let chain = self.sample(x_star, &self.sampler, seed)?;
        Ok(chain.summarize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Retained states, one per row.
    pub samples: Matrix<f64>,
    pub acceptance_rate: f64,
    pub proposal_scale: f64,
    pub warnings: Vec<String>,
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize_column(values: &mut [f64]) -> (f64, Interval<f64>) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    let iv = Interval {
        lower: quantile_sorted(values, 0.025),
        upper: quantile_sorted(values, 0.975),
    };
    (mean, iv)
}

impl Chain {
    /// Sample mean and equal-tail 95% interval of `Σ_j w_j y_j`.
    pub fn linear_summary(&self, weights: &[f64]) -> (f64, Interval<f64>) {
        let mut v: Vec<f64> = (0..self.samples.rows())
            .map(|i| {
                self.samples
                    .row(i)
                    .iter()
                    .zip(weights)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        summarize_column(&mut v)
    }

    pub fn summarize(&self) -> BayesPrediction {
        let d = self.samples.cols();
        let (point, intervals) = (0..d)
            .map(|a| summarize_column(&mut self.samples.column(a)))
            .unzip();
        BayesPrediction {
            point,
            intervals,
            acceptance_rate: self.acceptance_rate,
            warnings: self.warnings.clone(),
            chain: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesPrediction {
    /// Posterior sample means.
    pub point: Vec<f64>,
    /// 2.5% / 97.5% sample quantiles.
    pub intervals: Vec<Interval<f64>>,
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
    pub chain: Chain,
}

/// Fits Â by (ridge-regularized) least squares of the standardized
/// predictors on `[1, y]`, residual statistics from the fit, and the prior
/// from the attribute sample mean and covariance.
pub fn bayes_linear_fit(ts: &TrainingSet<f64>, config: &BayesConfig) -> Result<BayesLinearModel> {
    let n = ts.n_points();
    let ny = ts.n_attributes();
    if n <= ny + 1 {
        return Err(Error::input(format!(
            "Bayesian linear model needs more than {} plots, got {n}",
            ny + 1
        )));
    }
    config.sampler.validate()?;
    let requested: Vec<usize> = match &config.subset {
        Some(s) if s.is_empty() => return Err(Error::input("empty predictor subset")),
        Some(s) => s.clone(),
        None => (0..ts.n_predictors()).collect(),
    };
    if let Some(&bad) = requested.iter().find(|&&j| j >= ts.n_predictors()) {
        return Err(Error::input(format!("predictor index {bad} out of range")));
    }
    let stats_all = StandardizationStats::fit(&ts.x.select_cols(&requested));
    let subset: Vec<usize> = stats_all
        .kept_columns()
        .into_iter()
        .map(|j| requested[j])
        .collect();
    if subset.is_empty() {
        return Err(Error::Training(
            "all selected predictors are constant".into(),
        ));
    }
    let xs = ts.x.select_cols(&subset);
    let input_stats = StandardizationStats::fit(&xs);
    let u = input_stats.apply(&xs)?;

    let phi = Matrix::from_fn(
        n,
        ny + 1,
        |i, j| if j == 0 { 1.0 } else { ts.y[(i, j - 1)] },
    );
    let phi_t = phi.transpose();
    let mut gram = phi_t.matmul(&phi)?;
    gram.symmetrize();
    let (cg, _, r_phi) = ridge_cholesky(&gram, config.ridge, 1.0)?;
    let coef_t = cg.solve_matrix(&phi_t.matmul(&u)?)?;
    let coefficients = coef_t.transpose();
    let fitted = phi.matmul(&coef_t)?;
    let resid = u.sub(&fitted)?;
    let residual_mean = resid.column_means();
    let residual_cov = resid.sample_covariance()?;
    let prior_mean = ts.y.column_means();
    let prior_cov = ts.y.sample_covariance()?;

    let (_, residual_cov, re) = ridge_cholesky(&residual_cov, config.ridge, 1e-12)?;
    let (_, prior_cov, ry) = ridge_cholesky(&prior_cov, config.ridge, 1e-12)?;
    let mut model = BayesLinearModel::from_parts(
        ts.attribute_names.clone(),
        ts.predictor_names.clone(),
        subset,
        input_stats,
        coefficients,
        residual_mean,
        residual_cov,
        prior_mean,
        prior_cov,
        config.sampler,
    )?;
    model.ridge = [r_phi, re, ry];
    Ok(model)
}

/// Point estimate (posterior sample mean) and 95% interval per attribute
/// from a chain of `n_samples` total iterations.
pub fn bayes_linear_predict(
    model: &BayesLinearModel,
    x_star: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<BayesPrediction> {
    let mut settings = model.sampler;
    if n_samples <= settings.burn_in {
        settings.burn_in = n_samples / 5;
    }
    settings.iterations = n_samples;
    Ok(model.sample(x_star, &settings, seed)?.summarize())
}
