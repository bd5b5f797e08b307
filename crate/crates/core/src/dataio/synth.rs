//! Seeded synthetic plots with the canonical 15-attribute layout.
//!
//! Each plot has a latent state `u ~ N(0, I_q)`. Predictors are smooth
//! nonlinear functions of `u` plus noise, with heterogeneous units per
//! column. Attributes come from one of two generators:
//!
//! * [`SynthMode::GaussianProcess`]: a draw from the separable Matérn 3/2
//!   Gaussian process over the standardized predictors with output
//!   covariance `Γ = S (C_species ⊗ C_attr) S`, plus noise `c · diag(Γ)`.
//! * [`SynthMode::NonlinearSurface`]: deterministic stand-structure
//!   relations of the latent state with multiplicative noise.
//!
//! Values are clamped at zero, then whole species blocks are zeroed with
//! the configured per-species probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{attribute_names, predictor_name, Dataset, StandardizationStats, N_ATTRIBUTES};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelParams};
use crate::linalg::{cholesky_with_jitter, JitterSchedule, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    #[default]
    GaussianProcess,
    NonlinearSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_plots: usize,
    pub n_predictors: usize,
    pub seed: u64,
    pub mode: SynthMode,
    /// Predictor noise, relative to each metric's signal scale.
    pub noise_scale: f64,
    /// Attribute noise: `c` in `c · diag(Γ)` for the Gaussian-process mode,
    /// log-scale sd for the surface mode.
    pub attribute_noise: f64,
    /// Probability that a plot has no trees of the species (pine, spruce,
    /// deciduous).
    pub zero_inflation: [f64; 3],
    pub latent_dim: usize,
    /// Length scale of predictor responses in latent space.
    pub latent_smoothness: f64,
    /// When set, attribute means are `mean_shift · sd` instead of the
    /// built-in stand-level means (useful to keep clamping inactive).
    pub mean_shift: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_plots: 493,
            n_predictors: 77,
            seed: 0,
            mode: SynthMode::GaussianProcess,
            noise_scale: 0.1,
            attribute_noise: 0.1,
            zero_inflation: [0.02, 0.1, 0.25],
            latent_dim: 4,
            latent_smoothness: 1.0,
            mean_shift: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_plots < 2 {
            return Err(Error::input("synthetic data needs at least 2 plots"));
        }
        if self.n_predictors == 0 || self.latent_dim == 0 {
            return Err(Error::input(
                "predictor and latent dimensions must be positive",
            ));
        }
        if self.zero_inflation.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input(
                "zero-inflation probabilities must lie in [0, 1]",
            ));
        }
        if !(self.noise_scale >= 0.0)
            || !(self.attribute_noise >= 0.0)
            || !(self.latent_smoothness > 0.0)
        {
            return Err(Error::input(
                "noise scales must be non-negative and smoothness positive",
            ));
        }
        Ok(())
    }
}

/// Generating parameters of a Gaussian-process-mode draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Output covariance Γ.
    pub gamma: Matrix<f64>,
    pub means: Vec<f64>,
    pub error_scale: f64,
}

// (mean, sd) per attribute for a pure stand; n/ba/v scale with species share.
const BASE_STATS: [(f64, f64); 5] = [
    (15.0, 4.0),
    (18.0, 6.0),
    (600.0, 350.0),
    (9.0, 5.0),
    (70.0, 45.0),
];
const SPECIES_SHARE: [f64; 3] = [1.0, 0.7, 0.3];

const ATTR_CORR: [[f64; 5]; 5] = [
    [1.0, 0.8, -0.4, 0.4, 0.6],
    [0.8, 1.0, -0.5, 0.3, 0.5],
    [-0.4, -0.5, 1.0, 0.5, 0.2],
    [0.4, 0.3, 0.5, 1.0, 0.9],
    [0.6, 0.5, 0.2, 0.9, 1.0],
];
const SPECIES_CORR: [[f64; 3]; 3] = [[1.0, -0.4, -0.2], [-0.4, 1.0, 0.1], [-0.2, 0.1, 1.0]];

fn attribute_stats(cfg: &SynthConfig) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(N_ATTRIBUTES);
    let mut sds = Vec::with_capacity(N_ATTRIBUTES);
    for share in SPECIES_SHARE {
        for (a, &(m, sd)) in BASE_STATS.iter().enumerate() {
            let scale = if a >= 2 { share } else { 1.0 };
            let sd = sd * scale;
            sds.push(sd);
            means.push(match cfg.mean_shift {
                Some(k) => k * sd,
                None => m * scale,
            });
        }
    }
    (means, sds)
}

fn output_covariance(sds: &[f64]) -> Matrix<f64> {
    let species = Matrix::from_fn(3, 3, |i, j| SPECIES_CORR[i][j]);
    let attrs = Matrix::from_fn(5, 5, |i, j| ATTR_CORR[i][j]);
    let corr = species.kron(&attrs);
    Matrix::from_fn(N_ATTRIBUTES, N_ATTRIBUTES, |i, j| {
        corr[(i, j)] * sds[i] * sds[j]
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn latent_states(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(cfg.n_plots, cfg.latent_dim, |_, _| normal(rng))
}

fn predictors(cfg: &SynthConfig, u: &Matrix<f64>, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let q = cfg.latent_dim;
    let mut x = Matrix::zeros(cfg.n_plots, cfg.n_predictors);
    for j in 0..cfg.n_predictors {
        let w: Vec<f64> = (0..q).map(|_| normal(rng) / (q as f64).sqrt()).collect();
        let bias = normal(rng);
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let offset = rng.random_range(0.0..100.0) * scale;
        for i in 0..cfg.n_plots {
            let t = crate::linalg::dot(&w, u.row(i)) / cfg.latent_smoothness;
            let signal = match j % 3 {
                0 => (t + bias).tanh(),
                1 => (t + bias).sin(),
                _ => t,
            };
            x[(i, j)] = offset + scale * (signal + cfg.noise_scale * normal(rng));
        }
    }
    x
}

fn gp_attributes(
    cfg: &SynthConfig,
    x: &Matrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix<f64>, SynthTruth)> {
    let (means, sds) = attribute_stats(cfg);
    let gamma = output_covariance(&sds);
    let stats = StandardizationStats::fit(x);
    let z = stats.apply(x)?.select_cols(&stats.kept_columns());
    let k = gram(&z, &z, &KernelParams::default())?.entries;
    let schedule = JitterSchedule {
        start: 1e-10,
        factor: 10.0,
        max: 1e-4,
    };
    let lk = cholesky_with_jitter(&k, schedule)?.factor;
    let lg = cholesky_with_jitter(&gamma, schedule)?.factor;

    // G = L_K · W · L_Γᵀ has covariance Γ ⊗ K in attribute-major order.
    let n = cfg.n_plots;
    let w = Matrix::from_fn(n, N_ATTRIBUTES, |_, _| normal(rng));
    let g = lk.l().matmul(&w)?.matmul(&lg.l().transpose())?;
    let noise_sd: Vec<f64> = gamma
        .diagonal()
        .iter()
        .map(|d| (cfg.attribute_noise * d).sqrt())
        .collect();
    let y = Matrix::from_fn(n, N_ATTRIBUTES, |i, a| {
        means[a] + g[(i, a)] + noise_sd[a] * normal(rng)
    });
    Ok((
        y,
        SynthTruth {
            gamma,
            means,
            error_scale: cfg.attribute_noise,
        },
    ))
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn surface_attributes(cfg: &SynthConfig, u: &Matrix<f64>, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let q = cfg.latent_dim;
    let at = |i: usize, k: usize| u[(i, k % q)];
    let mut y = Matrix::zeros(cfg.n_plots, N_ATTRIBUTES);
    // composition preferences (mixing, fertility) per species
    let pref = [(-1.0, -0.8), (0.6, 0.9), (0.9, 0.2)];
    for i in 0..cfg.n_plots {
        let (fert, age, mix, dens) = (at(i, 0), at(i, 1), at(i, 2), at(i, 3));
        let logits: Vec<f64> = pref.iter().map(|(a, b)| a * mix + b * fert).collect();
        let zmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = logits.iter().map(|l| (l - zmax).exp()).collect();
        let total: f64 = ex.iter().sum();
        let ba_total = 4.0 + 22.0 * sigmoid(0.8 * age + 0.5 * dens + 0.2 * fert);
        for s in 0..3 {
            let share = ex[s] / total;
            let mut noise = || (cfg.attribute_noise * normal(rng)).exp();
            let hgm = (5.0 + 17.0 * sigmoid(0.9 * age + 0.4 * fert - 0.3 * s as f64)) * noise();
            let dgm = (hgm * (1.0 + 0.35 * sigmoid(-0.6 * dens + 0.3 * age))) * noise();
            let ba = ba_total * share * noise();
            let stems = ba / (std::f64::consts::FRAC_PI_4 * (dgm / 100.0).powi(2)) * 0.8 * noise();
            let vol = 0.45 * ba * hgm * noise();
            let base = s * 5;
            for (a, v) in [hgm, dgm, stems, ba, vol].into_iter().enumerate() {
                y[(i, base + a)] = v;
            }
        }
    }
    y
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    generate_synthetic_with_truth(cfg).map(|(ds, _)| ds)
}

/// Like [`generate_synthetic`], also returning the generating parameters
/// (only for [`SynthMode::GaussianProcess`]).
pub fn generate_synthetic_with_truth(cfg: &SynthConfig) -> Result<(Dataset, Option<SynthTruth>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = latent_states(cfg, &mut rng);
    let x = predictors(cfg, &u, &mut rng);
    let (mut y, truth) = match cfg.mode {
        SynthMode::GaussianProcess => {
            let (y, t) = gp_attributes(cfg, &x, &mut rng)?;
            (y, Some(t))
        }
        SynthMode::NonlinearSurface => (surface_attributes(cfg, &u, &mut rng), None),
    };
    for i in 0..cfg.n_plots {
        for s in 0..3 {
            let absent = rng.random::<f64>() < cfg.zero_inflation[s];
            for a in 0..5 {
                let v = &mut y[(i, s * 5 + a)];
                *v = if absent { 0.0 } else { v.max(0.0) };
            }
        }
    }
    let ids = (1..=cfg.n_plots).map(|i| format!("p{i:04}")).collect();
    let names = (0..cfg.n_predictors).map(predictor_name).collect();
    debug_assert_eq!(attribute_names().len(), y.cols());
    Ok((Dataset::new(ids, y, x, names)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn species_zero_fraction(ds: &Dataset, s: usize) -> f64 {
        let zeros = (0..ds.n())
            .filter(|&i| (0..5).all(|a| ds.y[(i, s * 5 + a)] == 0.0))
            .count();
        zeros as f64 / ds.n() as f64
    }

    #[test]
    fn default_dimensions() {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(ds.n(), 493);
        assert_eq!(ds.y.cols(), 15);
        assert_eq!(ds.x.cols(), 77);
    }

    #[test]
    fn deterministic_by_seed() {
        let cfg = SynthConfig {
            n_plots: 30,
            ..SynthConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let other = SynthConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn full_zero_inflation_zeroes_deciduous() {
        let cfg = SynthConfig {
            n_plots: 50,
            zero_inflation: [0.0, 0.0, 1.0],
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(species_zero_fraction(&ds, 2), 1.0);
    }

    #[test]
    fn zero_fraction_matches_probability() {
        for mode in [SynthMode::GaussianProcess, SynthMode::NonlinearSurface] {
            let cfg = SynthConfig {
                n_plots: 2000,
                n_predictors: 10,
                mode,
                ..SynthConfig::default()
            };
            let ds = generate_synthetic(&cfg).unwrap();
            for s in 0..3 {
                let f = species_zero_fraction(&ds, s);
                assert!(
                    (f - cfg.zero_inflation[s]).abs() <= 0.03,
                    "{mode:?} species {s}: {f}"
                );
            }
            let cov = ds.y.sample_covariance().unwrap();
            assert!(cov.diagonal().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_synthetic(&SynthConfig {
            n_plots: 1,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            zero_inflation: [1.5, 0.0, 0.0],
            ..SynthConfig::default()
        })
        .is_err());
    }
}
