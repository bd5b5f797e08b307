//! Multi-output Gaussian process regression with a separable kernel.
//!
//! The training covariance `K + E = Γ_y ⊗ K_x + c · D ⊗ I` is never formed
//! densely. With `Γ̃ = D^{-1/2} Γ_y D^{-1/2} = U Λ Uᵀ` and `K_x = V S Vᵀ`,
//!
//! ```text
//! (K + E)^{-1} = (P ⊗ V) · diag(1 / (λ_a s_j + c)) · (P ⊗ V)ᵀ,   P = D^{-1/2} U
//! ```
//!
//! so training costs one `n_t × n_t` and one `n_y × n_y` symmetric
//! eigendecomposition, and a prediction costs `O(n_t² + n_y² n_t)`.

use serde::{Deserialize, Serialize};

use crate::dataio::StandardizationStats;
use crate::error::{Error, Result};
use crate::kernel::{cross_kernel, gram, KernelParams};
use crate::linalg::{cholesky_with_jitter, Cholesky, JitterSchedule, Matrix, SymmetricEigen};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GprConfig<T> {
    pub kernel: KernelParams<T>,
    /// `c` in `E = c · D ⊗ I` and `E_* = c · D`.
    pub error_scale: T,
    /// Subtract the training attribute means before solving and add them
    /// back to the predictive mean. Off gives the zero-mean prior verbatim.
    pub centering: bool,
    /// Z-score predictors with training statistics before computing
    /// distances.
    pub standardize_inputs: bool,
    pub jitter: JitterSchedule,
    /// Fixed output covariance used instead of the sample covariance of the
    /// training attributes.
    pub prior_covariance: Option<Matrix<T>>,
}

impl<T: Scalar> Default for GprConfig<T> {
    fn default() -> Self {
        GprConfig {
            kernel: KernelParams::default(),
            error_scale: T::lit(0.1),
            centering: true,
            standardize_inputs: true,
            jitter: JitterSchedule::default(),
            prior_covariance: None,
        }
    }
}

impl<T: Scalar> GprConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.error_scale > T::zero()) || !self.error_scale.is_finite() {
            return Err(Error::input(format!(
                "error scale must be positive, got {}",
                self.error_scale
            )));
        }
        Ok(())
    }
}

/// Paired predictor/attribute matrices, one row per plot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
    pub attribute_names: Vec<String>,
    pub predictor_names: Vec<String>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(
        x: Matrix<T>,
        y: Matrix<T>,
        attribute_names: Vec<String>,
        predictor_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dims("training rows", x.rows(), y.rows()));
        }
        if x.rows() < 2 {
            return Err(Error::input(format!(
                "need at least 2 training plots, got {}",
                x.rows()
            )));
        }
        if attribute_names.len() != y.cols() {
            return Err(Error::dims(
                "attribute names",
                y.cols(),
                attribute_names.len(),
            ));
        }
        if predictor_names.len() != x.cols() {
            return Err(Error::dims(
                "predictor names",
                x.cols(),
                predictor_names.len(),
            ));
        }
        if y.cols() == 0 {
            return Err(Error::input("training set has no attributes"));
        }
        if !x.all_finite() || !y.all_finite() {
            return Err(Error::input("training set contains non-finite values"));
        }
        if y.as_slice().iter().any(|&v| v < T::zero()) {
            return Err(Error::input("training attributes must be non-negative"));
        }
        Ok(TrainingSet {
            x,
            y,
            attribute_names,
            predictor_names,
        })
    }

    /// Builds a training set with generated column names (`y01…`, `x001…`).
    pub fn from_matrices(x: Matrix<T>, y: Matrix<T>) -> Result<Self> {
        let attrs = (1..=y.cols()).map(|i| format!("y{i:02}")).collect();
        let preds = (1..=x.cols()).map(|i| format!("x{i:03}")).collect();
        Self::new(x, y, attrs, preds)
    }

    pub fn n_points(&self) -> usize {
        self.x.rows()
    }

    pub fn n_attributes(&self) -> usize {
        self.y.cols()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.cols()
    }

    /// Rows `idx` as a new training set.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.x.select_rows(idx),
            self.y.select_rows(idx),
            self.attribute_names.clone(),
            self.predictor_names.clone(),
        )
    }

    /// Predictor columns `cols` only.
    pub fn with_predictors(&self, cols: &[usize]) -> Result<Self> {
        Self::new(
            self.x.select_cols(cols),
            self.y.clone(),
            self.attribute_names.clone(),
            cols.iter()
                .map(|&j| self.predictor_names[j].clone())
                .collect(),
        )
    }
}

/// Gaussian predictive distribution over the attributes of one plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictiveDistribution<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

impl<T: Scalar> PredictiveDistribution<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> Vec<T> {
        self.covariance
            .diagonal()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }
}

/// Eigen-factor of the scaled output covariance: `P = D^{-1/2} U` and `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct OutputFactor<T> {
    transform: Matrix<T>,
    values: Vec<T>,
}

impl<T: Scalar> OutputFactor<T> {
    fn new(gamma: &Matrix<T>) -> Result<Self> {
        let n = gamma.rows();
        let inv_sqrt: Vec<T> = gamma
            .diagonal()
            .into_iter()
            .map(|d| T::one() / d.sqrt())
            .collect();
        let mut scaled = Matrix::from_fn(n, n, |a, b| gamma[(a, b)] * inv_sqrt[a] * inv_sqrt[b]);
        scaled.symmetrize();
        let eig = SymmetricEigen::new(&scaled)?;
        let transform = Matrix::from_fn(n, n, |a, k| inv_sqrt[a] * eig.vectors[(a, k)]);
        let values = eig.values.into_iter().map(|v| v.max(T::zero())).collect();
        Ok(OutputFactor { transform, values })
    }
}

/// Factored inverse of `Γ ⊗ K_x + c · D ⊗ I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KroneckerSystem<T> {
    output: OutputFactor<T>,
    input: SymmetricEigen<T>,
    error_scale: T,
}

impl<T: Scalar> KroneckerSystem<T> {
    /// `gamma` must have a strictly positive diagonal.
    pub fn new(gamma: &Matrix<T>, k: &Matrix<T>, error_scale: T) -> Result<Self> {
        let input = SymmetricEigen::new(k)?;
        Self::with_input_eigen(gamma, input, error_scale)
    }

    fn with_input_eigen(
        gamma: &Matrix<T>,
        input: SymmetricEigen<T>,
        error_scale: T,
    ) -> Result<Self> {
        if gamma.diagonal().iter().any(|&d| !(d > T::zero())) {
            return Err(Error::Training(
                "output covariance has a non-positive diagonal entry".into(),
            ));
        }
        let output = OutputFactor::new(gamma)?;
        let sys = KroneckerSystem {
            output,
            input,
            error_scale,
        };
        sys.check_definite()?;
        Ok(sys)
    }

    fn check_definite(&self) -> Result<()> {
        for &l in &self.output.values {
            for &s in &self.input.values {
                let den = l * s + self.error_scale;
                if !(den > T::zero()) || !den.is_finite() {
                    return Err(Error::Training("K + E is not positive definite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.output.values.len()
    }

    pub fn n_points(&self) -> usize {
        self.input.values.len()
    }

    pub fn dim(&self) -> usize {
        self.n_outputs() * self.n_points()
    }

    /// `(K + E)^{-1} v` for an attribute-major vector `v`.
    pub fn solve(&self, v: &[T]) -> Result<Vec<T>> {
        solve_parts(&self.output, &self.input, self.error_scale, v)
    }
}

fn solve_parts<T: Scalar>(
    out: &OutputFactor<T>,
    inp: &SymmetricEigen<T>,
    c: T,
    v: &[T],
) -> Result<Vec<T>> {
    let ny = out.values.len();
    let n = inp.values.len();
    if v.len() != ny * n {
        return Err(Error::dims("kronecker solve operand", ny * n, v.len()));
    }
    let p = &out.transform;
    let vmat = &inp.vectors;
    // T1 = Pᵀ M
    let mut t1 = vec![T::zero(); ny * n];
    for a in 0..ny {
        let src = &v[a * n..(a + 1) * n];
        for k in 0..ny {
            let pak = p[(a, k)];
            let dst = &mut t1[k * n..(k + 1) * n];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + pak * s;
            }
        }
    }
    // T2 = T1 V, scaled by the inverse eigenvalues
    let mut t2 = vec![T::zero(); ny * n];
    for k in 0..ny {
        let src = &t1[k * n..(k + 1) * n];
        let dst = &mut t2[k * n..(k + 1) * n];
        for (i, &s) in src.iter().enumerate() {
            if s == T::zero() {
                continue;
            }
            for (d, &vij) in dst.iter_mut().zip(vmat.row(i)) {
                *d = *d + s * vij;
            }
        }
        let lk = out.values[k];
        for (d, &sj) in dst.iter_mut().zip(&inp.values) {
            *d = *d / (lk * sj + c);
        }
    }
    // T3 = T2 Vᵀ
    let mut t3 = vec![T::zero(); ny * n];
    for k in 0..ny {
        let src = &t2[k * n..(k + 1) * n];
        for i in 0..n {
            t3[k * n + i] = crate::linalg::dot(src, vmat.row(i));
        }
    }
    // P T3
    let mut res = vec![T::zero(); ny * n];
    for a in 0..ny {
        let dst = &mut res[a * n..(a + 1) * n];
        for k in 0..ny {
            let pak = p[(a, k)];
            for (d, &s) in dst.iter_mut().zip(&t3[k * n..(k + 1) * n]) {
                *d = *d + pak * s;
            }
        }
    }
    Ok(res)
}

/// Output covariance after estimation (or override) and jitter.
#[derive(Debug, Clone)]
struct OutputCovariance<T> {
    gamma: Matrix<T>,
    added: T,
    level: f64,
}

fn output_covariance<T: Scalar>(
    y: &Matrix<T>,
    config: &GprConfig<T>,
) -> Result<OutputCovariance<T>> {
    let raw = match &config.prior_covariance {
        Some(g) => {
            if g.shape() != (y.cols(), y.cols()) {
                return Err(Error::dims("prior covariance", y.cols(), g.rows()));
            }
            if !g.is_symmetric(T::lit(1e-10)) {
                return Err(Error::input("prior covariance is not symmetric"));
            }
            g.clone()
        }
        None => y.sample_covariance()?,
    };
    let j = cholesky_with_jitter(&raw, config.jitter).map_err(|e| {
        Error::Training(format!(
            "output covariance not positive definite after jitter escalation: {e}"
        ))
    })?;
    let mut gamma = j.matrix;
    gamma.symmetrize();
    Ok(OutputCovariance {
        gamma,
        added: j.added,
        level: j.level,
    })
}

fn centered_attribute_major<T: Scalar>(y: &Matrix<T>, means: &[T]) -> Vec<T> {
    let (n, ny) = y.shape();
    let mut out = vec![T::zero(); n * ny];
    for i in 0..n {
        for (a, (&v, &m)) in y.row(i).iter().zip(means).enumerate() {
            out[a * n + i] = v - m;
        }
    }
    out
}

/// Prepared (standardized, column-filtered) predictor matrix.
struct PreparedInputs<T> {
    x: Matrix<T>,
    stats: Option<StandardizationStats<T>>,
    kept: Vec<usize>,
    warnings: Vec<String>,
}

fn prepare_inputs<T: Scalar>(
    ts: &TrainingSet<T>,
    config: &GprConfig<T>,
) -> Result<PreparedInputs<T>> {
    if !config.standardize_inputs {
        return Ok(PreparedInputs {
            x: ts.x.clone(),
            stats: None,
            kept: (0..ts.n_predictors()).collect(),
            warnings: Vec::new(),
        });
    }
    let stats = StandardizationStats::fit(&ts.x);
    let kept = stats.kept_columns();
    let warnings = (0..ts.n_predictors())
        .filter(|&j| stats.zero_variance[j])
        .map(|j| {
            format!(
                "predictor `{}` has zero variance and was dropped",
                ts.predictor_names[j]
            )
        })
        .collect();
    let x = stats.apply(&ts.x)?.select_cols(&kept);
    Ok(PreparedInputs {
        x,
        stats: Some(stats),
        kept,
        warnings,
    })
}

/// Immutable trained state; prediction only reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedGprModel<T> {
    format_version: u32,
    config: GprConfig<T>,
    attribute_names: Vec<String>,
    predictor_names: Vec<String>,
    input_stats: Option<StandardizationStats<T>>,
    kept_predictors: Vec<usize>,
    attribute_means: Vec<T>,
    gamma_y: Matrix<T>,
    gamma_jitter: T,
    jitter_level: f64,
    noise_diag: Vec<T>,
    x_train: Matrix<T>,
    centered_targets: Vec<T>,
    system: KroneckerSystem<T>,
    weights: Vec<T>,
    cross_factor: Matrix<T>,
    warnings: Vec<String>,
}

impl<T: Scalar> TrainedGprModel<T> {
    pub fn train(ts: &TrainingSet<T>, config: &GprConfig<T>) -> Result<Self> {
        train(ts, config)
    }

    pub fn config(&self) -> &GprConfig<T> {
        &self.config
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn n_train(&self) -> usize {
        self.x_train.rows()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    /// Dimension of the training system, `n_y · n_t`.
    pub fn system_dim(&self) -> usize {
        self.system.dim()
    }

    pub fn attribute_means(&self) -> &[T] {
        &self.attribute_means
    }

    /// Output covariance Γ_y after jitter.
    pub fn gamma_y(&self) -> &Matrix<T> {
        &self.gamma_y
    }

    /// Absolute diagonal loading added to Γ_y, and the relative level.
    pub fn jitter(&self) -> (T, f64) {
        (self.gamma_jitter, self.jitter_level)
    }

    /// Diagonal `D` of the error model.
    pub fn noise_diag(&self) -> &[T] {
        &self.noise_diag
    }

    pub fn centered_targets(&self) -> &[T] {
        &self.centered_targets
    }

    pub fn kept_predictors(&self) -> &[usize] {
        &self.kept_predictors
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(K + E)^{-1} v`.
    pub fn solve_system(&self, v: &[T]) -> Result<Vec<T>> {
        self.system.solve(v)
    }

    /// `(K + E) v`, computed from Γ_y, the training Gram matrix and D.
    pub fn apply_system(&self, v: &[T]) -> Result<Vec<T>> {
        let n = self.n_train();
        let ny = self.n_attributes();
        if v.len() != n * ny {
            return Err(Error::dims("system operand", n * ny, v.len()));
        }
        let k = gram(&self.x_train, &self.x_train, &self.config.kernel)?.entries;
        let kv: Vec<Vec<T>> = (0..ny)
            .map(|b| k.matvec(&v[b * n..(b + 1) * n]))
            .collect::<Result<_>>()?;
        let mut out = vec![T::zero(); n * ny];
        for a in 0..ny {
            for b in 0..ny {
                let g = self.gamma_y[(a, b)];
                for i in 0..n {
                    out[a * n + i] = out[a * n + i] + g * kv[b][i];
                }
            }
            let e = self.config.error_scale * self.noise_diag[a];
            for i in 0..n {
                out[a * n + i] = out[a * n + i] + e * v[a * n + i];
            }
        }
        Ok(out)
    }

    /// Maps a raw predictor vector into the model's kernel input space.
    pub fn transform_input(&self, x_star: &[T]) -> Result<Vec<T>> {
        if x_star.len() != self.predictor_names.len() {
            return Err(Error::dims(
                "prediction input",
                self.predictor_names.len(),
                x_star.len(),
            ));
        }
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("prediction input contains non-finite values"));
        }
        let z = match &self.input_stats {
            Some(stats) => stats.apply_row(x_star)?,
            None => x_star.to_vec(),
        };
        Ok(self.kept_predictors.iter().map(|&j| z[j]).collect())
    }

    pub fn predict(&self, x_star: &[T]) -> Result<PredictiveDistribution<T>> {
        let z = self.transform_input(x_star)?;
        let kstar = cross_kernel(&z, &self.x_train, &self.config.kernel)?;
        Ok(self.predict_from_cross_kernel(&kstar))
    }

    fn predict_from_cross_kernel(&self, kstar: &[T]) -> PredictiveDistribution<T> {
        let n = self.n_train();
        let ny = self.n_attributes();
        let c = self.config.error_scale;

        // μ = m + (Γ ⊗ k*ᵀ) α
        let proj: Vec<T> = (0..ny)
            .map(|b| crate::linalg::dot(kstar, &self.weights[b * n..(b + 1) * n]))
            .collect();
        let mean = (0..ny)
            .map(|a| self.attribute_means[a] + crate::linalg::dot(self.gamma_y.row(a), &proj))
            .collect();

        // w = Vᵀ k*, h_k = Σ_j w_j² / (λ_k s_j + c)
        let input = &self.system.input;
        let mut w = vec![T::zero(); n];
        for (i, &ki) in kstar.iter().enumerate() {
            if ki == T::zero() {
                continue;
            }
            for (wj, &vij) in w.iter_mut().zip(input.vectors.row(i)) {
                *wj = *wj + ki * vij;
            }
        }
        let h: Vec<T> = self
            .system
            .output
            .values
            .iter()
            .map(|&l| {
                w.iter()
                    .zip(&input.values)
                    .fold(T::zero(), |acc, (&wj, &sj)| acc + wj * wj / (l * sj + c))
            })
            .collect();

        let prior_var = self.config.kernel.variance();
        let g = &self.cross_factor;
        let mut cov = Matrix::zeros(ny, ny);
        for a in 0..ny {
            for b in 0..=a {
                let explained =
                    (0..ny).fold(T::zero(), |acc, k| acc + g[(a, k)] * g[(b, k)] * h[k]);
                let mut v = self.gamma_y[(a, b)] * prior_var - explained;
                if a == b {
                    v = v + c * self.noise_diag[a];
                }
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        PredictiveDistribution {
            mean,
            covariance: cov,
        }
    }

    /// Predicts every row of `xs`; errors carry the offending plot id
    /// (or row index when `plot_ids` is absent).
    pub fn predict_batch(
        &self,
        xs: &Matrix<T>,
        plot_ids: Option<&[String]>,
    ) -> Result<Vec<PredictiveDistribution<T>>> {
        if let Some(ids) = plot_ids {
            if ids.len() != xs.rows() {
                return Err(Error::dims("plot ids", xs.rows(), ids.len()));
            }
        }
        (0..xs.rows())
            .map(|i| {
                self.predict(xs.row(i)).map_err(|e| Error::Prediction {
                    plot: plot_ids.map_or_else(|| format!("#{i}"), |ids| ids[i].clone()),
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

pub fn train<T: Scalar>(ts: &TrainingSet<T>, config: &GprConfig<T>) -> Result<TrainedGprModel<T>> {
    config.validate()?;
    if ts.n_points() < 2 {
        return Err(Error::input("need at least 2 training plots"));
    }
    let prepared = prepare_inputs(ts, config)?;
    let ny = ts.n_attributes();

    let attribute_means = if config.centering {
        ts.y.column_means()
    } else {
        vec![T::zero(); ny]
    };
    let centered_targets = centered_attribute_major(&ts.y, &attribute_means);

    let out_cov = output_covariance(&ts.y, config)?;
    let gamma_y = out_cov.gamma;
    let noise_diag = gamma_y.diagonal();

    let k = gram(&prepared.x, &prepared.x, &config.kernel)?.entries;
    let system = KroneckerSystem::new(&gamma_y, &k, config.error_scale)?;
    let weights = system.solve(&centered_targets)?;
    let cross_factor = gamma_y.matmul(&system.output.transform)?;

    let mut warnings = prepared.warnings;
    if out_cov.level > 0.0 {
        warnings.push(format!(
            "output covariance jittered at relative level {:e}",
            out_cov.level
        ));
    }

    Ok(TrainedGprModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        attribute_names: ts.attribute_names.clone(),
        predictor_names: ts.predictor_names.clone(),
        input_stats: prepared.stats,
        kept_predictors: prepared.kept,
        attribute_means,
        gamma_y,
        gamma_jitter: out_cov.added,
        jitter_level: out_cov.level,
        noise_diag,
        x_train: prepared.x,
        centered_targets,
        system,
        weights,
        cross_factor,
        warnings,
    })
}

/// Leave-one-out predictive distributions without refitting the input
/// kernel per fold.
///
/// Every fold re-estimates the attribute means, Γ_y and D from the
/// remaining plots. Predictors are standardized once with statistics of
/// the full set (attribute values never enter them), so the Gram matrix
/// over all plots is shared and factored once. The held-out plot's
/// predictive distribution is the conditional of its block in the joint
/// Gaussian over all plots:
///
/// ```text
/// Γ_{y*} = (Σ^{-1})_{ii}^{-1},   μ_{y*} = m + z_i − Γ_{y*} (Σ^{-1} z)_i
/// ```
///
/// which equals the predictive mean and covariance of a model trained on
/// the other plots.
pub fn loo_downdate<T: Scalar>(
    ts: &TrainingSet<T>,
    config: &GprConfig<T>,
) -> Result<Vec<Result<PredictiveDistribution<T>>>> {
    config.validate()?;
    let n = ts.n_points();
    if n < 3 {
        return Err(Error::input("leave-one-out needs at least 3 plots"));
    }
    let prepared = prepare_inputs(ts, config)?;
    let k = gram(&prepared.x, &prepared.x, &config.kernel)?.entries;
    let input = SymmetricEigen::new(&k)?;
    let ny = ts.n_attributes();
    let c = config.error_scale;

    let fold = |i: usize| -> Result<PredictiveDistribution<T>> {
        let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let y_rest = ts.y.select_rows(&rest);
        let means = if config.centering {
            y_rest.column_means()
        } else {
            vec![T::zero(); ny]
        };
        let out_cov = output_covariance(&y_rest, config)?;
        let output = OutputFactor::new(&out_cov.gamma)?;
        let z = centered_attribute_major(&ts.y, &means);
        let r = solve_parts(&output, &input, c, &z)?;

        let q: Vec<T> = output
            .values
            .iter()
            .map(|&l| {
                input
                    .values
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (j, &sj)| {
                        let vij = input.vectors[(i, j)];
                        acc + vij * vij / (l * sj + c)
                    })
            })
            .collect();
        let p = &output.transform;
        let block = Matrix::from_fn(ny, ny, |a, b| {
            (0..ny).fold(T::zero(), |acc, k| acc + p[(a, k)] * p[(b, k)] * q[k])
        });
        let chol = Cholesky::factor(&block)
            .map_err(|e| Error::Numerical(format!("leave-one-out precision block: {e}")))?;
        let mut cov = chol.inverse()?;
        cov.symmetrize();
        let ri: Vec<T> = (0..ny).map(|a| r[a * n + i]).collect();
        let shift = cov.matvec(&ri)?;
        let mean = (0..ny)
            .map(|a| means[a] + z[a * n + i] - shift[a])
            .collect();
        Ok(PredictiveDistribution {
            mean,
            covariance: cov,
        })
    };
    Ok((0..n).map(fold).collect())
}
