use serde::{Deserialize, Serialize};

use crate::dataio::StandardizationStats;
use crate::error::{Error, Result};
use crate::gpr::TrainingSet;
use crate::linalg::{cholesky_with_jitter, Cholesky, JitterSchedule, Matrix, SymmetricEigen};

/// Ridge escalation used when the predictor or attribute correlation matrix
/// is rank deficient (relative to its mean diagonal, which is 1).
pub const MSN_RIDGE: JitterSchedule = JitterSchedule {
    start: 1e-10,
    factor: 10.0,
    max: 1e-2,
};

/// Canonical-correlation projection defining the most-similar-neighbour
/// distance `d²(u, v) = (u − v)ᵀ Γ Λ² Γᵀ (u − v)` on standardized predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsnProjection {
    /// Predictor columns (indices into the full predictor vector).
    pub subset: Vec<usize>,
    /// Statistics of the selected columns, fitted on the training plots.
    pub stats: StandardizationStats<f64>,
    /// Canonical coefficients Γ, one column per canonical variate.
    pub coefficients: Matrix<f64>,
    /// Squared canonical correlations Λ², in descending order.
    pub squared_correlations: Vec<f64>,
    /// Ridge added to the predictor and attribute correlation matrices.
    pub ridge: (f64, f64),
}

impl MsnProjection {
    pub fn n_components(&self) -> usize {
        self.squared_correlations.len()
    }

    /// Canonical correlations Λ.
    pub fn correlations(&self) -> Vec<f64> {
        self.squared_correlations.iter().map(|r| r.sqrt()).collect()
    }

    /// Maps a full predictor vector into the space where MSN distance is
    /// Euclidean: `z = Λ Γᵀ u`, `u` the standardized selected predictors.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(&bad) = self.subset.iter().find(|&&j| j >= x.len()) {
            return Err(Error::dims("MSN predictor vector", bad + 1, x.len()));
        }
        let raw: Vec<f64> = self.subset.iter().map(|&j| x[j]).collect();
        let u = self.stats.apply_row(&raw)?;
        let mut z = self.coefficients.tr_matvec(&u)?;
        for (zk, r2) in z.iter_mut().zip(&self.squared_correlations) {
            *zk *= r2.sqrt();
        }
        Ok(z)
    }

    pub fn project_rows(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .map(|i| self.project(x.row(i)))
            .collect::<Result<_>>()?;
        Matrix::from_rows(&rows)
    }

    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let (za, zb) = (self.project(a)?, self.project(b)?);
        Ok(za.iter().zip(&zb).map(|(p, q)| (p - q) * (p - q)).sum())
    }
}

fn correlation(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    // columns of a and b are already z-scored
    let n = a.rows();
    let denom = (n - 1) as f64;
    Matrix::from_fn(a.cols(), b.cols(), |i, j| {
        (0..n).map(|r| a[(r, i)] * b[(r, j)]).sum::<f64>() / denom
    })
}

// L⁻¹ B, column by column
fn forward_cols(l: &Cholesky<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
    let cols: Vec<Vec<f64>> = (0..b.cols())
        .map(|j| l.forward(&b.column(j)))
        .collect::<Result<_>>()?;
    Ok(Matrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i]))
}

/// Canonical correlation analysis between the standardized `subset`
/// predictors and the (standardized, non-constant) attributes.
pub fn msn_fit(ts: &TrainingSet<f64>, subset: &[usize]) -> Result<MsnProjection> {
    if subset.is_empty() {
        return Err(Error::input("MSN predictor subset is empty"));
    }
    if let Some(&bad) = subset.iter().find(|&&j| j >= ts.n_predictors()) {
        return Err(Error::input(format!(
            "predictor index {bad} out of range ({} predictors)",
            ts.n_predictors()
        )));
    }
    let n = ts.n_points();
    if n <= subset.len() {
        return Err(Error::input(format!(
            "MSN needs more plots ({n}) than selected predictors ({})",
            subset.len()
        )));
    }
    let xs = ts.x.select_cols(subset);
    let stats = StandardizationStats::fit(&xs);
    let u = stats.apply(&xs)?;
    let ystats = StandardizationStats::fit(&ts.y);
    let ykept = ystats.kept_columns();
    if ykept.is_empty() {
        return Err(Error::Training(
            "all attributes are constant; MSN is undefined".into(),
        ));
    }
    let v = ystats.apply(&ts.y)?.select_cols(&ykept);

    let sxx = correlation(&u, &u);
    let syy = correlation(&v, &v);
    let sxy = correlation(&u, &v);
    let cx = cholesky_with_jitter(&sxx, MSN_RIDGE)
        .map_err(|e| Error::Training(format!("predictor correlation matrix: {e}")))?;
    let cy = cholesky_with_jitter(&syy, MSN_RIDGE)
        .map_err(|e| Error::Training(format!("attribute correlation matrix: {e}")))?;

    // M = Lx⁻¹ Sxy Syy⁻¹ Syx Lx⁻ᵀ
    let p = subset.len();
    let a = Matrix::from_fn(sxy.cols(), p, |i, j| sxy[(j, i)]);
    let syy_inv_syx = cy.factor.solve_matrix(&a)?;
    let inner = sxy.matmul(&syy_inv_syx)?;
    let lx = &cx.factor;
    let half = forward_cols(lx, &inner)?;
    let mut m = forward_cols(lx, &half.transpose())?;
    m.symmetrize();
    let eig = SymmetricEigen::new(&m)?;

    let ncomp = p.min(ykept.len());
    let order: Vec<usize> = (0..p).rev().take(ncomp).collect();
    let squared_correlations = order
        .iter()
        .map(|&k| eig.values[k].clamp(0.0, 1.0))
        .collect();
    // Γ = Lx⁻ᵀ W
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| lx.backward(&eig.vectors.column(k)))
        .collect::<Result<_>>()?;
    let coefficients = Matrix::from_fn(p, ncomp, |i, k| cols[k][i]);
    Ok(MsnProjection {
        subset: subset.to_vec(),
        stats,
        coefficients,
        squared_correlations,
        ridge: (cx.level, cy.level),
    })
}

/// Neighbour aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    /// Inverse-distance weights; an exact match takes all the weight.
    InverseDistance,
}

/// Keeps the `k` smallest `(index, d²)` pairs seen so far, sorted by
/// distance then index. Candidates must arrive in ascending index order.
struct TopK {
    k: usize,
    items: Vec<(usize, f64)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, i: usize, d2: f64) {
        if self.items.len() == self.k && !(d2 < self.items[self.k - 1].1) {
            return;
        }
        let pos = self.items.partition_point(|&(_, d)| d <= d2);
        self.items.insert(pos, (i, d2));
        self.items.truncate(self.k);
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Indices of the `k` nearest rows of `z` to `target`, ties broken by
/// ascending index. `exclude` removes one row (leave-one-out).
pub fn nearest(
    z: &Matrix<f64>,
    target: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut top = TopK::new(k);
    if k > 0 {
        for i in (0..z.rows()).filter(|&i| Some(i) != exclude) {
            top.offer(i, sq_dist(z.row(i), target));
        }
    }
    top.items
}

fn aggregate(y: &Matrix<f64>, neighbours: &[(usize, f64)], how: Aggregation) -> Vec<f64> {
    let weights: Vec<f64> = match how {
        Aggregation::Mean => vec![1.0; neighbours.len()],
        Aggregation::InverseDistance => {
            if neighbours.iter().any(|&(_, d2)| d2 == 0.0) {
                neighbours
                    .iter()
                    .map(|&(_, d2)| if d2 == 0.0 { 1.0 } else { 0.0 })
                    .collect()
            } else {
                neighbours.iter().map(|&(_, d2)| 1.0 / d2.sqrt()).collect()
            }
        }
    };
    let total: f64 = weights.iter().sum();
    (0..y.cols())
        .map(|a| {
            neighbours
                .iter()
                .zip(&weights)
                .map(|(&(i, _), w)| w * y[(i, a)])
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Mean attribute vector of the `k` MSN-nearest training plots.
pub fn knn_predict(
    ts: &TrainingSet<f64>,
    proj: &MsnProjection,
    x_star: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    KnnModel::new(ts, proj.clone(), k, Aggregation::Mean)?.predict(x_star)
}

/// A fitted kNN imputer: projection plus the projected reference plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub projection: MsnProjection,
    pub k: usize,
    pub aggregation: Aggregation,
    pub attribute_names: Vec<String>,
    pub predictor_names: Vec<String>,
    reference: Matrix<f64>,
    targets: Matrix<f64>,
}

impl KnnModel {
    pub fn new(
        ts: &TrainingSet<f64>,
        projection: MsnProjection,
        k: usize,
        aggregation: Aggregation,
    ) -> Result<Self> {
        if k == 0 || k > ts.n_points() {
            return Err(Error::input(format!(
                "k = {k} must lie in 1..={}",
                ts.n_points()
            )));
        }
        let reference = projection.project_rows(&ts.x)?;
        Ok(KnnModel {
            projection,
            k,
            aggregation,
            attribute_names: ts.attribute_names.clone(),
            predictor_names: ts.predictor_names.clone(),
            reference,
            targets: ts.y.clone(),
        })
    }

    /// Fits the MSN projection on `subset` and builds the imputer.
    pub fn fit(
        ts: &TrainingSet<f64>,
        subset: &[usize],
        k: usize,
        aggregation: Aggregation,
    ) -> Result<Self> {
        let proj = msn_fit(ts, subset)?;
        Self::new(ts, proj, k, aggregation)
    }

    pub fn n_reference(&self) -> usize {
        self.reference.rows()
    }

    pub fn neighbours(&self, x_star: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x_star.len() != self.predictor_names.len() {
            return Err(Error::dims(
                "kNN predictor vector",
                self.predictor_names.len(),
                x_star.len(),
            ));
        }
        let z = self.projection.project(x_star)?;
        Ok(nearest(&self.reference, &z, self.k, None))
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<Vec<f64>> {
        let nb = self.neighbours(x_star)?;
        Ok(aggregate(&self.targets, &nb, self.aggregation))
    }

    /// Leave-one-out predictions for the reference plots themselves, keeping
    /// the projection fixed.
    pub fn loo_predictions(&self) -> Matrix<f64> {
        let n = self.reference.rows();
        let k = self.k.min(n - 1);
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = sq_dist(self.reference.row(i), self.reference.row(j));
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut out = Matrix::zeros(n, self.targets.cols());
        for i in 0..n {
            let mut top = TopK::new(k);
            for (j, &d) in dist[i * n..(i + 1) * n].iter().enumerate() {
                if j != i {
                    top.offer(j, d);
                }
            }
            out.row_mut(i)
                .copy_from_slice(&aggregate(&self.targets, &top.items, self.aggregation));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ts(n: usize, nx: usize, ny: usize, seed: u64) -> TrainingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, nx, |_, _| rng.random_range(0.0..10.0));
        let y = Matrix::from_fn(n, ny, |i, a| {
            x[(i, a % nx)] * 2.0 + rng.random_range(0.0..3.0)
        });
        TrainingSet::from_matrices(x, y).unwrap()
    }

    #[test]
    fn identical_attributes_give_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(30, 2, |_, _| rng.random_range(0.0..5.0));
        let ts = TrainingSet::from_matrices(x.clone(), x).unwrap();
        let p = msn_fit(&ts, &[0, 1]).unwrap();
        assert!((p.squared_correlations[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn distance_is_pseudo_metric() {
        let ts = random_ts(40, 4, 3, 1);
        let p = msn_fit(&ts, &[0, 1, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..10.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..10.0)).collect();
            let dab = p.distance_sq(&a, &b).unwrap();
            assert!(dab >= 0.0);
            assert_eq!(p.distance_sq(&a, &a).unwrap(), 0.0);
            assert!((dab - p.distance_sq(&b, &a).unwrap()).abs() < 1e-12);
        }
        assert!(p
            .squared_correlations
            .iter()
            .all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn duplicate_query_with_k1_returns_plot() {
        let ts = random_ts(25, 3, 2, 4);
        let m = KnnModel::fit(&ts, &[0, 1, 2], 1, Aggregation::Mean).unwrap();
        for i in [0, 7, 24] {
            assert_eq!(m.predict(ts.x.row(i)).unwrap(), ts.y.row(i).to_vec());
        }
    }

    #[test]
    fn five_identical_rows() {
        let mut ts = random_ts(20, 2, 2, 5);
        for i in 0..5 {
            ts.x.row_mut(i).copy_from_slice(&[5.0, 5.0]);
            ts.y.row_mut(i).copy_from_slice(&[1.5, 2.5]);
        }
        let p = msn_fit(&ts, &[0, 1]).unwrap();
        let out = knn_predict(&ts, &p, &[5.0, 5.0], 5).unwrap();
        assert_eq!(out, vec![1.5, 2.5]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let z = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![3.0]]).unwrap();
        let nb = nearest(&z, &[0.0], 2, None);
        assert_eq!(nb.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1]);
        let nb = nearest(&z, &[0.0], 2, Some(0));
        assert_eq!(nb.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn k_larger_than_training_set_fails() {
        let ts = random_ts(6, 2, 2, 6);
        let p = msn_fit(&ts, &[0]).unwrap();
        assert!(knn_predict(&ts, &p, &[1.0, 1.0], 7).is_err());
    }

    #[test]
    fn inverse_distance_exact_match() {
        let ts = random_ts(15, 2, 2, 8);
        let m = KnnModel::fit(&ts, &[0, 1], 4, Aggregation::InverseDistance).unwrap();
        assert_eq!(m.predict(ts.x.row(3)).unwrap(), ts.y.row(3).to_vec());
    }
}
