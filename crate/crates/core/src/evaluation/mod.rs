//! Accuracy and calibration metrics, total-attribute aggregation, and the
//! leave-one-out and training-size experiments.
//!
//! Relative metrics follow the usual forest-inventory definitions, with
//! bias signed as predicted − observed:
//!
//! ```text
//! RMSE% = 100 · sqrt(mean((ŷ − y)²)) / mean(y)
//! bias% = 100 · mean(ŷ − y) / mean(y)
//! CI%   = 100 · #{y ∈ [lower, upper]} / n
//! ```

mod experiments;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use experiments::{
    baseline_selection, loocv, seed_for_plot, size_experiment, EvalConfig, Failure, KnnConfig,
    LooStrategy, LoocvResult, SizeExperiment, SizeRow,
};
pub use report::{
    write_metrics, write_records, write_size_metrics, write_size_summary, BIAS_CONVENTION,
};

use crate::baselines::BayesPrediction;
use crate::dataio::{attribute_names, ATTRIBUTES_PER_SPECIES, N_ATTRIBUTES, SPECIES};
use crate::error::{Error, Result};
use crate::gpr::PredictiveDistribution;
use crate::truncation::{correct_interval, correct_prediction, Interval};

/// Summed attributes (stems, basal area, volume), by within-species index.
pub const TOTAL_ATTRIBUTES: [(&str, usize); 3] = [("n", 2), ("ba", 3), ("v", 4)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gpr,
    Knn,
    Bayes,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gpr, Method::Knn, Method::Bayes];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Gpr => "gpr",
            Method::Knn => "knn",
            Method::Bayes => "bayes",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpr" => Ok(Method::Gpr),
            "knn" => Ok(Method::Knn),
            "bayes" => Ok(Method::Bayes),
            other => Err(Error::input(format!(
                "unknown method '{other}' (expected gpr, knn or bayes)"
            ))),
        }
    }
}

/// Column names of a prediction record: the 15 attributes, then the
/// species totals `total_n`, `total_ba`, `total_v`.
pub fn record_columns() -> Vec<String> {
    let mut c = attribute_names();
    c.extend(TOTAL_ATTRIBUTES.iter().map(|(a, _)| format!("total_{a}")));
    c
}

/// Species sums of N, BA and V from a 15-attribute vector.
pub fn species_totals(values: &[f64]) -> [f64; 3] {
    TOTAL_ATTRIBUTES.map(|(_, a)| {
        (0..SPECIES.len())
            .map(|s| values[s * ATTRIBUTES_PER_SPECIES.len() + a])
            .sum()
    })
}

fn summation_vector(a: usize) -> Vec<f64> {
    let mut s = vec![0.0; N_ATTRIBUTES];
    for sp in 0..SPECIES.len() {
        s[sp * ATTRIBUTES_PER_SPECIES.len() + a] = 1.0;
    }
    s
}

/// Predictive distribution of a summed attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalEstimate {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub interval: Interval<f64>,
}

/// Mean `sᵀμ` and variance `sᵀ Γ s` of a linear combination.
pub fn linear_combination(dist: &PredictiveDistribution<f64>, s: &[f64]) -> Result<(f64, f64)> {
    if s.len() != dist.dim() {
        return Err(Error::dims("summation vector", dist.dim(), s.len()));
    }
    let mean = s.iter().zip(&dist.mean).map(|(a, b)| a * b).sum();
    let gs = dist.covariance.matvec(s)?;
    let var = s.iter().zip(&gs).map(|(a, b)| a * b).sum::<f64>();
    Ok((mean, var.max(0.0)))
}

/// Totals over species of N, BA and V, with zero-corrected 95% intervals
/// of the summed Gaussian.
pub fn aggregate_totals(dist: &PredictiveDistribution<f64>) -> Result<Vec<TotalEstimate>> {
    if dist.dim() != N_ATTRIBUTES {
        return Err(Error::dims(
            "predictive distribution",
            N_ATTRIBUTES,
            dist.dim(),
        ));
    }
    TOTAL_ATTRIBUTES
        .iter()
        .map(|&(name, a)| {
            let (mean, variance) = linear_combination(dist, &summation_vector(a))?;
            let sd = variance.sqrt();
            let interval = if sd > 0.0 {
                correct_interval(mean, sd, 0.95)?
            } else {
                let v = mean.max(0.0);
                Interval { lower: v, upper: v }
            };
            Ok(TotalEstimate {
                name: format!("total_{name}"),
                mean,
                variance,
                sd,
                interval,
            })
        })
        .collect()
}

fn with_totals(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.extend(species_totals(values));
    v
}

/// A method's estimate for one plot over [`record_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: Vec<f64>,
    pub intervals: Option<Vec<Interval<f64>>>,
}

impl Estimate {
    /// Zero-corrected GPR estimate. Total points are sums of the corrected
    /// species points; total intervals come from [`aggregate_totals`].
    pub fn from_gpr(dist: &PredictiveDistribution<f64>) -> Result<Self> {
        let corrected = correct_prediction(dist)?;
        let totals = aggregate_totals(dist)?;
        let mut intervals = corrected.intervals;
        intervals.extend(totals.iter().map(|t| t.interval));
        Ok(Estimate {
            point: with_totals(&corrected.point),
            intervals: Some(intervals),
        })
    }

    /// Point-only estimate (kNN).
    pub fn from_point(point: &[f64]) -> Result<Self> {
        if point.len() != N_ATTRIBUTES {
            return Err(Error::dims("point estimate", N_ATTRIBUTES, point.len()));
        }
        Ok(Estimate {
            point: with_totals(point),
            intervals: None,
        })
    }

    /// Posterior sample means and quantiles; totals are summarized from the
    /// summed samples.
    pub fn from_bayes(pred: &BayesPrediction) -> Result<Self> {
        if pred.point.len() != N_ATTRIBUTES {
            return Err(Error::dims(
                "posterior sample",
                N_ATTRIBUTES,
                pred.point.len(),
            ));
        }
        let mut point = with_totals(&pred.point);
        let mut intervals = pred.intervals.clone();
        for (k, &(_, a)) in TOTAL_ATTRIBUTES.iter().enumerate() {
            let (mean, iv) = pred.chain.linear_summary(&summation_vector(a));
            point[N_ATTRIBUTES + k] = mean;
            intervals.push(iv);
        }
        Ok(Estimate {
            point,
            intervals: Some(intervals),
        })
    }
}

/// One method's prediction for one plot, over [`record_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub plot_id: String,
    pub method: Method,
    pub point: Vec<f64>,
    /// Absent for methods without predictive intervals.
    pub intervals: Option<Vec<Interval<f64>>>,
    pub observed: Vec<f64>,
}

impl PredictionRecord {
    pub fn new(
        plot_id: &str,
        method: Method,
        estimate: Estimate,
        observed: &[f64],
    ) -> Result<Self> {
        if observed.len() != N_ATTRIBUTES {
            return Err(Error::dims(
                "observed attributes",
                N_ATTRIBUTES,
                observed.len(),
            ));
        }
        Ok(PredictionRecord {
            plot_id: plot_id.to_string(),
            method,
            point: estimate.point,
            intervals: estimate.intervals,
            observed: with_totals(observed),
        })
    }

    pub fn from_gpr(
        plot_id: &str,
        dist: &PredictiveDistribution<f64>,
        observed: &[f64],
    ) -> Result<Self> {
        Self::new(plot_id, Method::Gpr, Estimate::from_gpr(dist)?, observed)
    }

    pub fn from_point(
        plot_id: &str,
        method: Method,
        point: &[f64],
        observed: &[f64],
    ) -> Result<Self> {
        Self::new(plot_id, method, Estimate::from_point(point)?, observed)
    }

    pub fn from_bayes(plot_id: &str, pred: &BayesPrediction, observed: &[f64]) -> Result<Self> {
        Self::new(
            plot_id,
            Method::Bayes,
            Estimate::from_bayes(pred)?,
            observed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    /// Species, `total`, or `all` for the across-attribute summary.
    pub group: String,
    /// Attribute, or `mean` for species/overall summary rows.
    pub attribute: String,
    pub rmse_pct: Option<f64>,
    pub bias_pct: Option<f64>,
    pub ci_pct: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    /// Evaluated predictions per method.
    pub n_evaluations: BTreeMap<Method, usize>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsTable {
    pub fn row(&self, method: Method, group: &str, attribute: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.group == group && r.attribute == attribute)
    }

    /// Rows of the 15 species attributes for `method`.
    pub fn attribute_rows(&self, method: Method) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| {
            r.method == method && SPECIES.contains(&r.group.as_str()) && r.attribute != "mean"
        })
    }

    /// Lowest, average and highest RMSE% over the species attributes.
    pub fn rmse_summary(&self, method: Method) -> Option<(f64, f64, f64)> {
        let v: Vec<f64> = self
            .attribute_rows(method)
            .filter_map(|r| r.rmse_pct)
            .collect();
        if v.is_empty() {
            return None;
        }
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((min, v.iter().sum::<f64>() / v.len() as f64, max))
    }
}

fn column_metrics(
    records: &[&PredictionRecord],
    j: usize,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    let n = records.len() as f64;
    let obs_mean = records.iter().map(|r| r.observed[j]).sum::<f64>() / n;
    let (rmse, bias) = if obs_mean != 0.0 && obs_mean.is_finite() {
        let mse = records
            .iter()
            .map(|r| (r.point[j] - r.observed[j]).powi(2))
            .sum::<f64>()
            / n;
        let mean_err = records
            .iter()
            .map(|r| r.point[j] - r.observed[j])
            .sum::<f64>()
            / n;
        (
            Some(100.0 * mse.sqrt() / obs_mean),
            Some(100.0 * mean_err / obs_mean),
        )
    } else {
        (None, None)
    };
    let ci = records
        .iter()
        .map(|r| r.intervals.as_ref().map(|iv| iv[j].contains(r.observed[j])))
        .collect::<Option<Vec<bool>>>()
        .map(|hits| 100.0 * hits.iter().filter(|&&h| h).count() as f64 / n);
    (rmse, bias, ci)
}

/// RMSE%, bias% and CI% per method and column, plus per-species and
/// overall mean rows. Relative metrics of a zero-mean column are `None`.
pub fn metrics(records: &[PredictionRecord]) -> Result<MetricsTable> {
    if records.is_empty() {
        return Err(Error::input("no prediction records"));
    }
    let columns = record_columns();
    let mut by_method: BTreeMap<Method, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        if r.point.len() != columns.len() || r.observed.len() != columns.len() {
            return Err(Error::dims(
                "prediction record",
                columns.len(),
                r.point.len(),
            ));
        }
        by_method.entry(r.method).or_default().push(r);
    }
    let mut table = MetricsTable::default();
    for (method, recs) in by_method {
        let start = table.rows.len();
        for (j, name) in columns.iter().enumerate() {
            let (group, attribute) = name.split_once('_').unwrap_or(("", name));
            let (rmse_pct, bias_pct, ci_pct) = column_metrics(&recs, j);
            table.rows.push(MetricsRow {
                method,
                group: group.to_string(),
                attribute: attribute.to_string(),
                rmse_pct,
                bias_pct,
                ci_pct,
                n: recs.len(),
            });
        }
        let attr_rows: Vec<MetricsRow> = table.rows[start..start + N_ATTRIBUTES].to_vec();
        let summary = |group: &str, rows: &[&MetricsRow]| MetricsRow {
            method,
            group: group.to_string(),
            attribute: "mean".to_string(),
            rmse_pct: mean_defined(rows.iter().map(|r| r.rmse_pct)),
            bias_pct: mean_defined(rows.iter().map(|r| r.bias_pct)),
            ci_pct: mean_defined(rows.iter().map(|r| r.ci_pct)),
            n: recs.len(),
        };
        for sp in SPECIES {
            let rows: Vec<&MetricsRow> = attr_rows.iter().filter(|r| r.group == sp).collect();
            table.rows.push(summary(sp, &rows));
        }
        let all: Vec<&MetricsRow> = attr_rows.iter().collect();
        table.rows.push(summary("all", &all));
        table.n_evaluations.insert(method, recs.len());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn record(point: &[f64], observed: &[f64]) -> PredictionRecord {
        let mut p = vec![1.0; N_ATTRIBUTES];
        let mut o = vec![1.0; N_ATTRIBUTES];
        p[..point.len()].copy_from_slice(point);
        o[..observed.len()].copy_from_slice(observed);
        PredictionRecord::from_point("p", Method::Knn, &p, &o).unwrap()
    }

    #[test]
    fn hand_computed_metrics() {
        let recs = vec![record(&[12.0], &[10.0]), record(&[16.0], &[20.0])];
        let t = metrics(&recs).unwrap();
        let r = t.row(Method::Knn, "pine", "hgm").unwrap();
        assert!((r.rmse_pct.unwrap() - 100.0 * 10f64.sqrt() / 15.0).abs() < 1e-12);
        assert!((r.rmse_pct.unwrap() - 21.08).abs() < 0.005);
        assert!((r.bias_pct.unwrap() + 100.0 / 15.0).abs() < 1e-12);
        assert_eq!(r.ci_pct, None);
    }

    #[test]
    fn perfect_and_shifted_predictions() {
        let obs = [3.0, 5.0, 9.0];
        let recs: Vec<_> = obs
            .iter()
            .map(|&y| record(&[y, y + 0.5], &[y, y]))
            .collect();
        let t = metrics(&recs).unwrap();
        let r = t.row(Method::Knn, "pine", "hgm").unwrap();
        assert_eq!((r.rmse_pct, r.bias_pct), (Some(0.0), Some(0.0)));
        let r = t.row(Method::Knn, "pine", "dgm").unwrap();
        assert!((r.bias_pct.unwrap() - 100.0 * 0.5 / (17.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_attribute_is_undefined() {
        let mut o = vec![1.0; N_ATTRIBUTES];
        o[14] = 0.0;
        let r = PredictionRecord::from_point("p", Method::Gpr, &[1.0; N_ATTRIBUTES], &o).unwrap();
        let t = metrics(&[r]).unwrap();
        let row = t.row(Method::Gpr, "decid", "v").unwrap();
        assert_eq!(row.rmse_pct, None);
        assert_eq!(row.bias_pct, None);
    }

    #[test]
    fn coverage_counts_inclusive_bounds() {
        let dist = PredictiveDistribution {
            mean: vec![10.0; N_ATTRIBUTES],
            covariance: Matrix::identity(N_ATTRIBUTES),
        };
        let hit = PredictionRecord::from_gpr("a", &dist, &[10.0; N_ATTRIBUTES]).unwrap();
        let miss = PredictionRecord::from_gpr("b", &dist, &[20.0; N_ATTRIBUTES]).unwrap();
        let t = metrics(&[hit, miss]).unwrap();
        assert_eq!(
            t.row(Method::Gpr, "spruce", "ba").unwrap().ci_pct,
            Some(50.0)
        );
    }

    #[test]
    fn totals_sum_species() {
        let mut v = vec![0.0; N_ATTRIBUTES];
        v[2] = 100.0;
        v[7] = 50.0;
        v[12] = 25.0;
        assert_eq!(species_totals(&v)[0], 175.0);
    }

    #[test]
    fn independent_total_sd() {
        let dist = PredictiveDistribution {
            mean: vec![5.0; N_ATTRIBUTES],
            covariance: Matrix::identity(N_ATTRIBUTES),
        };
        let t = aggregate_totals(&dist).unwrap();
        assert!((t[0].sd - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(t[0].mean, 15.0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("KNN".parse::<Method>().unwrap(), Method::Knn);
        assert!("rf".parse::<Method>().is_err());
    }
}
