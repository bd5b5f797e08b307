use std::io::Write;

use super::{record_columns, MetricsTable, PredictionRecord, SizeRow};
use crate::error::Result;

/// Sign convention stated in every metrics report.
pub const BIAS_CONVENTION: &str = "bias% = 100 * mean(predicted - observed) / mean(observed)";

const NA: &str = "NA";

fn comment_lines<W: Write>(out: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// One row per plot × column × method:
/// `plot_id,method,attribute,point,lower,upper,observed` (interval fields
/// empty when the method has none).
pub fn write_records<W: Write>(
    records: &[PredictionRecord],
    mut out: W,
    comment: Option<&str>,
) -> Result<()> {
    comment_lines(&mut out, comment)?;
    writeln!(out, "plot_id,method,attribute,point,lower,upper,observed")?;
    let columns = record_columns();
    for r in records {
        for (j, name) in columns.iter().enumerate() {
            let (lo, hi) = match &r.intervals {
                Some(iv) => (iv[j].lower.to_string(), iv[j].upper.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.plot_id, r.method, name, r.point[j], lo, hi, r.observed[j]
            )?;
        }
    }
    Ok(())
}

/// `method,group,attribute,rmse_pct,bias_pct,ci_pct,n`; undefined values are `NA`.
pub fn write_metrics<W: Write>(
    table: &MetricsTable,
    mut out: W,
    comment: Option<&str>,
) -> Result<()> {
    comment_lines(&mut out, comment)?;
    comment_lines(&mut out, Some(BIAS_CONVENTION))?;
    writeln!(out, "method,group,attribute,rmse_pct,bias_pct,ci_pct,n")?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.group,
            r.attribute,
            opt(r.rmse_pct),
            opt(r.bias_pct),
            opt(r.ci_pct),
            r.n
        )?;
    }
    Ok(())
}

/// Per-size metrics: `size,` followed by the [`write_metrics`] columns.
pub fn write_size_metrics<W: Write>(
    rows: &[SizeRow],
    mut out: W,
    comment: Option<&str>,
) -> Result<()> {
    comment_lines(&mut out, comment)?;
    comment_lines(&mut out, Some(BIAS_CONVENTION))?;
    writeln!(
        out,
        "size,method,group,attribute,rmse_pct,bias_pct,ci_pct,n"
    )?;
    for row in rows {
        for r in &row.metrics.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.size,
                r.method,
                r.group,
                r.attribute,
                opt(r.rmse_pct),
                opt(r.bias_pct),
                opt(r.ci_pct),
                r.n
            )?;
        }
    }
    Ok(())
}

/// Lowest/average/highest RMSE% per size and method.
pub fn write_size_summary<W: Write>(
    rows: &[SizeRow],
    mut out: W,
    comment: Option<&str>,
) -> Result<()> {
    comment_lines(&mut out, comment)?;
    writeln!(
        out,
        "size,method,rmse_min,rmse_mean,rmse_max,n_evaluations,n_failed"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.size,
            r.method,
            opt(r.rmse_min),
            opt(r.rmse_mean),
            opt(r.rmse_max),
            r.n_evaluations,
            r.n_failed
        )?;
    }
    Ok(())
}
