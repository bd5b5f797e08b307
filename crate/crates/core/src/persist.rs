//! Versioned JSON model files.
//!
//! ```json
//! {"format": "gpforest-model", "version": 1, "method": "gpr", "model": {…}}
//! ```
//!
//! Floats are written in shortest round-trip form, so a loaded model
//! predicts bit-identically to the saved one.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BayesLinearModel, KnnModel};
use crate::error::{Error, Result};
use crate::evaluation::Method;
use crate::gpr::TrainedGprModel;

pub const FORMAT_NAME: &str = "gpforest-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "model", rename_all = "lowercase")]
pub enum SavedModel {
    Gpr(TrainedGprModel<f64>),
    Knn(KnnModel),
    Bayes(BayesLinearModel),
}

impl SavedModel {
    pub fn method(&self) -> Method {
        match self {
            SavedModel::Gpr(_) => Method::Gpr,
            SavedModel::Knn(_) => Method::Knn,
            SavedModel::Bayes(_) => Method::Bayes,
        }
    }

    pub fn predictor_names(&self) -> &[String] {
        match self {
            SavedModel::Gpr(m) => m.predictor_names(),
            SavedModel::Knn(m) => &m.predictor_names,
            SavedModel::Bayes(m) => &m.predictor_names,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: M,
}

pub fn write_model<W: Write>(model: &SavedModel, out: W) -> Result<()> {
    let env = Envelope {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        model,
    };
    serde_json::to_writer(out, &env).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn read_model<R: Read>(mut input: R) -> Result<SavedModel> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    match head.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT_NAME) => {}
        other => {
            return Err(Error::ModelFormat(format!(
                "not a model file (format {other:?})"
            )))
        }
    }
    match head.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {other:?} (expected {FORMAT_VERSION})"
            )))
        }
    }
    let env: Envelope<SavedModel> =
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(env.model)
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    buf.push(b'\n');
    fs::write(path.as_ref(), buf).map_err(Error::io_at(path.as_ref()))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    read_model(fs::File::open(path).map_err(Error::io_at(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{bayes_linear_fit, Aggregation, BayesConfig};
    use crate::dataio::{generate_synthetic, SynthConfig};
    use crate::gpr::{train, GprConfig};

    fn data() -> crate::dataio::Dataset {
        generate_synthetic(&SynthConfig {
            n_plots: 40,
            n_predictors: 6,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn round_trip(m: &SavedModel) -> SavedModel {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        read_model(&buf[..]).unwrap()
    }

    #[test]
    fn gpr_round_trip_is_exact() {
        let ds = data();
        let m = train(&ds.to_training_set().unwrap(), &GprConfig::default()).unwrap();
        let saved = SavedModel::Gpr(m.clone());
        let back = round_trip(&saved);
        assert_eq!(back, saved);
        let SavedModel::Gpr(b) = back else { panic!() };
        let x = ds.x.row(5);
        let (p, q) = (m.predict(x).unwrap(), b.predict(x).unwrap());
        assert_eq!(p.mean, q.mean);
        assert_eq!(p.covariance, q.covariance);
    }

    #[test]
    fn knn_and_bayes_round_trip() {
        let ds = data();
        let ts = ds.to_training_set().unwrap();
        let knn = SavedModel::Knn(KnnModel::fit(&ts, &[0, 2, 4], 5, Aggregation::Mean).unwrap());
        assert_eq!(round_trip(&knn), knn);
        let bayes = SavedModel::Bayes(
            bayes_linear_fit(
                &ts.with_predictors(&[0, 1]).unwrap(),
                &BayesConfig::default(),
            )
            .unwrap(),
        );
        assert_eq!(round_trip(&bayes), bayes);
    }

    #[test]
    fn rejects_other_versions() {
        let text = r#"{"format":"gpforest-model","version":99,"method":"knn","model":{}}"#;
        assert!(matches!(
            read_model(text.as_bytes()),
            Err(Error::ModelFormat(_))
        ));
        assert!(read_model(&b"{}"[..]).is_err());
    }
}
