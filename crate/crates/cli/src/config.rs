//! Run configuration: a TOML document with one section per component.
//!
//! ```toml
//! seed = 0
//! methods = ["gpr", "knn"]
//!
//! [gpr]
//! length_scale = 10.0
//! error_scale = 0.1
//!
//! [knn]
//! k = 5
//! n_select = 10
//!
//! [bayes.sampler]
//! iterations = 50000
//!
//! [size_experiment]
//! sizes = [20, 400]
//! reps = 2000
//! ```

use std::path::{Path, PathBuf};

use gpforest::baselines::BayesConfig;
use gpforest::dataio::SynthConfig;
use gpforest::evaluation::{EvalConfig, KnnConfig, LooStrategy, Method};
use gpforest::gpr::GprConfig;
use gpforest::kernel::KernelParams;
use gpforest::linalg::JitterSchedule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprSection {
    pub length_scale: f64,
    pub signal_sigma: f64,
    pub error_scale: f64,
    pub centering: bool,
    pub standardize_inputs: bool,
    pub jitter: JitterSchedule,
}

impl Default for GprSection {
    fn default() -> Self {
        let d = GprConfig::<f64>::default();
        GprSection {
            length_scale: d.kernel.length_scale,
            signal_sigma: d.kernel.signal_sigma,
            error_scale: d.error_scale,
            centering: d.centering,
            standardize_inputs: d.standardize_inputs,
            jitter: d.jitter,
        }
    }
}

impl GprSection {
    pub fn to_config(&self) -> GprConfig<f64> {
        GprConfig {
            kernel: KernelParams {
                length_scale: self.length_scale,
                signal_sigma: self.signal_sigma,
                ..KernelParams::default()
            },
            error_scale: self.error_scale,
            centering: self.centering,
            standardize_inputs: self.standardize_inputs,
            jitter: self.jitter,
            prior_covariance: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoocvSection {
    pub strategy: LooStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeSection {
    pub sizes: Vec<usize>,
    pub reps: usize,
}

impl Default for SizeSection {
    fn default() -> Self {
        SizeSection {
            sizes: (1..=20).map(|k| 20 * k).collect(),
            reps: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub paths: Paths,
    pub gpr: GprSection,
    pub loocv: LoocvSection,
    pub knn: KnnConfig,
    pub bayes: BayesConfig,
    pub size_experiment: SizeSection,
    /// Its `seed` is replaced by the run seed.
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            methods: vec![Method::Gpr],
            paths: Paths::default(),
            gpr: GprSection::default(),
            loocv: LoocvSection::default(),
            knn: KnnConfig::default(),
            bayes: BayesConfig::default(),
            size_experiment: SizeSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            gpr: self.gpr.to_config(),
            loo_strategy: self.loocv.strategy,
            knn: self.knn.clone(),
            bayes: self.bayes.clone(),
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Referenced paths must all differ.
    pub fn check_paths(&self) -> Result<(), String> {
        let p = &self.paths;
        let set: Vec<&PathBuf> = [&p.data, &p.model, &p.out].into_iter().flatten().collect();
        for (i, a) in set.iter().enumerate() {
            if set[i + 1..].contains(a) {
                return Err(format!(
                    "path {} is used for more than one role",
                    a.display()
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration without paths, so identical
    /// settings hash identically wherever outputs are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let bytes = serde_json::to_vec(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
