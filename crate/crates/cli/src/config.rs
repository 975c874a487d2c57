//! Effective configuration: command-line flags over environment over the
//! TOML file over built-in defaults.

use std::path::{Path, PathBuf};

use personaload::baselines::FewShotConfig;
use personaload::data::SplitSizes;
use personaload::em::TrainConfig;
use personaload::interpret::{DEFAULT_CLUSTERS, DEFAULT_RESTARTS};
use personaload::oracle::{OracleConfig, SyntheticOracleParams};
use personaload::predict::PredictionConfig;
use personaload::synth::SynthConfig;
use personaload::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Http,
    #[default]
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub kind: OracleKind,
    /// JSONL response cache wrapped around the oracle.
    pub cache: Option<PathBuf>,
    pub http: OracleConfig,
    pub synthetic: SyntheticOracleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretSection {
    pub k: usize,
    pub restarts: usize,
    /// Cluster counts for the elbow/silhouette sweep.
    pub sweep: Vec<usize>,
}

impl Default for InterpretSection {
    fn default() -> Self {
        InterpretSection {
            k: DEFAULT_CLUSTERS,
            restarts: DEFAULT_RESTARTS,
            sweep: (2..=10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub epsilon: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            epsilon: personaload::eval::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnlSection {
    /// Zero the train and Swissmetro cost for annual-pass holders.
    pub annual_pass_interaction: bool,
}

impl Default for MnlSection {
    fn default() -> Self {
        MnlSection {
            annual_pass_interaction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Base seed for every stage; stages derive their own streams from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub oracle: OracleSection,
    pub split: SplitSizes,
    pub train: TrainConfig,
    pub predict: PredictionConfig,
    pub few_shot: FewShotConfig,
    pub mnl: MnlSection,
    pub evaluate: EvaluateSection,
    pub interpret: InterpretSection,
    pub synth: SynthConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            output_dir: PathBuf::from("out"),
            oracle: OracleSection::default(),
            split: SplitSizes::default(),
            train: TrainConfig::default(),
            predict: PredictionConfig::default(),
            few_shot: FewShotConfig::default(),
            mnl: MnlSection::default(),
            evaluate: EvaluateSection::default(),
            interpret: InterpretSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values given on the command line or through the environment; `None`
/// leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub oracle: Option<OracleKind>,
    pub cache: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {}", e.to_string().trim_end())))
    }

    /// Reads `path` if given (it must then exist), applies overrides and
    /// propagates the base seed into every stage.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Config> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", p.display())))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(d) = &overrides.output_dir {
            config.output_dir = d.clone();
        }
        if let Some(k) = overrides.oracle {
            config.oracle.kind = k;
        }
        if let Some(c) = &overrides.cache {
            config.oracle.cache = Some(c.clone());
        }
        config.train.seed = config.seed;
        config.predict.seed = config.seed;
        config.synth.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.predict.validate()?;
        self.oracle.http.validate()?;
        self.oracle.synthetic.validate()?;
        self.synth.validate()?;
        if self.interpret.k < 2 {
            return Err(Error::Config(format!(
                "interpret.k must be >= 2, got {}",
                self.interpret.k
            )));
        }
        if !(self.evaluate.epsilon.is_finite() && self.evaluate.epsilon >= 0.0) {
            return Err(Error::Config("evaluate.epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let c = Config::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(c.split.n_general_records, 200);
        assert_eq!(c.oracle.kind, OracleKind::Synthetic);
        assert_eq!(c.oracle.http.api_key_env, "OPENAI_API_KEY");
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 5\n[train]\nl0 = 3\n[oracle]\nkind = \"http\"\n").unwrap();
        let c = Config::resolve(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(
            (c.seed, c.train.l0, c.train.seed, c.oracle.kind),
            (5, 3, 5, OracleKind::Http)
        );
        let o = Overrides {
            seed: Some(9),
            oracle: Some(OracleKind::Synthetic),
            ..Default::default()
        };
        let c = Config::resolve(Some(&path), &o).unwrap();
        assert_eq!(
            (c.seed, c.train.seed, c.predict.seed, c.oracle.kind),
            (9, 9, 9, OracleKind::Synthetic)
        );
        assert_eq!(c.train.l0, 3);
    }

    #[test]
    fn type_mismatch_names_the_key() {
        match Config::from_toml("[train]\nl0 = \"five\"\n") {
            Err(Error::Config(m)) => assert!(m.contains("l0"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Config::from_toml("sed = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let r = Config::resolve(Some(Path::new("/nonexistent/c.toml")), &Overrides::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(
            Config::from_toml("[train]\nalpha_e = 2.0\n").and_then(|c| c.validate()),
            Err(Error::Config(_))
        ));
    }
}
