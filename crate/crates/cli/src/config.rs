//! Run configuration: TOML (JSON accepted), validated before any stage runs.

use crate::{config_err, Result};
use affbench_core::molgraph::{GraphForm, HydrogenMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub prepare: PrepareSection,
    pub split: SplitSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub train: TrainSection,
    pub models: ModelsSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub index: PathBuf,
    pub structures_dir: PathBuf,
    /// Optional FoldSeek-style similarity TSV; the histogram proxy is used
    /// when absent.
    #[serde(default)]
    pub protein_similarity_tsv: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareSection {
    /// Hydrogen set kept in the prepared files. Graph construction filters
    /// further, so explicit is the right default.
    pub hydrogen_mode: HydrogenMode,
    pub buffer_blacklist: Vec<String>,
}

impl Default for PrepareSection {
    fn default() -> Self {
        PrepareSection {
            hydrogen_mode: HydrogenMode::Explicit,
            buffer_blacklist: affbench_core::structio::DEFAULT_BLACKLIST
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSection {
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub seeds: Vec<usize>,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub case_study_ids: Vec<String>,
    #[serde(default = "default_threshold")]
    pub protein_sim_threshold: f64,
    #[serde(default = "default_threshold")]
    pub ligand_sim_threshold: f64,
    #[serde(default = "default_cv_seed")]
    pub cv_seed: u64,
}

fn default_min_count() -> usize {
    100
}

fn default_threshold() -> f64 {
    0.5
}

fn default_cv_seed() -> u64 {
    17
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    pub hydrogen_mode: HydrogenMode,
    pub form: GraphForm,
    pub cutoff: f64,
    pub pocket_radius: f64,
    pub max_nodes: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            hydrogen_mode: HydrogenMode::Polar,
            form: GraphForm::Single,
            cutoff: 5.0,
            pocket_radius: 5.0,
            max_nodes: 4096,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    /// Train share of the model-selection split.
    pub cv_ratio: f64,
    /// Train share of the EGNN early-stopping split.
    pub es_ratio: f64,
    pub es_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            cv_ratio: 0.8,
            es_ratio: 0.8,
            es_seed: 23,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelsSection {
    pub roster: Vec<String>,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub egnn: EgnnSection,
    #[serde(default)]
    pub shell_mlp: ShellMlpSection,
    #[serde(default)]
    pub rf_score: RfScoreSection,
    #[serde(default = "default_fp_bits")]
    pub fingerprint_bits: usize,
    #[serde(default = "default_fp_radius")]
    pub fingerprint_radius: usize,
}

fn default_fp_bits() -> usize {
    2048
}

fn default_fp_radius() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestSection {
    pub n_estimators: usize,
    pub max_features: f64,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl Default for ForestSection {
    fn default() -> Self {
        ForestSection {
            n_estimators: 500,
            max_features: 1.0 / 3.0,
            min_samples_leaf: 1,
            bootstrap: true,
            rng_seed: 7,
        }
    }
}

impl ForestSection {
    pub fn to_config(&self) -> affbench_forest::ForestConfig {
        affbench_forest::ForestConfig {
            n_estimators: self.n_estimators,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            bootstrap: self.bootstrap,
            max_depth: None,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgnnSection {
    pub num_layers: usize,
    pub c_hidden: usize,
    pub num_rbf: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub init_seed: u64,
}

impl Default for EgnnSection {
    fn default() -> Self {
        EgnnSection {
            num_layers: 5,
            c_hidden: 128,
            num_rbf: 8,
            lr: 5e-4,
            epochs: 500,
            patience: 20,
            init_seed: 11,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShellMlpSection {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub n_shells: usize,
    pub shell_width: f64,
    pub seed: u64,
}

impl Default for ShellMlpSection {
    fn default() -> Self {
        ShellMlpSection {
            hidden: 64,
            lr: 5e-4,
            epochs: 300,
            n_shells: 12,
            shell_width: 1.0,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfScoreSection {
    pub cutoff: f64,
}

impl Default for RfScoreSection {
    fn default() -> Self {
        RfScoreSection { cutoff: 12.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainSection {
    pub qm_epochs: usize,
    pub diffusion_epochs: usize,
    pub diffusion_steps: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub seed: u64,
    /// Number of synthetic molecules in the toy pre-training sets.
    pub n_molecules: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection {
            qm_epochs: 150,
            diffusion_epochs: 120,
            diffusion_steps: 50,
            stage1_lr: 5e-4,
            stage2_lr: 1e-4,
            stage1_epochs: 200,
            stage2_epochs: 200,
            seed: 5,
            n_molecules: 24,
        }
    }
}

impl RunConfig {
    /// Reads TOML; falls back to JSON when the extension is `.json` or the
    /// TOML parse fails on a JSON-looking document.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let parsed: RunConfig = if path.extension().and_then(|e| e.to_str()) == Some("json")
            || text.trim_start().starts_with('{')
        {
            serde_json::from_str(&text)
                .map_err(|e| config_err(format!("config JSON: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("config TOML: {e}")))?
        };
        // resolve relative paths against the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = parsed;
        let rebase = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        config.paths.index = rebase(&config.paths.index);
        config.paths.structures_dir = rebase(&config.paths.structures_dir);
        config.paths.output_dir = rebase(&config.paths.output_dir);
        config.paths.protein_similarity_tsv =
            config.paths.protein_similarity_tsv.as_ref().map(|p| rebase(p));
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.paths.index.exists() {
            return Err(config_err(format!(
                "index file {} does not exist",
                self.paths.index.display()
            )));
        }
        if !self.paths.structures_dir.is_dir() {
            return Err(config_err(format!(
                "structures dir {} does not exist",
                self.paths.structures_dir.display()
            )));
        }
        if let Some(tsv) = &self.paths.protein_similarity_tsv {
            if !tsv.exists() {
                return Err(config_err(format!(
                    "protein similarity TSV {} does not exist",
                    tsv.display()
                )));
            }
        }
        for f in &self.split.fractions {
            if !affbench_core::lowsim::SUPPORTED_FRACTIONS
                .iter()
                .any(|s| (s - f).abs() < 1e-12)
            {
                return Err(config_err(format!(
                    "fraction {f} outside the supported set {{0, 0.05, 0.30, 0.80}}"
                )));
            }
        }
        if self.split.seeds.len() != self.split.folds {
            return Err(config_err(format!(
                "{} seeds for {} folds",
                self.split.seeds.len(),
                self.split.folds
            )));
        }
        for name in &self.models.roster {
            crate::models::ModelKind::parse(name)?;
        }
        Ok(())
    }

    /// Canonical serialized form used for hashing into manifests.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
