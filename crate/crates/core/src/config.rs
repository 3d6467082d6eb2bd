//! Run configuration: one TOML file shared by every command. Flags override
//! file keys (seed, output dir). Validation collects every violation before
//! failing so a bad config is fixed in one pass.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::folds::Mode;
use crate::error::{Result, TripError};
use crate::model::{HeadMode, ModelSpec};
use crate::moo::{MooConfig, SolverKind};
use crate::rebalance::RebalanceConfig;
use crate::train::baseline::BaselineKind;
use crate::train::optimizer::OptimizerKind;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Trip,
    Early,
    Late,
    SharedLatent,
}

impl Arch {
    pub fn baseline_kind(self) -> Option<BaselineKind> {
        match self {
            Arch::Trip => None,
            Arch::Early => Some(BaselineKind::Early),
            Arch::Late => Some(BaselineKind::Late),
            Arch::SharedLatent => Some(BaselineKind::SharedLatent),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::Trip => write!(f, "trip"),
            Arch::Early => write!(f, "early"),
            Arch::Late => write!(f, "late"),
            Arch::SharedLatent => write!(f, "shared-latent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,

    // Synthetic generator knobs. `seed` defaults to the run seed.
    #[serde(default = "d_num_classes")]
    pub num_classes: usize,
    #[serde(default = "d_dims")]
    pub modality_dims: Vec<usize>,
    #[serde(default = "d_subjects")]
    pub subjects_per_class: Vec<usize>,
    #[serde(default = "d_segments")]
    pub segments_per_subject: usize,
    #[serde(default = "d_one")]
    pub shared_signal: f64,
    #[serde(default = "d_dominance")]
    pub dominance: Vec<f64>,
    #[serde(default)]
    pub conflict: f64,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "d_segment_noise")]
    pub segment_noise: f64,
    #[serde(default = "d_subject_offset")]
    pub subject_offset: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub seed: Option<u64>,

    // CSV ingestion.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Modality names, in stream order. Defaults to every `*.csv` in `dir`
    /// except the manifest, sorted by name.
    #[serde(default)]
    pub modalities: Option<Vec<String>>,
}

fn d_num_classes() -> usize {
    2
}
fn d_dims() -> Vec<usize> {
    vec![6, 6]
}
fn d_subjects() -> Vec<usize> {
    vec![8, 8]
}
fn d_segments() -> usize {
    12
}
fn d_one() -> f64 {
    1.0
}
fn d_dominance() -> Vec<f64> {
    vec![1.0, 1.0]
}
fn d_segment_noise() -> f64 {
    0.2
}
fn d_subject_offset() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_arch")]
    pub arch: Arch,
    #[serde(default = "d_hidden")]
    pub hidden_width: usize,
    #[serde(default = "d_depth")]
    pub backbone_depth: usize,
    #[serde(default = "d_head_mode")]
    pub head_mode: HeadMode,
    #[serde(default = "d_cosine_scale")]
    pub cosine_scale: f64,
}

fn d_arch() -> Arch {
    Arch::Trip
}
fn d_hidden() -> usize {
    32
}
fn d_depth() -> usize {
    2
}
fn d_head_mode() -> HeadMode {
    HeadMode::PerModality
}
fn d_cosine_scale() -> f64 {
    16.0
}

impl Default for ModelSection {
    fn default() -> ModelSection {
        ModelSection {
            arch: d_arch(),
            hidden_width: d_hidden(),
            backbone_depth: d_depth(),
            head_mode: d_head_mode(),
            cosine_scale: d_cosine_scale(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_mode")]
    pub mode: Mode,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_adam")]
    pub optimizer: OptimizerKind,
    #[serde(default = "d_sgd")]
    pub backbone_optimizer: OptimizerKind,
    #[serde(default = "d_true")]
    pub rebalance_enabled: bool,
    #[serde(default = "d_true")]
    pub moo_enabled: bool,
    #[serde(default)]
    pub early_stop: bool,
}

fn d_mode() -> Mode {
    Mode::Async
}
fn d_epochs() -> usize {
    30
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    0.01
}
fn d_adam() -> OptimizerKind {
    OptimizerKind::Adam
}
fn d_sgd() -> OptimizerKind {
    OptimizerKind::Sgd
}
fn d_true() -> bool {
    true
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        TrainSection {
            mode: d_mode(),
            epochs: d_epochs(),
            batch_size: d_batch(),
            learning_rate: d_lr(),
            optimizer: d_adam(),
            backbone_optimizer: d_sgd(),
            rebalance_enabled: true,
            moo_enabled: true,
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MooSection {
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_solver")]
    pub solver: SolverKind,
    #[serde(default = "d_grid")]
    pub grid_resolution: f64,
    #[serde(default = "d_iters")]
    pub max_iters: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
}

fn d_beta() -> f64 {
    0.8
}
fn d_solver() -> SolverKind {
    SolverKind::GridRefine
}
fn d_grid() -> f64 {
    0.01
}
fn d_iters() -> usize {
    200
}
fn d_tol() -> f64 {
    1e-12
}

impl Default for MooSection {
    fn default() -> MooSection {
        MooSection {
            beta: d_beta(),
            solver: d_solver(),
            grid_resolution: d_grid(),
            max_iters: d_iters(),
            tol: d_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebalanceSection {
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_one")]
    pub sigma: f64,
    #[serde(default = "d_margin")]
    pub margin_m: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_one")]
    pub div: f64,
}

fn d_eta() -> f64 {
    0.1
}
fn d_margin() -> f64 {
    0.4
}
fn d_epsilon() -> f64 {
    1e-6
}

impl Default for RebalanceSection {
    fn default() -> RebalanceSection {
        RebalanceSection {
            eta: d_eta(),
            sigma: d_one(),
            margin_m: d_margin(),
            epsilon: d_epsilon(),
            div: d_one(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Train single-modality oracles per fold and report the delta metric.
    #[serde(default = "d_true")]
    pub oracles: bool,
    /// Evaluate every nonempty modality mask (otherwise only the full one).
    #[serde(default = "d_true")]
    pub masks: bool,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        EvalSection { oracles: true, masks: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub moo: MooSection,
    #[serde(default)]
    pub rebalance: RebalanceSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn d_seed() -> u64 {
    7
}
fn d_folds() -> usize {
    4
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TripError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| TripError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collect every value violation, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.folds < 2 {
            problems.push(format!("folds: need at least 2, got {}", self.folds));
        }
        match self.data.source {
            DataSource::Synthetic => {
                if let Err(e) = self.synthetic_spec().and_then(|s| s.validate()) {
                    problems.push(format!("data: {e}"));
                }
            }
            DataSource::Csv => {
                if self.data.dir.is_none() {
                    problems.push("data: csv source requires `dir`".to_string());
                }
            }
        }
        if let Err(e) = self.model_spec(&self.data.modality_dims, self.data.num_classes).validate()
        {
            problems.push(format!("model: {e}"));
        }
        if let Err(e) = self.train_config().validate() {
            problems.push(format!("train: {e}"));
        }
        if self.model.head_mode == HeadMode::Shared && self.train.mode != Mode::Sync {
            problems.push("model: shared head requires train.mode = \"sync\"".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TripError::Config(problems.join("; ")))
        }
    }

    pub fn synthetic_spec(&self) -> Result<crate::data::synth::SyntheticSpec> {
        if self.data.source != DataSource::Synthetic {
            return Err(TripError::Config("data source is not synthetic".into()));
        }
        Ok(crate::data::synth::SyntheticSpec {
            num_classes: self.data.num_classes,
            modality_dims: self.data.modality_dims.clone(),
            subjects_per_class: self.data.subjects_per_class.clone(),
            segments_per_subject: self.data.segments_per_subject,
            shared_signal: self.data.shared_signal,
            dominance: self.data.dominance.clone(),
            conflict: self.data.conflict,
            label_noise: self.data.label_noise,
            segment_noise: self.data.segment_noise,
            subject_offset: self.data.subject_offset,
            missing_rate: self.data.missing_rate,
            seed: self.data.seed.unwrap_or(self.seed),
        })
    }

    /// Dims and class count come from the resolved dataset, not the config,
    /// so CSV sources define their own schema.
    pub fn model_spec(&self, dims: &[usize], num_classes: usize) -> ModelSpec {
        ModelSpec {
            modality_dims: dims.to_vec(),
            hidden_width: self.model.hidden_width,
            backbone_depth: self.model.backbone_depth,
            num_classes,
            head_mode: self.model.head_mode,
            cosine_scale: self.model.cosine_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.train.mode,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            backbone_optimizer: self.train.backbone_optimizer,
            moo: MooConfig {
                beta: self.moo.beta,
                solver: self.moo.solver,
                grid_resolution: self.moo.grid_resolution,
                max_iters: self.moo.max_iters,
                tol: self.moo.tol,
            },
            rebalance: RebalanceConfig {
                eta: self.rebalance.eta,
                sigma: self.rebalance.sigma,
                margin_m: self.rebalance.margin_m,
                epsilon: self.rebalance.epsilon,
                div: self.rebalance.div,
            },
            rebalance_enabled: self.train.rebalance_enabled,
            moo_enabled: self.train.moo_enabled,
            early_stop: self.train.early_stop,
            seed: self.seed,
        }
    }
}
