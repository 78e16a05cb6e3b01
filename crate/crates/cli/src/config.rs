//! Run configuration: a strict, human-editable TOML document.
//!
//! Unknown keys are rejected so a typoed hyperparameter name fails loudly
//! instead of silently falling back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use latentdirs::directions::TrainConfig;
use latentdirs::generator::{self, Generator};
use latentdirs::scorers::ScorerKind;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainSection,
    pub generator: GeneratorSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub seed: u64,
    pub steps: usize,
    pub scorer: String,
    pub k: usize,
    /// "conditional" trains k direction networks; "linear" trains the
    /// single-vector baseline.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_alpha_lo")]
    pub alpha_lo: f64,
    #[serde(default = "default_alpha_hi")]
    pub alpha_hi: f64,
    #[serde(default = "default_trunc")]
    pub trunc: f64,
    #[serde(default = "default_lambda_div")]
    pub lambda_div: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_true")]
    pub detach_base_score: bool,
    #[serde(default)]
    pub abs_cosine: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub seed: u64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
    #[serde(default = "default_side")]
    pub side: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_temp")]
    pub temp: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub test_seed: u64,
    #[serde(default = "default_class_draws")]
    pub class_draws: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    /// Direction pairs for interpolation heatmaps as "i-j" (1-indexed);
    /// absent means all pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_pairs: Option<Vec<String>>,
    #[serde(default = "default_true")]
    pub frechet: bool,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_sample_strip")]
    pub sample_strip: usize,
}

fn default_model() -> String {
    "conditional".into()
}
fn default_batch_size() -> usize {
    4
}
fn default_lr() -> f64 {
    2e-4
}
fn default_alpha_lo() -> f64 {
    -0.5
}
fn default_alpha_hi() -> f64 {
    0.5
}
fn default_trunc() -> f64 {
    2.0
}
fn default_lambda_div() -> f64 {
    0.01
}
fn default_hidden() -> usize {
    64
}
fn default_true() -> bool {
    true
}
fn default_latent_dim() -> usize {
    16
}
fn default_class_count() -> usize {
    10
}
fn default_side() -> usize {
    generator::DEFAULT_SIDE
}
fn default_embed_dim() -> usize {
    generator::DEFAULT_EMBED_DIM
}
fn default_temp() -> f64 {
    generator::DEFAULT_TEMP
}
fn default_class_draws() -> usize {
    64
}
fn default_per_class() -> usize {
    2
}
fn default_feature_dim() -> usize {
    16
}
fn default_sample_strip() -> usize {
    4
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config()?.validate().map_err(CliError::from)?;
        match self.train.model.as_str() {
            "conditional" => {}
            "linear" => {
                if self.train.k != 1 {
                    return Err(CliError::Config(
                        "the linear baseline has a single direction; set k = 1".into(),
                    ));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown model '{other}' (expected conditional or linear)"
                )));
            }
        }
        let g = &self.generator;
        if g.latent_dim < 2 {
            return Err(CliError::Config("generator.latent_dim must be >= 2".into()));
        }
        if g.class_count < 1 {
            return Err(CliError::Config("generator.class_count must be >= 1".into()));
        }
        if g.side < 8 {
            return Err(CliError::Config("generator.side must be >= 8".into()));
        }
        if g.temp <= 0.0 {
            return Err(CliError::Config("generator.temp must be positive".into()));
        }
        let e = &self.eval;
        if e.class_draws < 1 || e.per_class < 1 {
            return Err(CliError::Config(
                "eval.class_draws and eval.per_class must be >= 1".into(),
            ));
        }
        if e.sample_strip < 1 {
            return Err(CliError::Config("eval.sample_strip must be >= 1".into()));
        }
        let grid = (e.feature_dim as f64).sqrt().round() as usize;
        if grid * grid != e.feature_dim {
            return Err(CliError::Config(
                "eval.feature_dim must be a perfect square".into(),
            ));
        }
        if e.frechet && !g.side.is_multiple_of(grid) {
            return Err(CliError::Config(format!(
                "generator.side {} must be divisible by the feature grid {grid}",
                g.side
            )));
        }
        self.heatmap_pairs(usize::MAX)?;
        Ok(())
    }

    pub fn scorer(&self) -> Result<ScorerKind, CliError> {
        self.train
            .scorer
            .parse::<ScorerKind>()
            .map_err(CliError::from)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            seed: self.train.seed,
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            alpha_lo: self.train.alpha_lo,
            alpha_hi: self.train.alpha_hi,
            trunc: self.train.trunc,
            lambda_div: self.train.lambda_div,
            k: self.train.k,
            hidden: self.train.hidden,
            scorer: self.scorer()?,
            detach_base_score: self.train.detach_base_score,
            abs_cosine: self.train.abs_cosine,
        })
    }

    pub fn build_generator(&self) -> Result<Generator, CliError> {
        let weights = generator::init_generator_with(
            self.generator.seed,
            self.generator.latent_dim,
            self.generator.class_count,
            self.generator.embed_dim,
        );
        Generator::new(weights, self.generator.side, self.generator.temp).map_err(CliError::from)
    }

    /// The heatmap pairs to emit for a bank of `k` directions, 0-indexed.
    /// `None` in the config means every unordered pair.
    pub fn heatmap_pairs(&self, k: usize) -> Result<Vec<(usize, usize)>, CliError> {
        match &self.eval.heatmap_pairs {
            None => {
                if k == usize::MAX {
                    return Ok(Vec::new());
                }
                let mut out = Vec::new();
                for i in 0..k {
                    for j in (i + 1)..k {
                        out.push((i, j));
                    }
                }
                Ok(out)
            }
            Some(specs) => {
                let mut out = Vec::new();
                for spec in specs {
                    let (a, b) = spec.split_once('-').ok_or_else(|| {
                        CliError::Config(format!(
                            "heatmap pair '{spec}' is not of the form i-j"
                        ))
                    })?;
                    let parse = |s: &str| -> Result<usize, CliError> {
                        let v: usize = s.trim().parse().map_err(|_| {
                            CliError::Config(format!("heatmap pair '{spec}': bad index '{s}'"))
                        })?;
                        if v < 1 {
                            return Err(CliError::Config(format!(
                                "heatmap pair '{spec}': directions are 1-indexed"
                            )));
                        }
                        Ok(v - 1)
                    };
                    let (i, j) = (parse(a)?, parse(b)?);
                    if i == j {
                        return Err(CliError::Config(format!(
                            "heatmap pair '{spec}' repeats a direction"
                        )));
                    }
                    if k != usize::MAX && (i >= k || j >= k) {
                        return Err(CliError::Config(format!(
                            "heatmap pair '{spec}' exceeds k={k}"
                        )));
                    }
                    out.push((i.min(j), i.max(j)));
                }
                Ok(out)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
