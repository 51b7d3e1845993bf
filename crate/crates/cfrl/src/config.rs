//! Run configuration: one TOML file drives the whole pipeline.
//!
//! The schema is strict — unknown keys anywhere are rejected, so typos fail
//! loudly instead of silently running defaults. Every block has defaults;
//! a minimal config needs only `output_dir`, `seeds`, and one env variant.
//! The effective (fully defaulted) config is echoed into the output
//! directory by every command, and re-serializing a loaded config
//! reproduces that echo byte-for-byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfgen::CfConfig;
use crate::constrained::DimBound;
use crate::env::{
    Environment, GlucoseEnv, GlucoseParams, LanderEnv, LanderParams, PointMassEnv,
    PointMassParams,
};
use crate::error::{Error, Result};
use crate::td3::Td3Hyper;
use crate::trajectory::DistanceParams;

/// One simulator in the (possibly multi-env) pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvVariant {
    Pointmass {
        #[serde(default)]
        params: PointMassParams,
    },
    Glucose {
        #[serde(default)]
        params: GlucoseParams,
    },
    Lander {
        #[serde(default)]
        params: LanderParams,
    },
}

impl EnvVariant {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            Self::Pointmass { params } => Box::new(PointMassEnv::new(params.clone())?),
            Self::Glucose { params } => Box::new(GlucoseEnv::new(params.clone())?),
            Self::Lander { params } => Box::new(LanderEnv::new(params.clone())?),
        })
    }

    pub fn env_id(&self) -> Result<String> {
        Ok(self.build()?.spec().env_id.clone())
    }
}

/// The simulator pool. A single-variant pool is the common case;
/// multi-variant pools train one agent across all of them, rotating every
/// `steps_per_round` interaction steps during baseline training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    #[serde(default = "default_steps_per_round")]
    pub steps_per_round: usize,
    pub variants: Vec<EnvVariant>,
}

fn default_steps_per_round() -> usize {
    1000
}

/// Baseline policy training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineBlock {
    /// Total environment interaction steps.
    pub total_steps: usize,
    /// Episodes averaged when reporting the trained policy's return.
    pub eval_episodes: usize,
}

impl Default for BaselineBlock {
    fn default() -> Self {
        Self { total_steps: 20_000, eval_episodes: 20 }
    }
}

/// Observed-trajectory dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    /// Long baseline rollouts recorded per env variant.
    pub episodes_per_variant: usize,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self { episodes_per_variant: 4, train_size: 18, test_size: 18 }
    }
}

/// Counterfactual training, evaluation, and windowing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfBlock {
    pub lambda: f64,
    pub n_observed: usize,
    pub n_cf: usize,
    pub eval_every: usize,
    pub eval_rollouts: usize,
    /// Sliding-window segment length in steps.
    pub window: usize,
    pub stride: usize,
    pub distance: DistanceParams,
}

impl Default for CfBlock {
    fn default() -> Self {
        let cf = CfConfig::default();
        Self {
            lambda: cf.lambda,
            n_observed: cf.n_observed,
            n_cf: cf.n_cf,
            eval_every: cf.eval_every,
            eval_rollouts: cf.eval_rollouts,
            window: 20,
            stride: 20,
            distance: cf.distance,
        }
    }
}

impl CfBlock {
    pub fn to_cf_config(&self) -> CfConfig {
        CfConfig {
            lambda: self.lambda,
            n_observed: self.n_observed,
            n_cf: self.n_cf,
            eval_every: self.eval_every,
            eval_rollouts: self.eval_rollouts,
            distance: self.distance,
        }
    }
}

/// Constraint policy as declared in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyBlock {
    /// Constant action vector.
    Fixed { action: Vec<f64> },
    /// Frozen baseline agent in deterministic mode. The checkpoint defaults
    /// to the baseline checkpoint the command already received.
    Baseline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint: Option<PathBuf>,
    },
}

/// Optional constrained-region block; absent means the unconstrained
/// problem variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintBlock {
    pub bounds: Vec<DimBound>,
    pub policy: PolicyBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_constrained_steps: Option<usize>,
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// One full pipeline trial per seed.
    pub seeds: Vec<u64>,
    pub env: EnvBlock,
    #[serde(default)]
    pub baseline: BaselineBlock,
    #[serde(default)]
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub td3: Td3Hyper,
    #[serde(default)]
    pub cf: CfBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintBlock>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config echo error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must contain at least one entry".into()));
        }
        if self.env.variants.is_empty() {
            return Err(Error::Config("env.variants must contain at least one entry".into()));
        }
        if self.env.steps_per_round == 0 {
            return Err(Error::Config("env.steps_per_round must be >= 1".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.env.variants {
            let id = v.env_id().map_err(|e| Error::Config(format!("bad env variant: {e}")))?;
            if !ids.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate env id '{id}'")));
            }
        }
        if self.cf.window == 0 || self.cf.stride == 0 {
            return Err(Error::Config("cf.window and cf.stride must be >= 1".into()));
        }
        if self.dataset.train_size == 0 || self.dataset.test_size == 0 {
            return Err(Error::Config("dataset train/test sizes must be >= 1".into()));
        }
        if self.dataset.episodes_per_variant == 0 {
            return Err(Error::Config("dataset.episodes_per_variant must be >= 1".into()));
        }
        if self.baseline.total_steps == 0 || self.baseline.eval_episodes == 0 {
            return Err(Error::Config("baseline.total_steps/eval_episodes must be >= 1".into()));
        }
        self.td3.validate().map_err(|e| Error::Config(format!("td3 block: {e}")))?;
        self.cf
            .to_cf_config()
            .validate()
            .map_err(|e| Error::Config(format!("cf block: {e}")))?;
        if let Some(c) = &self.constraint {
            if c.bounds.is_empty() {
                return Err(Error::Config(
                    "constraint.bounds must be non-empty (omit the block for no constraint)"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Fresh environment instances, one per variant, in declaration order.
    pub fn build_pool(&self) -> Result<Vec<Box<dyn Environment>>> {
        self.env.variants.iter().map(EnvVariant::build).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        output_dir = "out"
        seeds = [1, 2, 3]

        [[env.variants]]
        kind = "pointmass"
    "#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.cf.lambda, 1.0);
        assert_eq!(cfg.cf.eval_every, 400);
        assert_eq!(cfg.td3.batch_size, 256);
        assert_eq!(cfg.baseline.total_steps, 20_000);
        assert!(cfg.constraint.is_none());
        let pool = cfg.build_pool().unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool[0].spec().env_id, "pointmass");
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for bad in [
            "output_dir = \"o\"\nseeds = [1]\nbogus = 2\n[[env.variants]]\nkind = \"pointmass\"",
            "output_dir = \"o\"\nseeds = [1]\n[[env.variants]]\nkind = \"pointmass\"\n[td3]\nbogus = 1",
            "output_dir = \"o\"\nseeds = [1]\n[[env.variants]]\nkind = \"pointmass\"\n[env.variants.params]\nbogus = 1",
            "output_dir = \"o\"\nseeds = [1]\n[[env.variants]]\nkind = \"pointmass\"\n[cf]\nbogus = 1",
        ] {
            assert!(RunConfig::from_toml(bad).is_err(), "accepted: {bad}");
        }
    }

    #[test]
    fn validation_catches_bad_values() {
        let no_seeds = MINIMAL.replace("seeds = [1, 2, 3]", "seeds = []");
        assert!(RunConfig::from_toml(&no_seeds).is_err());

        let no_envs = "output_dir = \"o\"\nseeds = [1]\n[env]\nvariants = []";
        assert!(RunConfig::from_toml(no_envs).is_err());

        let dup = r#"
            output_dir = "o"
            seeds = [1]
            [[env.variants]]
            kind = "glucose"
            [[env.variants]]
            kind = "glucose"
        "#;
        let err = RunConfig::from_toml(dup).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let bad_lambda = format!("{MINIMAL}\n[cf]\nlambda = -1.0");
        assert!(RunConfig::from_toml(&bad_lambda).is_err());
    }

    #[test]
    fn multi_env_distinct_ids_via_params() {
        let cfg = RunConfig::from_toml(
            r#"
            output_dir = "o"
            seeds = [1]
            [env]
            steps_per_round = 500
            [[env.variants]]
            kind = "glucose"
            [env.variants.params]
            env_id = "patient-a"
            p1 = 0.03
            [[env.variants]]
            kind = "glucose"
            [env.variants.params]
            env_id = "patient-b"
            p1 = 0.02
        "#,
        )
        .unwrap();
        let pool = cfg.build_pool().unwrap();
        assert_eq!(pool[0].spec().env_id, "patient-a");
        assert_eq!(pool[1].spec().env_id, "patient-b");
    }

    #[test]
    fn constraint_block_round_trips() {
        let text = r#"
            output_dir = "o"
            seeds = [1]
            [[env.variants]]
            kind = "glucose"
            [constraint]
            bounds = [{ dim = 0, low = -inf, high = -0.2 }]
            max_constrained_steps = 10
            [constraint.policy]
            kind = "fixed"
            action = [0.03]
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let c = cfg.constraint.as_ref().unwrap();
        assert_eq!(c.bounds[0].dim, 0);
        assert!(c.bounds[0].low.is_infinite());
        assert_eq!(c.policy, PolicyBlock::Fixed { action: vec![0.03] });
        assert_eq!(c.max_constrained_steps, Some(10));
    }

    #[test]
    fn effective_config_round_trips_exactly() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let echo = cfg.to_toml().unwrap();
        let reloaded = RunConfig::from_toml(&echo).unwrap();
        assert_eq!(cfg, reloaded);
        assert_eq!(echo, reloaded.to_toml().unwrap());
    }
}
