//! Declarative run configuration, read from a single TOML file.
//!
//! Required keys are `n1`, `n2`, `[q1]` and `[q2]`; every other key has the
//! default listed on its field. A minimal file:
//!
//! ```toml
//! n1 = 2000
//! n2 = 2000
//!
//! [q1]
//! kind = "gaussian"
//! mean = [0.0]
//! var = [1.0]
//! augment = 1
//!
//! [q2]
//! kind = "gaussian"
//! mean = [0.0]
//! var = [2.0]
//! augment = 1
//! ```

use std::path::Path;

use fgb_core::densities::{
    augment_with_standard_normal, gaussian_target, ring_mixture_target, t_mixture_target, RingMixtureParams,
    TargetDensity,
};
use fgb_core::fgb::{TrainConfig, UpdateOrder};
use fgb_core::flow::MaskPattern;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub type DynTarget = Box<dyn TargetDensity>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream of a run derives from it. Default 0.
    #[serde(default)]
    pub seed: u64,
    /// Sample size drawn from `q1`, before splitting.
    pub n1: usize,
    /// Sample size drawn from `q2`, before splitting.
    pub n2: usize,
    /// Fraction of each sample set used for training. Default 0.5.
    #[serde(default = "default_split")]
    pub split: f64,
    /// Independent training runs per estimate; the one with the lowest final
    /// training objective is kept. Default 1.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Exchange the roles of `q1` and `q2` before estimating; reported
    /// numbers still refer to `log(Z1/Z2)`. Default false.
    #[serde(default)]
    pub swap: bool,
    /// Output directory; `--out` takes precedence. Default `fgb-out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub q1: TargetSpec,
    pub q2: TargetSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub bench: BenchSpec,
}

fn default_split() -> f64 {
    0.5
}

fn default_restarts() -> usize {
    1
}

/// A benchmark density, optionally padded with independent standard normal
/// coordinates (`augment`, default 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
        #[serde(default)]
        augment: usize,
    },
    /// Product of `dim/2` two-ring mixtures. Either `preset` (`first`,
    /// `second` or `demo_second`) or all of `mu1`, `mu2`, `radius` and
    /// `thickness` must be given.
    Rings {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu1: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu2: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thickness: Option<f64>,
        #[serde(default)]
        augment: usize,
    },
    /// Mixture of multivariate t components; `scale` is the row-major scale
    /// matrix shared by all components.
    TMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        scale: Vec<f64>,
        nu: f64,
        #[serde(default)]
        augment: usize,
    },
}

impl TargetSpec {
    pub fn rings_preset(dim: usize, preset: &str) -> Self {
        TargetSpec::Rings {
            dim,
            preset: Some(preset.into()),
            mu1: None,
            mu2: None,
            radius: None,
            thickness: None,
            augment: 0,
        }
    }

    fn ring_params(&self, which: &str) -> AppResult<RingMixtureParams> {
        let TargetSpec::Rings { dim, preset, mu1, mu2, radius, thickness, .. } = self else {
            unreachable!("ring_params on a non-ring target")
        };
        if let Some(p) = preset {
            return match p.as_str() {
                "first" => Ok(RingMixtureParams::benchmark_first(*dim)),
                "second" => Ok(RingMixtureParams::benchmark_second(*dim)),
                "demo_second" => Ok(RingMixtureParams::demo_second(*dim)),
                other => Err(AppError::Config(format!(
                    "{which}.preset: unknown ring preset `{other}` (expected first, second or demo_second)"
                ))),
            };
        }
        let need = |name: &str| AppError::Config(format!("{which}: missing field `{name}` (or set `preset`)"));
        Ok(RingMixtureParams {
            dim: *dim,
            mu1: mu1.ok_or_else(|| need("mu1"))?,
            mu2: mu2.ok_or_else(|| need("mu2"))?,
            radius: radius.ok_or_else(|| need("radius"))?,
            thickness: thickness.ok_or_else(|| need("thickness"))?,
        })
    }

    fn augment(&self) -> usize {
        match self {
            TargetSpec::Gaussian { augment, .. }
            | TargetSpec::Rings { augment, .. }
            | TargetSpec::TMixture { augment, .. } => *augment,
        }
    }

    /// Builds the density; `which` names the table in error messages.
    pub fn build(&self, which: &str) -> AppResult<DynTarget> {
        let ctx = |e: fgb_core::Error| AppError::Config(format!("{which}: {e}"));
        let base: DynTarget = match self {
            TargetSpec::Gaussian { mean, var, .. } => Box::new(gaussian_target(mean, var).map_err(ctx)?),
            TargetSpec::Rings { .. } => Box::new(ring_mixture_target(self.ring_params(which)?).map_err(ctx)?),
            TargetSpec::TMixture { weights, means, scale, nu, .. } => {
                Box::new(t_mixture_target(weights, means, scale, *nu).map_err(ctx)?)
            }
        };
        match self.augment() {
            0 => Ok(base),
            k => Ok(Box::new(augment_with_standard_normal(base, k).map_err(ctx)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    /// Coupling layers. Default 4.
    pub layers: usize,
    /// Hidden widths of each coupling network. Default [64, 64].
    pub hidden: Vec<usize>,
    /// `halves` or `interleaved`. Default `halves`.
    pub mask: String,
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec { layers: 4, hidden: vec![64, 64], mask: "halves".into() }
    }
}

impl FlowSpec {
    pub fn mask_pattern(&self) -> AppResult<MaskPattern> {
        MaskPattern::from_name(&self.mask)
            .ok_or_else(|| AppError::Config(format!("flow.mask: unknown mask `{}` (expected halves or interleaved)", self.mask)))
    }
}

/// Training hyperparameters; defaults match [`TrainConfig::default`]. The
/// minibatch shuffling seed is derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub eta_phi: f64,
    pub eta_r: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<usize>,
    pub grad_clip: f64,
    /// `simultaneous` or `alternating`.
    pub update_order: String,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSpec {
            beta1: d.beta1,
            beta2: d.beta2,
            eta_phi: d.eta_phi,
            eta_r: d.eta_r,
            eps1: d.eps1,
            eps2: d.eps2,
            max_epochs: d.max_epochs,
            minibatch: d.minibatch,
            grad_clip: d.grad_clip,
            update_order: "simultaneous".into(),
        }
    }
}

impl TrainSpec {
    pub fn to_train_config(&self, seed: u64) -> AppResult<TrainConfig> {
        let update_order = match self.update_order.as_str() {
            "simultaneous" => UpdateOrder::Simultaneous,
            "alternating" => UpdateOrder::Alternating,
            other => {
                return Err(AppError::Config(format!(
                    "train.update_order: unknown order `{other}` (expected simultaneous or alternating)"
                )))
            }
        };
        let config = TrainConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eta_phi: self.eta_phi,
            eta_r: self.eta_r,
            eps1: self.eps1,
            eps2: self.eps2,
            max_epochs: self.max_epochs,
            minibatch: self.minibatch,
            seed,
            grad_clip: self.grad_clip,
            update_order,
            init_log_r: None,
        };
        config.validate().map_err(|e| AppError::Config(format!("train: {e}")))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Fresh samples per repetition for every listed method.
    Repetitions,
    /// Train once, then redraw only the estimating samples (`n_prime` per side).
    FixedFlow,
    /// Per repetition, trained-flow RE² against identity-flow RE² on the same held-out samples.
    Improvement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    /// Default `repetitions`.
    pub study: Study,
    /// Any of `fgb`, `optimal_identity`, `geometric`, `is`, `ris`. Default all.
    pub methods: Vec<String>,
    /// Default 100.
    pub reps: usize,
    /// Estimating sample size per side for the fixed-flow study. Default 1000.
    pub n_prime: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            study: Study::Repetitions,
            methods: ["fgb", "optimal_identity", "geometric", "is", "ris"].map(String::from).to_vec(),
            reps: 100,
            n_prime: 1000,
        }
    }
}

impl RunConfig {
    /// Parses TOML text; syntax and type errors carry line and column.
    pub fn parse(text: &str) -> AppResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(AppError::Config("n1 and n2 must be at least 2".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(AppError::Config(format!("split must lie in (0, 1), got {}", self.split)));
        }
        if self.restarts == 0 {
            return Err(AppError::Config("restarts must be at least 1".into()));
        }
        let q1 = self.q1.build("q1")?;
        let q2 = self.q2.build("q2")?;
        if q1.dim() != q2.dim() {
            return Err(AppError::Config(format!(
                "q1 has dimension {} but q2 has dimension {}; use `augment` to pad the smaller one",
                q1.dim(),
                q2.dim()
            )));
        }
        if q1.dim() < 2 {
            return Err(AppError::Config("flows need dimension >= 2; set `augment = 1` on both targets".into()));
        }
        if self.flow.layers == 0 || self.flow.hidden.contains(&0) {
            return Err(AppError::Config("flow.layers and every flow.hidden width must be positive".into()));
        }
        self.flow.mask_pattern()?;
        self.train.to_train_config(0)?;
        for m in &self.bench.methods {
            crate::bench::Method::from_name(m)?;
        }
        if self.bench.reps == 0 || self.bench.n_prime < 2 {
            return Err(AppError::Config("bench.reps must be positive and bench.n_prime at least 2".into()));
        }
        Ok(())
    }

    /// The `(q1, q2)` pair in the order the estimator sees it.
    pub fn targets(&self) -> AppResult<(DynTarget, DynTarget)> {
        let (a, b) = (self.q1.build("q1")?, self.q2.build("q2")?);
        Ok(if self.swap { (b, a) } else { (a, b) })
    }

    /// `(n1, n2)` in the order the estimator sees them.
    pub fn sizes(&self) -> (usize, usize) {
        if self.swap {
            (self.n2, self.n1)
        } else {
            (self.n1, self.n2)
        }
    }

    /// Maps a log ratio of the estimator's orientation back to `log(Z1/Z2)`.
    pub fn orient(&self, log_r: f64) -> f64 {
        if self.swap {
            -log_r
        } else {
            log_r
        }
    }

    /// Mixture-of-rings benchmark at dimension `dim` with the tuned training
    /// settings: interleaved masks, `η_φ = 1e-2`, full batch.
    pub fn rings_benchmark(dim: usize, n: usize) -> Self {
        RunConfig {
            seed: 0,
            n1: n,
            n2: n,
            split: 0.5,
            restarts: 1,
            swap: false,
            output: None,
            q1: TargetSpec::rings_preset(dim, "first"),
            q2: TargetSpec::rings_preset(dim, "second"),
            flow: FlowSpec { layers: 4, hidden: vec![64, 64], mask: "interleaved".into() },
            train: TrainSpec { eta_phi: 1e-2, ..TrainSpec::default() },
            bench: BenchSpec::default(),
        }
    }

    /// Gaussian pair `N(0, 1)` vs `N(0, 2)`, each padded to two dimensions.
    pub fn gaussian_pair(n: usize) -> Self {
        let g = |var: f64| TargetSpec::Gaussian { mean: vec![0.0], var: vec![var], augment: 1 };
        RunConfig {
            seed: 0,
            n1: n,
            n2: n,
            split: 0.5,
            restarts: 1,
            swap: false,
            output: None,
            q1: g(1.0),
            q2: g(2.0),
            flow: FlowSpec { layers: 2, hidden: vec![8], mask: "halves".into() },
            train: TrainSpec::default(),
            bench: BenchSpec::default(),
        }
    }
}
