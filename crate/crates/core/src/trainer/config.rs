use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HakeError, Result};
use crate::model::{Parts, Variant};

/// Which side of a positive triple gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NegMode {
    Head,
    Tail,
    /// Alternate tail/head by global sample index.
    Both,
}

impl FromStr for NegMode {
    type Err = HakeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(NegMode::Head),
            "tail" => Ok(NegMode::Tail),
            "both" | "both-alternating" => Ok(NegMode::Both),
            other => Err(HakeError::Config(format!(
                "neg_mode must be head, tail or both, got `{other}`"
            ))),
        }
    }
}

impl NegMode {
    pub fn name(&self) -> &'static str {
        match self {
            NegMode::Head => "head",
            NegMode::Tail => "tail",
            NegMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Width of each part (modulus and phase).
    pub k: usize,
    pub gamma: f64,
    /// Adversarial sampling temperature.
    pub alpha: f64,
    pub n_neg: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub variant: Variant,
    pub lambda_mod: f64,
    pub lambda_phase: f64,
    pub trainable_lambda: bool,
    pub neg_mode: NegMode,
    pub self_adversarial: bool,
    pub log_every: usize,
    /// 0 disables intermediate checkpoints; the final one is always written.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 32,
            gamma: 4.0,
            alpha: 1.0,
            n_neg: 16,
            lr: 1e-3,
            batch_size: 64,
            max_steps: 5_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            variant: Variant::HAKE,
            lambda_mod: 1.0,
            // with λ2·k a little above γ the modulus part stays in use; a
            // larger phase weight lets it separate negatives alone and the
            // entity moduli collapse toward 0
            lambda_phase: 0.2,
            trainable_lambda: false,
            neg_mode: NegMode::Both,
            self_adversarial: true,
            log_every: 100,
            checkpoint_every: 1_000,
        }
    }
}

pub const CONFIG_KEYS: [&str; 20] = [
    "k",
    "gamma",
    "alpha",
    "n_neg",
    "lr",
    "batch_size",
    "max_steps",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "variant",
    "bias",
    "lambda_mod",
    "lambda_phase",
    "trainable_lambda",
    "neg_mode",
    "self_adversarial",
    "log_every",
    "checkpoint_every",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HakeError::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(HakeError::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "k" => self.k = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "n_neg" => self.n_neg = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant.parts = value.parse::<Parts>()?,
            "bias" => self.variant.bias = parse_bool(key, value)?,
            "lambda_mod" => self.lambda_mod = parse(key, value)?,
            "lambda_phase" => self.lambda_phase = parse(key, value)?,
            "trainable_lambda" => self.trainable_lambda = parse_bool(key, value)?,
            "neg_mode" => self.neg_mode = value.parse()?,
            "self_adversarial" => self.self_adversarial = parse_bool(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            other => return Err(HakeError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` document on top of `self`. Blank lines
    /// and `#` comments are ignored; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HakeError::Config(format!("line {}: expected key=value", idx + 1))
            })?;
            self.set(key, value)
                .map_err(|e| HakeError::Config(format!("line {}: {}", idx + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HakeError::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text)
            .map_err(|e| HakeError::Config(format!("{}: {}", path.display(), strip(e))))?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = |x: bool| if x { "true" } else { "false" };
        let _ = write!(
            s,
            "k={}\ngamma={}\nalpha={}\nn_neg={}\nlr={}\nbatch_size={}\nmax_steps={}\n\
             adam_beta1={}\nadam_beta2={}\nadam_eps={}\nseed={}\nvariant={}\nbias={}\n\
             lambda_mod={}\nlambda_phase={}\ntrainable_lambda={}\nneg_mode={}\n\
             self_adversarial={}\nlog_every={}\ncheckpoint_every={}\n",
            self.k,
            self.gamma,
            self.alpha,
            self.n_neg,
            self.lr,
            self.batch_size,
            self.max_steps,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.seed,
            self.variant.parts_name(),
            b(self.variant.bias),
            self.lambda_mod,
            self.lambda_phase,
            b(self.trainable_lambda),
            self.neg_mode.name(),
            b(self.self_adversarial),
            self.log_every,
            self.checkpoint_every,
        );
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HakeError::Config(msg));
        if self.k == 0 {
            return fail("k must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.n_neg == 0 || self.batch_size == 0 || self.max_steps == 0 {
            return fail("n_neg, batch_size and max_steps must be >= 1".into());
        }
        // lr = 0 is allowed: a frozen run is a useful baseline.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be >= 0, got {}", self.lr));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return fail(format!("{name} must be in (0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be > 0".into());
        }
        for (name, v) in [("lambda_mod", self.lambda_mod), ("lambda_phase", self.lambda_phase)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.log_every == 0 {
            return fail("log_every must be >= 1".into());
        }
        Ok(())
    }
}

fn strip(e: HakeError) -> String {
    match e {
        HakeError::Config(m) => m,
        other => other.to_string(),
    }
}
