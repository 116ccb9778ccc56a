use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synthgen::CovariateSchema;

/// Training hyper-parameters. The text form is one `key=value` per line with
/// the field names below; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Fraction of A-samples in each minibatch.
    pub modality_mix: f64,
    /// Per-covariate loss weights. Empty means weight 1 on every covariate;
    /// otherwise covariates not listed get weight 0.
    pub lambda: Vec<(String, f64)>,
    pub lr_initial: f64,
    /// `(iteration, divisor)` pairs, sorted by iteration.
    pub lr_drops: Vec<(usize, f64)>,
    pub total_iters: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Iterations between history rows; 0 disables history.
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            modality_mix: 0.5,
            lambda: Vec::new(),
            lr_initial: 0.1,
            lr_drops: vec![(16_000, 10.0), (24_000, 10.0)],
            total_iters: 28_000,
            momentum: 0.9,
            weight_decay: 0.001,
            seed: 0,
            val_interval: 200,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for {key}")))
}

fn parse_pairs<A: FromStr, B: FromStr>(key: &str, value: &str) -> Result<Vec<(A, B)>> {
    let value = value.trim();
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("{key}: expected `x:y`, got `{item}`")))?;
            Ok((parse_num(key, a)?, parse_num(key, b)?))
        })
        .collect()
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "batch_size",
        "modality_mix",
        "lambda",
        "lr_initial",
        "lr_drops",
        "total_iters",
        "momentum",
        "weight_decay",
        "seed",
        "val_interval",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "modality_mix" => self.modality_mix = parse_num(key, value)?,
            "lambda" => self.lambda = parse_pairs(key, value)?,
            "lr_initial" => self.lr_initial = parse_num(key, value)?,
            "lr_drops" => self.lr_drops = parse_pairs(key, value)?,
            "total_iters" => self.total_iters = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "val_interval" => self.val_interval = parse_num(key, value)?,
            other => return Err(Error::invalid(format!("unknown training key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got `{line}`")))?;
            cfg.set(k, v)
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.modality_mix) {
            return Err(Error::invalid("modality_mix must lie in [0, 1]"));
        }
        if !self.lr_drops.windows(2).all(|w| w[0].0 <= w[1].0) {
            return Err(Error::invalid("lr_drops must be sorted by iteration"));
        }
        if self
            .lr_drops
            .iter()
            .any(|&(_, d)| !(d.is_finite() && d > 0.0))
        {
            return Err(Error::invalid("lr_drops divisors must be positive"));
        }
        for (name, v) in [
            ("lr_initial", self.lr_initial),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if self.lambda.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::invalid("lambda weights must be finite"));
        }
        Ok(())
    }

    /// Learning rate in effect at `iter` (0-based step count).
    pub fn lr(&self, iter: usize) -> f64 {
        self.lr_drops
            .iter()
            .filter(|&&(at, _)| at <= iter)
            .fold(self.lr_initial, |lr, &(_, d)| lr / d)
    }

    /// Lambda weights in schema order.
    pub fn lambda_for(&self, schema: &CovariateSchema) -> Result<Vec<f64>> {
        if self.lambda.is_empty() {
            return Ok(vec![1.0; schema.len()]);
        }
        let mut out = vec![0.0; schema.len()];
        for (name, w) in &self.lambda {
            let i = schema
                .index_of(name)
                .ok_or_else(|| Error::MissingCovariate(name.clone()))?;
            out[i] = *w;
        }
        Ok(out)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pairs = |v: Vec<String>| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.join(",")
            }
        };
        writeln!(f, "batch_size={}", self.batch_size)?;
        writeln!(f, "modality_mix={}", self.modality_mix)?;
        writeln!(
            f,
            "lambda={}",
            pairs(
                self.lambda
                    .iter()
                    .map(|(n, w)| format!("{n}:{w}"))
                    .collect()
            )
        )?;
        writeln!(f, "lr_initial={}", self.lr_initial)?;
        writeln!(
            f,
            "lr_drops={}",
            pairs(
                self.lr_drops
                    .iter()
                    .map(|(i, d)| format!("{i}:{d}"))
                    .collect()
            )
        )?;
        writeln!(f, "total_iters={}", self.total_iters)?;
        writeln!(f, "momentum={}", self.momentum)?;
        writeln!(f, "weight_decay={}", self.weight_decay)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "val_interval={}", self.val_interval)
    }
}
