use crate::ModelError;
use serde::{Deserialize, Serialize};

/// Generator-head hidden width is `n_embd / GEO_HIDDEN_RATIO`.
pub const GEO_HIDDEN_RATIO: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gpt,
    Ddl,
    Mhc,
    Jpmhc,
    Edelta,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Gpt,
        ModelKind::Ddl,
        ModelKind::Mhc,
        ModelKind::Jpmhc,
        ModelKind::Edelta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gpt => "gpt",
            ModelKind::Ddl => "ddl",
            ModelKind::Mhc => "mhc",
            ModelKind::Jpmhc => "jpmhc",
            ModelKind::Edelta => "edelta",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Architecture plus task geometry. Kind-specific fields are ignored by the
/// other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_layers: usize,
    pub n_embd: usize,
    pub n_heads: usize,
    pub n_streams: Option<usize>,
    pub task_dim: usize,
    pub seq_len: usize,
    pub init_gate_bias: f64,
    pub lambda_gate: f64,
    pub householder_beta: f64,
    pub sinkhorn_iters: usize,
    pub retraction_alpha: f64,
    pub retraction_steps: usize,
}

impl ModelConfig {
    /// Matched-capacity configuration for one architecture (the benchmark
    /// table row), parameterized by the task geometry.
    pub fn matched(kind: ModelKind, task_dim: usize, seq_len: usize) -> Self {
        let (n_layers, n_embd, n_streams) = match kind {
            ModelKind::Gpt => (9, 128, None),
            ModelKind::Ddl => (8, 128, None),
            ModelKind::Mhc => (9, 128, Some(4)),
            ModelKind::Jpmhc => (7, 512, Some(4)),
            ModelKind::Edelta => (6, 128, Some(4)),
        };
        Self {
            kind,
            n_layers,
            n_embd,
            n_heads: 4,
            n_streams,
            task_dim,
            seq_len,
            init_gate_bias: 0.0,
            lambda_gate: 0.1,
            householder_beta: 2.0,
            sinkhorn_iters: 20,
            retraction_alpha: 0.1,
            retraction_steps: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_layers == 0 {
            return Err(ModelError::InvalidConfig("n_layers must be >= 1".into()));
        }
        if self.task_dim == 0 || self.seq_len == 0 || self.n_embd == 0 || self.n_heads == 0 {
            return Err(ModelError::InvalidConfig(
                "task_dim, seq_len, n_embd, n_heads must be positive".into(),
            ));
        }
        let needs_streams = matches!(
            self.kind,
            ModelKind::Mhc | ModelKind::Jpmhc | ModelKind::Edelta
        );
        if needs_streams && self.n_streams.is_none() {
            return Err(ModelError::InvalidConfig(format!(
                "{} requires n_streams",
                self.kind
            )));
        }
        if let Some(n) = self.n_streams {
            if n < 2 {
                return Err(ModelError::InvalidConfig("n_streams must be >= 2".into()));
            }
            if needs_streams && self.n_embd % n != 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "n_embd {} not divisible by n_streams {n}",
                    self.n_embd
                )));
            }
        }
        // The attention width is per-stream for jpmhc, full otherwise.
        let attn_width = self.f_width();
        if attn_width % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "attention width {attn_width} not divisible by n_heads {}",
                self.n_heads
            )));
        }
        if !(self.retraction_alpha > 0.0) || self.retraction_steps == 0 {
            return Err(ModelError::InvalidConfig(
                "retraction needs alpha > 0 and steps >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Width the attention/MLP path runs at: the aggregated stream width for
    /// jpmhc, the full embedding otherwise.
    pub fn f_width(&self) -> usize {
        match self.kind {
            ModelKind::Jpmhc => self.n_embd / self.n_streams.unwrap_or(1),
            _ => self.n_embd,
        }
    }

    pub fn geo_hidden(&self) -> usize {
        (self.n_embd / GEO_HIDDEN_RATIO).max(1)
    }

    /// Flat `key = value` text form (one key per line, `#` comments allowed
    /// on parse). Field names match the struct exactly.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kind = {}\n", self.kind));
        s.push_str(&format!("n_layers = {}\n", self.n_layers));
        s.push_str(&format!("n_embd = {}\n", self.n_embd));
        s.push_str(&format!("n_heads = {}\n", self.n_heads));
        if let Some(n) = self.n_streams {
            s.push_str(&format!("n_streams = {n}\n"));
        }
        s.push_str(&format!("task_dim = {}\n", self.task_dim));
        s.push_str(&format!("seq_len = {}\n", self.seq_len));
        s.push_str(&format!("init_gate_bias = {}\n", self.init_gate_bias));
        s.push_str(&format!("lambda_gate = {}\n", self.lambda_gate));
        s.push_str(&format!("householder_beta = {}\n", self.householder_beta));
        s.push_str(&format!("sinkhorn_iters = {}\n", self.sinkhorn_iters));
        s.push_str(&format!("retraction_alpha = {}\n", self.retraction_alpha));
        s.push_str(&format!("retraction_steps = {}\n", self.retraction_steps));
        s
    }

    /// Parse the flat key-value form. Unknown keys are rejected; missing
    /// keys fall back to the matched defaults for the parsed kind.
    pub fn from_kv_str(text: &str) -> Result<Self, ModelError> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ModelError::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let find = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let kind_s = find("kind")
            .ok_or_else(|| ModelError::InvalidConfig("missing kind".into()))?;
        let kind = ModelKind::parse(&kind_s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown kind {kind_s}")))?;
        let task_dim = parse_num(&find("task_dim").unwrap_or_else(|| "64".into()))?;
        let seq_len = parse_num(&find("seq_len").unwrap_or_else(|| "127".into()))?;
        let mut cfg = ModelConfig::matched(kind, task_dim, seq_len);
        for (k, v) in &pairs {
            match k.as_str() {
                "kind" | "task_dim" | "seq_len" => {}
                "n_layers" => cfg.n_layers = parse_num(v)?,
                "n_embd" => cfg.n_embd = parse_num(v)?,
                "n_heads" => cfg.n_heads = parse_num(v)?,
                "n_streams" => cfg.n_streams = Some(parse_num(v)?),
                "init_gate_bias" => cfg.init_gate_bias = parse_f64(v)?,
                "lambda_gate" => cfg.lambda_gate = parse_f64(v)?,
                "householder_beta" => cfg.householder_beta = parse_f64(v)?,
                "sinkhorn_iters" => cfg.sinkhorn_iters = parse_num(v)?,
                "retraction_alpha" => cfg.retraction_alpha = parse_f64(v)?,
                "retraction_steps" => cfg.retraction_steps = parse_num(v)?,
                other => {
                    return Err(ModelError::InvalidConfig(format!("unknown key {other}")))
                }
            }
        }
        Ok(cfg)
    }
}

fn parse_num(v: &str) -> Result<usize, ModelError> {
    v.parse()
        .map_err(|_| ModelError::InvalidConfig(format!("bad integer {v}")))
}

fn parse_f64(v: &str) -> Result<f64, ModelError> {
    v.parse()
        .map_err(|_| ModelError::InvalidConfig(format!("bad float {v}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig::matched(ModelKind::Edelta, 64, 127);
        let parsed = ModelConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn indivisible_embedding_is_invalid() {
        let mut cfg = ModelConfig::matched(ModelKind::Gpt, 16, 32);
        cfg.n_embd = 130;
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn stream_kinds_need_streams() {
        let mut cfg = ModelConfig::matched(ModelKind::Edelta, 16, 32);
        cfg.n_streams = None;
        assert!(cfg.validate().is_err());
    }
}
