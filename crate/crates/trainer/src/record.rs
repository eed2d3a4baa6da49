//! Run and diagnostic records, serialized as line-delimited JSON: one
//! object per logged step, then one summary object. Wall-clock time lives
//! only in memory (callers persist it to a separate timing file) so record
//! files are byte-identical across reruns with the same seed.

use crate::TrainerError;
use models::ModelConfig;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One logged optimization step.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    /// Task MSE of the step's training batch.
    pub train_loss: f64,
    /// Full validation MSE at this step.
    pub val_loss: f64,
    pub lr: f64,
    /// Pre-clip global gradient norm.
    pub grad_norm: f64,
    /// Batch-mean gate value per site (empty for gateless kinds).
    pub gammas: Vec<f64>,
}

/// Full trace of one training run plus final metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ModelConfig,
    pub seed: u64,
    pub dataset: String,
    pub steps: Vec<StepRecord>,
    pub final_val_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_profile: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine_alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Measured but not serialized; see the module docs.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Trace of one low-dimensional operator diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub kind: String,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gamma: Option<f64>,
    pub final_alignment: f64,
    /// (iter, validation alignment) at each log point.
    pub alignment_trajectory: Vec<(usize, f64)>,
    pub converged: bool,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Step(StepRecord),
    Summary(SummaryLine),
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    config: ModelConfig,
    seed: u64,
    dataset: String,
    final_val_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_profile: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cosine_alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
}

impl RunRecord {
    /// Write `records.jsonl`: step lines then the summary line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), TrainerError> {
        let mut buf = Vec::new();
        for step in &self.steps {
            serde_json::to_writer(&mut buf, &Line::Step(step.clone()))
                .map_err(|e| TrainerError::Serde(e.to_string()))?;
            buf.push(b'\n');
        }
        let summary = Line::Summary(SummaryLine {
            config: self.config.clone(),
            seed: self.seed,
            dataset: self.dataset.clone(),
            final_val_loss: self.final_val_loss,
            norm_deviation: self.norm_deviation,
            norm_profile: self.norm_profile.clone(),
            cosine_alignment: self.cosine_alignment,
            aborted: self.aborted.clone(),
        });
        serde_json::to_writer(&mut buf, &summary)
            .map_err(|e| TrainerError::Serde(e.to_string()))?;
        buf.push(b'\n');
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<RunRecord, TrainerError> {
        let file = std::fs::File::open(path)?;
        let mut steps = Vec::new();
        let mut summary: Option<SummaryLine> = None;
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)
                .map_err(|e| TrainerError::Serde(e.to_string()))?
            {
                Line::Step(s) => steps.push(s),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let s = summary.ok_or_else(|| TrainerError::Serde("missing summary line".into()))?;
        Ok(RunRecord {
            config: s.config,
            seed: s.seed,
            dataset: s.dataset,
            steps,
            final_val_loss: s.final_val_loss,
            norm_deviation: s.norm_deviation,
            norm_profile: s.norm_profile,
            cosine_alignment: s.cosine_alignment,
            aborted: s.aborted,
            wall_clock_secs: 0.0,
        })
    }
}

impl DiagnosticRecord {
    pub fn write_json(&self, path: &Path) -> Result<(), TrainerError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| TrainerError::Serde(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text.as_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<DiagnosticRecord, TrainerError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| TrainerError::Serde(e.to_string()))
    }
}

/// Sample mean and (n-1)-denominator standard deviation; identical inputs
/// give exactly zero spread, and a single value has no spread by definition.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
