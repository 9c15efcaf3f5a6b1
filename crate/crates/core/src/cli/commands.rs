//! The five command verbs. Each takes parsed configs and paths, writes its
//! output file atomically and returns the in-memory result; progress and
//! warnings go to the supplied log.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::formats::{
    load_checkpoint, read_dataset, read_json, save_checkpoint, write_json, ClipRecord, DatasetFile,
    ReportFile, ScoreFile,
};
use super::synth::{self, Regime, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{self, PredictedClip};
use crate::model::{self, gradcheck, AutoEncoderParams, SparsityConfig};
use crate::pipeline::{self, DEFAULT_CHUNK_SIZE};
use crate::segment::SegmentConfig;
use crate::stack::{self, EpochReport, StackConfig, StackedModel};

fn log_line(log: &mut dyn Write, line: std::fmt::Arguments) {
    // Logging is best effort; a closed pipe must not fail the command.
    let _ = writeln!(log, "{line}");
}

pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<DatasetFile> {
    let ds = synth::generate(cfg)?;
    write_json(out, &ds)?;
    Ok(ds)
}

/// Builds the offline training set: still sequences from every frame, then
/// an optional seeded subsample of `max_sequences` of them.
pub fn training_sequences(
    ds: &DatasetFile,
    seed: u64,
    max_sequences: Option<usize>,
) -> Result<Vec<crate::Sequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = pipeline::still_sequences_from_frames(
        &ds.trajectories,
        ds.metadata.total_frames,
        &mut rng,
    )?;
    Ok(match max_sequences {
        Some(k) if k < all.len() => {
            let mut picked = index::sample(&mut rng, all.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    })
}

/// Output of [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StackedModel,
    pub history: Vec<EpochReport>,
    /// Mean layer-0 reconstruction loss of the untrained stack.
    pub initial_loss: f64,
}

pub fn cmd_train(
    dataset: &Path,
    cfg: &StackConfig,
    max_sequences: Option<usize>,
    out: &Path,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = read_dataset(dataset)?;
    if ds.metadata.feature_dim != cfg.input_dim {
        return Err(Error::InvalidConfig(format!(
            "input_dim is {} but the dataset's feature_dim is {}",
            cfg.input_dim, ds.metadata.feature_dim
        )));
    }
    let data = training_sequences(&ds, cfg.seed, max_sequences)?;
    let init = stack::init_stack(cfg)?;
    let initial_loss = stack::layer_loss(&init.layers[0], &data)?;
    log_line(
        log,
        format_args!(
            "{} still sequences, initial layer 0 loss {initial_loss:.6}",
            data.len()
        ),
    );

    let mut history = Vec::new();
    let model = stack::greedy_train_with(&init, &data, |r| {
        log_line(
            log,
            format_args!("layer {} epoch {} loss {:.6}", r.layer, r.epoch + 1, r.loss),
        );
        history.push(r);
    })?;
    save_checkpoint(out, &model)?;
    Ok(TrainOutcome {
        model,
        history,
        initial_loss,
    })
}

/// Settings of the online summarization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    pub chunk_size: usize,
    pub segment: SegmentConfig,
    /// Overrides the checkpoint's online learning rate.
    pub lr_online: Option<f64>,
    /// Overrides the checkpoint's number of online passes per chunk.
    pub online_update_epochs: Option<usize>,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            segment: SegmentConfig::default(),
            lr_online: None,
            online_update_epochs: None,
        }
    }
}

/// Scores a loaded dataset with a loaded model; see [`cmd_summarize`].
pub fn summarize_dataset(
    ds: &DatasetFile,
    model: &StackedModel,
    cfg: &SummarizeConfig,
) -> Result<ScoreFile> {
    let mut model = model.clone();
    if let Some(lr) = cfg.lr_online {
        model.config.lr_online = lr;
    }
    if let Some(n) = cfg.online_update_epochs {
        model.config.online_update_epochs = n;
    }
    model.config.validate()?;
    if ds.metadata.feature_dim != model.config.input_dim {
        return Err(Error::InvalidConfig(format!(
            "checkpoint input_dim is {} but the dataset's feature_dim is {}",
            model.config.input_dim, ds.metadata.feature_dim
        )));
    }
    let total_frames = ds.metadata.total_frames;
    let clips = pipeline::extract_clips(&ds.trajectories, &cfg.segment)?;
    if clips.is_empty() {
        return Ok(ScoreFile {
            total_frames,
            clips: Vec::new(),
            frame_scores: vec![0.0; total_frames],
        });
    }
    let summary = pipeline::summarize_stream(&model, &clips, total_frames, cfg.chunk_size)?;
    let records: Vec<ClipRecord> = summary
        .scores
        .iter()
        .map(|s| {
            let c = &clips[s.clip];
            ClipRecord {
                object_id: c.object_id,
                frames: c.frames,
                b_start: c.b_start,
                b_end: c.b_end,
                raw_error: s.raw_error,
                score: s.score,
                chunk: summary.chunk_of[s.clip],
            }
        })
        .collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let ranges: Vec<_> = records.iter().map(|r| r.frames).collect();
    Ok(ScoreFile {
        total_frames,
        frame_scores: pipeline::frame_level_scores(&scores, &ranges, total_frames),
        clips: records,
    })
}

pub fn cmd_summarize(
    dataset: &Path,
    checkpoint: &Path,
    cfg: &SummarizeConfig,
    out: &Path,
) -> Result<ScoreFile> {
    let ds = read_dataset(dataset)?;
    let model = load_checkpoint(checkpoint)?;
    let scores = summarize_dataset(&ds, &model, cfg)?;
    write_json(out, &scores)?;
    Ok(scores)
}

/// `(score, clip belongs to an anomalous regime)` for every scored clip
/// whose object carries a regime label.
pub fn regime_labels(scores: &ScoreFile, ds: &DatasetFile) -> Vec<(f64, bool)> {
    let regime: HashMap<u64, Regime> = ds
        .trajectories
        .iter()
        .filter_map(|t| Some((t.object_id, Regime::from_name(t.regime.as_deref()?)?)))
        .collect();
    scores
        .clips
        .iter()
        .filter_map(|c| Some((c.score, regime.get(&c.object_id)?.is_anomalous())))
        .collect()
}

/// Evaluates loaded scores against a loaded dataset; see [`cmd_eval`].
pub fn evaluate_scores(
    scores: &ScoreFile,
    ds: &DatasetFile,
    phi: f64,
    tau: f64,
) -> Result<ReportFile> {
    if scores.total_frames != ds.metadata.total_frames {
        return Err(Error::InvalidConfig(format!(
            "score file covers {} frames but the dataset has {}",
            scores.total_frames, ds.metadata.total_frames
        )));
    }
    for c in &scores.clips {
        if c.frames.end >= ds.metadata.total_frames {
            return Err(Error::OutOfRange(format!(
                "scored clip of object {} ends at frame {} beyond the dataset",
                c.object_id, c.frames.end
            )));
        }
    }
    let preds: Vec<PredictedClip> = scores
        .clips
        .iter()
        .map(|c| PredictedClip {
            frames: c.frames,
            b_start: c.b_start,
            b_end: c.b_end,
            score: c.score,
        })
        .collect();
    let clip_level = eval::evaluate(&preds, &ds.ground_truth, phi, tau);
    let labels = eval::frame_labels(&ds.ground_truth, ds.metadata.total_frames);
    let frame_level = Some(eval::frame_metrics(&scores.frame_scores, &labels, tau)?);
    let regime_auc = eval::roc_auc(&regime_labels(scores, ds)).ok();
    Ok(ReportFile {
        clip_level,
        frame_level,
        regime_auc,
    })
}

pub fn cmd_eval(
    scores: &Path,
    dataset: &Path,
    out: Option<&Path>,
    log: &mut dyn Write,
) -> Result<ReportFile> {
    let score_file: ScoreFile = read_json(scores)?;
    let ds = read_dataset(dataset)?;
    let report = evaluate_scores(&score_file, &ds, eval::DEFAULT_PHI, eval::DEFAULT_TAU)?;
    if report.clip_level.ap.is_none() {
        log_line(
            log,
            format_args!("warning: no prediction matched a ground-truth clip, AP is null"),
        );
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Sweep of random gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub instances: usize,
    /// Upper bounds; each instance draws its sizes from `1..=max`.
    pub max_input_dim: usize,
    pub max_hidden_dim: usize,
    pub max_seq_len: usize,
    pub batch: usize,
    pub betas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 20,
            max_input_dim: 16,
            max_hidden_dim: 8,
            max_seq_len: 4,
            batch: 3,
            betas: vec![0.0, 0.1],
            tolerance: 1e-4,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.max_input_dim == 0
            || self.max_input_dim > 16
            || self.max_hidden_dim == 0
            || self.max_hidden_dim > 16
        {
            return bad("gradcheck dims must lie in 1..=16".into());
        }
        if self.max_seq_len == 0 || self.max_seq_len > 4 {
            return bad("gradcheck max_seq_len must lie in 1..=4".into());
        }
        if self.instances == 0 || self.batch == 0 || self.betas.is_empty() {
            return bad("gradcheck needs instances, batch and betas".into());
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub seed: u64,
    pub beta: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub passed: bool,
    pub max_rel_err: f64,
    pub cases: Vec<GradcheckCase>,
}

/// Runs the sweep. `corrupt` perturbs one analytic gradient entry of every
/// case by that amount, to prove the harness can fail.
pub fn run_gradcheck(cfg: &GradcheckConfig, corrupt: Option<f64>) -> Result<GradcheckReport> {
    cfg.validate()?;
    let mut sizes = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::new();
    for k in 0..cfg.instances {
        let seed = cfg.seed.wrapping_add(k as u64);
        let input_dim = sizes.random_range(1..=cfg.max_input_dim);
        let hidden_dim = sizes.random_range(1..=cfg.max_hidden_dim);
        let seq_len = sizes.random_range(1..=cfg.max_seq_len);
        let (params, batch) =
            gradcheck::random_instance(seed, input_dim, hidden_dim, seq_len, cfg.batch);
        for &beta in &cfg.betas {
            let sparsity = SparsityConfig {
                beta,
                ..Default::default()
            };
            let mut analytic = model::backward(&params, &batch, &sparsity)?;
            if let Some(delta) = corrupt {
                corrupt_first(&mut analytic.0, delta);
            }
            let stencil = gradcheck::Stencil::FourPoint;
            let numeric = gradcheck::numeric_gradient(
                &params,
                &batch,
                &sparsity,
                stencil,
                stencil.default_step(),
            )?;
            let r = gradcheck::compare(&analytic, &numeric);
            cases.push(GradcheckCase {
                seed,
                beta,
                input_dim,
                hidden_dim,
                seq_len,
                max_rel_err: r.max_rel_err,
                worst_tensor: r.worst_tensor,
                passed: r.max_rel_err <= cfg.tolerance,
            });
        }
    }
    Ok(GradcheckReport {
        passed: cases.iter().all(|c| c.passed),
        max_rel_err: cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max),
        cases,
    })
}

fn corrupt_first(grads: &mut AutoEncoderParams, delta: f64) {
    grads.encoder.w_ix[[0, 0]] += delta;
}

pub fn cmd_gradcheck(
    cfg: &GradcheckConfig,
    out: Option<&Path>,
    log: &mut dyn Write,
) -> Result<GradcheckReport> {
    let report = run_gradcheck(cfg, None)?;
    for c in &report.cases {
        log_line(
            log,
            format_args!(
                "{} seed {} beta {} dims ({}, {}) T {}: max rel err {:.3e} at {}",
                if c.passed { "pass" } else { "FAIL" },
                c.seed,
                c.beta,
                c.input_dim,
                c.hidden_dim,
                c.seq_len,
                c.max_rel_err,
                c.worst_tensor
            ),
        );
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_sweep_passes_and_hook_fails() {
        let cfg = GradcheckConfig {
            instances: 3,
            ..Default::default()
        };
        let ok = run_gradcheck(&cfg, None).unwrap();
        assert!(ok.passed, "{ok:?}");
        assert_eq!(ok.cases.len(), 6);
        let bad = run_gradcheck(&cfg, Some(1e-2)).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn gradcheck_rejects_large_dims() {
        let cfg = GradcheckConfig {
            max_seq_len: 5,
            ..Default::default()
        };
        assert!(run_gradcheck(&cfg, None).is_err());
    }
}
