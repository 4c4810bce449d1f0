//! Frame-level ROC curves and AUC.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::ingest::LabelSeries;
use crate::scoring::VideoScores;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("video {video}: {scores} scores but {labels} labels")]
    VideoLength {
        video: String,
        scores: usize,
        labels: usize,
    },
    #[error("AUC undefined: labels contain only one class")]
    SingleClass,
    #[error("no labels for video {0}")]
    MissingLabels(String),
    #[error("no scores for video {0}")]
    MissingScores(String),
    #[error("label value {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called anomalous. `+inf` for the origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve swept over every distinct score, AUC by the trapezoid rule.
///
/// Tied scores move the curve diagonally in one step, which is the same as
/// giving tied positive/negative pairs half credit.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::BadLabel(bad));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // twice the area, in units of one positive-negative pair
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        });
    }
    let auc = area2 as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(RocCurve { points, auc })
}

/// Concatenates per-video scores and labels in video-id order.
pub fn concat_videos(scores: &[VideoScores], labels: &[LabelSeries]) -> Result<(Vec<f64>, Vec<u8>), EvalError> {
    let by_id: BTreeMap<&str, &LabelSeries> = labels.iter().map(|l| (l.video_id.as_str(), l)).collect();
    let mut sorted: Vec<&VideoScores> = scores.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    for v in sorted {
        let l = by_id
            .get(v.video_id.as_str())
            .ok_or_else(|| EvalError::MissingLabels(v.video_id.clone()))?;
        if l.labels.len() != v.scores.len() {
            return Err(EvalError::VideoLength {
                video: v.video_id.clone(),
                scores: v.scores.len(),
                labels: l.labels.len(),
            });
        }
        all_scores.extend_from_slice(&v.scores);
        all_labels.extend_from_slice(&l.labels);
    }
    Ok((all_scores, all_labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: RocCurve,
    /// `None` when the video's labels contain a single class.
    pub per_video: Vec<(String, Option<f64>)>,
    pub frames: usize,
    pub anomalous_frames: usize,
}

pub fn evaluate(scores: &[VideoScores], labels: &[LabelSeries]) -> Result<EvalReport, EvalError> {
    let score_ids: Vec<&str> = scores.iter().map(|s| s.video_id.as_str()).collect();
    if let Some(l) = labels.iter().find(|l| !score_ids.contains(&l.video_id.as_str())) {
        return Err(EvalError::MissingScores(l.video_id.clone()));
    }
    let (all_scores, all_labels) = concat_videos(scores, labels)?;
    let dataset = roc_auc(&all_scores, &all_labels)?;
    let by_id: BTreeMap<&str, &LabelSeries> = labels.iter().map(|l| (l.video_id.as_str(), l)).collect();
    let mut per_video: Vec<(String, Option<f64>)> = scores
        .iter()
        .map(|v| {
            let auc = roc_auc(&v.scores, &by_id[v.video_id.as_str()].labels)
                .ok()
                .map(|c| c.auc);
            (v.video_id.clone(), auc)
        })
        .collect();
    per_video.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(EvalReport {
        dataset,
        per_video,
        frames: all_labels.len(),
        anomalous_frames: all_labels.iter().filter(|&&l| l == 1).count(),
    })
}

impl EvalReport {
    /// Writes the text report: `#eval v1`, `#`-prefixed header lines, the
    /// summary, per-video AUCs, then `fpr,tpr,threshold` rows.
    pub fn write<W: Write>(&self, out: &mut W, header: &[String]) -> std::io::Result<()> {
        writeln!(out, "#eval v1")?;
        for h in header {
            writeln!(out, "# {h}")?;
        }
        writeln!(out, "dataset_auc,{}", self.dataset.auc)?;
        writeln!(out, "frames,{}", self.frames)?;
        writeln!(out, "anomalous_frames,{}", self.anomalous_frames)?;
        for (vid, auc) in &self.per_video {
            match auc {
                Some(a) => writeln!(out, "video_auc,{vid},{a}")?,
                None => writeln!(out, "video_auc,{vid},nan")?,
            }
        }
        writeln!(out, "#curve")?;
        writeln!(out, "fpr,tpr,threshold")?;
        for p in &self.dataset.points {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}
