//! Per-window prediction errors, per-pedestrian aggregation and frame-level
//! max pooling.
//!
//! For pedestrian `i` and window `p` whose first predicted frame is `t_c`:
//!
//! * summed:    `S[t_c] = Σ_{k<δ} m(t_c + k)_p`
//! * flattened: `F[t]   = mean_p m(t)_p` over the windows that predict `t`
//! * pooled:    `score[t] = max_i S_i[t]` (or `F_i[t]`), `0` when no
//!   pedestrian has an entry at `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{GeomError, Measure};
use crate::ingest::WindowPair;
use crate::predictor::Prediction;

pub const SCORE_MAGIC: &str = "#scores";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(
        "prediction for pedestrian {pred_ped} at t={pred_t} does not match window of pedestrian {win_ped} at t={win_t}"
    )]
    Misaligned {
        win_ped: u64,
        win_t: u64,
        pred_ped: u64,
        pred_t: u64,
    },
    #[error("prediction has {found} boxes, window expects {expected}")]
    Length { expected: usize, found: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("unknown aggregation `{0}` (expected summed or flattened)")]
    UnknownKind(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("score file: {0}")]
    Format(String),
}

/// How per-window errors become a per-pedestrian series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aggregation {
    Summed,
    Flattened,
}

impl Aggregation {
    pub const ALL: [Aggregation; 2] = [Aggregation::Summed, Aggregation::Flattened];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Summed => "summed",
            Aggregation::Flattened => "flattened",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summed" | "s" => Ok(Aggregation::Summed),
            "flattened" | "f" => Ok(Aggregation::Flattened),
            other => Err(ScoringError::UnknownKind(other.to_string())),
        }
    }
}

/// Divisor of the flattened mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlattenDivisor {
    /// Number of windows that predict the frame.
    #[default]
    Covering,
    /// Total number of windows of the pedestrian, whether or not they cover
    /// the frame.
    Total,
}

/// Per-step errors of one window, frames `t_c .. t_c + δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowErrors {
    pub pedestrian_id: u64,
    pub window_index: usize,
    pub steps: Vec<(u64, f64)>,
}

impl WindowErrors {
    pub fn first_frame(&self) -> Option<u64> {
        self.steps.first().map(|s| s.0)
    }
}

/// Applies `measure` at every predicted step of a window.
pub fn window_errors(
    window: &WindowPair,
    prediction: &Prediction,
    measure: Measure,
    window_index: usize,
) -> Result<WindowErrors, ScoringError> {
    if window.pedestrian_id != prediction.pedestrian_id || window.t_last_observed != prediction.t_last_observed {
        return Err(ScoringError::Misaligned {
            win_ped: window.pedestrian_id,
            win_t: window.t_last_observed,
            pred_ped: prediction.pedestrian_id,
            pred_t: prediction.t_last_observed,
        });
    }
    if prediction.boxes.len() != window.delta() {
        return Err(ScoringError::Length {
            expected: window.delta(),
            found: prediction.boxes.len(),
        });
    }
    let t_c = window.first_future_frame();
    let steps = window
        .future_gt
        .iter()
        .zip(&prediction.boxes)
        .enumerate()
        .map(|(k, (gt, pred))| Ok((t_c + k as u64, measure.eval(gt, pred)?)))
        .collect::<Result<_, ScoringError>>()?;
    Ok(WindowErrors {
        pedestrian_id: window.pedestrian_id,
        window_index,
        steps,
    })
}

/// Sparse per-frame scores of one pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub pedestrian_id: u64,
    pub kind: Aggregation,
    pub measure: Measure,
    pub entries: BTreeMap<u64, f64>,
}

/// `S[t_c]` = sum of the window's step errors, keyed by its first predicted
/// frame. Steps are added in frame order.
pub fn summed_series(pedestrian_id: u64, measure: Measure, errors: &[WindowErrors]) -> ScoreSeries {
    let mut entries = BTreeMap::new();
    for w in errors {
        if let Some(t_c) = w.first_frame() {
            let total = w.steps.iter().fold(0.0, |acc, (_, m)| acc + m);
            entries.insert(t_c, total);
        }
    }
    ScoreSeries {
        pedestrian_id,
        kind: Aggregation::Summed,
        measure,
        entries,
    }
}

/// `F[t]` = mean of the errors predicted for frame `t`. Windows are
/// accumulated in the order given.
pub fn flattened_series(
    pedestrian_id: u64,
    measure: Measure,
    errors: &[WindowErrors],
    divisor: FlattenDivisor,
) -> ScoreSeries {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for w in errors {
        for &(t, m) in &w.steps {
            let slot = acc.entry(t).or_insert((0.0, 0));
            slot.0 += m;
            slot.1 += 1;
        }
    }
    let entries = acc
        .into_iter()
        .map(|(t, (sum, count))| {
            let d = match divisor {
                FlattenDivisor::Covering => count,
                FlattenDivisor::Total => errors.len(),
            };
            (t, sum / d as f64)
        })
        .collect();
    ScoreSeries {
        pedestrian_id,
        kind: Aggregation::Flattened,
        measure,
        entries,
    }
}

pub fn aggregate(
    pedestrian_id: u64,
    kind: Aggregation,
    measure: Measure,
    errors: &[WindowErrors],
    divisor: FlattenDivisor,
) -> ScoreSeries {
    match kind {
        Aggregation::Summed => summed_series(pedestrian_id, measure, errors),
        Aggregation::Flattened => flattened_series(pedestrian_id, measure, errors, divisor),
    }
}

/// Dense frame scores of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScores {
    pub video_id: String,
    pub kind: Aggregation,
    pub measure: Measure,
    pub scores: Vec<f64>,
}

/// Max-pools pedestrian series over frames `0..frame_count`; uncovered frames
/// score 0. Entries at or beyond `frame_count` are ignored.
pub fn frame_pool(series: &[ScoreSeries], frame_count: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; frame_count];
    let mut seen = vec![false; frame_count];
    for s in series {
        for (&t, &v) in s.entries.range(..frame_count as u64) {
            let t = t as usize;
            if !seen[t] || v > out[t] {
                out[t] = v;
                seen[t] = true;
            }
        }
    }
    // a frame covered only by negative scores still floors at 0
    for v in &mut out {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Min-max rescaling to `[0, 1]`; a constant series maps to zeros.
pub fn normalize_per_video(scores: &[f64]) -> Vec<f64> {
    let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if scores.is_empty() || hi <= lo {
        return vec![0.0; scores.len()];
    }
    let range = hi - lo;
    scores.iter().map(|v| (v - lo) / range).collect()
}

/// Writes a score file. Extra `comments` lines are emitted as `#`-prefixed
/// lines after the header.
pub fn write_scores<W: Write>(out: &mut W, videos: &[VideoScores], comments: &[String]) -> Result<(), ScoringError> {
    let (kind, measure) = match videos.first() {
        Some(v) => (v.kind, v.measure),
        None => return Err(ScoringError::Format("no videos to write".into())),
    };
    if videos.iter().any(|v| v.kind != kind || v.measure != measure) {
        return Err(ScoringError::Format("videos mix aggregation kinds or measures".into()));
    }
    writeln!(out, "{SCORE_MAGIC} v1 kind={kind} measure={measure}")?;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    for v in videos {
        for (t, s) in v.scores.iter().enumerate() {
            writeln!(out, "{},{},{}", v.video_id, t, s)?;
        }
    }
    Ok(())
}

/// Reads a score file back into dense per-video series sorted by video id.
/// Every video must list frames `0..n` without gaps.
pub fn read_scores<R: Read>(source: R) -> Result<Vec<VideoScores>, ScoringError> {
    let mut lines = BufReader::new(source).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let mut parts = header.split_whitespace();
    if parts.next() != Some(SCORE_MAGIC) || parts.next() != Some("v1") {
        return Err(ScoringError::Format(format!("bad header `{header}`")));
    }
    let mut kind = None;
    let mut measure = None;
    for kv in parts {
        match kv.split_once('=') {
            Some(("kind", v)) => kind = Some(v.parse::<Aggregation>()?),
            Some(("measure", v)) => measure = Some(v.parse::<Measure>()?),
            _ => return Err(ScoringError::Format(format!("unknown header field `{kv}`"))),
        }
    }
    let (kind, measure) = kind
        .zip(measure)
        .ok_or_else(|| ScoringError::Format("header needs kind= and measure=".into()))?;

    let mut videos: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let bad = || ScoringError::Format(format!("line {}: malformed row `{text}`", idx + 2));
        let mut f = text.split(',');
        let (Some(vid), Some(frame), Some(score), None) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(bad());
        };
        let frame: u64 = frame.trim().parse().map_err(|_| bad())?;
        let score: f64 = score.trim().parse().map_err(|_| bad())?;
        if videos
            .entry(vid.trim().to_string())
            .or_default()
            .insert(frame, score)
            .is_some()
        {
            return Err(ScoringError::Format(format!(
                "line {}: frame {frame} repeated",
                idx + 2
            )));
        }
    }
    videos
        .into_iter()
        .map(|(video_id, frames)| {
            let n = frames.len() as u64;
            if frames.keys().next_back().is_some_and(|&last| last + 1 != n) {
                return Err(ScoringError::Format(format!("video {video_id} has gaps in its frames")));
            }
            Ok(VideoScores {
                video_id,
                kind,
                measure,
                scores: frames.into_values().collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoundingBox;
    use proptest::prelude::*;

    fn errs(window_index: usize, t_c: u64, values: &[f64]) -> WindowErrors {
        WindowErrors {
            pedestrian_id: 1,
            window_index,
            steps: values.iter().enumerate().map(|(k, &v)| (t_c + k as u64, v)).collect(),
        }
    }

    fn window(t_last: u64, gt: Vec<BoundingBox>) -> WindowPair {
        WindowPair {
            pedestrian_id: 3,
            t_last_observed: t_last,
            observed: vec![BoundingBox::new(0., 0., 1., 1.); 2],
            future_gt: gt,
        }
    }

    #[test]
    fn window_errors_examples() {
        let gt = vec![BoundingBox::new(0., 0., 2., 2.), BoundingBox::new(1., 1., 2., 2.)];
        let w = window(5, gt.clone());
        let exact = Prediction {
            pedestrian_id: 3,
            t_last_observed: 5,
            boxes: gt.clone(),
        };
        for m in Measure::ALL {
            let e = window_errors(&w, &exact, m, 0).unwrap();
            assert_eq!(e.steps, vec![(6, 0.0), (7, 0.0)]);
        }
        let off = Prediction {
            boxes: vec![gt[0].translate(3., 4.), BoundingBox::new(50., 50., 2., 2.)],
            ..exact.clone()
        };
        assert_eq!(window_errors(&w, &off, Measure::M3, 0).unwrap().steps[0].1, 5.0);
        let far = Prediction {
            boxes: vec![BoundingBox::new(90., 90., 2., 2.); 2],
            ..exact.clone()
        };
        let m1 = window_errors(&w, &far, Measure::M1, 0).unwrap();
        assert!(m1.steps.iter().all(|s| s.1 == 1.0));

        let wrong = Prediction {
            t_last_observed: 4,
            ..exact
        };
        assert!(matches!(
            window_errors(&w, &wrong, Measure::M1, 0),
            Err(ScoringError::Misaligned { .. })
        ));
    }

    #[test]
    fn summed_examples() {
        let s = summed_series(1, Measure::M3, &[errs(0, 3, &[0.1, 0.2, 0.3])]);
        assert_eq!(s.entries.len(), 1);
        assert!((s.entries[&3] - 0.6).abs() < 1e-15);
        let z = summed_series(1, Measure::M3, &[errs(0, 3, &[0.0; 3]), errs(1, 4, &[0.0; 3])]);
        assert_eq!(z.entries.values().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn flattened_examples() {
        let one = flattened_series(
            1,
            Measure::M1,
            &[errs(0, 3, &[0.5, 0.25, 0.125])],
            FlattenDivisor::Covering,
        );
        assert_eq!(
            one.entries.into_iter().collect::<Vec<_>>(),
            vec![(3, 0.5), (4, 0.25), (5, 0.125)]
        );
        let e = 0.3;
        let three = [errs(0, 3, &[e, e, e]), errs(1, 4, &[e, e, e]), errs(2, 5, &[e, e, e])];
        let f = flattened_series(1, Measure::M1, &three, FlattenDivisor::Covering);
        assert!((f.entries[&5] - e).abs() < 1e-15);
        // total divisor shrinks edge frames
        let ft = flattened_series(1, Measure::M1, &three, FlattenDivisor::Total);
        assert!((ft.entries[&3] - e / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pool_examples() {
        let mk = |ped, pairs: &[(u64, f64)]| ScoreSeries {
            pedestrian_id: ped,
            kind: Aggregation::Flattened,
            measure: Measure::M3,
            entries: pairs.iter().copied().collect(),
        };
        let a = mk(1, &[(1, 0.2), (2, 0.4)]);
        let b = mk(2, &[(1, 0.9)]);
        assert_eq!(frame_pool(&[a.clone(), b], 4), vec![0.0, 0.9, 0.4, 0.0]);
        assert_eq!(frame_pool(&[a], 3), vec![0.0, 0.2, 0.4]);
        assert_eq!(frame_pool(&[], 2), vec![0.0, 0.0]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_per_video(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_per_video(&[3.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_per_video(&[0.0, 0.25, 1.0]), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn score_file_round_trip() {
        let videos = vec![
            VideoScores {
                video_id: "a".into(),
                kind: Aggregation::Summed,
                measure: Measure::M2,
                scores: vec![0.0, 0.1 + 0.2, 1e-17],
            },
            VideoScores {
                video_id: "b".into(),
                kind: Aggregation::Summed,
                measure: Measure::M2,
                scores: vec![std::f64::consts::PI],
            },
        ];
        let mut buf = Vec::new();
        write_scores(&mut buf, &videos, &["tau=5".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#scores v1 kind=summed measure=m2\n# tau=5\na,0,0\n"));
        assert_eq!(read_scores(buf.as_slice()).unwrap(), videos);
    }

    #[test]
    fn score_file_rejects_gaps() {
        let src = "#scores v1 kind=summed measure=m1\nv,0,0.5\nv,2,0.1\n";
        assert!(read_scores(src.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn single_window_sum_is_delta_times_mean(values in proptest::collection::vec(0.0..10.0f64, 1..30)) {
            let w = [errs(0, 0, &values)];
            let s = summed_series(1, Measure::M3, &w).entries[&0];
            let f = flattened_series(1, Measure::M3, &w, FlattenDivisor::Covering);
            let mean = f.entries.values().sum::<f64>() / values.len() as f64;
            prop_assert!((s - values.len() as f64 * mean).abs() <= 1e-12 * s.max(1.0));
        }

        #[test]
        fn pool_is_monotone_and_bounded(
            a in proptest::collection::vec(0.0..5.0f64, 10),
            b in proptest::collection::vec(0.0..5.0f64, 10),
            bump in 0.0..3.0f64,
            at in 0usize..10,
        ) {
            let mk = |ped, v: &[f64]| ScoreSeries {
                pedestrian_id: ped,
                kind: Aggregation::Summed,
                measure: Measure::M1,
                entries: v.iter().enumerate().map(|(t, &s)| (t as u64, s)).collect(),
            };
            let base = frame_pool(&[mk(1, &a), mk(2, &b)], 10);
            let mut raised = a.clone();
            raised[at] += bump;
            let up = frame_pool(&[mk(1, &raised), mk(2, &b)], 10);
            for t in 0..10 {
                prop_assert!(up[t] >= base[t]);
                prop_assert!(base[t] <= a[t].max(b[t]) && base[t] >= 0.0);
            }
            // order of pedestrians does not matter
            prop_assert_eq!(frame_pool(&[mk(2, &b), mk(1, &a)], 10), base);
        }
    }
}
