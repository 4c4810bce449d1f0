//! End-to-end runs: windows → predictions → errors → series → pooled frame
//! scores, plus evaluation and the timescale × measure × aggregation sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalReport};
use crate::geom::Measure;
use crate::ingest::{build_windows, LabelSeries, VideoTracks};
use crate::predictor::{PredictError, Predictor};
use crate::scoring::{
    aggregate, frame_pool, normalize_per_video, window_errors, Aggregation, FlattenDivisor, ScoringError, VideoScores,
};

/// Observation/prediction horizons swept by default (`tau = delta`).
pub const TIMESCALES: [usize; 4] = [3, 5, 13, 25];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("video {video}, pedestrian {ped}: {source}")]
    Predict {
        video: String,
        ped: u64,
        #[source]
        source: PredictError,
    },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid run config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub tau: usize,
    pub delta: usize,
    pub stride: usize,
    pub measure: Measure,
    pub kind: Aggregation,
    pub divisor: FlattenDivisor,
    pub normalize: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            tau: 5,
            delta: 5,
            stride: 1,
            measure: Measure::M3,
            kind: Aggregation::Flattened,
            divisor: FlattenDivisor::Covering,
            normalize: false,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tau == 0 || self.delta == 0 || self.stride == 0 {
            return Err(PipelineError::Config("tau, delta and stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreSummary {
    pub videos: usize,
    pub tracks: usize,
    pub windows: usize,
    pub frames: usize,
    pub covered_frames: usize,
}

impl fmt::Display for ScoreSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "videos={} tracks={} windows={} frames={} covered_frames={}",
            self.videos, self.tracks, self.windows, self.frames, self.covered_frames
        )
    }
}

/// Scores every video. `frame_counts` gives each video's length; videos not
/// in the map use one past their last tracked frame.
pub fn score_videos(
    videos: &[VideoTracks],
    frame_counts: &BTreeMap<String, usize>,
    predictor: &dyn Predictor,
    cfg: &ScoreConfig,
) -> Result<(Vec<VideoScores>, ScoreSummary), PipelineError> {
    cfg.validate()?;
    let mut summary = ScoreSummary::default();
    let mut out = Vec::with_capacity(videos.len());
    for video in videos {
        let n = frame_counts
            .get(&video.video_id)
            .copied()
            .unwrap_or(video.frame_extent() as usize);
        let mut series = Vec::with_capacity(video.tracks.len());
        for track in &video.tracks {
            let windows = build_windows(track, cfg.tau, cfg.delta, cfg.stride);
            let mut errors = Vec::with_capacity(windows.len());
            for (p, w) in windows.iter().enumerate() {
                let pred = predictor.predict_window(w).map_err(|source| PipelineError::Predict {
                    video: video.video_id.clone(),
                    ped: track.pedestrian_id,
                    source,
                })?;
                errors.push(window_errors(w, &pred, cfg.measure, p)?);
            }
            summary.windows += windows.len();
            series.push(aggregate(
                track.pedestrian_id,
                cfg.kind,
                cfg.measure,
                &errors,
                cfg.divisor,
            ));
        }
        let covered: std::collections::BTreeSet<u64> = series
            .iter()
            .flat_map(|s| s.entries.keys().copied())
            .filter(|&t| t < n as u64)
            .collect();
        summary.covered_frames += covered.len();
        let mut scores = frame_pool(&series, n);
        if cfg.normalize && !scores.is_empty() {
            scores = normalize_per_video(&scores);
        }
        summary.videos += 1;
        summary.tracks += video.tracks.len();
        summary.frames += n;
        out.push(VideoScores {
            video_id: video.video_id.clone(),
            kind: cfg.kind,
            measure: cfg.measure,
            scores,
        });
    }
    Ok((out, summary))
}

pub fn frame_counts_from_labels(labels: &[LabelSeries]) -> BTreeMap<String, usize> {
    labels.iter().map(|l| (l.video_id.clone(), l.len())).collect()
}

/// Stride used for each sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrideMode {
    Fixed(usize),
    /// stride equal to the cell's timescale: non-overlapping windows
    Timescale,
}

impl StrideMode {
    pub fn resolve(self, timescale: usize) -> usize {
        match self {
            StrideMode::Fixed(s) => s,
            StrideMode::Timescale => timescale,
        }
    }
}

impl fmt::Display for StrideMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrideMode::Fixed(s) => write!(f, "{s}"),
            StrideMode::Timescale => f.write_str("timescale"),
        }
    }
}

impl FromStr for StrideMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "timescale" | "tau" => Ok(StrideMode::Timescale),
            n => match n.parse::<usize>() {
                Ok(v) if v > 0 => Ok(StrideMode::Fixed(v)),
                _ => Err(format!("stride must be a positive integer or `timescale`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub timescales: Vec<usize>,
    pub measures: Vec<Measure>,
    pub kinds: Vec<Aggregation>,
    pub stride: StrideMode,
    pub divisor: FlattenDivisor,
    pub normalize: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            timescales: TIMESCALES.to_vec(),
            measures: Measure::ALL.to_vec(),
            kinds: Aggregation::ALL.to_vec(),
            stride: StrideMode::Fixed(1),
            divisor: FlattenDivisor::Covering,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub timescale: usize,
    pub stride: usize,
    pub measure: Measure,
    pub kind: Aggregation,
    pub auc: f64,
}

impl SweepSpec {
    pub fn cell_config(&self, timescale: usize, measure: Measure, kind: Aggregation) -> ScoreConfig {
        ScoreConfig {
            tau: timescale,
            delta: timescale,
            stride: self.stride.resolve(timescale),
            measure,
            kind,
            divisor: self.divisor,
            normalize: self.normalize,
        }
    }
}

/// Scores and evaluates one configuration.
pub fn score_and_evaluate(
    videos: &[VideoTracks],
    labels: &[LabelSeries],
    predictor: &dyn Predictor,
    cfg: &ScoreConfig,
) -> Result<(Vec<VideoScores>, EvalReport), PipelineError> {
    let (scores, _) = score_videos(videos, &frame_counts_from_labels(labels), predictor, cfg)?;
    let report = evaluate(&scores, labels)?;
    Ok((scores, report))
}

/// Runs every (timescale, measure, aggregation) cell. `predictor_for` builds
/// the predictor for a timescale (`tau = delta = timescale`).
pub fn sweep<F>(
    videos: &[VideoTracks],
    labels: &[LabelSeries],
    spec: &SweepSpec,
    mut predictor_for: F,
) -> Result<Vec<SweepCell>, PipelineError>
where
    F: FnMut(usize) -> Result<Box<dyn Predictor>, PipelineError>,
{
    let mut cells = Vec::new();
    for &ts in &spec.timescales {
        let predictor = predictor_for(ts)?;
        for &kind in &spec.kinds {
            for &measure in &spec.measures {
                let cfg = spec.cell_config(ts, measure, kind);
                let (_, report) = score_and_evaluate(videos, labels, predictor.as_ref(), &cfg)?;
                cells.push(SweepCell {
                    timescale: ts,
                    stride: cfg.stride,
                    measure,
                    kind,
                    auc: report.dataset.auc,
                });
            }
        }
    }
    Ok(cells)
}

/// Writes the sweep as a table: one row per timescale, one column per
/// (aggregation, measure) pair, summed columns first.
pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    spec: &SweepSpec,
    cells: &[SweepCell],
    header: &[String],
) -> std::io::Result<()> {
    for h in header {
        writeln!(out, "# {h}")?;
    }
    let mut columns = Vec::new();
    for &kind in &spec.kinds {
        for &measure in &spec.measures {
            columns.push((kind, measure));
        }
    }
    write!(out, "timescale,stride")?;
    for (kind, measure) in &columns {
        let tag = match kind {
            Aggregation::Summed => "S",
            Aggregation::Flattened => "F",
        };
        write!(out, ",{tag}_{measure}")?;
    }
    writeln!(out)?;
    for &ts in &spec.timescales {
        write!(out, "{ts},{}", spec.stride.resolve(ts))?;
        for &(kind, measure) in &columns {
            let cell = cells
                .iter()
                .find(|c| c.timescale == ts && c.kind == kind && c.measure == measure);
            match cell {
                Some(c) => write!(out, ",{}", c.auc)?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
