//! Seeded synthetic pedestrian scenes with injected motion anomalies.
//!
//! Walkers move along a straight base heading at a constant sampled speed.
//! Each frame the heading is perturbed by Gaussian noise (not accumulated)
//! and the emitted box center gets Gaussian observation noise. Anomalies
//! change one walker's kinematics over a frame interval, and exactly those
//! frames are labelled 1.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, with normal deviates from `rand_distr::StandardNormal`.
//! Generated track files carry `rng=chacha8 seed=<n>` in their header.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geom::BoundingBox;
use crate::ingest::{LabelSeries, Track, TrackDialect, TrackPoint, VideoTracks};
use crate::kvconf::{ConfigError, KvConfig};

pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("anomaly {index} targets pedestrian {pedestrian}, scene has {count}")]
    NoSuchPedestrian {
        index: usize,
        pedestrian: usize,
        count: usize,
    },
    #[error("anomaly {index} interval {start}..{end} is outside 0..{frames} or empty")]
    Interval {
        index: usize,
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// speed x4
    Sprint,
    /// heading turned 180 degrees
    Reversal,
    /// heading alternates +/-75 degrees every 3 frames
    Zigzag,
    /// stands still for the first half, then speed x5
    FreezeDash,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::Sprint,
        AnomalyKind::Reversal,
        AnomalyKind::Zigzag,
        AnomalyKind::FreezeDash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::Sprint => "sprint",
            AnomalyKind::Reversal => "reversal",
            AnomalyKind::Zigzag => "zigzag",
            AnomalyKind::FreezeDash => "freeze-dash",
        }
    }

    /// Speed factor and heading offset (radians) at `offset` frames into an
    /// interval of `duration` frames.
    fn modifier(self, offset: usize, duration: usize) -> (f64, f64) {
        match self {
            AnomalyKind::Sprint => (4.0, 0.0),
            AnomalyKind::Reversal => (1.0, PI),
            AnomalyKind::Zigzag => {
                let sign = if (offset / 3).is_multiple_of(2) { 1.0 } else { -1.0 };
                (1.0, sign * 75f64.to_radians())
            }
            AnomalyKind::FreezeDash => {
                if offset < duration / 2 {
                    (0.0, 0.0)
                } else {
                    (5.0, 0.0)
                }
            }
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| SynthError::Invalid(format!("unknown anomaly type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub pedestrian: usize,
    pub start: usize,
    pub duration: usize,
}

impl Anomaly {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }

    fn covers(&self, frame: usize) -> bool {
        (self.start..self.end()).contains(&frame)
    }
}

impl FromStr for Anomaly {
    type Err = SynthError;

    /// `<type> <pedestrian> <start> <duration>`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let bad = || SynthError::Invalid(format!("anomaly must be `<type> <ped> <start> <duration>`, got `{s}`"));
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(Anomaly {
            kind: parts[0].parse()?,
            pedestrian: parts[1].parse().map_err(|_| bad())?,
            start: parts[2].parse().map_err(|_| bad())?,
            duration: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerParams {
    /// px/frame
    pub speed_min: f64,
    pub speed_max: f64,
    /// std of the per-frame heading perturbation, radians
    pub heading_jitter: f64,
    /// std of the center observation noise, px
    pub center_jitter: f64,
    pub width_min: f64,
    pub width_max: f64,
    /// height / width
    pub aspect: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            speed_min: 1.0,
            speed_max: 1.5,
            heading_jitter: 0.3,
            center_jitter: 0.03,
            width_min: 30.0,
            width_max: 50.0,
            aspect: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub video_id: String,
    pub seed: u64,
    pub frame_count: usize,
    pub n_pedestrians: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub walker: WalkerParams,
    pub anomalies: Vec<Anomaly>,
}

impl SceneSpec {
    pub fn new(video_id: impl Into<String>, seed: u64, frame_count: usize, n_pedestrians: usize) -> Self {
        Self {
            video_id: video_id.into(),
            seed,
            frame_count,
            n_pedestrians,
            frame_width: 1920.0,
            frame_height: 1080.0,
            walker: WalkerParams::default(),
            anomalies: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let w = &self.walker;
        if self.frame_count == 0 || self.n_pedestrians == 0 {
            return Err(SynthError::Invalid(
                "frame count and pedestrian count must be positive".into(),
            ));
        }
        if !(w.speed_min >= 0.0 && w.speed_max >= w.speed_min) {
            return Err(SynthError::Invalid("speed range must satisfy 0 <= min <= max".into()));
        }
        if !(w.width_min > 0.0 && w.width_max >= w.width_min && w.aspect > 0.0) {
            return Err(SynthError::Invalid("box sizes must be positive".into()));
        }
        if !(w.heading_jitter >= 0.0 && w.center_jitter >= 0.0) {
            return Err(SynthError::Invalid("jitter must be non-negative".into()));
        }
        let max_h = w.width_max * w.aspect;
        if w.width_max >= self.frame_width || max_h >= self.frame_height {
            return Err(SynthError::Invalid("boxes do not fit in the frame".into()));
        }
        for (index, a) in self.anomalies.iter().enumerate() {
            if a.pedestrian >= self.n_pedestrians {
                return Err(SynthError::NoSuchPedestrian {
                    index,
                    pedestrian: a.pedestrian,
                    count: self.n_pedestrians,
                });
            }
            if a.duration == 0 || a.end() > self.frame_count {
                return Err(SynthError::Interval {
                    index,
                    start: a.start,
                    end: a.end(),
                    frames: self.frame_count,
                });
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> LabelSeries {
        LabelSeries {
            video_id: self.video_id.clone(),
            labels: (0..self.frame_count)
                .map(|t| u8::from(self.anomalies.iter().any(|a| a.covers(t))))
                .collect(),
        }
    }

    /// Speed factor and heading offset of pedestrian `ped` moving into `frame`.
    fn kinematics(&self, ped: usize, frame: usize) -> (f64, f64) {
        self.anomalies
            .iter()
            .filter(|a| a.pedestrian == ped && a.covers(frame))
            .fold((1.0, 0.0), |(f, o), a| {
                let (fa, oa) = a.kind.modifier(frame - a.start, a.duration);
                (f * fa, o + oa)
            })
    }
}

struct Walker {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    w: f64,
    h: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn reflect(pos: &mut f64, heading_component: &mut f64, lo: f64, hi: f64) {
    if *pos < lo {
        *pos = (2.0 * lo - *pos).min(hi);
        *heading_component = -*heading_component;
    } else if *pos > hi {
        *pos = (2.0 * hi - *pos).max(lo);
        *heading_component = -*heading_component;
    }
}

/// Generates one video's tracks (one per pedestrian, frames `0..N`) and labels.
pub fn generate(spec: &SceneSpec) -> Result<(VideoTracks, LabelSeries), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.walker;
    let n = spec.frame_count;

    let mut tracks = Vec::with_capacity(spec.n_pedestrians);
    for ped in 0..spec.n_pedestrians {
        let speed = rng.random_range(p.speed_min..=p.speed_max);
        let heading = rng.random_range(-PI..PI);
        let w = rng.random_range(p.width_min..=p.width_max);
        let h = w * p.aspect;
        let (lo_x, hi_x) = (w / 2.0, spec.frame_width - w / 2.0);
        let (lo_y, hi_y) = (h / 2.0, spec.frame_height - h / 2.0);

        // Noise-free path extent from the origin, used to place the start so
        // the walk stays clear of the borders where possible.
        let (mut px, mut py) = (0.0f64, 0.0f64);
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for t in 1..n {
            let (f, o) = spec.kinematics(ped, t);
            px += speed * f * (heading + o).cos();
            py += speed * f * (heading + o).sin();
            min_x = min_x.min(px);
            max_x = max_x.max(px);
            min_y = min_y.min(py);
            max_y = max_y.max(py);
        }
        let margin = 4.0 * p.center_jitter + 2.0;
        let mut place = |lo: f64, hi: f64, pmin: f64, pmax: f64| {
            let a = lo + margin - pmin;
            let b = hi - margin - pmax;
            if a <= b {
                rng.random_range(a..=b)
            } else {
                (lo + hi) / 2.0 - (pmin + pmax) / 2.0
            }
        };
        let x0 = place(lo_x, hi_x, min_x, max_x);
        let y0 = place(lo_y, hi_y, min_y, max_y);

        let mut walker = Walker {
            x: x0.clamp(lo_x, hi_x),
            y: y0.clamp(lo_y, hi_y),
            heading,
            speed,
            w,
            h,
        };
        let mut entries = Vec::with_capacity(n);
        for t in 0..n {
            if t > 0 {
                let (factor, offset) = spec.kinematics(ped, t);
                let theta = walker.heading + offset + p.heading_jitter * normal(&mut rng);
                walker.x += walker.speed * factor * theta.cos();
                walker.y += walker.speed * factor * theta.sin();
                let (mut cx, mut cy) = (walker.heading.cos(), walker.heading.sin());
                reflect(&mut walker.x, &mut cx, lo_x, hi_x);
                reflect(&mut walker.y, &mut cy, lo_y, hi_y);
                walker.heading = cy.atan2(cx);
            }
            let ox = (walker.x + p.center_jitter * normal(&mut rng)).clamp(lo_x, hi_x);
            let oy = (walker.y + p.center_jitter * normal(&mut rng)).clamp(lo_y, hi_y);
            entries.push(TrackPoint {
                frame: t as u64,
                bbox: BoundingBox::new(ox, oy, walker.w, walker.h),
            });
        }
        tracks.push(Track::new(ped as u64, entries));
    }
    Ok((
        VideoTracks {
            video_id: spec.video_id.clone(),
            tracks,
        },
        spec.labels(),
    ))
}

/// Header dialect for generated track files.
pub fn track_dialect(seed: u64) -> TrackDialect {
    TrackDialect {
        extra: vec![("rng".into(), RNG_NAME.into()), ("seed".into(), seed.to_string())],
        ..TrackDialect::default()
    }
}

/// Inclusive frame-count range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationRange {
    pub min: usize,
    pub max: usize,
}

impl FromStr for DurationRange {
    type Err = SynthError;

    /// `a..b` or a single number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SynthError::Invalid(format!("duration range must be `min..max`, got `{s}`"));
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ),
            None => {
                let v = s.trim().parse().map_err(|_| bad())?;
                (v, v)
            }
        };
        if a == 0 || b < a {
            return Err(bad());
        }
        Ok(DurationRange { min: a, max: b })
    }
}

/// A set of scenes sharing walker parameters. Anomalies are either listed
/// explicitly (applied to every video) or drawn at random per video.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub seed: u64,
    pub videos: usize,
    pub base: SceneSpec,
    pub random_kinds: Vec<AnomalyKind>,
    pub anomalies_per_video: usize,
    pub durations: Vec<(AnomalyKind, DurationRange)>,
    /// No random anomaly starts before this frame.
    pub lead_in: usize,
    /// Minimum number of frames between random anomaly intervals.
    pub spacing: usize,
}

const SUITE_KEYS: &[&str] = &[
    "seed",
    "videos",
    "video_prefix",
    "frames",
    "pedestrians",
    "frame_width",
    "frame_height",
    "speed_min",
    "speed_max",
    "heading_jitter",
    "center_jitter",
    "width_min",
    "width_max",
    "aspect",
    "anomaly",
    "anomaly_types",
    "anomalies_per_video",
    "anomaly_duration",
    "anomaly_duration.sprint",
    "anomaly_duration.reversal",
    "anomaly_duration.zigzag",
    "anomaly_duration.freeze-dash",
    "lead_in",
    "spacing",
];

impl SuiteSpec {
    /// The desk benchmark: 20 videos of 300 frames with 6 walkers and random
    /// sprint, reversal and zigzag events.
    pub fn benchmark(seed: u64) -> Self {
        let mut base = SceneSpec::new("video", seed, 300, 6);
        base.walker = WalkerParams::default();
        SuiteSpec {
            seed,
            videos: 20,
            base,
            random_kinds: vec![AnomalyKind::Sprint, AnomalyKind::Reversal, AnomalyKind::Zigzag],
            anomalies_per_video: 1,
            durations: default_durations(),
            lead_in: 30,
            spacing: 30,
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, SynthError> {
        cfg.check_known(SUITE_KEYS)?;
        let seed = cfg.get_or("seed", 0u64)?;
        let mut suite = SuiteSpec::benchmark(seed);
        suite.videos = cfg.get_or("videos", 1usize)?;
        let b = &mut suite.base;
        b.video_id = cfg.get_or("video_prefix", "video".to_string())?;
        b.frame_count = cfg.get_or("frames", b.frame_count)?;
        b.n_pedestrians = cfg.get_or("pedestrians", b.n_pedestrians)?;
        b.frame_width = cfg.get_or("frame_width", b.frame_width)?;
        b.frame_height = cfg.get_or("frame_height", b.frame_height)?;
        let w = &mut b.walker;
        w.speed_min = cfg.get_or("speed_min", w.speed_min)?;
        w.speed_max = cfg.get_or("speed_max", w.speed_max)?;
        w.heading_jitter = cfg.get_or("heading_jitter", w.heading_jitter)?;
        w.center_jitter = cfg.get_or("center_jitter", w.center_jitter)?;
        w.width_min = cfg.get_or("width_min", w.width_min)?;
        w.width_max = cfg.get_or("width_max", w.width_max)?;
        w.aspect = cfg.get_or("aspect", w.aspect)?;
        b.anomalies = cfg.all("anomaly").map(str::parse).collect::<Result<_, _>>()?;

        if let Some(kinds) = cfg.raw("anomaly_types") {
            suite.random_kinds = kinds
                .split(',')
                .map(str::trim)
                .filter(|k| !k.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()?;
        }
        // explicit anomalies switch random placement off unless asked for
        let default_random = if b.anomalies.is_empty() { 1 } else { 0 };
        suite.anomalies_per_video = cfg.get_or("anomalies_per_video", default_random)?;
        if let Some(r) = cfg.raw("anomaly_duration") {
            let r: DurationRange = r.parse()?;
            suite.durations = AnomalyKind::ALL.iter().map(|&k| (k, r)).collect();
        }
        for kind in AnomalyKind::ALL {
            if let Some(r) = cfg.raw(&format!("anomaly_duration.{kind}")) {
                let r: DurationRange = r.parse()?;
                suite.durations.retain(|(k, _)| *k != kind);
                suite.durations.push((kind, r));
            }
        }
        suite.lead_in = cfg.get_or("lead_in", suite.lead_in)?;
        suite.spacing = cfg.get_or("spacing", suite.spacing)?;
        if suite.videos == 0 {
            return Err(SynthError::Invalid("videos must be positive".into()));
        }
        Ok(suite)
    }

    fn duration_range(&self, kind: AnomalyKind) -> DurationRange {
        self.durations
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, r)| *r)
            .unwrap_or(DurationRange { min: 20, max: 40 })
    }

    /// Per-video scene specs. Video `k` is seeded with `seed + k` and named
    /// `<prefix>_<k:03>`.
    pub fn scenes(&self) -> Result<Vec<SceneSpec>, SynthError> {
        let mut placement = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_a40a_11e5);
        (0..self.videos)
            .map(|k| {
                let mut scene = self.base.clone();
                scene.video_id = format!("{}_{k:03}", self.base.video_id);
                scene.seed = self.seed.wrapping_add(k as u64);
                if self.anomalies_per_video > 0 && !self.random_kinds.is_empty() {
                    scene.anomalies.extend(self.place_random(
                        &mut placement,
                        scene.frame_count,
                        scene.n_pedestrians,
                    )?);
                }
                scene.validate()?;
                Ok(scene)
            })
            .collect()
    }

    /// Splits the usable frames into equal slots and drops one anomaly in
    /// each, on a random pedestrian.
    fn place_random(&self, rng: &mut ChaCha8Rng, frames: usize, peds: usize) -> Result<Vec<Anomaly>, SynthError> {
        let slots = self.anomalies_per_video;
        let usable = frames.saturating_sub(self.lead_in);
        let slot_len = usable / slots;
        let mut out = Vec::with_capacity(slots);
        for s in 0..slots {
            let kind = self.random_kinds[rng.random_range(0..self.random_kinds.len())];
            let r = self.duration_range(kind);
            let room = slot_len.saturating_sub(self.spacing);
            if room < r.min {
                return Err(SynthError::Invalid(format!(
                    "{slots} anomalies of up to {} frames do not fit in {frames} frames",
                    r.max
                )));
            }
            let duration = rng.random_range(r.min..=r.max.min(room));
            let start = self.lead_in + s * slot_len + rng.random_range(0..=room - duration);
            out.push(Anomaly {
                kind,
                pedestrian: rng.random_range(0..peds),
                start,
                duration,
            });
        }
        Ok(out)
    }

    pub fn generate(&self) -> Result<Vec<(VideoTracks, LabelSeries)>, SynthError> {
        self.scenes()?.iter().map(generate).collect()
    }
}

fn default_durations() -> Vec<(AnomalyKind, DurationRange)> {
    vec![
        (AnomalyKind::Sprint, DurationRange { min: 40, max: 100 }),
        (AnomalyKind::Reversal, DurationRange { min: 6, max: 9 }),
        (AnomalyKind::Zigzag, DurationRange { min: 40, max: 100 }),
        (AnomalyKind::FreezeDash, DurationRange { min: 20, max: 40 }),
    ]
}
