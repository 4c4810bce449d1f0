//! Track and label files, and slicing tracks into observed/future windows.
//!
//! Track CSV dialect:
//!
//! ```text
//! #traj v1 base=0 order=cxcywh
//! video_id,frame,ped_id,a,b,w,h
//! ```
//!
//! `a,b` are the top-left corner (`order=tlwh`) or the center
//! (`order=cxcywh`). Frames are converted to 0-based indices and boxes to
//! center format at parse time.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::geom::BoundingBox;

pub const TRACK_MAGIC: &str = "#traj";
pub const LABEL_MAGIC: &str = "#labels";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("video {video}: pedestrian {ped} appears twice at frame {frame} (line {line})")]
    Duplicate {
        video: String,
        ped: u64,
        frame: u64,
        line: usize,
    },
    #[error("label file is missing frame {0}")]
    MissingFrame(u64),
}

fn row_err(line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Row { line, msg: msg.into() }
}

/// Coordinate convention of the first two box columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxOrder {
    /// top-left corner, width, height
    Tlwh,
    /// center, width, height
    Cxcywh,
}

impl fmt::Display for BoxOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoxOrder::Tlwh => "tlwh",
            BoxOrder::Cxcywh => "cxcywh",
        })
    }
}

/// Parsed `#traj` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackDialect {
    pub base: u64,
    pub order: BoxOrder,
    /// Extra `key=value` pairs, kept in file order.
    pub extra: Vec<(String, String)>,
}

impl Default for TrackDialect {
    fn default() -> Self {
        Self {
            base: 0,
            order: BoxOrder::Cxcywh,
            extra: Vec::new(),
        }
    }
}

impl TrackDialect {
    pub fn parse_header(line: &str) -> Result<Self, IngestError> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(TRACK_MAGIC) {
            return Err(IngestError::Header(format!(
                "expected `{TRACK_MAGIC} v1 ...`, got `{line}`"
            )));
        }
        if parts.next() != Some("v1") {
            return Err(IngestError::Header("unsupported track file version".into()));
        }
        let mut dialect = TrackDialect::default();
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| IngestError::Header(format!("malformed header field `{kv}`")))?;
            match k {
                "base" => {
                    dialect.base = match v {
                        "0" => 0,
                        "1" => 1,
                        _ => return Err(IngestError::Header(format!("base must be 0 or 1, got `{v}`"))),
                    }
                }
                "order" => {
                    dialect.order = match v {
                        "tlwh" => BoxOrder::Tlwh,
                        "cxcywh" => BoxOrder::Cxcywh,
                        _ => return Err(IngestError::Header(format!("unknown box order `{v}`"))),
                    }
                }
                _ => dialect.extra.push((k.to_string(), v.to_string())),
            }
        }
        Ok(dialect)
    }

    pub fn header_line(&self) -> String {
        let mut s = format!("{TRACK_MAGIC} v1 base={} order={}", self.base, self.order);
        for (k, v) in &self.extra {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// One observation of a pedestrian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: u64,
    pub bbox: BoundingBox,
}

/// A pedestrian's boxes ordered by strictly increasing frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub pedestrian_id: u64,
    pub entries: Vec<TrackPoint>,
}

impl Track {
    pub fn new(pedestrian_id: u64, entries: Vec<TrackPoint>) -> Self {
        Self { pedestrian_id, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Splits the track into maximal runs of consecutive frames.
    pub fn gap_free_runs(&self) -> Vec<&[TrackPoint]> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..self.entries.len() {
            if self.entries[i].frame != self.entries[i - 1].frame + 1 {
                runs.push(&self.entries[start..i]);
                start = i;
            }
        }
        if start < self.entries.len() {
            runs.push(&self.entries[start..]);
        }
        runs
    }
}

/// All tracks of one video, sorted by pedestrian id.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTracks {
    pub video_id: String,
    pub tracks: Vec<Track>,
}

impl VideoTracks {
    /// One past the highest frame index seen in any track.
    pub fn frame_extent(&self) -> u64 {
        self.tracks
            .iter()
            .filter_map(|t| t.entries.last())
            .map(|p| p.frame + 1)
            .max()
            .unwrap_or(0)
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, line: usize) -> Result<T, IngestError> {
    raw.trim()
        .parse()
        .map_err(|_| row_err(line, format!("cannot parse {what} from `{raw}`")))
}

/// Parses a track file. Videos come back sorted by id, tracks by pedestrian id
/// and entries by frame.
pub fn parse_tracks<R: Read>(source: R) -> Result<Vec<VideoTracks>, IngestError> {
    let mut reader = BufReader::new(source);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let dialect = TrackDialect::parse_header(header.trim_end())?;

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let mut videos: BTreeMap<String, BTreeMap<u64, BTreeMap<u64, TrackPoint>>> = BTreeMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize + 1).unwrap_or(0);
            row_err(line, e.to_string())
        })?;
        // +1 for the header line consumed above
        let line = record.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        if record.len() != 7 {
            return Err(row_err(line, format!("expected 7 fields, found {}", record.len())));
        }
        let video = record[0].to_string();
        let raw_frame: u64 = parse_field(&record[1], "frame", line)?;
        let ped: u64 = parse_field(&record[2], "pedestrian id", line)?;
        let mut vals = [0f64; 4];
        for (k, name) in ["a", "b", "w", "h"].iter().enumerate() {
            vals[k] = parse_field(&record[3 + k], name, line)?;
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(row_err(line, "non-finite box value"));
        }
        let [a, b, w, h] = vals;
        if w <= 0.0 || h <= 0.0 {
            return Err(row_err(line, format!("non-positive box size w={w} h={h}")));
        }
        let frame = raw_frame
            .checked_sub(dialect.base)
            .ok_or_else(|| row_err(line, format!("frame {raw_frame} below base {}", dialect.base)))?;
        let bbox = match dialect.order {
            BoxOrder::Tlwh => BoundingBox::from_tlwh(a, b, w, h),
            BoxOrder::Cxcywh => BoundingBox::new(a, b, w, h),
        };
        let frames = videos.entry(video.clone()).or_default().entry(ped).or_default();
        match frames.entry(frame) {
            Entry::Occupied(_) => {
                return Err(IngestError::Duplicate {
                    video,
                    ped,
                    frame: raw_frame,
                    line,
                })
            }
            Entry::Vacant(slot) => {
                slot.insert(TrackPoint { frame, bbox });
            }
        }
    }

    Ok(videos
        .into_iter()
        .map(|(video_id, peds)| VideoTracks {
            video_id,
            tracks: peds
                .into_iter()
                .map(|(id, frames)| Track::new(id, frames.into_values().collect()))
                .collect(),
        })
        .collect())
}

/// Writes tracks in the given dialect. `{}` formatting of `f64` is the
/// shortest round-tripping representation, so `cxcywh` output re-parses to
/// identical boxes.
pub fn write_tracks<W: Write>(out: &mut W, videos: &[VideoTracks], dialect: &TrackDialect) -> std::io::Result<()> {
    writeln!(out, "{}", dialect.header_line())?;
    for video in videos {
        for track in &video.tracks {
            for p in &track.entries {
                let b = &p.bbox;
                let (a, c) = match dialect.order {
                    BoxOrder::Cxcywh => (b.x, b.y),
                    BoxOrder::Tlwh => (b.x - b.w / 2.0, b.y - b.h / 2.0),
                };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    video.video_id,
                    p.frame + dialect.base,
                    track.pedestrian_id,
                    a,
                    c,
                    b.w,
                    b.h
                )?;
            }
        }
    }
    Ok(())
}

/// One observed/future slice of a track.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub pedestrian_id: u64,
    /// Frame index of the last observed box.
    pub t_last_observed: u64,
    pub observed: Vec<BoundingBox>,
    pub future_gt: Vec<BoundingBox>,
}

impl WindowPair {
    pub fn tau(&self) -> usize {
        self.observed.len()
    }

    pub fn delta(&self) -> usize {
        self.future_gt.len()
    }

    /// First predicted frame.
    pub fn first_future_frame(&self) -> u64 {
        self.t_last_observed + 1
    }

    pub fn first_observed_frame(&self) -> u64 {
        self.t_last_observed + 1 - self.tau() as u64
    }
}

/// Slices a track into windows of `tau` observed and `delta` future boxes.
///
/// The track is first split into gap-free runs; within each run observation
/// starts are at run offsets `0, stride, 2*stride, ...`. A run of `n` frames
/// gives `ceil((n - tau - delta + 1) / stride)` windows, or none when short.
pub fn build_windows(track: &Track, tau: usize, delta: usize, stride: usize) -> Vec<WindowPair> {
    assert!(
        tau >= 1 && delta >= 1 && stride >= 1,
        "tau, delta and stride must be positive"
    );
    let span = tau + delta;
    let mut out = Vec::new();
    for run in track.gap_free_runs() {
        if run.len() < span {
            continue;
        }
        for start in (0..=run.len() - span).step_by(stride) {
            let obs = &run[start..start + tau];
            let fut = &run[start + tau..start + span];
            out.push(WindowPair {
                pedestrian_id: track.pedestrian_id,
                t_last_observed: obs[tau - 1].frame,
                observed: obs.iter().map(|p| p.bbox).collect(),
                future_gt: fut.iter().map(|p| p.bbox).collect(),
            });
        }
    }
    out
}

/// Dense per-frame anomaly flags for one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSeries {
    pub video_id: String,
    pub labels: Vec<u8>,
}

impl LabelSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn parse_label_value(raw: &str, line: usize) -> Result<u8, IngestError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(row_err(line, format!("label must be 0 or 1, got `{other}`"))),
    }
}

/// Parses a label file: an optional `#labels v1 [base=0|1]` header, then either
/// one `0|1` per line or `frame,label` rows. Blank lines are skipped.
pub fn parse_labels<R: Read>(video_id: &str, source: R) -> Result<LabelSeries, IngestError> {
    let reader = BufReader::new(source);
    let mut base = 0u64;
    let mut plain: Vec<u8> = Vec::new();
    let mut keyed: BTreeMap<u64, u8> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text.starts_with('#') {
            if idx == 0 {
                let mut parts = text.split_whitespace();
                if parts.next() != Some(LABEL_MAGIC) {
                    return Err(IngestError::Header(format!(
                        "expected `{LABEL_MAGIC} v1`, got `{text}`"
                    )));
                }
                if parts.next() != Some("v1") {
                    return Err(IngestError::Header("unsupported label file version".into()));
                }
                for kv in parts {
                    match kv.split_once('=') {
                        Some(("base", "0")) => base = 0,
                        Some(("base", "1")) => base = 1,
                        _ => {}
                    }
                }
            }
            continue;
        }
        match text.split_once(',') {
            None => {
                if !keyed.is_empty() {
                    return Err(row_err(line_no, "mixed plain and frame,label rows"));
                }
                plain.push(parse_label_value(text, line_no)?);
            }
            Some((frame, label)) => {
                if !plain.is_empty() {
                    return Err(row_err(line_no, "mixed plain and frame,label rows"));
                }
                let raw: u64 = parse_field(frame, "frame", line_no)?;
                let frame = raw
                    .checked_sub(base)
                    .ok_or_else(|| row_err(line_no, format!("frame {raw} below base {base}")))?;
                let value = parse_label_value(label, line_no)?;
                if keyed.insert(frame, value).is_some() {
                    return Err(row_err(line_no, format!("frame {raw} labelled twice")));
                }
            }
        }
    }
    let labels = if keyed.is_empty() {
        plain
    } else {
        let mut dense = Vec::with_capacity(keyed.len());
        for (expect, (frame, value)) in keyed.into_iter().enumerate() {
            if frame != expect as u64 {
                return Err(IngestError::MissingFrame(expect as u64 + base));
            }
            dense.push(value);
        }
        dense
    };
    Ok(LabelSeries {
        video_id: video_id.to_string(),
        labels,
    })
}

/// Writes labels in the one-value-per-line form.
pub fn write_labels<W: Write>(out: &mut W, labels: &LabelSeries) -> std::io::Result<()> {
    writeln!(out, "{LABEL_MAGIC} v1")?;
    for v in &labels.labels {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn track_of(frames: &[u64]) -> Track {
        Track::new(
            7,
            frames
                .iter()
                .map(|&f| TrackPoint {
                    frame: f,
                    bbox: BoundingBox::new(f as f64, 0.0, 1.0, 2.0),
                })
                .collect(),
        )
    }

    #[test]
    fn parses_single_pedestrian() {
        let src = "#traj v1 base=0 order=cxcywh\nv0,0,1,10,20,4,8\nv0,1,1,11,20,4,8\nv0,2,1,12,20,4,8\n";
        let vids = parse_tracks(src.as_bytes()).unwrap();
        assert_eq!(vids.len(), 1);
        assert_eq!(vids[0].tracks.len(), 1);
        assert_eq!(vids[0].tracks[0].len(), 3);
        assert_eq!(vids[0].tracks[0].entries[2].bbox, BoundingBox::new(12., 20., 4., 8.));
    }

    #[test]
    fn interleaved_ids_and_reordering() {
        let src = "#traj v1 base=1 order=tlwh\n\
                   v,2,5,0,0,2,4\n\
                   v,1,9,0,0,2,4\n\
                   v,1,5,0,0,2,4\n\
                   v,2,9,1,0,2,4\n";
        let vids = parse_tracks(src.as_bytes()).unwrap();
        let tracks = &vids[0].tracks;
        assert_eq!(tracks.iter().map(|t| t.pedestrian_id).collect::<Vec<_>>(), vec![5, 9]);
        for t in tracks {
            assert_eq!(t.entries.iter().map(|p| p.frame).collect::<Vec<_>>(), vec![0, 1]);
        }
        // tlwh converted to center
        assert_eq!(tracks[1].entries[1].bbox, BoundingBox::new(2., 2., 2., 4.));
    }

    #[test]
    fn zero_width_names_row() {
        let src = "#traj v1 base=0 order=cxcywh\nv,0,1,1,1,2,2\nv,1,1,1,1,0,2\n";
        let err = parse_tracks(src.as_bytes()).unwrap_err();
        match err {
            IngestError::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_rejected() {
        let src = "#traj v1 base=0 order=cxcywh\nv,0,1,1,1,2,2\nv,0,1,5,1,2,2\n";
        assert!(matches!(
            parse_tracks(src.as_bytes()),
            Err(IngestError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn bad_header_and_short_row() {
        assert!(matches!(
            parse_tracks("v,0,1,1,1,2,2\n".as_bytes()),
            Err(IngestError::Header(_))
        ));
        let src = "#traj v1 base=0 order=cxcywh\nv,0,1,1,1,2\n";
        assert!(matches!(
            parse_tracks(src.as_bytes()),
            Err(IngestError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn eight_frame_windows() {
        // 0-based frames 0..8; 1-based obs 1..3 -> gt 4..6 and so on
        let w = build_windows(&track_of(&(0..8).collect::<Vec<_>>()), 3, 3, 1);
        assert_eq!(w.len(), 3);
        let spans: Vec<(u64, u64)> = w
            .iter()
            .map(|p| (p.first_observed_frame() + 1, p.first_future_frame() + 1))
            .collect();
        assert_eq!(spans, vec![(1, 4), (2, 5), (3, 6)]);
        assert_eq!(w[2].future_gt.last().unwrap().x, 7.0);
    }

    #[test]
    fn stride_and_short_tracks() {
        let t8 = track_of(&(0..8).collect::<Vec<_>>());
        assert_eq!(build_windows(&t8, 3, 3, 3).len(), 1);
        assert_eq!(build_windows(&t8, 3, 3, 2).len(), 2);
        assert!(build_windows(&track_of(&[0, 1, 2, 3, 4]), 3, 3, 1).is_empty());
    }

    #[test]
    fn gap_split_matches_halves() {
        let frames: Vec<u64> = (0..10).chain(11..20).collect();
        let whole = build_windows(&track_of(&frames), 2, 2, 1);
        let mut halves = build_windows(&track_of(&(0..10).collect::<Vec<_>>()), 2, 2, 1);
        halves.extend(build_windows(&track_of(&(11..20).collect::<Vec<_>>()), 2, 2, 1));
        assert_eq!(whole, halves);
    }

    #[test]
    fn label_examples() {
        assert_eq!(parse_labels("v", "0\n0\n1\n".as_bytes()).unwrap().labels, vec![0, 0, 1]);
        assert_eq!(
            parse_labels("v", "#labels v1\n0,0\n1,1\n".as_bytes()).unwrap().labels,
            vec![0, 1]
        );
        assert!(matches!(
            parse_labels("v", "2\n".as_bytes()),
            Err(IngestError::Row { .. })
        ));
        assert!(matches!(
            parse_labels("v", "0,0\n2,1\n".as_bytes()),
            Err(IngestError::MissingFrame(1))
        ));
        assert_eq!(
            parse_labels("v", "#labels v1 base=1\n2,1\n1,0\n".as_bytes())
                .unwrap()
                .labels,
            vec![0, 1]
        );
    }

    fn brute_force_count(n: usize, tau: usize, delta: usize) -> usize {
        (0..n).filter(|&s| s + tau + delta <= n).count()
    }

    proptest! {
        #[test]
        fn window_count_law(n in 0usize..=200, tau in 1usize..30, delta in 1usize..30) {
            let t = track_of(&(0..n as u64).collect::<Vec<_>>());
            prop_assert_eq!(build_windows(&t, tau, delta, 1).len(), brute_force_count(n, tau, delta));
        }

        #[test]
        fn windows_are_contiguous(n in 2usize..60, tau in 1usize..6, delta in 1usize..6, stride in 1usize..5) {
            let t = track_of(&(0..n as u64).collect::<Vec<_>>());
            for (k, w) in build_windows(&t, tau, delta, stride).iter().enumerate() {
                prop_assert_eq!(w.first_observed_frame(), (k * stride) as u64);
                for (j, b) in w.observed.iter().chain(&w.future_gt).enumerate() {
                    prop_assert_eq!(b.x, (k * stride + j) as f64);
                }
            }
        }

        #[test]
        fn track_round_trip(
            rows in proptest::collection::vec(
                (0u64..4, 0u64..50, -500.0..500.0f64, -500.0..500.0f64, 0.01..90.0f64, 0.01..90.0f64),
                1..60,
            )
        ) {
            let mut src = String::from("#traj v1 base=0 order=cxcywh\n");
            let mut seen = std::collections::HashSet::new();
            for (ped, frame, x, y, w, h) in rows {
                if seen.insert((ped, frame)) {
                    src.push_str(&format!("vid,{frame},{ped},{x},{y},{w},{h}\n"));
                }
            }
            let parsed = parse_tracks(src.as_bytes()).unwrap();
            let mut buf = Vec::new();
            write_tracks(&mut buf, &parsed, &TrackDialect::default()).unwrap();
            prop_assert_eq!(parse_tracks(buf.as_slice()).unwrap(), parsed);
        }
    }
}
