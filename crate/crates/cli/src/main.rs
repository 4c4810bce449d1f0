//! `trajad`: synthesise scenes, score tracks, evaluate scores, sweep settings.

mod config;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use trajad_core::eval::evaluate;
use trajad_core::ingest::{parse_labels, parse_tracks, write_labels, write_tracks, LabelSeries, VideoTracks};
use trajad_core::kvconf::KvConfig;
use trajad_core::pipeline::{frame_counts_from_labels, score_videos, sweep, write_sweep_csv, PipelineError};
use trajad_core::predictor::{BitrapLite, ConstantVelocity, Predictor, WeightContainer};
use trajad_core::scoring::{normalize_per_video, read_scores, write_scores};
use trajad_core::synth::{track_dialect, SuiteSpec};

use config::{PredictorKind, RunConfig, RunFlags};

#[derive(Debug, Parser)]
#[command(name = "trajad", version, about = "Trajectory-prediction anomaly scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene suite: `<out>/tracks.csv` and `<out>/labels/<video>.txt`.
    Synth {
        /// scene spec (key = value); the built-in benchmark when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        /// overrides the spec's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every frame of every video in a track file.
    Score {
        #[arg(long)]
        tracks: PathBuf,
        /// label file or directory; fixes each video's frame count
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        /// score file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frame-level ROC AUC of a score file against labels.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// min-max normalise scores per video before evaluating
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AUC over timescales × measures × aggregations.
    Sweep {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { spec, seed, out } => cmd_synth(spec.as_deref(), seed, &out),
        Command::Score {
            tracks,
            labels,
            run,
            out,
        } => cmd_score(&tracks, labels.as_deref(), &run, out.as_deref()),
        Command::Eval {
            scores,
            labels,
            normalize,
            out,
        } => cmd_eval(&scores, &labels, normalize, out.as_deref()),
        Command::Sweep {
            tracks,
            labels,
            run,
            out,
        } => cmd_sweep(&tracks, &labels, &run, out.as_deref()),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Writes through a sibling temp file and renames, so readers never see a
/// half-written output.
fn emit(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
        }
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            let file = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush()?;
            drop(w);
            fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn read_tracks(path: &Path) -> Result<Vec<VideoTracks>> {
    let file = fs::File::open(path).with_context(|| format!("opening tracks {}", path.display()))?;
    parse_tracks(io::BufReader::new(file)).with_context(|| format!("parsing tracks {}", path.display()))
}

/// Reads one label file (video id = file stem) or every file in a directory.
fn read_labels(path: &Path) -> Result<Vec<LabelSeries>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        v.retain(|p| p.is_file());
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .with_context(|| format!("bad label file name {}", p.display()))?;
            let f = fs::File::open(p).with_context(|| format!("opening labels {}", p.display()))?;
            parse_labels(id, io::BufReader::new(f)).with_context(|| format!("parsing labels {}", p.display()))
        })
        .collect()
}

/// Labels for exactly the videos in `videos`; a missing file is an error.
fn labels_for(videos: &[VideoTracks], path: &Path) -> Result<Vec<LabelSeries>> {
    let labels = read_labels(path)?;
    for v in videos {
        if !labels.iter().any(|l| l.video_id == v.video_id) {
            bail!("no label file for video {} under {}", v.video_id, path.display());
        }
    }
    Ok(labels
        .into_iter()
        .filter(|l| videos.iter().any(|v| v.video_id == l.video_id))
        .collect())
}

fn load_predictor(kind: PredictorKind, weights: Option<&Path>, tau: usize, delta: usize) -> Result<Box<dyn Predictor>> {
    match kind {
        PredictorKind::Cv => Ok(Box::new(ConstantVelocity)),
        PredictorKind::Bitrap => {
            let path = weights.context("the bitrap predictor needs --weights")?;
            let file = fs::File::open(path).with_context(|| format!("opening weights {}", path.display()))?;
            let container = WeightContainer::load(io::BufReader::new(file))
                .with_context(|| format!("loading weights {}", path.display()))?;
            let c = container.config();
            if (c.tau, c.delta) != (tau, delta) {
                bail!(
                    "weights {} were built for tau={} delta={}, run uses tau={tau} delta={delta}",
                    path.display(),
                    c.tau,
                    c.delta
                );
            }
            Ok(Box::new(BitrapLite::from_weights(&container)?))
        }
    }
}

fn cmd_synth(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut suite = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            let kv = KvConfig::parse(&text).with_context(|| format!("parsing spec {}", p.display()))?;
            SuiteSpec::from_config(&kv)?
        }
        None => SuiteSpec::benchmark(0),
    };
    if let Some(s) = seed {
        suite.seed = s;
        suite.base.seed = s;
    }
    let generated = suite.generate()?;
    let (videos, labels): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
    emit(Some(&out.join("tracks.csv")), |mut w| {
        write_tracks(&mut w, &videos, &track_dialect(suite.seed))?;
        Ok(())
    })?;
    for l in &labels {
        emit(
            Some(&out.join("labels").join(format!("{}.txt", l.video_id))),
            |mut w| {
                write_labels(&mut w, l)?;
                Ok(())
            },
        )?;
    }
    let anomalous: usize = labels
        .iter()
        .map(|l| l.labels.iter().filter(|&&x| x == 1).count())
        .sum();
    eprintln!(
        "synth: videos={} frames={} anomalous_frames={anomalous} seed={}",
        videos.len(),
        labels.iter().map(LabelSeries::len).sum::<usize>(),
        suite.seed
    );
    Ok(())
}

fn cmd_score(tracks: &Path, labels: Option<&Path>, flags: &RunFlags, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::resolve(flags)?;
    let score_cfg = cfg.score_config()?;
    let videos = read_tracks(tracks)?;
    let frame_counts = match labels {
        Some(p) => frame_counts_from_labels(&labels_for(&videos, p)?),
        None => Default::default(),
    };
    let predictor = load_predictor(cfg.predictor, cfg.weights.as_deref(), cfg.tau, cfg.delta)?;
    let (scores, summary) = score_videos(&videos, &frame_counts, predictor.as_ref(), &score_cfg)?;
    if summary.windows == 0 {
        eprintln!(
            "warning: no track is long enough for tau={} delta={}; all scores are 0",
            cfg.tau, cfg.delta
        );
    }
    let mut inputs = vec![("tracks", tracks)];
    if let Some(l) = labels {
        inputs.push(("labels", l));
    }
    let header = cfg.echo(&inputs);
    emit(out, |mut w| {
        write_scores(&mut w, &scores, &header)?;
        Ok(())
    })?;
    eprintln!("score: {summary}");
    Ok(())
}

fn cmd_eval(scores_path: &Path, labels_path: &Path, normalize: bool, out: Option<&Path>) -> Result<()> {
    let file = fs::File::open(scores_path).with_context(|| format!("opening scores {}", scores_path.display()))?;
    let mut scores =
        read_scores(io::BufReader::new(file)).with_context(|| format!("parsing scores {}", scores_path.display()))?;
    if normalize {
        for v in &mut scores {
            v.scores = normalize_per_video(&v.scores);
        }
    }
    let ids: Vec<String> = scores.iter().map(|s| s.video_id.clone()).collect();
    let all_labels = read_labels(labels_path)?;
    for id in &ids {
        if !all_labels.iter().any(|l| &l.video_id == id) {
            bail!("no label file for video {id} under {}", labels_path.display());
        }
    }
    let labels: Vec<LabelSeries> = all_labels.into_iter().filter(|l| ids.contains(&l.video_id)).collect();
    let report = evaluate(&scores, &labels)?;
    let mut header = Vec::new();
    if let Some(first) = scores.first() {
        header.push(format!("measure={}", first.measure));
        header.push(format!("agg={}", first.kind));
    }
    header.push(format!("normalize={normalize}"));
    header.push(format!("scores={}", scores_path.display()));
    header.push(format!("labels={}", labels_path.display()));
    emit(out, |mut w| {
        report.write(&mut w, &header)?;
        Ok(())
    })?;
    eprintln!(
        "eval: dataset_auc={} frames={} anomalous_frames={}",
        report.dataset.auc, report.frames, report.anomalous_frames
    );
    Ok(())
}

fn cmd_sweep(tracks: &Path, labels_path: &Path, flags: &RunFlags, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::resolve(flags)?;
    let spec = cfg.sweep_spec()?;
    let videos = read_tracks(tracks)?;
    let labels = labels_for(&videos, labels_path)?;
    let cells = sweep(&videos, &labels, &spec, |ts| {
        let weights = cfg.weights_for(ts);
        load_predictor(cfg.predictor, weights.as_deref(), ts, ts).map_err(|e| PipelineError::Config(format!("{e:#}")))
    })?;
    let header = cfg.sweep_echo(&spec, &[("tracks", tracks), ("labels", labels_path)]);
    emit(out, |mut w| {
        write_sweep_csv(&mut w, &spec, &cells, &header)?;
        Ok(())
    })?;
    eprintln!("sweep: {} cells", cells.len());
    Ok(())
}
