//! Run configuration: command-line flags, then config-file keys, then defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use trajad_core::geom::Measure;
use trajad_core::kvconf::KvConfig;
use trajad_core::pipeline::{ScoreConfig, StrideMode, SweepSpec, TIMESCALES};
use trajad_core::scoring::{Aggregation, FlattenDivisor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PredictorKind {
    /// least-squares constant velocity
    Cv,
    /// bidirectional CVAE decoder, needs --weights
    Bitrap,
}

impl PredictorKind {
    fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Cv => "cv",
            PredictorKind::Bitrap => "bitrap",
        }
    }
}

/// Flags shared by `score`, `eval` and `sweep`. Every field is optional so a
/// config file can fill the gaps.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunFlags {
    /// plain `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub delta: Option<usize>,
    /// window stride: a positive integer, or `timescale` for the sweep ablation
    #[arg(long)]
    pub stride: Option<String>,
    /// m1 (1-IoU), m2 (1-GIoU) or m3 (L2)
    #[arg(long)]
    pub measure: Option<String>,
    /// summed or flattened
    #[arg(long)]
    pub agg: Option<String>,
    /// flattened-mean divisor: covering or total
    #[arg(long)]
    pub divisor: Option<String>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// weight container; `{tau}` is replaced by the timescale in sweeps
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// min-max normalise scores per video
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

const RUN_KEYS: &[&str] = &[
    "tau",
    "delta",
    "stride",
    "measure",
    "agg",
    "divisor",
    "predictor",
    "weights",
    "normalize",
    "seed",
    "timescales",
    "measures",
    "aggs",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tau: usize,
    pub delta: usize,
    pub stride: StrideMode,
    pub measure: Measure,
    pub kind: Aggregation,
    pub divisor: FlattenDivisor,
    pub predictor: PredictorKind,
    pub weights: Option<PathBuf>,
    pub normalize: bool,
    pub seed: u64,
    /// Set when tau/delta/measure/agg came from a flag or the config file;
    /// the sweep then restricts its grid to them.
    pub pinned_tau: bool,
    pub pinned_measure: bool,
    pub pinned_kind: bool,
    pub timescales: Vec<usize>,
    pub measures: Vec<Measure>,
    pub kinds: Vec<Aggregation>,
}

fn parse_divisor(s: &str) -> Result<FlattenDivisor> {
    match s.trim() {
        "covering" => Ok(FlattenDivisor::Covering),
        "total" => Ok(FlattenDivisor::Total),
        other => bail!("divisor must be `covering` or `total`, got `{other}`"),
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(f).collect()
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("expected a boolean, got `{other}`"),
    }
}

impl RunConfig {
    pub fn resolve(flags: &RunFlags) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let kv = KvConfig::parse(&text).with_context(|| format!("parsing config {}", p.display()))?;
                kv.check_known(RUN_KEYS)?;
                kv
            }
            None => KvConfig::default(),
        };
        let pick =
            |flag: Option<String>, key: &str| -> Option<String> { flag.or_else(|| file.raw(key).map(str::to_string)) };

        let tau_raw = flags
            .tau
            .map(|v| v.to_string())
            .or_else(|| file.raw("tau").map(str::to_string));
        let delta_raw = flags
            .delta
            .map(|v| v.to_string())
            .or_else(|| file.raw("delta").map(str::to_string));
        let tau: Option<usize> = tau_raw.as_deref().map(str::parse).transpose().context("tau")?;
        let delta: Option<usize> = delta_raw.as_deref().map(str::parse).transpose().context("delta")?;
        let (tau, delta) = match (tau, delta) {
            (Some(t), Some(d)) => (t, d),
            (Some(t), None) => (t, t),
            (None, Some(d)) => (d, d),
            (None, None) => (5, 5),
        };
        if tau == 0 || delta == 0 {
            bail!("tau and delta must be positive");
        }

        let stride = match pick(flags.stride.clone(), "stride") {
            Some(s) => s.parse::<StrideMode>().map_err(anyhow::Error::msg)?,
            None => StrideMode::Fixed(1),
        };
        let measure_raw = pick(flags.measure.clone(), "measure");
        let measure = measure_raw
            .as_deref()
            .map(str::parse::<Measure>)
            .transpose()?
            .unwrap_or(Measure::M3);
        let kind_raw = pick(flags.agg.clone(), "agg");
        let kind = kind_raw
            .as_deref()
            .map(str::parse::<Aggregation>)
            .transpose()?
            .unwrap_or(Aggregation::Flattened);
        let divisor = pick(flags.divisor.clone(), "divisor")
            .as_deref()
            .map(parse_divisor)
            .transpose()?
            .unwrap_or_default();
        let predictor = match flags.predictor {
            Some(p) => p,
            None => match file.raw("predictor") {
                Some("cv") | None => PredictorKind::Cv,
                Some("bitrap") => PredictorKind::Bitrap,
                Some(other) => bail!("unknown predictor `{other}`"),
            },
        };
        let weights = flags.weights.clone().or_else(|| file.raw("weights").map(PathBuf::from));
        let normalize = flags.normalize || file.raw("normalize").map(parse_bool).transpose()?.unwrap_or(false);
        let seed = match flags.seed {
            Some(s) => s,
            None => file.get_or("seed", 0u64)?,
        };

        let timescales = match file.raw("timescales") {
            Some(s) => parse_list(s, |v| Ok(v.parse::<usize>()?))?,
            None => TIMESCALES.to_vec(),
        };
        let measures = match file.raw("measures") {
            Some(s) => parse_list(s, |v| Ok(v.parse::<Measure>()?))?,
            None => Measure::ALL.to_vec(),
        };
        let kinds = match file.raw("aggs") {
            Some(s) => parse_list(s, |v| Ok(v.parse::<Aggregation>()?))?,
            None => Aggregation::ALL.to_vec(),
        };

        Ok(Self {
            tau,
            delta,
            stride,
            measure,
            kind,
            divisor,
            predictor,
            weights,
            normalize,
            seed,
            pinned_tau: tau_raw.is_some() || delta_raw.is_some(),
            pinned_measure: measure_raw.is_some(),
            pinned_kind: kind_raw.is_some(),
            timescales,
            measures,
            kinds,
        })
    }

    pub fn score_config(&self) -> Result<ScoreConfig> {
        let stride = match self.stride {
            StrideMode::Fixed(s) => s,
            StrideMode::Timescale => {
                if self.tau != self.delta {
                    bail!("--stride timescale needs tau == delta");
                }
                self.tau
            }
        };
        Ok(ScoreConfig {
            tau: self.tau,
            delta: self.delta,
            stride,
            measure: self.measure,
            kind: self.kind,
            divisor: self.divisor,
            normalize: self.normalize,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        if self.pinned_tau && self.tau != self.delta {
            bail!("sweeps run tau == delta; got tau={} delta={}", self.tau, self.delta);
        }
        Ok(SweepSpec {
            timescales: if self.pinned_tau {
                vec![self.tau]
            } else {
                self.timescales.clone()
            },
            measures: if self.pinned_measure {
                vec![self.measure]
            } else {
                self.measures.clone()
            },
            kinds: if self.pinned_kind {
                vec![self.kind]
            } else {
                self.kinds.clone()
            },
            stride: self.stride,
            divisor: self.divisor,
            normalize: self.normalize,
        })
    }

    pub fn weights_for(&self, timescale: usize) -> Option<PathBuf> {
        self.weights
            .as_ref()
            .map(|p| PathBuf::from(p.to_string_lossy().replace("{tau}", &timescale.to_string())))
    }

    fn divisor_str(&self) -> &'static str {
        match self.divisor {
            FlattenDivisor::Covering => "covering",
            FlattenDivisor::Total => "total",
        }
    }

    /// `key=value` lines echoed into output headers.
    pub fn echo(&self, inputs: &[(&str, &Path)]) -> Vec<String> {
        let mut lines = vec![
            format!("tau={}", self.tau),
            format!("delta={}", self.delta),
            format!("stride={}", self.stride),
            format!("measure={}", self.measure),
            format!("agg={}", self.kind),
            format!("divisor={}", self.divisor_str()),
            format!("predictor={}", self.predictor.as_str()),
        ];
        if let Some(w) = &self.weights {
            lines.push(format!("weights={}", w.display()));
        }
        lines.push(format!("normalize={}", self.normalize));
        lines.push(format!("seed={}", self.seed));
        for (k, p) in inputs {
            lines.push(format!("{k}={}", p.display()));
        }
        lines
    }

    pub fn sweep_echo(&self, spec: &SweepSpec, inputs: &[(&str, &Path)]) -> Vec<String> {
        let join = |v: Vec<String>| v.join(",");
        let mut lines = vec![
            format!(
                "timescales={}",
                join(spec.timescales.iter().map(|t| t.to_string()).collect())
            ),
            format!(
                "measures={}",
                join(spec.measures.iter().map(|m| m.to_string()).collect())
            ),
            format!("aggs={}", join(spec.kinds.iter().map(|k| k.to_string()).collect())),
            format!("stride={}", spec.stride),
            format!("divisor={}", self.divisor_str()),
            format!("predictor={}", self.predictor.as_str()),
        ];
        if let Some(w) = &self.weights {
            lines.push(format!("weights={}", w.display()));
        }
        lines.push(format!("normalize={}", self.normalize));
        lines.push(format!("seed={}", self.seed));
        for (k, p) in inputs {
            lines.push(format!("{k}={}", p.display()));
        }
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&RunFlags::default()).unwrap();
        assert_eq!((c.tau, c.delta), (5, 5));
        assert_eq!(c.measure, Measure::M3);
        assert_eq!(c.kind, Aggregation::Flattened);
        assert_eq!(c.stride, StrideMode::Fixed(1));
        assert_eq!(c.sweep_spec().unwrap().timescales, TIMESCALES.to_vec());
    }

    #[test]
    fn flags_beat_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "tau = 13\nmeasure = m1\nagg = summed\nnormalize = true").unwrap();
        let flags = RunFlags {
            config: Some(f.path().to_path_buf()),
            measure: Some("m2".into()),
            ..RunFlags::default()
        };
        let c = RunConfig::resolve(&flags).unwrap();
        assert_eq!((c.tau, c.delta), (13, 13));
        assert_eq!(c.measure, Measure::M2);
        assert_eq!(c.kind, Aggregation::Summed);
        assert!(c.normalize);
        let spec = c.sweep_spec().unwrap();
        assert_eq!(spec.timescales, vec![13]);
        assert_eq!(spec.measures, vec![Measure::M2]);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "colour = blue").unwrap();
        let flags = RunFlags {
            config: Some(f.path().to_path_buf()),
            ..RunFlags::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
    }

    #[test]
    fn weight_template() {
        let c = RunConfig::resolve(&RunFlags {
            weights: Some("w/bitrap_{tau}.btlw".into()),
            ..RunFlags::default()
        })
        .unwrap();
        assert_eq!(c.weights_for(13).unwrap(), PathBuf::from("w/bitrap_13.btlw"));
    }
}
