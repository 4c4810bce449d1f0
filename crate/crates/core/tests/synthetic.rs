//! Properties of generated scenes once they go through the scoring pipeline.

use std::collections::BTreeMap;

use trajad_core::ingest::write_tracks;
use trajad_core::pipeline::{score_and_evaluate, score_videos, ScoreConfig};
use trajad_core::synth::{generate, track_dialect, Anomaly, AnomalyKind, SceneSpec, SuiteSpec};
use trajad_core::{ConstantVelocity, Measure};

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// One walker, with and without a short sprint. Heading noise grows with
/// speed, so inside a long sprint the constant-velocity error is only about
/// four times the walking error; the onset is what stands out.
#[test]
fn normal_tail_below_sprint_median() {
    for seed in 1..=20 {
        let normal = SceneSpec::new("paired", seed, 300, 1);
        let mut anomalous = normal.clone();
        anomalous.anomalies.push(Anomaly {
            kind: AnomalyKind::Sprint,
            pedestrian: 0,
            start: 100,
            duration: 10,
        });
        let (normal_tracks, _) = generate(&normal).unwrap();
        let (anom_tracks, labels) = generate(&anomalous).unwrap();
        for measure in Measure::ALL {
            let cfg = ScoreConfig {
                measure,
                ..ScoreConfig::default()
            };
            let counts = BTreeMap::from([("paired".to_string(), 300)]);
            let (n, _) = score_videos(std::slice::from_ref(&normal_tracks), &counts, &ConstantVelocity, &cfg).unwrap();
            let (a, _) = score_videos(std::slice::from_ref(&anom_tracks), &counts, &ConstantVelocity, &cfg).unwrap();
            let sprint: Vec<f64> = a[0]
                .scores
                .iter()
                .zip(&labels.labels)
                .filter(|(_, &l)| l == 1)
                .map(|(s, _)| *s)
                .collect();
            let tail = quantile(n[0].scores.clone(), 0.99);
            let median = quantile(sprint, 0.5);
            assert!(
                tail < median,
                "seed {seed} {measure}: normal q99 {tail} >= sprint median {median}"
            );
        }
    }
}

#[test]
fn benchmark_suite_separates_anomalies() {
    let suite = SuiteSpec::benchmark(7).generate().unwrap();
    let (videos, labels): (Vec<_>, Vec<_>) = suite.into_iter().unzip();
    let (_, report) = score_and_evaluate(&videos, &labels, &ConstantVelocity, &ScoreConfig::default()).unwrap();
    assert!(report.dataset.auc >= 0.90, "auc {}", report.dataset.auc);
}

#[test]
fn suite_output_is_byte_stable() {
    let render = || {
        let (videos, _): (Vec<_>, Vec<_>) = SuiteSpec::benchmark(3).generate().unwrap().into_iter().unzip();
        let mut buf = Vec::new();
        write_tracks(&mut buf, &videos, &track_dialect(3)).unwrap();
        buf
    };
    assert_eq!(render(), render());
}
