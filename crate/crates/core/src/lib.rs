//! Pedestrian video anomaly scoring from bounding-box trajectory prediction.
//!
//! Tracks are cut into observed/future windows ([`ingest`]), a predictor
//! extrapolates each window ([`predictor`]), the per-step error between
//! prediction and ground truth ([`geom`]) is aggregated per pedestrian and
//! max-pooled per frame ([`scoring`]), and the frame scores are evaluated
//! against frame labels with ROC AUC ([`eval`]). [`synth`] produces labelled
//! synthetic scenes and [`pipeline`] wires the stages together.

pub mod eval;
pub mod geom;
pub mod ingest;
pub mod kvconf;
pub mod pipeline;
pub mod predictor;
pub mod scoring;
pub mod synth;

pub use eval::{roc_auc, EvalReport, RocCurve};
pub use geom::{giou, iou, BoundingBox, Measure};
pub use ingest::{build_windows, LabelSeries, Track, VideoTracks, WindowPair};
pub use predictor::{BitrapLite, ConstantVelocity, Prediction, Predictor, PredictorConfig, WeightContainer};
pub use scoring::{Aggregation, FlattenDivisor, ScoreSeries, VideoScores, WindowErrors};
