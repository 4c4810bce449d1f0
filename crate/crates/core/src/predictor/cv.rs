use super::{PredictError, Predictor, EPS_BOX};
use crate::geom::BoundingBox;

/// Fits an ordinary least-squares line to each of `x, y, w, h` over the
/// observed frames and extrapolates it.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl Predictor for ConstantVelocity {
    fn name(&self) -> &'static str {
        "cv"
    }

    fn predict(&self, observed: &[BoundingBox], delta: usize) -> Result<Vec<BoundingBox>, PredictError> {
        let n = observed.len();
        if n < 2 {
            return Err(PredictError::Config(format!(
                "constant-velocity predictor needs at least 2 observed boxes, got {n}"
            )));
        }
        let t_mean = (n - 1) as f64 / 2.0;
        let sxx: f64 = (0..n).map(|t| (t as f64 - t_mean).powi(2)).sum();
        let mut fits = [(0.0, 0.0); 4];
        for (c, fit) in fits.iter_mut().enumerate() {
            let mean = observed.iter().map(|b| b.to_array()[c]).sum::<f64>() / n as f64;
            let sxy: f64 = observed
                .iter()
                .enumerate()
                .map(|(t, b)| (t as f64 - t_mean) * (b.to_array()[c] - mean))
                .sum();
            *fit = (mean, sxy / sxx);
        }
        Ok((1..=delta)
            .map(|k| {
                let dt = (n - 1 + k) as f64 - t_mean;
                let mut v = [0.0; 4];
                for (c, (mean, slope)) in fits.iter().enumerate() {
                    v[c] = mean + slope * dt;
                }
                BoundingBox::from_array(v).clamp_size(EPS_BOX)
            })
            .collect())
    }
}
