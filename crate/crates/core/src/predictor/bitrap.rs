//! Inference for a small goal-conditioned bidirectional CVAE trajectory
//! predictor.
//!
//! ```text
//! observed boxes ─ displacement features ─ FC+tanh ─ GRU ──► h
//! h ─ MLP(tanh, tanh, linear) ──► (mu, log_sigma);  z = mu
//! [h; z] ─ MLP ──► goal offset g
//! backward: hb = tanh(FC h), input tanh(FC g), GRU steps t+δ … t+1
//! forward:  hf = h,          input tanh(FC hf), GRU steps t+1 … t+δ
//! offset_k = FC [hf_k; hb_k];  box_k = last + Σ_{j<=k} offset_j
//! ```
//!
//! All arithmetic is `f64`; the stored `f32` parameters are widened once at
//! load time.

use super::nn::{Dense, Gru};
use super::weights::{WeightContainer, WeightError, BOX_DIMS, INPUT_FEATURES};
use super::{PredictError, Predictor, PredictorConfig, EPS_BOX};
use crate::geom::BoundingBox;

/// Gaussian latent parameters; `sigma = exp(log_sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl LatentParams {
    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|v| v.exp()).collect()
    }
}

/// Decoder output before and after adding the last observed box.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub goal: [f64; 4],
    /// Cumulative offsets from the last observed box, one per step.
    pub offsets: Vec<[f64; 4]>,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone)]
struct Mlp3 {
    fc1: Dense,
    fc2: Dense,
    head: Dense,
}

impl Mlp3 {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let a = self.fc1.forward_tanh(x);
        let b = self.fc2.forward_tanh(&a);
        self.head.forward(&b)
    }
}

#[derive(Debug, Clone)]
pub struct BitrapLite {
    config: PredictorConfig,
    enc_embed: Dense,
    enc_gru: Gru,
    prior: Mlp3,
    goal: Mlp3,
    bwd_init: Dense,
    bwd_embed: Dense,
    bwd_gru: Gru,
    fwd_embed: Dense,
    fwd_gru: Gru,
    head: Dense,
}

struct Loader<'a>(&'a WeightContainer);

impl Loader<'_> {
    fn floats(&self, name: &str) -> Result<Vec<f64>, WeightError> {
        self.0
            .tensor(name)
            .map(|t| t.iter().map(|&v| f64::from(v)).collect())
            .ok_or_else(|| WeightError::MissingTensor(name.to_string()))
    }

    fn dense(&self, prefix: &str, outputs: usize, inputs: usize) -> Result<Dense, WeightError> {
        Ok(Dense::new(
            self.floats(&format!("{prefix}.weight"))?,
            self.floats(&format!("{prefix}.bias"))?,
            inputs,
            outputs,
        ))
    }

    fn gru(&self, prefix: &str, inputs: usize, hidden: usize) -> Result<Gru, WeightError> {
        Ok(Gru {
            input: Dense::new(
                self.floats(&format!("{prefix}.weight_ih"))?,
                self.floats(&format!("{prefix}.bias_ih"))?,
                inputs,
                3 * hidden,
            ),
            hidden: Dense::new(
                self.floats(&format!("{prefix}.weight_hh"))?,
                self.floats(&format!("{prefix}.bias_hh"))?,
                hidden,
                3 * hidden,
            ),
        })
    }

    fn mlp(&self, prefix: &str, inputs: usize, hidden: usize, outputs: usize) -> Result<Mlp3, WeightError> {
        Ok(Mlp3 {
            fc1: self.dense(&format!("{prefix}.fc1"), hidden, inputs)?,
            fc2: self.dense(&format!("{prefix}.fc2"), hidden, hidden)?,
            head: self.dense(&format!("{prefix}.head"), outputs, hidden)?,
        })
    }
}

fn check_finite(v: &[f64], step: usize) -> Result<(), PredictError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PredictError::Numeric { step })
    }
}

impl BitrapLite {
    pub fn from_weights(weights: &WeightContainer) -> Result<Self, PredictError> {
        let config = *weights.config();
        config.validate()?;
        let h = config.hidden_size;
        let l = config.latent_dim;
        let w = Loader(weights);
        Ok(Self {
            config,
            enc_embed: w.dense("enc.embed", h, INPUT_FEATURES)?,
            enc_gru: w.gru("enc.gru", h, h)?,
            prior: w.mlp("prior", h, h, 2 * l)?,
            goal: w.mlp("goal", h + l, h, BOX_DIMS)?,
            bwd_init: w.dense("dec.bwd.init", h, h)?,
            bwd_embed: w.dense("dec.bwd.embed", h, BOX_DIMS)?,
            bwd_gru: w.gru("dec.bwd.gru", h, h)?,
            fwd_embed: w.dense("dec.fwd.embed", h, h)?,
            fwd_gru: w.gru("dec.fwd.gru", h, h)?,
            head: w.dense("dec.head", BOX_DIMS, 2 * h)?,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    /// Per-step input features: displacement from the previous box (zero for
    /// the first) followed by the raw width and height.
    pub fn input_features(observed: &[BoundingBox]) -> Vec<[f64; INPUT_FEATURES]> {
        observed
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let prev = if i == 0 { b } else { &observed[i - 1] };
                [b.x - prev.x, b.y - prev.y, b.w - prev.w, b.h - prev.h, b.w, b.h]
            })
            .collect()
    }

    /// Encodes the observed boxes into the final GRU hidden state.
    pub fn encode_history(&self, observed: &[BoundingBox]) -> Result<Vec<f64>, PredictError> {
        if observed.is_empty() {
            return Err(PredictError::Config("no observed boxes".into()));
        }
        let mut h = vec![0.0; self.config.hidden_size];
        for feat in Self::input_features(observed) {
            let x = self.enc_embed.forward_tanh(&feat);
            h = self.enc_gru.step(&x, &h);
        }
        check_finite(&h, 0)?;
        Ok(h)
    }

    pub fn latent_prior(&self, h: &[f64]) -> LatentParams {
        let mut out = self.prior.forward(h);
        let log_sigma = out.split_off(self.config.latent_dim);
        LatentParams { mu: out, log_sigma }
    }

    pub fn decode_bidirectional(
        &self,
        h: &[f64],
        z: &[f64],
        last_observed: &BoundingBox,
        delta: usize,
    ) -> Result<DecodeOutput, PredictError> {
        let hz: Vec<f64> = h.iter().chain(z).copied().collect();
        let g = self.goal.forward(&hz);
        check_finite(&g, 0)?;
        let goal = [g[0], g[1], g[2], g[3]];

        let goal_in = self.bwd_embed.forward_tanh(&g);
        let mut hb = self.bwd_init.forward_tanh(h);
        let mut backward = vec![Vec::new(); delta];
        for k in (0..delta).rev() {
            hb = self.bwd_gru.step(&goal_in, &hb);
            check_finite(&hb, k + 1)?;
            backward[k] = hb.clone();
        }

        let mut hf = h.to_vec();
        let mut acc = [0.0; 4];
        let mut offsets = Vec::with_capacity(delta);
        let mut boxes = Vec::with_capacity(delta);
        for (k, hb) in backward.iter().enumerate() {
            let x = self.fwd_embed.forward_tanh(&hf);
            hf = self.fwd_gru.step(&x, &hf);
            let cat: Vec<f64> = hf.iter().chain(hb).copied().collect();
            let o = self.head.forward(&cat);
            check_finite(&o, k + 1)?;
            for c in 0..4 {
                acc[c] += o[c];
            }
            check_finite(&acc, k + 1)?;
            offsets.push(acc);
            let base = last_observed.to_array();
            boxes.push(
                BoundingBox::new(base[0] + acc[0], base[1] + acc[1], base[2] + acc[2], base[3] + acc[3])
                    .clamp_size(EPS_BOX),
            );
        }
        Ok(DecodeOutput { goal, offsets, boxes })
    }

    /// Deterministic forward pass with `z = mu`.
    pub fn forward(&self, observed: &[BoundingBox], delta: usize) -> Result<DecodeOutput, PredictError> {
        let h = self.encode_history(observed)?;
        let latent = self.latent_prior(&h);
        check_finite(&latent.mu, 0)?;
        let last = observed.last().expect("encode_history rejects empty input");
        self.decode_bidirectional(&h, &latent.mu, last, delta)
    }
}

impl Predictor for BitrapLite {
    fn name(&self) -> &'static str {
        "bitrap"
    }

    fn predict(&self, observed: &[BoundingBox], delta: usize) -> Result<Vec<BoundingBox>, PredictError> {
        if observed.len() != self.config.tau || delta != self.config.delta {
            return Err(PredictError::Config(format!(
                "weights were built for tau={} delta={}, window has tau={} delta={}",
                self.config.tau,
                self.config.delta,
                observed.len(),
                delta
            )));
        }
        Ok(self.forward(observed, delta)?.boxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(h: usize, l: usize, tau: usize, delta: usize) -> PredictorConfig {
        PredictorConfig::new(tau, delta).with_dims(h, l)
    }

    fn walk(n: usize) -> Vec<BoundingBox> {
        (0..n)
            .map(|i| BoundingBox::new(10.0 + 2.0 * i as f64, 40.0 - i as f64, 20.0 + i as f64, 50.0))
            .collect()
    }

    #[test]
    fn zero_weights_zero_hidden() {
        let net = BitrapLite::from_weights(&WeightContainer::zeros(cfg(8, 4, 3, 3))).unwrap();
        let h = net.encode_history(&walk(3)).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let lat = net.latent_prior(&h);
        assert!(lat.mu.iter().all(|&v| v == 0.0));
        assert!(lat.sigma().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_weights_predict_last_box() {
        let net = BitrapLite::from_weights(&WeightContainer::zeros(cfg(8, 4, 3, 3))).unwrap();
        let obs = walk(3);
        let pred = net.predict(&obs, 3).unwrap();
        assert_eq!(pred, vec![obs[2]; 3]);
    }

    #[test]
    fn log_sigma_bias_sets_sigma() {
        let c = cfg(8, 4, 3, 3);
        let mut w = WeightContainer::zeros(c);
        let bias = w.tensor_mut("prior.head.bias").unwrap();
        for v in &mut bias[4..] {
            *v = std::f32::consts::LN_2;
        }
        let net = BitrapLite::from_weights(&w).unwrap();
        let lat = net.latent_prior(&net.encode_history(&walk(3)).unwrap());
        assert!(lat.mu.iter().all(|&v| v == 0.0));
        for s in lat.sigma() {
            assert!((s - 2.0).abs() < 1e-6);
        }
    }

    /// One GRU step with two hidden units and a one-box history, checked
    /// against gate arithmetic written out by hand.
    #[test]
    fn two_unit_single_step() {
        let c = cfg(2, 1, 1, 1);
        let mut w = WeightContainer::zeros(c);
        // embed: unit 0 reads w (feature 4), unit 1 reads h (feature 5), scaled 1/64
        let e = w.tensor_mut("enc.embed.weight").unwrap();
        e[4] = 0.015625;
        e[6 + 5] = 0.015625;
        // candidate gate rows 4,5 of weight_ih are identity
        let wih = w.tensor_mut("enc.gru.weight_ih").unwrap();
        wih[4 * 2] = 1.0;
        wih[5 * 2 + 1] = 1.0;
        // update gate bias on unit 0
        w.tensor_mut("enc.gru.bias_ih").unwrap()[2] = 0.5;
        let net = BitrapLite::from_weights(&w).unwrap();
        let obs = [BoundingBox::new(0.0, 0.0, 30.0, 60.0)];
        let h = net.encode_history(&obs).unwrap();

        let x0 = (30.0f64 / 64.0).tanh();
        let x1 = (60.0f64 / 64.0).tanh();
        let z0 = 1.0 / (1.0 + (-0.5f64).exp());
        let z1 = 0.5;
        let expect = [(1.0 - z0) * x0.tanh(), (1.0 - z1) * x1.tanh()];
        assert!((h[0] - expect[0]).abs() < 1e-12);
        assert!((h[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn order_matters() {
        let net = BitrapLite::from_weights(&WeightContainer::random(cfg(8, 4, 4, 3), 5, 0.5)).unwrap();
        let obs = walk(4);
        let mut rev = obs.clone();
        rev.reverse();
        assert_ne!(net.encode_history(&obs).unwrap(), net.encode_history(&rev).unwrap());
    }

    #[test]
    fn translation_shifts_prediction() {
        let net = BitrapLite::from_weights(&WeightContainer::random(cfg(8, 4, 3, 3), 9, 0.5)).unwrap();
        let obs = walk(3);
        let shifted: Vec<_> = obs.iter().map(|b| b.translate(10.0, 10.0)).collect();
        let a = net.forward(&obs, 3).unwrap();
        let b = net.forward(&shifted, 3).unwrap();
        assert_eq!(a.offsets, b.offsets);
        for (p, q) in a.boxes.iter().zip(&b.boxes) {
            assert!((q.x - p.x - 10.0).abs() < 1e-9 && (q.y - p.y - 10.0).abs() < 1e-9);
            assert_eq!((p.w, p.h), (q.w, q.h));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let c = cfg(2, 1, 2, 2);
        let mut w = WeightContainer::zeros(c);
        w.tensor_mut("dec.head.bias").unwrap()[0] = f32::MAX;
        w.tensor_mut("dec.head.bias").unwrap()[1] = f32::MAX;
        let mut net = BitrapLite::from_weights(&w).unwrap();
        // widen beyond f64 range
        net.head.bias[0] = f64::MAX;
        let err = net.predict(&walk(2), 2).unwrap_err();
        assert!(matches!(err, PredictError::Numeric { step: 2 }), "{err:?}");
    }

    #[test]
    fn horizon_mismatch_is_config_error() {
        let net = BitrapLite::from_weights(&WeightContainer::zeros(cfg(4, 2, 3, 3))).unwrap();
        assert!(matches!(net.predict(&walk(4), 3), Err(PredictError::Config(_))));
    }
}
