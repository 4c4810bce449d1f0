//! Dense layers and a GRU cell over row-major `f64` buffers.

/// Affine map `y = W x + b`, `W` stored row-major as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(weight: Vec<f64>, bias: Vec<f64>, inputs: usize, outputs: usize) -> Self {
        assert_eq!(weight.len(), inputs * outputs);
        assert_eq!(bias.len(), outputs);
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn forward_tanh(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.forward(x);
        y.iter_mut().for_each(|v| *v = v.tanh());
        y
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Single-layer GRU cell. Gate blocks in `input`/`hidden` are stacked in
/// reset, update, candidate order:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub input: Dense,
    pub hidden: Dense,
}

impl Gru {
    pub fn hidden_size(&self) -> usize {
        self.hidden.inputs
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hs = self.hidden_size();
        let gi = self.input.forward(x);
        let gh = self.hidden.forward(h);
        (0..hs)
            .map(|j| {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[hs + j] + gh[hs + j]);
                let n = (gi[2 * hs + j] + r * gh[2 * hs + j]).tanh();
                (1.0 - z) * n + z * h[j]
            })
            .collect()
    }
}
