//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code under test except for
//! plain data types.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use trajad_core::geom::BoundingBox;
use trajad_core::predictor::WeightContainer;

/// IoU and GIoU of two integer-corner boxes by counting unit cells.
pub fn raster_iou_giou(a: [i64; 4], b: [i64; 4]) -> (f64, f64) {
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (lo_x, hi_x) = (a[0].min(b[0]), a[2].max(b[2]));
    let (lo_y, hi_y) = (a[1].min(b[1]), a[3].max(b[3]));
    let (mut inter, mut union, mut hull) = (0u64, 0u64, 0u64);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            hull += 1;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    let iou = inter as f64 / union as f64;
    (iou, iou - (hull - union) as f64 / hull as f64)
}

/// Mann-Whitney U / (P·N), ties counted as one half.
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let mut credit2 = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            credit2 += match si.partial_cmp(&sj).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    credit2 as f64 / (2 * pairs) as f64
}

/// Window start offsets (relative to the track start) for a gap-free track of
/// length `n`, by brute force over every candidate start.
pub fn enumerate_windows(n: usize, tau: usize, delta: usize, stride: usize) -> Vec<usize> {
    (0..n).filter(|s| s % stride == 0 && s + tau + delta <= n).collect()
}

/// The 8-frame, τ = δ = 3 example: three windows with fabricated step errors.
/// `errors[p][k]` is the error of window `p` at its `k`-th predicted frame.
pub const EIGHT_FRAME_ERRORS: [[f64; 3]; 3] = [[1.0, 2.0, 4.0], [0.5, 0.25, 8.0], [3.0, 0.75, 1.5]];

/// Hand-enumerated summed entries for frames 4, 5, 6 (1-based).
pub fn eight_frame_summed() -> Vec<(u64, f64)> {
    vec![(4, 1.0 + 2.0 + 4.0), (5, 0.5 + 0.25 + 8.0), (6, 3.0 + 0.75 + 1.5)]
}

/// Hand-enumerated flattened entries for frames 4 ..= 8 (1-based).
pub fn eight_frame_flattened() -> Vec<(u64, f64)> {
    vec![
        (4, 1.0),
        (5, (2.0 + 0.5) / 2.0),
        (6, (4.0 + 0.25 + 3.0) / 3.0),
        (7, (8.0 + 0.75) / 2.0),
        (8, 1.5),
    ]
}

fn mat(w: &WeightContainer, name: &str) -> DMatrix<f64> {
    let spec = w
        .specs()
        .iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("{name}"));
    let data = w.tensor(name).unwrap();
    DMatrix::from_row_slice(spec.shape[0], spec.shape[1], data).map(f64::from)
}

fn vecn(w: &WeightContainer, name: &str) -> DVector<f64> {
    DVector::from_iterator(
        w.tensor(name).unwrap().len(),
        w.tensor(name).unwrap().iter().map(|&v| f64::from(v)),
    )
}

fn affine(w: &WeightContainer, prefix: &str, x: &DVector<f64>) -> DVector<f64> {
    mat(w, &format!("{prefix}.weight")) * x + vecn(w, &format!("{prefix}.bias"))
}

fn tanh(v: DVector<f64>) -> DVector<f64> {
    v.map(f64::tanh)
}

fn sigmoid(v: DVector<f64>) -> DVector<f64> {
    v.map(|x| 1.0 / (1.0 + (-x).exp()))
}

fn gru(w: &WeightContainer, prefix: &str, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
    let n = h.len();
    let wi = mat(w, &format!("{prefix}.weight_ih"));
    let wh = mat(w, &format!("{prefix}.weight_hh"));
    let bi = vecn(w, &format!("{prefix}.bias_ih"));
    let bh = vecn(w, &format!("{prefix}.bias_hh"));
    let gate = |k: usize| {
        let gi = wi.rows(k * n, n) * x + bi.rows(k * n, n);
        let gh = wh.rows(k * n, n) * h + bh.rows(k * n, n);
        (gi, gh)
    };
    let (ir, hr) = gate(0);
    let (iz, hz) = gate(1);
    let (inn, hn) = gate(2);
    let r = sigmoid(ir + hr);
    let z = sigmoid(iz + hz);
    let cand = tanh(inn + r.component_mul(&hn));
    let ones = DVector::from_element(n, 1.0);
    (ones - &z).component_mul(&cand) + z.component_mul(h)
}

fn mlp3(w: &WeightContainer, prefix: &str, x: &DVector<f64>) -> DVector<f64> {
    let a = tanh(affine(w, &format!("{prefix}.fc1"), x));
    let b = tanh(affine(w, &format!("{prefix}.fc2"), &a));
    affine(w, &format!("{prefix}.head"), &b)
}

/// Dense-algebra forward pass of the bidirectional CVAE decoder with `z = mu`.
/// Returns predicted boxes as `[x, y, w, h]` with sizes floored at `eps`.
pub fn bitrap_forward(w: &WeightContainer, observed: &[BoundingBox], delta: usize, eps: f64) -> Vec<[f64; 4]> {
    let cfg = w.config();
    let hdim = cfg.hidden_size;
    let ldim = cfg.latent_dim;

    let mut h = DVector::zeros(hdim);
    for (i, b) in observed.iter().enumerate() {
        let p = if i == 0 { b } else { &observed[i - 1] };
        let feat = DVector::from_vec(vec![b.x - p.x, b.y - p.y, b.w - p.w, b.h - p.h, b.w, b.h]);
        let x = tanh(affine(w, "enc.embed", &feat));
        h = gru(w, "enc.gru", &x, &h);
    }

    let prior = mlp3(w, "prior", &h);
    let mu = prior.rows(0, ldim).into_owned();
    let mut hz = DVector::zeros(hdim + ldim);
    hz.rows_mut(0, hdim).copy_from(&h);
    hz.rows_mut(hdim, ldim).copy_from(&mu);
    let goal = mlp3(w, "goal", &hz);

    let goal_in = tanh(affine(w, "dec.bwd.embed", &goal));
    let mut hb = tanh(affine(w, "dec.bwd.init", &h));
    let mut backward = vec![DVector::zeros(hdim); delta];
    for k in (0..delta).rev() {
        hb = gru(w, "dec.bwd.gru", &goal_in, &hb);
        backward[k] = hb.clone();
    }

    let last = observed.last().unwrap();
    let mut hf = h.clone();
    let mut acc = DVector::<f64>::zeros(4);
    let mut out = Vec::with_capacity(delta);
    for hb in &backward {
        let x = tanh(affine(w, "dec.fwd.embed", &hf));
        hf = gru(w, "dec.fwd.gru", &x, &hf);
        let mut cat = DVector::zeros(2 * hdim);
        cat.rows_mut(0, hdim).copy_from(&hf);
        cat.rows_mut(hdim, hdim).copy_from(hb);
        acc += affine(w, "dec.head", &cat);
        out.push([
            last.x + acc[0],
            last.y + acc[1],
            (last.w + acc[2]).max(eps),
            (last.h + acc[3]).max(eps),
        ]);
    }
    out
}
