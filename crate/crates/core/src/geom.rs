//! Center-format bounding boxes and the three prediction-error measures.
//!
//! `m1 = 1 - IoU`, `m2 = 1 - GIoU` and `m3 = ||gt - pred||_2` over the raw
//! `(x, y, w, h)` vector. Everything is `f64`; no pixel snapping.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("non-finite box field in {0}")]
    NonFinite(BoundingBox),
    #[error("box {0} has non-positive width or height")]
    NonPositiveSize(BoundingBox),
    #[error("unknown error measure `{0}` (expected m1, m2 or m3)")]
    UnknownMeasure(String),
}

/// Axis-aligned box stored by its center `(x, y)` and size `(w, h)`, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner form `(x1, y1)`-`(x2, y2)` with `x1 <= x2`, `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[x={}, y={}, w={}, h={}]", self.x, self.y, self.w, self.h)
    }
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_tlwh(left: f64, top: f64, w: f64, h: f64) -> Self {
        Self::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    pub fn from_corners(c: Corners) -> Self {
        let w = c.x2 - c.x1;
        let h = c.y2 - c.y1;
        Self::new(c.x1 + w / 2.0, c.y1 + h / 2.0, w, h)
    }

    pub fn corners(&self) -> Corners {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        Corners {
            x1: self.x - hw,
            y1: self.y - hh,
            x2: self.x + hw,
            y2: self.y + hh,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks the box is usable by the overlap measures.
    pub fn validate(&self) -> Result<(), GeomError> {
        if !self.is_finite() {
            return Err(GeomError::NonFinite(*self));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeomError::NonPositiveSize(*self));
        }
        Ok(())
    }

    /// Returns a copy with width and height raised to at least `min_size`.
    pub fn clamp_size(self, min_size: f64) -> Self {
        Self {
            w: self.w.max(min_size),
            h: self.h.max(min_size),
            ..self
        }
    }

    pub fn translate(self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..self
        }
    }
}

impl Corners {
    pub fn contains(&self, other: &Corners) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Smallest axis-aligned box containing both `a` and `b`.
pub fn enclosing(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    let ca = a.corners();
    let cb = b.corners();
    BoundingBox::from_corners(Corners {
        x1: ca.x1.min(cb.x1),
        y1: ca.y1.min(cb.y1),
        x2: ca.x2.max(cb.x2),
        y2: ca.y2.max(cb.y2),
    })
}

struct Overlap {
    intersection: f64,
    union: f64,
    enclosing: f64,
}

fn overlap(a: &BoundingBox, b: &BoundingBox) -> Result<Overlap, GeomError> {
    a.validate()?;
    b.validate()?;
    let ca = a.corners();
    let cb = b.corners();
    // a shared edge gives zero width here, hence zero intersection
    let iw = (ca.x2.min(cb.x2) - ca.x1.max(cb.x1)).max(0.0);
    let ih = (ca.y2.min(cb.y2) - ca.y1.max(cb.y1)).max(0.0);
    let intersection = iw * ih;
    let union = ca.area() + cb.area() - intersection;
    let enclosing = Corners {
        x1: ca.x1.min(cb.x1),
        y1: ca.y1.min(cb.y1),
        x2: ca.x2.max(cb.x2),
        y2: ca.y2.max(cb.y2),
    }
    .area();
    Ok(Overlap {
        intersection,
        union,
        enclosing,
    })
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, GeomError> {
    let o = overlap(a, b)?;
    Ok(o.intersection / o.union)
}

/// Generalized IoU: `IoU - (|C| - |a ∪ b|) / |C|` with `C` the enclosing box.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, GeomError> {
    let o = overlap(a, b)?;
    let iou = o.intersection / o.union;
    // C always covers the union; clamp away rounding below zero.
    let slack = (o.enclosing - o.union).max(0.0);
    Ok(iou - slack / o.enclosing)
}

pub fn measure_m1(gt: &BoundingBox, pred: &BoundingBox) -> Result<f64, GeomError> {
    Ok(1.0 - iou(gt, pred)?)
}

pub fn measure_m2(gt: &BoundingBox, pred: &BoundingBox) -> Result<f64, GeomError> {
    Ok(1.0 - giou(gt, pred)?)
}

/// Euclidean distance between the center-format 4-vectors.
pub fn measure_m3(gt: &BoundingBox, pred: &BoundingBox) -> Result<f64, GeomError> {
    for b in [gt, pred] {
        if !b.is_finite() {
            return Err(GeomError::NonFinite(*b));
        }
    }
    let g = gt.to_array();
    let p = pred.to_array();
    let sq: f64 = g.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq.sqrt())
}

/// Which prediction-error measure to apply per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// `1 - IoU`
    M1,
    /// `1 - GIoU`
    M2,
    /// L2 norm of the box difference
    M3,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::M1, Measure::M2, Measure::M3];

    pub fn eval(self, gt: &BoundingBox, pred: &BoundingBox) -> Result<f64, GeomError> {
        match self {
            Measure::M1 => measure_m1(gt, pred),
            Measure::M2 => measure_m2(gt, pred),
            Measure::M3 => measure_m3(gt, pred),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::M1 => "m1",
            Measure::M2 => "m2",
            Measure::M3 => "m3",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" => Ok(Measure::M1),
            "m2" => Ok(Measure::M2),
            "m3" => Ok(Measure::M3),
            other => Err(GeomError::UnknownMeasure(other.to_string())),
        }
    }
}
