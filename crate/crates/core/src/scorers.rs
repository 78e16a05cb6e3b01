//! Differentiable image scorers and evaluation-only image factors.
//!
//! Scorers stand in for pretrained assessors: each one maps an image to a
//! differentiable scalar nominally in [0, 1], so a learned model could be
//! slotted in behind the same interface later. The evaluation-only metrics
//! (entropy, mask moments) are plain functions of pixel values.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::generator::{ImageTensor, Rendered};

/// Grayscale transform weights (ITU-R BT.601 luma).
pub const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];
/// Redness relaxation: sigmoid sharpness, dominance margin, and the
/// log-sum-exp temperature of the soft max over G and B.
pub const REDNESS_SHARPNESS: f64 = 20.0;
pub const REDNESS_MARGIN: f64 = 0.1;
pub const REDNESS_LSE_TEMP: f64 = 0.05;
/// Colorfulness rescale keeping the metric's ceiling near 1.
pub const COLORFULNESS_SCALE: f64 = 1.0 / 1.3;

/// The built-in differentiable scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    /// Mean grayscale value.
    Brightness,
    /// Smooth fraction of pixels whose red channel dominates green/blue.
    Redness,
    /// Opponent-channel spread (rg / yb statistics), rescaled.
    Colorfulness,
    /// Mean of the renderer's soft foreground mask.
    ObjectSize,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [
        ScorerKind::Brightness,
        ScorerKind::Redness,
        ScorerKind::Colorfulness,
        ScorerKind::ObjectSize,
    ];

    /// Score a rendered sample on the tape, differentiably.
    pub fn score_on_tape(&self, tape: &mut Tape, rendered: &Rendered) -> Result<NodeId> {
        match self {
            ScorerKind::Brightness => score_brightness(tape, rendered.image),
            ScorerKind::Redness => score_redness(tape, rendered.image),
            ScorerKind::Colorfulness => score_colorfulness(tape, rendered.image),
            ScorerKind::ObjectSize => score_object_size(tape, rendered.image, rendered.mask),
        }
    }

    /// Score an already-rendered image off-tape.
    pub fn score(&self, image: &ImageTensor, mask: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let rendered = Rendered {
            image: tape.leaf(image.pixels().clone()),
            mask: tape.leaf(mask.clone()),
        };
        let node = self.score_on_tape(&mut tape, &rendered)?;
        tape.value(node).as_scalar()
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ScorerKind::Brightness => "brightness",
            ScorerKind::Redness => "redness",
            ScorerKind::Colorfulness => "colorfulness",
            ScorerKind::ObjectSize => "object_size",
        };
        f.write_str(name)
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(ScorerKind::Brightness),
            "redness" => Ok(ScorerKind::Redness),
            "colorfulness" => Ok(ScorerKind::Colorfulness),
            "object_size" => Ok(ScorerKind::ObjectSize),
            other => Err(Error::Config(format!(
                "unknown scorer '{other}' (expected brightness, redness, colorfulness, object_size)"
            ))),
        }
    }
}

// ── Shared tape helpers ─────────────────────────────────────────────────

fn image_as_rows(tape: &mut Tape, image: NodeId) -> Result<(NodeId, usize)> {
    let shape = tape.value(image).shape().to_vec();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::InvalidShape {
            op: "scorer",
            shape,
            reason: "expected [H, W, 3] image".into(),
        });
    }
    let n = shape[0] * shape[1];
    let flat = tape.reshape(image, vec![n, 3])?;
    Ok((flat, n))
}

/// Extract one channel of an `[n, 3]` pixel matrix as an `[n]` vector.
fn channel(tape: &mut Tape, flat: NodeId, n: usize, ch: usize) -> Result<NodeId> {
    let mut sel = [0.0; 3];
    sel[ch] = 1.0;
    let sel = tape.leaf(Tensor::new(vec![3, 1], sel.to_vec())?);
    let col = tape.matmul(flat, sel)?;
    tape.reshape(col, vec![n])
}

// ── Differentiable scorers ──────────────────────────────────────────────

/// Mean over pixels of `0.299 R + 0.587 G + 0.114 B`.
pub fn score_brightness(tape: &mut Tape, image: NodeId) -> Result<NodeId> {
    let (flat, _) = image_as_rows(tape, image)?;
    let weights = tape.leaf(Tensor::new(vec![3, 1], GRAY_WEIGHTS.to_vec())?);
    let gray = tape.matmul(flat, weights)?;
    tape.mean(gray)
}

/// Smooth red-dominance test, averaged over pixels:
/// `sigmoid(s * (R - lse_t(G, B) - margin))` with `lse_t` the log-sum-exp
/// soft maximum at temperature `t`.
pub fn score_redness(tape: &mut Tape, image: NodeId) -> Result<NodeId> {
    let (flat, n) = image_as_rows(tape, image)?;
    let r = channel(tape, flat, n, 0)?;
    let g = channel(tape, flat, n, 1)?;
    let b = channel(tape, flat, n, 2)?;

    let inv_t = tape.scalar(1.0 / REDNESS_LSE_TEMP)?;
    let t = tape.scalar(REDNESS_LSE_TEMP)?;
    let gs = tape.mul(g, inv_t)?;
    let bs = tape.mul(b, inv_t)?;
    let eg = tape.exp(gs)?;
    let eb = tape.exp(bs)?;
    let sum = tape.add(eg, eb)?;
    let lse = tape.ln(sum)?;
    let soft_max = tape.mul(lse, t)?;

    let margin = tape.scalar(REDNESS_MARGIN)?;
    let dom = tape.sub(r, soft_max)?;
    let dom = tape.sub(dom, margin)?;
    let sharp = tape.scalar(REDNESS_SHARPNESS)?;
    let arg = tape.mul(dom, sharp)?;
    let red = tape.sigmoid(arg)?;
    tape.mean(red)
}

/// Opponent-channel colorfulness: with `rg = R - G` and
/// `yb = (R + G)/2 - B` per pixel,
/// `M = sqrt(var(rg) + var(yb)) + 0.3 sqrt(mean(rg)^2 + mean(yb)^2)`,
/// returned as `M / 1.3`.
pub fn score_colorfulness(tape: &mut Tape, image: NodeId) -> Result<NodeId> {
    let (flat, n) = image_as_rows(tape, image)?;
    if n < 2 {
        return Err(Error::InvalidShape {
            op: "colorfulness",
            shape: tape.value(image).shape().to_vec(),
            reason: "needs at least 2 pixels".into(),
        });
    }
    let r = channel(tape, flat, n, 0)?;
    let g = channel(tape, flat, n, 1)?;
    let b = channel(tape, flat, n, 2)?;

    let rg = tape.sub(r, g)?;
    let half = tape.scalar(0.5)?;
    let rpg = tape.add(r, g)?;
    let rpg_half = tape.mul(rpg, half)?;
    let yb = tape.sub(rpg_half, b)?;

    // var(x) = mean(x^2) - mean(x)^2
    let var_of = |tape: &mut Tape, x: NodeId| -> Result<(NodeId, NodeId)> {
        let x2 = tape.square(x)?;
        let m2 = tape.mean(x2)?;
        let m = tape.mean(x)?;
        let msq = tape.square(m)?;
        Ok((tape.sub(m2, msq)?, m))
    };
    let (var_rg, mean_rg) = var_of(tape, rg)?;
    let (var_yb, mean_yb) = var_of(tape, yb)?;

    let var_sum = tape.add(var_rg, var_yb)?;
    // clamp tiny negative rounding before the root
    let var_sum = tape.relu(var_sum)?;
    let std_term = tape.sqrt(var_sum)?;

    let mrg2 = tape.square(mean_rg)?;
    let myb2 = tape.square(mean_yb)?;
    let mean_mag = tape.add(mrg2, myb2)?;
    let mean_term = tape.sqrt(mean_mag)?;
    let k = tape.scalar(0.3)?;
    let mean_term = tape.mul(mean_term, k)?;

    let m = tape.add(std_term, mean_term)?;
    let scale = tape.scalar(COLORFULNESS_SCALE)?;
    tape.mul(m, scale)
}

/// Mean of the soft foreground mask.
pub fn score_object_size(tape: &mut Tape, image: NodeId, mask: NodeId) -> Result<NodeId> {
    let ishape = tape.value(image).shape().to_vec();
    let mshape = tape.value(mask).shape().to_vec();
    if ishape.len() != 3 || mshape.len() != 2 || ishape[0] != mshape[0] || ishape[1] != mshape[1] {
        return Err(Error::ShapeMismatch {
            op: "object_size",
            lhs: ishape,
            rhs: mshape,
        });
    }
    tape.mean(mask)
}

// ── Evaluation-only factors ─────────────────────────────────────────────

/// Shannon entropy (base 2) of the hard-binned grayscale histogram.
/// Zero-count bins contribute nothing. Evaluation-only: hard binning has
/// no useful gradient.
pub fn metric_entropy(image: &ImageTensor, bins: usize) -> f64 {
    assert!(bins >= 2, "entropy needs at least 2 bins");
    let side = image.side();
    let mut counts = vec![0usize; bins];
    for r in 0..side {
        for c in 0..side {
            let gray = GRAY_WEIGHTS[0] * image.at(r, c, 0)
                + GRAY_WEIGHTS[1] * image.at(r, c, 1)
                + GRAY_WEIGHTS[2] * image.at(r, c, 2);
            let bin = ((gray * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
        }
    }
    let total = (side * side) as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Moment summary of a soft mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskMoments {
    /// Soft area as a fraction of the frame, in [0, 1].
    pub area: f64,
    /// Mask-weighted centroid in fractional coordinates.
    pub centroid_x: f64,
    pub centroid_y: f64,
    /// sqrt of the minor/major eigenvalue ratio of the second-moment
    /// matrix, in [0, 1]; 1 for a circle.
    pub minor_major_ratio: f64,
    /// Distance of the centroid from the frame center (0.5, 0.5);
    /// lower means more centered.
    pub centeredness: f64,
}

/// Centroid, central second moments, and derived axis statistics of a
/// soft mask. Errors when the total mask weight is below 1e-9.
pub fn mask_moments(mask: &Tensor) -> Result<MaskMoments> {
    let shape = mask.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidShape {
            op: "mask_moments",
            shape: shape.to_vec(),
            reason: "expected [H, W] mask".into(),
        });
    }
    let (h, w) = (shape[0], shape[1]);
    let data = mask.data();
    let total: f64 = data.iter().sum();
    if total <= 1e-9 {
        return Err(Error::DegenerateMask { sum: total });
    }

    let coord = |i: usize, n: usize| (i as f64 + 0.5) / n as f64;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for r in 0..h {
        for c in 0..w {
            let m = data[r * w + c];
            cx += m * coord(c, w);
            cy += m * coord(r, h);
        }
    }
    cx /= total;
    cy /= total;

    let mut mu20 = 0.0;
    let mut mu02 = 0.0;
    let mut mu11 = 0.0;
    for r in 0..h {
        for c in 0..w {
            let m = data[r * w + c];
            let dx = coord(c, w) - cx;
            let dy = coord(r, h) - cy;
            mu20 += m * dx * dx;
            mu02 += m * dy * dy;
            mu11 += m * dx * dy;
        }
    }
    mu20 /= total;
    mu02 /= total;
    mu11 /= total;

    // eigenvalues of [[mu20, mu11], [mu11, mu02]]
    let mid = 0.5 * (mu20 + mu02);
    let diff = 0.5 * (mu20 - mu02);
    let root = (diff * diff + mu11 * mu11).sqrt();
    let lam_max = mid + root;
    let lam_min = (mid - root).max(0.0);
    let ratio = if lam_max > 0.0 {
        (lam_min / lam_max).sqrt()
    } else {
        1.0
    };

    Ok(MaskMoments {
        area: total / (h * w) as f64,
        centroid_x: cx,
        centroid_y: cy,
        minor_major_ratio: ratio,
        centeredness: ((cx - 0.5).powi(2) + (cy - 0.5).powi(2)).sqrt(),
    })
}
