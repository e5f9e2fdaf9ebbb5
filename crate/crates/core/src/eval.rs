//! Conditioning-quality metrics: per-class classification reports, a
//! Frechet distance over classifier features, latent-space diagnostics,
//! and PPM grid export for eyeballing samples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{Dataset, IMG_PIXELS, IMG_SIDE};
use crate::error::{Error, Result};
use crate::linalg::{matmul_sq, sqrt_psd, trace_sqrt_psd};
use crate::nets::{argmax, ClassifierNet, InputGeneratorNet, FEATURE_DIM};
use crate::tensor::{one_hot, Tensor};

/// Largest feature dimension [`frechet_distance`] accepts; matches the
/// classifier's penultimate width.
pub const FD_MAX_DIM: usize = 16;

// ── Classification report ───────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub n: usize,
    pub k: usize,
}

/// Precision/recall/F1 per class plus macro and support-weighted averages.
/// Zero denominators yield zero metrics rather than NaN.
pub fn classification_report(y_true: &[u8], y_pred: &[u8], k: usize) -> Result<ClassReport> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::Validation(format!(
            "classification_report needs equal non-empty label lists, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if k == 0 {
        return Err(Error::Validation("class count must be positive".into()));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&l| (l as usize) >= k) {
        return Err(Error::Validation(format!(
            "label {bad} is out of range for k={k}"
        )));
    }

    let n = y_true.len();
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }

    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: tp[c] + fn_[c],
            }
        })
        .collect();

    let total_tp: usize = tp.iter().sum();
    let accuracy = total_tp as f64 / n as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k as f64,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k as f64,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64,
    };
    // Support-weighted recall telescopes to total TP / N; computing it that
    // way keeps the identity with accuracy exact rather than approximate.
    let weighted_avg = Averages {
        precision: per_class
            .iter()
            .map(|m| m.precision * m.support as f64)
            .sum::<f64>()
            / n as f64,
        recall: total_tp as f64 / n as f64,
        f1: per_class
            .iter()
            .map(|m| m.f1 * m.support as f64)
            .sum::<f64>()
            / n as f64,
    };

    Ok(ClassReport {
        per_class,
        accuracy,
        macro_avg,
        weighted_avg,
        n,
        k,
    })
}

impl ClassReport {
    /// Aligned text table: one row per class, then accuracy, macro and
    /// weighted averages.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>12} {:>10} {:>10} {:>10} {:>10}\n",
            "", "precision", "recall", "f1-score", "support"
        ));
        for (c, m) in self.per_class.iter().enumerate() {
            out.push_str(&format!(
                "{:>12} {:>10.2} {:>10.2} {:>10.2} {:>10}\n",
                c, m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!(
            "\n{:>12} {:>10} {:>10} {:>10.2} {:>10}\n",
            "accuracy", "", "", self.accuracy, self.n
        ));
        out.push_str(&format!(
            "{:>12} {:>10.2} {:>10.2} {:>10.2} {:>10}\n",
            "macro avg", self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1, self.n
        ));
        out.push_str(&format!(
            "{:>12} {:>10.2} {:>10.2} {:>10.2} {:>10}\n",
            "weighted avg",
            self.weighted_avg.precision,
            self.weighted_avg.recall,
            self.weighted_avg.f1,
            self.n
        ));
        out
    }
}

// ── Frechet distance ────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FdResult {
    pub distance: f64,
    pub feature_dim: usize,
    pub n_real: usize,
    pub n_gen: usize,
}

fn mean_and_cov(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let data = x.data();
    let mut mean = vec![0.0; d];
    for row in 0..n {
        for j in 0..d {
            mean[j] += data[row * d + j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Unbiased covariance (divides by n - 1).
    let mut cov = vec![0.0; d * d];
    for row in 0..n {
        for i in 0..d {
            let di = data[row * d + i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (data[row * d + j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

/// Frechet distance between Gaussian fits of two sample sets of shape
/// `[n, d]` and `[m, d]`:
/// `|mu_x - mu_y|^2 + Tr(Sx + Sy - 2 (Sx^{1/2} Sy Sx^{1/2})^{1/2})`.
/// Sampling noise can push the result a hair negative, so it is clamped
/// at zero.
pub fn frechet_distance(x: &Tensor, y: &Tensor) -> Result<FdResult> {
    let (sx, sy) = (x.shape(), y.shape());
    if sx.len() != 2 || sy.len() != 2 || sx[1] != sy[1] {
        return Err(Error::Shape(format!(
            "frechet_distance expects [n, d] and [m, d], got {sx:?} and {sy:?}"
        )));
    }
    let d = sx[1];
    if d > FD_MAX_DIM {
        return Err(Error::Validation(format!(
            "feature dimension {d} exceeds the supported maximum {FD_MAX_DIM}"
        )));
    }
    let (n, m) = (sx[0], sy[0]);
    if n < d + 1 || m < d + 1 {
        return Err(Error::Validation(format!(
            "frechet_distance needs at least d+1={} samples per set, got {n} and {m}",
            d + 1
        )));
    }

    let (mu_x, cov_x) = mean_and_cov(x);
    let (mu_y, cov_y) = mean_and_cov(y);

    let mean_term: f64 = mu_x
        .iter()
        .zip(&mu_y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let trace = |c: &[f64]| (0..d).map(|i| c[i * d + i]).sum::<f64>();

    let sqrt_x = sqrt_psd(&cov_x, d)?;
    let inner = matmul_sq(&sqrt_x, &matmul_sq(&cov_y, &sqrt_x, d), d);
    let cross = trace_sqrt_psd(&inner, d)?;

    let distance = (mean_term + trace(&cov_x) + trace(&cov_y) - 2.0 * cross).max(0.0);
    Ok(FdResult {
        distance,
        feature_dim: d,
        n_real: n,
        n_gen: m,
    })
}

// ── Feature extraction and accuracy ─────────────────────────────────────

/// Nearest-upsamples a batch of `[n, 8, 8]` images by 2 and collects the
/// classifier's penultimate activations into an `[n, 16]` matrix.
pub fn features(clf: &ClassifierNet, images: &Tensor) -> Result<Tensor> {
    let shape = images.shape();
    if shape.len() != 3 || shape[1] != IMG_SIDE || shape[2] != IMG_SIDE {
        return Err(Error::Shape(format!(
            "features expects images of shape [n, {IMG_SIDE}, {IMG_SIDE}], got {shape:?}"
        )));
    }
    let n = shape[0];
    let mut g = Graph::new();
    let nodes = clf.insert(&mut g, false);
    let mut out = Vec::with_capacity(n * FEATURE_DIM);
    for i in 0..n {
        let img = Tensor::new(
            vec![IMG_SIDE, IMG_SIDE],
            images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS].to_vec(),
        )?;
        let node = g.constant(img);
        let up = g.nearest_upsample(node, 2)?;
        let (_, feat) = clf.forward_on(&mut g, &nodes, up)?;
        out.extend_from_slice(g.value(feat).data());
    }
    Tensor::new(vec![n, FEATURE_DIM], out)
}

/// Classifier predictions for a batch of native-resolution images
/// (upsampled by 2 internally).
pub fn predict_batch(clf: &ClassifierNet, images: &Tensor) -> Result<Vec<u8>> {
    let shape = images.shape();
    if shape.len() != 3 || shape[1] != IMG_SIDE || shape[2] != IMG_SIDE {
        return Err(Error::Shape(format!(
            "predict_batch expects images of shape [n, {IMG_SIDE}, {IMG_SIDE}], got {shape:?}"
        )));
    }
    let n = shape[0];
    let mut g = Graph::new();
    let nodes = clf.insert(&mut g, false);
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        let img = Tensor::new(
            vec![IMG_SIDE, IMG_SIDE],
            images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS].to_vec(),
        )?;
        let node = g.constant(img);
        let up = g.nearest_upsample(node, 2)?;
        let (logits, _) = clf.forward_on(&mut g, &nodes, up)?;
        preds.push(argmax(g.value(logits).data()) as u8);
    }
    Ok(preds)
}

/// Fraction of dataset images the classifier labels correctly.
pub fn classifier_accuracy(clf: &ClassifierNet, ds: &Dataset) -> Result<f64> {
    let preds = predict_batch(clf, &ds.images)?;
    let correct = preds.iter().zip(&ds.labels).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / ds.len() as f64)
}

/// 2x2 mean pooling, flattening `[n, 8, 8]` images into `[n, 16]` vectors
/// small enough for [`frechet_distance`]. Used as the pixel-space feature
/// map when no classifier is in play.
pub fn mean_pool2(images: &Tensor) -> Result<Tensor> {
    let shape = images.shape();
    if shape.len() != 3 || shape[1] != IMG_SIDE || shape[2] != IMG_SIDE {
        return Err(Error::Shape(format!(
            "mean_pool2 expects images of shape [n, {IMG_SIDE}, {IMG_SIDE}], got {shape:?}"
        )));
    }
    let n = shape[0];
    let half = IMG_SIDE / 2;
    let mut out = Vec::with_capacity(n * half * half);
    for i in 0..n {
        let img = &images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS];
        for r in 0..half {
            for c in 0..half {
                let mut acc = 0.0;
                for dr in 0..2 {
                    for dc in 0..2 {
                        acc += img[(2 * r + dr) * IMG_SIDE + 2 * c + dc];
                    }
                }
                out.push(acc / 4.0);
            }
        }
    }
    Tensor::new(vec![n, half * half], out)
}

// ── Latent diagnostics ──────────────────────────────────────────────────

/// Per-class latent Gaussian summary: where each class's mean sits, how
/// wide its sigma is, and how far apart the class means are. Tiny sigmas
/// next to large pairwise distances are the collapse signature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatentDiagnostics {
    pub k: usize,
    pub mu: Vec<Vec<f64>>,
    pub mean_sigma: Vec<f64>,
    pub mu_distances: Vec<Vec<f64>>,
}

pub fn latent_diagnostics(ig: &InputGeneratorNet) -> Result<LatentDiagnostics> {
    let k = ig.k;
    let mut mu = Vec::with_capacity(k);
    let mut mean_sigma = Vec::with_capacity(k);
    for c in 0..k {
        let (m, s) = ig.forward(&one_hot(k, c)?)?;
        mean_sigma.push(s.data().iter().sum::<f64>() / s.numel() as f64);
        mu.push(m.data().to_vec());
    }
    let mut mu_distances = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let dist: f64 = mu[a]
                .iter()
                .zip(&mu[b])
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            mu_distances[a][b] = dist;
            mu_distances[b][a] = dist;
        }
    }
    Ok(LatentDiagnostics {
        k,
        mu,
        mean_sigma,
        mu_distances,
    })
}

// ── PPM export ──────────────────────────────────────────────────────────

/// Writes a binary PPM (P6) tiling of `[n, 8, 8]` images, `cols` per row,
/// with 1-pixel black separators between tiles and grayscale replicated to
/// RGB. Empty trailing cells stay black.
pub fn export_grid_ppm(images: &Tensor, cols: usize, path: &Path) -> Result<()> {
    let shape = images.shape();
    if shape.len() != 3 || shape[1] != IMG_SIDE || shape[2] != IMG_SIDE {
        return Err(Error::Shape(format!(
            "export_grid_ppm expects images of shape [n, {IMG_SIDE}, {IMG_SIDE}], got {shape:?}"
        )));
    }
    let n = shape[0];
    if cols == 0 {
        return Err(Error::Validation("grid needs cols >= 1".into()));
    }
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let width = cols * IMG_SIDE + (cols - 1);
    let height = rows * IMG_SIDE + (rows - 1);

    let mut canvas = vec![0u8; width * height];
    for i in 0..n {
        let (tile_r, tile_c) = (i / cols, i % cols);
        let (r0, c0) = (tile_r * (IMG_SIDE + 1), tile_c * (IMG_SIDE + 1));
        let img = &images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS];
        for r in 0..IMG_SIDE {
            for c in 0..IMG_SIDE {
                let v = (255.0 * img[r * IMG_SIDE + c].clamp(0.0, 1.0)).round() as u8;
                canvas[(r0 + r) * width + c0 + c] = v;
            }
        }
    }

    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(canvas.len() * 3);
    for v in canvas {
        bytes.extend_from_slice(&[v, v, v]);
    }
    fs::write(path, bytes)?;
    Ok(())
}
