//! Detector-head kernels: ground-truth center heatmaps, the multi-task loss
//! and its gradients, output activations, peak decoding and yaw encoding.

use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::error::{Error, Result};

/// Channel-major raster (`C × H × W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self { channels, height, width, data }
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.height + i) * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.index(c, i, j);
        self.data[k] = v;
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn same_plane(&self, other: &Heatmap, what: &str) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Heatmap, what: &str) -> Result<()> {
        self.same_plane(other, what)?;
        if self.channels != other.channels {
            return Err(Error::ShapeMismatch(format!("{what}: {} vs {} channels", self.channels, other.channels)));
        }
        Ok(())
    }
}

/// Annotated object in image space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub bottom_center: PixelPoint,
    /// Bounding-box diagonal in pixels.
    pub diag_px: f64,
    /// Metric `(w, l[, h])` or pixel `(w, h)` box size.
    pub size: Vec<f64>,
    pub yaw: f64,
    pub class_id: usize,
}

impl GtObject {
    /// Gaussian spread: half the square root of the diagonal.
    pub fn sigma(&self) -> f64 {
        0.5 * self.diag_px.sqrt()
    }
}

/// Sum of per-object Gaussians around each bottom center, clamped to `[0, 1]`.
/// Objects are summed in a canonical order so the result does not depend on
/// the order of `objects`.
pub fn gt_center_heatmap(objects: &[GtObject], height: usize, width: usize) -> Heatmap {
    let mut sorted: Vec<&GtObject> = objects.iter().filter(|o| o.diag_px > 0.0).collect();
    sorted.sort_by(|a, b| {
        a.bottom_center
            .u
            .total_cmp(&b.bottom_center.u)
            .then(a.bottom_center.v.total_cmp(&b.bottom_center.v))
            .then(a.diag_px.total_cmp(&b.diag_px))
    });
    let mut map = Heatmap::zeros(1, height, width);
    for o in sorted {
        let s2 = o.sigma().powi(2);
        for i in 0..height {
            let dv = i as f64 - o.bottom_center.v;
            for j in 0..width {
                let du = j as f64 - o.bottom_center.u;
                let k = map.index(0, i, j);
                map.data[k] += (-(du * du + dv * dv) / s2).exp();
            }
        }
    }
    for v in &mut map.data {
        *v = v.clamp(0.0, 1.0);
    }
    map
}

/// Number of pixels kept by hard-example selection.
pub fn topk_count(frac: f64, n: usize) -> usize {
    let k = (frac * n as f64 * (1.0 - 1e-12)).ceil() as usize;
    k.clamp(1, n.max(1))
}

fn topk_indices(errors: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, |&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
        idx.truncate(k);
    }
    idx
}

/// Mean of the `⌈frac·N⌉` largest per-pixel squared errors.
pub fn center_loss(pred: &Heatmap, gt: &Heatmap, topk_frac: f64) -> Result<f64> {
    pred.same_shape(gt, "center loss")?;
    check_frac(topk_frac)?;
    if pred.data.is_empty() {
        return Ok(0.0);
    }
    let errors: Vec<f64> = pred.data.iter().zip(&gt.data).map(|(p, g)| (p - g).powi(2)).collect();
    let k = topk_count(topk_frac, errors.len());
    Ok(topk_indices(&errors, k).iter().map(|&i| errors[i]).sum::<f64>() / k as f64)
}

pub fn center_loss_grad(pred: &Heatmap, gt: &Heatmap, topk_frac: f64) -> Result<Heatmap> {
    pred.same_shape(gt, "center loss")?;
    check_frac(topk_frac)?;
    let mut grad = Heatmap::zeros(pred.channels, pred.height, pred.width);
    if pred.data.is_empty() {
        return Ok(grad);
    }
    let errors: Vec<f64> = pred.data.iter().zip(&gt.data).map(|(p, g)| (p - g).powi(2)).collect();
    let k = topk_count(topk_frac, errors.len());
    for i in topk_indices(&errors, k) {
        grad.data[i] = 2.0 * (pred.data[i] - gt.data[i]) / k as f64;
    }
    Ok(grad)
}

fn check_frac(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidParameter(format!("topk fraction must lie in (0, 1], got {f}")));
    }
    Ok(())
}

fn check_weight(weight: &Heatmap) -> Result<()> {
    if weight.channels != 1 {
        return Err(Error::ShapeMismatch(format!("weight needs 1 channel, got {}", weight.channels)));
    }
    Ok(())
}

/// Weighted log-size and pose regression terms, each averaged over all pixels.
pub fn size_pose_loss(
    pred_size: &Heatmap,
    pred_pose: &Heatmap,
    gt_size: &Heatmap,
    gt_pose: &Heatmap,
    weight: &Heatmap,
) -> Result<(f64, f64)> {
    check_weight(weight)?;
    pred_size.same_shape(gt_size, "size loss")?;
    pred_pose.same_shape(gt_pose, "pose loss")?;
    pred_size.same_plane(weight, "size weight")?;
    pred_pose.same_plane(weight, "pose weight")?;
    let n = weight.pixels() as f64;
    if n == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (mut size, mut pose) = (0.0, 0.0);
    for i in 0..weight.height {
        for j in 0..weight.width {
            let w = weight.get(0, i, j);
            if w == 0.0 {
                continue;
            }
            for c in 0..pred_size.channels {
                let (p, g) = (pred_size.get(c, i, j), gt_size.get(c, i, j));
                if !(p > 0.0 && g > 0.0) {
                    return Err(Error::NonPositiveSize { row: i, col: j });
                }
                size += w * (p.ln() - g.ln()).powi(2);
            }
            for c in 0..pred_pose.channels {
                pose += w * (pred_pose.get(c, i, j) - gt_pose.get(c, i, j)).powi(2);
            }
        }
    }
    Ok((size / n, pose / n))
}

/// Gradients of the two [`size_pose_loss`] terms with respect to the predictions.
pub fn size_pose_loss_grad(
    pred_size: &Heatmap,
    pred_pose: &Heatmap,
    gt_size: &Heatmap,
    gt_pose: &Heatmap,
    weight: &Heatmap,
) -> Result<(Heatmap, Heatmap)> {
    size_pose_loss(pred_size, pred_pose, gt_size, gt_pose, weight)?;
    let n = weight.pixels() as f64;
    let mut gs = Heatmap::zeros(pred_size.channels, pred_size.height, pred_size.width);
    let mut gp = Heatmap::zeros(pred_pose.channels, pred_pose.height, pred_pose.width);
    for i in 0..weight.height {
        for j in 0..weight.width {
            let w = weight.get(0, i, j);
            if w == 0.0 {
                continue;
            }
            for c in 0..pred_size.channels {
                let (p, g) = (pred_size.get(c, i, j), gt_size.get(c, i, j));
                gs.set(c, i, j, 2.0 * w * (p.ln() - g.ln()) / (p * n));
            }
            for c in 0..pred_pose.channels {
                gp.set(c, i, j, 2.0 * w * (pred_pose.get(c, i, j) - gt_pose.get(c, i, j)) / n);
            }
        }
    }
    Ok((gs, gp))
}

const LOG_FLOOR: f64 = 1e-12;
const NORM_TOL: f64 = 1e-6;

/// Weighted cross-entropy of per-pixel class probabilities, averaged over pixels.
pub fn type_loss(pred: &Heatmap, gt_onehot: &Heatmap, weight: &Heatmap) -> Result<f64> {
    check_weight(weight)?;
    pred.same_shape(gt_onehot, "type loss")?;
    pred.same_plane(weight, "type weight")?;
    let n = weight.pixels() as f64;
    if n == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..weight.height {
        for j in 0..weight.width {
            let w = weight.get(0, i, j);
            if w == 0.0 {
                continue;
            }
            let sum: f64 = (0..pred.channels).map(|c| pred.get(c, i, j)).sum();
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized { row: i, col: j, sum });
            }
            let ce: f64 = (0..pred.channels)
                .map(|c| -gt_onehot.get(c, i, j) * pred.get(c, i, j).max(LOG_FLOOR).ln())
                .sum();
            total += w * ce;
        }
    }
    Ok(total / n)
}

/// Gradient of [`type_loss`] with respect to the logits feeding a per-pixel
/// softmax whose output is `probs`.
pub fn type_loss_grad_logits(probs: &Heatmap, gt_onehot: &Heatmap, weight: &Heatmap) -> Result<Heatmap> {
    type_loss(probs, gt_onehot, weight)?;
    let n = weight.pixels() as f64;
    let mut g = Heatmap::zeros(probs.channels, probs.height, probs.width);
    for i in 0..weight.height {
        for j in 0..weight.width {
            let w = weight.get(0, i, j);
            if w == 0.0 {
                continue;
            }
            let gsum: f64 = (0..probs.channels).map(|c| gt_onehot.get(c, i, j)).sum();
            for c in 0..probs.channels {
                g.set(c, i, j, w * (probs.get(c, i, j) * gsum - gt_onehot.get(c, i, j)) / n);
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub topk_frac: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { beta1: 0.01, beta2: 0.01, beta3: 0.01, topk_frac: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub center: f64,
    pub size: f64,
    pub pose: f64,
    pub class: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.center + w.beta1 * parts.size + w.beta2 * parts.pose + w.beta3 * parts.class
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Applies `f` to every element.
pub fn map_heatmap(h: &Heatmap, f: impl Fn(f64) -> f64) -> Heatmap {
    Heatmap { data: h.data.iter().map(|&v| f(v)).collect(), ..h.clone() }
}

/// Per-pixel softmax across channels.
pub fn softmax_channels(logits: &Heatmap) -> Heatmap {
    let mut out = logits.clone();
    for i in 0..logits.height {
        for j in 0..logits.width {
            let m = (0..logits.channels).map(|c| logits.get(c, i, j)).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..logits.channels).map(|c| (logits.get(c, i, j) - m).exp()).sum();
            for c in 0..logits.channels {
                out.set(c, i, j, (logits.get(c, i, j) - m).exp() / sum);
            }
        }
    }
    out
}

/// Raw outputs of the four detector heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLogits {
    pub center: Heatmap,
    pub size: Heatmap,
    pub pose: Heatmap,
    pub class: Heatmap,
}

/// Activated head outputs: sigmoid centers, ReLU sizes, tanh pose, softmax classes.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub center: Heatmap,
    pub size: Heatmap,
    pub pose: Heatmap,
    pub class: Heatmap,
}

impl HeadLogits {
    pub fn activate(&self) -> HeadOutputs {
        HeadOutputs {
            center: map_heatmap(&self.center, sigmoid),
            size: map_heatmap(&self.size, relu),
            pose: map_heatmap(&self.pose, f64::tanh),
            class: softmax_channels(&self.class),
        }
    }
}

/// Training targets for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub center: Heatmap,
    pub size: Heatmap,
    pub pose: Heatmap,
    pub class_onehot: Heatmap,
}

impl Targets {
    /// Dense targets: each pixel takes the attributes of the nearest object.
    pub fn from_objects(objects: &[GtObject], height: usize, width: usize, classes: usize) -> Result<Targets> {
        let size_ch = objects.first().map_or(2, |o| o.size.len());
        if objects.iter().any(|o| o.size.len() != size_ch || o.size.iter().any(|&s| !(s > 0.0))) {
            return Err(Error::InvalidParameter("objects need positive sizes of equal dimension".into()));
        }
        if let Some(o) = objects.iter().find(|o| o.class_id >= classes) {
            return Err(Error::InvalidParameter(format!("class {} out of range", o.class_id)));
        }
        let center = gt_center_heatmap(objects, height, width);
        let mut size = Heatmap::filled(size_ch, height, width, 1.0);
        let mut pose = Heatmap::zeros(2, height, width);
        let mut class_onehot = Heatmap::zeros(classes, height, width);
        for i in 0..height {
            for j in 0..width {
                let p = PixelPoint::new(j as f64, i as f64);
                let Some(o) = objects
                    .iter()
                    .min_by(|a, b| a.bottom_center.distance(&p).total_cmp(&b.bottom_center.distance(&p)))
                else {
                    continue;
                };
                for (c, &s) in o.size.iter().enumerate() {
                    size.set(c, i, j, s);
                }
                let (s, co) = yaw_encode(o.yaw);
                pose.set(0, i, j, s);
                pose.set(1, i, j, co);
                class_onehot.set(o.class_id, i, j, 1.0);
            }
        }
        Ok(Targets { center, size, pose, class_onehot })
    }
}

/// Multi-task loss with the ground-truth center heatmap as the regression weight.
pub fn multitask_loss(out: &HeadOutputs, gt: &Targets, w: &LossWeights) -> Result<(LossParts, f64)> {
    let center = center_loss(&out.center, &gt.center, w.topk_frac)?;
    let (size, pose) = size_pose_loss(&out.size, &out.pose, &gt.size, &gt.pose, &gt.center)?;
    let class = type_loss(&out.class, &gt.class_onehot, &gt.center)?;
    let parts = LossParts { center, size, pose, class };
    Ok((parts, total_loss(&parts, w)))
}

/// Gradient of the total loss with respect to the activated center, size and
/// pose outputs and the class logits.
pub fn multitask_loss_grad(out: &HeadOutputs, gt: &Targets, w: &LossWeights) -> Result<HeadOutputs> {
    let center = center_loss_grad(&out.center, &gt.center, w.topk_frac)?;
    let (gs, gp) = size_pose_loss_grad(&out.size, &out.pose, &gt.size, &gt.pose, &gt.center)?;
    let gc = type_loss_grad_logits(&out.class, &gt.class_onehot, &gt.center)?;
    Ok(HeadOutputs {
        center,
        size: map_heatmap(&gs, |v| w.beta1 * v),
        pose: map_heatmap(&gp, |v| w.beta2 * v),
        class: map_heatmap(&gc, |v| w.beta3 * v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub pixel: PixelPoint,
    pub score: f64,
}

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_SEPARATION: usize = 3;

/// Vertex offset of the parabola through `(-1, a)`, `(0, b)`, `(1, c)`.
fn parabola_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Centroid of the 4-connected region of pixels equal to the value at `(i, j)`.
fn plateau_centroid(map: &Heatmap, i: usize, j: usize) -> (f64, f64) {
    let val = map.get(0, i, j);
    let mut seen = vec![false; map.pixels()];
    let mut stack = vec![(i, j)];
    seen[i * map.width + j] = true;
    let (mut si, mut sj, mut n) = (0.0, 0.0, 0.0);
    while let Some((a, b)) = stack.pop() {
        si += a as f64;
        sj += b as f64;
        n += 1.0;
        let mut visit = |a: usize, b: usize| {
            if !seen[a * map.width + b] && map.get(0, a, b) == val {
                seen[a * map.width + b] = true;
                stack.push((a, b));
            }
        };
        if a > 0 {
            visit(a - 1, b);
        }
        if a + 1 < map.height {
            visit(a + 1, b);
        }
        if b > 0 {
            visit(a, b - 1);
        }
        if b + 1 < map.width {
            visit(a, b + 1);
        }
    }
    (si / n, sj / n)
}

/// Local maxima of channel 0 over a `(2m+1)²` window with score at least
/// `threshold`, in descending score order. Ties inside a window go to the
/// first pixel in raster order. Positions are refined by a quadratic fit
/// (on log values when positive) or, on a plateau, by the plateau centroid.
pub fn decode_peaks(center: &Heatmap, threshold: f64, min_sep: usize) -> Vec<Peak> {
    let (h, w) = (center.height, center.width);
    let v = |i: usize, j: usize| center.get(0, i, j);
    let mut peaks = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let val = v(i, j);
            if !(val >= threshold) {
                continue;
            }
            let (i0, i1) = (i.saturating_sub(min_sep), (i + min_sep).min(h - 1));
            let (j0, j1) = (j.saturating_sub(min_sep), (j + min_sep).min(w - 1));
            let mut is_peak = true;
            let mut flat = false;
            'win: for a in i0..=i1 {
                for b in j0..=j1 {
                    let o = v(a, b);
                    if o > val || (o == val && (a, b) < (i, j)) {
                        is_peak = false;
                        break 'win;
                    }
                    flat |= o == val && (a, b) != (i, j);
                }
            }
            if !is_peak {
                continue;
            }
            let (mut u, mut vv) = (j as f64, i as f64);
            if flat {
                (vv, u) = plateau_centroid(center, i, j);
            } else {
                let neigh = [
                    (j > 0).then(|| v(i, j - 1)),
                    (j + 1 < w).then(|| v(i, j + 1)),
                    (i > 0).then(|| v(i - 1, j)),
                    (i + 1 < h).then(|| v(i + 1, j)),
                ];
                let use_log = neigh.iter().flatten().all(|&x| x > 0.0) && val > 0.0;
                let t = |x: f64| if use_log { x.ln() } else { x };
                if let (Some(l), Some(r)) = (neigh[0], neigh[1]) {
                    u += parabola_offset(t(l), t(val), t(r));
                }
                if let (Some(up), Some(dn)) = (neigh[2], neigh[3]) {
                    vv += parabola_offset(t(up), t(val), t(dn));
                }
            }
            peaks.push((Peak { pixel: PixelPoint::new(u, vv), score: val }, i, j));
        }
    }
    peaks.sort_by(|a, b| b.0.score.total_cmp(&a.0.score).then((a.1, a.2).cmp(&(b.1, b.2))));
    peaks.into_iter().map(|p| p.0).collect()
}

pub fn yaw_encode(psi: f64) -> (f64, f64) {
    psi.sin_cos()
}

/// Angle of the normalized `(sin, cos)` pair.
pub fn yaw_decode(a: f64, b: f64) -> Result<f64> {
    let n2 = a * a + b * b;
    if !(n2 > 1e-6) {
        return Err(Error::NearZeroVector);
    }
    let n = n2.sqrt();
    Ok((a / n).atan2(b / n))
}
