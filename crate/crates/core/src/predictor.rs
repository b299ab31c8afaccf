//! Camera-motion prediction on the preview horizon.
//!
//! Two baselines extrapolate the estimated motion (hold and linear), and a
//! small trainable model maps the downsampled recall-frame stack to the
//! future motion, optimized from scratch with the pairwise-distance loss
//! plus an identity-discouraging regularizer.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{
    apply_photometric_sequence, conjugate_motion, sample_augmentation, GeometricTransform,
    PhotometricTransform,
};
use crate::frame::GrayFrame;
use crate::geometry::{FourPointDelta, FrameGeometry, Point2};

/// Floor on the per-output normalization scale, pixels.
const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("not enough recall motions: have {have}, need {need}")]
    MissingHistory { have: usize, need: usize },
    #[error("dimension mismatch: expected {expect}, got {got}")]
    DimensionMismatch { expect: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

/// Holds the last estimated motion over the preview horizon.
pub fn taylor_o1(
    recall_motions: &[FourPointDelta],
    preview: usize,
) -> Result<Vec<FourPointDelta>, PredictorError> {
    let last = recall_motions
        .last()
        .ok_or(PredictorError::MissingHistory { have: 0, need: 1 })?;
    Ok(vec![*last; preview])
}

/// Linear extrapolation from the last two estimated motions: the first
/// preview step is `2*last - previous`, and the slope continues for longer
/// horizons.
pub fn taylor_o2(
    recall_motions: &[FourPointDelta],
    preview: usize,
) -> Result<Vec<FourPointDelta>, PredictorError> {
    if recall_motions.len() < 2 {
        return Err(PredictorError::MissingHistory { have: recall_motions.len(), need: 2 });
    }
    let last = recall_motions[recall_motions.len() - 1];
    let prev = recall_motions[recall_motions.len() - 2];
    let mut out = Vec::with_capacity(preview);
    for k in 0..preview {
        let f = (k + 1) as f64;
        let mut corners = [Point2::new(0.0, 0.0); 4];
        for (i, c) in corners.iter_mut().enumerate() {
            *c = last.corner(i) + (last.corner(i) - prev.corner(i)) * f;
        }
        out.push(FourPointDelta::new(corners).expect("finite extrapolation"));
    }
    Ok(out)
}

/// Mean pairwise-distance loss with the identity-discouraging regularizer:
/// mean corner-error norm plus `lambda` times the mean predicted corner norm.
pub fn loss(pred: &[FourPointDelta], target: &[FourPointDelta], lambda: f64) -> f64 {
    assert_eq!(pred.len(), target.len(), "prediction/target shape mismatch");
    assert!(lambda >= 0.0);
    let corners = (pred.len() * 4) as f64;
    let mut err = 0.0;
    let mut mag = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        for i in 0..4 {
            err += (p.corner(i) - t.corner(i)).norm();
            mag += p.corner(i).norm();
        }
    }
    err / corners + lambda * mag / corners
}

/// Model input: the downsampled recall-frame stack. Recall motions ride
/// along for the baselines only; [`PredictorModel::forward`] never reads
/// them.
#[derive(Debug, Clone)]
pub struct PredictorInput {
    pub recall_frames: Vec<GrayFrame>,
    pub recall_motions: Vec<FourPointDelta>,
    /// Geometry of the original (full resolution) frames.
    pub geom: FrameGeometry,
}

impl PredictorInput {
    /// Frame stack flattened in time order, centered around mid-gray so the
    /// constant image component does not dominate the first-layer gradients.
    fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(
            self.recall_frames.iter().map(|f| f.pixels().len()).sum::<usize>(),
        );
        for f in &self.recall_frames {
            v.extend(f.pixels().iter().map(|p| f64::from(*p) - 0.5));
        }
        v
    }
}

/// One training/evaluation sample: an input and its M target motions.
#[derive(Debug, Clone)]
pub struct DataSample {
    pub input: PredictorInput,
    pub target: Vec<FourPointDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    /// Row-major (out x in) weights.
    w: Vec<f64>,
    b: Vec<f64>,
    #[serde(skip)]
    out_dim: usize,
    #[serde(skip)]
    in_dim: usize,
}

/// Affine layers with tanh hidden activations and a linear output, plus the
/// per-output de-normalization of the training targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorModel {
    pub arch: ModelArch,
    pub normalization: Normalization,
    pub seed: u64,
    pub created: String,
    layers: Vec<Layer>,
}

struct LayerView {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl PredictorModel {
    /// Seeded Xavier-uniform initialization; biases start at zero.
    pub fn new_seeded(arch: ModelArch, normalization: Normalization, seed: u64) -> Self {
        assert_eq!(normalization.mean.len(), arch.output_dim);
        assert_eq!(normalization.scale.len(), arch.output_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![arch.input_dim];
        dims.extend_from_slice(&arch.hidden_dims);
        dims.push(arch.output_dim);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
                Layer { w, b: vec![0.0; fan_out], out_dim: fan_out, in_dim: fan_in }
            })
            .collect();
        Self { arch, normalization, seed, created: String::new(), layers }
    }

    fn views(&self) -> Vec<LayerView> {
        self.layers
            .iter()
            .map(|l| LayerView {
                w: Array2::from_shape_vec((l.out_dim, l.in_dim), l.w.clone())
                    .expect("layer shape"),
                b: Array1::from_vec(l.b.clone()),
            })
            .collect()
    }

    /// Batched forward pass returning every activation; inputs are columns.
    fn forward_batch(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let views = self.views();
        let mut acts = Vec::with_capacity(views.len() + 1);
        acts.push(x.clone());
        for (i, l) in views.iter().enumerate() {
            let mut z = l.w.dot(acts.last().unwrap());
            z += &l.b.view().insert_axis(Axis(1));
            if i + 1 < views.len() {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    fn denormalize_column(&self, z: &[f64]) -> Vec<FourPointDelta> {
        let m = self.arch.output_dim / 8;
        let mut out = Vec::with_capacity(m);
        for step in 0..m {
            let mut flat = [0.0f64; 8];
            for (j, v) in flat.iter_mut().enumerate() {
                let k = step * 8 + j;
                *v = z[k] * self.normalization.scale[k] + self.normalization.mean[k];
            }
            out.push(FourPointDelta::from_flat(flat).expect("finite prediction"));
        }
        out
    }

    /// Predicts the M preview motions from the recall-frame stack.
    pub fn forward(&self, input: &PredictorInput) -> Result<Vec<FourPointDelta>, PredictorError> {
        Ok(self.forward_many(std::slice::from_ref(input))?.pop().unwrap())
    }

    /// Batched [`PredictorModel::forward`] over many inputs.
    pub fn forward_many(
        &self,
        inputs: &[PredictorInput],
    ) -> Result<Vec<Vec<FourPointDelta>>, PredictorError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(256) {
            let x = self.assemble_inputs(chunk)?;
            let acts = self.forward_batch(&x);
            let z = acts.last().unwrap();
            for col in 0..chunk.len() {
                let zc: Vec<f64> = z.column(col).to_vec();
                out.push(self.denormalize_column(&zc));
            }
        }
        Ok(out)
    }

    fn assemble_inputs(&self, inputs: &[PredictorInput]) -> Result<Array2<f64>, PredictorError> {
        let mut x = Array2::zeros((self.arch.input_dim, inputs.len()));
        for (col, input) in inputs.iter().enumerate() {
            let v = input.flatten();
            if v.len() != self.arch.input_dim {
                return Err(PredictorError::DimensionMismatch {
                    expect: self.arch.input_dim,
                    got: v.len(),
                });
            }
            for (row, val) in v.iter().enumerate() {
                x[(row, col)] = *val;
            }
        }
        Ok(x)
    }

    /// All parameters as one flat vector (per layer: row-major weights, then
    /// biases), matching [`gradient`]'s layout.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.w.len();
            l.w.copy_from_slice(&params[off..off + wn]);
            off += wn;
            let bn = l.b.len();
            l.b.copy_from_slice(&params[off..off + bn]);
            off += bn;
        }
        assert_eq!(off, params.len(), "parameter vector length mismatch");
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        let s = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, s).map_err(|source| PredictorError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let s = std::fs::read_to_string(path).map_err(|source| PredictorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut model: PredictorModel =
            serde_json::from_str(&s).map_err(|e| PredictorError::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        // Rebuild the shape metadata that is implied by the arch.
        let mut dims = vec![model.arch.input_dim];
        dims.extend_from_slice(&model.arch.hidden_dims);
        dims.push(model.arch.output_dim);
        if model.layers.len() + 1 != dims.len() {
            return Err(PredictorError::Format {
                path: path.to_path_buf(),
                reason: "layer count does not match arch".into(),
            });
        }
        for (l, d) in model.layers.iter_mut().zip(dims.windows(2)) {
            l.in_dim = d[0];
            l.out_dim = d[1];
            if l.w.len() != l.in_dim * l.out_dim || l.b.len() != l.out_dim {
                return Err(PredictorError::Format {
                    path: path.to_path_buf(),
                    reason: "weight array length does not match arch".into(),
                });
            }
        }
        Ok(model)
    }
}

/// Per-output z-score statistics of the training targets, with a floor on
/// the scale so constant outputs stay well-defined.
pub fn fit_normalization(samples: &[DataSample]) -> Result<Normalization, PredictorError> {
    let first = samples.first().ok_or(PredictorError::EmptyDataset)?;
    let out_dim = first.target.len() * 8;
    let mut mean = vec![0.0f64; out_dim];
    let mut m2 = vec![0.0f64; out_dim];
    for s in samples {
        for (step, d) in s.target.iter().enumerate() {
            for (j, v) in d.to_flat().iter().enumerate() {
                mean[step * 8 + j] += v;
            }
        }
    }
    let n = samples.len() as f64;
    for v in mean.iter_mut() {
        *v /= n;
    }
    for s in samples {
        for (step, d) in s.target.iter().enumerate() {
            for (j, v) in d.to_flat().iter().enumerate() {
                let k = step * 8 + j;
                m2[k] += (v - mean[k]).powi(2);
            }
        }
    }
    let scale = m2.iter().map(|v| (v / n).sqrt().max(SCALE_FLOOR)).collect();
    Ok(Normalization { mean, scale })
}

fn targets_matrix(model: &PredictorModel, samples: &[DataSample]) -> Array2<f64> {
    let mut t = Array2::zeros((model.arch.output_dim, samples.len()));
    for (col, s) in samples.iter().enumerate() {
        for (step, d) in s.target.iter().enumerate() {
            for (j, v) in d.to_flat().iter().enumerate() {
                t[(step * 8 + j, col)] = *v;
            }
        }
    }
    t
}

/// Mean loss of a batch in pixel space (forward + loss, no gradients).
pub fn batch_loss(
    model: &PredictorModel,
    samples: &[DataSample],
    lambda: f64,
) -> Result<f64, PredictorError> {
    if samples.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let inputs: Vec<PredictorInput> = samples.iter().map(|s| s.input.clone()).collect();
    let preds = model.forward_many(&inputs)?;
    let total: f64 = preds
        .iter()
        .zip(samples.iter())
        .map(|(p, s)| loss(p, &s.target, lambda))
        .sum();
    Ok(total / samples.len() as f64)
}

/// Analytic gradients of the mean batch loss, flattened in
/// [`PredictorModel::params_flat`] order. The Euclidean-norm terms use
/// subgradient zero at exactly zero error.
pub fn gradient(
    model: &PredictorModel,
    samples: &[DataSample],
    lambda: f64,
) -> Result<Vec<f64>, PredictorError> {
    if samples.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let inputs: Vec<PredictorInput> = samples.iter().map(|s| s.input.clone()).collect();
    let x = model.assemble_inputs(&inputs)?;
    let t = targets_matrix(model, samples);
    let (_, grads) = loss_and_gradients(model, &x, &t, lambda);
    let mut flat = Vec::new();
    for (gw, gb) in grads {
        flat.extend(gw.iter().copied());
        flat.extend(gb.iter().copied());
    }
    Ok(flat)
}

/// Shared forward/backward pass: returns the mean batch loss and per-layer
/// gradients.
fn loss_and_gradients(
    model: &PredictorModel,
    x: &Array2<f64>,
    targets: &Array2<f64>,
    lambda: f64,
) -> (f64, Vec<(Array2<f64>, Array1<f64>)>) {
    let views = model.views();
    let acts = model.forward_batch(x);
    let z_out = acts.last().unwrap();
    let batch = x.ncols();
    let m_steps = model.arch.output_dim / 8;
    let corners = (m_steps * 4) as f64;

    // De-normalized predictions and the loss gradient in prediction space.
    let mut g_pred = Array2::<f64>::zeros(z_out.raw_dim());
    let mut total_loss = 0.0;
    for col in 0..batch {
        for c in 0..m_steps * 4 {
            let kx = c * 2;
            let ky = c * 2 + 1;
            let px = z_out[(kx, col)] * model.normalization.scale[kx]
                + model.normalization.mean[kx];
            let py = z_out[(ky, col)] * model.normalization.scale[ky]
                + model.normalization.mean[ky];
            let ex = px - targets[(kx, col)];
            let ey = py - targets[(ky, col)];
            let en = (ex * ex + ey * ey).sqrt();
            let pn = (px * px + py * py).sqrt();
            total_loss += (en + lambda * pn) / corners;
            let mut gx = 0.0;
            let mut gy = 0.0;
            if en > 0.0 {
                gx += ex / en / corners;
                gy += ey / en / corners;
            }
            if pn > 0.0 {
                gx += lambda * px / pn / corners;
                gy += lambda * py / pn / corners;
            }
            // Chain through the de-normalization and the batch mean.
            g_pred[(kx, col)] = gx * model.normalization.scale[kx] / batch as f64;
            g_pred[(ky, col)] = gy * model.normalization.scale[ky] / batch as f64;
        }
    }
    let mean_loss = total_loss / batch as f64;

    // Backpropagate through the affine/tanh stack.
    let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(views.len());
    let mut delta = g_pred;
    for (i, l) in views.iter().enumerate().rev() {
        let a_prev = &acts[i];
        let gw = delta.dot(&a_prev.t());
        let gb = delta.sum_axis(Axis(1));
        if i > 0 {
            let mut back = l.w.t().dot(&delta);
            // acts[i] holds tanh outputs for hidden layers.
            back.zip_mut_with(&acts[i], |g, h| *g *= 1.0 - h * h);
            delta = back;
        }
        grads.push((gw, gb));
    }
    grads.reverse();
    (mean_loss, grads)
}

/// Serializable training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// (epoch, factor) pairs applied when that epoch starts.
    pub lr_drops: Vec<(usize, f64)>,
    pub lambda: f64,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.02,
            lr_drops: vec![(35, 0.5)],
            lambda: 0.1,
            seed: 0,
            hidden_dims: vec![128],
        }
    }
}

/// Per-sequence augmentation applied online during training. Geometric
/// transforms permute the model's frame stack and conjugate the targets;
/// photometric transforms touch the frames only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub geometric: bool,
    pub photometric: bool,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self { geometric: false, photometric: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_mpd: Option<f64>,
}

/// Renders the loss log as `epoch,split,loss,mpd,lr` CSV rows.
pub fn train_log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,split,loss,mpd,lr\n");
    for e in log {
        s.push_str(&format!("{},train,{},,{}\n", e.epoch, e.train_loss, e.lr));
        if let (Some(l), Some(m)) = (e.val_loss, e.val_mpd) {
            s.push_str(&format!("{},val,{},{},{}\n", e.epoch, l, m, e.lr));
        }
    }
    s
}

fn mix_seed(base: u64, epoch: usize, idx: usize) -> u64 {
    let mut h = base ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^= (idx as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^ (h >> 31)
}

fn augment_sample(
    s: &DataSample,
    geometric: GeometricTransform,
    photometric: &PhotometricTransform,
) -> (Vec<f64>, Vec<FourPointDelta>) {
    let frames: Vec<GrayFrame> =
        s.input.recall_frames.iter().map(|f| geometric.apply_frame(f)).collect();
    let frames = apply_photometric_sequence(&frames, photometric).expect("sampled in range");
    let mut v = Vec::new();
    for f in &frames {
        v.extend(f.pixels().iter().map(|p| f64::from(*p)));
    }
    let target = s
        .target
        .iter()
        .map(|d| conjugate_motion(d, geometric, &s.input.geom).expect("valid delta"))
        .collect();
    (v, target)
}

/// Mini-batch gradient descent with seeded shuffling and scheduled learning
/// rate drops. Deterministic for a given seed; the loop is sequential.
pub fn train(
    train_set: &[DataSample],
    val_set: &[DataSample],
    cfg: &TrainConfig,
    aug: &AugmentationPolicy,
) -> Result<(PredictorModel, Vec<EpochLog>), PredictorError> {
    if train_set.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let input_dim = train_set[0].input.flatten().len();
    let output_dim = train_set[0].target.len() * 8;
    let normalization = fit_normalization(train_set)?;
    let arch = ModelArch { input_dim, hidden_dims: cfg.hidden_dims.clone(), output_dim };
    let mut model = PredictorModel::new_seeded(arch, normalization, cfg.seed);

    let mut lr = cfg.learning_rate;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        for (drop_epoch, factor) in &cfg.lr_drops {
            if *drop_epoch == epoch {
                lr *= factor;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch, usize::MAX));
        shuffle(&mut order, &mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch_ids in order.chunks(cfg.batch_size.max(1)) {
            let mut x = Array2::zeros((model.arch.input_dim, batch_ids.len()));
            let mut t = Array2::zeros((model.arch.output_dim, batch_ids.len()));
            for (col, idx) in batch_ids.iter().enumerate() {
                let s = &train_set[*idx];
                let (input_vec, target) = if aug.geometric || aug.photometric {
                    let (mut geo, photo) =
                        sample_augmentation(mix_seed(aug.seed, epoch, *idx), aug.photometric);
                    if !aug.geometric {
                        geo = GeometricTransform::Identity;
                    }
                    augment_sample(s, geo, &photo)
                } else {
                    (s.input.flatten(), s.target.clone())
                };
                if input_vec.len() != model.arch.input_dim {
                    return Err(PredictorError::DimensionMismatch {
                        expect: model.arch.input_dim,
                        got: input_vec.len(),
                    });
                }
                for (row, v) in input_vec.iter().enumerate() {
                    x[(row, col)] = *v;
                }
                for (step, d) in target.iter().enumerate() {
                    for (j, v) in d.to_flat().iter().enumerate() {
                        t[(step * 8 + j, col)] = *v;
                    }
                }
            }
            let (batch_loss_value, grads) = loss_and_gradients(&model, &x, &t, cfg.lambda);
            epoch_loss += batch_loss_value;
            batches += 1;
            apply_sgd(&mut model, &grads, lr);
        }

        let (val_loss, val_mpd) = if val_set.is_empty() {
            (None, None)
        } else {
            let vl = batch_loss(&model, val_set, cfg.lambda)?;
            let inputs: Vec<PredictorInput> =
                val_set.iter().map(|s| s.input.clone()).collect();
            let preds = model.forward_many(&inputs)?;
            let mpd = preds
                .iter()
                .zip(val_set.iter())
                .map(|(p, s)| loss(p, &s.target, 0.0))
                .sum::<f64>()
                / val_set.len() as f64;
            (Some(vl), Some(mpd))
        };
        log.push(EpochLog {
            epoch,
            lr,
            train_loss: epoch_loss / batches.max(1) as f64,
            val_loss,
            val_mpd,
        });
    }
    Ok((model, log))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

fn apply_sgd(model: &mut PredictorModel, grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
    for (l, (gw, gb)) in model.layers.iter_mut().zip(grads.iter()) {
        for (w, g) in l.w.iter_mut().zip(gw.iter()) {
            *w -= lr * g;
        }
        for (b, g) in l.b.iter_mut().zip(gb.iter()) {
            *b -= lr * g;
        }
    }
}
