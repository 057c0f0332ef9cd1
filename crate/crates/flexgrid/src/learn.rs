//! Classifier head and 2-D projection for embedding vectors.
//!
//! The MLP is rectifier-hidden, softmax-output, trained with plain
//! momentum SGD so runs are bit-reproducible per seed. PCA keeps only the
//! top two components, computed by power iteration with deflation so the
//! covariance matrix is never materialized (embedding dimensions reach
//! n*d).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One labeled vector.
pub type Sample = (Vec<f64>, usize);

/// Fully connected network: dims `[d_in, hidden..., K]`, rectifier on every
/// hidden layer, softmax on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    /// Layer l maps dims[l] -> dims[l+1]; row-major (fan_out x fan_in).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config("model needs an input and an output layer".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {dims:?}")));
    }
    if dims[dims.len() - 1] < 2 {
        return Err(Error::Config("output layer needs at least 2 classes".into()));
    }
    Ok(())
}

impl MlpModel {
    /// Seeded scaled-Gaussian initialization: weight std sqrt(2 / fan_in),
    /// zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let std = (2.0 / dims[l] as f64).sqrt();
            weights.push((0..dims[l] * dims[l + 1]).map(|_| std * gaussian(&mut rng)).collect());
            biases.push(vec![0.0; dims[l + 1]]);
        }
        Ok(Self { dims: dims.to_vec(), weights, biases })
    }

    /// Assemble a model from explicit tensors; dims are inferred and
    /// chained-shape checked.
    pub fn from_parts(weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>, dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::Dimension("one weight and bias tensor per layer".into()));
        }
        for l in 0..weights.len() {
            if weights[l].len() != dims[l] * dims[l + 1] || biases[l].len() != dims[l + 1] {
                return Err(Error::Dimension(format!(
                    "layer {l} tensors do not match dims {} -> {}",
                    dims[l],
                    dims[l + 1]
                )));
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("layer {l} holds non-finite values")));
            }
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Pre-activations and activations per layer; activations[0] is the
    /// input, the last entry is the softmax output.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.weights.len();
        let mut activations = vec![x.to_vec()];
        for l in 0..layers {
            let fan_in = self.dims[l];
            let fan_out = self.dims[l + 1];
            let prev = &activations[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut z);
            }
            debug_assert_eq!(z.len(), fan_out);
            activations.push(z);
        }
        activations
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn check_batch(model: &MlpModel, batch: &[&Sample]) -> Result<()> {
    for (x, label) in batch {
        if x.len() != model.input_dim() {
            return Err(Error::Dimension(format!(
                "sample dimension {} does not match model input {}",
                x.len(),
                model.input_dim()
            )));
        }
        if *label >= model.classes() {
            return Err(Error::Config(format!(
                "label {label} outside the {} model classes",
                model.classes()
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy and argmax predictions over a batch. Ties pick the
/// lowest class index.
pub fn forward_loss(model: &MlpModel, batch: &[Sample]) -> Result<(f64, Vec<usize>)> {
    let refs: Vec<&Sample> = batch.iter().collect();
    check_batch(model, &refs)?;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for (x, label) in batch {
        let activations = model.forward(x);
        let p = activations.last().unwrap();
        loss += -(p[*label].max(f64::MIN_POSITIVE)).ln();
        predictions.push(argmax(p));
    }
    Ok((loss / batch.len() as f64, predictions))
}

/// Mean gradients of the batch cross-entropy with respect to every weight
/// and bias tensor, plus the loss itself.
pub fn batch_gradients(
    model: &MlpModel,
    batch: &[&Sample],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    check_batch(model, batch)?;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let layers = model.weights.len();
    let mut grad_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (x, label) in batch {
        let activations = model.forward(x);
        let p = activations.last().unwrap();
        loss += -(p[*label].max(f64::MIN_POSITIVE)).ln() * scale;
        // Output delta: softmax cross-entropy collapses to p - onehot.
        let mut delta: Vec<f64> = p.clone();
        delta[*label] -= 1.0;
        for l in (0..layers).rev() {
            let fan_in = model.dims[l];
            let prev = &activations[l];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grad_w[l][o * fan_in..(o + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g += scale * d * a;
                }
                grad_b[l][o] += scale * d;
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; fan_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &model.weights[l][o * fan_in..(o + 1) * fan_in];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                // Rectifier gate from the recorded activation.
                for (pd, a) in prev_delta.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
    }
    Ok((grad_w, grad_b, loss))
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

/// One [`EpochStats`] per completed epoch.
pub type TrainHistory = Vec<EpochStats>;

/// Momentum coefficient for SGD updates.
pub const MOMENTUM: f64 = 0.9;

/// Mini-batch momentum SGD with epoch-wise seeded shuffling. Everything
/// except the recorded wall times is deterministic per seed.
pub fn train(
    mut model: MlpModel,
    train_set: &[Sample],
    test_set: &[Sample],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<(MlpModel, TrainHistory)> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Config("train and test sets must be non-empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate {lr} must be positive")));
    }
    let mut vel_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for _ in 0..epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (grad_w, grad_b, _) = batch_gradients(&model, &batch)?;
            for l in 0..model.weights.len() {
                for ((w, v), g) in model.weights[l].iter_mut().zip(&mut vel_w[l]).zip(&grad_w[l]) {
                    *v = MOMENTUM * *v - lr * g;
                    *w += *v;
                }
                for ((b, v), g) in model.biases[l].iter_mut().zip(&mut vel_b[l]).zip(&grad_b[l]) {
                    *v = MOMENTUM * *v - lr * g;
                    *b += *v;
                }
            }
        }
        let (train_acc, train_loss) = evaluate(&model, train_set)?;
        let (test_acc, test_loss) = evaluate(&model, test_set)?;
        history.push(EpochStats {
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, history))
}

/// Top-1 accuracy and mean cross-entropy.
pub fn evaluate(model: &MlpModel, set: &[Sample]) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty set".into()));
    }
    let (loss, predictions) = forward_loss(model, set)?;
    let correct = predictions.iter().zip(set).filter(|(p, (_, label))| *p == label).count();
    Ok((correct as f64 / set.len() as f64, loss))
}

/// History CSV: header then one row per epoch.
pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc,seconds\n");
    for (i, e) in history.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            e.train_loss,
            e.train_acc,
            e.test_loss,
            e.test_acc,
            e.seconds
        ));
    }
    out
}

const FGM1_MAGIC: &[u8; 4] = b"FGM1";

/// Encode a checkpoint: magic "FGM1", u32 LE layer count, then per layer
/// u32 LE rows, u32 LE cols, binary32 LE weights (row-major) and biases.
pub fn write_model(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FGM1_MAGIC);
    out.extend_from_slice(&(model.weights.len() as u32).to_le_bytes());
    for l in 0..model.weights.len() {
        let rows = model.dims[l + 1] as u32;
        let cols = model.dims[l] as u32;
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        for v in &model.weights[l] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for v in &model.biases[l] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode an FGM1 checkpoint. Layer shapes must chain: the column count of
/// each layer equals the row count of the one before.
pub fn read_model(bytes: &[u8]) -> Result<MlpModel> {
    let take4 = |pos: &mut usize| -> Result<[u8; 4]> {
        if *pos + 4 > bytes.len() {
            return Err(Error::Decode(format!("FGM1 truncated at byte {pos}")));
        }
        let out = bytes[*pos..*pos + 4].try_into().unwrap();
        *pos += 4;
        Ok(out)
    };
    let mut pos = 0;
    if take4(&mut pos)? != *FGM1_MAGIC {
        return Err(Error::Decode("bad magic, expected FGM1".into()));
    }
    let layers = u32::from_le_bytes(take4(&mut pos)?) as usize;
    if layers == 0 {
        return Err(Error::Decode("FGM1 needs at least one layer".into()));
    }
    let mut dims = Vec::with_capacity(layers + 1);
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for l in 0..layers {
        let rows = u32::from_le_bytes(take4(&mut pos)?) as usize;
        let cols = u32::from_le_bytes(take4(&mut pos)?) as usize;
        if l == 0 {
            dims.push(cols);
        } else if cols != dims[l] {
            return Err(Error::Decode(format!(
                "layer {l} expects {cols} inputs but the previous layer emits {}",
                dims[l]
            )));
        }
        dims.push(rows);
        let mut read_tensor = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(f32::from_le_bytes(take4(&mut pos)?) as f64);
            }
            Ok(out)
        };
        weights.push(read_tensor(rows * cols)?);
        biases.push(read_tensor(rows)?);
    }
    if pos != bytes.len() {
        return Err(Error::Decode(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - pos
        )));
    }
    MlpModel::from_parts(weights, biases, dims)
}

/// Fixed internal seed for the PCA start vectors; the operation has no
/// seed parameter and must be deterministic.
const PCA_SEED: u64 = 0x9E37_79B9;

fn power_iterate<F>(matvec: F, d: usize, rng: &mut ChaCha8Rng) -> Result<Option<(Vec<f64>, f64)>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut x {
        *v /= norm;
    }
    for _ in 0..10_000 {
        let y = matvec(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            // The operator annihilates the iterate: no dominant direction.
            return Ok(None);
        }
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
        let diff = x.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        x = next;
        if diff < 1e-10 {
            let eigenvalue = x.iter().zip(matvec(&x)).map(|(a, b)| a * b).sum();
            return Ok(Some((x, eigenvalue)));
        }
    }
    Err(Error::Convergence("power iteration exceeded 10000 iterations".into()))
}

/// Unit vector orthogonal to `v`, chosen deterministically; zero when the
/// space is one-dimensional.
fn orthogonal_unit(v: &[f64]) -> Vec<f64> {
    if v.len() < 2 {
        return vec![0.0; v.len()];
    }
    let j = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let mut u: Vec<f64> = v.iter().map(|&vi| -v[j] * vi).collect();
    u[j] += 1.0;
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut u {
        *x /= norm;
    }
    u
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Project vectors onto their top two principal components.
///
/// Mean-centers, runs power iteration on the implicit sample covariance
/// (divisor n - 1), deflates, and fixes each component's sign so its first
/// nonzero entry is positive. A spectrum that collapses after the first
/// component falls back to a deterministic orthogonal direction.
pub fn pca2(vectors: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if vectors.len() < 3 {
        return Err(Error::Config(format!(
            "pca needs at least 3 vectors, got {}",
            vectors.len()
        )));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Dimension("pca vectors must share one positive dimension".into()));
    }
    if vectors.iter().all(|v| v == &vectors[0]) {
        return Err(Error::Dimension("pca input has rank 0: all vectors are identical".into()));
    }
    let n = vectors.len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    // Implicit covariance product: C v = sum_i (x_i . v) x_i / (n - 1).
    let cov_mul = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for row in &centered {
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            let scaled = dot / (n - 1) as f64;
            for (o, r) in out.iter_mut().zip(row) {
                *o += scaled * r;
            }
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(PCA_SEED);
    let (mut v1, l1) = power_iterate(&cov_mul, d, &mut rng)?
        .ok_or_else(|| Error::Dimension("pca input has no variance".into()))?;
    fix_sign(&mut v1);
    let deflated = |v: &[f64]| -> Vec<f64> {
        let mut out = cov_mul(v);
        let dot: f64 = v1.iter().zip(v).map(|(a, b)| a * b).sum();
        for (o, e) in out.iter_mut().zip(&v1) {
            *o -= l1 * dot * e;
        }
        out
    };
    let second = power_iterate(&deflated, d, &mut rng)?;
    let mut v2 = match second {
        Some((v, l2)) if l2 > 1e-12 * l1.max(1e-300) => v,
        _ => orthogonal_unit(&v1),
    };
    fix_sign(&mut v2);
    Ok(centered
        .iter()
        .map(|row| {
            let a: f64 = row.iter().zip(&v1).map(|(x, e)| x * e).sum();
            let b: f64 = row.iter().zip(&v2).map(|(x, e)| x * e).sum();
            (a, b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| ((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0..k)))
            .collect()
    }

    #[test]
    fn init_is_seeded_and_counts_parameters() {
        let a = MlpModel::init(&[512, 128, 2], 3).unwrap();
        let b = MlpModel::init(&[512, 128, 2], 3).unwrap();
        let c = MlpModel::init(&[512, 128, 2], 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), 512 * 128 + 128 + 128 * 2 + 2);
        assert_eq!(a.param_count(), 65_922);
        assert!(a.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(MlpModel::init(&[8], 0), Err(Error::Config(_))));
        assert!(matches!(MlpModel::init(&[8, 0, 3], 0), Err(Error::Config(_))));
        assert!(matches!(MlpModel::init(&[8, 4, 1], 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_model_gives_uniform_loss_and_first_class() {
        let zeros = MlpModel::from_parts(
            vec![vec![0.0; 4 * 5], vec![0.0; 5 * 3]],
            vec![vec![0.0; 5], vec![0.0; 3]],
            vec![4, 5, 3],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = tiny_batch(&mut rng, 12, 4, 3);
        let (loss, predictions) = forward_loss(&zeros, &batch).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
        assert!(predictions.iter().all(|&p| p == 0));
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        // One weight row pushes class 0 far above class 1 for positive x.
        let model = MlpModel::from_parts(
            vec![vec![50.0, -50.0]],
            vec![vec![0.0, 0.0]],
            vec![1, 2],
        )
        .unwrap();
        let (loss, predictions) = forward_loss(&model, &[(vec![1.0], 0)]).unwrap();
        assert!(loss < 1e-12);
        assert_eq!(predictions, vec![0]);
    }

    #[test]
    fn forward_rejects_bad_samples() {
        let model = MlpModel::init(&[4, 5, 3], 0).unwrap();
        assert!(matches!(
            forward_loss(&model, &[(vec![0.0; 3], 0)]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            forward_loss(&model, &[(vec![0.0; 4], 3)]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = MlpModel::init(&[6, 4, 3], 5).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = model.forward(&x).pop().unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::init(&[8, 5, 3], 7).unwrap();
        let batch = tiny_batch(&mut rng, 6, 8, 3);
        let refs: Vec<&Sample> = batch.iter().collect();
        let (grad_w, grad_b, _) = batch_gradients(&model, &refs).unwrap();
        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for l in 0..model.weights().len() {
            for (which, grads) in [(0, &grad_w[l]), (1, &grad_b[l])] {
                for i in 0..grads.len() {
                    let probe = |delta: f64| {
                        let mut m = model.clone();
                        if which == 0 {
                            m.weights[l][i] += delta;
                        } else {
                            m.biases[l][i] += delta;
                        }
                        forward_loss(&m, &batch).unwrap().0
                    };
                    let numeric = (probe(eps) - probe(-eps)) / (2.0 * eps);
                    let denom = numeric.abs().max(grads[i].abs()).max(1e-8);
                    max_rel = max_rel.max((numeric - grads[i]).abs() / denom);
                }
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    fn blob_set(rng: &mut ChaCha8Rng, per_class: usize) -> Vec<Sample> {
        let mut set = Vec::new();
        for _ in 0..per_class {
            set.push((
                vec![1.0 + rng.gen_range(-0.3..0.3), 1.0 + rng.gen_range(-0.3..0.3)],
                0,
            ));
            set.push((
                vec![-1.0 + rng.gen_range(-0.3..0.3), -1.0 + rng.gen_range(-0.3..0.3)],
                1,
            ));
        }
        set
    }

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train_set = blob_set(&mut rng, 100);
        let test_set = blob_set(&mut rng, 20);
        let model = MlpModel::init(&[2, 16, 2], 0).unwrap();
        let (model, history) = train(model, &train_set, &test_set, 50, 32, 0.05, 0).unwrap();
        let (acc, _) = evaluate(&model, &train_set).unwrap();
        assert!(acc >= 0.99, "train accuracy {acc}");
        assert_eq!(history.len(), 50);
        // Smoothed monotonicity once the optimizer settles.
        for pair in history[3..].windows(2) {
            assert!(pair[1].train_loss <= pair[0].train_loss + 1e-3);
        }
        assert!(history.iter().all(|e| e.seconds >= 0.0));
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = tiny_batch(&mut rng, 10, 3, 2);
        let model = MlpModel::init(&[3, 4, 2], 1).unwrap();
        let (trained, history) = train(model.clone(), &set, &set, 0, 4, 0.1, 0).unwrap();
        assert_eq!(trained, model);
        assert!(history.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let train_set = tiny_batch(&mut rng, 30, 4, 3);
        let test_set = tiny_batch(&mut rng, 10, 4, 3);
        let run = || {
            let model = MlpModel::init(&[4, 8, 3], 2).unwrap();
            train(model, &train_set, &test_set, 5, 8, 0.01, 9).unwrap().0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let model = MlpModel::init(&[2, 3, 2], 0).unwrap();
        let set = vec![(vec![0.0, 0.0], 0)];
        assert!(train(model.clone(), &[], &set, 1, 1, 0.1, 0).is_err());
        assert!(train(model.clone(), &set, &set, 1, 0, 0.1, 0).is_err());
        assert!(train(model, &set, &set, 1, 1, 0.0, 0).is_err());
    }

    #[test]
    fn evaluate_matches_hand_counting() {
        let model = MlpModel::from_parts(
            vec![vec![1.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0]],
            vec![2, 2],
        )
        .unwrap();
        // Logits are just (x0, x1): prediction is the larger coordinate.
        let set: Vec<Sample> = vec![
            (vec![2.0, 0.0], 0),
            (vec![0.0, 2.0], 1),
            (vec![3.0, 1.0], 1),
            (vec![1.0, 3.0], 0),
            (vec![5.0, 0.0], 0),
            (vec![0.0, 5.0], 1),
            (vec![2.0, 1.0], 0),
            (vec![1.0, 2.0], 1),
            (vec![4.0, 0.0], 1),
            (vec![0.0, 4.0], 0),
        ];
        let (acc, _) = evaluate(&model, &set).unwrap();
        // 6 of 10 labels sit on the larger coordinate.
        assert!((acc - 0.6).abs() < 1e-12);
        assert!(matches!(evaluate(&model, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_model_on_balanced_set() {
        let zeros = MlpModel::from_parts(
            vec![vec![0.0; 2 * 2]],
            vec![vec![0.0; 2]],
            vec![2, 2],
        )
        .unwrap();
        let set: Vec<Sample> =
            (0..10).map(|i| (vec![i as f64, -(i as f64)], (i % 2) as usize)).collect();
        let (acc, loss) = evaluate(&zeros, &set).unwrap();
        // Ties predict class 0, which is correct for exactly half the set.
        assert!((acc - 0.5).abs() < 1e-12);
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn history_csv_shape() {
        let history = vec![
            EpochStats { train_loss: 1.0, train_acc: 0.5, test_loss: 1.1, test_acc: 0.4, seconds: 0.01 },
            EpochStats { train_loss: 0.8, train_acc: 0.6, test_loss: 0.9, test_acc: 0.5, seconds: 0.01 },
        ];
        let csv = history_csv(&history);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,train_acc,test_loss,test_acc,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,1,0.5,1.1,0.4,"));
        assert!(lines[2].starts_with("2,0.8,0.6,0.9,0.5,"));
    }

    #[test]
    fn fgm1_round_trips_f32_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dims = vec![rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(2..5)];
            let tensor = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..len).map(|_| rng.gen::<f32>() as f64 * 4.0 - 2.0).collect()
            };
            let model = MlpModel::from_parts(
                vec![tensor(dims[0] * dims[1], &mut rng), tensor(dims[1] * dims[2], &mut rng)],
                vec![tensor(dims[1], &mut rng), tensor(dims[2], &mut rng)],
                dims.clone(),
            )
            .unwrap();
            let bytes = write_model(&model);
            let back = read_model(&bytes).unwrap();
            assert_eq!(back.dims(), model.dims());
            assert_eq!(write_model(&back), bytes);
        }
    }

    #[test]
    fn fgm1_layout_of_a_tiny_model() {
        let model = MlpModel::from_parts(
            vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0, 6.0]],
            vec![vec![0.5, 0.25], vec![0.125, 0.0625]],
            vec![1, 2, 2],
        )
        .unwrap();
        let bytes = write_model(&model);
        assert_eq!(&bytes[..4], b"FGM1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        // Layer 0: rows 2, cols 1, then 2 weights and 2 biases.
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        // Header + (layer 0: 8 + 16 bytes) + (layer 1: 8 + 24 bytes).
        assert_eq!(bytes.len(), 8 + (8 + 4 * 4) + (8 + 4 * 6));
        assert_eq!(read_model(&bytes).unwrap(), model);
    }

    #[test]
    fn fgm1_rejects_malformed_files() {
        let model = MlpModel::init(&[2, 3, 2], 0).unwrap();
        let good = write_model(&model);
        assert!(matches!(read_model(&good[..good.len() - 1]), Err(Error::Decode(_))));
        let mut bad_magic = good.clone();
        bad_magic[0] = b'Z';
        assert!(matches!(read_model(&bad_magic), Err(Error::Decode(_))));
        let mut trailing = good.clone();
        trailing.push(7);
        assert!(matches!(read_model(&trailing), Err(Error::Decode(_))));
        // Break the layer chain: second layer claims the wrong input width.
        let mut broken = good;
        let layer1_header = 8 + 8 + 4 * (3 * 2 + 3);
        broken[layer1_header + 4..layer1_header + 8].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(read_model(&broken), Err(Error::Decode(_))));
    }

    #[test]
    fn pca_aligns_with_a_single_axis() {
        let vectors: Vec<Vec<f64>> =
            (0..8).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let projected = pca2(&vectors).unwrap();
        for (i, &(a, b)) in projected.iter().enumerate() {
            assert!((a - (i as f64 - 3.5)).abs() < 1e-8);
            assert!(b.abs() < 1e-8);
        }
    }

    #[test]
    fn pca_projection_preserves_distances_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vectors: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                vec![
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-0.5..0.5),
                ]
            })
            .collect();
        // Rotate every input by a fixed orthogonal matrix (two Givens turns).
        let (s1, c1) = (0.6f64, 0.8f64);
        let (s2, c2) = (0.28f64, 0.96f64);
        let rotate = |v: &Vec<f64>| -> Vec<f64> {
            let a = vec![c1 * v[0] - s1 * v[1], s1 * v[0] + c1 * v[1], v[2]];
            vec![a[0], c2 * a[1] - s2 * a[2], s2 * a[1] + c2 * a[2]]
        };
        let rotated: Vec<Vec<f64>> = vectors.iter().map(rotate).collect();
        let p = pca2(&vectors).unwrap();
        let q = pca2(&rotated).unwrap();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let dp = ((p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2)).sqrt();
                let dq = ((q[i].0 - q[j].0).powi(2) + (q[i].1 - q[j].1).powi(2)).sqrt();
                assert!((dp - dq).abs() < 1e-8, "pair ({i},{j}): {dp} vs {dq}");
            }
        }
    }

    #[test]
    fn pca_variances_match_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|j| rng.gen_range(-1.0..1.0) * (j + 1) as f64).collect())
            .collect();
        let projected = pca2(&vectors).unwrap();
        let var = |take: fn(&(f64, f64)) -> f64| -> f64 {
            let mean = projected.iter().map(take).sum::<f64>() / n as f64;
            projected.iter().map(|p| (take(p) - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        let (var1, var2) = (var(|p| p.0), var(|p| p.1));
        assert!(var1 >= var2);

        let mut mean = vec![0.0; 5];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n as f64;
            }
        }
        let mut cov = nalgebra::DMatrix::<f64>::zeros(5, 5);
        for v in &vectors {
            for a in 0..5 {
                for b in 0..5 {
                    cov[(a, b)] += (v[a] - mean[a]) * (v[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().cloned().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        assert!((var1 - eigenvalues[0]).abs() < 1e-6);
        assert!((var2 - eigenvalues[1]).abs() < 1e-6);
    }

    #[test]
    fn pca_is_deterministic_and_validates_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let vectors: Vec<Vec<f64>> =
            (0..10).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        assert_eq!(pca2(&vectors).unwrap(), pca2(&vectors).unwrap());
        assert!(pca2(&vectors[..2]).is_err());
        let same = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(pca2(&same), Err(Error::Dimension(_))));
    }
}
