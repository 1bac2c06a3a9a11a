//! The autoencoder with a knowledge-graph bottleneck: an MLP encoder whose
//! sigmoid output is the activation tensor, a mirrored decoder, and a linear
//! classifier head. Backpropagation is written out by hand.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kg::{KgvTensor, TargetMask};

/// Sigmoid outputs are kept this far from 0 and 1 so that no log sees 0.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, out: f64) -> f64 {
        match self {
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `[out][in]`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..limit));
        Layer {
            weights,
            biases: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

/// Inputs and outputs of every layer for one batch.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("network has layers")
    }

    pub fn batch(&self) -> usize {
        self.inputs[0].nrows()
    }
}

impl MlpNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].output_size() != w[1].input_size() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].output_size(),
                    found: w[1].input_size(),
                });
            }
        }
        for l in &layers {
            if l.biases.len() != l.output_size() {
                return Err(Error::DimensionMismatch {
                    expected: l.output_size(),
                    found: l.biases.len(),
                });
            }
        }
        Ok(MlpNetwork { layers })
    }

    /// `sizes[i] -> sizes[i + 1]` with `activations[i]`.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() != activations.len() + 1 {
            return Err(invalid("need one activation per layer"));
        }
        Self::new(
            sizes
                .windows(2)
                .zip(activations)
                .map(|(w, &a)| Layer::glorot(w[0], w[1], a, rng))
                .collect(),
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").output_size()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<MlpTrace> {
        if x.ncols() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                found: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_owned();
        for l in &self.layers {
            let mut z = cur.dot(&l.weights.t());
            z += &l.biases;
            z.mapv_inplace(|v| l.activation.apply(v));
            inputs.push(cur);
            cur = z.clone();
            outputs.push(z);
        }
        Ok(MlpTrace { inputs, outputs })
    }

    fn check_trace(&self, trace: &MlpTrace) -> Result<()> {
        let fits = trace.inputs.len() == self.layers.len()
            && trace.outputs.len() == self.layers.len()
            && self.layers.iter().zip(&trace.inputs).zip(&trace.outputs).all(|((l, i), o)| {
                i.ncols() == l.input_size() && o.ncols() == l.output_size() && i.nrows() == o.nrows()
            });
        if fits {
            Ok(())
        } else {
            Err(invalid("trace does not match this network"))
        }
    }

    /// Gradients of every layer plus the gradient with respect to the input,
    /// given the gradient with respect to the network output.
    pub fn backward(&self, trace: &MlpTrace, d_output: ArrayView2<f64>) -> Result<(Vec<LayerGrad>, Array2<f64>)> {
        self.check_trace(trace)?;
        if d_output.dim() != trace.output().dim() {
            return Err(invalid("upstream gradient shape does not match the trace"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_output.to_owned();
        for (l, (input, output)) in self
            .layers
            .iter()
            .zip(trace.inputs.iter().zip(&trace.outputs))
            .rev()
        {
            // d now holds dL/d(output); turn it into dL/d(pre-activation).
            d.zip_mut_with(output, |g, &o| *g *= l.activation.derivative(o));
            let weights = d.t().dot(input);
            let biases = d.sum_axis(Axis(0));
            d = d.dot(&l.weights);
            grads.push(LayerGrad { weights, biases });
        }
        grads.reverse();
        Ok((grads, d))
    }

    fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weights.as_slice().expect("standard layout"),
                l.biases.as_slice().expect("standard layout"),
            ]
        })
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weights.as_slice_mut().expect("standard layout"),
                l.biases.as_slice_mut().expect("standard layout"),
            ]
        })
    }
}

/// Sizes of the autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub n_relations: usize,
    pub n_entities: usize,
    pub classes: usize,
}

impl Architecture {
    /// 784 -> 256 -> 1 x 28 x 28, mirrored decoder, 10 classes.
    pub fn experiment1() -> Self {
        Architecture {
            input: 784,
            hidden: 256,
            n_relations: 1,
            n_entities: 28,
            classes: 10,
        }
    }

    pub fn kgv_cells(&self) -> usize {
        self.n_relations * self.n_entities * self.n_entities
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgAutoencoder {
    arch: Architecture,
    encoder: MlpNetwork,
    decoder: MlpNetwork,
    classifier: MlpNetwork,
}

#[derive(Clone, Debug)]
pub struct ModelOutputs {
    pub kgv: KgvTensor,
    pub reconstruction: Array2<f64>,
    pub class_logits: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    encoder: MlpTrace,
    decoder: MlpTrace,
    classifier: MlpTrace,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.encoder.batch()
    }
}

/// Gradients arriving at the three outputs. `None` means zero.
#[derive(Clone, Debug, Default)]
pub struct Upstream {
    /// Flat, laid out like [`KgvTensor::values`].
    pub kgv: Option<Vec<f64>>,
    pub reconstruction: Option<Array2<f64>>,
    pub class_logits: Option<Array2<f64>>,
}

/// Parameter gradients in the same block order as [`KgAutoencoder::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
    pub classifier: Vec<LayerGrad>,
}

impl Gradients {
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .chain(&self.classifier)
            .flat_map(|g| {
                [
                    g.weights.as_slice().expect("standard layout"),
                    g.biases.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl KgAutoencoder {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.input == 0 || arch.hidden == 0 || arch.kgv_cells() == 0 || arch.classes == 0 {
            return Err(invalid(format!("degenerate architecture {arch:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = arch.kgv_cells();
        use Activation::*;
        let encoder = MlpNetwork::glorot(&[arch.input, arch.hidden, cells], &[Relu, Sigmoid], &mut rng)?;
        let decoder = MlpNetwork::glorot(&[cells, arch.hidden, arch.input], &[Relu, Sigmoid], &mut rng)?;
        let classifier = MlpNetwork::glorot(&[cells, arch.classes], &[Identity], &mut rng)?;
        Ok(KgAutoencoder {
            arch,
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn encoder(&self) -> &MlpNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpNetwork {
        &self.decoder
    }

    pub fn classifier(&self) -> &MlpNetwork {
        &self.classifier
    }

    pub fn forward(&self, images: ArrayView2<f64>) -> Result<(ModelOutputs, ForwardTrace)> {
        if images.ncols() != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                found: images.ncols(),
            });
        }
        let encoder = self.encoder.forward(images)?;
        let code = encoder.output().view();
        let decoder = self.decoder.forward(code)?;
        let classifier = self.classifier.forward(code)?;
        let kgv = KgvTensor::from_values(
            images.nrows(),
            self.arch.n_relations,
            self.arch.n_entities,
            code.iter().copied().collect(),
        )?;
        let outputs = ModelOutputs {
            kgv,
            reconstruction: decoder.output().clone(),
            class_logits: classifier.output().clone(),
        };
        Ok((
            outputs,
            ForwardTrace {
                encoder,
                decoder,
                classifier,
            },
        ))
    }

    pub fn backward(&self, trace: &ForwardTrace, upstream: &Upstream) -> Result<Gradients> {
        let b = trace.batch();
        let cells = self.arch.kgv_cells();
        let zeros = |n| Array2::<f64>::zeros((b, n));
        let d_rec = upstream.reconstruction.clone().unwrap_or_else(|| zeros(self.arch.input));
        let d_log = upstream.class_logits.clone().unwrap_or_else(|| zeros(self.arch.classes));
        let (decoder, d_code_dec) = self.decoder.backward(&trace.decoder, d_rec.view())?;
        let (classifier, d_code_cls) = self.classifier.backward(&trace.classifier, d_log.view())?;
        let mut d_code = d_code_dec + &d_code_cls;
        if let Some(k) = &upstream.kgv {
            if k.len() != b * cells {
                return Err(Error::DimensionMismatch {
                    expected: b * cells,
                    found: k.len(),
                });
            }
            d_code += &ArrayView2::from_shape((b, cells), k).expect("checked length");
        }
        let (encoder, _) = self.encoder.backward(&trace.encoder, d_code.view())?;
        Ok(Gradients {
            encoder,
            decoder,
            classifier,
        })
    }

    /// Parameter blocks: per layer weights then biases, encoder, decoder, classifier.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.encoder
            .blocks()
            .chain(self.decoder.blocks())
            .chain(self.classifier.blocks())
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .blocks_mut()
            .chain(self.decoder.blocks_mut())
            .chain(self.classifier.blocks_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|b| b.len()).sum()
    }
}

/// `L_T` and its gradients with respect to the reconstruction and the logits.
#[derive(Clone, Debug)]
pub struct TaskLoss {
    pub value: f64,
    pub reconstruction_bce: f64,
    pub cross_entropy: f64,
    pub d_reconstruction: Array2<f64>,
    pub d_logits: Array2<f64>,
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn bce_grad(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p - y) / (p * (1.0 - p))
}

/// Pixel-mean binary cross-entropy of the reconstruction plus mean softmax
/// cross-entropy of the class logits.
pub fn task_loss(outputs: &ModelOutputs, images: ArrayView2<f64>, labels: &[usize]) -> Result<TaskLoss> {
    let rec = &outputs.reconstruction;
    let logits = &outputs.class_logits;
    if rec.dim() != images.dim() {
        return Err(invalid("reconstruction and images differ in shape"));
    }
    if labels.len() != logits.nrows() {
        return Err(Error::DimensionMismatch {
            expected: logits.nrows(),
            found: labels.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= logits.ncols()) {
        return Err(invalid(format!("label {y} outside 0..{}", logits.ncols())));
    }
    let n = rec.len() as f64;
    let mut rec_loss = 0.0;
    let mut d_reconstruction = Array2::zeros(rec.dim());
    for ((d, &p), &y) in d_reconstruction.iter_mut().zip(rec).zip(images) {
        rec_loss += bce(p, y);
        *d = bce_grad(p, y) / n;
    }
    rec_loss /= n;

    let b = labels.len() as f64;
    let mut ce = 0.0;
    let mut d_logits = Array2::zeros(logits.dim());
    for ((row, mut drow), &y) in logits.outer_iter().zip(d_logits.outer_iter_mut()).zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + sum.ln();
        ce += log_z - row[y];
        for (k, (d, &v)) in drow.iter_mut().zip(row).enumerate() {
            let softmax = (v - log_z).exp();
            *d = (softmax - if k == y { 1.0 } else { 0.0 }) / b;
        }
    }
    ce /= b;
    Ok(TaskLoss {
        value: rec_loss + ce,
        reconstruction_bce: rec_loss,
        cross_entropy: ce,
        d_reconstruction,
        d_logits,
    })
}

#[derive(Clone, Debug)]
pub struct RegressionLoss {
    pub value: f64,
    pub active: usize,
    /// Flat gradient laid out like the tensor; zero on inactive cells.
    pub grad: Vec<f64>,
}

/// Mean binary cross-entropy over the active cells of `mask`.
pub fn regression_loss(kgv: &KgvTensor, mask: &TargetMask) -> Result<RegressionLoss> {
    if mask.shape() != (kgv.batch(), kgv.n_relations(), kgv.n_entities()) {
        return Err(invalid("mask and tensor differ in shape"));
    }
    let active = mask.active_count();
    let mut grad = vec![0.0; kgv.values().len()];
    if active == 0 {
        return Ok(RegressionLoss {
            value: 0.0,
            active,
            grad,
        });
    }
    let a = active as f64;
    let mut sum = 0.0;
    for (i, ((&p, &t), &on)) in kgv
        .values()
        .iter()
        .zip(mask.targets())
        .zip(mask.active())
        .enumerate()
    {
        if on {
            sum += bce(p, t);
            grad[i] = bce_grad(p, t) / a;
        }
    }
    Ok(RegressionLoss {
        value: sum / a,
        active,
        grad,
    })
}

/// Checkpoint manifest written next to the raw parameter blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub architecture: Architecture,
    pub seed: u64,
    pub epoch: usize,
    pub parameter_count: usize,
    pub blob: String,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub const CHECKPOINT_FORMAT: &str = "kgalign-checkpoint-v1";

fn block_infos(model: &KgAutoencoder) -> Vec<BlockInfo> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (part, net) in [
        ("encoder", &model.encoder),
        ("decoder", &model.decoder),
        ("classifier", &model.classifier),
    ] {
        for (i, l) in net.layers.iter().enumerate() {
            let (o, n) = l.weights.dim();
            out.push(BlockInfo {
                name: format!("{part}.{i}.weights"),
                shape: vec![o, n],
                offset,
            });
            offset += o * n;
            out.push(BlockInfo {
                name: format!("{part}.{i}.biases"),
                shape: vec![o],
                offset,
            });
            offset += o;
        }
    }
    out
}

/// Writes `<stem>.json` and `<stem>.bin` (little-endian f64 parameters).
pub fn save_checkpoint(model: &KgAutoencoder, dir: impl AsRef<Path>, stem: &str, seed: u64, epoch: usize) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let blob_name = format!("{stem}.bin");
    let mut bytes = Vec::with_capacity(model.parameter_count() * 8);
    for block in model.parameters() {
        for v in block {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join(&blob_name), bytes)?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        architecture: model.arch,
        seed,
        epoch,
        parameter_count: model.parameter_count(),
        blob: blob_name,
        blocks: block_infos(model),
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn load_checkpoint(manifest_path: impl AsRef<Path>) -> Result<(KgAutoencoder, CheckpointManifest)> {
    let path = manifest_path.as_ref();
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(invalid(format!("unknown checkpoint format `{}`", manifest.format)));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let bytes = fs::read(&blob_path)?;
    let mut model = KgAutoencoder::new(manifest.architecture, 0)?;
    let count = model.parameter_count();
    if manifest.parameter_count != count || bytes.len() != count * 8 {
        return Err(Error::Truncated {
            path: blob_path.clone(),
            expected: count * 8,
            found: bytes.len(),
        });
    }
    let mut chunks = bytes.chunks_exact(8);
    for block in model.parameters_mut() {
        for v in block.iter_mut() {
            let c = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    if model.parameters().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("checkpoint {}", blob_path.display())));
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, compare};
    use ndarray::Array2;

    fn toy_arch() -> Architecture {
        Architecture {
            input: 784,
            hidden: 16,
            n_relations: 1,
            n_entities: 6,
            classes: 10,
        }
    }

    fn random_images(b: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((b, n), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn experiment1_shapes() {
        let model = KgAutoencoder::new(Architecture::experiment1(), 1).unwrap();
        let (out, trace) = model.forward(Array2::zeros((1, 784)).view()).unwrap();
        assert_eq!(
            (out.kgv.batch(), out.kgv.n_relations(), out.kgv.n_entities()),
            (1, 1, 28)
        );
        assert_eq!(out.reconstruction.dim(), (1, 784));
        assert_eq!(out.class_logits.dim(), (1, 10));
        assert_eq!(trace.batch(), 1);
    }

    #[test]
    fn outputs_finite_bounded_deterministic() {
        let model = KgAutoencoder::new(toy_arch(), 2).unwrap();
        let x = random_images(4, 784, 3);
        let (a, _) = model.forward(x.view()).unwrap();
        let (b, _) = model.forward(x.view()).unwrap();
        assert!(a.kgv.values().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(a.reconstruction.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(a.class_logits.iter().all(|v| v.is_finite()));
        assert_eq!(a.kgv, b.kgv);
        assert_eq!(a.reconstruction, b.reconstruction);
        assert_eq!(a.class_logits, b.class_logits);
        assert!(model.forward(Array2::zeros((1, 10)).view()).is_err());
    }

    #[test]
    fn uniform_logits_cost_ln_10() {
        let out = ModelOutputs {
            kgv: KgvTensor::zeros(2, 1, 1),
            reconstruction: Array2::from_elem((2, 3), 0.3),
            class_logits: Array2::zeros((2, 10)),
        };
        let images = Array2::from_elem((2, 3), 0.3);
        let l = task_loss(&out, images.view(), &[0, 7]).unwrap();
        assert!((l.cross_entropy - 10f64.ln()).abs() < 1e-12);
        // Perfect reconstruction: zero gradient on that path.
        assert!(l.d_reconstruction.iter().all(|d| d.abs() < 1e-6));
        assert!(task_loss(&out, images.view(), &[0, 10]).is_err());
    }

    #[test]
    fn confident_correct_logits_near_bound() {
        let mut logits = Array2::zeros((1, 10));
        logits[(0, 4)] = 50.0;
        let out = ModelOutputs {
            kgv: KgvTensor::zeros(1, 1, 1),
            reconstruction: Array2::from_elem((1, 2), 0.25),
            class_logits: logits,
        };
        let images = Array2::from_elem((1, 2), 0.25);
        let l = task_loss(&out, images.view(), &[4]).unwrap();
        let floor = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((l.value - floor).abs() < 1e-12);
    }

    #[test]
    fn task_loss_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut out = ModelOutputs {
            kgv: KgvTensor::zeros(3, 1, 1),
            reconstruction: Array2::from_shape_simple_fn((3, 4), || rng.random_range(0.05..0.95)),
            class_logits: Array2::from_shape_simple_fn((3, 10), || rng.random_range(-2.0..2.0)),
        };
        let images = Array2::from_shape_simple_fn((3, 4), || rng.random_range(0.0..1.0));
        let labels = [1, 5, 9];
        let l = task_loss(&out, images.view(), &labels).unwrap();
        for idx in [(0, 0), (1, 3), (2, 2)] {
            let base = out.reconstruction[idx];
            let num = central_difference(
                |x| {
                    out.reconstruction[idx] = x;
                    task_loss(&out, images.view(), &labels).unwrap().value
                },
                base,
                1e-5,
            );
            out.reconstruction[idx] = base;
            assert!(compare(l.d_reconstruction[idx], num).rel_error <= 1e-4);
        }
        for idx in [(0, 1), (1, 0), (2, 9)] {
            let base = out.class_logits[idx];
            let num = central_difference(
                |x| {
                    out.class_logits[idx] = x;
                    task_loss(&out, images.view(), &labels).unwrap().value
                },
                base,
                1e-5,
            );
            out.class_logits[idx] = base;
            assert!(compare(l.d_logits[idx], num).rel_error <= 1e-4);
        }
    }

    #[test]
    fn five_parameter_net_gradient() {
        // 2 -> 1 sigmoid (3 parameters), 1 -> 1 sigmoid (2 parameters), BCE on the output.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net =
            MlpNetwork::glorot(&[2, 1, 1], &[Activation::Sigmoid, Activation::Sigmoid], &mut rng).unwrap();
        let x = Array2::from_shape_vec((3, 2), vec![0.1, 0.9, 0.5, 0.2, 0.7, 0.7]).unwrap();
        let y = [1.0, 0.0, 1.0];
        let loss = |net: &MlpNetwork| {
            let t = net.forward(x.view()).unwrap();
            t.output().iter().zip(&y).map(|(&p, &t)| bce(p, t)).sum::<f64>() / 3.0
        };
        let trace = net.forward(x.view()).unwrap();
        let d_out = Array2::from_shape_fn((3, 1), |(i, _)| bce_grad(trace.output()[(i, 0)], y[i]) / 3.0);
        let (grads, _) = net.backward(&trace, d_out.view()).unwrap();
        let analytic: Vec<f64> = grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.biases).copied().collect::<Vec<_>>())
            .collect();
        assert_eq!(analytic.len(), 5);
        let mut k = 0;
        for b in 0..4 {
            let len = net.blocks().nth(b).unwrap().len();
            for i in 0..len {
                let base = net.blocks().nth(b).unwrap()[i];
                let num = central_difference(
                    |v| {
                        net.blocks_mut().nth(b).unwrap()[i] = v;
                        loss(&net)
                    },
                    base,
                    1e-5,
                );
                net.blocks_mut().nth(b).unwrap()[i] = base;
                assert!(compare(analytic[k], num).rel_error <= 1e-4, "param {k}");
                k += 1;
            }
        }
    }

    #[test]
    fn regression_loss_examples() {
        let kgv = KgvTensor::from_values(1, 1, 2, vec![0.5, 0.2, 0.9, 0.4]).unwrap();
        let empty = TargetMask::inactive(1, 1, 2);
        let r = regression_loss(&kgv, &empty).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));

        let mut mask = TargetMask::inactive(1, 1, 2);
        mask.set(0, 0, 0, 0, true);
        let r = regression_loss(&kgv, &mask).unwrap();
        assert!((r.value - 2f64.ln()).abs() < 1e-12);
        assert_eq!(&r.grad[1..], &[0.0, 0.0, 0.0]);

        mask.set(0, 0, 1, 1, false);
        let r = regression_loss(&kgv, &mask).unwrap();
        for i in [0usize, 3] {
            let mut vals = kgv.values().to_vec();
            let num = central_difference(
                |x| {
                    vals[i] = x;
                    let k = KgvTensor::from_values(1, 1, 2, vals.clone()).unwrap();
                    regression_loss(&k, &mask).unwrap().value
                },
                kgv.values()[i],
                1e-5,
            );
            assert!(compare(r.grad[i], num).rel_error <= 1e-4);
        }
    }

    #[test]
    fn zero_and_doubled_upstream() {
        let model = KgAutoencoder::new(toy_arch(), 5).unwrap();
        let x = random_images(2, 784, 6);
        let (out, trace) = model.forward(x.view()).unwrap();
        let zero = model.backward(&trace, &Upstream::default()).unwrap();
        assert!(zero.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));

        let l = task_loss(&out, x.view(), &[3, 8]).unwrap();
        let up = Upstream {
            kgv: Some(vec![0.01; 2 * 36]),
            reconstruction: Some(l.d_reconstruction.clone()),
            class_logits: Some(l.d_logits.clone()),
        };
        let up2 = Upstream {
            kgv: Some(vec![0.02; 2 * 36]),
            reconstruction: Some(&l.d_reconstruction * 2.0),
            class_logits: Some(&l.d_logits * 2.0),
        };
        let g1 = model.backward(&trace, &up).unwrap();
        let g2 = model.backward(&trace, &up2).unwrap();
        for (a, b) in g1.blocks().iter().zip(g2.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let small = KgAutoencoder::new(toy_arch(), 1).unwrap();
        let other = KgAutoencoder::new(
            Architecture {
                hidden: 8,
                ..toy_arch()
            },
            1,
        )
        .unwrap();
        let (_, trace) = other.forward(random_images(1, 784, 1).view()).unwrap();
        assert!(matches!(
            small.backward(&trace, &Upstream::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = KgAutoencoder::new(toy_arch(), 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = save_checkpoint(&model, dir.path(), "model", 12, 3).unwrap();
        let (back, manifest) = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(manifest.epoch, 3);
        assert_eq!(manifest.blocks.len(), 10);
        let blob = dir.path().join("model.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Truncated { .. })));
    }
}
