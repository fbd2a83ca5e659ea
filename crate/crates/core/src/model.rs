//! Predictors: linear models for the theory lab and MLP classifiers for
//! image experiments, with access to the penultimate feature map, seeded
//! SGD training, and a JSON file format pinned to 17 significant digits so
//! weights round-trip bitwise.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::autodiff::{DiffProgram, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{dot, softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// One dense layer: `y = act(W x + b)` with `W` stored rows x cols.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn rows(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.weights.shape()[1]
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let w = self.weights.data();
        (0..self.rows())
            .map(|i| dot(&w[i * cols..(i + 1) * cols], x) + self.bias[i])
            .collect()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.affine(x);
        if self.activation == Activation::Relu {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        y
    }
}

/// `x -> x.w + b`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("linear model needs d >= 1".into()));
        }
        if !weights.iter().all(|v| v.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("LinearModel::new".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(dim_mismatch("LinearModel::predict", self.dim(), x.len()));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }
}

/// Dense-ReLU stack with a linear head producing class logits.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    input_shape: (usize, usize),
    classes: usize,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>, input_shape: (usize, usize), classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP needs at least one layer".into()));
        }
        let d = input_shape.0 * input_shape.1;
        let mut expected = d;
        for (i, layer) in layers.iter().enumerate() {
            if layer.cols() != expected {
                return Err(Error::ShapeMismatch {
                    context: format!("layer {i}"),
                    expected: format!("{expected} columns"),
                    got: format!("{} columns", layer.cols()),
                });
            }
            if layer.bias.len() != layer.rows() {
                return Err(Error::ShapeMismatch {
                    context: format!("layer {i} bias"),
                    expected: format!("{}", layer.rows()),
                    got: format!("{}", layer.bias.len()),
                });
            }
            expected = layer.rows();
        }
        let last = layers.last().unwrap();
        if last.rows() != classes {
            return Err(Error::ShapeMismatch {
                context: "final layer".into(),
                expected: format!("{classes} rows"),
                got: format!("{}", last.rows()),
            });
        }
        if last.activation != Activation::None {
            return Err(Error::InvalidArgument(
                "final layer must be linear (activation none)".into(),
            ));
        }
        Ok(Self {
            layers,
            input_shape,
            classes,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// All layers before the class head.
    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn final_layer(&self) -> &DenseLayer {
        self.layers.last().unwrap()
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.0 * self.input_shape.1
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn penultimate_dim(&self) -> usize {
        self.final_layer().cols()
    }

    /// Logits together with the exact input of the final dense layer.
    pub fn forward_with_features(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(dim_mismatch("MlpModel::forward", self.input_dim(), x.len()));
        }
        let mut features = x.to_vec();
        for layer in self.hidden_layers() {
            features = layer.forward(&features);
        }
        let logits = self.final_layer().forward(&features);
        Ok((logits, features))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_features(x)?.0)
    }

    /// The logits as a differentiable program over the input leaf.
    pub fn logits_program(&self) -> (DiffProgram, NodeId) {
        let mut p = DiffProgram::new();
        let x = p.leaf("x", vec![self.input_dim()]);
        let mut node = x;
        for layer in &self.layers {
            node = p
                .affine(node, layer.weights.clone(), layer.bias.clone())
                .expect("validated at construction");
            if layer.activation == Activation::Relu {
                node = p.relu(node);
            }
        }
        p.set_output(node);
        (p, x)
    }
}

/// Either predictor behind one interface; attribution methods and metrics
/// are written against this.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.dim(),
            Model::Mlp(m) => m.input_dim(),
        }
    }

    /// (height, width) of the expected input; linear models are 1 x d.
    pub fn input_shape(&self) -> (usize, usize) {
        match self {
            Model::Linear(m) => (1, m.dim()),
            Model::Mlp(m) => m.input_shape(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Model::Linear(_) => 1,
            Model::Mlp(m) => m.classes(),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => Ok(vec![m.predict(x)?]),
            Model::Mlp(m) => m.logits(x),
        }
    }

    /// Class with the highest logit, ties to the lowest index.
    pub fn predicted_class(&self, x: &[f64]) -> Result<usize> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Gradient of one logit with respect to the input.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => {
                if class != 0 {
                    return Err(Error::IndexOutOfRange { index: class, len: 1 });
                }
                if x.len() != m.dim() {
                    return Err(dim_mismatch("input_gradient", m.dim(), x.len()));
                }
                Ok(m.weights.clone())
            }
            Model::Mlp(m) => {
                let (program, leaf) = m.logits_program();
                let input = Tensor::new(vec![m.input_dim()], x.to_vec())?;
                Ok(program
                    .gradient(&[&input], leaf, Some(class))?
                    .into_data())
            }
        }
    }

    /// Penultimate features: the input of the final dense layer. For a
    /// linear model the feature map is the identity.
    pub fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits_with_features(x)?.1)
    }

    /// Logits and penultimate features from one forward pass.
    pub fn logits_with_features(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Model::Linear(m) => Ok((vec![m.predict(x)?], x.to_vec())),
            Model::Mlp(m) => m.forward_with_features(x),
        }
    }

    /// Equivalent logits program (single-output for linear models).
    pub fn as_program(&self) -> (DiffProgram, NodeId) {
        match self {
            Model::Linear(m) => {
                let mut p = DiffProgram::new();
                let x = p.leaf("x", vec![m.dim()]);
                let out = p
                    .affine(
                        x,
                        Tensor::from_parts(vec![1, m.dim()], m.weights.clone()),
                        vec![m.bias],
                    )
                    .expect("shape fixed by construction");
                p.set_output(out);
                (p, x)
            }
            Model::Mlp(m) => m.logits_program(),
        }
    }
}

fn dim_mismatch(context: &str, expected: usize, got: usize) -> Error {
    Error::ShapeMismatch {
        context: context.into(),
        expected: format!("{expected}"),
        got: format!("{got}"),
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Labeled images for training and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ArchSpec {
    pub input_shape: (usize, usize),
    pub hidden: Vec<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            l2_penalty: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Full-dataset cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Seeded minibatch SGD with softmax cross-entropy. Single-threaded and
/// bitwise deterministic for a given config.
pub fn train_sgd(arch: &ArchSpec, dataset: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be > 0".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()));
    }
    if let Some(&bad) = dataset.labels.iter().find(|&&l| l >= arch.classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            arch.classes
        )));
    }
    let d = arch.input_shape.0 * arch.input_shape.1;
    for (i, img) in dataset.images.iter().enumerate() {
        if img.len() != d {
            return Err(dim_mismatch(&format!("train image {i}"), d, img.len()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![d];
    sizes.extend(&arch.hidden);
    sizes.push(arch.classes);

    // He-uniform initialization, biases at zero.
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut biases: Vec<Vec<f64>> = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let scale = (6.0 / fan_in as f64).sqrt();
        weights.push(
            (0..fan_out * fan_in)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
        );
        biases.push(vec![0.0; fan_out]);
    }
    let n_layers = sizes.len() - 1;
    let batch = cfg.batch_size.max(1);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the shared stream keeps runs reproducible.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let mut grad_w: Vec<Vec<f64>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
            let mut grad_b: Vec<Vec<f64>> = biases.iter().map(|b| vec![0.0; b.len()]).collect();
            for &idx in chunk {
                let x = dataset.images[idx].data();
                let label = dataset.labels[idx];
                // Forward, keeping post-activation values per layer.
                let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
                for l in 0..n_layers {
                    let (rows, cols) = (sizes[l + 1], sizes[l]);
                    let prev = &acts[l];
                    let mut z: Vec<f64> = (0..rows)
                        .map(|i| dot(&weights[l][i * cols..(i + 1) * cols], prev) + biases[l][i])
                        .collect();
                    if l + 1 < n_layers {
                        for v in &mut z {
                            *v = v.max(0.0);
                        }
                    }
                    acts.push(z);
                }
                let probs = softmax(acts.last().unwrap());
                let mut delta: Vec<f64> = probs;
                delta[label] -= 1.0;
                // Backward.
                for l in (0..n_layers).rev() {
                    let (rows, cols) = (sizes[l + 1], sizes[l]);
                    let prev = &acts[l];
                    for i in 0..rows {
                        let di = delta[i];
                        if di != 0.0 {
                            let row = &mut grad_w[l][i * cols..(i + 1) * cols];
                            for (g, &p) in row.iter_mut().zip(prev) {
                                *g += di * p;
                            }
                        }
                        grad_b[l][i] += di;
                    }
                    if l > 0 {
                        let mut next = vec![0.0; cols];
                        for i in 0..rows {
                            let di = delta[i];
                            if di != 0.0 {
                                for (j, n) in next.iter_mut().enumerate() {
                                    *n += di * weights[l][i * cols + j];
                                }
                            }
                        }
                        for (n, &a) in next.iter_mut().zip(prev) {
                            if a <= 0.0 {
                                *n = 0.0;
                            }
                        }
                        delta = next;
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            for l in 0..n_layers {
                for (w, g) in weights[l].iter_mut().zip(&grad_w[l]) {
                    *w -= cfg.learning_rate * (g * inv + cfg.l2_penalty * *w);
                }
                for (b, g) in biases[l].iter_mut().zip(&grad_b[l]) {
                    *b -= cfg.learning_rate * g * inv;
                }
            }
        }
        epoch_losses.push(dataset_loss(&sizes, &weights, &biases, dataset));
    }

    let layers: Vec<DenseLayer> = (0..n_layers)
        .map(|l| DenseLayer {
            weights: Tensor::new(vec![sizes[l + 1], sizes[l]], weights[l].clone())
                .expect("trainer produced non-finite weights"),
            bias: biases[l].clone(),
            activation: if l + 1 < n_layers {
                Activation::Relu
            } else {
                Activation::None
            },
        })
        .collect();
    let model = MlpModel::new(layers, arch.input_shape, arch.classes)?;

    let mut correct = 0usize;
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        let logits = model.logits(img.data())?;
        let pred = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if pred == label {
            correct += 1;
        }
    }
    let report = TrainReport {
        final_loss: *epoch_losses.last().unwrap(),
        epoch_losses,
        final_accuracy: correct as f64 / dataset.len() as f64,
    };
    Ok((model, report))
}

fn dataset_loss(sizes: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>], dataset: &Dataset) -> f64 {
    let n_layers = sizes.len() - 1;
    let mut total = 0.0;
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        let mut a = img.data().to_vec();
        for l in 0..n_layers {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let mut z: Vec<f64> = (0..rows)
                .map(|i| dot(&weights[l][i * cols..(i + 1) * cols], &a) + biases[l][i])
                .collect();
            if l + 1 < n_layers {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        let probs = softmax(&a);
        total -= probs[label].max(1e-300).ln();
    }
    total / dataset.len() as f64
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Deserialize)]
struct ModelFile {
    #[serde(rename = "type")]
    kind: String,
    input_shape: (usize, usize),
    classes: usize,
    layers: Vec<LayerFile>,
}

fn write_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // 17 significant digits: enough to reproduce any f64 exactly.
        let _ = write!(out, "{v:.16e}");
    }
    out.push(']');
}

/// Serializes a model to the JSON document format used by the CLI.
pub fn model_to_json(model: &Model) -> String {
    let mut out = String::new();
    let (kind, shape, classes, layers): (&str, (usize, usize), usize, Vec<DenseLayer>) = match model
    {
        Model::Linear(m) => (
            "linear",
            (1, m.dim()),
            1,
            vec![DenseLayer {
                weights: Tensor::from_parts(vec![1, m.dim()], m.weights.clone()),
                bias: vec![m.bias],
                activation: Activation::None,
            }],
        ),
        Model::Mlp(m) => ("mlp", m.input_shape(), m.classes(), m.layers().to_vec()),
    };
    let _ = write!(
        out,
        "{{\"type\":\"{kind}\",\"input_shape\":[{},{}],\"classes\":{classes},\"layers\":[",
        shape.0, shape.1
    );
    for (i, layer) in layers.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"rows\":{},\"cols\":{},\"weights\":", layer.rows(), layer.cols());
        write_floats(&mut out, layer.weights.data());
        out.push_str(",\"bias\":");
        write_floats(&mut out, &layer.bias);
        let act = match layer.activation {
            Activation::Relu => "relu",
            Activation::None => "none",
        };
        let _ = write!(out, ",\"activation\":\"{act}\"}}");
    }
    out.push_str("]}\n");
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model))
        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, layer) in file.layers.iter().enumerate() {
        if layer.weights.len() != layer.rows * layer.cols {
            return Err(Error::ModelFile(format!(
                "layer {i} field 'weights': expected {} values ({}x{}), got {}",
                layer.rows * layer.cols,
                layer.rows,
                layer.cols,
                layer.weights.len()
            )));
        }
        if layer.bias.len() != layer.rows {
            return Err(Error::ModelFile(format!(
                "layer {i} field 'bias': expected {} values, got {}",
                layer.rows,
                layer.bias.len()
            )));
        }
        let activation = match layer.activation.as_str() {
            "relu" => Activation::Relu,
            "none" => Activation::None,
            other => {
                return Err(Error::ModelFile(format!(
                    "layer {i} field 'activation': unknown value '{other}'"
                )))
            }
        };
        layers.push(DenseLayer {
            weights: Tensor::new(vec![layer.rows, layer.cols], layer.weights.clone())
                .map_err(|e| Error::ModelFile(format!("layer {i} field 'weights': {e}")))?,
            bias: layer.bias.clone(),
            activation,
        });
    }
    match file.kind.as_str() {
        "linear" => {
            if layers.len() != 1 || layers[0].rows() != 1 {
                return Err(Error::ModelFile(
                    "field 'layers': linear model must have one single-output layer".into(),
                ));
            }
            let layer = layers.pop().unwrap();
            Ok(Model::Linear(LinearModel::new(
                layer.weights.data().to_vec(),
                layer.bias[0],
            )?))
        }
        "mlp" => {
            let mlp = MlpModel::new(layers, file.input_shape, file.classes)
                .map_err(|e| Error::ModelFile(format!("field 'layers': {e}")))?;
            Ok(Model::Mlp(mlp))
        }
        other => Err(Error::ModelFile(format!(
            "field 'type': unknown value '{other}'"
        ))),
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}
