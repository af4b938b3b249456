//! Classifier and annotator networks.
//!
//! The classifier maps an instance to class probabilities and exposes its
//! last hidden activation as an embedding. The annotator network reads that
//! embedding concatenated with an annotator encoding and emits one
//! row-stochastic `C × C` confusion matrix per row. Annotation probabilities
//! are the class probabilities pushed through the confusion matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, Matrix, Rng, Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.01;
/// Final-layer weight scale of the annotator network at initialisation.
pub const CONFUSION_WEIGHT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Uniform fan-in initialisation, `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut weight = Matrix::zeros(fan_in, fan_out);
        for w in weight.as_mut_slice() {
            *w = rng.uniform_range(-bound, bound);
        }
        let mut bias = Matrix::zeros(1, fan_out);
        for b in bias.as_mut_slice() {
            *b = rng.uniform_range(-bound, bound);
        }
        Self { weight, bias }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }

    fn bind(&self, tape: &mut Tape) -> (Var, Var) {
        (tape.param(self.weight.clone()), tape.param(self.bias.clone()))
    }
}

fn leaky(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

/// Parameter handles of one network recorded on a tape, in the same order
/// as the network's `params()`.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierNet {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

impl ClassifierNet {
    /// `sizes = [D, hidden.., C]`; at least an input and an output size.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(
                "models.classifier_hidden",
                format!("invalid layer sizes {sizes:?}"),
            ));
        }
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("classifier needs at least one layer".into()));
        }
        let mut sizes = vec![layers[0].weight.rows()];
        for l in &layers {
            if l.weight.rows() != *sizes.last().unwrap() || l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::Input("inconsistent classifier layer shapes".into()));
            }
            sizes.push(l.weight.cols());
        }
        Ok(Self { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Width of the penultimate layer output.
    pub fn embedding_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .layers
            .iter()
            .flat_map(|l| {
                let (w, b) = l.bind(tape);
                [w, b]
            })
            .collect();
        Bound { vars }
    }

    /// Differentiable forward pass; returns `(probs, embedding)`.
    pub fn forward_tape(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<(Var, Var)> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.input_dim() {
            return Err(Error::shape(
                "classifier_forward",
                format!("{rows}x{cols} input for {} features", self.input_dim()),
            ));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for i in 0..last {
            let z = tape.matmul(h, bound.vars[2 * i])?;
            let z = tape.add_row(z, bound.vars[2 * i + 1])?;
            h = tape.leaky_relu(z, LEAKY_SLOPE);
        }
        let logits = tape.matmul(h, bound.vars[2 * last])?;
        let logits = tape.add_row(logits, bound.vars[2 * last + 1])?;
        Ok((tape.softmax_rows(logits), h))
    }

    /// Inference-only forward pass; returns `(probs, embedding)`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "classifier_forward",
                format!("{}x{} input for {} features", x.rows(), x.cols(), self.input_dim()),
            ));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            h = leaky(&layer.forward(&h)?);
        }
        let probs = self.layers[last].forward(&h)?.softmax_rows();
        Ok((probs, h))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Most probable class per row, lowest index on ties.
    pub fn predict_class(&self, x: &Matrix) -> Result<Vec<usize>> {
        let probs = self.predict_proba(x)?;
        Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
    }
}

/// Target confusion matrix with `eta` on the diagonal and the remaining mass
/// spread evenly off the diagonal.
pub fn diagonal_prior(eta: f64, num_classes: usize) -> Matrix {
    let off = (1.0 - eta) / (num_classes - 1) as f64;
    let mut m = Matrix::filled(num_classes, num_classes, off);
    for c in 0..num_classes {
        m.set(c, c, eta);
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatorNet {
    hidden: Dense,
    output: Dense,
    embedding_dim: usize,
    num_annotators: usize,
    num_classes: usize,
    eta: f64,
}

impl AnnotatorNet {
    /// One hidden layer over `[embedding, annotator encoding]`, output head
    /// initialised towards the diagonal prior with weight `eta`.
    pub fn new(
        embedding_dim: usize,
        num_annotators: usize,
        num_classes: usize,
        hidden_width: usize,
        eta: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_classes < 2 || num_annotators == 0 || hidden_width == 0 {
            return Err(Error::config(
                "models.annotator_hidden",
                format!("invalid annotator network: C={num_classes}, M={num_annotators}, width={hidden_width}"),
            ));
        }
        let hidden = Dense::init(embedding_dim + num_annotators, hidden_width, rng);
        let output = Dense::init(hidden_width, num_classes * num_classes, rng);
        let mut net = Self {
            hidden,
            output,
            embedding_dim,
            num_annotators,
            num_classes,
            eta,
        };
        init_confusion_bias(&mut net, eta, num_classes)?;
        Ok(net)
    }

    pub fn from_parts(
        hidden: Dense,
        output: Dense,
        embedding_dim: usize,
        num_annotators: usize,
        num_classes: usize,
        eta: f64,
    ) -> Result<Self> {
        if hidden.weight.rows() != embedding_dim + num_annotators
            || output.weight.rows() != hidden.weight.cols()
            || output.weight.cols() != num_classes * num_classes
            || hidden.bias.shape() != (1, hidden.weight.cols())
            || output.bias.shape() != (1, output.weight.cols())
        {
            return Err(Error::Input("inconsistent annotator layer shapes".into()));
        }
        Ok(Self {
            hidden,
            output,
            embedding_dim,
            num_annotators,
            num_classes,
            eta,
        })
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn hidden(&self) -> &Dense {
        &self.hidden
    }

    pub fn output(&self) -> &Dense {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut Dense {
        &mut self.output
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![
            &self.hidden.weight,
            &self.hidden.bias,
            &self.output.weight,
            &self.output.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let (hw, hb) = self.hidden.bind(tape);
        let (ow, ob) = self.output.bind(tape);
        Bound {
            vars: vec![hw, hb, ow, ob],
        }
    }

    fn check_inputs(&self, emb: (usize, usize), a: (usize, usize)) -> Result<()> {
        if emb.1 != self.embedding_dim || a.1 != self.num_annotators || emb.0 != a.0 {
            return Err(Error::shape(
                "annotator_forward",
                format!(
                    "embedding {}x{} and annotators {}x{} for H={}, M={}",
                    emb.0, emb.1, a.0, a.1, self.embedding_dim, self.num_annotators
                ),
            ));
        }
        Ok(())
    }

    /// Differentiable forward pass returning `batch × C²` row-stochastic
    /// confusion matrices (each `C × C` block flattened row-major).
    pub fn forward_tape(&self, tape: &mut Tape, bound: &Bound, embedding: Var, annotators: Var) -> Result<Var> {
        self.check_inputs(tape.value(embedding).shape(), tape.value(annotators).shape())?;
        let rows = tape.value(embedding).rows();
        let c = self.num_classes;
        let input = tape.concat_cols(embedding, annotators)?;
        let z = tape.matmul(input, bound.vars[0])?;
        let z = tape.add_row(z, bound.vars[1])?;
        let h = tape.leaky_relu(z, LEAKY_SLOPE);
        let logits = tape.matmul(h, bound.vars[2])?;
        let logits = tape.add_row(logits, bound.vars[3])?;
        let blocks = tape.reshape(logits, rows * c, c)?;
        let conf = tape.softmax_rows(blocks);
        tape.reshape(conf, rows, c * c)
    }

    pub fn forward(&self, embedding: &Matrix, annotators: &Matrix) -> Result<Matrix> {
        self.check_inputs(embedding.shape(), annotators.shape())?;
        let rows = embedding.rows();
        let c = self.num_classes;
        let input = embedding.concat_cols(annotators)?;
        let h = leaky(&self.hidden.forward(&input)?);
        let logits = self.output.forward(&h)?;
        logits.reshape(rows * c, c)?.softmax_rows().reshape(rows, c * c)
    }
}

/// Sets the annotator head's bias to the log of the diagonal prior and
/// shrinks its weights so every input maps close to the prior.
pub fn init_confusion_bias(net: &mut AnnotatorNet, eta: f64, num_classes: usize) -> Result<()> {
    if num_classes != net.num_classes {
        return Err(Error::config(
            "models.eta",
            format!("network has {} classes, asked for {num_classes}", net.num_classes),
        ));
    }
    let lower = 1.0 / num_classes as f64;
    if !(eta > lower && eta < 1.0) {
        return Err(Error::config(
            "models.eta",
            format!("must lie in (1/C, 1) = ({lower}, 1), got {eta}"),
        ));
    }
    let prior = diagonal_prior(eta, num_classes);
    for (b, &p) in net.output.bias.as_mut_slice().iter_mut().zip(prior.as_slice()) {
        *b = p.ln();
    }
    for w in net.output.weight.as_mut_slice() {
        *w *= CONFUSION_WEIGHT_SCALE;
    }
    net.eta = eta;
    Ok(())
}

/// Row-wise `probs[i]ᵀ × confusion[i]`.
pub fn combine(probs: &Matrix, confusion: &Matrix) -> Result<Matrix> {
    let c = probs.cols();
    if confusion.rows() != probs.rows() || confusion.cols() != c * c {
        return Err(Error::shape(
            "combine",
            format!(
                "probs {}x{} with confusion {}x{}",
                probs.rows(),
                c,
                confusion.rows(),
                confusion.cols()
            ),
        ));
    }
    let mut out = Matrix::zeros(probs.rows(), c);
    for b in 0..probs.rows() {
        let cm = confusion.row(b);
        let pr = probs.row(b);
        let or = out.row_mut(b);
        for (i, &pi) in pr.iter().enumerate() {
            for (o, &v) in or.iter_mut().zip(&cm[i * c..(i + 1) * c]) {
                *o += pi * v;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedPrediction {
    pub class_probs: Matrix,
    pub confusion: Matrix,
    pub annotation_probs: Matrix,
}

/// A trained classifier with an optional annotator network. Without an
/// annotator network every annotator is treated as perfect (identity
/// confusion), which is what the classifier-only baselines amount to.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPair {
    pub classifier: ClassifierNet,
    pub annotator: Option<AnnotatorNet>,
}

impl ModelPair {
    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    pub fn predict(&self, x: &Matrix, annotators: &Matrix) -> Result<CombinedPrediction> {
        let (class_probs, embedding) = self.classifier.forward(x)?;
        let c = class_probs.cols();
        let confusion = match &self.annotator {
            Some(net) => net.forward(&embedding, annotators)?,
            None => {
                let eye = Matrix::identity(c);
                let mut m = Matrix::zeros(x.rows(), c * c);
                for r in 0..x.rows() {
                    m.row_mut(r).copy_from_slice(eye.as_slice());
                }
                m
            }
        };
        let annotation_probs = combine(&class_probs, &confusion)?;
        Ok(CombinedPrediction {
            class_probs,
            confusion,
            annotation_probs,
        })
    }

    /// Most probable annotator label per row, lowest index on ties.
    pub fn predict_annotation(&self, x: &Matrix, annotators: &Matrix) -> Result<Vec<usize>> {
        let pred = self.predict(x, annotators)?;
        let probs = &pred.annotation_probs;
        Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile::from_models(self);
        let text = serde_json::to_string(&file).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        file.into_models()
    }
}

pub const CHECKPOINT_FORMAT: &str = "annotmix-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerFile {
    fn from_dense(d: &Dense) -> Self {
        Self {
            inputs: d.weight.rows(),
            outputs: d.weight.cols(),
            weight: d.weight.as_slice().to_vec(),
            bias: d.bias.as_slice().to_vec(),
        }
    }

    fn into_dense(self) -> Result<Dense> {
        Ok(Dense {
            weight: Matrix::from_vec(self.inputs, self.outputs, self.weight)?,
            bias: Matrix::from_vec(1, self.outputs, self.bias)?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotatorFile {
    embedding_dim: usize,
    eta: f64,
    hidden: LayerFile,
    output: LayerFile,
}

/// On-disk checkpoint: layer sizes plus flat row-major parameter arrays.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    num_classes: usize,
    num_annotators: usize,
    layer_sizes: Vec<usize>,
    classifier: Vec<LayerFile>,
    annotator: Option<AnnotatorFile>,
}

impl CheckpointFile {
    fn from_models(m: &ModelPair) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            num_classes: m.classifier.num_classes(),
            num_annotators: m.annotator.as_ref().map_or(0, |a| a.num_annotators),
            layer_sizes: m.classifier.sizes().to_vec(),
            classifier: m.classifier.layers().iter().map(LayerFile::from_dense).collect(),
            annotator: m.annotator.as_ref().map(|a| AnnotatorFile {
                embedding_dim: a.embedding_dim,
                eta: a.eta,
                hidden: LayerFile::from_dense(&a.hidden),
                output: LayerFile::from_dense(&a.output),
            }),
        }
    }

    fn into_models(self) -> Result<ModelPair> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let layers = self
            .classifier
            .into_iter()
            .map(LayerFile::into_dense)
            .collect::<Result<Vec<_>>>()?;
        let classifier = ClassifierNet::from_layers(layers)?;
        if classifier.sizes() != self.layer_sizes.as_slice() || classifier.num_classes() != self.num_classes {
            return Err(Error::Input("checkpoint layer sizes disagree with parameters".into()));
        }
        let annotator = match self.annotator {
            None => None,
            Some(a) => Some(AnnotatorNet::from_parts(
                a.hidden.into_dense()?,
                a.output.into_dense()?,
                a.embedding_dim,
                self.num_annotators,
                self.num_classes,
                a.eta,
            )?),
        };
        Ok(ModelPair { classifier, annotator })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = rng.normal();
        }
        m
    }

    fn row_sums_close(m: &Matrix, block: usize, tol: f64) -> bool {
        (0..m.rows()).all(|r| {
            m.row(r)
                .chunks(block)
                .all(|b| (b.iter().sum::<f64>() - 1.0).abs() < tol && b.iter().all(|&v| (0.0..=1.0).contains(&v)))
        })
    }

    #[test]
    fn zero_final_layer_gives_uniform_probs() {
        let mut rng = Rng::new(1);
        let mut net = ClassifierNet::new(&[3, 8, 4], &mut rng).unwrap();
        let last = net.layers_mut().last_mut().unwrap();
        last.weight = Matrix::zeros(8, 4);
        last.bias = Matrix::zeros(1, 4);
        let x = random_matrix(5, 3, &mut rng);
        let (probs, emb) = net.forward(&x).unwrap();
        assert_eq!(probs.shape(), (5, 4));
        assert_eq!(emb.shape(), (5, 8));
        assert!(probs.as_slice().iter().all(|&p| p == 0.25));
        assert_eq!(net.predict_class(&x).unwrap(), vec![0; 5]);
    }

    #[test]
    fn forward_is_deterministic_and_tape_agrees() {
        let make = || {
            let mut rng = Rng::new(42);
            let net = ClassifierNet::new(&[2, 6, 5, 3], &mut rng).unwrap();
            let x = random_matrix(4, 2, &mut rng);
            (net, x)
        };
        let (net, x) = make();
        let (net2, x2) = make();
        let (p1, h1) = net.forward(&x).unwrap();
        let (p2, _) = net2.forward(&x2).unwrap();
        assert_eq!(p1, p2);

        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let xv = tape.constant(x);
        let (pv, hv) = net.forward_tape(&mut tape, &bound, xv).unwrap();
        assert_eq!(tape.value(pv), &p1);
        assert_eq!(tape.value(hv), &h1);
        assert!(row_sums_close(&p1, 3, 1e-12));
    }

    #[test]
    fn classifier_shape_errors() {
        let net = ClassifierNet::new(&[2, 4, 3], &mut Rng::new(0)).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(1, 3)), Err(Error::Shape { .. })));
        assert!(ClassifierNet::new(&[2], &mut Rng::new(0)).is_err());
    }

    fn init_deviation(c: usize, seed: u64) -> f64 {
        let mut rng = Rng::new(seed);
        let m = 5;
        let net = AnnotatorNet::new(16, m, c, 32, 0.9, &mut rng).unwrap();
        let target = diagonal_prior(0.9, c);
        let emb = random_matrix(100, 16, &mut rng);
        let mut a = Matrix::zeros(100, m);
        for r in 0..100 {
            a.set(r, r % m, 1.0);
        }
        let conf = net.forward(&emb, &a).unwrap();
        conf.as_slice()
            .chunks(c * c)
            .flat_map(|block| block.iter().zip(target.as_slice()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn confusion_init_matches_prior() {
        assert!(init_deviation(10, 3) < 0.05);
        assert!(init_deviation(2, 4) < 0.05);
        let prior = diagonal_prior(0.9, 2);
        assert_eq!(prior.row(0), &[0.9, 0.09999999999999998]);
    }

    #[test]
    fn bias_log_ratio() {
        let net = AnnotatorNet::new(4, 2, 10, 8, 0.9, &mut Rng::new(0)).unwrap();
        let bias = net.output().bias.as_slice();
        // ln(0.9 / (0.1 / 9)) = ln 81
        assert!((bias[0] - bias[1] - 81f64.ln()).abs() < 1e-12);
        assert!((81f64.ln() - 4.394).abs() < 1e-3);
    }

    #[test]
    fn eta_bounds() {
        let mut rng = Rng::new(0);
        assert!(AnnotatorNet::new(4, 2, 10, 8, 0.1, &mut rng).is_err());
        assert!(AnnotatorNet::new(4, 2, 2, 8, 0.5, &mut rng).is_err());
        assert!(AnnotatorNet::new(4, 2, 2, 8, 1.0, &mut rng).is_err());
        assert!(AnnotatorNet::new(4, 2, 2, 8, 0.51, &mut rng).is_ok());
    }

    #[test]
    fn mixed_annotator_encoding_is_valid() {
        let mut rng = Rng::new(9);
        let net = AnnotatorNet::new(6, 3, 4, 16, 0.9, &mut rng).unwrap();
        let emb = random_matrix(2, 6, &mut rng);
        let a = Matrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.25, 0.75]]).unwrap();
        let conf = net.forward(&emb, &a).unwrap();
        assert!(row_sums_close(&conf, 4, 1e-12));
        assert!(net.forward(&emb, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn combine_examples() {
        let conf = Matrix::row_vector(&[0.7, 0.3, 0.4, 0.6]);
        let out = combine(&Matrix::row_vector(&[1.0, 0.0]), &conf).unwrap();
        assert_eq!(out.row(0), &[0.7, 0.3]);

        let probs = Matrix::row_vector(&[0.6, 0.4]);
        let eye = Matrix::row_vector(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(combine(&probs, &eye).unwrap(), probs);

        let out = combine(&probs, &Matrix::row_vector(&[0.9, 0.1, 0.2, 0.8])).unwrap();
        assert!((out.get(0, 0) - 0.62).abs() < 1e-15);
        assert!((out.get(0, 1) - 0.38).abs() < 1e-15);
        assert!(combine(&probs, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn identity_pair_reduces_to_classifier() {
        let mut rng = Rng::new(5);
        let clf = ClassifierNet::new(&[2, 8, 3], &mut rng).unwrap();
        let pair = ModelPair {
            classifier: clf.clone(),
            annotator: None,
        };
        let x = random_matrix(20, 2, &mut rng);
        let a = Matrix::zeros(20, 1);
        assert_eq!(pair.predict_annotation(&x, &a).unwrap(), clf.predict_class(&x).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = Rng::new(77);
        let clf = ClassifierNet::new(&[3, 7, 5, 4], &mut rng).unwrap();
        let ann = AnnotatorNet::new(5, 6, 4, 9, 0.9, &mut rng).unwrap();
        let pair = ModelPair {
            classifier: clf,
            annotator: Some(ann),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        pair.save(&path).unwrap();
        let back = ModelPair::load(&path).unwrap();
        let bits = |p: &ModelPair| -> Vec<u64> {
            p.classifier
                .params()
                .into_iter()
                .chain(p.annotator.as_ref().unwrap().params())
                .flat_map(|m| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&pair), bits(&back));
        assert_eq!(pair, back);
    }
}
