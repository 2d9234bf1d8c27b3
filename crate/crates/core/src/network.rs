//! Dense ReLU classifier with a softmax head, trained by hand-written
//! backpropagation.
//!
//! Everything works on batches: a batch is an `m × features` matrix with one
//! sample per row. Losses are summed over the batch, so gradients of a
//! duplicated sample double.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EmphError, Result};

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_out × fan_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetSnapshot", into = "NetSnapshot")]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l]` the output of hidden layer `l`.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of every layer, the last being the logits.
    pre_activations: Vec<Array2<f64>>,
    /// Softmax of the logits, one row per sample.
    pub probabilities: Array2<f64>,
}

impl ForwardCache {
    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// `∂L/∂x` per sample, `m × fan_in`.
    pub input: Array2<f64>,
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases from a seeded stream.
    pub fn new(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(input, hidden, classes, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..limit))
        })
    }

    /// Every parameter zero.
    pub fn zeros(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        Self::build(input, hidden, classes, |fan_in, fan_out| Array2::zeros((fan_out, fan_in)))
    }

    fn build(
        input: usize,
        hidden: &[usize],
        classes: usize,
        mut weights: impl FnMut(usize, usize) -> Array2<f64>,
    ) -> Result<Self> {
        if input == 0 || classes < 2 || hidden.contains(&0) {
            return Err(EmphError::input(format!(
                "invalid network shape: input {input}, hidden {hidden:?}, {classes} classes"
            )));
        }
        let widths: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                weights: weights(w[0], w[1]),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(EmphError::input("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(EmphError::input(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.bias.len(),
                    l.fan_out()
                )));
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(EmphError::input(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    l.fan_in(),
                    i - 1,
                    layers[i - 1].fan_out()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_width() {
            return Err(EmphError::input(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = vec![x.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = activations[l].dot(&layer.weights.t()) + &layer.bias;
            if l < last {
                activations.push(z.mapv(|v| v.max(0.0)));
            }
            pre_activations.push(z);
        }
        let probabilities = softmax_rows(&pre_activations[last]);
        Ok(ForwardCache {
            activations,
            pre_activations,
            probabilities,
        })
    }

    /// Class probabilities of a single sample.
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| EmphError::internal(e.to_string()))?;
        Ok(self.forward(view)?.probabilities.row(0).to_vec())
    }

    /// Gradients of the summed cross-entropy of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        let m = cache.probabilities.nrows();
        let shapes_ok = cache.pre_activations.len() == self.layers.len()
            && cache.activations.len() == self.layers.len()
            && cache
                .pre_activations
                .iter()
                .zip(&self.layers)
                .all(|(z, l)| z.ncols() == l.fan_out() && z.nrows() == m);
        if !shapes_ok {
            return Err(EmphError::internal("forward cache does not match the network"));
        }
        if labels.len() != m {
            return Err(EmphError::input(format!("{} labels for {m} samples", labels.len())));
        }
        let classes = self.classes();
        let mut delta = cache.probabilities.clone();
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(EmphError::input(format!("label {y} out of range for {classes} classes")));
            }
            delta[[i, y]] -= 1.0;
        }
        let depth = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![Array1::zeros(0); depth];
        for l in (0..depth).rev() {
            weights[l] = delta.t().dot(&cache.activations[l]);
            biases[l] = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&self.layers[l].weights);
            if l > 0 {
                back.zip_mut_with(&cache.pre_activations[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = back;
        }
        Ok(Gradients {
            weights,
            biases,
            input: delta,
        })
    }

    /// `θ ← θ − lr·∇θ`.
    pub fn step(&mut self, grads: &Gradients, lr: f64) {
        for ((layer, gw), gb) in self.layers.iter_mut().zip(&grads.weights).zip(&grads.biases) {
            layer.weights.scaled_add(-lr, gw);
            layer.bias.scaled_add(-lr, gb);
        }
    }
}

/// Moment estimates for Adam updates of a [`DenseNet`].
///
/// Adam rescales each coordinate by its running RMS, so the update does
/// not depend on whether the loss is summed or averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    /// Standard constants `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(net: &DenseNet) -> Self {
        let zeros: Vec<_> = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            p - lr * (*m / c1) / ((*v / c2).sqrt() + eps)
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            ndarray::Zip::from(&mut layer.weights)
                .and(mw)
                .and(vw)
                .and(&grads.weights[k])
                .for_each(|p, m, v, &g| *p = update(*p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(&grads.biases[k])
                .for_each(|p, m, v, &g| *p = update(*p, m, v, g));
        }
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// `−log p_label`, with `p` floored at [`PROB_FLOOR`].
pub fn loss(probabilities: &[f64], label: usize) -> Result<f64> {
    let p = probabilities.get(label).ok_or_else(|| {
        EmphError::input(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Summed cross-entropy over a batch.
pub fn batch_loss(probabilities: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.len() != probabilities.nrows() {
        return Err(EmphError::input(format!(
            "{} labels for {} samples",
            labels.len(),
            probabilities.nrows()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in probabilities.rows().into_iter().zip(labels) {
        total += loss(&row.to_vec(), y)?;
    }
    Ok(total)
}

/// Index of the largest probability, first on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Serialized layout: row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub layers: Vec<LayerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<DenseNet> for NetSnapshot {
    fn from(net: DenseNet) -> Self {
        let layers = net
            .layers
            .into_iter()
            .map(|l| LayerSnapshot {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        Self { layers }
    }
}

impl TryFrom<NetSnapshot> for DenseNet {
    type Error = EmphError;

    fn try_from(snap: NetSnapshot) -> Result<Self> {
        let layers = snap
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.fan_out, l.fan_in), l.weights)
                    .map_err(|_| EmphError::input(format!("layer {i}: weight count does not match its shape")))?;
                Ok(Dense {
                    weights,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    fn randomize_biases(net: &mut DenseNet, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in net.layers_mut() {
            l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr_and_reduces_loss() {
        let mut net = DenseNet::new(4, &[6], 3, 11).unwrap();
        let x = random_batch(8, 4, 5);
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let before = net.clone();
        let cache = net.forward(x.view()).unwrap();
        let start = batch_loss(&cache.probabilities, &labels).unwrap();
        let grads = net.backward(&cache, &labels).unwrap();
        let mut adam = Adam::new(&net);
        adam.step(&mut net, &grads, 1e-3);
        for (k, layer) in net.layers().iter().enumerate() {
            for ((p, q), g) in layer.weights.iter().zip(&before.layers()[k].weights).zip(&grads.weights[k]) {
                if g.abs() > 1e-6 {
                    assert!(((p - q).abs() - 1e-3).abs() < 1e-6);
                    assert!((p - q) * g < 0.0);
                }
            }
        }
        for _ in 0..200 {
            let cache = net.forward(x.view()).unwrap();
            let grads = net.backward(&cache, &labels).unwrap();
            adam.step(&mut net, &grads, 1e-2);
        }
        let cache = net.forward(x.view()).unwrap();
        assert!(batch_loss(&cache.probabilities, &labels).unwrap() < 0.5 * start);
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = DenseNet::zeros(4, &[5], 3).unwrap();
        let p = net.predict_one(&[0.3, -1.0, 2.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_diagonal_follows_argmax() {
        let net = DenseNet::from_layers(vec![Dense {
            weights: Array2::eye(3) * 50.0,
            bias: Array1::zeros(3),
        }])
        .unwrap();
        for x in [[0.1, 0.5, 0.2], [0.9, 0.5, 0.2], [0.0, 0.1, 0.3]] {
            let p = net.predict_one(&x).unwrap();
            assert_eq!(argmax(&p), argmax(&x));
        }
    }

    #[test]
    fn loss_examples() {
        assert!(loss(&[1.0, 0.0, 0.0], 0).unwrap() <= 1e-12);
        assert!((loss(&[1.0 / 3.0; 3], 2).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!((loss(&[0.5, 0.5], 1).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((loss(&[1.0, 0.0], 1).unwrap() - 1e12f64.ln()).abs() < 1e-9);
        assert!(matches!(loss(&[0.5, 0.5], 2), Err(EmphError::Input(_))));
    }

    #[test]
    fn probabilities_sum_to_one_and_are_shift_invariant() {
        for seed in 0..20 {
            let net = DenseNet::new(6, &[8, 4], 3, seed).unwrap();
            let x = random_batch(5, 6, seed + 100);
            let cache = net.forward(x.view()).unwrap();
            for row in cache.probabilities.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
        let logits = array![[0.3, -1.2, 2.0]];
        let a = softmax_rows(&logits);
        let b = softmax_rows(&(logits + 7.5));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let a = DenseNet::new(10, &[5], 2, 42).unwrap();
        let b = DenseNet::new(10, &[5], 2, 42).unwrap();
        let c = DenseNet::new(10, &[5], 2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 15.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_input_zero_net_has_zero_first_layer_gradient() {
        let net = DenseNet::zeros(4, &[3], 2).unwrap();
        let x = Array2::zeros((2, 4));
        let cache = net.forward(x.view()).unwrap();
        let g = net.backward(&cache, &[0, 1]).unwrap();
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_doubles_gradients() {
        let net = DenseNet::new(3, &[4], 2, 1).unwrap();
        let x = random_batch(1, 3, 9);
        let mut xx = Array2::zeros((2, 3));
        xx.row_mut(0).assign(&x.row(0));
        xx.row_mut(1).assign(&x.row(0));
        let g1 = net.backward(&net.forward(x.view()).unwrap(), &[1]).unwrap();
        let g2 = net.backward(&net.forward(xx.view()).unwrap(), &[1, 1]).unwrap();
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let h = 1e-6;
        for seed in 0..10 {
            let mut net = DenseNet::new(5, &[6, 4], 3, seed).unwrap();
            randomize_biases(&mut net, seed + 7);
            let x = random_batch(4, 5, seed + 50);
            let labels = [0, 2, 1, 2];
            let objective = |n: &DenseNet, x: &Array2<f64>| {
                batch_loss(&n.forward(x.view()).unwrap().probabilities, &labels).unwrap()
            };
            let g = net.backward(&net.forward(x.view()).unwrap(), &labels).unwrap();
            for l in 0..net.layers().len() {
                let shape = net.layers()[l].weights.dim();
                for i in 0..shape.0 {
                    for j in 0..shape.1 {
                        let mut p = net.clone();
                        let mut m = net.clone();
                        p.layers_mut()[l].weights[[i, j]] += h;
                        m.layers_mut()[l].weights[[i, j]] -= h;
                        let fd = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
                        let a = g.weights[l][[i, j]];
                        assert!((fd - a).abs() <= 1e-5 * a.abs().max(1e-2), "W{l}[{i},{j}] {fd} {a}");
                    }
                    let mut p = net.clone();
                    let mut m = net.clone();
                    p.layers_mut()[l].bias[i] += h;
                    m.layers_mut()[l].bias[i] -= h;
                    let fd = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
                    let a = g.biases[l][i];
                    assert!((fd - a).abs() <= 1e-5 * a.abs().max(1e-2), "b{l}[{i}] {fd} {a}");
                }
            }
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    let mut p = x.clone();
                    let mut m = x.clone();
                    p[[i, j]] += h;
                    m[[i, j]] -= h;
                    let fd = (objective(&net, &p) - objective(&net, &m)) / (2.0 * h);
                    let a = g.input[[i, j]];
                    assert!((fd - a).abs() <= 1e-5 * a.abs().max(1e-2), "x[{i},{j}] {fd} {a}");
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let net = DenseNet::new(3, &[4], 2, 0).unwrap();
        assert!(matches!(net.predict_one(&[1.0, 2.0]), Err(EmphError::Input(_))));
        let other = DenseNet::new(3, &[5], 2, 0).unwrap();
        let cache = other.forward(random_batch(1, 3, 0).view()).unwrap();
        assert!(matches!(net.backward(&cache, &[0]), Err(EmphError::Internal(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let net = DenseNet::new(4, &[3], 2, 5).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        let bad = r#"{"layers":[{"fan_in":2,"fan_out":2,"weights":[1.0],"bias":[0.0,0.0]}]}"#;
        assert!(serde_json::from_str::<DenseNet>(bad).is_err());
    }
}
