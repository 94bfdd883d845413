//! The splitting network.
//!
//! Every splitting layer sees the raw covariates concatenated with the
//! previous layer's ReLU output; layer 1 sees the covariates alone. The
//! composite head only ever sees the activation patterns, so in hard mode
//! the output is constant on every activation region.
//!
//! Training uses a smooth relaxation of the pattern indicator,
//! `o = sigmoid(beta * z)`; evaluation and tree extraction use the hard
//! indicator `o = 1[z >= 0]`.

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tree::PruneMask;
use crate::{Error, Result};

/// Row-major affine map `y = W u + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let dist = Uniform::new(-bound, bound);
        Self {
            rows,
            cols,
            weights: (0..rows * cols).map(|_| rng.sample(dist)).collect(),
            bias: (0..rows).map(|_| rng.sample(dist)).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + self.bias[r])
            .collect()
    }

    /// Accumulates parameter gradients into `self` and returns dL/du.
    fn accumulate(&mut self, w: &Dense, u: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut du = vec![0.0; self.cols];
        for r in 0..self.rows {
            if dy[r] == 0.0 {
                continue;
            }
            self.bias[r] += dy[r];
            let g = &mut self.weights[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                g[c] += dy[r] * u[c];
                du[c] += dy[r] * w.weights[r * w.cols + c];
            }
        }
        du
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>, cols: usize) -> Result<Self> {
        if rows.len() != bias.len() || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Schema("weight matrix shape mismatch".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            weights: rows.concat(),
            bias,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp { hidden: usize },
}

/// Maps the concatenated activation patterns to the model output: one
/// log-risk (continuous time) or K logits (discrete time).
#[derive(Debug, Clone, PartialEq)]
pub enum CompositeHead {
    Linear(Dense),
    Mlp { hidden: Dense, output: Dense },
}

impl CompositeHead {
    pub fn kind(&self) -> HeadKind {
        match self {
            CompositeHead::Linear(_) => HeadKind::Linear,
            CompositeHead::Mlp { hidden, .. } => HeadKind::Mlp { hidden: hidden.rows },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CompositeHead::Linear(l) => l.cols,
            CompositeHead::Mlp { hidden, .. } => hidden.cols,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            CompositeHead::Linear(l) => l.rows,
            CompositeHead::Mlp { output, .. } => output.rows,
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            CompositeHead::Linear(l) => CompositeHead::Linear(Dense::zeros(l.rows, l.cols)),
            CompositeHead::Mlp { hidden, output } => CompositeHead::Mlp {
                hidden: Dense::zeros(hidden.rows, hidden.cols),
                output: Dense::zeros(output.rows, output.cols),
            },
        }
    }

    fn parts(&self) -> Vec<&Dense> {
        match self {
            CompositeHead::Linear(l) => vec![l],
            CompositeHead::Mlp { hidden, output } => vec![hidden, output],
        }
    }

    fn parts_mut(&mut self) -> Vec<&mut Dense> {
        match self {
            CompositeHead::Linear(l) => vec![l],
            CompositeHead::Mlp { hidden, output } => vec![hidden, output],
        }
    }

    /// Returns (output, hidden pre-activation for the MLP head).
    fn forward(&self, patterns: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        match self {
            CompositeHead::Linear(l) => (l.apply(patterns), None),
            CompositeHead::Mlp { hidden, output } => {
                let h = hidden.apply(patterns);
                let r: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
                (output.apply(&r), Some(h))
            }
        }
    }

    /// Accumulates head gradients into `grads` and returns dL/d(patterns).
    fn backward(&self, grads: &mut CompositeHead, patterns: &[f64], hidden_pre: Option<&[f64]>, d_out: &[f64]) -> Vec<f64> {
        match (self, grads) {
            (CompositeHead::Linear(w), CompositeHead::Linear(g)) => g.accumulate(w, patterns, d_out),
            (CompositeHead::Mlp { hidden, output }, CompositeHead::Mlp { hidden: gh, output: go }) => {
                let h = hidden_pre.expect("mlp head trace carries hidden pre-activations");
                let r: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
                let dr = go.accumulate(output, &r, d_out);
                let dh: Vec<f64> = dr.iter().zip(h).map(|(d, v)| if *v > 0.0 { *d } else { 0.0 }).collect();
                gh.accumulate(hidden, patterns, &dh)
            }
            _ => unreachable!("gradient buffer shaped like the head"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Activation {
    Soft { beta: f64 },
    Hard,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activations z per layer.
    pub pre: Vec<Vec<f64>>,
    /// ReLU outputs a per layer.
    pub post: Vec<Vec<f64>>,
    /// Hard indicators 1[z >= 0], before masking, flattened in layer order.
    pub bits: Vec<u8>,
    /// Coordinates left alive by the prune mask.
    pub keep: Vec<bool>,
    /// Pattern values fed to the head (masked), flattened in layer order.
    pub patterns: Vec<f64>,
    hidden_pre: Option<Vec<f64>>,
    pub output: Vec<f64>,
    pub activation: Activation,
}

impl ForwardTrace {
    /// Hard pattern row after masking.
    pub fn masked_bits(&self) -> Vec<u8> {
        self.bits
            .iter()
            .zip(&self.keep)
            .map(|(&b, &k)| if k { b } else { 0 })
            .collect()
    }
}

/// Same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub head: CompositeHead,
}

impl Gradients {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .chain(self.head.parts())
            .flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()])
            .collect()
    }

    /// All partials in [`ReluNetwork::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for d in self.layers.iter_mut().chain(self.head.parts_mut()) {
            d.weights.iter_mut().chain(d.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    d: usize,
    widths: Vec<usize>,
    pub layers: Vec<Dense>,
    pub head: CompositeHead,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ReluNetwork {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, biases from the same law.
    pub fn init(d: usize, widths: &[usize], head: HeadKind, outputs: usize, seed: u64) -> Result<Self> {
        if d == 0 || widths.is_empty() || widths.contains(&0) || outputs == 0 {
            return Err(Error::InvalidArgument(
                "network needs d >= 1, at least one layer, positive widths and outputs".into(),
            ));
        }
        if let HeadKind::Mlp { hidden: 0 } = head {
            return Err(Error::InvalidArgument("mlp head needs a positive hidden width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len());
        for (l, &m) in widths.iter().enumerate() {
            let fan_in = if l == 0 { d } else { d + widths[l - 1] };
            layers.push(Dense::uniform(m, fan_in, &mut rng));
        }
        let p: usize = widths.iter().sum();
        let head = match head {
            HeadKind::Linear => CompositeHead::Linear(Dense::uniform(outputs, p, &mut rng)),
            HeadKind::Mlp { hidden } => CompositeHead::Mlp {
                hidden: Dense::uniform(hidden, p, &mut rng),
                output: Dense::uniform(outputs, hidden, &mut rng),
            },
        };
        Ok(Self {
            d,
            widths: widths.to_vec(),
            layers,
            head,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Total number of pattern coordinates P.
    pub fn pattern_dim(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    /// Layer (0-based) owning each pattern coordinate.
    pub fn coordinate_layers(&self) -> Vec<usize> {
        self.widths
            .iter()
            .enumerate()
            .flat_map(|(l, &m)| std::iter::repeat(l).take(m))
            .collect()
    }

    pub fn forward(&self, x: &[f64], activation: Activation, mask: Option<&PruneMask>) -> Result<ForwardTrace> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if let Activation::Soft { beta } = activation {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
            }
        }
        let p = self.pattern_dim();
        let mut pre = Vec::with_capacity(self.depth());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        let mut bits = Vec::with_capacity(p);
        let mut input = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                input.truncate(self.d);
                input.extend_from_slice(&post[l - 1]);
            }
            let z = layer.apply(&input);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("pre-activation of layer {}", l + 1)));
            }
            bits.extend(z.iter().map(|&v| (v >= 0.0) as u8));
            post.push(z.iter().map(|v| v.max(0.0)).collect());
            pre.push(z);
        }
        let keep = match mask {
            Some(m) => m.keep(&bits),
            None => vec![true; p],
        };
        let flat_pre = pre.iter().flatten();
        let patterns: Vec<f64> = match activation {
            Activation::Hard => bits.iter().zip(&keep).map(|(&b, &k)| if k { b as f64 } else { 0.0 }).collect(),
            Activation::Soft { beta } => flat_pre.zip(&keep).map(|(&z, &k)| if k { sigmoid(beta * z) } else { 0.0 }).collect(),
        };
        let (output, hidden_pre) = self.head.forward(&patterns);
        if output.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head output".into()));
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre,
            post,
            bits,
            keep,
            patterns,
            hidden_pre,
            output,
            activation,
        })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect(),
            head: self.head.zeros_like(),
        }
    }

    /// Reverse-mode gradients summed over a batch of soft-mode traces.
    ///
    /// `d_outputs[n]` is dL/d(head output) for trace n. The pattern path
    /// contributes `beta * s * (1 - s)`; the ReLU path feeding the next layer
    /// uses subgradient 0 at z = 0.
    pub fn backward(&self, traces: &[ForwardTrace], d_outputs: &[Vec<f64>]) -> Result<Gradients> {
        self.backward_impl(traces, d_outputs, None)
    }

    /// Straight-through variant: traces may come from the hard forward pass
    /// and the indicator's derivative is replaced by the sigmoid surrogate
    /// at `beta`.
    pub fn backward_straight_through(&self, traces: &[ForwardTrace], d_outputs: &[Vec<f64>], beta: f64) -> Result<Gradients> {
        self.backward_impl(traces, d_outputs, Some(beta))
    }

    fn backward_impl(&self, traces: &[ForwardTrace], d_outputs: &[Vec<f64>], surrogate: Option<f64>) -> Result<Gradients> {
        if traces.len() != d_outputs.len() {
            return Err(Error::DimensionMismatch {
                expected: traces.len(),
                got: d_outputs.len(),
            });
        }
        let mut grads = self.zero_gradients();
        let offsets: Vec<usize> = self
            .widths
            .iter()
            .scan(0, |acc, &m| {
                let o = *acc;
                *acc += m;
                Some(o)
            })
            .collect();
        let mut input = Vec::with_capacity(self.d + self.widths.iter().max().copied().unwrap_or(0));
        for (tr, d_out) in traces.iter().zip(d_outputs) {
            let beta = match (tr.activation, surrogate) {
                (Activation::Soft { beta }, None) => beta,
                (_, Some(beta)) => beta,
                (Activation::Hard, None) => {
                    return Err(Error::InvalidArgument(
                        "backward needs soft-mode traces (hard patterns have zero derivative)".into(),
                    ))
                }
            };
            if d_out.len() != self.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.output_dim(),
                    got: d_out.len(),
                });
            }
            if d_out.iter().all(|&g| g == 0.0) {
                continue;
            }
            let d_pat = self.head.backward(&mut grads.head, &tr.patterns, tr.hidden_pre.as_deref(), d_out);
            let mut d_post_next: Vec<f64> = Vec::new();
            for l in (0..self.depth()).rev() {
                let z = &tr.pre[l];
                let dz: Vec<f64> = (0..self.widths[l])
                    .map(|k| {
                        let c = offsets[l] + k;
                        let mut g = 0.0;
                        if tr.keep[c] {
                            let s = sigmoid(beta * z[k]);
                            g += d_pat[c] * beta * s * (1.0 - s);
                        }
                        if l + 1 < self.depth() && z[k] > 0.0 {
                            g += d_post_next[k];
                        }
                        g
                    })
                    .collect();
                input.clear();
                input.extend_from_slice(&tr.input);
                if l > 0 {
                    input.extend_from_slice(&tr.post[l - 1]);
                }
                let du = grads.layers[l].accumulate(&self.layers[l], &input, &dz);
                d_post_next = du[self.d..].to_vec();
            }
        }
        Ok(grads)
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .chain(self.head.parts_mut())
            .flat_map(|d| [&mut d.weights, &mut d.bias])
            .collect()
    }

    /// All parameters flattened: per splitting layer (weights, bias), then head.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .chain(self.head.parts())
            .flat_map(|d| d.weights.iter().chain(&d.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.tensors_mut().iter().map(|t| t.len()).sum();
        if values.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: values.len(),
            });
        }
        let mut k = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[k..k + n]);
            k += n;
        }
        Ok(())
    }

    /// Soft-thresholds every splitting-layer weight; biases and head untouched.
    pub fn soft_threshold(&mut self, lambda: f64) {
        if lambda <= 0.0 {
            return;
        }
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w = w.signum() * (w.abs() - lambda).max(0.0);
            }
        }
    }

    /// Fraction of exactly-zero splitting-layer weights.
    pub fn sparsity(&self) -> f64 {
        let (zeros, total) = self.layers.iter().fold((0usize, 0usize), |(z, t), l| {
            (z + l.weights.iter().filter(|w| **w == 0.0).count(), t + l.weights.len())
        });
        zeros as f64 / total as f64
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|v| v.is_finite())
    }
}

/// Classical momentum SGD: `v <- momentum * v + g; theta <- theta - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Vec<Vec<f64>>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "need lr > 0 and momentum in [0, 1), got lr={lr} momentum={momentum}"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: None,
        })
    }

    pub fn step(&mut self, net: &mut ReluNetwork, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients".into()));
        }
        let g = grads.tensors();
        let params = net.tensors_mut();
        if g.len() != params.len() || g.iter().zip(&params).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Schema("gradient shapes do not match the network".into()));
        }
        let velocity = self
            .velocity
            .get_or_insert_with(|| g.iter().map(|t| vec![0.0; t.len()]).collect());
        for ((theta, v), g) in params.into_iter().zip(velocity.iter_mut()).zip(g) {
            for i in 0..theta.len() {
                v[i] = self.momentum * v[i] + g[i];
                theta[i] -= self.lr * v[i];
            }
        }
        Ok(())
    }
}

/// Serialized form: `{d, L, widths, head: {kind, dims, params}, W, b}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkRecord {
    pub d: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub widths: Vec<usize>,
    pub head: HeadRecord,
    #[serde(rename = "W")]
    pub weights: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HeadRecord {
    pub kind: String,
    /// Layer sizes from input to output, e.g. `[P, K]` or `[P, H, K]`.
    pub dims: Vec<usize>,
    /// Per dense block: weight rows followed by the bias as the last row.
    pub params: Vec<Vec<Vec<f64>>>,
}

impl From<&ReluNetwork> for NetworkRecord {
    fn from(net: &ReluNetwork) -> Self {
        let parts = net.head.parts();
        let mut dims = vec![net.pattern_dim()];
        dims.extend(parts.iter().map(|d| d.rows));
        NetworkRecord {
            d: net.d,
            depth: net.depth(),
            widths: net.widths.clone(),
            head: HeadRecord {
                kind: match net.head.kind() {
                    HeadKind::Linear => "linear".into(),
                    HeadKind::Mlp { .. } => "mlp".into(),
                },
                dims,
                params: parts
                    .iter()
                    .map(|d| {
                        let mut rows = d.to_rows();
                        rows.push(d.bias.clone());
                        rows
                    })
                    .collect(),
            },
            weights: net.layers.iter().map(Dense::to_rows).collect(),
            b: net.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

impl TryFrom<NetworkRecord> for ReluNetwork {
    type Error = Error;

    fn try_from(r: NetworkRecord) -> Result<Self> {
        if r.widths.len() != r.depth || r.weights.len() != r.depth || r.b.len() != r.depth {
            return Err(Error::Schema("layer count disagrees with L".into()));
        }
        let mut layers = Vec::with_capacity(r.depth);
        for l in 0..r.depth {
            let cols = if l == 0 { r.d } else { r.d + r.widths[l - 1] };
            let dense = Dense::from_rows(&r.weights[l], r.b[l].clone(), cols)?;
            if dense.rows != r.widths[l] {
                return Err(Error::Schema(format!("layer {} has the wrong width", l + 1)));
            }
            layers.push(dense);
        }
        let block = |k: usize, cols: usize| -> Result<Dense> {
            let rows = r
                .head
                .params
                .get(k)
                .ok_or_else(|| Error::Schema("missing head parameters".into()))?;
            let (bias, w) = rows.split_last().ok_or_else(|| Error::Schema("empty head block".into()))?;
            Dense::from_rows(w, bias.clone(), cols)
        };
        let p: usize = r.widths.iter().sum();
        let head = match r.head.kind.as_str() {
            "linear" => CompositeHead::Linear(block(0, p)?),
            "mlp" => {
                let hidden = block(0, p)?;
                let output = block(1, hidden.rows)?;
                CompositeHead::Mlp { hidden, output }
            }
            other => return Err(Error::Schema(format!("unknown head kind `{other}`"))),
        };
        if head.input_dim() != p {
            return Err(Error::Schema("head input does not match pattern count".into()));
        }
        Ok(ReluNetwork {
            d: r.d,
            widths: r.widths,
            layers,
            head,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_split() -> ReluNetwork {
        let mut net = ReluNetwork::init(2, &[1], HeadKind::Linear, 1, 0).unwrap();
        net.layers[0].weights = vec![1.0, 2.0];
        net.layers[0].bias = vec![0.0];
        net
    }

    #[test]
    fn init_shapes() {
        let net = ReluNetwork::init(10, &[1; 6], HeadKind::Linear, 1, 3).unwrap();
        assert_eq!((net.layers[0].rows, net.layers[0].cols), (1, 10));
        for l in &net.layers[1..] {
            assert_eq!((l.rows, l.cols), (1, 11));
        }
        assert_eq!(net.head.input_dim(), 6);
        let bound = 1.0 / 10f64.sqrt();
        assert!(net.layers[0].bias[0].abs() <= bound && net.layers[0].bias[0] != 0.0);
        let again = ReluNetwork::init(10, &[1; 6], HeadKind::Linear, 1, 3).unwrap();
        assert_eq!(net, again);
        assert_eq!(net.sparsity(), 0.0);
    }

    #[test]
    fn init_rejects_empty() {
        assert!(ReluNetwork::init(10, &[], HeadKind::Linear, 1, 0).is_err());
        assert!(ReluNetwork::init(10, &[1, 0], HeadKind::Linear, 1, 0).is_err());
        assert!(ReluNetwork::init(0, &[1], HeadKind::Linear, 1, 0).is_err());
    }

    #[test]
    fn hard_pattern_of_linear_hyperplane() {
        let net = single_split();
        let t = net.forward(&[0.3, 0.1], Activation::Hard, None).unwrap();
        assert!((t.pre[0][0] - 0.5).abs() < 1e-15);
        assert_eq!(t.patterns, vec![1.0]);
        let t = net.forward(&[-0.3, 0.1], Activation::Hard, None).unwrap();
        assert!((t.pre[0][0] + 0.1).abs() < 1e-15);
        assert_eq!(t.patterns, vec![0.0]);
    }

    #[test]
    fn soft_pattern_at_zero_is_half() {
        let net = single_split();
        let t = net.forward(&[0.0, 0.0], Activation::Soft { beta: 1.0 }, None).unwrap();
        assert_eq!(t.patterns, vec![0.5]);
        // hard indicator takes the z >= 0 branch
        let t = net.forward(&[0.0, 0.0], Activation::Hard, None).unwrap();
        assert_eq!(t.patterns, vec![1.0]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = single_split();
        assert!(matches!(
            net.forward(&[1.0], Activation::Hard, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(net.forward(&[1.0, 0.0], Activation::Soft { beta: 0.0 }, None).is_err());
        match net.forward(&[f64::NAN, 0.0], Activation::Hard, None) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("layer 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backward_rejects_hard_traces() {
        let net = single_split();
        let t = net.forward(&[0.3, 0.1], Activation::Hard, None).unwrap();
        assert!(net.backward(&[t.clone()], &[vec![1.0]]).is_err());
        assert!(net.backward_straight_through(&[t], &[vec![1.0]], 2.0).is_ok());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = ReluNetwork::init(4, &[1, 1, 1], HeadKind::Linear, 1, 5).unwrap();
        let t = net.forward(&[0.1, -0.2, 0.3, 0.4], Activation::Soft { beta: 2.0 }, None).unwrap();
        let g = net.backward(&[t], &[vec![0.0]]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dead_path_gets_zero_gradient() {
        // head weight 0 on the last coordinate and nothing downstream: its layer is inert
        let mut net = ReluNetwork::init(3, &[1, 1], HeadKind::Linear, 1, 1).unwrap();
        if let CompositeHead::Linear(h) = &mut net.head {
            h.weights[1] = 0.0;
        }
        let t = net.forward(&[0.5, -0.5, 0.2], Activation::Soft { beta: 1.0 }, None).unwrap();
        let g = net.backward(&[t], &[vec![1.0]]).unwrap();
        assert!(g.layers[1].weights.iter().all(|v| *v == 0.0));
        assert_eq!(g.layers[1].bias, vec![0.0]);
    }

    #[test]
    fn sgd_plain_and_momentum() {
        let mut net = single_split();
        net.set_parameters(&vec![1.0; net.parameters().len()]).unwrap();
        let mut g = net.zero_gradients();
        g.layers[0].weights[0] = 2.0;
        let mut opt = Sgd::new(0.1, 0.0).unwrap();
        opt.step(&mut net, &g).unwrap();
        assert!((net.layers[0].weights[0] - 0.8).abs() < 1e-15);
        assert_eq!(net.layers[0].weights[1], 1.0);

        let mut net = single_split();
        let before = net.parameters();
        let mut opt = Sgd::new(0.1, 0.9).unwrap();
        let zero = net.zero_gradients();
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net.parameters(), before);

        let mut g = net.zero_gradients();
        g.layers[0].weights[0] = 1.0;
        opt.step(&mut net, &g).unwrap();
        opt.step(&mut net, &g).unwrap();
        assert!((before[0] - net.layers[0].weights[0] - 0.1 * 2.9).abs() < 1e-12);
    }

    #[test]
    fn sgd_rejects_non_finite() {
        let mut net = single_split();
        let mut g = net.zero_gradients();
        g.layers[0].bias[0] = f64::NAN;
        assert!(Sgd::new(0.1, 0.0).unwrap().step(&mut net, &g).is_err());
        assert!(Sgd::new(0.0, 0.0).is_err());
        assert!(Sgd::new(0.1, 1.0).is_err());
    }

    #[test]
    fn soft_threshold_definition() {
        let mut net = single_split();
        net.layers[0].weights = vec![0.5, -0.1];
        let head_before = net.head.clone();
        net.soft_threshold(0.2);
        assert!((net.layers[0].weights[0] - 0.3).abs() < 1e-15);
        assert_eq!(net.layers[0].weights[1], 0.0);
        assert_eq!(net.head, head_before);
        let before = net.clone();
        net.soft_threshold(0.0);
        assert_eq!(net, before);
        net.soft_threshold(1.0);
        assert_eq!(net.sparsity(), 1.0);
    }

    #[test]
    fn record_round_trip() {
        for head in [HeadKind::Linear, HeadKind::Mlp { hidden: 3 }] {
            let net = ReluNetwork::init(4, &[2, 1, 3], head, 5, 9).unwrap();
            let json = serde_json::to_string(&NetworkRecord::from(&net)).unwrap();
            let back: NetworkRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(ReluNetwork::try_from(back).unwrap(), net);
        }
    }
}
