//! Semi-supervised node classifier built from resolvent convolution layers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Propagator, TopoLaplacian};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mu: f64,
    pub sigma: f64,
    pub rho: u32,
    /// Series coefficient; the resolvent is truncated at `ceil(r * mu)`.
    pub r: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Number of independently initialized conv stacks whose logits are
    /// averaged.
    pub parallel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mu: 0.5,
            sigma: 0.5,
            rho: 1,
            r: 6.0,
            hidden: vec![16],
            activation: Activation::Relu,
            dropout: 0.5,
            l2: 5e-4,
            lr: 0.01,
            epochs: 200,
            seed: 0,
            parallel: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("mu must lie in (0, 1] (got {})", self.mu));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return bad(format!("sigma must lie in [0, 1] (got {})", self.sigma));
        }
        if self.rho < 1 {
            return bad("rho must be >= 1".into());
        }
        if !(2.0..=50.0).contains(&self.r) {
            return bad(format!("R must lie in [2, 50] (got {})", self.r));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1) (got {})", self.dropout));
        }
        if !(self.l2 >= 0.0) || !(self.lr > 0.0) {
            return bad("l2 must be >= 0 and lr > 0".into());
        }
        if self.parallel == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer widths and parallel count must be positive".into());
        }
        Ok(())
    }
}

/// Inputs for training: features, labels and the node splits.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub features: &'a DMatrix<f64>,
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub test: &'a [usize],
}

/// Weight matrices of every stack, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub stacks: Vec<Vec<DMatrix<f64>>>,
    pub activation: Activation,
}

struct Cache {
    // per stack, per layer: dropped input, pre-activation output, dropout mask
    inputs: Vec<Vec<DMatrix<f64>>>,
    pre: Vec<Vec<DMatrix<f64>>>,
    masks: Vec<Vec<Option<DMatrix<f64>>>>,
}

impl Model {
    /// Glorot-uniform initialization from `seed`.
    pub fn init(n_features: usize, n_classes: usize, cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dims = vec![n_features];
        dims.extend(&cfg.hidden);
        dims.push(n_classes);
        let stacks = (0..cfg.parallel)
            .map(|_| {
                dims.windows(2)
                    .map(|w| {
                        let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                        DMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..=limit))
                    })
                    .collect()
            })
            .collect();
        Model {
            stacks,
            activation: cfg.activation,
        }
    }

    pub fn n_params(&self) -> usize {
        self.stacks.iter().flatten().map(|m| m.len()).sum()
    }

    fn forward_cached(
        &self,
        prop: &Propagator,
        x: &DMatrix<f64>,
        dropout: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(DMatrix<f64>, Cache)> {
        let mut rng = rng;
        let mut cache = Cache {
            inputs: Vec::new(),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let n_stacks = self.stacks.len() as f64;
        let mut logits: Option<DMatrix<f64>> = None;
        for stack in &self.stacks {
            let (mut inputs, mut pres, mut masks) = (Vec::new(), Vec::new(), Vec::new());
            let mut h = x.clone();
            for (li, theta) in stack.iter().enumerate() {
                let mask = match rng.as_deref_mut() {
                    Some(r) if dropout > 0.0 => {
                        let keep = 1.0 / (1.0 - dropout);
                        let m = DMatrix::from_fn(h.nrows(), h.ncols(), |_, _| {
                            if r.random::<f64>() < dropout {
                                0.0
                            } else {
                                keep
                            }
                        });
                        h.component_mul_assign(&m);
                        Some(m)
                    }
                    _ => None,
                };
                let pre = prop.apply(&(&h * theta))?;
                inputs.push(h);
                let last = li + 1 == stack.len();
                h = if last {
                    pre.clone()
                } else {
                    pre.map(|v| self.activation.apply(v))
                };
                pres.push(pre);
                masks.push(mask);
            }
            logits = Some(match logits {
                None => h / n_stacks,
                Some(acc) => acc + h / n_stacks,
            });
            cache.inputs.push(inputs);
            cache.pre.push(pres);
            cache.masks.push(masks);
        }
        Ok((logits.expect("at least one stack"), cache))
    }

    /// Logits without dropout.
    pub fn forward(&self, prop: &Propagator, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(prop, x, 0.0, None)?.0)
    }

    /// Cross-entropy over `nodes` plus `l2 / 2 * sum ||Theta||^2`, and its
    /// gradient with respect to every weight matrix. Dropout is applied when
    /// `rng` is given.
    pub fn loss_and_gradients(
        &self,
        prop: &Propagator,
        x: &DMatrix<f64>,
        labels: &[usize],
        nodes: &[usize],
        l2: f64,
        dropout: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Vec<DMatrix<f64>>>)> {
        if nodes.is_empty() {
            return Err(Error::NoTrainingNodes);
        }
        let (logits, cache) = self.forward_cached(prop, x, dropout, rng)?;
        let (ce, dlogits) = cross_entropy(&logits, labels, nodes);
        let mut loss = ce;
        let n_stacks = self.stacks.len() as f64;
        let mut grads = Vec::with_capacity(self.stacks.len());
        for (s, stack) in self.stacks.iter().enumerate() {
            let mut layer_grads = vec![DMatrix::zeros(0, 0); stack.len()];
            let mut upstream = &dlogits / n_stacks;
            for li in (0..stack.len()).rev() {
                let theta = &stack[li];
                loss += 0.5 * l2 * theta.norm_squared();
                let last = li + 1 == stack.len();
                let dpre = if last {
                    upstream
                } else {
                    let pre = &cache.pre[s][li];
                    match self.activation {
                        Activation::Identity => upstream,
                        Activation::Relu => upstream.zip_map(pre, |g, p| if p > 0.0 { g } else { 0.0 }),
                    }
                };
                let dz = prop.apply_transpose(&dpre)?;
                let input = &cache.inputs[s][li];
                layer_grads[li] = input.transpose() * &dz + theta * l2;
                if li == 0 {
                    break;
                }
                let mut dh = dz * theta.transpose();
                if let Some(mask) = &cache.masks[s][li] {
                    dh.component_mul_assign(mask);
                }
                upstream = dh;
            }
            grads.push(layer_grads);
        }
        Ok((loss, grads))
    }
}

/// Mean softmax cross-entropy over `nodes` and its gradient w.r.t. logits.
fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize], nodes: &[usize]) -> (f64, DMatrix<f64>) {
    let mut grad = DMatrix::zeros(logits.nrows(), logits.ncols());
    let scale = 1.0 / nodes.len() as f64;
    let mut loss = 0.0;
    for &u in nodes {
        let row = logits.row(u);
        let max = row.max();
        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        loss -= (exps[labels[u]] / total).ln() * scale;
        for (c, e) in exps.iter().enumerate() {
            let target = if c == labels[u] { 1.0 } else { 0.0 };
            grad[(u, c)] = (e / total - target) * scale;
        }
    }
    (loss, grad)
}

/// Fraction of `nodes` whose arg-max logit equals the label (lowest index
/// wins ties). Zero for an empty node set.
pub fn accuracy(logits: &DMatrix<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .filter(|&&u| {
            let row = logits.row(u);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best == labels[u]
        })
        .count();
    correct as f64 / nodes.len() as f64
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<DMatrix<f64>>>,
    v: Vec<Vec<DMatrix<f64>>>,
}

impl Adam {
    fn new(model: &Model, lr: f64) -> Self {
        let zeros: Vec<Vec<DMatrix<f64>>> = model
            .stacks
            .iter()
            .map(|s| s.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect())
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &[Vec<DMatrix<f64>>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (s, stack) in model.stacks.iter_mut().enumerate() {
            for (l, theta) in stack.iter_mut().enumerate() {
                let g = &grads[s][l];
                let m = &mut self.m[s][l];
                let v = &mut self.v[s][l];
                for i in 0..theta.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    theta[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                }
            }
        }
    }
}

/// Accuracies of the selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
}

/// Trains with Adam on the training nodes and keeps the weights with the
/// best validation accuracy (ties broken by lower validation loss, then by
/// the earlier epoch). Without validation nodes the final weights are kept.
pub fn train(
    l: &TopoLaplacian,
    data: TrainingData<'_>,
    cfg: &ModelConfig,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::NoTrainingNodes);
    }
    if data.features.nrows() != l.matrix.nrows() || data.labels.len() != l.matrix.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "features ({} rows) and labels ({}) must match the {}-node Laplacian",
            data.features.nrows(),
            data.labels.len(),
            l.matrix.nrows()
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&c| c >= data.n_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {} classes",
            data.n_classes
        )));
    }
    let prop = Propagator::new(l, cfg.mu, cfg.r)?;
    let mut model = Model::init(data.features.ncols(), data.n_classes, cfg);
    // dropout draws come from a stream separate from the initialization
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(&model, cfg.lr);

    let score = |model: &Model| -> Result<(f64, f64)> {
        let logits = model.forward(&prop, data.features)?;
        let acc = accuracy(&logits, data.labels, data.val);
        let loss = if data.val.is_empty() {
            0.0
        } else {
            cross_entropy(&logits, data.labels, data.val).0
        };
        Ok((acc, loss))
    };
    let mut best = (model.clone(), score(&model)?, 0);
    for epoch in 1..=cfg.epochs {
        let (_, grads) = model.loss_and_gradients(
            &prop,
            data.features,
            data.labels,
            data.train,
            cfg.l2,
            cfg.dropout,
            Some(&mut rng),
        )?;
        adam.step(&mut model, &grads);
        if data.val.is_empty() {
            best = (model.clone(), (0.0, 0.0), epoch);
            continue;
        }
        let (acc, loss) = score(&model)?;
        let (best_acc, best_loss) = best.1;
        if acc > best_acc || (acc == best_acc && loss < best_loss) {
            best = (model.clone(), (acc, loss), epoch);
        }
    }
    let (model, _, best_epoch) = best;
    let logits = model.forward(&prop, data.features)?;
    let report = TrainReport {
        train_acc: accuracy(&logits, data.labels, data.train),
        val_acc: accuracy(&logits, data.labels, data.val),
        test_acc: accuracy(&logits, data.labels, data.test),
        epochs: cfg.epochs,
        seed: cfg.seed,
        best_epoch,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredMatrix {
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<f64>,
}

/// Versioned JSON parameter checkpoint.
///
/// `{"format": "topo-rewire-checkpoint", "version": 1, "config": {...},
/// "stacks": [[{"rows", "cols", "data"}, ...], ...]}` with row-major data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub config: ModelConfig,
    stacks: Vec<Vec<StoredMatrix>>,
}

impl Checkpoint {
    pub const FORMAT: &'static str = "topo-rewire-checkpoint";
    pub const VERSION: u32 = 1;

    pub fn new(model: &Model, config: &ModelConfig) -> Self {
        let stacks = model
            .stacks
            .iter()
            .map(|s| {
                s.iter()
                    .map(|m| StoredMatrix {
                        rows: m.nrows(),
                        cols: m.ncols(),
                        data: m.transpose().iter().copied().collect(),
                    })
                    .collect()
            })
            .collect();
        Checkpoint {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            config: config.clone(),
            stacks,
        }
    }

    pub fn model(&self) -> Result<Model> {
        if self.format != Self::FORMAT || self.version != Self::VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let stacks = self
            .stacks
            .iter()
            .map(|s| {
                s.iter()
                    .map(|m| {
                        if m.data.len() != m.rows * m.cols {
                            return Err(Error::ShapeMismatch("checkpoint matrix size".into()));
                        }
                        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Model {
            stacks,
            activation: self.config.activation,
        })
    }
}
