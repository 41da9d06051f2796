//! Full-batch node classification: a two-layer MLP feature transform, a
//! propagation scheme, cross-entropy with Adam, and optional DP
//! regularization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, NormalizedAdjacency, SensitiveVector};
use crate::metrics::{evaluate_predictions, MetricsRecord};
use crate::propagation::{FmpConfig, Scheme};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(d_in: usize, hidden: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit))
        };
        let w1 = glorot(d_in, hidden);
        let w2 = glorot(hidden, d_out);
        Self { w1, b1: Array1::zeros(hidden), w2, b2: Array1::zeros(d_out) }
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: Array2::zeros((d_in, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, d_out)),
            b2: Array1::zeros(d_out),
        }
    }

    fn as_matrices(&self) -> [Array2<f64>; 4] {
        [
            self.w1.clone(),
            self.b1.clone().insert_axis(Axis(0)),
            self.w2.clone(),
            self.b2.clone().insert_axis(Axis(0)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub scheme: Scheme,
    pub fmp: FmpConfig,
    pub split: [f64; 3],
    /// Weight of `‖Δ_s SF(logits)‖₁` over training nodes; 0 disables it.
    pub dp_reg_weight: f64,
    /// Treat the FMP dual variable as a constant during backpropagation.
    pub detach_dual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 300,
            seed: 0,
            hidden: 64,
            scheme: Scheme::Fmp,
            fmp: FmpConfig::default(),
            split: [0.5, 0.25, 0.25],
            dp_reg_weight: 0.0,
            detach_dual: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.fmp.validate()?;
        if self.split.iter().any(|r| !(*r >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split ratios {:?} must be non-negative and sum to 1", self.split)));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.dp_reg_weight >= 0.0) {
            return Err(Error::InvalidParameter("lr, weight_decay and dp_reg_weight must be non-negative".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

/// Random partition with `round(n·r_train)` training and `round(n·r_val)`
/// validation nodes; the rest are test nodes.
pub fn split_nodes(n: usize, ratios: [f64; 3], seed: u64) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let mut split = Split { train: vec![false; n], val: vec![false; n], test: vec![false; n] };
    for (rank, &i) in order.iter().enumerate() {
        let mask = if rank < n_train {
            &mut split.train
        } else if rank < n_train + n_val {
            &mut split.val
        } else {
            &mut split.test
        };
        mask[i] = true;
    }
    split
}

/// Applies `scheme` on the tape. FMP is unrolled step by step so gradients
/// flow through the dual updates; the clip passes gradient only strictly
/// inside the ball.
pub fn propagate_on_tape<'a>(
    t: &mut Tape<'a>,
    x: Var,
    a: &'a NormalizedAdjacency,
    s: &SensitiveVector,
    scheme: Scheme,
    cfg: &FmpConfig,
    detach_dual: bool,
) -> Result<Var> {
    let gamma = cfg.gamma();
    let mix = |t: &mut Tape<'a>, f: Var| -> Result<Var> {
        let af = t.spmm_const(a, f)?;
        let left = t.scale(x, gamma)?;
        let right = t.scale(af, 1.0 - gamma)?;
        t.add(left, right)
    };
    match scheme {
        Scheme::None => Ok(x),
        Scheme::Gcn => t.spmm_const(a, x),
        Scheme::Sgc => (0..cfg.iterations).try_fold(x, |f, _| t.spmm_const(a, f)),
        Scheme::Appnp => (0..cfg.iterations).try_fold(x, |f, _| mix(t, f)),
        Scheme::Fmp => {
            let delta_col = t.constant(s.delta().clone().insert_axis(Axis(1)));
            let dual_grad = |t: &mut Tape<'a>, f: Var, u: Var| -> Result<Var> {
                let p = t.row_softmax(f)?;
                let weights = t.mul(delta_col, u)?;
                let w = t.mul(weights, p)?;
                let total = t.row_sum(w)?;
                let correction = t.mul(total, p)?;
                let g = t.sub(w, correction)?;
                t.scale(g, gamma)
            };
            let mut u = t.constant(Array2::zeros((1, x.shape().1)));
            let mut f = x;
            for _ in 0..cfg.iterations {
                let agg = mix(t, f)?;
                if cfg.lambda_f == 0.0 {
                    f = agg;
                    continue;
                }
                let step = dual_grad(t, f, u)?;
                let f_bar = t.sub(agg, step)?;
                let gap = t.incident_project(f_bar, s.delta())?;
                let ascent = t.scale(gap, cfg.beta())?;
                let u_bar = t.add(u, ascent)?;
                u = t.clamp_abs(u_bar, cfg.lambda_f)?;
                if detach_dual {
                    u = t.detach(u)?;
                }
                let step = dual_grad(t, f, u)?;
                f = t.sub(agg, step)?;
            }
            Ok(f)
        }
    }
}

struct Pipeline {
    params: [Var; 4],
    logits: Var,
}

fn build<'a>(
    t: &mut Tape<'a>,
    params: &MlpParams,
    x: ArrayView2<'_, f64>,
    a: &'a NormalizedAdjacency,
    s: &SensitiveVector,
    cfg: &TrainConfig,
) -> Result<Pipeline> {
    if x.ncols() != params.w1.nrows() {
        return Err(Error::dims(format!("features have {} columns, W1 expects {}", x.ncols(), params.w1.nrows())));
    }
    if x.nrows() != s.len() || x.nrows() != a.node_count() {
        return Err(Error::dims("features, graph and sensitive attribute differ in node count"));
    }
    let [w1, b1, w2, b2] = params.as_matrices().map(|m| t.leaf(m));
    let xv = t.constant(x.to_owned());
    let h = t.matmul(xv, w1)?;
    let h = t.add(h, b1)?;
    let h = t.relu(h)?;
    let z = t.matmul(h, w2)?;
    let z = t.add(z, b2)?;
    let logits = propagate_on_tape(t, z, a, s, cfg.scheme, &cfg.fmp, cfg.detach_dual)?;
    Ok(Pipeline { params: [w1, b1, w2, b2], logits })
}

/// MLP followed by the configured propagation; returns final logits.
pub fn forward_pipeline(
    params: &MlpParams,
    x: ArrayView2<'_, f64>,
    a: &NormalizedAdjacency,
    s: &SensitiveVector,
    cfg: &TrainConfig,
) -> Result<Array2<f64>> {
    let mut t = Tape::new();
    let p = build(&mut t, params, x, a, s, cfg)?;
    Ok(t.value(p.logits).clone())
}

/// Training loss and its gradient with respect to each parameter.
pub fn loss_and_gradient(
    params: &MlpParams,
    x: ArrayView2<'_, f64>,
    a: &NormalizedAdjacency,
    s: &SensitiveVector,
    labels: &[usize],
    train_mask: &[bool],
    cfg: &TrainConfig,
) -> Result<(f64, MlpParams)> {
    let mut t = Tape::new();
    let p = build(&mut t, params, x, a, s, cfg)?;
    let mut loss = t.cross_entropy(p.logits, labels, train_mask)?;
    if cfg.dp_reg_weight > 0.0 {
        let delta = s.masked_delta(train_mask)?;
        let gap = t.incident_project(p.logits, &delta)?;
        let l1 = t.l1_norm(gap)?;
        let reg = t.scale(l1, cfg.dp_reg_weight)?;
        loss = t.add(loss, reg)?;
    }
    let value = t.value(loss)[[0, 0]];
    let g: Gradients = t.backward(loss)?;
    let [w1, b1, w2, b2] = p.params;
    Ok((
        value,
        MlpParams {
            w1: g.wrt(w1),
            b1: g.wrt(b1).remove_axis(Axis(0)),
            w2: g.wrt(w2),
            b2: g.wrt(b2).remove_axis(Axis(0)),
        },
    ))
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[Array2<f64>]) -> Self {
        let zeros: Vec<Array2<f64>> = shapes.iter().map(|a| Array2::zeros(a.raw_dim())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }

    /// L2-style weight decay: `g + wd·θ` feeds both moments.
    fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64, wd: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for k in 0..params.len() {
            let g = &grads[k] + &(&params[k] * wd);
            self.m[k] = &self.m[k] * Self::BETA1 + &g * (1.0 - Self::BETA1);
            self.v[k] = &self.v[k] * Self::BETA2 + &(&g * &g) * (1.0 - Self::BETA2);
            let m_hat = &self.m[k] / c1;
            let v_hat = &self.v[k] / c2;
            params[k] -= &(m_hat / (v_hat.mapv(f64::sqrt) + Self::EPS) * lr);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_dp: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub best_epoch: usize,
    pub val: MetricsRecord,
    pub test: MetricsRecord,
    pub log: Vec<EpochLog>,
    pub split: Split,
}

pub fn class_count(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(2, |m| (m + 1).max(2))
}

/// Trains from a fresh initialization with the split drawn from `cfg.seed`.
pub fn train(cfg: &TrainConfig, data: &DatasetBundle) -> Result<TrainOutcome> {
    let split = split_nodes(data.len(), cfg.split, derive_seed(cfg.seed, 0));
    train_with_split(cfg, data, split)
}

/// Trains with a caller-supplied split; the model with the best validation
/// accuracy (earliest on ties) is kept and scored on the test mask.
pub fn train_with_split(cfg: &TrainConfig, data: &DatasetBundle, split: Split) -> Result<TrainOutcome> {
    cfg.validate()?;
    let a = normalized_adjacency(&data.graph);
    let x = data.features.view();
    let init = MlpParams::init(x.ncols(), cfg.hidden, class_count(&data.labels), derive_seed(cfg.seed, 1));
    let mut theta: Vec<Array2<f64>> = init.as_matrices().to_vec();
    let mut adam = Adam::new(&theta);

    let unpack = |m: &[Array2<f64>]| MlpParams {
        w1: m[0].clone(),
        b1: m[1].row(0).to_owned(),
        w2: m[2].clone(),
        b2: m[3].row(0).to_owned(),
    };

    let mut best: Option<(f64, usize, MlpParams, MetricsRecord)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let params = unpack(&theta);
        let (loss, grad) = loss_and_gradient(&params, x, &a, &data.sens, &data.labels, &split.train, cfg)?;
        if !loss.is_finite() {
            return Err(Error::NumericalFailure(format!("training loss is {loss} at epoch {epoch}")));
        }
        adam.update(&mut theta, &grad.as_matrices(), cfg.lr, cfg.weight_decay);
        if theta.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NumericalFailure(format!("non-finite parameters after epoch {epoch}")));
        }
        let params = unpack(&theta);
        let val = evaluate(&params, data, &a, cfg, &split.val)?;
        log.push(EpochLog { epoch, train_loss: loss, val_acc: val.accuracy, val_dp: val.dp });
        if best.as_ref().is_none_or(|(acc, ..)| val.accuracy > *acc) {
            best = Some((val.accuracy, epoch, params, val));
        }
    }
    let (best_epoch, params, val) = match best {
        Some((_, e, p, v)) => (e, p, v),
        None => {
            let p = unpack(&theta);
            let v = evaluate(&p, data, &a, cfg, &split.val)?;
            (0, p, v)
        }
    };
    let test = evaluate(&params, data, &a, cfg, &split.test)?;
    Ok(TrainOutcome { params, best_epoch, val, test, log, split })
}

/// Accuracy, ΔDP and ΔEO of the pipeline on the nodes selected by `mask`.
pub fn evaluate(
    params: &MlpParams,
    data: &DatasetBundle,
    a: &NormalizedAdjacency,
    cfg: &TrainConfig,
    mask: &[bool],
) -> Result<MetricsRecord> {
    let logits = forward_pipeline(params, data.features.view(), a, &data.sens, cfg)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite logits".into()));
    }
    evaluate_predictions(logits.view(), &data.labels, &data.sens, mask)
}
