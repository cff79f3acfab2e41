//! Desk-scale training: a two-layer embedder plus class centers, optimized by
//! Adam with a per-epoch exponential learning-rate decay under any loss from
//! [`crate::losses`].
//!
//! Everything runs on one thread in a fixed order, so identical seeds produce
//! bit-identical loss traces.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use thiserror::Error;

use crate::losses::{
    aam_softmax, am_softmax, h_softmax, ham_softmax, joint_eh_loss, softmax_ce, Batch, ClassCenters, LossConfig,
    LossError, LossKind,
};
use crate::matrix::Matrix;
use crate::metrics::{compute_eer, compute_min_dcf, score_cosine, score_hyperbolic, DcfParams, MetricsError, TrialScores};
use crate::synthdata::{LabeledDataset, TrialSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence { epoch: usize, batch: usize, detail: String },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative given the pre-activation `v` and output `a`.
    #[inline]
    fn derivative(self, v: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}` (expected relu or tanh)")),
        }
    }
}

/// Layer sizes of the `input → hidden → output` embedder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedderSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            input_dim: 32,
            hidden_dim: 64,
            output_dim: 16,
            activation: Activation::Relu,
            seed: 7,
        }
    }
}

/// Adam constants, learning-rate schedule and minibatching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSpec {
    pub lr0: f64,
    /// Multiplier applied to the learning rate after each epoch.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for OptimSpec {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            decay: 0.97,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            epochs: 30,
            batch_size: 256,
            seed: 7,
        }
    }
}

impl OptimSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Argument(m.to_string()));
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be nonnegative");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.eps_opt > 0.0) {
            return bad("eps_opt must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    /// `lr0 · decay^epoch`
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi(epoch as i32)
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`.
pub fn gradient_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    optim: &OptimSpec,
    lr: f64,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(TrainError::Argument("parameter, gradient and state lengths differ".into()));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (optim.beta1, optim.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + optim.eps_opt);
    }
    Ok(())
}

/// Two-layer feed-forward network `W2·act(W1·x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    pub spec: EmbedderSpec,
    /// hidden × input
    pub w1: Matrix<f64>,
    pub b1: Vec<f64>,
    /// output × hidden
    pub w2: Matrix<f64>,
    pub b2: Vec<f64>,
}

struct ForwardCache {
    pre: Matrix<f64>,
    hidden: Matrix<f64>,
}

#[derive(Debug, Clone)]
struct EmbedderGrads {
    w1: Matrix<f64>,
    b1: Vec<f64>,
    w2: Matrix<f64>,
    b2: Vec<f64>,
}

impl Embedder {
    /// Fan-in scaled uniform weights `U(−1/√fan_in, 1/√fan_in)`, zero biases.
    pub fn init(spec: EmbedderSpec) -> Result<Self, TrainError> {
        if spec.input_dim == 0 || spec.hidden_dim == 0 || spec.output_dim == 0 {
            return Err(TrainError::Argument("embedder layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layer = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(dist)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let w1 = layer(spec.hidden_dim, spec.input_dim);
        let w2 = layer(spec.output_dim, spec.hidden_dim);
        Ok(Self {
            spec,
            w1,
            b1: vec![0.0; spec.hidden_dim],
            w2,
            b2: vec![0.0; spec.output_dim],
        })
    }

    fn forward_cached(&self, x: &Matrix<f64>) -> (Matrix<f64>, ForwardCache) {
        let n = x.rows();
        let (h, o) = (self.spec.hidden_dim, self.spec.output_dim);
        let act = self.spec.activation;
        let mut pre = Matrix::zeros(n, h);
        let mut hidden = Matrix::zeros(n, h);
        let mut out = Matrix::zeros(n, o);
        for i in 0..n {
            let xi = x.row(i);
            for k in 0..h {
                let v = crate::scalar::dot(self.w1.row(k), xi) + self.b1[k];
                pre[(i, k)] = v;
                hidden[(i, k)] = act.apply(v);
            }
            let hi = hidden.row(i);
            for k in 0..o {
                out[(i, k)] = crate::scalar::dot(self.w2.row(k), hi) + self.b2[k];
            }
        }
        (out, ForwardCache { pre, hidden })
    }

    /// Embeds every row of `x`.
    pub fn forward(&self, x: &Matrix<f64>) -> Result<Matrix<f64>, TrainError> {
        if x.cols() != self.spec.input_dim {
            return Err(TrainError::Argument(format!(
                "input has {} features, embedder expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        Ok(self.forward_cached(x).0)
    }

    fn backward(&self, x: &Matrix<f64>, cache: &ForwardCache, grad_out: &Matrix<f64>) -> EmbedderGrads {
        let n = x.rows();
        let (h, o) = (self.spec.hidden_dim, self.spec.output_dim);
        let act = self.spec.activation;
        let mut g = EmbedderGrads {
            w1: Matrix::zeros(h, self.spec.input_dim),
            b1: vec![0.0; h],
            w2: Matrix::zeros(o, h),
            b2: vec![0.0; o],
        };
        let mut g_pre = vec![0.0; h];
        for i in 0..n {
            let go = grad_out.row(i);
            let hi = cache.hidden.row(i);
            for k in 0..o {
                crate::scalar::axpy(go[k], hi, g.w2.row_mut(k));
                g.b2[k] += go[k];
            }
            for (j, gp) in g_pre.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..o {
                    s += go[k] * self.w2[(k, j)];
                }
                *gp = s * act.derivative(cache.pre[(i, j)], hi[j]);
            }
            let xi = x.row(i);
            for (j, &gp) in g_pre.iter().enumerate() {
                if gp != 0.0 {
                    crate::scalar::axpy(gp, xi, g.w1.row_mut(j));
                }
                g.b1[j] += gp;
            }
        }
        g
    }
}

/// Which similarity scores verification trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringBackend {
    Cosine,
    Hyperbolic,
}

impl ScoringBackend {
    /// Hyperbolic scoring for hyperbolic (and joint) losses, cosine otherwise.
    pub fn for_loss(kind: LossKind) -> Self {
        if kind.is_hyperbolic() {
            ScoringBackend::Hyperbolic
        } else {
            ScoringBackend::Cosine
        }
    }
}

impl fmt::Display for ScoringBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringBackend::Cosine => "cosine",
            ScoringBackend::Hyperbolic => "hyperbolic",
        })
    }
}

impl FromStr for ScoringBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(ScoringBackend::Cosine),
            "hyperbolic" => Ok(ScoringBackend::Hyperbolic),
            other => Err(format!("unknown scoring backend `{other}` (expected cosine or hyperbolic)")),
        }
    }
}

/// Embedder together with the class-center heads of one loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: LossKind,
    pub embedder: Embedder,
    pub centers: ClassCenters<f64>,
    /// Separate hyperbolic head of the joint loss (absent when shared).
    pub centers_hyp: Option<ClassCenters<f64>>,
}

impl Model {
    /// Centers are drawn from `N(0, 0.01²)` on a stream derived from the embedder seed.
    pub fn init(embedder: EmbedderSpec, cfg: &LossConfig<f64>, kind: LossKind) -> Result<Self, TrainError> {
        cfg.validate()?;
        if embedder.output_dim != cfg.dim {
            return Err(TrainError::Argument(format!(
                "embedder output_dim {} does not match loss dim {}",
                embedder.output_dim, cfg.dim
            )));
        }
        let net = Embedder::init(embedder)?;
        let mut rng = ChaCha8Rng::seed_from_u64(embedder.seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, 0.01).expect("valid sd");
        let mut head = || {
            let data: Vec<f64> = (0..cfg.num_classes * cfg.dim).map(|_| rng.sample(normal)).collect();
            ClassCenters::new(Matrix::from_vec(cfg.num_classes, cfg.dim, data).expect("sized")).expect("finite")
        };
        let centers = head();
        let centers_hyp = (kind == LossKind::JointEh && !cfg.share_centers).then(&mut head);
        Ok(Self {
            kind,
            embedder: net,
            centers,
            centers_hyp,
        })
    }
}

/// Loss value with gradients for the embeddings and each head.
struct StepGrads {
    value: f64,
    embeddings: Matrix<f64>,
    centers: Matrix<f64>,
    centers_hyp: Option<Matrix<f64>>,
}

fn loss_and_grads(model: &Model, batch: &Batch<f64>, cfg: &LossConfig<f64>) -> Result<StepGrads, LossError> {
    let single = |out: crate::losses::LossOutput<f64>| StepGrads {
        value: out.value,
        embeddings: out.grad_embeddings,
        centers: out.grad_weights,
        centers_hyp: None,
    };
    let c = &model.centers;
    Ok(match model.kind {
        LossKind::Softmax => single(softmax_ce(batch, c, cfg, false)?),
        LossKind::SoftmaxScaled => single(softmax_ce(batch, c, cfg, true)?),
        LossKind::Am => single(am_softmax(batch, c, cfg)?),
        LossKind::Aam => single(aam_softmax(batch, c, cfg)?),
        LossKind::H => single(h_softmax(batch, c, cfg)?),
        LossKind::Ham => single(ham_softmax(batch, c, cfg)?),
        LossKind::JointEh => match &model.centers_hyp {
            Some(hyp) => {
                let out = joint_eh_loss(batch, c, hyp, cfg)?;
                StepGrads {
                    value: out.value,
                    embeddings: out.grad_embeddings,
                    centers: out.grad_centers_euc,
                    centers_hyp: Some(out.grad_centers_hyp),
                }
            }
            None => {
                let out = joint_eh_loss(batch, c, c, cfg)?;
                let mut g = out.grad_centers_euc;
                g.add_scaled(1.0, &out.grad_centers_hyp);
                StepGrads {
                    value: out.value,
                    embeddings: out.grad_embeddings,
                    centers: g,
                    centers_hyp: None,
                }
            }
        },
    })
}

/// Verification metrics on held-out trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub eer: f64,
    pub min_dcf: f64,
    pub eer_threshold: f64,
    pub dcf_threshold: f64,
}

/// Embeds the held-out vectors, scores every trial pair with `scoring` and
/// computes EER and minDCF (`p_target = 0.05`).
pub fn evaluate(
    embedder: &Embedder,
    trials: &TrialSet,
    scoring: ScoringBackend,
    cfg: &LossConfig<f64>,
) -> Result<Evaluation, TrainError> {
    if trials.pairs.is_empty() {
        return Err(TrainError::Argument("trial list is empty".into()));
    }
    let emb = embedder.forward(&trials.heldout.vectors)?;
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    for p in &trials.pairs {
        let (a, b) = (emb.row(p.enroll), emb.row(p.test));
        let s = match scoring {
            ScoringBackend::Cosine => score_cosine(a, b)?,
            ScoringBackend::Hyperbolic => score_hyperbolic(a, b, cfg.curvature, &cfg.policy)?,
        };
        if p.target {
            target.push(s);
        } else {
            nontarget.push(s);
        }
    }
    let scores = TrialScores::new(target, nontarget)?;
    let eer = compute_eer(&scores)?;
    let dcf = compute_min_dcf(&scores, &DcfParams::default())?;
    Ok(Evaluation {
        eer: eer.eer,
        min_dcf: dcf.min_dcf,
        eer_threshold: eer.threshold,
        dcf_threshold: dcf.threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean training loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    pub wall_time_s: f64,
    /// Held-out metrics after the epoch's updates.
    pub eval: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub kind: LossKind,
    pub scoring: ScoringBackend,
    pub records: Vec<EpochRecord>,
    /// Metrics of the untrained model.
    pub initial: Evaluation,
    /// Metrics of the final model.
    pub final_eval: Evaluation,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    /// `epoch,loss,lr,eer,mindcf` rows, one per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,lr,eer,mindcf\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.loss, r.lr, r.eval.eer, r.eval.min_dcf));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub initial_model: Model,
    pub model: Model,
}

struct OptimizerState {
    w1: AdamState,
    b1: AdamState,
    w2: AdamState,
    b2: AdamState,
    centers: AdamState,
    centers_hyp: Option<AdamState>,
}

impl OptimizerState {
    fn new(model: &Model) -> Self {
        let e = &model.embedder;
        Self {
            w1: AdamState::new(e.w1.as_slice().len()),
            b1: AdamState::new(e.b1.len()),
            w2: AdamState::new(e.w2.as_slice().len()),
            b2: AdamState::new(e.b2.len()),
            centers: AdamState::new(model.centers.weights().as_slice().len()),
            centers_hyp: model.centers_hyp.as_ref().map(|c| AdamState::new(c.weights().as_slice().len())),
        }
    }
}

/// Trains a fresh model on `train` and evaluates it on `trials` after every epoch.
pub fn train(
    train: &LabeledDataset,
    trials: &TrialSet,
    embedder: EmbedderSpec,
    optim: &OptimSpec,
    cfg: &LossConfig<f64>,
    kind: LossKind,
    scoring: ScoringBackend,
) -> Result<TrainOutcome, TrainError> {
    optim.validate()?;
    if train.is_empty() {
        return Err(TrainError::Argument("training set is empty".into()));
    }
    if train.dim() != embedder.input_dim {
        return Err(TrainError::Argument(format!(
            "data has {} features, embedder expects {}",
            train.dim(),
            embedder.input_dim
        )));
    }
    if train.num_classes() > cfg.num_classes {
        return Err(TrainError::Argument(format!(
            "data has {} classes, loss is configured for {}",
            train.num_classes(),
            cfg.num_classes
        )));
    }
    let mut model = Model::init(embedder, cfg, kind)?;
    let initial_model = model.clone();
    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(optim.seed);
    let initial = evaluate(&model.embedder, trials, scoring, cfg)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(optim.epochs);

    for epoch in 0..optim.epochs {
        let started = Instant::now();
        let lr = optim.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(optim.batch_size).enumerate() {
            let diverged = |detail: String| TrainError::Divergence { epoch, batch: b, detail };
            let x = train.vectors.select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (emb, cache) = model.embedder.forward_cached(&x);
            let batch = Batch::new(emb, labels).map_err(|e| diverged(e.to_string()))?;
            let g = loss_and_grads(&model, &batch, cfg).map_err(|e| match e {
                LossError::Argument(_) => TrainError::Loss(e),
                other => diverged(other.to_string()),
            })?;
            if !g.value.is_finite() {
                return Err(diverged(format!("loss is {}", g.value)));
            }
            total += g.value * idx.len() as f64;
            let eg = model.embedder.backward(&x, &cache, &g.embeddings);
            let step = |p: &mut [f64], gr: &[f64], s: &mut AdamState| {
                gradient_step(p, gr, s, optim, lr).map_err(|e| diverged(e.to_string()))
            };
            let net = &mut model.embedder;
            step(net.w1.as_mut_slice(), eg.w1.as_slice(), &mut state.w1)?;
            step(&mut net.b1, &eg.b1, &mut state.b1)?;
            step(net.w2.as_mut_slice(), eg.w2.as_slice(), &mut state.w2)?;
            step(&mut net.b2, &eg.b2, &mut state.b2)?;
            step(model.centers.weights_mut().as_mut_slice(), g.centers.as_slice(), &mut state.centers)?;
            if let (Some(c), Some(gc), Some(s)) = (&mut model.centers_hyp, &g.centers_hyp, &mut state.centers_hyp) {
                step(c.weights_mut().as_mut_slice(), gc.as_slice(), s)?;
            }
        }
        let eval = evaluate(&model.embedder, trials, scoring, cfg).map_err(|e| TrainError::Divergence {
            epoch,
            batch: usize::MAX,
            detail: format!("evaluation failed: {e}"),
        })?;
        records.push(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            lr,
            wall_time_s: started.elapsed().as_secs_f64(),
            eval,
        });
    }
    let final_eval = records.last().map_or(initial, |r| r.eval);
    Ok(TrainOutcome {
        report: TrainReport {
            kind,
            scoring,
            records,
            initial,
            final_eval,
        },
        initial_model,
        model,
    })
}
