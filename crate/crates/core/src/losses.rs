//! Margin softmax losses over Euclidean and Poincaré-ball class centers.
//!
//! Every loss returns its batch-mean value together with analytic gradients
//! for the embeddings and the raw class-center parameters. All of them share
//! one max-shifted cross-entropy; they differ only in how logits are built.
//!
//! | kind             | logit for class `j`                                   |
//! |------------------|-------------------------------------------------------|
//! | `softmax`        | `x·w_j`                                               |
//! | `softmax_scaled` | `s·cos θ_j`                                           |
//! | `am`             | `s·(cos θ_j − m·[j = y])`                             |
//! | `aam`            | `s·cos(θ_j + m·[j = y])`                              |
//! | `h`              | `−s·d(proj x, proj w_j)`                              |
//! | `ham`            | `−s·(d(proj x, proj w_j) + m·[j = y])`                |
//! | `joint_eh`       | `λ·am + (1 − λ)·ham`, separate centers per branch     |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{
    distance_gradient_slices, hyperbolic_distance_slices, project, project_backward, Curvature,
    GeometryError, StabilityPolicy,
};
use crate::matrix::Matrix;
use crate::scalar::{axpy, dot, norm, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate input: {what} row {row} has zero norm")]
    Degenerate { what: &'static str, row: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Softmax,
    SoftmaxScaled,
    Am,
    Aam,
    H,
    Ham,
    JointEh,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Softmax,
        LossKind::SoftmaxScaled,
        LossKind::Am,
        LossKind::Aam,
        LossKind::H,
        LossKind::Ham,
        LossKind::JointEh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::SoftmaxScaled => "softmax_scaled",
            LossKind::Am => "am",
            LossKind::Aam => "aam",
            LossKind::H => "h",
            LossKind::Ham => "ham",
            LossKind::JointEh => "joint_eh",
        }
    }

    /// Whether the loss measures distances in the Poincaré ball.
    pub fn is_hyperbolic(self) -> bool {
        matches!(self, LossKind::H | LossKind::Ham | LossKind::JointEh)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown loss `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Hyperparameters shared by all losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T> {
    /// Projection curvature for the hyperbolic losses.
    pub curvature: Curvature<T>,
    pub scale: T,
    pub margin: T,
    pub num_classes: usize,
    pub dim: usize,
    /// Weight of the Euclidean branch in [`joint_eh_loss`].
    pub euclidean_weight: T,
    /// Let the joint loss use one center matrix for both branches.
    pub share_centers: bool,
    pub policy: StabilityPolicy<T>,
}

impl<T: Scalar> LossConfig<T> {
    /// `s = 30`, `m = 0.2`, `c = 1`, Euclidean weight 0.3.
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            curvature: Curvature::unit(),
            scale: T::lit(30.0),
            margin: T::lit(0.2),
            num_classes,
            dim,
            euclidean_weight: T::lit(0.3),
            share_centers: false,
            policy: StabilityPolicy::default(),
        }
    }

    /// [`LossConfig::new`] with the curvature tuned per loss: 5 for H-Softmax,
    /// 3 for HAM-Softmax and the joint loss.
    pub fn recommended(kind: LossKind, num_classes: usize, dim: usize) -> Self {
        let mut cfg = Self::new(num_classes, dim);
        cfg.curvature = match kind {
            LossKind::H => Curvature::new(T::lit(5.0)).expect("positive"),
            LossKind::Ham | LossKind::JointEh => Curvature::new(T::lit(3.0)).expect("positive"),
            _ => Curvature::unit(),
        };
        cfg
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.scale > T::zero() && self.scale.is_finite()) {
            return Err(LossError::Argument(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.margin >= T::zero() && self.margin.is_finite()) {
            return Err(LossError::Argument(format!("margin must be nonnegative, got {}", self.margin)));
        }
        if self.num_classes == 0 {
            return Err(LossError::Argument("num_classes must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(LossError::Argument("dim must be at least 1".into()));
        }
        if !(self.euclidean_weight >= T::zero() && self.euclidean_weight <= T::one()) {
            return Err(LossError::Argument(format!(
                "euclidean_weight must lie in [0, 1], got {}",
                self.euclidean_weight
            )));
        }
        self.policy.validate()?;
        Ok(())
    }

    /// Curvature used to *measure* distances between projected points.
    ///
    /// Distances are taken in the standard `c = 1` ball. When the projection
    /// ball is larger than the unit ball (`c < 1`) projected points can lie
    /// outside it, so the measuring curvature drops to `c` there.
    pub fn distance_curvature(&self) -> Curvature<T> {
        if self.curvature.value() < T::one() {
            self.curvature
        } else {
            Curvature::unit()
        }
    }
}

/// Raw (unprojected, unnormalized) class-center parameters, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters<T> {
    weights: Matrix<T>,
}

impl<T: Scalar> ClassCenters<T> {
    pub fn new(weights: Matrix<T>) -> Result<Self, LossError> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(LossError::Argument("class centers must be non-empty".into()));
        }
        if !weights.is_finite() {
            return Err(LossError::Argument("class centers contain non-finite entries".into()));
        }
        Ok(Self { weights })
    }

    #[inline]
    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.weights
    }
}

/// Embeddings with their integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    embeddings: Matrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(embeddings: Matrix<T>, labels: Vec<usize>) -> Result<Self, LossError> {
        if embeddings.rows() == 0 {
            return Err(LossError::Argument("batch must contain at least one row".into()));
        }
        if embeddings.rows() != labels.len() {
            return Err(LossError::Argument(format!(
                "{} embeddings but {} labels",
                embeddings.rows(),
                labels.len()
            )));
        }
        if !embeddings.is_finite() {
            return Err(LossError::Argument("embeddings contain non-finite entries".into()));
        }
        Ok(Self { embeddings, labels })
    }

    #[inline]
    pub fn embeddings(&self) -> &Matrix<T> {
        &self.embeddings
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean loss over the batch with gradients and the logits that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub value: T,
    pub grad_embeddings: Matrix<T>,
    pub grad_weights: Matrix<T>,
    pub logits: Matrix<T>,
}

/// Output of [`joint_eh_loss`]: one center gradient per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLossOutput<T> {
    pub value: T,
    pub grad_embeddings: Matrix<T>,
    pub grad_centers_euc: Matrix<T>,
    pub grad_centers_hyp: Matrix<T>,
    pub euclidean: LossOutput<T>,
    pub hyperbolic: LossOutput<T>,
}

fn check_shapes<T: Scalar>(batch: &Batch<T>, centers: &ClassCenters<T>, cfg: &LossConfig<T>) -> Result<(), LossError> {
    cfg.validate()?;
    let (c, d) = centers.weights.shape();
    if c != cfg.num_classes || d != cfg.dim {
        return Err(LossError::Argument(format!(
            "class centers are {c}x{d}, config expects {}x{}",
            cfg.num_classes, cfg.dim
        )));
    }
    if batch.embeddings.cols() != cfg.dim {
        return Err(LossError::Argument(format!(
            "embedding dim {} does not match config dim {}",
            batch.embeddings.cols(),
            cfg.dim
        )));
    }
    if let Some((i, &y)) = batch.labels.iter().enumerate().find(|(_, &y)| y >= c) {
        return Err(LossError::Argument(format!("label {y} at row {i} is out of range for {c} classes")));
    }
    Ok(())
}

/// Row-wise stable softmax cross-entropy. Returns the mean loss and `∂loss/∂logits`.
fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> (T, Matrix<T>) {
    let n = logits.rows();
    let inv_n = T::from_count(n).recip();
    let mut grad = Matrix::zeros(n, logits.cols());
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let g = grad.row_mut(i);
        let mut sum = T::zero();
        for (gj, &l) in g.iter_mut().zip(row) {
            *gj = (l - max).exp();
            sum += *gj;
        }
        total += max + sum.ln() - row[y];
        for gj in g.iter_mut() {
            *gj = *gj / sum * inv_n;
        }
        g[y] -= inv_n;
    }
    (total * inv_n, grad)
}

fn softmax_row<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = p.iter().copied().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Unit-normalized rows with their original norms.
fn normalize_rows<T: Scalar>(m: &Matrix<T>, what: &'static str) -> Result<(Matrix<T>, Vec<T>), LossError> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if !(n > T::zero()) {
            return Err(LossError::Degenerate { what, row: i });
        }
        for v in out.row_mut(i) {
            *v /= n;
        }
        norms.push(n);
    }
    Ok((out, norms))
}

/// VJP of `x ↦ x/‖x‖` at a row with unit direction `u` and norm `n`.
fn normalize_backward<T: Scalar>(u: &[T], n: T, g: &[T]) -> Vec<T> {
    let r = dot(u, g);
    u.iter().zip(g).map(|(&ui, &gi)| (gi - r * ui) / n).collect()
}

/// Target-logit transform of a cosine head: maps `cos θ_y` to `(logit, ∂logit/∂cos)`.
#[derive(Debug, Clone, Copy)]
enum CosineMargin<T> {
    /// `s·cos`
    None,
    /// `s·(cos − m)`
    Additive(T),
    /// `s·cos(θ + m)`, `θ + m` clamped to `[0, π]`
    Angular(T),
}

fn cosine_head<T: Scalar>(
    batch: &Batch<T>,
    centers: &ClassCenters<T>,
    cfg: &LossConfig<T>,
    margin: CosineMargin<T>,
) -> Result<LossOutput<T>, LossError> {
    check_shapes(batch, centers, cfg)?;
    let (xs, xn) = normalize_rows(&batch.embeddings, "embedding")?;
    let (ws, wn) = normalize_rows(&centers.weights, "class center")?;
    let n = batch.len();
    let c = cfg.num_classes;
    let s = cfg.scale;

    let mut logits = Matrix::zeros(n, c);
    // ∂logit_ij/∂cos_ij
    let mut slope = Matrix::zeros(n, c);
    for i in 0..n {
        let y = batch.labels[i];
        for j in 0..c {
            let cos = dot(xs.row(i), ws.row(j));
            let (l, dl) = if j == y {
                target_logit(cos, s, margin)
            } else {
                (s * cos, s)
            };
            logits[(i, j)] = l;
            slope[(i, j)] = dl;
        }
    }
    let (value, dlogits) = cross_entropy(&logits, &batch.labels);

    let d = cfg.dim;
    let mut gxs = Matrix::zeros(n, d);
    let mut gws = Matrix::zeros(c, d);
    for i in 0..n {
        for j in 0..c {
            let g = dlogits[(i, j)] * slope[(i, j)];
            axpy(g, ws.row(j), gxs.row_mut(i));
            axpy(g, xs.row(i), gws.row_mut(j));
        }
    }
    let mut grad_embeddings = Matrix::zeros(n, d);
    for i in 0..n {
        let g = normalize_backward(xs.row(i), xn[i], gxs.row(i));
        grad_embeddings.row_mut(i).copy_from_slice(&g);
    }
    let mut grad_weights = Matrix::zeros(c, d);
    for j in 0..c {
        let g = normalize_backward(ws.row(j), wn[j], gws.row(j));
        grad_weights.row_mut(j).copy_from_slice(&g);
    }
    Ok(LossOutput {
        value,
        grad_embeddings,
        grad_weights,
        logits,
    })
}

fn target_logit<T: Scalar>(cos: T, s: T, margin: CosineMargin<T>) -> (T, T) {
    match margin {
        CosineMargin::None => (s * cos, s),
        CosineMargin::Additive(m) => (s * (cos - m), s),
        CosineMargin::Angular(m) => {
            let u = cos.max(-T::one()).min(T::one());
            let theta = u.acos();
            let shifted = theta + m;
            if shifted >= T::PI() {
                // clamped at π: constant −s
                (-s, T::zero())
            } else {
                // d cos(acos u + m)/du = sin(θ + m)/sin θ
                let sin_theta = theta.sin().max(T::epsilon());
                (s * shifted.cos(), s * shifted.sin() / sin_theta)
            }
        }
    }
}

/// Softmax cross-entropy on dot-product logits, or on `s`-scaled cosine
/// logits when `use_scale` is set.
pub fn softmax_ce<T: Scalar>(
    batch: &Batch<T>,
    centers: &ClassCenters<T>,
    cfg: &LossConfig<T>,
    use_scale: bool,
) -> Result<LossOutput<T>, LossError> {
    if use_scale {
        return cosine_head(batch, centers, cfg, CosineMargin::None);
    }
    check_shapes(batch, centers, cfg)?;
    let x = &batch.embeddings;
    let w = &centers.weights;
    let (n, c, d) = (batch.len(), cfg.num_classes, cfg.dim);
    let mut logits = Matrix::zeros(n, c);
    for i in 0..n {
        for j in 0..c {
            logits[(i, j)] = dot(x.row(i), w.row(j));
        }
    }
    let (value, dlogits) = cross_entropy(&logits, &batch.labels);
    let mut grad_embeddings = Matrix::zeros(n, d);
    let mut grad_weights = Matrix::zeros(c, d);
    for i in 0..n {
        for j in 0..c {
            let g = dlogits[(i, j)];
            axpy(g, w.row(j), grad_embeddings.row_mut(i));
            axpy(g, x.row(i), grad_weights.row_mut(j));
        }
    }
    Ok(LossOutput {
        value,
        grad_embeddings,
        grad_weights,
        logits,
    })
}

/// Additive cosine margin: target logit `s·(cos θ_y − m)`.
pub fn am_softmax<T: Scalar>(batch: &Batch<T>, centers: &ClassCenters<T>, cfg: &LossConfig<T>) -> Result<LossOutput<T>, LossError> {
    cosine_head(batch, centers, cfg, CosineMargin::Additive(cfg.margin))
}

/// Additive angular margin: target logit `s·cos(θ_y + m)`.
pub fn aam_softmax<T: Scalar>(batch: &Batch<T>, centers: &ClassCenters<T>, cfg: &LossConfig<T>) -> Result<LossOutput<T>, LossError> {
    cosine_head(batch, centers, cfg, CosineMargin::Angular(cfg.margin))
}

fn project_rows<T: Scalar>(m: &Matrix<T>, cfg: &LossConfig<T>) -> Result<Matrix<T>, LossError> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let p = project(m.row(i), cfg.curvature, &cfg.policy)?;
        out.row_mut(i).copy_from_slice(p.coords());
    }
    Ok(out)
}

/// Pairwise distances between projected rows of `xs` and `ws`.
fn distance_table<T: Scalar>(xs: &Matrix<T>, ws: &Matrix<T>, cfg: &LossConfig<T>) -> Result<Matrix<T>, LossError> {
    let c_dist = cfg.distance_curvature();
    let mut d = Matrix::zeros(xs.rows(), ws.rows());
    for i in 0..xs.rows() {
        for j in 0..ws.rows() {
            d[(i, j)] = hyperbolic_distance_slices(xs.row(i), ws.row(j), c_dist, &cfg.policy)?;
        }
    }
    Ok(d)
}

fn hyperbolic_head<T: Scalar>(
    batch: &Batch<T>,
    centers: &ClassCenters<T>,
    cfg: &LossConfig<T>,
    margin: T,
) -> Result<LossOutput<T>, LossError> {
    check_shapes(batch, centers, cfg)?;
    let xs = project_rows(&batch.embeddings, cfg)?;
    let ws = project_rows(&centers.weights, cfg)?;
    let dist = distance_table(&xs, &ws, cfg)?;
    let (n, c, d) = (batch.len(), cfg.num_classes, cfg.dim);
    let s = cfg.scale;

    let mut logits = Matrix::zeros(n, c);
    for i in 0..n {
        let y = batch.labels[i];
        for j in 0..c {
            let adjusted = if j == y { dist[(i, j)] + margin } else { dist[(i, j)] };
            logits[(i, j)] = -s * adjusted;
        }
    }
    let (value, dlogits) = cross_entropy(&logits, &batch.labels);

    let c_dist = cfg.distance_curvature();
    let mut gxs = Matrix::zeros(n, d);
    let mut gws = Matrix::zeros(c, d);
    for i in 0..n {
        for j in 0..c {
            let g = -s * dlogits[(i, j)];
            if g == T::zero() {
                continue;
            }
            let (gx, gw) = distance_gradient_slices(xs.row(i), ws.row(j), c_dist, &cfg.policy)?;
            axpy(g, &gx, gxs.row_mut(i));
            axpy(g, &gw, gws.row_mut(j));
        }
    }
    let mut grad_embeddings = Matrix::zeros(n, d);
    for i in 0..n {
        let g = project_backward(batch.embeddings.row(i), gxs.row(i), cfg.curvature, &cfg.policy);
        grad_embeddings.row_mut(i).copy_from_slice(&g);
    }
    let mut grad_weights = Matrix::zeros(c, d);
    for j in 0..c {
        let g = project_backward(centers.weights.row(j), gws.row(j), cfg.curvature, &cfg.policy);
        grad_weights.row_mut(j).copy_from_slice(&g);
    }
    Ok(LossOutput {
        value,
        grad_embeddings,
        grad_weights,
        logits,
    })
}

/// Cross-entropy over negative scaled hyperbolic distances. Ignores `cfg.margin`.
pub fn h_softmax<T: Scalar>(batch: &Batch<T>, centers: &ClassCenters<T>, cfg: &LossConfig<T>) -> Result<LossOutput<T>, LossError> {
    hyperbolic_head(batch, centers, cfg, T::zero())
}

/// H-Softmax with `m` added to the target-class distance.
pub fn ham_softmax<T: Scalar>(batch: &Batch<T>, centers: &ClassCenters<T>, cfg: &LossConfig<T>) -> Result<LossOutput<T>, LossError> {
    hyperbolic_head(batch, centers, cfg, cfg.margin)
}

/// `λ·AM-Softmax(centers_euc) + (1 − λ)·HAM-Softmax(centers_hyp)` with
/// `λ = cfg.euclidean_weight`.
///
/// With `cfg.share_centers` the caller passes the same matrix twice and
/// should add the two center gradients.
pub fn joint_eh_loss<T: Scalar>(
    batch: &Batch<T>,
    centers_euc: &ClassCenters<T>,
    centers_hyp: &ClassCenters<T>,
    cfg: &LossConfig<T>,
) -> Result<JointLossOutput<T>, LossError> {
    let euclidean = am_softmax(batch, centers_euc, cfg)?;
    let hyperbolic = ham_softmax(batch, centers_hyp, cfg)?;
    let a = cfg.euclidean_weight;
    let b = T::one() - a;
    let value = a * euclidean.value + b * hyperbolic.value;
    let mut grad_embeddings = euclidean.grad_embeddings.scaled(a);
    grad_embeddings.add_scaled(b, &hyperbolic.grad_embeddings);
    Ok(JointLossOutput {
        value,
        grad_embeddings,
        grad_centers_euc: euclidean.grad_weights.scaled(a),
        grad_centers_hyp: hyperbolic.grad_weights.scaled(b),
        euclidean,
        hyperbolic,
    })
}

/// Class posterior `softmax(−s·d(proj x, proj w_j))` for one embedding.
pub fn hyperbolic_posterior<T: Scalar>(
    embedding: &[T],
    centers: &ClassCenters<T>,
    cfg: &LossConfig<T>,
) -> Result<Vec<T>, LossError> {
    let m = Matrix::from_vec(1, embedding.len(), embedding.to_vec()).expect("single row");
    let batch = Batch::new(m, vec![0])?;
    check_shapes(&batch, centers, cfg)?;
    let xs = project_rows(batch.embeddings(), cfg)?;
    let ws = project_rows(&centers.weights, cfg)?;
    let dist = distance_table(&xs, &ws, cfg)?;
    let logits: Vec<T> = dist.row(0).iter().map(|&d| -cfg.scale * d).collect();
    Ok(softmax_row(&logits))
}
