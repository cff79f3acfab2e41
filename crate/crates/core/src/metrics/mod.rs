//! Verification scoring: EER and minDCF over target/non-target trial scores,
//! plus the cosine and hyperbolic pairwise scoring backends.
//!
//! Both metrics sweep the same threshold set: `−∞`, the midpoints between
//! adjacent distinct scores, and `+∞`. A trial is accepted when its score is
//! `≥ t`, so `FRR(t) = #{target < t}/n_t` and `FAR(t) = #{nontarget ≥ t}/n_n`.

mod io;

pub use io::{
    join_trials, parse_scores, parse_trials, read_scores, read_trials, write_scores, write_trials,
    ScoreTable, Trial,
};

use thiserror::Error;

use crate::geometry::{hyperbolic_distance_slices, project, Curvature, GeometryError, StabilityPolicy};
use crate::scalar::{dot, norm, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("non-finite score in {0} list")]
    NonFinite(&'static str),
    #[error("invalid DCF parameters: {0}")]
    InvalidParams(String),
    #[error("zero-norm vector cannot be cosine scored")]
    Degenerate,
    #[error("vector lengths differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("no score for trial {enroll} {test}")]
    MissingScore { enroll: String, test: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Scores of same-class (target) and cross-class (non-target) trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores<T> {
    pub target_scores: Vec<T>,
    pub nontarget_scores: Vec<T>,
}

impl<T: Scalar> TrialScores<T> {
    pub fn new(target_scores: Vec<T>, nontarget_scores: Vec<T>) -> Result<Self, MetricsError> {
        let s = Self {
            target_scores,
            nontarget_scores,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.target_scores.is_empty() {
            return Err(MetricsError::Empty("target"));
        }
        if self.nontarget_scores.is_empty() {
            return Err(MetricsError::Empty("nontarget"));
        }
        if !self.target_scores.iter().all(|s| s.is_finite()) {
            return Err(MetricsError::NonFinite("target"));
        }
        if !self.nontarget_scores.iter().all(|s| s.is_finite()) {
            return Err(MetricsError::NonFinite("nontarget"));
        }
        Ok(())
    }
}

/// Detection cost parameters. Defaults: `p_target = 0.05`, unit costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams<T> {
    pub p_target: T,
    pub c_miss: T,
    pub c_fa: T,
}

impl<T: Scalar> Default for DcfParams<T> {
    fn default() -> Self {
        Self {
            p_target: T::lit(0.05),
            c_miss: T::one(),
            c_fa: T::one(),
        }
    }
}

impl<T: Scalar> DcfParams<T> {
    pub fn with_p_target(p_target: T) -> Self {
        Self {
            p_target,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.p_target > T::zero() && self.p_target < T::one()) {
            return Err(MetricsError::InvalidParams(format!("p_target must lie in (0, 1), got {}", self.p_target)));
        }
        if !(self.c_miss > T::zero() && self.c_miss.is_finite() && self.c_fa > T::zero() && self.c_fa.is_finite()) {
            return Err(MetricsError::InvalidParams("costs must be positive".into()));
        }
        Ok(())
    }

    /// Normalized cost at the given miss/false-alarm rates.
    pub fn normalized_cost(&self, p_miss: T, p_fa: T) -> T {
        let one = T::one();
        let raw = self.c_miss * p_miss * self.p_target + self.c_fa * p_fa * (one - self.p_target);
        raw / (self.c_miss * self.p_target).min(self.c_fa * (one - self.p_target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult<T> {
    pub eer: T,
    pub threshold: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfResult<T> {
    pub min_dcf: T,
    pub threshold: T,
}

/// One candidate threshold with its error counts.
#[derive(Debug, Clone, Copy)]
struct OperatingPoint<T> {
    threshold: T,
    misses: usize,
    false_alarms: usize,
}

/// All operating points in ascending threshold order.
fn sweep<T: Scalar>(scores: &TrialScores<T>) -> Vec<OperatingPoint<T>> {
    let mut tgt = scores.target_scores.clone();
    let mut non = scores.nontarget_scores.clone();
    let by_value = |a: &T, b: &T| a.partial_cmp(b).expect("finite scores");
    tgt.sort_by(by_value);
    non.sort_by(by_value);
    let mut values: Vec<T> = tgt.iter().chain(&non).copied().collect();
    values.sort_by(by_value);
    values.dedup();

    let half = T::lit(0.5);
    let mut points = Vec::with_capacity(values.len() + 1);
    points.push(OperatingPoint {
        threshold: T::neg_infinity(),
        misses: 0,
        false_alarms: non.len(),
    });
    let (mut ti, mut ni) = (0, 0);
    for w in values.windows(2) {
        // everything ≤ w[0] is now below the threshold
        while ti < tgt.len() && tgt[ti] <= w[0] {
            ti += 1;
        }
        while ni < non.len() && non[ni] <= w[0] {
            ni += 1;
        }
        points.push(OperatingPoint {
            threshold: w[0] * half + w[1] * half,
            misses: ti,
            false_alarms: non.len() - ni,
        });
    }
    points.push(OperatingPoint {
        threshold: T::infinity(),
        misses: tgt.len(),
        false_alarms: 0,
    });
    points
}

/// Equal error rate: `(FAR + FRR)/2` at the swept threshold minimizing `|FAR − FRR|`
/// (first such threshold in ascending order).
///
/// Gaps are compared in exact integer arithmetic over the common denominator
/// `2·n_t·n_n`, and the rate is one division of the two counts, so the result
/// is the correctly rounded rational value.
pub fn compute_eer<T: Scalar>(scores: &TrialScores<T>) -> Result<EerResult<T>, MetricsError> {
    scores.validate()?;
    let nt = scores.target_scores.len() as u128;
    let nn = scores.nontarget_scores.len() as u128;
    let mut best: Option<(u128, u128, T)> = None;
    for p in sweep(scores) {
        let frr = p.misses as u128 * nn;
        let far = p.false_alarms as u128 * nt;
        let gap = frr.abs_diff(far);
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, frr + far, p.threshold));
        }
    }
    let (_, sum, threshold) = best.expect("sweep is never empty");
    let to_t = |v: u128| T::from_u128(v).expect("count fits the scalar range");
    Ok(EerResult {
        eer: to_t(sum) / to_t(2 * nt * nn),
        threshold,
    })
}

/// Minimum normalized detection cost over the swept thresholds.
pub fn compute_min_dcf<T: Scalar>(scores: &TrialScores<T>, params: &DcfParams<T>) -> Result<DcfResult<T>, MetricsError> {
    scores.validate()?;
    params.validate()?;
    let nt = T::from_count(scores.target_scores.len());
    let nn = T::from_count(scores.nontarget_scores.len());
    let mut best: Option<DcfResult<T>> = None;
    for p in sweep(scores) {
        let cost = params.normalized_cost(T::from_count(p.misses) / nt, T::from_count(p.false_alarms) / nn);
        if best.as_ref().is_none_or(|b| cost < b.min_dcf) {
            best = Some(DcfResult {
                min_dcf: cost,
                threshold: p.threshold,
            });
        }
    }
    Ok(best.expect("sweep is never empty"))
}

/// Normalized DCF at a fixed threshold.
pub fn dcf_at<T: Scalar>(scores: &TrialScores<T>, params: &DcfParams<T>, threshold: T) -> Result<T, MetricsError> {
    scores.validate()?;
    params.validate()?;
    let misses = scores.target_scores.iter().filter(|&&s| s < threshold).count();
    let fas = scores.nontarget_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(params.normalized_cost(
        T::from_count(misses) / T::from_count(scores.target_scores.len()),
        T::from_count(fas) / T::from_count(scores.nontarget_scores.len()),
    ))
}

/// Cosine similarity `a·b/(‖a‖‖b‖)`.
pub fn score_cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na > T::zero() && nb > T::zero()) {
        return Err(MetricsError::Degenerate);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Negative hyperbolic distance between the projections of `a` and `b`.
///
/// Distances are measured in the unit ball, or in the projection ball when
/// that is larger (`c < 1`), matching the hyperbolic losses.
pub fn score_hyperbolic<T: Scalar>(
    a: &[T],
    b: &[T],
    c: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<T, MetricsError> {
    let pa = project(a, c, policy)?;
    let pb = project(b, c, policy)?;
    let c_dist = if c.value() < T::one() { c } else { Curvature::unit() };
    if pa.coords() == pb.coords() {
        return Ok(T::zero());
    }
    Ok(-hyperbolic_distance_slices(pa.coords(), pb.coords(), c_dist, policy)?)
}
