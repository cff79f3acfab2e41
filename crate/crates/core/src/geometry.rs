//! Poincaré-ball primitives: membership, projection, distance and their gradients.
//!
//! The ball of curvature `c` is `{x : c‖x‖² < 1}`. Points enter it through
//! [`project`], which rescales anything beyond radius `(1 − ε)/√c` back onto
//! that radius. Distances take their own curvature argument so that callers
//! can project with one curvature and measure with another.

use std::fmt;

use thiserror::Error;

use crate::scalar::{all_finite, dist_sq, norm, norm_sq, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("curvature must be finite and positive, got {0}")]
    InvalidCurvature(f64),
    #[error("invalid stability policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("point {role} lies on or outside the ball (1 - c|{role}|^2 = {margin:e})")]
    OutsideBall { role: PointRole, margin: f64 },
}

/// Which argument of a two-point operation an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    X,
    Y,
}

impl fmt::Display for PointRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointRole::X => "x",
            PointRole::Y => "y",
        })
    }
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Strength `c > 0` of the negative curvature `−c`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Curvature<T>(T);

impl<T: Scalar> Curvature<T> {
    pub fn new(c: T) -> Result<Self, GeometryError> {
        if c.is_finite() && c > T::zero() {
            Ok(Self(c))
        } else {
            Err(GeometryError::InvalidCurvature(to_f64(c)))
        }
    }

    /// The standard ball, `c = 1`.
    pub fn unit() -> Self {
        Self(T::one())
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// Ball radius `1/√c`.
    #[inline]
    pub fn radius(self) -> T {
        self.0.sqrt().recip()
    }
}

/// Numerical guards applied by projection and distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPolicy<T> {
    /// Projected points stay within `(1 − eps_boundary)/√c`.
    pub eps_boundary: T,
    /// Norm lower bound in the projection factor.
    pub delta_norm: T,
    /// arcosh arguments are clipped to at least `1 + arcosh_floor`.
    pub arcosh_floor: T,
}

impl<T: Scalar> Default for StabilityPolicy<T> {
    fn default() -> Self {
        Self {
            eps_boundary: T::lit(1e-5),
            delta_norm: T::lit(1e-15),
            // 1e-15 is below f32 resolution; fall back to machine epsilon there.
            arcosh_floor: T::lit(1e-15).max(T::epsilon()),
        }
    }
}

impl<T: Scalar> StabilityPolicy<T> {
    pub fn new(eps_boundary: T, delta_norm: T, arcosh_floor: T) -> Result<Self, GeometryError> {
        let p = Self {
            eps_boundary,
            delta_norm,
            arcosh_floor,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.eps_boundary > T::zero() && self.eps_boundary < T::one()) {
            return Err(GeometryError::InvalidPolicy("eps_boundary must lie in (0, 1)"));
        }
        if !(self.delta_norm > T::zero() && self.delta_norm.is_finite()) {
            return Err(GeometryError::InvalidPolicy("delta_norm must be positive"));
        }
        if !(self.arcosh_floor >= T::zero() && self.arcosh_floor.is_finite()) {
            return Err(GeometryError::InvalidPolicy("arcosh_floor must be nonnegative"));
        }
        Ok(())
    }

    /// Largest norm a projected point may have in the ball of curvature `c`.
    #[inline]
    pub fn max_norm(&self, c: Curvature<T>) -> T {
        (T::one() - self.eps_boundary) / c.value().sqrt()
    }
}

/// A vector strictly inside the ball of its curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint<T> {
    coords: Vec<T>,
    curvature: Curvature<T>,
}

impl<T: Scalar> BallPoint<T> {
    /// Wraps `coords` after checking `c‖coords‖² < 1`.
    pub fn new(coords: Vec<T>, curvature: Curvature<T>) -> Result<Self, GeometryError> {
        if !all_finite(&coords) {
            return Err(GeometryError::NonFinite("ball point"));
        }
        let margin = T::one() - curvature.value() * norm_sq(&coords);
        if margin <= T::zero() {
            return Err(GeometryError::OutsideBall {
                role: PointRole::X,
                margin: to_f64(margin),
            });
        }
        Ok(Self { coords, curvature })
    }

    /// The origin of a `dim`-dimensional ball.
    pub fn origin(dim: usize, curvature: Curvature<T>) -> Self {
        Self {
            coords: vec![T::zero(); dim],
            curvature,
        }
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    #[inline]
    pub fn curvature(&self) -> Curvature<T> {
        self.curvature
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }
}

/// Inverse hyperbolic cosine with the lower-bound clip `z ← max(z, 1 + floor)`.
pub fn arcosh<T: Scalar>(z: T, policy: &StabilityPolicy<T>) -> Result<T, GeometryError> {
    if !z.is_finite() {
        return Err(GeometryError::NonFinite("arcosh argument"));
    }
    let clipped = z.max(T::one() + policy.arcosh_floor);
    Ok(arcosh_excess(clipped - T::one()))
}

/// `arcosh(1 + t)` for `t ≥ 0`, evaluated without cancellation near `t = 0`
/// and without overflow for huge `t`.
#[inline]
fn arcosh_excess<T: Scalar>(t: T) -> T {
    if t > T::epsilon().recip() {
        // sqrt(z² − 1) == z to working precision.
        (T::one() + t).ln() + T::LN_2()
    } else {
        (t + (t * (t + T::lit(2.0))).sqrt()).ln_1p()
    }
}

/// Rescales `x` into the ball: `x · min(1, (1 − ε) / (√c · max(‖x‖, δ)))`.
///
/// The rescaled output is guaranteed to satisfy `‖y‖ ≤ (1 − ε)/√c` after
/// rounding, so projecting it again returns it unchanged.
pub fn project<T: Scalar>(
    x: &[T],
    c: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<BallPoint<T>, GeometryError> {
    if !all_finite(x) {
        return Err(GeometryError::NonFinite("projection input"));
    }
    let max_norm = policy.max_norm(c);
    let n = norm(x);
    let factor = max_norm / n.max(policy.delta_norm);
    if factor >= T::one() {
        return Ok(BallPoint {
            coords: x.to_vec(),
            curvature: c,
        });
    }
    let sqrt_c = c.value().sqrt();
    let bound = T::one() - policy.eps_boundary;
    let mut scale = factor;
    loop {
        let y: Vec<T> = x.iter().map(|&v| v * scale).collect();
        let ny = norm(&y);
        if ny <= max_norm && sqrt_c * ny <= bound {
            return Ok(BallPoint {
                coords: y,
                curvature: c,
            });
        }
        scale *= T::one() - T::epsilon();
    }
}

/// Vector-Jacobian product of [`project`]: maps `grad_out = ∂L/∂proj(x)` to `∂L/∂x`.
///
/// Inside the radius the projection is the identity. Outside it is
/// `r·x/‖x‖`, whose Jacobian is `(r/‖x‖)(I − x̂x̂ᵀ)`.
pub fn project_backward<T: Scalar>(
    x: &[T],
    grad_out: &[T],
    c: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Vec<T> {
    debug_assert_eq!(x.len(), grad_out.len());
    let max_norm = policy.max_norm(c);
    let n = norm(x);
    let factor = max_norm / n.max(policy.delta_norm);
    if factor >= T::one() {
        return grad_out.to_vec();
    }
    let radial = crate::scalar::dot(x, grad_out) / (n * n);
    x.iter()
        .zip(grad_out)
        .map(|(&xi, &gi)| factor * (gi - radial * xi))
        .collect()
}

/// Intermediate quantities of the distance formula, shared with the gradient.
struct DistanceParts<T> {
    alpha: T,
    beta: T,
    diff_sq: T,
    /// `z − 1 = 2c‖x−y‖² / (αβ)`
    excess: T,
}

fn distance_parts<T: Scalar>(x: &[T], y: &[T], c_dist: Curvature<T>) -> Result<DistanceParts<T>, GeometryError> {
    if x.len() != y.len() {
        return Err(GeometryError::DimensionMismatch(x.len(), y.len()));
    }
    let c = c_dist.value();
    let alpha = T::one() - c * norm_sq(x);
    if !(alpha > T::zero()) {
        return Err(GeometryError::OutsideBall {
            role: PointRole::X,
            margin: to_f64(alpha),
        });
    }
    let beta = T::one() - c * norm_sq(y);
    if !(beta > T::zero()) {
        return Err(GeometryError::OutsideBall {
            role: PointRole::Y,
            margin: to_f64(beta),
        });
    }
    let diff_sq = dist_sq(x, y);
    let excess = T::lit(2.0) * c * diff_sq / (alpha * beta);
    Ok(DistanceParts {
        alpha,
        beta,
        diff_sq,
        excess,
    })
}

/// Distance on raw slices; both must already lie inside the `c_dist` ball.
pub fn hyperbolic_distance_slices<T: Scalar>(
    x: &[T],
    y: &[T],
    c_dist: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<T, GeometryError> {
    let parts = distance_parts(x, y, c_dist)?;
    Ok(arcosh_excess(parts.excess.max(policy.arcosh_floor)))
}

/// `arcosh(1 + 2c‖x−y‖² / ((1 − c‖x‖²)(1 − c‖y‖²)))` with `c = c_dist`.
pub fn hyperbolic_distance<T: Scalar>(
    x: &BallPoint<T>,
    y: &BallPoint<T>,
    c_dist: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<T, GeometryError> {
    hyperbolic_distance_slices(x.coords(), y.coords(), c_dist, policy)
}

/// Gradients of the distance with respect to both arguments, on raw slices.
pub fn distance_gradient_slices<T: Scalar>(
    x: &[T],
    y: &[T],
    c_dist: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<(Vec<T>, Vec<T>), GeometryError> {
    let parts = distance_parts(x, y, c_dist)?;
    let dim = x.len();
    if parts.excess <= policy.arcosh_floor {
        return Ok((vec![T::zero(); dim], vec![T::zero(); dim]));
    }
    let c = c_dist.value();
    let q = parts.excess;
    // d arcosh(1+q)/dq = 1/sqrt(q(q+2))
    let outer = (q * (q + T::lit(2.0))).sqrt().recip();
    let common = outer * T::lit(4.0) * c / (parts.alpha * parts.beta);
    let kx = c * parts.diff_sq / parts.alpha;
    let ky = c * parts.diff_sq / parts.beta;
    let mut gx = Vec::with_capacity(dim);
    let mut gy = Vec::with_capacity(dim);
    for (&xi, &yi) in x.iter().zip(y) {
        let d = xi - yi;
        gx.push(common * (d + kx * xi));
        gy.push(common * (-d + ky * yi));
    }
    Ok((gx, gy))
}

/// Returns `(∂dist/∂x, ∂dist/∂y)`. Coincident points (argument within the
/// arcosh floor) give zero vectors.
pub fn distance_gradient<T: Scalar>(
    x: &BallPoint<T>,
    y: &BallPoint<T>,
    c_dist: Curvature<T>,
    policy: &StabilityPolicy<T>,
) -> Result<(Vec<T>, Vec<T>), GeometryError> {
    distance_gradient_slices(x.coords(), y.coords(), c_dist, policy)
}
