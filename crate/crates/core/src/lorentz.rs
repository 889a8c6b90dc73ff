//! The Lorentz (hyperboloid) model of hyperbolic space with curvature `c`.
//!
//! Points live on the upper sheet `{z : <z,z>_L = -1/c, z_time > 0}` of
//! Minkowski space. Coordinates are split into a time scalar and an `n`
//! dimensional space vector; when a flat `n + 1` vector is needed the time
//! coordinate comes first.
//!
//! Every constructor and map rebuilds the time coordinate from the space
//! coordinates, so the manifold constraint holds up to rounding of a single
//! square root no matter how much error the space part accumulated.

use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, Scalar};

/// Below this argument `sinh(t)/t` and friends switch to their Taylor series.
pub(crate) const SERIES_CUTOFF: f64 = 1e-6;

/// Positive curvature magnitude, the inverse squared radius.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Curvature<T>(T);

impl<T: Scalar> Curvature<T> {
    pub fn new(c: T) -> Result<Self> {
        if c.is_finite() && c > T::zero() {
            Ok(Self(c))
        } else {
            Err(Error::InvalidCurvature(c.as_f64()))
        }
    }

    pub fn one() -> Self {
        Self(T::one())
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// `sqrt(c)`, the inverse radius.
    #[inline]
    pub fn sqrt(self) -> T {
        self.0.sqrt()
    }
}

/// A point on the hyperboloid.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzPoint<T> {
    time: T,
    space: Vec<T>,
}

impl<T: Scalar> LorentzPoint<T> {
    /// Builds the point whose space component is `space`.
    pub fn from_space(space: Vec<T>, c: Curvature<T>) -> Self {
        let time = time_component(&space, c);
        Self { time, space }
    }

    /// Builds a point from flat `[time, space..]` coordinates, discarding the
    /// given time in favour of the one implied by the space part.
    pub fn from_ambient(coords: &[T], c: Curvature<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: coords.len(),
            });
        }
        Ok(Self::from_space(coords[1..].to_vec(), c))
    }

    pub fn origin(n: usize, c: Curvature<T>) -> Self {
        Self {
            time: T::one() / c.sqrt(),
            space: vec![T::zero(); n],
        }
    }

    #[inline]
    pub fn time(&self) -> T {
        self.time
    }

    #[inline]
    pub fn space(&self) -> &[T] {
        &self.space
    }

    pub fn into_space(self) -> Vec<T> {
        self.space
    }

    /// Intrinsic dimension `n`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.space.len()
    }

    /// Flat `[time, space..]` coordinates.
    pub fn coords(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.space.len() + 1);
        v.push(self.time);
        v.extend_from_slice(&self.space);
        v
    }

    /// Euclidean norm of the space component.
    pub fn space_norm(&self) -> T {
        dot(&self.space, &self.space).sqrt()
    }

    /// `|c <z,z>_L + 1|`, zero for an exact manifold point.
    pub fn constraint_residual(&self, c: Curvature<T>) -> T {
        let ip = dot(&self.space, &self.space) - self.time * self.time;
        (c.value() * ip + T::one()).abs()
    }
}

/// A vector in the tangent space of `base`, stored in ambient `n + 1`
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T> {
    base: LorentzPoint<T>,
    components: Vec<T>,
}

impl<T: Scalar> TangentVector<T> {
    /// The zero vector at `base`.
    pub fn zero(base: &LorentzPoint<T>) -> Self {
        Self {
            base: base.clone(),
            components: vec![T::zero(); base.dim() + 1],
        }
    }

    /// Caller guarantees `components` is tangent at `base`.
    pub(crate) fn from_parts(base: LorentzPoint<T>, components: Vec<T>) -> Self {
        Self { base, components }
    }

    pub fn base(&self) -> &LorentzPoint<T> {
        &self.base
    }

    pub fn components(&self) -> &[T] {
        &self.components
    }

    pub fn into_components(self) -> Vec<T> {
        self.components
    }

    /// Lorentz norm `sqrt(max(0, <v,v>_L))`.
    pub fn norm(&self) -> T {
        tangent_norm(self)
    }
}

/// `<x,y>_L = <x_space, y_space> - x_time y_time` for flat coordinates.
pub fn lorentz_inner<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_dim(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: x.len(),
        });
    }
    Ok(inner(x, y))
}

#[inline]
pub(crate) fn inner<T: Scalar>(x: &[T], y: &[T]) -> T {
    dot(&x[1..], &y[1..]) - x[0] * y[0]
}

#[inline]
fn inner_point_flat<T: Scalar>(z: &LorentzPoint<T>, v: &[T]) -> T {
    dot(&z.space, &v[1..]) - z.time * v[0]
}

/// The hyperboloid origin `[1/sqrt(c), 0, .., 0]`.
pub fn origin<T: Scalar>(n: usize, c: Curvature<T>) -> Result<LorentzPoint<T>> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    Ok(LorentzPoint::origin(n, c))
}

/// Time coordinate `sqrt(1/c + |space|^2)` that puts `space` on the manifold.
#[inline]
pub fn time_component<T: Scalar>(space: &[T], c: Curvature<T>) -> T {
    (c.value().recip() + dot(space, space)).sqrt()
}

/// `acosh(1 + delta)` for `delta >= 0`, accurate for tiny `delta`.
#[inline]
pub(crate) fn acosh1p<T: Scalar>(delta: T) -> T {
    (delta + (delta * (delta + T::two())).sqrt()).ln_1p()
}

/// `-c <x,y>_L - 1`, computed from the coordinate difference.
///
/// On the manifold `-c<x,y>_L - 1 = (c/2) <x-y, x-y>_L`; the right-hand side
/// keeps full relative precision when the two points nearly coincide, where
/// the left-hand side cancels catastrophically. Clamped at zero, which is the
/// acosh argument clamp.
#[inline]
pub(crate) fn separation<T: Scalar>(x_time: T, x_space: &[T], y_time: T, y_space: &[T], c: T) -> T {
    let ds: T = x_space
        .iter()
        .zip(y_space)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let dt = x_time - y_time;
    (T::half() * c * (ds - dt * dt)).max(T::zero())
}

/// Geodesic distance `(1/sqrt(c)) acosh(-c <x,y>_L)`.
pub fn lorentz_distance<T: Scalar>(
    x: &LorentzPoint<T>,
    y: &LorentzPoint<T>,
    c: Curvature<T>,
) -> Result<T> {
    check_dim(x.dim(), y.dim())?;
    Ok(distance_unchecked(x, y, c))
}

#[inline]
pub(crate) fn distance_unchecked<T: Scalar>(
    x: &LorentzPoint<T>,
    y: &LorentzPoint<T>,
    c: Curvature<T>,
) -> T {
    let delta = separation(x.time, &x.space, y.time, &y.space, c.value());
    acosh1p(delta) / c.sqrt()
}

/// Orthogonal projection of an ambient vector onto the tangent space at `z`:
/// `u + c z <z,u>_L`.
pub fn tangent_project<T: Scalar>(
    z: &LorentzPoint<T>,
    u: &[T],
    c: Curvature<T>,
) -> Result<TangentVector<T>> {
    check_dim(z.dim() + 1, u.len())?;
    Ok(TangentVector {
        base: z.clone(),
        components: project_flat(z, u, c),
    })
}

fn project_flat<T: Scalar>(z: &LorentzPoint<T>, u: &[T], c: Curvature<T>) -> Vec<T> {
    let s = c.value() * inner_point_flat(z, u);
    let mut v = u.to_vec();
    v[0] += s * z.time;
    for (vi, &zi) in v[1..].iter_mut().zip(&z.space) {
        *vi += s * zi;
    }
    v
}

/// `sqrt(max(0, <v,v>_L))`; the Lorentz product is positive semidefinite on
/// tangent spaces, so the clamp only absorbs rounding.
pub fn tangent_norm<T: Scalar>(v: &TangentVector<T>) -> T {
    inner(&v.components, &v.components).max(T::zero()).sqrt()
}

/// `sinh(t) / t`.
#[inline]
pub(crate) fn sinhc<T: Scalar>(t: T) -> T {
    if t.abs() < T::of(SERIES_CUTOFF) {
        let t2 = t * t;
        T::one() + t2 / T::of(6.0) + t2 * t2 / T::of(120.0)
    } else {
        t.sinh() / t
    }
}

/// Exponential map at `z`.
pub fn expmap<T: Scalar>(
    z: &LorentzPoint<T>,
    v: &TangentVector<T>,
    c: Curvature<T>,
) -> Result<LorentzPoint<T>> {
    check_dim(z.dim() + 1, v.components.len())?;
    let t = c.sqrt() * tangent_norm(v);
    let (ch, sc) = (t.cosh(), sinhc(t));
    let space = z
        .space
        .iter()
        .zip(&v.components[1..])
        .map(|(&zi, &vi)| ch * zi + sc * vi)
        .collect();
    Ok(LorentzPoint::from_space(space, c))
}

/// Logarithmic map at `z`: the tangent vector at `z` pointing at `x` whose
/// Lorentz norm is the geodesic distance, so that `expmap(z, logmap(z, x)) = x`.
pub fn logmap<T: Scalar>(
    z: &LorentzPoint<T>,
    x: &LorentzPoint<T>,
    c: Curvature<T>,
) -> Result<TangentVector<T>> {
    check_dim(z.dim(), x.dim())?;
    let d = distance_unchecked(z, x, c);
    // proj_z(x) = proj_z(x - z) since proj_z(z) = 0; the difference form
    // avoids cancellation for nearby points.
    let mut diff = Vec::with_capacity(z.dim() + 1);
    diff.push(x.time - z.time);
    diff.extend(x.space.iter().zip(&z.space).map(|(&a, &b)| a - b));
    let w = project_flat(z, &diff, c);
    let wn = inner(&w, &w).max(T::zero()).sqrt();
    if d == T::zero() || wn == T::zero() {
        return Ok(TangentVector::zero(z));
    }
    let scale = d / wn;
    let scaled: Vec<T> = w.into_iter().map(|wi| wi * scale).collect();
    Ok(TangentVector {
        base: z.clone(),
        components: project_flat(z, &scaled, c),
    })
}

/// Parallel transport of `v` from `src` to `dst` along their geodesic.
pub fn parallel_transport<T: Scalar>(
    src: &LorentzPoint<T>,
    dst: &LorentzPoint<T>,
    v: &TangentVector<T>,
    c: Curvature<T>,
) -> Result<TangentVector<T>> {
    check_dim(src.dim(), dst.dim())?;
    check_dim(src.dim() + 1, v.components.len())?;
    let components = transport_flat(src, dst, &v.components, c);
    Ok(TangentVector {
        base: dst.clone(),
        components,
    })
}

pub(crate) fn transport_flat<T: Scalar>(
    src: &LorentzPoint<T>,
    dst: &LorentzPoint<T>,
    v: &[T],
    c: Curvature<T>,
) -> Vec<T> {
    let cv = c.value();
    let num = cv * inner_point_flat(dst, v);
    // 1 - c<src,dst>_L = 2 + (c/2)<src-dst, src-dst>_L
    let den = T::two() + separation(src.time, &src.space, dst.time, &dst.space, cv);
    let s = num / den;
    let mut out = v.to_vec();
    out[0] += s * (src.time + dst.time);
    for (o, (&a, &b)) in out[1..].iter_mut().zip(src.space.iter().zip(&dst.space)) {
        *o += s * (a + b);
    }
    out
}
