//! Lorentz hyperplanes and the distance-based logits built on them.
//!
//! A hyperplane is stored by its signed offset `a` from the origin and an
//! orientation `o`. The normal `w = [sinh(a√c)|o|, cosh(a√c) o]` always has
//! `<w,w>_L = |o|^2 > 0`, so no constraint has to be enforced while training.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::lorentz::{Curvature, LorentzPoint};
use crate::scalar::{dot, norm, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane<T> {
    pub offset: T,
    pub orientation: Vec<T>,
}

impl<T: Scalar> Hyperplane<T> {
    pub fn new(offset: T, orientation: Vec<T>) -> Self {
        Self {
            offset,
            orientation,
        }
    }

    /// Zero offset, orientation uniform on the unit sphere.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let o: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let len = o.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 1e-12 {
                return Self {
                    offset: T::zero(),
                    orientation: o.into_iter().map(|x| T::of(x / len)).collect(),
                };
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.orientation.len()
    }

    fn orientation_norm(&self) -> Result<T> {
        let n = norm(&self.orientation);
        if n > T::zero() && n.is_finite() {
            Ok(n)
        } else {
            Err(Error::DegenerateHyperplane)
        }
    }
}

/// Per-class hyperplanes for multinomial classification.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T> {
    pub hyperplanes: Vec<Hyperplane<T>>,
}

impl<T: Scalar> ClassifierParams<T> {
    pub fn new(hyperplanes: Vec<Hyperplane<T>>) -> Result<Self> {
        if let Some(first) = hyperplanes.first() {
            for h in &hyperplanes {
                check_dim(first.dim(), h.dim())?;
            }
        }
        Ok(Self { hyperplanes })
    }

    pub fn random<R: Rng + ?Sized>(classes: usize, n: usize, rng: &mut R) -> Self {
        Self {
            hyperplanes: (0..classes).map(|_| Hyperplane::random(n, rng)).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.hyperplanes.len()
    }
}

/// Normal vector `w` in flat `[time, space..]` coordinates.
pub fn hyperplane_vector<T: Scalar>(h: &Hyperplane<T>, c: Curvature<T>) -> Result<Vec<T>> {
    let on = h.orientation_norm()?;
    let ak = h.offset * c.sqrt();
    let mut w = Vec::with_capacity(h.dim() + 1);
    w.push(ak.sinh() * on);
    w.extend(h.orientation.iter().map(|&o| ak.cosh() * o));
    Ok(w)
}

/// Unsigned distance from `z` to the hyperplane.
pub fn hyperplane_distance<T: Scalar>(
    z: &LorentzPoint<T>,
    h: &Hyperplane<T>,
    c: Curvature<T>,
) -> Result<T> {
    let on = h.orientation_norm()?;
    Ok(logit(z, h, c)?.abs() / on)
}

/// Signed logit `sign(<w,z>_L) |w|_L d(z, H_w)`, evaluated as
/// `(|o|/√c) asinh(√c <w,z>_L / |o|)` which is smooth through the hyperplane.
pub fn logit<T: Scalar>(z: &LorentzPoint<T>, h: &Hyperplane<T>, c: Curvature<T>) -> Result<T> {
    check_dim(h.dim(), z.dim())?;
    let on = h.orientation_norm()?;
    let k = c.sqrt();
    let ak = h.offset * k;
    let q = ak.cosh() * dot(&h.orientation, z.space()) - ak.sinh() * on * z.time();
    Ok(on / k * (k * q / on).asinh())
}

/// Logits for every class.
pub fn logits_all<T: Scalar>(
    z: &LorentzPoint<T>,
    params: &ClassifierParams<T>,
    c: Curvature<T>,
) -> Result<Vec<T>> {
    params.hyperplanes.iter().map(|h| logit(z, h, c)).collect()
}

/// Index of the largest logit, lowest index on ties.
pub fn predict<T: Scalar>(logits: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &l) in logits.iter().enumerate() {
        match best {
            Some((_, b)) if l <= b => {}
            _ => best = Some((i, l)),
        }
    }
    best.map(|(i, _)| i)
}

/// A logit together with its partial derivatives.
///
/// `d_time`/`d_space` treat the point's coordinates as independent ambient
/// variables and `d_curvature` holds the point fixed.
#[derive(Clone, Debug)]
pub(crate) struct LogitParts<T> {
    pub value: T,
    pub d_time: T,
    pub d_space: Vec<T>,
    pub d_offset: T,
    pub d_orientation: Vec<T>,
    pub d_curvature: T,
}

pub(crate) fn logit_with_grad<T: Scalar>(
    z_time: T,
    z_space: &[T],
    h: &Hyperplane<T>,
    c: Curvature<T>,
) -> Result<LogitParts<T>> {
    check_dim(h.dim(), z_space.len())?;
    let on = h.orientation_norm()?;
    let k = c.sqrt();
    let ak = h.offset * k;
    let (ch, sh) = (ak.cosh(), ak.sinh());
    let oz = dot(&h.orientation, z_space);
    let q = ch * oz - sh * on * z_time;
    let x = k * q / on;
    let ash = x.asinh();
    let value = on / k * ash;
    let r = (T::one() + x * x).sqrt().recip();

    let d_space = h.orientation.iter().map(|&o| r * ch * o).collect();
    let d_time = -r * sh * on;
    let dq_dak = sh * oz - ch * on * z_time;
    let d_offset = r * k * dq_dak;
    let dl_dn = ash / k - r * q / on;
    let d_orientation = h
        .orientation
        .iter()
        .zip(z_space)
        .map(|(&o, &zs)| r * (ch * zs - sh * z_time * o / on) + dl_dn * o / on)
        .collect();
    let dl_dk = -on / (k * k) * ash + r * q / k + r * h.offset * dq_dak;
    let d_curvature = dl_dk / (T::two() * k);
    Ok(LogitParts {
        value,
        d_time,
        d_space,
        d_offset,
        d_orientation,
        d_curvature,
    })
}
