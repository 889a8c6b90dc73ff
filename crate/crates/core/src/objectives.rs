//! Training objectives on hyperboloid embeddings.
//!
//! * [`hsup_loss`]: supervised contrastive loss with negative geodesic
//!   distance as the similarity, summed over anchors.
//! * [`uncertainty_loss`]: binary logistic loss separating in-distribution
//!   embeddings from synthetic outliers with a single Lorentz hyperplane.
//! * [`cross_entropy_loss`]: softmax cross-entropy over per-class hyperplane
//!   logits, used by the cross-entropy baseline.
//!
//! Gradients are taken with respect to the *space* coordinates of each
//! embedding and the curvature `c`, with the time coordinate treated as the
//! dependent quantity `sqrt(1/c + |space|^2)`. This is the parametrization the
//! projection head produces, so these gradients chain directly into it.

use crate::classifier::{logit_with_grad, ClassifierParams, Hyperplane};
use crate::error::{check_dim, Error, Result};
use crate::lorentz::{acosh1p, separation, Curvature, LorentzPoint};
use crate::scalar::{log_sum_exp, sigmoid, softplus, Scalar};

/// Default softmax temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
/// Default weight of the outlier term.
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings<T> {
    pub temperature: T,
    pub alpha: T,
}

impl<T: Scalar> Default for LossSettings<T> {
    fn default() -> Self {
        Self {
            temperature: T::of(DEFAULT_TEMPERATURE),
            alpha: T::of(DEFAULT_ALPHA),
        }
    }
}

impl<T: Scalar> LossSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > T::zero() && self.temperature.is_finite()) {
            return Err(Error::ConfigValue(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.alpha >= T::zero() && self.alpha.is_finite()) {
            return Err(Error::ConfigValue(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Labeled embeddings for the contrastive loss. Every anchor must have at
/// least one other entry with the same label.
#[derive(Clone, Debug)]
pub struct ContrastiveBatch<T> {
    embeddings: Vec<LorentzPoint<T>>,
    labels: Vec<usize>,
    view_of: Option<Vec<usize>>,
}

impl<T: Scalar> ContrastiveBatch<T> {
    pub fn new(embeddings: Vec<LorentzPoint<T>>, labels: Vec<usize>) -> Result<Self> {
        check_dim(embeddings.len(), labels.len())?;
        if embeddings.len() < 2 {
            return Err(Error::InvalidInput(
                "contrastive batch needs at least two entries".into(),
            ));
        }
        let n = embeddings[0].dim();
        for e in &embeddings {
            check_dim(n, e.dim())?;
        }
        for (i, &y) in labels.iter().enumerate() {
            let has_positive = labels.iter().enumerate().any(|(j, &yj)| j != i && yj == y);
            if !has_positive {
                return Err(Error::EmptyPositives { anchor: i });
            }
        }
        Ok(Self {
            embeddings,
            labels,
            view_of: None,
        })
    }

    /// Records which source sample each entry is a view of.
    pub fn with_views(mut self, view_of: Vec<usize>) -> Result<Self> {
        check_dim(self.embeddings.len(), view_of.len())?;
        self.view_of = Some(view_of);
        Ok(self)
    }

    pub fn embeddings(&self) -> &[LorentzPoint<T>] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn view_of(&self) -> Option<&[usize]> {
        self.view_of.as_deref()
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Gradient with respect to embedding space coordinates and curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingGrad<T> {
    pub space: Vec<Vec<T>>,
    pub curvature: T,
}

impl<T: Scalar> EmbeddingGrad<T> {
    pub fn zeros(count: usize, n: usize) -> Self {
        Self {
            space: vec![vec![T::zero(); n]; count],
            curvature: T::zero(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.space.iter_mut().zip(&other.space) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        self.curvature += scale * other.curvature;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneGrad<T> {
    pub offset: T,
    pub orientation: Vec<T>,
}

impl<T: Scalar> HyperplaneGrad<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            offset: T::zero(),
            orientation: vec![T::zero(); n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct UncertaintyGrad<T> {
    pub id: EmbeddingGrad<T>,
    pub outliers: EmbeddingGrad<T>,
    pub hyperplane: HyperplaneGrad<T>,
}

#[derive(Clone, Debug)]
pub struct CrossEntropyGrad<T> {
    pub embeddings: EmbeddingGrad<T>,
    pub hyperplanes: Vec<HyperplaneGrad<T>>,
}

/// Moves an ambient time-coordinate gradient onto the space coordinates and
/// the curvature, using `time = sqrt(1/c + |space|^2)`.
#[inline]
fn fold_time<T: Scalar>(
    point: &LorentzPoint<T>,
    g_time: T,
    g_space: &mut [T],
    g_curv: &mut T,
    c: T,
) {
    let t = point.time();
    for (g, &s) in g_space.iter_mut().zip(point.space()) {
        *g += g_time * s / t;
    }
    *g_curv -= g_time / (T::two() * c * c * t);
}

/// Pairwise geodesic distances, row-major, zero diagonal.
fn pairwise_distances<T: Scalar>(points: &[LorentzPoint<T>], c: Curvature<T>) -> Vec<T> {
    let m = points.len();
    let k = c.sqrt();
    let mut d = vec![T::zero(); m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let (x, y) = (&points[i], &points[j]);
            let delta = separation(x.time(), x.space(), y.time(), y.space(), c.value());
            let v = acosh1p(delta) / k;
            d[i * m + j] = v;
            d[j * m + i] = v;
        }
    }
    d
}

/// Per-anchor contrastive terms and, optionally, `dL/d d_ij` accumulated
/// over the symmetric distance matrix.
fn hsup_terms<T: Scalar>(
    labels: &[usize],
    dist: &[T],
    tau: T,
    want_grad: bool,
) -> (Vec<T>, Vec<T>) {
    let m = labels.len();
    let mut terms = Vec::with_capacity(m);
    let mut gdist = if want_grad {
        vec![T::zero(); m * m]
    } else {
        Vec::new()
    };
    let mut logits = Vec::with_capacity(m - 1);
    for i in 0..m {
        logits.clear();
        let mut pos_sum = T::zero();
        let mut pos_count = 0usize;
        for j in (0..m).filter(|&j| j != i) {
            let l = -dist[i * m + j] / tau;
            logits.push(l);
            if labels[j] == labels[i] {
                pos_sum += l;
                pos_count += 1;
            }
        }
        let lse = log_sum_exp(&logits);
        let inv_p = T::one() / T::of_usize(pos_count);
        terms.push(lse - pos_sum * inv_p);
        if want_grad {
            for j in (0..m).filter(|&j| j != i) {
                let l = -dist[i * m + j] / tau;
                let soft = (l - lse).exp();
                let pos = if labels[j] == labels[i] {
                    inv_p
                } else {
                    T::zero()
                };
                gdist[i * m + j] += (pos - soft) / tau;
            }
        }
    }
    (terms, gdist)
}

/// Supervised contrastive loss with negative geodesic distance as similarity,
/// summed over all anchors.
pub fn hsup_loss<T: Scalar>(batch: &ContrastiveBatch<T>, tau: T, c: Curvature<T>) -> Result<T> {
    check_temperature(tau)?;
    let dist = pairwise_distances(&batch.embeddings, c);
    let (terms, _) = hsup_terms(&batch.labels, &dist, tau, false);
    Ok(terms.into_iter().sum())
}

/// [`hsup_loss`] and its gradient.
pub fn hsup_loss_grad<T: Scalar>(
    batch: &ContrastiveBatch<T>,
    tau: T,
    c: Curvature<T>,
) -> Result<(T, EmbeddingGrad<T>)> {
    check_temperature(tau)?;
    let pts = &batch.embeddings;
    let m = pts.len();
    let n = pts[0].dim();
    let cv = c.value();
    let k = c.sqrt();
    let dist = pairwise_distances(pts, c);
    let (terms, gdist) = hsup_terms(&batch.labels, &dist, tau, true);
    let loss = terms.into_iter().sum();

    let mut g_time = vec![T::zero(); m];
    let mut grad = EmbeddingGrad::zeros(m, n);
    for i in 0..m {
        for j in (i + 1)..m {
            let g = gdist[i * m + j] + gdist[j * m + i];
            if g == T::zero() {
                continue;
            }
            let (x, y) = (&pts[i], &pts[j]);
            let delta = separation(x.time(), x.space(), y.time(), y.space(), cv);
            if delta <= T::zero() {
                // coincident points: zero subgradient of the distance cone
                continue;
            }
            let root = (delta * (delta + T::two())).sqrt();
            let a = acosh1p(delta);
            // d = a / k with delta = (c/2) <x-y, x-y>_L
            let s = g * cv / (k * root);
            let dt = x.time() - y.time();
            g_time[i] -= s * dt;
            g_time[j] += s * dt;
            let (gi, gj) = split_pair(&mut grad.space, i, j);
            for ((gxi, gyj), (&xs, &ys)) in gi
                .iter_mut()
                .zip(gj.iter_mut())
                .zip(x.space().iter().zip(y.space()))
            {
                let v = s * (xs - ys);
                *gxi += v;
                *gyj -= v;
            }
            grad.curvature += g * (delta / (cv * k * root) - a / (T::two() * cv * k));
        }
    }
    for (i, p) in pts.iter().enumerate() {
        fold_time(p, g_time[i], &mut grad.space[i], &mut grad.curvature, cv);
    }
    Ok((loss, grad))
}

fn split_pair<V>(v: &mut [V], i: usize, j: usize) -> (&mut V, &mut V) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

fn check_temperature<T: Scalar>(tau: T) -> Result<()> {
    if tau > T::zero() && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Binary logistic loss: mean over outliers of `-log σ(-ℓ(v))` plus mean over
/// in-distribution embeddings of `-log σ(ℓ(z))`.
pub fn uncertainty_loss<T: Scalar>(
    id_embeddings: &[LorentzPoint<T>],
    outliers: &[LorentzPoint<T>],
    h: &Hyperplane<T>,
    c: Curvature<T>,
) -> Result<T> {
    check_uncertainty_inputs(id_embeddings, outliers)?;
    let id_term = mean_by(id_embeddings, |z| {
        crate::classifier::logit(z, h, c).map(|l| softplus(-l))
    })?;
    let out_term = mean_by(outliers, |v| {
        crate::classifier::logit(v, h, c).map(softplus)
    })?;
    Ok(id_term + out_term)
}

fn check_uncertainty_inputs<T: Scalar>(
    id: &[LorentzPoint<T>],
    outliers: &[LorentzPoint<T>],
) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidInput("no in-distribution embeddings".into()));
    }
    if outliers.is_empty() {
        return Err(Error::InvalidInput("no synthetic outliers".into()));
    }
    Ok(())
}

fn mean_by<T: Scalar>(
    pts: &[LorentzPoint<T>],
    f: impl Fn(&LorentzPoint<T>) -> Result<T>,
) -> Result<T> {
    let mut s = T::zero();
    for p in pts {
        s += f(p)?;
    }
    Ok(s / T::of_usize(pts.len()))
}

/// [`uncertainty_loss`] and its gradient with respect to both point sets, the
/// hyperplane, and the curvature.
pub fn uncertainty_loss_grad<T: Scalar>(
    id_embeddings: &[LorentzPoint<T>],
    outliers: &[LorentzPoint<T>],
    h: &Hyperplane<T>,
    c: Curvature<T>,
) -> Result<(T, UncertaintyGrad<T>)> {
    check_uncertainty_inputs(id_embeddings, outliers)?;
    let n = h.dim();
    let mut hgrad = HyperplaneGrad::zeros(n);
    let (id_loss, id_grad) = logistic_side(id_embeddings, h, c, true, &mut hgrad)?;
    let (out_loss, out_grad) = logistic_side(outliers, h, c, false, &mut hgrad)?;
    Ok((
        id_loss + out_loss,
        UncertaintyGrad {
            id: id_grad,
            outliers: out_grad,
            hyperplane: hgrad,
        },
    ))
}

/// Mean logistic loss of one side. In-distribution points are the positive
/// class (`softplus(-ℓ)`), outliers the negative one (`softplus(ℓ)`).
fn logistic_side<T: Scalar>(
    pts: &[LorentzPoint<T>],
    h: &Hyperplane<T>,
    c: Curvature<T>,
    positive: bool,
    hgrad: &mut HyperplaneGrad<T>,
) -> Result<(T, EmbeddingGrad<T>)> {
    let inv = T::one() / T::of_usize(pts.len());
    let mut loss = T::zero();
    let mut grad = EmbeddingGrad::zeros(pts.len(), h.dim());
    for (p, gs) in pts.iter().zip(grad.space.iter_mut()) {
        let parts = logit_with_grad(p.time(), p.space(), h, c)?;
        let l = parts.value;
        let (term, dl) = if positive {
            (softplus(-l), -sigmoid(-l))
        } else {
            (softplus(l), sigmoid(l))
        };
        loss += term * inv;
        let w = dl * inv;
        for (g, &d) in gs.iter_mut().zip(&parts.d_space) {
            *g += w * d;
        }
        grad.curvature += w * parts.d_curvature;
        hgrad.offset += w * parts.d_offset;
        for (g, &d) in hgrad.orientation.iter_mut().zip(&parts.d_orientation) {
            *g += w * d;
        }
        fold_time(p, w * parts.d_time, gs, &mut grad.curvature, c.value());
    }
    Ok((loss, grad))
}

/// `hsup + alpha * uncertainty`.
#[inline]
pub fn total_loss<T: Scalar>(hsup: T, uncertainty: T, alpha: T) -> T {
    hsup + alpha * uncertainty
}

/// Mean softmax cross-entropy of per-class hyperplane logits.
pub fn cross_entropy_loss<T: Scalar>(
    embeddings: &[LorentzPoint<T>],
    labels: &[usize],
    classifier: &ClassifierParams<T>,
    c: Curvature<T>,
) -> Result<T> {
    Ok(cross_entropy_impl(embeddings, labels, classifier, c, false)?.0)
}

pub fn cross_entropy_loss_grad<T: Scalar>(
    embeddings: &[LorentzPoint<T>],
    labels: &[usize],
    classifier: &ClassifierParams<T>,
    c: Curvature<T>,
) -> Result<(T, CrossEntropyGrad<T>)> {
    let (loss, grad) = cross_entropy_impl(embeddings, labels, classifier, c, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn cross_entropy_impl<T: Scalar>(
    embeddings: &[LorentzPoint<T>],
    labels: &[usize],
    classifier: &ClassifierParams<T>,
    c: Curvature<T>,
    want_grad: bool,
) -> Result<(T, Option<CrossEntropyGrad<T>>)> {
    check_dim(embeddings.len(), labels.len())?;
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let classes = classifier.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::OutOfRange {
            what: "label",
            value: bad,
            min: 0,
            max: classes.saturating_sub(1),
        });
    }
    let n = embeddings[0].dim();
    let inv = T::one() / T::of_usize(embeddings.len());
    let mut loss = T::zero();
    let mut grad = want_grad.then(|| CrossEntropyGrad {
        embeddings: EmbeddingGrad::zeros(embeddings.len(), n),
        hyperplanes: (0..classes).map(|_| HyperplaneGrad::zeros(n)).collect(),
    });
    for (idx, (z, &y)) in embeddings.iter().zip(labels).enumerate() {
        let parts: Vec<_> = classifier
            .hyperplanes
            .iter()
            .map(|h| logit_with_grad(z.time(), z.space(), h, c))
            .collect::<Result<_>>()?;
        let logits: Vec<T> = parts.iter().map(|p| p.value).collect();
        let lse = log_sum_exp(&logits);
        loss += (lse - logits[y]) * inv;
        if let Some(g) = grad.as_mut() {
            let mut g_time = T::zero();
            for (cls, p) in parts.iter().enumerate() {
                let target = if cls == y { T::one() } else { T::zero() };
                let w = ((logits[cls] - lse).exp() - target) * inv;
                let hg = &mut g.hyperplanes[cls];
                hg.offset += w * p.d_offset;
                for (a, &b) in hg.orientation.iter_mut().zip(&p.d_orientation) {
                    *a += w * b;
                }
                for (a, &b) in g.embeddings.space[idx].iter_mut().zip(&p.d_space) {
                    *a += w * b;
                }
                g_time += w * p.d_time;
                g.embeddings.curvature += w * p.d_curvature;
            }
            let EmbeddingGrad { space, curvature } = &mut g.embeddings;
            fold_time(z, g_time, &mut space[idx], curvature, c.value());
        }
    }
    Ok((loss, grad))
}
