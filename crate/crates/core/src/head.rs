//! Projection head: Euclidean features to points on the hyperboloid.
//!
//! The head is a small multilayer perceptron (affine, ReLU, affine) whose
//! output `u` is lifted onto the manifold with the space part of the
//! exponential map at the origin. The curvature is a trainable scalar,
//! `c = softplus(curvature_param)`.

use rand::Rng;

use crate::classifier::{ClassifierParams, Hyperplane};
use crate::error::{check_dim, Error, Result};
use crate::lorentz::{sinhc, Curvature, LorentzPoint};
use crate::objectives::{
    cross_entropy_loss_grad, hsup_loss_grad, total_loss, uncertainty_loss_grad, ContrastiveBatch,
    EmbeddingGrad, HyperplaneGrad, LossSettings,
};
use crate::scalar::{dot, sigmoid, softplus, Scalar};

/// Smallest curvature the softplus reparametrization can produce.
pub const CURVATURE_FLOOR: f64 = 1e-12;
/// Default embedding dimension.
pub const DEFAULT_EMBEDDING_DIM: usize = 128;

/// Curvature from its unconstrained parameter: `max(softplus(ρ), 1e-12)`.
pub fn curvature<T: Scalar>(curvature_param: T) -> Curvature<T> {
    let c = softplus(curvature_param).max(T::of(CURVATURE_FLOOR));
    Curvature::new(c).expect("softplus output is positive")
}

/// `dc/dρ`, zero where the floor is active.
pub fn curvature_derivative<T: Scalar>(curvature_param: T) -> T {
    if softplus(curvature_param) > T::of(CURVATURE_FLOOR) {
        sigmoid(curvature_param)
    } else {
        T::zero()
    }
}

/// Parameter value giving `c = 1`: `ln(e - 1)`.
pub fn unit_curvature_param<T: Scalar>() -> T {
    (T::E() - T::one()).ln()
}

/// A dense layer `y = W x + b`, `W` stored row-major with shape
/// `(outputs, inputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Weights and biases uniform in `±1/sqrt(inputs)`.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || T::of(rng.random_range(-bound..bound));
        let weight = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, &b)| b + dot(row, x)),
        );
    }

    fn validate(&self) -> Result<()> {
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::ShapeMismatch(format!(
                "dense layer {}x{} with {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub layers: Vec<Dense<T>>,
    pub curvature_param: T,
}

/// Gradient of a scalar loss, shaped like [`HeadParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad<T> {
    pub layers: Vec<Dense<T>>,
    pub curvature_param: T,
}

impl<T: Scalar> ParamGrad<T> {
    pub fn zeros_like(p: &HeadParams<T>) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            curvature_param: T::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.curvature_param.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

impl<T: Scalar> HeadParams<T> {
    /// Two-layer head `e -> 2n -> n`, randomly initialised, with `c = 1`.
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, n: usize, rng: &mut R) -> Self {
        let hidden = 2 * n;
        Self {
            layers: vec![
                Dense::random(feature_dim, hidden, rng),
                Dense::random(hidden, n, rng),
            ],
            curvature_param: unit_curvature_param(),
        }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, curvature_param: T) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("head needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for w in layers.windows(2) {
            check_dim(w[0].outputs, w[1].inputs)?;
        }
        if !curvature_param.is_finite() {
            return Err(Error::NonFinite("curvature parameter".into()));
        }
        Ok(Self {
            layers,
            curvature_param,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn curvature(&self) -> Curvature<T> {
        curvature(self.curvature_param)
    }

    pub fn is_finite(&self) -> bool {
        self.curvature_param.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Affine layers with ReLU between them (not after the last one).
pub fn head_forward<T: Scalar>(p: &HeadParams<T>, feature: &[T]) -> Result<Vec<T>> {
    check_dim(p.feature_dim(), feature.len())?;
    let mut x = feature.to_vec();
    let mut y = Vec::new();
    let last = p.layers.len() - 1;
    for (i, layer) in p.layers.iter().enumerate() {
        layer.apply(&x, &mut y);
        if i < last {
            relu(&mut y);
        }
        std::mem::swap(&mut x, &mut y);
    }
    Ok(x)
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        *x = x.max(T::zero());
    }
}

/// Places `u` on the hyperboloid: space `sinh(√c|u|)/(√c|u|) u`, which is the
/// space part of `expmap(origin, [0, u])`.
pub fn lift<T: Scalar>(u: &[T], c: Curvature<T>) -> LorentzPoint<T> {
    let t = c.sqrt() * dot(u, u).sqrt();
    let f = sinhc(t);
    LorentzPoint::from_space(u.iter().map(|&x| f * x).collect(), c)
}

/// `(t cosh t - sinh t) / t^3`, the derivative of `sinh(t)/t` divided by `t`.
fn sinhc_slope<T: Scalar>(t: T) -> T {
    if t.abs() < T::of(0.1) {
        let t2 = t * t;
        T::one() / T::of(3.0)
            + t2 * (T::one() / T::of(30.0) + t2 * (T::one() / T::of(840.0) + t2 / T::of(45360.0)))
    } else {
        (t * t.cosh() - t.sinh()) / (t * t * t)
    }
}

/// Backpropagates a gradient on the lifted space coordinates to `u`; returns
/// `dL/du` and the extra `dL/dc` from the curvature dependence of the lift.
fn lift_backward<T: Scalar>(u: &[T], c: Curvature<T>, g_space: &[T]) -> (Vec<T>, T) {
    let r2 = dot(u, u);
    let t = c.sqrt() * r2.sqrt();
    let f = sinhc(t);
    let slope = sinhc_slope(t);
    let gu_dot = dot(g_space, u);
    let radial = gu_dot * c.value() * slope;
    let g_u = g_space
        .iter()
        .zip(u)
        .map(|(&g, &x)| f * g + radial * x)
        .collect();
    (g_u, gu_dot * slope * r2 * T::half())
}

/// Intermediate values kept from a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Per sample, the input of every layer followed by the head output `u`.
    activations: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn outputs(&self) -> impl Iterator<Item = &[T]> {
        self.activations
            .iter()
            .map(|a| a.last().expect("non-empty").as_slice())
    }
}

/// Runs the head and lift on every feature row.
pub fn embed_batch<T: Scalar>(
    p: &HeadParams<T>,
    features: &[Vec<T>],
) -> Result<(Vec<LorentzPoint<T>>, ForwardCache<T>)> {
    let c = p.curvature();
    let last = p.layers.len() - 1;
    let mut points = Vec::with_capacity(features.len());
    let mut activations = Vec::with_capacity(features.len());
    for f in features {
        check_dim(p.feature_dim(), f.len())?;
        let mut acts = Vec::with_capacity(p.layers.len() + 1);
        acts.push(f.clone());
        for (i, layer) in p.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.apply(acts.last().expect("non-empty"), &mut y);
            if i < last {
                relu(&mut y);
            }
            acts.push(y);
        }
        points.push(lift(acts.last().expect("non-empty"), c));
        activations.push(acts);
    }
    Ok((points, ForwardCache { activations }))
}

/// Chains a gradient on the embeddings (space coordinates and curvature)
/// back through the lift and the head.
pub fn backward_from_embeddings<T: Scalar>(
    p: &HeadParams<T>,
    cache: &ForwardCache<T>,
    grad: &EmbeddingGrad<T>,
) -> Result<ParamGrad<T>> {
    check_dim(cache.activations.len(), grad.space.len())?;
    let c = p.curvature();
    let mut out = ParamGrad::zeros_like(p);
    let mut g_c = grad.curvature;
    let last = p.layers.len() - 1;
    for (acts, g_space) in cache.activations.iter().zip(&grad.space) {
        let u = acts.last().expect("non-empty");
        let (mut g, extra_c) = lift_backward(u, c, g_space);
        g_c += extra_c;
        for (i, layer) in p.layers.iter().enumerate().rev() {
            let input = &acts[i];
            let lg = &mut out.layers[i];
            for (r, &go) in g.iter().enumerate() {
                if go == T::zero() {
                    continue;
                }
                lg.bias[r] += go;
                let row = &mut lg.weight[r * layer.inputs..(r + 1) * layer.inputs];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += go * x;
                }
            }
            if i == 0 {
                break;
            }
            let mut g_in = vec![T::zero(); layer.inputs];
            for (row, &go) in layer.weight.chunks_exact(layer.inputs).zip(&g) {
                if go == T::zero() {
                    continue;
                }
                for (gi, &w) in g_in.iter_mut().zip(row) {
                    *gi += go * w;
                }
            }
            // input of layer i is the ReLU output of layer i - 1
            debug_assert!(i - 1 < last);
            for (gi, &a) in g_in.iter_mut().zip(input) {
                if a <= T::zero() {
                    *gi = T::zero();
                }
            }
            g = g_in;
        }
    }
    out.curvature_param = g_c * curvature_derivative(p.curvature_param);
    Ok(out)
}

/// Which loss [`head_backward`] differentiates.
#[derive(Clone, Copy, Debug)]
pub enum LossKind<'a, T> {
    /// Contrastive loss only.
    Hsup,
    /// Contrastive loss plus `alpha` times the outlier loss. Outliers are
    /// constants: their space coordinates are held fixed and their time
    /// coordinate follows the current curvature.
    Combined {
        outliers: &'a [LorentzPoint<T>],
        hyperplane: &'a Hyperplane<T>,
    },
    /// Softmax cross-entropy over per-class hyperplane logits.
    CrossEntropy { classifier: &'a ClassifierParams<T> },
}

#[derive(Clone, Debug)]
pub struct HeadBackward<T> {
    pub loss: T,
    pub hsup: T,
    pub uncertainty: T,
    pub grad: ParamGrad<T>,
    pub hyperplane: Option<HyperplaneGrad<T>>,
    pub classes: Option<Vec<HyperplaneGrad<T>>>,
}

/// Loss and full parameter gradient for a batch of feature rows.
pub fn head_backward<T: Scalar>(
    p: &HeadParams<T>,
    features: &[Vec<T>],
    labels: &[usize],
    kind: LossKind<'_, T>,
    settings: &LossSettings<T>,
) -> Result<HeadBackward<T>> {
    let (points, cache) = embed_batch(p, features)?;
    backward_from_forward(p, points, &cache, labels, kind, settings)
}

/// [`head_backward`] on embeddings already produced by [`embed_batch`].
pub fn backward_from_forward<T: Scalar>(
    p: &HeadParams<T>,
    points: Vec<LorentzPoint<T>>,
    cache: &ForwardCache<T>,
    labels: &[usize],
    kind: LossKind<'_, T>,
    settings: &LossSettings<T>,
) -> Result<HeadBackward<T>> {
    settings.validate()?;
    check_dim(points.len(), labels.len())?;
    let c = p.curvature();
    match kind {
        LossKind::Hsup => {
            let batch = ContrastiveBatch::new(points, labels.to_vec())?;
            let (loss, eg) = hsup_loss_grad(&batch, settings.temperature, c)?;
            Ok(HeadBackward {
                loss,
                hsup: loss,
                uncertainty: T::zero(),
                grad: backward_from_embeddings(p, cache, &eg)?,
                hyperplane: None,
                classes: None,
            })
        }
        LossKind::Combined {
            outliers,
            hyperplane,
        } => {
            let outliers: Vec<_> = outliers
                .iter()
                .map(|o| LorentzPoint::from_space(o.space().to_vec(), c))
                .collect();
            let batch = ContrastiveBatch::new(points, labels.to_vec())?;
            let (hsup, mut eg) = hsup_loss_grad(&batch, settings.temperature, c)?;
            let (unc, ug) = uncertainty_loss_grad(batch.embeddings(), &outliers, hyperplane, c)?;
            eg.add_scaled(&ug.id, settings.alpha);
            eg.curvature += settings.alpha * ug.outliers.curvature;
            let mut hg = ug.hyperplane;
            hg.offset *= settings.alpha;
            for v in &mut hg.orientation {
                *v *= settings.alpha;
            }
            Ok(HeadBackward {
                loss: total_loss(hsup, unc, settings.alpha),
                hsup,
                uncertainty: unc,
                grad: backward_from_embeddings(p, cache, &eg)?,
                hyperplane: Some(hg),
                classes: None,
            })
        }
        LossKind::CrossEntropy { classifier } => {
            let (loss, g) = cross_entropy_loss_grad(&points, labels, classifier, c)?;
            Ok(HeadBackward {
                loss,
                hsup: T::zero(),
                uncertainty: T::zero(),
                grad: backward_from_embeddings(p, cache, &g.embeddings)?,
                hyperplane: None,
                classes: Some(g.hyperplanes),
            })
        }
    }
}
