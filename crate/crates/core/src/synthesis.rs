//! Synthetic outliers around uncertain in-distribution embeddings.
//!
//! The pipeline has three steps:
//!
//! 1. [`select_uncertain`]: the embeddings closest to the origin (smallest
//!    space norm) are taken as seeds.
//! 2. [`synthesize`]: `m` candidates per seed are drawn from a wrapped
//!    Gaussian centred on the seed.
//! 3. [`filter_outliers`]: a candidate survives only if its displacement from
//!    the seed is shorter than the seed's own norm; among survivors the ones
//!    with the largest norm are kept.
//!
//! Every seed draws from its own ChaCha stream (stream id = seed position),
//! so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lorentz::{expmap, transport_flat, Curvature, LorentzPoint, TangentVector};
use crate::scalar::{norm, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierConfig {
    /// Standard deviation of the tangent-space Gaussian.
    pub sigma: f64,
    /// Seeds per batch; `None` means 10% of the batch, at least one.
    pub seeds_per_batch: Option<usize>,
    pub candidates_per_seed: usize,
    pub keep_per_seed: usize,
    /// First training iteration that synthesizes outliers.
    pub start_iteration: usize,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            seeds_per_batch: None,
            candidates_per_seed: 20,
            keep_per_seed: 5,
            start_iteration: 1000,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::ConfigValue(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.seeds_per_batch == Some(0) {
            return Err(Error::ConfigValue(
                "seeds_per_batch must be at least 1".into(),
            ));
        }
        if self.candidates_per_seed == 0 || self.keep_per_seed == 0 {
            return Err(Error::ConfigValue(
                "candidates_per_seed and keep_per_seed must be at least 1".into(),
            ));
        }
        if self.keep_per_seed > self.candidates_per_seed {
            return Err(Error::ConfigValue(format!(
                "keep_per_seed ({}) exceeds candidates_per_seed ({})",
                self.keep_per_seed, self.candidates_per_seed
            )));
        }
        Ok(())
    }

    /// Number of seeds for a batch of `batch` embeddings.
    pub fn seed_count(&self, batch: usize) -> usize {
        self.seeds_per_batch
            .unwrap_or_else(|| batch.div_ceil(10).max(1))
            .min(batch)
    }
}

/// Candidates with the seed each one was drawn around.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet<T> {
    pub seeds: Vec<LorentzPoint<T>>,
    pub candidates: Vec<LorentzPoint<T>>,
    /// Position in `seeds` of each candidate's seed.
    pub seed_of: Vec<usize>,
}

/// Accepted outliers.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedSet<T> {
    pub outliers: Vec<LorentzPoint<T>>,
    /// Provenance: seed index of each outlier (a position in the seed list
    /// passed to [`synthesize`], or a bank index from [`synthesize_outliers`]).
    pub seed_index: Vec<usize>,
}

impl<T: Scalar> SynthesizedSet<T> {
    pub fn len(&self) -> usize {
        self.outliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outliers.is_empty()
    }

    pub fn mean_space_norm(&self) -> Option<T> {
        mean_space_norm(&self.outliers)
    }
}

pub(crate) fn mean_space_norm<T: Scalar>(pts: &[LorentzPoint<T>]) -> Option<T> {
    if pts.is_empty() {
        return None;
    }
    let s: T = pts.iter().map(LorentzPoint::space_norm).sum();
    Some(s / T::of_usize(pts.len()))
}

/// Draws from the wrapped Gaussian centred at `mu`: a Gaussian tangent vector
/// at the origin is transported to `mu` and mapped onto the manifold.
pub fn wrapped_gaussian_sample<T: Scalar, R: Rng + ?Sized>(
    mu: &LorentzPoint<T>,
    sigma: T,
    c: Curvature<T>,
    rng: &mut R,
) -> Result<LorentzPoint<T>> {
    if !(sigma >= T::zero() && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let n = mu.dim();
    let mut v = Vec::with_capacity(n + 1);
    v.push(T::zero());
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        v.push(sigma * T::of(z));
    }
    if sigma == T::zero() {
        return Ok(mu.clone());
    }
    let origin = LorentzPoint::origin(n, c);
    let moved = transport_flat(&origin, mu, &v, c);
    expmap(mu, &TangentVector::from_parts(mu.clone(), moved), c)
}

/// Indices of the `count` embeddings with the smallest space norm, in norm
/// order; equal norms keep index order.
pub fn select_uncertain<T: Scalar>(points: &[LorentzPoint<T>], count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > points.len() {
        return Err(Error::OutOfRange {
            what: "uncertain seed count",
            value: count,
            min: 1,
            max: points.len(),
        });
    }
    let norms: Vec<T> = points.iter().map(LorentzPoint::space_norm).collect();
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        norms[a]
            .partial_cmp(&norms[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.truncate(count);
    Ok(idx)
}

/// `candidates_per_seed` wrapped-Gaussian draws around every seed.
/// Deterministic in `rng_seed`.
pub fn synthesize<T: Scalar>(
    seeds: &[LorentzPoint<T>],
    cfg: &OutlierConfig,
    c: Curvature<T>,
    rng_seed: u64,
) -> Result<CandidateSet<T>> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds to synthesize around".into()));
    }
    let m = cfg.candidates_per_seed;
    let mut candidates = Vec::with_capacity(seeds.len() * m);
    let mut seed_of = Vec::with_capacity(seeds.len() * m);
    let sigma = T::of(cfg.sigma);
    for (i, seed) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(i as u64);
        for _ in 0..m {
            candidates.push(wrapped_gaussian_sample(seed, sigma, c, &mut rng)?);
            seed_of.push(i);
        }
    }
    Ok(CandidateSet {
        seeds: seeds.to_vec(),
        candidates,
        seed_of,
    })
}

/// Keeps, per seed, up to `keep_per_seed` candidates with
/// `|s - z| < |z|` (space components), largest `|s|` first.
pub fn filter_outliers<T: Scalar>(
    set: &CandidateSet<T>,
    cfg: &OutlierConfig,
) -> Result<SynthesizedSet<T>> {
    if set.candidates.len() != set.seed_of.len() {
        return Err(Error::ShapeMismatch(
            "candidate provenance does not match candidates".into(),
        ));
    }
    let mut out = SynthesizedSet {
        outliers: Vec::new(),
        seed_index: Vec::new(),
    };
    for (si, seed) in set.seeds.iter().enumerate() {
        let seed_norm = seed.space_norm();
        let mut survivors: Vec<(usize, T)> = set
            .candidates
            .iter()
            .enumerate()
            .filter(|&(ci, _)| set.seed_of[ci] == si)
            .filter_map(|(ci, cand)| {
                let disp: Vec<T> = cand
                    .space()
                    .iter()
                    .zip(seed.space())
                    .map(|(&a, &b)| a - b)
                    .collect();
                (norm(&disp) < seed_norm).then(|| (ci, cand.space_norm()))
            })
            .collect();
        // stable: equal norms keep candidate order
        survivors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        for &(ci, _) in survivors.iter().take(cfg.keep_per_seed) {
            out.outliers.push(set.candidates[ci].clone());
            out.seed_index.push(si);
        }
    }
    Ok(out)
}

/// The full pipeline on a set of embeddings. `seed_index` of the result
/// refers to positions in `points`.
pub fn synthesize_outliers<T: Scalar>(
    points: &[LorentzPoint<T>],
    cfg: &OutlierConfig,
    c: Curvature<T>,
    rng_seed: u64,
) -> Result<SynthesizedSet<T>> {
    let picked = select_uncertain(points, cfg.seed_count(points.len()))?;
    let seeds: Vec<_> = picked.iter().map(|&i| points[i].clone()).collect();
    let candidates = synthesize(&seeds, cfg, c, rng_seed)?;
    let mut set = filter_outliers(&candidates, cfg)?;
    for s in &mut set.seed_index {
        *s = picked[*s];
    }
    Ok(set)
}
