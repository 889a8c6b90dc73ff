//! Out-of-distribution scores. Every score follows one convention: higher
//! means more in-distribution.

use crate::error::{check_dim, Error, Result};
use crate::eval::auroc;
use crate::lorentz::{distance_unchecked, Curvature, LorentzPoint};
use crate::scalar::{log_sum_exp, Scalar};

/// Default grid searched by [`tune_k`], clipped to the bank size.
pub const DEFAULT_K_GRID: [usize; 6] = [1, 5, 10, 25, 50, 100];

/// Labeled in-distribution embeddings used as the KNN reference set.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBank<T> {
    points: Vec<LorentzPoint<T>>,
    labels: Vec<usize>,
    curvature: Curvature<T>,
}

impl<T: Scalar> EmbeddingBank<T> {
    pub fn new(
        points: Vec<LorentzPoint<T>>,
        labels: Vec<usize>,
        curvature: Curvature<T>,
    ) -> Result<Self> {
        check_dim(points.len(), labels.len())?;
        if points.is_empty() {
            return Err(Error::InvalidInput("embedding bank is empty".into()));
        }
        let n = points[0].dim();
        for p in &points {
            check_dim(n, p.dim())?;
        }
        Ok(Self {
            points,
            labels,
            curvature,
        })
    }

    pub fn points(&self) -> &[LorentzPoint<T>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn curvature(&self) -> Curvature<T> {
        self.curvature
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    fn distances(&self, query: &LorentzPoint<T>) -> Result<Vec<T>> {
        check_dim(self.dim(), query.dim())?;
        Ok(self
            .points
            .iter()
            .map(|p| distance_unchecked(query, p, self.curvature))
            .collect())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.len() {
            return Err(Error::OutOfRange {
                what: "k",
                value: k,
                min: 1,
                max: self.len(),
            });
        }
        Ok(())
    }
}

/// In-distribution and OOD scores for one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet<T> {
    pub id_scores: Vec<T>,
    pub ood_scores: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(id_scores: Vec<T>, ood_scores: Vec<T>) -> Self {
        Self {
            id_scores,
            ood_scores,
        }
    }
}

/// Negative distance to the `k`-th nearest bank point.
pub fn knn_score<T: Scalar>(
    bank: &EmbeddingBank<T>,
    query: &LorentzPoint<T>,
    k: usize,
) -> Result<T> {
    bank.check_k(k)?;
    let mut d = bank.distances(query)?;
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(-*kth)
}

/// [`knn_score`] for several `k` from one distance scan.
pub fn knn_scores<T: Scalar>(
    bank: &EmbeddingBank<T>,
    query: &LorentzPoint<T>,
    ks: &[usize],
) -> Result<Vec<T>> {
    for &k in ks {
        bank.check_k(k)?;
    }
    let Some(&kmax) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let mut d = bank.distances(query)?;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    if kmax < d.len() {
        d.select_nth_unstable_by(kmax - 1, cmp);
        d.truncate(kmax);
    }
    d.sort_unstable_by(cmp);
    Ok(ks.iter().map(|&k| -d[k - 1]).collect())
}

/// Negative free energy `T log Σ exp(ℓ_k / T)`.
pub fn ebo_score<T: Scalar>(logits: &[T], temperature: T) -> Result<T> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("no logits".into()));
    }
    let scaled: Vec<T> = logits.iter().map(|&l| l / temperature).collect();
    Ok(temperature * log_sum_exp(&scaled))
}

/// Maximum softmax probability.
pub fn softmax_score<T: Scalar>(logits: &[T]) -> Result<T> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("no logits".into()));
    }
    let lse = log_sum_exp(logits);
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    Ok((max - lse).exp())
}

/// Geodesic distance from the origin.
pub fn origin_distance_score<T: Scalar>(z: &LorentzPoint<T>, c: Curvature<T>) -> T {
    distance_unchecked(z, &LorentzPoint::origin(z.dim(), c), c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    InDistribution,
    OutOfDistribution,
}

/// Level-set rule: in-distribution iff `score >= threshold`.
pub fn decide<T: Scalar>(score: T, threshold: T) -> Decision {
    if score >= threshold {
        Decision::InDistribution
    } else {
        Decision::OutOfDistribution
    }
}

/// Grid values that are valid for a bank of `bank_size` points.
pub fn clip_k_grid(grid: &[usize], bank_size: usize) -> Vec<usize> {
    grid.iter()
        .copied()
        .filter(|&k| k >= 1 && k <= bank_size)
        .collect()
}

/// AUROC of the KNN score for each `k` in `grid` on the given queries.
pub fn sweep_k<T: Scalar>(
    bank: &EmbeddingBank<T>,
    id_queries: &[LorentzPoint<T>],
    ood_queries: &[LorentzPoint<T>],
    grid: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty k grid".into()));
    }
    let score_all = |qs: &[LorentzPoint<T>]| -> Result<Vec<Vec<T>>> {
        qs.iter().map(|q| knn_scores(bank, q, grid)).collect()
    };
    let id = score_all(id_queries)?;
    let ood = score_all(ood_queries)?;
    grid.iter()
        .enumerate()
        .map(|(gi, &k)| {
            let set = ScoreSet::new(
                id.iter().map(|s| s[gi]).collect(),
                ood.iter().map(|s| s[gi]).collect(),
            );
            Ok((k, auroc(&set)?))
        })
        .collect()
}

/// The `k` with the best validation AUROC; ties go to the smallest `k`.
pub fn tune_k<T: Scalar>(
    bank: &EmbeddingBank<T>,
    val_id: &[LorentzPoint<T>],
    val_ood: &[LorentzPoint<T>],
    grid: &[usize],
) -> Result<usize> {
    let table = sweep_k(bank, val_id, val_ood, grid)?;
    let mut best = table[0];
    for &(k, a) in &table[1..] {
        if a > best.1 || (a == best.1 && k < best.0) {
            best = (k, a);
        }
    }
    Ok(best.0)
}
