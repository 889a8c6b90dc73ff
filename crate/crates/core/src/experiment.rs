//! Entry points that tie a checkpoint to feature banks: per-query scores,
//! validation-tuned KNN evaluation, and the `k` sweep.

use crate::checkpoint::Checkpoint;
use crate::classifier::logits_all;
use crate::data::{FeatureBank, SynthSplits};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::scores::{
    clip_k_grid, ebo_score, knn_scores, origin_distance_score, softmax_score, sweep_k, tune_k,
    ScoreSet, DEFAULT_K_GRID,
};
use crate::train::{embed_bank, embed_rows};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMethod {
    Knn,
    Ebo,
    Softmax,
    Origin,
}

impl std::str::FromStr for ScoreMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "knn" => Ok(Self::Knn),
            "ebo" => Ok(Self::Ebo),
            "softmax" => Ok(Self::Softmax),
            "origin" => Ok(Self::Origin),
            _ => Err(format!("unknown method `{s}` (knn, ebo, softmax, origin)")),
        }
    }
}

/// Scores every query row. `bank` is required for [`ScoreMethod::Knn`].
pub fn score_rows(
    ck: &Checkpoint,
    method: ScoreMethod,
    bank: Option<&FeatureBank>,
    queries: &FeatureBank,
    k: usize,
) -> Result<Vec<f64>> {
    let points = embed_rows(ck, queries.rows())?;
    let c = ck.head.curvature();
    match method {
        ScoreMethod::Knn => {
            let bank =
                bank.ok_or_else(|| Error::InvalidInput("knn scoring needs a bank".into()))?;
            let bank = embed_bank(ck, bank)?;
            points
                .iter()
                .map(|q| knn_scores(&bank, q, &[k]).map(|s| s[0]))
                .collect()
        }
        ScoreMethod::Ebo => points
            .iter()
            .map(|z| ebo_score(&logits_all(z, &ck.classifier, c)?, 1.0))
            .collect(),
        ScoreMethod::Softmax => points
            .iter()
            .map(|z| softmax_score(&logits_all(z, &ck.classifier, c)?))
            .collect(),
        ScoreMethod::Origin => Ok(points.iter().map(|z| origin_distance_score(z, c)).collect()),
    }
}

/// The default grid clipped to the training-bank size when `grid` is `None`.
pub fn k_grid(grid: Option<&[usize]>, bank_size: usize) -> Result<Vec<usize>> {
    let clipped = clip_k_grid(grid.unwrap_or(&DEFAULT_K_GRID), bank_size);
    if clipped.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no k in the grid fits a bank of {bank_size}"
        )));
    }
    Ok(clipped)
}

/// Tunes `k` on the validation splits and reports test AUROC and FPR95.
pub fn evaluate(ck: &Checkpoint, data: &SynthSplits, grid: Option<&[usize]>) -> Result<EvalReport> {
    let bank = embed_bank(ck, &data.train_id)?;
    let grid = k_grid(grid, bank.len())?;
    let val_id = embed_rows(ck, data.val_id.rows())?;
    let val_ood = embed_rows(ck, data.val_ood.rows())?;
    let k = tune_k(&bank, &val_id, &val_ood, &grid)?;
    let test_scores = |rows: &[Vec<f64>]| -> Result<Vec<f64>> {
        embed_rows(ck, rows)?
            .iter()
            .map(|q| knn_scores(&bank, q, &[k]).map(|s| s[0]))
            .collect()
    };
    let scores = ScoreSet::new(
        test_scores(data.test_id.rows())?,
        test_scores(data.test_ood.rows())?,
    );
    EvalReport::from_scores(&scores, k)
}

/// Test AUROC for every `k` in `grid`.
pub fn sweep(ck: &Checkpoint, data: &SynthSplits, grid: &[usize]) -> Result<Vec<(usize, f64)>> {
    let bank = embed_bank(ck, &data.train_id)?;
    let grid = k_grid(Some(grid), bank.len())?;
    let id = embed_rows(ck, data.test_id.rows())?;
    let ood = embed_rows(ck, data.test_ood.rows())?;
    sweep_k(&bank, &id, &ood, &grid)
}
