//! Training loop: batch sampling, views, loss assembly, AdamW, and history.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint::Checkpoint;
use crate::classifier::{ClassifierParams, Hyperplane};
use crate::data::FeatureBank;
use crate::error::{Error, Result};
use crate::head::{
    backward_from_forward, embed_batch, HeadParams, LossKind, DEFAULT_EMBEDDING_DIM,
};
use crate::lorentz::LorentzPoint;
use crate::objectives::{cross_entropy_loss_grad, HyperplaneGrad, LossSettings};
use crate::scores::{origin_distance_score, EmbeddingBank};
use crate::synthesis::{mean_space_norm, synthesize_outliers, OutlierConfig};

/// How a batch of feature rows becomes a contrastive batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewMode {
    /// Two jittered copies of every row; positives are all same-label entries.
    TwoView,
    /// Rows used as they are; positives come from labels only.
    SingleView,
}

impl std::str::FromStr for ViewMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "two_view" | "two-view" => Ok(Self::TwoView),
            "single_view" | "single-view" => Ok(Self::SingleView),
            _ => Err("one of two_view, single_view".into()),
        }
    }
}

impl std::fmt::Display for ViewMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoView => "two_view",
            Self::SingleView => "single_view",
        })
    }
}

/// Loss that trains the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Contrastive loss plus the weighted outlier loss.
    Hsup,
    /// Softmax cross-entropy over class hyperplanes (baseline).
    CrossEntropy,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hsup" => Ok(Self::Hsup),
            "cross_entropy" | "cross-entropy" | "ce" => Ok(Self::CrossEntropy),
            _ => Err("one of hsup, cross_entropy".into()),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hsup => "hsup",
            Self::CrossEntropy => "cross_entropy",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub warmup_iters: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub loss: LossSettings<f64>,
    pub outliers: OutlierConfig,
    pub seed: u64,
    pub view_mode: ViewMode,
    /// Jitter std for [`ViewMode::TwoView`] as a multiple of the pooled
    /// feature std.
    pub jitter_scale: f64,
    pub embedding_dim: usize,
    pub objective: Objective,
    /// From this iteration on only the class hyperplanes are updated.
    pub freeze_head_after: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 256,
            lr_max: 1e-3,
            warmup_iters: 400,
            weight_decay: 0.2,
            betas: (0.9, 0.98),
            epsilon: 1e-8,
            loss: LossSettings::default(),
            outliers: OutlierConfig::default(),
            seed: 0,
            view_mode: ViewMode::TwoView,
            jitter_scale: 0.01,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            objective: Objective::Hsup,
            freeze_head_after: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale run: 2000 iterations with batches of 64.
    pub fn desk() -> Self {
        Self {
            iterations: 2000,
            batch_size: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigValue(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if self.warmup_iters >= self.iterations {
            return bad(format!(
                "warmup_iters ({}) must be below iterations ({})",
                self.warmup_iters, self.iterations
            ));
        }
        if !(self.lr_max >= 0.0 && self.lr_max.is_finite()) {
            return bad(format!("lr_max must be non-negative, got {}", self.lr_max));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.jitter_scale >= 0.0 && self.jitter_scale.is_finite()) {
            return bad(format!(
                "jitter_scale must be non-negative, got {}",
                self.jitter_scale
            ));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        self.loss
            .validate()
            .map_err(|e| Error::ConfigValue(e.to_string()))?;
        self.outliers.validate()
    }

    fn synthesis_active(&self, iter: usize) -> bool {
        self.objective == Objective::Hsup
            && self.loss.alpha > 0.0
            && iter >= self.outliers.start_iteration
    }
}

/// Linear warmup from zero, then cosine decay to zero at `iterations`.
pub fn lr_schedule(iter: usize, cfg: &TrainConfig) -> f64 {
    let iter = iter.min(cfg.iterations);
    if iter < cfg.warmup_iters {
        return cfg.lr_max * iter as f64 / cfg.warmup_iters as f64;
    }
    let span = (cfg.iterations - cfg.warmup_iters) as f64;
    let progress = (iter - cfg.warmup_iters) as f64 / span;
    cfg.lr_max * 0.5 * (1.0 + (PI * progress).cos())
}

/// How [`adamw_step`] treats one parameter entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    /// Adam update plus decoupled weight decay.
    Decayed,
    /// Adam update only.
    Plain,
    /// Left untouched, moments included.
    Frozen,
}

/// Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed steps per entry (entries may be frozen for a while).
    pub steps: Vec<u64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// One AdamW step: `p ← p(1 − lr·wd)` on decayed entries, then the
/// bias-corrected Adam update.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    roles: &[ParamRole],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || roles.len() != n || state.m.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} parameters, {} gradients, {} roles, {} moments",
            grads.len(),
            roles.len(),
            state.m.len()
        )));
    }
    let (b1, b2) = cfg.betas;
    for i in 0..n {
        let role = roles[i];
        if role == ParamRole::Frozen {
            continue;
        }
        if role == ParamRole::Decayed {
            params[i] *= 1.0 - lr * cfg.weight_decay;
        }
        let g = grads[i];
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / (1.0 - b1.powi(t));
        let v_hat = state.v[i] / (1.0 - b2.powi(t));
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Parameter blocks in flattening order.
fn flatten(ck: &Checkpoint, out: &mut Vec<f64>) {
    out.clear();
    for l in &ck.head.layers {
        out.extend_from_slice(&l.weight);
        out.extend_from_slice(&l.bias);
    }
    out.push(ck.head.curvature_param);
    for h in std::iter::once(&ck.hyperplane).chain(&ck.classifier.hyperplanes) {
        out.push(h.offset);
        out.extend_from_slice(&h.orientation);
    }
}

fn unflatten(ck: &mut Checkpoint, flat: &[f64]) {
    let mut it = flat.iter().copied();
    let mut fill = |dst: &mut [f64]| {
        for d in dst {
            *d = it.next().expect("flat vector matches layout");
        }
    };
    for l in &mut ck.head.layers {
        fill(&mut l.weight);
        fill(&mut l.bias);
    }
    fill(std::slice::from_mut(&mut ck.head.curvature_param));
    for h in std::iter::once(&mut ck.hyperplane).chain(&mut ck.classifier.hyperplanes) {
        fill(std::slice::from_mut(&mut h.offset));
        fill(&mut h.orientation);
    }
}

/// Which blocks receive updates in one iteration.
struct Active {
    head: bool,
    hyperplane: bool,
    classes: bool,
}

fn roles(ck: &Checkpoint, active: &Active) -> Vec<ParamRole> {
    use ParamRole::*;
    let pick = |on: bool, role: ParamRole| if on { role } else { Frozen };
    let mut r = Vec::new();
    for l in &ck.head.layers {
        r.extend(std::iter::repeat_n(
            pick(active.head, Decayed),
            l.weight.len(),
        ));
        r.extend(std::iter::repeat_n(pick(active.head, Plain), l.bias.len()));
    }
    r.push(pick(active.head, Plain));
    let mut plane = |h: &Hyperplane<f64>, on: bool| {
        r.push(pick(on, Plain));
        r.extend(std::iter::repeat_n(pick(on, Decayed), h.orientation.len()));
    };
    plane(&ck.hyperplane, active.hyperplane);
    for h in &ck.classifier.hyperplanes {
        plane(h, active.classes);
    }
    r
}

fn push_plane_grad(out: &mut Vec<f64>, g: Option<&HyperplaneGrad<f64>>, n: usize) {
    match g {
        Some(g) => {
            out.push(g.offset);
            out.extend_from_slice(&g.orientation);
        }
        None => out.extend(std::iter::repeat_n(0.0, n + 1)),
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: f64,
    pub hsup: f64,
    pub uncertainty: f64,
    pub lr: f64,
    /// Mean geodesic distance to the origin over the batch embeddings.
    pub mean_origin_dist: f64,
    pub n_outliers: usize,
    /// Mean space norm of the batch embeddings.
    pub mean_id_norm: f64,
    /// Mean space norm of the accepted outliers, when there are any.
    pub mean_outlier_norm: Option<f64>,
}

pub const HISTORY_HEADER: &str = "iter\tloss\thsup\tunc\tlr\tmean_origin_dist\tn_outliers";

/// Tab-separated history with a header line.
pub fn history_tsv(rows: &[HistoryRow]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
            r.iter, r.loss, r.hsup, r.uncertainty, r.lr, r.mean_origin_dist, r.n_outliers
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Parameters before the first update.
    pub initial: Checkpoint,
    pub history: Vec<HistoryRow>,
    /// Iterations skipped because the batch had an anchor without positives.
    pub skipped: usize,
}

/// Freshly initialized parameters for `classes` classes.
pub fn init_checkpoint(
    feature_dim: usize,
    classes: usize,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    if classes == 0 {
        return Err(Error::InvalidInput("no classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.embedding_dim;
    Ok(Checkpoint {
        head: HeadParams::new(feature_dim, n, &mut rng),
        hyperplane: Hyperplane::random(n, &mut rng),
        classifier: ClassifierParams::random(classes, n, &mut rng),
    })
}

struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(len: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..len).collect(),
            pos: len,
            rng,
        }
    }

    /// Next `size` indices without replacement; reshuffles once the current
    /// permutation cannot fill a batch.
    fn next(&mut self, size: usize) -> &[usize] {
        if self.pos + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + size];
        self.pos += size;
        out
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains a head (and hyperplanes) on `data`. Deterministic in `cfg.seed`.
pub fn train(data: &FeatureBank, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training bank is empty".into()));
    }
    let classes = data.num_classes();
    if cfg.view_mode == ViewMode::SingleView {
        let mut counts = vec![0usize; classes];
        for &l in data.labels() {
            counts[l] += 1;
        }
        if let Some(k) = counts.iter().position(|&n| n == 1) {
            return Err(Error::InvalidInput(format!(
                "class {k} has a single sample; single-view training needs at least two"
            )));
        }
    }
    let mut ck = init_checkpoint(data.dim(), classes, cfg)?;
    let initial = ck.clone();
    let mut flat = Vec::new();
    flatten(&ck, &mut flat);
    let mut state = OptimizerState::new(flat.len());
    let n = cfg.embedding_dim;
    let batch = cfg.batch_size.min(data.len());
    let mut sampler = Sampler::new(data.len(), rng_stream(cfg.seed, 1));
    let mut jitter_rng = rng_stream(cfg.seed, 2);
    let mut synth_rng = rng_stream(cfg.seed, 3);
    let jitter_std = cfg.jitter_scale * data.global_std();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut skipped = 0;
    let mut grads = Vec::with_capacity(flat.len());

    for iter in 0..cfg.iterations {
        let idx = sampler.next(batch);
        let (features, labels) = build_views(data, idx, cfg.view_mode, jitter_std, &mut jitter_rng);
        let lr = lr_schedule(iter, cfg);
        let (points, cache) = embed_batch(&ck.head, &features)?;
        let c = ck.head.curvature();

        let synth_seed: u64 = if cfg.synthesis_active(iter) {
            synth_rng.random()
        } else {
            0
        };
        let outliers = if cfg.synthesis_active(iter) {
            synthesize_outliers(&points, &cfg.outliers, c, synth_seed)?.outliers
        } else {
            Vec::new()
        };
        let mean_origin_dist = points
            .iter()
            .map(|z| origin_distance_score(z, c))
            .sum::<f64>()
            / points.len() as f64;
        let mean_id_norm = mean_space_norm(&points).unwrap_or(0.0);
        let mean_outlier_norm = mean_space_norm(&outliers);

        let kind = match cfg.objective {
            Objective::CrossEntropy => LossKind::CrossEntropy {
                classifier: &ck.classifier,
            },
            Objective::Hsup if outliers.is_empty() => LossKind::Hsup,
            Objective::Hsup => LossKind::Combined {
                outliers: &outliers,
                hyperplane: &ck.hyperplane,
            },
        };
        let probe = match cfg.objective {
            // class hyperplanes fitted on detached embeddings
            Objective::Hsup => {
                Some(cross_entropy_loss_grad(&points, &labels, &ck.classifier, c)?.1)
            }
            Objective::CrossEntropy => None,
        };
        let out = match backward_from_forward(&ck.head, points, &cache, &labels, kind, &cfg.loss) {
            Ok(out) => out,
            Err(Error::EmptyPositives { anchor }) => {
                log::warn!("iteration {iter}: anchor {anchor} has no positive, batch skipped");
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !out.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {iter}")));
        }

        grads.clear();
        for l in &out.grad.layers {
            grads.extend_from_slice(&l.weight);
            grads.extend_from_slice(&l.bias);
        }
        grads.push(out.grad.curvature_param);
        push_plane_grad(&mut grads, out.hyperplane.as_ref(), n);
        let class_grads = out
            .classes
            .as_deref()
            .or(probe.as_ref().map(|p| p.hyperplanes.as_slice()));
        for k in 0..ck.classifier.num_classes() {
            push_plane_grad(&mut grads, class_grads.map(|g| &g[k]), n);
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at iteration {iter}")));
        }

        let active = Active {
            head: cfg.freeze_head_after.is_none_or(|f| iter < f),
            hyperplane: out.hyperplane.is_some(),
            classes: true,
        };
        adamw_step(&mut flat, &grads, &roles(&ck, &active), &mut state, lr, cfg)?;
        unflatten(&mut ck, &flat);
        if !ck.is_finite() {
            return Err(Error::NonFinite(format!(
                "parameters after iteration {iter}"
            )));
        }

        history.push(HistoryRow {
            iter,
            loss: out.loss,
            hsup: out.hsup,
            uncertainty: out.uncertainty,
            lr,
            mean_origin_dist,
            n_outliers: outliers.len(),
            mean_id_norm,
            mean_outlier_norm,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} iterations skipped", cfg.iterations);
    }
    Ok(TrainOutcome {
        checkpoint: ck,
        initial,
        history,
        skipped,
    })
}

fn build_views(
    data: &FeatureBank,
    idx: &[usize],
    mode: ViewMode,
    jitter_std: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows = data.rows();
    let labels = data.labels();
    match mode {
        ViewMode::SingleView => (
            idx.iter().map(|&i| rows[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        ),
        ViewMode::TwoView => {
            let mut feats = Vec::with_capacity(2 * idx.len());
            for _ in 0..2 {
                for &i in idx {
                    feats.push(
                        rows[i]
                            .iter()
                            .map(|&x| {
                                let z: f64 = StandardNormal.sample(rng);
                                x + jitter_std * z
                            })
                            .collect(),
                    );
                }
            }
            let labs = idx.iter().chain(idx).map(|&i| labels[i]).collect();
            (feats, labs)
        }
    }
}

/// Embeds feature rows with a trained head.
pub fn embed_rows(ck: &Checkpoint, rows: &[Vec<f64>]) -> Result<Vec<LorentzPoint<f64>>> {
    Ok(embed_batch(&ck.head, rows)?.0)
}

/// Embeds a labeled bank as the KNN reference set.
pub fn embed_bank(ck: &Checkpoint, data: &FeatureBank) -> Result<EmbeddingBank<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build an embedding bank from no rows".into(),
        ));
    }
    if data.dim() != ck.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: ck.feature_dim(),
            found: data.dim(),
        });
    }
    let points = embed_rows(ck, data.rows())?;
    EmbeddingBank::new(points, data.labels().to_vec(), ck.head.curvature())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 30,
            batch_size: 8,
            warmup_iters: 5,
            embedding_dim: 4,
            outliers: OutlierConfig {
                start_iteration: 10,
                ..Default::default()
            },
            ..TrainConfig::default()
        }
    }

    fn small_data() -> FeatureBank {
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|i| {
                let c = (i % 3) as f64;
                vec![c, 1.0 - c, 0.1 * i as f64, (i as f64).sin()]
            })
            .collect();
        let labels = (0..24).map(|i| i % 3).collect();
        FeatureBank::new(4, labels, rows).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::desk();
        assert_eq!(lr_schedule(0, &cfg), 0.0);
        assert_eq!(lr_schedule(cfg.warmup_iters, &cfg), cfg.lr_max);
        let mid = cfg.warmup_iters + (cfg.iterations - cfg.warmup_iters) / 2;
        assert!((lr_schedule(mid, &cfg) - cfg.lr_max / 2.0).abs() < 1e-18);
        assert!(lr_schedule(cfg.iterations, &cfg).abs() < 1e-18);
        let mut last = f64::INFINITY;
        for i in cfg.warmup_iters..=cfg.iterations {
            let lr = lr_schedule(i, &cfg);
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn adamw_examples() {
        let cfg = TrainConfig::default();
        let lr = 1e-2;
        let mut p = vec![0.5, 0.5, 0.5];
        let mut st = OptimizerState::new(3);
        let roles = [ParamRole::Decayed, ParamRole::Plain, ParamRole::Frozen];
        adamw_step(&mut p, &[0.0; 3], &roles, &mut st, lr, &cfg).unwrap();
        assert_eq!(p, vec![0.5 * (1.0 - lr * cfg.weight_decay), 0.5, 0.5]);

        let g = 0.37;
        let mut p = vec![1.0];
        let mut st = OptimizerState::new(1);
        adamw_step(&mut p, &[g], &[ParamRole::Plain], &mut st, lr, &cfg).unwrap();
        let expect = 1.0 - lr * g / (g.abs() + cfg.epsilon);
        assert!((p[0] - expect).abs() < 1e-15);
        assert!(adamw_step(&mut p, &[g, g], &[ParamRole::Plain], &mut st, lr, &cfg).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let ck = init_checkpoint(3, 2, &small_cfg()).unwrap();
        let mut flat = Vec::new();
        flatten(&ck, &mut flat);
        let active = Active {
            head: true,
            hyperplane: true,
            classes: true,
        };
        assert_eq!(roles(&ck, &active).len(), flat.len());
        let mut other = init_checkpoint(
            3,
            2,
            &TrainConfig {
                seed: 9,
                ..small_cfg()
            },
        )
        .unwrap();
        unflatten(&mut other, &flat);
        assert_eq!(other, ck);
    }

    #[test]
    fn alpha_zero_never_synthesizes() {
        let mut cfg = small_cfg();
        cfg.loss.alpha = 0.0;
        let out = train(&small_data(), &cfg).unwrap();
        assert!(out
            .history
            .iter()
            .all(|r| r.uncertainty == 0.0 && r.n_outliers == 0));
    }

    #[test]
    fn synthesis_starts_at_start_iteration() {
        let out = train(&small_data(), &small_cfg()).unwrap();
        for r in &out.history {
            if r.iter < 10 {
                assert_eq!(r.n_outliers, 0);
            }
        }
        assert!(out.history.iter().any(|r| r.n_outliers > 0));
        assert!(out.history.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&small_data(), &small_cfg()).unwrap();
        let b = train(&small_data(), &small_cfg()).unwrap();
        assert_eq!(history_tsv(&a.history), history_tsv(&b.history));
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn zero_learning_rate_only_decays_weights() {
        let cfg = TrainConfig {
            lr_max: 0.0,
            ..small_cfg()
        };
        let out = train(&small_data(), &cfg).unwrap();
        assert_eq!(out.checkpoint, out.initial);
    }

    #[test]
    fn single_view_rejects_singleton_class() {
        let data =
            FeatureBank::new(1, vec![0, 0, 1], vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let cfg = TrainConfig {
            view_mode: ViewMode::SingleView,
            ..small_cfg()
        };
        assert!(train(&data, &cfg).is_err());
    }

    #[test]
    fn embed_bank_examples() {
        let ck = init_checkpoint(4, 3, &small_cfg()).unwrap();
        let empty = FeatureBank::new(4, vec![], vec![]).unwrap();
        assert!(embed_bank(&ck, &empty).is_err());
        let one = FeatureBank::new(4, vec![0], vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let bank = embed_bank(&ck, &one).unwrap();
        assert_eq!(bank.len(), 1);
        assert!(bank.points()[0].constraint_residual(bank.curvature()) <= 1e-9);
        assert_eq!(embed_bank(&ck, &one).unwrap(), bank);
        let wrong = FeatureBank::new(2, vec![0], vec![vec![0.1, 0.2]]).unwrap();
        assert!(embed_bank(&ck, &wrong).is_err());
    }
}
