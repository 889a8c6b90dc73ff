//! Hyperbolic outlier detection on the Lorentz model.
//!
//! Features are projected by a small head onto the hyperboloid, trained with
//! a distance-based supervised contrastive loss, and optionally regularized
//! by synthetic outliers drawn around low-norm (uncertain) embeddings and
//! separated by a Lorentz hyperplane. At test time samples are scored by
//! their hyperbolic k-nearest-neighbour distance to the training embeddings.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the trainer, file formats
//! and command line use.

mod binio;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod head;
pub mod lorentz;
pub mod objectives;
pub mod scalar;
pub mod scores;
pub mod synthesis;
pub mod train;

pub use checkpoint::Checkpoint;
pub use classifier::{hyperplane_distance, hyperplane_vector, logit, logits_all, predict};
pub use config::Config;
pub use data::{
    gen_synthetic, read_feature_file, write_feature_file, FeatureBank, SynthDataConfig, SynthSplits,
};
pub use error::{Error, ErrorKind, Result};
pub use eval::{aggregate, auroc, fpr_at_tpr, welch_t_test, EvalReport};
pub use experiment::{evaluate, score_rows, ScoreMethod};
pub use head::{curvature, head_backward, head_forward, lift, LossKind};
pub use lorentz::{
    expmap, logmap, lorentz_distance, lorentz_inner, parallel_transport, tangent_norm,
    tangent_project, time_component,
};
pub use objectives::{hsup_loss, total_loss, uncertainty_loss, ContrastiveBatch};
pub use scalar::Scalar;
pub use scores::{
    decide, ebo_score, knn_score, origin_distance_score, softmax_score, tune_k, Decision, ScoreSet,
};
pub use synthesis::{
    filter_outliers, select_uncertain, synthesize, synthesize_outliers, OutlierConfig,
};
pub use train::{embed_bank, lr_schedule, train, TrainConfig};

pub type Curvature = lorentz::Curvature<f64>;
pub type Point = lorentz::LorentzPoint<f64>;
pub type Tangent = lorentz::TangentVector<f64>;
pub type Head = head::HeadParams<f64>;
pub type Grad = head::ParamGrad<f64>;
pub type Hyperplane = classifier::Hyperplane<f64>;
pub type Classifier = classifier::ClassifierParams<f64>;
pub type LossSettings = objectives::LossSettings<f64>;
pub type Batch = objectives::ContrastiveBatch<f64>;
pub type Bank = scores::EmbeddingBank<f64>;
pub type Scores = scores::ScoreSet<f64>;
pub type Outliers = synthesis::SynthesizedSet<f64>;
