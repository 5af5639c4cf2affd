//! Extended Haar features, Adaboost stage training, the attentional cascade
//! and skin-gated multi-scale detection.

pub mod boost;
pub mod cascade;
pub mod detect;
pub mod feature;

pub use boost::{train_stage, train_stump, Stage, StageParams, StageStats, StumpFit, WeakClassifier};
pub use cascade::{train_cascade, train_cascade_with, Cascade, CascadeParams, ScaledCascade, TrainingSample};
pub use detect::{detect_multiscale, merge_detections, Detection, ScanParams, ScanStats};
pub use feature::{eval_feature, generate_feature_set, FeatureKind, HaarFeature, Integrals};
