//! Attacks on decentralized training: partial-sum reconstruction, gradient
//! inversion and membership inference, plus the toy training loop.

pub mod image;
pub mod inversion;
pub mod membership;
pub mod model;
pub mod reconstruct;
pub mod training;

use serde::{Deserialize, Serialize};

pub use image::{ssim, synthetic_image, GrayImage};
pub use inversion::{
    gradient_inversion, match_reconstructions, matched_ssim, InversionConfig, InversionResult, LabelKnowledge,
};
pub use membership::{
    best_balanced_accuracy, membership_attack_eval, membership_score, roc_auc, MembershipCandidate, RoundPolicy,
};
pub use model::{local_gradient, Architecture, LocalDataset, Sample, Target, ToyModel};
pub use reconstruct::{reconstruct_partial_sums, TrackedView};
pub use training::{
    centralized_round, decentralized_round, train_centralized, train_decentralized, GradientBundle, RoundResult,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackMetrics {
    PartialSum {
        max_abs_error: f64,
    },
    Inversion {
        ssim: Vec<f64>,
    },
    Membership {
        auc: f64,
        success_rate: f64,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub metrics: AttackMetrics,
    pub component_sizes: Vec<usize>,
}
