//! Diagnostics: correlation, agreement, KS, protocol and budget studies.

pub mod agreement;
pub mod budget;
pub mod correlation;
pub mod ks;
pub mod protocol;

pub use agreement::{
    agreement_at_least, fleiss_kappa, kendalls_w, krippendorff_alpha_nominal, unanimity_rates,
    LabelMatrix, RankingMatrix,
};
pub use budget::{budget_subsample_study, BudgetConfig, BudgetPoint};
pub use correlation::{average_ranks, kendall_tau, mae, plcc, rmse, srcc};
pub use ks::{ks_two_sample, KsResult};
pub use protocol::{
    cross_method, decision_agreement, leave_one_out_stability, split_half_spearman,
    to_consensus_pra, transitivity_violation_rate, triplet_separation, CrossMethodReport,
    LeaveOneOut, Tier, Transitivity,
};
