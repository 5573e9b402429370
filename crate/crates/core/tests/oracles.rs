//! Library results against independent reference computations.

mod support;

use support::oracle;

fn within(check: oracle::Check, tol: f64) {
    let worst = check.unwrap();
    assert!(worst < tol, "worst deviation {worst:e}");
}

#[test]
fn dbt_gradient_matches_central_differences() {
    within(oracle::dbt_gradient(), 1e-5);
}

#[test]
fn noiseless_complete_graph_recovers_planted_order() {
    assert_eq!(oracle::noiseless_recovery().unwrap(), 1.0);
}

#[test]
fn kendalls_w_matches_direct_formula() {
    within(oracle::kendalls_w_vs_formula(), 1e-9);
}

#[test]
fn fleiss_kappa_matches_pairwise_definition() {
    within(oracle::fleiss_vs_pairwise_definition(), 1e-9);
}

#[test]
fn krippendorff_alpha_matches_pairable_value_definition() {
    within(oracle::alpha_vs_pairable_values(), 1e-9);
}

#[test]
fn triplet_separation_matches_enumeration() {
    within(oracle::triplets_vs_enumeration(), 1e-9);
}

#[test]
fn pra_matches_enumeration() {
    within(oracle::pra_vs_enumeration(), 1e-9);
}

#[test]
fn transitivity_matches_triple_enumeration() {
    within(oracle::transitivity_vs_enumeration(), 1e-9);
}

#[test]
fn decision_agreement_matches_enumeration() {
    within(oracle::decision_agreement_vs_enumeration(), 1e-9);
}

#[test]
fn ks_fifty_point_samples_against_path_counting() {
    within(oracle::ks_fifty_point(), 0.01);
}

#[test]
fn ks_small_samples_are_exact() {
    within(oracle::ks_small_exact(), 1e-12);
}

#[test]
fn posterior_map_matches_grid_search() {
    within(oracle::posterior_map_vs_search(), 1e-6);
}

#[test]
fn rank_reward_matches_reference_implementation() {
    within(oracle::rank_reward_vs_reference(), 1e-12);
}

#[test]
fn self_fidelity_is_one() {
    within(oracle::self_fidelity(), 1e-12);
}

#[test]
fn advantages_have_zero_mean_unit_std() {
    within(oracle::advantage_moments(), 1e-12);
}
