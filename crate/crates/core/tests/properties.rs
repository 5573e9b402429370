use std::collections::BTreeMap;

use prefscore_core::bridge::posterior_map;
use prefscore_core::calibration::{
    apply_sigmoid, bridge_calibrate, fit_global_sigmoid, BridgeCalibration,
};
use prefscore_core::davidson::davidson_probs;
use prefscore_core::elo::{expected_score, run_anchored_elo, run_elo, EloConfig, EloState};
use prefscore_core::judge::{Judge, SyntheticJudge, SyntheticJudgeConfig};
use prefscore_core::model::induce_pairwise_from_ratings;
use prefscore_core::reward::{fidelity, grpo_advantages, pair_weight, rank_reward, GroupSample, RewardConfig};
use prefscore_core::stats::agreement::{
    fleiss_kappa, kendalls_w, krippendorff_alpha_nominal, LabelMatrix, RankingMatrix,
};
use prefscore_core::stats::correlation::{plcc, srcc};
use prefscore_core::stats::protocol::{all_pairs, decision_agreement, transitivity_violation_rate};
use prefscore_core::{Anchor, AnchorSet, DimensionSet, ImageId, Outcome, PairJudgment, RatingRecord};
use proptest::prelude::*;

fn ids(n: usize) -> Vec<ImageId> {
    (0..n).map(|i| ImageId::new(format!("i{i:02}"))).collect()
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::AWins), Just(Outcome::Tie), Just(Outcome::BWins)]
}

/// Judgments over `n` images: a spanning chain plus random extra pairs.
fn judgments(n: usize) -> impl Strategy<Value = Vec<PairJudgment>> {
    let chain = proptest::collection::vec(outcome(), n - 1);
    let extra = proptest::collection::vec((0..n, 0..n, outcome()), 0..3 * n);
    (chain, extra).prop_map(move |(chain, extra)| {
        let ids = ids(n);
        let mut out: Vec<PairJudgment> = chain
            .into_iter()
            .enumerate()
            .map(|(i, o)| PairJudgment::new("r", ids[i].clone(), ids[i + 1].clone(), "d", o))
            .collect();
        for (a, b, o) in extra {
            if a != b {
                out.push(PairJudgment::new("r", ids[a].clone(), ids[b].clone(), "d", o));
            }
        }
        out
    })
}

fn short_elo() -> EloConfig {
    EloConfig { passes: 12, ..EloConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expected_scores_are_complementary(a in -3000.0..3000.0f64, b in -3000.0..3000.0f64) {
        let tau = EloConfig::default().temperature;
        let e = expected_score(a, b, tau).unwrap() + expected_score(b, a, tau).unwrap();
        prop_assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plain_elo_conserves_total_rating(js in judgments(7)) {
        let t = run_elo(&js, &short_elo()).unwrap();
        let total: f64 = t.values.values().sum();
        prop_assert!((total - 1500.0 * t.len() as f64).abs() < 1e-6);
    }

    #[test]
    fn elo_is_deterministic(js in judgments(6)) {
        let cfg = short_elo();
        prop_assert_eq!(run_elo(&js, &cfg).unwrap(), run_elo(&js, &cfg).unwrap());
    }

    #[test]
    fn elo_relabelling_permutes_table(js in judgments(6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let old = ids(6);
        let new: Vec<ImageId> = perm.iter().map(|&p| ImageId::new(format!("z{p}"))).collect();
        let map: BTreeMap<&ImageId, &ImageId> = old.iter().zip(&new).collect();
        let renamed: Vec<PairJudgment> = js
            .iter()
            .map(|j| PairJudgment { a: map[&j.a].clone(), b: map[&j.b].clone(), ..j.clone() })
            .collect();
        let t1 = run_elo(&js, &short_elo()).unwrap();
        let t2 = run_elo(&renamed, &short_elo()).unwrap();
        for (id, q) in &t1.values {
            prop_assert_eq!(t2.get(map[id]), Some(*q));
        }
    }

    #[test]
    fn extra_win_never_lowers_gap(seq in proptest::collection::vec(outcome(), 0..30), at in 0usize..31) {
        let ab = [ImageId::new("a"), ImageId::new("b")];
        let tau = EloConfig::default().temperature;
        let gap = |extra: Option<usize>| {
            let mut s = EloState::new(&ab, 1500.0);
            for (i, o) in seq.iter().enumerate() {
                if extra == Some(i) {
                    s.update_pair(&ab[0], &ab[1], 1.0, 32.0, tau).unwrap();
                }
                s.update_pair(&ab[0], &ab[1], o.score(), 32.0, tau).unwrap();
            }
            if extra.is_some_and(|e| e >= seq.len()) {
                s.update_pair(&ab[0], &ab[1], 1.0, 32.0, tau).unwrap();
            }
            s.rating(&ab[0]).unwrap() - s.rating(&ab[1]).unwrap()
        };
        prop_assert!(gap(Some(at)) >= gap(None) - 1e-9);
    }

    #[test]
    fn anchor_pull_back_contracts(js in judgments(6), alpha in 0.05..1.0f64, level in 1.0..5.0f64) {
        // equal steps and a single pass make the anchored run the plain run
        // followed by exactly one pull-back
        let cfg = EloConfig { passes: 1, step_k_anchor: 32.0, anchor_strength: alpha, ..EloConfig::default() };
        let anchor = ImageId::new("i02");
        let set = AnchorSet::new(vec![Anchor::new(anchor.clone(), level, level.round() as u8)]);
        let plain = run_elo(&js, &cfg).unwrap();
        let anchored = run_anchored_elo(&js, &set, &cfg).unwrap();
        let target = 1500.0 + (level - 3.0) * 400.0;
        let before = (plain.get(&anchor).unwrap() - target).abs();
        let after = (anchored.get(&anchor).unwrap() - target).abs();
        prop_assert!((after - (1.0 - alpha) * before).abs() < 1e-9);
        for (id, q) in &plain.values {
            if *id != anchor {
                prop_assert_eq!(anchored.get(id), Some(*q));
            }
        }
    }

    #[test]
    fn davidson_rows_sum_to_one(qi in -30.0..30.0f64, qj in -30.0..30.0f64, nu in 0.0..50.0f64) {
        let (w, t, l) = davidson_probs(qi, qj, nu).unwrap();
        prop_assert!((w + t + l - 1.0).abs() < 1e-12);
        prop_assert!(w >= 0.0 && t >= 0.0 && l >= 0.0);
    }

    #[test]
    fn srcc_ignores_monotone_maps(x in proptest::collection::vec(-5.0..5.0f64, 3..20), y in proptest::collection::vec(-5.0..5.0f64, 20)) {
        let y = &y[..x.len()];
        let base = srcc(&x, y);
        let mapped: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + v.powi(3)).collect();
        match (base, srcc(&mapped, y)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn plcc_ignores_affine_maps(
        x in proptest::collection::vec(-5.0..5.0f64, 3..20),
        y in proptest::collection::vec(-5.0..5.0f64, 20),
        scale in 0.1..10.0f64,
        shift in -10.0..10.0f64,
    ) {
        let y = &y[..x.len()];
        let mapped: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        if let (Ok(a), Ok(b)) = (plcc(&x, y), plcc(&mapped, y)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn decision_agreement_is_symmetric(
        a in proptest::collection::vec(1.0..5.0f64, 8),
        b in proptest::collection::vec(1.0..5.0f64, 8),
        eps in 0.0..0.5f64,
    ) {
        let ids = ids(8);
        let ta: BTreeMap<ImageId, f64> = ids.iter().cloned().zip(a).collect();
        let tb: BTreeMap<ImageId, f64> = ids.iter().cloned().zip(b).collect();
        let pairs = all_pairs(&ids);
        prop_assert_eq!(
            decision_agreement(&ta, &tb, &pairs, eps).unwrap(),
            decision_agreement(&tb, &ta, &pairs, eps).unwrap()
        );
    }

    #[test]
    fn agreement_stats_ignore_relabelling(
        labels in proptest::collection::vec(proptest::collection::vec(1i32..=5, 4), 6),
        rater_perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        subject_perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let permuted: Vec<Vec<i32>> = subject_perm
            .iter()
            .map(|&s| rater_perm.iter().map(|&r| labels[s][r]).collect())
            .collect();
        let close = |a: prefscore_core::Result<f64>, b: prefscore_core::Result<f64>| match (a, b) {
            (Ok(x), Ok(y)) => (x - y).abs() < 1e-12,
            (a, b) => a.is_err() == b.is_err(),
        };
        let m1 = LabelMatrix::complete(labels.clone());
        let m2 = LabelMatrix::complete(permuted.clone());
        prop_assert!(close(fleiss_kappa(&m1), fleiss_kappa(&m2)));
        prop_assert!(close(krippendorff_alpha_nominal(&m1), krippendorff_alpha_nominal(&m2)));

        // W: raters are rows, subjects are columns
        let as_rows = |m: &[Vec<i32>]| -> Vec<Vec<f64>> {
            (0..4).map(|r| m.iter().map(|row| f64::from(row[r])).collect()).collect()
        };
        let names: Vec<String> = (0..4).map(|r| format!("r{r}")).collect();
        let w1 = RankingMatrix::from_scores(ids(6), names.clone(), &as_rows(&labels)).unwrap();
        let w2 = RankingMatrix::from_scores(ids(6), names, &as_rows(&permuted)).unwrap();
        prop_assert!(close(kendalls_w(&w1), kendalls_w(&w2)));
    }

    #[test]
    fn bridge_output_stays_in_range(q in -100.0..100.0f64, lo in -10.0..0.0f64, width in 0.01..20.0f64, lambda in 0.5..12.0f64) {
        let cal = BridgeCalibration { steepness: lambda, ..BridgeCalibration::new(lo, lo + width) };
        let (min, max) = cal.output_range();
        let s = bridge_calibrate(q, &cal).unwrap();
        prop_assert!(s >= min - 1e-12 && s <= max + 1e-12);
    }

    #[test]
    fn bridge_is_monotone(q1 in 0.0..1.0f64, q2 in 0.0..1.0f64) {
        prop_assume!(q1 < q2);
        let cal = BridgeCalibration::new(0.0, 1.0);
        prop_assert!(bridge_calibrate(q1, &cal).unwrap() < bridge_calibrate(q2, &cal).unwrap());
    }

    #[test]
    fn two_point_sigmoid_round_trips(q1 in -3.0..3.0f64, dq in 0.1..3.0f64, s1 in 1.2..3.0f64, ds in 0.1..1.7f64) {
        let pts = [(q1, s1), (q1 + dq, s1 + ds)];
        let fit = fit_global_sigmoid(&pts).unwrap();
        prop_assert!(fit.slope > 0.0);
        for (q, s) in pts {
            prop_assert!((apply_sigmoid(q, &fit) - s).abs() < 1e-9);
        }
    }

    #[test]
    fn fidelity_properties(p in 0.0..=1.0f64, q in 0.0..=1.0f64) {
        prop_assert!((fidelity(p, p).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((fidelity(p, q).unwrap() - fidelity(q, p).unwrap()).abs() < 1e-15);
        prop_assert!(fidelity(p, q).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn pair_weight_is_bounded(a in 1.0..5.0f64, b in 1.0..5.0f64, tw in 0.01..4.0f64) {
        let w = pair_weight(a, b, tw).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn advantages_are_standardised(r in proptest::collection::vec(-5.0..5.0f64, 2..16), shift in -10.0..10.0f64, scale in 0.1..10.0f64) {
        let adv = grpo_advantages(&r).unwrap();
        let g = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / g;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / g;
        prop_assert!(mean.abs() < 1e-12);
        if adv.iter().any(|a| *a != 0.0) {
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-12);
            let moved: Vec<f64> = r.iter().map(|v| scale * v + shift).collect();
            for (a, b) in adv.iter().zip(grpo_advantages(&moved).unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_reward_ignores_partner_order_and_dimension_order(
        scores in proptest::collection::vec(proptest::collection::vec((1.0..5.0f64, 1.0..5.0f64), 3), 4),
        pseudo in proptest::collection::vec((1.0..5.0f64, 1.0..5.0f64), 4),
    ) {
        let ids = ids(4);
        let samples: Vec<GroupSample> = ids
            .iter()
            .zip(&scores)
            .map(|(id, c)| GroupSample { image: id.clone(), candidates: c.iter().map(|&(x, y)| Some(vec![x, y])).collect() })
            .collect();
        let table: BTreeMap<ImageId, Vec<f64>> = ids.iter().cloned().zip(pseudo.iter().map(|&(x, y)| vec![x, y])).collect();
        let cfg = RewardConfig::default();
        let base = rank_reward(&samples, &table, &cfg).unwrap();

        let mut reversed = samples.clone();
        reversed.reverse();
        let rev = rank_reward(&reversed, &table, &cfg).unwrap();
        for (a, b) in base.iter().zip(rev.iter().rev()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        let swap = |v: &Vec<f64>| vec![v[1], v[0]];
        let swapped: Vec<GroupSample> = samples
            .iter()
            .map(|s| GroupSample { image: s.image.clone(), candidates: s.candidates.iter().map(|c| c.as_ref().map(swap)).collect() })
            .collect();
        let table2: BTreeMap<ImageId, Vec<f64>> = table.iter().map(|(k, v)| (k.clone(), swap(v))).collect();
        let sw = rank_reward(&swapped, &table2, &cfg).unwrap();
        for (a, b) in base.iter().zip(&sw) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posterior_map_rises_with_extra_win(
        refs in proptest::collection::vec((1000.0..2000.0f64, prop_oneof![Just(0.0), Just(0.5), Just(1.0)]), 1..12),
        r in 1000.0..2000.0f64,
    ) {
        let tau = EloConfig::default().temperature;
        let base = posterior_map(&refs, 1500.0, 200.0, tau).unwrap().q;
        let mut more = refs.clone();
        more.push((r, 1.0));
        prop_assert!(posterior_map(&more, 1500.0, 200.0, tau).unwrap().q >= base - 1e-6);
    }

    #[test]
    fn induced_pairs_are_antisymmetric_and_transitive(scores in proptest::collection::vec(1i32..=5, 6)) {
        let ids = ids(6);
        let ratings: Vec<RatingRecord> = ids.iter().zip(&scores).map(|(id, &s)| RatingRecord::new("r", id.clone(), "d", s)).collect();
        let pairs = all_pairs(&ids);
        let flipped: Vec<(ImageId, ImageId)> = pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        let fwd = induce_pairwise_from_ratings(&ratings, &pairs).unwrap();
        let back = induce_pairwise_from_ratings(&ratings, &flipped).unwrap();
        for (f, b) in fwd.iter().zip(&back) {
            prop_assert_eq!(f.outcome, b.outcome.mirrored());
        }
        prop_assert_eq!(transitivity_violation_rate(&fwd).cycles, 0);
    }

    #[test]
    fn synthetic_judge_mirrors_and_relabels(
        latent in proptest::collection::vec((1.0..5.0f64, 1.0..5.0f64), 5),
        noise in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let dims = DimensionSet::from_names(&["x", "y"]).unwrap();
        let ids = ids(5);
        let table: BTreeMap<ImageId, Vec<f64>> = ids.iter().cloned().zip(latent.iter().map(|&(a, b)| vec![a, b])).collect();
        let cfg = SyntheticJudgeConfig { latent: table, noise_std: noise, tie_band: 0.1, seed, span: Default::default() };
        let mut judge = SyntheticJudge::new(dims, cfg).unwrap();
        for (a, b) in all_pairs(&ids) {
            let ab = judge.compare(&a, &b).unwrap();
            let ba = judge.compare(&b, &a).unwrap();
            prop_assert_eq!(ab, ba.mirrored());
        }
    }

    #[test]
    fn noiseless_judge_follows_latent_sign(latent in proptest::collection::vec(1.0..5.0f64, 5)) {
        let dims = DimensionSet::from_names(&["x"]).unwrap();
        let ids = ids(5);
        let table: BTreeMap<ImageId, Vec<f64>> = ids.iter().cloned().zip(latent.iter().map(|&a| vec![a])).collect();
        let cfg = SyntheticJudgeConfig { latent: table, noise_std: 0.0, tie_band: 0.0, seed: 1, span: Default::default() };
        let mut judge = SyntheticJudge::new(dims, cfg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    let v = judge.compare(&ids[i], &ids[j]).unwrap();
                    prop_assert_eq!(v.outcomes().unwrap()[0], Outcome::from_scores(latent[i], latent[j]));
                }
            }
        }
    }
}
