//! Independent reference computations. Each check runs a batch of seeded
//! random instances and returns the largest deviation from the library, or
//! an error describing a structural mismatch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use prefscore_core::bridge::{log_posterior, posterior_map};
use prefscore_core::calibration::ScoreSpan;
use prefscore_core::davidson::{fit_anchored_dbt, neg_log_posterior, DavidsonParams, DbtConfig};
use prefscore_core::elo::{run_anchored_elo, run_elo, EloConfig};
use prefscore_core::judge::{Judge, SyntheticJudge, SyntheticJudgeConfig};
use prefscore_core::reward::{fidelity, grpo_advantages, rank_reward, GroupSample, RewardConfig};
use prefscore_core::stats::agreement::{
    fleiss_kappa, kendalls_w, krippendorff_alpha_nominal, LabelMatrix, RankingMatrix,
};
use prefscore_core::stats::ks::ks_two_sample;
use prefscore_core::stats::protocol::{
    all_pairs, decision_agreement, to_consensus_pra, transitivity_violation_rate, triplet_separation, Tier,
};
use prefscore_core::stats::srcc;
use prefscore_core::{keyed_rng, Anchor, AnchorSet, DimensionSet, ImageId, Outcome, PairJudgment};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<f64, String>;

pub fn ids(n: usize) -> Vec<ImageId> {
    (0..n).map(|i| ImageId::new(format!("i{i}"))).collect()
}

fn random_outcome<R: Rng>(rng: &mut R) -> Outcome {
    match rng.random_range(0..3) {
        0 => Outcome::AWins,
        1 => Outcome::Tie,
        _ => Outcome::BWins,
    }
}

// ---- Davidson gradient ----

/// Analytic gradient against central differences on 20 random instances.
pub fn dbt_gradient() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = keyed_rng(100, inst);
        let n = rng.random_range(3..9);
        let items = ids(n);
        let judgments: Vec<PairJudgment> = (0..rng.random_range(5..40))
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n);
                while b == a {
                    b = rng.random_range(0..n);
                }
                PairJudgment::new("r", items[a].clone(), items[b].clone(), "overall", random_outcome(&mut rng))
            })
            .collect();
        let anchors = AnchorSet::new(vec![
            Anchor::new(items[0].clone(), rng.random_range(1.5..4.5), 3),
            Anchor::new(items[1].clone(), rng.random_range(1.5..4.5), 3),
        ]);
        let lambda = rng.random_range(0.0..2.0);
        let qualities: BTreeMap<ImageId, f64> =
            items.iter().map(|id| (id.clone(), rng.random_range(-3.0..3.0))).collect();
        let nu = rng.random_range(0.05..4.0);
        let params = DavidsonParams { qualities: qualities.clone(), tie_propensity: nu };
        let (_, grad) = neg_log_posterior(&params, &judgments, &anchors, lambda).map_err(|e| e.to_string())?;

        let h = 1e-6;
        let eval = |q: &BTreeMap<ImageId, f64>, nu: f64| {
            neg_log_posterior(&DavidsonParams { qualities: q.clone(), tie_propensity: nu }, &judgments, &anchors, lambda)
                .unwrap()
                .0
        };
        for id in &items {
            let mut up = qualities.clone();
            let mut down = qualities.clone();
            *up.get_mut(id).unwrap() += h;
            *down.get_mut(id).unwrap() -= h;
            let fd = (eval(&up, nu) - eval(&down, nu)) / (2.0 * h);
            worst = worst.max((fd - grad.qualities[id]).abs());
        }
        let ln = nu.ln();
        let fd = (eval(&qualities, (ln + h).exp()) - eval(&qualities, (ln - h).exp())) / (2.0 * h);
        worst = worst.max((fd - grad.log_nu).abs());
    }
    Ok(worst)
}

// ---- exact recovery ----

/// SRCC against the planted order for plain Elo, anchored Elo and anchored
/// DBT on noiseless outcomes over a complete graph; returns the smallest.
pub fn noiseless_recovery() -> Check {
    // Anchors sit exactly on their planted level, on adjacent ranks. Noiseless
    // outcomes spread plain Elo by roughly one anchor gap per rank, so these
    // targets agree with the scale the data implies.
    let latents = [1.2, 1.5, 1.8, 2.0, 3.0, 4.0, 4.2, 4.4, 4.6, 4.8];
    let items = ids(latents.len());
    let dims = DimensionSet::from_names(&["overall"]).unwrap();
    let config = SyntheticJudgeConfig {
        latent: items.iter().zip(latents).map(|(id, l)| (id.clone(), vec![l])).collect(),
        noise_std: 0.0,
        tie_band: 0.0,
        seed: 0,
        span: ScoreSpan::FIVE_POINT,
    };
    let mut judge = SyntheticJudge::new(dims, config).map_err(|e| e.to_string())?;
    let mut js = Vec::new();
    for rater in 0..5 {
        for (a, b) in all_pairs(&items) {
            let v = judge.compare(&a, &b).map_err(|e| e.to_string())?;
            js.push(PairJudgment::new(format!("r{rater}"), a, b, "overall", v.outcomes().unwrap()[0]));
        }
    }
    let anchors = AnchorSet::new(
        [(3, 2.0), (4, 3.0), (5, 4.0)].iter().map(|&(k, s)| Anchor::new(items[k].clone(), s, s as u8)).collect(),
    );
    let planted = latents.to_vec();
    let err = |e: prefscore_core::Error| e.to_string();
    let elo = run_elo(&js, &EloConfig::default()).map_err(err)?.aligned(&items).map_err(err)?;
    let anchored = run_anchored_elo(&js, &anchors, &EloConfig::default()).map_err(err)?.aligned(&items).map_err(err)?;
    let dbt = fit_anchored_dbt(&js, &anchors, &DbtConfig::default()).map_err(err)?;
    let dbt = dbt.params.to_latent().aligned(&items).map_err(err)?;
    let mut lowest: f64 = 1.0;
    for est in [elo, anchored, dbt] {
        lowest = lowest.min(srcc(&est, &planted).map_err(err)?);
    }
    Ok(lowest)
}

// ---- agreement statistics ----

fn brute_ranks(row: &[f64]) -> Vec<f64> {
    row.iter()
        .map(|&x| {
            let below = row.iter().filter(|&&y| y < x).count() as f64;
            let equal = row.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_w(scores: &[Vec<f64>]) -> f64 {
    let m = scores.len() as f64;
    let n = scores[0].len();
    let ranks: Vec<Vec<f64>> = scores.iter().map(|r| brute_ranks(r)).collect();
    let totals: Vec<f64> = (0..n).map(|i| ranks.iter().map(|r| r[i]).sum()).collect();
    let mean = m * (n as f64 + 1.0) / 2.0;
    let s: f64 = totals.iter().map(|t| (t - mean).powi(2)).sum();
    let mut t_sum = 0.0;
    for row in scores {
        let mut seen = BTreeSet::new();
        for &v in row {
            if seen.insert(v.to_bits()) {
                let t = row.iter().filter(|&&y| y == v).count() as f64;
                t_sum += t.powi(3) - t;
            }
        }
    }
    let nf = n as f64;
    12.0 * s / (m * m * (nf.powi(3) - nf) - m * t_sum)
}

pub fn kendalls_w_vs_formula() -> Check {
    let (mut worst, mut checked) = (0.0_f64, 0);
    for inst in 0..200u64 {
        let mut rng = keyed_rng(200, inst);
        let n = rng.random_range(2..=8);
        let m = rng.random_range(2..=5);
        let scores: Vec<Vec<f64>> =
            (0..m).map(|_| (0..n).map(|_| rng.random_range(1..=5) as f64).collect()).collect();
        let raters = (0..m).map(|r| r.to_string()).collect();
        let matrix = RankingMatrix::from_scores(ids(n), raters, &scores).map_err(|e| e.to_string())?;
        let want = brute_w(&scores);
        match kendalls_w(&matrix) {
            Ok(w) => {
                worst = worst.max((w - want.clamp(0.0, 1.0)).abs());
                checked += 1;
            }
            Err(_) if !want.is_finite() => {}
            Err(e) => return Err(format!("instance {inst}: {e} where the formula gives {want}")),
        }
    }
    if checked <= 150 {
        return Err(format!("only {checked} instances were defined"));
    }
    Ok(worst)
}

fn random_labels<R: Rng>(rng: &mut R, n: usize, m: usize, cats: i32, missing: bool) -> Vec<Vec<Option<i32>>> {
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| if missing && rng.random_bool(0.2) { None } else { Some(rng.random_range(0..cats)) })
                .collect()
        })
        .collect()
}

fn brute_fleiss(labels: &[Vec<Option<i32>>]) -> f64 {
    let m = labels[0].len();
    let n = labels.len();
    let mut p_bar = 0.0;
    for row in labels {
        let mut agree = 0.0;
        for r in 0..m {
            for s in 0..m {
                if r != s && row[r] == row[s] {
                    agree += 1.0;
                }
            }
        }
        p_bar += agree / (m * (m - 1)) as f64;
    }
    p_bar /= n as f64;
    let all: Vec<i32> = labels.iter().flatten().flatten().copied().collect();
    let cats: BTreeSet<i32> = all.iter().copied().collect();
    let p_e: f64 = cats
        .iter()
        .map(|c| (all.iter().filter(|&&x| x == *c).count() as f64 / all.len() as f64).powi(2))
        .sum();
    (p_bar - p_e) / (1.0 - p_e)
}

pub fn fleiss_vs_pairwise_definition() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(300, inst);
        let (n, m) = (rng.random_range(1..=8), rng.random_range(2..=5));
        let labels = random_labels(&mut rng, n, m, 3, false);
        let want = brute_fleiss(&labels);
        match fleiss_kappa(&LabelMatrix::new(labels)) {
            Ok(k) => worst = worst.max((k - want).abs()),
            Err(_) if !want.is_finite() => {}
            Err(e) => return Err(format!("instance {inst}: {e} where the definition gives {want}")),
        }
    }
    Ok(worst)
}

/// α from the pairable-value definition: observed disagreement within
/// units against expected disagreement over all pairable values.
fn brute_alpha(labels: &[Vec<Option<i32>>]) -> f64 {
    let units: Vec<Vec<i32>> = labels
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let values: Vec<i32> = units.iter().flatten().copied().collect();
    let n = values.len() as f64;
    let mut d_o = 0.0;
    for u in &units {
        let mut diff = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    diff += 1.0;
                }
            }
        }
        d_o += diff / (u.len() as f64 - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j && values[i] != values[j] {
                d_e += 1.0;
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

pub fn alpha_vs_pairable_values() -> Check {
    let (mut worst, mut checked) = (0.0_f64, 0);
    for inst in 0..150u64 {
        let mut rng = keyed_rng(400, inst);
        let (n, m) = (rng.random_range(2..=8), rng.random_range(2..=5));
        let labels = random_labels(&mut rng, n, m, 4, true);
        let want = brute_alpha(&labels);
        match krippendorff_alpha_nominal(&LabelMatrix::new(labels)) {
            Ok(a) => {
                worst = worst.max((a - want).abs());
                checked += 1;
            }
            Err(_) if !want.is_finite() => {}
            Err(e) => return Err(format!("instance {inst}: {e} where the definition gives {want}")),
        }
    }
    if checked <= 100 {
        return Err(format!("only {checked} instances were defined"));
    }
    Ok(worst)
}

// ---- protocol diagnostics ----

pub fn triplets_vs_enumeration() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(500, inst);
        let n = rng.random_range(3..=8);
        let items = ids(n);
        let mut tiers = BTreeMap::new();
        for (k, id) in items.iter().enumerate() {
            let t = if k < 3 { k } else { rng.random_range(0..3) };
            tiers.insert(id.clone(), [Tier::High, Tier::Medium, Tier::Low][t]);
        }
        let scores: BTreeMap<ImageId, f64> =
            items.iter().map(|id| (id.clone(), rng.random_range(0..4) as f64)).collect();
        let (mut hit, mut total) = (0.0, 0.0);
        for h in items.iter().filter(|i| tiers[*i] == Tier::High) {
            for m in items.iter().filter(|i| tiers[*i] == Tier::Medium) {
                for l in items.iter().filter(|i| tiers[*i] == Tier::Low) {
                    total += 1.0;
                    if scores[h] > scores[m] && scores[m] > scores[l] {
                        hit += 1.0;
                    }
                }
            }
        }
        let got = triplet_separation(&scores, &tiers).map_err(|e| e.to_string())?;
        worst = worst.max((got - hit / total).abs());
    }
    Ok(worst)
}

pub fn pra_vs_enumeration() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(600, inst);
        let (n, m) = (rng.random_range(2..=8), rng.random_range(1..=5));
        let consensus: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let raters: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..6) as f64).collect()).collect();
        let mut total = 0.0;
        let mut defined = true;
        for r in &raters {
            let (mut hit, mut counted) = (0.0, 0.0);
            for i in 0..n {
                for j in i + 1..n {
                    if consensus[i] != consensus[j] {
                        counted += 1.0;
                        let same = (consensus[i] < consensus[j]) == (r[i] < r[j]) && r[i] != r[j];
                        hit += f64::from(u8::from(same));
                    }
                }
            }
            if counted == 0.0 {
                defined = false;
                break;
            }
            total += hit / counted;
        }
        match (to_consensus_pra(&raters, &consensus), defined) {
            (Ok(v), true) => worst = worst.max((v - total / m as f64).abs()),
            (Err(_), false) => {}
            (got, _) => return Err(format!("instance {inst}: {got:?} but defined = {defined}")),
        }
    }
    Ok(worst)
}

pub fn transitivity_vs_enumeration() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(700, inst);
        let n = rng.random_range(3..=8);
        let items = ids(n);
        // ordered pair → outcome for the lower index; some pairs left unjudged
        let mut judged: BTreeMap<(usize, usize), Outcome> = BTreeMap::new();
        let mut js = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.85) {
                    let o = random_outcome(&mut rng);
                    let swap = rng.random_bool(0.5);
                    judged.insert((i, j), o);
                    js.push(if swap {
                        PairJudgment::new("r", items[j].clone(), items[i].clone(), "overall", o.mirrored())
                    } else {
                        PairJudgment::new("r", items[i].clone(), items[j].clone(), "overall", o)
                    });
                }
            }
        }
        let beats = |x: usize, y: usize| -> Option<bool> {
            let (key, flip) = if x < y { ((x, y), false) } else { ((y, x), true) };
            judged.get(&key).and_then(|o| match (o, flip) {
                (Outcome::Tie, _) => None,
                (Outcome::AWins, f) => Some(!f),
                (Outcome::BWins, f) => Some(f),
            })
        };
        let (mut triples, mut cycles) = (0, 0);
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if !(judged.contains_key(&(a, b)) && judged.contains_key(&(b, c)) && judged.contains_key(&(a, c))) {
                        continue;
                    }
                    triples += 1;
                    let fwd = beats(a, b) == Some(true) && beats(b, c) == Some(true) && beats(c, a) == Some(true);
                    let back = beats(b, a) == Some(true) && beats(c, b) == Some(true) && beats(a, c) == Some(true);
                    if fwd || back {
                        cycles += 1;
                    }
                }
            }
        }
        let t = transitivity_violation_rate(&js);
        if (t.triples, t.cycles) != (triples, cycles) {
            return Err(format!("instance {inst}: ({}, {}) vs ({triples}, {cycles})", t.triples, t.cycles));
        }
        let want = if triples == 0 { 0.0 } else { cycles as f64 / triples as f64 };
        worst = worst.max((t.rate - want).abs());
    }
    Ok(worst)
}

pub fn decision_agreement_vs_enumeration() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(800, inst);
        let n = rng.random_range(2..=8);
        let items = ids(n);
        let a: BTreeMap<ImageId, f64> = items.iter().map(|i| (i.clone(), rng.random_range(0..20) as f64 * 0.05)).collect();
        let b: BTreeMap<ImageId, f64> = items.iter().map(|i| (i.clone(), rng.random_range(0..20) as f64 * 0.05)).collect();
        let eps = 0.1;
        let sign = |d: f64| if d.abs() < eps { 0 } else if d > 0.0 { 1 } else { -1 };
        let pairs = all_pairs(&items);
        let agree: f64 = pairs.iter().map(|(x, y)| f64::from(u8::from(sign(a[x] - a[y]) == sign(b[x] - b[y])))).sum();
        let got = decision_agreement(&a, &b, &pairs, eps).map_err(|e| e.to_string())?;
        worst = worst.max((got - agree / pairs.len() as f64).abs());
    }
    Ok(worst)
}

// ---- Kolmogorov–Smirnov ----

fn binom(n: u32, k: u32) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// `(D·n·m, P(D ≥ d))` by integer path counting.
pub fn exact_ks(a: &[f64], b: &[f64]) -> (u64, f64) {
    let (n, m) = (a.len(), b.len());
    let mut d_scaled = 0u64;
    for &x in a.iter().chain(b) {
        let fa = a.iter().filter(|&&v| v <= x).count() as i64;
        let fb = b.iter().filter(|&&v| v <= x).count() as i64;
        d_scaled = d_scaled.max((fa * m as i64 - fb * n as i64).unsigned_abs());
    }
    let mut paths = vec![vec![0u128; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            if (i as i64 * m as i64 - j as i64 * n as i64).unsigned_abs() >= d_scaled {
                continue;
            }
            paths[i][j] = if i == 0 && j == 0 {
                1
            } else {
                (if i > 0 { paths[i - 1][j] } else { 0 }) + (if j > 0 { paths[i][j - 1] } else { 0 })
            };
        }
    }
    let total = binom((n + m) as u32, n as u32);
    (d_scaled, 1.0 - paths[n][m] as f64 / total as f64)
}

pub fn normal_sample(seed: u64, n: usize, shift: f64) -> Vec<f64> {
    let mut rng = keyed_rng(seed, 0);
    (0..n).map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
}

/// p-value error on 50 vs 50 samples, where the library may switch to the
/// asymptotic form.
pub fn ks_fifty_point() -> Check {
    let mut worst: f64 = 0.0;
    for (k, shift) in [0.0, 0.2, 0.4, 0.6, 0.9].into_iter().enumerate() {
        let a = normal_sample(900 + k as u64, 50, 0.0);
        let b = normal_sample(950 + k as u64, 50, shift);
        let (d_scaled, p) = exact_ks(&a, &b);
        let r = ks_two_sample(&a, &b).map_err(|e| e.to_string())?;
        if r.statistic != d_scaled as f64 / 2500.0 {
            return Err(format!("shift {shift}: D = {} vs {}", r.statistic, d_scaled as f64 / 2500.0));
        }
        worst = worst.max((r.p_value - p).abs());
    }
    Ok(worst)
}

pub fn ks_small_exact() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..30u64 {
        let mut rng = keyed_rng(1000, inst);
        let (n, m) = (rng.random_range(1..=20), rng.random_range(1..=20));
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0..12) as f64).collect();
        let (d_scaled, p) = exact_ks(&a, &b);
        let r = ks_two_sample(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((r.statistic - d_scaled as f64 / (n * m) as f64).abs());
        if d_scaled > 0 {
            worst = worst.max((r.p_value - p).abs());
        }
    }
    Ok(worst)
}

// ---- bridge posterior ----

/// MAP error relative to the prior std, against grid plus ternary search.
pub fn posterior_map_vs_search() -> Check {
    let tau = 400.0 / std::f64::consts::LN_10;
    let mut worst: f64 = 0.0;
    for inst in 0..40u64 {
        let mut rng = keyed_rng(1100, inst);
        let mean = rng.random_range(1300.0..1700.0);
        let std = rng.random_range(50.0..300.0);
        let refs: Vec<(f64, f64)> = (0..rng.random_range(1..=10))
            .map(|_| (rng.random_range(1000.0..2000.0), [0.0, 0.5, 1.0][rng.random_range(0..3)]))
            .collect();
        let post = posterior_map(&refs, mean, std, tau).map_err(|e| e.to_string())?;
        let (lo, hi) = (mean - 6.0 * std, mean + 6.0 * std);
        let f = |q: f64| log_posterior(q, &refs, mean, std, tau);
        let steps = 2_000;
        let h = (hi - lo) / steps as f64;
        let best = (0..=steps).map(|s| lo + h * s as f64).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        // concave: ternary search inside the winning cell's neighbourhood
        let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
        for _ in 0..200 {
            let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
            if f(m1) < f(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let reference = 0.5 * (a + b);
        if f(post.q) < f(reference) - 1e-12 {
            return Err(format!("instance {inst}: MAP {} is worse than search {reference}", post.q));
        }
        worst = worst.max((post.q - reference).abs() / std);
    }
    Ok(worst)
}

// ---- reward ----

/// Φ from the all-positive series
/// `erf(x) = 2/√π e^{−x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!` near the centre and the
/// Laplace continued fraction for `erfc` in the tails.
pub fn phi(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let erfc = if x < 2.0 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-20 * sum.max(1e-300) && n < 500.0 {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    } else {
        let mut t = x;
        for n in (1..=300).rev() {
            t = x + (n as f64 / 2.0) / t;
        }
        (-x * x).exp() / (std::f64::consts::PI.sqrt() * t)
    };
    if z >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

fn reference_rewards(samples: &[GroupSample], pseudo: &BTreeMap<ImageId, Vec<f64>>, tau_w: f64, eps: f64) -> Vec<Vec<f64>> {
    let dims = pseudo.values().next().unwrap().len();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for s in samples {
        let parsed: Vec<&Vec<f64>> = s.candidates.iter().flatten().collect();
        let mut mu = vec![0.0; dims];
        let mut var = vec![0.0; dims];
        for d in 0..dims {
            mu[d] = parsed.iter().map(|c| c[d]).sum::<f64>() / parsed.len() as f64;
            if parsed.len() > 1 {
                var[d] = parsed.iter().map(|c| (c[d] - mu[d]).powi(2)).sum::<f64>() / (parsed.len() - 1) as f64;
            }
        }
        means.push(mu);
        vars.push(var);
    }
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let mut row = Vec::new();
        for cand in &s.candidates {
            let Some(c) = cand else {
                row.push(0.0);
                continue;
            };
            let mut total = 0.0;
            for d in 0..dims {
                let mut num = 0.0;
                let mut den = 0.0;
                let mut plain = 0.0;
                let mut count = 0.0;
                for z in 0..samples.len() {
                    if z == i {
                        continue;
                    }
                    let t_i = pseudo[&samples[i].image][d];
                    let t_z = pseudo[&samples[z].image][d];
                    let p = phi((c[d] - means[z][d]) / (vars[i][d] + vars[z][d] + eps).sqrt());
                    let g = if t_i > t_z { 1.0 } else if t_i < t_z { 0.0 } else { 0.5 };
                    let f = (p * g).sqrt() + ((1.0 - p) * (1.0 - g)).sqrt();
                    let w = ((t_i - t_z).abs() / tau_w).min(1.0);
                    num += w * f;
                    den += w;
                    plain += f;
                    count += 1.0;
                }
                total += if den > 0.0 { num / den } else { plain / count };
            }
            row.push(total / dims as f64);
        }
        out.push(row);
    }
    out
}

/// Rank reward against a straight-line reimplementation on 100 instances.
pub fn rank_reward_vs_reference() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = keyed_rng(1200, inst);
        let images = rng.random_range(2..=6);
        let g = rng.random_range(1..=6);
        let dims = rng.random_range(1..=3);
        let coarse = rng.random_bool(0.3);
        let mut pseudo = BTreeMap::new();
        let mut samples = Vec::new();
        for i in 0..images {
            let id = ImageId::new(format!("img{i}"));
            let target: Vec<f64> = (0..dims)
                .map(|_| if coarse { rng.random_range(2..=8) as f64 * 0.5 } else { rng.random_range(1.0..5.0) })
                .collect();
            pseudo.insert(id.clone(), target);
            let mut candidates: Vec<Option<Vec<f64>>> = (0..g)
                .map(|_| {
                    (!rng.random_bool(0.15)).then(|| (0..dims).map(|_| rng.random_range(1.0..5.0)).collect())
                })
                .collect();
            if candidates.iter().all(Option::is_none) {
                candidates[0] = Some((0..dims).map(|_| rng.random_range(1.0..5.0)).collect());
            }
            samples.push(GroupSample { image: id, candidates });
        }
        let config = RewardConfig { gap_threshold: rng.random_range(0.1..1.5), ..RewardConfig::default() };
        let got = rank_reward(&samples, &pseudo, &config).map_err(|e| e.to_string())?;
        let want = reference_rewards(&samples, &pseudo, config.gap_threshold, config.variance_floor);
        for (gr, wr) in got.iter().zip(&want) {
            for (a, b) in gr.iter().zip(wr) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// `|fidelity(p, p) − 1|` over 1000 random probabilities.
pub fn self_fidelity() -> Check {
    let mut rng = keyed_rng(1300, 0);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p: f64 = match k {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..=1.0),
        };
        worst = worst.max((fidelity(p, p).map_err(|e| e.to_string())? - 1.0).abs());
    }
    Ok(worst)
}

/// Largest deviation of advantage mean from 0 and population std from 1.
pub fn advantage_moments() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..200u64 {
        let mut rng = keyed_rng(1400, inst);
        let g = rng.random_range(2..=16);
        let scale = rng.random_range(1e-3..1e3);
        let rewards: Vec<f64> = (0..g).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let a = grpo_advantages(&rewards).map_err(|e| e.to_string())?;
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst = worst.max(mean.abs()).max((std - 1.0).abs());
    }
    Ok(worst)
}
