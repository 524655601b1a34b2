//! Statistical properties checked by simulation at a few standard errors.

use pprm::bounds::{
    betting_upper_bound, betting_wealth_path, BettingSpec, CmEb, ConfidenceSequenceSpec,
    VarianceProcess,
};
use pprm::estimators::{ppi_estimate, supervised_estimate};
use pprm::simulator::{
    generate_stream, generate_stream_with_truth, DriftScenario, LossModel, Schedule,
};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn uniform(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / k;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (v / k).sqrt())
}

fn scenario(p: f64, agreement: f64, horizon: u64, seed: u64) -> DriftScenario {
    DriftScenario {
        schedule: Schedule::Constant { p },
        agreement,
        horizon,
        seed,
        ..Default::default()
    }
}

#[test]
fn ppi_estimate_is_unbiased_for_any_fixed_eta() {
    let stream = generate_stream(&scenario(0.25, 0.6, 20_000, 3)).unwrap();
    for eta in [0.0, 0.3, 1.0, 2.0] {
        let xs: Vec<f64> = stream
            .iter()
            .map(|b| ppi_estimate(b, eta, 2.0).unwrap().value)
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 0.25).abs() < 4.0 * se, "eta = {eta}: {m} +- {se}");
    }
}

#[test]
fn continuous_model_estimates_are_unbiased() {
    let s = DriftScenario {
        loss_model: LossModel::BoundedContinuous,
        ..scenario(0.1, 0.8, 20_000, 4)
    };
    let target = s.step_risk(1);
    let stream = generate_stream(&s).unwrap();
    for eta in [0.0, 1.0] {
        let xs: Vec<f64> = stream
            .iter()
            .map(|b| ppi_estimate(b, eta, 1.0).unwrap().value)
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(
            (m - target).abs() < 4.0 * se,
            "eta = {eta}: {m} vs {target}"
        );
    }
}

#[test]
fn simulator_frequencies() {
    let steps = generate_stream_with_truth(&scenario(0.35, 0.8, 10_000, 5)).unwrap();
    let mut truths = Vec::new();
    let mut agree = Vec::new();
    let mut proxies_hi = Vec::new();
    let mut proxies_lo = Vec::new();
    for s in &steps {
        for p in &s.batch.labeled {
            truths.push(p.true_loss);
            agree.push(f64::from(u8::from(p.true_loss == p.synth_loss)));
        }
        for (&t, &u) in s.unlabeled_true.iter().zip(&s.batch.unlabeled_synth) {
            truths.push(t);
            agree.push(f64::from(u8::from(t == u)));
        }
        let all_true = s
            .batch
            .labeled
            .iter()
            .map(|p| p.true_loss)
            .chain(s.unlabeled_true.iter().copied());
        for (t, &x) in all_true.zip(&s.batch.proxies) {
            if t == 1.0 {
                proxies_hi.push(x);
            } else {
                proxies_lo.push(x);
            }
        }
    }
    let (m, se) = mean_se(&truths);
    assert!((m - 0.35).abs() < 4.0 * se, "risk {m}");
    let (a, se) = mean_se(&agree);
    assert!((a - 0.8).abs() < 4.0 * se, "agreement {a}");
    let (lo, se_lo) = mean_se(&proxies_lo);
    let (hi, se_hi) = mean_se(&proxies_hi);
    let (want_lo, want_hi) = (clipped_mean(0.25, 0.15), clipped_mean(0.75, 0.15));
    assert!((lo - want_lo).abs() < 4.0 * se_lo, "{lo} vs {want_lo}");
    assert!((hi - want_hi).abs() < 4.0 * se_hi, "{hi} vs {want_hi}");
}

/// `E[clip01(mu + s G)]` by the midpoint rule over `[-10, 10]`.
fn clipped_mean(mu: f64, s: f64) -> f64 {
    let k = 100_000;
    let h = 20.0 / k as f64;
    (0..k)
        .map(|i| {
            let g = -10.0 + (i as f64 + 0.5) * h;
            (mu + s * g).clamp(0.0, 1.0) * (-0.5 * g * g).exp() * h
        })
        .sum::<f64>()
        / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn continuous_model_correlation() {
    // with noise small enough that clipping is negligible the synthetic and
    // true losses have correlation rho
    let s = DriftScenario {
        loss_model: LossModel::BoundedContinuous,
        noise_scale: 0.05,
        ..scenario(0.5, 0.6, 5_000, 6)
    };
    let steps = generate_stream_with_truth(&s).unwrap();
    let pairs: Vec<(f64, f64)> = steps
        .iter()
        .flat_map(|s| {
            s.unlabeled_true
                .iter()
                .copied()
                .zip(s.batch.unlabeled_synth.iter().copied())
        })
        .collect();
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / k;
    let vx = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / k;
    let vy = pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / k;
    let rho = cov / (vx * vy).sqrt();
    // SE of a correlation estimate is about (1 - rho^2) / sqrt(k)
    assert!((rho - 0.6).abs() < 4.0 * 0.64 / k.sqrt(), "rho = {rho}");
    assert!((mx - 0.5).abs() < 0.002);
}

#[test]
fn cm_eb_lower_bound_is_anytime_valid() {
    let delta = 0.1;
    let cs = CmEb::new(ConfidenceSequenceSpec::default().with_delta(delta)).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    let reps = 600;
    let mu = mu_of_mixture();
    let mut misses = 0;
    for _ in 0..reps {
        let mut vp = VarianceProcess::default();
        for t in 1..=500u64 {
            // skewed two-component mixture
            let x = if uniform(&mut rng) < 0.5 {
                0.6 * uniform(&mut rng)
            } else {
                uniform(&mut rng).powi(3) * 1.2
            };
            let x = x.min(1.0);
            vp.update(x).unwrap();
            let lower = vp.running_mean() - cs.radius(vp.v).unwrap() / t as f64;
            if lower > mu {
                misses += 1;
                break;
            }
        }
    }
    let rate = misses as f64 / reps as f64;
    let se = (delta * (1.0 - delta) / reps as f64).sqrt();
    assert!(rate <= delta + 3.0 * se, "miss rate {rate}");
}

/// Mean of the two-component mixture used above, with the clip at 1
/// accounted for: 0.5 * 0.3 + 0.5 * E[min(1.2 U^3, 1)].
fn mu_of_mixture() -> f64 {
    // E[min(1.2 U^3, 1)] = 1.2 * c^4 / 4 + (1 - c) with c = (1 / 1.2)^(1/3)
    let c = (1.0f64 / 1.2).cbrt();
    0.5 * 0.3 + 0.5 * (1.2 * c.powi(4) / 4.0 + (1.0 - c))
}

#[test]
fn betting_bound_covers_the_mean() {
    let spec = BettingSpec::default();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let reps = 600;
    let mut misses = 0;
    for _ in 0..reps {
        let xs: Vec<f64> = (0..200).map(|_| uniform(&mut rng).powi(2)).collect();
        if betting_upper_bound(&xs, (0.0, 1.0), &spec).unwrap() < 1.0 / 3.0 {
            misses += 1;
        }
    }
    let rate = misses as f64 / reps as f64;
    assert!(
        rate <= 0.05 + 3.0 * (0.05f64 * 0.95 / reps as f64).sqrt(),
        "{rate}"
    );
}

#[test]
fn wealth_is_a_supermartingale_under_the_null() {
    // E[W_n(m)] <= 1 when the mean equals m
    let spec = BettingSpec::default();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    for &m in &[0.2, 0.5, 0.8] {
        let finals: Vec<f64> = (0..3000)
            .map(|_| {
                let xs: Vec<f64> = (0..50)
                    .map(|_| if uniform(&mut rng) < m { 1.0 } else { 0.0 })
                    .collect();
                *betting_wealth_path(&xs, m, &spec).last().unwrap()
            })
            .collect();
        let (mean, se) = mean_se(&finals);
        assert!(mean <= 1.0 + 3.0 * se, "m = {m}: E[W] = {mean} +- {se}");
        assert!(finals.iter().all(|&w| w > 0.0));
    }
}

#[test]
fn supervised_estimate_is_the_labeled_mean() {
    let stream = generate_stream(&scenario(0.4, 0.5, 200, 10)).unwrap();
    for b in &stream {
        let want = b.labeled.iter().map(|p| p.true_loss).sum::<f64>() / b.labeled.len() as f64;
        assert_eq!(supervised_estimate(b).unwrap().value, want);
    }
}
