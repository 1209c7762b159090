use std::f64::consts::FRAC_PI_4;

use cqed_bayes::bayes::{
    gaussian_likelihoods, sequential_diagonal, update_diagonal, update_full, BayesInput, Lambdas, Likelihoods, RecordData, ScaleMode,
    Variant,
};
use cqed_bayes::field::{Branch, Channel, FieldModel, ModelParams};
use cqed_bayes::polaron::{kraus_step, StepRates};
use cqed_bayes::trajectory::{run_trajectory, SimConfig};
use cqed_bayes::{purity_integral, purity_overlap, ComplexAmp, QubitDM};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn params() -> impl Strategy<Value = ModelParams> {
    (-1.0..1.0f64, -0.6..0.6f64, 0.0..2.0f64, 0.5..4.0f64, -3.2..3.2f64).prop_map(|(d, c, e, k, phi)| ModelParams::new(d, c, e, k, phi))
}

fn qubit() -> impl Strategy<Value = QubitDM> {
    (0.0..1.0f64, 0.0..1.0f64, -3.2..3.2f64).prop_map(|(pop, shrink, ph)| {
        let bound = (pop * (1.0 - pop)).sqrt();
        QubitDM { rho_gg: pop, rho_ee: 1.0 - pop, rho_ge: Complex64::from_polar(bound * shrink, ph) }
    })
}

fn alpha0() -> impl Strategy<Value = ComplexAmp> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| ComplexAmp::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_is_a_probability_amplitude(p in params(), a0 in alpha0(), t in 0.0..8.0f64) {
        let d = purity_overlap(t, &p, a0);
        prop_assert!(d > 0.0 && d <= 1.0 + 1e-15);
    }

    #[test]
    fn integral_form_matches_overlap(p in params(), a0 in alpha0(), t in 0.0..6.0f64) {
        let a = purity_integral(t, &p, a0).unwrap();
        prop_assert!((a - purity_overlap(t, &p, a0)).abs() < 1e-9);
    }

    #[test]
    fn posterior_is_a_state(p in params(), prior in qubit(), i_m in -4.0..4.0f64, q_m in -4.0..4.0f64, t_m in 0.05..5.0f64, two in any::<bool>()) {
        let q = if two { Some(q_m) } else { None };
        let mut base: Option<f64> = None;
        for v in [Variant::Bare, Variant::Br1, Variant::Br2Prime] {
            for scale in [ScaleMode::Unit, ScaleMode::Tm] {
                let mut input = BayesInput::new(prior, t_m, RecordData::Integrated { i_m, q_m: q }, p, v);
                input.scale = scale;
                let o = update_full(&input).unwrap();
                prop_assert!(o.rho.validate().is_ok());
                // diagonals do not depend on the variant
                let g = *base.get_or_insert(o.rho.rho_gg);
                prop_assert_eq!(g, o.rho.rho_gg);
            }
        }
    }

    #[test]
    fn purity_factor_only_shrinks_coherence(p in params(), prior in qubit(), i_m in -4.0..4.0f64, t_m in 0.05..5.0f64) {
        let bare = update_full(&BayesInput::new(prior, t_m, RecordData::Integrated { i_m, q_m: None }, p, Variant::Bare)).unwrap();
        let full = update_full(&BayesInput::new(prior, t_m, RecordData::Integrated { i_m, q_m: None }, p, Variant::Br2Prime)).unwrap();
        prop_assert!(full.rho.rho_ge.norm() <= bare.rho.rho_ge.norm() * (1.0 + 1e-12) + 1e-15);
        let mut phases_only = BayesInput::new(prior, t_m, RecordData::Integrated { i_m, q_m: None }, p, Variant::Br2Prime);
        phases_only.lambdas = Lambdas { purity: false, phi1: true, phi2: true };
        let o = update_full(&phases_only).unwrap();
        prop_assert!((o.rho.rho_ge.norm() - bare.rho.rho_ge.norm()).abs() < 1e-12);
    }

    #[test]
    fn two_quadrature_ratio_ignores_q_on_resonance(c in -0.6..0.6f64, e in 0.1..2.0f64, k in 0.5..4.0f64, i_m in -3.0..3.0f64, q1 in -3.0..3.0f64, q2 in -3.0..3.0f64, t_m in 0.1..4.0f64) {
        let p = ModelParams::new(0.0, c, e, k, 0.0);
        let l1 = gaussian_likelihoods(&[i_m, q1], t_m, &p, ComplexAmp::ZERO, &Channel::iq()).unwrap();
        let l2 = gaussian_likelihoods(&[i_m, q2], t_m, &p, ComplexAmp::ZERO, &Channel::iq()).unwrap();
        prop_assert!((l1.log_ratio() - l2.log_ratio()).abs() < 1e-10);
    }

    #[test]
    fn diagonal_update_is_monotone_in_evidence(prior in qubit(), r1 in -20.0..20.0f64, r2 in -20.0..20.0f64) {
        prop_assume!(prior.rho_gg > 1e-6 && prior.rho_ee > 1e-6);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = update_diagonal(&prior, &Likelihoods::from_logs(0.0, lo)).unwrap();
        let b = update_diagonal(&prior, &Likelihoods::from_logs(0.0, hi)).unwrap();
        prop_assert!(b.1 >= a.1 - 1e-15);
        prop_assert!((a.0 + a.1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kraus_step_keeps_a_state(rho in qubit(), p in params(), a0 in alpha0(), t in 0.0..5.0f64, dw in -0.2..0.2f64, dt in 1e-4..1e-2f64) {
        let m = FieldModel::new(p, a0);
        let ch = [Channel::single(p.phi_lo)];
        let rates = StepRates::from_rates(&m.rates(t), &p, &ch);
        let next = kraus_step(&rho, &rates, p.omega_q_tilde, dt, cqed_bayes::polaron::Innovation::Noise(&[dw])).unwrap();
        prop_assert!(next.validate().is_ok());
    }
}

#[test]
fn diagonal_update_is_a_martingale() {
    // draw the qubit state from the prior, then I_m from that branch; the posterior averages back to the prior
    let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_4);
    let t_m = 2.0;
    let m = FieldModel::new(p, ComplexAmp::ZERO);
    let ch = Channel::single(p.phi_lo);
    let means = [m.mean_output(t_m, Branch::G, &ch), m.mean_output(t_m, Branch::E, &ch)];
    let prior = QubitDM::pure(Complex64::new(0.8, 0.0), Complex64::new(0.6, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 200_000;
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let b = usize::from(rng.gen::<f64>() >= prior.rho_gg);
        let i_m = means[b] + rng.sample::<f64, _>(StandardNormal) / t_m.sqrt();
        let lk = gaussian_likelihoods(&[i_m], t_m, &p, ComplexAmp::ZERO, &[ch]).unwrap();
        xs.push(update_diagonal(&prior, &lk).unwrap().0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
    assert!((mean - prior.rho_gg).abs() < 3.0 * se, "mean {mean}, prior {}, se {se}", prior.rho_gg);
}

#[test]
fn sequential_filter_tracks_the_trajectory() {
    let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_4);
    let mut cfg = SimConfig::new(p, 1e-3, 2.0);
    cfg.snapshot_every = None;
    for seed in 0..5 {
        cfg.seed = seed;
        let rec = run_trajectory(&cfg).unwrap();
        let seq = sequential_diagonal(&rec, &QubitDM::plus(), &p, ComplexAmp::ZERO).unwrap();
        for (s, q) in seq.iter().zip(&rec.qubit) {
            assert!((s.0 - q.rho_gg).abs() < 0.05);
        }
    }
}
