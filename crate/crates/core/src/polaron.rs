//! Qubit-only trajectories after eliminating the cavity in the polaron frame.
//!
//! Each channel acts on the qubit as a measurement operator `c_j = (lambda_j / 2) sigma_z` with
//! `lambda_j = -ci_j + i ba_j` (signed amplitudes from [`ChannelRates`]). A step applies the
//! exponential Kraus factor of the linear equation per branch, the Stark rotation, and the
//! dephasing left over after the measurement's own `Gamma_m / 2`, then renormalizes. To first
//! order in `dt` this is the Ito polaron equation; it keeps the trace and positivity exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Channel, ChannelRates, FieldModel, ModelParams, RateSet};
use crate::fock::ComplexAmp;
use crate::qubit::QubitDM;
use crate::trajectory::{NoiseSource, SimConfig, TrajectoryRecord};

const VIOLATION_TOL: f64 = 1e-9;

/// Coefficients of one step, evaluated once per interval.
#[derive(Clone, Debug)]
pub struct StepRates {
    pub b: f64,
    pub gamma_d: f64,
    pub channels: Vec<ChannelRates>,
}

impl StepRates {
    pub fn from_rates(r: &RateSet, p: &ModelParams, channels: &[Channel]) -> Self {
        Self { b: r.b, gamma_d: r.gamma_d, channels: channels.iter().map(|ch| r.channel(p, ch)).collect() }
    }

    pub fn gamma_m(&self) -> f64 {
        self.channels.iter().map(|c| c.gamma_ci() + c.gamma_ba()).sum()
    }
}

/// How the per-channel innovations `dY_j` entering a step are formed.
#[derive(Clone, Copy, Debug)]
pub enum Innovation<'a> {
    /// Wiener increments; the qubit-dependent drift `-ci_j <sigma_z> dt` is added.
    Noise(&'a [f64]),
    /// Measured outputs `I_j`; the qubit-independent part `sqrt(kappa_j)|mu|cos(theta_mu - phi_j)` is removed.
    Output(&'a [f64]),
}

/// One step of the polaron equation with explicit coefficients.
pub fn kraus_step(rho: &QubitDM, rates: &StepRates, omega_q: f64, dt: f64, innovation: Innovation<'_>) -> Result<QubitDM> {
    let z = rho.sigma_z();
    let (mut lg, mut le) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (j, ch) in rates.channels.iter().enumerate() {
        let dy = match innovation {
            Innovation::Noise(dw) => dw[j] - ch.ci_amplitude * z * dt,
            Innovation::Output(out) => (out[j] - ch.common_output) * dt,
        };
        let half = 0.5 * Complex64::new(-ch.ci_amplitude, ch.ba_amplitude);
        for (l, c) in [(&mut lg, -half), (&mut le, half)] {
            *l += c * dy - 0.5 * (c * c + c.norm_sqr()) * dt;
        }
    }
    let wg = rho.rho_gg * (2.0 * lg.re).exp();
    let we = rho.rho_ee * (2.0 * le.re).exp();
    let residual = rates.gamma_d - 0.5 * rates.gamma_m();
    let ge = rho.rho_ge
        * (lg + le.conj()).exp()
        * Complex64::from_polar((-residual * dt).exp(), (omega_q + rates.b) * dt);
    let total = wg + we;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvariantViolation(format!("polaron step lost normalization ({total})")));
    }
    let mut out = QubitDM { rho_gg: wg / total, rho_ee: we / total, rho_ge: ge / total };
    let bound = (out.rho_gg * out.rho_ee).sqrt();
    if out.rho_ge.norm() > bound + VIOLATION_TOL {
        if residual >= 0.0 {
            return Err(Error::InvariantViolation("polaron step broke positivity; reduce dt".into()));
        }
        log::debug!("clamping coherence where Gamma_d < Gamma_m / 2");
    }
    out.clamp_coherence();
    Ok(out)
}

/// Polaron stepper bound to fixed parameters, initial field and detection channels.
#[derive(Clone, Debug)]
pub struct PolaronStepper {
    field: FieldModel,
    channels: Vec<Channel>,
    dt: f64,
}

impl PolaronStepper {
    pub fn new(p: ModelParams, alpha0: ComplexAmp, channels: Vec<Channel>, dt: f64) -> Self {
        Self { field: FieldModel::new(p, alpha0), channels, dt }
    }

    /// Rates for the interval `[t, t + dt]`, taken at its midpoint.
    pub fn rates(&self, t: f64) -> StepRates {
        StepRates::from_rates(&self.field.rates(t + 0.5 * self.dt), &self.field.params, &self.channels)
    }

    pub fn step(&self, rho: &QubitDM, t: f64, innovation: Innovation<'_>) -> Result<QubitDM> {
        kraus_step(rho, &self.rates(t), self.field.params.omega_q_tilde, self.dt, innovation)
    }
}

pub fn step_polaron_single(rho: &QubitDM, t: f64, dt: f64, dw: f64, p: &ModelParams, alpha0: ComplexAmp) -> Result<QubitDM> {
    PolaronStepper::new(*p, alpha0, vec![Channel::single(p.phi_lo)], dt).step(rho, t, Innovation::Noise(&[dw]))
}

pub fn step_polaron_two(
    rho: &QubitDM,
    t: f64,
    dt: f64,
    dw1: f64,
    dw2: f64,
    p: &ModelParams,
    alpha0: ComplexAmp,
) -> Result<QubitDM> {
    PolaronStepper::new(*p, alpha0, Channel::iq().to_vec(), dt).step(rho, t, Innovation::Noise(&[dw1, dw2]))
}

/// Deterministic part of the output, `-ci <sigma_z> + sqrt(kappa_j)|mu|cos(theta_mu - phi_j)`.
pub fn expected_output(rho: &QubitDM, t: f64, p: &ModelParams, alpha0: ComplexAmp, channel: &Channel) -> f64 {
    let ch = FieldModel::new(*p, alpha0).channel_rates(t, channel);
    -ch.ci_amplitude * rho.sigma_z() + ch.common_output
}

/// Single-quadrature form of [`expected_output`] at LO phase `phi`.
pub fn expected_current(rho: &QubitDM, t: f64, p: &ModelParams, alpha0: ComplexAmp, phi: f64) -> f64 {
    expected_output(rho, t, p, alpha0, &Channel::single(phi))
}

/// What drives a polaron run.
#[derive(Clone, Copy, Debug)]
pub enum PolaronInput<'a> {
    /// Fresh increments from `cfg.seed`.
    Seeded,
    /// Replay of Wiener increments, one vector per channel.
    Noise(&'a [Vec<f64>]),
    /// The measured outputs of a record.
    Record(&'a TrajectoryRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolaronPath {
    pub times: Vec<f64>,
    pub qubit: Vec<QubitDM>,
}

impl PolaronPath {
    pub fn at(&self, t: f64, dt: f64) -> Result<QubitDM> {
        let k = (t / dt).round() as usize;
        if k == 0 || k > self.qubit.len() {
            return Err(Error::CadenceMismatch(format!("t = {t} outside the polaron path")));
        }
        Ok(self.qubit[k - 1])
    }
}

pub fn run_polaron(cfg: &SimConfig, input: PolaronInput<'_>) -> Result<PolaronPath> {
    cfg.validate()?;
    let channels = cfg.channels();
    let nch = channels.len();
    let steps = cfg.n_steps();
    match input {
        PolaronInput::Noise(dw) if dw.len() != nch || dw.iter().any(|c| c.len() < steps) => {
            return Err(Error::CadenceMismatch("noise streams do not cover the run".into()));
        }
        PolaronInput::Record(rec) if rec.n_channels() != nch || rec.len() < steps || (rec.dt - cfg.dt).abs() > 1e-15 => {
            return Err(Error::CadenceMismatch("record does not match the configured grid".into()));
        }
        _ => {}
    }
    let stepper = PolaronStepper::new(cfg.params, cfg.initial_cavity, channels, cfg.dt);
    let mut source = NoiseSource::new(cfg.seed, nch, cfg.dt);
    let mut rho = cfg.initial_qubit_dm()?;
    let mut buf = vec![0.0; nch];
    let mut path = PolaronPath { times: Vec::with_capacity(steps), qubit: Vec::with_capacity(steps) };
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let innovation = match input {
            PolaronInput::Seeded => {
                source.fill(&mut buf);
                Innovation::Noise(&buf)
            }
            PolaronInput::Noise(dw) => {
                for j in 0..nch {
                    buf[j] = dw[j][k];
                }
                Innovation::Noise(&buf)
            }
            PolaronInput::Record(rec) => {
                for j in 0..nch {
                    buf[j] = rec.samples[j][k];
                }
                Innovation::Output(&buf)
            }
        };
        rho = stepper.step(&rho, t, innovation)?;
        path.times.push(t + cfg.dt);
        path.qubit.push(rho);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{mean_quadrature, purity_overlap, Branch, QuadratureMode};
    use crate::quad::adaptive_simpson;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn no_rates_no_change_but_rotation() {
        let rho = QubitDM::pure(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let rates = StepRates { b: 0.0, gamma_d: 0.0, channels: vec![ChannelRates { ci_amplitude: 0.0, ba_amplitude: 0.0, common_output: 0.0 }] };
        let out = kraus_step(&rho, &rates, 0.0, 1e-3, Innovation::Noise(&[0.05])).unwrap();
        assert!(out.max_abs_diff(&rho) < 1e-15);
        let out = kraus_step(&rho, &rates, 2.0, 1e-3, Innovation::Noise(&[0.05])).unwrap();
        assert!((out.rho_ge - rho.rho_ge * Complex64::from_polar(1.0, 2e-3)).norm() < 1e-15);

        let p = ModelParams::new(0.0, 0.0, 1.0, 2.0, 0.3);
        let out = step_polaron_single(&rho, 0.4, 1e-3, 0.07, &p, ComplexAmp::ZERO).unwrap();
        assert!(out.max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn pure_phase_kick_keeps_modulus() {
        let rho = QubitDM::plus();
        let ba = 0.4;
        let rates = StepRates {
            b: 0.0,
            gamma_d: 0.5 * ba * ba,
            channels: vec![ChannelRates { ci_amplitude: 0.0, ba_amplitude: ba, common_output: 0.0 }],
        };
        let mut r = rho;
        let mut src = NoiseSource::new(3, 1, 1e-3);
        let mut dw = [0.0];
        for _ in 0..5000 {
            src.fill(&mut dw);
            r = kraus_step(&r, &rates, 0.0, 1e-3, Innovation::Noise(&dw)).unwrap();
        }
        assert_abs_diff_eq!(r.rho_ge.norm(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rho_gg, 0.5, epsilon = 1e-12);
        assert!((r.rho_ge.arg()).abs() > 1e-3);
    }

    #[test]
    fn first_order_matches_ito_equation() {
        // two-point increments dW = +-sqrt(dt): half-sum gives the drift, half-difference the diffusion
        let rho = QubitDM::pure(c(0.8, 0.1), c(0.3, -0.5)).unwrap();
        let ch = ChannelRates { ci_amplitude: 0.7, ba_amplitude: -0.3, common_output: 0.2 };
        let (b, gamma_d, omega) = (0.4, 0.5, 0.1);
        let rates = StepRates { b, gamma_d, channels: vec![ch] };
        let dt: f64 = 1e-8;
        let h = dt.sqrt();
        let up = kraus_step(&rho, &rates, omega, dt, Innovation::Noise(&[h])).unwrap();
        let dn = kraus_step(&rho, &rates, omega, dt, Innovation::Noise(&[-h])).unwrap();
        let z = rho.sigma_z();
        let ge = rho.rho_ge;

        let drift_gg = 0.5 * (up.rho_gg + dn.rho_gg) - rho.rho_gg;
        let diff_gg = 0.5 * (up.rho_gg - dn.rho_gg);
        assert!(drift_gg.abs() < 1e-13);
        // -ci M[sigma_z] rho dW  ->  d rho_gg = ci rho_gg (1 + z) dW
        assert_abs_diff_eq!(diff_gg / h, ch.ci_amplitude * rho.rho_gg * (1.0 + z), epsilon = 1e-6);

        let drift_ge = 0.5 * (up.rho_ge + dn.rho_ge) - ge;
        let want = (c(0.0, omega + b) - gamma_d) * ge;
        assert!((drift_ge / dt - want).norm() < 1e-4);
        let diff_ge = 0.5 * (up.rho_ge - dn.rho_ge) / h;
        let want = (ch.ci_amplitude * z - c(0.0, ch.ba_amplitude)) * ge;
        assert!((diff_ge - want).norm() < 1e-6);
    }

    #[test]
    fn two_quadrature_channel_split() {
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, 0.0);
        let m = FieldModel::new(p, ComplexAmp::ZERO);
        for t in [0.3, 1.0, 4.0] {
            let r = m.rates(t);
            let [i, q] = Channel::iq().map(|ch| r.channel(&p, &ch));
            assert_abs_diff_eq!(i.gamma_ci(), r.gamma_m / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(i.gamma_ba(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(q.gamma_ci(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(q.gamma_ba(), r.gamma_m / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zeroed_q_stream_leaves_only_information_gain() {
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, 0.0);
        let mut rho = QubitDM::plus();
        let mut src = NoiseSource::new(8, 1, 1e-3);
        let mut dw = [0.0];
        for k in 0..3000 {
            src.fill(&mut dw);
            rho = step_polaron_two(&rho, k as f64 * 1e-3, 1e-3, dw[0], 0.0, &p, ComplexAmp::ZERO).unwrap();
        }
        // the Q channel carries no population information, and with dW2 = 0 no phase kicks either
        let phase_free = rho.rho_ge * Complex64::from_polar(1.0, -FieldModel::new(p, ComplexAmp::ZERO).stark_phase(3.0));
        assert!(phase_free.im.abs() < 1e-3 * phase_free.norm());
        assert!((rho.rho_gg - 0.5).abs() > 1e-4);
    }

    #[test]
    fn back_action_only_purity_follows_overlap() {
        // phi = theta_beta + pi/2: no information, single-run coherence shrinks only by D(t)
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_2);
        let mut cfg = SimConfig::new(p, 1e-3, 10.0);
        cfg.seed = 21;
        let path = run_polaron(&cfg, PolaronInput::Seeded).unwrap();
        for (k, q) in path.qubit.iter().enumerate().step_by(500) {
            let d = purity_overlap(path.times[k], &p, ComplexAmp::ZERO);
            assert_abs_diff_eq!(q.rho_gg, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(q.rho_ge.norm(), 0.5 * d, epsilon = 1e-4);
        }
        assert!(path.qubit.last().unwrap().purity() > 0.97);
    }

    #[test]
    fn expected_current_examples() {
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_4);
        let m = FieldModel::new(p, ComplexAmp::ZERO);
        let r = m.rates(1.5);
        let mixed = QubitDM { rho_gg: 0.5, rho_ee: 0.5, rho_ge: c(0.0, 0.0) };
        let want = p.kappa.sqrt() * r.mu_abs * (r.theta_mu - p.phi_lo).cos();
        assert_abs_diff_eq!(expected_current(&mixed, 1.5, &p, ComplexAmp::ZERO, p.phi_lo), want, epsilon = 1e-14);

        // pinned qubit: time average reproduces the closed-form mean quadrature
        let tm = 2.0;
        for (rho, b) in [(QubitDM::ground(), Branch::G), (QubitDM::excited(), Branch::E)] {
            let avg = adaptive_simpson(&|t| expected_current(&rho, t, &p, ComplexAmp::ZERO, p.phi_lo), 0.0, tm, 1e-12).unwrap() / tm;
            let closed = mean_quadrature(tm, &p, b, ComplexAmp::ZERO, QuadratureMode::Single(p.phi_lo)).unwrap();
            assert_abs_diff_eq!(avg, closed, epsilon = 1e-9);
        }

        // at phi = theta_beta the back-action vanishes
        let p0 = p.with_phi(std::f64::consts::PI);
        let ch = m.rates(1.0).channel(&p0, &Channel::single(p0.phi_lo));
        assert_abs_diff_eq!(ch.ba_amplitude, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn record_and_noise_inputs_agree_on_coherent_branches() {
        // record-driven and noise-driven runs only differ through the joint state's departure
        // from coherent branches, which is tiny here
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_4);
        let mut cfg = SimConfig::new(p, 1e-3, 3.0);
        cfg.seed = 12;
        let rec = crate::trajectory::run_trajectory(&cfg).unwrap();
        let a = run_polaron(&cfg, PolaronInput::Record(&rec)).unwrap();
        let b = run_polaron(&cfg, PolaronInput::Noise(&rec.dw)).unwrap();
        for (x, y) in a.qubit.iter().zip(&b.qubit) {
            assert!(x.max_abs_diff(y) < 1e-3);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let cfg = SimConfig::new(ModelParams::new(0.0, 0.1, 1.0, 2.0, 0.0), 1e-3, 1.0);
        let short = vec![vec![0.0; 10]];
        assert!(run_polaron(&cfg, PolaronInput::Noise(&short)).is_err());
    }
}
