//! Analytic cavity fields of the dispersive readout and the rates derived from them.
//!
//! For qubit level `x` the driven damped cavity relaxes as
//! `alpha_x(t) = abar_x (1 - e^{z_x t}) + alpha0 e^{z_x t}` with
//! `z_x = -i (delta_r -/+ chi) - kappa / 2` and steady field
//! `abar_x = -i eps_m / (i (delta_r -/+ chi) + kappa / 2)` (upper sign for `g`).
//!
//! `theta_beta` is `arg(alpha_e - alpha_g)` on `(-pi, pi]`. For a resonant drive and a
//! vacuum start `beta` is negative real, so `theta_beta = pi`. Rates only depend on
//! `cos^2`/`sin^2` of `phi - theta_beta`; the signed amplitudes in [`ChannelRates`] fix
//! the sign with which each rate's square root enters the stochastic equations.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::ComplexAmp;
use crate::quad::adaptive_simpson;

const BETA_FLOOR: f64 = 1e-12;
const PURITY_REL_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Physical constants in kappa-normalized units (time in `1/kappa`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta_r: f64,
    pub chi: f64,
    pub eps_m: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub omega_q_tilde: f64,
    #[serde(default)]
    pub phi_lo: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { delta_r: 0.0, chi: 0.0, eps_m: 0.0, kappa: 1.0, omega_q_tilde: 0.0, phi_lo: 0.0 }
    }
}

impl ModelParams {
    pub fn new(delta_r: f64, chi: f64, eps_m: f64, kappa: f64, phi_lo: f64) -> Self {
        Self { delta_r, chi, eps_m, kappa, omega_q_tilde: 0.0, phi_lo }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.delta_r, self.chi, self.eps_m, self.kappa, self.omega_q_tilde, self.phi_lo];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidConfig(format!("kappa must be > 0, got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn with_phi(mut self, phi_lo: f64) -> Self {
        self.phi_lo = phi_lo;
        self
    }

    /// Largest steady field magnitude over both branches.
    pub fn steady_field_scale(&self) -> f64 {
        alpha_steady(self, Branch::G).abs().max(alpha_steady(self, Branch::E).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    G,
    E,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::G, Branch::E];

    /// Eigenvalue of `sigma_z`.
    pub fn sigma_z(self) -> f64 {
        match self {
            Branch::G => -1.0,
            Branch::E => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::G => 0,
            Branch::E => 1,
        }
    }

    /// Dispersively shifted cavity detuning seen by this branch.
    pub fn detuning(self, p: &ModelParams) -> f64 {
        p.delta_r + self.sigma_z() * p.chi
    }
}

/// One homodyne detection channel: LO phase and the fraction of the cavity output it receives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub phi: f64,
    pub weight: f64,
}

impl Channel {
    pub fn single(phi: f64) -> Self {
        Self { phi, weight: 1.0 }
    }

    /// The two beam-splitter branches of an (I, Q) measurement.
    pub fn iq() -> [Channel; 2] {
        [Channel { phi: 0.0, weight: 0.5 }, Channel { phi: FRAC_PI_2, weight: 0.5 }]
    }

    /// Rate of the channel's output, `weight * kappa`.
    pub fn kappa(&self, p: &ModelParams) -> f64 {
        self.weight * p.kappa
    }

    /// Mean output for a cavity field: `2 sqrt(kappa_j) Re[alpha e^{-i phi}]`.
    pub fn mean_output(&self, p: &ModelParams, alpha: Complex64) -> f64 {
        2.0 * self.kappa(p).sqrt() * (alpha * Complex64::from_polar(1.0, -self.phi)).re
    }
}

/// Which integrated output [`mean_quadrature`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    Single(f64),
    I,
    Q,
}

impl QuadratureMode {
    pub fn channel(self) -> Channel {
        match self {
            QuadratureMode::Single(phi) => Channel::single(phi),
            QuadratureMode::I => Channel::iq()[0],
            QuadratureMode::Q => Channel::iq()[1],
        }
    }
}

pub fn alpha_steady(p: &ModelParams, branch: Branch) -> ComplexAmp {
    steady(p, branch).into()
}

fn steady(p: &ModelParams, branch: Branch) -> Complex64 {
    c(0.0, -p.eps_m) / c(p.kappa / 2.0, branch.detuning(p))
}

fn decay_rate(p: &ModelParams, branch: Branch) -> Complex64 {
    c(-p.kappa / 2.0, -branch.detuning(p))
}

pub fn alpha_transient(t: f64, p: &ModelParams, branch: Branch, alpha0: ComplexAmp) -> ComplexAmp {
    FieldModel::new(*p, alpha0).alpha(t, branch).into()
}

/// Sum of exponentials `sum_k c_k e^{w_k t}`, closed under products and conjugation.
#[derive(Clone, Debug, Default)]
pub struct ExpSum {
    terms: Vec<(Complex64, Complex64)>,
}

impl ExpSum {
    pub fn constant(value: Complex64) -> Self {
        Self { terms: vec![(value, c(0.0, 0.0))] }
    }

    pub fn push(&mut self, coef: Complex64, rate: Complex64) {
        self.terms.push((coef, rate));
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|(k, w)| k * (w * t).exp()).sum()
    }

    pub fn conj(&self) -> Self {
        Self { terms: self.terms.iter().map(|(k, w)| (k.conj(), w.conj())).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { terms: self.terms.iter().map(|(k, w)| (k * s, *w)).collect() }
    }

    pub fn add(&self, other: &ExpSum) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }
    }

    pub fn mul(&self, other: &ExpSum) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, u) in &self.terms {
            for (b, v) in &other.terms {
                terms.push((a * b, u + v));
            }
        }
        Self { terms }
    }

    /// `int_0^t`.
    pub fn integrate(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(k, w)| {
                let x = w * t;
                // (e^x - 1)/w, series near x = 0
                let f = if x.norm() < 1e-4 {
                    t * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
                } else {
                    (x.exp() - 1.0) / w
                };
                k * f
            })
            .sum()
    }
}

/// Time-local quantities of the polaron-frame qubit dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub alpha_g: ComplexAmp,
    pub alpha_e: ComplexAmp,
    pub beta_abs: f64,
    pub theta_beta: f64,
    pub mu_abs: f64,
    pub theta_mu: f64,
    /// Generalized ac-Stark shift.
    pub b: f64,
    pub gamma_d: f64,
    pub gamma_ci: f64,
    pub gamma_ba: f64,
    pub gamma_m: f64,
    pub purity_d: f64,
}

/// Per-channel signed square roots of the information-gain and back-action rates.
///
/// `ci_amplitude = -sqrt(kappa_j) |beta| cos(theta_beta - phi)` and
/// `ba_amplitude = sqrt(kappa_j) |beta| sin(theta_beta - phi)`, so that the qubit-frame
/// equations read `-ci M[sigma_z] dW + i (ba / 2) [sigma_z, rho] dW` with the same `dW`
/// that drives the full joint-state trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRates {
    pub ci_amplitude: f64,
    pub ba_amplitude: f64,
    /// `sqrt(kappa_j) |mu| cos(theta_mu - phi)`, the qubit-independent part of the mean output.
    pub common_output: f64,
}

impl ChannelRates {
    pub fn gamma_ci(&self) -> f64 {
        self.ci_amplitude * self.ci_amplitude
    }

    pub fn gamma_ba(&self) -> f64 {
        self.ba_amplitude * self.ba_amplitude
    }
}

fn principal_arg(z: Complex64) -> f64 {
    if z.norm() < BETA_FLOOR {
        return 0.0;
    }
    let th = z.im.atan2(z.re);
    if th <= -PI {
        PI
    } else {
        th
    }
}

impl RateSet {
    pub fn from_fields(alpha_g: Complex64, alpha_e: Complex64, p: &ModelParams) -> Self {
        let beta = alpha_e - alpha_g;
        let mu = alpha_e + alpha_g;
        let prod = alpha_g * alpha_e.conj();
        let beta_abs = beta.norm();
        let (theta_beta, gamma_ci, gamma_ba) = if beta_abs < BETA_FLOOR {
            (0.0, 0.0, 0.0)
        } else {
            let th = principal_arg(beta);
            let gm = p.kappa * beta_abs * beta_abs;
            let x = p.phi_lo - th;
            (th, gm * x.cos().powi(2), gm * x.sin().powi(2))
        };
        let purity_d = (-0.5 * (alpha_e.norm_sqr() + alpha_g.norm_sqr()) + (alpha_e * alpha_g.conj()).re).exp();
        RateSet {
            alpha_g: alpha_g.into(),
            alpha_e: alpha_e.into(),
            beta_abs,
            theta_beta,
            mu_abs: mu.norm(),
            theta_mu: principal_arg(mu),
            b: 2.0 * p.chi * prod.re,
            gamma_d: 2.0 * p.chi * prod.im,
            gamma_ci,
            gamma_ba,
            gamma_m: gamma_ci + gamma_ba,
            purity_d,
        }
    }

    pub fn beta(&self) -> Complex64 {
        self.alpha_e.c64() - self.alpha_g.c64()
    }

    pub fn mu(&self) -> Complex64 {
        self.alpha_e.c64() + self.alpha_g.c64()
    }

    pub fn channel(&self, p: &ModelParams, ch: &Channel) -> ChannelRates {
        let root = ch.kappa(p).sqrt();
        let (ci, ba) = if self.beta_abs < BETA_FLOOR {
            (0.0, 0.0)
        } else {
            let x = self.theta_beta - ch.phi;
            (-root * self.beta_abs * x.cos(), root * self.beta_abs * x.sin())
        };
        ChannelRates {
            ci_amplitude: ci,
            ba_amplitude: ba,
            common_output: root * (self.mu() * Complex64::from_polar(1.0, -ch.phi)).re,
        }
    }
}

/// Closed-form cavity fields for fixed parameters and initial field.
#[derive(Clone, Debug)]
pub struct FieldModel {
    pub params: ModelParams,
    pub alpha0: Complex64,
    steady: [Complex64; 2],
    rate: [Complex64; 2],
}

impl FieldModel {
    pub fn new(params: ModelParams, alpha0: ComplexAmp) -> Self {
        let steady = [steady(&params, Branch::G), steady(&params, Branch::E)];
        let rate = [decay_rate(&params, Branch::G), decay_rate(&params, Branch::E)];
        Self { params, alpha0: alpha0.c64(), steady, rate }
    }

    pub fn alpha(&self, t: f64, branch: Branch) -> Complex64 {
        let k = branch.index();
        let e = (self.rate[k] * t).exp();
        self.steady[k] * (1.0 - e) + self.alpha0 * e
    }

    /// Time derivative from the driven-damped field equation.
    pub fn alpha_rhs(&self, alpha: Complex64, branch: Branch) -> Complex64 {
        let p = &self.params;
        c(0.0, -p.eps_m) - c(0.0, branch.detuning(p)) * alpha - alpha * (p.kappa / 2.0)
    }

    pub fn alpha_series(&self, branch: Branch) -> ExpSum {
        let k = branch.index();
        let mut s = ExpSum::constant(self.steady[k]);
        s.push(self.alpha0 - self.steady[k], self.rate[k]);
        s
    }

    pub fn rates(&self, t: f64) -> RateSet {
        RateSet::from_fields(self.alpha(t, Branch::G), self.alpha(t, Branch::E), &self.params)
    }

    pub fn steady_rates(&self) -> RateSet {
        RateSet::from_fields(self.steady[0], self.steady[1], &self.params)
    }

    pub fn channel_rates(&self, t: f64, ch: &Channel) -> ChannelRates {
        self.rates(t).channel(&self.params, ch)
    }

    pub fn purity_overlap(&self, t: f64) -> f64 {
        self.rates(t).purity_d
    }

    /// `(1/t_m) int_0^{t_m}` of the channel's mean output for a qubit pinned in `branch`.
    pub fn mean_output(&self, t_m: f64, branch: Branch, ch: &Channel) -> f64 {
        let int = self.alpha_series(branch).integrate(t_m);
        ch.mean_output(&self.params, int) / t_m
    }

    /// `(1/t_m) int_0^{t_m} sqrt(kappa_j) |mu| cos(theta_mu - phi) dt`.
    pub fn mean_common_output(&self, t_m: f64, ch: &Channel) -> f64 {
        0.5 * (self.mean_output(t_m, Branch::G, ch) + self.mean_output(t_m, Branch::E, ch))
    }

    /// `int_0^{t_m} B(t) dt` in closed form.
    pub fn stark_phase(&self, t_m: f64) -> f64 {
        let prod = self.alpha_series(Branch::G).mul(&self.alpha_series(Branch::E).conj());
        2.0 * self.params.chi * prod.integrate(t_m).re
    }

    /// `exp(-int_0^t [gamma_d - gamma_m / 2])` by adaptive quadrature.
    pub fn purity_integral(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(1.0);
        }
        let f = |s: f64| {
            let r = self.rates(s);
            r.gamma_d - 0.5 * r.gamma_m
        };
        let panels = ((t * self.params.kappa * 2.0).ceil() as usize).clamp(4, 4096);
        let h = t / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            total += adaptive_simpson(&f, k as f64 * h, (k + 1) as f64 * h, PURITY_REL_TOL)?;
        }
        Ok((-total).exp())
    }
}

pub fn rates_at(t: f64, p: &ModelParams, alpha0: ComplexAmp) -> RateSet {
    FieldModel::new(*p, alpha0).rates(t)
}

/// Rates evaluated at the steady-state fields.
pub fn rates_steady(p: &ModelParams) -> RateSet {
    FieldModel::new(*p, ComplexAmp::ZERO).steady_rates()
}

pub fn purity_overlap(t: f64, p: &ModelParams, alpha0: ComplexAmp) -> f64 {
    FieldModel::new(*p, alpha0).purity_overlap(t)
}

pub fn purity_integral(t: f64, p: &ModelParams, alpha0: ComplexAmp) -> Result<f64> {
    FieldModel::new(*p, alpha0).purity_integral(t)
}

/// Time-averaged mean output over `[0, t_m]` for a qubit pinned in `branch`.
pub fn mean_quadrature(
    t_m: f64,
    p: &ModelParams,
    branch: Branch,
    alpha0: ComplexAmp,
    mode: QuadratureMode,
) -> Result<f64> {
    if !(t_m > 0.0) {
        return Err(Error::InvalidConfig(format!("t_m must be > 0, got {t_m}")));
    }
    Ok(FieldModel::new(*p, alpha0).mean_output(t_m, branch, &mode.channel()))
}

/// Bad-cavity, weak-response reductions with `nbar = |2 eps_m / kappa|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BadCavityLimit {
    pub nbar: f64,
    pub purity_d: f64,
    pub b: f64,
    pub gamma_ba: f64,
    /// `-8 eps_m chi / kappa^2`, the limiting (real) field separation.
    pub beta: f64,
}

impl BadCavityLimit {
    pub fn new(p: &ModelParams) -> Self {
        let alpha0 = 2.0 * p.eps_m / p.kappa;
        let nbar = alpha0 * alpha0;
        let r = p.chi / p.kappa;
        Self {
            nbar,
            purity_d: (-8.0 * nbar * r * r).exp(),
            b: 2.0 * p.chi * nbar,
            gamma_ba: 16.0 * nbar * p.kappa * r * r * p.phi_lo.sin().powi(2),
            beta: -8.0 * p.eps_m * p.chi / (p.kappa * p.kappa),
        }
    }

    /// Limiting measurement rate `kappa |beta|^2 = 16 nbar kappa (chi/kappa)^2`.
    pub fn gamma_m(&self, p: &ModelParams) -> f64 {
        p.kappa * self.beta * self.beta
    }

    pub fn channel(&self, p: &ModelParams, ch: &Channel) -> ChannelRates {
        let beta = Complex64::new(self.beta, 0.0);
        let mu = Complex64::new(0.0, -4.0 * p.eps_m / p.kappa);
        let rates = RateSet::from_fields(-(beta - mu) * 0.5, (beta + mu) * 0.5, p);
        rates.channel(p, ch)
    }
}
