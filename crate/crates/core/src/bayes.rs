//! Bayesian state updates from integrated or sampled homodyne records.
//!
//! Off-diagonal conventions: `rho_ge = <g|rho|e>`. In this convention the free rotation,
//! the Stark phase and the back-action phase all enter as `e^{+i(...)}`:
//! `rho_ge = rho_ge(0) e^{i omega_q t_m} sqrt(p_g p_e) / N * D^{l1} * e^{i (l2 Phi1 + l3 Phi2)}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BadCavityLimit, Branch, Channel, FieldModel, ModelParams};
use crate::fock::ComplexAmp;
use crate::qubit::QubitDM;
use crate::trajectory::{Scheme, TrajectoryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bare,
    Br1,
    Br2,
    #[serde(alias = "br2p")]
    Br2Prime,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Bare, Variant::Br1, Variant::Br2, Variant::Br2Prime];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bare => "bare",
            Variant::Br1 => "br1",
            Variant::Br2 => "br2",
            Variant::Br2Prime => "br2_prime",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bare" => Ok(Variant::Bare),
            "br1" => Ok(Variant::Br1),
            "br2" => Ok(Variant::Br2),
            "br2_prime" | "br2p" | "br2'" => Ok(Variant::Br2Prime),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// Time scaling of the integrated back-action phase, `-ba(t_m) * s * (I_m - Ibar(t_m))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `s = 1`. Closer to the sampled phase on average (see `harness::select_scale_mode`).
    #[default]
    Unit,
    /// `s = t_m`, the scaling of `int_0^{t_m} I~ dt`.
    Tm,
}

impl ScaleMode {
    pub fn factor(self, t_m: f64) -> f64 {
        match self {
            ScaleMode::Unit => 1.0,
            ScaleMode::Tm => t_m,
        }
    }
}

/// Which correction factors of the off-diagonal update are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lambdas {
    pub purity: bool,
    pub phi1: bool,
    pub phi2: bool,
}

impl Lambdas {
    pub const ALL: Lambdas = Lambdas { purity: true, phi1: true, phi2: true };

    /// The eight on/off combinations, `(l1, l2, l3)` in binary order.
    pub fn grid() -> Vec<Lambdas> {
        (0..8).map(|k| Lambdas { purity: k & 4 != 0, phi1: k & 2 != 0, phi2: k & 1 != 0 }).collect()
    }

    pub fn label(&self) -> String {
        format!("l{}{}{}", self.purity as u8, self.phi1 as u8, self.phi2 as u8)
    }
}

impl Default for Lambdas {
    fn default() -> Self {
        Self::ALL
    }
}

/// Densities of the integrated outputs given each qubit state; logs are kept for stability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Likelihoods {
    pub p_g: f64,
    pub p_e: f64,
    pub ln_g: f64,
    pub ln_e: f64,
}

impl Likelihoods {
    pub fn from_logs(ln_g: f64, ln_e: f64) -> Self {
        Self { p_g: ln_g.exp(), p_e: ln_e.exp(), ln_g, ln_e }
    }

    /// `ln(p_e / p_g)`.
    pub fn log_ratio(&self) -> f64 {
        self.ln_e - self.ln_g
    }
}

fn ln_gauss(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn check_tm(t_m: f64) -> Result<()> {
    if !(t_m > 0.0) || !t_m.is_finite() {
        return Err(Error::InvalidConfig(format!("t_m must be > 0, got {t_m}")));
    }
    Ok(())
}

/// Product of per-channel Gaussians with variance `1 / t_m` around the branch means.
pub fn gaussian_likelihoods(outputs: &[f64], t_m: f64, p: &ModelParams, alpha0: ComplexAmp, channels: &[Channel]) -> Result<Likelihoods> {
    check_tm(t_m)?;
    if outputs.len() != channels.len() {
        return Err(Error::DimensionMismatch { expected: channels.len(), got: outputs.len() });
    }
    let m = FieldModel::new(*p, alpha0);
    let var = 1.0 / t_m;
    let (mut lg, mut le) = (0.0, 0.0);
    for (x, ch) in outputs.iter().zip(channels) {
        lg += ln_gauss(*x, m.mean_output(t_m, Branch::G, ch), var);
        le += ln_gauss(*x, m.mean_output(t_m, Branch::E, ch), var);
    }
    Ok(Likelihoods::from_logs(lg, le))
}

pub fn gaussian_likelihoods_single(i_m: f64, t_m: f64, p: &ModelParams, phi: f64, alpha0: ComplexAmp) -> Result<Likelihoods> {
    gaussian_likelihoods(&[i_m], t_m, p, alpha0, &[Channel::single(phi)])
}

pub fn gaussian_likelihoods_two(i_m: f64, q_m: f64, t_m: f64, p: &ModelParams, alpha0: ComplexAmp) -> Result<Likelihoods> {
    gaussian_likelihoods(&[i_m, q_m], t_m, p, alpha0, &Channel::iq())
}

/// Classical Bayes update of the populations.
pub fn update_diagonal(prior: &QubitDM, lk: &Likelihoods) -> Result<(f64, f64)> {
    let (g, e) = (prior.rho_gg.max(0.0), prior.rho_ee.max(0.0));
    if g == 0.0 && e == 0.0 {
        return Err(Error::DegenerateEvidence);
    }
    if e == 0.0 {
        return if lk.ln_g.is_finite() { Ok((1.0, 0.0)) } else { Err(Error::DegenerateEvidence) };
    }
    if g == 0.0 {
        return if lk.ln_e.is_finite() { Ok((0.0, 1.0)) } else { Err(Error::DegenerateEvidence) };
    }
    let r = lk.log_ratio() + (e / g).ln();
    if r.is_nan() {
        return Err(Error::DegenerateEvidence);
    }
    // rho_ee = 1 / (1 + e^{-r})
    let rho_ee = if r >= 0.0 { 1.0 / (1.0 + (-r).exp()) } else { r.exp() / (1.0 + r.exp()) };
    Ok((1.0 - rho_ee, rho_ee))
}

/// `sqrt(p_g p_e) / N` with `N = rho_gg p_g + rho_ee p_e`.
fn coherence_ratio(prior: &QubitDM, lk: &Likelihoods) -> Result<f64> {
    let h = 0.5 * lk.log_ratio();
    let n = prior.rho_gg * (-h).exp() + prior.rho_ee * h.exp();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateEvidence);
    }
    Ok(1.0 / n)
}

/// `rho_ge(0) e^{i omega_q t_m} sqrt(p_g p_e) / N`.
pub fn bare_offdiagonal(prior: &QubitDM, lk: &Likelihoods, t_m: f64, p: &ModelParams) -> Result<Complex64> {
    let r = coherence_ratio(prior, lk)?;
    Ok(prior.rho_ge * Complex64::from_polar(r, p.omega_q_tilde * t_m))
}

/// `int_0^{t_m} B dt`.
pub fn phi1(t_m: f64, p: &ModelParams, alpha0: ComplexAmp) -> f64 {
    if t_m <= 0.0 {
        return 0.0;
    }
    FieldModel::new(*p, alpha0).stark_phase(t_m)
}

/// Running `-sum_k sum_j ba_j(t_k) (I_j(t_k) - common_j(t_k)) dt` along a record, rates at
/// interval midpoints. Entry `k` covers `[0, times[k]]`.
pub fn phi2_exact_path(record: &TrajectoryRecord, p: &ModelParams, alpha0: ComplexAmp) -> Vec<f64> {
    let m = FieldModel::new(*p, alpha0);
    let dt = record.dt;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(record.len());
    for k in 0..record.len() {
        let r = m.rates((k as f64 + 0.5) * dt);
        for (j, ch) in record.channels.iter().enumerate() {
            let c = r.channel(p, ch);
            acc -= c.ba_amplitude * (record.samples[j][k] - c.common_output) * dt;
        }
        out.push(acc);
    }
    out
}

/// Back-action phase over `[0, t_m]` from the sampled record.
pub fn phi2_exact(record: &TrajectoryRecord, t_m: f64, p: &ModelParams, alpha0: ComplexAmp) -> Result<f64> {
    check_tm(t_m)?;
    let k = record.steps_until(t_m)?;
    let m = FieldModel::new(*p, alpha0);
    let dt = record.dt;
    let mut acc = 0.0;
    for i in 0..k {
        let r = m.rates((i as f64 + 0.5) * dt);
        for (j, ch) in record.channels.iter().enumerate() {
            let c = r.channel(p, ch);
            acc -= c.ba_amplitude * (record.samples[j][i] - c.common_output) * dt;
        }
    }
    Ok(acc)
}

/// `-ba(t_m) s [X_m - Xbar(t_m)]` for one channel's integrated output `x_m`.
pub fn phi2_approx_channel(x_m: f64, t_m: f64, p: &ModelParams, alpha0: ComplexAmp, channel: &Channel, scale: ScaleMode) -> Result<f64> {
    check_tm(t_m)?;
    let m = FieldModel::new(*p, alpha0);
    let ba = m.channel_rates(t_m, channel).ba_amplitude;
    Ok(-ba * scale.factor(t_m) * (x_m - m.mean_common_output(t_m, channel)))
}

/// Single-quadrature integrated approximation at LO phase `phi`.
pub fn phi2_approx(i_m: f64, t_m: f64, p: &ModelParams, phi: f64, alpha0: ComplexAmp, scale: ScaleMode) -> Result<f64> {
    phi2_approx_channel(i_m, t_m, p, alpha0, &Channel::single(phi), scale)
}

/// Integrated approximation summed over channels (two-quadrature: only `Q` carries back-action).
pub fn phi2_approx_multi(outputs: &[f64], t_m: f64, p: &ModelParams, alpha0: ComplexAmp, channels: &[Channel], scale: ScaleMode) -> Result<f64> {
    let mut s = 0.0;
    for (x, ch) in outputs.iter().zip(channels) {
        s += phi2_approx_channel(*x, t_m, p, alpha0, ch, scale)?;
    }
    Ok(s)
}

/// Measurement data handed to a rule.
#[derive(Clone, Copy, Debug)]
pub enum RecordData<'a> {
    Integrated { i_m: f64, q_m: Option<f64> },
    Sampled(&'a TrajectoryRecord),
}

#[derive(Clone, Copy, Debug)]
pub struct BayesInput<'a> {
    pub prior: QubitDM,
    pub t_m: f64,
    pub record: RecordData<'a>,
    pub params: ModelParams,
    pub variant: Variant,
    pub alpha0: ComplexAmp,
    pub scale: ScaleMode,
    pub lambdas: Lambdas,
}

impl<'a> BayesInput<'a> {
    pub fn new(prior: QubitDM, t_m: f64, record: RecordData<'a>, params: ModelParams, variant: Variant) -> Self {
        Self { prior, t_m, record, params, variant, alpha0: ComplexAmp::ZERO, scale: ScaleMode::default(), lambdas: Lambdas::ALL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesOutput {
    pub rho: QubitDM,
    pub phi1: f64,
    pub phi2: f64,
    pub purity_factor: f64,
    pub clamped: bool,
}

/// Integrated outputs (one per channel) plus, when the record was sampled, the exact back-action phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Measured {
    pub outputs: Vec<f64>,
    pub phi2_exact: Option<f64>,
}

/// A rule evaluator with the analytic fields precomputed.
#[derive(Clone, Debug)]
pub struct Estimator {
    field: FieldModel,
    channels: Vec<Channel>,
    pub scale: ScaleMode,
    pub lambdas: Lambdas,
}

impl Estimator {
    pub fn new(p: ModelParams, alpha0: ComplexAmp, scheme: Scheme) -> Self {
        Self { field: FieldModel::new(p, alpha0), channels: scheme.channels(p.phi_lo), scale: ScaleMode::default(), lambdas: Lambdas::ALL }
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn likelihoods(&self, outputs: &[f64], t_m: f64) -> Result<Likelihoods> {
        gaussian_likelihoods(outputs, t_m, &self.field.params, ComplexAmp::from(self.field.alpha0), &self.channels)
    }

    pub fn update(&self, prior: &QubitDM, variant: Variant, t_m: f64, data: &Measured) -> Result<BayesOutput> {
        check_tm(t_m)?;
        let p = self.field.params;
        let alpha0 = ComplexAmp::from(self.field.alpha0);
        let lk = self.likelihoods(&data.outputs, t_m)?;
        let (gg, ee) = update_diagonal(prior, &lk)?;
        let bare = bare_offdiagonal(prior, &lk, t_m, &p)?;
        let (purity_factor, phi1, phi2) = match variant {
            Variant::Bare => (1.0, 0.0, 0.0),
            Variant::Br1 => {
                let lim = BadCavityLimit::new(&p);
                let mut phi2 = 0.0;
                for (x, ch) in data.outputs.iter().zip(&self.channels) {
                    let c = lim.channel(&p, ch);
                    phi2 -= c.ba_amplitude * t_m * (x - c.common_output);
                }
                (1.0, lim.b * t_m, phi2)
            }
            Variant::Br2 => {
                let phi2 = data
                    .phi2_exact
                    .ok_or_else(|| Error::InvalidConfig("br2 needs a sampled record".into()))?;
                (self.field.purity_overlap(t_m), self.field.stark_phase(t_m), phi2)
            }
            Variant::Br2Prime => (
                self.field.purity_overlap(t_m),
                self.field.stark_phase(t_m),
                phi2_approx_multi(&data.outputs, t_m, &p, alpha0, &self.channels, self.scale)?,
            ),
        };
        let l = self.lambdas;
        let d = if l.purity { purity_factor } else { 1.0 };
        let phase = if l.phi1 { phi1 } else { 0.0 } + if l.phi2 { phi2 } else { 0.0 };
        let mut rho = QubitDM { rho_gg: gg, rho_ee: ee, rho_ge: bare * Complex64::from_polar(d, phase) };
        let clamped = rho.clamp_coherence();
        if clamped {
            log::debug!("{} update: |rho_ge| clamped to sqrt(rho_gg rho_ee)", variant.name());
        }
        rho.validate()?;
        Ok(BayesOutput { rho, phi1, phi2, purity_factor, clamped })
    }
}

/// Integrated outputs over `[0, t_m]` and, for sampled data, the exact phase.
pub fn measure(record: &TrajectoryRecord, t_m: f64, p: &ModelParams, alpha0: ComplexAmp) -> Result<Measured> {
    let outputs = (0..record.n_channels()).map(|j| record.integrated(j, t_m)).collect::<Result<Vec<_>>>()?;
    Ok(Measured { outputs, phi2_exact: Some(phi2_exact(record, t_m, p, alpha0)?) })
}

pub fn update_full(input: &BayesInput<'_>) -> Result<BayesOutput> {
    let p = input.params;
    let (scheme, data) = match input.record {
        RecordData::Integrated { i_m, q_m } => {
            if input.variant == Variant::Br2 {
                return Err(Error::InvalidConfig("br2 needs a sampled record; use br2_prime for integrated outputs".into()));
            }
            match q_m {
                Some(q) => (Scheme::TwoQuadrature, Measured { outputs: vec![i_m, q], phi2_exact: None }),
                None => (Scheme::SingleQuadrature, Measured { outputs: vec![i_m], phi2_exact: None }),
            }
        }
        RecordData::Sampled(rec) => {
            if rec.scheme == Scheme::SingleQuadrature && (rec.channels[0].phi - p.phi_lo).abs() > 1e-12 {
                return Err(Error::InvalidConfig("record LO phase differs from the model's".into()));
            }
            (rec.scheme, measure(rec, input.t_m, &p, input.alpha0)?)
        }
    };
    let mut est = Estimator::new(p, input.alpha0, scheme);
    est.scale = input.scale;
    est.lambdas = input.lambdas;
    est.update(&input.prior, input.variant, input.t_m, &data)
}

/// Populations after every sample, chaining one Gaussian likelihood (variance `1/dt`,
/// means from the exact interval averages) per record interval.
pub fn sequential_diagonal(record: &TrajectoryRecord, prior: &QubitDM, p: &ModelParams, alpha0: ComplexAmp) -> Result<Vec<(f64, f64)>> {
    let m = FieldModel::new(*p, alpha0);
    let dt = record.dt;
    let series = [m.alpha_series(Branch::G), m.alpha_series(Branch::E)];
    let mut prev = [Complex64::new(0.0, 0.0); 2];
    let mut ln_ratio = 0.0;
    let mut out = Vec::with_capacity(record.len());
    for k in 0..record.len() {
        let t1 = (k + 1) as f64 * dt;
        let cur = [series[0].integrate(t1), series[1].integrate(t1)];
        for (j, ch) in record.channels.iter().enumerate() {
            let x = record.samples[j][k];
            let mg = ch.mean_output(p, cur[0] - prev[0]) / dt;
            let me = ch.mean_output(p, cur[1] - prev[1]) / dt;
            ln_ratio += 0.5 * dt * ((x - mg).powi(2) - (x - me).powi(2));
        }
        prev = cur;
        out.push(update_diagonal(prior, &Likelihoods::from_logs(0.0, ln_ratio))?);
    }
    Ok(out)
}
