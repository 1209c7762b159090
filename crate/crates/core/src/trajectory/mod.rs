//! Conditional pure-state trajectories of the joint qubit-cavity system under homodyne detection.
//!
//! Each step integrates the linear stochastic Schrodinger equation driven by the measured
//! increments `dY_j = <X_j> dt + dW_j` and renormalizes; this is the Ito trajectory equation
//! for the conditional state, written so that the record enters linearly.

mod lindblad;
mod noise;
mod record;

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Branch, Channel, ModelParams};
use crate::fock::{coherent_state, default_nmax, CavityVector, ComplexAmp, JointOperator, JointState};
use crate::qfunc::CavityDM;
use crate::qubit::QubitDM;

pub use lindblad::{lindblad_at, run_lindblad, LindbladPath};
pub use noise::{trajectory_seed, NoiseSource};
pub use record::{conventions, git_blob_sha1, RecordMetadata, Snapshot, TrajectoryRecord};

const NORM_FLOOR: f64 = 1e-6;
const CONDITIONAL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SingleQuadrature,
    TwoQuadrature,
}

impl Scheme {
    pub fn channels(self, phi_lo: f64) -> Vec<Channel> {
        match self {
            Scheme::SingleQuadrature => vec![Channel::single(phi_lo)],
            Scheme::TwoQuadrature => Channel::iq().to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Adds the `(1/2) L^2 (dY^2 - dt)` correction; the channel operators commute, so this is
    /// strong order one.
    Milstein,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_qubit() -> [ComplexAmp; 2] {
    [ComplexAmp::new(FRAC_1_SQRT_2, 0.0), ComplexAmp::new(FRAC_1_SQRT_2, 0.0)]
}

fn default_snapshot() -> Option<f64> {
    Some(0.05)
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    /// Fock cutoff; derived from the steady fields when absent.
    #[serde(default)]
    pub nmax: Option<usize>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    /// `(c_g, c_e)`.
    #[serde(default = "default_qubit")]
    pub initial_qubit: [ComplexAmp; 2],
    #[serde(default)]
    pub initial_cavity: ComplexAmp,
    /// Joint-state snapshot cadence; `None` disables snapshots.
    #[serde(default = "default_snapshot")]
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    /// Keep the reduced qubit state after every step.
    #[serde(default = "yes")]
    pub record_qubit: bool,
}

impl SimConfig {
    pub fn new(params: ModelParams, dt: f64, t_end: f64) -> Self {
        Self {
            params,
            nmax: None,
            dt,
            t_end,
            scheme: Scheme::SingleQuadrature,
            seed: 0,
            initial_qubit: default_qubit(),
            initial_cavity: ComplexAmp::ZERO,
            snapshot_every: default_snapshot(),
            integrator: Integrator::EulerMaruyama,
            record_qubit: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!("t_end = {} must be >= dt = {}", self.t_end, self.dt)));
        }
        let [g, e] = self.initial_qubit;
        let n = g.abs().powi(2) + e.abs().powi(2);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("|c_g|^2 + |c_e|^2 = {n}, expected 1")));
        }
        if !self.initial_cavity.is_finite() {
            return Err(Error::InvalidConfig("initial cavity field must be finite".into()));
        }
        if let Some(s) = self.snapshot_every {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("snapshot_every must be > 0".into()));
            }
        }
        if self.nmax() < 1 {
            return Err(Error::InvalidDimension("nmax must be >= 1".into()));
        }
        Ok(())
    }

    pub fn nmax(&self) -> usize {
        self.nmax.unwrap_or_else(|| {
            let scale = self.params.steady_field_scale().max(self.initial_cavity.abs());
            default_nmax(scale)
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn channels(&self) -> Vec<Channel> {
        self.scheme.channels(self.params.phi_lo)
    }

    pub fn initial_qubit_dm(&self) -> Result<QubitDM> {
        QubitDM::pure(self.initial_qubit[0].c64(), self.initial_qubit[1].c64())
    }

    pub fn initial_state(&self) -> Result<JointState> {
        let cav = coherent_state(self.initial_cavity, self.nmax())?.vector;
        Ok(JointState::product(self.initial_qubit[0].c64(), self.initial_qubit[1].c64(), &cav))
    }

    fn snapshot_stride(&self) -> Option<usize> {
        self.snapshot_every.map(|s| ((s / self.dt).round() as usize).max(1))
    }
}

/// `Delta_r a^dag a + (omega_q/2) sigma_z + chi a^dag a sigma_z + eps_m (a + a^dag)` on the joint space.
pub fn build_hamiltonian(p: &ModelParams, nmax: usize) -> Result<JointOperator> {
    if nmax < 1 {
        return Err(Error::InvalidDimension(format!("nmax must be >= 1, got {nmax}")));
    }
    let n1 = nmax + 1;
    let mut h = Array2::<Complex64>::zeros((2 * n1, 2 * n1));
    for b in Branch::BOTH {
        let off = b.index() * n1;
        let s = b.sigma_z();
        for n in 0..n1 {
            let nf = n as f64;
            h[[off + n, off + n]] = Complex64::new(p.delta_r * nf + 0.5 * p.omega_q_tilde * s + p.chi * nf * s, 0.0);
            if n + 1 < n1 {
                let v = Complex64::new(p.eps_m * (nf + 1.0).sqrt(), 0.0);
                h[[off + n + 1, off + n]] = v;
                h[[off + n, off + n + 1]] = v;
            }
        }
    }
    JointOperator::new_hermitian(nmax, h)
}

/// Sparse ladder-action stepper for the joint state.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: ModelParams,
    nmax: usize,
    dt: f64,
    channels: Vec<Channel>,
    coef: Vec<Complex64>,
    sum_coef_sq: Complex64,
    sqrt: Vec<f64>,
    integrator: Integrator,
    phase: [Complex64; 2],
    buf: Vec<Complex64>,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        Self::with_channels(cfg, cfg.channels())
    }

    pub fn with_channels(cfg: &SimConfig, channels: Vec<Channel>) -> Result<Self> {
        let p = cfg.params;
        let nmax = cfg.nmax();
        let coef: Vec<Complex64> =
            channels.iter().map(|ch| Complex64::from_polar(ch.kappa(&p).sqrt(), -ch.phi)).collect();
        let sum_coef_sq = coef.iter().map(|c| c * c).sum();
        let phase = [
            Complex64::from_polar(1.0, 0.5 * p.omega_q_tilde * cfg.dt),
            Complex64::from_polar(1.0, -0.5 * p.omega_q_tilde * cfg.dt),
        ];
        Ok(Self {
            params: p,
            nmax,
            dt: cfg.dt,
            channels,
            coef,
            sum_coef_sq,
            sqrt: (0..nmax + 3).map(|k| if k <= nmax { (k as f64).sqrt() } else { 0.0 }).collect(),
            integrator: cfg.integrator,
            phase,
            buf: vec![Complex64::new(0.0, 0.0); 2 * (nmax + 1)],
        })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// `<a>` in a normalized state.
    fn mean_a(&self, psi: &[Complex64]) -> Complex64 {
        let n1 = self.nmax + 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for q in 0..2 {
            let b = &psi[q * n1..(q + 1) * n1];
            for n in 0..self.nmax {
                acc += b[n].conj() * b[n + 1] * self.sqrt[n + 1];
            }
        }
        acc
    }

    /// Deterministic output per channel, `2 sqrt(kappa_j) Re[e^{-i phi_j} <a>]`.
    pub fn mean_outputs(&self, state: &JointState, out: &mut [f64]) {
        let ea = self.mean_a(state.amplitudes());
        for (o, c) in out.iter_mut().zip(&self.coef) {
            *o = 2.0 * (c * ea).re;
        }
    }

    /// Advances `state` by one step using the increments `dw`; writes `<X_j> + dW_j / dt` into `samples`.
    pub fn step(&mut self, state: &mut JointState, t: f64, dw: &[f64], samples: &mut [f64]) -> Result<()> {
        if dw.len() != self.coef.len() || samples.len() != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len(), got: dw.len().min(samples.len()) });
        }
        let p = self.params;
        let dt = self.dt;
        let n1 = self.nmax + 1;
        let ea = self.mean_a(state.amplitudes());
        let mut lam = Complex64::new(0.0, 0.0);
        for j in 0..self.coef.len() {
            let x = 2.0 * (self.coef[j] * ea).re;
            samples[j] = x + dw[j] / dt;
            lam += self.coef[j] * (x * dt + dw[j]);
        }
        let milstein = match self.integrator {
            Integrator::EulerMaruyama => Complex64::new(0.0, 0.0),
            Integrator::Milstein => 0.5 * (lam * lam - self.sum_coef_sq * dt),
        };
        let psi = state.amplitudes();
        let sq = &self.sqrt;
        for b in Branch::BOTH {
            let off = b.index() * n1;
            let det = b.detuning(&p);
            let v = &psi[off..off + n1];
            let at = |k: usize| if k < n1 { v[k] } else { Complex64::new(0.0, 0.0) };
            for n in 0..n1 {
                let nf = n as f64;
                let lower = if n > 0 { v[n - 1] * sq[n] } else { Complex64::new(0.0, 0.0) };
                let upper = at(n + 1) * sq[n + 1];
                let h = v[n] * (det * nf) + (lower + upper) * p.eps_m;
                let drift = Complex64::new(h.im, -h.re) - v[n] * (0.5 * p.kappa * nf);
                let mut out = v[n] + drift * dt + lam * upper;
                if self.integrator == Integrator::Milstein {
                    out += milstein * at(n + 2) * sq[n + 1] * sq[n + 2];
                }
                self.buf[off + n] = out;
            }
        }
        let norm_sqr: f64 = self.buf.iter().map(|c| c.norm_sqr()).sum();
        if !(norm_sqr.sqrt() >= NORM_FLOOR) || !norm_sqr.is_finite() {
            return Err(Error::NormCollapse { norm: norm_sqr.sqrt(), t });
        }
        let inv = 1.0 / norm_sqr.sqrt();
        let amps = state.amplitudes_mut();
        for b in Branch::BOTH {
            let off = b.index() * n1;
            let ph = self.phase[b.index()] * inv;
            for n in 0..n1 {
                amps[off + n] = self.buf[off + n] * ph;
            }
        }
        Ok(())
    }
}

/// One single-quadrature step at the configured LO phase.
pub fn step_single(state: &JointState, dw: f64, cfg: &SimConfig) -> Result<(JointState, f64)> {
    let mut stepper = Stepper::with_channels(cfg, vec![Channel::single(cfg.params.phi_lo)])?;
    check_dim(state, stepper.nmax)?;
    let mut next = state.clone();
    let mut s = [0.0];
    stepper.step(&mut next, 0.0, &[dw], &mut s)?;
    Ok((next, s[0]))
}

/// One two-quadrature step; returns the state and the `(I, Q)` samples.
pub fn step_two(state: &JointState, dw1: f64, dw2: f64, cfg: &SimConfig) -> Result<(JointState, f64, f64)> {
    let mut stepper = Stepper::with_channels(cfg, Channel::iq().to_vec())?;
    check_dim(state, stepper.nmax)?;
    let mut next = state.clone();
    let mut s = [0.0; 2];
    stepper.step(&mut next, 0.0, &[dw1, dw2], &mut s)?;
    Ok((next, s[0], s[1]))
}

fn check_dim(state: &JointState, nmax: usize) -> Result<()> {
    if state.nmax() != nmax {
        return Err(Error::DimensionMismatch { expected: 2 * (nmax + 1), got: state.dim() });
    }
    Ok(())
}

/// Partial trace over the cavity.
pub fn reduce_qubit(state: &JointState) -> QubitDM {
    let g = state.branch(0);
    let e = state.branch(1);
    let pg: f64 = g.iter().map(|c| c.norm_sqr()).sum();
    let pe: f64 = e.iter().map(|c| c.norm_sqr()).sum();
    let ge: Complex64 = g.iter().zip(e).map(|(a, b)| a * b.conj()).sum();
    let n = pg + pe;
    QubitDM { rho_gg: pg / n, rho_ee: pe / n, rho_ge: ge / n }
}

/// Normalized cavity state conditioned on the qubit level, `<x|rho|x> / Tr<x|rho|x>`.
pub fn conditional_cavity(state: &JointState, branch: Branch) -> Result<CavityDM> {
    let v = state.branch(branch.index());
    let pop = v.iter().map(|c| c.norm_sqr()).sum::<f64>() / state.norm_sqr();
    if !(pop >= CONDITIONAL_FLOOR) {
        return Err(Error::UndefinedConditional { population: pop });
    }
    CavityDM::pure(v)
}

/// Source of the Wiener increments for a run.
#[derive(Clone, Copy, Debug)]
pub enum Increments<'a> {
    Seeded(u64),
    Replay(&'a [Vec<f64>]),
}

/// Integrates `cfg` and hands every post-step state to `observe(k, t, state, samples, dw)`.
pub fn drive<F>(cfg: &SimConfig, increments: Increments<'_>, mut observe: F) -> Result<JointState>
where
    F: FnMut(usize, f64, &JointState, &[f64], &[f64]),
{
    cfg.validate()?;
    let mut stepper = Stepper::new(cfg)?;
    let nch = stepper.channels().len();
    let steps = cfg.n_steps();
    let mut noise = match increments {
        Increments::Seeded(seed) => Some(NoiseSource::new(seed, nch, cfg.dt)),
        Increments::Replay(dw) => {
            if dw.len() != nch {
                return Err(Error::DimensionMismatch { expected: nch, got: dw.len() });
            }
            if dw.iter().any(|c| c.len() < steps) {
                return Err(Error::CadenceMismatch(format!("replayed noise shorter than {steps} steps")));
            }
            None
        }
    };
    let replay = match increments {
        Increments::Replay(dw) => dw,
        Increments::Seeded(_) => &[],
    };
    let mut state = cfg.initial_state()?;
    let mut dw = vec![0.0; nch];
    let mut samples = vec![0.0; nch];
    for k in 0..steps {
        match noise.as_mut() {
            Some(src) => src.fill(&mut dw),
            None => {
                for j in 0..nch {
                    dw[j] = replay[j][k];
                }
            }
        }
        let t = k as f64 * cfg.dt;
        stepper.step(&mut state, t, &dw, &mut samples)?;
        observe(k, t + cfg.dt, &state, &samples, &dw);
    }
    Ok(state)
}

fn record_run(cfg: &SimConfig, increments: Increments<'_>) -> Result<TrajectoryRecord> {
    let mut rec = TrajectoryRecord::empty(cfg)?;
    let stride = cfg.snapshot_stride();
    if stride.is_some() {
        rec.snapshots.push(Snapshot { t: 0.0, state: cfg.initial_state()? });
    }
    let keep_qubit = cfg.record_qubit;
    drive(cfg, increments, |k, t, state, samples, dw| {
        rec.times.push(t);
        for j in 0..samples.len() {
            rec.samples[j].push(samples[j]);
            rec.dw[j].push(dw[j]);
        }
        if keep_qubit {
            rec.qubit.push(reduce_qubit(state));
        }
        if let Some(s) = stride {
            if (k + 1) % s == 0 {
                rec.snapshots.push(Snapshot { t, state: state.clone() });
            }
        }
    })?;
    Ok(rec)
}

/// Full record of a seeded run; bit-identical for identical configs.
pub fn run_trajectory(cfg: &SimConfig) -> Result<TrajectoryRecord> {
    record_run(cfg, Increments::Seeded(cfg.seed))
}

/// Re-runs the joint dynamics on externally supplied increments (one vector per channel).
pub fn run_trajectory_with_noise(cfg: &SimConfig, dw: &[Vec<f64>]) -> Result<TrajectoryRecord> {
    record_run(cfg, Increments::Replay(dw))
}

/// Runs `n` trajectories with seeds `cfg.seed ^ index` in parallel; results keep index order.
pub fn run_ensemble<T, F>(cfg: &SimConfig, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &SimConfig) -> Result<T> + Sync,
{
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = trajectory_seed(cfg.seed, i as u64);
            f(i, &c)
        })
        .collect()
}

/// Cavity vector of a coherent state, convenience for callers building product states.
pub fn coherent_vector(alpha: ComplexAmp, nmax: usize) -> Result<CavityVector> {
    Ok(coherent_state(alpha, nmax)?.vector)
}
