//! Deterministic master equation `d rho = -i[H, rho] dt + kappa D[a] rho dt`, the ensemble
//! average of the conditional trajectories.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use super::{build_hamiltonian, SimConfig};
use crate::error::{Error, Result};
use crate::fock::{build_fock_operators, JointOperator};
use crate::qubit::QubitDM;

const MAX_STEP: f64 = 0.005;

#[derive(Clone, Debug)]
pub struct LindbladPath {
    pub times: Vec<f64>,
    pub qubit: Vec<QubitDM>,
    pub trace: Vec<f64>,
}

struct Generator {
    h: Array2<Complex64>,
    a: Array2<Complex64>,
    a_dag: Array2<Complex64>,
    n: Array2<Complex64>,
    kappa: f64,
}

impl Generator {
    fn apply(&self, rho: &Array2<Complex64>) -> Array2<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let hr = self.h.dot(rho);
        let rh = rho.dot(&self.h);
        let jump = self.a.dot(rho).dot(&self.a_dag);
        let nr = self.n.dot(rho);
        let rn = rho.dot(&self.n);
        let mut out = Array2::zeros(rho.raw_dim());
        Zip::from(&mut out)
            .and(&hr)
            .and(&rh)
            .and(&jump)
            .and(&nr)
            .and(&rn)
            .for_each(|o, &hr, &rh, &j, &nr, &rn| {
                *o = -i * (hr - rh) + (j - 0.5 * (nr + rn)) * self.kappa;
            });
        out
    }

    fn rk4(&self, rho: &Array2<Complex64>, h: f64) -> Array2<Complex64> {
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &(&k1 * (0.5 * h))));
        let k3 = self.apply(&(rho + &(&k2 * (0.5 * h))));
        let k4 = self.apply(&(rho + &(&k3 * h)));
        rho + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
    }
}

fn reduce(rho: &Array2<Complex64>, n1: usize) -> (QubitDM, f64) {
    let (mut gg, mut ee, mut ge) = (0.0, 0.0, Complex64::new(0.0, 0.0));
    for n in 0..n1 {
        gg += rho[[n, n]].re;
        ee += rho[[n1 + n, n1 + n]].re;
        ge += rho[[n, n1 + n]];
    }
    let tr = gg + ee;
    (QubitDM { rho_gg: gg / tr, rho_ee: ee / tr, rho_ge: ge / tr }, tr)
}

/// Qubit marginal of the master-equation solution at the requested (ascending) times.
pub fn lindblad_at(cfg: &SimConfig, times: &[f64]) -> Result<LindbladPath> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidConfig("output times must be ascending and non-negative".into()));
    }
    let nmax = cfg.nmax();
    let n1 = nmax + 1;
    let ops = build_fock_operators(nmax)?;
    let gen = Generator {
        h: build_hamiltonian(&cfg.params, nmax)?.matrix().clone(),
        a: JointOperator::from_cavity(&ops.a)?.matrix().clone(),
        a_dag: JointOperator::from_cavity(&ops.a_dag)?.matrix().clone(),
        n: JointOperator::from_cavity(&ops.n)?.matrix().clone(),
        kappa: cfg.params.kappa,
    };
    let psi = cfg.initial_state()?;
    let v = psi.amplitudes();
    let mut rho = Array2::from_shape_fn((v.len(), v.len()), |(i, j)| v[i] * v[j].conj());
    let mut now = 0.0;
    let mut path = LindbladPath { times: Vec::new(), qubit: Vec::new(), trace: Vec::new() };
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / MAX_STEP).ceil() as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                rho = gen.rk4(&rho, h);
            }
            now = t;
        }
        let (q, tr) = reduce(&rho, n1);
        path.times.push(t);
        path.qubit.push(q);
        path.trace.push(tr);
    }
    Ok(path)
}

/// Master-equation path on the snapshot cadence (default 0.05) up to `t_end`.
pub fn run_lindblad(cfg: &SimConfig) -> Result<LindbladPath> {
    let every = cfg.snapshot_every.unwrap_or(0.05);
    let n = (cfg.t_end / every).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| (k as f64 * every).min(cfg.t_end)).collect();
    lindblad_at(cfg, &times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldModel, ModelParams};
    use crate::fock::ComplexAmp;
    use crate::quad::adaptive_simpson;

    #[test]
    fn undriven_coherence_is_constant() {
        let mut cfg = SimConfig::new(ModelParams::new(0.0, 0.1, 0.0, 2.0, 0.0), 1e-3, 2.0);
        cfg.nmax = Some(3);
        let path = run_lindblad(&cfg).unwrap();
        for q in &path.qubit {
            assert!((q.rho_ge - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn coherence_decays_at_dephasing_rate() {
        let p = ModelParams::new(0.0, 0.1, 1.0, 2.0, 0.0);
        let cfg = SimConfig::new(p, 1e-3, 4.0);
        let path = run_lindblad(&cfg).unwrap();
        let m = FieldModel::new(p, ComplexAmp::ZERO);
        for (t, q) in path.times.iter().zip(&path.qubit) {
            assert!((path.trace[0] - 1.0).abs() < 1e-8);
            let decay = adaptive_simpson(&|s| m.rates(s).gamma_d, 0.0, *t, 1e-10).unwrap();
            let want = 0.5 * (-decay).exp();
            assert!((q.rho_ge.norm() - want).abs() < 0.01 * want, "t = {t}");
            // <g|rho|e> rotates by +Phi1
            let phase = m.stark_phase(*t);
            assert!((q.rho_ge.arg() - phase).abs() < 1e-3, "t = {t}");
        }
        for tr in &path.trace {
            assert!((tr - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_unsorted_times() {
        let cfg = SimConfig::new(ModelParams::new(0.0, 0.1, 1.0, 2.0, 0.0), 1e-3, 1.0);
        assert!(lindblad_at(&cfg, &[0.5, 0.2]).is_err());
    }
}
