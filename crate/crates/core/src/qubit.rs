//! Two-level density matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TRACE_TOL: f64 = 1e-9;
const POP_TOL: f64 = 1e-12;
const COH_TOL: f64 = 1e-9;

/// Qubit density matrix; `rho_ge` is `<g|rho|e>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitDM {
    pub rho_gg: f64,
    pub rho_ee: f64,
    pub rho_ge: Complex64,
}

impl QubitDM {
    pub fn new(rho_gg: f64, rho_ee: f64, rho_ge: Complex64) -> Result<Self> {
        let dm = Self { rho_gg, rho_ee, rho_ge };
        dm.validate()?;
        Ok(dm)
    }

    pub fn ground() -> Self {
        Self { rho_gg: 1.0, rho_ee: 0.0, rho_ge: Complex64::new(0.0, 0.0) }
    }

    pub fn excited() -> Self {
        Self { rho_gg: 0.0, rho_ee: 1.0, rho_ge: Complex64::new(0.0, 0.0) }
    }

    /// `|psi><psi|` for `psi = c_g |g> + c_e |e>` (normalized on the fly).
    pub fn pure(c_g: Complex64, c_e: Complex64) -> Result<Self> {
        let n = c_g.norm_sqr() + c_e.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvariantViolation("zero qubit amplitude".into()));
        }
        Ok(Self { rho_gg: c_g.norm_sqr() / n, rho_ee: c_e.norm_sqr() / n, rho_ge: c_g * c_e.conj() / n })
    }

    /// `(|g> + |e>)/sqrt 2`.
    pub fn plus() -> Self {
        Self { rho_gg: 0.5, rho_ee: 0.5, rho_ge: Complex64::new(0.5, 0.0) }
    }

    pub fn rho_eg(&self) -> Complex64 {
        self.rho_ge.conj()
    }

    pub fn trace(&self) -> f64 {
        self.rho_gg + self.rho_ee
    }

    /// `<sigma_z> = rho_ee - rho_gg`.
    pub fn sigma_z(&self) -> f64 {
        self.rho_ee - self.rho_gg
    }

    pub fn purity(&self) -> f64 {
        self.rho_gg * self.rho_gg + self.rho_ee * self.rho_ee + 2.0 * self.rho_ge.norm_sqr()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let half = 0.5 * self.trace();
        let d = 0.5 * (self.rho_gg - self.rho_ee);
        half - (d * d + self.rho_ge.norm_sqr()).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_gg.is_finite() && self.rho_ee.is_finite() && self.rho_ge.re.is_finite() && self.rho_ge.im.is_finite()) {
            return Err(Error::InvariantViolation("non-finite qubit density matrix".into()));
        }
        if (self.trace() - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvariantViolation(format!("qubit trace {}", self.trace())));
        }
        if self.rho_gg < -POP_TOL || self.rho_ee < -POP_TOL {
            return Err(Error::InvariantViolation(format!("negative population ({}, {})", self.rho_gg, self.rho_ee)));
        }
        let bound = (self.rho_gg.max(0.0) * self.rho_ee.max(0.0)).sqrt();
        if self.rho_ge.norm() > bound + COH_TOL {
            return Err(Error::InvariantViolation(format!(
                "|rho_ge| = {} exceeds sqrt(rho_gg rho_ee) = {bound}",
                self.rho_ge.norm()
            )));
        }
        Ok(())
    }

    /// Scales `rho_ge` down to the positivity bound; returns whether anything changed.
    pub fn clamp_coherence(&mut self) -> bool {
        let bound = (self.rho_gg.max(0.0) * self.rho_ee.max(0.0)).sqrt();
        let m = self.rho_ge.norm();
        if m > bound {
            self.rho_ge = if m > 0.0 { self.rho_ge * (bound / m) } else { Complex64::new(0.0, 0.0) };
            true
        } else {
            false
        }
    }

    /// Hilbert-Schmidt-style distance used in comparisons.
    pub fn max_abs_diff(&self, other: &QubitDM) -> f64 {
        (self.rho_gg - other.rho_gg).abs().max((self.rho_ge - other.rho_ge).norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_states_have_unit_purity() {
        let dm = QubitDM::pure(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).unwrap();
        assert!((dm.purity() - 1.0).abs() < 1e-14);
        assert!(dm.min_eigenvalue().abs() < 1e-14);
        assert!(dm.validate().is_ok());
        assert!((dm.rho_ge - Complex64::new(0.0, -0.48)).norm() < 1e-15);
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(QubitDM::new(0.7, 0.4, Complex64::new(0.0, 0.0)).is_err());
        assert!(QubitDM::new(0.5, 0.5, Complex64::new(0.6, 0.0)).is_err());
        assert!(QubitDM::new(1.0 + 1e-6, -1e-6, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn clamp_restores_bound() {
        let mut dm = QubitDM { rho_gg: 0.5, rho_ee: 0.5, rho_ge: Complex64::new(0.0, 0.7) };
        assert!(dm.clamp_coherence());
        assert!((dm.rho_ge.norm() - 0.5).abs() < 1e-15);
        assert!(!dm.clamp_coherence());
    }
}
