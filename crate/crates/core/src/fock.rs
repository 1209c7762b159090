//! Truncated Fock-space linear algebra for one qubit coupled to one cavity mode.
//!
//! Joint vectors and operators use qubit-major ordering: index `q * (nmax + 1) + n`
//! with `q = 0` for `|g>` and `q = 1` for `|e>`, and `n` the photon number.
//! `sigma_z |g> = -|g>`, `sigma_z |e> = +|e>`.

use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ORDERING_QUBIT_MAJOR: &str = "qubit_major";

/// Complex field amplitude (alpha, beta, mu, ...).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexAmp {
    pub re: f64,
    pub im: f64,
}

impl ComplexAmp {
    pub const ZERO: ComplexAmp = ComplexAmp { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(magnitude: f64, phase: f64) -> Self {
        Complex64::from_polar(magnitude, phase).into()
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Phase on (-pi, pi].
    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn c64(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<Complex64> for ComplexAmp {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexAmp> for Complex64 {
    fn from(z: ComplexAmp) -> Self {
        Complex64::new(z.re, z.im)
    }
}

impl fmt::Display for ComplexAmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}i", self.re, self.im)
    }
}

/// Photon-number cutoff recommended for fields up to `alpha_max`.
pub fn default_nmax(alpha_max: f64) -> usize {
    let n = alpha_max * alpha_max;
    (n + 5.0 * n.sqrt() + 5.0).ceil() as usize
}

fn check_nmax(nmax: usize) -> Result<()> {
    if nmax < 1 {
        return Err(Error::InvalidDimension(format!("nmax must be >= 1, got {nmax}")));
    }
    Ok(())
}

/// Cavity state vector `c_0 .. c_nmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityVector {
    coeffs: Vec<Complex64>,
}

impl CavityVector {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        check_nmax(coeffs.len().saturating_sub(1))?;
        Ok(Self { coeffs })
    }

    pub fn vacuum(nmax: usize) -> Result<Self> {
        check_nmax(nmax)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); nmax + 1];
        coeffs[0] = Complex64::new(1.0, 0.0);
        Ok(Self { coeffs })
    }

    pub fn nmax(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &CavityVector) -> Result<Complex64> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.len(),
                got: other.coeffs.len(),
            });
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Untruncated coherent-state coefficients `e^{-|a|^2/2} a^n / sqrt(n!)` for `n <= nmax`,
/// without renormalization.
pub fn coherent_coefficients(alpha: Complex64, nmax: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(nmax + 1);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    out.push(c);
    for n in 1..=nmax {
        c = c * alpha / (n as f64).sqrt();
        out.push(c);
    }
    out
}

#[derive(Clone, Debug)]
pub struct CoherentState {
    pub vector: CavityVector,
    /// Probability weight beyond the cutoff, `1 - sum_{n<=nmax} |c_n|^2` before renormalization.
    pub norm_deficiency: f64,
}

/// Coherent state `|alpha>` truncated at `nmax` and renormalized.
pub fn coherent_state(alpha: ComplexAmp, nmax: usize) -> Result<CoherentState> {
    check_nmax(nmax)?;
    let a = alpha.c64();
    let n_mean = a.norm_sqr();
    if n_mean + 5.0 * n_mean.sqrt() > nmax as f64 {
        log::warn!("coherent state |{alpha}> is poorly represented with nmax = {nmax}");
    }
    let mut coeffs = coherent_coefficients(a, nmax);
    let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let scale = kept.sqrt();
    for c in &mut coeffs {
        *c /= scale;
    }
    Ok(CoherentState {
        vector: CavityVector { coeffs },
        norm_deficiency: (1.0 - kept).max(0.0),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateDump {
    pub nmax: usize,
    pub ordering: String,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Pure joint qubit-cavity state.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    nmax: usize,
    amps: Vec<Complex64>,
}

impl JointState {
    pub fn new(nmax: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_nmax(nmax)?;
        let dim = 2 * (nmax + 1);
        if amps.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: amps.len() });
        }
        Ok(Self { nmax, amps })
    }

    /// `(c_g |g> + c_e |e>) ⊗ |cavity>`.
    pub fn product(c_g: Complex64, c_e: Complex64, cavity: &CavityVector) -> Self {
        let nmax = cavity.nmax();
        let mut amps = Vec::with_capacity(2 * (nmax + 1));
        amps.extend(cavity.coeffs().iter().map(|c| c_g * c));
        amps.extend(cavity.coeffs().iter().map(|c| c_e * c));
        Self { nmax, amps }
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// Cavity amplitudes attached to qubit level `q` (0 = g, 1 = e), unnormalized.
    pub fn branch(&self, q: usize) -> &[Complex64] {
        let n = self.nmax + 1;
        &self.amps[q * n..(q + 1) * n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            for c in &mut self.amps {
                *c /= norm;
            }
        }
        norm
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &JointState) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn to_dump(&self) -> StateDump {
        StateDump {
            nmax: self.nmax,
            ordering: ORDERING_QUBIT_MAJOR.to_string(),
            re: self.amps.iter().map(|c| c.re).collect(),
            im: self.amps.iter().map(|c| c.im).collect(),
        }
    }

    pub fn from_dump(dump: &StateDump) -> Result<Self> {
        if dump.ordering != ORDERING_QUBIT_MAJOR {
            return Err(Error::InvalidConfig(format!(
                "unsupported basis ordering '{}'",
                dump.ordering
            )));
        }
        if dump.re.len() != dump.im.len() {
            return Err(Error::DimensionMismatch { expected: dump.re.len(), got: dump.im.len() });
        }
        let amps = dump.re.iter().zip(&dump.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        Self::new(dump.nmax, amps)
    }
}

/// Dense operator on the joint space.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOperator {
    nmax: usize,
    matrix: Array2<Complex64>,
    hermitian: bool,
}

/// Largest element of `|m - m^dagger|`.
pub fn hermiticity_defect(m: &Array2<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

impl JointOperator {
    pub fn new(nmax: usize, matrix: Array2<Complex64>) -> Result<Self> {
        check_nmax(nmax)?;
        let dim = 2 * (nmax + 1);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: matrix.nrows() });
        }
        let hermitian = hermiticity_defect(&matrix) == 0.0;
        Ok(Self { nmax, matrix, hermitian })
    }

    /// Like [`JointOperator::new`] but rejects matrices that are not exactly Hermitian.
    pub fn new_hermitian(nmax: usize, matrix: Array2<Complex64>) -> Result<Self> {
        let op = Self::new(nmax, matrix)?;
        if !op.hermitian {
            return Err(Error::InvariantViolation(format!(
                "operator expected Hermitian, defect {:e}",
                hermiticity_defect(&op.matrix)
            )));
        }
        Ok(op)
    }

    /// `I_qubit ⊗ cavity`.
    pub fn from_cavity(cavity: &Array2<Complex64>) -> Result<Self> {
        let n = cavity.nrows();
        check_nmax(n.saturating_sub(1))?;
        let mut m = Array2::zeros((2 * n, 2 * n));
        for q in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    m[[q * n + i, q * n + j]] = cavity[[i, j]];
                }
            }
        }
        Self::new(n - 1, m)
    }

    /// `qubit ⊗ I_cavity`, `qubit[[row, col]]` in the (g, e) basis.
    pub fn from_qubit(qubit: [[Complex64; 2]; 2], nmax: usize) -> Result<Self> {
        check_nmax(nmax)?;
        let n = nmax + 1;
        let mut m = Array2::zeros((2 * n, 2 * n));
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..n {
                    m[[r * n + k, c * n + k]] = qubit[r][c];
                }
            }
        }
        Self::new(nmax, m)
    }

    pub fn sigma_z(nmax: usize) -> Result<Self> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::from_qubit([[-one, zero], [zero, one]], nmax)
    }

    /// Homodyne quadrature `(a e^{-i phi} + a^dagger e^{i phi}) / 2`.
    pub fn quadrature(nmax: usize, phi: f64) -> Result<Self> {
        let ops = build_fock_operators(nmax)?;
        let rot = Complex64::from_polar(1.0, -phi);
        let cav = ops.a.mapv(|x| x * rot * 0.5) + ops.a_dag.mapv(|x| x * rot.conj() * 0.5);
        let op = Self::from_cavity(&cav)?;
        Self::new_hermitian(nmax, op.matrix)
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        let matrix = self.matrix.t().mapv(|x| x.conj());
        Self { nmax: self.nmax, matrix, hermitian: self.hermitian }
    }

    pub fn apply(&self, state: &JointState) -> Result<Vec<Complex64>> {
        if state.dim() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: state.dim() });
        }
        let psi = state.amplitudes();
        Ok(self
            .matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(psi).map(|(m, p)| m * p).sum())
            .collect())
    }
}

/// Ladder operators of the cavity factor, `(nmax + 1) x (nmax + 1)`.
#[derive(Clone, Debug)]
pub struct FockOperators {
    pub a: Array2<Complex64>,
    pub a_dag: Array2<Complex64>,
    pub n: Array2<Complex64>,
    pub identity: Array2<Complex64>,
}

pub fn build_fock_operators(nmax: usize) -> Result<FockOperators> {
    check_nmax(nmax)?;
    let dim = nmax + 1;
    let mut a = Array2::<Complex64>::zeros((dim, dim));
    for m in 0..nmax {
        a[[m, m + 1]] = Complex64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    let a_dag = a.t().mapv(|x| x.conj());
    let n = Array2::from_shape_fn((dim, dim), |(i, j)| {
        if i == j {
            Complex64::new(i as f64, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let identity = Array2::from_shape_fn((dim, dim), |(i, j)| {
        Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
    });
    Ok(FockOperators { a, a_dag, n, identity })
}

/// `<psi|O|psi>`.
pub fn expectation(op: &JointOperator, state: &JointState) -> Result<Complex64> {
    let o_psi = op.apply(state)?;
    Ok(state.amplitudes().iter().zip(&o_psi).map(|(p, q)| p.conj() * q).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ladder_matrices() {
        let ops = build_fock_operators(1).unwrap();
        let nonzero: Vec<_> = ops.a.indexed_iter().filter(|(_, v)| v.norm() > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, (0, 1));
        assert_eq!(*nonzero[0].1, c(1.0, 0.0));

        let ops = build_fock_operators(3).unwrap();
        assert_abs_diff_eq!(ops.a[[2, 3]].re, 1.7320508075688772, epsilon = 1e-15);
        assert_eq!(ops.a_dag, ops.a.t().mapv(|x| x.conj()));
    }

    #[test]
    fn truncated_commutator_is_identity_below_cutoff() {
        let nmax = 6;
        let ops = build_fock_operators(nmax).unwrap();
        let comm = ops.a.dot(&ops.a_dag) - ops.a_dag.dot(&ops.a);
        for i in 0..nmax {
            for j in 0..nmax {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(comm[[i, j]].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(comm[[i, j]].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_zero_cutoff() {
        assert!(matches!(build_fock_operators(0), Err(Error::InvalidDimension(_))));
        assert!(coherent_state(ComplexAmp::ZERO, 0).is_err());
    }

    #[test]
    fn vacuum_coherent_state() {
        let s = coherent_state(ComplexAmp::ZERO, 8).unwrap();
        assert_eq!(s.vector.coeffs()[0], c(1.0, 0.0));
        assert!(s.vector.coeffs()[1..].iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn coherent_truncation_loss_matches_poisson_tail() {
        let s = coherent_state(ComplexAmp::new(1.0, 0.0), 16).unwrap();
        // Poisson(1) tail beyond 16: e^{-1} sum_{n>16} 1/n!
        let mut tail = 0.0;
        let mut term = (-1.0f64).exp();
        for n in 1..60 {
            term /= n as f64;
            if n > 16 {
                tail += term;
            }
        }
        assert!(s.norm_deficiency < 1e-10);
        assert_abs_diff_eq!(s.norm_deficiency, tail, epsilon = 1e-15);
    }

    #[test]
    fn coherent_overlap() {
        let a = coherent_state(ComplexAmp::new(0.5, 0.0), 20).unwrap();
        let b = coherent_state(ComplexAmp::new(-0.5, 0.0), 20).unwrap();
        let ov = a.vector.overlap(&b.vector).unwrap();
        assert_abs_diff_eq!(ov.norm(), (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn coherent_norm_monotone_in_cutoff() {
        let alpha = ComplexAmp::new(1.3, -0.7);
        let mut last = 0.0;
        for nmax in 1..30 {
            let kept: f64 = coherent_coefficients(alpha.c64(), nmax).iter().map(|x| x.norm_sqr()).sum();
            assert!(kept >= last);
            last = kept;
        }
        assert_abs_diff_eq!(last, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let nmax = 20;
        let coh = coherent_state(ComplexAmp::new(1.0, 0.0), nmax).unwrap().vector;
        let psi = JointState::product(c(1.0, 0.0), c(0.0, 0.0), &coh);
        let ops = build_fock_operators(nmax).unwrap();
        let id = JointOperator::from_cavity(&ops.identity).unwrap();
        assert_abs_diff_eq!(expectation(&id, &psi).unwrap().re, 1.0, epsilon = 1e-12);
        let n = JointOperator::from_cavity(&ops.n).unwrap();
        assert_abs_diff_eq!(expectation(&n, &psi).unwrap().re, 1.0, epsilon = 1e-9);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let vac = CavityVector::vacuum(nmax).unwrap();
        let plus = JointState::product(c(s, 0.0), c(s, 0.0), &vac);
        let sz = JointOperator::sigma_z(nmax).unwrap();
        assert_abs_diff_eq!(expectation(&sz, &plus).unwrap().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hermitian_constructions_are_exact() {
        for phi in [0.0, 0.3, 1.1, 2.9] {
            let q = JointOperator::quadrature(7, phi).unwrap();
            assert!(q.is_hermitian());
            assert_eq!(hermiticity_defect(q.matrix()), 0.0);
        }
        assert!(JointOperator::sigma_z(4).unwrap().is_hermitian());
        let ops = build_fock_operators(4).unwrap();
        assert!(JointOperator::new_hermitian(4, JointOperator::from_cavity(&ops.a).unwrap().matrix().clone()).is_err());
    }

    #[test]
    fn state_dump_round_trip() {
        let coh = coherent_state(ComplexAmp::new(0.3, 0.2), 5).unwrap().vector;
        let psi = JointState::product(c(0.6, 0.0), c(0.0, 0.8), &coh);
        let text = serde_json::to_string(&psi.to_dump()).unwrap();
        assert!(text.contains("\"ordering\":\"qubit_major\""));
        let back = JointState::from_dump(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, psi);
    }

    #[test]
    fn complex_amp_polar_round_trip() {
        for (r, th) in [(0.5, 0.1), (2.0, -3.0), (1e-3, 3.1)] {
            let z = ComplexAmp::from_polar(r, th);
            assert_abs_diff_eq!(z.abs(), r, epsilon = 1e-12);
            assert_abs_diff_eq!(z.arg(), th, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_state(nmax: usize, seed: &[f64]) -> JointState {
            let dim = 2 * (nmax + 1);
            let amps = (0..dim)
                .map(|k| c(seed[k % seed.len()] + 0.1 * k as f64, seed[(k + 3) % seed.len()]))
                .collect();
            let mut s = JointState::new(nmax, amps).unwrap();
            s.normalize();
            s
        }

        proptest! {
            #[test]
            fn expectation_is_linear_and_conjugate_symmetric(
                seed in proptest::collection::vec(-1.0f64..1.0, 8),
                phi in 0.0f64..6.0,
                w in -2.0f64..2.0,
            ) {
                let nmax = 4;
                let psi = random_state(nmax, &seed);
                let ops = build_fock_operators(nmax).unwrap();
                let a = JointOperator::from_cavity(&ops.a).unwrap();
                let q = JointOperator::quadrature(nmax, phi).unwrap();
                let ea = expectation(&a, &psi).unwrap();
                let ead = expectation(&a.adjoint(), &psi).unwrap();
                prop_assert!((ead - ea.conj()).norm() < 1e-12);

                let eq = expectation(&q, &psi).unwrap();
                prop_assert!(eq.im.abs() < 1e-10);

                let combo = JointOperator::new(nmax, a.matrix() * Complex64::new(w, 0.0) + q.matrix()).unwrap();
                let ec = expectation(&combo, &psi).unwrap();
                prop_assert!((ec - (ea * w + eq)).norm() < 1e-12);
            }
        }
    }
}
