//! Husimi Q-function and coherent-state fidelity of cavity density matrices.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_coefficients, coherent_state, hermiticity_defect, ComplexAmp};

const HERM_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const EIG_TOL: f64 = 1e-9;

/// Cavity density matrix on Fock levels `0..=nmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityDM {
    matrix: Array2<Complex64>,
}

impl CavityDM {
    pub fn new(matrix: Array2<Complex64>) -> Result<Self> {
        let dm = Self { matrix };
        dm.validate()?;
        Ok(dm)
    }

    /// `|v><v| / <v|v>`.
    pub fn pure(v: &[Complex64]) -> Result<Self> {
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidDimension("zero cavity vector".into()));
        }
        let n = v.len();
        let m = Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj() / norm);
        Ok(Self { matrix: m })
    }

    pub fn coherent(alpha: ComplexAmp, nmax: usize) -> Result<Self> {
        Self::pure(coherent_state(alpha, nmax)?.vector.coeffs())
    }

    pub fn nmax(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diag().iter().sum()
    }

    /// `<v|rho|v>` for an arbitrary (not necessarily normalized) vector.
    pub fn sandwich(&self, v: &[Complex64]) -> Complex64 {
        let n = self.matrix.nrows();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += self.matrix[[i, j]] * v[j];
            }
            acc += v[i].conj() * row;
        }
        acc
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.matrix.dim();
        if r != c || r < 2 {
            return Err(Error::InvalidDimension(format!("cavity matrix is {r}x{c}")));
        }
        let h = hermiticity_defect(&self.matrix);
        if h > HERM_TOL {
            return Err(Error::InvariantViolation(format!("cavity matrix not Hermitian ({h:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvariantViolation(format!("cavity trace {tr}")));
        }
        if !self.shifted_cholesky(EIG_TOL) {
            return Err(Error::InvariantViolation("cavity matrix has eigenvalue below -1e-9".into()));
        }
        Ok(())
    }

    /// True when `rho + shift * 1` admits a Cholesky factorization, i.e. all eigenvalues exceed `-shift`.
    fn shifted_cholesky(&self, shift: f64) -> bool {
        let n = self.matrix.nrows();
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = self.matrix[[j, j]].re + shift;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if d <= 0.0 {
                return false;
            }
            let d = d.sqrt();
            l[j * n + j] = Complex64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = self.matrix[[i, j]];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / d;
            }
        }
        true
    }
}

/// Rectangular sampling grid in the complex `alpha` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl PhaseGrid {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64, n_re: usize, n_im: usize) -> Result<Self> {
        let g = Self { re_min, re_max, im_min, im_max, n_re, n_im };
        g.validate()?;
        Ok(g)
    }

    /// 121 x 121 points over `[-2.5, 2.5]^2` in units of `scale`.
    pub fn default_for(scale: f64) -> Self {
        let s = 2.5 * scale.max(1.0);
        Self { re_min: -s, re_max: s, im_min: -s, im_max: s, n_re: 121, n_im: 121 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_re < 2 || self.n_im < 2 {
            return Err(Error::InvalidConfig("phase grid needs at least 2 points per axis".into()));
        }
        if !(self.re_max > self.re_min && self.im_max > self.im_min) {
            return Err(Error::InvalidConfig("phase grid bounds must satisfy max > min".into()));
        }
        Ok(())
    }

    pub fn re_axis(&self) -> Vec<f64> {
        axis(self.re_min, self.re_max, self.n_re)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        axis(self.im_min, self.im_max, self.n_im)
    }

    pub fn cell_area(&self) -> f64 {
        (self.re_max - self.re_min) / (self.n_re - 1) as f64 * (self.im_max - self.im_min) / (self.n_im - 1) as f64
    }

    fn max_radius(&self) -> f64 {
        let x = self.re_min.abs().max(self.re_max.abs());
        let y = self.im_min.abs().max(self.im_max.abs());
        x.hypot(y)
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Real field sampled on a [`PhaseGrid`]; `values[[i, j]]` sits at `re_axis[j] + i im_axis[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    pub grid: PhaseGrid,
    pub values: Array2<f64>,
}

impl QField {
    pub fn sub(&self, other: &QField) -> Result<QField> {
        if self.grid != other.grid {
            return Err(Error::InvalidConfig("Q fields on different grids".into()));
        }
        Ok(QField { grid: self.grid, values: &self.values - &other.values })
    }

    /// Riemann sum of the field over the grid.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.grid.cell_area()
    }

    /// Weighted mean position.
    pub fn centroid(&self) -> ComplexAmp {
        let (re, im) = (self.grid.re_axis(), self.grid.im_axis());
        let (mut w, mut x, mut y) = (0.0, 0.0, 0.0);
        for ((i, j), v) in self.values.indexed_iter() {
            w += v;
            x += v * re[j];
            y += v * im[i];
        }
        ComplexAmp::new(x / w, y / w)
    }

    pub fn argmax(&self) -> (ComplexAmp, f64) {
        self.extreme(|a, b| a > b)
    }

    pub fn argmin(&self) -> (ComplexAmp, f64) {
        self.extreme(|a, b| a < b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> (ComplexAmp, f64) {
        let (re, im) = (self.grid.re_axis(), self.grid.im_axis());
        let mut best = ((0, 0), self.values[[0, 0]]);
        for ((i, j), &v) in self.values.indexed_iter() {
            if better(v, best.1) {
                best = ((i, j), v);
            }
        }
        let ((i, j), v) = best;
        (ComplexAmp::new(re[j], im[i]), v)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON axis metadata written next to the CSV matrix.
    pub fn axes_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid,
            "rows": "im(alpha), ascending",
            "columns": "re(alpha), ascending",
            "re": self.grid.re_axis(),
            "im": self.grid.im_axis(),
        })
    }

    pub fn write_axes(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(&self.axes_json())?.as_bytes())?;
        Ok(())
    }
}

/// `Q(alpha) = <alpha|rho|alpha> / pi` on the grid.
pub fn qfunction(dm: &CavityDM, grid: &PhaseGrid) -> Result<QField> {
    grid.validate()?;
    let nmax = dm.nmax();
    let r = grid.max_radius();
    if r * r + 5.0 * r > nmax as f64 {
        log::warn!("phase grid reaches |alpha| = {r:.2}, beyond what nmax = {nmax} represents reliably");
    }
    let (re, im) = (grid.re_axis(), grid.im_axis());
    let rows: Vec<Vec<f64>> = im
        .par_iter()
        .map(|&y| {
            re.iter()
                .map(|&x| dm.sandwich(&coherent_coefficients(Complex64::new(x, y), nmax)).re / PI)
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((grid.n_im, grid.n_re), |(i, j)| rows[i][j]);
    Ok(QField { grid: *grid, values })
}

/// `<alpha|rho|alpha>` with the truncated, renormalized coherent state.
pub fn coherent_fidelity(dm: &CavityDM, alpha: ComplexAmp) -> Result<f64> {
    let coh = coherent_state(alpha, dm.nmax())?;
    Ok(dm.sandwich(coh.vector.coeffs()).re.clamp(0.0, 1.0))
}
