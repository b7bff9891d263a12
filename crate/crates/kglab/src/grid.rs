//! Discretisation of the cylinder `R_t x S^1`.
//!
//! Space is periodic with `n_x` equispaced samples on a circle of given
//! circumference; time is a uniform grid on `[t_min, t_max]`. All spatial
//! derivatives in the crate are spectral, built from the dense Fourier
//! differentiation matrix (grids are small enough that dense beats FFT
//! bookkeeping).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spacetime sampling and field mass. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_x: usize,
    pub circumference: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub mass: f64,
}

impl GridSpec {
    pub fn new(
        n_x: usize,
        circumference: f64,
        t_min: f64,
        t_max: f64,
        dt: f64,
        mass: f64,
    ) -> Result<Self> {
        if n_x < 8 || n_x % 2 != 0 {
            return Err(Error::Config(format!(
                "n_x must be even and >= 8, got {n_x}"
            )));
        }
        if !(circumference > 0.0) {
            return Err(Error::Config("circumference must be positive".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(t_min < t_max) {
            return Err(Error::Config("t_min must be below t_max".into()));
        }
        if !(mass > 0.0) {
            return Err(Error::Config(
                "mass must be strictly positive (zero mode of (-lap+m^2)^{1/2} degenerates)"
                    .into(),
            ));
        }
        Ok(Self {
            n_x,
            circumference,
            t_min,
            t_max,
            dt,
            mass,
        })
    }

    pub fn dx(&self) -> f64 {
        self.circumference / self.n_x as f64
    }

    /// Number of time samples, t_min + i*dt for i = 0..n_t.
    pub fn n_t(&self) -> usize {
        ((self.t_max - self.t_min) / self.dt).round() as usize + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn xs(&self) -> DVector<f64> {
        DVector::from_fn(self.n_x, |j, _| self.x(j))
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.dt
    }

    /// Effective wavenumber of integer mode k.
    pub fn k_eff(&self, k: i64) -> f64 {
        2.0 * PI * k as f64 / self.circumference
    }

    /// Dispersion relation `omega_k = sqrt(k_eff^2 + m^2)`.
    pub fn omega(&self, k: i64) -> f64 {
        let ke = self.k_eff(k);
        (ke * ke + self.mass * self.mass).sqrt()
    }

    /// Largest mode index strictly below Nyquist.
    pub fn k_full(&self) -> i64 {
        self.n_x as i64 / 2 - 1
    }

    /// Dense spectral differentiation matrix on the periodic grid.
    ///
    /// Real, exactly antisymmetric; the Nyquist mode derivative is set to
    /// zero so the matrix maps real data to real data.
    pub fn diff_matrix(&self) -> DMatrix<f64> {
        let n = self.n_x;
        let mut d = DMatrix::zeros(n, n);
        // Column c of D is the derivative of the delta at x_c, assembled in
        // Fourier space: D = F^* (i k_eff) F with the Nyquist row dropped.
        for c in 0..n {
            for r in 0..n {
                let mut s = 0.0;
                for k in 1..=(n as i64 / 2 - 1) {
                    let ke = self.k_eff(k);
                    let phase = ke * (self.x(r) - self.x(c));
                    s += -2.0 * ke * phase.sin();
                }
                d[(r, c)] = s / n as f64;
            }
        }
        d
    }

    /// Fourier coefficient of sampled periodic data:
    /// `u_hat_k = dx / sqrt(L) * sum_j u_j exp(-i k_eff x_j)`.
    pub fn fourier_coeff(&self, u: &DVector<f64>, k: i64) -> C64 {
        let ke = self.k_eff(k);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.n_x {
            let ph = -ke * self.x(j);
            acc += u[j] * C64::new(ph.cos(), ph.sin());
        }
        acc * self.dx() / self.circumference.sqrt()
    }

    /// Same for complex sampled data.
    pub fn fourier_coeff_c(&self, u: &DVector<C64>, k: i64) -> C64 {
        let ke = self.k_eff(k);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.n_x {
            let ph = -ke * self.x(j);
            acc += u[j] * C64::new(ph.cos(), ph.sin());
        }
        acc * self.dx() / self.circumference.sqrt()
    }

    /// Periodic trapezoidal quadrature (plain Riemann sum on a circle).
    pub fn integrate(&self, f: &DVector<f64>) -> f64 {
        f.sum() * self.dx()
    }
}

/// Real orthonormal trigonometric basis of the kept-mode subspace:
/// `1/sqrt(L)`, then `sqrt(2/L) cos(k_eff x)`, `sqrt(2/L) sin(k_eff x)`
/// for k = 1..=k_max. Used by the mode-space (Galerkin) evolution.
pub struct TrigBasis {
    /// n_x x (2 k_max + 1), column i samples basis function e_i.
    pub samples: DMatrix<f64>,
    /// Spatial derivative samples, same layout.
    pub deriv: DMatrix<f64>,
    pub k_max: i64,
}

impl TrigBasis {
    pub fn new(grid: &GridSpec, k_max: i64) -> Result<Self> {
        let xs: Vec<f64> = (0..grid.n_x).map(|j| grid.x(j)).collect();
        let (samples, deriv) = Self::tables_at(grid, k_max, &xs)?;
        Ok(Self {
            samples,
            deriv,
            k_max,
        })
    }

    /// Basis function and derivative tables at an arbitrary point set.
    pub fn tables_at(
        grid: &GridSpec,
        k_max: i64,
        xs: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if k_max < 0 || k_max > grid.k_full() {
            return Err(Error::Config(format!(
                "k_max {} out of range 0..={}",
                k_max,
                grid.k_full()
            )));
        }
        let m = (2 * k_max + 1) as usize;
        let n = xs.len();
        let l = grid.circumference;
        let mut samples = DMatrix::zeros(n, m);
        let mut deriv = DMatrix::zeros(n, m);
        for (j, &x) in xs.iter().enumerate() {
            samples[(j, 0)] = 1.0 / l.sqrt();
            for k in 1..=k_max {
                let ke = grid.k_eff(k);
                let a = (2.0 / l).sqrt();
                let ic = (2 * (k as usize) - 1) as usize;
                let is = ic + 1;
                samples[(j, ic)] = a * (ke * x).cos();
                samples[(j, is)] = a * (ke * x).sin();
                deriv[(j, ic)] = -a * ke * (ke * x).sin();
                deriv[(j, is)] = a * ke * (ke * x).cos();
            }
        }
        Ok((samples, deriv))
    }

    pub fn dim(&self) -> usize {
        (2 * self.k_max + 1) as usize
    }
}
