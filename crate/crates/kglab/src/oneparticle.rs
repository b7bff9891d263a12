//! Ultrastatic ground-state one-particle structure in the Fourier mode basis.
//!
//! Per mode k the Cauchy-data pair `(u_k, pi_k)` carries the 2x2 blocks
//!
//! ```text
//!   J_k = [[0, -1/om], [om, 0]]      (complex structure)
//!   A_k = diag(om, 1/om)             (one-particle inner product)
//!   p_k = 1/2 [[1, i/om], [-i om, 1]] (positive-frequency projection)
//! ```
//!
//! with `om = sqrt(k_eff^2 + m^2)`. The annihilation normalisation
//! `a_k = (om^{1/2} u_k + i om^{-1/2} pi_k) / sqrt(2)` rescales the image of
//! the projection so that `[a, a*] = 1`; the projection itself contracts
//! norms by `1/sqrt(2)`.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::wavesolver::CauchyData;
use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone)]
pub struct OneParticleStructure {
    pub grid: GridSpec,
    pub k_max: i64,
    /// omega_k for k = -k_max..=k_max, indexed by k + k_max.
    pub omega: DVector<f64>,
}

/// Annihilation-coordinate representation of real Cauchy data on the
/// truncated mode space, indexed by k + k_max.
#[derive(Debug, Clone)]
pub struct ModeAmplitudes {
    pub a: DVector<C64>,
    pub k_max: i64,
}

impl OneParticleStructure {
    pub fn modes(&self) -> usize {
        (2 * self.k_max + 1) as usize
    }

    pub fn index(&self, k: i64) -> usize {
        (k + self.k_max) as usize
    }

    pub fn mode_of_index(&self, i: usize) -> i64 {
        i as i64 - self.k_max
    }

    pub fn omega_k(&self, k: i64) -> f64 {
        self.omega[self.index(k)]
    }

    pub fn j_block(&self, k: i64) -> Matrix2<f64> {
        let om = self.omega_k(k);
        Matrix2::new(0.0, -1.0 / om, om, 0.0)
    }

    pub fn a_block(&self, k: i64) -> Matrix2<f64> {
        let om = self.omega_k(k);
        Matrix2::new(om, 0.0, 0.0, 1.0 / om)
    }

    pub fn p_block(&self, k: i64) -> nalgebra::Matrix2<C64> {
        let om = self.omega_k(k);
        nalgebra::Matrix2::new(
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5 / om),
            C64::new(0.0, -0.5 * om),
            C64::new(0.5, 0.0),
        )
    }
}

/// Build the structure for mass m > 0 at mode cutoff `k_max <= n_x/2 - 1`.
pub fn build(grid: &GridSpec, k_max: i64) -> Result<OneParticleStructure> {
    if !(grid.mass > 0.0) {
        return Err(Error::Config(
            "one-particle structure requires m > 0 (zero-mode singularity)".into(),
        ));
    }
    if k_max < 0 || k_max > grid.k_full() {
        return Err(Error::Config(format!(
            "k_max {} out of range 0..={}",
            k_max,
            grid.k_full()
        )));
    }
    let omega = DVector::from_fn((2 * k_max + 1) as usize, |i, _| {
        grid.omega(i as i64 - k_max)
    });
    Ok(OneParticleStructure {
        grid: grid.clone(),
        k_max,
        omega,
    })
}

/// `a_k = (om^{1/2} u_hat_k + i om^{-1/2} pi_hat_k) / sqrt(2)` over the kept
/// modes, with `pi = du/dn` on a flat exterior slice.
pub fn to_modes(data: &CauchyData, ops: &OneParticleStructure) -> Result<ModeAmplitudes> {
    let grid = &ops.grid;
    if data.u.len() != grid.n_x {
        return Err(Error::GridMismatch("data length vs grid".into()));
    }
    let m = ops.modes();
    let mut a = DVector::from_element(m, C64::new(0.0, 0.0));
    for i in 0..m {
        let k = ops.mode_of_index(i);
        let om = ops.omega[i];
        let u_hat = grid.fourier_coeff(&data.u, k);
        let pi_hat = grid.fourier_coeff(&data.nu, k);
        a[i] = (u_hat * om.sqrt() + C64::i() * pi_hat / om.sqrt()) / 2.0f64.sqrt();
    }
    Ok(ModeAmplitudes { a, k_max: ops.k_max })
}

/// Reconstruct real Cauchy data from mode amplitudes (exact inverse of
/// [`to_modes`] on the truncated mode space).
pub fn from_modes(amps: &ModeAmplitudes, ops: &OneParticleStructure, slice_time: f64) -> CauchyData {
    let grid = &ops.grid;
    let n = grid.n_x;
    let l = grid.circumference;
    let mut u = DVector::zeros(n);
    let mut nu = DVector::zeros(n);
    for i in 0..ops.modes() {
        let k = ops.mode_of_index(i);
        let om = ops.omega[i];
        let a = amps.a[i];
        // u_hat_k = (a_k + conj(a_{-k})) / (sqrt(2) om^{1/2}) reassembled as
        // a sum over k of a_k-contributions to u and nu
        let ke = grid.k_eff(k);
        for j in 0..n {
            let ph = ke * grid.x(j);
            let e = C64::new(ph.cos(), ph.sin());
            // contribution of a_k e_k/sqrt(2 om) + conj to u, and the pi part
            u[j] += (a * e / (2.0 * om).sqrt() / l.sqrt()).re * 2.0;
            nu[j] += (-C64::i() * (om / 2.0).sqrt() * a * e / l.sqrt()).re * 2.0;
        }
    }
    CauchyData {
        u,
        nu,
        slice_time,
    }
}

/// Sobolev-type norm `||u||^2_{H^{s+1/2}} + ||pi||^2_{H^{s-1/2}}` with
/// symbol weights `(k_eff^2 + m^2)`; summed over all grid modes.
pub fn sobolev_norm(data: &CauchyData, s: f64, grid: &GridSpec) -> f64 {
    let half = grid.n_x as i64 / 2;
    let mut acc = 0.0;
    for k in -half..half {
        let w = grid.k_eff(k).powi(2) + grid.mass * grid.mass;
        let u_hat = grid.fourier_coeff(&data.u, k);
        let pi_hat = grid.fourier_coeff(&data.nu, k);
        acc += w.powf(s + 0.5) * u_hat.norm_sqr() + w.powf(s - 0.5) * pi_hat.norm_sqr();
    }
    acc.sqrt().powi(2)
}

/// A-inner product of real data in mode space (used by compatibility tests):
/// `<f, g>_A = sum_k om |u_k|^2-type pairings`.
pub fn a_inner(f: &CauchyData, g: &CauchyData, grid: &GridSpec) -> f64 {
    let half = grid.n_x as i64 / 2;
    let mut acc = C64::new(0.0, 0.0);
    for k in -half..half {
        let om = grid.omega(k);
        let uf = grid.fourier_coeff(&f.u, k);
        let pf = grid.fourier_coeff(&f.nu, k);
        let ug = grid.fourier_coeff(&g.u, k);
        let pg = grid.fourier_coeff(&g.nu, k);
        acc += uf.conj() * ug * om + pf.conj() * pg / om;
    }
    acc.re
}

/// J applied to real data, computed mode by mode over all grid modes.
pub fn apply_j(data: &CauchyData, grid: &GridSpec) -> CauchyData {
    let half = grid.n_x as i64 / 2;
    let n = grid.n_x;
    let l = grid.circumference;
    let mut u = DVector::zeros(n);
    let mut nu = DVector::zeros(n);
    for k in -half..half {
        let om = grid.omega(k);
        let uh = grid.fourier_coeff(&data.u, k);
        let ph = grid.fourier_coeff(&data.nu, k);
        // (u, pi) -> (-pi/om, om u)
        let ju = -ph / om;
        let jp = uh * om;
        let ke = grid.k_eff(k);
        for j in 0..n {
            let e = C64::new((ke * grid.x(j)).cos(), (ke * grid.x(j)).sin()) / l.sqrt();
            u[j] += (ju * e).re;
            nu[j] += (jp * e).re;
        }
    }
    CauchyData {
        u,
        nu,
        slice_time: data.slice_time,
    }
}

/// Complex E/P matrices mapping mode amplitudes to/from the phase-space
/// coordinates a [`crate::wavesolver::SymplecticMap`] acts on. Used by the
/// Bogoliubov block extraction.
pub struct ModeConversion {
    /// amplitudes -> phase space, alpha inserted with beta = 0
    pub e_alpha: DMatrix<C64>,
    /// conjugate-sector insertion, beta with alpha = 0
    pub e_beta: DMatrix<C64>,
    /// phase space -> alpha
    pub p_alpha: DMatrix<C64>,
    /// phase space -> beta
    pub p_beta: DMatrix<C64>,
    /// mode flip k -> -k
    pub flip: DMatrix<f64>,
}

impl ModeConversion {
    /// Conversion for grid-basis maps acting on stacked `(u, nu)`.
    pub fn for_grid(ops: &OneParticleStructure) -> Self {
        let grid = &ops.grid;
        let n = grid.n_x;
        let m = ops.modes();
        let l = grid.circumference;
        let mut e_alpha = DMatrix::from_element(2 * n, m, C64::new(0.0, 0.0));
        let mut e_beta = e_alpha.clone();
        let mut p_alpha = DMatrix::from_element(m, 2 * n, C64::new(0.0, 0.0));
        let mut p_beta = p_alpha.clone();
        for i in 0..m {
            let k = ops.mode_of_index(i);
            let om = ops.omega[i];
            let ke = grid.k_eff(k);
            for j in 0..n {
                let ph = ke * grid.x(j);
                let ep = C64::new(ph.cos(), ph.sin());
                let em = ep.conj();
                // data with unit alpha_i: u_hat = 1/sqrt(2 om), pi_hat = -i sqrt(om/2)
                e_alpha[(j, i)] = ep / (2.0 * om).sqrt() / l.sqrt();
                e_alpha[(n + j, i)] = -C64::i() * (om / 2.0).sqrt() * ep / l.sqrt();
                // data with unit beta_i: u_hat = 1/sqrt(2 om), pi_hat = +i sqrt(om/2)
                e_beta[(j, i)] = ep / (2.0 * om).sqrt() / l.sqrt();
                e_beta[(n + j, i)] = C64::i() * (om / 2.0).sqrt() * ep / l.sqrt();
                // alpha_i = (sqrt(om) u_hat + i pi_hat / sqrt(om)) / sqrt(2)
                let w = grid.dx() / l.sqrt();
                p_alpha[(i, j)] = em * w * (om / 2.0).sqrt();
                p_alpha[(i, n + j)] = C64::i() * em * w / (2.0 * om).sqrt();
                p_beta[(i, j)] = em * w * (om / 2.0).sqrt();
                p_beta[(i, n + j)] = -C64::i() * em * w / (2.0 * om).sqrt();
            }
        }
        let mut flip = DMatrix::zeros(m, m);
        for i in 0..m {
            let k = ops.mode_of_index(i);
            flip[(ops.index(-k), i)] = 1.0;
        }
        Self {
            e_alpha,
            e_beta,
            p_alpha,
            p_beta,
            flip,
        }
    }

    /// Conversion for mode-basis maps acting on stacked `(Q, P)` in the
    /// real trigonometric basis [1, cos_1, sin_1, ..., cos_K, sin_K].
    pub fn for_modes(ops: &OneParticleStructure) -> Self {
        let m = ops.modes();
        let k_max = ops.k_max;
        // u_hat_0 = Q_0; u_hat_{+-k} = (Q_c -+ i Q_s)/sqrt(2)
        let mut u_from_q = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
        for i in 0..m {
            let k = ops.mode_of_index(i);
            if k == 0 {
                u_from_q[(i, 0)] = C64::new(1.0, 0.0);
            } else {
                let c_col = (2 * k.unsigned_abs() - 1) as usize;
                let s_col = c_col + 1;
                u_from_q[(i, c_col)] = C64::new(1.0 / 2.0f64.sqrt(), 0.0);
                u_from_q[(i, s_col)] = if k > 0 {
                    C64::new(0.0, -1.0 / 2.0f64.sqrt())
                } else {
                    C64::new(0.0, 1.0 / 2.0f64.sqrt())
                };
            }
        }
        // inverse: Q_0 = u_hat_0 (real); Q_c = (u_k + u_{-k})/sqrt2, Q_s = i(u_k - u_{-k})/sqrt2
        let mut q_from_u = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
        for col in 0..m {
            // invert the unitary u_from_q
            for row in 0..m {
                q_from_u[(col, row)] = u_from_q[(row, col)].conj();
            }
        }
        let dim = 2 * m;
        let mut e_alpha = DMatrix::from_element(dim, m, C64::new(0.0, 0.0));
        let mut e_beta = e_alpha.clone();
        let mut p_alpha = DMatrix::from_element(m, dim, C64::new(0.0, 0.0));
        let mut p_beta = p_alpha.clone();
        for i in 0..m {
            let om = ops.omega[i];
            for r in 0..m {
                // unit alpha_i: u_hat = e_i /sqrt(2 om), pi_hat = -i sqrt(om/2) e_i
                let q_coef = q_from_u[(r, i)] / (2.0 * om).sqrt();
                let p_coef = q_from_u[(r, i)] * (-C64::i()) * (om / 2.0).sqrt();
                e_alpha[(r, i)] += q_coef;
                e_alpha[(m + r, i)] += p_coef;
                e_beta[(r, i)] += q_coef;
                e_beta[(m + r, i)] -= p_coef;
                // alpha_i from (Q,P): alpha = (sqrt(om) u_hat + i pi_hat/sqrt(om))/sqrt2
                let ua = u_from_q[(i, r)] * (om / 2.0).sqrt();
                let pa = u_from_q[(i, r)] * C64::i() / (2.0 * om).sqrt();
                p_alpha[(i, r)] += ua;
                p_alpha[(i, m + r)] += pa;
                p_beta[(i, r)] += ua;
                p_beta[(i, m + r)] -= pa;
            }
        }
        let mut flip = DMatrix::zeros(m, m);
        for i in 0..m {
            let k = i as i64 - k_max;
            flip[((-k + k_max) as usize, i)] = 1.0;
        }
        Self {
            e_alpha,
            e_beta,
            p_alpha,
            p_beta,
            flip,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(64, 8.0 * PI, -1.0, 1.0, 0.05, 1.0).unwrap()
    }

    #[test]
    fn zero_mode_blocks_at_unit_mass() {
        let ops = build(&grid(), 3).unwrap();
        let j = ops.j_block(0);
        assert_eq!(j, Matrix2::new(0.0, -1.0, 1.0, 0.0));
        assert_eq!(ops.a_block(0), Matrix2::identity());
        let p = ops.p_block(0);
        assert_abs_diff_eq!(p[(0, 1)].im, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 0)].im, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn j_squares_to_minus_one_and_p_is_projection() {
        let ops = build(&grid(), 3).unwrap();
        for k in -3..=3 {
            let j = ops.j_block(k);
            assert!((j * j + Matrix2::identity()).abs().max() < 1e-14);
            let p = ops.p_block(k);
            let d = p * p - p;
            assert!(d.iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-14);
            // p + conj(p) = 1
            let s = p + p.map(|c| c.conj());
            assert!((s - nalgebra::Matrix2::identity().map(|v: f64| C64::new(v, 0.0)))
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max)
                < 1e-14);
        }
    }

    #[test]
    fn mass_zero_rejected() {
        assert!(GridSpec::new(64, 8.0 * PI, -1.0, 1.0, 0.05, 0.0).is_err());
    }

    #[test]
    fn mode_round_trip_is_identity() {
        let g = grid();
        let ops = build(&g, 3).unwrap();
        // data supported on kept modes
        let mut u = DVector::zeros(g.n_x);
        let mut nu = DVector::zeros(g.n_x);
        for j in 0..g.n_x {
            let x = g.x(j);
            u[j] = 0.3 + 0.7 * (g.k_eff(1) * x).cos() - 0.2 * (g.k_eff(3) * x).sin();
            nu[j] = 0.1 * (g.k_eff(2) * x).sin() + 0.5 * (g.k_eff(1) * x).cos();
        }
        let data = CauchyData::new(u, nu, 0.0).unwrap();
        let amps = to_modes(&data, &ops).unwrap();
        let back = from_modes(&amps, &ops, 0.0);
        assert!((&back.u - &data.u).abs().max() < 1e-13);
        assert!((&back.nu - &data.nu).abs().max() < 1e-13);
    }

    #[test]
    fn zero_data_gives_zero_amplitudes() {
        let g = grid();
        let ops = build(&g, 3).unwrap();
        let amps = to_modes(&CauchyData::zero(g.n_x, 0.0), &ops).unwrap();
        assert!(amps.a.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn cosine_mode_splits_evenly() {
        let g = grid();
        let ops = build(&g, 3).unwrap();
        let k = 2i64;
        let data = CauchyData::new(
            DVector::from_fn(g.n_x, |j, _| (g.k_eff(k) * g.x(j)).cos()),
            DVector::zeros(g.n_x),
            0.0,
        )
        .unwrap();
        let amps = to_modes(&data, &ops).unwrap();
        let ap = amps.a[ops.index(k)];
        let am = amps.a[ops.index(-k)];
        assert_abs_diff_eq!((ap - am).norm(), 0.0, epsilon = 1e-12);
        assert!(ap.norm() > 0.1);
        assert_abs_diff_eq!(amps.a[ops.index(0)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sobolev_norm_at_s_zero_equals_a_norm() {
        let g = grid();
        let data = CauchyData::new(
            DVector::from_fn(g.n_x, |j, _| (g.k_eff(2) * g.x(j)).cos()),
            DVector::from_fn(g.n_x, |j, _| 0.4 * (g.k_eff(1) * g.x(j)).sin()),
            0.0,
        )
        .unwrap();
        let s0 = sobolev_norm(&data, 0.0, &g);
        let a = a_inner(&data, &data, &g);
        assert_abs_diff_eq!(s0, a, epsilon = 1e-10);
        assert_eq!(sobolev_norm(&CauchyData::zero(g.n_x, 0.0), 0.0, &g), 0.0);
        // annihilation normalisation halves the A-norm
        let ops = build(&g, 3).unwrap();
        let amps = to_modes(&data, &ops).unwrap();
        let norm2: f64 = amps.a.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(2.0 * norm2, a, epsilon = 1e-10);
    }

    #[test]
    fn compatibility_sigma_equals_minus_j_inner() {
        use crate::geometry::MetricField;
        use crate::wavesolver::symplectic_form;
        let g = grid();
        let flat = MetricField::flat(&g);
        let mk = |seed: u64| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            CauchyData::new(
                DVector::from_fn(g.n_x, |_, _| rng.gen_range(-1.0..1.0)),
                DVector::from_fn(g.n_x, |_, _| rng.gen_range(-1.0..1.0)),
                0.0,
            )
            .unwrap()
        };
        let f = mk(7);
        let h = mk(8);
        let sigma = symplectic_form(&f, &h, &flat).unwrap();
        let jf = apply_j(&f, &g);
        let minus_j = -a_inner(&jf, &h, &g);
        assert_abs_diff_eq!(sigma, minus_j, epsilon = 1e-10);
        // Kahler: J is an A-isometry and skew
        assert_abs_diff_eq!(a_inner(&jf, &jf, &g), a_inner(&f, &f, &g), epsilon = 1e-10);
        let jh = apply_j(&h, &g);
        assert_abs_diff_eq!(
            a_inner(&jf, &h, &g),
            -a_inner(&f, &jh, &g),
            epsilon = 1e-10
        );
    }

    #[test]
    fn norm_equivalence_constant_bounded_by_omega_ratio() {
        let g = grid();
        let ops = build(&g, 3).unwrap();
        // on kept modes: ratio of kappa-norm^2 (= A-norm/2) to H^{1/2} x H^{-1/2}
        // norm is bounded by max(om_hat, 1/om_hat) over kept modes, om_hat = om/ref
        let mut worst: f64 = 1.0;
        for i in 0..ops.modes() {
            let om = ops.omega[i];
            worst = worst.max(om.max(1.0 / om));
        }
        // single-mode data saturate the diagonal comparison
        for k in -3i64..=3 {
            let data = CauchyData::new(
                DVector::from_fn(g.n_x, |j, _| (g.k_eff(k) * g.x(j)).cos()),
                DVector::zeros(g.n_x),
                0.0,
            )
            .unwrap();
            let a = a_inner(&data, &data, &g);
            let sob = sobolev_norm(&data, 0.0, &g);
            let ratio = a / sob;
            assert!(ratio <= worst + 1e-12 && ratio >= 1.0 / worst - 1e-12);
        }
    }
}
