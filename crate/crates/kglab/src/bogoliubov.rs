//! Bogoliubov decomposition of symplectic maps in the annihilation basis.
//!
//! A real symplectic map W acting on Cauchy data extends complex linearly to
//! the splitting into positive/negative frequency sectors, where it takes
//! the block form `[[q, conj(r)], [r, conj(q)]]`. The blocks satisfy
//! `q* q - r* r = 1`, `q` is invertible with
//! `q^{-1} = (1 + r* r)^{-1} q*`, and the derived operators
//! `K = conj(r q^{-1})`, `L = -q^{-1} conj(r)` are symmetric with operator
//! norm below one. Implementability on the Fock space is governed by the
//! Hilbert-Schmidt size of `r`, which this module measures through cutoff
//! sweeps.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::oneparticle::{self, ModeConversion, OneParticleStructure};
use crate::wavesolver::{MapBasis, SymplecticMap};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

fn conj_mat(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.map(|c| c.conj())
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Complex blocks of a symplectic map, with derived pair-creation data.
#[derive(Debug, Clone)]
pub struct BogoliubovData {
    pub q: DMatrix<C64>,
    pub r: DMatrix<C64>,
    pub k_max: i64,
    /// Frobenius norm of r (the Hilbert-Schmidt norm at this cutoff).
    pub hs_norm_r: f64,
    /// `K = conj(r q^{-1})`
    pub k_mat: DMatrix<C64>,
    /// `L = -q^{-1} conj(r)`
    pub l_mat: DMatrix<C64>,
    pub op_norm_k: f64,
    pub op_norm_l: f64,
    /// Max-norm disagreement between the direct inverse of q and the dual
    /// formula `(1 + r* r)^{-1} q*`.
    pub q_inverse_cross_check: f64,
}

impl BogoliubovData {
    pub fn modes(&self) -> usize {
        self.q.nrows()
    }

    /// `|q* q - r* r - 1|` in max norm.
    pub fn identity_defect(&self) -> f64 {
        let m = self.modes();
        let d = self.q.adjoint() * &self.q - self.r.adjoint() * &self.r
            - DMatrix::<C64>::identity(m, m);
        max_abs(&d)
    }

    pub fn symmetry_defect_k(&self) -> f64 {
        max_abs(&(&self.k_mat - self.k_mat.transpose()))
    }

    pub fn symmetry_defect_l(&self) -> f64 {
        max_abs(&(&self.l_mat - self.l_mat.transpose()))
    }

    pub fn singular_values_q(&self) -> DVector<f64> {
        self.q.clone().svd(false, false).singular_values
    }

    /// Blocks of the inverse map: `q -> q*`, `r -> -r^T`.
    pub fn inverse(&self) -> Result<Self> {
        from_blocks(self.q.adjoint(), -self.r.transpose(), self.k_max)
    }

    /// Blocks of the composition `W_self W_other` (self applied second).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let q = &self.q * &other.q + conj_mat(&self.r) * &other.r;
        let r = &self.r * &other.q + conj_mat(&self.q) * &other.r;
        from_blocks(q, r, self.k_max)
    }
}

/// Derive K, L and the cross-checks from raw (q, r) blocks.
pub fn from_blocks(q: DMatrix<C64>, r: DMatrix<C64>, k_max: i64) -> Result<BogoliubovData> {
    let m = q.nrows();
    let lu = q.clone().lu();
    let q_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::SingularSolve("q block not invertible".into()))?;
    // dual formula for the inverse
    let gram = DMatrix::<C64>::identity(m, m) + r.adjoint() * &r;
    let q_inv_dual = gram
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularSolve("1 + r* r not invertible".into()))?
        * q.adjoint();
    let cross = max_abs(&(&q_inv - &q_inv_dual));
    let k_mat = conj_mat(&(&r * &q_inv));
    let l_mat = -(&q_inv * conj_mat(&r));
    let op_norm_k = k_mat.clone().svd(false, false).singular_values.max();
    let op_norm_l = l_mat.clone().svd(false, false).singular_values.max();
    let hs_norm_r = r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(BogoliubovData {
        q,
        r,
        k_max,
        hs_norm_r,
        k_mat,
        l_mat,
        op_norm_k,
        op_norm_l,
        q_inverse_cross_check: cross,
    })
}

/// Conjugate a symplectic map into annihilation coordinates and extract the
/// blocks. The map's basis must contain every kept mode; the conjugate-block
/// structure of the complexified map is verified to `struct_tol` and a
/// violation signals non-real or non-symplectic input.
pub fn blocks(w: &SymplecticMap, ops: &OneParticleStructure) -> Result<BogoliubovData> {
    blocks_with_tol(w, ops, 1e-10)
}

pub fn blocks_with_tol(
    w: &SymplecticMap,
    ops: &OneParticleStructure,
    struct_tol: f64,
) -> Result<BogoliubovData> {
    let conv = match w.basis {
        MapBasis::Grid { n_x, .. } => {
            if n_x != ops.grid.n_x {
                return Err(Error::GridMismatch("map vs one-particle grid".into()));
            }
            ModeConversion::for_grid(ops)
        }
        MapBasis::Modes { k_max } => {
            if k_max != ops.k_max {
                return Err(Error::GridMismatch(
                    "mode-basis map cutoff differs from one-particle cutoff".into(),
                ));
            }
            ModeConversion::for_modes(ops)
        }
    };
    let sym = w.symplectic_defect();
    if sym > 1e-6 {
        return Err(Error::StructureViolation(format!(
            "input map has symplectic defect {sym:.3e} (tolerance 1e-6)"
        )));
    }
    let wc = w.mat.map(|v| C64::new(v, 0.0));
    let a11 = &conv.p_alpha * &wc * &conv.e_alpha;
    let a12 = &conv.p_alpha * &wc * &conv.e_beta;
    let a21 = &conv.p_beta * &wc * &conv.e_alpha;
    let a22 = &conv.p_beta * &wc * &conv.e_beta;
    let flip = conv.flip.map(|v| C64::new(v, 0.0));
    // reality structure: the beta sector is the flip-conjugate of alpha
    let d1 = max_abs(&(&a22 - &flip * conj_mat(&a11) * &flip));
    let d2 = max_abs(&(&a21 - &flip * conj_mat(&a12) * &flip));
    if d1.max(d2) > struct_tol {
        return Err(Error::StructureViolation(format!(
            "conjugate-block structure defect {:.3e} (tolerance {:.1e}); \
             input is not a real symplectic map in the expected basis",
            d1.max(d2),
            struct_tol
        )));
    }
    let q = a11;
    let r = conj_mat(&(&a12 * &flip));
    from_blocks(q, r, ops.k_max)
}

/// Hilbert-Schmidt growth and tail-decay report across mode cutoffs.
#[derive(Debug, Clone, Serialize)]
pub struct ShaleReport {
    /// (k_max, ||r||_HS) per cutoff, nondecreasing in the cutoff.
    pub hs_norms: Vec<(i64, f64)>,
    /// (k, omega_k, row norm of r at the largest cutoff) for k >= 0.
    pub rows: Vec<(i64, f64, f64)>,
    /// least-squares slope of log row-norm vs log omega over modes 2..k_max
    pub tail_decay_exponent: f64,
    /// share of ||r||_HS^2 carried by the top quartile of modes
    pub tail_fraction: f64,
    pub passes: bool,
}

/// Recompute r at increasing cutoffs and fit the row-norm decay.
/// `passes` requires the top quartile of modes to carry less than 1% of
/// the total Hilbert-Schmidt weight.
pub fn shale_sweep(
    w: &SymplecticMap,
    grid: &GridSpec,
    k_max_list: &[i64],
) -> Result<ShaleReport> {
    if k_max_list.is_empty() {
        return Err(Error::Config("empty cutoff list".into()));
    }
    let mut hs_norms = Vec::new();
    let mut last: Option<(BogoliubovData, OneParticleStructure)> = None;
    for &k in k_max_list {
        let ops = oneparticle::build(grid, k)?;
        let b = blocks(w, &ops)?;
        hs_norms.push((k, b.hs_norm_r));
        last = Some((b, ops));
    }
    let (b, ops) = last.unwrap();
    let k_top = ops.k_max;
    let mut rows = Vec::new();
    for k in 0..=k_top {
        let i = ops.index(k);
        let mut s = 0.0;
        for j in 0..b.modes() {
            s += b.r[(i, j)].norm_sqr();
        }
        rows.push((k, ops.omega_k(k), s.sqrt()));
    }
    // slope of log row norm vs log omega over modes 2..k_top
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(k, _, n)| *k >= 2 && *n > 0.0)
        .map(|(_, om, n)| (om.ln(), n.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let nx = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (nx * sxy - sx * sy) / (nx * sxx - sx * sx)
    } else {
        0.0
    };
    // tail: top quartile of |k|
    let k_cut = (3 * k_top + 3) / 4;
    let mut tail = 0.0;
    for i in 0..b.modes() {
        let k = ops.mode_of_index(i);
        if k.abs() >= k_cut {
            for j in 0..b.modes() {
                tail += b.r[(i, j)].norm_sqr();
            }
        }
    }
    let total = b.hs_norm_r.powi(2);
    // below this the map creates no pairs at working precision
    let floor = 1e-24;
    let tail_fraction = if total > floor { tail / total } else { 0.0 };
    let passes = total <= floor || tail_fraction < 0.01;
    Ok(ShaleReport {
        hs_norms,
        rows,
        tail_decay_exponent: slope,
        tail_fraction,
        passes,
    })
}

/// K and L with their norm constraints enforced.
pub fn kl_operators(b: &BogoliubovData) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if b.op_norm_k >= 1.0 || b.op_norm_l >= 1.0 {
        return Err(Error::NormCondition(format!(
            "||K|| = {:.6}, ||L|| = {:.6}; implementability requires both < 1",
            b.op_norm_k, b.op_norm_l
        )));
    }
    Ok((b.k_mat.clone(), b.l_mat.clone()))
}

/// Random element of the restricted symplectic group at a given pair
/// strength, built from a random symmetric K with ||K|| <= strength and a
/// random unitary polar factor. Deterministic in the RNG.
pub fn random_bogoliubov<R: Rng>(
    m: usize,
    strength: f64,
    rng: &mut R,
) -> Result<BogoliubovData> {
    // symmetric complex K
    let mut k = DMatrix::<C64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let top = k.clone().svd(false, false).singular_values.max();
    if top > 0.0 {
        k *= C64::new(strength / top, 0.0);
    }
    // random unitary from QR of a complex Gaussian matrix
    let g = DMatrix::<C64>::from_fn(m, m, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let qr = g.qr();
    let unitary = qr.q();
    // q = (1 - conj(K)^dagger conj(K))^{-1/2} V, r = conj(K) q
    let kc = conj_mat(&k);
    let gram = DMatrix::<C64>::identity(m, m) - kc.adjoint() * &kc;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut inv_sqrt = DMatrix::<C64>::zeros(m, m);
    for (idx, ev) in eig.eigenvalues.iter().enumerate() {
        if *ev <= 0.0 {
            return Err(Error::NormCondition("K strength too close to 1".into()));
        }
        let col = eig.eigenvectors.column(idx);
        let scale = C64::new(1.0 / ev.sqrt(), 0.0);
        for a in 0..m {
            for bb in 0..m {
                inv_sqrt[(a, bb)] += col[a] * scale * col[bb].conj();
            }
        }
    }
    let q = inv_sqrt * unitary;
    let r = kc * &q;
    from_blocks(q, r, (m as i64 - 1) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_metric, MetricField, PerturbationKind, PerturbationSpec};
    use crate::wavesolver::{
        mode_scattering_map, single_mode_squeeze, EvolutionConfig,
    };
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(64, 8.0 * PI, -0.85, 0.85, 0.05, 1.0).unwrap()
    }

    #[test]
    fn identity_map_has_trivial_blocks() {
        let g = grid();
        let ops = oneparticle::build(&g, 3).unwrap();
        let w = single_mode_squeeze(&g, 0, 1.0, 0.0).unwrap();
        let b = blocks(&w, &ops).unwrap();
        let m = b.modes();
        assert!(max_abs(&(&b.q - DMatrix::<C64>::identity(m, m))) < 1e-12);
        assert!(max_abs(&b.r) < 1e-12);
        assert!(max_abs(&b.k_mat) < 1e-12);
        assert!(max_abs(&b.l_mat) < 1e-12);
    }

    #[test]
    fn single_mode_squeeze_blocks_match_the_analytic_oracle() {
        let g = grid();
        let ops = oneparticle::build(&g, 3).unwrap();
        let lambda: f64 = 1.4;
        let k = 2i64;
        let w = single_mode_squeeze(&g, k, lambda, 0.0).unwrap();
        let b = blocks(&w, &ops).unwrap();
        let cq = (lambda + 1.0 / lambda) / 2.0;
        let cr = (lambda - 1.0 / lambda) / 2.0;
        let (ip, im) = (ops.index(k), ops.index(-k));
        assert_abs_diff_eq!(b.q[(ip, ip)].re, cq, epsilon = 1e-10);
        assert_abs_diff_eq!(b.q[(im, im)].re, cq, epsilon = 1e-10);
        assert_abs_diff_eq!(b.q[(ip, ip)].im, 0.0, epsilon = 1e-12);
        // r couples k with -k
        assert_abs_diff_eq!(b.r[(im, ip)].re, cr, epsilon = 1e-10);
        assert_abs_diff_eq!(b.r[(ip, im)].re, cr, epsilon = 1e-10);
        assert_abs_diff_eq!(b.r[(ip, ip)].norm(), 0.0, epsilon = 1e-12);
        // remaining diagonal of q is one
        assert_abs_diff_eq!(b.q[(ops.index(0), ops.index(0))].re, 1.0, epsilon = 1e-12);
        // K has tanh(theta) coupling (k, -k)
        let theta = lambda.ln();
        assert_abs_diff_eq!(b.k_mat[(ip, im)].re, theta.tanh(), epsilon = 1e-10);
        assert_abs_diff_eq!(b.k_mat[(im, ip)].re, theta.tanh(), epsilon = 1e-10);
        assert!(b.identity_defect() < 1e-10);
        assert!(b.symmetry_defect_k() < 1e-12);
    }

    #[test]
    fn zero_mode_squeeze_k_is_tanh() {
        let g = grid();
        let ops = oneparticle::build(&g, 2).unwrap();
        let lambda: f64 = (0.3f64).exp();
        let w = single_mode_squeeze(&g, 0, lambda, 0.0).unwrap();
        let b = blocks(&w, &ops).unwrap();
        let i0 = ops.index(0);
        assert_abs_diff_eq!(b.k_mat[(i0, i0)].re, (0.3f64).tanh(), epsilon = 1e-10);
        // r = 0 implies K = L = 0 away from the squeezed mode
        assert_abs_diff_eq!(b.l_mat[(i0, i0)].re, -(0.3f64).tanh(), epsilon = 1e-10);
    }

    #[test]
    fn scattering_blocks_satisfy_the_group_identities() {
        let g = grid();
        let flat = MetricField::flat(&g);
        let spec = PerturbationSpec::new(
            PerturbationKind::ConformalBump,
            (0.0, 0.0),
            (0.6, 2.4),
            0.1,
        )
        .unwrap();
        let pert = build_metric(&g, &[spec]).unwrap();
        let cfg = EvolutionConfig::for_accuracy(&g, 1.6, 1e-11);
        let w = mode_scattering_map(&pert, &flat, 5, -0.75, 0.75, &cfg).unwrap();
        let ops = oneparticle::build(&g, 5).unwrap();
        let b = blocks(&w, &ops).unwrap();
        assert!(b.hs_norm_r > 1e-4, "perturbation should create pairs");
        assert!(b.identity_defect() < 1e-10, "{}", b.identity_defect());
        assert!(b.symmetry_defect_k() < 1e-10);
        assert!(b.symmetry_defect_l() < 1e-10);
        assert!(b.q_inverse_cross_check < 1e-10);
        assert!(b.singular_values_q().min() >= 1.0 - 1e-10);
        assert!(b.op_norm_k < 1.0 && b.op_norm_l < 1.0);
        // q^T r symmetric (the product form of K symmetry)
        let qtr = b.q.transpose() * &b.r;
        assert!(max_abs(&(&qtr - qtr.transpose())) < 1e-10);
        // inverse blocks follow the W^{-1} pattern
        let binv = b.inverse().unwrap();
        let winv = w.inverse().unwrap();
        let b2 = blocks(&winv, &ops).unwrap();
        assert!(max_abs(&(&binv.q - &b2.q)) < 1e-9);
        assert!(max_abs(&(&binv.r - &b2.r)) < 1e-9);
    }

    #[test]
    fn composition_matches_map_product() {
        let g = grid();
        let ops = oneparticle::build(&g, 2).unwrap();
        let w1 = single_mode_squeeze(&g, 1, 1.2, 0.0).unwrap();
        let w2 = single_mode_squeeze(&g, 2, 0.8, 0.0).unwrap();
        let b1 = blocks(&w1, &ops).unwrap();
        let b2 = blocks(&w2, &ops).unwrap();
        let prod = blocks(&w2.then(&w1), &ops).unwrap();
        let comp = b1.compose(&b2).unwrap();
        assert!(max_abs(&(&prod.q - &comp.q)) < 1e-10);
        assert!(max_abs(&(&prod.r - &comp.r)) < 1e-10);
    }

    #[test]
    fn non_symplectic_input_is_rejected() {
        let g = grid();
        let ops = oneparticle::build(&g, 2).unwrap();
        let mut w = single_mode_squeeze(&g, 1, 1.2, 0.0).unwrap();
        w.mat[(0, 0)] += 0.5; // break the structure
        assert!(matches!(
            blocks(&w, &ops),
            Err(Error::StructureViolation(_))
        ));
    }

    #[test]
    fn random_bogoliubov_satisfies_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let b = random_bogoliubov(5, 0.2, &mut rng).unwrap();
        assert!(b.identity_defect() < 1e-12);
        assert!(b.symmetry_defect_k() < 1e-12);
        assert!(b.op_norm_k <= 0.2 + 1e-9);
        assert!(b.singular_values_q().min() >= 1.0 - 1e-12);
    }

    #[test]
    fn shale_sweep_flat_passes_with_zero_norm() {
        let g = grid();
        let w = single_mode_squeeze(&g, 0, 1.0, 0.0).unwrap(); // identity
        let rep = shale_sweep(&w, &g, &[2, 3, 5]).unwrap();
        assert!(rep.passes);
        assert!(rep.hs_norms.iter().all(|(_, n)| *n < 1e-12));
    }

    #[test]
    fn shale_sweep_smooth_bump_decays() {
        let g = GridSpec::new(64, 8.0 * PI, -2.3, 2.3, 0.05, 1.0).unwrap();
        let flat = MetricField::flat(&g);
        let spec = PerturbationSpec::new(
            PerturbationKind::ConformalBump,
            (0.0, 0.0),
            (2.0, 3.0),
            0.1,
        )
        .unwrap();
        let pert = build_metric(&g, &[spec]).unwrap();
        let cfg = EvolutionConfig::for_accuracy(&g, 4.4, 1e-9);
        let w = crate::wavesolver::scattering_map(&pert, &flat, -2.15, 2.15, &cfg).unwrap();
        let rep = shale_sweep(&w, &g, &[4, 8, 15]).unwrap();
        // monotone nondecreasing HS norm in the cutoff
        for win in rep.hs_norms.windows(2) {
            assert!(win[1].1 >= win[0].1 - 1e-12);
        }
        assert!(
            rep.tail_decay_exponent <= -4.0,
            "decay exponent {}",
            rep.tail_decay_exponent
        );
        assert!(rep.passes, "tail fraction {}", rep.tail_fraction);
    }
}
