//! Sparse operators on the truncated Fock space: creation/annihilation,
//! pair operators, second quantisation and field operators.
//!
//! Raising transitions that would leave the truncated basis are dropped;
//! every operator records the set of particle-number changes it can make so
//! tests can assert the sparsity structure exactly.

use super::basis::{FockBasis, FockVector};
use crate::error::{Error, Result};
use crate::oneparticle::{self, OneParticleStructure};
use crate::wavesolver::CauchyData;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::collections::BTreeSet;
use std::sync::Arc;

/// Column-sparse complex operator over a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub basis: Arc<FockBasis>,
    /// cols[c] = list of (row, value)
    cols: Vec<Vec<(u32, C64)>>,
    pub raises_by: BTreeSet<i64>,
    pub number_conserving: bool,
}

impl FockOperator {
    fn empty(basis: &Arc<FockBasis>) -> Self {
        Self {
            basis: basis.clone(),
            cols: vec![Vec::new(); basis.dim()],
            raises_by: BTreeSet::new(),
            number_conserving: true,
        }
    }

    fn push(&mut self, row: usize, col: usize, val: C64) {
        if val.norm_sqr() == 0.0 {
            return;
        }
        self.cols[col].push((row as u32, val));
        let dn = self.basis.total_occupation(row) as i64 - self.basis.total_occupation(col) as i64;
        self.raises_by.insert(dn);
        if dn != 0 {
            self.number_conserving = false;
        }
    }

    pub fn apply(&self, v: &FockVector) -> FockVector {
        let mut out = FockVector::zero(&self.basis);
        for c in 0..self.basis.dim() {
            let x = v.coeffs[c];
            if x.norm_sqr() == 0.0 {
                continue;
            }
            for &(r, a) in &self.cols[c] {
                out.coeffs[r as usize] += a * x;
            }
        }
        out
    }

    pub fn adjoint_apply(&self, v: &FockVector) -> FockVector {
        let mut out = FockVector::zero(&self.basis);
        for c in 0..self.basis.dim() {
            let mut acc = C64::new(0.0, 0.0);
            for &(r, a) in &self.cols[c] {
                acc += a.conj() * v.coeffs[r as usize];
            }
            out.coeffs[c] = acc;
        }
        out
    }

    /// Materialise the adjoint as an operator.
    pub fn dagger(&self) -> Self {
        let mut out = Self::empty(&self.basis);
        for c in 0..self.basis.dim() {
            for &(r, a) in &self.cols[c] {
                out.push(c, r as usize, a.conj());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for c in 0..self.basis.dim() {
            for &(r, a) in &other.cols[c] {
                out.push(r as usize, c, a);
            }
        }
        out
    }

    /// Dense matrix (small bases only).
    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.basis.dim();
        let mut m = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
        for c in 0..d {
            for &(r, a) in &self.cols[c] {
                m[(r as usize, c)] += a;
            }
        }
        m
    }

    /// Verify that every stored transition is consistent with `raises_by`.
    pub fn check_raises_by(&self) -> bool {
        for c in 0..self.basis.dim() {
            for &(r, _) in &self.cols[c] {
                let dn = self.basis.total_occupation(r as usize) as i64
                    - self.basis.total_occupation(c) as i64;
                if !self.raises_by.contains(&dn) {
                    return false;
                }
            }
        }
        true
    }
}

/// Creation operator `a*(v) = sum_i v_i a*_i` (boundary rows at `n_max`
/// drop their raised components).
pub fn create(v: &DVector<C64>, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    if v.len() != basis.modes {
        return Err(Error::GridMismatch("mode vector length".into()));
    }
    let mut op = FockOperator::empty(basis);
    let mut occ = Vec::new();
    for c in 0..basis.dim() {
        if basis.total_occupation(c) >= basis.n_max {
            continue;
        }
        for i in 0..basis.modes {
            if v[i].norm_sqr() == 0.0 {
                continue;
            }
            occ.clear();
            occ.extend_from_slice(basis.state(c));
            occ[i] += 1;
            let r = basis.index_of(&occ).expect("raised state in basis");
            op.push(r, c, v[i] * ((occ[i] as f64).sqrt()));
        }
    }
    op.raises_by.insert(1);
    op.number_conserving = false;
    Ok(op)
}

/// Annihilation operator `a(v) = sum_i conj(v_i) a_i = (a*(v))^dagger`.
pub fn annihilate(v: &DVector<C64>, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    Ok(create(v, basis)?.dagger())
}

/// Pair creation `a*(A) = sum_ij A_ij a*_i a*_j` for symmetric A.
pub fn pair_create(a_mat: &DMatrix<C64>, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    let m = basis.modes;
    if a_mat.nrows() != m || a_mat.ncols() != m {
        return Err(Error::GridMismatch("pair matrix shape".into()));
    }
    let asym = (a_mat - a_mat.transpose())
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if asym > 1e-12 * (1.0 + a_mat.iter().map(|c| c.norm()).fold(0.0, f64::max)) {
        return Err(Error::StructureViolation(format!(
            "pair matrix must be symmetric, defect {asym:.3e}"
        )));
    }
    let mut op = FockOperator::empty(basis);
    let mut occ = Vec::new();
    for c in 0..basis.dim() {
        if basis.total_occupation(c) + 2 > basis.n_max {
            continue;
        }
        let st = basis.state(c);
        for i in 0..m {
            for j in i..m {
                let coeff = if i == j {
                    a_mat[(i, i)]
                } else {
                    a_mat[(i, j)] * 2.0
                };
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                occ.clear();
                occ.extend_from_slice(st);
                occ[i] += 1;
                occ[j] += 1;
                let amp = if i == j {
                    ((st[i] as f64 + 1.0) * (st[i] as f64 + 2.0)).sqrt()
                } else {
                    ((st[i] as f64 + 1.0) * (st[j] as f64 + 1.0)).sqrt()
                };
                let r = basis.index_of(&occ).expect("raised pair state");
                op.push(r, c, coeff * amp);
            }
        }
    }
    op.raises_by.insert(2);
    op.number_conserving = false;
    Ok(op)
}

/// Pair annihilation `a(A) = (a*(A))^dagger`.
pub fn pair_annihilate(a_mat: &DMatrix<C64>, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    Ok(pair_create(a_mat, basis)?.dagger())
}

/// Number operator.
pub fn number_op(basis: &Arc<FockBasis>) -> FockOperator {
    let mut op = FockOperator::empty(basis);
    for c in 0..basis.dim() {
        let n = basis.total_occupation(c) as f64;
        if n > 0.0 {
            op.push(c, c, C64::new(n, 0.0));
        }
    }
    op.raises_by.insert(0);
    op
}

/// Second quantisation `Gamma(Q) = 1 (+) Q (+) Q tensor Q (+) ...`,
/// materialised as a sparse operator. Intended for small bases; the
/// implementer applies Gamma blockwise without materialising it.
pub fn gamma(q: &DMatrix<C64>, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    let blocks = GammaBlocks::new(q.clone(), basis)?;
    let mut op = FockOperator::empty(basis);
    for n in 0..=basis.n_max {
        let range = basis.sector_range(n);
        let block = blocks.block(n);
        for (cj, c) in range.clone().enumerate() {
            for (ri, r) in range.clone().enumerate() {
                let v = block[(ri, cj)];
                if v.norm_sqr() > 0.0 {
                    op.push(r, c, v);
                }
            }
        }
    }
    op.raises_by.insert(0);
    Ok(op)
}

/// Per-sector dense blocks of `Gamma(Q)`, built on demand by the recursion
/// `Gamma(Q) a*(e_j) = a*(Q e_j) Gamma(Q)` starting from the vacuum.
pub struct GammaBlocks {
    pub q: DMatrix<C64>,
    basis: Arc<FockBasis>,
    blocks: std::sync::Mutex<Vec<Option<Arc<DMatrix<C64>>>>>,
}

impl GammaBlocks {
    pub fn new(q: DMatrix<C64>, basis: &Arc<FockBasis>) -> Result<Self> {
        if q.nrows() != basis.modes || q.ncols() != basis.modes {
            return Err(Error::GridMismatch("gamma matrix shape".into()));
        }
        Ok(Self {
            q,
            basis: basis.clone(),
            blocks: std::sync::Mutex::new(vec![None; basis.n_max + 1]),
        })
    }

    pub fn block(&self, n: usize) -> Arc<DMatrix<C64>> {
        let mut guard = self.blocks.lock().unwrap();
        if guard[n].is_none() {
            // build blocks 0..=n in order
            for s in 0..=n {
                if guard[s].is_some() {
                    continue;
                }
                let b = self.build_sector(s, &guard);
                guard[s] = Some(Arc::new(b));
            }
        }
        guard[n].as_ref().unwrap().clone()
    }

    fn build_sector(&self, n: usize, built: &[Option<Arc<DMatrix<C64>>>]) -> DMatrix<C64> {
        let basis = &self.basis;
        let dim = basis.sector_dim(n);
        let mut block = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        if n == 0 {
            block[(0, 0)] = C64::new(1.0, 0.0);
            return block;
        }
        let prev = built[n - 1].as_ref().unwrap();
        let range = basis.sector_range(n);
        let prev_range = basis.sector_range(n - 1);
        let mut occ = Vec::new();
        for (cj, c) in range.clone().enumerate() {
            // pick the first occupied mode j: |c> = a*_j |c - e_j> / sqrt(c_j)
            let st = basis.state(c);
            let j = st.iter().position(|&x| x > 0).expect("occupied mode");
            occ.clear();
            occ.extend_from_slice(st);
            occ[j] -= 1;
            let parent = basis.index_of(&occ).unwrap() - prev_range.start;
            let scale = 1.0 / (st[j] as f64).sqrt();
            // column = a*(Q e_j) applied to Gamma|parent>
            for (pi, p) in prev_range.clone().enumerate() {
                let w = prev[(pi, parent)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                let pst = basis.state(p);
                for i in 0..basis.modes {
                    let qv = self.q[(i, j)];
                    if qv.norm_sqr() == 0.0 {
                        continue;
                    }
                    occ.clear();
                    occ.extend_from_slice(pst);
                    occ[i] += 1;
                    let r = basis.index_of(&occ).unwrap() - range.start;
                    let amp = ((pst[i] as f64) + 1.0).sqrt();
                    block[(r, cj)] += w * qv * amp * scale;
                }
            }
        }
        block
    }

    /// Apply blockwise to a vector (sectors above the vector's support are
    /// never built).
    pub fn apply(&self, v: &FockVector) -> FockVector {
        let basis = &self.basis;
        let top = v.max_occupied_sector();
        let mut out = FockVector::zero(basis);
        for n in 0..=top {
            let range = basis.sector_range(n);
            let block = self.block(n);
            let dim = basis.sector_dim(n);
            let mut x = DVector::from_element(dim, C64::new(0.0, 0.0));
            for (i, g) in range.clone().enumerate() {
                x[i] = v.coeffs[g];
            }
            let y = &*block * x;
            for (i, g) in range.clone().enumerate() {
                out.coeffs[g] = y[i];
            }
        }
        out
    }
}

/// Field operator `phi(v) = a(alpha) + a*(alpha)` for real Cauchy data v,
/// with `alpha` the annihilation amplitudes of v on the kept modes.
pub fn field_op(
    data: &CauchyData,
    ops: &OneParticleStructure,
    basis: &Arc<FockBasis>,
) -> Result<FockOperator> {
    if basis.modes != ops.modes() {
        return Err(Error::GridMismatch(
            "basis mode count vs one-particle structure".into(),
        ));
    }
    let amps = oneparticle::to_modes(data, ops)?;
    let cre = create(&amps.a, basis)?;
    let ann = annihilate(&amps.a, basis)?;
    Ok(cre.add(&ann))
}

/// Field operator directly from mode amplitudes.
pub fn field_op_from_amplitudes(
    alpha: &DVector<C64>,
    basis: &Arc<FockBasis>,
) -> Result<FockOperator> {
    let cre = create(alpha, basis)?;
    let ann = annihilate(alpha, basis)?;
    Ok(cre.add(&ann))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MetricField;
    use crate::grid::GridSpec;
    use crate::wavesolver::symplectic_form;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit(m: usize, i: usize) -> DVector<C64> {
        let mut v = DVector::from_element(m, C64::new(0.0, 0.0));
        v[i] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn annihilation_kills_vacuum_and_sqrt_rule() {
        let b = FockBasis::new(3, 4).unwrap();
        let a1 = annihilate(&unit(3, 0), &b).unwrap();
        let vac = FockVector::vacuum(&b);
        assert_eq!(a1.apply(&vac).norm(), 0.0);
        // a*(e_1)|1,0,0> = sqrt(2)|2,0,0>
        let c1 = create(&unit(3, 0), &b).unwrap();
        let one = FockVector::basis_state(&b, &[1, 0, 0]).unwrap();
        let two = c1.apply(&one);
        let idx = b.index_of(&[2, 0, 0]).unwrap();
        assert_abs_diff_eq!(two.coeffs[idx].re, 2.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn ccr_on_interior_sectors() {
        let b = FockBasis::new(3, 5).unwrap();
        let c = create(&unit(3, 1), &b).unwrap();
        let a = annihilate(&unit(3, 1), &b).unwrap();
        // [a, a*] = 1 on sectors n < n_max
        for occ in [[0u8, 0, 0], [1, 2, 0], [0, 3, 1]] {
            let v = FockVector::basis_state(&b, &occ).unwrap();
            let mut comm = a.apply(&c.apply(&v));
            comm.add_scaled(&c.apply(&a.apply(&v)), C64::new(-1.0, 0.0));
            comm.add_scaled(&v, C64::new(-1.0, 0.0));
            assert!(comm.norm() < 1e-14, "occ {occ:?}");
        }
    }

    #[test]
    fn adjoint_pairing_is_exact() {
        let b = FockBasis::new(3, 4).unwrap();
        let mut v = DVector::from_element(3, C64::new(0.0, 0.0));
        v[0] = C64::new(0.3, 0.4);
        v[2] = C64::new(-0.2, 0.9);
        let c = create(&v, &b).unwrap();
        let a = annihilate(&v, &b).unwrap();
        let d = c.dagger().to_dense() - a.to_dense();
        assert!(d.iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-15);
    }

    #[test]
    fn pair_create_matrix_elements_and_norm_bound() {
        let b = FockBasis::new(3, 6).unwrap();
        // rank one K = outer(v, v): a*(K) = a*(v)^2
        let mut v = DVector::from_element(3, C64::new(0.0, 0.0));
        v[0] = C64::new(0.6, 0.1);
        v[1] = C64::new(-0.2, 0.3);
        let k = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let pk = pair_create(&k, &b).unwrap();
        let cv = create(&v, &b).unwrap();
        let direct = pk.to_dense();
        let squared = cv.to_dense() * cv.to_dense();
        assert!(
            (&direct - &squared)
                .iter()
                .map(|x| x.norm())
                .fold(0.0, f64::max)
                < 1e-13
        );
        assert_eq!(pk.raises_by.iter().copied().collect::<Vec<_>>(), vec![2]);
        assert!(pk.check_raises_by());
        // zero matrix gives the zero operator
        let z = pair_create(&DMatrix::from_element(3, 3, C64::new(0.0, 0.0)), &b).unwrap();
        assert_eq!(z.to_dense().iter().map(|x| x.norm()).sum::<f64>(), 0.0);
        // norm bound ||a*(K) psi|| <= ||K||_HS ||sqrt((N+2)(N+1)) psi|| on basis states
        let khs = k.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for occ in [[0u8, 0, 0], [2, 1, 0], [1, 1, 2]] {
            let psi = FockVector::basis_state(&b, &occ).unwrap();
            let n = occ.iter().map(|&x| x as f64).sum::<f64>();
            let lhs = pk.apply(&psi).norm();
            let rhs = khs * ((n + 2.0) * (n + 1.0)).sqrt();
            assert!(lhs <= rhs * (1.0 + 1e-12), "occ {occ:?}: {lhs} vs {rhs}");
        }
        // non-symmetric matrices are rejected
        let mut bad = k.clone();
        bad[(0, 1)] += C64::new(0.5, 0.0);
        assert!(pair_create(&bad, &b).is_err());
    }

    #[test]
    fn pair_annihilate_norm_bound() {
        let b = FockBasis::new(3, 6).unwrap();
        let mut k = DMatrix::from_element(3, 3, C64::new(0.0, 0.0));
        k[(0, 1)] = C64::new(0.4, 0.2);
        k[(1, 0)] = C64::new(0.4, 0.2);
        k[(2, 2)] = C64::new(-0.3, 0.0);
        let pa = pair_annihilate(&k, &b).unwrap();
        let khs = k.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for occ in [[3u8, 1, 2], [0, 2, 4]] {
            let psi = FockVector::basis_state(&b, &occ).unwrap();
            let n = occ.iter().map(|&x| x as f64).sum::<f64>();
            assert!(pa.apply(&psi).norm() <= khs * n * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gamma_identities() {
        let b = FockBasis::new(3, 4).unwrap();
        let id3 = DMatrix::<C64>::identity(3, 3);
        let g_id = gamma(&id3.clone(), &b).unwrap().to_dense();
        let idn = DMatrix::<C64>::identity(b.dim(), b.dim());
        assert!((g_id - idn).iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-14);
        // Gamma(cI) multiplies sector n by c^n
        let c = C64::new(0.7, 0.3);
        let g_c = gamma(&(&id3 * c), &b).unwrap();
        let v = FockVector::basis_state(&b, &[1, 2, 0]).unwrap();
        let gv = g_c.apply(&v);
        let idx = b.index_of(&[1, 2, 0]).unwrap();
        assert!((gv.coeffs[idx] - c.powu(3)).norm() < 1e-14);
        // Gamma(Q) a*(v) = a*(Qv) Gamma(Q) for invertible Q
        let q = DMatrix::from_fn(3, 3, |i, j| {
            C64::new(0.4 * ((i + 2 * j) as f64).cos(), 0.2 * ((i * j) as f64 + 0.5).sin())
        }) + id3.clone();
        let g = gamma(&q, &b).unwrap().to_dense();
        let mut v1 = DVector::from_element(3, C64::new(0.0, 0.0));
        v1[0] = C64::new(0.2, -0.1);
        v1[1] = C64::new(1.0, 0.4);
        let av = create(&v1, &b).unwrap().to_dense();
        let aqv = create(&(&q * &v1), &b).unwrap().to_dense();
        let lhs = &g * av;
        let rhs = aqv * &g;
        // compare on columns that stay below the cutoff
        let interior = b.interior_dim(b.n_max - 1);
        let d = (lhs.columns(0, interior) - rhs.columns(0, interior))
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max);
        assert!(d < 1e-13, "intertwining defect {d}");
    }

    #[test]
    fn field_op_ccr_matches_symplectic_form() {
        let g = GridSpec::new(32, 4.0 * PI, -0.5, 0.5, 0.05, 1.0).unwrap();
        let ops = oneparticle::build(&g, 2).unwrap();
        let basis = FockBasis::new(ops.modes(), 4).unwrap();
        let flat = MetricField::flat(&g);
        let mk = |a: f64, b: f64, c: f64| {
            CauchyData::new(
                DVector::from_fn(g.n_x, |j, _| {
                    a * (g.k_eff(1) * g.x(j)).cos() + b * (g.k_eff(2) * g.x(j)).sin()
                }),
                DVector::from_fn(g.n_x, |j, _| c * (g.k_eff(1) * g.x(j)).sin()),
                0.0,
            )
            .unwrap()
        };
        let v = mk(0.7, -0.3, 0.2);
        let w = mk(-0.1, 0.5, 0.9);
        let pv = field_op(&v, &ops, &basis).unwrap();
        let pw = field_op(&w, &ops, &basis).unwrap();
        let sigma = symplectic_form(&v, &w, &flat).unwrap();
        // [phi(v), phi(w)] = -i sigma(v, w) on interior sectors
        for occ in [[0u8; 5], [1, 0, 0, 0, 1]] {
            let psi = FockVector::basis_state(&basis, &occ).unwrap();
            let mut comm = pv.apply(&pw.apply(&psi));
            comm.add_scaled(&pw.apply(&pv.apply(&psi)), C64::new(-1.0, 0.0));
            comm.add_scaled(&psi, C64::new(0.0, sigma));
            assert!(comm.norm() < 1e-12, "occ {occ:?}, comm {}", comm.norm());
        }
        // [phi(v), phi(v)] = 0
        let mut c0 = pv.apply(&pv.apply(&FockVector::vacuum(&basis)));
        c0.add_scaled(&pv.apply(&pv.apply(&FockVector::vacuum(&basis))), C64::new(-1.0, 0.0));
        assert_eq!(c0.norm(), 0.0);
        // vacuum two-point function equals the mode-space inner product
        let av = oneparticle::to_modes(&v, &ops).unwrap();
        let aw = oneparticle::to_modes(&w, &ops).unwrap();
        let vac = FockVector::vacuum(&basis);
        let two_pt = vac.inner(&pv.apply(&pw.apply(&vac)));
        let mode_sum: C64 = av
            .a
            .iter()
            .zip(aw.a.iter())
            .map(|(x, y)| x.conj() * y)
            .sum();
        assert!((two_pt - mode_sum).norm() < 1e-12);
    }

    #[test]
    fn number_operator_counts() {
        let b = FockBasis::new(3, 5).unwrap();
        let n = number_op(&b);
        let v = FockVector::basis_state(&b, &[2, 0, 3]).unwrap();
        let nv = n.apply(&v);
        let idx = b.index_of(&[2, 0, 3]).unwrap();
        assert_eq!(nv.coeffs[idx].re, 5.0);
        assert!(n.number_conserving);
    }
}
