//! Occupation-number basis of the truncated bosonic Fock space.
//!
//! States are tuples `(n_1, ..., n_M)` with `sum n_i <= n_max`, ordered by
//! total particle number and lexicographically within each sector. The
//! dimension is the number of weak compositions with sum at most `n_max`,
//! i.e. `C(M + n_max, M)`.

use crate::error::{Error, Result};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug)]
pub struct FockBasis {
    pub modes: usize,
    pub n_max: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// start offset of each total-occupation sector; sector n occupies
    /// `sector_start[n] .. sector_start[n + 1]`
    sector_start: Vec<usize>,
}

fn enumerate_sector(modes: usize, total: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(prefix: &mut Vec<u8>, slot: usize, modes: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if slot == modes - 1 {
            prefix.push(left as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=left {
            prefix.push(take as u8);
            rec(prefix, slot + 1, modes, left - take, out);
            prefix.pop();
        }
    }
    let mut prefix = Vec::with_capacity(modes);
    rec(&mut prefix, 0, modes, total, out);
}

impl FockBasis {
    pub fn new(modes: usize, n_max: usize) -> Result<Arc<Self>> {
        if modes == 0 {
            return Err(Error::Config("need at least one mode".into()));
        }
        if n_max > 64 {
            return Err(Error::Config("n_max too large for u8 occupations".into()));
        }
        let mut states = Vec::new();
        let mut sector_start = Vec::with_capacity(n_max + 2);
        for n in 0..=n_max {
            sector_start.push(states.len());
            enumerate_sector(modes, n, &mut states);
        }
        sector_start.push(states.len());
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Arc::new(Self {
            modes,
            n_max,
            states,
            index,
            sector_start,
        }))
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn total_occupation(&self, i: usize) -> usize {
        self.states[i].iter().map(|&n| n as usize).sum()
    }

    pub fn sector_range(&self, n: usize) -> std::ops::Range<usize> {
        self.sector_start[n]..self.sector_start[n + 1]
    }

    pub fn sector_dim(&self, n: usize) -> usize {
        self.sector_start[n + 1] - self.sector_start[n]
    }

    /// Dimension of the subspace with total occupation <= n.
    pub fn interior_dim(&self, n: usize) -> usize {
        self.sector_start[(n + 1).min(self.n_max + 1)]
    }
}

/// Coefficient table over a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct FockVector {
    pub coeffs: DVector<C64>,
    pub basis: Arc<FockBasis>,
}

impl FockVector {
    pub fn zero(basis: &Arc<FockBasis>) -> Self {
        Self {
            coeffs: DVector::from_element(basis.dim(), C64::new(0.0, 0.0)),
            basis: basis.clone(),
        }
    }

    pub fn vacuum(basis: &Arc<FockBasis>) -> Self {
        let mut v = Self::zero(basis);
        v.coeffs[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn basis_state(basis: &Arc<FockBasis>, occ: &[u8]) -> Result<Self> {
        let i = basis
            .index_of(occ)
            .ok_or_else(|| Error::Domain(format!("occupation {occ:?} not in basis")))?;
        let mut v = Self::zero(basis);
        v.coeffs[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&mut self, c: C64) {
        for v in self.coeffs.iter_mut() {
            *v *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: C64) {
        for (v, o) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *v += c * o;
        }
    }

    /// Norm of the components whose total occupation differs from `n0` by a
    /// change outside `allowed`.
    pub fn leakage_outside_changes(&self, n0: usize, allowed: &[i64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.basis.dim() {
            let dn = self.basis.total_occupation(i) as i64 - n0 as i64;
            if !allowed.contains(&dn) {
                acc += self.coeffs[i].norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Norm restricted to total occupation <= n.
    pub fn norm_interior(&self, n: usize) -> f64 {
        let end = self.basis.interior_dim(n);
        self.coeffs
            .rows(0, end)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_occupied_sector(&self) -> usize {
        let mut top = 0;
        for i in 0..self.basis.dim() {
            if self.coeffs[i].norm_sqr() > 0.0 {
                top = top.max(self.basis.total_occupation(i));
            }
        }
        top
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_matches_weak_compositions() {
        // C(M + n_max, M)
        let b = FockBasis::new(7, 8).unwrap();
        assert_eq!(b.dim(), 6435);
        let b2 = FockBasis::new(3, 4).unwrap();
        assert_eq!(b2.dim(), 35);
    }

    #[test]
    fn ordering_is_sector_major_and_stable() {
        let b = FockBasis::new(3, 2).unwrap();
        assert_eq!(b.state(0), &[0, 0, 0]);
        assert_eq!(b.sector_range(1), 1..4);
        assert_eq!(b.state(1), &[0, 0, 1]);
        assert_eq!(b.state(2), &[0, 1, 0]);
        assert_eq!(b.state(3), &[1, 0, 0]);
        // round trip through the index map
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.state(i)), Some(i));
        }
    }

    #[test]
    fn vacuum_is_unit_and_first() {
        let b = FockBasis::new(4, 3).unwrap();
        let v = FockVector::vacuum(&b);
        assert_eq!(v.norm(), 1.0);
        assert_eq!(b.total_occupation(0), 0);
    }
}
