//! Parallel transport over metric space and the stress-energy axioms.
//!
//! Transport along a path of metrics is built from endpoint scattering maps
//! against the path's base metric, `S = U(W(g_end, g0)) U(W(g_start, g0))*`,
//! implemented on the truncated Fock space through the mode-space (Galerkin)
//! evolution. Endpoint-only dependence modulo a phase is a measured
//! property; loops, causal factorisation, diffeomorphism covariance and the
//! finite-difference stress-energy action are all exercised here.

use crate::bogoliubov::{self, BogoliubovData};
use crate::error::{Error, Result};
use crate::fock::{natural_implementer, FockBasis, FockVector, NaturalImplementer};
use crate::geometry::{
    build_metric, validate, MetricField, MetricPath, PerturbationSpec, TimeBumpDiffeo,
};
use crate::grid::GridSpec;
use crate::oneparticle::{self, OneParticleStructure};
use crate::wavesolver::{
    self, causally_separated, mode_scattering_map, scattering_map, CauchyData, EvolutionConfig,
    SymplecticMap,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::sync::Arc;

/// How transports are discretised: mode cutoff and particle cutoff for the
/// Fock side, scattering window, and the time integrator.
#[derive(Debug, Clone)]
pub struct TransportConfig {
    pub k_fock: i64,
    pub n_max: usize,
    pub t_minus: f64,
    pub t_plus: f64,
    pub evolution: EvolutionConfig,
}

impl TransportConfig {
    pub fn one_particle(&self, grid: &GridSpec) -> Result<OneParticleStructure> {
        oneparticle::build(grid, self.k_fock)
    }

    pub fn fock_basis(&self, grid: &GridSpec) -> Result<Arc<FockBasis>> {
        let ops = self.one_particle(grid)?;
        FockBasis::new(ops.modes(), self.n_max)
    }
}

/// Normalised distance between two operators given by their columns,
/// minimised over a global phase; the optimum is the argument of the trace
/// pairing `sum conj(A) .* B`.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseAlignedDistance {
    pub value: f64,
    pub optimal_phase: C64,
}

pub fn phase_aligned_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> PhaseAlignedDistance {
    let mut pairing = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        pairing += x.conj() * y;
    }
    let phase = if pairing.norm() > 0.0 {
        pairing / pairing.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - phase * y).norm_sqr();
    }
    PhaseAlignedDistance {
        value: (acc / a.ncols() as f64).sqrt(),
        optimal_phase: phase,
    }
}

/// One transport segment: implementers of the endpoint scattering maps
/// against the path base.
pub struct TransportSegment {
    pub u_start: NaturalImplementer,
    pub u_end: NaturalImplementer,
    pub blocks_end: BogoliubovData,
}

/// Unitary transport along a metric path, as a composition of per-segment
/// endpoint implementers.
pub struct TransportResult {
    pub segments: Vec<TransportSegment>,
    pub basis: Arc<FockBasis>,
    pub endpoint_ids: (String, String),
    /// cocycle scalars relating each segment composition
    /// `U(W_end) U(W_start)*` to the direct implementer of
    /// `W_end W_start^{-1}`
    pub phase_log: Vec<C64>,
}

impl TransportResult {
    pub fn apply(&self, v: &FockVector) -> FockVector {
        let mut w = v.clone();
        for seg in &self.segments {
            w = seg.u_start.adjoint_apply(&w);
            w = seg.u_end.apply(&w);
        }
        w
    }

    pub fn adjoint_apply(&self, v: &FockVector) -> FockVector {
        let mut w = v.clone();
        for seg in self.segments.iter().rev() {
            w = seg.u_end.adjoint_apply(&w);
            w = seg.u_start.apply(&w);
        }
        w
    }

    /// Columns on the basis states with total occupation <= n.
    pub fn columns_interior(&self, n: usize) -> DMatrix<C64> {
        let cols = self.basis.interior_dim(n);
        let mut m = DMatrix::from_element(self.basis.dim(), cols, C64::new(0.0, 0.0));
        for c in 0..cols {
            let mut e = FockVector::zero(&self.basis);
            e.coeffs[c] = C64::new(1.0, 0.0);
            let col = self.apply(&e);
            m.set_column(c, &col.coeffs);
        }
        m
    }
}

fn identity_columns(basis: &Arc<FockBasis>, n: usize) -> DMatrix<C64> {
    let cols = basis.interior_dim(n);
    let mut m = DMatrix::from_element(basis.dim(), cols, C64::new(0.0, 0.0));
    for c in 0..cols {
        m[(c, c)] = C64::new(1.0, 0.0);
    }
    m
}

/// Implementer of the mode scattering map of `g` against `g_ref`.
fn endpoint_implementer(
    g: &MetricField,
    g_ref: &MetricField,
    cfg: &TransportConfig,
) -> Result<(NaturalImplementer, BogoliubovData)> {
    let grid = &g.grid;
    let w = mode_scattering_map(g, g_ref, cfg.k_fock, cfg.t_minus, cfg.t_plus, &cfg.evolution)?;
    let ops = cfg.one_particle(grid)?;
    let b = bogoliubov::blocks(&w, &ops)?;
    let basis = cfg.fock_basis(grid)?;
    let u = natural_implementer(&b, &basis)?;
    Ok((u, b))
}

/// Parallel transport along a piecewise path of metrics. Every sampled
/// metric on the path must be admissible; the transport itself uses only
/// the segment endpoints.
pub fn transport(path: &MetricPath, cfg: &TransportConfig) -> Result<TransportResult> {
    path.validate_samples()?;
    let base = path.start()?;
    let basis = cfg.fock_basis(&path.grid)?;
    let mut segments = Vec::new();
    let mut phase_log = Vec::new();
    for i in 0..path.segments.len() {
        let g_start = if i == 0 {
            base.clone()
        } else {
            path.endpoint(i - 1)?
        };
        let g_end = path.endpoint(i)?;
        let (u_start, b_start) = endpoint_implementer(&g_start, &base, cfg)?;
        let (u_end, b_end) = endpoint_implementer(&g_end, &base, cfg)?;
        let sigma = crate::fock::cocycle(&b_end, &b_start.inverse()?)?;
        phase_log.push(sigma);
        segments.push(TransportSegment {
            u_start,
            u_end,
            blocks_end: b_end,
        });
    }
    Ok(TransportResult {
        segments,
        basis,
        endpoint_ids: (
            path.start()?.id.clone(),
            path.endpoint(path.segments.len() - 1)?.id.clone(),
        ),
        phase_log,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    pub scalar: C64,
    pub scalar_modulus: f64,
    pub off_scalar_defect: f64,
    pub interior_n: usize,
}

/// Fit `S(loop) ~ c 1` on the interior sectors and report the residual.
pub fn holonomy_centrality(
    path: &MetricPath,
    cfg: &TransportConfig,
    interior_n: usize,
) -> Result<HolonomyReport> {
    if !path.is_loop()? {
        return Err(Error::Domain("holonomy requires a closed path".into()));
    }
    let t = transport(path, cfg)?;
    let cols = t.columns_interior(interior_n);
    let n_cols = cols.ncols();
    let mut trace = C64::new(0.0, 0.0);
    for c in 0..n_cols {
        trace += cols[(c, c)];
    }
    let scalar = trace / n_cols as f64;
    let mut acc = 0.0;
    for c in 0..n_cols {
        for r in 0..cols.nrows() {
            let expect = if r == c { scalar } else { C64::new(0.0, 0.0) };
            acc += (cols[(r, c)] - expect).norm_sqr();
        }
    }
    Ok(HolonomyReport {
        scalar,
        scalar_modulus: scalar.norm(),
        off_scalar_defect: (acc / n_cols as f64).sqrt(),
        interior_n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CausalityReport {
    /// max-norm defect of `W(h1+h2+h3) - W(h2+h3) W(h2)^{-1} W(h1+h2)`
    /// for the grid-level scattering maps
    pub map_defect: f64,
    /// phase-aligned distance between `S(g, g+h1+h2+h3)` and
    /// `S(g, g+h2+h3) S(g+h2, g+h1+h2)` on interior Fock columns
    pub fock_distance: f64,
    pub fock_phase: C64,
    pub causal_margin_ok: bool,
}

/// Causal factorisation check. `h1` must not intersect the causal past of
/// nothing -- precisely, `supp h3` must avoid `J^-(supp h1)`, certified on
/// the flat exterior with a safety margin before anything is computed.
pub fn causality_check(
    grid: &GridSpec,
    h1: &[PerturbationSpec],
    h2: &[PerturbationSpec],
    h3: &[PerturbationSpec],
    cfg: &TransportConfig,
    interior_n: usize,
) -> Result<CausalityReport> {
    // geometric precondition on the flat exterior
    let boxes = |specs: &[PerturbationSpec]| -> Result<Vec<_>> {
        specs
            .iter()
            .map(|s| {
                build_metric(grid, std::slice::from_ref(s)).map(|m| m.support_box.unwrap())
            })
            .collect()
    };
    let margin = 2.0 * grid.dx();
    for late in boxes(h1)? {
        for early in boxes(h3)? {
            if !causally_separated(&late, &early, grid.circumference, margin) {
                return Err(Error::Domain(format!(
                    "supp(h3) intersects J^-(supp h1) within margin {margin:.3}; \
                     scenario rejected"
                )));
            }
        }
    }

    let combine = |lists: &[&[PerturbationSpec]]| -> Vec<PerturbationSpec> {
        lists.iter().flat_map(|l| l.iter().cloned()).collect()
    };
    let g_base = MetricField::flat(grid);
    let m123 = build_metric(grid, &combine(&[h1, h2, h3]))?;
    let m23 = build_metric(grid, &combine(&[h2, h3]))?;
    let m12 = build_metric(grid, &combine(&[h1, h2]))?;
    let m2 = build_metric(grid, &combine(&[h2]))?;
    for m in [&m123, &m23, &m12, &m2] {
        if !validate(m).admissible() {
            return Err(Error::InadmissibleMetric(m.id.clone()));
        }
    }

    // grid-level factorisation
    let w = |m: &MetricField| scattering_map(m, &g_base, cfg.t_minus, cfg.t_plus, &cfg.evolution);
    let w123 = w(&m123)?;
    let w23 = w(&m23)?;
    let w12 = w(&m12)?;
    let w2 = w(&m2)?;
    let w2_inv = w2.inverse()?;
    let rhs = &w23.mat * &w2_inv.mat * &w12.mat;
    let map_defect = (&w123.mat - rhs).abs().max();

    // Fock level: S(g, g+h123) vs S(g, g+h23) S(g+h2, g+h1+h2)
    let (u123, _) = endpoint_implementer(&m123, &g_base, cfg)?;
    let (u23, _) = endpoint_implementer(&m23, &g_base, cfg)?;
    let (u12, _) = endpoint_implementer(&m12, &g_base, cfg)?;
    let (u2, _) = endpoint_implementer(&m2, &g_base, cfg)?;
    let basis = cfg.fock_basis(grid)?;
    let cols = basis.interior_dim(interior_n);
    let mut lhs_cols = DMatrix::from_element(basis.dim(), cols, C64::new(0.0, 0.0));
    let mut rhs_cols = lhs_cols.clone();
    for c in 0..cols {
        let mut e = FockVector::zero(&basis);
        e.coeffs[c] = C64::new(1.0, 0.0);
        lhs_cols.set_column(c, &u123.adjoint_apply(&e).coeffs);
        let r = u12.adjoint_apply(&e);
        let r = u2.apply(&r);
        let r = u23.adjoint_apply(&r);
        rhs_cols.set_column(c, &r.coeffs);
    }
    let d = phase_aligned_distance(&lhs_cols, &rhs_cols);
    Ok(CausalityReport {
        map_defect,
        fock_distance: d.value,
        fock_phase: d.optimal_phase,
        causal_margin_ok: true,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    /// `||W - 1||` max-norm at the grid level
    pub map_defect: f64,
    /// phase-aligned distance of the Fock transport to the identity
    pub fock_distance: f64,
}

/// Covariance under a compactly supported time-bump diffeomorphism: the
/// scattering map of the pulled-back flat metric against the flat metric
/// is the identity up to discretisation.
pub fn covariance_check(
    grid: &GridSpec,
    family: &TimeBumpDiffeo,
    cfg: &TransportConfig,
    interior_n: usize,
) -> Result<CovarianceReport> {
    let flat = MetricField::flat(grid);
    let pulled = crate::geometry::pullback(&flat, &crate::geometry::Diffeo::TimeBump(family.clone()))?;
    if !validate(&pulled).admissible() {
        return Err(Error::InadmissibleMetric("pulled-back flat metric".into()));
    }
    let w = scattering_map(&pulled, &flat, cfg.t_minus, cfg.t_plus, &cfg.evolution)?;
    let id = DMatrix::<f64>::identity(w.mat.nrows(), w.mat.ncols());
    let map_defect = (&w.mat - id).abs().max();

    let (u, _) = endpoint_implementer(&pulled, &flat, cfg)?;
    let basis = cfg.fock_basis(grid)?;
    let cols = basis.interior_dim(interior_n);
    let mut u_cols = DMatrix::from_element(basis.dim(), cols, C64::new(0.0, 0.0));
    for c in 0..cols {
        let mut e = FockVector::zero(&basis);
        e.coeffs[c] = C64::new(1.0, 0.0);
        u_cols.set_column(c, &u.apply(&e).coeffs);
    }
    let d = phase_aligned_distance(&u_cols, &identity_columns(&basis, interior_n));
    Ok(CovarianceReport {
        map_defect,
        fock_distance: d.value,
    })
}

/// Exponentiated locality: by unitarity and the intertwining relation the
/// commutator norm `||[S, phi(u)] psi||` equals `||phi((1 - W^{-1}) u) psi||`
/// exactly, which is evaluated here in closed form for psi the vacuum or a
/// one-particle vector `a*(g) vacuum` (g unit norm).
pub fn field_commutator_norm(
    w: &SymplecticMap,
    ops: &OneParticleStructure,
    u_data: &CauchyData,
    excitation: Option<&DVector<C64>>,
) -> Result<f64> {
    let w_inv = w.inverse()?;
    let pulled = wavesolver::apply_map_to_data(&w_inv, &ops.grid, u_data)?;
    let delta = CauchyData::new(
        &u_data.u - &pulled.u,
        &u_data.nu - &pulled.nu,
        u_data.slice_time,
    )?;
    let alpha = oneparticle::to_modes(&delta, ops)?;
    let alpha_norm_sq: f64 = alpha.a.iter().map(|c| c.norm_sqr()).sum();
    match excitation {
        None => Ok(alpha_norm_sq.sqrt()),
        Some(g) => {
            let overlap: C64 = alpha
                .a
                .iter()
                .zip(g.iter())
                .map(|(x, y)| x.conj() * y)
                .sum();
            let g_norm_sq: f64 = g.iter().map(|c| c.norm_sqr()).sum();
            Ok((alpha_norm_sq * g_norm_sq + 2.0 * overlap.norm_sqr()).sqrt())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StressEnergyReport {
    /// Richardson-extrapolated derivative of `s -> S(g + s h, g) v` at 0,
    /// stored as coefficients (the stress action is i times this).
    pub derivative: Vec<(usize, C64)>,
    pub derivative_norm: f64,
    pub convergence_order: f64,
    pub linearity_defect: Option<f64>,
    pub sector_leakage: f64,
}

fn transport_vector(
    grid: &GridSpec,
    g_specs: &[PerturbationSpec],
    h_specs: &[PerturbationSpec],
    scale: f64,
    v: &FockVector,
    cfg: &TransportConfig,
) -> Result<FockVector> {
    let base = build_metric(grid, g_specs)?;
    let mut all = g_specs.to_vec();
    for h in h_specs {
        all.push(PerturbationSpec {
            amplitude: h.amplitude * scale,
            ..h.clone()
        });
    }
    let pert = build_metric(grid, &all)?;
    if !validate(&pert).admissible() {
        return Err(Error::InadmissibleMetric(format!("scale {scale}")));
    }
    let (u, _) = endpoint_implementer(&pert, &base, cfg)?;
    Ok(u.apply(v))
}

/// Central-difference derivative of the transport with Richardson
/// extrapolation over a step ladder (each step half the previous).
fn stress_derivative(
    grid: &GridSpec,
    g_specs: &[PerturbationSpec],
    h_specs: &[PerturbationSpec],
    v: &FockVector,
    eps: &[f64],
    cfg: &TransportConfig,
) -> Result<(FockVector, f64)> {
    if eps.len() < 2 {
        return Err(Error::Config("need at least two steps in the ladder".into()));
    }
    let mut diffs = Vec::new();
    for &e in eps {
        let plus = transport_vector(grid, g_specs, h_specs, e, v, cfg)?;
        let minus = transport_vector(grid, g_specs, h_specs, -e, v, cfg)?;
        let mut d = plus;
        d.add_scaled(&minus, C64::new(-1.0, 0.0));
        d.scale(C64::new(1.0 / (2.0 * e), 0.0));
        diffs.push(d);
    }
    // observed order from consecutive differences
    let order = if diffs.len() >= 3 {
        let mut d01 = diffs[0].clone();
        d01.add_scaled(&diffs[1], C64::new(-1.0, 0.0));
        let mut d12 = diffs[1].clone();
        d12.add_scaled(&diffs[2], C64::new(-1.0, 0.0));
        if d12.norm() > 0.0 {
            (d01.norm() / d12.norm()).log2()
        } else {
            f64::INFINITY
        }
    } else {
        f64::NAN
    };
    // Richardson: repeatedly cancel the leading even-order error term
    let mut level: Vec<FockVector> = diffs;
    let mut power = 4.0;
    while level.len() > 1 {
        let mut next = Vec::new();
        for i in 0..level.len() - 1 {
            let mut r = level[i + 1].clone();
            r.scale(C64::new(power / (power - 1.0), 0.0));
            r.add_scaled(&level[i], C64::new(-1.0 / (power - 1.0), 0.0));
            next.push(r);
        }
        level = next;
        power *= 4.0;
    }
    Ok((level.pop().unwrap(), order))
}

/// Finite-difference stress-energy action on a Fock vector, with linearity
/// and particle-number-change diagnostics. `h_parts` are summed for the
/// reported derivative; with two or more parts the additivity defect of the
/// parts is reported as `linearity_defect`.
pub fn stress_energy_action(
    grid: &GridSpec,
    g_specs: &[PerturbationSpec],
    h_parts: &[Vec<PerturbationSpec>],
    v: &FockVector,
    eps: &[f64],
    cfg: &TransportConfig,
) -> Result<StressEnergyReport> {
    let all: Vec<PerturbationSpec> = h_parts.iter().flatten().cloned().collect();
    let (total, order) = stress_derivative(grid, g_specs, &all, v, eps, cfg)?;
    let linearity_defect = if h_parts.len() >= 2 {
        let mut sum_parts = FockVector::zero(&v.basis);
        for part in h_parts {
            let (d, _) = stress_derivative(grid, g_specs, part, v, eps, cfg)?;
            sum_parts.add_scaled(&d, C64::new(1.0, 0.0));
        }
        let mut defect = total.clone();
        defect.add_scaled(&sum_parts, C64::new(-1.0, 0.0));
        Some(defect.norm())
    } else {
        None
    };
    let n0 = v.max_occupied_sector();
    let leak = total.leakage_outside_changes(n0, &[-2, 0, 2]);
    let norm = total.norm();
    let mut entries = Vec::new();
    for i in 0..total.basis.dim() {
        if total.coeffs[i].norm_sqr() > 0.0 {
            entries.push((i, total.coeffs[i]));
        }
    }
    Ok(StressEnergyReport {
        derivative: entries,
        derivative_norm: norm,
        convergence_order: order,
        linearity_defect,
        sector_leakage: if norm > 0.0 { leak / norm } else { 0.0 },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessRow {
    pub s: f64,
    pub norm: f64,
    pub diff1: f64,
    pub diff2: f64,
    pub richardson_order: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessReport {
    pub rows: Vec<SmoothnessRow>,
    /// observed convergence order of the first-derivative estimate
    pub derivative_order: f64,
    /// |d/ds <vac, U_s vac>| vs d/ds det(1 - K_s* K_s)^{1/4}
    pub vacuum_overlap_dual_defect: f64,
}

/// Sample `s -> U_s v` over a uniform grid on [0, s_max] for the linear
/// family `g + s h` and probe first/second differences.
pub fn smoothness_sweep(
    grid: &GridSpec,
    g_specs: &[PerturbationSpec],
    h_specs: &[PerturbationSpec],
    v: &FockVector,
    s_max: f64,
    n_samples: usize,
    cfg: &TransportConfig,
) -> Result<SmoothnessReport> {
    if n_samples < 5 {
        return Err(Error::Config("need at least 5 sweep samples".into()));
    }
    let base = build_metric(grid, g_specs)?;
    let ds = s_max / (n_samples - 1) as f64;
    let mut vectors = Vec::new();
    let mut overlaps = Vec::new();
    let mut dets = Vec::new();
    for i in 0..n_samples {
        let s = i as f64 * ds;
        let mut all = g_specs.to_vec();
        for h in h_specs {
            all.push(PerturbationSpec {
                amplitude: h.amplitude * s,
                ..h.clone()
            });
        }
        let pert = build_metric(grid, &all)?;
        if !validate(&pert).admissible() {
            return Err(Error::InadmissibleMetric(format!("sweep sample s = {s}")));
        }
        let (u, b) = endpoint_implementer(&pert, &base, cfg)?;
        let uv = u.apply(v);
        let vac = FockVector::vacuum(&v.basis);
        overlaps.push(vac.inner(&u.apply(&vac)).norm());
        let svals = b.k_mat.clone().svd(false, false).singular_values;
        let mut det = 1.0;
        for sv in svals.iter() {
            det *= (1.0 - sv * sv).powf(0.25);
        }
        dets.push(det);
        vectors.push(uv);
    }
    let mut rows = Vec::new();
    for i in 0..n_samples {
        let s = i as f64 * ds;
        let norm = vectors[i].norm();
        let (diff1, diff2) = if i >= 1 && i + 1 < n_samples {
            let mut d1 = vectors[i + 1].clone();
            d1.add_scaled(&vectors[i - 1], C64::new(-1.0, 0.0));
            d1.scale(C64::new(1.0 / (2.0 * ds), 0.0));
            let mut d2 = vectors[i + 1].clone();
            d2.add_scaled(&vectors[i], C64::new(-2.0, 0.0));
            d2.add_scaled(&vectors[i - 1], C64::new(1.0, 0.0));
            d2.scale(C64::new(1.0 / (ds * ds), 0.0));
            (d1.norm(), d2.norm())
        } else {
            (f64::NAN, f64::NAN)
        };
        // order estimate: compare the step-ds and step-2ds central differences
        let rich = if i >= 2 && i + 2 < n_samples {
            let mut dw = vectors[i + 2].clone();
            dw.add_scaled(&vectors[i - 2], C64::new(-1.0, 0.0));
            dw.scale(C64::new(1.0 / (4.0 * ds), 0.0));
            let mut d1v = vectors[i + 1].clone();
            d1v.add_scaled(&vectors[i - 1], C64::new(-1.0, 0.0));
            d1v.scale(C64::new(1.0 / (2.0 * ds), 0.0));
            // third central difference as the curvature scale
            let mut third = vectors[i + 2].clone();
            third.add_scaled(&vectors[i + 1], C64::new(-2.0, 0.0));
            third.add_scaled(&vectors[i - 1], C64::new(2.0, 0.0));
            third.add_scaled(&vectors[i - 2], C64::new(-1.0, 0.0));
            let mut diff = dw;
            diff.add_scaled(&d1v, C64::new(-1.0, 0.0));
            if third.norm() > 0.0 {
                (8.0 * diff.norm() / third.norm()).log2().abs()
            } else {
                f64::NAN
            }
        } else {
            f64::NAN
        };
        rows.push(SmoothnessRow {
            s,
            norm,
            diff1,
            diff2,
            richardson_order: rich,
        });
    }
    // global derivative order at the midpoint: D(2 ds) vs D(ds) against D(4 ds)
    let mid = n_samples / 2;
    let derivative_order = if mid >= 4 && mid + 4 < n_samples {
        let central = |step: usize| {
            let mut d = vectors[mid + step].clone();
            d.add_scaled(&vectors[mid - step], C64::new(-1.0, 0.0));
            d.scale(C64::new(1.0 / (2.0 * step as f64 * ds), 0.0));
            d
        };
        let d1 = central(1);
        let d2 = central(2);
        let d4 = central(4);
        let mut e21 = d2.clone();
        e21.add_scaled(&d1, C64::new(-1.0, 0.0));
        let mut e42 = d4.clone();
        e42.add_scaled(&d2, C64::new(-1.0, 0.0));
        if e21.norm() > 0.0 {
            (e42.norm() / e21.norm()).log2()
        } else {
            f64::INFINITY
        }
    } else {
        f64::NAN
    };
    // dual-path vacuum overlap derivative at the midpoint
    let vacuum_overlap_dual_defect = {
        let i = mid.clamp(1, n_samples - 2);
        let lhs = (overlaps[i + 1] - overlaps[i - 1]) / (2.0 * ds);
        let rhs = (dets[i + 1] - dets[i - 1]) / (2.0 * ds);
        (lhs - rhs).abs()
    };
    Ok(SmoothnessReport {
        rows,
        derivative_order,
        vacuum_overlap_dual_defect,
    })
}
