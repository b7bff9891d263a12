//! Metric families on the cylinder.
//!
//! Metrics are stored as sampled component fields `(g_tt, g_tx, g_xx)` on the
//! spacetime grid, equal to the flat metric diag(1, -1) outside a compact
//! support box. Perturbations are built from the standard smooth compactly
//! supported exponential bump, so every metric produced here also carries a
//! closed form that the wave solver can evaluate at arbitrary substep times
//! without interpolation error.
//!
//! Admissibility is certified pointwise by three sampled conditions:
//! Lorentzian signature (det < 0), dt temporal (g^tt > 0) and the coordinate
//! vector field `d/dt` timelike (g_tt > 0). Together these are the sufficient
//! conditions for global hyperbolicity of a compactly supported perturbation
//! of the flat cylinder.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Sharpness of the standard profile; larger values push the spectral
/// decay of the bump to lower frequencies at the cost of a narrower
/// effective core.
pub const BUMP_SHARPNESS: f64 = 3.0;

/// Smooth compactly supported profile, normalised to 1 at the centre:
/// `exp(a - a/(1 - r^2))` for |r| < 1, zero outside, a = [`BUMP_SHARPNESS`].
pub fn bump(rho: f64) -> f64 {
    let a = BUMP_SHARPNESS;
    if rho.abs() < 1.0 {
        (a - a / (1.0 - rho * rho)).exp()
    } else {
        0.0
    }
}

/// Derivative of [`bump`] with respect to its argument.
pub fn bump_deriv(rho: f64) -> f64 {
    let a = BUMP_SHARPNESS;
    if rho.abs() < 1.0 {
        let d = 1.0 - rho * rho;
        bump(rho) * (-2.0 * a * rho / (d * d))
    } else {
        0.0
    }
}

/// Signed distance on the circle, wrapped to [-L/2, L/2).
pub fn wrap_dist(x: f64, x0: f64, circumference: f64) -> f64 {
    let mut d = (x - x0) % circumference;
    if d < -circumference / 2.0 {
        d += circumference;
    }
    if d >= circumference / 2.0 {
        d -= circumference;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `h = amplitude * phi * diag(1, -1)`, a conformal rescaling.
    ConformalBump,
    /// `h_tt = amplitude * phi`, a lapse perturbation.
    LapseBump,
    /// `h_tx = amplitude * phi`, a shift perturbation.
    ShiftBump,
    /// `h = amplitude * L_Z(flat)` for `Z = b(t) c(x) d/dt` with bump
    /// profiles b, c centred at `center` with the given radii.
    LieDerivative,
}

/// One compactly supported perturbation of the flat metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// (t0, x0)
    pub center: (f64, f64),
    /// (r_t, r_x)
    pub radii: (f64, f64),
    pub amplitude: f64,
}

/// Amplitude caps keeping the admissibility margin comfortably positive.
const MAX_CONFORMAL_AMPLITUDE: f64 = 0.6;
const MAX_LAPSE_AMPLITUDE: f64 = 0.6;
const MAX_SHIFT_AMPLITUDE: f64 = 0.8;

impl PerturbationSpec {
    pub fn new(
        kind: PerturbationKind,
        center: (f64, f64),
        radii: (f64, f64),
        amplitude: f64,
    ) -> Result<Self> {
        if !(radii.0 > 0.0 && radii.1 > 0.0) {
            return Err(Error::Config("perturbation radii must be positive".into()));
        }
        let cap = match kind {
            PerturbationKind::ConformalBump => MAX_CONFORMAL_AMPLITUDE,
            PerturbationKind::LapseBump => MAX_LAPSE_AMPLITUDE,
            PerturbationKind::ShiftBump => MAX_SHIFT_AMPLITUDE,
            PerturbationKind::LieDerivative => f64::INFINITY,
        };
        if amplitude.abs() > cap {
            return Err(Error::Config(format!(
                "amplitude {amplitude} exceeds cap {cap} for {kind:?}"
            )));
        }
        Ok(Self {
            kind,
            center,
            radii,
            amplitude,
        })
    }

    /// Tensor components `(h_tt, h_tx, h_xx)` at a point.
    pub fn tensor_at(&self, t: f64, x: f64, circumference: f64) -> (f64, f64, f64) {
        let rho_t = (t - self.center.0) / self.radii.0;
        let dx = wrap_dist(x, self.center.1, circumference);
        let rho_x = dx / self.radii.1;
        match self.kind {
            PerturbationKind::ConformalBump => {
                let phi = bump(rho_t) * bump(rho_x);
                (self.amplitude * phi, 0.0, -self.amplitude * phi)
            }
            PerturbationKind::LapseBump => {
                let phi = bump(rho_t) * bump(rho_x);
                (self.amplitude * phi, 0.0, 0.0)
            }
            PerturbationKind::ShiftBump => {
                let phi = bump(rho_t) * bump(rho_x);
                (0.0, self.amplitude * phi, 0.0)
            }
            PerturbationKind::LieDerivative => {
                // L_Z(flat) for Z = b(t) c(x) d/dt:
                //   h_tt = 2 b'(t) c(x),  h_tx = b(t) c'(x),  h_xx = 0.
                let b = bump(rho_t);
                let bp = bump_deriv(rho_t) / self.radii.0;
                let c = bump(rho_x);
                let cp = bump_deriv(rho_x) / self.radii.1;
                (
                    self.amplitude * 2.0 * bp * c,
                    self.amplitude * b * cp,
                    0.0,
                )
            }
        }
    }

    /// Temporal support interval.
    pub fn t_support(&self) -> (f64, f64) {
        (self.center.0 - self.radii.0, self.center.0 + self.radii.0)
    }

    /// Spatial support as (centre, half width).
    pub fn x_support(&self) -> (f64, f64) {
        (self.center.1, self.radii.1)
    }
}

/// Closed-form time-bump diffeomorphism `phi_s(t, x) = (t + s b(t) c(x), x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBumpDiffeo {
    pub b_center: f64,
    pub b_radius: f64,
    pub c_center: f64,
    pub c_radius: f64,
    pub s: f64,
}

impl TimeBumpDiffeo {
    pub fn b(&self, t: f64) -> f64 {
        bump((t - self.b_center) / self.b_radius)
    }
    pub fn b_prime(&self, t: f64) -> f64 {
        bump_deriv((t - self.b_center) / self.b_radius) / self.b_radius
    }
    pub fn c(&self, x: f64, circumference: f64) -> f64 {
        bump(wrap_dist(x, self.c_center, circumference) / self.c_radius)
    }
    pub fn c_prime(&self, x: f64, circumference: f64) -> f64 {
        bump_deriv(wrap_dist(x, self.c_center, circumference) / self.c_radius) / self.c_radius
    }

    pub fn map(&self, t: f64, x: f64, circumference: f64) -> (f64, f64) {
        (t + self.s * self.b(t) * self.c(x, circumference), x)
    }

    /// Jacobian entries (dphi^t/dt, dphi^t/dx); dphi^x = (0, 1).
    pub fn jacobian(&self, t: f64, x: f64, circumference: f64) -> (f64, f64) {
        (
            1.0 + self.s * self.b_prime(t) * self.c(x, circumference),
            self.s * self.b(t) * self.c_prime(x, circumference),
        )
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..self.clone() }
    }

    /// Solve `t + s b(t) c(x) = t_target` for t by Newton iteration; the
    /// map is strictly monotone in t whenever `1 + s b'(t) c(x) > 0`.
    fn invert_time(&self, t_target: f64, x: f64, circumference: f64) -> f64 {
        let c = self.c(x, circumference);
        if self.s * c == 0.0 {
            return t_target;
        }
        let mut t = t_target;
        for _ in 0..60 {
            let f = t + self.s * self.b(t) * c - t_target;
            let fp = 1.0 + self.s * self.b_prime(t) * c;
            let step = f / fp;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    }
}

/// A closed-form diffeomorphism of the cylinder: a time-bump family or the
/// exact inverse of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diffeo {
    TimeBump(TimeBumpDiffeo),
    InverseTimeBump(TimeBumpDiffeo),
}

impl Diffeo {
    pub fn time_bump(d: TimeBumpDiffeo) -> Self {
        Diffeo::TimeBump(d)
    }

    pub fn inverse(&self) -> Self {
        match self {
            Diffeo::TimeBump(d) => Diffeo::InverseTimeBump(d.clone()),
            Diffeo::InverseTimeBump(d) => Diffeo::TimeBump(d.clone()),
        }
    }

    pub fn map(&self, t: f64, x: f64, circumference: f64) -> (f64, f64) {
        match self {
            Diffeo::TimeBump(d) => d.map(t, x, circumference),
            Diffeo::InverseTimeBump(d) => (d.invert_time(t, x, circumference), x),
        }
    }

    /// Jacobian entries (dphi^t/dt, dphi^t/dx); dphi^x = (0, 1).
    pub fn jacobian(&self, t: f64, x: f64, circumference: f64) -> (f64, f64) {
        match self {
            Diffeo::TimeBump(d) => d.jacobian(t, x, circumference),
            Diffeo::InverseTimeBump(d) => {
                // inverse function theorem for (t, x) -> (T(t, x), x)
                let tau = d.invert_time(t, x, circumference);
                let (jtt, jtx) = d.jacobian(tau, x, circumference);
                (1.0 / jtt, -jtx / jtt)
            }
        }
    }

    /// Smallest dphi^t/dt over the sampled grid (invertibility margin).
    fn min_time_jacobian(&self, grid: &GridSpec) -> f64 {
        let mut min_jac = f64::INFINITY;
        for i in 0..grid.n_t() {
            for j in 0..grid.n_x {
                let (jtt, _) = self.jacobian(grid.t(i), grid.x(j), grid.circumference);
                min_jac = min_jac.min(jtt);
            }
        }
        min_jac
    }

    /// Spacetime support box of the deviation from the identity. The
    /// forward map deviates exactly on the b-profile support; the inverse
    /// can move points up to |s| outside it.
    pub fn support(&self, circumference: f64) -> SupportBox {
        let (d, pad) = match self {
            Diffeo::TimeBump(d) => (d, 0.0),
            Diffeo::InverseTimeBump(d) => (d, d.s.abs()),
        };
        SupportBox {
            t_lo: d.b_center - d.b_radius - pad,
            t_hi: d.b_center + d.b_radius + pad,
            x_center: d.c_center,
            x_halfwidth: d.c_radius.min(circumference / 2.0),
        }
    }
}

/// Closed-form description backing the sampled components.
#[derive(Debug, Clone)]
pub enum MetricForm {
    Flat,
    Bumps(Vec<PerturbationSpec>),
    Pullback {
        inner: Box<MetricForm>,
        diffeo: Diffeo,
    },
    /// No closed form; slice evaluation interpolates the samples in time.
    Sampled,
}

impl MetricForm {
    fn eval(&self, grid: &GridSpec, t: f64, x: f64) -> Option<(f64, f64, f64)> {
        match self {
            MetricForm::Flat => Some((1.0, 0.0, -1.0)),
            MetricForm::Bumps(specs) => {
                let mut g = (1.0, 0.0, -1.0);
                for sp in specs {
                    let h = sp.tensor_at(t, x, grid.circumference);
                    g.0 += h.0;
                    g.1 += h.1;
                    g.2 += h.2;
                }
                Some(g)
            }
            MetricForm::Pullback { inner, diffeo } => {
                let (tp, xp) = diffeo.map(t, x, grid.circumference);
                let (gtt, gtx, gxx) = inner.eval(grid, tp, xp)?;
                let (jtt, jtx) = diffeo.jacobian(t, x, grid.circumference);
                // (phi* g)_{mn} = J^a_m J^b_n g_ab with J^x = (0, 1).
                let ptt = jtt * jtt * gtt;
                let ptx = jtt * (jtx * gtt + gtx);
                let pxx = jtx * jtx * gtt + 2.0 * jtx * gtx + gxx;
                Some((ptt, ptx, pxx))
            }
            MetricForm::Sampled => None,
        }
    }
}

/// Rectangle in (t, x) outside which the metric is exactly flat. The x
/// interval is stored as centre and half width on the circle; a half width
/// of at least L/2 covers the whole circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_center: f64,
    pub x_halfwidth: f64,
}

impl SupportBox {
    pub fn covers_full_circle(&self, circumference: f64) -> bool {
        self.x_halfwidth >= circumference / 2.0
    }
}

/// One constant-time slice of sampled metric components.
#[derive(Debug, Clone)]
pub struct MetricSlice {
    pub g_tt: DVector<f64>,
    pub g_tx: DVector<f64>,
    pub g_xx: DVector<f64>,
}

/// Coefficient fields of the first-order wave system at a fixed time:
/// `a = sqrt|g| g^tt`, `b = sqrt|g| g^tx`, `c = sqrt|g| g^xx`,
/// `e = sqrt|g| m^2`, and `sqrt_gamma = sqrt(-g_xx)`.
#[derive(Debug, Clone)]
pub struct WaveCoeffs {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub e: DVector<f64>,
    pub sqrt_gamma: DVector<f64>,
}

/// Sampled Lorentzian metric on the spacetime grid.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: GridSpec,
    /// (n_t, n_x) component samples.
    pub g_tt: DMatrix<f64>,
    pub g_tx: DMatrix<f64>,
    pub g_xx: DMatrix<f64>,
    pub support_box: Option<SupportBox>,
    pub id: String,
    form: MetricForm,
}

impl MetricField {
    pub fn flat(grid: &GridSpec) -> Self {
        let n_t = grid.n_t();
        let n_x = grid.n_x;
        Self {
            grid: grid.clone(),
            g_tt: DMatrix::from_element(n_t, n_x, 1.0),
            g_tx: DMatrix::zeros(n_t, n_x),
            g_xx: DMatrix::from_element(n_t, n_x, -1.0),
            support_box: None,
            id: "flat".into(),
            form: MetricForm::Flat,
        }
    }

    /// Wrap raw component samples (diagnostics and blends). No closed form.
    pub fn from_components(
        grid: &GridSpec,
        g_tt: DMatrix<f64>,
        g_tx: DMatrix<f64>,
        g_xx: DMatrix<f64>,
        id: &str,
    ) -> Result<Self> {
        let (n_t, n_x) = (grid.n_t(), grid.n_x);
        for m in [&g_tt, &g_tx, &g_xx] {
            if m.nrows() != n_t || m.ncols() != n_x {
                return Err(Error::GridMismatch(format!(
                    "component shape {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    n_t,
                    n_x
                )));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            g_tt,
            g_tx,
            g_xx,
            support_box: Some(SupportBox {
                t_lo: grid.t_min,
                t_hi: grid.t_max,
                x_center: 0.0,
                x_halfwidth: grid.circumference,
            }),
            id: id.into(),
            form: MetricForm::Sampled,
        })
    }

    fn sample_form(grid: &GridSpec, form: &MetricForm) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n_t, n_x) = (grid.n_t(), grid.n_x);
        let mut g_tt = DMatrix::zeros(n_t, n_x);
        let mut g_tx = DMatrix::zeros(n_t, n_x);
        let mut g_xx = DMatrix::zeros(n_t, n_x);
        for i in 0..n_t {
            let t = grid.t(i);
            for j in 0..n_x {
                let (a, b, c) = form.eval(grid, t, grid.x(j)).expect("closed form");
                g_tt[(i, j)] = a;
                g_tx[(i, j)] = b;
                g_xx[(i, j)] = c;
            }
        }
        (g_tt, g_tx, g_xx)
    }

    /// Does this metric have a closed form (no interpolation on evaluation)?
    pub fn has_closed_form(&self) -> bool {
        !matches!(self.form, MetricForm::Sampled)
    }

    /// Closed-form component evaluation at an arbitrary point; None for
    /// purely sampled metrics.
    pub fn components_at(&self, t: f64, x: f64) -> Option<(f64, f64, f64)> {
        self.form.eval(&self.grid, t, x)
    }

    /// Metric components at an arbitrary time, sampled over the spatial grid.
    ///
    /// Closed forms are evaluated exactly; sampled metrics are interpolated
    /// in time with a degree-7 Lagrange stencil per spatial column.
    pub fn slice_at(&self, t: f64) -> MetricSlice {
        let n_x = self.grid.n_x;
        if let Some(first) = self.form.eval(&self.grid, t, self.grid.x(0)) {
            let mut s = MetricSlice {
                g_tt: DVector::zeros(n_x),
                g_tx: DVector::zeros(n_x),
                g_xx: DVector::zeros(n_x),
            };
            s.g_tt[0] = first.0;
            s.g_tx[0] = first.1;
            s.g_xx[0] = first.2;
            for j in 1..n_x {
                let (a, b, c) = self.form.eval(&self.grid, t, self.grid.x(j)).unwrap();
                s.g_tt[j] = a;
                s.g_tx[j] = b;
                s.g_xx[j] = c;
            }
            s
        } else {
            self.interpolated_slice(t)
        }
    }

    fn interpolated_slice(&self, t: f64) -> MetricSlice {
        let n_t = self.grid.n_t();
        let n_x = self.grid.n_x;
        let stencil = 8.min(n_t);
        // leftmost stencil node
        let pos = (t - self.grid.t_min) / self.grid.dt;
        let i0 = ((pos.floor() as i64) - (stencil as i64 / 2 - 1))
            .clamp(0, (n_t - stencil) as i64) as usize;
        // Lagrange weights on the uniform nodes i0..i0+stencil
        let mut w = vec![1.0f64; stencil];
        for a in 0..stencil {
            let ta = self.grid.t(i0 + a);
            for b in 0..stencil {
                if a != b {
                    let tb = self.grid.t(i0 + b);
                    w[a] *= (t - tb) / (ta - tb);
                }
            }
        }
        let mut s = MetricSlice {
            g_tt: DVector::zeros(n_x),
            g_tx: DVector::zeros(n_x),
            g_xx: DVector::zeros(n_x),
        };
        for j in 0..n_x {
            let mut tt = 0.0;
            let mut tx = 0.0;
            let mut xx = 0.0;
            for a in 0..stencil {
                tt += w[a] * self.g_tt[(i0 + a, j)];
                tx += w[a] * self.g_tx[(i0 + a, j)];
                xx += w[a] * self.g_xx[(i0 + a, j)];
            }
            s.g_tt[j] = tt;
            s.g_tx[j] = tx;
            s.g_xx[j] = xx;
        }
        s
    }

    /// First-order system coefficients at time t.
    pub fn wave_coeffs_at(&self, t: f64) -> WaveCoeffs {
        let s = self.slice_at(t);
        let n = self.grid.n_x;
        let m2 = self.grid.mass * self.grid.mass;
        let mut a = DVector::zeros(n);
        let mut b = DVector::zeros(n);
        let mut c = DVector::zeros(n);
        let mut e = DVector::zeros(n);
        let mut sq = DVector::zeros(n);
        for j in 0..n {
            let det = s.g_tt[j] * s.g_xx[j] - s.g_tx[j] * s.g_tx[j];
            let vol = (-det).sqrt();
            a[j] = vol * s.g_xx[j] / det;
            b[j] = -vol * s.g_tx[j] / det;
            c[j] = vol * s.g_tt[j] / det;
            e[j] = vol * m2;
            sq[j] = (-s.g_xx[j]).sqrt();
        }
        WaveCoeffs {
            a,
            b,
            c,
            e,
            sqrt_gamma: sq,
        }
    }

    /// Max characteristic speed |dx/dt| over the sampled grid.
    pub fn max_char_speed(&self) -> f64 {
        let mut cmax: f64 = 0.0;
        for i in 0..self.grid.n_t() {
            for j in 0..self.grid.n_x {
                let (gtt, gtx, gxx) = (self.g_tt[(i, j)], self.g_tx[(i, j)], self.g_xx[(i, j)]);
                let det = gtt * gxx - gtx * gtx;
                if det < 0.0 && gxx != 0.0 {
                    let root = (-det).sqrt();
                    let s1 = ((-gtx + root) / gxx).abs();
                    let s2 = ((-gtx - root) / gxx).abs();
                    cmax = cmax.max(s1).max(s2);
                }
            }
        }
        cmax
    }

    /// Is the metric exactly flat outside the open interval (t_lo, t_hi)?
    pub fn flat_outside(&self, t_lo: f64, t_hi: f64) -> bool {
        match &self.support_box {
            None => true,
            Some(b) => b.t_lo > t_lo && b.t_hi < t_hi,
        }
    }

    /// Pointwise `self + scale * h` for sampled tensors; drops closed form.
    pub fn add_scaled_samples(
        &self,
        h: &(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>),
        scale: f64,
        id: &str,
    ) -> Result<Self> {
        let mut out = Self::from_components(
            &self.grid,
            &self.g_tt + &h.0 * scale,
            &self.g_tx + &h.1 * scale,
            &self.g_xx + &h.2 * scale,
            id,
        )?;
        out.support_box = Some(SupportBox {
            t_lo: self.grid.t_min,
            t_hi: self.grid.t_max,
            x_center: 0.0,
            x_halfwidth: self.grid.circumference,
        });
        Ok(out)
    }
}

/// Flat metric plus the sum of the generated perturbation tensors.
/// Validity is not checked here; run [`validate`] on the result.
pub fn build_metric(grid: &GridSpec, specs: &[PerturbationSpec]) -> Result<MetricField> {
    for sp in specs {
        let (lo, hi) = sp.t_support();
        if !(lo > grid.t_min && hi < grid.t_max) {
            return Err(Error::Config(format!(
                "perturbation support [{lo}, {hi}] must lie strictly inside ({}, {})",
                grid.t_min, grid.t_max
            )));
        }
    }
    if specs.is_empty() {
        return Ok(MetricField::flat(grid));
    }
    let form = MetricForm::Bumps(specs.to_vec());
    let (g_tt, g_tx, g_xx) = MetricField::sample_form(grid, &form);
    let t_lo = specs
        .iter()
        .map(|s| s.t_support().0)
        .fold(f64::INFINITY, f64::min);
    let t_hi = specs
        .iter()
        .map(|s| s.t_support().1)
        .fold(f64::NEG_INFINITY, f64::max);
    let support_box = Some(hull_x_support(grid, specs, t_lo, t_hi));
    Ok(MetricField {
        grid: grid.clone(),
        g_tt,
        g_tx,
        g_xx,
        support_box,
        id: format!("bumps[{}]", specs.len()),
        form,
    })
}

fn hull_x_support(grid: &GridSpec, specs: &[PerturbationSpec], t_lo: f64, t_hi: f64) -> SupportBox {
    // Hull of the spatial supports, measured from the first centre.
    let l = grid.circumference;
    let x0 = specs[0].center.1;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for sp in specs {
        let d = wrap_dist(sp.center.1, x0, l);
        lo = lo.min(d - sp.radii.1);
        hi = hi.max(d + sp.radii.1);
    }
    let half = ((hi - lo) / 2.0).min(l / 2.0);
    SupportBox {
        t_lo,
        t_hi,
        x_center: x0 + (hi + lo) / 2.0,
        x_halfwidth: half,
    }
}

/// Report-valued admissibility check.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub lorentzian: bool,
    pub dt_temporal: bool,
    pub dt_timelike_vectorfield: bool,
    /// min over the grid of (-det, g^tt, g_tt)
    pub worst_margin: f64,
    /// first few failing grid nodes as (time index, space index, condition)
    pub failing_points: Vec<(usize, usize, String)>,
}

impl ValidityReport {
    pub fn admissible(&self) -> bool {
        self.lorentzian && self.dt_temporal && self.dt_timelike_vectorfield
    }
}

pub fn validate(metric: &MetricField) -> ValidityReport {
    let mut rep = ValidityReport {
        lorentzian: true,
        dt_temporal: true,
        dt_timelike_vectorfield: true,
        worst_margin: f64::INFINITY,
        failing_points: Vec::new(),
    };
    let push = |v: &mut Vec<(usize, usize, String)>, i, j, what: &str| {
        if v.len() < 16 {
            v.push((i, j, what.to_string()));
        }
    };
    for i in 0..metric.grid.n_t() {
        for j in 0..metric.grid.n_x {
            let (gtt, gtx, gxx) = (
                metric.g_tt[(i, j)],
                metric.g_tx[(i, j)],
                metric.g_xx[(i, j)],
            );
            let det = gtt * gxx - gtx * gtx;
            let inv_tt = if det != 0.0 { gxx / det } else { f64::NEG_INFINITY };
            rep.worst_margin = rep.worst_margin.min(-det).min(inv_tt).min(gtt);
            if !(det < 0.0) {
                rep.lorentzian = false;
                push(&mut rep.failing_points, i, j, "det");
            }
            if !(inv_tt > 0.0) {
                rep.dt_temporal = false;
                push(&mut rep.failing_points, i, j, "g^tt");
            }
            if !(gtt > 0.0) {
                rep.dt_timelike_vectorfield = false;
                push(&mut rep.failing_points, i, j, "g_tt");
            }
        }
    }
    rep
}

/// Pointwise convex blend `chi g1 + (1 - chi) g2`.
///
/// When both inputs share a temporal function and a timelike vector field
/// the blend is guaranteed Lorentzian; the caller re-validates.
pub fn blend(g1: &MetricField, g2: &MetricField, chi: &DMatrix<f64>) -> Result<MetricField> {
    let (n_t, n_x) = (g1.grid.n_t(), g1.grid.n_x);
    if g2.grid != g1.grid {
        return Err(Error::GridMismatch("blend inputs on different grids".into()));
    }
    if chi.nrows() != n_t || chi.ncols() != n_x {
        return Err(Error::GridMismatch(format!(
            "chi shape {}x{}, expected {}x{}",
            chi.nrows(),
            chi.ncols(),
            n_t,
            n_x
        )));
    }
    let mix = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        DMatrix::from_fn(n_t, n_x, |i, j| {
            chi[(i, j)] * a[(i, j)] + (1.0 - chi[(i, j)]) * b[(i, j)]
        })
    };
    let mut out = MetricField::from_components(
        &g1.grid,
        mix(&g1.g_tt, &g2.g_tt),
        mix(&g1.g_tx, &g2.g_tx),
        mix(&g1.g_xx, &g2.g_xx),
        &format!("blend({},{})", g1.id, g2.id),
    )?;
    out.support_box = match (&g1.support_box, &g2.support_box) {
        (None, None) => None,
        _ => out.support_box,
    };
    Ok(out)
}

/// Pull back a metric along a closed-form time-bump diffeomorphism.
///
/// Uses the analytic Jacobian. For metrics with a closed form the
/// composition is evaluated exactly; sampled metrics are interpolated in
/// time (the diffeomorphism family keeps x fixed, so no spatial
/// interpolation is needed).
pub fn pullback(metric: &MetricField, diffeo: &Diffeo) -> Result<MetricField> {
    // invertibility on the grid: dphi^t/dt = 1 + s b'(t) c(x) must stay positive
    let fwd = match diffeo {
        Diffeo::TimeBump(d) | Diffeo::InverseTimeBump(d) => Diffeo::TimeBump(d.clone()),
    };
    let min_jac = fwd.min_time_jacobian(&metric.grid);
    if min_jac <= 0.05 {
        return Err(Error::NonInvertibleFlow(format!(
            "min dphi^t/dt = {min_jac:.3} on the grid"
        )));
    }

    let grid = &metric.grid;
    let form = match &metric.form {
        MetricForm::Sampled => MetricForm::Sampled,
        other => MetricForm::Pullback {
            inner: Box::new(other.clone()),
            diffeo: diffeo.clone(),
        },
    };

    let (n_t, n_x) = (grid.n_t(), grid.n_x);
    let mut g_tt = DMatrix::zeros(n_t, n_x);
    let mut g_tx = DMatrix::zeros(n_t, n_x);
    let mut g_xx = DMatrix::zeros(n_t, n_x);
    match &form {
        MetricForm::Sampled => {
            // interpolate the inner metric at phi(t, x), column by column
            for j in 0..n_x {
                let x = grid.x(j);
                for i in 0..n_t {
                    let t = grid.t(i);
                    let (tp, _) = diffeo.map(t, x, grid.circumference);
                    let slice = metric.interpolated_slice(tp.clamp(grid.t_min, grid.t_max));
                    let (jtt, jtx) = diffeo.jacobian(t, x, grid.circumference);
                    let (gtt, gtx, gxx) = (slice.g_tt[j], slice.g_tx[j], slice.g_xx[j]);
                    g_tt[(i, j)] = jtt * jtt * gtt;
                    g_tx[(i, j)] = jtt * (jtx * gtt + gtx);
                    g_xx[(i, j)] = jtx * jtx * gtt + 2.0 * jtx * gtx + gxx;
                }
            }
        }
        f => {
            let (a, b, c) = MetricField::sample_form(grid, f);
            g_tt = a;
            g_tx = b;
            g_xx = c;
        }
    }

    // Support: union of the inner support with the diffeo support.
    let diffeo_box = diffeo.support(grid.circumference);
    let support_box = match &metric.support_box {
        None => Some(diffeo_box),
        Some(b) => Some(SupportBox {
            t_lo: b.t_lo.min(diffeo_box.t_lo),
            t_hi: b.t_hi.max(diffeo_box.t_hi),
            x_center: b.x_center,
            x_halfwidth: grid.circumference / 2.0,
        }),
    };

    Ok(MetricField {
        grid: grid.clone(),
        g_tt,
        g_tx,
        g_xx,
        support_box,
        id: format!("pullback({})", metric.id),
        form,
    })
}

/// `h = d/ds|_0 (phi_s)* g` by central differences of the pullback with
/// Richardson extrapolation (steps 1e-4 and 2e-4).
pub fn lie_derivative_tensor(
    metric: &MetricField,
    diffeo: &TimeBumpDiffeo,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let eps = 1e-4;
    let diff_at = |s: f64| -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let plus = pullback(metric, &Diffeo::TimeBump(diffeo.with_s(s)))?;
        let minus = pullback(metric, &Diffeo::TimeBump(diffeo.with_s(-s)))?;
        Ok((
            (&plus.g_tt - &minus.g_tt) / (2.0 * s),
            (&plus.g_tx - &minus.g_tx) / (2.0 * s),
            (&plus.g_xx - &minus.g_xx) / (2.0 * s),
        ))
    };
    let d1 = diff_at(eps)?;
    let d2 = diff_at(2.0 * eps)?;
    // Richardson: (4 D(eps) - D(2 eps)) / 3 removes the eps^2 term.
    Ok((
        (&d1.0 * 4.0 - &d2.0) / 3.0,
        (&d1.1 * 4.0 - &d2.1) / 3.0,
        (&d1.2 * 4.0 - &d2.2) / 3.0,
    ))
}

/// Piecewise path of metrics: each segment linearly switches on its
/// perturbation list on top of the accumulated endpoint of the previous
/// segments. Only the sampled endpoints and validity matter for transport.
#[derive(Debug, Clone)]
pub struct MetricPath {
    pub grid: GridSpec,
    pub segments: Vec<PathSegment>,
    /// Specs already applied before the first segment (usually empty).
    pub base_specs: Vec<PerturbationSpec>,
}

#[derive(Debug, Clone)]
pub struct PathSegment {
    pub specs: Vec<PerturbationSpec>,
    pub n_s: usize,
}

impl MetricPath {
    pub fn from_segments(grid: &GridSpec, segments: Vec<PathSegment>) -> Self {
        Self {
            grid: grid.clone(),
            segments,
            base_specs: Vec::new(),
        }
    }

    fn scaled(specs: &[PerturbationSpec], s: f64) -> Vec<PerturbationSpec> {
        specs
            .iter()
            .map(|sp| PerturbationSpec {
                amplitude: sp.amplitude * s,
                ..sp.clone()
            })
            .collect()
    }

    /// Accumulated spec list at parameter s in segment `seg`.
    pub fn specs_at(&self, seg: usize, s: f64) -> Vec<PerturbationSpec> {
        let mut acc = self.base_specs.clone();
        for i in 0..seg {
            acc.extend(self.segments[i].specs.iter().cloned());
        }
        acc.extend(Self::scaled(&self.segments[seg].specs, s));
        acc
    }

    pub fn metric_at(&self, seg: usize, s: f64) -> Result<MetricField> {
        build_metric(&self.grid, &self.specs_at(seg, s))
    }

    /// Metric at the start of the path.
    pub fn start(&self) -> Result<MetricField> {
        build_metric(&self.grid, &self.base_specs)
    }

    /// Metric at the end of segment `seg`.
    pub fn endpoint(&self, seg: usize) -> Result<MetricField> {
        self.metric_at(seg, 1.0)
    }

    /// Every sampled point along the path must be admissible.
    pub fn validate_samples(&self) -> Result<()> {
        for (si, seg) in self.segments.iter().enumerate() {
            let n = seg.n_s.max(2);
            for a in 0..n {
                let s = a as f64 / (n - 1) as f64;
                let m = self.metric_at(si, s)?;
                let rep = validate(&m);
                if !rep.admissible() {
                    return Err(Error::InadmissibleMetric(format!(
                        "segment {si}, s = {s:.3}: margin {:.3e}",
                        rep.worst_margin
                    )));
                }
            }
        }
        Ok(())
    }

    /// Net perturbation amplitude of the path endpoint relative to the start.
    pub fn is_loop(&self) -> Result<bool> {
        let start = self.start()?;
        let end = self.endpoint(self.segments.len() - 1)?;
        let d = (&end.g_tt - &start.g_tt).abs().max()
            + (&end.g_tx - &start.g_tx).abs().max()
            + (&end.g_xx - &start.g_xx).abs().max();
        Ok(d < 1e-12)
    }
}
