use kglab::geometry::*;
use kglab::grid::GridSpec;
use kglab::wavesolver::*;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::time::Instant;

fn probe_frame_defect(g: &GridSpec, w: &SymplecticMap, r_phys: f64) -> f64 {
    let n = g.n_x;
    let mut b = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut col = DVector::<f64>::from_fn(n, |i, _| bump(wrap_dist(g.x(i), g.x(j), g.circumference) / r_phys));
        let nrm = (col.dot(&col) * g.dx()).sqrt();
        col /= nrm;
        b.set_column(j, &col);
    }
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&b);
    big.view_mut((n, n), (n, n)).copy_from(&b);
    let id = DMatrix::<f64>::identity(2 * n, 2 * n);
    (big.transpose() * (&w.mat - id) * &big * g.dx()).abs().max()
}

fn cov(n_x: usize, substeps_scale: u32, s: f64) -> (f64, f64) {
    let g = GridSpec::new(n_x, 8.0 * PI, -0.85, 0.85, 0.05, 1.0).unwrap();
    let mut cfg = EvolutionConfig::for_accuracy(&g, 1.5, 1e-11);
    cfg.substeps_per_dt *= substeps_scale;
    let flat = MetricField::flat(&g);
    let fam = TimeBumpDiffeo { b_center: 0.0, b_radius: 0.6, c_center: 0.0, c_radius: 2.5, s };
    let pulled = pullback(&flat, &Diffeo::TimeBump(fam)).unwrap();
    let w = scattering_map(&pulled, &flat, -0.75, 0.75, &cfg).unwrap();
    let id = DMatrix::<f64>::identity(w.mat.nrows(), w.mat.ncols());
    ((&w.mat - &id).abs().max(), probe_frame_defect(&g, &w, 1.6))
}

fn main() {
    let t0 = Instant::now();
    let (raw64, p64) = cov(64, 1, 0.2);
    let t64 = t0.elapsed();
    let t1 = Instant::now();
    let (raw128, p128) = cov(128, 2, 0.2);
    let t128 = t1.elapsed();
    println!("n=64: raw {raw64:.3e} probe(r=1.6) {p64:.3e} [{t64:?}]");
    println!("n=128: raw {raw128:.3e} probe {p128:.3e} [{t128:?}] ratio {:.1}", p64 / p128);
}
