//! Linear Klein-Gordon experiments: kernel decay, `X`-norm decay of
//! localized data and the `L^2_t X` growth of free solutions.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, LinearFit};
use crate::lp::{band_range, cutoff, localize, norm_h, norm_x, norm_z, space_range, Band};
use crate::spectral::{PhysicalField, SpectralField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fewest time samples accepted by the decay fits.
pub const MIN_SAMPLES: usize = 8;

/// Default zero-padding factor for sup norms of kernels.
pub const DEFAULT_PAD: usize = 4;

/// Wrap-regime experiments stop at `8 R`.
pub const MAX_WRAPS: f64 = 8.0;

/// `e^{-it Lambda} u`
pub fn propagate(u: &SpectralField, t: f64) -> SpectralField {
    u.propagate(t)
}

/// Geometric time window `[t0, t1]` with `samples` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
}

impl TimeWindow {
    pub fn new(t0: f64, t1: f64, samples: usize) -> Self {
        Self { t0, t1, samples }
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.samples;
        if n == 1 {
            return vec![self.t0];
        }
        let r = (self.t1 / self.t0).ln();
        (0..n).map(|i| self.t0 * (r * i as f64 / (n - 1) as f64).exp()).collect()
    }

    fn validate(&self, side: f64) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::InsufficientData(format!(
                "time window has {} samples, need at least {MIN_SAMPLES}",
                self.samples
            )));
        }
        if !(self.t0 > 0.0 && self.t1 > self.t0 && self.t1.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad time window [{}, {}]", self.t0, self.t1)));
        }
        if self.t1 > MAX_WRAPS * side {
            return Err(Error::InvalidArgument(format!(
                "window end {} exceeds {MAX_WRAPS} R = {}",
                self.t1,
                MAX_WRAPS * side
            )));
        }
        Ok(())
    }
}

/// Coefficients `phi_k(xi) e^{-it Lambda(xi)}`; the physical field is `G_k(x, 0, t)`.
pub fn kernel(grid: &TorusGrid, k: i32, t: f64) -> SpectralField {
    let g = grid.clone();
    SpectralField::zeros(grid).map_indexed(|i, _| {
        let w = if g.in_truncation(i) { cutoff(k, g.abs_freq(i)) } else { 0.0 };
        if w == 0.0 {
            ZERO
        } else {
            Complex64::from_polar(w, -t * g.lambda(i))
        }
    })
}

/// `G_k(x, 0, t)` by direct summation over the lattice.
pub fn kernel_direct(grid: &TorusGrid, k: i32, t: f64, x: [f64; 2]) -> Complex64 {
    let r2 = grid.side() * grid.side();
    let sum: Complex64 = (0..grid.len())
        .filter(|&i| grid.in_truncation(i))
        .map(|i| {
            let w = cutoff(k, grid.abs_freq(i));
            if w == 0.0 {
                return ZERO;
            }
            let xi = grid.freq(i);
            Complex64::from_polar(w, x[0] * xi[0] + x[1] * xi[1] - t * grid.lambda(i))
        })
        .sum();
    sum / r2
}

/// Sup norm and its location on the grid refined `factor` times by zero padding.
pub fn padded_sup(u: &SpectralField, factor: usize) -> (f64, [f64; 2]) {
    let g = u.grid();
    let n = g.n();
    let big = n * factor.max(1);
    let mut planner = FftPlanner::<f64>::new();
    let plan = planner.plan_fft_inverse(big);
    let c = u.coeffs();
    let mut rows: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i1 in 0..n {
        let slice = &c[i1 * n..(i1 + 1) * n];
        if slice.iter().all(|v| *v == ZERO) {
            continue;
        }
        let m1 = g.mode(i1 * n)[0];
        let mut row = vec![ZERO; big];
        for (i2, v) in slice.iter().enumerate() {
            if *v != ZERO {
                let m2 = g.mode(i1 * n + i2)[1];
                row[m2.rem_euclid(big as i64) as usize] = *v;
            }
        }
        plan.process(&mut row);
        rows.push((m1.rem_euclid(big as i64) as usize, row));
    }
    if rows.is_empty() {
        return (0.0, [0.0, 0.0]);
    }
    let (best, j1, j2) = (0..big)
        .into_par_iter()
        .map_init(
            || vec![ZERO; big],
            |col, j2| {
                col.iter_mut().for_each(|v| *v = ZERO);
                for (p, row) in &rows {
                    col[*p] = row[j2];
                }
                plan.process(col);
                let (j1, m) = col
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (j, v.norm()))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
                (m, j1, j2)
            },
        )
        .reduce(|| (-1.0, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    let h = g.side() / big as f64;
    let r2 = g.side() * g.side();
    (best / r2, [j1 as f64 * h, j2 as f64 * h])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayExperiment {
    pub side: f64,
    pub n: usize,
    pub k: i32,
    pub times: Vec<f64>,
    pub sup: Vec<f64>,
    /// Decay exponent, `sup ~ prefactor * t^{-alpha}`.
    pub alpha: f64,
    pub alpha_ci: (f64, f64),
    pub prefactor: f64,
    pub fit: LinearFit,
}

fn decay_from_series(side: f64, n: usize, k: i32, times: Vec<f64>, sup: Vec<f64>) -> Result<DecayExperiment> {
    let fit = loglog_fit(&times, &sup)?;
    Ok(DecayExperiment {
        side,
        n,
        k,
        alpha: -fit.slope,
        alpha_ci: (-fit.slope_ci.1, -fit.slope_ci.0),
        prefactor: fit.intercept.exp(),
        fit,
        times,
        sup,
    })
}

/// Kernel sup norms `sup_x |G_k(x, 0, t)|` over a window, evaluated with `pad`-fold interpolation.
pub fn kernel_sup_series(grid: &TorusGrid, k: i32, times: &[f64], pad: usize) -> Vec<f64> {
    times.iter().map(|&t| padded_sup(&kernel(grid, k, t), pad).0).collect()
}

/// Fits `log sup_x |G_k| = log A - alpha log t` over the window.
pub fn kernel_decay_fit(grid: &TorusGrid, k: i32, window: TimeWindow, pad: usize) -> Result<DecayExperiment> {
    window.validate(grid.side())?;
    let times = window.times();
    let sup = kernel_sup_series(grid, k, &times, pad);
    decay_from_series(grid.side(), grid.n(), k, times, sup)
}

/// Isotropic Gaussian `e^{-|x|^2 / (2 w^2)}` in periodic distance, centered at the origin.
pub fn gaussian_bump(grid: &TorusGrid, width: f64) -> SpectralField {
    let values = (0..grid.len())
        .map(|p| {
            let d = grid.periodic_distance(p);
            Complex64::new((-(d * d) / (2.0 * width * width)).exp(), 0.0)
        })
        .collect();
    PhysicalField::new(grid, values).expect("grid size").forward()
}

/// `||e^{-it Lambda} u||_X` at each time.
pub fn x_norm_series(u: &SpectralField, m: u32, times: &[f64]) -> Vec<f64> {
    times.par_iter().map(|&t| norm_x(&propagate(u, t), m)).collect()
}

/// Fits the decay of `||e^{-it Lambda} u||_X` for `u` rescaled to `||u||_Z = 1`.
pub fn z_decay_fit(u: &SpectralField, m: u32, window: TimeWindow) -> Result<DecayExperiment> {
    let g = u.grid();
    window.validate(g.side())?;
    let z = norm_z(u, m);
    if z == 0.0 {
        return Err(Error::InvalidArgument("data has zero Z norm".into()));
    }
    let unit = u.scale(1.0 / z);
    let times = window.times();
    let xs = x_norm_series(&unit, m, &times);
    decay_from_series(g.side(), g.n(), 0, times, xs)
}

/// `||Q_j e^{-it Lambda} u||_{L^2}` for every spatial scale `j`.
pub fn weight_profile(u: &SpectralField, t: f64) -> Vec<(i32, f64)> {
    let phys = propagate(u, t).to_physical();
    space_range(u.grid()).map(|j| (j, localize(j, &phys).norm_l2())).collect()
}

/// One row of a Strichartz table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzRow {
    pub t: f64,
    /// `||e^{-is Lambda} u||_{L^2([0,t]) X} / ||u||_{H^{M+2}}`
    pub s: f64,
    /// `s / (log R sqrt(1 + t/R))`
    pub normalized: f64,
}

/// Tabulates `S(t)` at the requested times by trapezoidal quadrature with step `ds`.
pub fn strichartz_measure(u: &SpectralField, m: u32, times: &[f64], ds: f64) -> Result<Vec<StrichartzRow>> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(Error::InvalidArgument(format!("quadrature step must be positive, got {ds}")));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
    }
    let side = u.grid().side();
    let log_r = side.ln().max(1.0);
    let h = norm_h(u, (m + 2) as f64);
    if h == 0.0 {
        return Ok(times.iter().map(|&t| StrichartzRow { t, s: 0.0, normalized: 0.0 }).collect());
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let steps = (t_max / ds).ceil() as usize;
    let grid_s: Vec<f64> = (0..=steps).map(|i| i as f64 * ds).collect();
    let sq: Vec<f64> = grid_s.par_iter().map(|&s| norm_x(&propagate(u, s), m).powi(2)).collect();
    let mut acc = vec![0.0; sq.len()];
    for i in 1..sq.len() {
        acc[i] = acc[i - 1] + 0.5 * ds * (sq[i] + sq[i - 1]);
    }
    Ok(times
        .iter()
        .map(|&t| {
            let x = t / ds;
            let i = (x.floor() as usize).min(steps);
            let frac = x - i as f64;
            // linear in the partial cell, adequate for ds small against the oscillation
            let integral = if i < steps { acc[i] + frac * ds * sq[i] } else { acc[steps] };
            let s = integral.max(0.0).sqrt() / h;
            StrichartzRow { t, s, normalized: s / (log_r * (1.0 + t / side).sqrt()) }
        })
        .collect())
}

/// `t = R 2^j` for `j` in `[lo, hi]`.
pub fn dyadic_times(side: f64, lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|j| side * 2f64.powi(j)).collect()
}

/// Sum of `phi_k` over the lattice divided by `R^2`, the `t = 0` kernel peak.
pub fn shell_measure(grid: &TorusGrid, k: i32) -> f64 {
    let r2 = grid.side() * grid.side();
    (0..grid.len())
        .filter(|&i| grid.in_truncation(i))
        .map(|i| cutoff(k, grid.abs_freq(i)))
        .sum::<f64>()
        / r2
}

/// Whether every band the grid resolves can host `k`.
pub fn band_is_resolved(grid: &TorusGrid, k: i32) -> bool {
    band_range(grid).contains(&k) && Band::Exactly(k).weight(grid.max_abs_freq()) == 0.0
}

/// One `(R, seed)` measurement of a Strichartz survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzSample {
    pub side: f64,
    pub seed: u64,
    pub rows: Vec<StrichartzRow>,
}

impl StrichartzSample {
    /// `S(4R) / S(R)`, when both times were tabulated.
    pub fn growth_ratio(&self) -> Option<f64> {
        let at = |t: f64| self.rows.iter().find(|r| (r.t - t).abs() <= 1e-9 * t).map(|r| r.s);
        Some(at(4.0 * self.side)? / at(self.side)?)
    }
}

/// Survey over `(R, seed)` with random smooth data, `n = max(32, 4R)` and
/// dyadic times `R/8, ..., 4R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzSurvey {
    pub samples: Vec<StrichartzSample>,
    /// Smallest `C` with `S(t) <= C log R sqrt(1 + t/R)` over all samples.
    pub constant: f64,
}

impl StrichartzSurvey {
    /// Mean of `S(4R) / S(R)` over the seeds for side `R`.
    pub fn mean_ratio(&self, side: f64) -> Option<f64> {
        let r: Vec<f64> = self.samples.iter().filter(|s| s.side == side).filter_map(|s| s.growth_ratio()).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

pub fn survey_grid(side: f64) -> Result<TorusGrid> {
    let n = ((4.0 * side).ceil() as usize).max(32).next_power_of_two();
    TorusGrid::new(side, n)
}

pub fn strichartz_survey(sides: &[f64], seeds: &[u64], m: u32, ds: f64) -> Result<StrichartzSurvey> {
    use rand::SeedableRng;
    let mut samples = Vec::new();
    for &side in sides {
        let grid = survey_grid(side)?;
        for &seed in seeds {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = crate::dynamics::random_smooth_field(&grid, &mut rng);
            let rows = strichartz_measure(&u, m, &dyadic_times(side, -3, 2), ds)?;
            samples.push(StrichartzSample { side, seed, rows });
        }
    }
    let constant = samples.iter().flat_map(|s| s.rows.iter().map(|r| r.normalized)).fold(0.0, f64::max);
    Ok(StrichartzSurvey { samples, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propagate_basics() {
        let g = TorusGrid::new(10.0, 32).unwrap();
        let u = gaussian_bump(&g, 1.0);
        assert_eq!(propagate(&u, 0.0).coeffs(), u.coeffs());
        let v = propagate(&u, 3.7);
        assert!((v.norm_l2() - u.norm_l2()).abs() < 1e-13 * u.norm_l2());
        let w = SpectralField::plane_wave(&g, [2, -1], Complex64::new(1.0, 0.0)).unwrap();
        let idx = g.index_of([2, -1]).unwrap();
        let expect = w.coeffs()[idx] * Complex64::from_polar(1.0, -2.0 * g.lambda(idx));
        let got = propagate(&w, 2.0);
        assert!((got.coeffs()[idx] - expect).norm() < 1e-15 * expect.norm());
        assert_eq!(got.coeffs().iter().filter(|c| **c != ZERO).count(), 1);
    }

    #[test]
    fn kernel_methods_agree() {
        let g = TorusGrid::new(30.0, 64).unwrap();
        for (k, t) in [(0, 0.0), (0, 4.5), (1, 9.0)] {
            let phys = kernel(&g, k, t).to_physical();
            for p in [0usize, 17, 64 * 5 + 3, 64 * 40 + 31] {
                let d = kernel_direct(&g, k, t, g.point(p));
                assert!((phys.values()[p] - d).norm() < 1e-10, "k {k} t {t} p {p}");
            }
        }
    }

    #[test]
    fn padded_sup_matches_direct_sum() {
        let g = TorusGrid::new(30.0, 64).unwrap();
        let (s, x) = padded_sup(&kernel(&g, 0, 6.0), 4);
        assert!((kernel_direct(&g, 0, 6.0, x).norm() - s).abs() < 1e-10);
        assert!(s >= kernel(&g, 0, 6.0).to_physical().max_abs() - 1e-12);
        assert_eq!(padded_sup(&SpectralField::zeros(&g), 4).0, 0.0);
    }

    #[test]
    fn kernel_at_time_zero_is_shell_measure() {
        let g = TorusGrid::new(40.0, 128).unwrap();
        for k in [0, 1] {
            let (s, x) = padded_sup(&kernel(&g, k, 0.0), 2);
            assert!((s - shell_measure(&g, k)).abs() < 1e-12 * s);
            assert_eq!(x, [0.0, 0.0]);
        }
    }

    #[test]
    fn window_validation() {
        let g = TorusGrid::new(20.0, 32).unwrap();
        assert!(matches!(kernel_decay_fit(&g, 0, TimeWindow::new(1.0, 4.0, 5), 1), Err(Error::InsufficientData(_))));
        assert!(matches!(kernel_decay_fit(&g, 0, TimeWindow::new(1.0, 200.0, 8), 1), Err(Error::InvalidArgument(_))));
        let w = TimeWindow::new(2.0, 32.0, 5).times();
        assert!((w[0] - 2.0).abs() < 1e-12 && (w[4] - 32.0).abs() < 1e-12 && (w[2] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_has_zero_series() {
        let g = TorusGrid::new(20.0, 32).unwrap();
        let z = SpectralField::zeros(&g);
        assert!(x_norm_series(&z, 2, &[1.0, 2.0]).iter().all(|v| *v == 0.0));
        let rows = strichartz_measure(&z, 2, &[1.0, 4.0], 0.1).unwrap();
        assert!(rows.iter().all(|r| r.s == 0.0));
        assert!(matches!(z_decay_fit(&z, 2, TimeWindow::new(1.0, 10.0, 8)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn strichartz_is_nondecreasing() {
        let g = TorusGrid::new(8.0, 32).unwrap();
        let u = gaussian_bump(&g, 0.8);
        let times = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        let rows = strichartz_measure(&u, 2, &times, 0.05).unwrap();
        assert_eq!(rows[0].s, 0.0);
        for w in rows.windows(2) {
            assert!(w[1].s >= w[0].s);
        }
    }

    #[test]
    fn bump_spreads_outward() {
        let g = TorusGrid::new(64.0, 128).unwrap();
        let u = gaussian_bump(&g, 0.7);
        let peak = |t: f64| {
            weight_profile(&u, t)
                .into_iter()
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                .0
        };
        let (p1, p2, p3) = (peak(0.0), peak(6.0), peak(24.0));
        assert!(p1 < p2 && p2 < p3, "{p1} {p2} {p3}");
    }
}
