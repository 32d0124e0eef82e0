//! Littlewood-Paley cutoffs, physical-space localizers, and the `H^N`, `X`
//! and `Z` norms.
//!
//! The radial bump `phi` equals 1 on `|r| <= 3/4`, vanishes for `|r| >= 4/3`
//! and interpolates with the quintic smoothstep in between. Dyadic pieces are
//! `phi_k(r) = phi(r / 2^k) - phi(r / 2^{k-1})` and `phi_{<=k}(r) = phi(r / 2^k)`.
//! With this transition window `phi_k` and `phi_{k'}` have disjoint supports
//! whenever `|k - k'| >= 2`.

use std::ops::RangeInclusive;

use num_complex::Complex64;

use crate::spectral::{fft_forward, PhysicalField, SpectralField, TorusGrid};

/// Radius below which the bump equals one.
pub const PLATEAU: f64 = 0.75;
/// Radius beyond which the bump vanishes.
pub const SUPPORT: f64 = 4.0 / 3.0;

/// Exponent of the spatial weight `(1 + ||x||)^{2/3}` in the `Z` norm.
pub const Z_WEIGHT_EXPONENT: f64 = 2.0 / 3.0;

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Radial bump profile.
#[inline]
pub fn bump(r: f64) -> f64 {
    let r = r.abs();
    if r <= PLATEAU {
        1.0
    } else if r >= SUPPORT {
        0.0
    } else {
        1.0 - smoothstep((r - PLATEAU) / (SUPPORT - PLATEAU))
    }
}

#[inline]
fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// `phi_{<=k}(r) = phi(r / 2^k)`.
#[inline]
pub fn cutoff_le(k: i32, r: f64) -> f64 {
    bump(r / pow2(k))
}

/// `phi_k(r) = phi(r / 2^k) - phi(r / 2^{k-1})`.
#[inline]
pub fn cutoff(k: i32, r: f64) -> f64 {
    bump(r / pow2(k)) - bump(r / pow2(k - 1))
}

/// Frequency bands used by the projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    /// `P_k`
    Exactly(i32),
    /// `P_{<=k}`
    AtMost(i32),
    /// `P_{>k} = 1 - P_{<=k}`
    Above(i32),
    /// `P_{[lo, hi]} = sum_{lo <= k <= hi} P_k`
    Range(i32, i32),
}

impl Band {
    pub fn weight(self, r: f64) -> f64 {
        match self {
            Band::Exactly(k) => cutoff(k, r),
            Band::AtMost(k) => cutoff_le(k, r),
            Band::Above(k) => 1.0 - cutoff_le(k, r),
            Band::Range(lo, hi) if lo > hi => 0.0,
            Band::Range(lo, hi) => cutoff_le(hi, r) - cutoff_le(lo - 1, r),
        }
    }
}

/// Dyadic indices `k` for which `phi_k` is nonzero at some nonzero lattice
/// frequency of the grid. Projections outside this range vanish identically.
pub fn band_range(grid: &TorusGrid) -> RangeInclusive<i32> {
    // phi_k(r) != 0 requires (PLATEAU / 2) 2^k < r < SUPPORT 2^k
    let lo = ((grid.spacing() / SUPPORT).log2().floor() as i32) + 1;
    let hi = ((grid.max_abs_freq() / (0.5 * PLATEAU)).log2().ceil() as i32) - 1;
    lo..=hi
}

/// Fourier multiplier by the band's cutoff.
pub fn project(band: Band, u: &SpectralField) -> SpectralField {
    let g = u.grid().clone();
    u.map_indexed(|i, c| {
        let w = band.weight(g.abs_freq(i));
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c * w
        }
    })
}

/// `P_k u`
pub fn project_k(k: i32, u: &SpectralField) -> SpectralField {
    project(Band::Exactly(k), u)
}

/// Largest `j` for which `Q_j` can be nonzero on the torus.
pub fn space_range(grid: &TorusGrid) -> RangeInclusive<i32> {
    let dmax = grid.side() / std::f64::consts::SQRT_2;
    let hi = ((dmax / (0.5 * PLATEAU)).log2().ceil() as i32).max(1);
    0..=hi
}

/// Weight of `Q_j` at periodic distance `d`: `phi_j(d)` for `j >= 1`, and
/// `phi(d)` for `j = 0` (which equals `1 - sum_{j>=1} phi_j`).
pub fn localizer_weight(j: i32, d: f64) -> f64 {
    if j <= 0 {
        if j == 0 {
            bump(d)
        } else {
            0.0
        }
    } else {
        cutoff(j, d)
    }
}

/// `Q_j u`: pointwise multiplication by the spatial cutoff at scale `2^j`.
pub fn localize(j: i32, u: &PhysicalField) -> PhysicalField {
    let grid = u.grid().clone();
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(p, &v)| v * localizer_weight(j, grid.periodic_distance(p)))
        .collect();
    PhysicalField::new(&grid, values).expect("same grid")
}

/// Sobolev and weighted-norm orders.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormParams {
    /// Sobolev order `N` of the energy norm.
    pub sobolev: u32,
    /// Order `M` of the `X` and `Z` norms.
    pub weight: u32,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { sobolev: 7, weight: 2 }
    }
}

impl NormParams {
    pub fn new(sobolev: u32, weight: u32) -> Self {
        let p = Self { sobolev, weight };
        p.warn_if_outside_regime();
        p
    }

    /// Whether `N >= M + 5`, the regime of the lifespan theorem.
    pub fn in_theorem_regime(&self) -> bool {
        self.sobolev >= self.weight + 5
    }

    pub fn warn_if_outside_regime(&self) {
        if !self.in_theorem_regime() {
            log::warn!(
                "N = {} < M + 5 = {}; norms are computed but the lifespan regime is not emulated",
                self.sobolev,
                self.weight + 5
            );
        }
    }
}

/// `||u||_{H^s} = (R^{-2} sum (1 + |xi|^2)^s |u_hat|^2)^{1/2}`.
pub fn norm_h(u: &SpectralField, s: f64) -> f64 {
    let g = u.grid();
    let r = g.side();
    let sum: f64 = u
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| g.lambda(i).powf(2.0 * s) * c.norm_sqr())
        .sum();
    sum.sqrt() / r
}

/// Grid maxima `||P_k u||_{L^inf}` for every band of the grid.
pub fn band_sup_norms(u: &SpectralField) -> Vec<(i32, f64)> {
    band_range(u.grid())
        .map(|k| (k, project_k(k, u).to_physical().max_abs()))
        .collect()
}

/// `||u||_X = sum_k 2^{M k^+} ||P_k u||_{L^inf}`, with sup norms evaluated
/// as grid maxima.
pub fn norm_x(u: &SpectralField, m: u32) -> f64 {
    band_sup_norms(u)
        .into_iter()
        .map(|(k, s)| pow2(m as i32 * k.max(0)) * s)
        .sum()
}

/// `sum_k 2^{k + M k^+} ||P_k u||_{L^2}`, the Bernstein majorant of the `X` norm.
pub fn x_bernstein_majorant(u: &SpectralField, m: u32) -> f64 {
    band_range(u.grid())
        .map(|k| pow2(k + m as i32 * k.max(0)) * project_k(k, u).norm_l2())
        .sum()
}

/// `||(1 + ||x||)^{2/3} Lambda^{M+2} u||_{L^2}` with the weight sampled at grid points.
pub fn norm_z(u: &SpectralField, m: u32) -> f64 {
    let g = u.grid();
    let s = (m + 2) as i32;
    let lifted = u.map_indexed(|i, c| c * g.lambda(i).powi(s));
    weighted_l2(&lifted.to_physical())
}

/// `||(1 + ||x||)^{2/3} u||_{L^2}` for grid samples.
pub fn weighted_l2(u: &PhysicalField) -> f64 {
    let g = u.grid();
    let h = g.cell();
    let sum: f64 = u
        .values()
        .iter()
        .enumerate()
        .map(|(p, v)| (1.0 + g.periodic_distance(p)).powf(2.0 * Z_WEIGHT_EXPONENT) * v.norm_sqr())
        .sum();
    (sum * h * h).sqrt()
}

/// `||P_k u||_{L^inf} / (2^k ||P_k u||_{L^2})`, or `None` when the band is empty.
pub fn bernstein_ratio(k: i32, u: &SpectralField) -> Option<f64> {
    let p = project_k(k, u);
    let l2 = p.norm_l2();
    if l2 == 0.0 {
        return None;
    }
    Some(p.to_physical().max_abs() / (pow2(k) * l2))
}

/// Grid samples weighted so that each `Q_j` piece is resolved; convenience for tests.
pub fn sum_localized(u: &PhysicalField) -> PhysicalField {
    let grid = u.grid().clone();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for j in space_range(&grid) {
        for (a, v) in acc.iter_mut().zip(localize(j, u).values()) {
            *a += v;
        }
    }
    PhysicalField::new(&grid, acc).expect("same grid")
}

/// Transforms a localized piece back to Fourier space.
pub fn localize_spectral(j: i32, u: &SpectralField) -> SpectralField {
    fft_forward(&localize(j, &u.to_physical()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fft_forward;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &TorusGrid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut u = fft_forward(&PhysicalField::from_real(grid, &v).unwrap());
        u.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        u
    }

    fn smooth_field(grid: &TorusGrid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..grid.len())
            .map(|i| {
                let a = (-grid.abs_freq(i).powi(2)).exp();
                Complex64::from_polar(a, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        SpectralField::from_coeffs(grid, coeffs).unwrap().real_part().dealiased()
    }

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(PLATEAU), 1.0);
        assert_eq!(bump(SUPPORT), 0.0);
        assert_eq!(bump(2.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=200 {
            let r = PLATEAU + (SUPPORT - PLATEAU) * i as f64 / 200.0;
            let b = bump(r);
            assert!((0.0..=1.0).contains(&b));
            assert!(b <= prev + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn partition_of_unity_on_lattice() {
        for (side, n) in [(8.0, 64), (4.0, 32), (100.0, 128)] {
            let g = TorusGrid::new(side, n).unwrap();
            for i in 1..g.len() {
                let r = g.abs_freq(i);
                let s: f64 = band_range(&g).map(|k| cutoff(k, r)).sum();
                assert!((s - 1.0).abs() < 1e-12, "r = {r}, sum = {s}");
            }
        }
    }

    #[test]
    fn plateau_mode_passes_one_shell() {
        // phi_k = 1 on [2/3, 3/4] 2^k; put |xi| = 0.7 there for k = 0
        let side = 2.0 * std::f64::consts::PI / 0.7;
        let g = TorusGrid::new(side, 16).unwrap();
        let w = SpectralField::cosine(&g, [1, 0], 1.0).unwrap();
        assert!(project_k(0, &w).sub(&w).norm_l2() < 1e-15);
        assert_eq!(project_k(1, &w).norm_l2(), 0.0);
        assert_eq!(project_k(-1, &w).norm_l2(), 0.0);
    }

    #[test]
    fn projections_sum_to_identity_and_separate() {
        let g = TorusGrid::new(8.0, 64).unwrap();
        let u = random_field(&g, 2);
        let mut acc = SpectralField::zeros(&g);
        for k in band_range(&g) {
            acc = acc.add(&project_k(k, &u));
        }
        assert!(acc.sub(&u).norm_l2() < 1e-12 * u.norm_l2());
        for k in band_range(&g) {
            for kp in band_range(&g) {
                if (k - kp).abs() >= 2 {
                    let pp = project_k(k, &project_k(kp, &u));
                    assert_eq!(pp.max_abs_coeff(), 0.0);
                }
            }
        }
    }

    #[test]
    fn projections_outside_range_vanish() {
        let g = TorusGrid::new(8.0, 32).unwrap();
        let u = random_field(&g, 4);
        let r = band_range(&g);
        assert_eq!(project_k(*r.start() - 1, &u).max_abs_coeff(), 0.0);
        assert_eq!(project_k(*r.end() + 1, &u).max_abs_coeff(), 0.0);
        assert!(project_k(*r.start(), &u).max_abs_coeff() > 0.0);
        assert!(project_k(*r.end(), &u).max_abs_coeff() > 0.0);
    }

    #[test]
    fn localizers_sum_to_identity() {
        let g = TorusGrid::new(16.0, 64).unwrap();
        let u = random_field(&g, 7).to_physical();
        let s = sum_localized(&u);
        let err = s.values().iter().zip(u.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn localizer_support_and_range() {
        let g = TorusGrid::new(64.0, 64).unwrap();
        let j = 3;
        // supported at ||x|| <= 2^{j-2}: phi_j vanishes below (3/8) 2^j
        let u = PhysicalField::from_fn(&g, |x| {
            let d1 = x[0].min(64.0 - x[0]);
            let d2 = x[1].min(64.0 - x[1]);
            if (d1 * d1 + d2 * d2).sqrt() <= 2.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert_eq!(localize(j, &u).max_abs(), 0.0);
        // a point at distance exactly 2^j = 8 gets weight phi_j(8) in (0, 1]
        let w = localizer_weight(j, 8.0);
        assert!(w > 0.0 && w <= 1.0);
        let expected = bump(1.0) - bump(2.0);
        assert_eq!(w, expected);
    }

    #[test]
    fn localizer_is_contraction() {
        let g = TorusGrid::new(32.0, 64).unwrap();
        let u = random_field(&g, 8).to_physical();
        for j in space_range(&g) {
            assert!(localize(j, &u).max_abs() <= u.max_abs() + 1e-15);
        }
    }

    #[test]
    fn norms_of_zero() {
        let g = TorusGrid::new(8.0, 32).unwrap();
        let z = SpectralField::zeros(&g);
        assert_eq!(norm_h(&z, 5.0), 0.0);
        assert_eq!(norm_x(&z, 3), 0.0);
        assert_eq!(norm_z(&z, 3), 0.0);
    }

    #[test]
    fn x_norm_of_two_shell_mode() {
        // single plane wave with |xi| = 2 exactly; it lies in shells 1 and 2
        let side = 2.0 * std::f64::consts::PI / 2.0;
        let g = TorusGrid::new(side, 32).unwrap();
        let amp = 0.3;
        let u = SpectralField::plane_wave(&g, [1, 0], Complex64::new(amp, 0.0)).unwrap();
        let m = 4;
        // oracle: evaluate the cutoff at |xi| = 2 directly
        let phi1 = bump(1.0) - bump(2.0);
        let phi2 = bump(0.5) - bump(1.0);
        assert!(phi1 > 0.0 && phi2 > 0.0);
        let expected = amp * (2f64.powi(m) * phi1 + 2f64.powi(2 * m) * phi2);
        assert!((norm_x(&u, m as u32) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn bernstein_ratio_is_stable_under_refinement() {
        let mut worst = Vec::new();
        for n in [32, 64, 128] {
            let g = TorusGrid::new(8.0, n).unwrap();
            let mut c: f64 = 0.0;
            for seed in 0..4 {
                let u = random_field(&g, seed);
                for k in band_range(&g) {
                    if let Some(b) = bernstein_ratio(k, &u) {
                        c = c.max(b);
                    }
                }
            }
            worst.push(c);
        }
        let lo = worst.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = worst.iter().cloned().fold(0.0, f64::max);
        assert!(hi < 2.0 * lo, "{worst:?}");
        assert!(hi < 2.0, "{worst:?}");
    }

    #[test]
    fn x_and_z_bounds_independent_of_side() {
        let m = 2;
        let mut cx: Vec<f64> = Vec::new();
        let mut cz: Vec<f64> = Vec::new();
        for side in [4.0, 8.0, 16.0] {
            let g = TorusGrid::new(side, 64).unwrap();
            let mut bx: f64 = 0.0;
            let mut bz: f64 = 0.0;
            for seed in 0..3 {
                let u = smooth_field(&g, seed);
                bx = bx.max(norm_x(&u, m) / x_bernstein_majorant(&u, m));
                bz = bz.max(norm_z(&u, m) / (side.powf(2.0 / 3.0) * norm_h(&u, (m + 2) as f64)));
            }
            cx.push(bx);
            cz.push(bz);
        }
        for c in [&cx, &cz] {
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(0.0, f64::max);
            assert!(hi <= 1.0 + 1e-12 || hi < 3.0 * lo, "{c:?}");
            assert!(hi < 3.0, "{c:?}");
        }
    }
}
