//! Torus grid, discrete Fourier transform and Fourier multipliers.
//!
//! Fields live on the square torus `(R/RZ)^2` sampled at `n x n` points
//! `x_j = j R / n`. Fourier coefficients are indexed by the lattice
//! `xi = 2 pi m / R`, with `m` stored in FFT order. Transforms follow the
//! integral convention
//!
//! ```text
//! u_hat(xi) = \int u(x) e^{-i x.xi} dx      u(x) = R^{-2} sum_xi u_hat(xi) e^{i x.xi}
//! ```
//!
//! so the constant function `1` has `u_hat(0) = R^2` and Parseval reads
//! `||u||_{L^2}^2 = R^{-2} sum |u_hat|^2`. With this convention a product
//! `fg` has coefficients `R^{-2} (f_hat * g_hat)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

struct GridData {
    side: f64,
    n: usize,
    modes: Vec<[i64; 2]>,
    freqs: Vec<[f64; 2]>,
    abs: Vec<f64>,
    lambda: Vec<f64>,
    dealias: Vec<bool>,
    truncation: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Square torus of side `R` sampled on an `n x n` grid.
///
/// Cloning is cheap; all clones share the same precomputed tables and FFT
/// plans, which are immutable.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridData>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("side", &self.inner.side)
            .field("n", &self.inner.n)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.side == other.inner.side)
    }
}

/// Signed frequency index for FFT position `i` on an `n`-point axis.
#[inline]
pub fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl TorusGrid {
    pub fn new(side: f64, n: usize) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side length must be positive, got {side}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution must be a power of two >= 8, got {n}"
            )));
        }
        let spacing = 2.0 * PI / side;
        let half = (n / 2) as i64;
        let keep = (n / 3) as i64;
        let len = n * n;
        let mut modes = Vec::with_capacity(len);
        let mut freqs = Vec::with_capacity(len);
        let mut abs = Vec::with_capacity(len);
        let mut lambda = Vec::with_capacity(len);
        let mut dealias = Vec::with_capacity(len);
        let mut truncation = Vec::with_capacity(len);
        for i1 in 0..n {
            let m1 = signed_mode(i1, n);
            for i2 in 0..n {
                let m2 = signed_mode(i2, n);
                let xi = [spacing * m1 as f64, spacing * m2 as f64];
                let a2 = xi[0] * xi[0] + xi[1] * xi[1];
                modes.push([m1, m2]);
                freqs.push(xi);
                abs.push(a2.sqrt());
                lambda.push((1.0 + a2).sqrt());
                dealias.push(m1.abs() <= keep && m2.abs() <= keep);
                truncation.push(m1 != -half && m2 != -half);
            }
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridData {
                side,
                n,
                modes,
                freqs,
                abs,
                lambda,
                dealias,
                truncation,
                forward,
                inverse,
            }),
        })
    }

    #[inline]
    pub fn side(&self) -> f64 {
        self.inner.side
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// Number of lattice points stored, `n^2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    /// Lattice spacing `2 pi / R`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.inner.side
    }

    /// Physical cell size `R / n`.
    #[inline]
    pub fn cell(&self) -> f64 {
        self.inner.side / self.inner.n as f64
    }

    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        self.inner.modes[idx]
    }

    #[inline]
    pub fn freq(&self, idx: usize) -> [f64; 2] {
        self.inner.freqs[idx]
    }

    /// `|xi|` at a flat index.
    #[inline]
    pub fn abs_freq(&self, idx: usize) -> f64 {
        self.inner.abs[idx]
    }

    /// `Lambda(xi) = sqrt(1 + |xi|^2)` at a flat index.
    #[inline]
    pub fn lambda(&self, idx: usize) -> f64 {
        self.inner.lambda[idx]
    }

    pub fn abs_table(&self) -> &[f64] {
        &self.inner.abs
    }

    pub fn lambda_table(&self) -> &[f64] {
        &self.inner.lambda
    }

    /// Whether the flat index survives the 2/3 dealiasing rule `|m_i| <= n/3`.
    #[inline]
    pub fn is_dealiased(&self, idx: usize) -> bool {
        self.inner.dealias[idx]
    }

    /// Whether the flat index lies off the Nyquist row/column.
    #[inline]
    pub fn in_truncation(&self, idx: usize) -> bool {
        self.inner.truncation[idx]
    }

    /// Flat index of lattice mode `m`, if it is representable (`|m_i| < n/2`).
    pub fn index_of(&self, m: [i64; 2]) -> Option<usize> {
        let n = self.inner.n as i64;
        let half = n / 2;
        if m[0].abs() >= half || m[1].abs() >= half {
            return None;
        }
        let i1 = m[0].rem_euclid(n) as usize;
        let i2 = m[1].rem_euclid(n) as usize;
        Some(i1 * self.inner.n + i2)
    }

    /// Flat index of `-m` for the mode stored at `idx` (Nyquist entries map to themselves).
    #[inline]
    pub fn reflect_index(&self, idx: usize) -> usize {
        let n = self.inner.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// Largest dealiased mode index `n/3`.
    pub fn dealias_limit(&self) -> i64 {
        (self.inner.n / 3) as i64
    }

    /// Largest `|xi|` on the truncated lattice.
    pub fn max_abs_freq(&self) -> f64 {
        let m = (self.inner.n / 2 - 1) as f64;
        std::f64::consts::SQRT_2 * m * self.spacing()
    }

    /// Flat indices of all dealiased modes.
    pub fn dealiased_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_dealiased(i)).collect()
    }

    /// Physical coordinates of grid point `j`.
    #[inline]
    pub fn point(&self, j: usize) -> [f64; 2] {
        let n = self.inner.n;
        let h = self.cell();
        [(j / n) as f64 * h, (j % n) as f64 * h]
    }

    /// Periodic distance `||x|| = d(x, (RZ)^2)` of grid point `j` from the origin.
    pub fn periodic_distance(&self, j: usize) -> f64 {
        let r = self.inner.side;
        let [x1, x2] = self.point(j);
        let d1 = x1.min(r - x1);
        let d2 = x2.min(r - x2);
        (d1 * d1 + d2 * d2).sqrt()
    }

    pub(crate) fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.inner.n;
        debug_assert_eq!(data.len(), n * n);
        let plan = if inverse { &self.inner.inverse } else { &self.inner.forward };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for ib in (0..n).step_by(B) {
        for jb in (ib..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                let start = if ib == jb { i + 1 } else { jb };
                for j in start..(jb + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Samples of a (possibly complex) function on the grid points.
#[derive(Clone, Debug)]
pub struct PhysicalField {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl PhysicalField {
    pub fn new(grid: &TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_real(grid: &TorusGrid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.point(j))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    /// Grid maximum of `|u|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Riemann sum `\int u dx`, exact for trigonometric polynomials on the grid.
    pub fn integral(&self) -> Complex64 {
        let h = self.grid.cell();
        self.values.iter().sum::<Complex64>() * (h * h)
    }

    pub fn norm_l2(&self) -> f64 {
        let h = self.grid.cell();
        (self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * h * h).sqrt()
    }

    pub fn forward(&self) -> SpectralField {
        fft_forward(self)
    }
}

/// Complex Fourier coefficients on the frequency lattice of a grid.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

/// Transforms physical samples to Fourier coefficients (integral convention).
pub fn fft_forward(u: &PhysicalField) -> SpectralField {
    let grid = u.grid.clone();
    let mut data = u.values.clone();
    grid.fft2(&mut data, false);
    let h = grid.cell();
    let scale = h * h;
    for c in data.iter_mut() {
        *c *= scale;
    }
    SpectralField { grid, coeffs: data }
}

/// Forward transform from raw samples, validating their count.
pub fn fft_forward_samples(grid: &TorusGrid, samples: &[Complex64]) -> Result<SpectralField> {
    Ok(fft_forward(&PhysicalField::new(grid, samples.to_vec())?))
}

/// Transforms Fourier coefficients back to grid samples.
pub fn fft_inverse(u: &SpectralField) -> PhysicalField {
    let grid = u.grid.clone();
    let mut data = u.coeffs.clone();
    grid.fft2(&mut data, true);
    let r = grid.side();
    let scale = 1.0 / (r * r);
    for c in data.iter_mut() {
        *c *= scale;
    }
    PhysicalField { grid, values: data }
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self { grid: grid.clone(), coeffs: vec![ZERO; grid.len()] }
    }

    pub fn from_coeffs(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: coeffs.len() });
        }
        Ok(Self { grid: grid.clone(), coeffs })
    }

    /// Builds a field from a rule evaluated on each lattice frequency.
    pub fn from_symbol(grid: &TorusGrid, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let coeffs = (0..grid.len()).map(|i| f(grid.freq(i))).collect();
        Self { grid: grid.clone(), coeffs }
    }

    /// Plane wave `amplitude * e^{i xi_m . x}`.
    pub fn plane_wave(grid: &TorusGrid, m: [i64; 2], amplitude: Complex64) -> Result<Self> {
        let idx = grid
            .index_of(m)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {m:?} not on the lattice")))?;
        let mut out = Self::zeros(grid);
        let r = grid.side();
        out.coeffs[idx] = amplitude * (r * r);
        Ok(out)
    }

    /// Real cosine mode `amplitude * cos(xi_m . x)`.
    pub fn cosine(grid: &TorusGrid, m: [i64; 2], amplitude: f64) -> Result<Self> {
        let half = Complex64::new(0.5 * amplitude, 0.0);
        let a = Self::plane_wave(grid, m, half)?;
        let b = Self::plane_wave(grid, [-m[0], -m[1]], half)?;
        Ok(a.add(&b))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, m: [i64; 2]) -> Complex64 {
        self.grid.index_of(m).map_or(ZERO, |i| self.coeffs[i])
    }

    pub fn to_physical(&self) -> PhysicalField {
        fft_inverse(self)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Mean value `u_hat(0) / R^2`.
    pub fn mean(&self) -> Complex64 {
        let r = self.grid.side();
        self.coeffs[0] / (r * r)
    }

    /// Coefficient-wise product with a real symbol evaluated on the lattice.
    pub fn map_indexed(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(i, &c)| f(i, c)).collect();
        Self { grid: self.grid.clone(), coeffs }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_indexed(|_, c| c * s)
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        self.map_indexed(|_, c| c * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert!(self.grid == other.grid);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self { grid: self.grid.clone(), coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert!(self.grid == other.grid);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self { grid: self.grid.clone(), coeffs }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: Complex64, other: &Self) {
        debug_assert!(self.grid == other.grid);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// Zeroes every coefficient outside the 2/3 dealiasing window.
    pub fn dealias(&mut self) {
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if !self.grid.is_dealiased(i) {
                *c = ZERO;
            }
        }
    }

    pub fn dealiased(mut self) -> Self {
        self.dealias();
        self
    }

    /// Whether all coefficients outside the dealiasing window vanish.
    pub fn is_dealiased(&self) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, c)| self.grid.is_dealiased(i) || *c == ZERO)
    }

    /// Coefficients of the physical complex conjugate: `conj(u_hat(-xi))`.
    pub fn conj_reflect(&self) -> Self {
        let n = self.grid.n();
        let mut coeffs = vec![ZERO; self.coeffs.len()];
        for i1 in 0..n {
            let j1 = (n - i1) % n;
            for i2 in 0..n {
                let j2 = (n - i2) % n;
                coeffs[i1 * n + i2] = self.coeffs[j1 * n + j2].conj();
            }
        }
        Self { grid: self.grid.clone(), coeffs }
    }

    /// Projects onto real-valued fields: `(u + conj_reflect(u)) / 2`.
    pub fn real_part(&self) -> Self {
        self.add(&self.conj_reflect()).scale(0.5)
    }

    /// Physical imaginary part: `(u - conj_reflect(u)) / (2i)`.
    pub fn imag_part(&self) -> Self {
        self.sub(&self.conj_reflect()).scale_complex(Complex64::new(0.0, -0.5))
    }

    /// Largest violation of Hermitian symmetry `u_hat(-xi) = conj(u_hat(xi))`.
    pub fn hermitian_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.conj_reflect().coeffs.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// `||u||_{L^2}` via Parseval.
    pub fn norm_l2(&self) -> f64 {
        let r = self.grid.side();
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt() / r
    }

    /// `<u, v>_{L^2} = \int u conj(v)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let r = self.grid.side();
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum::<Complex64>() / (r * r)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn apply(&self, m: Multiplier) -> Self {
        apply_multiplier(m, self)
    }

    /// Multiplies by `e^{-i t Lambda(xi)}`.
    pub fn propagate(&self, t: f64) -> Self {
        let g = &self.grid;
        self.map_indexed(|i, c| c * Complex64::from_polar(1.0, -t * g.lambda(i)))
    }

    /// Pointwise product computed on the grid. Aliasing is the caller's concern.
    pub fn mul_physical(&self, other: &Self) -> Self {
        let a = self.to_physical();
        let b = other.to_physical();
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
        fft_forward(&PhysicalField { grid: self.grid.clone(), values })
    }
}

/// Named Fourier multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplier {
    /// `sqrt(1 + |xi|^2)`
    Lambda,
    /// `1 / sqrt(1 + |xi|^2)`
    LambdaInv,
    /// `|xi|`
    AbsGrad,
    /// `1 / |xi|`, zero at the origin
    AbsGradInv,
    /// `i xi_1 / |xi|`, zero at the origin
    Riesz1,
    /// `i xi_2 / |xi|`, zero at the origin
    Riesz2,
    /// `-1 / |xi|^2`, the inverse Laplacian; zero at the origin
    PoissonInverse,
    /// `i xi_1`
    Deriv1,
    /// `i xi_2`
    Deriv2,
}

impl Multiplier {
    pub fn symbol(self, xi: [f64; 2]) -> Complex64 {
        let a2 = xi[0] * xi[0] + xi[1] * xi[1];
        let a = a2.sqrt();
        let re = |v: f64| Complex64::new(v, 0.0);
        let im = |v: f64| Complex64::new(0.0, v);
        match self {
            Multiplier::Lambda => re((1.0 + a2).sqrt()),
            Multiplier::LambdaInv => re(1.0 / (1.0 + a2).sqrt()),
            Multiplier::AbsGrad => re(a),
            Multiplier::AbsGradInv if a == 0.0 => ZERO,
            Multiplier::AbsGradInv => re(1.0 / a),
            Multiplier::Riesz1 | Multiplier::Riesz2 if a == 0.0 => ZERO,
            Multiplier::Riesz1 => im(xi[0] / a),
            Multiplier::Riesz2 => im(xi[1] / a),
            Multiplier::PoissonInverse if a2 == 0.0 => ZERO,
            Multiplier::PoissonInverse => re(-1.0 / a2),
            Multiplier::Deriv1 => im(xi[0]),
            Multiplier::Deriv2 => im(xi[1]),
        }
    }

    pub fn riesz(j: usize) -> Self {
        if j == 0 {
            Multiplier::Riesz1
        } else {
            Multiplier::Riesz2
        }
    }

    pub fn deriv(j: usize) -> Self {
        if j == 0 {
            Multiplier::Deriv1
        } else {
            Multiplier::Deriv2
        }
    }
}

pub fn apply_multiplier(m: Multiplier, u: &SpectralField) -> SpectralField {
    let g = u.grid.clone();
    u.map_indexed(|i, c| c * m.symbol(g.freq(i)))
}

/// Solves `Delta phi = rho` with `phi_hat(0) = 0`.
pub fn poisson_solve(rho: &SpectralField) -> Result<SpectralField> {
    let mean = rho.mean();
    let rms = rho.norm_l2() / rho.grid.side();
    if mean.norm() > 1e-12 * rms.max(f64::MIN_POSITIVE) {
        return Err(Error::NonzeroMean { mean: mean.norm() });
    }
    Ok(apply_multiplier(Multiplier::PoissonInverse, rho))
}
