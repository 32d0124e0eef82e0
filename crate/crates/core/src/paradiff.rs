//! Weyl paradifferential operators on the torus.
//!
//! ```text
//! F(T_a f)(xi) = R^{-2} sum_eta phi_{<=c}(|xi - eta| / |xi + eta|) F_x a(xi - eta, (xi + eta)/2) f_hat(eta)
//! ```
//!
//! with the cutoff exponent `c = -10` by default and the weight taken as zero
//! when `xi + eta = 0`. With this normalization `T_1` is the identity on
//! mean-zero fields.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lp::{cutoff_le, project, Band};
use crate::spectral::{fft_forward, PhysicalField, SpectralField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest grid for dense operator assembly.
pub const DENSE_LIMIT: usize = 32;

/// Default cutoff exponent of the paraproduct weight.
pub const DEFAULT_OFFSET: i32 = -10;

pub type ZetaFn = Arc<dyn Fn([f64; 2]) -> Complex64 + Send + Sync>;

/// `c(x) p(zeta)`; `p = None` means `p = 1`.
#[derive(Clone)]
pub struct SymbolTerm {
    pub coeff: SpectralField,
    pub zeta: Option<ZetaFn>,
}

/// `a(x, zeta) = sum_terms c_k(x) p_k(zeta)`, stored through the x-Fourier
/// coefficients of each `c_k`.
#[derive(Clone)]
pub struct Symbol {
    terms: Vec<SymbolTerm>,
    real: bool,
    conj_symmetric: bool,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("terms", &self.terms.len())
            .field("real", &self.real)
            .field("conj_symmetric", &self.conj_symmetric)
            .finish()
    }
}

impl Symbol {
    /// `real`: `a` is real valued. `conj_symmetric`: `a(x, -zeta) = conj(a(x, zeta))`.
    pub fn new(terms: Vec<SymbolTerm>, real: bool, conj_symmetric: bool) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidArgument("symbol needs at least one term".into()));
        };
        for t in &terms[1..] {
            first.coeff.same_grid(&t.coeff)?;
        }
        Ok(Self { terms, real, conj_symmetric })
    }

    /// `a = a(x)`.
    pub fn function(a: SpectralField) -> Self {
        let real = a.hermitian_defect() <= 1e-14 * a.max_abs_coeff();
        Self { terms: vec![SymbolTerm { coeff: a, zeta: None }], real, conj_symmetric: real }
    }

    /// `a = 1`.
    pub fn one(grid: &TorusGrid) -> Self {
        Self::function(constant(grid, 1.0))
    }

    /// `a = P(zeta)`.
    pub fn multiplier(grid: &TorusGrid, p: impl Fn([f64; 2]) -> Complex64 + Send + Sync + 'static, real: bool, conj_symmetric: bool) -> Self {
        Self {
            terms: vec![SymbolTerm { coeff: constant(grid, 1.0), zeta: Some(Arc::new(p)) }],
            real,
            conj_symmetric,
        }
    }

    /// `a = v . zeta` for real fields `v_1, v_2`.
    pub fn dot_zeta(v: [SpectralField; 2]) -> Self {
        let [v1, v2] = v;
        let terms = vec![
            SymbolTerm { coeff: v1, zeta: Some(Arc::new(|z: [f64; 2]| Complex64::new(z[0], 0.0))) },
            SymbolTerm { coeff: v2, zeta: Some(Arc::new(|z: [f64; 2]| Complex64::new(z[1], 0.0))) },
        ];
        Self { terms, real: true, conj_symmetric: false }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.terms[0].coeff.grid()
    }

    pub fn terms(&self) -> &[SymbolTerm] {
        &self.terms
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn is_conj_symmetric(&self) -> bool {
        self.conj_symmetric
    }

    /// `F_x a(theta, zeta)` at the lattice index of `theta`.
    pub fn coeff_at(&self, idx: usize, zeta: [f64; 2]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let c = t.coeff.coeffs()[idx];
                if c == ZERO {
                    ZERO
                } else {
                    c * t.zeta.as_ref().map_or(Complex64::new(1.0, 0.0), |p| p(zeta))
                }
            })
            .sum()
    }

    /// Pointwise product `a(x, zeta) b(x, zeta)`; coefficients are multiplied on the grid.
    pub fn product(&self, other: &Symbol) -> Symbol {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let zeta: Option<ZetaFn> = match (&a.zeta, &b.zeta) {
                    (None, None) => None,
                    (Some(p), None) | (None, Some(p)) => Some(p.clone()),
                    (Some(p), Some(q)) => {
                        let (p, q) = (p.clone(), q.clone());
                        Some(Arc::new(move |z| p(z) * q(z)))
                    }
                };
                terms.push(SymbolTerm { coeff: a.coeff.mul_physical(&b.coeff), zeta });
            }
        }
        Symbol { terms, real: self.real && other.real, conj_symmetric: self.conj_symmetric && other.conj_symmetric }
    }

    fn active_thetas(&self) -> Vec<usize> {
        let g = self.grid();
        (0..g.len())
            .filter(|&i| g.in_truncation(i) && self.terms.iter().any(|t| t.coeff.coeffs()[i] != ZERO))
            .collect()
    }
}

fn constant(grid: &TorusGrid, c: f64) -> SpectralField {
    SpectralField::plane_wave(grid, [0, 0], Complex64::new(c, 0.0)).expect("zero mode")
}

/// Dense complex matrix acting on Fourier coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out.data[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j].conj();
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        (0..d).map(|i| self.data[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `diag(left) M diag(right)`.
    pub fn sandwich(&self, left: &[f64], right: &[f64]) -> Self {
        let d = self.dim;
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..d {
                out.data[i * d + j] *= left[i] * right[j];
            }
        }
        out
    }

    /// Spectral norm by power iteration on `M^* M`.
    pub fn operator_norm(&self) -> f64 {
        let d = self.dim;
        if self.max_abs() == 0.0 {
            return 0.0;
        }
        let adj = self.adjoint();
        let mut v: Vec<Complex64> = (0..d).map(|i| Complex64::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.91).cos())).collect();
        let mut est = 0.0;
        for _ in 0..300 {
            let w = adj.apply(&self.apply(&v));
            let nrm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            let next = nrm.sqrt();
            v = w.into_iter().map(|c| c / nrm).collect();
            if (next - est).abs() <= 1e-12 * next {
                est = next;
                break;
            }
            est = next;
        }
        est
    }
}

/// Paraproduct evaluator with cutoff `phi_{<= offset}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Paradiff {
    pub offset: i32,
}

impl Default for Paradiff {
    fn default() -> Self {
        Self { offset: DEFAULT_OFFSET }
    }
}

impl Paradiff {
    pub fn new(offset: i32) -> Self {
        Self { offset }
    }

    /// `phi_{<= offset}(|theta| / |sum|)`, zero when `sum = 0`.
    #[inline]
    pub fn weight(&self, theta: f64, sum: f64) -> f64 {
        if sum == 0.0 {
            0.0
        } else {
            cutoff_le(self.offset, theta / sum)
        }
    }

    /// Calls `visit(xi, eta, w F_x a(xi - eta, (xi + eta)/2) / R^2)` for every contributing pair.
    fn for_each_entry(&self, a: &Symbol, etas: &[usize], mut visit: impl FnMut(usize, usize, Complex64)) {
        let g = a.grid();
        let r2 = g.side() * g.side();
        let c = 4.0 / 3.0 * 2f64.powi(self.offset);
        let eta_max = etas.iter().map(|&e| g.abs_freq(e)).fold(0.0, f64::max);
        let theta_cap = if c < 1.0 { 2.0 * c * eta_max / (1.0 - c) } else { f64::INFINITY };
        let thetas: Vec<usize> = a.active_thetas().into_iter().filter(|&t| g.abs_freq(t) <= theta_cap * (1.0 + 1e-12)).collect();
        for &th in &thetas {
            let mt = g.mode(th);
            let xt = g.freq(th);
            let at = g.abs_freq(th);
            for &e in etas {
                let me = g.mode(e);
                let Some(xi) = g.index_of([me[0] + mt[0], me[1] + mt[1]]) else { continue };
                if !g.in_truncation(xi) {
                    continue;
                }
                let xe = g.freq(e);
                let s = [2.0 * xe[0] + xt[0], 2.0 * xe[1] + xt[1]];
                let w = self.weight(at, s[0].hypot(s[1]));
                if w == 0.0 {
                    continue;
                }
                let c = a.coeff_at(th, [0.5 * s[0], 0.5 * s[1]]);
                if c != ZERO {
                    visit(xi, e, c * (w / r2));
                }
            }
        }
    }

    /// `T_a f`.
    pub fn apply(&self, a: &Symbol, f: &SpectralField) -> Result<SpectralField> {
        a.terms[0].coeff.same_grid(f)?;
        let g = f.grid();
        let fc = f.coeffs();
        let etas: Vec<usize> = (0..g.len()).filter(|&i| g.in_truncation(i) && fc[i] != ZERO).collect();
        let mut out = vec![ZERO; g.len()];
        self.for_each_entry(a, &etas, |xi, e, k| out[xi] += k * fc[e]);
        SpectralField::from_coeffs(g, out)
    }

    /// Dense matrix of `T_a` in the lattice basis.
    pub fn matrix(&self, a: &Symbol) -> Result<DenseMatrix> {
        let g = a.grid();
        if g.n() > DENSE_LIMIT {
            return Err(Error::GridTooLarge { n: g.n(), limit: DENSE_LIMIT });
        }
        let etas: Vec<usize> = (0..g.len()).filter(|&i| g.in_truncation(i)).collect();
        let mut m = DenseMatrix::zeros(g.len());
        self.for_each_entry(a, &etas, |xi, e, k| {
            let v = m.get(xi, e) + k;
            m.set(xi, e, v)
        });
        Ok(m)
    }

    /// `H(f, g) = fg - T_f g - T_g f` with the product dealiased.
    pub fn remainder(&self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        f.same_grid(g)?;
        let fg = f.mul_physical(g).dealiased();
        let tf = self.apply(&Symbol::function(f.clone()), g)?;
        let tg = self.apply(&Symbol::function(g.clone()), f)?;
        Ok(fg.sub(&tf).sub(&tg))
    }

    /// `E(a_1, ..., a_n) = T_{a_1} ... T_{a_n} - T_{a_1 ... a_n}` as a dense matrix.
    pub fn composition_error(&self, symbols: &[&Symbol]) -> Result<DenseMatrix> {
        if !(2..=3).contains(&symbols.len()) {
            return Err(Error::InvalidArgument(format!("composition of {} symbols; expected 2 or 3", symbols.len())));
        }
        let mut chain = self.matrix(symbols[0])?;
        let mut prod = symbols[0].clone();
        for s in &symbols[1..] {
            chain = chain.matmul(&self.matrix(s)?);
            prod = prod.product(s);
        }
        Ok(chain.sub(&self.matrix(&prod)?))
    }
}

/// Diagonal of a frequency band projection in the lattice basis.
pub fn band_diagonal(grid: &TorusGrid, band: Band) -> Vec<f64> {
    (0..grid.len()).map(|i| band.weight(grid.abs_freq(i))).collect()
}

/// The modified energy and its distance to `||P_{>=0} U||_{H^N}^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuarticEnergy {
    /// `||P_{>=0} Lambda^N (X + i T_{sqrt(1 + rho)} Y)||^2`
    pub energy: f64,
    /// `||P_{>=0} U||_{H^N}^2`
    pub reference: f64,
    pub gap: f64,
}

fn high_lift(u: &SpectralField, order: f64) -> SpectralField {
    let g = u.grid().clone();
    let lifted = project(Band::Above(-1), u);
    lifted.map_indexed(|i, c| c * g.lambda(i).powf(order))
}

/// Evaluates the quartic energy of `U` with Sobolev order `N`.
///
/// The difference `D = i T_{sqrt(1 + rho) - 1} Y` is formed directly, and the
/// gap is `|2 Re <P Lambda^N U, P Lambda^N D> + ||P Lambda^N D||^2|`.
pub fn quartic_energy(u: &SpectralField, order: u32, para: &Paradiff) -> Result<QuarticEnergy> {
    let grid = u.grid().clone();
    let x = u.real_part();
    let y = u.imag_part();
    let rho = x.map_indexed(|i, c| c * grid.abs_freq(i) / grid.lambda(i)).to_physical();
    let h2 = crate::lp::norm_h(u, 2.0);
    if h2 > 0.1 {
        log::warn!("||U||_H2 = {h2:.3e} is not small; the quartic energy comparison is outside its regime");
    }
    let mut a = Vec::with_capacity(grid.len());
    for v in rho.values() {
        let r = v.re;
        if 1.0 + r <= 0.0 {
            return Err(Error::InvalidArgument(format!("density 1 + rho = {} is not positive", 1.0 + r)));
        }
        a.push(Complex64::new(r / ((1.0 + r).sqrt() + 1.0), 0.0));
    }
    let a_minus_one = fft_forward(&PhysicalField::new(&grid, a)?);
    let d = para.apply(&Symbol::function(a_minus_one), &y)?.scale_complex(Complex64::new(0.0, 1.0));
    let n = order as f64;
    let pu = high_lift(u, n);
    let pd = high_lift(&d, n);
    let reference = pu.norm_l2().powi(2);
    let cross = 2.0 * pu.inner(&pd).re + pd.norm_l2().powi(2);
    Ok(QuarticEnergy { energy: reference + cross, reference, gap: cross.abs() })
}

/// Two-scale state of size `s`: density `rho = s cos(x_1 2 pi / R)` and a
/// velocity packet `Y = s cos(K x_1 2 pi / R) (1 + cos(x_1 2 pi / R))`.
///
/// Carrier and envelope are separated by a factor `K`, so the default
/// paraproduct cutoff sees the envelope as a low-frequency coefficient.
pub fn two_scale_state(grid: &TorusGrid, s: f64, carrier: i64) -> Result<SpectralField> {
    if carrier < 2 || grid.index_of([carrier + 1, 0]).is_none() {
        return Err(Error::InvalidArgument(format!("carrier mode {carrier} does not fit on an n = {} grid", grid.n())));
    }
    let k0 = 2.0 * std::f64::consts::PI / grid.side();
    let k = carrier as f64 * k0;
    let rho = PhysicalField::from_fn(grid, |x| Complex64::new(s * (k0 * x[0]).cos(), 0.0));
    let y = PhysicalField::from_fn(grid, |x| Complex64::new(s * (k * x[0]).cos() * (1.0 + (k0 * x[0]).cos()), 0.0));
    let g = grid.clone();
    let x = fft_forward(&rho).map_indexed(|i, c| {
        let a = g.abs_freq(i);
        if a == 0.0 {
            ZERO
        } else {
            c * g.lambda(i) / a
        }
    });
    let y = fft_forward(&y);
    Ok(x.add(&y.scale_complex(Complex64::new(0.0, 1.0))))
}

/// `E(t)` along a sequence of unknowns.
pub fn quartic_energy_series(unknowns: &[SpectralField], order: u32, para: &Paradiff) -> Result<Vec<f64>> {
    unknowns.iter().map(|u| quartic_energy(u, order, para).map(|q| q.energy)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{band_range, project_k};
    use crate::spectral::Multiplier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: &TorusGrid, seed: u64, mean_zero: bool) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut u = fft_forward(&PhysicalField::from_real(grid, &v).unwrap());
        for i in 0..grid.len() {
            if !grid.in_truncation(i) {
                u.coeffs_mut()[i] = ZERO;
            }
        }
        if mean_zero {
            u.coeffs_mut()[0] = ZERO;
        }
        u
    }

    fn close(a: &SpectralField, b: &SpectralField, tol: f64) -> bool {
        a.sub(b).max_abs_coeff() <= tol * a.max_abs_coeff().max(b.max_abs_coeff()).max(1e-300)
    }

    #[test]
    fn identity_symbol() {
        let g = TorusGrid::new(7.0, 16).unwrap();
        let f = random(&g, 1, true);
        for off in [-10, -5, -2] {
            let t = Paradiff::new(off).apply(&Symbol::one(&g), &f).unwrap();
            assert!(close(&t, &f, 1e-13));
        }
        // the zero mode is dropped
        let c = SpectralField::plane_wave(&g, [0, 0], Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(Paradiff::default().apply(&Symbol::one(&g), &c).unwrap().max_abs_coeff(), 0.0);
    }

    #[test]
    fn multiplier_symbol_is_fourier_multiplier() {
        let g = TorusGrid::new(5.0, 16).unwrap();
        let f = random(&g, 2, true);
        let p = Symbol::multiplier(&g, |z| Complex64::new((1.0 + z[0] * z[0] + z[1] * z[1]).sqrt(), 0.0), true, true);
        for off in [-10, -3] {
            let t = Paradiff::new(off).apply(&p, &f).unwrap();
            assert!(close(&t, &f.apply(Multiplier::Lambda), 1e-12));
        }
    }

    #[test]
    fn constant_coefficient() {
        let g = TorusGrid::new(5.0, 16).unwrap();
        let f = random(&g, 3, true);
        let c = Symbol::function(constant(&g, 2.5));
        let t = Paradiff::default().apply(&c, &f).unwrap();
        assert!(close(&t, &f.scale(2.5), 1e-13));
        let tc = Paradiff::default().apply(&Symbol::function(f.clone()), &constant(&g, 2.5)).unwrap();
        assert_eq!(tc.max_abs_coeff(), 0.0);
        let h = Paradiff::default().remainder(&constant(&g, 2.5), &f.clone().dealiased()).unwrap();
        assert!(h.max_abs_coeff() < 1e-12 * f.max_abs_coeff());
    }

    #[test]
    fn real_symbols_are_self_adjoint() {
        let g = TorusGrid::new(6.0, 16).unwrap();
        let a = Symbol::function(random(&g, 4, false).dealiased());
        assert!(a.is_real());
        for off in [-10, -2] {
            let m = Paradiff::new(off).matrix(&a).unwrap();
            assert!(m.sub(&m.adjoint()).max_abs() <= 1e-12 * m.max_abs());
        }
        let va = Symbol::dot_zeta([random(&g, 5, true).dealiased(), random(&g, 6, true).dealiased()]);
        let m = Paradiff::new(-2).matrix(&va).unwrap();
        assert!(m.sub(&m.adjoint()).max_abs() <= 1e-12 * m.max_abs());
    }

    #[test]
    fn conj_symmetric_symbols_preserve_reality() {
        let g = TorusGrid::new(6.0, 16).unwrap();
        let v = [random(&g, 7, true).dealiased(), random(&g, 8, true).dealiased()];
        let iv = Symbol::new(
            vec![
                SymbolTerm { coeff: v[0].clone(), zeta: Some(Arc::new(|z: [f64; 2]| Complex64::new(0.0, z[0]))) },
                SymbolTerm { coeff: v[1].clone(), zeta: Some(Arc::new(|z: [f64; 2]| Complex64::new(0.0, z[1]))) },
            ],
            false,
            true,
        )
        .unwrap();
        let f = random(&g, 9, true);
        let t = Paradiff::new(-2).apply(&iv, &f).unwrap();
        assert!(t.max_abs_coeff() > 0.0);
        assert!(t.hermitian_defect() <= 1e-12 * t.max_abs_coeff());
    }

    #[test]
    fn output_band_ignores_low_input() {
        let g = TorusGrid::new(6.0, 32).unwrap();
        let a = Symbol::function(random(&g, 10, false));
        let f = random(&g, 11, true);
        for off in [-10, -5] {
            let p = Paradiff::new(off);
            for k in band_range(&g) {
                let low = project(Band::AtMost(k - 2), &f);
                let out = project_k(k, &p.apply(&a, &low).unwrap());
                assert!(out.max_abs_coeff() <= 1e-13 * f.max_abs_coeff(), "k = {k}, offset = {off}");
            }
        }
    }

    #[test]
    fn low_frequency_coefficient_acts_by_multiplication() {
        // cutoff -2 and a gap of 4 bands keeps the weight at one on the relevant pairs
        let g = TorusGrid::new(6.0, 32).unwrap();
        let a = random(&g, 12, false);
        let f = random(&g, 13, true).dealiased();
        let p = Paradiff::new(-2);
        let mut nontrivial = 0;
        for k in band_range(&g) {
            let low = project(Band::AtMost(k - 4), &a);
            if low.coeffs().iter().skip(1).any(|c| *c != ZERO) {
                nontrivial += 1;
            }
            let lhs = project_k(k, &p.apply(&Symbol::function(low.clone()), &f).unwrap());
            let rhs = project_k(k, &low.mul_physical(&f));
            assert!(lhs.sub(&rhs).max_abs_coeff() <= 1e-12 * rhs.max_abs_coeff().max(1e-300), "k = {k}");
        }
        assert!(nontrivial > 0);
        // default cutoff with the 20-band gap
        let p = Paradiff::default();
        for k in band_range(&g) {
            let low = project(Band::AtMost(k - 20), &a);
            let lhs = project_k(k, &p.apply(&Symbol::function(low.clone()), &f).unwrap());
            let rhs = project_k(k, &low.mul_physical(&f));
            assert!(lhs.sub(&rhs).max_abs_coeff() <= 1e-12 * rhs.max_abs_coeff().max(1e-300));
        }
    }

    #[test]
    fn remainder_is_symmetric_and_high_high() {
        let g = TorusGrid::new(6.0, 32).unwrap();
        let f = random(&g, 14, false).dealiased();
        let h = random(&g, 15, false).dealiased();
        let p = Paradiff::default();
        let a = p.remainder(&f, &h).unwrap();
        let b = p.remainder(&h, &f).unwrap();
        assert!(close(&a, &b, 1e-13));
        for k in band_range(&g) {
            let lhs = project_k(k, &a);
            let rhs = project_k(k, &p.remainder(&project(Band::Above(k - 20), &f), &project(Band::Above(k - 20), &h)).unwrap());
            assert!(close(&lhs, &rhs, 1e-12));
        }
    }

    #[test]
    fn composition_identities() {
        let g = TorusGrid::new(6.0, 16).unwrap();
        let a = Symbol::function(random(&g, 16, false).dealiased());
        let b = Symbol::dot_zeta([random(&g, 17, true).dealiased(), random(&g, 18, true).dealiased()]);
        let one = Symbol::one(&g);
        for off in [-10, -2] {
            let p = Paradiff::new(off);
            let ta = p.matrix(&a).unwrap();
            let tb = p.matrix(&b).unwrap();
            // with cutoff -10 on this grid T_b vanishes; tolerances are absolute against O(1) entries
            let scale = ta.max_abs().max(1.0) * tb.max_abs().max(1.0);
            assert!(p.composition_error(&[&a, &one]).unwrap().max_abs() <= 1e-12 * ta.max_abs().max(1.0));
            assert!(p.composition_error(&[&one, &b]).unwrap().max_abs() <= 1e-12 * tb.max_abs().max(1.0));
            let comm = ta.matmul(&tb).sub(&tb.matmul(&ta));
            let diff = p.composition_error(&[&a, &b]).unwrap().sub(&p.composition_error(&[&b, &a]).unwrap());
            assert!(comm.sub(&diff).max_abs() <= 1e-12 * scale);
        }
        assert!(matches!(
            Paradiff::default().composition_error(&[&a]),
            Err(Error::InvalidArgument(_))
        ));
        let big = TorusGrid::new(6.0, 64).unwrap();
        assert!(matches!(Paradiff::default().matrix(&Symbol::one(&big)), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let mut m = DenseMatrix::zeros(3);
        m.set(0, 0, Complex64::new(2.0, 0.0));
        m.set(1, 1, Complex64::new(0.0, -5.0));
        m.set(2, 2, Complex64::new(1.0, 1.0));
        assert!((m.operator_norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn quartic_energy_trivial_cases() {
        let g = TorusGrid::new(8.0, 32).unwrap();
        let z = quartic_energy(&SpectralField::zeros(&g), 3, &Paradiff::default()).unwrap();
        assert_eq!((z.energy, z.gap), (0.0, 0.0));
        // rho = 0: U purely imaginary in physical space
        let y = random(&g, 19, true).dealiased().real_part().scale(1e-3);
        let u = y.scale_complex(Complex64::new(0.0, 1.0));
        let q = quartic_energy(&u, 3, &Paradiff::default()).unwrap();
        assert_eq!(q.gap, 0.0);
        assert_eq!(q.energy, q.reference);
    }

    fn smooth(g: &TorusGrid, seed: u64, decay: f64) -> SpectralField {
        let g2 = g.clone();
        random(g, seed, true).map_indexed(|i, c| c * (-(decay * g2.abs_freq(i)).powi(2)).exp()).dealiased()
    }

    #[test]
    fn composition_error_smooths_at_high_frequency() {
        let g = TorusGrid::new(6.0, 32).unwrap();
        let p = Paradiff::new(-2);
        let a = Symbol::dot_zeta([smooth(&g, 1, 0.7), smooth(&g, 2, 0.7)]);
        let b = Symbol::function(smooth(&g, 3, 0.7));
        let e = p.composition_error(&[&a, &b]).unwrap();
        let t = p.matrix(&a.product(&b)).unwrap();
        // the top band touches the truncation edge
        let bands: Vec<i32> = band_range(&g).collect();
        let ratios: Vec<f64> = bands[..bands.len() - 1]
            .iter()
            .map(|&k| {
                let d = band_diagonal(&g, Band::Exactly(k));
                e.sandwich(&d, &d).operator_norm() / t.sandwich(&d, &d).operator_norm()
            })
            .collect();
        assert!(ratios[0] > 0.5, "{ratios:?}");
        assert!(*ratios.last().unwrap() < 0.1 * ratios[0], "{ratios:?}");
    }

    // max over bands and seeds measured at 1.307e-2
    const BOUND_CONSTANT: f64 = 1.4e-2;

    #[test]
    fn band_boundedness_regression() {
        let g = TorusGrid::new(6.0, 32).unwrap();
        let p = Paradiff::new(-2);
        let a = Symbol::dot_zeta([smooth(&g, 1, 0.7), smooth(&g, 2, 0.7)]);
        let mut worst: f64 = 0.0;
        for seed in 100..105 {
            let f = random(&g, seed, true).dealiased();
            let tf = p.apply(&a, &f).unwrap();
            for k in band_range(&g) {
                let lhs = project_k(k, &tf).norm_l2();
                let rhs = project(Band::Range(k - 2, k + 2), &f).norm_l2() * 2f64.powi(k.max(0));
                worst = worst.max(lhs / rhs);
            }
        }
        assert!(worst > 0.0 && worst <= BOUND_CONSTANT, "{worst}");
    }

    #[test]
    fn quartic_gap_is_cubic_on_two_scale_state() {
        // the carrier must exceed about 400 modes for the -10 cutoff to see the envelope
        let g = TorusGrid::new(785.0, 1024).unwrap();
        let scales = [1e-2, 3e-3, 1e-3, 3e-4];
        let gaps: Vec<f64> = scales
            .iter()
            .map(|&s| quartic_energy(&two_scale_state(&g, s, 500).unwrap(), 7, &Paradiff::default()).unwrap().gap)
            .collect();
        let fit = crate::fit::loglog_fit(&scales, &gaps).unwrap();
        assert!((fit.slope - 3.0).abs() < 0.05, "{}", fit.slope);
    }
}
