//! Quadratic normal form of the profile equation.
//!
//! Splitting `U` into `U_+ = U` and `U_- = conj(U)` turns the nonlinearity into
//!
//! ```text
//! N_hat(xi) = R^{-2} sum_{mu,nu} sum_{xi1 + xi2 = xi} i q_{mu nu}(xi1, xi2) U_mu_hat(xi1) U_nu_hat(xi2)
//! ```
//!
//! with `rho_hat = |xi| X_hat / Lambda`, `X_hat = (U_+ + U_-)/2`,
//! `v_j_hat = xi_j Y_hat (i/|xi|)`, `Y_hat = sum_nu nu U_nu_hat / (2i)`, hence
//!
//! ```text
//! q_{mu nu} = nu Lambda(xi) |xi1| (xi . xi2) / (4 Lambda(xi1) |xi| |xi2|)      from Lambda R_j(rho v_j)
//!           + mu nu |xi| (xi1 . xi2) / (8 |xi1| |xi2|)                           from i |nabla| |v|^2 / 2
//! ```
//!
//! and `q = 0` whenever one of `xi, xi1, xi2` vanishes. The profile equation
//! `V_t = -e^{it Lambda} N` then reads
//! `V_hat_t = R^{-2} sum e^{it Phi_{mu nu}} m_{mu nu} V_mu_hat V_nu_hat` with
//! `m_{mu nu} = -i q_{mu nu}` and `Phi_{mu nu} = Lambda(xi1 + xi2) - mu Lambda(xi1) - nu Lambda(xi2)`.
//!
//! All bilinear forms here are exact lattice pair sums restricted to the
//! dealiased window. The phase factors are applied on the `U` side,
//! `e^{it Phi} F G = e^{it Lambda(xi)} (e^{-i mu t Lambda} F)(e^{-i nu t Lambda} G)`,
//! so the multipliers themselves are time independent.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, Model, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::lp::Band;
use crate::spectral::{SpectralField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sign of a factor: `+` for `U`, `-` for its conjugate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const ALL: [Sign; 2] = [Sign::Plus, Sign::Minus];

    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// `F_+ = F`, `F_- = conj(F)`.
pub fn signed(f: &SpectralField, s: Sign) -> SpectralField {
    match s {
        Sign::Plus => f.clone(),
        Sign::Minus => f.conj_reflect(),
    }
}

#[inline]
fn lam(a2: f64) -> f64 {
    (1.0 + a2).sqrt()
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `Phi_{mu nu}(xi1, xi2) = Lambda(xi1 + xi2) - mu Lambda(xi1) - nu Lambda(xi2)`.
pub fn phase(mu: Sign, nu: Sign, xi1: [f64; 2], xi2: [f64; 2]) -> f64 {
    let xi = [xi1[0] + xi2[0], xi1[1] + xi2[1]];
    lam(dot(xi, xi)) - mu.value() * lam(dot(xi1, xi1)) - nu.value() * lam(dot(xi2, xi2))
}

/// `Phi_{mu nu rho}(xi1, xi2, xi3)`.
pub fn phase3(mu: Sign, nu: Sign, rho: Sign, xi1: [f64; 2], xi2: [f64; 2], xi3: [f64; 2]) -> f64 {
    let xi = [xi1[0] + xi2[0] + xi3[0], xi1[1] + xi2[1] + xi3[1]];
    lam(dot(xi, xi))
        - mu.value() * lam(dot(xi1, xi1))
        - nu.value() * lam(dot(xi2, xi2))
        - rho.value() * lam(dot(xi3, xi3))
}

/// The real factor `q_{mu nu}` with `m_{mu nu} = -i q_{mu nu}`.
pub fn q_factor(mu: Sign, nu: Sign, xi1: [f64; 2], xi2: [f64; 2]) -> f64 {
    let xi = [xi1[0] + xi2[0], xi1[1] + xi2[1]];
    let (a, a1, a2) = (dot(xi, xi).sqrt(), dot(xi1, xi1).sqrt(), dot(xi2, xi2).sqrt());
    if a == 0.0 || a1 == 0.0 || a2 == 0.0 {
        return 0.0;
    }
    let (l, l1) = (lam(a * a), lam(a1 * a1));
    nu.value() * l * a1 * dot(xi, xi2) / (4.0 * l1 * a * a2) + mu.value() * nu.value() * a * dot(xi1, xi2) / (8.0 * a1 * a2)
}

/// `m_{mu nu}(xi1, xi2)`.
pub fn multiplier(mu: Sign, nu: Sign, xi1: [f64; 2], xi2: [f64; 2]) -> Complex64 {
    Complex64::new(0.0, -q_factor(mu, nu, xi1, xi2))
}

/// Which bilinear multiplier a form uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    /// `m_{mu nu}`: the profile equation.
    Evolution,
    /// `m_{mu nu} / (i Phi_{mu nu})`: the boundary terms.
    Boundary,
}

/// Deliberate corruptions used by mutation tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None,
    /// Negates the `(+,-)` multiplier.
    FlipPlusMinus,
}

/// One summand `Form_{mu nu}(t)[F, G]`; `F`, `G` already carry their signs.
pub struct Term<'a> {
    pub mu: Sign,
    pub nu: Sign,
    pub f: &'a SpectralField,
    pub g: &'a SpectralField,
}

/// Coefficients below `DEFAULT_DROP_TOL * max|coeff|` are skipped in pair sums.
pub const DEFAULT_DROP_TOL: f64 = 1e-17;

/// Evaluator for the profile equation, boundary terms and bulk terms.
#[derive(Clone, Debug)]
pub struct NormalForm {
    grid: TorusGrid,
    coupling: f64,
    fault: Fault,
    drop_tol: f64,
}

impl NormalForm {
    pub fn new(grid: &TorusGrid) -> Self {
        Self { grid: grid.clone(), coupling: 1.0, fault: Fault::None, drop_tol: DEFAULT_DROP_TOL }
    }

    /// Matches the coupling of a [`Model`]; `0` makes every form vanish.
    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    /// `0` sums every pair exactly.
    pub fn with_drop_tolerance(mut self, tol: f64) -> Self {
        self.drop_tol = tol;
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    fn q(&self, mu: Sign, nu: Sign, xi1: [f64; 2], xi2: [f64; 2]) -> f64 {
        let q = self.coupling * q_factor(mu, nu, xi1, xi2);
        if self.fault == Fault::FlipPlusMinus && mu == Sign::Plus && nu == Sign::Minus {
            -q
        } else {
            q
        }
    }

    fn active(&self, f: &[Complex64]) -> Vec<usize> {
        let max = f.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let floor = self.drop_tol * max;
        (0..f.len())
            .filter(|&i| self.grid.is_dealiased(i) && f[i] != ZERO && f[i].norm() > floor)
            .collect()
    }

    /// `sum_terms Form_{mu nu}(t)[F, G]`, restricted to the dealiased window.
    pub fn form(&self, kind: FormKind, t: f64, terms: &[Term]) -> SpectralField {
        let g = &self.grid;
        let n = g.n() as i64;
        let lim = g.dealias_limit();
        let r2 = g.side() * g.side();
        let mut acc = vec![ZERO; g.len()];
        if self.coupling != 0.0 {
            for term in terms {
                let (mu, nu) = (term.mu, term.nu);
                let f = term.f.propagate(mu.value() * t);
                let h = term.g.propagate(nu.value() * t);
                let (fc, hc) = (f.coeffs(), h.coeffs());
                let fa = self.active(fc);
                let ha = self.active(hc);
                for &a in &fa {
                    let ma = g.mode(a);
                    let xa = g.freq(a);
                    let fa_c = fc[a];
                    for &b in &ha {
                        let mb = g.mode(b);
                        let m = [ma[0] + mb[0], ma[1] + mb[1]];
                        if m[0].abs() > lim || m[1].abs() > lim {
                            continue;
                        }
                        let o = (m[0].rem_euclid(n) * n + m[1].rem_euclid(n)) as usize;
                        let xb = g.freq(b);
                        let q = self.q(mu, nu, xa, xb);
                        if q == 0.0 {
                            continue;
                        }
                        // m = -i q;  m / (i Phi) = -q / Phi
                        let k = match kind {
                            FormKind::Evolution => Complex64::new(0.0, -q),
                            FormKind::Boundary => Complex64::new(-q / phase(mu, nu, xa, xb), 0.0),
                        };
                        acc[o] += k * fa_c * hc[b];
                    }
                }
            }
        }
        let out = SpectralField::from_coeffs(g, acc).expect("grid size").scale(1.0 / r2);
        out.propagate(-t)
    }

    /// `V_t` assembled from the multiplier table.
    pub fn assemble_dtv(&self, v: &SpectralField, t: f64) -> SpectralField {
        let vm = v.conj_reflect();
        let pick = |s: Sign| if s == Sign::Plus { v } else { &vm };
        let terms: Vec<Term> = pairs().map(|(mu, nu)| Term { mu, nu, f: pick(mu), g: pick(nu) }).collect();
        self.form(FormKind::Evolution, t, &terms)
    }

    /// The `(nu, rho)` piece of `d/dt V_sigma`, with `V_nu`, `V_rho` built from `v`.
    pub fn dtv_piece(&self, sigma: Sign, nu: Sign, rho: Sign, v: &SpectralField, t: f64) -> SpectralField {
        match sigma {
            Sign::Plus => {
                let (a, b) = (signed(v, nu), signed(v, rho));
                self.form(FormKind::Evolution, t, &[Term { mu: nu, nu: rho, f: &a, g: &b }])
            }
            Sign::Minus => {
                let (a, b) = (signed(v, nu.flip()), signed(v, rho.flip()));
                self.form(FormKind::Evolution, t, &[Term { mu: nu.flip(), nu: rho.flip(), f: &a, g: &b }])
                    .conj_reflect()
            }
        }
    }

    /// `W_{mu nu}(t)[F, G]`.
    pub fn boundary_form(&self, mu: Sign, nu: Sign, f: &SpectralField, g: &SpectralField, t: f64) -> SpectralField {
        self.form(FormKind::Boundary, t, &[Term { mu, nu, f, g }])
    }

    /// `W_{mu nu}(t)[V_mu, V_nu]`.
    pub fn boundary_term(&self, mu: Sign, nu: Sign, v: &SpectralField, t: f64) -> SpectralField {
        let (a, b) = (signed(v, mu), signed(v, nu));
        self.boundary_form(mu, nu, &a, &b, t)
    }

    /// `sum_{mu nu} W_{mu nu}(t)[V_mu, V_nu]`.
    pub fn boundary_total(&self, v: &SpectralField, t: f64) -> SpectralField {
        let vm = v.conj_reflect();
        let pick = |s: Sign| if s == Sign::Plus { v } else { &vm };
        let terms: Vec<Term> = pairs().map(|(mu, nu)| Term { mu, nu, f: pick(mu), g: pick(nu) }).collect();
        self.form(FormKind::Boundary, t, &terms)
    }

    /// `sum_{mu sigma} W_{mu sigma}[V_mu, dV_sigma] + sum_{sigma rho} W_{sigma rho}[dV_sigma, V_rho]`
    /// given `V` and `dV = V_t`.
    pub fn bulk_total(&self, v: &SpectralField, dv: &SpectralField, t: f64) -> SpectralField {
        let vm = v.conj_reflect();
        let dvm = dv.conj_reflect();
        let pv = |s: Sign| if s == Sign::Plus { v } else { &vm };
        let pd = |s: Sign| if s == Sign::Plus { dv } else { &dvm };
        let mut terms = Vec::with_capacity(8);
        for (a, b) in pairs() {
            terms.push(Term { mu: a, nu: b, f: pv(a), g: pd(b) });
            terms.push(Term { mu: a, nu: b, f: pd(a), g: pv(b) });
        }
        self.form(FormKind::Boundary, t, &terms)
    }

    /// `H^{mu nu rho sigma}_l = W_{mu sigma}[V_mu, P_l D^sigma_{nu rho}] + W_{sigma rho}[P_l D^sigma_{mu nu}, V_rho]`,
    /// where `D^sigma_{ab}` is the `(a, b)` piece of `d/dt V_sigma`.
    pub fn bulk_term(&self, signs: [Sign; 4], l: i32, v: &SpectralField, t: f64) -> SpectralField {
        let [mu, nu, rho, sigma] = signs;
        let d1 = crate::lp::project(Band::Exactly(l), &self.dtv_piece(sigma, nu, rho, v, t));
        let d2 = crate::lp::project(Band::Exactly(l), &self.dtv_piece(sigma, mu, nu, v, t));
        let (vmu, vrho) = (signed(v, mu), signed(v, rho));
        self.form(
            FormKind::Boundary,
            t,
            &[Term { mu, nu: sigma, f: &vmu, g: &d1 }, Term { mu: sigma, nu: rho, f: &d2, g: &vrho }],
        )
    }
}

/// The four sign pairs `(mu, nu)`.
pub fn pairs() -> impl Iterator<Item = (Sign, Sign)> {
    Sign::ALL.into_iter().flat_map(|a| Sign::ALL.into_iter().map(move |b| (a, b)))
}

/// `V_t` from the pseudo-spectral right-hand side, `-e^{it Lambda} N(e^{-it Lambda} V)`.
pub fn dtv_from_rhs(model: &Model, v: &SpectralField, t: f64) -> Result<SpectralField> {
    let u = v.propagate(t);
    Ok(model.nonlinearity(&u)?.scale(-1.0).propagate(-t))
}

/// Cumulative integrals `\int_{t_0}^{t_k} f` at every sample of a uniform
/// series, with fourth-order rules: composite Simpson on even counts, a
/// trailing 3/8 panel on odd counts and a four-point rule for the first interval.
pub fn cumulative_integral(h: f64, f: &[SpectralField]) -> Result<Vec<SpectralField>> {
    let k = f.len();
    if k < 5 {
        return Err(Error::InsufficientData(format!("need >= 5 samples, got {k}")));
    }
    let grid = f[0].grid().clone();
    let lin = |ws: &[(usize, f64)], s: f64| {
        let mut acc = SpectralField::zeros(&grid);
        for &(i, w) in ws {
            acc.axpy(Complex64::new(w * s, 0.0), &f[i]);
        }
        acc
    };
    let mut out = Vec::with_capacity(k);
    out.push(SpectralField::zeros(&grid));
    out.push(lin(&[(0, 9.0), (1, 19.0), (2, -5.0), (3, 1.0)], h / 24.0));
    // simpson[j] = integral over [0, 2j h]
    let mut simpson = vec![SpectralField::zeros(&grid)];
    for j in 1..=(k - 1) / 2 {
        let mut s = simpson[j - 1].clone();
        s.axpy(Complex64::new(1.0, 0.0), &lin(&[(2 * j - 2, 1.0), (2 * j - 1, 4.0), (2 * j, 1.0)], h / 3.0));
        simpson.push(s);
    }
    for i in 2..k {
        if i % 2 == 0 {
            out.push(simpson[i / 2].clone());
        } else {
            let mut s = simpson[(i - 3) / 2].clone();
            s.axpy(Complex64::new(1.0, 0.0), &lin(&[(i - 3, 1.0), (i - 2, 3.0), (i - 1, 3.0), (i, 1.0)], 3.0 * h / 8.0));
            out.push(s);
        }
    }
    Ok(out)
}

/// Residual of the normal-form identity along a trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    /// `||V(t) - V(0) - sum (W(t) - W(0)) + \int_0^t H||_{L^2}`
    pub residual: Vec<f64>,
    /// the same without the bulk integral
    pub residual_no_h: Vec<f64>,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_residual_no_h(&self) -> f64 {
        self.residual_no_h.iter().cloned().fold(0.0, f64::max)
    }
}

/// Evaluates the identity `V(t) - V(0) = sum (W(t) - W(0)) - \int_0^t H` on
/// uniformly spaced snapshots of `U`, with `V_t` taken from `model`.
pub fn residual_check(traj: &Trajectory, model: &Model, nf: &NormalForm) -> Result<ResidualReport> {
    let k = traj.times.len();
    if k < 5 {
        return Err(Error::InsufficientData(format!("need >= 5 snapshots, got {k}")));
    }
    let h = traj.times[1] - traj.times[0];
    for w in traj.times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::InvalidArgument("snapshots must be uniformly spaced".into()));
        }
    }
    let profiles = traj.profiles();
    let evals: Vec<(SpectralField, SpectralField)> = profiles
        .par_iter()
        .zip(traj.times.par_iter())
        .map(|(v, &t)| {
            let dv = dtv_from_rhs(model, v, t)?;
            Ok((nf.boundary_total(v, t), nf.bulk_total(v, &dv, t)))
        })
        .collect::<Result<_>>()?;
    let (w, bulk): (Vec<_>, Vec<_>) = evals.into_iter().unzip();
    let ints = cumulative_integral(h, &bulk)?;
    let mut residual = Vec::with_capacity(k);
    let mut residual_no_h = Vec::with_capacity(k);
    for i in 0..k {
        let base = profiles[i].sub(&profiles[0]).sub(&w[i].sub(&w[0]));
        residual_no_h.push(base.norm_l2());
        residual.push(base.add(&ints[i]).norm_l2());
    }
    Ok(ResidualReport { times: traj.times.clone(), residual, residual_no_h })
}

/// Integrates `u0` for `steps` steps and checks the identity on every `every`-th state.
pub fn residual_along_run(stepper: &Stepper, u0: &SpectralField, steps: usize, every: usize, nf: &NormalForm) -> Result<ResidualReport> {
    let traj = integrate(stepper, u0, 0.0, steps, every)?;
    residual_check(&traj, &stepper.model(), nf)
}

/// Result of a brute-force scan of `|Phi_{mu nu}| (1 + min(|xi1|, |xi2|, |xi1 + xi2|))`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NonresonanceResult {
    pub side: f64,
    pub cap: f64,
    pub c_min: f64,
    pub signs: (Sign, Sign),
    pub xi1: [f64; 2],
    pub xi2: [f64; 2],
    pub pairs_scanned: u64,
}

fn lattice_disk(side: f64, cap: f64) -> Vec<[f64; 2]> {
    let d = 2.0 * std::f64::consts::PI / side;
    let m = (cap / d).floor() as i64;
    let mut pts = Vec::new();
    for a in -m..=m {
        for b in -m..=m {
            let xi = [a as f64 * d, b as f64 * d];
            if dot(xi, xi).sqrt() <= cap * (1.0 + 1e-12) {
                pts.push(xi);
            }
        }
    }
    pts
}

/// Minimum of `|Phi_{mu nu}(xi1, xi2)| (1 + min(|xi1|, |xi2|, |xi1 + xi2|))` over
/// all lattice pairs with `|xi_i| <= cap` and all sign pairs.
pub fn nonresonance_scan(side: f64, cap: f64) -> Result<NonresonanceResult> {
    if !(side > 0.0 && cap >= 0.0) {
        return Err(Error::InvalidArgument(format!("need R > 0 and K >= 0, got R = {side}, K = {cap}")));
    }
    let pts = lattice_disk(side, cap);
    let ls: Vec<f64> = pts.iter().map(|p| lam(dot(*p, *p))).collect();
    let abs: Vec<f64> = pts.iter().map(|p| dot(*p, *p).sqrt()).collect();
    let best = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, (Sign::Plus, Sign::Plus), 0usize);
            for j in 0..pts.len() {
                let s = [pts[i][0] + pts[j][0], pts[i][1] + pts[j][1]];
                let a2 = dot(s, s);
                let l = lam(a2);
                let w = 1.0 + abs[i].min(abs[j]).min(a2.sqrt());
                for (mu, nu) in pairs() {
                    let c = (l - mu.value() * ls[i] - nu.value() * ls[j]).abs() * w;
                    if c < best.0 {
                        best = (c, (mu, nu), j);
                    }
                }
            }
            (best.0, best.1, i, best.2)
        })
        .reduce(
            || (f64::INFINITY, (Sign::Plus, Sign::Plus), 0, 0),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && (b.2, b.3) < (a.2, a.3)) { b } else { a },
        );
    Ok(NonresonanceResult {
        side,
        cap,
        c_min: best.0,
        signs: best.1,
        xi1: pts[best.2],
        xi2: pts[best.3],
        pairs_scanned: (pts.len() * pts.len()) as u64,
    })
}

/// Smallest `|Phi_{+-}(xi1, xi2)| / |xi2|` over lattice pairs with
/// `0 < |xi1| <= ratio |xi2|` and `|xi2| <= cap`.
pub fn plus_minus_gain(side: f64, cap: f64, ratio: f64) -> f64 {
    let pts = lattice_disk(side, cap);
    pts.par_iter()
        .map(|&b| {
            let ab = dot(b, b).sqrt();
            let mut m = f64::INFINITY;
            if ab == 0.0 {
                return m;
            }
            for &a in &pts {
                let aa = dot(a, a).sqrt();
                if aa <= ratio * ab {
                    m = m.min(phase(Sign::Plus, Sign::Minus, a, b).abs() / ab);
                }
            }
            m
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Largest `|m_{mu nu}| / ((|xi1| + |xi2|)(1 + min(|xi1|, |xi2|)))` over the scan range.
pub fn multiplier_bound_constant(side: f64, cap: f64) -> f64 {
    let pts = lattice_disk(side, cap);
    pts.par_iter()
        .map(|&a| {
            let aa = dot(a, a).sqrt();
            let mut m: f64 = 0.0;
            for &b in &pts {
                let ab = dot(b, b).sqrt();
                let w = (aa + ab) * (1.0 + aa.min(ab));
                if w == 0.0 {
                    continue;
                }
                for (mu, nu) in pairs() {
                    m = m.max(multiplier(mu, nu, a, b).norm() / w);
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}
