//! Plasma state, the quadratic nonlinearity, the profile integrator and
//! diagnostics.
//!
//! The state is carried as the complex unknown `U = X + iY` with
//! `X = Lambda g`, `Y = |nabla| h`, `rho = |nabla| g` and `v = nabla h`, so
//! that `v_j = R_j Y` and
//!
//! ```text
//! U_t = -i Lambda U - N,     N = Lambda R_j(rho v_j) + i |nabla| (|v|^2 / 2).
//! ```
//!
//! The profile `V = e^{it Lambda} U` obeys `V_t = -e^{it Lambda} N(e^{-it Lambda} V)`,
//! which is what the integrator advances.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{norm_h, norm_x, norm_z, NormParams};
use crate::spectral::{fft_forward, poisson_solve, Multiplier, PhysicalField, SpectralField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default blow-up threshold on `||U||_{H^3}`.
pub const DEFAULT_BLOWUP_H3: f64 = 0.1;

/// Density and velocity potential at a time.
#[derive(Clone, Debug)]
pub struct PlasmaState {
    /// `g = |nabla|^{-1} rho`
    pub g: SpectralField,
    /// velocity potential, `v = nabla h`
    pub h: SpectralField,
    pub t: f64,
}

/// `V = e^{it Lambda} U`
pub fn unknown_to_profile(u: &SpectralField, t: f64) -> SpectralField {
    u.propagate(-t)
}

/// `U = e^{-it Lambda} V`
pub fn profile_to_unknown(v: &SpectralField, t: f64) -> SpectralField {
    v.propagate(t)
}

impl PlasmaState {
    pub fn zero(grid: &TorusGrid) -> Self {
        Self { g: SpectralField::zeros(grid), h: SpectralField::zeros(grid), t: 0.0 }
    }

    pub fn new(g: SpectralField, h: SpectralField, t: f64) -> Result<Self> {
        g.same_grid(&h)?;
        Ok(Self { g, h, t })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.g.grid()
    }

    /// `U = Lambda g + i |nabla| h`.
    pub fn unknown(&self) -> SpectralField {
        let x = self.g.apply(Multiplier::Lambda);
        let y = self.h.apply(Multiplier::AbsGrad);
        let mut u = x;
        u.axpy(I, &y);
        u
    }

    /// Inverts [`PlasmaState::unknown`]; the mean of `h` is set to zero.
    pub fn from_unknown(u: &SpectralField, t: f64) -> Self {
        let g = u.real_part().apply(Multiplier::LambdaInv);
        let h = u.imag_part().apply(Multiplier::AbsGradInv);
        Self { g, h, t }
    }

    pub fn profile(&self) -> SpectralField {
        unknown_to_profile(&self.unknown(), self.t)
    }

    pub fn density(&self) -> SpectralField {
        self.g.apply(Multiplier::AbsGrad)
    }

    pub fn velocity(&self) -> [SpectralField; 2] {
        [self.h.apply(Multiplier::Deriv1), self.h.apply(Multiplier::Deriv2)]
    }

    /// Electrostatic potential, `Delta phi = rho`.
    pub fn potential(&self) -> Result<SpectralField> {
        poisson_solve(&self.density())
    }
}

/// Switches for the right-hand side; the defaults give the physical system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    /// Factor in front of `N`; `0` gives the linear Klein-Gordon flow.
    pub coupling: f64,
    /// Apply the 2/3 rule to the quadratic products.
    pub dealias: bool,
}

impl Default for Model {
    fn default() -> Self {
        Self { coupling: 1.0, dealias: true }
    }
}

impl Model {
    pub fn linear() -> Self {
        Self { coupling: 0.0, dealias: true }
    }

    /// `N(U)`, scaled by the coupling.
    pub fn nonlinearity(&self, u: &SpectralField) -> Result<SpectralField> {
        let grid = u.grid().clone();
        if self.coupling == 0.0 {
            return Ok(SpectralField::zeros(&grid));
        }
        let len = grid.len();
        let c = u.coeffs();
        // rho + i v_1 and v_2, packed so that two transforms give three real fields
        let mut a = vec![ZERO; len];
        let mut b = vec![ZERO; len];
        for i in 0..len {
            let k = grid.abs_freq(i);
            if k == 0.0 {
                continue;
            }
            let cr = c[grid.reflect_index(i)].conj();
            let x = 0.5 * (c[i] + cr);
            let y = -0.5 * I * (c[i] - cr);
            let xi = grid.freq(i);
            let rho = x * (k / grid.lambda(i));
            a[i] = rho + I * (I * y * (xi[0] / k));
            b[i] = I * y * (xi[1] / k);
        }
        let a = SpectralField::from_coeffs(&grid, a)?.to_physical();
        let b = SpectralField::from_coeffs(&grid, b)?.to_physical();
        let mut p = vec![ZERO; len];
        let mut q = vec![ZERO; len];
        for j in 0..len {
            let (rho, v1, v2) = (a.values()[j].re, a.values()[j].im, b.values()[j].re);
            p[j] = Complex64::new(rho * v1, rho * v2);
            q[j] = Complex64::new(v1 * v1 + v2 * v2, 0.0);
        }
        if !p.iter().chain(&q).all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::BlowUp { t: f64::NAN, reason: "non-finite product".into() });
        }
        let p = fft_forward(&PhysicalField::new(&grid, p)?);
        let q = fft_forward(&PhysicalField::new(&grid, q)?);
        let (pc, qc) = (p.coeffs(), q.coeffs());
        let mut out = vec![ZERO; len];
        for i in 0..len {
            let k = grid.abs_freq(i);
            if k == 0.0 || (self.dealias && !grid.is_dealiased(i)) {
                continue;
            }
            let pr = pc[grid.reflect_index(i)].conj();
            let rv1 = 0.5 * (pc[i] + pr);
            let rv2 = -0.5 * I * (pc[i] - pr);
            let xi = grid.freq(i);
            let flux = I * (rv1 * xi[0] + rv2 * xi[1]) / k;
            out[i] = (flux * grid.lambda(i) + I * (0.5 * k) * qc[i]) * self.coupling;
        }
        SpectralField::from_coeffs(&grid, out)
    }
}

/// `N(U)` for the physical system.
pub fn rhs(u: &SpectralField) -> Result<SpectralField> {
    Model::default().nonlinearity(u)
}

/// Default fixed step `min(0.01, 0.5 / Lambda_max)` over the dealiased lattice.
pub fn default_dt(grid: &TorusGrid) -> f64 {
    let m = grid.dealias_limit() as f64 * grid.spacing();
    let lam = (1.0 + 2.0 * m * m).sqrt();
    (0.5 / lam).min(0.01)
}

/// Integrating-factor fourth-order Runge-Kutta on the profile.
///
/// The linear rotation `e^{-it Lambda}` is applied exactly; the stages are
/// classical RK4 for `V_t = -e^{it Lambda} N(e^{-it Lambda} V)`, written in
/// the `U` variable so no absolute time enters the factors.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: TorusGrid,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    model: Model,
    blowup_h3: f64,
}

impl Stepper {
    pub fn new(grid: &TorusGrid, dt: f64, model: Model) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero, got {dt}")));
        }
        let half = grid.lambda_table().iter().map(|&l| Complex64::from_polar(1.0, -0.5 * dt * l)).collect();
        let full = grid.lambda_table().iter().map(|&l| Complex64::from_polar(1.0, -dt * l)).collect();
        Ok(Self { grid: grid.clone(), dt, half, full, model, blowup_h3: DEFAULT_BLOWUP_H3 })
    }

    pub fn with_blowup_threshold(mut self, h3: f64) -> Self {
        self.blowup_h3 = h3;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn rotate(&self, u: &SpectralField, full: bool) -> SpectralField {
        let e = if full { &self.full } else { &self.half };
        u.map_indexed(|i, c| c * e[i])
    }

    fn force(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        self.model.nonlinearity(u).map(|n| n.scale(-1.0)).map_err(|e| match e {
            Error::BlowUp { reason, .. } => Error::BlowUp { t, reason },
            other => other,
        })
    }

    /// Advances `U` from `t` to `t + dt`.
    pub fn step_unknown(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        let h = self.dt;
        let hc = Complex64::new(h, 0.0);
        let k1 = self.force(u, t)?;
        let mut a = u.clone();
        a.axpy(hc * 0.5, &k1);
        let a = self.rotate(&a, false);
        let k2 = self.force(&a, t + 0.5 * h)?;
        let eu = self.rotate(u, false);
        let mut b = eu.clone();
        b.axpy(hc * 0.5, &k2);
        let k3 = self.force(&b, t + 0.5 * h)?;
        let mut c = self.rotate(&eu, false);
        c.axpy(hc, &self.rotate(&k3, false));
        let k4 = self.force(&c, t + h)?;

        let mut mid = k2;
        mid.axpy(Complex64::new(1.0, 0.0), &k3);
        let mut acc = self.rotate(&eu, false);
        acc.axpy(hc / 6.0, &self.rotate(&k1, true));
        acc.axpy(hc / 3.0, &self.rotate(&mid, false));
        acc.axpy(hc / 6.0, &k4);

        let t1 = t + h;
        let h3 = norm_h(&acc, 3.0);
        if !h3.is_finite() {
            return Err(Error::BlowUp { t: t1, reason: "non-finite state".into() });
        }
        if h3 > self.blowup_h3 {
            return Err(Error::BlowUp {
                t: t1,
                reason: format!("||U||_H3 = {h3:.3e} exceeds {:.3e}", self.blowup_h3),
            });
        }
        Ok(acc)
    }

    pub fn step(&self, state: &PlasmaState) -> Result<PlasmaState> {
        let u = self.step_unknown(&state.unknown(), state.t)?;
        Ok(PlasmaState::from_unknown(&u, state.t + self.dt))
    }
}

/// Samples of `U` along a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub unknowns: Vec<SpectralField>,
}

impl Trajectory {
    pub fn profiles(&self) -> Vec<SpectralField> {
        self.times.iter().zip(&self.unknowns).map(|(&t, u)| unknown_to_profile(u, t)).collect()
    }
}

/// Runs `steps` steps from `(u0, t0)` keeping every `every`-th state (and the first).
pub fn integrate(stepper: &Stepper, u0: &SpectralField, t0: f64, steps: usize, every: usize) -> Result<Trajectory> {
    let every = every.max(1);
    let mut times = vec![t0];
    let mut unknowns = vec![u0.clone()];
    let mut u = u0.clone();
    for s in 1..=steps {
        let t = t0 + (s - 1) as f64 * stepper.dt();
        u = stepper.step_unknown(&u, t)?;
        if s % every == 0 {
            times.push(t0 + s as f64 * stepper.dt());
            unknowns.push(u.clone());
        }
    }
    Ok(Trajectory { times, unknowns })
}

/// Conserved and monitored scalar quantities at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub charge: f64,
    pub momentum: [f64; 2],
    pub energy: f64,
    pub vorticity_max: f64,
}

/// Charge, momentum, energy and vorticity of the state described by `U`.
///
/// The energy `1/2 \int (1 + rho)|v|^2 + |nabla phi|^2 + rho^2` is evaluated
/// exactly for band-limited fields: the cubic part uses the dealiased square
/// `|v|^2`, which does not change `\int rho |v|^2` when `rho` is dealiased.
pub fn conserved_from_unknown(u: &SpectralField) -> Conserved {
    let grid = u.grid().clone();
    let y = u.imag_part();
    let x = u.real_part();
    let rho = x.apply(Multiplier::LambdaInv).apply(Multiplier::AbsGrad);
    let v = [y.apply(Multiplier::Riesz1), y.apply(Multiplier::Riesz2)];
    let g = x.apply(Multiplier::LambdaInv);
    let grad_phi = [g.apply(Multiplier::Riesz1).scale(-1.0), g.apply(Multiplier::Riesz2).scale(-1.0)];

    let rho_p = rho.to_physical();
    let v_p = [v[0].to_physical(), v[1].to_physical()];
    let charge = rho_p.integral().re;
    let momentum = [v_p[0].integral().re, v_p[1].integral().re];

    let sq: Vec<Complex64> = v_p[0]
        .values()
        .iter()
        .zip(v_p[1].values())
        .map(|(a, b)| Complex64::new(a.re * a.re + b.re * b.re, 0.0))
        .collect();
    let sq = fft_forward(&PhysicalField::new(&grid, sq).expect("grid size")).dealiased();
    let kinetic = v[0].norm_l2().powi(2) + v[1].norm_l2().powi(2);
    let cubic = rho.inner(&sq).re;
    let field = grad_phi[0].norm_l2().powi(2) + grad_phi[1].norm_l2().powi(2);
    let thermal = rho.norm_l2().powi(2);
    let energy = 0.5 * (kinetic + cubic + field + thermal);

    let curl = v[1].apply(Multiplier::Deriv1).sub(&v[0].apply(Multiplier::Deriv2));
    Conserved { charge, momentum, energy, vorticity_max: curl.to_physical().max_abs() }
}

pub fn conserved(state: &PlasmaState) -> Conserved {
    conserved_from_unknown(&state.unknown())
}

/// One row of `diagnostics.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub charge: f64,
    pub mom_x: f64,
    pub mom_y: f64,
    pub energy: f64,
    pub vort_max: f64,
    #[serde(rename = "H_N")]
    pub h_n: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "L2X_running")]
    pub l2x_running: f64,
}

/// Accumulates diagnostics along a run, including the running
/// `||U||_{L^2([0,t]) X}` by the trapezoidal rule over recorded samples.
#[derive(Clone, Debug)]
pub struct Monitor {
    params: NormParams,
    last: Option<(f64, f64)>,
    integral: f64,
}

impl Monitor {
    pub fn new(params: NormParams) -> Self {
        Self { params, last: None, integral: 0.0 }
    }

    pub fn record(&mut self, u: &SpectralField, t: f64) -> Diagnostics {
        let c = conserved_from_unknown(u);
        let x = norm_x(u, self.params.weight);
        let x2 = x * x;
        if let Some((t0, y0)) = self.last {
            self.integral += 0.5 * (t - t0) * (x2 + y0);
        }
        self.last = Some((t, x2));
        Diagnostics {
            t,
            charge: c.charge,
            mom_x: c.momentum[0],
            mom_y: c.momentum[1],
            energy: c.energy,
            vort_max: c.vorticity_max,
            h_n: norm_h(u, self.params.sobolev as f64),
            x,
            z: norm_z(&unknown_to_profile(u, t), self.params.weight),
            l2x_running: self.integral.sqrt(),
        }
    }
}

/// Which smallness condition the initial data are normalized by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataRegime {
    /// `|| |nabla|^{-1} rho ||_{H^{N+1}} + ||v||_{H^N}`
    #[default]
    Sobolev,
    /// the Sobolev quantity plus `||Lambda |nabla|^{-1} rho||_Z + ||v||_Z`
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub epsilon: f64,
    pub seed: u64,
    pub params: NormParams,
    pub regime: DataRegime,
}

/// Random real, dealiased, mean-zero field with `|f_hat(xi)| = e^{-|xi|^2}` and uniform phases.
pub fn random_smooth_field(grid: &TorusGrid, rng: &mut impl Rng) -> SpectralField {
    let r2 = grid.side() * grid.side();
    let coeffs = (0..grid.len())
        .map(|i| {
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            if i == 0 || !grid.is_dealiased(i) {
                ZERO
            } else {
                Complex64::from_polar(r2 * (-grid.abs_freq(i).powi(2)).exp(), phase)
            }
        })
        .collect();
    SpectralField::from_coeffs(grid, coeffs).expect("grid size").real_part()
}

/// The smallness quantity of the data in the chosen regime.
pub fn data_size(state: &PlasmaState, params: NormParams, regime: DataRegime) -> f64 {
    let n = params.sobolev as f64;
    let v = state.velocity();
    let sobolev = norm_h(&state.g, n + 1.0) + norm_h(&v[0], n).hypot(norm_h(&v[1], n));
    match regime {
        DataRegime::Sobolev => sobolev,
        DataRegime::Weighted => {
            let m = params.weight;
            let lg = state.g.apply(Multiplier::Lambda);
            sobolev + norm_z(&lg, m) + norm_z(&v[0], m).hypot(norm_z(&v[1], m))
        }
    }
}

/// Deterministic random data with `data_size = epsilon`.
pub fn make_initial(grid: &TorusGrid, spec: &InitialSpec) -> Result<PlasmaState> {
    if !(spec.epsilon >= 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", spec.epsilon)));
    }
    if spec.epsilon == 0.0 {
        return Ok(PlasmaState::zero(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = random_smooth_field(grid, &mut rng);
    let h = random_smooth_field(grid, &mut rng);
    let raw = PlasmaState { g, h, t: 0.0 };
    let s = spec.epsilon / data_size(&raw, spec.params, spec.regime);
    Ok(PlasmaState { g: raw.g.scale(s), h: raw.h.scale(s), t: 0.0 })
}
