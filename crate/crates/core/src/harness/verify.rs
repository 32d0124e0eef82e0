use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispersion::{kernel, kernel_direct, propagate};
use crate::dynamics::{
    conserved_from_unknown, integrate, make_initial, random_smooth_field, DataRegime, InitialSpec, Model, Stepper,
};
use crate::error::Result;
use crate::lp::{band_range, cutoff, project, project_k, Band, NormParams};
use crate::normal_form::{nonresonance_scan, residual_along_run, Fault, NormalForm};
use crate::paradiff::{Paradiff, Symbol, DEFAULT_OFFSET};
use crate::spectral::{fft_forward, Multiplier, SpectralField, TorusGrid};

/// Deliberate corruptions for mutation testing of the suite itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Injection {
    #[default]
    None,
    /// Negates the `(+,-)` quadratic multiplier in the normal form.
    NormalFormSign,
    /// Turns off the 2/3 rule in the energy suite.
    BrokenDealiasing,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub injection: Injection,
}

/// One named inequality `value <= limit` (or `>=` when `lower`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub lower: bool,
    pub passed: bool,
}

impl Check {
    pub fn at_most(suite: &str, name: &str, value: f64, limit: f64) -> Self {
        Self { suite: suite.into(), name: name.into(), value, limit, lower: false, passed: value <= limit }
    }

    pub fn at_least(suite: &str, name: &str, value: f64, limit: f64) -> Self {
        Self { suite: suite.into(), name: name.into(), value, limit, lower: true, passed: value >= limit }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: {:.3e} {} {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            if self.lower { ">=" } else { "<=" },
            self.limit
        )
    }
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    let scale = a.max_abs_coeff().max(b.max_abs_coeff());
    if scale == 0.0 {
        0.0
    } else {
        a.sub(b).max_abs_coeff() / scale
    }
}

fn spectral_suite(seed: u64) -> Vec<Check> {
    let g = TorusGrid::new(7.0, 32).expect("grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_smooth_field(&g, &mut rng);
    let back = fft_forward(&u.to_physical());
    let l2 = u.norm_l2();
    let v = propagate(&u, 3.3);
    vec![
        Check::at_most("spectral", "fft round trip", rel(&u, &back), 1e-13),
        Check::at_most("spectral", "Parseval", (u.to_physical().norm_l2() - l2).abs() / l2, 1e-12),
        Check::at_most("spectral", "propagator unitarity", (v.norm_l2() - l2).abs() / l2, 1e-13),
    ]
}

fn lp_suite() -> Vec<Check> {
    let g = TorusGrid::new(11.0, 64).expect("grid");
    let worst = (1..g.len())
        .map(|i| {
            let r = g.abs_freq(i);
            let s: f64 = band_range(&g).map(|k| cutoff(k, r)).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max);
    vec![Check::at_most("lp", "partition of unity", worst, 1e-12)]
}

/// Flat-spectrum data put energy right below the dealiasing edge.
fn rough_field(grid: &TorusGrid, seed: u64, amp: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2 = grid.side() * grid.side();
    let c = (0..grid.len())
        .map(|i| {
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            if i == 0 || !grid.is_dealiased(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(r2 * amp, phase)
            }
        })
        .collect();
    SpectralField::from_coeffs(grid, c).expect("grid size")
}

fn energy_suite(seed: u64, injection: Injection) -> Result<Vec<Check>> {
    let g = TorusGrid::new(std::f64::consts::TAU, 16)?;
    let dealias = injection != Injection::BrokenDealiasing;
    let u0 = rough_field(&g, seed, 1e-3);
    let stepper = Stepper::new(&g, 0.01, Model { coupling: 1.0, dealias })?.with_blowup_threshold(1e6);
    let traj = integrate(&stepper, &u0, 0.0, 200, 200)?;
    let (a, b) = (conserved_from_unknown(&traj.unknowns[0]), conserved_from_unknown(&traj.unknowns[1]));
    let drift = |x: f64, y: f64, scale: f64| (y - x).abs() / scale;
    let mscale = a.momentum[0].abs().max(a.momentum[1].abs()).max(a.energy);
    Ok(vec![
        Check::at_most("energy", "energy drift", drift(a.energy, b.energy, a.energy), 1e-8),
        Check::at_most("energy", "charge drift", drift(a.charge, b.charge, a.energy.sqrt()), 1e-10),
        Check::at_most(
            "energy",
            "momentum drift",
            drift(a.momentum[0], b.momentum[0], mscale).max(drift(a.momentum[1], b.momentum[1], mscale)),
            1e-10,
        ),
        Check::at_most("energy", "vorticity", b.vorticity_max, 1e-12),
    ])
}

fn normal_form_suite(seed: u64, injection: Injection) -> Result<Vec<Check>> {
    let g = TorusGrid::new(6.0, 16)?;
    let spec = InitialSpec { epsilon: 0.01, seed, params: NormParams::new(7, 2), regime: DataRegime::Sobolev };
    let u0 = make_initial(&g, &spec)?.unknown();
    let stepper = Stepper::new(&g, 0.02, Model::default())?;
    let fault = if injection == Injection::NormalFormSign { Fault::FlipPlusMinus } else { Fault::None };
    let r = residual_along_run(&stepper, &u0, 100, 5, &NormalForm::new(&g).with_fault(fault))?;
    Ok(vec![Check::at_most(
        "normal-form",
        "residual / residual without H",
        r.max_residual() / r.max_residual_no_h(),
        1e-2,
    )])
}

/// Identity checks for paradifferential operators on an `n x n` grid.
pub fn paradiff_suite(n: usize, seed: u64) -> Result<Vec<Check>> {
    let g = TorusGrid::new(6.0, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_smooth_field(&g, &mut rng);
    let a_field = random_smooth_field(&g, &mut rng).add(&SpectralField::plane_wave(&g, [0, 0], Complex64::new(1.0, 0.0))?);
    let a = Symbol::function(a_field);
    let b = Symbol::dot_zeta([random_smooth_field(&g, &mut rng), random_smooth_field(&g, &mut rng)]);
    let one = Symbol::one(&g);
    let lam = Symbol::multiplier(&g, |z| Complex64::new((1.0 + z[0] * z[0] + z[1] * z[1]).sqrt(), 0.0), true, true);
    let tol = 1e-11;
    let mut out = Vec::new();
    for off in [DEFAULT_OFFSET, -2] {
        let p = Paradiff::new(off);
        let tag = |s: &str| format!("{s} (cutoff {off})");
        out.push(Check::at_most("paradiff", &tag("T_1 = id"), rel(&p.apply(&one, &f)?, &f), tol));
        out.push(Check::at_most(
            "paradiff",
            &tag("T_Lambda = Lambda"),
            rel(&p.apply(&lam, &f)?, &f.apply(Multiplier::Lambda)),
            tol,
        ));
        let ta = p.matrix(&a)?;
        let tb = p.matrix(&b)?;
        let herm = |m: &crate::paradiff::DenseMatrix| m.sub(&m.adjoint()).max_abs() / m.max_abs().max(1e-300);
        out.push(Check::at_most("paradiff", &tag("T_a Hermitian"), herm(&ta), tol));
        out.push(Check::at_most("paradiff", &tag("T_(v.zeta) Hermitian"), herm(&tb), tol));
        // the coefficient band grows with the cutoff offset
        let gap = if off <= -5 { 2 } else { 3 };
        let mut loc: f64 = 0.0;
        for k in band_range(&g) {
            let low = project(Band::AtMost(k - gap), &f);
            loc = loc.max(project_k(k, &p.apply(&a, &low)?).max_abs_coeff() / f.max_abs_coeff());
        }
        out.push(Check::at_most("paradiff", &tag(&format!("P_k T_a P_<=k-{gap} = 0")), loc, tol));
        let scale = ta.max_abs().max(1.0) * tb.max_abs().max(1.0);
        out.push(Check::at_most("paradiff", &tag("E(a, 1) = 0"), p.composition_error(&[&a, &one])?.max_abs() / scale, tol));
        out.push(Check::at_most("paradiff", &tag("E(1, b) = 0"), p.composition_error(&[&one, &b])?.max_abs() / scale, tol));
        let comm = ta.matmul(&tb).sub(&tb.matmul(&ta));
        let diff = p.composition_error(&[&a, &b])?.sub(&p.composition_error(&[&b, &a])?);
        out.push(Check::at_most("paradiff", &tag("[T_a, T_b] = E(a,b) - E(b,a)"), comm.sub(&diff).max_abs() / scale, tol));
    }
    Ok(out)
}

fn dispersion_suite() -> Vec<Check> {
    let g = TorusGrid::new(30.0, 64).expect("grid");
    let mut worst: f64 = 0.0;
    for (k, t) in [(0, 3.0), (1, 7.5)] {
        let phys = kernel(&g, k, t).to_physical();
        for p in [0usize, 99, 64 * 20 + 7, 64 * 50 + 50] {
            worst = worst.max((phys.values()[p] - kernel_direct(&g, k, t, g.point(p))).norm());
        }
    }
    vec![Check::at_most("dispersion", "kernel FFT vs direct sum", worst, 1e-10)]
}

fn nonresonance_suite() -> Result<Vec<Check>> {
    let r = nonresonance_scan(8.0, 10.0)?;
    Ok(vec![Check::at_least("nonresonance", "c_min (R = 8, K = 10)", r.c_min, 0.1)])
}

/// Runs every suite at small scale.
pub fn verify_all(opts: VerifyOptions) -> Result<Vec<Check>> {
    let mut out = spectral_suite(opts.seed);
    out.extend(lp_suite());
    out.extend(energy_suite(opts.seed, opts.injection)?);
    out.extend(normal_form_suite(opts.seed, opts.injection)?);
    out.extend(paradiff_suite(16, opts.seed)?);
    out.extend(dispersion_suite());
    out.extend(nonresonance_suite()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn failed(checks: &[Check], suite: &str) -> bool {
        checks.iter().any(|c| c.suite == suite && !c.passed)
    }

    #[test]
    fn clean_build_passes() {
        let checks = verify_all(VerifyOptions::default()).unwrap();
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn sign_error_is_caught() {
        let checks = normal_form_suite(0, Injection::NormalFormSign).unwrap();
        assert!(failed(&checks, "normal-form"));
    }

    #[test]
    fn broken_dealiasing_is_caught() {
        let checks = energy_suite(0, Injection::BrokenDealiasing).unwrap();
        assert!(failed(&checks, "energy"));
    }
}
