use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, LinearFit};

use super::scan::{format_time, read_scan, ScanRow};

/// Least-squares slope of `log T_double` against `log epsilon` at one `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonFit {
    pub side: f64,
    pub fit: LinearFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub fits: Vec<EpsilonFit>,
    /// Human-readable monotonicity violations.
    pub violations: Vec<String>,
    pub markdown: PathBuf,
    pub plot: PathBuf,
}

fn sides(rows: &[ScanRow]) -> Vec<f64> {
    let mut s: Vec<f64> = rows.iter().map(|r| r.side).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn epsilons(rows: &[ScanRow]) -> Vec<f64> {
    let mut e: Vec<f64> = rows.iter().map(|r| r.epsilon).filter(|e| *e > 0.0).collect();
    e.sort_by(f64::total_cmp);
    e.dedup();
    e
}

fn usable(r: &ScanRow) -> bool {
    r.error.is_empty() && r.epsilon > 0.0 && r.t_double.is_finite() && r.t_double > 0.0
}

/// `T_double` must not decrease as `epsilon` decreases, per `(R, replicate)`.
fn monotonicity(rows: &[ScanRow]) -> Vec<String> {
    let mut out = Vec::new();
    for side in sides(rows) {
        let mut reps: Vec<u32> = rows.iter().filter(|r| r.side == side).map(|r| r.replicate).collect();
        reps.sort();
        reps.dedup();
        for rep in reps {
            let mut series: Vec<&ScanRow> =
                rows.iter().filter(|r| r.side == side && r.replicate == rep && r.error.is_empty() && r.epsilon > 0.0).collect();
            series.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
            for w in series.windows(2) {
                if w[1].t_double < w[0].t_double {
                    out.push(format!(
                        "R = {side}, replicate {rep}: T_double({}) = {} < T_double({}) = {}",
                        w[1].epsilon,
                        format_time(w[1].t_double),
                        w[0].epsilon,
                        format_time(w[0].t_double)
                    ));
                }
            }
        }
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Log-log scatter of `T_double` against `epsilon` with fitted lines and the
/// reference slopes `-2` and `-2/3`.
pub fn write_svg(rows: &[ScanRow], fits: &[EpsilonFit], path: &Path) -> Result<()> {
    let pts: Vec<&ScanRow> = rows.iter().filter(|r| usable(r)).collect();
    let (w, h, pad) = (640.0, 440.0, 60.0);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    if pts.is_empty() {
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no finite doubling times</text></svg>"#, w / 2.0, h / 2.0).unwrap();
        fs::write(path, svg)?;
        return Ok(());
    }
    let lx: Vec<f64> = pts.iter().map(|r| r.epsilon.log10()).collect();
    let ly: Vec<f64> = pts.iter().map(|r| r.t_double.log10()).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let m = ((hi - lo) * 0.1).max(0.1);
        (lo - m, hi + m)
    };
    let (x0, x1) = span(&lx);
    let (y0, y1) = span(&ly);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    )
    .unwrap();
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">1e{d}</text>"#, px(d as f64), h - pad + 18.0).unwrap();
    }
    for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
        writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, pad - 6.0, py(d as f64) + 4.0).unwrap();
    }
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#, w / 2.0, h - 15.0).unwrap();
    writeln!(svg, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">T_double</text>"#, h / 2.0, h / 2.0).unwrap();

    let clip = |x: f64, y: f64| (px(x), py(y.clamp(y0, y1)));
    let (cx, cy) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
    for (slope, label, dash) in [(-2.0, "eps^-2", "6,4"), (-2.0 / 3.0, "eps^-2/3", "2,3")] {
        let (a, b) = (clip(x0, cy + slope * (x0 - cx)), clip(x1, cy + slope * (x1 - cx)));
        writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="{dash}"/><text x="{:.1}" y="{:.1}" fill="#666">{label}</text>"##,
            a.0, a.1, b.0, b.1, b.0 - 50.0, b.1 - 4.0
        )
        .unwrap();
    }
    for (i, side) in sides(rows).iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for r in pts.iter().filter(|r| r.side == *side) {
            writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, px(r.epsilon.log10()), py(r.t_double.log10())).unwrap();
        }
        if let Some(f) = fits.iter().find(|f| f.side == *side) {
            let y = |x: f64| (f.fit.intercept + f.fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
            let (a, b) = (clip(x0, y(x0)), clip(x1, y(x1)));
            writeln!(svg, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}"/>"#, a.0, a.1, b.0, b.1).unwrap();
        }
        writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">R = {side}</text>"#,
            w - pad - 70.0,
            pad + 16.0 * (i as f64 + 1.0)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Reads `scan.csv` and writes `report.md` and `lifespan.svg` into `dir`.
pub fn report(scan_csv: &Path, dir: &Path) -> Result<ReportSummary> {
    let rows = read_scan(scan_csv)?;
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no rows", scan_csv.display())));
    }
    let eps = epsilons(&rows);
    if eps.len() < 4 {
        return Err(Error::InsufficientData(format!("report needs >= 4 positive epsilon values, found {}", eps.len())));
    }
    let mut fits = Vec::new();
    for side in sides(&rows) {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.side == side && usable(r)).map(|r| (r.epsilon, r.t_double)).unzip();
        match loglog_fit(&x, &y) {
            Ok(fit) => fits.push(EpsilonFit { side, fit }),
            Err(e) => log::warn!("no fit at R = {side}: {e}"),
        }
    }
    let violations = monotonicity(&rows);
    fs::create_dir_all(dir)?;
    let plot = dir.join("lifespan.svg");
    write_svg(&rows, &fits, &plot)?;

    let mut md = String::new();
    writeln!(md, "# Lifespan scan report\n").unwrap();
    writeln!(
        md,
        "Source: `{}` ({} runs). The lifespan proxy is the first time the `H^N` norm of `U` reaches twice its initial value. \
It is a doubling time, not a breakdown time.\n",
        scan_csv.display(),
        rows.len()
    )
    .unwrap();
    writeln!(md, "## Fitted exponents\n").unwrap();
    writeln!(md, "Fit of `log T_double = a + b log eps` over runs with a finite doubling time. Intervals are 95% Student-t bands.\n").unwrap();
    writeln!(md, "| R | slope b | 95% band | R^2 | points | vs -2 | vs -2/3 |").unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|").unwrap();
    for f in &fits {
        let within = |target: f64| if f.fit.slope_ci.0 <= target && target <= f.fit.slope_ci.1 { "inside" } else { "outside" };
        writeln!(
            md,
            "| {} | {:.3} | [{:.3}, {:.3}] | {:.4} | {} | {} | {} |",
            f.side,
            f.fit.slope,
            f.fit.slope_ci.0,
            f.fit.slope_ci.1,
            f.fit.r_squared,
            f.fit.points,
            within(-2.0),
            within(-2.0 / 3.0)
        )
        .unwrap();
    }
    writeln!(md, "\nReference slopes: `-2` for the `R / eps^2` law and `-2/3` for the large-box regime. Logarithmic factors are not fitted.\n").unwrap();

    writeln!(md, "## Doubling times\n").unwrap();
    let sides_all = sides(&rows);
    write!(md, "| eps |").unwrap();
    for s in &sides_all {
        write!(md, " R = {s} |").unwrap();
    }
    writeln!(md).unwrap();
    writeln!(md, "|---|{}", "---|".repeat(sides_all.len())).unwrap();
    for e in eps.iter().rev() {
        write!(md, "| {e} |").unwrap();
        for s in &sides_all {
            let ts: Vec<String> = rows
                .iter()
                .filter(|r| r.side == *s && r.epsilon == *e)
                .map(|r| if r.error.is_empty() { format_time(r.t_double) } else { "error".into() })
                .collect();
            write!(md, " {} |", ts.join(", ")).unwrap();
        }
        writeln!(md).unwrap();
    }

    writeln!(md, "\n## Monotonicity\n").unwrap();
    if violations.is_empty() {
        writeln!(md, "No violations: every replicate lives at least as long when eps decreases.").unwrap();
    } else {
        writeln!(md, "**{} violation(s):**\n", violations.len()).unwrap();
        for v in &violations {
            writeln!(md, "- {v}").unwrap();
        }
    }
    let failed: Vec<&ScanRow> = rows.iter().filter(|r| !r.error.is_empty()).collect();
    if !failed.is_empty() {
        writeln!(md, "\n## Failed runs\n").unwrap();
        for r in failed {
            writeln!(md, "- R = {}, eps = {}, seed {}: {}", r.side, r.epsilon, r.seed, r.error).unwrap();
        }
    }
    writeln!(md, "\n![lifespan](lifespan.svg)").unwrap();
    let markdown = dir.join("report.md");
    fs::write(&markdown, md)?;
    Ok(ReportSummary { fits, violations, markdown, plot })
}

#[cfg(test)]
mod tests {
    use super::super::scan::write_scan;
    use super::*;

    fn row(side: f64, epsilon: f64, t: f64, replicate: u32) -> ScanRow {
        ScanRow {
            side,
            epsilon,
            seed: replicate as u64,
            t_double: t,
            t_blowup: f64::INFINITY,
            final_hn: 0.0,
            final_z: 0.0,
            max_l2x: 0.0,
            replicate,
            error: String::new(),
        }
    }

    fn write(rows: &[ScanRow], dir: &Path) -> PathBuf {
        let p = dir.join("scan.csv");
        write_scan(rows, &mut fs::File::create(&p).unwrap()).unwrap();
        p
    }

    #[test]
    fn exact_inverse_square_law() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for side in [8.0, 16.0] {
            for e in [0.2, 0.1, 0.05, 0.025] {
                rows.push(row(side, e, side / (e * e), 0));
            }
        }
        let s = report(&write(&rows, dir.path()), dir.path()).unwrap();
        assert_eq!(s.fits.len(), 2);
        for f in &s.fits {
            assert!((f.fit.slope + 2.0).abs() < 0.01);
        }
        assert!(s.violations.is_empty());
        let md = fs::read_to_string(&s.markdown).unwrap();
        assert!(md.contains("| 8 | -2.000"));
        assert!(fs::read_to_string(&s.plot).unwrap().starts_with("<svg"));
    }

    #[test]
    fn empty_and_short_scans_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&[], dir.path());
        assert!(matches!(report(&p, dir.path()), Err(Error::InsufficientData(_))));
        assert!(!dir.path().join("report.md").exists());
        let rows: Vec<ScanRow> = [0.2, 0.1, 0.05].iter().map(|&e| row(8.0, e, 1.0 / e, 0)).collect();
        let p = write(&rows, dir.path());
        assert!(matches!(report(&p, dir.path()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn violations_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(8.0, 0.2, 10.0, 0),
            row(8.0, 0.1, 40.0, 0),
            row(8.0, 0.05, 30.0, 0),
            row(8.0, 0.025, f64::INFINITY, 0),
        ];
        let s = report(&write(&rows, dir.path()), dir.path()).unwrap();
        assert_eq!(s.violations.len(), 1);
        assert!(s.violations[0].contains("T_double(0.05)"));
        assert!(fs::read_to_string(&s.markdown).unwrap().contains("1 violation"));
    }
}
