use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, make_initial, Diagnostics, Model, Monitor, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::normal_form::{residual_check, Fault, NormalForm, ResidualReport};
use crate::snapshot::{read_field, write_field, FieldKind};
use crate::spectral::{SpectralField, TorusGrid};

use super::config::RunConfig;
use super::{BUILD_ID, VERSION};

/// Row of `snapshots.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub step: usize,
    pub t: f64,
    pub file: String,
}

/// Contents of `run_meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub build_id: String,
    pub version: String,
    pub dt: f64,
    pub steps_requested: usize,
    pub steps_taken: usize,
    pub final_t: f64,
    /// `completed` or `blowup`
    pub status: String,
    pub blowup: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub meta: RunMeta,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<SnapshotEntry>,
}

/// Grid and initial unknown `U(0)` of a configuration.
pub fn initial_unknown(cfg: &RunConfig) -> Result<(TorusGrid, SpectralField)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let state = make_initial(&grid, &cfg.initial_spec())?;
    Ok((grid, state.unknown()))
}

fn snapshot_name(index: usize) -> String {
    format!("snap_{index:06}.bin")
}

/// Runs a configuration and writes `diagnostics.csv`, `snapshots/`,
/// `snapshots.csv` and `run_meta.json` into `dir`.
///
/// A blow-up ends the run early and is reported through `RunMeta::status`.
pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let clock = Instant::now();
    let (grid, mut u) = initial_unknown(cfg)?;
    cfg.params().warn_if_outside_regime();
    let dt = cfg.time_step(&grid);
    let steps = cfg.steps(&grid);
    let stepper = Stepper::new(&grid, dt, Model::default())?.with_blowup_threshold(cfg.blowup_h3);
    let every = if cfg.snapshot_every == 0 { 10 } else { cfg.snapshot_every };
    fs::create_dir_all(dir)?;
    let snap_dir = dir.join("snapshots");
    if cfg.snapshot_every > 0 {
        fs::create_dir_all(&snap_dir)?;
    }

    let mut diag_writer = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
    let mut monitor = Monitor::new(cfg.params());
    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut record = |u: &SpectralField, step: usize, t: f64, diagnostics: &mut Vec<Diagnostics>| -> Result<()> {
        let d = monitor.record(u, t);
        diag_writer.serialize(d)?;
        diagnostics.push(d);
        if cfg.snapshot_every > 0 {
            let entry = SnapshotEntry { index: snapshots.len(), step, t, file: snapshot_name(snapshots.len()) };
            write_field(&snap_dir.join(&entry.file), FieldKind::Unknown, u)?;
            snapshots.push(entry);
        }
        Ok(())
    };

    record(&u, 0, 0.0, &mut diagnostics)?;
    let mut taken = 0;
    let mut blowup = None;
    for s in 1..=steps {
        let t = (s - 1) as f64 * dt;
        match stepper.step_unknown(&u, t) {
            Ok(next) => u = next,
            Err(Error::BlowUp { t, reason }) => {
                log::warn!("blow-up at t = {t}: {reason}");
                blowup = Some(format!("t = {t}: {reason}"));
                break;
            }
            Err(e) => return Err(e),
        }
        taken = s;
        if s % every == 0 || s == steps {
            record(&u, s, s as f64 * dt, &mut diagnostics)?;
        }
    }
    diag_writer.flush()?;

    if cfg.snapshot_every > 0 {
        let mut w = csv::Writer::from_path(dir.join("snapshots.csv"))?;
        for e in &snapshots {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    let meta = RunMeta {
        config: cfg.clone(),
        build_id: BUILD_ID.into(),
        version: VERSION.into(),
        dt,
        steps_requested: steps,
        steps_taken: taken,
        final_t: taken as f64 * dt,
        status: if blowup.is_some() { "blowup" } else { "completed" }.into(),
        blowup,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(RunSummary { dir: dir.to_path_buf(), meta, diagnostics, snapshots })
}

/// Reads `run_meta.json` and the snapshot trajectory of a run directory.
pub fn load_run(dir: &Path) -> Result<(RunMeta, Trajectory)> {
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(dir.join("run_meta.json"))?)?;
    let grid = meta.config.grid()?;
    let mut reader = csv::Reader::from_path(dir.join("snapshots.csv"))?;
    let mut times = Vec::new();
    let mut unknowns = Vec::new();
    for row in reader.deserialize() {
        let e: SnapshotEntry = row?;
        let (_, u) = read_field(&dir.join("snapshots").join(&e.file), Some(&grid))?;
        times.push(e.t);
        unknowns.push(u);
    }
    Ok((meta, Trajectory { times, unknowns }))
}

/// Integrates a configuration in memory and evaluates the normal-form
/// residual on every `snapshot_every`-th state.
pub fn nf_check(cfg: &RunConfig, fault: Fault) -> Result<ResidualReport> {
    let (grid, u0) = initial_unknown(cfg)?;
    let dt = cfg.time_step(&grid);
    let stepper = Stepper::new(&grid, dt, Model::default())?.with_blowup_threshold(cfg.blowup_h3);
    let traj = integrate(&stepper, &u0, 0.0, cfg.steps(&grid), cfg.snapshot_every.max(1))?;
    residual_check(&traj, &stepper.model(), &NormalForm::new(&grid).with_fault(fault))
}
