//! Simulation driver: stepping to fixed output times, CSV rows, snapshot sets and
//! the terminal status file. A twin run advances a refined copy on its own thread.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use serde::Serialize;

use crate::diagnostics::{energy_ledger_with_force, positivity_report, relative_entropy, RelEntropyReport};
use crate::dynamics::{adaptive_dt_with, step_with_dt, Forcing, State, StepReport};
use crate::error::{Error, Result};
use crate::fields::Grid;

use super::config::RunConfig;
use super::presets::{forcing, preset};
use super::series::{SeriesRow, SeriesWriter};
use super::snapshot::write_state;

/// Relative slack when deciding that an output time has been reached.
const TIME_SLACK: f64 = 1e-9;

/// A state with its forcing, advanced to the output times `k dt`.
pub struct Simulation {
    pub config: RunConfig,
    pub state: State,
    pub step_index: usize,
    forcing: Box<dyn Forcing>,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build()?;
        let state = preset(config.scenario, &grid, &config.params, config.seed)?;
        Self::from_state(config, state)
    }

    pub fn from_state(config: RunConfig, state: State) -> Result<Self> {
        let forcing = forcing(config.scenario, &config.forcing, state.dim(), &config.params);
        Ok(Simulation {
            config,
            state,
            step_index: 0,
            forcing,
        })
    }

    pub fn forcing(&self) -> &dyn Forcing {
        self.forcing.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        self.state.grid()
    }

    /// Advances to `target`, splitting into sub-steps as rejections or the adaptive
    /// choice require. The report sums iteration counts and keeps the smallest dt and margin.
    pub fn advance_to(&mut self, target: f64) -> Result<StepReport> {
        let nominal = self.config.step.dt;
        let slack = TIME_SLACK * nominal;
        let mut total = StepReport {
            dt_used: f64::INFINITY,
            barrier_margin: f64::INFINITY,
            ..Default::default()
        };
        while self.state.time < target - slack {
            let remaining = target - self.state.time;
            let mut dt = if self.config.step.adaptive {
                adaptive_dt_with(&self.state, &self.config.step, self.forcing.as_ref())?
            } else {
                nominal
            };
            if dt >= remaining - slack {
                dt = remaining;
            }
            let (mut next, r) = step_with_dt(&self.state, dt, &self.config.step, self.forcing.as_ref())?;
            if (next.time - target).abs() <= slack {
                next.time = target;
            }
            self.state = next;
            total.picard_iterations += r.picard_iterations;
            total.momentum_iterations += r.momentum_iterations;
            total.final_residual = r.final_residual;
            total.dt_used = total.dt_used.min(r.dt_used);
            total.barrier_margin = total.barrier_margin.min(r.barrier_margin);
            total.rejections += r.rejections;
        }
        Ok(total)
    }

    /// One output step of length `step.dt`.
    pub fn advance_step(&mut self) -> Result<StepReport> {
        let target = (self.step_index + 1) as f64 * self.config.step.dt;
        let r = self.advance_to(target)?;
        self.step_index += 1;
        Ok(r)
    }

    pub fn row(&self, report: StepReport, entropy: Option<RelEntropyReport>) -> SeriesRow {
        let f = self.forcing.body_force(self.grid(), self.state.time);
        SeriesRow {
            step: self.step_index,
            ledger: energy_ledger_with_force(&self.state, f.as_ref()),
            positivity: positivity_report(&self.state),
            report,
            entropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatus {
    pub status: String,
    pub steps_completed: usize,
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_state: State,
    pub out_dir: PathBuf,
}

/// Configuration of the refined twin: doubled resolution and a reduced time step.
/// The twin starts from the coarse initial state interpolated onto its grid.
pub fn twin_config(config: &RunConfig) -> RunConfig {
    let mut fine = config.clone();
    fine.grid.n *= 2;
    fine.step.dt *= config.twin_dt_factor;
    fine.twin_run = false;
    fine
}

fn snapshot_dir(out: &Path, step: usize) -> PathBuf {
    out.join(format!("step_{step:06}"))
}

fn write_status(out: &Path, status: &RunStatus) -> Result<()> {
    let text = serde_json::to_string_pretty(status).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out.join("status.json"), text)?;
    Ok(())
}

/// Runs `config` writing into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    run_in(config, Path::new(&config.out_dir))
}

/// Runs `config` writing `config.json`, `series.csv`, snapshot sets and `status.json` into `out`.
///
/// On a solver failure the CSV written so far is flushed, `status.json` records the
/// failing step and the error is returned.
pub fn run_in(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), config.to_json())?;
    let mut sim = Simulation::new(config.clone())?;
    let twin = config.twin_enabled();
    let mut csv = SeriesWriter::create(&out.join("series.csv"), twin)?;
    let steps = config.steps();
    let coarse_grid = sim.grid().clone();

    let result = std::thread::scope(|scope| -> Result<()> {
        let fine_rx = if twin {
            let fine_cfg = twin_config(config);
            let (tx, rx) = sync_channel::<Result<State>>(1);
            let rows: Vec<usize> = (0..=steps).filter(|k| k % config.csv_every == 0 || *k == steps).collect();
            let coarse_dt = config.step.dt;
            let grid = coarse_grid.clone();
            let initial = sim.state.clone();
            scope.spawn(move || {
                let start = fine_cfg.grid.build().and_then(|g| initial.resample(&g));
                let mut fine = match start.and_then(|s| Simulation::from_state(fine_cfg, s)) {
                    Ok(s) => s,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                for k in rows {
                    let msg = fine
                        .advance_to(k as f64 * coarse_dt)
                        .and_then(|_| fine.state.resample(&grid));
                    let failed = msg.is_err();
                    if tx.send(msg).is_err() || failed {
                        return;
                    }
                }
            });
            Some(rx)
        } else {
            None
        };

        let entropy = |state: &State| -> Result<Option<RelEntropyReport>> {
            match &fine_rx {
                Some(rx) => {
                    let reference = rx
                        .recv()
                        .map_err(|_| Error::Domain("twin run stopped early".into()))??;
                    relative_entropy(state, &reference).map(Some)
                }
                None => Ok(None),
            }
        };

        let e0 = entropy(&sim.state)?;
        csv.write(&sim.row(StepReport::default(), e0))?;
        write_state(&snapshot_dir(out, 0), &sim.state)?;
        for k in 1..=steps {
            let report = sim.advance_step()?;
            if k % config.csv_every == 0 || k == steps {
                let e = entropy(&sim.state)?;
                csv.write(&sim.row(report, e))?;
            }
            if k % config.snapshot_every == 0 || k == steps {
                write_state(&snapshot_dir(out, k), &sim.state)?;
            }
        }
        Ok(())
    });
    csv.flush()?;
    let wall_time = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => {
            let status = RunStatus {
                status: "complete".into(),
                steps_completed: sim.step_index,
                wall_time,
                error: None,
                exit_code: None,
            };
            write_status(out, &status)?;
            Ok(RunOutcome {
                status,
                final_state: sim.state,
                out_dir: out.to_path_buf(),
            })
        }
        Err(e) => {
            let status = RunStatus {
                status: "incomplete".into(),
                steps_completed: sim.step_index,
                wall_time,
                error: Some(format!("step {}: {e}", sim.step_index + 1)),
                exit_code: Some(e.exit_code()),
            };
            write_status(out, &status)?;
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::{parse_config, Scenario};
    use crate::io::series::{columns, read_series};

    #[test]
    fn equilibrium_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(r#"{"grid":{"n":8},"end_time":0.004,"step":{"dt":0.001},"snapshot_every":2}"#).unwrap();
        let o = run_in(&cfg, dir.path()).unwrap();
        assert_eq!(o.status.steps_completed, 4);
        for k in [0, 2, 4] {
            assert!(snapshot_dir(dir.path(), k).join("rho.bin").exists());
        }
        let (h, rows) = read_series(&dir.path().join("series.csv")).unwrap();
        assert_eq!(h, columns(false));
        assert_eq!(rows.len(), 5);
        assert!((rows[4][1] - 0.004).abs() < 1e-15);
        let status: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("status.json")).unwrap()).unwrap();
        assert_eq!(status["status"], "complete");
    }

    #[test]
    fn advance_hits_output_times_exactly() {
        let mut cfg = RunConfig::default();
        cfg.grid.n = 8;
        cfg.scenario = Scenario::RandomSmooth;
        cfg.step.dt = 0.01;
        cfg.step.adaptive = true;
        let mut sim = Simulation::new(cfg).unwrap();
        sim.advance_step().unwrap();
        sim.advance_step().unwrap();
        assert_eq!(sim.state.time, 0.02);
    }

    #[test]
    fn twin_run_appends_entropy_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(
            r#"{"grid":{"n":8},"scenario":"twin-run","end_time":0.002,"step":{"dt":0.001},"twin_dt_factor":0.5}"#,
        )
        .unwrap();
        run_in(&cfg, dir.path()).unwrap();
        let (h, rows) = read_series(&dir.path().join("series.csv")).unwrap();
        assert_eq!(h, columns(true));
        let total = h.len() - 1;
        assert!(rows[0][total].abs() < 1e-12, "{}", rows[0][total]);
        assert!(rows[2][total] > 0.0);
    }

    #[test]
    fn failure_is_recorded_in_status() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(
            r#"{"grid":{"n":8},"scenario":"random-smooth","end_time":0.01,"step":{"dt":0.01,"picard_max":1}}"#,
        )
        .unwrap();
        let e = run_in(&cfg, dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let status: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("status.json")).unwrap()).unwrap();
        assert_eq!(status["status"], "incomplete");
        assert_eq!(status["steps_completed"], 0);
        assert_eq!(status["exit_code"], 3);
        let (_, rows) = read_series(&dir.path().join("series.csv")).unwrap();
        assert_eq!(rows.len(), 1);
    }
}
