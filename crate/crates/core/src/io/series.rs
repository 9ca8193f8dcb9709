//! Time-series CSV. Floats carry 17 significant digits so rows round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{EnergyLedger, PositivityReport, RelEntropyReport};
use crate::dynamics::StepReport;
use crate::error::Result;

pub const STEP_COLUMNS: [&str; 6] = [
    "picard_iterations",
    "momentum_iterations",
    "final_residual",
    "dt_used",
    "barrier_margin",
    "rejections",
];

/// Column names in file order.
pub fn columns(twin: bool) -> Vec<&'static str> {
    let mut c = vec!["step"];
    c.extend(EnergyLedger::COLUMNS);
    c.extend(PositivityReport::COLUMNS);
    c.extend(STEP_COLUMNS);
    if twin {
        c.extend(RelEntropyReport::COLUMNS);
    }
    c
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub ledger: EnergyLedger,
    pub positivity: PositivityReport,
    pub report: StepReport,
    pub entropy: Option<RelEntropyReport>,
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl SeriesRow {
    pub fn to_line(&self) -> String {
        let r = &self.report;
        let mut fields = vec![self.step.to_string()];
        fields.extend(self.ledger.values().iter().map(|&v| format_float(v)));
        fields.extend(self.positivity.values().iter().map(|&v| format_float(v)));
        fields.push(r.picard_iterations.to_string());
        fields.push(r.momentum_iterations.to_string());
        fields.push(format_float(r.final_residual));
        fields.push(format_float(r.dt_used));
        fields.push(format_float(r.barrier_margin));
        fields.push(r.rejections.to_string());
        if let Some(e) = &self.entropy {
            fields.extend(e.values().iter().map(|&v| format_float(v)));
        }
        fields.join(",")
    }
}

pub struct SeriesWriter {
    out: BufWriter<File>,
    twin: bool,
}

impl SeriesWriter {
    pub fn create(path: &Path, twin: bool) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", columns(twin).join(","))?;
        Ok(SeriesWriter { out, twin })
    }

    pub fn write(&mut self, row: &SeriesRow) -> Result<()> {
        debug_assert_eq!(row.entropy.is_some(), self.twin);
        writeln!(self.out, "{}", row.to_line())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a series back as a header and numeric rows.
pub fn read_series(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| crate::error::Error::Format("empty series".into()))?
        .split(',')
        .map(String::from)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for line in lines {
        let row = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| crate::error::Error::Format(format!("{s}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(crate::error::Error::Format(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "step,time,kinetic,pressure_potential,polymer,stress_trace,eta_dissipation,\
viscous_dissipation,barrier_dissipation,barrier_work,stress_relaxation,forcing,eta_source,\
min_rho,min_eta,min_eig_t,max_div_u_b,t_norm_l3_75,\
picard_iterations,momentum_iterations,final_residual,dt_used,barrier_margin,rejections";

    #[test]
    fn column_set_matches_golden() {
        assert_eq!(columns(false).join(","), GOLDEN);
        let twin = columns(true).join(",");
        assert_eq!(
            twin,
            format!("{GOLDEN},rel_entropy_e1,rel_entropy_e2,rel_entropy_stress_gap,rel_entropy_total")
        );
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn rows_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut w = SeriesWriter::create(&p, true).unwrap();
        let row = SeriesRow {
            step: 3,
            ledger: EnergyLedger {
                time: 0.003,
                kinetic: 1.0 / 7.0,
                ..Default::default()
            },
            positivity: PositivityReport::default(),
            report: StepReport {
                picard_iterations: 4,
                ..Default::default()
            },
            entropy: Some(RelEntropyReport::default()),
        };
        w.write(&row).unwrap();
        w.flush().unwrap();
        let (h, rows) = read_series(&p).unwrap();
        assert_eq!(h.len(), columns(true).len());
        assert_eq!(rows[0][0], 3.0);
        assert_eq!(rows[0][2], 1.0 / 7.0);
        assert_eq!(rows[0][18], 4.0);
    }
}
