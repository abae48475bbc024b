//! Deterministic CSV and text artifacts: header row, `.` decimals,
//! shortest round-trip floats, LF line endings.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{ConvergenceTable, RateReport};
use crate::corrector::CorrectorReport;
use crate::transport::{Diagnostics, Evolution};
use crate::{Error, Point, Result};

/// A float in its shortest round-trip form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// In-memory CSV table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self { header: header.split(',').map(String::from).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// `x,y,u1,u2,provenance` per sample.
pub fn field_table(points: &[Point], values: &[Point], provenance: &str) -> Table {
    let mut t = Table::new("x,y,u1,u2,provenance");
    for (x, u) in points.iter().zip(values) {
        t.push(vec![num(x.re), num(x.im), num(u.re), num(u.im), provenance.to_string()]);
    }
    t
}

fn report_row(r: &CorrectorReport) -> Vec<String> {
    let mut row = vec![num(r.eps), num(r.alpha), num(r.mu), r.shape.to_string()];
    row.extend(r.w.iter().map(|v| num(*v)));
    row.push(num(r.total));
    row.push(num(r.inclusions));
    row.extend(r.w_err.iter().map(|v| num(*v)));
    row.push(num(r.total_err));
    row.push(num(r.inclusions_err));
    row.push(num(r.log_ratio_sup));
    row
}

pub fn corrector_table(reports: &[CorrectorReport]) -> Table {
    let mut t = Table::new(CorrectorReport::CSV_HEADER);
    for r in reports {
        t.push(report_row(r));
    }
    t
}

pub fn rates_table(rep: &RateReport) -> Table {
    let mut t = Table::new(RateReport::CSV_HEADER);
    for r in &rep.rows {
        let mut row = vec![num(r.report.eps), num(r.norm)];
        row.extend(r.report.w.iter().map(|v| num(*v)));
        row.extend([
            num(r.report.total),
            num(r.report.inclusions),
            num(r.quad_err),
            r.flagged.to_string(),
            num(r.profile_ratios[0]),
            num(r.profile_ratios[1]),
        ]);
        t.push(row);
    }
    t
}

pub fn convergence_table(tab: &ConvergenceTable) -> Table {
    let mut t = Table::new(ConvergenceTable::CSV_HEADER);
    for r in &tab.rows {
        for k in 0..3 {
            if r.errors[k].is_finite() {
                t.push(vec![num(r.eps), num(r.times[k]), num(r.errors[k]), r.particles.to_string()]);
            }
        }
    }
    t
}

fn diag_row(d: &Diagnostics) -> Vec<String> {
    vec![
        num(d.t),
        num(d.l1),
        num(d.l2),
        num(d.linf),
        num(d.mass),
        num(d.max_circulation()),
        num(d.radius),
        d.clearance.map(num).unwrap_or_default(),
    ]
}

pub fn diagnostics_table(diags: &[Diagnostics]) -> Table {
    let mut t = Table::new(Diagnostics::CSV_HEADER);
    for d in diags {
        t.push(diag_row(d));
    }
    t
}

/// `t,id,x,y,value` for every recorded snapshot.
pub fn trajectory_table(run: &Evolution) -> Table {
    let mut t = Table::new("t,id,x,y,value");
    for (time, pos) in &run.snapshots {
        for (id, (x, p)) in pos.iter().zip(&run.state.particles).enumerate() {
            t.push(vec![num(*time), id.to_string(), num(x.re), num(x.im), num(p.value)]);
        }
    }
    t
}

/// Output directory handle that also writes the run manifest.
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn table(&self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.path(name))
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    /// `manifest.txt`: version, subcommand and the resolved configuration.
    pub fn manifest(&self, subcommand: &str, resolved_toml: &str) -> Result<()> {
        let body = format!(
            "euler-sieve {}\nsubcommand = {subcommand}\n\n{resolved_toml}",
            crate::VERSION
        );
        self.text("manifest.txt", &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf_and_quotes_commas() {
        let mut t = Table::new("a,b");
        t.push(vec![num(0.1), "ellipse(1,0.5)".into()]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,b\n0.1,\"ellipse(1,0.5)\"\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
