//! Atomic file output, checkpoints and report tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boussinesq::BoussinesqState;
use crate::error::{Error, Result};
use crate::harness::{ReductionReport, ResidualReport};
use crate::spectral::{Grid, RealField};

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

const CHECKPOINT_FORMAT: &str = "bnls-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing state record: grid metadata, time and both fields.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    lengths: Vec<f64>,
    points: Vec<usize>,
    t: f64,
    u: Vec<f64>,
    ut: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, s: &BoussinesqState) -> Result<()> {
    let c = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        lengths: s.grid().lengths().to_vec(),
        points: s.grid().points().to_vec(),
        t: s.t,
        u: s.u.values.clone(),
        ut: s.ut.values.clone(),
    };
    write_json(path, &c)
}

pub fn load_checkpoint(path: &Path) -> Result<BoussinesqState> {
    let c: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(Error::config(
            path.display().to_string(),
            format!("unsupported checkpoint {} v{}", c.format, c.version),
        ));
    }
    let grid = Grid::new(c.lengths, c.points)?;
    BoussinesqState::new(c.t, RealField::new(grid.clone(), c.u)?, RealField::new(grid, c.ut)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub const REDUCTION_COLUMNS: [&str; 12] = [
    "eps",
    "t",
    "err_sup_terms1",
    "err_sup_terms2",
    "err_sup_terms3",
    "err_l2_terms1",
    "err_l2_terms2",
    "err_l2_terms3",
    "residual_sup",
    "mass_drift",
    "ham_drift",
    "beta_hat",
];

pub fn reduction_csv(report: &ReductionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REDUCTION_COLUMNS).map_err(csv_err)?;
    for r in &report.records {
        for s in &r.samples {
            let mut row = vec![format!("{:e}", r.eps), format!("{:e}", s.t)];
            row.extend(s.err_sup.iter().map(|v| format!("{v:e}")));
            row.extend(s.err_l2.iter().map(|v| format!("{v:e}")));
            row.push(opt(s.residual_sup));
            row.push(format!("{:e}", s.mass_drift));
            row.push(format!("{:e}", s.ham_drift));
            row.push(opt(s.beta_hat));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn residual_csv(report: &ResidualReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "t", "terms", "residual_sup", "initial_mismatch"]).map_err(csv_err)?;
    for r in &report.records {
        for &(t, v) in &r.residuals {
            w.write_record([
                format!("{:e}", r.eps),
                format!("{t:e}"),
                report.terms.to_string(),
                format!("{v:e}"),
                format!("{:e}", r.initial_mismatch),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `<stem>-<hash8>.json` and `.csv` in `dir`.
pub fn report_paths(dir: &Path, stem: &str, config_hash: &str) -> (PathBuf, PathBuf) {
    let base = format!("{stem}-{}", &config_hash[..8.min(config_hash.len())]);
    (dir.join(format!("{base}.json")), dir.join(format!("{base}.csv")))
}

pub fn write_reduction_report(dir: &Path, report: &ReductionReport) -> Result<(PathBuf, PathBuf)> {
    let (json, csv) = report_paths(dir, "reduction", &report.provenance.config_hash);
    write_json(&json, report)?;
    write_atomic(&csv, reduction_csv(report)?.as_bytes())?;
    Ok((json, csv))
}

pub fn write_residual_report(dir: &Path, report: &ResidualReport) -> Result<(PathBuf, PathBuf)> {
    let stem = format!("fas-residual-terms{}", report.terms);
    let (json, csv) = report_paths(dir, &stem, &report.provenance.config_hash);
    write_json(&json, report)?;
    write_atomic(&csv, residual_csv(report)?.as_bytes())?;
    Ok((json, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(vec![6.0, 2.0], vec![8, 4]).unwrap();
        let s = BoussinesqState::new(
            1.25,
            RealField::from_fn(&g, |x| x[0].sin() * 1e-3 + x[1]),
            RealField::from_fn(&g, |x| (0.1 * x[0]).exp()),
        )
        .unwrap();
        let p = dir.path().join("nested/state.json");
        save_checkpoint(&p, &s).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), s);
        std::fs::write(&p, b"{\"format\":\"other\"}").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
