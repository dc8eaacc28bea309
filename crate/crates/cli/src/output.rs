//! Output files: `#` provenance lines followed by a CSV body.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use wfd_core::Params;

use crate::Failure;

/// What produced an output file.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub verb: &'static str,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

impl Manifest {
    /// Provenance lines without the leading `#`.
    pub fn provenance(&self) -> Vec<String> {
        let config = self
            .config
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| p.display().to_string());
        vec![
            format!("wfd {} {}", env!("CARGO_PKG_VERSION"), self.verb),
            format!("config {config}"),
            format!("seed {}", self.seed),
        ]
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::config(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let f = File::create(&path)
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn params_line(p: &Params) -> String {
    format!(
        "params d={} m={} beta={} gamma={} boundary={}",
        p.d, p.m, p.beta, p.gamma, p.boundary
    )
}

/// Writes a provenance-stamped CSV table to `<out>/<name>`.
pub fn write_table(
    manifest: &Manifest,
    name: &str,
    params: Option<&Params>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, Failure> {
    let mut out = manifest.create(name)?;
    let io = |e: std::io::Error| Failure::config(format!("writing {name}: {e}"));
    for line in manifest.provenance() {
        writeln!(out, "# {line}").map_err(io)?;
    }
    if let Some(p) = params {
        writeln!(out, "# {}", params_line(p)).map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Failure::config(format!("writing {name}: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(manifest.path(name))
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}
