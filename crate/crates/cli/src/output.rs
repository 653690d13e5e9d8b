//! CSV and JSON emission.
//!
//! Every CSV starts with a `# indiff <kind> v<version>` comment line that
//! pins the column order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::Failure;

pub struct Table {
    inner: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: &Path, kind: &str, version: u32, header: &[String]) -> Result<Self, Failure> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "# indiff {kind} v{version}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        Ok(Table { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), Failure> {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    // adding zero turns -0 into 0
    let x = x + 0.0;
    if x != 0.0 && x.is_finite() && !(1e-4..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn nums(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|x| num(*x))
}

pub fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}
