//! The single writer of a run's output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rev_euler::diagnostics::write_csv;
use rev_euler::{Error, Result, VectorField};
use serde::Serialize;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// One JSON document per line.
    pub fn jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<()> {
        let mut w = self.file(name)?;
        for item in items {
            serde_json::to_writer(&mut w, item).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv(&self, name: &str, (header, rows): (Vec<&str>, Vec<Vec<f64>>)) -> Result<()> {
        let mut w = self.file(name)?;
        write_csv(&mut w, &header, &rows)?;
        w.flush()?;
        Ok(())
    }

    pub fn field(&self, name: &str, v: &VectorField) -> Result<()> {
        let mut w = self.file(name)?;
        v.write_fld1(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
