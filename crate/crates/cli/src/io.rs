//! Dataset loading, staged output directories and run manifests.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use mixsel_core::{validate_dataset, Dataset};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{csv_err, io_err, CliError, CliResult};
use crate::settings::ModelSettings;

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// A delimited file held as named numeric columns.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path, delimiter: char) -> CliResult<Table> {
        let delimiter = u8::try_from(delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "delimiter `{delimiter}` is not a single ASCII character"
                ))
            })?;
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err(path))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_err(path))?
            .iter()
            .map(str::to_string)
            .collect();
        let schema = |message: String| CliError::Schema {
            path: path.to_path_buf(),
            message,
        };
        let mut seen = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if h.is_empty() {
                return Err(schema(format!("column {} has an empty name", i + 1)));
            }
            if seen.insert(h.as_str(), i).is_some() {
                return Err(schema(format!("duplicate column `{h}`")));
            }
        }
        let mut columns = vec![Vec::new(); header.len()];
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err(path))?;
            // Header is line 1.
            let line = r + 2;
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    schema(format!(
                        "line {line}, column `{}`: `{field}` is not a number",
                        header[c]
                    ))
                })?;
                columns[c].push(v);
            }
        }
        Ok(Table {
            path: path.to_path_buf(),
            header,
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema {
                path: self.path.clone(),
                message: format!("no column named `{name}`"),
            })
    }

    pub fn matrix(&self, names: &[String]) -> CliResult<DMatrix<f64>> {
        let idx = names
            .iter()
            .map(|n| self.column(n))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.rows(), idx.len(), |i, j| {
            self.columns[idx[j]][i]
        }))
    }
}

/// Loads and validates the dataset named by the settings.
pub fn load_dataset(s: &ModelSettings) -> CliResult<Dataset> {
    let (path, outcome) = s.require_data()?;
    let table = Table::read(path, s.delimiter.unwrap_or(','))?;
    let covariates = s.covariates.clone().unwrap_or_default();
    let exposures = match &s.exposures {
        Some(e) => e.clone(),
        None => table
            .header
            .iter()
            .filter(|h| *h != outcome && !covariates.contains(h))
            .cloned()
            .collect(),
    };
    for name in &exposures {
        if name == outcome || covariates.contains(name) {
            return Err(CliError::Usage(format!(
                "column `{name}` is listed as an exposure and as the outcome or a covariate"
            )));
        }
    }
    let y = table.columns[table.column(outcome)?].clone();
    let ds = Dataset {
        y,
        x: table.matrix(&exposures)?,
        c: table.matrix(&covariates)?,
        exposure_names: exposures,
        covariate_names: covariates,
    };
    validate_dataset(ds).map_err(|e| CliError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a file of exposure rows, matching columns by name.
pub fn read_exposure_rows(
    path: &Path,
    names: &[String],
    delimiter: char,
) -> CliResult<DMatrix<f64>> {
    Table::read(path, delimiter)?.matrix(names)
}

/// Output directory written under a staging name and renamed into place on
/// success; the staging directory is removed if the run fails.
pub struct Staged {
    target: PathBuf,
    staging: PathBuf,
    force: bool,
    done: bool,
}

impl Staged {
    pub fn create(target: &Path, force: bool) -> CliResult<Staged> {
        if target.exists() && !force {
            return Err(CliError::OutputExists(target.to_path_buf()));
        }
        let mut name = target
            .file_name()
            .ok_or_else(|| {
                CliError::Usage(format!("invalid output directory {}", target.display()))
            })?
            .to_os_string();
        name.push(".partial");
        let staging = target.with_file_name(name);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        Ok(Staged {
            target: target.to_path_buf(),
            staging,
            force,
            done: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    /// Sorted relative paths of every file written so far.
    pub fn files(&self) -> CliResult<Vec<String>> {
        let mut out = Vec::new();
        let mut stack = vec![self.staging.clone()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = entry.map_err(io_err(&dir))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(&self.staging).expect("inside staging");
                    out.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn commit(mut self) -> CliResult<PathBuf> {
        if self.target.exists() && self.force {
            fs::remove_dir_all(&self.target).map_err(io_err(&self.target))?;
        }
        fs::rename(&self.staging, &self.target).map_err(io_err(&self.target))?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Full-precision text for a real; round-trips exactly.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvOut {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn create(path: PathBuf, header: &[&str]) -> CliResult<CsvOut> {
        let mut writer = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        writer.write_record(header).map_err(csv_err(&path))?;
        Ok(CsvOut { writer, path })
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer.flush().map_err(io_err(&self.path))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written as `manifest.json` in every output directory.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub argv: Vec<String>,
    pub settings: serde_json::Value,
    pub threads: usize,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

impl<'a> Manifest<'a> {
    pub fn new<S: Serialize>(command: &'a str, settings: &S) -> CliResult<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            settings: serde_json::to_value(settings)
                .map_err(|e| CliError::Serialize(e.to_string()))?,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
        })
    }

    pub fn input(mut self, path: &Path) -> CliResult<Self> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(self)
    }

    pub fn results<T: Serialize>(mut self, value: &T) -> CliResult<Self> {
        self.results =
            serde_json::to_value(value).map_err(|e| CliError::Serialize(e.to_string()))?;
        Ok(self)
    }

    /// Lists the staged files and writes the manifest beside them.
    pub fn write(mut self, out: &Staged) -> CliResult<()> {
        self.outputs = out.files()?;
        self.outputs.push("manifest.json".into());
        self.outputs.sort();
        write_json(&out.file("manifest.json"), &self)
    }
}
