//! File formats.
//!
//! Datasets are CSV with a one-line header comment:
//!
//! ```text
//! # hetpref-dataset v1 d1=3 d2=2 n=600 checksum=0123456789abcdef
//! psi0,psi_1,psi_2,z_1,z_2,z_3,y
//! ...
//! ```
//!
//! The checksum is the first 8 bytes (big-endian) of the SHA-256 of the
//! data rows, each terminated by `\n`. Floats are written with 17
//! significant digits. Artifacts and reports are JSON. The path `-` means
//! stdin or stdout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::InferenceArtifact;
use crate::model::{ModelParams, PreferenceDataset};

pub const DATASET_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: u32 = 1;
const MAGIC: &str = "# hetpref-dataset";

fn label(path: &Path) -> String {
    path.display().to_string()
}

pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(std::io::stdout())));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header fields of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetFileHeader {
    pub format_version: u32,
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub checksum: u64,
}

impl DatasetFileHeader {
    fn render(&self) -> String {
        format!(
            "{MAGIC} v{} d1={} d2={} n={} checksum={:016x}",
            self.format_version, self.d1, self.d2, self.n, self.checksum
        )
    }

    fn parse(line: &str, path: &str) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_string(),
            reason,
        };
        let rest = line
            .strip_prefix(MAGIC)
            .ok_or_else(|| fail(format!("first line must start with {MAGIC:?}")))?;
        let mut fields = rest.split_whitespace();
        let version = fields
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| fail("missing format version".into()))?;
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: DATASET_VERSION,
            });
        }
        let (mut d1, mut d2, mut n, mut checksum) = (None, None, None, None);
        for f in fields {
            let (key, value) = f
                .split_once('=')
                .ok_or_else(|| fail(format!("header field {f:?} is not key=value")))?;
            let num = || {
                value
                    .parse::<usize>()
                    .map_err(|_| fail(format!("header {key} = {value:?} is not a count")))
            };
            match key {
                "d1" => d1 = Some(num()?),
                "d2" => d2 = Some(num()?),
                "n" => n = Some(num()?),
                "checksum" => {
                    checksum = Some(
                        u64::from_str_radix(value, 16)
                            .map_err(|_| fail(format!("bad checksum {value:?}")))?,
                    )
                }
                _ => return Err(fail(format!("unknown header field {key:?}"))),
            }
        }
        let need = |v: Option<usize>, k: &str| v.ok_or_else(|| fail(format!("header lacks {k}")));
        Ok(Self {
            format_version: version,
            d1: need(d1, "d1")?,
            d2: need(d2, "d2")?,
            n: need(n, "n")?,
            checksum: checksum.ok_or_else(|| fail("header lacks checksum".into()))?,
        })
    }
}

pub fn column_names(d1: usize, d2: usize) -> Vec<String> {
    let mut cols = vec!["psi0".to_string()];
    cols.extend((1..=d2).map(|j| format!("psi_{j}")));
    cols.extend((1..=d1).map(|j| format!("z_{j}")));
    cols.push("y".into());
    cols
}

fn row_checksum(hasher: Sha256) -> u64 {
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn write_dataset_to(data: &PreferenceDataset, out: &mut dyn Write, path: &str) -> Result<()> {
    let mut body = String::new();
    for s in data.iter() {
        body.push_str(&fmt_f64(s.psi0));
        for v in s.psi.iter().chain(s.z) {
            body.push(',');
            body.push_str(&fmt_f64(*v));
        }
        body.push(',');
        body.push_str(if s.y == 1 { "1" } else { "0" });
        body.push('\n');
    }
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    let header = DatasetFileHeader {
        format_version: DATASET_VERSION,
        d1: data.d1(),
        d2: data.d2(),
        n: data.len(),
        checksum: row_checksum(hasher),
    };
    let io_err = |e| Error::io(path, e);
    writeln!(out, "{}", header.render()).map_err(io_err)?;
    writeln!(out, "{}", column_names(data.d1(), data.d2()).join(",")).map_err(io_err)?;
    out.write_all(body.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_dataset(data: &PreferenceDataset, path: &Path) -> Result<()> {
    let mut out = create_output(path)?;
    write_dataset_to(data, &mut out, &label(path))
}

pub fn read_dataset_from(input: &mut dyn BufRead, path: &str) -> Result<PreferenceDataset> {
    let mut lines = input.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(Error::io(path, e)),
            None => Err(Error::Format {
                path: path.to_string(),
                reason: format!("file ends before the {what}"),
            }),
        }
    };
    let (_, first) = next_line("header")?;
    let header = DatasetFileHeader::parse(&first, path)?;
    let cols = column_names(header.d1, header.d2);
    let (_, names) = next_line("column names")?;
    let found: Vec<&str> = names.split(',').map(str::trim).collect();
    if found != cols {
        return Err(Error::Format {
            path: path.to_string(),
            reason: format!("expected columns {}, found {names}", cols.join(",")),
        });
    }

    let mut data = PreferenceDataset::with_dims(header.d1, header.d2)?;
    let mut hasher = Sha256::new();
    let width = cols.len();
    let mut row = vec![0.0; width - 1];
    let mut rows = 0usize;
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        let parse_err = |column: &str, reason: String| Error::Parse {
            path: path.to_string(),
            line: line_no,
            column: column.to_string(),
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                "*",
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        for (k, f) in fields[..width - 1].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(&cols[k], format!("{f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(&cols[k], format!("{f:?} is not finite")));
            }
            row[k] = v;
        }
        let y = match fields[width - 1].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(parse_err("y", format!("label must be 0 or 1, found {other:?}")))
            }
        };
        let (psi0, rest) = row.split_first().expect("row has psi0");
        let (psi, z) = rest.split_at(header.d2);
        data.push_parts(*psi0, psi, z, y)?;
        rows += 1;
    }
    if rows != header.n {
        return Err(Error::Format {
            path: path.to_string(),
            reason: format!("header says n={} but the file has {rows} rows", header.n),
        });
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let actual = row_checksum(hasher);
    if actual != header.checksum {
        return Err(Error::Checksum {
            path: path.to_string(),
            expected: header.checksum,
            actual,
        });
    }
    Ok(data)
}

pub fn read_dataset(path: &Path) -> Result<PreferenceDataset> {
    let mut input = open_input(path)?;
    read_dataset_from(&mut input, &label(path))
}

/// On-disk form of an [`InferenceArtifact`]. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactFile {
    pub format_version: u32,
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub s2_theta: Vec<f64>,
    pub s2_gamma: Vec<f64>,
    pub jitter_used: f64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn exactly_symmetric(v: &[f64], dim: usize) -> bool {
    (0..dim).all(|i| (0..i).all(|j| v[i * dim + j] == v[j * dim + i]))
}

impl ArtifactFile {
    pub fn from_artifact(a: &InferenceArtifact) -> Self {
        Self {
            format_version: ARTIFACT_VERSION,
            d1: a.d1(),
            d2: a.d2(),
            n: a.n(),
            theta: a.params().theta.clone(),
            gamma: a.params().gamma.clone(),
            s2_theta: row_major(a.s2_theta()),
            s2_gamma: row_major(a.s2_gamma()),
            jitter_used: a.jitter_used(),
        }
    }

    /// Checks the version and shapes, then rebuilds the validated artifact.
    pub fn into_artifact(self) -> Result<InferenceArtifact> {
        if self.format_version != ARTIFACT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                supported: ARTIFACT_VERSION,
            });
        }
        let check = |what, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual,
                })
            }
        };
        check("theta", self.d1, self.theta.len())?;
        check("gamma", self.d2, self.gamma.len())?;
        check("s2_theta", self.d1 * self.d1, self.s2_theta.len())?;
        check("s2_gamma", self.d2 * self.d2, self.s2_gamma.len())?;
        InferenceArtifact::new(
            ModelParams::new(self.theta, self.gamma),
            self.n,
            DMatrix::from_row_slice(self.d1, self.d1, &self.s2_theta),
            DMatrix::from_row_slice(self.d2, self.d2, &self.s2_gamma),
            self.jitter_used,
        )
    }
}

pub fn write_artifact(artifact: &InferenceArtifact, path: &Path) -> Result<()> {
    let file = ArtifactFile::from_artifact(artifact);
    for (name, v, d) in [
        ("s2_theta", &file.s2_theta, file.d1),
        ("s2_gamma", &file.s2_gamma, file.d2),
    ] {
        if !exactly_symmetric(v, d) {
            return Err(Error::Format {
                path: label(path),
                reason: format!("refusing to write: {name} is not symmetric"),
            });
        }
    }
    write_json(&file, path)
}

pub fn read_artifact(path: &Path) -> Result<InferenceArtifact> {
    read_json::<ArtifactFile>(path)?.into_artifact()
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut out = create_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open_input(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: label(path),
        reason: e.to_string(),
    })
}

/// Tidy `x,y,series` rows for external plotting.
pub fn write_plot_csv(rows: &[(f64, f64, String)], path: &Path) -> Result<()> {
    let mut out = create_output(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(out, "x,y,series").map_err(io_err)?;
    for (x, y, s) in rows {
        writeln!(out, "{},{},{}", x, y, s).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
