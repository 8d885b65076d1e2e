use super::{Dataset, GenStats, GeneratorSpec, OracleParams, ResponseOracle};
use crate::diffnet::Tensor2;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Sidecar metadata for a generated dataset; enough to rebuild the oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub generator: GeneratorSpec,
    pub oracle: OracleParams,
    #[serde(default)]
    pub resampled_rows: usize,
}

impl DatasetMeta {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Integrity(format!("metadata parse: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    /// Absent when only a bare CSV was provided; oracle-dependent metrics
    /// are then unavailable.
    pub oracle: Option<ResponseOracle>,
    pub meta: Option<DatasetMeta>,
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trips every f64 bit-exactly
    format!("{v:.16e}")
}

pub fn dataset_to_csv(ds: &Dataset) -> String {
    let d = ds.d();
    let mut out = String::new();
    for j in 0..d {
        let _ = write!(out, "x_{j},");
    }
    out.push_str("t,y\n");
    for i in 0..ds.n() {
        for j in 0..d {
            out.push_str(&fmt_f64(ds.x.get(i, j)));
            out.push(',');
        }
        out.push_str(&fmt_f64(ds.t[i]));
        out.push(',');
        out.push_str(&fmt_f64(ds.y[i]));
        out.push('\n');
    }
    out
}

fn parse_field(raw: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("{what} `{raw}` is not finite") });
    }
    Ok(v)
}

/// Parse the `x_0..x_{d-1},t,y` CSV format. Errors carry 1-based line
/// numbers; the parser never panics on malformed input.
pub fn parse_dataset_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, message: "empty file, expected header".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "t" || cols[cols.len() - 1] != "y" {
        return Err(Error::Parse {
            line: 1,
            message: "header must be x_0,..,x_{d-1},t,y".into(),
        });
    }
    let d = cols.len() - 2;
    for (j, col) in cols[..d].iter().enumerate() {
        if *col != format!("x_{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column `x_{j}`, found `{col}`"),
            });
        }
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", d + 2, fields.len()),
            });
        }
        for field in &fields[..d] {
            xs.push(parse_field(field, line_no, "covariate")?);
        }
        let ti = parse_field(fields[d], line_no, "treatment")?;
        if !(0.0..=1.0).contains(&ti) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("treatment {ti} outside [0,1]"),
            });
        }
        t.push(ti);
        y.push(parse_field(fields[d + 1], line_no, "outcome")?);
    }
    if t.is_empty() {
        return Err(Error::Parse { line: 2, message: "no data rows".into() });
    }
    let n = t.len();
    let x = Tensor2::from_vec(n, d, xs)?;
    Ok(Dataset { x, t, y, name: "external".into(), seed: 0 })
}

/// Write `data.csv` and `meta.json` into a directory.
pub fn save_dir(
    dir: &Path,
    ds: &Dataset,
    spec: &GeneratorSpec,
    oracle: &ResponseOracle,
    stats: &GenStats,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("data.csv"), dataset_to_csv(ds))?;
    let meta = DatasetMeta {
        name: ds.name.clone(),
        seed: ds.seed,
        n: ds.n(),
        d: ds.d(),
        generator: spec.clone(),
        oracle: oracle.params.clone(),
        resampled_rows: stats.resampled_rows,
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Load a dataset from a directory holding `data.csv` (+ optional
/// `meta.json`) or from a bare CSV file path.
pub fn load_dir(path: &Path) -> Result<LoadedDataset> {
    let (csv_path, meta_path) = if path.is_dir() {
        (path.join("data.csv"), Some(path.join("meta.json")))
    } else {
        (path.to_path_buf(), None)
    };
    let text = std::fs::read_to_string(&csv_path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", csv_path.display()))))?;
    let mut dataset = parse_dataset_csv(&text)?;
    let meta = match meta_path {
        Some(p) if p.exists() => Some(DatasetMeta::from_json_str(&std::fs::read_to_string(p)?)?),
        _ => None,
    };
    let oracle = match &meta {
        Some(m) => {
            if m.n != dataset.n() || m.d != dataset.d() {
                return Err(Error::Integrity(format!(
                    "metadata says {}x{}, csv holds {}x{}",
                    m.n,
                    m.d,
                    dataset.n(),
                    dataset.d()
                )));
            }
            dataset.name = m.name.clone();
            dataset.seed = m.seed;
            Some(ResponseOracle { params: m.oracle.clone() })
        }
        None => None,
    };
    dataset.validate()?;
    Ok(LoadedDataset { dataset, oracle, meta })
}
