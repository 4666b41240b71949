//! Dataset ingestion and serialization.
//!
//! Two on-disk layouts are supported:
//!
//! * `long_csv` — a single file with header `sample_id,x1..xq,z1..zp` and one
//!   row per observation point; `sample_id` groups rows into clouds. The
//!   domain is derived as the per-axis bounding box of all points (padded on
//!   any degenerate axis), so a saved file reloads to an identical dataset.
//! * `grid_dir` — a directory with `meta.json` (domain bounds, grid shape,
//!   predictor values per sample) and one flat row-major CSV of grid values
//!   per sample named `sample_<id>.csv`.
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DensityGrid, PointCloud, RegressionDataset, Responses};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    LongCsv,
    GridDir,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridDirMeta {
    domain: DomainMeta,
    shape: Vec<usize>,
    samples: Vec<SampleMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainMeta {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    id: usize,
    x: Vec<f64>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<RegressionDataset> {
    match format {
        DatasetFormat::LongCsv => load_long_csv(path),
        DatasetFormat::GridDir => load_grid_dir(path),
    }
}

/// Writes a dataset in the layout matching its response kind: clouds go to a
/// `long_csv` file, grids to a `grid_dir` directory.
pub fn save_dataset(dataset: &RegressionDataset, path: &Path) -> Result<()> {
    match dataset.responses() {
        Responses::Clouds(_) => save_long_csv(dataset, path),
        Responses::Grids(_) => save_grid_dir(dataset, path),
    }
}

fn parse_field(raw: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {raw:?}"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{what} is not finite: {raw:?}"),
        });
    }
    Ok(value)
}

fn load_long_csv(path: &Path) -> Result<RegressionDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"sample_id") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header starting with sample_id, got {header:?}"),
        });
    }
    let q = columns.iter().filter(|c| c.starts_with('x')).count();
    let p = columns.iter().filter(|c| c.starts_with('z')).count();
    if q == 0 || p == 0 || columns.len() != 1 + q + p {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be sample_id,x1..xq,z1..zp, got {header:?}"),
        });
    }

    // BTreeMap keeps samples ordered by id.
    let mut samples: BTreeMap<u64, (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1; // 1-based, matching editors
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let id: u64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("cannot parse sample_id from {:?}", fields[0]),
        })?;
        let mut x = Vec::with_capacity(q);
        for k in 0..q {
            x.push(parse_field(fields[1 + k], line, &format!("x{}", k + 1))?);
        }
        let mut z = Vec::with_capacity(p);
        for k in 0..p {
            z.push(parse_field(fields[1 + q + k], line, &format!("z{}", k + 1))?);
        }
        let entry = samples.entry(id).or_insert_with(|| (x.clone(), Vec::new()));
        if entry.0 != x {
            return Err(Error::Parse {
                line,
                msg: format!("predictor values for sample {id} differ from earlier rows"),
            });
        }
        entry.1.push(z);
    }

    if samples.len() < 2 {
        return Err(Error::Schema(format!(
            "dataset needs at least 2 samples, found {}",
            samples.len()
        )));
    }
    let ids: Vec<u64> = samples.keys().copied().collect();
    for w in ids.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(Error::Schema(format!(
                "sample ids must be contiguous; gap between {} and {}",
                w[0], w[1]
            )));
        }
    }

    let n = samples.len();
    let mut predictors = Array2::zeros((n, q));
    let mut clouds = Vec::with_capacity(n);
    for (row, (_, (x, z))) in samples.into_iter().enumerate() {
        for (k, v) in x.iter().enumerate() {
            predictors[[row, k]] = *v;
        }
        clouds.push(PointCloud::from_rows(&z)?);
    }

    let domain = bounding_domain(&clouds)?;
    RegressionDataset::new(predictors, Responses::Clouds(clouds), domain)
}

/// Per-axis bounding box of all cloud points; degenerate axes are padded so
/// the box has positive volume.
fn bounding_domain(clouds: &[PointCloud]) -> Result<Domain> {
    let p = clouds[0].dim();
    let mut lower = vec![f64::INFINITY; p];
    let mut upper = vec![f64::NEG_INFINITY; p];
    for c in clouds {
        for point in c.points().rows() {
            for k in 0..p {
                lower[k] = lower[k].min(point[k]);
                upper[k] = upper[k].max(point[k]);
            }
        }
    }
    for k in 0..p {
        if upper[k] - lower[k] <= 0.0 {
            lower[k] -= 0.5;
            upper[k] += 0.5;
        }
    }
    Domain::new(lower, upper)
}

fn save_long_csv(dataset: &RegressionDataset, path: &Path) -> Result<()> {
    let clouds = match dataset.responses() {
        Responses::Clouds(c) => c,
        Responses::Grids(_) => {
            return Err(Error::InvalidArgument(
                "long_csv stores point clouds, not grids".into(),
            ))
        }
    };
    let q = dataset.predictor_dim();
    let p = dataset.domain().dim();
    let mut out = String::new();
    out.push_str("sample_id");
    for k in 0..q {
        out.push_str(&format!(",x{}", k + 1));
    }
    for k in 0..p {
        out.push_str(&format!(",z{}", k + 1));
    }
    out.push('\n');
    for (i, cloud) in clouds.iter().enumerate() {
        let x = dataset.predictor(i);
        for point in cloud.points().rows() {
            out.push_str(&i.to_string());
            for v in x.iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            for v in point.iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn load_grid_dir(path: &Path) -> Result<RegressionDataset> {
    let meta_text = fs::read_to_string(path.join("meta.json"))?;
    let meta: GridDirMeta = serde_json::from_str(&meta_text)?;
    let domain = Domain::new(meta.domain.lower, meta.domain.upper)?;
    if meta.samples.len() < 2 {
        return Err(Error::Schema(format!(
            "dataset needs at least 2 samples, found {}",
            meta.samples.len()
        )));
    }
    for (row, s) in meta.samples.iter().enumerate() {
        if s.id != row {
            return Err(Error::Schema(format!(
                "sample ids must be contiguous from 0; entry {row} has id {}",
                s.id
            )));
        }
    }
    let q = meta.samples[0].x.len();
    let mut predictors = Array2::zeros((meta.samples.len(), q));
    let mut grids = Vec::with_capacity(meta.samples.len());
    for (row, s) in meta.samples.iter().enumerate() {
        if s.x.len() != q {
            return Err(Error::Schema(format!(
                "sample {} has {} predictor values, expected {q}",
                s.id,
                s.x.len()
            )));
        }
        for (k, v) in s.x.iter().enumerate() {
            predictors[[row, k]] = *v;
        }
        let values = read_values_csv(&path.join(format!("sample_{}.csv", s.id)))?;
        grids.push(DensityGrid::new(
            domain.clone(),
            meta.shape.clone(),
            values,
        )?);
    }
    RegressionDataset::new(predictors, Responses::Grids(grids), domain)
}

fn save_grid_dir(dataset: &RegressionDataset, path: &Path) -> Result<()> {
    let grids = match dataset.responses() {
        Responses::Grids(g) => g,
        Responses::Clouds(_) => {
            return Err(Error::InvalidArgument(
                "grid_dir stores density grids, not clouds".into(),
            ))
        }
    };
    fs::create_dir_all(path)?;
    let meta = GridDirMeta {
        domain: DomainMeta {
            lower: dataset.domain().lower().to_vec(),
            upper: dataset.domain().upper().to_vec(),
        },
        shape: grids[0].shape().to_vec(),
        samples: (0..dataset.len())
            .map(|i| SampleMeta {
                id: i,
                x: dataset.predictor(i).to_vec(),
            })
            .collect(),
    };
    fs::write(
        path.join("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    for (i, grid) in grids.iter().enumerate() {
        write_values_csv(&path.join(format!("sample_{i}.csv")), grid.values())?;
    }
    Ok(())
}

/// Flat column of values, one per line, row-major.
pub fn read_values_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        values.push(parse_field(raw, idx + 1, "grid value")?);
    }
    Ok(values)
}

pub fn write_values_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 20);
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
