//! On-disk formats: dataset manifest plus per-snapshot CSVs, trajectory CSVs,
//! square gene × gene matrices, and edge lists.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{
    EdgeProbabilityMatrix, ExpressionMatrix, SnapshotDataset, SplitTag, TrajectoryOrigin,
    TrajectorySet,
};
use crate::error::{invalid, shape_err, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotEntry {
    pub time: f64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub gene_names: Vec<String>,
    pub snapshots: Vec<SnapshotEntry>,
    #[serde(default)]
    pub split: SplitTag,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::csv(path, format!("{other:?}")),
    }
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::csv(
            path,
            format!("line {line}: cannot parse {field:?} as a number"),
        )
    })
}

/// Reads a manifest and its snapshot CSVs. Snapshot paths are relative to the manifest.
pub fn load_dataset(path: &Path) -> Result<SnapshotDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for entry in &manifest.snapshots {
        let snap_path = base.join(&entry.file);
        snapshots.push(load_snapshot_csv(
            &snap_path,
            entry.time,
            &manifest.gene_names,
        )?);
    }
    SnapshotDataset::new(snapshots, manifest.gene_names, manifest.split)
}

fn load_snapshot_csv(path: &Path, time: f64, genes: &[String]) -> Result<ExpressionMatrix> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let cell_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let name = rec.get(0).unwrap_or_default().to_owned();
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(f, path, i + 2))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != cell_ids.len() {
            return Err(Error::csv(path, format!("line {}: ragged row", i + 2)));
        }
        rows.push((name, vals));
    }
    if rows.len() != genes.len() {
        return Err(shape_err!(
            "gene count mismatch: {} has {} rows, manifest names {} genes",
            path.display(),
            rows.len(),
            genes.len()
        ));
    }
    let mut values = Array2::zeros((genes.len(), cell_ids.len()));
    for (r, gene) in genes.iter().enumerate() {
        let (_, vals) = rows
            .iter()
            .find(|(name, _)| name == gene)
            .ok_or_else(|| invalid!("gene {gene:?} missing from {}", path.display()))?;
        for (p, v) in vals.iter().enumerate() {
            values[[r, p]] = *v;
        }
    }
    ExpressionMatrix::with_cell_ids(values, time, cell_ids)
}

/// Writes `manifest.json` plus `snap_NNN.csv` files under `dir`, returning the manifest path.
pub fn save_dataset(ds: &SnapshotDataset, dir: &Path) -> Result<PathBuf> {
    save_dataset_as(ds, dir, "manifest.json", "snap")
}

/// Like [`save_dataset`] with an explicit manifest file name and snapshot file prefix.
pub fn save_dataset_as(
    ds: &SnapshotDataset,
    dir: &Path,
    manifest_name: &str,
    prefix: &str,
) -> Result<PathBuf> {
    // SnapshotDataset upholds these, but a cheap recheck keeps the writer total.
    if ds.gene_names().is_empty() {
        return Err(invalid!("empty gene list"));
    }
    if ds.n_times() < 2 {
        return Err(invalid!("k >= 2 required"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.n_times());
    for (i, snap) in ds.snapshots().iter().enumerate() {
        let file = format!("{prefix}_{i:03}.csv");
        let path = dir.join(&file);
        let mut w = writer(&path)?;
        let mut header = vec!["gene".to_owned()];
        header.extend(snap.cell_ids().iter().cloned());
        w.write_record(&header).map_err(csv_err(&path))?;
        for (r, gene) in ds.gene_names().iter().enumerate() {
            let mut row = vec![gene.clone()];
            row.extend(snap.values().row(r).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        entries.push(SnapshotEntry {
            time: snap.time(),
            file,
        });
    }
    let manifest = DatasetManifest {
        gene_names: ds.gene_names().to_vec(),
        snapshots: entries,
        split: ds.split(),
    };
    let path = dir.join(manifest_name);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Columns: `trajectory_id, time_index, time, <gene names...>`, one row per (trajectory, time).
pub fn save_trajectories_csv(traj: &TrajectorySet, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = vec!["trajectory_id".into(), "time_index".into(), "time".into()];
    header.extend(traj.gene_names().iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    let values = traj.values();
    for p in 0..traj.n_trajectories() {
        for (i, t) in traj.timestamps().iter().enumerate() {
            let mut row = vec![p.to_string(), i.to_string(), t.to_string()];
            row.extend((0..traj.n_genes()).map(|r| values[[p, i, r]].to_string()));
            w.write_record(&row).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_trajectories_csv(path: &Path, origin: TrajectoryOrigin) -> Result<TrajectorySet> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.len() < 4 || &header[0] != "trajectory_id" || &header[1] != "time_index" {
        return Err(Error::csv(
            path,
            "expected header trajectory_id,time_index,time,<genes...>",
        ));
    }
    let genes: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();
    let g = genes.len();
    let mut rows: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = line + 2;
        let id = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::csv(path, format!("line {line}: bad trajectory_id")))?;
        let ti = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::csv(path, format!("line {line}: bad time_index")))?;
        let t = parse_f64(&rec[2], path, line)?;
        let vals = rec
            .iter()
            .skip(3)
            .map(|f| parse_f64(f, path, line))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != g {
            return Err(Error::csv(path, format!("line {line}: ragged row")));
        }
        rows.push((id, ti, t, vals));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let k = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n * k {
        return Err(Error::csv(
            path,
            format!("expected {n} x {k} rows, found {}", rows.len()),
        ));
    }
    let mut values = Array3::zeros((n, k, g));
    let mut timestamps = vec![f64::NAN; k];
    let mut filled = vec![false; n * k];
    for (id, ti, t, vals) in rows {
        if std::mem::replace(&mut filled[id * k + ti], true) {
            return Err(Error::csv(path, format!("duplicate row ({id}, {ti})")));
        }
        if timestamps[ti].is_nan() {
            timestamps[ti] = t;
        } else if timestamps[ti] != t {
            return Err(Error::csv(
                path,
                format!("inconsistent time for index {ti}"),
            ));
        }
        for (r, v) in vals.into_iter().enumerate() {
            values[[id, ti, r]] = v;
        }
    }
    TrajectorySet::new(values, timestamps, genes, origin)
}

/// Square gene × gene matrix with a `gene` header column, e.g. a truth adjacency.
pub fn save_matrix_csv<T: ToString>(
    matrix: &Array2<T>,
    gene_names: &[String],
    path: &Path,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["gene".to_owned()];
    header.extend(gene_names.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (r, gene) in gene_names.iter().enumerate() {
        let mut row = vec![gene.clone()];
        row.extend(matrix.row(r).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let genes: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let g = genes.len();
    let mut m = Array2::zeros((g, g));
    let mut n_rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if r >= g || &rec[0] != genes[r].as_str() {
            return Err(Error::csv(
                path,
                format!("row {} does not match header order", r + 2),
            ));
        }
        for s in 0..g {
            let field = rec
                .get(s + 1)
                .ok_or_else(|| Error::csv(path, format!("line {}: ragged row", r + 2)))?;
            m[[r, s]] = parse_f64(field, path, r + 2)?;
        }
        n_rows += 1;
    }
    if n_rows != g {
        return Err(Error::csv(
            path,
            format!("expected {g} rows, found {n_rows}"),
        ));
    }
    Ok((genes, m))
}

/// Rectangular matrix with row labels in the first column and column labels in
/// the header, e.g. a transport plan between two snapshots.
pub fn save_labeled_matrix_csv(
    matrix: &Array2<f64>,
    row_ids: &[String],
    col_ids: &[String],
    path: &Path,
) -> Result<()> {
    if matrix.dim() != (row_ids.len(), col_ids.len()) {
        return Err(shape_err!(
            "{:?} matrix with {} row and {} column labels",
            matrix.dim(),
            row_ids.len(),
            col_ids.len()
        ));
    }
    let mut w = writer(path)?;
    let mut header = vec!["id".to_owned()];
    header.extend(col_ids.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (r, id) in row_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(matrix.row(r).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub type LabeledMatrix = (Vec<String>, Vec<String>, Array2<f64>);

pub fn load_labeled_matrix_csv(path: &Path) -> Result<LabeledMatrix> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let cols: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != cols.len() + 1 {
            return Err(Error::csv(path, format!("line {}: ragged row", r + 2)));
        }
        rows.push(rec[0].to_owned());
        for field in rec.iter().skip(1) {
            data.push(parse_f64(field, path, r + 2)?);
        }
    }
    let m = Array2::from_shape_vec((rows.len(), cols.len()), data).expect("row lengths checked");
    Ok((rows, cols, m))
}

/// Edge list `source_gene,target_gene,probability` over all ordered pairs.
pub fn save_edges_csv(
    edges: &EdgeProbabilityMatrix,
    gene_names: &[String],
    path: &Path,
) -> Result<()> {
    if gene_names.len() != edges.n_genes() {
        return Err(shape_err!(
            "{} names for {} genes",
            gene_names.len(),
            edges.n_genes()
        ));
    }
    let mut w = writer(path)?;
    w.write_record(["source_gene", "target_gene", "probability"])
        .map_err(csv_err(path))?;
    for (r, src) in gene_names.iter().enumerate() {
        for (s, dst) in gene_names.iter().enumerate() {
            if r != s {
                w.write_record([src.as_str(), dst.as_str(), &edges.get(r, s).to_string()])
                    .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an edge list against a known gene order. Missing pairs score 0.
pub fn load_edges_csv(path: &Path, gene_names: &[String]) -> Result<EdgeProbabilityMatrix> {
    let mut rdr = reader(path)?;
    let g = gene_names.len();
    let mut m = Array2::zeros((g, g));
    let index = |name: &str| {
        gene_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| invalid!("edge list names unknown gene {name:?}"))
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != 3 {
            return Err(Error::csv(
                path,
                format!("line {}: expected 3 fields", line + 2),
            ));
        }
        let (r, s) = (index(&rec[0])?, index(&rec[1])?);
        m[[r, s]] = parse_f64(&rec[2], path, line + 2)?;
    }
    EdgeProbabilityMatrix::new(m)
}
