//! Plain-CSV dataset directories.
//!
//! A dataset directory holds:
//!
//! * `edges.csv`: `u,v[,weight]` per line. The weight column is read and
//!   ignored.
//! * `features.csv`: one row of floats per node, row `i` for node `i`.
//! * `labels.csv` (optional): `node,class` per line.
//! * `train.csv`, `val.csv`, `test.csv` (optional): node ids, separated by
//!   commas or newlines.
//!
//! Files have no header. Blank lines and lines starting with `#` are skipped.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, Masks};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_err(path: &Path, line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    }
}

fn records(path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(str::to_string)
            .collect();
        if !fields.is_empty() {
            out.push((line, fields));
        }
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| parse_err(path, line, format!("{field:?}: {e}")))
}

/// Reads an edge list. Returns `(u, v)` pairs in file order.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    records(path)?
        .into_iter()
        .map(|(line, f)| {
            if !(2..=3).contains(&f.len()) {
                return Err(parse_err(path, line, "expected 2 or 3 columns"));
            }
            if f.len() == 3 {
                parse::<f64>(path, line, &f[2])?;
            }
            Ok((parse(path, line, &f[0])?, parse(path, line, &f[1])?))
        })
        .collect()
}

/// Reads a dense feature matrix, one row per node.
pub fn read_features(path: &Path) -> Result<DMatrix<f64>> {
    let rows = records(path)?;
    let width = rows.first().map_or(0, |(_, f)| f.len());
    let mut data = Vec::with_capacity(rows.len() * width);
    for (line, f) in &rows {
        if f.len() != width {
            return Err(parse_err(
                path,
                *line,
                format!("expected {width} columns, found {}", f.len()),
            ));
        }
        for x in f {
            data.push(parse::<f64>(path, *line, x)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &data))
}

/// Reads `node,class` pairs into a dense label vector of length `n`.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, f) in records(path)? {
        if f.len() != 2 {
            return Err(parse_err(path, line, "expected node,class"));
        }
        let node: usize = parse(path, line, &f[0])?;
        let class: usize = parse(path, line, &f[1])?;
        let slot = labels
            .get_mut(node)
            .ok_or(Error::InvalidNode { node, n_nodes: n })?;
        *slot = Some(class);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| {
            l.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("node {node} has no label"),
            })
        })
        .collect()
}

/// Reads a list of node ids.
pub fn read_node_list(path: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (line, f) in records(path)? {
        for x in &f {
            out.push(parse(path, line, x)?);
        }
    }
    Ok(out)
}

/// Loads a dataset directory. With `directed`, edges are read as arcs and
/// symmetrized.
pub fn load_dataset(dir: &Path, directed: bool) -> Result<Graph> {
    let features = read_features(&dir.join("features.csv"))?;
    let n = features.nrows();
    let edges = read_edges(&dir.join("edges.csv"))?;
    let mut g = if directed {
        Graph::from_directed(n, edges, features)?
    } else {
        Graph::new(n, edges, features)?
    };
    let labels_path = dir.join("labels.csv");
    if labels_path.exists() {
        g = g.with_labels(read_labels(&labels_path, n)?)?;
    }
    let lists: Vec<PathBuf> = ["train.csv", "val.csv", "test.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    if lists.iter().any(|p| p.exists()) {
        let read = |p: &PathBuf| -> Result<Vec<usize>> {
            if p.exists() {
                read_node_list(p)
            } else {
                Ok(Vec::new())
            }
        };
        let (train, val, test) = (read(&lists[0])?, read(&lists[1])?, read(&lists[2])?);
        g = g.with_masks(Masks::from_lists(n, &train, &val, &test)?)?;
    }
    Ok(g)
}

/// Writes `u,v` rows.
pub fn write_edges<W: Write>(edges: &[(usize, usize)], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for &(u, v) in edges {
        w.write_record([u.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row of floats per node.
pub fn write_features<W: Write>(features: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in features.row_iter() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `g` in the layout read by [`load_dataset`].
pub fn save_dataset(g: &Graph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let edges: Vec<_> = g.edges().collect();
    write_edges(&edges, File::create(dir.join("edges.csv"))?)?;
    write_features(g.features(), File::create(dir.join("features.csv"))?)?;
    if let Some(labels) = g.labels() {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("labels.csv"))?;
        for (u, c) in labels.iter().enumerate() {
            w.write_record([u.to_string(), c.to_string()])?;
        }
        w.flush()?;
    }
    let m = g.masks();
    for (name, nodes) in [
        ("train.csv", m.train_nodes()),
        ("val.csv", m.val_nodes()),
        ("test.csv", m.test_nodes()),
    ] {
        if nodes.is_empty() {
            continue;
        }
        let mut f = File::create(dir.join(name))?;
        for u in nodes {
            writeln!(f, "{u}")?;
        }
    }
    Ok(())
}
