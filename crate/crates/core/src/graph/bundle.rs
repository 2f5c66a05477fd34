//! On-disk dataset bundle.
//!
//! A bundle directory holds `manifest.json`, `edges.tsv` (`u<TAB>v[<TAB>w]`,
//! one line per undirected edge), `features.tsv` (`node<TAB>col<TAB>value`),
//! `labels.tsv` (`node<TAB>class`, one line per node) and `splits.json`
//! (ordered arrays `train20`, `val`, `test`). Indices are 0-based.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelInfo, NodeFeatures, SparseGraph};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const EDGES: &str = "edges.tsv";
pub const FEATURES: &str = "features.tsv";
pub const LABELS: &str = "labels.tsv";
pub const SPLITS: &str = "splits.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub num_edges: usize,
    /// sha256 of each data file, keyed by file name. Verified when present.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train20: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A validated dataset: observed graph, features and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub name: String,
    pub graph: SparseGraph,
    pub features: NodeFeatures,
    pub labels: LabelInfo,
}

fn read(dir: &Path, file: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, text))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split('\t').collect()))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| {
        Error::Bundle(format!(
            "{}:{line}: cannot parse field {raw:?}",
            path.display()
        ))
    })
}

fn bundle_err(path: &Path, line: usize, e: Error) -> Error {
    Error::Bundle(format!("{}:{line}: {e}", path.display()))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found"),
        ));
    }
    let (mpath, mtext) = read(dir, MANIFEST)?;
    let manifest: Manifest = serde_json::from_str(&mtext).map_err(|source| Error::Json {
        path: mpath.clone(),
        source,
    })?;
    let n = manifest.num_nodes;

    for (file, expected) in &manifest.checksums {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let got = sha256_hex(&bytes);
        if &got != expected {
            return Err(Error::Bundle(format!(
                "checksum mismatch for {file}: manifest {expected}, file {got}"
            )));
        }
    }

    let (epath, etext) = read(dir, EDGES)?;
    let mut edges = Vec::new();
    for (line, f) in data_lines(&etext) {
        if f.len() != 2 && f.len() != 3 {
            return Err(Error::Bundle(format!(
                "{}:{line}: expected 2 or 3 fields",
                epath.display()
            )));
        }
        let u: usize = field(&epath, line, f[0])?;
        let v: usize = field(&epath, line, f[1])?;
        let w: f64 = if f.len() == 3 {
            field(&epath, line, f[2])?
        } else {
            1.0
        };
        edges.push((u, v, w));
    }
    let graph = SparseGraph::from_edges(n, edges).map_err(|e| bundle_err(&epath, 0, e))?;
    if graph.num_edges() != manifest.num_edges {
        return Err(Error::Bundle(format!(
            "manifest lists {} edges, {} has {} distinct edges",
            manifest.num_edges,
            EDGES,
            graph.num_edges()
        )));
    }

    let (fpath, ftext) = read(dir, FEATURES)?;
    let mut triplets = Vec::new();
    for (line, f) in data_lines(&ftext) {
        if f.len() != 3 {
            return Err(Error::Bundle(format!(
                "{}:{line}: expected 3 fields",
                fpath.display()
            )));
        }
        triplets.push((
            field(&fpath, line, f[0])?,
            field(&fpath, line, f[1])?,
            field(&fpath, line, f[2])?,
        ));
    }
    let features = NodeFeatures::from_triplets(n, manifest.num_features, triplets)
        .map_err(|e| bundle_err(&fpath, 0, e))?;

    let (lpath, ltext) = read(dir, LABELS)?;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut rows = 0usize;
    for (line, f) in data_lines(&ltext) {
        if f.len() != 2 {
            return Err(Error::Bundle(format!(
                "{}:{line}: expected 2 fields",
                lpath.display()
            )));
        }
        let node: usize = field(&lpath, line, f[0])?;
        let class: usize = field(&lpath, line, f[1])?;
        rows += 1;
        if node >= n {
            return Err(Error::Bundle(format!(
                "{}:{line}: node {node} out of range for {n} nodes",
                lpath.display()
            )));
        }
        if class >= manifest.num_classes {
            return Err(Error::Bundle(format!(
                "{}:{line}: class {class} but manifest declares {} classes",
                lpath.display(),
                manifest.num_classes
            )));
        }
        if labels[node].replace(class).is_some() {
            return Err(Error::Bundle(format!(
                "{}:{line}: node {node} labelled twice",
                lpath.display()
            )));
        }
    }
    if rows != n {
        return Err(Error::Bundle(format!(
            "manifest lists {n} nodes but {LABELS} has {rows} rows"
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(|l| l.unwrap()).collect();

    let (spath, stext) = read(dir, SPLITS)?;
    let splits: Splits = serde_json::from_str(&stext).map_err(|source| Error::Json {
        path: spath.clone(),
        source,
    })?;
    let labels = LabelInfo::new(
        labels,
        manifest.num_classes,
        splits.train20,
        splits.val,
        splits.test,
    )
    .map_err(|e| Error::Bundle(format!("{}: {e}", spath.display())))?;

    Ok(Bundle {
        name: manifest.name,
        graph,
        features,
        labels,
    })
}

fn write(dir: &Path, file: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes `bundle` in the canonical layout. Output is byte-stable.
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &Bundle) -> Result<Manifest> {
    use std::fmt::Write as _;

    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut checksums = BTreeMap::new();

    let mut edges = String::new();
    for (u, v, w) in bundle.graph.upper_edges() {
        if w == 1.0 {
            writeln!(edges, "{u}\t{v}").unwrap();
        } else {
            writeln!(edges, "{u}\t{v}\t{w}").unwrap();
        }
    }
    let mut features = String::new();
    for (i, c, v) in bundle.features.triplets() {
        writeln!(features, "{i}\t{c}\t{v}").unwrap();
    }
    let mut labels = String::new();
    for (i, c) in bundle.labels.labels.iter().enumerate() {
        writeln!(labels, "{i}\t{c}").unwrap();
    }
    let splits = Splits {
        train20: bundle.labels.train_idx.clone(),
        val: bundle.labels.val_idx.clone(),
        test: bundle.labels.test_idx.clone(),
    };
    let splits = serde_json::to_string(&splits).expect("splits serialize") + "\n";

    for (file, body) in [
        (EDGES, edges.as_bytes()),
        (FEATURES, features.as_bytes()),
        (LABELS, labels.as_bytes()),
        (SPLITS, splits.as_bytes()),
    ] {
        write(dir, file, body)?;
        checksums.insert(file.to_string(), sha256_hex(body));
    }
    let manifest = Manifest {
        name: bundle.name.clone(),
        num_nodes: bundle.graph.num_nodes(),
        num_features: bundle.features.dim(),
        num_classes: bundle.labels.num_classes,
        num_edges: bundle.graph.num_edges(),
        checksums,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(dir, MANIFEST, text.as_bytes())?;
    Ok(manifest)
}
