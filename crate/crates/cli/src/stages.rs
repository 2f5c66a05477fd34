//! Per-seed pipeline stages with artifacts cached in the run directory.

use std::fmt::Write as _;
use std::path::Path;

use bgcn_core::eval::accuracy;
use bgcn_core::gvae::{read_embeddings, write_embeddings};
use bgcn_core::learner::{read_edges, SweepPoint};
use bgcn_core::pipeline::{
    predict, stage_base_gcn, stage_bgcn, stage_distances, stage_embed, stage_learn_graph,
    PipelineConfig, PredictGraph, PredictiveDistribution, Prepared,
};
use bgcn_core::{Bundle, DenseMatrix, SparseGraph};
use serde::{Deserialize, Serialize};

use crate::rundir::{read_json, write, write_json, RunDir};
use crate::CliError;

pub struct SeedRun<'a> {
    pub run: &'a RunDir,
    pub bundle: &'a Bundle,
    pub prep: &'a Prepared,
    pub cfg: &'a PipelineConfig,
    pub seed: u64,
}

/// Scalar results of the graph-learning stage, stored as `graph.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphRecord {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub theta: Option<f64>,
    pub delta: f64,
    pub dense_distances: bool,
    pub mean_degree: f64,
    pub sweep: Vec<SweepPoint>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaseRecord {
    pub accuracy: f64,
    pub best_epoch: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedRecord {
    pub final_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BgcnRecord {
    pub accuracy: f64,
    pub best_epoch: usize,
    pub seconds: f64,
}

fn compute<T>(r: bgcn_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Compute(e.to_string()))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let text: String = labels
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{i}\t{c}\n"))
        .collect();
    write(path, text)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Compute(format!("{}: malformed cached predictions", path.display()));
    let text = std::fs::read_to_string(path).map_err(|_| bad())?;
    let out: Vec<usize> = text
        .lines()
        .map(|l| {
            l.split('\t')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        })
        .collect::<Result<_, _>>()?;
    if out.len() != n {
        return Err(bad());
    }
    Ok(out)
}

fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join("\t")).unwrap();
    }
    write(path, out)
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DenseMatrix, CliError> {
    let bad = || CliError::Compute(format!("{}: malformed cached matrix", path.display()));
    let text = std::fs::read_to_string(path).map_err(|_| bad())?;
    let mut values = Vec::with_capacity(rows * cols);
    for line in text.lines() {
        for f in line.split('\t') {
            values.push(f.parse::<f64>().map_err(|_| bad())?);
        }
    }
    DenseMatrix::from_vec(rows, cols, values).map_err(|_| bad())
}

impl SeedRun<'_> {
    fn dir(&self) -> Result<std::path::PathBuf, CliError> {
        self.run.seed_dir(self.seed)
    }

    pub fn embeddings(&self) -> Result<(DenseMatrix, EmbedRecord), CliError> {
        let dir = self.dir()?;
        let path = dir.join("embeddings.tsv");
        if self.run.is_done(self.seed, "embed") {
            let emb = compute(read_embeddings(&path))?;
            return Ok((emb, read_json(&dir.join("embed.json"))?));
        }
        log::info!("seed {}: training gvae", self.seed);
        let t = std::time::Instant::now();
        let (emb, loss) = compute(stage_embed(
            self.prep,
            &self.bundle.graph,
            self.cfg,
            self.seed,
        ))?;
        let rec = EmbedRecord {
            final_loss: loss,
            seconds: t.elapsed().as_secs_f64(),
        };
        compute(write_embeddings(&path, &emb))?;
        write_json(&dir.join("embed.json"), &rec)?;
        self.run.mark_done(self.seed, "embed")?;
        Ok((emb, rec))
    }

    pub fn base(&self) -> Result<(Vec<usize>, BaseRecord), CliError> {
        let dir = self.dir()?;
        let path = dir.join("base_pred.tsv");
        if self.run.is_done(self.seed, "base") {
            let pred = read_labels(&path, self.bundle.graph.num_nodes())?;
            return Ok((pred, read_json(&dir.join("base.json"))?));
        }
        log::info!("seed {}: training base gcn", self.seed);
        let t = std::time::Instant::now();
        let (tr, pred) = compute(stage_base_gcn(self.prep, self.cfg, self.seed))?;
        let rec = BaseRecord {
            accuracy: compute(accuracy(&pred, &self.prep.labels))?,
            best_epoch: tr.best_epoch,
            seconds: t.elapsed().as_secs_f64(),
        };
        write_labels(&path, &pred)?;
        write_json(&dir.join("base.json"), &rec)?;
        self.run.mark_done(self.seed, "base")?;
        Ok((pred, rec))
    }

    pub fn graph(&self) -> Result<(SparseGraph, GraphRecord), CliError> {
        let dir = self.dir()?;
        let gdir = dir.join("graph");
        if self.run.is_done(self.seed, "graph") {
            let g = compute(read_edges(&gdir, self.bundle.graph.num_nodes()))?;
            return Ok((g, read_json(&dir.join("graph.json"))?));
        }
        let (emb, _) = self.embeddings()?;
        let (chat, _) = self.base()?;
        log::info!("seed {}: learning graph", self.seed);
        let t = std::time::Instant::now();
        let parts = compute(stage_distances(
            &emb,
            &self.bundle.graph,
            &chat,
            &self.prep.labels,
            self.cfg,
        ))?;
        let gs = compute(stage_learn_graph(&parts, &self.bundle.graph, self.cfg))?;
        let rec = GraphRecord {
            objective: gs.learned.objective,
            iterations: gs.learned.iterations,
            converged: gs.learned.converged,
            theta: gs.theta,
            delta: parts.delta,
            dense_distances: parts.z.is_dense(),
            mean_degree: gs.learned.graph.mean_degree(),
            sweep: gs.sweep,
            seconds: t.elapsed().as_secs_f64(),
        };
        compute(gs.learned.write_edges(&gdir))?;
        compute(gs.learned.write_trace(gdir.join("trace.csv")))?;
        write_json(&dir.join("graph.json"), &rec)?;
        self.run.mark_done(self.seed, "graph")?;
        Ok((gs.learned.graph, rec))
    }

    pub fn bgcn(
        &self,
        learned: &SparseGraph,
    ) -> Result<(PredictiveDistribution, BgcnRecord), CliError> {
        let dir = self.dir()?;
        let path = dir.join("probs.tsv");
        let classes = self.prep.labels.num_classes;
        let wrap = |probs| PredictiveDistribution {
            probs,
            seed: self.seed,
            config_digest: self.cfg.digest(),
        };
        if self.run.is_done(self.seed, "bgcn") {
            let probs = read_matrix(&path, learned.num_nodes(), classes)?;
            return Ok((wrap(probs), read_json(&dir.join("bgcn.json"))?));
        }
        log::info!("seed {}: training gcn over the learned graph", self.seed);
        let t = std::time::Instant::now();
        let predict_adj = match self.cfg.predict_graph {
            PredictGraph::Learned => None,
            PredictGraph::Observed => Some(&self.prep.adj_obs),
        };
        let (tr, probs) = compute(stage_bgcn(
            self.prep,
            learned,
            predict_adj,
            self.cfg,
            self.seed,
        ))?;
        let dist = wrap(probs);
        compute(dist.validate())?;
        let rec = BgcnRecord {
            accuracy: compute(accuracy(&predict(&dist), &self.prep.labels))?,
            best_epoch: tr.best_epoch,
            seconds: t.elapsed().as_secs_f64(),
        };
        write_matrix(&path, &dist.probs)?;
        write_json(&dir.join("bgcn.json"), &rec)?;
        self.run.mark_done(self.seed, "bgcn")?;
        Ok((dist, rec))
    }
}
