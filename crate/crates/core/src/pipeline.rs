//! End-to-end run: embeddings, base classifier, distances, MAP graph, then
//! an MC-dropout GCN over the learned graph.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::digest::canonical_digest;
use crate::distance::{build_dense, restrict_support, DistanceParts};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::gcn::{mc_dropout_predict, predict_labels, train_gcn, GcnTraining, TrainConfig};
use crate::graph::{normalize_adjacency, subset_train_labels, Bundle, LabelInfo, NodeFeatures};
use crate::graph::{NormalizedAdjacency, SparseGraph};
use crate::gvae::{node_embeddings, train_gvae, GvaeConfig};
use crate::learner::{
    calibrate_sparsity, learn_graph, CalibrationConfig, GraphLearnConfig, LearnedGraph, SweepPoint,
};
use crate::nn::{DenseMatrix, SeededRng};

const STREAM_GVAE: u64 = 1;
const STREAM_BASE: u64 = 2;
const STREAM_BGCN: u64 = 3;
const STREAM_MC: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictGraph {
    #[default]
    Learned,
    Observed,
}

/// Graph-learning stage settings.
///
/// With both `alpha` and `beta` unset the sparsity parameter is calibrated
/// to `target_mean_degree` (default: the observed graph's mean degree).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphStageConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub target_mean_degree: Option<f64>,
    pub calibration_tolerance: f64,
    /// Above this node count distances are restricted to observed edges ∪ k-NN.
    pub dense_max_nodes: usize,
    pub knn: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub step_factor: f64,
    pub weight_floor: f64,
}

impl Default for GraphStageConfig {
    fn default() -> Self {
        let s = GraphLearnConfig::default();
        Self {
            alpha: None,
            beta: None,
            target_mean_degree: None,
            calibration_tolerance: CalibrationConfig::default().tolerance,
            dense_max_nodes: 5000,
            knn: 20,
            max_iter: s.max_iter,
            tol: s.tol,
            step_factor: s.step_factor,
            weight_floor: s.weight_floor,
        }
    }
}

impl GraphStageConfig {
    pub fn solver(&self) -> GraphLearnConfig {
        GraphLearnConfig {
            alpha: self.alpha.unwrap_or(1.0),
            beta: self.beta.unwrap_or(1.0),
            max_iter: self.max_iter,
            tol: self.tol,
            step_factor: self.step_factor,
            weight_floor: self.weight_floor,
            ..GraphLearnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_some() != self.beta.is_some() {
            return Err(Error::InvalidArgument(
                "graph.alpha and graph.beta must be given together".into(),
            ));
        }
        if let Some(t) = self.target_mean_degree {
            if !(t >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "target mean degree {t} < 1"
                )));
            }
        }
        if self.knn == 0 {
            return Err(Error::InvalidArgument("graph.knn must be positive".into()));
        }
        self.solver().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// First `k` training labels per class from the bundle split; `None`
    /// keeps the split unchanged.
    pub labels_per_class: Option<usize>,
    pub mc_samples: usize,
    pub seeds: Vec<u64>,
    pub row_normalize_features: bool,
    /// Replace base-classifier predictions by known labels on training
    /// nodes before computing label disagreement.
    pub substitute_train_labels: bool,
    pub predict_graph: PredictGraph,
    pub gcn: TrainConfig,
    pub gvae: GvaeConfig,
    pub graph: GraphStageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            labels_per_class: None,
            mc_samples: 32,
            seeds: vec![0],
            row_normalize_features: true,
            substitute_train_labels: false,
            predict_graph: PredictGraph::Learned,
            gcn: TrainConfig::default(),
            gvae: GvaeConfig::default(),
            graph: GraphStageConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.labels_per_class {
            if ![5, 10, 20].contains(&k) {
                return Err(Error::InvalidArgument(format!(
                    "labels_per_class must be 5, 10 or 20, got {k}"
                )));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seeds must not be empty".into()));
        }
        self.gcn.validate()?;
        if self.gvae.hidden == 0 || self.gvae.latent == 0 || !(self.gvae.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gvae config {:?}",
                self.gvae
            )));
        }
        self.graph.validate()
    }

    /// Digest of everything except the seed list.
    pub fn digest(&self) -> String {
        canonical_digest(&Self {
            seeds: Vec::new(),
            ..self.clone()
        })
    }
}

/// Averaged class probabilities with their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    pub probs: DenseMatrix,
    pub seed: u64,
    pub config_digest: String,
}

impl PredictiveDistribution {
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.probs.rows() {
            let row = self.probs.row(i);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::NonFinite(format!(
                    "probability outside [0,1] in row {i}"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::NonFinite(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Row argmax, ties to the lowest class id.
pub fn predict(dist: &PredictiveDistribution) -> Vec<usize> {
    dist.probs.row_argmax()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepTime {
    pub step: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub seed: u64,
    pub base_accuracy: f64,
    pub bgcn_accuracy: f64,
    pub gvae_final_loss: f64,
    pub base_best_epoch: usize,
    pub bgcn_best_epoch: usize,
    pub delta: f64,
    pub dense_distances: bool,
    pub theta: Option<f64>,
    pub graph_objective: f64,
    pub graph_iterations: usize,
    pub graph_converged: bool,
    pub learned_mean_degree: f64,
    pub calibration_sweep: Vec<SweepPoint>,
    pub times: Vec<StepTime>,
    /// Base classifier predictions for every node.
    pub base_predictions: Vec<usize>,
}

/// Labels, features and observed operator shared by all stages.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub labels: LabelInfo,
    pub features: NodeFeatures,
    pub adj_obs: NormalizedAdjacency,
}

pub fn prepare(bundle: &Bundle, cfg: &PipelineConfig) -> Result<Prepared> {
    let labels = match cfg.labels_per_class {
        Some(k) => subset_train_labels(&bundle.labels, k)?,
        None => bundle.labels.clone(),
    };
    let features = if cfg.row_normalize_features {
        bundle.features.row_normalized()
    } else {
        bundle.features.clone()
    };
    Ok(Prepared {
        labels,
        features,
        adj_obs: normalize_adjacency(&bundle.graph),
    })
}

/// GVAE on the observed graph; returns `(embeddings, final loss)`.
pub fn stage_embed(
    prep: &Prepared,
    observed: &SparseGraph,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(DenseMatrix, f64)> {
    let mut rng = SeededRng::new(seed).fork(STREAM_GVAE);
    let tr = train_gvae(&prep.adj_obs, &prep.features, observed, &cfg.gvae, &mut rng)?;
    let emb = node_embeddings(&tr.params, &prep.adj_obs, &prep.features)?;
    Ok((emb, tr.loss_trace.last().copied().unwrap_or(f64::NAN)))
}

/// Base GCN on the observed graph and its hard predictions for all nodes.
pub fn stage_base_gcn(
    prep: &Prepared,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(GcnTraining, Vec<usize>)> {
    let mut rng = SeededRng::new(seed).fork(STREAM_BASE);
    let tr = train_gcn(
        &prep.adj_obs,
        &prep.features,
        &prep.labels,
        &cfg.gcn,
        &mut rng,
    )?;
    let pred = predict_labels(&tr.params, &prep.adj_obs, &prep.features)?;
    Ok((tr, pred))
}

pub fn stage_distances(
    emb: &DenseMatrix,
    observed: &SparseGraph,
    predicted: &[usize],
    labels: &LabelInfo,
    cfg: &PipelineConfig,
) -> Result<DistanceParts> {
    let mut chat = predicted.to_vec();
    if cfg.substitute_train_labels {
        for &i in &labels.train_idx {
            chat[i] = labels.labels[i];
        }
    }
    if observed.num_nodes() <= cfg.graph.dense_max_nodes {
        build_dense(emb, observed, &chat, labels.num_classes)
    } else {
        restrict_support(emb, observed, &chat, labels.num_classes, cfg.graph.knn)
    }
}

#[derive(Clone, Debug)]
pub struct GraphStage {
    pub learned: LearnedGraph,
    /// Calibrated θ (α = β = θ), when calibration ran.
    pub theta: Option<f64>,
    pub sweep: Vec<SweepPoint>,
}

pub fn stage_learn_graph(
    parts: &DistanceParts,
    observed: &SparseGraph,
    cfg: &PipelineConfig,
) -> Result<GraphStage> {
    let solver = cfg.graph.solver();
    if cfg.graph.alpha.is_some() {
        return Ok(GraphStage {
            learned: learn_graph(&parts.z, &solver)?,
            theta: None,
            sweep: Vec::new(),
        });
    }
    let target = cfg
        .graph
        .target_mean_degree
        .unwrap_or_else(|| observed.mean_degree().max(1.0));
    let cal = calibrate_sparsity(
        &parts.z,
        &CalibrationConfig {
            target_mean_degree: target,
            tolerance: cfg.graph.calibration_tolerance,
            ..CalibrationConfig::default()
        },
        &solver,
    )?;
    Ok(GraphStage {
        learned: cal.learned,
        theta: Some(cal.theta),
        sweep: cal.sweep,
    })
}

/// GCN trained over `train_graph`, MC-dropout averaged over `predict_graph`.
pub fn stage_bgcn(
    prep: &Prepared,
    train_graph: &SparseGraph,
    predict_graph: Option<&NormalizedAdjacency>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(GcnTraining, DenseMatrix)> {
    let adj = normalize_adjacency(train_graph);
    let mut rng = SeededRng::new(seed).fork(STREAM_BGCN);
    let tr = train_gcn(&adj, &prep.features, &prep.labels, &cfg.gcn, &mut rng)?;
    let mut mc = SeededRng::new(seed).fork(STREAM_MC);
    let probs = mc_dropout_predict(
        &tr.params,
        predict_graph.unwrap_or(&adj),
        &prep.features,
        cfg.mc_samples,
        cfg.gcn.dropout,
        &mut mc,
    )?;
    Ok((tr, probs))
}

pub fn run_algorithm1(
    bundle: &Bundle,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(PredictiveDistribution, LearnedGraph, Diagnostics)> {
    cfg.validate()?;
    let mut times = Vec::new();
    let mut timed = |step: &str, start: Instant| {
        times.push(StepTime {
            step: step.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    let prep = prepare(bundle, cfg).map_err(|e| e.at_stage("prepare"))?;

    let t = Instant::now();
    let (emb, gvae_loss) =
        stage_embed(&prep, &bundle.graph, cfg, seed).map_err(|e| e.at_stage("gvae"))?;
    timed("gvae", t);

    let t = Instant::now();
    let (base, chat) = stage_base_gcn(&prep, cfg, seed).map_err(|e| e.at_stage("base-gcn"))?;
    timed("base-gcn", t);

    let t = Instant::now();
    let parts = stage_distances(&emb, &bundle.graph, &chat, &prep.labels, cfg)
        .map_err(|e| e.at_stage("distances"))?;
    drop(emb);
    timed("distances", t);

    let t = Instant::now();
    let gs =
        stage_learn_graph(&parts, &bundle.graph, cfg).map_err(|e| e.at_stage("graph-learning"))?;
    timed("graph-learning", t);
    let (delta, dense) = (parts.delta, parts.z.is_dense());
    drop(parts);

    let t = Instant::now();
    let predict_adj = match cfg.predict_graph {
        PredictGraph::Learned => None,
        PredictGraph::Observed => Some(&prep.adj_obs),
    };
    let (bgcn, probs) = stage_bgcn(&prep, &gs.learned.graph, predict_adj, cfg, seed)
        .map_err(|e| e.at_stage("bgcn"))?;
    timed("bgcn", t);

    let dist = PredictiveDistribution {
        probs,
        seed,
        config_digest: cfg.digest(),
    };
    dist.validate().map_err(|e| e.at_stage("bgcn"))?;
    let pred = predict(&dist);
    let diagnostics = Diagnostics {
        seed,
        base_accuracy: accuracy(&chat, &prep.labels)?,
        bgcn_accuracy: accuracy(&pred, &prep.labels)?,
        gvae_final_loss: gvae_loss,
        base_best_epoch: base.best_epoch,
        bgcn_best_epoch: bgcn.best_epoch,
        delta,
        dense_distances: dense,
        theta: gs.theta,
        graph_objective: gs.learned.objective,
        graph_iterations: gs.learned.iterations,
        graph_converged: gs.learned.converged,
        learned_mean_degree: gs.learned.graph.mean_degree(),
        calibration_sweep: gs.sweep,
        times,
        base_predictions: chat,
    };
    Ok((dist, gs.learned, diagnostics))
}

/// Base GCN only, on the observed graph: `(test accuracy, predictions)`.
pub fn run_baseline(bundle: &Bundle, cfg: &PipelineConfig, seed: u64) -> Result<(f64, Vec<usize>)> {
    cfg.validate()?;
    let prep = prepare(bundle, cfg)?;
    let (_, pred) = stage_base_gcn(&prep, cfg, seed).map_err(|e| e.at_stage("base-gcn"))?;
    Ok((accuracy(&pred, &prep.labels)?, pred))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_tie_rule() {
        let dist = PredictiveDistribution {
            probs: DenseMatrix::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap(),
            seed: 0,
            config_digest: String::new(),
        };
        assert_eq!(predict(&dist), [1, 0]);
        let uniform = PredictiveDistribution {
            probs: DenseMatrix::filled(1, 4, 0.25),
            ..dist
        };
        assert_eq!(predict(&uniform), [0]);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.mc_samples, 32);
        assert_eq!(cfg.predict_graph, PredictGraph::Learned);
        let bad = PipelineConfig {
            labels_per_class: Some(7),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let mut half = PipelineConfig::default();
        half.graph.alpha = Some(1.0);
        assert!(half.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let r: std::result::Result<PipelineConfig, _> =
            serde_json::from_str(r#"{"mc_samples": 4, "bogus": 1}"#);
        assert!(r.is_err());
        let r: std::result::Result<PipelineConfig, _> =
            serde_json::from_str(r#"{"graph": {"knn": 5, "alfa": 1}}"#);
        assert!(r.is_err());
        let ok: PipelineConfig =
            serde_json::from_str(r#"{"predict_graph": "observed", "gcn": {"hidden": 8}}"#).unwrap();
        assert_eq!(ok.predict_graph, PredictGraph::Observed);
        assert_eq!(ok.gcn.hidden, 8);
    }

    #[test]
    fn digest_ignores_seeds() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seeds: vec![1, 2, 3],
            ..Default::default()
        };
        assert_eq!(a.digest(), b.digest());
        let c = PipelineConfig {
            mc_samples: 8,
            ..Default::default()
        };
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn distribution_validation() {
        let bad = PredictiveDistribution {
            probs: DenseMatrix::from_rows(&[vec![0.5, 0.6]]).unwrap(),
            seed: 0,
            config_digest: String::new(),
        };
        assert!(bad.validate().is_err());
    }
}
