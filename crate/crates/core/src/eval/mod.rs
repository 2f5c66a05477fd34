//! Accuracy aggregation, degree-stratified comparison and adjacency images.

mod heatmap;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabelInfo, SparseGraph};

pub use heatmap::{adjacency_heatmap, block_stats, class_ordering, BlockStats, Heatmap};

/// Fraction of `idx` whose prediction matches the label.
pub fn accuracy_on(pred: &[usize], labels: &LabelInfo, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy over an empty index set".into(),
        ));
    }
    if pred.len() != labels.num_nodes() {
        return Err(Error::Shape(format!(
            "{} predictions for {} nodes",
            pred.len(),
            labels.num_nodes()
        )));
    }
    let correct = idx.iter().filter(|&&i| pred[i] == labels.labels[i]).count();
    Ok(correct as f64 / idx.len() as f64)
}

/// Test-split accuracy.
pub fn accuracy(pred: &[usize], labels: &LabelInfo) -> Result<f64> {
    accuracy_on(pred, labels, &labels.test_idx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample (n − 1) standard deviation.
    pub std: f64,
}

impl RunSummary {
    /// Percent with one decimal, e.g. `76.0±1.1`.
    pub fn display_percent(&self) -> String {
        format!("{:.1}±{:.1}", 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn aggregate(accs: &[f64]) -> Result<RunSummary> {
    if accs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregate needs at least 2 runs, got {}",
            accs.len()
        )));
    }
    if let Some(a) = accs.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!(
            "accuracy {a} outside [0, 1]"
        )));
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    Ok(RunSummary {
        accuracies: accs.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    BothCorrect = 0,
    GcnnOnly = 1,
    BgcnOnly = 2,
    BothWrong = 3,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::BothCorrect,
        Outcome::GcnnOnly,
        Outcome::BgcnOnly,
        Outcome::BothWrong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::BothCorrect => "both_correct",
            Outcome::GcnnOnly => "gcnn_only",
            Outcome::BgcnOnly => "bgcn_only",
            Outcome::BothWrong => "both_wrong",
        }
    }

    fn of(gcnn: bool, bgcn: bool) -> Self {
        match (gcnn, bgcn) {
            (true, true) => Outcome::BothCorrect,
            (true, false) => Outcome::GcnnOnly,
            (false, true) => Outcome::BgcnOnly,
            (false, false) => Outcome::BothWrong,
        }
    }
}

/// Test nodes split at the median observed degree (ties go low) and counted
/// by joint correctness of the two classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStratifiedTable {
    pub median_degree: f64,
    /// `low[o]` / `high[o]` indexed by [`Outcome`] as usize.
    pub low: [usize; 4],
    pub high: [usize; 4],
}

impl DegreeStratifiedTable {
    pub fn low_count(&self, o: Outcome) -> usize {
        self.low[o as usize]
    }

    pub fn high_count(&self, o: Outcome) -> usize {
        self.high[o as usize]
    }

    pub fn total(&self) -> usize {
        self.low.iter().chain(&self.high).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for o in Outcome::ALL {
            write!(out, ",{}", o.name()).unwrap();
        }
        out.push('\n');
        for (name, row) in [("low", &self.low), ("high", &self.high)] {
            out.push_str(name);
            for c in row {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn degree_stratify(
    pred_gcnn: &[usize],
    pred_bgcn: &[usize],
    labels: &LabelInfo,
    g_obs: &SparseGraph,
) -> Result<DegreeStratifiedTable> {
    let n = labels.num_nodes();
    if pred_gcnn.len() != n || pred_bgcn.len() != n || g_obs.num_nodes() != n {
        return Err(Error::Shape(format!(
            "stratify: {} / {} predictions, {} graph nodes, {n} labels",
            pred_gcnn.len(),
            pred_bgcn.len(),
            g_obs.num_nodes()
        )));
    }
    let mut degs: Vec<usize> = labels.test_idx.iter().map(|&i| g_obs.degree(i)).collect();
    degs.sort_unstable();
    let median_degree = match degs.len() {
        0 => 0.0,
        k if k % 2 == 1 => degs[k / 2] as f64,
        k => 0.5 * (degs[k / 2 - 1] + degs[k / 2]) as f64,
    };
    let mut table = DegreeStratifiedTable {
        median_degree,
        low: [0; 4],
        high: [0; 4],
    };
    for &i in &labels.test_idx {
        let y = labels.labels[i];
        let o = Outcome::of(pred_gcnn[i] == y, pred_bgcn[i] == y) as usize;
        if g_obs.degree(i) as f64 <= median_degree {
            table.low[o] += 1;
        } else {
            table.high[o] += 1;
        }
    }
    Ok(table)
}
