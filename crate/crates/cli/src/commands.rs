use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bgcn_core::eval::{adjacency_heatmap, aggregate, block_stats, degree_stratify};
use bgcn_core::learner::read_edges;
use bgcn_core::pipeline::{predict, prepare, PipelineConfig, Prepared};
use bgcn_core::{load_bundle, Bundle, SparseGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::rundir::{read_json, run_digest, write, write_json, RunDir, RunRecord, CONFIG};
use crate::stages::SeedRun;
use crate::{CliError, Common};

const HEATMAP_SIZE: usize = 512;

struct Session {
    bundle: Bundle,
    prep: Prepared,
    cfg: PipelineConfig,
    run: RunDir,
    jobs: usize,
}

fn resolve_dataset(name: &str, root: &Path) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_dir() || name.contains(std::path::MAIN_SEPARATOR) || name.starts_with('.') {
        direct
    } else {
        root.join(name)
    }
}

fn open_bundle(path: &Path) -> Result<Bundle, CliError> {
    if !path.join("manifest.json").is_file() {
        return Err(CliError::Usage(format!(
            "no dataset bundle at {}",
            path.display()
        )));
    }
    load_bundle(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn open(c: &Common) -> Result<Session, CliError> {
    let cli = config::load(c.config.as_deref(), &c.overrides)?;
    let name = c
        .dataset
        .clone()
        .or(cli.dataset)
        .ok_or_else(|| CliError::Usage("no dataset given (use --dataset)".into()))?;
    let dataset = resolve_dataset(&name, &c.data_root);
    let bundle = open_bundle(&dataset)?;

    let mut cfg = cli.pipeline;
    if c.labels_per_class.is_some() {
        cfg.labels_per_class = c.labels_per_class;
    }
    if c.seeds.is_some() || c.seed.is_some() {
        let first = c.seed.unwrap_or(0);
        cfg.seeds = (first..first + c.seeds.unwrap_or(1)).collect();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if c.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let prep = prepare(&bundle, &cfg).map_err(|e| CliError::Usage(e.to_string()))?;

    let manifest_path = dataset.join("manifest.json");
    let manifest = std::fs::read(&manifest_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", manifest_path.display())))?;
    let digest = run_digest(&cfg, &manifest);
    let out =
        c.out.clone().or(cli.out).unwrap_or_else(|| {
            PathBuf::from("runs").join(format!("{}-{}", bundle.name, &digest[..8]))
        });
    let record = RunRecord {
        digest,
        dataset,
        dataset_name: bundle.name.clone(),
        config: cfg.clone(),
    };
    let run = RunDir::open(out, &record, c.force)?;
    log::info!("run directory {}", run.root.display());
    Ok(Session {
        bundle,
        prep,
        cfg,
        run,
        jobs: c.jobs,
    })
}

impl Session {
    fn for_seeds<T: Send>(
        &self,
        f: impl Fn(&SeedRun) -> Result<T, CliError> + Sync,
    ) -> Result<Vec<T>, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Compute(e.to_string()))?;
        pool.install(|| {
            self.cfg
                .seeds
                .par_iter()
                .map(|&seed| {
                    f(&SeedRun {
                        run: &self.run,
                        bundle: &self.bundle,
                        prep: &self.prep,
                        cfg: &self.cfg,
                        seed,
                    })
                })
                .collect()
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.run.root.join(file)
    }
}

/// Accuracy list with mean and, for two or more runs, sample std.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: Option<f64>,
}

impl MethodSummary {
    fn new(accs: &[f64]) -> Self {
        match aggregate(accs) {
            Ok(s) => Self {
                accuracies: s.accuracies,
                mean: s.mean,
                std: Some(s.std),
            },
            Err(_) => Self {
                accuracies: accs.to_vec(),
                mean: accs.iter().sum::<f64>() / accs.len().max(1) as f64,
                std: None,
            },
        }
    }

    fn display(&self) -> String {
        match self.std {
            Some(s) => format!("{:.1}±{:.1}", 100.0 * self.mean, 100.0 * s),
            None => format!("{:.1}", 100.0 * self.mean),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub labels_per_class: Option<usize>,
    pub seeds: Vec<u64>,
    pub digest: String,
    pub gcnn: MethodSummary,
    pub bgcn: Option<MethodSummary>,
    pub within_class_fraction_observed: f64,
    /// Mean over seeds.
    pub within_class_fraction_learned: Option<f64>,
}

#[derive(Serialize)]
struct Metrics<'a> {
    seeds: &'a [u64],
    gcnn: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bgcn: Option<Vec<f64>>,
}

const TABLE_HEADER: &str = "dataset\tlabels/class\tseeds\tgcnn\tbgcn";

fn table_row(s: &Summary) -> String {
    let labels = s
        .labels_per_class
        .map_or("all".to_string(), |k| k.to_string());
    let bgcn = s
        .bgcn
        .as_ref()
        .map_or("-".to_string(), MethodSummary::display);
    format!(
        "{}\t{labels}\t{}\t{}\t{bgcn}",
        s.dataset,
        s.seeds.len(),
        s.gcnn.display()
    )
}

fn write_heatmap(
    g: &SparseGraph,
    labels: &[usize],
    dir: &Path,
    name: &str,
    size: usize,
) -> Result<(), CliError> {
    let h = adjacency_heatmap(g, labels, size).map_err(|e| CliError::Compute(e.to_string()))?;
    h.write_pgm(dir.join(name))
        .map_err(|e| CliError::Compute(e.to_string()))?;
    h.write_ordering(dir.join("ordering.txt"))
        .map_err(|e| CliError::Compute(e.to_string()))
}

fn within_fraction(g: &SparseGraph, labels: &[usize]) -> Result<f64, CliError> {
    block_stats(g, labels)
        .map(|s| s.within_fraction)
        .map_err(|e| CliError::Compute(e.to_string()))
}

pub fn run(c: &Common) -> Result<(), CliError> {
    let s = open(c)?;
    let results = s.for_seeds(|r| {
        let (embed, embed_rec) = r.embeddings()?;
        drop(embed);
        let (base_pred, base_rec) = r.base()?;
        let (graph, graph_rec) = r.graph()?;
        let (dist, bgcn_rec) = r.bgcn(&graph)?;
        Ok((
            r.seed,
            embed_rec,
            base_pred,
            base_rec,
            graph,
            graph_rec,
            predict(&dist),
            bgcn_rec,
        ))
    })?;

    let labels = &s.bundle.labels.labels;
    let mut diag = String::from(
        "seed,gcnn_accuracy,bgcn_accuracy,gvae_final_loss,base_best_epoch,bgcn_best_epoch,delta,\
         dense_distances,theta,graph_objective,graph_iterations,graph_converged,learned_mean_degree,\
         gvae_seconds,base_seconds,graph_seconds,bgcn_seconds\n",
    );
    let mut pred = String::from("seed\tnode\tgcnn\tbgcn\n");
    let mut strat = String::from("seed,group,both_correct,gcnn_only,bgcn_only,both_wrong\n");
    let mut learned_within = 0.0;
    for (seed, e, base_pred, b, graph, g, bgcn_pred, m) in &results {
        let theta = g.theta.map_or(String::new(), |t| format!("{t:e}"));
        writeln!(
            diag,
            "{seed},{},{},{},{},{},{},{},{theta},{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            b.accuracy,
            m.accuracy,
            e.final_loss,
            b.best_epoch,
            m.best_epoch,
            g.delta,
            g.dense_distances,
            g.objective,
            g.iterations,
            g.converged,
            g.mean_degree,
            e.seconds,
            b.seconds,
            g.seconds,
            m.seconds
        )
        .unwrap();
        for (i, (a, bb)) in base_pred.iter().zip(bgcn_pred).enumerate() {
            writeln!(pred, "{seed}\t{i}\t{a}\t{bb}").unwrap();
        }
        let table = degree_stratify(base_pred, bgcn_pred, &s.prep.labels, &s.bundle.graph)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        for line in table.to_csv().lines().skip(1) {
            writeln!(strat, "{seed},{line}").unwrap();
        }
        learned_within += within_fraction(graph, labels)?;
    }
    write(&s.path("diagnostics.csv"), diag)?;
    write(&s.path("pred.tsv"), pred)?;
    write(&s.path("stratified.csv"), strat)?;

    let gcnn: Vec<f64> = results.iter().map(|r| r.3.accuracy).collect();
    let bgcn: Vec<f64> = results.iter().map(|r| r.7.accuracy).collect();
    write_json(
        &s.path("metrics.json"),
        &Metrics {
            seeds: &s.cfg.seeds,
            gcnn: gcnn.clone(),
            bgcn: Some(bgcn.clone()),
        },
    )?;
    let summary = Summary {
        dataset: s.bundle.name.clone(),
        labels_per_class: s.cfg.labels_per_class,
        seeds: s.cfg.seeds.clone(),
        digest: s.run.digest.clone(),
        gcnn: MethodSummary::new(&gcnn),
        bgcn: Some(MethodSummary::new(&bgcn)),
        within_class_fraction_observed: within_fraction(&s.bundle.graph, labels)?,
        within_class_fraction_learned: Some(learned_within / results.len() as f64),
    };
    write_json(&s.path("summary.json"), &summary)?;

    write_heatmap(
        &s.bundle.graph,
        labels,
        &s.run.root,
        "adj_obs.pgm",
        HEATMAP_SIZE,
    )?;
    write_heatmap(
        &results[0].4,
        labels,
        &s.run.root,
        "adj_map.pgm",
        HEATMAP_SIZE,
    )?;

    println!("{TABLE_HEADER}\n{}", table_row(&summary));
    Ok(())
}

pub fn baseline(c: &Common) -> Result<(), CliError> {
    let s = open(c)?;
    let results = s.for_seeds(|r| {
        let (pred, rec) = r.base()?;
        Ok((r.seed, pred, rec))
    })?;
    let mut pred = String::from("seed\tnode\tgcnn\n");
    for (seed, p, _) in &results {
        for (i, c) in p.iter().enumerate() {
            writeln!(pred, "{seed}\t{i}\t{c}").unwrap();
        }
    }
    write(&s.path("pred.tsv"), pred)?;
    let gcnn: Vec<f64> = results.iter().map(|r| r.2.accuracy).collect();
    write_json(
        &s.path("metrics.json"),
        &Metrics {
            seeds: &s.cfg.seeds,
            gcnn: gcnn.clone(),
            bgcn: None,
        },
    )?;
    let summary = Summary {
        dataset: s.bundle.name.clone(),
        labels_per_class: s.cfg.labels_per_class,
        seeds: s.cfg.seeds.clone(),
        digest: s.run.digest.clone(),
        gcnn: MethodSummary::new(&gcnn),
        bgcn: None,
        within_class_fraction_observed: within_fraction(&s.bundle.graph, &s.bundle.labels.labels)?,
        within_class_fraction_learned: None,
    };
    write_json(&s.path("summary.json"), &summary)?;
    println!("{TABLE_HEADER}\n{}", table_row(&summary));
    Ok(())
}

pub fn embed(c: &Common) -> Result<(), CliError> {
    let s = open(c)?;
    let results = s.for_seeds(|r| Ok((r.seed, r.embeddings()?.1)))?;
    for (seed, rec) in results {
        println!(
            "seed {seed}: final loss {:.6}, embeddings in {}",
            rec.final_loss,
            s.run
                .root
                .join(format!("seed-{seed}/embeddings.tsv"))
                .display()
        );
    }
    Ok(())
}

pub fn learn_graph(c: &Common) -> Result<(), CliError> {
    let s = open(c)?;
    let results = s.for_seeds(|r| Ok((r.seed, r.graph()?.1)))?;
    for (seed, g) in results {
        let theta = g
            .theta
            .map_or(String::new(), |t| format!(", theta {t:.4e}"));
        println!(
            "seed {seed}: objective {:.6}, mean degree {:.2}, {} iterations{}{theta}, edges in {}",
            g.objective,
            g.mean_degree,
            g.iterations,
            if g.converged { "" } else { " (not converged)" },
            s.run.root.join(format!("seed-{seed}/graph")).display()
        );
    }
    Ok(())
}

pub fn report(runs: &[PathBuf]) -> Result<(), CliError> {
    println!("run\t{TABLE_HEADER}");
    for dir in runs {
        let s: Summary = read_json(&dir.join("summary.json"))?;
        println!("{}\t{}", dir.display(), table_row(&s));
    }
    Ok(())
}

pub fn export_adj(out: &Path, seed: Option<u64>, size: usize) -> Result<(), CliError> {
    let record: RunRecord = read_json(&out.join(CONFIG))?;
    let seed = seed.or(record.config.seeds.first().copied()).unwrap_or(0);
    let bundle = open_bundle(&record.dataset)?;
    let gdir = out.join(format!("seed-{seed}/graph"));
    if !gdir.join("edges.tsv").is_file() {
        return Err(CliError::Usage(format!(
            "no learned graph at {}",
            gdir.display()
        )));
    }
    let learned =
        read_edges(&gdir, bundle.graph.num_nodes()).map_err(|e| CliError::Usage(e.to_string()))?;
    let labels = &bundle.labels.labels;
    write_heatmap(&bundle.graph, labels, out, "adj_obs.pgm", size)?;
    write_heatmap(&learned, labels, out, "adj_map.pgm", size)?;
    println!(
        "within-class weight fraction: observed {:.3}, learned {:.3}",
        within_fraction(&bundle.graph, labels)?,
        within_fraction(&learned, labels)?
    );
    Ok(())
}
