use std::path::{Path, PathBuf};

use bgcn_core::pipeline::PipelineConfig;
use serde_json::{Map, Value};

use crate::CliError;

/// Pipeline settings plus where to read the bundle and write results.
#[derive(Clone, Debug)]
pub struct CliConfig {
    pub dataset: Option<String>,
    pub out: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() => merge(slot, v, &sub)?,
                    Some(slot) => *slot = v,
                    None => return Err(CliError::Usage(format!("unknown config key `{sub}`"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p;
            Ok(())
        }
    }
}

/// Sets a dotted key; the key must already exist in `root`.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = &mut *root;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
    }
    *slot = value;
    Ok(())
}

fn defaults() -> Value {
    let mut v = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
    let obj = v.as_object_mut().expect("config is an object");
    obj.insert("dataset".into(), Value::Null);
    obj.insert("out".into(), Value::Null);
    v
}

pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<CliConfig, CliError> {
    let mut root = defaults();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Usage(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        }
        merge(&mut root, patch, "")?;
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let mut obj: Map<String, Value> = match root {
        Value::Object(o) => o,
        _ => unreachable!(),
    };
    let text_field = |v: Option<Value>, name: &str| -> Result<Option<String>, CliError> {
        match v {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(CliError::Usage(format!(
                "`{name}` must be a string, got {other}"
            ))),
        }
    };
    let dataset = text_field(obj.remove("dataset"), "dataset")?;
    let out = text_field(obj.remove("out"), "out")?.map(PathBuf::from);
    let pipeline: PipelineConfig = serde_json::from_value(Value::Object(obj))
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(CliConfig {
        dataset,
        out,
        pipeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let cfg = load(
            None,
            &[
                "gcn.hidden=32".into(),
                "graph.alpha=0.5".into(),
                "graph.beta=0.5".into(),
                "predict_graph=observed".into(),
                "dataset=cora".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.pipeline.gcn.hidden, 32);
        assert_eq!(cfg.pipeline.graph.alpha, Some(0.5));
        assert_eq!(cfg.dataset.as_deref(), Some("cora"));
        assert_eq!(
            cfg.pipeline.predict_graph,
            bgcn_core::pipeline::PredictGraph::Observed
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            load(None, &["gcn.hiden=3".into()]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            load(None, &["nope".into()]),
            Err(CliError::Usage(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"gvae": {"epochs": 5, "extra": 1}}"#).unwrap();
        let err = load(Some(&p), &[]).unwrap_err();
        assert!(err.to_string().contains("gvae.extra"), "{err}");
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"mc_samples": 4, "gvae": {"epochs": 5}}"#).unwrap();
        let cfg = load(Some(&p), &["mc_samples=8".into()]).unwrap();
        assert_eq!(cfg.pipeline.mc_samples, 8);
        assert_eq!(cfg.pipeline.gvae.epochs, 5);
        assert_eq!(cfg.pipeline.gvae.hidden, 32);
    }

    #[test]
    fn type_errors_are_usage_errors() {
        assert!(matches!(
            load(None, &["gcn.hidden=abc".into()]),
            Err(CliError::Usage(_))
        ));
    }
}
