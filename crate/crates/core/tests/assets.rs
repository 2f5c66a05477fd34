//! The toy bundle under `tests/assets/toy` is generated, never hand-edited.
//! Set `BGCN_REGENERATE_ASSETS=1` to rewrite it.

use std::path::PathBuf;

use bgcn_core::graph::bundle::{EDGES, FEATURES, LABELS, MANIFEST, SPLITS};
use bgcn_core::synthetic::{planted_partition, SyntheticConfig};
use bgcn_core::{load_bundle, write_bundle};

fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/assets/toy")
}

#[test]
fn toy_bundle_matches_generator() {
    let bundle = planted_partition(&SyntheticConfig::toy()).unwrap();
    if std::env::var_os("BGCN_REGENERATE_ASSETS").is_some() {
        write_bundle(toy_dir(), &bundle).unwrap();
    }
    let fresh = tempfile::tempdir().unwrap();
    write_bundle(fresh.path(), &bundle).unwrap();
    for file in [MANIFEST, EDGES, FEATURES, LABELS, SPLITS] {
        let committed = std::fs::read(toy_dir().join(file)).unwrap();
        let regenerated = std::fs::read(fresh.path().join(file)).unwrap();
        assert!(
            committed == regenerated,
            "{file} differs from generator output"
        );
    }
    assert_eq!(load_bundle(toy_dir()).unwrap(), bundle);
}
