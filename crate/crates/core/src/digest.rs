use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the canonical JSON form of `value` (object keys sorted).
pub fn canonical_digest<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so re-serializing
    // through it sorts them.
    let v = serde_json::to_value(value).expect("config serializes");
    sha256_hex(v.to_string().as_bytes())
}
