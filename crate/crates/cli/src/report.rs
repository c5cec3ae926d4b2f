use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// One residual next to the tolerance it was judged against.
#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub inputs_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub status: &'static str,
    pub results: Value,
    pub residuals: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

/// SHA-256 over the command words and every input file's bytes, each
/// length-prefixed.
pub fn digest(args: &[String], inputs: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    for a in args {
        h.update((a.len() as u64).to_le_bytes());
        h.update(a.as_bytes());
    }
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_separates_fields() {
        let a = digest(&["ab".into(), "c".into()], &[]);
        let b = digest(&["a".into(), "bc".into()], &[]);
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a, digest(&["ab".into(), "c".into()], &[]));
    }
}
