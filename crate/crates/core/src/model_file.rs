//! Versioned binary model files.
//!
//! Layout, little endian, strings as `u32 length | UTF-8 bytes`:
//!
//! ```text
//! magic "SGIM" | version u32 | n_labels u32 | dim u32
//! label name × n_labels | feature config (JSON string)
//! corpus fingerprint | embedding fingerprint
//! W f64 × (n_labels·dim) | T f64 × (n_labels²)
//! ```
//!
//! Floats are stored bit-exactly.

use std::path::Path;

use crate::binio::Reader;
use crate::crf::{CrfParams, LabelSet};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;

const MAGIC: &[u8; 4] = b"SGIM";
const VERSION: u32 = 1;
/// Upper bound on any single length field, to reject absurd headers early.
const MAX_FIELD: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub labels: LabelSet,
    pub feature_config: FeatureConfig,
    pub corpus_fingerprint: String,
    pub embedding_fingerprint: String,
    pub params: CrfParams,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn get_str(r: &mut Reader<'_>) -> Result<String> {
    let n = r.u32()? as usize;
    if n > MAX_FIELD {
        return Err(Error::Format(format!("string length {n} too large")));
    }
    String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
}

impl ModelFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.labels.len() != self.params.n_labels() {
            return Err(Error::LengthMismatch {
                expected: self.params.n_labels(),
                found: self.labels.len(),
            });
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.n_labels() as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.dim() as u32).to_le_bytes());
        for name in self.labels.names() {
            put_str(&mut out, name);
        }
        let config = serde_json::to_string(&self.feature_config)
            .map_err(|e| Error::Format(e.to_string()))?;
        put_str(&mut out, &config);
        put_str(&mut out, &self.corpus_fingerprint);
        put_str(&mut out, &self.embedding_fingerprint);
        for v in self.params.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let n_labels = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if n_labels > MAX_FIELD || dim > MAX_FIELD {
            return Err(Error::Format("model dimensions too large".into()));
        }
        let names = (0..n_labels)
            .map(|_| get_str(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let labels = LabelSet::new(names)?;
        let feature_config: FeatureConfig = serde_json::from_str(&get_str(&mut r)?)
            .map_err(|e| Error::Format(format!("feature config: {e}")))?;
        let corpus_fingerprint = get_str(&mut r)?;
        let embedding_fingerprint = get_str(&mut r)?;
        let n_params = n_labels
            .checked_mul(dim)
            .and_then(|w| w.checked_add(n_labels * n_labels))
            .ok_or_else(|| Error::Format("parameter count overflow".into()))?;
        let values = r.f64s(n_params)?;
        if !r.is_done() {
            return Err(Error::Format(
                "trailing bytes after model parameters".into(),
            ));
        }
        let params = CrfParams::from_flat(n_labels, dim, values)?;
        Ok(Self {
            labels,
            feature_config,
            corpus_fingerprint,
            embedding_fingerprint,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFile {
        let values: Vec<f64> = (0..3 * 2 + 9)
            .map(|i| (i as f64 * 0.77).sin() * 1e-3 + 1e-300)
            .collect();
        ModelFile {
            labels: LabelSet::new(["O", "B-X", "I-X"]).unwrap(),
            feature_config: FeatureConfig::default(),
            corpus_fingerprint: "abc".into(),
            embedding_fingerprint: "def".into(),
            params: CrfParams::from_flat(3, 2, values).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let bytes = m.encode().unwrap();
        let back = ModelFile::decode(&bytes).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.params.as_slice().iter().zip(m.params.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode().unwrap();
        assert!(ModelFile::decode(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelFile::decode(&extra).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(ModelFile::decode(&bad).is_err());
    }
}
