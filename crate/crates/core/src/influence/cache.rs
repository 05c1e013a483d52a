//! Per-example and per-token gradient records.
//!
//! Token records store the factored form of a single-token conditional
//! gradient: the error vector `e` (length `C`), the feature vector (length
//! `d`) and the neighbouring gold labels. The dense gradient is never
//! materialized; [`TokenRecord::dot`] contracts it against a dense vector in
//! `O(C·d)`.
//!
//! Binary layout, little endian:
//!
//! ```text
//! magic "SGIC" | version u32 | granularity u8 | 3 pad bytes
//! n_labels u32 | dim u32 | n_examples u32 | n_records u64
//! token record:    example u32 | position u32 | prev i32 | next i32 | e f64×C | F f64×d
//! instance record: example u32 | 0 u32 | gradient f64×(C·d + C·C)
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::Reader;
use crate::crf::{self, CrfGradient, CrfParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SGIC";
const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 4 + 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Instance,
    Token,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub example: usize,
    /// 0-based token position.
    pub position: usize,
    pub prev: Option<usize>,
    pub next: Option<usize>,
    pub error: Vec<f64>,
    pub feature: Vec<f64>,
}

impl TokenRecord {
    /// `⟨g, v⟩` where `g` is the dense gradient this record represents.
    pub fn dot(&self, v: &CrfGradient) -> f64 {
        let mut s = 0.0;
        for (c, &ec) in self.error.iter().enumerate() {
            if ec == 0.0 {
                continue;
            }
            let mut inner = crf::dot_slices(v.w_row(c), &self.feature);
            if let Some(p) = self.prev {
                inner += v.t()[p * self.error.len() + c];
            }
            if let Some(q) = self.next {
                inner += v.t()[c * self.error.len() + q];
            }
            s += ec * inner;
        }
        s
    }

    pub fn to_dense(&self) -> CrfGradient {
        crf::expand_token_gradient(
            self.error.len(),
            &self.error,
            &self.feature,
            self.prev,
            self.next,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub example: usize,
    pub gradient: CrfGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Instance(Vec<InstanceRecord>),
    Token(Vec<TokenRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCache {
    n_labels: usize,
    dim: usize,
    n_examples: usize,
    records: Records,
}

impl GradientCache {
    /// Computes the records for every example (or every token) of `dataset`.
    pub fn build(dataset: &Dataset, params: &CrfParams, granularity: Granularity) -> Result<Self> {
        params.same_shape(dataset.n_labels(), dataset.dim())?;
        let exs = dataset.examples();
        let records = match granularity {
            Granularity::Instance => {
                let recs: Result<Vec<InstanceRecord>> = exs
                    .par_iter()
                    .enumerate()
                    .map(|(i, ex)| {
                        crf::grad_joint_loss(&ex.obs, &ex.labels, params)
                            .map(|gradient| InstanceRecord {
                                example: i,
                                gradient,
                            })
                            .map_err(|e| e.at_example(i))
                    })
                    .collect();
                Records::Instance(recs?)
            }
            Granularity::Token => {
                let per_example: Result<Vec<Vec<TokenRecord>>> = exs
                    .par_iter()
                    .enumerate()
                    .map(|(i, ex)| {
                        let y = ex.labels.as_slice();
                        (0..ex.len())
                            .map(|t| {
                                let error =
                                    crf::token_error_vector(&ex.obs, &ex.labels, t, params)?;
                                Ok(TokenRecord {
                                    example: i,
                                    position: t,
                                    prev: t.checked_sub(1).map(|p| y[p]),
                                    next: y.get(t + 1).copied(),
                                    error,
                                    feature: ex.obs.feature(t).to_vec(),
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                            .map_err(|e| e.at_example(i))
                    })
                    .collect();
                Records::Token(per_example?.into_iter().flatten().collect())
            }
        };
        Ok(Self {
            n_labels: dataset.n_labels(),
            dim: dataset.dim(),
            n_examples: dataset.len(),
            records,
        })
    }

    pub fn granularity(&self) -> Granularity {
        match self.records {
            Records::Instance(_) => Granularity::Instance,
            Records::Token(_) => Granularity::Token,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Instance(r) => r.len(),
            Records::Token(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> &Records {
        &self.records
    }

    pub fn instance(&self, example: usize) -> Option<&CrfGradient> {
        match &self.records {
            Records::Instance(r) => r
                .get(example)
                .filter(|r| r.example == example)
                .map(|r| &r.gradient),
            Records::Token(_) => None,
        }
    }

    /// Token record at 0-based `position` of `example`.
    pub fn token(&self, example: usize, position: usize) -> Option<&TokenRecord> {
        match &self.records {
            Records::Token(r) => {
                let start =
                    r.partition_point(|rec| (rec.example, rec.position) < (example, position));
                r.get(start)
                    .filter(|rec| rec.example == example && rec.position == position)
            }
            Records::Instance(_) => None,
        }
    }

    fn record_bytes(&self) -> usize {
        match self.granularity() {
            Granularity::Token => 16 + 8 * (self.n_labels + self.dim),
            Granularity::Instance => {
                8 + 8 * (self.n_labels * self.dim + self.n_labels * self.n_labels)
            }
        }
    }

    /// Size of [`GradientCache::encode`]'s output.
    pub fn byte_size(&self) -> usize {
        HEADER_BYTES + self.len() * self.record_bytes()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.granularity() {
            Granularity::Instance => 0,
            Granularity::Token => 1,
        });
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&(self.n_labels as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_examples as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let put_f64s = |out: &mut Vec<u8>, xs: &[f64]| {
            xs.iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes()))
        };
        let opt = |v: Option<usize>| v.map_or(-1i32, |v| v as i32);
        match &self.records {
            Records::Instance(recs) => {
                for r in recs {
                    out.extend_from_slice(&(r.example as u32).to_le_bytes());
                    out.extend_from_slice(&0u32.to_le_bytes());
                    put_f64s(&mut out, r.gradient.as_slice());
                }
            }
            Records::Token(recs) => {
                for r in recs {
                    out.extend_from_slice(&(r.example as u32).to_le_bytes());
                    out.extend_from_slice(&(r.position as u32).to_le_bytes());
                    out.extend_from_slice(&opt(r.prev).to_le_bytes());
                    out.extend_from_slice(&opt(r.next).to_le_bytes());
                    put_f64s(&mut out, &r.error);
                    put_f64s(&mut out, &r.feature);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a gradient cache (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported cache version {version}"
            )));
        }
        let granularity = match r.take(4)?[0] {
            0 => Granularity::Instance,
            1 => Granularity::Token,
            g => return Err(Error::Format(format!("unknown granularity tag {g}"))),
        };
        let n_labels = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let n_examples = r.u32()? as usize;
        let n_records = r.u64()?;
        if n_labels < 2 {
            return Err(Error::Format(format!("cache has {n_labels} labels")));
        }
        let per = match granularity {
            Granularity::Token => n_labels
                .checked_add(dim)
                .and_then(|v| v.checked_mul(8))
                .and_then(|v| v.checked_add(16)),
            Granularity::Instance => n_labels
                .checked_mul(dim)
                .and_then(|v| v.checked_add(n_labels * n_labels))
                .and_then(|v| v.checked_mul(8))
                .and_then(|v| v.checked_add(8)),
        };
        let expected = per
            .and_then(|p| usize::try_from(n_records).ok()?.checked_mul(p))
            .and_then(|v| v.checked_add(HEADER_BYTES));
        if expected != Some(bytes.len()) {
            return Err(Error::Format(format!(
                "cache length {} does not match header ({} records)",
                bytes.len(),
                n_records
            )));
        }
        let n_records = n_records as usize;
        let records = match granularity {
            Granularity::Instance => {
                let mut recs = Vec::with_capacity(n_records);
                for _ in 0..n_records {
                    let example = r.u32()? as usize;
                    r.u32()?;
                    let values = r.f64s(n_labels * dim + n_labels * n_labels)?;
                    let gradient = CrfGradient::from_flat(n_labels, dim, values)?;
                    recs.push(InstanceRecord { example, gradient });
                }
                Records::Instance(recs)
            }
            Granularity::Token => {
                let mut recs = Vec::with_capacity(n_records);
                let label = |v: i32| -> Result<Option<usize>> {
                    match v {
                        -1 => Ok(None),
                        v if v >= 0 && (v as usize) < n_labels => Ok(Some(v as usize)),
                        v => Err(Error::Format(format!("neighbour label {v} out of range"))),
                    }
                };
                for _ in 0..n_records {
                    let example = r.u32()? as usize;
                    let position = r.u32()? as usize;
                    let prev = label(r.i32()?)?;
                    let next = label(r.i32()?)?;
                    let error = r.f64s(n_labels)?;
                    let feature = r.f64s(dim)?;
                    if error.iter().chain(&feature).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("non-finite value in token record".into()));
                    }
                    recs.push(TokenRecord {
                        example,
                        position,
                        prev,
                        next,
                        error,
                        feature,
                    });
                }
                Records::Token(recs)
            }
        };
        let ordered = match &records {
            Records::Instance(recs) => recs.windows(2).all(|w| w[0].example < w[1].example),
            Records::Token(recs) => recs
                .windows(2)
                .all(|w| (w[0].example, w[0].position) < (w[1].example, w[1].position)),
        };
        if !ordered {
            return Err(Error::Format(
                "cache records are not in increasing order".into(),
            ));
        }
        Ok(Self {
            n_labels,
            dim,
            n_examples,
            records,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
