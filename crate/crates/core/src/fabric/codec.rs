//! Wire format for updates.
//!
//! Every message starts with a 25-byte header
//! `tag:u8, K:u32, D:u32, S:u32, timestamp:u64, origin:u32` (little endian),
//! followed by the body:
//!
//! - `Full`: `K·D` f64 values, row-major.
//! - `SufficientFactor`: `S` pairs, each `b` (K values) then `c` (D values).
//! - `Sparse`: `S` entries of `key:u32, value:f64`.

use thiserror::Error;

use crate::engine::{FactorList, Payload, SparseVec, UpdateDelta};

pub const HEADER_BYTES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codec {
    Full,
    SufficientFactor,
    Sparse,
}

impl Codec {
    fn tag(self) -> u8 {
        match self {
            Codec::Full => 0,
            Codec::SufficientFactor => 1,
            Codec::Sparse => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Codec::Full => "full",
            Codec::SufficientFactor => "sf",
            Codec::Sparse => "sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Codec::Full),
            "sf" | "sufficient_factor" => Some(Codec::SufficientFactor),
            "sparse" => Some(Codec::Sparse),
            _ => None,
        }
    }
}

/// Logical `K × D` shape of the parameters a payload applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn vector(len: usize) -> Self {
        Self { rows: len, cols: 1 }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("sufficient-factor codec needs a factor payload")]
    NotFactors,
    #[error("payload shape {got_rows}x{got_cols} does not match {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("dimension {0} does not fit the 32-bit header field")]
    TooLarge(usize),
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },
}

/// Exact encoded size in bytes.
pub fn encoded_len(payload: &Payload, codec: Codec, shape: Shape) -> Result<usize, CodecError> {
    Ok(HEADER_BYTES
        + match codec {
            Codec::Full => 8 * shape.len(),
            Codec::SufficientFactor => match payload {
                Payload::Factors(f) => {
                    check_factor_shape(f, shape)?;
                    8 * f.len() * (shape.rows + shape.cols)
                }
                _ => return Err(CodecError::NotFactors),
            },
            Codec::Sparse => 12 * sparse_entries(payload).len(),
        })
}

fn check_factor_shape(f: &FactorList, shape: Shape) -> Result<(), CodecError> {
    if f.rows != shape.rows || f.cols != shape.cols {
        return Err(CodecError::Shape {
            rows: shape.rows,
            cols: shape.cols,
            got_rows: f.rows,
            got_cols: f.cols,
        });
    }
    Ok(())
}

fn sparse_entries(payload: &Payload) -> Vec<(usize, f64)> {
    match payload {
        Payload::Sparse(s) => s.iter().collect(),
        Payload::Dense(v) => v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(k, &x)| (k, x))
            .collect(),
        Payload::Factors(f) => f
            .reconstruct()
            .into_iter()
            .enumerate()
            .filter(|(_, x)| *x != 0.0)
            .collect(),
    }
}

fn u32_field(x: usize) -> Result<u32, CodecError> {
    u32::try_from(x).map_err(|_| CodecError::TooLarge(x))
}

pub fn encode_delta(delta: &UpdateDelta, codec: Codec, shape: Shape) -> Result<Vec<u8>, CodecError> {
    let len = encoded_len(&delta.payload, codec, shape)?;
    let mut out = Vec::with_capacity(len);
    let s = match (&delta.payload, codec) {
        (_, Codec::Full) => 0,
        (Payload::Factors(f), Codec::SufficientFactor) => f.len(),
        (p, Codec::Sparse) => sparse_entries(p).len(),
        _ => unreachable!("checked by encoded_len"),
    };
    out.push(codec.tag());
    out.extend_from_slice(&u32_field(shape.rows)?.to_le_bytes());
    out.extend_from_slice(&u32_field(shape.cols)?.to_le_bytes());
    out.extend_from_slice(&u32_field(s)?.to_le_bytes());
    out.extend_from_slice(&delta.timestamp.to_le_bytes());
    out.extend_from_slice(&u32_field(delta.origin)?.to_le_bytes());
    match codec {
        Codec::Full => {
            for x in delta.payload.to_dense(shape.len()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Codec::SufficientFactor => {
            if let Payload::Factors(f) = &delta.payload {
                for (b, c) in &f.pairs {
                    for x in b.iter().chain(c) {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        Codec::Sparse => {
            for (k, v) in sparse_entries(&delta.payload) {
                out.extend_from_slice(&u32_field(k)?.to_le_bytes());
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::Decode {
                offset: self.pos,
                message: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize, CodecError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, CodecError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CodecError::Decode {
            offset: self.pos,
            message: "length overflow".into(),
        })?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes one message; returns the update and the shape from its header.
pub fn decode_delta(bytes: &[u8]) -> Result<(UpdateDelta, Shape), CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    let tag = r.u8("codec tag")?;
    let rows = r.u32("K")?;
    let cols = r.u32("D")?;
    let s = r.u32("S")?;
    let timestamp = r.u64("timestamp")?;
    let origin = r.u32("origin")?;
    let shape = Shape::new(rows, cols);
    let payload = match tag {
        0 => {
            if s != 0 {
                return Err(CodecError::Decode {
                    offset: 9,
                    message: format!("full codec with S = {s}"),
                });
            }
            Payload::Dense(r.f64s(shape.len(), "dense body")?)
        }
        1 => {
            let mut f = FactorList::new(rows, cols);
            for _ in 0..s {
                let b = r.f64s(rows, "factor b")?;
                let c = r.f64s(cols, "factor c")?;
                f.push(b, c);
            }
            Payload::Factors(f)
        }
        2 => {
            let mut sv = SparseVec::new();
            for _ in 0..s {
                let at = r.pos;
                let k = r.u32("sparse key")?;
                let v = r.f64s(1, "sparse value")?[0];
                if k >= shape.len() {
                    return Err(CodecError::Decode {
                        offset: at,
                        message: format!("key {k} outside {rows}x{cols}"),
                    });
                }
                if v == 0.0 {
                    return Err(CodecError::Decode {
                        offset: at + 4,
                        message: "explicit zero in sparse body".into(),
                    });
                }
                sv.add(k, v);
            }
            Payload::Sparse(sv)
        }
        t => {
            return Err(CodecError::Decode {
                offset: 0,
                message: format!("unknown codec tag {t}"),
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(CodecError::Decode {
            offset: r.pos,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok((
        UpdateDelta {
            payload,
            timestamp,
            origin,
        },
        shape,
    ))
}

/// Rows `r0..r1` of a `shape` payload, as a payload over `(r1 - r0) × cols`.
pub fn restrict_rows(payload: &Payload, shape: Shape, r0: usize, r1: usize) -> Payload {
    let (lo, hi) = (r0 * shape.cols, r1 * shape.cols);
    match payload {
        Payload::Dense(v) => Payload::Dense(v[lo.min(v.len())..hi.min(v.len())].to_vec()),
        Payload::Sparse(s) => Payload::Sparse(
            s.iter()
                .filter(|(k, _)| (lo..hi).contains(k))
                .map(|(k, v)| (k - lo, v))
                .collect(),
        ),
        Payload::Factors(f) => {
            let mut out = FactorList::new(r1 - r0, f.cols);
            for (b, c) in &f.pairs {
                out.push(b[r0..r1].to_vec(), c.clone());
            }
            Payload::Factors(out)
        }
    }
}
