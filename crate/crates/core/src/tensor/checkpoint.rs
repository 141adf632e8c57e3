//! Checkpoint container.
//!
//! ```text
//! MCGCL-CHECKPOINT 1
//! meta <key> <value>
//! tensor <name> <rows> <cols>
//! ...
//! end
//! <payload>
//! ```
//!
//! The header is UTF-8 text, one record per line, tensors in payload order.
//! The payload is the concatenation of every tensor's values as little-endian
//! `f64`, row-major. Names and meta keys may not contain whitespace.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "MCGCL-CHECKPOINT 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        for (k, v) in &self.meta {
            check_token(k)?;
            if v.contains('\n') {
                return Err(Error::Checkpoint(format!("meta value for '{k}' spans lines")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            check_token(name)?;
            header.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut pos = 0;
        let next_line = |pos: &mut usize| -> Result<String> {
            let rest = &bytes[*pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("header truncated before 'end' line".into()))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| bad("header is not UTF-8".into()))?
                .to_string();
            *pos += end + 1;
            Ok(line)
        };
        let magic = next_line(&mut pos)?;
        if magic != MAGIC {
            return Err(bad(format!("bad header magic '{magic}'")));
        }
        let mut ck = Checkpoint::default();
        let mut shapes = Vec::new();
        loop {
            let line = next_line(&mut pos)?;
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("end") => break,
                Some("meta") => {
                    let k = parts.next().ok_or_else(|| bad(format!("bad meta line '{line}'")))?;
                    let v = parts.next().unwrap_or("");
                    ck.meta.push((k.to_string(), v.to_string()));
                }
                Some("tensor") => {
                    let fields: Vec<&str> = line.split(' ').collect();
                    if fields.len() != 4 {
                        return Err(bad(format!("bad tensor line '{line}'")));
                    }
                    let rows: usize = fields[2]
                        .parse()
                        .map_err(|_| bad(format!("bad row count in '{line}'")))?;
                    let cols: usize = fields[3]
                        .parse()
                        .map_err(|_| bad(format!("bad column count in '{line}'")))?;
                    shapes.push((fields[1].to_string(), rows, cols));
                }
                _ => return Err(bad(format!("unrecognized header line '{line}'"))),
            }
        }
        let expected: usize = shapes.iter().map(|(_, r, c)| r * c * 8).sum();
        let payload = &bytes[pos..];
        if payload.len() != expected {
            return Err(bad(format!(
                "header declares {expected} payload bytes, found {}",
                payload.len()
            )));
        }
        let mut off = 0;
        for (name, rows, cols) in shapes {
            let n = rows * cols;
            let data = payload[off..off + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            off += n * 8;
            ck.tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        Ok(ck)
    }
}

fn check_token(s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Checkpoint(format!("invalid name '{s}'")));
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, ck.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: vec![("seed".into(), "7".into()), ("label_mode".into(), "multi".into())],
            tensors: vec![
                (
                    "z_user".into(),
                    Tensor::from_rows(&[[1.0, -0.0], [f64::MIN_POSITIVE, 3.5]]),
                ),
                ("bias".into(), Tensor::zeros(1, 3)),
            ],
        }
    }

    #[test]
    fn truncated_payload_is_reported() {
        let bytes = sample().to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("payload bytes"), "{err}");
    }

    #[test]
    fn truncated_header_is_reported() {
        let bytes = sample().to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..25]).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn lookup_by_name() {
        let ck = sample();
        assert_eq!(ck.meta("seed"), Some("7"));
        assert_eq!(ck.tensor("bias").unwrap().shape(), (1, 3));
        assert!(ck.tensor("missing").is_none());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 0usize..5,
            cols in 0usize..5,
            bits in proptest::collection::vec(any::<u64>(), 25),
        ) {
            let data: Vec<f64> = bits[..rows * cols]
                .iter()
                .map(|b| f64::from_bits(*b))
                .map(|v| if v.is_nan() { 0.5 } else { v })
                .collect();
            let ck = Checkpoint {
                meta: vec![("k".into(), "v w".into())],
                tensors: vec![("t".into(), Tensor::from_vec(rows, cols, data).unwrap())],
            };
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            let a: Vec<u64> = ck.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.meta, ck.meta);
        }
    }
}
