//! Checkpoint container: a text manifest followed by raw little-endian
//! `f64` arrays.
//!
//! ```text
//! GRAN-CHECKPOINT 1
//! meta <key> <value>
//! tensor <name> <dim,dim,...> f64 <byte offset> <element count>
//! data
//! <raw bytes>
//! ```
//!
//! Offsets are relative to the first byte after the `data` line.

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "GRAN-CHECKPOINT 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        head.push_str(MAGIC);
        head.push('\n');
        for (k, v) in &self.meta {
            head.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let dims = if dims.is_empty() {
                "-".to_string()
            } else {
                dims.join(",")
            };
            head.push_str(&format!("tensor {name} {dims} f64 {offset} {}\n", t.numel()));
            offset += t.numel() * 8;
        }
        head.push_str("data\n");
        let mut bytes = head.into_bytes();
        for (_, t) in &self.tensors {
            for x in t.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut pos = 0usize;
        let mut line_no = 0usize;
        let next_line = |pos: &mut usize| -> Option<String> {
            let rest = &bytes[*pos..];
            let end = rest.iter().position(|&b| b == b'\n')?;
            *pos += end + 1;
            String::from_utf8(rest[..end].to_vec()).ok()
        };

        let mut ck = Checkpoint::default();
        let mut layout = Vec::new();
        loop {
            line_no += 1;
            let line = next_line(&mut pos).ok_or_else(|| parse_err(line_no, "truncated manifest".into()))?;
            if line_no == 1 {
                if line != MAGIC {
                    return Err(parse_err(1, format!("bad header {line:?}")));
                }
                continue;
            }
            if line == "data" {
                break;
            }
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let k = parts.next().unwrap_or_default().to_string();
                    let v = parts.next().unwrap_or_default().to_string();
                    ck.meta.push((k, v));
                }
                Some("tensor") => {
                    let f: Vec<&str> = line.split(' ').collect();
                    if f.len() != 6 || f[3] != "f64" {
                        return Err(parse_err(line_no, format!("bad tensor entry {line:?}")));
                    }
                    let shape: Vec<usize> = if f[2] == "-" {
                        Vec::new()
                    } else {
                        f[2].split(',')
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e| parse_err(line_no, format!("bad shape: {e}")))?
                    };
                    let offset: usize = f[4]
                        .parse()
                        .map_err(|e| parse_err(line_no, format!("bad offset: {e}")))?;
                    let count: usize = f[5]
                        .parse()
                        .map_err(|e| parse_err(line_no, format!("bad count: {e}")))?;
                    layout.push((f[1].to_string(), shape, offset, count));
                }
                _ => return Err(parse_err(line_no, format!("unexpected line {line:?}"))),
            }
        }
        let data = &bytes[pos..];
        for (name, shape, offset, count) in layout {
            let end = offset + count * 8;
            if end > data.len() {
                return Err(parse_err(line_no, format!("tensor {name} runs past end of file")));
            }
            let values = data[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let t = Tensor::new(shape, values).map_err(|e| parse_err(line_no, e.to_string()))?;
            ck.tensors.push((name, t));
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let ck = Checkpoint {
            meta: vec![("step".into(), "12".into()), ("note".into(), "two words".into())],
            tensors: vec![
                (
                    "a".into(),
                    Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
                ),
                ("s".into(), Tensor::scalar(0.1)),
            ],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.meta_value("note"), Some("two words"));
        assert_eq!(back.tensor("s").unwrap().item(), 0.1);
        let a = back.tensor("a").unwrap();
        assert_eq!(a.shape(), &[2, 2]);
        assert!(a.data()[1].is_sign_negative());
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let ck = Checkpoint {
            meta: vec![],
            tensors: vec![("a".into(), Tensor::row(vec![1.0, 2.0]))],
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
        assert!(Checkpoint::from_bytes(b"nope\n", Path::new("mem")).is_err());
    }
}
