//! Versioned checkpoint container shared by every model.
//!
//! Layout: a UTF-8 header of `key = value` lines and `array <name> <d0>x<d1>...`
//! declarations closed by an `end` line, then every declared array as
//! little-endian f64 in declaration order (row-major).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const MAGIC: &str = "FLOWCAST-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub arrays: Vec<NamedArray>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}

impl Checkpoint {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing header key `{key}`")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| bad(format!("header key `{key}` has unreadable value `{raw}`")))
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn push_matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.push(name, vec![m.nrows(), m.ncols()], m.iter().copied().collect());
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) {
        self.push(name, vec![v.len()], v.to_vec());
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| bad(format!("missing array `{name}`")))
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let a = self.array(name)?;
        if a.shape != [rows, cols] {
            return Err(bad(format!(
                "array `{name}` has shape {:?}, expected [{rows}, {cols}]",
                a.shape
            )));
        }
        Ok(Array2::from_shape_vec((rows, cols), a.data.clone()).expect("shape checked"))
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        let a = self.array(name)?;
        if a.shape != [len] {
            return Err(bad(format!(
                "array `{name}` has shape {:?}, expected [{len}]",
                a.shape
            )));
        }
        Ok(Array1::from(a.data.clone()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = format!("{MAGIC}\nversion = {FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            if !valid_token(k) || k == "version" || v.contains('\n') {
                return Err(bad(format!("header entry `{k}` cannot be encoded")));
            }
            header.push_str(&format!("{k} = {v}\n"));
        }
        for a in &self.arrays {
            if !valid_token(&a.name) {
                return Err(bad(format!("array name `{}` cannot be encoded", a.name)));
            }
            let dims: Vec<String> = a.shape.iter().map(usize::to_string).collect();
            header.push_str(&format!("array {} {}\n", a.name, dims.join("x")));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let len = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header"))?;
            pos += len + 1;
            std::str::from_utf8(&rest[..len]).map_err(|_| bad("header is not UTF-8"))
        };
        if next_line()? != MAGIC {
            return Err(bad("not a flowcast checkpoint"));
        }
        let version = next_line()?;
        match version.strip_prefix("version = ").map(str::parse::<u32>) {
            Some(Ok(FORMAT_VERSION)) => {}
            Some(Ok(v)) => {
                return Err(bad(format!(
                    "format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            _ => return Err(bad(format!("bad version line `{version}`"))),
        }
        let mut ck = Checkpoint::default();
        let mut decls = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            if let Some(decl) = line.strip_prefix("array ") {
                let (name, dims) = decl
                    .split_once(' ')
                    .ok_or_else(|| bad(format!("bad array line `{line}`")))?;
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad array dims in `{line}`")))?;
                decls.push((name.to_string(), shape));
            } else if let Some((k, v)) = line.split_once(" = ") {
                ck.meta.insert(k.to_string(), v.to_string());
            } else {
                return Err(bad(format!("unreadable header line `{line}`")));
            }
        }
        let mut payload = &bytes[pos..];
        for (name, shape) in decls {
            let n: usize = shape.iter().product();
            if payload.len() < n * 8 {
                return Err(bad(format!("payload ends inside array `{name}`")));
            }
            let data = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            payload = &payload[n * 8..];
            ck.arrays.push(NamedArray { name, shape, data });
        }
        if !payload.is_empty() {
            return Err(bad(format!("{} trailing payload bytes", payload.len())));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set("model", "gru").set("seed", 7);
        ck.push_matrix("w", &ndarray::array![[1.0, -0.0], [f64::MIN_POSITIVE, 1e300]]);
        ck.push_vector("b", &[0.1, 0.2, 0.3]);
        ck
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.get_parsed::<u64>("seed").unwrap(), 7);
        assert_eq!(back.matrix("w", 2, 2).unwrap()[[1, 1]], 1e300);
        assert!(back.matrix("w", 1, 4).is_err());
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes().unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::Checkpoint(_))));
        let text = String::from_utf8_lossy(&bytes).replacen("version = 1", "version = 9", 1);
        let err = Checkpoint::from_bytes(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
        assert!(Checkpoint::from_bytes(b"hello\n").is_err());
    }

    proptest! {
        #[test]
        fn payload_is_bit_exact(bits in prop::collection::vec(any::<u64>(), 0..40)) {
            let data: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
            let mut ck = Checkpoint::default();
            ck.push_vector("v", &data);
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            let got: Vec<u64> = back.array("v").unwrap().data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, bits);
        }
    }
}
