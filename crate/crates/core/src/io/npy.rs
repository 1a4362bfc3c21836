//! Reader and writer for the NPY array format (versions 1.0 and 2.0).
//!
//! Only little-endian `f4`/`f8` data in C order is supported. The header is a
//! Python dict literal; we parse just enough of that grammar to read the
//! `descr`, `fortran_order` and `shape` keys.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;

/// Element type of a stored array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "<f4")]
    F4,
    #[serde(rename = "<f8")]
    F8,
}

impl DType {
    pub fn descr(self) -> &'static str {
        match self {
            DType::F4 => "<f4",
            DType::F8 => "<f8",
        }
    }

    pub fn from_width(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(DType::F4),
            64 => Ok(DType::F8),
            other => Err(Error::InvalidInput(format!(
                "float width must be 32 or 64, got {other}"
            ))),
        }
    }

    fn size(self) -> usize {
        match self {
            DType::F4 => 4,
            DType::F8 => 8,
        }
    }

    /// Rounds a value to this storage precision.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            DType::F4 => v as f32 as f64,
            DType::F8 => v,
        }
    }
}

/// A decoded array with its shape and on-disk element type.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

#[derive(Debug, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

struct HeaderParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn err(&self, what: &str) -> Error {
        Error::Format(format!("npy header: {what} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Err(self.err("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        // Python 2 era writers emit e.g. `3L`.
        let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        if self.s.get(self.pos) == Some(&b'L') {
            self.pos += 1;
        }
        digits.parse().map_err(|_| self.err("expected integer"))
    }

    fn value(&mut self) -> Result<Literal> {
        self.skip_ws();
        match self.s.get(self.pos) {
            Some(b'\'' | b'"') => Ok(Literal::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.eat(b')') {
                        break;
                    }
                    dims.push(self.integer()?);
                    if !self.eat(b',') {
                        self.expect(b')')?;
                        break;
                    }
                }
                Ok(Literal::Tuple(dims))
            }
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Literal::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Literal::Bool(false))
                } else {
                    Err(self.err("unsupported literal"))
                }
            }
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, Literal)>> {
        self.expect(b'{')?;
        let mut items = Vec::new();
        loop {
            if self.eat(b'}') {
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            items.push((key, value));
            if !self.eat(b',') {
                self.expect(b'}')?;
                break;
            }
        }
        Ok(items)
    }
}

fn parse_header(text: &[u8]) -> Result<(DType, Vec<usize>)> {
    let mut parser = HeaderParser { s: text, pos: 0 };
    let items = parser.dict()?;
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (key, value) in items {
        match (key.as_str(), value) {
            ("descr", Literal::Str(s)) => descr = Some(s),
            ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
            ("shape", Literal::Tuple(t)) => shape = Some(t),
            (k, _) => return Err(Error::Format(format!("npy header: bad or unknown key {k:?}"))),
        }
    }
    let descr = descr.ok_or_else(|| Error::Format("npy header: missing descr".into()))?;
    let dtype = match descr.as_str() {
        "<f4" => DType::F4,
        "<f8" => DType::F8,
        other => {
            return Err(Error::Format(format!(
                "npy header: unsupported descr {other:?} (only <f4, <f8)"
            )))
        }
    };
    match fortran {
        Some(false) => {}
        Some(true) => return Err(Error::Format("npy header: fortran_order arrays are not supported".into())),
        None => return Err(Error::Format("npy header: missing fortran_order".into())),
    }
    let shape = shape.ok_or_else(|| Error::Format("npy header: missing shape".into()))?;
    Ok((dtype, shape))
}

/// Decodes an NPY stream positioned at its first byte.
pub fn read_npy<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let fmt = |e: std::io::Error| Error::Format(format!("npy: truncated stream ({e})"));
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(fmt)?;
    if magic != MAGIC {
        return Err(Error::Format("npy: bad magic bytes".into()));
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version).map_err(fmt)?;
    let header_len = match version {
        [1, 0] => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b).map_err(fmt)?;
            u16::from_le_bytes(b) as usize
        }
        [2, 0] => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b).map_err(fmt)?;
            u32::from_le_bytes(b) as usize
        }
        [major, minor] => {
            return Err(Error::Format(format!(
                "npy: unsupported version {major}.{minor}"
            )))
        }
    };
    let mut header = vec![0u8; header_len];
    reader.read_exact(&mut header).map_err(fmt)?;
    let (dtype, shape) = parse_header(&header)?;

    let count: usize = shape.iter().product();
    let mut raw = vec![0u8; count * dtype.size()];
    reader.read_exact(&mut raw).map_err(fmt)?;
    let data = match dtype {
        DType::F4 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F8 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(NpyArray { shape, dtype, data })
}

fn header_bytes(dtype: DType, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // Version 1.0 unless the padded header overflows a u16 length.
    let build = |prefix: usize| {
        let unpadded = prefix + dict.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        let mut h = dict.clone().into_bytes();
        h.extend(std::iter::repeat_n(b' ', pad));
        h.push(b'\n');
        h
    };
    let v1 = build(10);
    let mut out = Vec::with_capacity(v1.len() + 12);
    out.extend_from_slice(&MAGIC);
    if v1.len() <= u16::MAX as usize {
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(v1.len() as u16).to_le_bytes());
        out.extend_from_slice(&v1);
    } else {
        let v2 = build(12);
        out.extend_from_slice(&[2, 0]);
        out.extend_from_slice(&(v2.len() as u32).to_le_bytes());
        out.extend_from_slice(&v2);
    }
    out
}

/// Encodes `data` (C order) with the given shape and element type.
pub fn write_npy<W: Write>(writer: &mut W, shape: &[usize], data: &[f64], dtype: DType) -> std::io::Result<()> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "shape does not fit data");
    writer.write_all(&header_bytes(dtype, shape))?;
    match dtype {
        DType::F4 => {
            for v in data {
                writer.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        DType::F8 => {
            for v in data {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a 2-D array from an NPY file.
pub fn read_matrix(path: &Path) -> Result<(Array2<f64>, DType)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let arr = read_npy(&mut BufReader::new(file))?;
    if arr.shape.len() != 2 {
        return Err(Error::Format(format!(
            "{}: expected a 2-D array, found shape {:?}",
            path.display(),
            arr.shape
        )));
    }
    let m = Array2::from_shape_vec((arr.shape[0], arr.shape[1]), arr.data)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((m, arr.dtype))
}

/// Writes a 2-D array to an NPY file.
pub fn write_matrix(path: &Path, m: &Array2<f64>, dtype: DType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let data: Vec<f64> = m.iter().copied().collect();
    write_npy(&mut w, &[m.nrows(), m.ncols()], &data, dtype).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(shape: &[usize], data: &[f64], dtype: DType) -> Vec<u8> {
        let mut buf = Vec::new();
        write_npy(&mut buf, shape, data, dtype).unwrap();
        buf
    }

    #[test]
    fn header_is_aligned_and_terminated() {
        let buf = encode(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], DType::F8);
        let hlen = u16::from_le_bytes([buf[8], buf[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(buf[10 + hlen - 1], b'\n');
        assert_eq!(buf.len(), 10 + hlen + 48);
    }

    #[test]
    fn reads_numpy_style_header() {
        // Header exactly as numpy 1.x emits it, including the trailing comma.
        let dict = b"{'descr': '<f4', 'fortran_order': False, 'shape': (2, 1), }";
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&[1, 0]);
        let mut h = dict.to_vec();
        while (10 + h.len() + 1) % 16 != 0 {
            h.push(b' ');
        }
        h.push(b'\n');
        buf.extend_from_slice(&(h.len() as u16).to_le_bytes());
        buf.extend_from_slice(&h);
        buf.extend_from_slice(&1.5f32.to_le_bytes());
        buf.extend_from_slice(&(-2.0f32).to_le_bytes());
        let arr = read_npy(&mut buf.as_slice()).unwrap();
        assert_eq!(arr.shape, vec![2, 1]);
        assert_eq!(arr.dtype, DType::F4);
        assert_eq!(arr.data, vec![1.5, -2.0]);
    }

    #[test]
    fn version_two_header() {
        let dict = b"{'shape': (1, 2), 'fortran_order': False, 'descr': '<f8'}\n";
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&[2, 0]);
        buf.extend_from_slice(&(dict.len() as u32).to_le_bytes());
        buf.extend_from_slice(dict);
        buf.extend_from_slice(&3.0f64.to_le_bytes());
        buf.extend_from_slice(&4.0f64.to_le_bytes());
        let arr = read_npy(&mut buf.as_slice()).unwrap();
        assert_eq!(arr.data, vec![3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = encode(&[1, 1], &[1.0], DType::F8);
        buf[1] = b'X';
        assert!(matches!(read_npy(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unsupported_descr_and_order() {
        for dict in [
            "{'descr': '<i4', 'fortran_order': False, 'shape': (1,), }",
            "{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }",
            "{'descr': '<f8', 'fortran_order': True, 'shape': (1,), }",
        ] {
            let mut buf = MAGIC.to_vec();
            buf.extend_from_slice(&[1, 0]);
            buf.extend_from_slice(&(dict.len() as u16).to_le_bytes());
            buf.extend_from_slice(dict.as_bytes());
            buf.extend_from_slice(&[0u8; 8]);
            assert!(matches!(read_npy(&mut buf.as_slice()), Err(Error::Format(_))), "{dict}");
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let buf = encode(&[2, 2], &[1.0, 2.0, 3.0, 4.0], DType::F8);
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_npy(&mut &cut[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact_at_stored_precision(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1e6f64..1e6, 36),
            f4 in any::<bool>(),
        ) {
            let dtype = if f4 { DType::F4 } else { DType::F8 };
            let data: Vec<f64> = seed[..rows * cols].to_vec();
            let buf = encode(&[rows, cols], &data, dtype);
            let back = read_npy(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.shape, vec![rows, cols]);
            let expect: Vec<f64> = data.iter().map(|v| dtype.quantize(*v)).collect();
            prop_assert_eq!(back.data, expect);
        }
    }
}
