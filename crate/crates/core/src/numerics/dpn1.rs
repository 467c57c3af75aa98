//! The DPN1 binary tensor format.
//!
//! Single tensor:
//!
//! ```text
//! 0..4   magic "DPN1" (44 50 4E 31)
//! 4      dtype: 0 = f32 real, 1 = f64 real, 2 = c128 (re, im interleaved)
//! 5      ndim
//! 6..    ndim × u32 LE dims, then the row-major payload, little-endian
//! ```
//!
//! Multi-tensor container (checkpoints, optimizer state) uses dtype code 3:
//!
//! ```text
//! 0..4   magic
//! 4      3
//! 5..9   u32 LE byte length of the UTF-8 index
//! 9..    index text, then the payload
//! ```
//!
//! The index holds `key=value` header lines followed by one
//! `tensor <name> <dtype> <offset> <d0>x<d1>...` line per tensor, offsets in
//! bytes from the start of the payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DPN1";
const CONTAINER_CODE: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C128(Vec<Complex64>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::C128(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::C128(v) => v.len(),
        }
    }

    fn element_size(code: u8) -> Option<usize> {
        match code {
            0 => Some(4),
            1 => Some(8),
            2 => Some(16),
            _ => None,
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::C128(v) => v.iter().for_each(|x| {
                out.extend_from_slice(&x.re.to_le_bytes());
                out.extend_from_slice(&x.im.to_le_bytes());
            }),
        }
    }

    fn read_payload(code: u8, count: usize, bytes: &[u8]) -> TensorData {
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        match code {
            0 => TensorData::F32(
                (0..count)
                    .map(|i| f32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()))
                    .collect(),
            ),
            1 => TensorData::F64((0..count).map(f64_at).collect()),
            _ => TensorData::C128(
                (0..count)
                    .map(|i| Complex64::new(f64_at(2 * i), f64_at(2 * i + 1)))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::invalid(format!(
                "tensor dims {dims:?} need {expect} values, got {}",
                data.len()
            )));
        }
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::invalid(format!("tensor dims {dims:?} not representable")));
        }
        Ok(Tensor { dims, data })
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn c128(dims: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        Self::new(dims, TensorData::C128(data))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + self.data.len() * 16);
        out.extend_from_slice(&MAGIC);
        out.push(self.data.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        self.data.write_payload(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 6 || bytes[..4] != MAGIC {
            return Err("bad magic".into());
        }
        let code = bytes[4];
        let elem = TensorData::element_size(code).ok_or_else(|| format!("unknown dtype code {code}"))?;
        let ndim = bytes[5] as usize;
        let header = 6 + 4 * ndim;
        if bytes.len() < header {
            return Err("truncated header".into());
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|i| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize)
            .collect();
        let count: usize = dims.iter().product();
        let payload = &bytes[header..];
        if payload.len() != count * elem {
            return Err(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                count * elem
            ));
        }
        Ok(Tensor {
            data: TensorData::read_payload(code, count, payload),
            dims,
        })
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_c128(&self) -> Option<&[Complex64]> {
        match &self.data {
            TensorData::C128(v) => Some(v),
            _ => None,
        }
    }
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &tensor.to_bytes())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

/// Named tensors plus `key=value` metadata in one file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut index = String::new();
        let mut payload = Vec::new();
        for (k, v) in &self.header {
            index.push_str(&format!("{k}={v}\n"));
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
            index.push_str(&format!(
                "tensor {name} {} {} {}\n",
                t.data.code(),
                payload.len(),
                dims.join("x")
            ));
            t.data.write_payload(&mut payload);
        }
        let mut out = Vec::with_capacity(9 + index.len() + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(CONTAINER_CODE);
        out.extend_from_slice(&(index.len() as u32).to_le_bytes());
        out.extend_from_slice(index.as_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 9 || bytes[..4] != MAGIC {
            return Err("bad magic".into());
        }
        if bytes[4] != CONTAINER_CODE {
            return Err(format!("dtype code {} is not a container", bytes[4]));
        }
        let index_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let index_end = 9 + index_len;
        if bytes.len() < index_end {
            return Err("truncated index".into());
        }
        let index = std::str::from_utf8(&bytes[9..index_end]).map_err(|e| e.to_string())?;
        let payload = &bytes[index_end..];

        let mut out = Container::default();
        for line in index.lines().filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 4 {
                    return Err(format!("bad index line {line:?}"));
                }
                let code: u8 = parts[1].parse().map_err(|_| format!("bad dtype in {line:?}"))?;
                let elem = TensorData::element_size(code).ok_or_else(|| format!("unknown dtype {code}"))?;
                let offset: usize = parts[2].parse().map_err(|_| format!("bad offset in {line:?}"))?;
                let dims = if parts[3].is_empty() {
                    Vec::new()
                } else {
                    parts[3]
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| format!("bad dims in {line:?}"))?
                };
                let count: usize = dims.iter().product();
                let end = offset + count * elem;
                if end > payload.len() {
                    return Err(format!("tensor {} runs past end of payload", parts[0]));
                }
                let data = TensorData::read_payload(code, count, &payload[offset..end]);
                out.tensors.push((parts[0].to_string(), Tensor { dims, data }));
            } else if let Some((k, v)) = line.split_once('=') {
                out.header.push((k.to_string(), v.to_string()));
            } else {
                return Err(format!("bad index line {line:?}"));
            }
        }
        Ok(out)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
