//! `.bevg` raster container.
//!
//! Layout: 16-byte header `"BEVG" | u16 H | u16 W | u16 C | u16 dtype | u32 reserved`
//! followed by the row-major `H × W × C` payload, all little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"BEVG";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("file shorter than header")]
    ShortHeader,
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u16),
    #[error("payload is {found} bytes, header implies {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("dimension {0} does not fit in u16")]
    DimensionOverflow(usize),
    #[error("expected dtype {expected:?}, found {found:?}")]
    DtypeMismatch { expected: Dtype, found: Dtype },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    fn from_tag(tag: u16) -> Result<Self, ContainerError> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            t => Err(ContainerError::UnknownDtype(t)),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub dtype: Dtype,
}

impl Header {
    pub fn elements(&self) -> usize {
        self.height * self.width * self.channels
    }

    fn encode(&self) -> Result<[u8; HEADER_LEN], ContainerError> {
        let dim = |d: usize| u16::try_from(d).map_err(|_| ContainerError::DimensionOverflow(d));
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(MAGIC);
        h[4..6].copy_from_slice(&dim(self.height)?.to_le_bytes());
        h[6..8].copy_from_slice(&dim(self.width)?.to_le_bytes());
        h[8..10].copy_from_slice(&dim(self.channels)?.to_le_bytes());
        h[10..12].copy_from_slice(&(self.dtype as u16).to_le_bytes());
        Ok(h)
    }

    fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < HEADER_LEN {
            return Err(ContainerError::ShortHeader);
        }
        if &bytes[..4] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
        Ok(Self {
            height: u16_at(4),
            width: u16_at(6),
            channels: u16_at(8),
            dtype: Dtype::from_tag(u16_at(10) as u16)?,
        })
    }
}

fn check_payload(header: &Header, payload: &[u8]) -> Result<(), ContainerError> {
    let expected = header.elements() * header.dtype.size();
    if payload.len() != expected {
        return Err(ContainerError::PayloadLength { expected, found: payload.len() });
    }
    Ok(())
}

pub fn encode_f32(height: usize, width: usize, channels: usize, data: &[f32]) -> Result<Vec<u8>, ContainerError> {
    let header = Header { height, width, channels, dtype: Dtype::F32 };
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&header.encode()?);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    check_payload(&header, &out[HEADER_LEN..])?;
    Ok(out)
}

pub fn encode_f64(height: usize, width: usize, channels: usize, data: &[f64]) -> Result<Vec<u8>, ContainerError> {
    let header = Header { height, width, channels, dtype: Dtype::F64 };
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 8);
    out.extend_from_slice(&header.encode()?);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    check_payload(&header, &out[HEADER_LEN..])?;
    Ok(out)
}

pub fn decode_f32(bytes: &[u8]) -> Result<(Header, Vec<f32>), ContainerError> {
    let header = Header::decode(bytes)?;
    if header.dtype != Dtype::F32 {
        return Err(ContainerError::DtypeMismatch { expected: Dtype::F32, found: header.dtype });
    }
    let payload = &bytes[HEADER_LEN..];
    check_payload(&header, payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((header, data))
}

pub fn decode_f64(bytes: &[u8]) -> Result<(Header, Vec<f64>), ContainerError> {
    let header = Header::decode(bytes)?;
    if header.dtype != Dtype::F64 {
        return Err(ContainerError::DtypeMismatch { expected: Dtype::F64, found: header.dtype });
    }
    let payload = &bytes[HEADER_LEN..];
    check_payload(&header, payload)?;
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, data))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<Header, ContainerError> {
    Header::decode(&fs::read(path)?)
}
