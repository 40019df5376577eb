//! TensorBlob: the binary container used for every tensor in a dump.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "VLIT"
//! version    u32
//! ndim       u8
//! dims       ndim × u32
//! dtype_code u8       0 = f32 LE, 1 = packed bits (masks)
//! payload    row-major element stream
//! ```
//!
//! Packed-bit payloads store each row of the last dimension MSB-first,
//! padded to a byte boundary with zero bits.

use crate::error::BlobError;

pub const MAGIC: &[u8; 4] = b"VLIT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    PackedBits = 1,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::PackedBits),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlobHeader {
    pub version: u32,
    pub dims: Vec<u32>,
    pub dtype: DType,
}

impl BlobHeader {
    pub fn encoded_len(&self) -> usize {
        4 + 4 + 1 + 4 * self.dims.len() + 1
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    /// Payload size in bytes implied by the header.
    pub fn payload_len(&self) -> u64 {
        match self.dtype {
            DType::F32 => 4 * self.element_count(),
            DType::PackedBits => match self.dims.split_last() {
                None => 0,
                Some((&last, rest)) => {
                    let rows: u64 = rest.iter().map(|&d| d as u64).product();
                    rows * (last as u64).div_ceil(8)
                }
            },
        }
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.dtype as u8);
    }
}

/// Parses and checks the header; returns it with the payload slice.
pub fn split(bytes: &[u8]) -> Result<(BlobHeader, &[u8]), BlobError> {
    if bytes.len() < 10 {
        return Err(BlobError::Truncated {
            expected: 10,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(BlobError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(BlobError::UnsupportedVersion(version));
    }
    let ndim = bytes[8] as usize;
    let header_len = 4 + 4 + 1 + 4 * ndim + 1;
    if bytes.len() < header_len {
        return Err(BlobError::Truncated {
            expected: header_len as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims = bytes[9..9 + 4 * ndim]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let code = bytes[header_len - 1];
    let dtype = DType::from_code(code).ok_or(BlobError::UnknownDType(code))?;
    let header = BlobHeader {
        version,
        dims,
        dtype,
    };
    let payload = &bytes[header_len..];
    let expected = header.payload_len();
    if payload.len() as u64 != expected {
        return Err(if (payload.len() as u64) < expected {
            BlobError::Truncated {
                expected: header_len as u64 + expected,
                actual: bytes.len() as u64,
            }
        } else {
            BlobError::TrailingBytes {
                expected: header_len as u64 + expected,
                actual: bytes.len() as u64,
            }
        });
    }
    Ok((header, payload))
}

/// Encodes an f32 tensor. `data.len()` must equal the product of `dims`.
pub fn encode_f32(dims: &[usize], data: &[f32]) -> Vec<u8> {
    let header = BlobHeader {
        version: VERSION,
        dims: dims.iter().map(|&d| d as u32).collect(),
        dtype: DType::F32,
    };
    debug_assert_eq!(header.element_count(), data.len() as u64);
    let mut out = Vec::with_capacity(header.encoded_len() + 4 * data.len());
    header.write_to(&mut out);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>), BlobError> {
    let (header, payload) = split(bytes)?;
    if header.dtype != DType::F32 {
        return Err(BlobError::WrongDType {
            expected: DType::F32 as u8,
            actual: header.dtype as u8,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header.dims.iter().map(|&d| d as usize).collect(), data))
}

/// Encodes a packed bit matrix of shape (rows, cols). `packed` must already be
/// laid out as `rows × ceil(cols / 8)` bytes.
pub fn encode_packed_bits(rows: usize, cols: usize, packed: &[u8]) -> Vec<u8> {
    let header = BlobHeader {
        version: VERSION,
        dims: vec![rows as u32, cols as u32],
        dtype: DType::PackedBits,
    };
    debug_assert_eq!(header.payload_len(), packed.len() as u64);
    let mut out = Vec::with_capacity(header.encoded_len() + packed.len());
    header.write_to(&mut out);
    out.extend_from_slice(packed);
    out
}

/// Returns (rows, cols, packed payload).
pub fn decode_packed_bits(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), BlobError> {
    let (header, payload) = split(bytes)?;
    if header.dtype != DType::PackedBits {
        return Err(BlobError::WrongDType {
            expected: DType::PackedBits as u8,
            actual: header.dtype as u8,
        });
    }
    if header.dims.len() != 2 {
        return Err(BlobError::BadRank {
            expected: 2,
            actual: header.dims.len(),
        });
    }
    Ok((
        header.dims[0] as usize,
        header.dims[1] as usize,
        payload.to_vec(),
    ))
}
