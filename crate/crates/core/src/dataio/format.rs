//! `.pmt` sequence files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PMT1" | T: u32 | W: u32 | H: u32 | J: u32
//! T·H·W f32 pressure values (frame-major, row-major within a frame)
//! T·J·3 f32 joint coordinates (frame, joint, xyz)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array3;

use super::{PoseSequence, PressureSequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"PMT1";
pub const HEADER_LEN: usize = 4 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceHeader {
    pub frames: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub joints: usize,
}

impl SequenceHeader {
    pub fn file_len(&self) -> u64 {
        let t = self.frames as u64;
        HEADER_LEN as u64
            + 4 * t * self.grid_w as u64 * self.grid_h as u64
            + 4 * t * self.joints as u64 * 3
    }
}

pub fn encode_sequence<S: Scalar>(
    pressure: &PressureSequence<S>,
    pose: &PoseSequence<S>,
) -> Result<Vec<u8>> {
    let (t, h, w) = pressure.frames.dim();
    let (tp, j, _) = pose.joints.dim();
    if t != tp {
        return Err(Error::Shape(format!(
            "pressure has {t} frames but pose has {tp}"
        )));
    }
    pressure.check()?;
    let header = SequenceHeader {
        frames: t,
        grid_w: w,
        grid_h: h,
        joints: j,
    };
    let mut buf = Vec::with_capacity(header.file_len() as usize);
    buf.extend_from_slice(&MAGIC);
    for v in [t, w, h, j] {
        let v = u32::try_from(v).map_err(|_| Error::Shape(format!("dimension {v} exceeds u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in pressure.frames.iter() {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    for &v in pose.joints.iter() {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    Ok(buf)
}

pub fn write_sequence<S: Scalar>(
    path: &Path,
    pressure: &PressureSequence<S>,
    pose: &PoseSequence<S>,
) -> Result<()> {
    let buf = encode_sequence(pressure, pose)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn u32_at(bytes: &[u8], offset: usize) -> usize {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize
}

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub fn decode_header(path: &Path, bytes: &[u8]) -> Result<SequenceHeader> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: bytes[..4].try_into().unwrap(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(SequenceHeader {
        frames: u32_at(bytes, 4),
        grid_w: u32_at(bytes, 8),
        grid_h: u32_at(bytes, 12),
        joints: u32_at(bytes, 16),
    })
}

pub fn decode_sequence<S: Scalar>(
    path: &Path,
    bytes: &[u8],
) -> Result<(PressureSequence<S>, PoseSequence<S>)> {
    let header = decode_header(path, bytes)?;
    let expected = header.file_len();
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::DimensionMismatch {
            path: path.into(),
            detail: format!(
                "{} trailing bytes after the declared payload",
                bytes.len() as u64 - expected
            ),
        });
    }
    let SequenceHeader {
        frames: t,
        grid_w: w,
        grid_h: h,
        joints: j,
    } = header;
    let mut offset = HEADER_LEN;
    let mut pressure = Vec::with_capacity(t * h * w);
    for index in 0..t * h * w {
        let v = f32_at(bytes, offset);
        offset += 4;
        if v < 0.0 {
            return Err(Error::NegativePressure {
                path: path.into(),
                index,
                value: v,
            });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: pressure at flat index {index}",
                path.display()
            )));
        }
        pressure.push(S::from(v).unwrap());
    }
    let mut joints = Vec::with_capacity(t * j * 3);
    for _ in 0..t * j * 3 {
        joints.push(S::from(f32_at(bytes, offset)).unwrap());
        offset += 4;
    }
    let frames = Array3::from_shape_vec((t, h, w), pressure).unwrap();
    let joints = Array3::from_shape_vec((t, j, 3), joints).unwrap();
    Ok((PressureSequence { frames }, PoseSequence::new(joints)?))
}

pub fn read_sequence<S: Scalar>(path: &Path) -> Result<(PressureSequence<S>, PoseSequence<S>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sequence(path, &bytes)
}

/// Reads a sequence and checks its header against the expected dimensions.
pub fn read_sequence_checked<S: Scalar>(
    path: &Path,
    expected: SequenceHeader,
) -> Result<(PressureSequence<S>, PoseSequence<S>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = decode_header(path, &bytes)?;
    if header != expected {
        return Err(Error::DimensionMismatch {
            path: path.into(),
            detail: format!("file header {header:?} but manifest expects {expected:?}"),
        });
    }
    decode_sequence(path, &bytes)
}
