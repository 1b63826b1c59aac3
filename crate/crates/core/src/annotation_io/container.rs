//! Little-endian binary container for feature sequences, frame-level model
//! outputs and weight tensors.
//!
//! ```text
//! offset size field
//!      0    4 magic  b"SSEG"
//!      4    4 version (u32, = 1)
//!      8    4 kind    (u32: 0 frame, 1 audio, 2 text, 3 frame outputs, 4 tensor)
//!     12    4 rows    (u32, T)
//!     16    4 cols    (u32, D or C)
//!     20    8 fps     (f64)
//!     28    8 duration_s (f64; 0 for tensors)
//!     36    … payload, f32 row-major
//! ```
//!
//! Frame outputs carry three blocks after the header: `T×C` label scores,
//! `T` boundary probabilities, `T` offsets in seconds.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::decode::FrameOutputs;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSEG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ContainerKind {
    Frame = 0,
    Audio = 1,
    Text = 2,
    FrameOutputs = 3,
    Tensor = 4,
}

impl ContainerKind {
    fn from_u32(v: u32) -> Result<Self> {
        Ok(match v {
            0 => ContainerKind::Frame,
            1 => ContainerKind::Audio,
            2 => ContainerKind::Text,
            3 => ContainerKind::FrameOutputs,
            4 => ContainerKind::Tensor,
            other => return Err(Error::Container(format!("unknown kind tag {other}"))),
        })
    }

    /// File-name tag used under `features/`.
    pub fn tag(self) -> &'static str {
        match self {
            ContainerKind::Frame => "frame",
            ContainerKind::Audio => "audio",
            ContainerKind::Text => "text",
            ContainerKind::FrameOutputs => "out",
            ContainerKind::Tensor => "tensor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub kind: ContainerKind,
    pub rows: usize,
    pub cols: usize,
    pub fps: f64,
    pub duration_s: f64,
}

impl Header {
    fn payload_len(&self) -> usize {
        match self.kind {
            ContainerKind::FrameOutputs => self.rows * self.cols + 2 * self.rows,
            _ => self.rows * self.cols,
        }
    }
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| Error::Container(format!("dimension {n} exceeds u32")))
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(h.kind as u32).to_le_bytes())?;
    w.write_all(&dim(h.rows)?.to_le_bytes())?;
    w.write_all(&dim(h.cols)?.to_le_bytes())?;
    w.write_all(&h.fps.to_le_bytes())?;
    w.write_all(&h.duration_s.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Container(format!("truncated {what}: {e}")))
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    read_exact(r, &mut buf, "header")?;
    if &buf[0..4] != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().expect("4 bytes"));
    let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let h = Header {
        kind: ContainerKind::from_u32(u32_at(8))?,
        rows: u32_at(12) as usize,
        cols: u32_at(16) as usize,
        fps: f64_at(20),
        duration_s: f64_at(28),
    };
    if !h.fps.is_finite() || h.fps < 0.0 || !h.duration_s.is_finite() || h.duration_s < 0.0 {
        return Err(Error::Container(
            "non-finite or negative fps/duration".into(),
        ));
    }
    Ok(h)
}

fn write_f32s<W: Write, I: IntoIterator<Item = f64>>(w: &mut W, values: I) -> Result<()> {
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    read_exact(r, &mut bytes, "payload")?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

/// Writes one matrix record (features or a weight tensor).
pub fn write_matrix<W: Write>(
    w: &mut W,
    kind: ContainerKind,
    m: &Array2<f64>,
    fps: f64,
    duration_s: f64,
) -> Result<()> {
    let h = Header {
        kind,
        rows: m.nrows(),
        cols: m.ncols(),
        fps,
        duration_s,
    };
    write_header(w, &h)?;
    write_f32s(w, m.iter().copied())
}

/// Reads one matrix record.
pub fn read_matrix<R: Read>(r: &mut R) -> Result<(Header, Array2<f64>)> {
    let h = read_header(r)?;
    if h.kind == ContainerKind::FrameOutputs {
        return Err(Error::Container(
            "expected a matrix record, found frame outputs".into(),
        ));
    }
    let data = read_f32s(r, h.payload_len())?;
    let m = Array2::from_shape_vec((h.rows, h.cols), data)
        .map_err(|e| Error::Container(e.to_string()))?;
    Ok((h, m))
}

pub fn write_frame_outputs<W: Write>(w: &mut W, out: &FrameOutputs) -> Result<()> {
    let h = Header {
        kind: ContainerKind::FrameOutputs,
        rows: out.label_scores.nrows(),
        cols: out.label_scores.ncols(),
        fps: out.fps,
        duration_s: out.duration_s,
    };
    write_header(w, &h)?;
    write_f32s(w, out.label_scores.iter().copied())?;
    write_f32s(w, out.boundary_prob.iter().copied())?;
    write_f32s(w, out.offsets_s.iter().copied())
}

pub fn read_frame_outputs<R: Read>(r: &mut R) -> Result<FrameOutputs> {
    let h = read_header(r)?;
    if h.kind != ContainerKind::FrameOutputs {
        return Err(Error::Container(format!(
            "expected frame outputs, found {:?}",
            h.kind
        )));
    }
    let scores = read_f32s(r, h.rows * h.cols)?;
    let prob = read_f32s(r, h.rows)?;
    let offsets = read_f32s(r, h.rows)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Container(
            "trailing bytes after frame outputs".into(),
        ));
    }
    FrameOutputs::new(
        h.fps,
        h.duration_s,
        Array2::from_shape_vec((h.rows, h.cols), scores)
            .map_err(|e| Error::Container(e.to_string()))?,
        Array1::from(prob),
        Array1::from(offsets),
    )
    .map_err(|e| Error::Container(e.to_string()))
}

pub fn save_frame_outputs(path: impl AsRef<Path>, out: &FrameOutputs) -> Result<()> {
    let mut buf = Vec::new();
    write_frame_outputs(&mut buf, out)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_frame_outputs(path: impl AsRef<Path>) -> Result<FrameOutputs> {
    let bytes = std::fs::read(path)?;
    read_frame_outputs(&mut bytes.as_slice())
}

pub fn save_matrix(
    path: impl AsRef<Path>,
    kind: ContainerKind,
    m: &Array2<f64>,
    fps: f64,
    duration_s: f64,
) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(&mut buf, kind, m, fps, duration_s)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<(Header, Array2<f64>)> {
    let bytes = std::fs::read(path)?;
    let mut slice = bytes.as_slice();
    let out = read_matrix(&mut slice)?;
    if !slice.is_empty() {
        return Err(Error::Container("trailing bytes after matrix".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip() {
        let m = array![[1.0, -2.5], [0.25, 3.0], [0.0, 1e-3]];
        let mut buf = Vec::new();
        write_matrix(&mut buf, ContainerKind::Audio, &m, 2.0, 1.5).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 6 * 4);
        let (h, back) = read_matrix(&mut buf.as_slice()).unwrap();
        assert_eq!(h.kind, ContainerKind::Audio);
        assert_eq!(h.fps, 2.0);
        assert_eq!(back[[2, 1]], 1e-3f32 as f64);
        assert_eq!(back[[1, 0]], 0.25);
    }

    #[test]
    fn header_layout_is_fixed() {
        let m = Array2::<f64>::zeros((2, 3));
        let mut buf = Vec::new();
        write_matrix(&mut buf, ContainerKind::Text, &m, 2.0, 1.0).unwrap();
        assert_eq!(&buf[0..4], b"SSEG");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 2.0);
    }

    #[test]
    fn frame_outputs_round_trip() {
        let out = FrameOutputs::new(
            2.0,
            1.5,
            array![[0.5, 0.25], [1.0, 0.0], [0.0, 0.75]],
            array![0.0, 1.0, 0.5],
            array![0.0, 0.125, -0.25],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_frame_outputs(&mut buf, &out).unwrap();
        let back = read_frame_outputs(&mut buf.as_slice()).unwrap();
        assert_eq!(back, out);
    }

    #[test]
    fn truncated_and_garbage_rejected() {
        assert!(read_frame_outputs(&mut &b"SSEG"[..]).is_err());
        assert!(read_frame_outputs(&mut &b"XXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXXX"[..]).is_err());
        let m = Array2::<f64>::zeros((2, 2));
        let mut buf = Vec::new();
        write_matrix(&mut buf, ContainerKind::Frame, &m, 2.0, 1.0).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_matrix(&mut buf.as_slice()).is_err());
    }
}
