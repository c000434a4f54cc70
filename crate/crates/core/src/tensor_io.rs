//! Binary tensor container plus frame, mask and feature-map types.
//!
//! Layout, all little-endian:
//!
//! | bytes     | content                                 |
//! |-----------|-----------------------------------------|
//! | 0..4      | magic `VTK1`                            |
//! | 4         | dtype (0 = f32, 1 = u8)                 |
//! | 5         | ndim (1..=4)                            |
//! | 6..8      | reserved, zero                          |
//! | 8..8+4n   | `ndim` x u32 dims                       |
//! | rest      | row-major payload                       |

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::FrameRef;
use crate::grid::Grid;

pub const MAGIC: &[u8; 4] = b"VTK1";
const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported dtype code {code} at byte {offset}")]
    UnsupportedDtype { offset: usize, code: u8 },
    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),
    #[error("unsupported frame format in {0}")]
    UnsupportedFormat(PathBuf),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Invalid(format!("ndim {} outside 1..=4", dims.len())));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::Invalid(format!("dims {dims:?} must be positive u32")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn u8(dims: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        Self::new(dims, TensorData::U8(values))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Values widened to f64 regardless of dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            HEADER_LEN + 4 * self.dims.len() + self.data.len() * self.dtype().size(),
        );
        out.extend_from_slice(MAGIC);
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < HEADER_LEN {
            return Err(TensorError::MalformedHeader {
                offset: bytes.len(),
                reason: format!("header needs {HEADER_LEN} bytes"),
            });
        }
        if &bytes[0..4] != MAGIC {
            return Err(TensorError::MalformedHeader {
                offset: 0,
                reason: format!("bad magic {:02x?}", &bytes[0..4]),
            });
        }
        let dtype = match bytes[4] {
            0 => DType::F32,
            1 => DType::U8,
            code => return Err(TensorError::UnsupportedDtype { offset: 4, code }),
        };
        let ndim = bytes[5] as usize;
        if ndim == 0 || ndim > 4 {
            return Err(TensorError::MalformedHeader {
                offset: 5,
                reason: format!("ndim {ndim} outside 1..=4"),
            });
        }
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(TensorError::MalformedHeader {
                offset: 6,
                reason: "reserved bytes not zero".into(),
            });
        }
        let dims_end = HEADER_LEN + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(TensorError::MalformedHeader {
                offset: bytes.len(),
                reason: format!("dims need {} bytes", 4 * ndim),
            });
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let off = HEADER_LEN + 4 * i;
            let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            if d == 0 {
                return Err(TensorError::MalformedHeader {
                    offset: off,
                    reason: "zero dimension".into(),
                });
            }
            dims.push(d);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(dtype.size()))
            .ok_or_else(|| TensorError::MalformedHeader {
                offset: HEADER_LEN,
                reason: format!("dims {dims:?} overflow"),
            })?;
        let payload = &bytes[dims_end..];
        if payload.len() < count {
            return Err(TensorError::TruncatedPayload {
                offset: bytes.len(),
                expected: count,
                found: payload.len(),
            });
        }
        if payload.len() > count {
            return Err(TensorError::TrailingData(payload.len() - count));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
        };
        Ok(TensorFile { dims, data })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    TensorFile::decode(&bytes)
}

pub fn write_tensor(tensor: &TensorFile, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    let io = |source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, tensor.encode()).map_err(io)
}

/// Probability mask with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl MaskGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} mask",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("mask value {v} outside [0,1]")));
        }
        Ok(MaskGrid {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        MaskGrid {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_fg(&self, x: usize, y: usize) -> bool {
        self.get(x, y) >= 0.5
    }

    /// Hard mask at threshold 0.5.
    pub fn binarize(&self) -> MaskGrid {
        MaskGrid {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn same_dims(&self, other: &MaskGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// IoU of the binarized masks; 0 when both are empty.
    pub fn iou(&self, other: &MaskGrid) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.values.iter().zip(&other.values) {
            let (a, b) = (a >= 0.5, b >= 0.5);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Tight pixel box `[x1, x2) x [y1, y2)` of the foreground, if any.
    pub fn bounding_box(&self) -> Option<crate::geometry::BBox> {
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_fg(x, y) {
                    x1 = x1.min(x);
                    y1 = y1.min(y);
                    x2 = x2.max(x + 1);
                    y2 = y2.max(y + 1);
                }
            }
        }
        (x1 != usize::MAX).then_some(crate::geometry::BBox {
            x1: x1 as f64,
            y1: y1 as f64,
            x2: x2 as f64,
            y2: y2 as f64,
        })
    }

    /// Filled rectangle covering every pixel whose center lies inside `b`.
    pub fn from_box(width: usize, height: usize, b: &crate::geometry::BBox) -> Self {
        let mut m = MaskGrid::zeros(width, height);
        for y in 0..height {
            let cy = y as f64 + 0.5;
            if cy < b.y1 || cy >= b.y2 {
                continue;
            }
            for x in 0..width {
                let cx = x as f64 + 0.5;
                if cx >= b.x1 && cx < b.x2 {
                    m.set(x, y, 1.0);
                }
            }
        }
        m
    }

    pub fn to_tensor(&self) -> TensorFile {
        TensorFile {
            dims: vec![self.height, self.width],
            data: TensorData::F32(self.values.iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn from_tensor(t: &TensorFile) -> Result<Self> {
        if t.dims.len() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "mask tensor must be 2-D, got {:?}",
                t.dims
            )));
        }
        let values = match &t.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64 / 255.0).collect(),
        };
        MaskGrid::new(t.dims[1], t.dims[0], values)
    }
}

/// Patch-feature grid of one frame from one backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub frame: FrameRef,
    pub backbone: String,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub patch_size: usize,
    /// `rows x cols x channels`, row-major.
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        frame: FrameRef,
        backbone: impl Into<String>,
        rows: usize,
        cols: usize,
        channels: usize,
        patch_size: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if rows * cols * channels != data.len() || rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols}x{channels} feature grid",
                data.len()
            )));
        }
        if patch_size == 0 {
            return Err(Error::Invalid("patch size must be positive".into()));
        }
        if rows * patch_size > frame.height + patch_size || cols * patch_size > frame.width + patch_size
        {
            return Err(Error::Invalid(format!(
                "{rows}x{cols} grid at patch {patch_size} overruns a {}x{} frame",
                frame.width, frame.height
            )));
        }
        Ok(FeatureMap {
            frame,
            backbone: backbone.into(),
            rows,
            cols,
            channels,
            patch_size,
            data,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Builds a feature map from a `[H_p, W_p, C]` tensor.
    pub fn from_tensor(
        t: &TensorFile,
        frame: FrameRef,
        backbone: impl Into<String>,
        patch_size: usize,
    ) -> Result<Self> {
        if t.dims.len() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "feature tensor must be 3-D, got {:?}",
                t.dims
            )));
        }
        FeatureMap::new(
            frame,
            backbone,
            t.dims[0],
            t.dims[1],
            t.dims[2],
            patch_size,
            t.to_f64(),
        )
    }

    pub fn to_tensor(&self) -> TensorFile {
        TensorFile {
            dims: vec![self.rows, self.cols, self.channels],
            data: TensorData::F32(self.data.iter().map(|&v| v as f32).collect()),
        }
    }
}

/// Loads an 8-bit grayscale frame (binary PGM or a u8 tensor) scaled to `[0, 1]`.
pub fn load_frame_gray(path: impl AsRef<Path>) -> Result<Grid, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"P5") {
        let (w, h, maxval, pixels) =
            parse_pnm(&bytes, 1).ok_or_else(|| TensorError::UnsupportedFormat(path.to_path_buf()))?;
        let scale = 1.0 / maxval as f64;
        return Ok(Grid {
            width: w,
            height: h,
            data: pixels.iter().map(|&p| p as f64 * scale).collect(),
        });
    }
    if bytes.starts_with(MAGIC) {
        let t = TensorFile::decode(&bytes)?;
        if let (TensorData::U8(v), [h, w]) = (&t.data, t.dims.as_slice()) {
            return Ok(Grid {
                width: *w,
                height: *h,
                data: v.iter().map(|&p| p as f64 / 255.0).collect(),
            });
        }
    }
    Err(TensorError::UnsupportedFormat(path.to_path_buf()))
}

/// Parses a binary PNM with `channels` bytes per pixel and maxval <= 255.
fn parse_pnm(bytes: &[u8], channels: usize) -> Option<(usize, usize, u32, &[u8])> {
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos]).ok()?.parse().ok()?;
    }
    // exactly one whitespace byte before the raster
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return None;
    }
    let n = w as usize * h as usize * channels;
    let raster = bytes.get(pos..pos + n)?;
    Some((w as usize, h as usize, maxval, raster))
}

/// Writes a binary 8-bit PGM.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_pnm(path.as_ref(), b"P5", width, height, pixels)
}

/// Writes a binary 8-bit PPM; `pixels` is interleaved RGB.
pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_pnm(path.as_ref(), b"P6", width, height, pixels)
}

fn write_pnm(path: &Path, magic: &[u8], width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(pixels.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(pixels);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary PPM (or PGM, expanded to RGB) as interleaved RGB bytes.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let unsupported = || Error::from(TensorError::UnsupportedFormat(path.to_path_buf()));
    if bytes.starts_with(b"P6") {
        let (w, h, _, px) = parse_pnm(&bytes, 3).ok_or_else(unsupported)?;
        Ok((w, h, px.to_vec()))
    } else if bytes.starts_with(b"P5") {
        let (w, h, _, px) = parse_pnm(&bytes, 1).ok_or_else(unsupported)?;
        Ok((w, h, px.iter().flat_map(|&p| [p, p, p]).collect()))
    } else {
        Err(unsupported())
    }
}

/// Quantizes a `[0, 1]` grid to 8-bit pixels.
pub fn grid_to_u8(g: &Grid) -> Vec<u8> {
    g.data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.vtk");
        let t = TensorFile::f32(vec![2, 3], vec![0.0; 6]).unwrap();
        write_tensor(&t, &p).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = TensorFile::f32(vec![2], vec![1.0, 2.0]).unwrap().encode();
        bytes[1] = b'X';
        assert!(matches!(
            TensorFile::decode(&bytes),
            Err(TensorError::MalformedHeader { offset: 0, .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = TensorFile::f32(vec![4, 4], vec![0.5; 16]).unwrap().encode();
        bytes.truncate(bytes.len() - 4);
        match TensorFile::decode(&bytes) {
            Err(TensorError::TruncatedPayload {
                expected, found, ..
            }) => {
                assert_eq!(expected, 64);
                assert_eq!(found, 60);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_dtype() {
        let mut bytes = TensorFile::u8(vec![1], vec![7]).unwrap().encode();
        bytes[4] = 9;
        assert!(matches!(
            TensorFile::decode(&bytes),
            Err(TensorError::UnsupportedDtype { offset: 4, code: 9 })
        ));
    }

    #[test]
    fn one_is_little_endian() {
        let bytes = TensorFile::f32(vec![1], vec![1.0]).unwrap().encode();
        assert_eq!(&bytes[..4], b"VTK1");
        assert_eq!(&bytes[4..8], &[0, 1, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..], &[0x00, 0x00, 0x80, 0x3f]);
    }

    #[test]
    fn zero_mask_payload() {
        let bytes = MaskGrid::zeros(64, 64).to_tensor().encode();
        let payload = &bytes[8 + 8..];
        assert_eq!(payload.len(), 16384);
        assert!(payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let t = TensorFile::f32(vec![3, 2], vec![0.1, -2.0, 3.5, 1e-9, 7.0, 8.25]).unwrap();
        write_tensor(&t, dir.path().join("a")).unwrap();
        write_tensor(&t, dir.path().join("b")).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a")).unwrap(),
            fs::read(dir.path().join("b")).unwrap()
        );
    }

    #[test]
    fn pgm_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        write_pgm(&p, 2, 2, &[0, 255, 255, 0]).unwrap();
        let g = load_frame_gray(&p).unwrap();
        assert_eq!(g.data, vec![0.0, 1.0, 1.0, 0.0]);

        write_pgm(&p, 3, 2, &[255; 6]).unwrap();
        assert!(load_frame_gray(&p).unwrap().data.iter().all(|&v| v == 1.0));
        write_pgm(&p, 3, 2, &[0; 6]).unwrap();
        assert!(load_frame_gray(&p).unwrap().data.iter().all(|&v| v == 0.0));

        let t = dir.path().join("f.vtk");
        write_tensor(&TensorFile::u8(vec![1, 2], vec![0, 255]).unwrap(), &t).unwrap();
        assert_eq!(load_frame_gray(&t).unwrap().data, vec![0.0, 1.0]);

        let bad = dir.path().join("x.png");
        fs::write(&bad, b"\x89PNG....").unwrap();
        assert!(matches!(
            load_frame_gray(&bad),
            Err(TensorError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn pgm_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        fs::write(&p, b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(load_frame_gray(&p).unwrap().data, vec![0.0, 1.0]);
    }

    #[test]
    fn mask_binarize_idempotent() {
        let m = MaskGrid::new(2, 2, vec![0.2, 0.5, 0.7, 0.49]).unwrap();
        let b = m.binarize();
        assert_eq!(b.values, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(b.binarize(), b);
        assert!(MaskGrid::new(1, 1, vec![1.5]).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            dims in proptest::collection::vec(1usize..5, 1..=4),
            seed in any::<u64>(),
            as_u8 in any::<bool>(),
        ) {
            let n: usize = dims.iter().product();
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s };
            let t = if as_u8 {
                TensorFile::u8(dims, (0..n).map(|_| (next() >> 56) as u8).collect()).unwrap()
            } else {
                TensorFile::f32(dims, (0..n).map(|_| f32::from_bits((next() >> 32) as u32 & 0x7f7f_ffff)).collect()).unwrap()
            };
            let back = TensorFile::decode(&t.encode()).unwrap();
            prop_assert_eq!(back.encode(), t.encode());
        }
    }
}
