//! Reader and writer for single-file NIfTI-1 (`.nii` / `.nii.gz`).
//!
//! Supported voxel types are uint8, int16, int32 and float32. Files are
//! written little-endian with an sform affine, `vox_offset = 352` and an
//! all-zero extension flag; big-endian files are detected from `dim[0]` and
//! byte-swapped on read.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::volume::{ChannelStack, Grid, IntensityVolume, LabelVolume, Volume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DATA_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::U8,
            4 => DataType::I16,
            8 => DataType::I32,
            16 => DataType::F32,
            other => return Err(Error::Unsupported(format!("datatype code {other}"))),
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::I32 | DataType::F32 => 4,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DataType::F32)
    }

    fn range(self) -> (f64, f64) {
        match self {
            DataType::U8 => (0.0, u8::MAX as f64),
            DataType::I16 => (i16::MIN as f64, i16::MAX as f64),
            DataType::I32 => (i32::MIN as f64, i32::MAX as f64),
            DataType::F32 => (f32::MIN as f64, f32::MAX as f64),
        }
    }
}

/// The subset of NIfTI-1 header fields this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    /// `dim[1..=4]`; the fourth entry is the channel count.
    pub dims: [usize; 4],
    pub datatype: DataType,
    pub pixdim: [f32; 3],
    pub qfac: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub little_endian: bool,
}

struct Fields<'a> {
    b: &'a [u8],
    le: bool,
}

impl Fields<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        self.b[off..off + N].try_into().unwrap()
    }
    fn i16(&self, off: usize) -> i16 {
        let a = self.arr(off);
        if self.le {
            i16::from_le_bytes(a)
        } else {
            i16::from_be_bytes(a)
        }
    }
    fn i32(&self, off: usize) -> i32 {
        let a = self.arr(off);
        if self.le {
            i32::from_le_bytes(a)
        } else {
            i32::from_be_bytes(a)
        }
    }
    fn f32(&self, off: usize) -> f32 {
        let a = self.arr(off);
        if self.le {
            f32::from_le_bytes(a)
        } else {
            f32::from_be_bytes(a)
        }
    }
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Corrupt(format!(
                "{} bytes is shorter than a NIfTI-1 header",
                bytes.len()
            )));
        }
        let dim0_le = i16::from_le_bytes([bytes[40], bytes[41]]);
        let dim0_be = i16::from_be_bytes([bytes[40], bytes[41]]);
        let le = if (1..=7).contains(&dim0_le) {
            true
        } else if (1..=7).contains(&dim0_be) {
            false
        } else {
            return Err(Error::Format(format!("dim[0] = {dim0_le} is not in 1..=7")));
        };
        let f = Fields { b: bytes, le };
        if f.i32(0) != HEADER_SIZE as i32 {
            return Err(Error::Format(format!("sizeof_hdr = {}", f.i32(0))));
        }
        let magic = &bytes[344..348];
        if magic == MAGIC_PAIR {
            return Err(Error::Unsupported("two-file (.hdr/.img) NIfTI".into()));
        }
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let ndim = f.i16(40) as usize;
        let mut dim = [1usize; 7];
        for (d, slot) in dim.iter_mut().enumerate().take(ndim) {
            let v = f.i16(42 + 2 * d);
            if v < 1 {
                return Err(Error::Format(format!("dim[{}] = {v}", d + 1)));
            }
            *slot = v as usize;
        }
        if dim[4..].iter().any(|&d| d != 1) {
            return Err(Error::Unsupported(format!("dimensions beyond 4: {:?}", &dim[..ndim])));
        }
        let datatype = DataType::from_code(f.i16(70))?;
        let vox_offset = f.f32(108);
        if !(vox_offset >= HEADER_SIZE as f32) {
            return Err(Error::Format(format!("vox_offset = {vox_offset}")));
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f.f32(280 + 16 * r + 4 * c);
            }
        }
        Ok(NiftiHeader {
            dims: [dim[0], dim[1], dim[2], dim[3]],
            datatype,
            pixdim: [f.f32(80), f.f32(84), f.f32(88)],
            qfac: f.f32(76),
            scl_slope: f.f32(112),
            scl_inter: f.f32(116),
            vox_offset,
            qform_code: f.i16(252),
            sform_code: f.i16(254),
            quatern: [f.f32(256), f.f32(260), f.f32(264)],
            qoffset: [f.f32(268), f.f32(272), f.f32(276)],
            srow,
            little_endian: le,
        })
    }

    /// Header for a little-endian file with an sform affine.
    pub fn for_grid(grid: &Grid, channels: usize, datatype: DataType) -> Self {
        let a = grid.affine();
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[(r, c)] as f32;
            }
        }
        let [nx, ny, nz] = grid.dims();
        let vs = grid.voxel_size();
        NiftiHeader {
            dims: [nx, ny, nz, channels],
            datatype,
            pixdim: [vs[0] as f32, vs[1] as f32, vs[2] as f32],
            qfac: 1.0,
            scl_slope: 1.0,
            scl_inter: 0.0,
            vox_offset: DATA_OFFSET as f32,
            qform_code: 0,
            sform_code: 1,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow,
            little_endian: true,
        }
    }

    /// Little-endian 348-byte encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = vec![0u8; HEADER_SIZE];
        let mut put = |off: usize, bytes: &[u8]| b[off..off + bytes.len()].copy_from_slice(bytes);
        put(0, &(HEADER_SIZE as i32).to_le_bytes());
        put(38, b"r");
        let ndim: i16 = if self.dims[3] > 1 { 4 } else { 3 };
        put(40, &ndim.to_le_bytes());
        for d in 0..7 {
            let v = if d < 4 { self.dims[d] as i16 } else { 1 };
            put(42 + 2 * d, &v.to_le_bytes());
        }
        put(70, &self.datatype.code().to_le_bytes());
        put(72, &((self.datatype.bytes() * 8) as i16).to_le_bytes());
        let pixdim = [self.qfac, self.pixdim[0], self.pixdim[1], self.pixdim[2], 1.0, 1.0, 1.0, 1.0];
        for (d, v) in pixdim.iter().enumerate() {
            put(76 + 4 * d, &v.to_le_bytes());
        }
        put(108, &self.vox_offset.to_le_bytes());
        put(112, &self.scl_slope.to_le_bytes());
        put(116, &self.scl_inter.to_le_bytes());
        // xyzt_units: millimetres
        put(123, &[2u8]);
        put(252, &self.qform_code.to_le_bytes());
        put(254, &self.sform_code.to_le_bytes());
        for k in 0..3 {
            put(256 + 4 * k, &self.quatern[k].to_le_bytes());
            put(268 + 4 * k, &self.qoffset[k].to_le_bytes());
        }
        for (r, row) in self.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                put(280 + 16 * r + 4 * c, &v.to_le_bytes());
            }
        }
        put(344, MAGIC);
        b
    }

    pub fn voxels(&self) -> usize {
        self.dims[..3].iter().product()
    }

    pub fn channels(&self) -> usize {
        self.dims[3]
    }

    pub fn data_bytes(&self) -> usize {
        self.voxels() * self.channels() * self.datatype.bytes()
    }

    pub fn effective_slope(&self) -> f64 {
        if self.scl_slope == 0.0 {
            1.0
        } else {
            self.scl_slope as f64
        }
    }

    /// Voxel→world affine: sform when present, else qform, else pixdim.
    pub fn affine(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        if self.sform_code > 0 {
            for r in 0..3 {
                for c in 0..4 {
                    m[(r, c)] = self.srow[r][c] as f64;
                }
            }
        } else if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(|v| v as f64);
            let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let rot = [
                [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
                [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
                [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
            ];
            let qfac = if self.qfac < 0.0 { -1.0 } else { 1.0 };
            let scale = [
                self.pixdim[0] as f64,
                self.pixdim[1] as f64,
                self.pixdim[2] as f64 * qfac,
            ];
            for r in 0..3 {
                for col in 0..3 {
                    m[(r, col)] = rot[r][col] * scale[col];
                }
                m[(r, 3)] = self.qoffset[r] as f64;
            }
        } else {
            for a in 0..3 {
                m[(a, a)] = self.pixdim[a].abs().max(f32::MIN_POSITIVE) as f64;
            }
        }
        m
    }
}

/// Decoded file: scaled voxel values plus geometry.
#[derive(Debug, Clone)]
pub struct NiftiImage {
    pub header: NiftiHeader,
    pub grid: Grid,
    /// Channel-major, x-fastest within a channel.
    pub data: Vec<f64>,
}

impl NiftiImage {
    pub fn channels(&self) -> usize {
        self.header.channels()
    }

    fn single_channel(&self) -> Result<()> {
        if self.channels() != 1 {
            return Err(Error::invalid(format!(
                "expected a single-channel volume, file has {} channels",
                self.channels()
            )));
        }
        Ok(())
    }

    pub fn into_intensity(self) -> Result<IntensityVolume> {
        self.single_channel()?;
        Volume::new(self.grid, self.data.iter().map(|&v| v as f32).collect())
    }

    pub fn into_labels(self) -> Result<LabelVolume> {
        self.single_channel()?;
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::invalid(format!("{v} is not a valid label id")))
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        Volume::new(self.grid, data)
    }

    pub fn into_stack(self) -> Result<ChannelStack> {
        let channels = self.channels();
        ChannelStack::new(self.grid, channels, self.data.iter().map(|&v| v as f32).collect())
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn has_gz_suffix(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Decodes an in-memory file (gzip detected from the stream magic).
pub fn decode(bytes: &[u8]) -> Result<NiftiImage> {
    let inflated;
    let bytes = if is_gzip(bytes) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Corrupt(format!("gzip stream: {e}")))?;
        inflated = out;
        &inflated[..]
    } else {
        bytes
    };
    let header = NiftiHeader::parse(bytes)?;
    let offset = header.vox_offset as usize;
    let needed = offset + header.data_bytes();
    if bytes.len() < needed {
        return Err(Error::Corrupt(format!(
            "data section needs {needed} bytes, file has {}",
            bytes.len()
        )));
    }
    let grid = Grid::new(
        [header.dims[0], header.dims[1], header.dims[2]],
        header.affine(),
    )
    .map_err(|e| Error::Format(format!("unusable affine: {e}")))?;
    let slope = header.effective_slope();
    let inter = header.scl_inter as f64;
    let raw = &bytes[offset..needed];
    let dt = header.datatype;
    let le = header.little_endian;
    let data = raw
        .chunks_exact(dt.bytes())
        .map(|c| {
            let v = match (dt, le) {
                (DataType::U8, _) => c[0] as f64,
                (DataType::I16, true) => i16::from_le_bytes([c[0], c[1]]) as f64,
                (DataType::I16, false) => i16::from_be_bytes([c[0], c[1]]) as f64,
                (DataType::I32, true) => i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                (DataType::I32, false) => i32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
                (DataType::F32, true) => f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                (DataType::F32, false) => f32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
            };
            v * slope + inter
        })
        .collect();
    Ok(NiftiImage { header, grid, data })
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn read_intensity(path: impl AsRef<Path>) -> Result<IntensityVolume> {
    read_volume(path)?.into_intensity()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read_volume(path)?.into_labels()
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<ChannelStack> {
    read_volume(path)?.into_stack()
}

/// Encodes raw channel-major values as an uncompressed `.nii` byte stream.
pub fn encode(grid: &Grid, channels: usize, data: &[f64], datatype: DataType) -> Result<Vec<u8>> {
    if channels == 0 || data.len() != grid.len() * channels {
        return Err(Error::invalid(format!(
            "{} values do not fill {channels} channels of {:?}",
            data.len(),
            grid.dims()
        )));
    }
    if grid.dims().iter().chain(std::iter::once(&channels)).any(|&d| d > i16::MAX as usize) {
        return Err(Error::invalid("dimension exceeds NIfTI-1 limit of 32767"));
    }
    let (lo, hi) = datatype.range();
    for &v in data {
        if v.is_nan() {
            return Err(Error::invalid("refusing to write NaN voxels"));
        }
        if datatype.is_integer() && (v.fract() != 0.0 || v < lo || v > hi) {
            return Err(Error::invalid(format!("{v} is not representable as {datatype:?}")));
        }
        if !datatype.is_integer() && v.is_finite() && (v < lo || v > hi) {
            return Err(Error::invalid(format!("{v} overflows float32")));
        }
    }
    let header = NiftiHeader::for_grid(grid, channels, datatype);
    let mut out = Vec::with_capacity(DATA_OFFSET + header.data_bytes());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for &v in data {
        match datatype {
            DataType::U8 => out.push(v as u8),
            DataType::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            DataType::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            DataType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// gzip-compressing when the name ends in `.gz`.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let payload = if has_gz_suffix(path) {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    crate::report::atomic_write(path, &payload)
}

pub fn write_image(image: &NiftiImage, path: impl AsRef<Path>, datatype: DataType) -> Result<()> {
    let bytes = encode(&image.grid, image.channels(), &image.data, datatype)?;
    write_file(path.as_ref(), &bytes)
}

pub fn write_intensity(vol: &IntensityVolume, path: impl AsRef<Path>, datatype: DataType) -> Result<()> {
    let data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    write_file(path.as_ref(), &encode(vol.grid(), 1, &data, datatype)?)
}

/// Labels must use an integer type; `I32` is the conventional choice.
pub fn write_labels(vol: &LabelVolume, path: impl AsRef<Path>, datatype: DataType) -> Result<()> {
    if !datatype.is_integer() {
        return Err(Error::invalid("label volumes require an integer datatype"));
    }
    let data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    write_file(path.as_ref(), &encode(vol.grid(), 1, &data, datatype)?)
}

/// Writes a multi-channel stack as float32 with `dim[4]` = channel count.
pub fn write_stack(stack: &ChannelStack, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<f64> = stack.data().iter().map(|&v| v as f64).collect();
    write_file(
        path.as_ref(),
        &encode(stack.grid(), stack.channels(), &data, DataType::F32)?,
    )
}
