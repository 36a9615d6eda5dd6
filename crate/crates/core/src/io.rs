//! Image file I/O: 8-bit PNG and the `PNPF` raw-float format.
//!
//! `PNPF` layout (all little-endian):
//!
//! ```text
//! b"PNPF" | height: u32 | width: u32 | channels: u32 | height*width*channels f32
//! ```
//!
//! Samples are row-major and channel-interleaved. The same float block layout
//! is used by the external-denoiser wire protocol.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub const RAW_MAGIC: &[u8; 4] = b"PNPF";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    RawFloat,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("pnpf") | Some("raw") => Ok(ImageFormat::RawFloat),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

/// Loads a PNG or `PNPF` file. The format is sniffed from the leading bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.starts_with(RAW_MAGIC) {
        decode_raw(&mut bytes.as_slice())
    } else {
        decode_png(&bytes)
    }
}

/// Stores an image; the format is chosen from the file extension.
pub fn store_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Png => encode_png(image)?,
        ImageFormat::RawFloat => encode_raw(image),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn write_shape(out: &mut impl Write, shape: Shape) -> std::io::Result<()> {
    for dim in [shape.height, shape.width, shape.channels] {
        let dim = u32::try_from(dim).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32")
        })?;
        out.write_all(&dim.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_shape(input: &mut impl Read) -> std::io::Result<Shape> {
    let h = read_u32(input)? as usize;
    let w = read_u32(input)? as usize;
    let c = read_u32(input)? as usize;
    Ok(Shape::new(h, w, c))
}

/// Appends the values as little-endian `f32`.
pub(crate) fn encode_f32_block(values: &[f64], out: &mut Vec<u8>) {
    out.reserve(values.len() * 4);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn decode_f32_block(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect()
}

pub fn encode_raw(image: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.data().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    write_shape(&mut out, image.shape()).expect("writing to a Vec cannot fail");
    encode_f32_block(image.data(), &mut out);
    out
}

pub fn decode_raw(input: &mut impl Read) -> Result<ImageTensor> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != RAW_MAGIC {
        return Err(Error::MalformedRaw("bad magic".into()));
    }
    let shape = read_shape(input)?;
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::UnsupportedChannels(shape.channels));
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != shape.len() * 4 {
        return Err(Error::MalformedRaw(format!(
            "expected {} payload bytes for {shape}, found {}",
            shape.len() * 4,
            payload.len()
        )));
    }
    ImageTensor::new(shape, decode_f32_block(&payload))
}

fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => return Err(Error::UnsupportedChannels(2)),
        DynamicImage::ImageRgba8(_) => return Err(Error::UnsupportedChannels(4)),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG with pixel type {:?} (only 8-bit gray or RGB)",
                other.color()
            )))
        }
    };
    let data = raw.into_iter().map(|v| f64::from(v) / 255.0).collect();
    ImageTensor::new(Shape::new(h, w, channels), data)
}

/// Quantizes `[0, 1]` to 8 bits with round-half-up; values outside are clamped.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode_png(image: &ImageTensor) -> Result<Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let raw: Vec<u8> = image.data().iter().map(|&v| quantize_u8(v)).collect();
    let dynamic = match image.channels() {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer size matches shape"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size matches shape"),
        ),
        c => return Err(Error::UnsupportedChannels(c)),
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}
