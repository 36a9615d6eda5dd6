//! Wire protocol spoken with external denoiser processes over stdin/stdout.
//!
//! ```text
//! handshake   client -> adapter : b"PNPD" | version u32      (adapter echoes both)
//! request     client -> adapter : type u8 = 1 | h u32 | w u32 | c u32
//!                                 | h*w*c f32 (image) | h*w*c f32 (noise level map)
//! response    adapter -> client : status u8 (0 = ok) | on ok: h*w*c f32
//! ```
//!
//! Everything is little-endian and samples are row-major, channel-interleaved.
//! The session ends when the client closes the adapter's stdin.

use std::io::{self, Read, Write};

use crate::io::{decode_f32_block, encode_f32_block, read_shape, write_shape};
use crate::tensor::{ImageTensor, NoiseLevelMap, Shape};

use super::external::ExternalError;

pub const MAGIC: &[u8; 4] = b"PNPD";
pub const VERSION: u32 = 1;
pub const MSG_DENOISE: u8 = 1;

pub const STATUS_OK: u8 = 0;
pub const STATUS_BACKEND_ERROR: u8 = 1;
pub const STATUS_MALFORMED: u8 = 2;

pub fn encode_handshake() -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..4].copy_from_slice(MAGIC);
    out[4..].copy_from_slice(&VERSION.to_le_bytes());
    out
}

pub fn check_handshake(bytes: &[u8; 8]) -> Result<(), ExternalError> {
    if &bytes[..4] != MAGIC {
        return Err(ExternalError::Handshake(format!(
            "bad magic {:?}",
            &bytes[..4]
        )));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(ExternalError::Handshake(format!(
            "unsupported protocol version {version}"
        )));
    }
    Ok(())
}

/// Serializes a denoise request; values travel as 32-bit floats.
pub fn encode_request(u: &ImageTensor, s: &NoiseLevelMap) -> Vec<u8> {
    let shape = u.shape();
    let mut out = Vec::with_capacity(13 + shape.len() * 8);
    out.push(MSG_DENOISE);
    write_shape(&mut out, shape).expect("writing to a Vec cannot fail");
    encode_f32_block(u.data(), &mut out);
    encode_f32_block(s.data(), &mut out);
    out
}

pub fn encode_response_ok(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + values.len() * 4);
    out.push(STATUS_OK);
    encode_f32_block(values, &mut out);
    out
}

/// One decoded client frame, as seen by an adapter.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestFrame {
    Denoise {
        image: ImageTensor,
        map: NoiseLevelMap,
    },
    Malformed(String),
}

fn read_exact_or_eof(input: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// Reads the next request frame; `Ok(None)` at a clean end of stream.
pub fn read_request(input: &mut impl Read) -> io::Result<Option<RequestFrame>> {
    let mut kind = [0u8; 1];
    if !read_exact_or_eof(input, &mut kind)? {
        return Ok(None);
    }
    if kind[0] != MSG_DENOISE {
        return Ok(Some(RequestFrame::Malformed(format!(
            "unknown message type {}",
            kind[0]
        ))));
    }
    let shape = read_shape(input)?;
    let mut payload = vec![0u8; shape.len() * 8];
    input.read_exact(&mut payload)?;
    if shape.is_empty() || !(shape.channels == 1 || shape.channels == 3) {
        return Ok(Some(RequestFrame::Malformed(format!(
            "unsupported shape {shape}"
        ))));
    }
    let (img, map) = payload.split_at(shape.len() * 4);
    let frame = ImageTensor::new(shape, decode_f32_block(img))
        .and_then(|image| {
            let map = NoiseLevelMap::new(ImageTensor::new(shape, decode_f32_block(map))?)?;
            Ok(RequestFrame::Denoise { image, map })
        })
        .unwrap_or_else(|e| RequestFrame::Malformed(e.to_string()));
    Ok(Some(frame))
}

/// Runs an adapter session: handshake, then one response per request until
/// end of stream. Returns the number of requests served.
///
/// Entries with a zero noise level are returned unchanged without consulting
/// the backend, so no backend can break that part of the denoiser contract.
pub fn serve<B>(
    mut backend: B,
    input: &mut impl Read,
    output: &mut impl Write,
) -> Result<usize, ExternalError>
where
    B: FnMut(&ImageTensor, &NoiseLevelMap) -> crate::Result<ImageTensor>,
{
    let mut hello = [0u8; 8];
    input
        .read_exact(&mut hello)
        .map_err(|e| ExternalError::Handshake(format!("no handshake: {e}")))?;
    check_handshake(&hello)?;
    output.write_all(&hello)?;
    output.flush()?;

    let mut served = 0;
    while let Some(frame) = read_request(input)? {
        let response = match frame {
            RequestFrame::Malformed(_) => vec![STATUS_MALFORMED],
            RequestFrame::Denoise { image, map } => {
                let result = if map.is_zero() {
                    Ok(image.clone())
                } else {
                    backend(&image, &map)
                };
                match result {
                    Ok(out) if out.shape() == image.shape() => {
                        let values: Vec<f64> = out
                            .data()
                            .iter()
                            .zip(image.data().iter().zip(map.data()))
                            .map(|(&o, (&u, &s))| if s == 0.0 { u } else { o })
                            .collect();
                        encode_response_ok(&values)
                    }
                    _ => vec![STATUS_BACKEND_ERROR],
                }
            }
        };
        output.write_all(&response)?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

pub(crate) fn expected_payload(shape: Shape) -> usize {
    shape.len() * 4
}
