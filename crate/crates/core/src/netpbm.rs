//! Minimal binary netpbm codecs: 16-bit grayscale PGM (`P5`, maxval 65535)
//! for depth maps and 8-bit RGB PPM (`P6`, maxval 255) for overlays.
//!
//! Samples wider than one byte are big-endian, rows run top to bottom.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetpbmError {
    #[error("bad magic number: expected {expected}")]
    BadMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {found} (expected {expected})")]
    UnsupportedMaxval { found: u32, expected: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, NetpbmError> {
    if !bytes.starts_with(magic.as_bytes()) {
        return Err(NetpbmError::BadMagic { expected: magic });
    }
    let mut pos = magic.len();
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field; at least one separator
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if pos == start {
            return Err(NetpbmError::Header(format!(
                "missing separator before field {i}"
            )));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits_start {
            return Err(NetpbmError::Header(format!("field {i} is not a number")));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| NetpbmError::Header(format!("field {i} out of range")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(NetpbmError::Header(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(NetpbmError::Header("zero image dimension".into()));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos,
    })
}

/// Decoded 16-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray16 {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Gray16, NetpbmError> {
    let h = parse_header(bytes, "P5")?;
    if h.maxval != 65535 {
        return Err(NetpbmError::UnsupportedMaxval {
            found: h.maxval,
            expected: 65535,
        });
    }
    let expected = h.width * h.height * 2;
    let payload = &bytes[h.data_start..];
    if payload.len() < expected {
        return Err(NetpbmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let samples = payload[..expected]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Gray16 {
        width: h.width,
        height: h.height,
        samples,
    })
}

pub fn encode_pgm16(img: &Gray16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.samples.len() * 2);
    for s in &img.samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Rgb8 {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Rgb8 {
            width,
            height,
            pixels: rgb.repeat(width * height),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Rgb8, NetpbmError> {
    let h = parse_header(bytes, "P6")?;
    if h.maxval != 255 {
        return Err(NetpbmError::UnsupportedMaxval {
            found: h.maxval,
            expected: 255,
        });
    }
    let expected = h.width * h.height * 3;
    let payload = &bytes[h.data_start..];
    if payload.len() < expected {
        return Err(NetpbmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(Rgb8 {
        width: h.width,
        height: h.height,
        pixels: payload[..expected].to_vec(),
    })
}

pub fn encode_ppm(img: &Rgb8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}
