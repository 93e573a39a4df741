//! Binary PGM (P5) and PPM (P6) decoding/encoding.
//!
//! Hand-rolled because the formats are specifiable bit-exactly and the
//! decoder must be safe on untrusted bytes: every failure is a typed error,
//! never a panic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("not a binary PGM/PPM file (expected P5 or P6 magic)")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("unsupported maxval {0} (must be 1..=65535)")]
    BadMaxval(u32),
    #[error("image dimensions {0}x{1} out of range")]
    BadDimensions(u32, u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Decoded image: height x width x channels, pixel values scaled to [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct PnmImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

const MAX_DIM: u32 = 1 << 16;

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_ws_and_comments(&mut self) -> Result<(), PnmError> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => return Ok(()),
                None => return Err(PnmError::BadHeader("unexpected end of header")),
            }
        }
    }

    fn read_u32(&mut self) -> Result<u32, PnmError> {
        self.skip_ws_and_comments()?;
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start || self.pos - start > 9 {
            return Err(PnmError::BadHeader("expected a decimal field"));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        Ok(s.parse().unwrap())
    }
}

/// Decode a binary PGM (P5, 1 channel) or PPM (P6, 3 channels) image.
pub fn decode(bytes: &[u8]) -> Result<PnmImage, PnmError> {
    if bytes.len() < 2 {
        return Err(PnmError::BadMagic);
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(PnmError::BadMagic),
    };
    let mut hdr = HeaderReader { bytes, pos: 2 };
    let width = hdr.read_u32()?;
    let height = hdr.read_u32()?;
    let maxval = hdr.read_u32()?;
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(PnmError::BadDimensions(width, height));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::BadMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from pixel data
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(PnmError::BadHeader("missing separator before pixel data")),
    }
    let (w, h) = (width as usize, height as usize);
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let expected = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .and_then(|v| v.checked_mul(bytes_per))
        .ok_or(PnmError::BadDimensions(width, height))?;
    let data = &bytes[hdr.pos..];
    if data.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: data.len(),
        });
    }
    let scale = 1.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(w * h * channels);
    if bytes_per == 1 {
        for &b in &data[..expected] {
            pixels.push((b as f64 * scale).min(1.0));
        }
    } else {
        for pair in data[..expected].chunks_exact(2) {
            let v = u16::from_be_bytes([pair[0], pair[1]]);
            pixels.push((v as f64 * scale).min(1.0));
        }
    }
    Ok(PnmImage {
        height: h,
        width: w,
        channels,
        pixels,
    })
}

/// Encode to binary PGM (1 channel) or PPM (3 channels), maxval 255.
pub fn encode(img: &PnmImage) -> Vec<u8> {
    assert!(
        img.channels == 1 || img.channels == 3,
        "PNM encoding supports 1 or 3 channels, got {}",
        img.channels
    );
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_a_small_p5() {
        let bytes = b"P5\n3 2\n255\n\x00\x7f\xff\x10\x20\x30";
        let img = decode(bytes).unwrap();
        assert_eq!((img.height, img.width, img.channels), (2, 3, 1));
        assert!((img.pixels[2] - 1.0).abs() < 1e-12);
        assert!((img.pixels[0]).abs() < 1e-12);
    }

    #[test]
    fn decodes_p6_with_comments() {
        let bytes = b"P6 # rgb\n# another comment\n1 1\n255\n\xff\x00\x7f";
        let img = decode(bytes).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.pixels.len(), 3);
    }

    #[test]
    fn decodes_16_bit_p5() {
        let bytes = b"P5\n1 1\n65535\n\xff\xff";
        let img = decode(bytes).unwrap();
        assert!((img.pixels[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(decode(b"P3\n1 1\n255\n0"), Err(PnmError::BadMagic)));
    }

    #[test]
    fn rejects_truncated_data() {
        assert!(matches!(
            decode(b"P5\n4 4\n255\n\x00\x01"),
            Err(PnmError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(matches!(
            decode(b"P5\n0 3\n255\n"),
            Err(PnmError::BadDimensions(0, 3))
        ));
    }

    #[test]
    fn round_trips_through_encode() {
        let img = PnmImage {
            height: 2,
            width: 2,
            channels: 1,
            pixels: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        };
        let decoded = decode(&encode(&img)).unwrap();
        assert_eq!(decoded.height, 2);
        for (a, b) in decoded.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1.0 / 255.0);
        }
    }
}
