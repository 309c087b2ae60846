//! Netpbm encoders for layouts, gray renders and binary masks.
//!
//! Layouts are P5 with maxval 255 and foreground = 255. Binary renders are P4,
//! where a set bit (black) is foreground.

use thiserror::Error;

use crate::layout::BinaryLayout;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("bad netpbm header: {0}")]
    Header(String),
    #[error("expected {expected} bytes of raster data, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pgm value {0} is neither 0 nor 255")]
    NonBinaryValue(u8),
}

pub fn encode_layout_pgm(layout: &BinaryLayout) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", layout.width(), layout.height()).into_bytes();
    out.extend(layout.pixels().iter().map(|&p| if p != 0 { 255 } else { 0 }));
    out
}

/// Quantize intensities in `[0, 1]` to 8 bits.
pub fn encode_gray_pgm(width: usize, height: usize, gray: &[f64]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(gray.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_pbm(mask: &BinaryLayout) -> Vec<u8> {
    let (w, h) = mask.dims();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for y in 0..h {
        let mut row = vec![0u8; row_bytes];
        for x in 0..w {
            if mask.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend(row);
    }
    out
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: Option<usize>,
    data_start: usize,
}

fn parse_header(bytes: &[u8], want_maxval: bool) -> Result<Header, PnmError> {
    if bytes.len() < 2 {
        return Err(PnmError::Header("file too short".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = Vec::new();
    let needed = if want_maxval { 3 } else { 2 };
    while fields.len() < needed {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(PnmError::Header("missing dimension field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields.push(text.parse::<usize>().map_err(|e| PnmError::Header(e.to_string()))?);
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields.get(2).copied(),
        data_start: pos.min(bytes.len()),
    })
}

pub fn decode_layout_pgm(bytes: &[u8]) -> Result<BinaryLayout, PnmError> {
    let header = parse_header(bytes, true)?;
    if &header.magic != b"P5" || header.maxval != Some(255) {
        return Err(PnmError::Header("expected P5 with maxval 255".into()));
    }
    let n = header.width * header.height;
    let data = &bytes[header.data_start..];
    if data.len() < n {
        return Err(PnmError::Truncated {
            expected: n,
            found: data.len(),
        });
    }
    let mut pixels = Vec::with_capacity(n);
    for &v in &data[..n] {
        match v {
            0 => pixels.push(0),
            255 => pixels.push(1),
            other => return Err(PnmError::NonBinaryValue(other)),
        }
    }
    Ok(BinaryLayout::from_pixels(header.width, header.height, pixels).expect("binary by construction"))
}

pub fn decode_pbm(bytes: &[u8]) -> Result<BinaryLayout, PnmError> {
    let header = parse_header(bytes, false)?;
    if &header.magic != b"P4" {
        return Err(PnmError::Header("expected P4".into()));
    }
    let row_bytes = header.width.div_ceil(8);
    let data = &bytes[header.data_start..];
    if data.len() < row_bytes * header.height {
        return Err(PnmError::Truncated {
            expected: row_bytes * header.height,
            found: data.len(),
        });
    }
    Ok(BinaryLayout::from_fn(header.width, header.height, |x, y| {
        data[y * row_bytes + x / 8] & (0x80 >> (x % 8)) != 0
    }))
}
