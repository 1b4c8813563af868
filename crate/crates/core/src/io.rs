//! Binary PGM (P5) images and raw little-endian float32 planes.
//!
//! A float plane `name.f32` is accompanied by `name.f32.txt` holding
//! `key=value` lines: `name`, `width`, `height`, `dtype` and any extras.
//! All writes go through a temporary file and a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::spectral::RealImage;

/// Writes `bytes` to `path` via a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let t = header_token(bytes, pos)?;
    t.parse()
        .map_err(|_| Error::Format(format!("PGM {what} is not a number: {t:?}")))
}

/// Decodes a P5 image, mapping `[0, maxval]` linearly onto `[-1, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<RealImage> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM header {width}x{height} maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let need = width * height * depth;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PGM raster holds {} of {need} bytes", bytes.len().saturating_sub(pos))))?;
    let scale = 2.0 / maxval as f64;
    let data = if depth == 1 {
        raster.iter().map(|&b| b as f64 * scale - 1.0).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 * scale - 1.0)
            .collect()
    };
    RealImage::new(width, height, data)
}

pub fn read_pgm(path: &Path) -> Result<RealImage> {
    decode_pgm(&fs::read(path)?)
}

/// 8-bit visualization with per-image min/max scaling; returns `(min, max)`.
pub fn encode_pgm8(img: &RealImage) -> (Vec<u8>, f64, f64) {
    let (w, h) = img.shape();
    let (lo, hi) = img
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        img.as_slice()
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    (out, lo, hi)
}

/// 16-bit P5 encoding of values in `[-1, 1]` (clamped), inverse of [`decode_pgm`].
pub fn encode_pgm16(img: &RealImage) -> Vec<u8> {
    let (w, h) = img.shape();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in img.as_slice() {
        let q = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Writes an 8-bit visualization plus a sidecar recording its scaling.
pub fn write_visualization(path: &Path, name: &str, img: &RealImage) -> Result<()> {
    let (bytes, lo, hi) = encode_pgm8(img);
    write_atomic(path, &bytes)?;
    let side = format!("name={name}\nwidth={}\nheight={}\ndtype=u8\nmin={lo:e}\nmax={hi:e}\n", img.width(), img.height());
    write_atomic(&sidecar_path(path), side.as_bytes())
}

pub fn write_pgm16(path: &Path, img: &RealImage) -> Result<()> {
    write_atomic(path, &encode_pgm16(img))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes `img` as float32 samples and its descriptor; `extra` lines are appended.
pub fn write_plane(path: &Path, name: &str, img: &RealImage, extra: &[(&str, String)]) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.as_slice().len() * 4);
    for &v in img.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_atomic(path, &bytes)?;
    let mut side = format!(
        "name={name}\nwidth={}\nheight={}\ndtype=float32-le\n",
        img.width(),
        img.height()
    );
    for (k, v) in extra {
        side.push_str(&format!("{k}={v}\n"));
    }
    write_atomic(&sidecar_path(path), side.as_bytes())
}

/// Reads a plane written by [`write_plane`].
pub fn read_plane(path: &Path) -> Result<RealImage> {
    let side = fs::read_to_string(sidecar_path(path))?;
    let field = |key: &str| -> Result<&str> {
        side.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::Format(format!("sidecar lacks {key}")))
    };
    if field("dtype")? != "float32-le" {
        return Err(Error::Format("plane dtype must be float32-le".into()));
    }
    let parse = |k: &str| -> Result<usize> {
        field(k)?
            .parse()
            .map_err(|_| Error::Format(format!("sidecar {k} is not a number")))
    };
    let (w, h) = (parse("width")?, parse("height")?);
    let bytes = fs::read(path)?;
    if bytes.len() != w * h * 4 {
        return Err(Error::Format(format!("plane holds {} bytes, expected {}", bytes.len(), w * h * 4)));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    RealImage::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm8_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 51, 204]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.shape(), (2, 2));
        assert_eq!(img.as_slice()[0], -1.0);
        assert_eq!(img.as_slice()[1], 1.0);
        assert!((img.as_slice()[2] - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn pgm16_round_trip() {
        let img = RealImage::from_fn(8, |r, c| ((r * 8 + c) as f64 / 63.0) * 2.0 - 1.0);
        let back = decode_pgm(&encode_pgm16(&img)).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn bad_pgm_inputs() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n4 4\n255\n\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n4"), Err(Error::Format(_))));
    }

    #[test]
    fn visualization_spans_full_range() {
        let img = RealImage::from_fn(4, |r, c| (r + c) as f64);
        let (bytes, lo, hi) = encode_pgm8(&img);
        assert_eq!((lo, hi), (0.0, 6.0));
        let raster = &bytes[bytes.len() - 16..];
        assert_eq!(raster[0], 0);
        assert_eq!(raster[15], 255);
    }
}
