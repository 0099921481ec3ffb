use std::io::{Read, Write};
use std::path::Path;

use super::{to_grayscale, GrayImage};
use crate::{Error, Result};

/// Nearest 8-bit level, halves rounding up, saturating at 0 and 255.
pub fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Reads a PNG (any colour type, converted to luminance) or a binary PGM.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return read_pgm(&mut bytes.as_slice());
    }
    let decoded = ::image::load_from_memory(&bytes)?;
    if !decoded.color().has_color() {
        let luma = decoded.to_luma8();
        let data = luma.as_raw().iter().map(|&b| b as f64).collect();
        return GrayImage::new(luma.width() as usize, luma.height() as usize, data);
    }
    let rgb = decoded.to_rgb8();
    to_grayscale(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn write_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    ::image::GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer matches dimensions")
        .save_with_format(path, ::image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_rgb_png(width: usize, height: usize, rgb: Vec<u8>, path: impl AsRef<Path>) -> Result<()> {
    ::image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| Error::InvalidImage("RGB buffer does not match dimensions".into()))?
        .save_with_format(path, ::image::ImageFormat::Png)?;
    Ok(())
}

/// Binary P5, maxval 255.
pub fn write_pgm(img: &GrayImage, mut out: impl Write) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_pgm(mut input: impl Read) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pgm("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token(&bytes)? != "P5" {
        return Err(Error::Pgm("expected P5 magic".into()));
    }
    let parse = |s: String| s.parse::<usize>().map_err(|_| Error::Pgm(format!("bad number {s:?}")));
    let width = parse(next_token(&bytes)?)?;
    let height = parse(next_token(&bytes)?)?;
    let maxval = parse(next_token(&bytes)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Pgm(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let raster = bytes
        .get(start..start + width * height)
        .ok_or_else(|| Error::Pgm("truncated raster".into()))?;
    let scale = 255.0 / maxval as f64;
    GrayImage::new(width, height, raster.iter().map(|&b| b as f64 * scale).collect())
}
