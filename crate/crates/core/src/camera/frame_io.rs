//! Frame files.
//!
//! Both images are binary PGM (`P5`), written as
//! `P5\n<width> <height>\n<maxval>\n` followed by row-major samples, top row
//! first:
//!
//! - mask: maxval 255, one byte per pixel, `round(confidence * 255)`;
//! - depth: maxval 65535, two big-endian bytes per pixel, range in
//!   millimetres rounded to the nearest integer and clamped to `1..=65534`.
//!   The value 65535 means "no return" and loads as the camera's max range.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use super::{CameraModel, FramePair};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEPTH_NO_RETURN: u16 = u16::MAX;

pub fn save_frame_pair(frame: &FramePair, mask_path: &Path, depth_path: &Path) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let mask: Vec<u8> = frame
        .soft_mask
        .as_slice()
        .iter()
        .map(|c| (c * 255.0).round() as u8)
        .collect();
    let depth: Vec<u16> = frame
        .depth
        .as_slice()
        .iter()
        .map(|&d| {
            if frame.is_no_return(d) {
                DEPTH_NO_RETURN
            } else {
                (d * 1000.0).round().clamp(1.0, 65534.0) as u16
            }
        })
        .collect();
    let mut depth_bytes = Vec::with_capacity(depth.len() * 2);
    for d in depth {
        depth_bytes.extend_from_slice(&d.to_be_bytes());
    }
    write_pgm(mask_path, w, h, 255, &mask)?;
    write_pgm(depth_path, w, h, 65535, &depth_bytes)
}

// The image crate's PNM encoder has no 16-bit path, so the header is written
// by hand for both depths.
fn write_pgm(path: &Path, w: usize, h: usize, maxval: u16, samples: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n{maxval}\n")?;
    out.write_all(samples)?;
    out.flush()?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    let reader = ImageReader::with_format(BufReader::new(File::open(path)?), ImageFormat::Pnm);
    reader.decode().map_err(|e| Error::MalformedImage {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

/// Loads a mask/depth pair written in the format above, using the default
/// camera range for "no return" pixels.
pub fn load_frame_pair(mask_path: &Path, depth_path: &Path) -> Result<FramePair> {
    load_frame_pair_with_range(mask_path, depth_path, CameraModel::default().max_range)
}

pub fn load_frame_pair_with_range(mask_path: &Path, depth_path: &Path, max_range: f64) -> Result<FramePair> {
    let mask_img = read_pgm(mask_path)?;
    let depth_img = read_pgm(depth_path)?;
    let soft_mask = match &mask_img {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Grid::from_vec(w as usize, h as usize, img.pixels().map(|p| p.0[0] as f64 / 255.0).collect())?
        }
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            Grid::from_vec(w as usize, h as usize, img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())?
        }
        _ => {
            return Err(Error::MalformedImage {
                path: mask_path.to_owned(),
                reason: "mask must be single-channel".into(),
            })
        }
    };
    let DynamicImage::ImageLuma16(depth_img) = depth_img else {
        return Err(Error::MalformedImage {
            path: depth_path.to_owned(),
            reason: "depth must be 16-bit single-channel".into(),
        });
    };
    let (w, h) = depth_img.dimensions();
    let depth = Grid::from_vec(
        w as usize,
        h as usize,
        depth_img
            .pixels()
            .map(|p| match p.0[0] {
                DEPTH_NO_RETURN => max_range,
                mm => (mm.max(1) as f64 / 1000.0).min(max_range),
            })
            .collect(),
    )?;
    soft_mask.check_shape(&depth)?;
    FramePair::new(soft_mask, depth, max_range, 0.0)
}

/// Writes a grid of values in `[0, 1]` as an 8-bit PGM, for debug dumps.
pub fn save_unit_grid(grid: &Grid<f64>, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = grid
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_pgm(path, grid.width(), grid.height(), 255, &bytes)
}
