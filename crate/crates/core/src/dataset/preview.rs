use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, SyntheticDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channels {
    /// One plane, written as PGM.
    Gray,
    /// Three planes R, G, B in that order (CIFAR layout), written as PPM.
    Rgb,
}

impl Channels {
    fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// Geometry of a preview: `rows x cols` cells of `height x width` pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewGrid {
    pub rows: usize,
    pub cols: usize,
    pub height: usize,
    pub width: usize,
    pub channels: Channels,
    /// Feature values mapped to 0 and 255; filled in by rendering.
    pub pixel_range: Option<(f64, f64)>,
}

impl PreviewGrid {
    pub fn new(rows: usize, cols: usize, height: usize, width: usize, channels: Channels) -> Self {
        PreviewGrid {
            rows,
            cols,
            height,
            width,
            channels,
            pixel_range: None,
        }
    }
}

/// Encodes the first `rows * cols` samples of `features` as a binary PGM or
/// PPM, scaling the global min..max of those cells to 0..255.
pub fn encode_preview(features: ArrayView2<f64>, grid: &mut PreviewGrid) -> Result<Vec<u8>> {
    let (t, d_x) = features.dim();
    let ch = grid.channels.count();
    let plane = grid.height * grid.width;
    if grid.rows == 0 || grid.cols == 0 || plane == 0 {
        return Err(DatasetError::Dimension("preview grid has an empty side".into()));
    }
    if plane * ch != d_x {
        return Err(DatasetError::Dimension(format!(
            "{ch} x {} x {} pixels do not match d_x = {d_x}",
            grid.height, grid.width
        )));
    }
    let cells = grid.rows * grid.cols;
    if cells > t {
        return Err(DatasetError::Dimension(format!(
            "{} x {} grid needs {cells} samples, only {t} available",
            grid.rows, grid.cols
        )));
    }

    let shown = features.slice(ndarray::s![..cells, ..]);
    let (lo, hi) = shown
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    grid.pixel_range = Some((lo, hi));
    let scale = |v: f64| -> u8 {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    };

    let img_w = grid.cols * grid.width;
    let img_h = grid.rows * grid.height;
    let magic = if ch == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{img_w} {img_h}\n255\n").into_bytes();
    out.reserve(img_w * img_h * ch);
    for y in 0..img_h {
        let (r, py) = (y / grid.height, y % grid.height);
        for x in 0..img_w {
            let (c, px) = (x / grid.width, x % grid.width);
            let sample = shown.row(r * grid.cols + c);
            for k in 0..ch {
                out.push(scale(sample[k * plane + py * grid.width + px]));
            }
        }
    }
    Ok(out)
}

/// Renders a preview of `ds` to `out`; returns the grid with its pixel range set.
pub fn render_preview_grid(ds: &SyntheticDataset, grid: &PreviewGrid, out: &Path) -> Result<PreviewGrid> {
    let mut grid = grid.clone();
    let bytes = encode_preview(ds.features.view(), &mut grid)?;
    fs::write(out, bytes).map_err(|e| DatasetError::io(out, e))?;
    Ok(grid)
}
