//! Per-view patch features: grayscale images, bilinear resizing, overlapping
//! patch extraction and a fixed HoG variant.
//!
//! HoG layout: central-difference gradients with replicated borders, unsigned
//! orientations split into `bins` bins centred at `b * 180 / bins` degrees
//! with linear interpolation between neighbouring bins, hard assignment to
//! square cells, and one L2 normalisation over the whole patch vector.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureBlock, PatchGridConfig};
use crate::scalar::Scalar;

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::arg(format!(
                "image {width}x{height} expects {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::arg("pixel intensities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Luminance conversion of interleaved 8-bit RGB.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::arg("rgb buffer length does not match dimensions"));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]);
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::arg("crop window exceeds image bounds"));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks_exact(self.width) {
            pixels.extend(row.iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Quantizes to 8 bits per pixel.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Rounds every pixel to the nearest of 256 levels, as stored in an 8-bit
    /// file; reading that file back yields the same pixels.
    pub fn quantized_u8(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .to_u8()
                .into_iter()
                .map(|b| f32::from(b) / 255.0)
                .collect(),
        }
    }
}

/// Bilinear resize to `side` × `side` with corner-aligned sampling.
pub fn resize_bilinear(img: &GrayImage, side: usize) -> Result<GrayImage> {
    if side == 0 {
        return Err(Error::arg("resize target side must be positive"));
    }
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    let scale = |src: usize| {
        if side == 1 {
            0.0
        } else {
            (src - 1) as f64 / (side - 1) as f64
        }
    };
    let (sx, sy) = (scale(img.width), scale(img.height));
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        let fy = y as f64 * sy;
        let y0 = (fy.floor() as usize).min(img.height - 1);
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..side {
            let fx = x as f64 * sx;
            let x0 = (fx.floor() as usize).min(img.width - 1);
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let top = f64::from(img.get(x0, y0)) * (1.0 - tx) + f64::from(img.get(x1, y0)) * tx;
            let bot = f64::from(img.get(x0, y1)) * (1.0 - tx) + f64::from(img.get(x1, y1)) * tx;
            pixels.push(((top * (1.0 - ty) + bot * ty) as f32).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(side, side, pixels)
}

/// Splits an `image_side`² image into the G grid patches, row-major.
pub fn extract_patches(img: &GrayImage, grid: &PatchGridConfig) -> Result<Vec<GrayImage>> {
    grid.validate()?;
    if img.width != grid.image_side || img.height != grid.image_side {
        return Err(Error::arg(format!(
            "expected a {0}x{0} image, got {1}x{2}",
            grid.image_side, img.width, img.height
        )));
    }
    (0..grid.patch_count())
        .map(|g| {
            let (x, y) = grid.patch_origin(g);
            img.crop(x, y, grid.patch_side, grid.patch_side)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HogConfig {
    pub cell_side: usize,
    /// Unsigned orientation bins over [0°, 180°).
    pub bins: usize,
    pub epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_side: 8,
            bins: 9,
            epsilon: 1e-6,
        }
    }
}

impl HogConfig {
    pub fn validate(&self, patch_side: usize) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::arg("HoG needs at least 2 orientation bins"));
        }
        if self.cell_side == 0 || !patch_side.is_multiple_of(self.cell_side) {
            return Err(Error::arg(format!(
                "patch side {patch_side} is not divisible by cell side {}",
                self.cell_side
            )));
        }
        Ok(())
    }

    /// Descriptor length for a square patch of the given side.
    pub fn descriptor_len(&self, patch_side: usize) -> usize {
        let cells = patch_side / self.cell_side;
        cells * cells * self.bins
    }
}

/// HoG descriptor of a square patch, written into `out`.
fn hog_into(patch: &GrayImage, cfg: &HogConfig, out: &mut [f64]) {
    let (w, h) = (patch.width, patch.height);
    let cells_x = w / cfg.cell_side;
    let bin_width = 180.0 / cfg.bins as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = (f64::from(patch.get(xp, y)) - f64::from(patch.get(xm, y))) * 0.5;
            let gy = (f64::from(patch.get(x, yp)) - f64::from(patch.get(x, ym))) * 0.5;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % cfg.bins;
            let b1 = (b0 + 1) % cfg.bins;
            let cell = (y / cfg.cell_side) * cells_x + x / cfg.cell_side;
            out[cell * cfg.bins + b0] += mag * (1.0 - frac);
            out[cell * cfg.bins + b1] += mag * frac;
        }
    }
    let norm = (out.iter().map(|v| v * v).sum::<f64>() + cfg.epsilon * cfg.epsilon).sqrt();
    out.iter_mut().for_each(|v| *v /= norm);
}

/// HoG descriptor of one square patch.
pub fn hog_patch(patch: &GrayImage, cfg: &HogConfig) -> Result<Vec<f64>> {
    if patch.width != patch.height {
        return Err(Error::arg("HoG patches must be square"));
    }
    cfg.validate(patch.width)?;
    let mut out = vec![0.0; cfg.descriptor_len(patch.width)];
    hog_into(patch, cfg, &mut out);
    Ok(out)
}

/// The G × d feature block of one view image.
pub fn extract_view_features<T: Scalar>(
    img: &GrayImage,
    grid: &PatchGridConfig,
    cfg: &HogConfig,
) -> Result<FeatureBlock<T>> {
    cfg.validate(grid.patch_side)?;
    let patches = extract_patches(img, grid)?;
    let dim = cfg.descriptor_len(grid.patch_side);
    let mut buf = vec![0.0; dim];
    let mut data = Vec::with_capacity(patches.len() * dim);
    for p in &patches {
        hog_into(p, cfg, &mut buf);
        data.extend(buf.iter().map(|&v| T::from_f64(v)));
    }
    FeatureBlock::new(patches.len(), dim, data)
}

/// Resizes `img` to the grid's image side if necessary, then extracts features.
pub fn prepare_and_extract<T: Scalar>(
    img: &GrayImage,
    grid: &PatchGridConfig,
    cfg: &HogConfig,
) -> Result<FeatureBlock<T>> {
    let resized;
    let img = if img.width == grid.image_side && img.height == grid.image_side {
        img
    } else {
        resized = resize_bilinear(img, grid.image_side)?;
        &resized
    };
    extract_view_features(img, grid, cfg)
}

/// Loads an externally computed G × d feature block stored as a one-shape,
/// one-view MVFT file.
pub fn import_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureBlock<T>> {
    let tensor = crate::io::read_mvft_file(path)?;
    if tensor.shapes != 1 || tensor.views != 1 {
        return Err(Error::format(format!(
            "imported features must hold one shape and one view, found {}x{}",
            tensor.shapes, tensor.views
        )));
    }
    FeatureBlock::new(
        tensor.patches,
        tensor.dim,
        tensor.data.into_iter().map(T::from_f32).collect(),
    )
}

fn pnm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && tok.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::format("truncated PNM header"));
    }
    Ok(tok)
}

fn pnm_number<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    pnm_token(r)?
        .parse()
        .map_err(|_| Error::format(format!("invalid PNM {what}")))
}

/// Reads a binary 8-bit PGM (P5), or a PPM (P6) converted by luminance.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let file = fs::File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let magic = pnm_token(&mut r)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(Error::format(format!("unsupported image magic {magic:?}"))),
    };
    let width = pnm_number(&mut r, "width")?;
    let height = pnm_number(&mut r, "height")?;
    let maxval = pnm_number(&mut r, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("only 8-bit PNM images are supported"));
    }
    let mut raw = vec![0u8; width * height * channels];
    r.read_exact(&mut raw)
        .map_err(|_| Error::format("PNM payload shorter than header"))?;
    let scale = 255.0 / maxval as f32;
    if channels == 3 {
        let rgb: Vec<u8> = raw
            .iter()
            .map(|&b| (f32::from(b) * scale).round().min(255.0) as u8)
            .collect();
        return GrayImage::from_rgb8(width, height, &rgb);
    }
    let pixels = raw
        .iter()
        .map(|&b| (f32::from(b) / maxval as f32).min(1.0))
        .collect();
    GrayImage::new(width, height, pixels)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.to_u8())?;
    f.flush()?;
    Ok(())
}
