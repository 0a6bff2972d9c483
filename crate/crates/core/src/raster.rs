//! Rendering plans into training images, PNG IO, and synthetic degradation.

use std::fs;
use std::path::Path;

use image::ImageEncoder;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plangen::{FloorPlan, SiteBoundary};
use crate::topology::{Palette, Rgb, TopologyGraph};

pub const DEFAULT_SCALE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Grey,
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Boundary,
    Blank,
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("no palette entry for room {room} (label {label})")]
    PaletteMiss { room: u32, label: u32 },
    #[error("image heights differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("image io: {0}")]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image must not be empty");
        RasterImage { width, height, pixels: vec![color; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn crop(&self, x0: usize, width: usize) -> RasterImage {
        let mut pixels = Vec::with_capacity(width * self.height);
        for y in 0..self.height {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + width]);
        }
        RasterImage { width, height: self.height, pixels }
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Vec::new();
        let buf: Vec<u8> = self.pixels.iter().flat_map(|p| p.0).collect();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &buf,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    /// Reads any image the decoder understands and drops alpha.
    pub fn read_png(path: &Path) -> Result<RasterImage, RasterError> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| Rgb(p.0)).collect();
        Ok(RasterImage { width: w as usize, height: h as usize, pixels })
    }
}


/// Pixels on the inner edge of the site: inside pixels with a 4-neighbour that is
/// outside the site or off the image. Source and target renders share this set.
pub fn outline_mask(boundary: &SiteBoundary, scale: usize) -> Vec<bool> {
    let (w, h) = (boundary.width * scale, boundary.height * scale);
    let inside = |x: isize, y: isize| {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as usize) < h
            && boundary.mask[(y as usize / scale) * boundary.width + x as usize / scale]
    };
    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            if inside(x, y)
                && (!inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1))
            {
                out[y as usize * w + x as usize] = true;
            }
        }
    }
    out
}

/// Renders the plan as a figure-ground image. In grey mode a room's colour is the
/// palette entry for its grey level, in RGB mode the entry for its room id.
pub fn render_target(
    plan: &FloorPlan,
    graph: &TopologyGraph,
    mode: ColorMode,
    palette: &Palette,
    scale: usize,
) -> Result<RasterImage, RasterError> {
    let mut colors = std::collections::HashMap::new();
    for room in &graph.rooms {
        let label = match mode {
            ColorMode::Grey => room.grey_level as u32,
            ColorMode::Rgb => room.id,
        };
        let c = palette
            .color_of(label)
            .ok_or(RasterError::PaletteMiss { room: room.id, label })?;
        colors.insert(room.id as i32, c);
    }
    let (w, h) = (plan.width * scale, plan.height * scale);
    let mut img = RasterImage::filled(w, h, palette.background);
    for cy in 0..plan.height {
        for cx in 0..plan.width {
            let cell = plan.cells[cy * plan.width + cx];
            if cell < 0 || !plan.mask[cy * plan.width + cx] {
                continue;
            }
            let c = *colors.get(&cell).ok_or(RasterError::PaletteMiss {
                room: cell as u32,
                label: cell as u32,
            })?;
            for y in cy * scale..(cy + 1) * scale {
                img.pixels[y * w + cx * scale..y * w + (cx + 1) * scale].fill(c);
            }
        }
    }
    draw_outline(&mut img, &plan.boundary(), scale, palette.boundary);
    Ok(img)
}

fn draw_outline(img: &mut RasterImage, boundary: &SiteBoundary, scale: usize, color: Rgb) {
    for (p, on) in img.pixels.iter_mut().zip(outline_mask(boundary, scale)) {
        if on {
            *p = color;
        }
    }
}

pub fn render_source(
    plan: &FloorPlan,
    kind: SourceKind,
    palette: &Palette,
    scale: usize,
) -> RasterImage {
    let mut img = RasterImage::filled(plan.width * scale, plan.height * scale, palette.background);
    if kind == SourceKind::Boundary {
        draw_outline(&mut img, &plan.boundary(), scale, palette.boundary);
    }
    img
}

/// Side-by-side pair, source on the left.
pub fn compose_pair(source: &RasterImage, target: &RasterImage) -> Result<RasterImage, RasterError> {
    if source.height != target.height {
        return Err(RasterError::SizeMismatch(source.height, target.height));
    }
    let width = source.width + target.width;
    let mut pixels = Vec::with_capacity(width * source.height);
    for y in 0..source.height {
        pixels.extend_from_slice(&source.pixels[y * source.width..(y + 1) * source.width]);
        pixels.extend_from_slice(&target.pixels[y * target.width..(y + 1) * target.width]);
    }
    Ok(RasterImage { width, height: source.height, pixels })
}

/// Splits a composed pair at its midline.
pub fn split_pair(pair: &RasterImage) -> (RasterImage, RasterImage) {
    let half = pair.width / 2;
    (pair.crop(0, half), pair.crop(half, pair.width - half))
}

pub fn pair_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradeSchedule {
    pub levels: Vec<f64>,
    pub seed: u64,
}

impl DegradeSchedule {
    /// `epochs` levels spaced evenly from 1 down to 0.
    pub fn linear(epochs: usize, seed: u64) -> Self {
        let levels = match epochs {
            0 => vec![],
            1 => vec![0.0],
            n => (0..n).map(|e| 1.0 - e as f64 / (n - 1) as f64).collect(),
        };
        DegradeSchedule { levels, seed }
    }

    pub fn is_valid(&self) -> bool {
        self.levels.iter().all(|l| (0.0..=1.0).contains(l))
    }
}

/// RNG stream for image `index` at `epoch` of a run seeded with `seed`.
pub fn degrade_stream(seed: u64, epoch: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32 | index as u64)
}

/// Imitates an imperfect generator output. Effects scale with `level`: Gaussian colour
/// jitter (sigma 80*level), a box blur of radius round(4*level), and round(20*level)
/// 16x16 blocks shifted by up to round(6*level) pixels. Level 0 is the identity.
pub fn degrade(image: &RasterImage, level: f64, stream: u64) -> RasterImage {
    let level = level.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut img = image.clone();

    let sigma = 80.0 * level;
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for p in &mut img.pixels {
            for ch in &mut p.0 {
                let v = *ch as f64 + noise.sample(&mut rng);
                *ch = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let radius = (4.0 * level).round() as usize;
    if radius > 0 {
        img = box_blur(&img, radius);
    }

    let blocks = (20.0 * level).round() as usize;
    let shift = (6.0 * level).round() as i64;
    if shift > 0 && img.width >= 16 && img.height >= 16 {
        let snapshot = img.clone();
        for _ in 0..blocks {
            let x0 = rng.random_range(0..=img.width - 16) as i64;
            let y0 = rng.random_range(0..=img.height - 16) as i64;
            let dx = rng.random_range(-shift..=shift);
            let dy = rng.random_range(-shift..=shift);
            for y in 0..16 {
                for x in 0..16 {
                    let (tx, ty) = (x0 + x + dx, y0 + y + dy);
                    if tx < 0 || ty < 0 || tx >= img.width as i64 || ty >= img.height as i64 {
                        continue;
                    }
                    let c = snapshot.get((x0 + x) as usize, (y0 + y) as usize);
                    img.set(tx as usize, ty as usize, c);
                }
            }
        }
    }
    img
}

/// Separable box blur with edge clamping and rounded integer averages.
pub fn box_blur(img: &RasterImage, radius: usize) -> RasterImage {
    let pass = |src: &RasterImage, horizontal: bool| {
        let (w, h) = (src.width, src.height);
        let win = (2 * radius + 1) as u32;
        let mut out = src.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0u32; 3];
                for k in -(radius as isize)..=radius as isize {
                    let (sx, sy) = if horizontal {
                        ((x as isize + k).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + k).clamp(0, h as isize - 1) as usize)
                    };
                    let p = src.pixels[sy * w + sx].0;
                    acc[0] += p[0] as u32;
                    acc[1] += p[1] as u32;
                    acc[2] += p[2] as u32;
                }
                out.pixels[y * w + x] =
                    Rgb(acc.map(|a| ((a + win / 2) / win) as u8));
            }
        }
        out
    };
    pass(&pass(img, true), false)
}
