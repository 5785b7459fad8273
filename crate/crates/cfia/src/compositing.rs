//! Segment two donor faces by attribute and blend the selected regions
//! into an initial composite plus its union mask.
//!
//! Pixels live in [0,1] internally; quantization to 8-bit happens only at
//! the PNG boundary. The composite is handed off (image + mask + manifest)
//! to an external inpainting stage; everything outside the union mask is
//! left at zero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regions::{AttributeSet, FacialAttribute, RegionCombination};

#[derive(Debug, Error)]
pub enum CompositeError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(u8, u8),
    #[error("label {label} outside 0..=5 at pixel ({x}, {y})")]
    LabelOutOfRange { label: u8, x: u32, y: u32 },
    #[error("alpha {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("attribute {0:?} missing from segment map")]
    MissingAttribute(FacialAttribute),
    #[error("image dimensions must be nonzero")]
    EmptyImage,
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png error at {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("label map png at {path} must be 8-bit single channel")]
    BadLabelMapFormat { path: String },
}

/// Real-valued raster, row-major, channel-interleaved, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8) -> Result<Self, CompositeError> {
        if width == 0 || height == 0 {
            return Err(CompositeError::EmptyImage);
        }
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Ok(RasterImage {
            width,
            height,
            channels,
            data: vec![0.0; (width * height * channels as u32) as usize],
        })
    }

    pub fn from_pixels(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<f64>,
    ) -> Result<Self, CompositeError> {
        let mut img = Self::new(width, height, channels)?;
        assert_eq!(data.len(), img.data.len(), "pixel buffer size mismatch");
        img.data = data;
        Ok(img)
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> f64 {
        self.data[((y * self.width + x) * self.channels as u32 + c as u32) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u8, v: f64) {
        self.data[((y * self.width + x) * self.channels as u32 + c as u32) as usize] = v;
    }

    fn same_shape(&self, other: &RasterImage) -> Result<(), CompositeError> {
        if self.width != other.width || self.height != other.height {
            return Err(CompositeError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        if self.channels != other.channels {
            return Err(CompositeError::ChannelMismatch(self.channels, other.channels));
        }
        Ok(())
    }

    /// Nearest-neighbor resize. Resampling is never implicit: callers must
    /// invoke this explicitly when donor resolutions differ.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<RasterImage, CompositeError> {
        let mut out = RasterImage::new(width, height, self.channels)?;
        for y in 0..height {
            let sy = (y as u64 * self.height as u64 / height as u64) as u32;
            for x in 0..width {
                let sx = (x as u64 * self.width as u64 / width as u64) as u32;
                for c in 0..self.channels {
                    out.set(x, y, c, self.get(sx, sy, c));
                }
            }
        }
        Ok(out)
    }
}

/// Per-pixel class labels in {0=B, 1=S, 2=E, 3=N, 4=M, 5=H}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self, CompositeError> {
        if width == 0 || height == 0 {
            return Err(CompositeError::EmptyImage);
        }
        assert_eq!(labels.len(), (width * height) as usize);
        for (i, &l) in labels.iter().enumerate() {
            if l > 5 {
                return Err(CompositeError::LabelOutOfRange {
                    label: l,
                    x: i as u32 % width,
                    y: i as u32 / width,
                });
            }
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<LabelMap, CompositeError> {
        let mut labels = vec![0u8; (width * height) as usize];
        for y in 0..height {
            let sy = (y as u64 * self.height as u64 / height as u64) as u32;
            for x in 0..width {
                let sx = (x as u64 * self.width as u64 / width as u64) as u32;
                labels[(y * width + x) as usize] = self.get(sx, sy);
            }
        }
        LabelMap::new(width, height, labels)
    }
}

/// Per-pixel {0,1} mask, stored as reals so it can enter blending directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl BinaryMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    fn same_shape(&self, other: &BinaryMask) -> Result<(), CompositeError> {
        if self.width != other.width || self.height != other.height {
            return Err(CompositeError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// One attribute's mask and pre-masked segment image for a donor.
#[derive(Debug, Clone)]
pub struct Segment {
    pub mask: BinaryMask,
    pub image: RasterImage,
}

/// Splits a label map + image into per-attribute (mask, segment image)
/// pairs. The six masks partition the frame: disjoint, and their union
/// covers every pixel.
pub fn split_label_map(
    labels: &LabelMap,
    image: &RasterImage,
) -> Result<BTreeMap<FacialAttribute, Segment>, CompositeError> {
    if labels.width != image.width || labels.height != image.height {
        return Err(CompositeError::DimensionMismatch(
            labels.width,
            labels.height,
            image.width,
            image.height,
        ));
    }
    let mut parts = BTreeMap::new();
    for attr in FacialAttribute::ALL {
        let mut mask = BinaryMask::zeros(labels.width, labels.height);
        let mut seg = RasterImage::new(image.width, image.height, image.channels)?;
        for y in 0..labels.height {
            for x in 0..labels.width {
                if labels.get(x, y) == attr.class_label() {
                    mask.set(x, y, 1.0);
                    for c in 0..image.channels {
                        seg.set(x, y, c, image.get(x, y, c));
                    }
                }
            }
        }
        parts.insert(attr, Segment { mask, image: seg });
    }
    Ok(parts)
}

/// Pixelwise union (max) of the masks selected by an attribute set.
pub fn mask_for_set(
    parts: &BTreeMap<FacialAttribute, Segment>,
    set: AttributeSet,
) -> Result<BinaryMask, CompositeError> {
    let mut out: Option<BinaryMask> = None;
    for attr in set.iter() {
        let seg = parts
            .get(&attr)
            .ok_or(CompositeError::MissingAttribute(attr))?;
        match &mut out {
            None => out = Some(seg.mask.clone()),
            Some(acc) => {
                acc.same_shape(&seg.mask)?;
                for (a, b) in acc.data.iter_mut().zip(&seg.mask.data) {
                    *a = a.max(*b);
                }
            }
        }
    }
    out.ok_or(CompositeError::EmptyImage)
}

/// The mask plus the pre-masked image for a donor's selected attribute set.
/// Since per-attribute masks are disjoint, the combined segment image is
/// the sum of the selected segment images.
pub fn segment_for_set(
    parts: &BTreeMap<FacialAttribute, Segment>,
    set: AttributeSet,
) -> Result<Segment, CompositeError> {
    let mask = mask_for_set(parts, set)?;
    let mut image: Option<RasterImage> = None;
    for attr in set.iter() {
        let seg = &parts[&attr];
        match &mut image {
            None => image = Some(seg.image.clone()),
            Some(acc) => {
                acc.same_shape(&seg.image)?;
                for (a, b) in acc.data.iter_mut().zip(&seg.image.data) {
                    *a += *b;
                }
            }
        }
    }
    Ok(Segment {
        mask,
        image: image.ok_or(CompositeError::EmptyImage)?,
    })
}

/// Pixelwise OR of two masks.
pub fn blend_union(sm1: &BinaryMask, sm2: &BinaryMask) -> Result<BinaryMask, CompositeError> {
    sm1.same_shape(sm2)?;
    let data = sm1
        .data
        .iter()
        .zip(&sm2.data)
        .map(|(&a, &b)| a.max(b))
        .collect();
    Ok(BinaryMask {
        width: sm1.width,
        height: sm1.height,
        data,
    })
}

/// Initial composite plus its blended union mask.
#[derive(Debug, Clone)]
pub struct CompositeOutput {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub combination: RegionCombination,
    pub alpha: f64,
}

/// Two-step blend: IC starts as the donor-one segment image, then the
/// donor-two overlay is applied as `alpha*IS2 + (1 - alpha*SM2) * IC`.
/// With alpha = 1 this is the literal overlay rule; with alpha = 0.5 an
/// overlap pixel becomes the 50/50 average of the two donors. When
/// `alpha_scales_first` is set, step one is `alpha*IS1` instead (the
/// source text does not pin this down; unscaled is the default).
pub fn initial_composite_with(
    seg1: &Segment,
    seg2: &Segment,
    combination: RegionCombination,
    alpha: f64,
    alpha_scales_first: bool,
) -> Result<CompositeOutput, CompositeError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CompositeError::AlphaOutOfRange(alpha));
    }
    seg1.image.same_shape(&seg2.image)?;
    seg1.mask.same_shape(&seg2.mask)?;

    let mask = blend_union(&seg1.mask, &seg2.mask)?;
    let step1_scale = if alpha_scales_first { alpha } else { 1.0 };
    let mut image = RasterImage::new(seg1.image.width, seg1.image.height, seg1.image.channels)?;
    for y in 0..image.height {
        for x in 0..image.width {
            let sm2 = seg2.mask.get(x, y);
            for c in 0..image.channels {
                let ic = step1_scale * seg1.image.get(x, y, c);
                let blended = alpha * seg2.image.get(x, y, c) + (1.0 - alpha * sm2) * ic;
                image.set(x, y, c, blended.clamp(0.0, 1.0));
            }
        }
    }
    Ok(CompositeOutput {
        image,
        mask,
        combination,
        alpha,
    })
}

/// [`initial_composite_with`] with the default unscaled first step.
pub fn initial_composite(
    seg1: &Segment,
    seg2: &Segment,
    combination: RegionCombination,
    alpha: f64,
) -> Result<CompositeOutput, CompositeError> {
    initial_composite_with(seg1, seg2, combination, alpha, false)
}

/// Metadata written next to every exported composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeManifest {
    pub combination: String,
    pub alpha: f64,
    pub donor1_id: String,
    pub donor2_id: String,
}

#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub manifest: PathBuf,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CompositeError + '_ {
    move |source| CompositeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn png_err(path: &Path) -> impl FnOnce(image::ImageError) -> CompositeError + '_ {
    move |source| CompositeError::Png {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a raster as 8-bit PNG (grayscale or RGB by channel count).
pub fn write_raster_png(img: &RasterImage, path: &Path) -> Result<(), CompositeError> {
    match img.channels {
        1 => {
            let buf: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
            let gray = image::GrayImage::from_raw(img.width, img.height, buf)
                .expect("buffer sized to dimensions");
            gray.save(path).map_err(png_err(path))
        }
        _ => {
            let buf: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
            let rgb = image::RgbImage::from_raw(img.width, img.height, buf)
                .expect("buffer sized to dimensions");
            rgb.save(path).map_err(png_err(path))
        }
    }
}

/// Reads an 8-bit PNG into the [0,1] domain (grayscale stays 1-channel,
/// anything else is converted to RGB).
pub fn read_raster_png(path: &Path) -> Result<RasterImage, CompositeError> {
    let img = image::open(path).map_err(png_err(path))?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let data = gray.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            RasterImage::from_pixels(w, h, 1, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            RasterImage::from_pixels(w, h, 3, data)
        }
    }
}

/// Reads an 8-bit single-channel PNG whose pixel values are class labels.
pub fn read_label_map_png(path: &Path) -> Result<LabelMap, CompositeError> {
    let img = image::open(path).map_err(png_err(path))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        _ => {
            return Err(CompositeError::BadLabelMapFormat {
                path: path.display().to_string(),
            })
        }
    };
    let (w, h) = gray.dimensions();
    LabelMap::new(w, h, gray.into_raw())
}

/// Writes composite image, mask (values {0,255}) and JSON manifest into
/// `dir`, named after the combination code.
pub fn export_composite(
    c: &CompositeOutput,
    donor1_id: &str,
    donor2_id: &str,
    dir: &Path,
) -> Result<ExportPaths, CompositeError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = c.combination.canonical_code();
    let image_path = dir.join(format!("{stem}_composite.png"));
    let mask_path = dir.join(format!("{stem}_mask.png"));
    let manifest_path = dir.join(format!("{stem}_manifest.json"));

    write_raster_png(&c.image, &image_path)?;
    let mask_raster = RasterImage::from_pixels(
        c.mask.width,
        c.mask.height,
        1,
        c.mask.data.clone(),
    )?;
    write_raster_png(&mask_raster, &mask_path)?;

    let manifest = CompositeManifest {
        combination: stem,
        alpha: c.alpha,
        donor1_id: donor1_id.to_string(),
        donor2_id: donor2_id.to_string(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

    Ok(ExportPaths {
        image: image_path,
        mask: mask_path,
        manifest: manifest_path,
    })
}

/// Reads a manifest back.
pub fn read_manifest(path: &Path) -> Result<CompositeManifest, CompositeError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CompositeError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
