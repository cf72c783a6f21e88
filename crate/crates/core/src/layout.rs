//! Coarse stage: rectangular layout blocks and their image/widget kind.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::BBox;
use crate::pixelops::{
    self, binarize, flood_fill_regions, gradient_density, gradient_map, is_rectangle,
    label_components, trace_contour, BinaryMap, Contour, GreyMap, PixelError,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error(transparent)]
    Pixel(#[from] PixelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    Image,
    WidgetBearing,
}

/// Where a block came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSource {
    /// A maximal flat-colour region found by flood fill.
    FloodFill,
    /// A dense, rectangular patch of strong gradients (photographs, video frames).
    Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub bbox: BBox,
    pub contour: Contour,
    pub kind: BlockKind,
    pub source: BlockSource,
    /// Row-major screen indices of the pixels that make up the block.
    pub pixels: Vec<u32>,
}

impl Block {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    /// Seed-relative flood-fill tolerance on the grey map.
    pub flood_tolerance: u8,
    /// Gradient threshold shared with binarization.
    pub binarize_threshold: u8,
    /// Smallest block, as a fraction of the screen area.
    pub min_area_fraction: f64,
    /// Gradient density at or above which a block is a picture.
    pub image_density: f64,
    /// Also look for rectangular texture patches in the binary map.
    pub texture_blocks: bool,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            flood_tolerance: 4,
            binarize_threshold: 4,
            min_area_fraction: 0.005,
            image_density: 0.35,
            texture_blocks: true,
        }
    }
}

impl BlockConfig {
    pub fn min_block_area(&self, width: usize, height: usize) -> usize {
        ((self.min_area_fraction * (width * height) as f64).ceil() as usize).max(1)
    }
}

/// Kind of the grey patch under `bbox` by gradient density.
pub fn block_kind_from_grey(
    grey: &GreyMap,
    bbox: &BBox,
    config: &BlockConfig,
) -> Result<BlockKind, LayoutError> {
    let density = gradient_density(grey, bbox, config.binarize_threshold)?;
    Ok(if density >= config.image_density { BlockKind::Image } else { BlockKind::WidgetBearing })
}

/// Texture-dense blocks are photographs; everything else may hold widgets.
pub fn classify_block_kind(
    image: &RgbImage,
    bbox: &BBox,
    config: &BlockConfig,
) -> Result<BlockKind, LayoutError> {
    let grey = pixelops::to_grey(image)?;
    block_kind_from_grey(&grey, bbox, config)
}

/// Flood-fill the grey map, keep the rectangular regions and return them as
/// blocks, largest first.
pub fn detect_blocks(grey: &GreyMap, config: &BlockConfig) -> Result<Vec<Block>, LayoutError> {
    let width = grey.width();
    let min_area = config.min_block_area(width, grey.height());
    let mut blocks = Vec::new();

    for region in flood_fill_regions(grey, config.flood_tolerance, min_area) {
        let (mask, component) = region.to_mask(width);
        let contour = trace_contour(&mask, &component)?;
        if !is_rectangle(&contour, component.area) {
            continue;
        }
        let kind = block_kind_from_grey(grey, &region.bbox, config)?;
        blocks.push(Block {
            bbox: region.bbox,
            contour: contour.translate(region.bbox.x0(), region.bbox.y0()),
            kind,
            source: BlockSource::FloodFill,
            pixels: region.pixels,
        });
    }

    if config.texture_blocks {
        blocks.extend(texture_blocks(grey, config, min_area)?);
    }

    blocks.sort_by(|a, b| {
        b.bbox
            .area()
            .cmp(&a.bbox.area())
            .then((a.bbox.y0(), a.bbox.x0()).cmp(&(b.bbox.y0(), b.bbox.x0())))
    });
    Ok(blocks)
}

fn texture_blocks(
    grey: &GreyMap,
    config: &BlockConfig,
    min_area: usize,
) -> Result<Vec<Block>, LayoutError> {
    let width = grey.width();
    let binary = binarize(&gradient_map(grey), config.binarize_threshold);
    let (labels, components) = label_components(&binary, min_area);
    let mut out = Vec::new();

    for comp in &components {
        if (comp.area as f64) < config.image_density * comp.bbox.area() as f64 {
            continue;
        }
        let bbox = pixelops::align_forward_edges(&comp.bbox, &grey.bounds());
        if block_kind_from_grey(grey, &bbox, config)? != BlockKind::Image {
            continue;
        }
        // the component restricted to its aligned extent
        let (bw, bh) = (bbox.width() as usize, bbox.height() as usize);
        let mut fg = vec![false; bw * bh];
        let mut pixels = Vec::new();
        for y in 0..bh {
            for x in 0..bw {
                let (sx, sy) = (x + bbox.x0() as usize, y + bbox.y0() as usize);
                if labels.get(sx, sy) == comp.label {
                    fg[y * bw + x] = true;
                    pixels.push((sy * width + sx) as u32);
                }
            }
        }
        let mask = BinaryMap::new(bw, bh, fg)?;
        let (_, parts) = label_components(&mask, 1);
        let Some(main) = parts.iter().max_by_key(|c| c.area) else {
            continue;
        };
        let contour = trace_contour(&mask, main)?;
        if !is_rectangle(&contour, main.area) {
            continue;
        }
        out.push(Block {
            bbox,
            contour: contour.translate(bbox.x0(), bbox.y0()),
            kind: BlockKind::Image,
            source: BlockSource::Texture,
            pixels,
        });
    }
    Ok(out)
}
