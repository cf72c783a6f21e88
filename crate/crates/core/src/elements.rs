//! Fine stage: per-block binary segmentation, component boxes, image-block
//! suppression and non-maximum suppression, wired into the full non-text
//! detection pipeline.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifyError, RegionClassifier, IMAGE_VIEW};
use crate::eval::iou;
use crate::geometry::BBox;
use crate::layout::{detect_blocks, Block, BlockConfig, BlockKind, BlockSource, LayoutError};
use crate::pixelops::{
    align_forward_edges, binarize, gradient_map, label_components, to_grey, BinaryMap, PixelError,
};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Pixel(#[from] PixelError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    NonText,
    Text,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::NonText => "nontext",
            Channel::Text => "text",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nontext" => Ok(Channel::NonText),
            "text" => Ok(Channel::Text),
            other => Err(format!("unknown channel {other:?} (expected nontext or text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: String,
    pub confidence: f64,
    pub channel: Channel,
    /// Index into the block list the detection was found in, if any.
    pub source_block: Option<usize>,
}

impl Detection {
    pub fn new(bbox: BBox, label: impl Into<String>, confidence: f64, channel: Channel) -> Self {
        Self { bbox, label: label.into(), confidence, channel, source_block: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub blocks: BlockConfig,
    /// Smallest foreground component kept as an element candidate.
    pub component_min_area: usize,
    pub nms_threshold: f64,
    /// Let a non-heuristic classifier decide image vs widget for blocks.
    pub classifier_overrides_blocks: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            blocks: BlockConfig::default(),
            component_min_area: 25,
            nms_threshold: 0.5,
            classifier_overrides_blocks: true,
        }
    }
}

/// Crop of `binary` under the block's bbox.
pub fn segment_block(binary: &BinaryMap, block: &Block) -> Result<BinaryMap, PixelError> {
    binary.crop(&block.bbox)
}

/// Tight boxes of the 8-connected foreground components of `segment`, in
/// segment coordinates.
pub fn detect_regions_in_block(segment: &BinaryMap, min_area: usize) -> Vec<BBox> {
    let (_, comps) = label_components(segment, min_area);
    comps.into_iter().map(|c| c.bbox).collect()
}

fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.bbox.area().cmp(&a.bbox.area()))
        .then_with(|| (a.bbox.x0(), a.bbox.y0()).cmp(&(b.bbox.x0(), b.bbox.y0())))
}

/// Greedy non-maximum suppression. Detections are visited by descending
/// confidence (then larger area, then smaller `(x0, y0)`); one is dropped when
/// its IoU with an already kept detection exceeds `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d.clone());
        }
    }
    kept
}

/// Full non-text pipeline over one screenshot.
///
/// The whole screen acts as the outermost container, followed by every
/// widget-bearing block. Each container's slice of the binary map is split
/// into components whose boxes become candidates. Image blocks are reported
/// as a single `ImageView` and nothing inside them survives.
pub fn detect_nontext(
    image: &RgbImage,
    config: &PipelineConfig,
    classifier: &dyn RegionClassifier,
) -> Result<Vec<Detection>, DetectError> {
    let grey = to_grey(image)?;
    let screen = grey.bounds();
    let mut blocks = detect_blocks(&grey, &config.blocks)?;

    if config.classifier_overrides_blocks && classifier.scores_regions() {
        for block in &mut blocks {
            let verdict = classifier.classify(image, &block.bbox)?;
            block.kind = if verdict.label == IMAGE_VIEW { BlockKind::Image } else { BlockKind::WidgetBearing };
        }
    }

    let binary = binarize(&gradient_map(&grey), config.blocks.binarize_threshold);
    let image_boxes: Vec<BBox> =
        blocks.iter().filter(|b| b.kind == BlockKind::Image).map(|b| b.bbox).collect();

    let containers = std::iter::once((None, screen)).chain(
        blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BlockKind::WidgetBearing)
            .map(|(i, b)| (Some(i), b.bbox)),
    );

    // A flat block holding no other block is a widget in its own right. This
    // recovers widgets flush with the screen border, whose outer edges leave
    // no gradient. The flood-fill block with the most pixels is background.
    let background = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.source == BlockSource::FloodFill)
        .max_by_key(|(i, b)| (b.pixels.len(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i);
    let mut candidates: Vec<(Option<usize>, BBox)> = blocks
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            b.kind == BlockKind::WidgetBearing
                && b.source == BlockSource::FloodFill
                && Some(*i) != background
                && b.bbox != screen
                && !blocks.iter().enumerate().any(|(j, o)| j != *i && b.bbox.contains(&o.bbox))
        })
        .map(|(i, b)| (Some(i), b.bbox))
        .collect();
    for (source, area) in containers {
        let segment = binary.crop(&area)?;
        let local = BBox::from_dims(segment.width(), segment.height()).expect("non-empty segment");
        for b in detect_regions_in_block(&segment, config.component_min_area) {
            let b = align_forward_edges(&b, &local).translate(area.x0(), area.y0());
            // one-pixel lines are dividers or the inner edge of a flush widget
            if b.width().min(b.height()) < 2 || image_boxes.iter().any(|img| img.contains(&b)) {
                continue;
            }
            candidates.push((source, b));
        }
    }

    let mut detections = Vec::with_capacity(candidates.len() + image_boxes.len());
    for (i, block) in blocks.iter().enumerate().filter(|(_, b)| b.kind == BlockKind::Image) {
        let mut d = Detection::new(block.bbox, IMAGE_VIEW, 1.0, Channel::NonText);
        d.source_block = Some(i);
        detections.push(d);
    }
    for (source, bbox) in candidates {
        let verdict = classifier.classify(image, &bbox)?;
        let confidence = if classifier.scores_regions() { verdict.confidence } else { 1.0 };
        let mut d = Detection::new(bbox, verdict.label, confidence, Channel::NonText);
        d.source_block = source;
        detections.push(d);
    }

    Ok(nms(&detections, config.nms_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::HeuristicClassifier;
    use crate::pixelops::Contour;
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bb(x0: i32, y0: i32, x1: i32, y1: i32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(b: BBox, conf: f64) -> Detection {
        Detection::new(b, "Button", conf, Channel::NonText)
    }

    fn block(b: BBox) -> Block {
        Block {
            bbox: b,
            contour: Contour { points: vec![] },
            kind: BlockKind::WidgetBearing,
            source: crate::layout::BlockSource::FloodFill,
            pixels: vec![],
        }
    }

    fn paint(img: &mut RgbImage, b: BBox, c: [u8; 3]) {
        for y in b.y0()..b.y1() {
            for x in b.x0()..b.x1() {
                img.put_pixel(x as u32, y as u32, Rgb(c));
            }
        }
    }

    #[test]
    fn segment_full_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fg = (0..12 * 9).map(|_| rng.random_bool(0.4)).collect();
        let map = BinaryMap::new(12, 9, fg).unwrap();
        assert_eq!(segment_block(&map, &block(bb(0, 0, 12, 9))).unwrap(), map);
    }

    #[test]
    fn segment_of_white_map() {
        let map = BinaryMap::filled(30, 30, true).unwrap();
        let seg = segment_block(&map, &block(bb(5, 7, 15, 17))).unwrap();
        assert_eq!((seg.width(), seg.height()), (10, 10));
        assert_eq!(seg.count_foreground(), 100);
    }

    #[test]
    fn segment_offsets_match_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
            let fg = (0..w * h).map(|_| rng.random_bool(0.5)).collect();
            let map = BinaryMap::new(w, h, fg).unwrap();
            let x0 = rng.random_range(0..w) as i32;
            let y0 = rng.random_range(0..h) as i32;
            let x1 = rng.random_range(x0 + 1..=w as i32);
            let y1 = rng.random_range(y0 + 1..=h as i32);
            let seg = segment_block(&map, &block(bb(x0, y0, x1, y1))).unwrap();
            for y in 0..seg.height() {
                for x in 0..seg.width() {
                    assert_eq!(seg.get(x, y), map.get(x + x0 as usize, y + y0 as usize));
                }
            }
        }
    }

    #[test]
    fn segment_out_of_bounds() {
        let map = BinaryMap::filled(10, 10, false).unwrap();
        assert!(segment_block(&map, &block(bb(5, 5, 11, 10))).is_err());
    }

    #[test]
    fn regions_in_empty_segment() {
        assert!(detect_regions_in_block(&BinaryMap::filled(8, 8, false).unwrap(), 1).is_empty());
    }

    #[test]
    fn regions_of_hollow_outline_and_gapped_buttons() {
        let mut seg = BinaryMap::filled(40, 20, false).unwrap();
        for x in 2..20 {
            seg.set(x, 2, true);
            seg.set(x, 11, true);
        }
        for y in 2..12 {
            seg.set(2, y, true);
            seg.set(19, y, true);
        }
        assert_eq!(detect_regions_in_block(&seg, 1), vec![bb(2, 2, 20, 12)]);

        let mut two = BinaryMap::filled(40, 20, false).unwrap();
        for y in 5..15 {
            for x in 2..12 {
                two.set(x, y, true);
            }
            for x in 15..30 {
                two.set(x, y, true);
            }
        }
        assert_eq!(detect_regions_in_block(&two, 1), vec![bb(2, 5, 12, 15), bb(15, 5, 30, 15)]);
    }

    #[test]
    fn nms_examples() {
        let a = bb(0, 0, 10, 10);
        let kept = nms(&[det(a, 0.8), det(a, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);

        let disjoint = nms(&[det(a, 0.8), det(bb(20, 20, 30, 30), 0.9)], 0.5);
        assert_eq!(disjoint.len(), 2);

        let diag = nms(&[det(a, 0.8), det(bb(5, 5, 15, 15), 0.9)], 0.5);
        assert_eq!(diag.len(), 2);
    }

    #[test]
    fn nms_ties_prefer_larger_then_top_left() {
        let small = bb(1, 1, 10, 10);
        let large = bb(0, 0, 10, 10);
        let kept = nms(&[det(small, 1.0), det(large, 1.0)], 0.5);
        assert_eq!(kept.iter().map(|d| d.bbox).collect::<Vec<_>>(), vec![large]);

        let left = bb(0, 0, 10, 10);
        let right = bb(1, 0, 11, 10);
        let kept = nms(&[det(right, 1.0), det(left, 1.0)], 0.5);
        assert_eq!(kept[0].bbox, left);
    }

    #[test]
    fn nms_threshold_is_strict() {
        // IoU exactly 0.5: (0,0,10,10) vs (0,0,10,20) -> 100/200
        let kept = nms(&[det(bb(0, 0, 10, 10), 0.9), det(bb(0, 0, 10, 20), 0.8)], 0.5);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn single_button_is_detected_exactly() {
        let mut img = RgbImage::from_pixel(180, 320, Rgb([245, 245, 245]));
        let button = bb(40, 100, 140, 140);
        paint(&mut img, button, [20, 110, 220]);
        let dets = detect_nontext(&img, &PipelineConfig::default(), &HeuristicClassifier::default()).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        assert_eq!(dets[0].bbox, button);
        assert_eq!(dets[0].confidence, 1.0);
        assert_eq!(dets[0].channel, Channel::NonText);
    }

    #[test]
    fn button_on_screen_edge_is_detected_exactly() {
        let mut img = RgbImage::from_pixel(120, 200, Rgb([245, 245, 245]));
        let bar = bb(0, 0, 120, 30);
        paint(&mut img, bar, [40, 40, 40]);
        let dets = detect_nontext(&img, &PipelineConfig::default(), &HeuristicClassifier::default()).unwrap();
        assert_eq!(dets.iter().map(|d| d.bbox).collect::<Vec<_>>(), vec![bar]);
    }

    #[test]
    fn photo_screen_yields_single_image_view() {
        let mut img = RgbImage::new(90, 160);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for p in img.pixels_mut() {
            *p = Rgb(rng.random());
        }
        let dets = detect_nontext(&img, &PipelineConfig::default(), &HeuristicClassifier::default()).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        assert_eq!(dets[0].label, IMAGE_VIEW);
        assert_eq!(dets[0].bbox, bb(0, 0, 90, 160));
    }

    #[test]
    fn flat_screen_has_no_elements() {
        let img = RgbImage::from_pixel(50, 80, Rgb([10, 10, 10]));
        let dets = detect_nontext(&img, &PipelineConfig::default(), &HeuristicClassifier::default()).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn channel_tokens_round_trip() {
        for c in [Channel::NonText, Channel::Text] {
            assert_eq!(c.as_str().parse::<Channel>().unwrap(), c);
        }
        assert!("image".parse::<Channel>().is_err());
    }
}
