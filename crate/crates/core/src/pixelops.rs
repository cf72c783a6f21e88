//! Pixel kernels: grey conversion, gradient binarization, flood fill,
//! connected-component labeling, border following and polygon approximation.

use std::collections::VecDeque;

use image::RgbImage;
use thiserror::Error;

use crate::geometry::{BBox, Point};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PixelError {
    #[error("image has zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("expected {expected} values for {width}x{height}, got {actual}")]
    LengthMismatch { width: usize, height: usize, expected: usize, actual: usize },
    #[error("component is empty")]
    EmptyComponent,
    #[error("region {bbox} lies outside the {width}x{height} map")]
    OutOfBounds { bbox: BBox, width: usize, height: usize },
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), PixelError> {
    if width == 0 || height == 0 {
        return Err(PixelError::ZeroDimension { width, height });
    }
    let expected = width * height;
    if len != expected {
        return Err(PixelError::LengthMismatch { width, height, expected, actual: len });
    }
    Ok(())
}

fn check_bbox(bbox: &BBox, width: usize, height: usize) -> Result<(), PixelError> {
    if bbox.x0() < 0 || bbox.y0() < 0 || bbox.x1() as usize > width || bbox.y1() as usize > height {
        return Err(PixelError::OutOfBounds { bbox: *bbox, width, height });
    }
    Ok(())
}

/// Row-major grid of 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyMap {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GreyMap {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, PixelError> {
        check_dims(width, height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, PixelError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }

    pub fn bounds(&self) -> BBox {
        BBox::from_dims(self.width, self.height).expect("dimensions are positive")
    }

    pub fn crop(&self, bbox: &BBox) -> Result<GreyMap, PixelError> {
        check_bbox(bbox, self.width, self.height)?;
        Ok(GreyMap {
            width: bbox.width() as usize,
            height: bbox.height() as usize,
            values: crop_rows(&self.values, self.width, bbox),
        })
    }
}

/// Row-major grid of foreground flags (`true` = white).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    foreground: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, foreground: Vec<bool>) -> Result<Self, PixelError> {
        check_dims(width, height, foreground.len())?;
        Ok(Self { width, height, foreground })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self, PixelError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.foreground[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.foreground[y * self.width + x] = v;
    }

    /// Out-of-map coordinates read as background.
    fn at(&self, p: Point) -> bool {
        p.x >= 0
            && p.y >= 0
            && (p.x as usize) < self.width
            && (p.y as usize) < self.height
            && self.foreground[p.y as usize * self.width + p.x as usize]
    }

    pub fn count_foreground(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn crop(&self, bbox: &BBox) -> Result<BinaryMap, PixelError> {
        check_bbox(bbox, self.width, self.height)?;
        Ok(BinaryMap {
            width: bbox.width() as usize,
            height: bbox.height() as usize,
            foreground: crop_rows(&self.foreground, self.width, bbox),
        })
    }
}

fn crop_rows<T: Copy>(values: &[T], width: usize, bbox: &BBox) -> Vec<T> {
    let (x0, x1) = (bbox.x0() as usize, bbox.x1() as usize);
    (bbox.y0() as usize..bbox.y1() as usize)
        .flat_map(|y| values[y * width + x0..y * width + x1].iter().copied())
        .collect()
}

/// Component ids per pixel; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn count(&self) -> u32 {
        self.count
    }
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// One labeled foreground component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub bbox: BBox,
    /// First pixel of the component in raster order.
    pub start: Point,
}

/// Closed outer boundary of a region, as ordered pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn bbox(&self) -> Option<BBox> {
        BBox::covering(&self.points)
    }

    /// Length of the closed polyline through the points.
    pub fn perimeter(&self) -> f64 {
        closed_length(&self.points)
    }

    pub fn translate(&self, dx: i32, dy: i32) -> Contour {
        Contour { points: self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect() }
    }
}

/// Pixels reached by one flood fill, stored as row-major indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub seed: Point,
    pub pixels: Vec<u32>,
    pub bbox: BBox,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// The region as a binary mask cropped to its bbox, together with the
    /// matching component (label 1) for border following.
    pub fn to_mask(&self, map_width: usize) -> (BinaryMap, Component) {
        let (bx, by) = (self.bbox.x0() as usize, self.bbox.y0() as usize);
        let (w, h) = (self.bbox.width() as usize, self.bbox.height() as usize);
        let mut fg = vec![false; w * h];
        let mut first = usize::MAX;
        for &idx in &self.pixels {
            let idx = idx as usize;
            let (x, y) = (idx % map_width - bx, idx / map_width - by);
            fg[y * w + x] = true;
            first = first.min(y * w + x);
        }
        let start = Point::new((first % w) as i32, (first / w) as i32);
        let mask = BinaryMap { width: w, height: h, foreground: fg };
        let bbox = BBox::from_dims(w, h).expect("region has pixels");
        (mask, Component { label: 1, area: self.pixels.len(), bbox, start })
    }
}

/// BT.601 luma, rounded to nearest.
pub fn to_grey(image: &RgbImage) -> Result<GreyMap, PixelError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(PixelError::ZeroDimension { width: w, height: h });
    }
    let values = image
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GreyMap::new(w, h, values)
}

/// L1 forward-difference gradient magnitude, saturated at 255. Pixels on the
/// right and bottom borders have no forward neighbor in that direction, which
/// contributes 0.
pub fn gradient_map(grey: &GreyMap) -> GreyMap {
    let (w, h) = (grey.width, grey.height);
    let g = &grey.values;
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = i32::from(g[i]);
            let dx = if x + 1 < w { (i32::from(g[i + 1]) - c).abs() } else { 0 };
            let dy = if y + 1 < h { (i32::from(g[i + w]) - c).abs() } else { 0 };
            out[i] = (dx + dy).min(255) as u8;
        }
    }
    GreyMap { width: w, height: h, values: out }
}

pub fn binarize(gradient: &GreyMap, threshold: u8) -> BinaryMap {
    BinaryMap {
        width: gradient.width,
        height: gradient.height,
        foreground: gradient.values.iter().map(|&v| v > threshold).collect(),
    }
}

/// Fraction of pixels inside `bbox` whose gradient, computed on the cropped
/// patch alone, exceeds `threshold`.
pub fn gradient_density(grey: &GreyMap, bbox: &BBox, threshold: u8) -> Result<f64, PixelError> {
    let patch = grey.crop(bbox)?;
    let grad = gradient_map(&patch);
    let over = grad.values.iter().filter(|&&v| v > threshold).count();
    Ok(over as f64 / grad.values.len() as f64)
}

/// Map the tight box of a forward-difference edge component back onto the
/// pixels it outlines.
///
/// A gradient pixel at `x` flags a change between `x` and `x + 1`, so the
/// left and top sides of an outline sit one pixel outside the shape while
/// the right and bottom sides sit on it. Sides touching `container` are
/// left alone: there the outline was clipped and no outside pixel exists.
pub fn align_forward_edges(bbox: &BBox, container: &BBox) -> BBox {
    let x0 = if bbox.x0() > container.x0() && bbox.width() > 1 { bbox.x0() + 1 } else { bbox.x0() };
    let y0 = if bbox.y0() > container.y0() && bbox.height() > 1 { bbox.y0() + 1 } else { bbox.y0() };
    BBox::new(x0, y0, bbox.x1(), bbox.y1()).expect("shrinks by at most one pixel per side")
}

/// Seed-relative flood fill with 4-connected growth. Seeds are taken in raster
/// order from pixels no earlier region has claimed. Regions smaller than
/// `min_area` are dropped but their pixels stay claimed.
pub fn flood_fill_regions(grey: &GreyMap, tolerance: u8, min_area: usize) -> Vec<Region> {
    let (w, h) = (grey.width, grey.height);
    let g = &grey.values;
    let mut visited = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..w * h {
        if visited[seed] {
            continue;
        }
        let seed_value = i32::from(g[seed]);
        let similar = |i: usize| (i32::from(g[i]) - seed_value).abs() <= i32::from(tolerance);

        visited[seed] = true;
        queue.push_back(seed);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            pixels.push(i as u32);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !visited[j] && similar(j) {
                    visited[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if pixels.len() >= min_area && !pixels.is_empty() {
            pixels.sort_unstable();
            let bbox = BBox::new(x0 as i32, y0 as i32, x1 as i32 + 1, y1 as i32 + 1)
                .expect("non-empty region");
            regions.push(Region {
                seed: Point::new((seed % w) as i32, (seed / w) as i32),
                pixels,
                bbox,
            });
        }
    }
    regions
}

fn find_root(parent: &mut [u32], mut x: u32) -> u32 {
    let mut root = x;
    while parent[root as usize] != root {
        root = parent[root as usize];
    }
    while parent[x as usize] != root {
        let next = parent[x as usize];
        parent[x as usize] = root;
        x = next;
    }
    root
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let ra = find_root(parent, a);
    let rb = find_root(parent, b);
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Two-pass 8-connected labeling with a union-find equivalence table.
///
/// Components below `min_area` are folded into the background. Surviving
/// components get consecutive ids starting at 1, in raster order of their
/// first pixel.
pub fn label_components(binary: &BinaryMap, min_area: usize) -> (LabelMap, Vec<Component>) {
    let (w, h) = (binary.width, binary.height);
    let fg = &binary.foreground;
    let mut provisional = vec![0u32; w * h];
    // parent[0] is unused so provisional labels can index directly
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !fg[i] {
                continue;
            }
            // already-scanned 8-neighbors: W, NW, N, NE
            let mut label = 0u32;
            let merge = |n: u32, label: &mut u32, parent: &mut Vec<u32>| {
                if n == 0 {
                    return;
                }
                *label = if *label == 0 { find_root(parent, n) } else { union(parent, *label, n) };
            };
            if x > 0 {
                merge(provisional[i - 1], &mut label, &mut parent);
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    merge(provisional[up - 1], &mut label, &mut parent);
                }
                merge(provisional[up], &mut label, &mut parent);
                if x + 1 < w {
                    merge(provisional[up + 1], &mut label, &mut parent);
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[i] = label;
        }
    }

    let n = parent.len();
    let mut area = vec![0usize; n];
    let mut roots = vec![0u32; n];
    for l in 1..n as u32 {
        roots[l as usize] = find_root(&mut parent, l);
    }
    for l in provisional.iter_mut().filter(|l| **l != 0) {
        *l = roots[*l as usize];
        area[*l as usize] += 1;
    }

    let mut final_id = vec![0u32; n];
    let mut components: Vec<Component> = Vec::new();
    let mut extents: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (i, l) in provisional.iter_mut().enumerate() {
        if *l == 0 {
            continue;
        }
        let root = *l as usize;
        if area[root] < min_area {
            *l = 0;
            continue;
        }
        let (x, y) = (i % w, i / w);
        if final_id[root] == 0 {
            components.push(Component {
                label: components.len() as u32 + 1,
                area: area[root],
                bbox: BBox::new(0, 0, 1, 1).expect("placeholder"),
                start: Point::new(x as i32, y as i32),
            });
            extents.push((x, y, x, y));
            final_id[root] = components.len() as u32;
        }
        let id = final_id[root];
        let e = &mut extents[id as usize - 1];
        e.0 = e.0.min(x);
        e.1 = e.1.min(y);
        e.2 = e.2.max(x);
        e.3 = e.3.max(y);
        *l = id;
    }
    for (c, e) in components.iter_mut().zip(&extents) {
        c.bbox = BBox::new(e.0 as i32, e.1 as i32, e.2 as i32 + 1, e.3 as i32 + 1)
            .expect("non-empty component");
    }

    let count = components.len() as u32;
    (LabelMap { width: w, height: h, labels: provisional, count }, components)
}

/// Neighbor offsets in clockwise screen order (y grows downward), starting east.
const RING: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn ring_index(from: Point, to: Point) -> usize {
    let d = (to.x - from.x, to.y - from.y);
    RING.iter().position(|&r| r == d).expect("points are 8-neighbors")
}

fn step(p: Point, dir: usize) -> Point {
    Point::new(p.x + RING[dir].0, p.y + RING[dir].1)
}

/// Outer border of `component`, followed Suzuki-Abe style from its first
/// raster pixel (whose west neighbor is background by construction).
///
/// Thin parts of a region are walked in both directions; a pixel visited
/// twice is kept once, at its first visit.
pub fn trace_contour(binary: &BinaryMap, component: &Component) -> Result<Contour, PixelError> {
    if component.area == 0 {
        return Err(PixelError::EmptyComponent);
    }
    let start = component.start;
    if !binary.at(start) {
        return Err(PixelError::EmptyComponent);
    }
    let west = ring_index(start, Point::new(start.x - 1, start.y));

    // clockwise search from the west neighbor for the first foreground pixel
    let Some(first) = (0..8).map(|k| step(start, (west + k) % 8)).find(|&p| binary.at(p)) else {
        return Ok(Contour { points: vec![start] });
    };

    let mut trace = Vec::new();
    let mut prev = first;
    let mut cur = start;
    loop {
        trace.push(cur);
        // counterclockwise from the element after `prev`
        let back = ring_index(cur, prev);
        let next = (1..=8)
            .map(|k| step(cur, (back + 8 - k) % 8))
            .find(|&p| binary.at(p))
            .expect("the pixel we came from is foreground");
        if next == start && cur == first {
            break;
        }
        prev = cur;
        cur = next;
    }

    let mut seen = std::collections::HashSet::with_capacity(trace.len());
    trace.retain(|p| seen.insert(*p));
    Ok(Contour { points: trace })
}

fn dist(a: Point, b: Point) -> f64 {
    f64::from(a.x - b.x).hypot(f64::from(a.y - b.y))
}

fn closed_length(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let open: f64 = points.windows(2).map(|w| dist(w[0], w[1])).sum();
    open + dist(points[points.len() - 1], points[0])
}

/// Distance from `p` to the segment `a`-`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (px, py) = (f64::from(p.x), f64::from(p.y));
    let (ax, ay) = (f64::from(a.x), f64::from(a.y));
    let (dx, dy) = (f64::from(b.x) - ax, f64::from(b.y) - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (px - ax).hypot(py - ay);
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
    (px - (ax + t * dx)).hypot(py - (ay + t * dy))
}

/// Douglas-Peucker on an open polyline. Returns the indices of kept points,
/// always including both endpoints. A point is kept when its distance to the
/// current chord exceeds `epsilon`.
pub fn simplify_polyline_indices(points: &[Point], epsilon: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut far, mut far_d) = (lo, -1.0f64);
        for (i, &p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = segment_distance(p, points[lo], points[hi]);
            if d > far_d {
                far = i;
                far_d = d;
            }
        }
        if far_d > epsilon {
            keep[far] = true;
            stack.push((lo, far));
            stack.push((far, hi));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

pub fn simplify_polyline(points: &[Point], epsilon: f64) -> Vec<Point> {
    simplify_polyline_indices(points, epsilon).into_iter().map(|i| points[i]).collect()
}

/// Douglas-Peucker on a closed contour. The ring is split at its first point
/// and the point farthest from it, and each half is simplified on its own.
pub fn approx_polygon(contour: &Contour, epsilon: f64) -> Vec<Point> {
    let pts = &contour.points;
    if pts.len() < 3 {
        return pts.clone();
    }
    let epsilon = epsilon.max(0.0);
    let (split, far_d) = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, dist(pts[0], p)))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if far_d == 0.0 {
        return vec![pts[0]];
    }
    let first_half = &pts[..=split];
    let mut second_half: Vec<Point> = pts[split..].to_vec();
    second_half.push(pts[0]);

    let mut out = simplify_polyline(first_half, epsilon);
    out.pop();
    let mut tail = simplify_polyline(&second_half, epsilon);
    tail.pop();
    out.extend(tail);
    out
}

pub const RECT_EPSILON_FRACTION: f64 = 0.02;
pub const RECT_MIN_FILL: f64 = 0.9;

/// A region is a rectangle when its outline approximates to four vertices at
/// 2% of its perimeter and it fills at least 90% of its bbox.
pub fn is_rectangle(contour: &Contour, component_area: usize) -> bool {
    let Some(bbox) = contour.bbox() else {
        return false;
    };
    let fill = component_area as f64 / bbox.area() as f64;
    if fill < RECT_MIN_FILL {
        return false;
    }
    let eps = RECT_EPSILON_FRACTION * contour.perimeter();
    approx_polygon(contour, eps).len() == 4
}
