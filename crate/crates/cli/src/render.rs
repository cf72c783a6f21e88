//! Burn detection boxes and labels into a copy of a screenshot.

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{Rgb, RgbImage};
use uied::elements::{Channel, Detection};

const PALETTE: [[u8; 3]; 6] =
    [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48], [145, 30, 180], [0, 128, 128]];
const TEXT_COLOUR: [u8; 3] = [255, 200, 0];

fn colour_for(d: &Detection) -> Rgb<u8> {
    if d.channel == Channel::Text {
        return Rgb(TEXT_COLOUR);
    }
    // stable per label
    let h = d.label.bytes().fold(0u32, |h, b| h.wrapping_mul(31).wrapping_add(u32::from(b)));
    Rgb(PALETTE[h as usize % PALETTE.len()])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_rect(img: &mut RgbImage, d: &Detection, thickness: i64, c: Rgb<u8>) {
    let [x0, y0, x1, y1] = d.bbox.as_array().map(i64::from);
    for t in 0..thickness {
        for x in x0..x1 {
            put(img, x, y0 + t, c);
            put(img, x, y1 - 1 - t, c);
        }
        for y in y0..y1 {
            put(img, x0 + t, y, c);
            put(img, x1 - 1 - t, y, c);
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, fg: Rgb<u8>) {
    let w = text.chars().count() as i64 * 8;
    for yy in y..y + 10 {
        for xx in x..x + w + 2 {
            put(img, xx, yy, Rgb([0, 0, 0]));
        }
    }
    for (i, ch) in text.chars().enumerate() {
        let glyph = BASIC_FONTS.get(ch).or_else(|| BASIC_FONTS.get('?')).unwrap_or([0; 8]);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) != 0 {
                    put(img, x + 1 + i as i64 * 8 + col, y + 1 + row as i64, fg);
                }
            }
        }
    }
}

/// A copy of `image` with every detection outlined and labelled. The output
/// always has the input's dimensions.
pub fn annotate(image: &RgbImage, detections: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    for d in detections {
        draw_rect(&mut out, d, 2, colour_for(d));
    }
    for d in detections {
        let [x0, y0, ..] = d.bbox.as_array().map(i64::from);
        let y = if y0 >= 10 { y0 - 10 } else { y0 + 2 };
        draw_text(&mut out, &d.label, x0, y, colour_for(d));
    }
    out
}
