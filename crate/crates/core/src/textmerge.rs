//! Merge text boxes from an external scene-text detector with non-text
//! detections.
//!
//! Text-box files start with the header `#uied-txt v1`. Each further line is
//! one record of whitespace-separated fields:
//!
//! ```text
//! x0 y0 x1 y1 [confidence ["text"]]
//! qx1 qy1 qx2 qy2 qx3 qy3 qx4 qy4 [confidence ["text"]]
//! ```
//!
//! Coordinates are real numbers. A quadrilateral is replaced by its
//! axis-aligned bounding box. The optional text is a JSON string literal.
//! Blank lines and lines starting with `#` are ignored.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::classify::{IMAGE_VIEW, TEXT_VIEW};
use crate::elements::{Channel, Detection};
use crate::geometry::BBox;

pub const TEXT_HEADER: &str = "#uied-txt v1";
pub const DISCARD_CONTAINMENT: f64 = 0.8;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextBox {
    pub bbox: BBox,
    pub text: Option<String>,
    pub confidence: f64,
}

type Record = (f64, f64, f64, f64, f64, Option<String>);

fn parse_record(line: &str) -> Result<Record, String> {
    let (numeric, text) = match line.find('"') {
        Some(q) => {
            let lit = line[q..].trim_end();
            let s: String =
                serde_json::from_str(lit).map_err(|e| format!("bad text literal {lit}: {e}"))?;
            (&line[..q], Some(s))
        }
        None => (line, None),
    };
    let nums = numeric
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("expected a number, got {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if nums.iter().any(|v| !v.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    let (coords, confidence) = match nums.len() {
        4 | 8 => (&nums[..], 1.0),
        5 | 9 => (&nums[..nums.len() - 1], nums[nums.len() - 1]),
        n => return Err(format!("expected 4 or 8 coordinates (plus optional confidence), got {n} numbers")),
    };
    if !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} is outside [0, 1]"));
    }
    let xs = coords.iter().step_by(2);
    let ys = coords.iter().skip(1).step_by(2);
    let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (y0, y1) = ys.fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok((x0, y0, x1, y1, confidence, text))
}

/// Parse a text-box file. When `bounds` is given every box is clipped to it
/// and boxes left without area are dropped.
pub fn parse_text_boxes<R: BufRead>(reader: R, bounds: Option<&BBox>) -> Result<Vec<TextBox>, TextError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if i == 0 && trimmed.starts_with("#uied-txt") && trimmed != TEXT_HEADER {
            return Err(TextError::Parse { line: 1, message: format!("unsupported header {trimmed:?}") });
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| TextError::Parse { line: lineno, message };
        let (x0, y0, x1, y1, confidence, text) = parse_record(trimmed).map_err(err)?;
        let bbox = BBox::new(x0.floor() as i32, y0.floor() as i32, x1.ceil() as i32, y1.ceil() as i32)
            .map_err(|e| err(e.to_string()))?;
        let bbox = match bounds {
            Some(b) => match bbox.clip(b) {
                Some(c) => c,
                None => continue,
            },
            None => bbox,
        };
        out.push(TextBox { bbox, text, confidence });
    }
    Ok(out)
}

pub fn load_text_boxes(path: &Path, bounds: Option<&BBox>) -> Result<Vec<TextBox>, TextError> {
    let file = std::fs::File::open(path)?;
    parse_text_boxes(std::io::BufReader::new(file), bounds)
}

/// Share of `text` covered by `widget`.
pub fn containment(text: &BBox, widget: &BBox) -> f64 {
    text.intersection_area(widget) as f64 / text.area() as f64
}

/// Keep every non-text detection; add each text box unless at least 80% of
/// it lies inside a non-text widget that is not an image.
pub fn merge_text(nontext: &[Detection], texts: &[TextBox]) -> Vec<Detection> {
    let widgets: Vec<&BBox> = nontext
        .iter()
        .filter(|d| d.channel == Channel::NonText && d.label != IMAGE_VIEW)
        .map(|d| &d.bbox)
        .collect();
    let mut out = nontext.to_vec();
    out.extend(
        texts
            .iter()
            .filter(|t| !widgets.iter().any(|w| containment(&t.bbox, w) >= DISCARD_CONTAINMENT))
            .map(|t| Detection::new(t.bbox, TEXT_VIEW, t.confidence, Channel::Text)),
    );
    out
}
