//! Line-oriented text formats for detections, ground truth and screen
//! manifests.
//!
//! Each file starts with a header line naming its format and version. Blank
//! lines and `#` comments are ignored, apart from `#screen` directives which
//! declare a screen even when it has no records:
//!
//! ```text
//! #uied-det v1
//! #screen <id>
//! <id> <x0> <y0> <x1> <y1> <label> <confidence> <channel>
//!
//! #uied-gt v1
//! #screen <id> <width> <height>
//! <id> <x0> <y0> <x1> <y1> <label> <channel>
//!
//! #uied-manifest v1
//! <id> <width> <height> <image path>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{GroundTruthElement, Screen};
use crate::elements::{Channel, Detection};
use crate::geometry::BBox;

pub const DETECTIONS_HEADER: &str = "#uied-det v1";
pub const GROUND_TRUTH_HEADER: &str = "#uied-gt v1";
pub const MANIFEST_HEADER: &str = "#uied-manifest v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot write {what} {value:?}: it is empty or contains whitespace")]
    BadToken { what: &'static str, value: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Detections = BTreeMap<String, Vec<Detection>>;

fn check_token(what: &'static str, value: &str) -> Result<(), FormatError> {
    if value.is_empty() || value.chars().any(char::is_whitespace) || value.starts_with('#') {
        return Err(FormatError::BadToken { what, value: value.to_owned() });
    }
    Ok(())
}

/// Iterate over meaningful lines, checking the header when the first line
/// looks like one of ours.
fn records<R: BufRead>(
    reader: R,
    header: &'static str,
) -> impl Iterator<Item = Result<(usize, String), FormatError>> {
    let family = header.split_whitespace().next().unwrap_or(header);
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        let t = line.trim();
        if i == 0 && t.starts_with(family) && t != header {
            return Some(Err(FormatError::Parse { line: 1, message: format!("unsupported header {t:?}, expected {header:?}") }));
        }
        if t.is_empty() || (t.starts_with('#') && !t.starts_with("#screen ")) {
            return None;
        }
        Some(Ok((i + 1, t.to_owned())))
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T, FormatError> {
    s.parse().map_err(|_| parse_err(line, format!("bad {name} {s:?}")))
}

fn parse_bbox(line: usize, f: &[&str]) -> Result<BBox, FormatError> {
    let c: Vec<i32> = f.iter().map(|s| parse_field(line, "coordinate", s)).collect::<Result<_, _>>()?;
    BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| parse_err(line, e.to_string()))
}

pub fn write_detections<W: Write>(mut w: W, dets: &Detections) -> Result<(), FormatError> {
    writeln!(w, "{DETECTIONS_HEADER}")?;
    for (id, list) in dets {
        check_token("screen id", id)?;
        writeln!(w, "#screen {id}")?;
        for d in list {
            check_token("label", &d.label)?;
            let [x0, y0, x1, y1] = d.bbox.as_array();
            writeln!(w, "{id} {x0} {y0} {x1} {y1} {} {} {}", d.label, d.confidence, d.channel)?;
        }
    }
    Ok(())
}

pub fn read_detections<R: BufRead>(reader: R) -> Result<Detections, FormatError> {
    let mut out = Detections::new();
    for rec in records(reader, DETECTIONS_HEADER) {
        let (line, text) = rec?;
        let f: Vec<&str> = text.split_whitespace().collect();
        if f[0] == "#screen" {
            if f.len() != 2 {
                return Err(parse_err(line, "expected `#screen <id>`"));
            }
            out.entry(f[1].to_owned()).or_default();
            continue;
        }
        if f.len() != 8 {
            return Err(parse_err(line, format!("expected 8 fields, got {}", f.len())));
        }
        let bbox = parse_bbox(line, &f[1..5])?;
        let confidence: f64 = parse_field(line, "confidence", f[6])?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_err(line, format!("confidence {confidence} is outside [0, 1]")));
        }
        let channel: Channel = parse_field(line, "channel", f[7])?;
        out.entry(f[0].to_owned()).or_default().push(Detection::new(bbox, f[5], confidence, channel));
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(mut w: W, screens: &[Screen]) -> Result<(), FormatError> {
    writeln!(w, "{GROUND_TRUTH_HEADER}")?;
    for s in screens {
        check_token("screen id", &s.id)?;
        writeln!(w, "#screen {} {} {}", s.id, s.width, s.height)?;
        for e in &s.elements {
            check_token("label", &e.label)?;
            let [x0, y0, x1, y1] = e.bbox.as_array();
            writeln!(w, "{} {x0} {y0} {x1} {y1} {} {}", s.id, e.label, e.channel)?;
        }
    }
    Ok(())
}

/// Screens in id order. Dimensions come from `#screen` directives; a screen
/// without one gets the extent of its elements.
pub fn read_ground_truth<R: BufRead>(reader: R) -> Result<Vec<Screen>, FormatError> {
    type Pending = (Option<(u32, u32)>, Vec<GroundTruthElement>);
    let mut screens: BTreeMap<String, Pending> = BTreeMap::new();
    for rec in records(reader, GROUND_TRUTH_HEADER) {
        let (line, text) = rec?;
        let f: Vec<&str> = text.split_whitespace().collect();
        if f[0] == "#screen" {
            if f.len() != 4 {
                return Err(parse_err(line, "expected `#screen <id> <width> <height>`"));
            }
            let w: u32 = parse_field(line, "width", f[2])?;
            let h: u32 = parse_field(line, "height", f[3])?;
            screens.entry(f[1].to_owned()).or_default().0 = Some((w, h));
            continue;
        }
        if f.len() != 7 {
            return Err(parse_err(line, format!("expected 7 fields, got {}", f.len())));
        }
        let bbox = parse_bbox(line, &f[1..5])?;
        let channel: Channel = parse_field(line, "channel", f[6])?;
        screens
            .entry(f[0].to_owned())
            .or_default()
            .1
            .push(GroundTruthElement { bbox, label: f[5].to_owned(), channel });
    }
    Ok(screens
        .into_iter()
        .map(|(id, (dims, elements))| {
            let (width, height) = dims.unwrap_or_else(|| {
                let x = elements.iter().map(|e| e.bbox.x1()).max().unwrap_or(0).max(0);
                let y = elements.iter().map(|e| e.bbox.y1()).max().unwrap_or(0).max(0);
                (x as u32, y as u32)
            });
            Screen { id, width, height, elements, image_path: None }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub image: PathBuf,
}

pub fn write_manifest<W: Write>(mut w: W, entries: &[ManifestEntry]) -> Result<(), FormatError> {
    writeln!(w, "{MANIFEST_HEADER}")?;
    for e in entries {
        check_token("screen id", &e.id)?;
        writeln!(w, "{} {} {} {}", e.id, e.width, e.height, e.image.display())?;
    }
    Ok(())
}

/// The image path is the remainder of the line, so it may contain spaces.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>, FormatError> {
    let mut out = Vec::new();
    for rec in records(reader, MANIFEST_HEADER) {
        let (line, text) = rec?;
        let mut parts = text.splitn(4, char::is_whitespace);
        let (Some(id), Some(w), Some(h), Some(path)) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(line, "expected `<id> <width> <height> <image path>`"));
        };
        out.push(ManifestEntry {
            id: id.to_owned(),
            width: parse_field(line, "width", w)?,
            height: parse_field(line, "height", h)?,
            image: PathBuf::from(path.trim()),
        });
    }
    Ok(out)
}
