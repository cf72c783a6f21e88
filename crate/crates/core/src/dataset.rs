//! Ground truth: Rico-style hierarchy import, screen-level filtering, system
//! bar removal, and a seeded generator of synthetic screens with exact
//! ground truth.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::classify::{ClassVocabulary, IMAGE_VIEW, TEXT_VIEW};
use crate::elements::Channel;
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot parse hierarchy {path}: {message}")]
    Parse { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot strip {status_px}+{nav_px} rows from a screen {height} px tall")]
    CropTooLarge { status_px: u32, nav_px: u32, height: u32 },
    #[error("synthetic spec is unsatisfiable: {0}")]
    Unsatisfiable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthElement {
    pub bbox: BBox,
    pub label: String,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub elements: Vec<GroundTruthElement>,
    pub image_path: Option<PathBuf>,
}

impl Screen {
    pub fn bounds(&self) -> BBox {
        BBox::from_dims(self.width as usize, self.height as usize).expect("screen has area")
    }
}

/// Maps hierarchy class names to element classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    /// Keyed by simple class name (text after the last `.`).
    pub aliases: HashMap<String, String>,
    /// Simple class names that only arrange children.
    pub layout_classes: Vec<String>,
}

impl Default for ClassMap {
    fn default() -> Self {
        let aliases = [
            ("CheckedTextView", "TextView"),
            ("AutoCompleteTextView", "EditText"),
            ("MultiAutoCompleteTextView", "EditText"),
            ("TextInputEditText", "EditText"),
            ("SearchView", "EditText"),
            ("SwitchCompat", "Switch"),
            ("SwitchMaterial", "Switch"),
            ("FloatingActionButton", "ImageButton"),
            ("CircleImageView", "ImageView"),
            ("RoundedImageView", "ImageView"),
            ("NetworkImageView", "ImageView"),
            ("MaterialButton", "Button"),
            ("CompoundButton", "CheckBox"),
            ("AppCompatSpinner", "Spinner"),
            ("TextClock", "Chronometer"),
            ("SurfaceView", "VideoView"),
        ];
        let layouts = [
            "View",
            "ViewGroup",
            "ScrollView",
            "HorizontalScrollView",
            "NestedScrollView",
            "ListView",
            "GridView",
            "RecyclerView",
            "ViewPager",
            "ViewStub",
            "ViewFlipper",
            "ViewAnimator",
            "TabHost",
            "DrawerLayout",
            "Toolbar",
            "ActionBarContainer",
            "ActionBarOverlayLayout",
        ];
        Self {
            aliases: aliases.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect(),
            layout_classes: layouts.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}

impl ClassMap {
    fn simple_name(class: &str) -> &str {
        class.rsplit(['.', '$']).next().unwrap_or(class)
    }

    fn is_layout(&self, simple: &str) -> bool {
        simple.ends_with("Layout") || self.layout_classes.iter().any(|l| l == simple)
    }

    /// Element class for a hierarchy class name, or `None` for layout-only
    /// classes.
    pub fn resolve(&self, class: &str, vocabulary: &ClassVocabulary) -> Option<String> {
        let simple = Self::simple_name(class);
        if let Some(mapped) = self.aliases.get(simple) {
            return Some(mapped.clone());
        }
        if self.is_layout(simple) {
            return None;
        }
        let stripped = simple.strip_prefix("AppCompat").unwrap_or(simple);
        if vocabulary.contains(stripped) {
            return Some(stripped.to_owned());
        }
        if self.is_layout(stripped) {
            return None;
        }
        Some(simple.to_owned())
    }
}

fn channel_of(label: &str) -> Channel {
    if label == TEXT_VIEW {
        Channel::Text
    } else {
        Channel::NonText
    }
}

fn node_visible(node: &Value) -> bool {
    let flag = |k: &str| node.get(k).and_then(Value::as_bool);
    if flag("visible-to-user") == Some(false) || flag("visible") == Some(false) {
        return false;
    }
    match node.get("visibility").and_then(Value::as_str) {
        Some(v) => v.eq_ignore_ascii_case("visible"),
        None => true,
    }
}

fn node_bounds(node: &Value) -> Option<[i64; 4]> {
    let arr = node.get("bounds")?.as_array()?;
    if arr.len() != 4 {
        return None;
    }
    let mut out = [0i64; 4];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v.as_f64()?.round() as i64;
    }
    Some(out)
}

fn collect_leaves(
    node: &Value,
    screen: &BBox,
    classes: &ClassMap,
    vocabulary: &ClassVocabulary,
    out: &mut Vec<GroundTruthElement>,
) {
    if !node.is_object() || !node_visible(node) {
        return;
    }
    let children: Vec<&Value> = node
        .get("children")
        .and_then(Value::as_array)
        .map(|c| c.iter().filter(|v| v.is_object()).collect())
        .unwrap_or_default();
    if !children.is_empty() {
        for child in children {
            collect_leaves(child, screen, classes, vocabulary, out);
        }
        return;
    }
    let Some(class) = node.get("class").and_then(Value::as_str) else {
        return;
    };
    let Some(label) = classes.resolve(class, vocabulary) else {
        return;
    };
    let Some([x0, y0, x1, y1]) = node_bounds(node) else {
        return;
    };
    let fits = |v: i64| i32::try_from(v).ok();
    let (Some(x0), Some(y0), Some(x1), Some(y1)) = (fits(x0), fits(y0), fits(x1), fits(y1)) else {
        return;
    };
    let Ok(bbox) = BBox::new(x0, y0, x1, y1) else {
        return;
    };
    if !screen.contains(&bbox) {
        return;
    }
    out.push(GroundTruthElement { bbox, channel: channel_of(&label), label });
}

/// Build a screen from a hierarchy document.
///
/// Nodes are JSON objects with `class`, `bounds` (`[x0, y0, x1, y1]`),
/// optional visibility (`visible`, `visible-to-user` or `visibility`) and
/// `children`. A raw Rico dump (`{"activity": {"root": ...}}`) is accepted as
/// well. Visible leaves become elements; invisible nodes hide their subtree;
/// layout-only leaves and leaves with invalid or off-screen bounds are
/// dropped.
pub fn parse_hierarchy(
    text: &str,
    id: &str,
    width: u32,
    height: u32,
    classes: &ClassMap,
    vocabulary: &ClassVocabulary,
) -> Result<Screen, DatasetError> {
    let parse_err = |message: String| DatasetError::Parse { path: id.to_owned(), message };
    let doc: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let root = doc.pointer("/activity/root").unwrap_or(&doc);
    if !root.is_object() {
        return Err(parse_err("root node is not an object".into()));
    }
    let screen = BBox::from_dims(width as usize, height as usize)
        .map_err(|_| parse_err(format!("screen dimensions {width}x{height} are empty")))?;
    let mut elements = Vec::new();
    collect_leaves(root, &screen, classes, vocabulary, &mut elements);
    Ok(Screen { id: id.to_owned(), width, height, elements, image_path: None })
}

/// Read a hierarchy file; the screen id is the file stem.
pub fn import_hierarchy(
    path: &Path,
    width: u32,
    height: u32,
    classes: &ClassMap,
    vocabulary: &ClassVocabulary,
) -> Result<Screen, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    parse_hierarchy(&text, &id, width, height, classes, vocabulary).map_err(|e| match e {
        DatasetError::Parse { message, .. } => DatasetError::Parse { path: path.display().to_string(), message },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    NoVisibleLeaves,
    TextOnly,
    NonTextOnly,
}

impl Reason {
    pub fn code(&self) -> &'static str {
        match self {
            Reason::NoVisibleLeaves => "no-visible-leaves",
            Reason::TextOnly => "text-only",
            Reason::NonTextOnly => "nontext-only",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Screen>,
    pub rejected: Vec<(String, Reason)>,
    /// Screens with a single channel. They are kept unless the caller asked
    /// for them to be rejected, in which case they also appear in `rejected`.
    pub flagged: Vec<(String, Reason)>,
}

/// Drop screens without elements; flag (and optionally reject) screens whose
/// elements are all text or all non-text.
pub fn filter_corpus(screens: Vec<Screen>, reject_single_channel: bool) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for s in screens {
        if s.elements.is_empty() {
            out.rejected.push((s.id, Reason::NoVisibleLeaves));
            continue;
        }
        let texts = s.elements.iter().filter(|e| e.channel == Channel::Text).count();
        let flag = if texts == s.elements.len() {
            Some(Reason::TextOnly)
        } else if texts == 0 {
            Some(Reason::NonTextOnly)
        } else {
            None
        };
        match flag {
            Some(r) => {
                out.flagged.push((s.id.clone(), r));
                if reject_single_channel {
                    out.rejected.push((s.id, r));
                } else {
                    out.kept.push(s);
                }
            }
            None => out.kept.push(s),
        }
    }
    out
}

/// Remove `status_px` rows from the top and `nav_px` rows from the bottom.
/// Elements inside the removed bands vanish; straddling ones are clipped.
pub fn strip_system_bars(screen: &Screen, status_px: u32, nav_px: u32) -> Result<Screen, DatasetError> {
    if u64::from(status_px) + u64::from(nav_px) >= u64::from(screen.height) {
        return Err(DatasetError::CropTooLarge { status_px, nav_px, height: screen.height });
    }
    let height = screen.height - status_px - nav_px;
    let bounds = BBox::from_dims(screen.width as usize, height as usize).expect("positive height");
    let elements = screen
        .elements
        .iter()
        .filter_map(|e| {
            let moved = e.bbox.translate(0, -(status_px as i32));
            moved.clip(&bounds).map(|bbox| GroundTruthElement { bbox, ..e.clone() })
        })
        .collect();
    Ok(Screen { height, elements, ..screen.clone() })
}

/// Parameters for [`synth_generate`]. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub widgets: (u32, u32),
    pub widget_width: (u32, u32),
    pub widget_height: (u32, u32),
    /// Minimum empty pixels between any two drawn items.
    pub min_gap: u32,
    /// Minimum empty pixels between drawn items and the screen edge.
    pub margin: u32,
    /// Minimum grey-level difference between any item colour and the background.
    pub contrast: u8,
    /// Number of noise-textured picture blocks.
    pub photos: u32,
    pub photo_width: (u32, u32),
    pub photo_height: (u32, u32),
    pub background: Option<[u8; 3]>,
    pub palette: Option<Vec<[u8; 3]>>,
    pub placement_attempts: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 360,
            height: 640,
            widgets: (4, 8),
            widget_width: (24, 200),
            widget_height: (16, 72),
            min_gap: 4,
            margin: 4,
            contrast: 40,
            photos: 0,
            photo_width: (80, 240),
            photo_height: (60, 180),
            background: None,
            palette: None,
            placement_attempts: 2000,
        }
    }
}

fn luma(c: [u8; 3]) -> u8 {
    let y = 0.299 * f64::from(c[0]) + 0.587 * f64::from(c[1]) + 0.114 * f64::from(c[2]);
    y.round().clamp(0.0, 255.0) as u8
}

fn check_range(name: &str, r: (u32, u32)) -> Result<(), DatasetError> {
    if r.0 == 0 && !name.ends_with("count") || r.0 > r.1 {
        return Err(DatasetError::Unsatisfiable(format!("{name} range {r:?} is empty or zero")));
    }
    Ok(())
}

/// Class name the generator gives a widget of this size.
fn widget_label(w: u32, h: u32, screen_w: u32, screen_h: u32) -> &'static str {
    let aspect = f64::from(w) / f64::from(h);
    let screen = f64::from(screen_w) * f64::from(screen_h);
    if aspect >= 4.0 && f64::from(h) < 0.05 * f64::from(screen_h) {
        "ProgressBar"
    } else if (0.75..=1.33).contains(&aspect) && f64::from(w * h) < 0.005 * screen {
        "CheckBox"
    } else {
        "Button"
    }
}

/// Render a synthetic screen: flat axis-aligned widgets (and optional noise
/// pictures) on a flat background. The same seed always yields the same
/// pixels and ground truth.
pub fn synth_generate(seed: u64, spec: &SynthSpec) -> Result<(RgbImage, Screen), DatasetError> {
    let unsat = |m: String| DatasetError::Unsatisfiable(m);
    if spec.width == 0 || spec.height == 0 {
        return Err(unsat("screen has zero dimension".into()));
    }
    check_range("widget count", spec.widgets)?;
    check_range("widget width", spec.widget_width)?;
    check_range("widget height", spec.widget_height)?;
    if spec.photos > 0 {
        check_range("photo width", spec.photo_width)?;
        check_range("photo height", spec.photo_height)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let background = spec.background.unwrap_or_else(|| rng.random());
    let bg_luma = i32::from(luma(background));
    let contrast = i32::from(spec.contrast);
    let far_enough = |c: [u8; 3]| (i32::from(luma(c)) - bg_luma).abs() >= contrast;
    let palette: Option<Vec<[u8; 3]>> =
        spec.palette.as_ref().map(|p| p.iter().copied().filter(|&c| far_enough(c)).collect());
    match &palette {
        Some(p) if p.is_empty() => {
            return Err(unsat(format!("no palette colour is {contrast} grey levels from the background")))
        }
        None if bg_luma.max(255 - bg_luma) < contrast => {
            return Err(unsat(format!("no colour can be {contrast} grey levels from background luma {bg_luma}")))
        }
        _ => {}
    }

    let avail_w = spec.width.saturating_sub(2 * spec.margin);
    let avail_h = spec.height.saturating_sub(2 * spec.margin);
    let fits = |w: (u32, u32), h: (u32, u32)| w.0 <= avail_w && h.0 <= avail_h;
    if spec.widgets.1 > 0 && !fits(spec.widget_width, spec.widget_height) {
        return Err(unsat("smallest widget does not fit on the screen".into()));
    }
    if spec.photos > 0 && !fits(spec.photo_width, spec.photo_height) {
        return Err(unsat("smallest photo does not fit on the screen".into()));
    }

    let gap = spec.min_gap as i32;
    let mut placed: Vec<BBox> = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng, wr: (u32, u32), hr: (u32, u32)| -> Option<BBox> {
        let wr = (wr.0, wr.1.min(avail_w));
        let hr = (hr.0, hr.1.min(avail_h));
        for _ in 0..spec.placement_attempts.max(1) {
            let w = rng.random_range(wr.0..=wr.1);
            let h = rng.random_range(hr.0..=hr.1);
            let x = rng.random_range(spec.margin..=spec.width - spec.margin - w) as i32;
            let y = rng.random_range(spec.margin..=spec.height - spec.margin - h) as i32;
            let b = BBox::new(x, y, x + w as i32, y + h as i32).expect("positive size");
            let clear = placed.iter().all(|p| {
                b.x0() >= p.x1() + gap || p.x0() >= b.x1() + gap || b.y0() >= p.y1() + gap || p.y0() >= b.y1() + gap
            });
            if clear {
                placed.push(b);
                return Some(b);
            }
        }
        None
    };

    let mut img = RgbImage::from_pixel(spec.width, spec.height, Rgb(background));
    let mut elements = Vec::new();

    for i in 0..spec.photos {
        let b = place(&mut rng, spec.photo_width, spec.photo_height)
            .ok_or_else(|| unsat(format!("could not place photo {} of {}", i + 1, spec.photos)))?;
        for y in b.y0()..b.y1() {
            for x in b.x0()..b.x1() {
                img.put_pixel(x as u32, y as u32, Rgb(rng.random()));
            }
        }
        elements.push(GroundTruthElement { bbox: b, label: IMAGE_VIEW.to_owned(), channel: Channel::NonText });
    }

    let count = rng.random_range(spec.widgets.0..=spec.widgets.1);
    for i in 0..count {
        let b = place(&mut rng, spec.widget_width, spec.widget_height)
            .ok_or_else(|| unsat(format!("could not place widget {} of {count}", i + 1)))?;
        let colour = match &palette {
            Some(p) => p[rng.random_range(0..p.len())],
            None => loop {
                let c: [u8; 3] = rng.random();
                if far_enough(c) {
                    break c;
                }
            },
        };
        for y in b.y0()..b.y1() {
            for x in b.x0()..b.x1() {
                img.put_pixel(x as u32, y as u32, Rgb(colour));
            }
        }
        let label = widget_label(b.width() as u32, b.height() as u32, spec.width, spec.height);
        elements.push(GroundTruthElement { bbox: b, label: label.to_owned(), channel: Channel::NonText });
    }

    let screen = Screen {
        id: format!("synth-{seed}"),
        width: spec.width,
        height: spec.height,
        elements,
        image_path: None,
    };
    Ok((img, screen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::iou;

    fn bb(x0: i32, y0: i32, x1: i32, y1: i32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn parse(json: &str) -> Screen {
        parse_hierarchy(json, "s", 1440, 2560, &ClassMap::default(), &ClassVocabulary::default()).unwrap()
    }

    #[test]
    fn single_visible_button() {
        let s = parse(r#"{"class":"android.widget.Button","bounds":[10,20,200,80],"visible-to-user":true}"#);
        assert_eq!(s.elements.len(), 1);
        assert_eq!(s.elements[0].label, "Button");
        assert_eq!(s.elements[0].bbox, bb(10, 20, 200, 80));
        assert_eq!(s.elements[0].channel, Channel::NonText);
    }

    #[test]
    fn zero_width_leaf_is_dropped() {
        let s = parse(r#"{"class":"android.widget.Button","bounds":[50,50,50,80]}"#);
        assert!(s.elements.is_empty());
    }

    #[test]
    fn invisible_leaves_and_layouts_are_dropped() {
        let s = parse(
            r#"{"class":"android.widget.LinearLayout","bounds":[0,0,1440,2560],"children":[
                {"class":"android.widget.TextView","bounds":[0,0,100,50],"visible-to-user":true},
                {"class":"android.support.v7.widget.AppCompatImageView","bounds":[0,60,100,160]},
                {"class":"android.widget.Button","bounds":[0,200,100,250],"visibility":"visible"},
                {"class":"android.widget.Button","bounds":[0,300,100,350],"visible-to-user":false},
                {"class":"android.widget.FrameLayout","bounds":[0,400,100,450]},
                null
            ]}"#,
        );
        let labels: Vec<_> = s.elements.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, vec!["TextView", "ImageView", "Button"]);
        assert_eq!(s.elements[0].channel, Channel::Text);
    }

    #[test]
    fn invisible_container_hides_subtree() {
        let s = parse(
            r#"{"class":"android.widget.FrameLayout","bounds":[0,0,10,10],"visibility":"gone","children":[
                {"class":"android.widget.Button","bounds":[0,0,5,5]}]}"#,
        );
        assert!(s.elements.is_empty());
    }

    #[test]
    fn off_screen_leaf_is_dropped_and_rico_wrapper_accepted() {
        let s = parse(
            r#"{"activity":{"root":{"class":"X","bounds":[0,0,1440,2560],"children":[
                {"class":"android.widget.Button","bounds":[1400,0,1500,50]},
                {"class":"android.widget.Spinner","bounds":[0,0,300,90]}]}}}"#,
        );
        assert_eq!(s.elements.len(), 1);
        assert_eq!(s.elements[0].label, "Spinner");
    }

    #[test]
    fn unparseable_hierarchy_errors() {
        let r = parse_hierarchy("{nope", "s", 10, 10, &ClassMap::default(), &ClassVocabulary::default());
        assert!(matches!(r, Err(DatasetError::Parse { .. })));
    }

    fn screen_with(elements: Vec<(BBox, &str)>) -> Screen {
        Screen {
            id: "x".into(),
            width: 100,
            height: 200,
            elements: elements
                .into_iter()
                .map(|(b, l)| GroundTruthElement { bbox: b, label: l.into(), channel: channel_of(l) })
                .collect(),
            image_path: None,
        }
    }

    #[test]
    fn corpus_filtering() {
        let mut mixed = screen_with(vec![
            (bb(0, 0, 5, 5), "TextView"),
            (bb(0, 10, 5, 15), "TextView"),
            (bb(0, 20, 5, 25), "Button"),
            (bb(0, 30, 5, 35), "Button"),
            (bb(0, 40, 5, 45), "Switch"),
        ]);
        mixed.id = "mixed".into();
        let mut empty = screen_with(vec![]);
        empty.id = "empty".into();
        let mut text = screen_with(vec![(bb(0, 0, 5, 5), "TextView")]);
        text.id = "text".into();

        let out = filter_corpus(vec![mixed.clone(), empty.clone(), text.clone()], false);
        assert_eq!(out.kept.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), vec!["mixed", "text"]);
        assert_eq!(out.rejected, vec![("empty".to_owned(), Reason::NoVisibleLeaves)]);
        assert_eq!(out.flagged, vec![("text".to_owned(), Reason::TextOnly)]);
        assert_eq!(Reason::NoVisibleLeaves.code(), "no-visible-leaves");

        let strict = filter_corpus(vec![mixed, empty, text], true);
        assert_eq!(strict.kept.len(), 1);
        assert_eq!(strict.rejected.len(), 2);
    }

    #[test]
    fn strip_bars() {
        let s = screen_with(vec![
            (bb(0, 0, 50, 20), "Button"),   // inside status band
            (bb(0, 34, 50, 74), "Button"),  // status_px + 10 .. status_px + 50
            (bb(0, 10, 50, 40), "Button"),  // straddles
            (bb(0, 186, 50, 200), "Button"), // inside nav band
        ]);
        let out = strip_system_bars(&s, 24, 16).unwrap();
        assert_eq!(out.height, 160);
        let boxes: Vec<_> = out.elements.iter().map(|e| e.bbox).collect();
        assert_eq!(boxes, vec![bb(0, 10, 50, 50), bb(0, 0, 50, 16)]);
        assert_eq!(strip_system_bars(&s, 0, 0).unwrap(), s);
        assert!(matches!(strip_system_bars(&s, 150, 50), Err(DatasetError::CropTooLarge { .. })));
    }

    #[test]
    fn synth_single_widget_renders_exactly() {
        let spec = SynthSpec { widgets: (1, 1), ..SynthSpec::default() };
        let (img, screen) = synth_generate(1, &spec).unwrap();
        assert_eq!(screen.elements.len(), 1);
        let b = screen.elements[0].bbox;
        let bg = *img.get_pixel(0, 0);
        let fg = *img.get_pixel(b.x0() as u32, b.y0() as u32);
        assert_ne!(bg, fg);
        for (x, y, p) in img.enumerate_pixels() {
            let inside = b.contains_point(crate::geometry::Point::new(x as i32, y as i32));
            assert_eq!(*p, if inside { fg } else { bg });
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec { photos: 1, ..SynthSpec::default() };
        let a = synth_generate(99, &spec).unwrap();
        let b = synth_generate(99, &spec).unwrap();
        assert_eq!(a.0.as_raw(), b.0.as_raw());
        assert_eq!(a.1, b.1);
        assert_ne!(synth_generate(100, &spec).unwrap().0.as_raw(), a.0.as_raw());
    }

    #[test]
    fn synth_eight_widgets_do_not_overlap() {
        let spec = SynthSpec { widgets: (8, 8), ..SynthSpec::default() };
        let (img, screen) = synth_generate(7, &spec).unwrap();
        assert_eq!(screen.elements.len(), 8);
        let bg = luma(img.get_pixel(0, 0).0);
        for (i, a) in screen.elements.iter().enumerate() {
            let c = luma(img.get_pixel(a.bbox.x0() as u32, a.bbox.y0() as u32).0);
            assert!((i32::from(c) - i32::from(bg)).abs() >= 40);
            for b in &screen.elements[i + 1..] {
                assert_eq!(iou(&a.bbox, &b.bbox), 0.0);
                let sep_x = (b.bbox.x0() - a.bbox.x1()).max(a.bbox.x0() - b.bbox.x1());
                let sep_y = (b.bbox.y0() - a.bbox.y1()).max(a.bbox.y0() - b.bbox.y1());
                assert!(sep_x.max(sep_y) >= 4);
            }
        }
    }

    #[test]
    fn synth_unsatisfiable_specs() {
        let too_big = SynthSpec { widget_width: (400, 500), ..SynthSpec::default() };
        assert!(matches!(synth_generate(1, &too_big), Err(DatasetError::Unsatisfiable(_))));
        let crowded = SynthSpec {
            widgets: (50, 50),
            widget_width: (150, 150),
            widget_height: (150, 150),
            placement_attempts: 50,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(1, &crowded), Err(DatasetError::Unsatisfiable(_))));
        let grey_bg = SynthSpec { background: Some([128, 128, 128]), contrast: 200, ..SynthSpec::default() };
        assert!(matches!(synth_generate(1, &grey_bg), Err(DatasetError::Unsatisfiable(_))));
        let bad_palette = SynthSpec {
            background: Some([255, 255, 255]),
            palette: Some(vec![[250, 250, 250]]),
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(1, &bad_palette), Err(DatasetError::Unsatisfiable(_))));
    }

    #[test]
    fn synth_zero_widgets_is_allowed() {
        let spec = SynthSpec { widgets: (0, 0), ..SynthSpec::default() };
        let (_, screen) = synth_generate(3, &spec).unwrap();
        assert!(screen.elements.is_empty());
    }
}
