//! Region classification: a deterministic heuristic baseline and a
//! line-framed protocol for delegating to an external image classifier.
//!
//! Protocol v1 frames one JSON object per line in each direction:
//!
//! ```text
//! -> {"v":1,"w":W,"h":H,"bbox":[x0,y0,x1,y1],"png":"<base64 PNG of the crop>"}
//! <- {"v":1,"label":"Button","confidence":0.93}
//! ```
//!
//! The same frames travel over a local HTTP POST (request body / response
//! body) or over the stdin/stdout of a child process.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::pixelops::{self, gradient_density, GreyMap, PixelError};

pub const IMAGE_VIEW: &str = "ImageView";
pub const TEXT_VIEW: &str = "TextView";

pub const DEFAULT_CLASSES: [&str; 15] = [
    "Button",
    "CheckBox",
    "Chronometer",
    "EditText",
    "ImageButton",
    "ImageView",
    "ProgressBar",
    "RadioButton",
    "RatingBar",
    "SeekBar",
    "Spinner",
    "Switch",
    "TextView",
    "ToggleButton",
    "VideoView",
];

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("duplicate class name {0:?} in vocabulary")]
    DuplicateClass(String),
    #[error("invalid class name {0:?}")]
    InvalidClassName(String),
    #[error(transparent)]
    Pixel(#[from] PixelError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("classifier did not answer within {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered, duplicate-free list of element class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self, ClassifyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ClassifyError::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(ClassifyError::InvalidClassName(n.clone()));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(ClassifyError::DuplicateClass(n.clone()));
            }
        }
        Ok(Self { names, index })
    }

    /// One class per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned),
        )
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn first_of<'a>(&self, group: &[&'a str]) -> Option<&'a str> {
        group.iter().copied().find(|n| self.contains(n))
    }
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_CLASSES).expect("default vocabulary is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierVerdict {
    pub label: String,
    pub confidence: f64,
}

/// Anything that can name the element under a box.
pub trait RegionClassifier: Send + Sync {
    fn vocabulary(&self) -> &ClassVocabulary;

    fn classify(&self, image: &RgbImage, bbox: &BBox) -> Result<ClassifierVerdict, ClassifyError>;

    /// Whether verdict confidences are meaningful enough to rank detections.
    fn scores_regions(&self) -> bool {
        true
    }
}

const PROGRESS_GROUP: [&str; 2] = ["ProgressBar", "SeekBar"];
const SMALL_CONTROL_GROUP: [&str; 4] = ["CheckBox", "RadioButton", "Switch", "ToggleButton"];
const FALLBACK_GROUP: [&str; 2] = ["Button", TEXT_VIEW];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub binarize_threshold: u8,
    pub image_density: f64,
    pub bar_min_aspect: f64,
    /// Bars must be thinner than this fraction of the screen height.
    pub bar_max_height_fraction: f64,
    pub square_aspect: (f64, f64),
    /// Small controls cover less than this fraction of the screen.
    pub small_area_fraction: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 4,
            image_density: 0.35,
            bar_min_aspect: 4.0,
            bar_max_height_fraction: 0.05,
            square_aspect: (0.75, 1.33),
            small_area_fraction: 0.005,
        }
    }
}

/// Decision list over texture density and box shape. Verdicts carry a fixed
/// confidence of 0.5.
#[derive(Debug, Clone, Default)]
pub struct HeuristicClassifier {
    pub vocabulary: ClassVocabulary,
    pub config: HeuristicConfig,
}

pub const HEURISTIC_CONFIDENCE: f64 = 0.5;

impl HeuristicClassifier {
    pub fn new(vocabulary: ClassVocabulary, config: HeuristicConfig) -> Self {
        Self { vocabulary, config }
    }

    /// Same as [`RegionClassifier::classify`] on an already grey screen.
    pub fn classify_grey(&self, grey: &GreyMap, bbox: &BBox) -> Result<ClassifierVerdict, ClassifyError> {
        let density = gradient_density(grey, bbox, self.config.binarize_threshold)?;
        Ok(self.decide(density, bbox, grey.width(), grey.height()))
    }

    fn decide(&self, density: f64, bbox: &BBox, screen_w: usize, screen_h: usize) -> ClassifierVerdict {
        let (sw, sh) = (screen_w as f64, screen_h as f64);
        let (w, h) = (bbox.width() as f64, bbox.height() as f64);
        let aspect = w / h;
        let cfg = &self.config;
        let vocab = &self.vocabulary;

        let label = if density >= cfg.image_density && vocab.contains(IMAGE_VIEW) {
            IMAGE_VIEW
        } else if let Some(bar) = vocab
            .first_of(&PROGRESS_GROUP)
            .filter(|_| aspect >= cfg.bar_min_aspect && h < cfg.bar_max_height_fraction * sh)
        {
            bar
        } else if let Some(ctl) = vocab.first_of(&SMALL_CONTROL_GROUP).filter(|_| {
            (cfg.square_aspect.0..=cfg.square_aspect.1).contains(&aspect)
                && w * h < cfg.small_area_fraction * sw * sh
        }) {
            ctl
        } else {
            vocab.first_of(&FALLBACK_GROUP).unwrap_or(&vocab.names()[0])
        };
        ClassifierVerdict { label: label.to_owned(), confidence: HEURISTIC_CONFIDENCE }
    }
}

impl RegionClassifier for HeuristicClassifier {
    fn vocabulary(&self) -> &ClassVocabulary {
        &self.vocabulary
    }

    fn classify(&self, image: &RgbImage, bbox: &BBox) -> Result<ClassifierVerdict, ClassifyError> {
        let patch = pixelops::to_grey(&crop(image, bbox)?)?;
        let density = gradient_density(&patch, &patch.bounds(), self.config.binarize_threshold)?;
        Ok(self.decide(density, bbox, image.width() as usize, image.height() as usize))
    }

    fn scores_regions(&self) -> bool {
        false
    }
}

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolRequest {
    pub v: u32,
    pub w: u32,
    pub h: u32,
    pub bbox: [i32; 4],
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResponse {
    pub v: u32,
    pub label: String,
    pub confidence: f64,
}

fn crop(image: &RgbImage, bbox: &BBox) -> Result<RgbImage, ClassifyError> {
    let (iw, ih) = image.dimensions();
    if bbox.x0() < 0 || bbox.y0() < 0 || bbox.x1() as u32 > iw || bbox.y1() as u32 > ih {
        return Err(PixelError::OutOfBounds {
            bbox: *bbox,
            width: iw as usize,
            height: ih as usize,
        }
        .into());
    }
    Ok(image::imageops::crop_imm(
        image,
        bbox.x0() as u32,
        bbox.y0() as u32,
        bbox.width() as u32,
        bbox.height() as u32,
    )
    .to_image())
}

/// Build the request line (without trailing newline) for `bbox` of `image`.
pub fn encode_request(image: &RgbImage, bbox: &BBox) -> Result<String, ClassifyError> {
    let patch = crop(image, bbox)?;
    let mut png = Cursor::new(Vec::new());
    patch
        .write_to(&mut png, ImageFormat::Png)
        .map_err(|e| ClassifyError::Transport(format!("png encoding failed: {e}")))?;
    let req = ProtocolRequest {
        v: PROTOCOL_VERSION,
        w: patch.width(),
        h: patch.height(),
        bbox: bbox.as_array(),
        png: base64::engine::general_purpose::STANDARD.encode(png.into_inner()),
    };
    serde_json::to_string(&req).map_err(|e| ClassifyError::Protocol(e.to_string()))
}

/// Parse and validate one response line against `vocabulary`.
pub fn decode_response(line: &str, vocabulary: &ClassVocabulary) -> Result<ClassifierVerdict, ClassifyError> {
    let resp: ProtocolResponse = serde_json::from_str(line.trim())
        .map_err(|e| ClassifyError::Protocol(format!("malformed response: {e}")))?;
    if resp.v != PROTOCOL_VERSION {
        return Err(ClassifyError::Protocol(format!("unsupported protocol version {}", resp.v)));
    }
    if !vocabulary.contains(&resp.label) {
        return Err(ClassifyError::Protocol(format!("label {:?} is not in the vocabulary", resp.label)));
    }
    if !(0.0..=1.0).contains(&resp.confidence) {
        return Err(ClassifyError::Protocol(format!(
            "confidence {} is outside [0, 1]",
            resp.confidence
        )));
    }
    Ok(ClassifierVerdict { label: resp.label, confidence: resp.confidence })
}

/// Where the external classifier lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `http://host:port/path`; each request is one POST.
    Http(String),
    /// `exec:program arg...`; one long-lived child speaking over stdin/stdout.
    Subprocess { program: String, args: Vec<String> },
}

impl Endpoint {
    pub fn parse(spec: &str) -> Result<Self, ClassifyError> {
        let spec = spec.trim();
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(Endpoint::Http(spec.to_owned()));
        }
        if let Some(cmd) = spec.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace().map(str::to_owned);
            let program = parts
                .next()
                .ok_or_else(|| ClassifyError::Transport("empty exec: endpoint".into()))?;
            return Ok(Endpoint::Subprocess { program, args: parts.collect() });
        }
        Err(ClassifyError::Transport(format!(
            "endpoint {spec:?} must start with http://, https:// or exec:"
        )))
    }
}

enum Link {
    Http { url: String, agent: ureq::Agent },
    Child { child: Child, stdin: ChildStdin, lines: Receiver<std::io::Result<String>> },
}

impl Link {
    fn round_trip(&mut self, request: &str, timeout: Duration) -> Result<String, ClassifyError> {
        match self {
            Link::Http { url, agent } => {
                let mut resp = agent
                    .post(url.as_str())
                    .header("Content-Type", "application/x-ndjson")
                    .send(format!("{request}\n"))
                    .map_err(|e| match e {
                        ureq::Error::Timeout(_) => ClassifyError::Timeout(timeout),
                        other => ClassifyError::Transport(other.to_string()),
                    })?;
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| ClassifyError::Transport(e.to_string()))?;
                body.lines()
                    .find(|l| !l.trim().is_empty())
                    .map(str::to_owned)
                    .ok_or_else(|| ClassifyError::Protocol("empty response body".into()))
            }
            Link::Child { stdin, lines, .. } => {
                writeln!(stdin, "{request}")
                    .and_then(|_| stdin.flush())
                    .map_err(|e| ClassifyError::Transport(format!("write to classifier failed: {e}")))?;
                match lines.recv_timeout(timeout) {
                    Ok(Ok(line)) => Ok(line),
                    Ok(Err(e)) => Err(ClassifyError::Transport(e.to_string())),
                    Err(RecvTimeoutError::Timeout) => Err(ClassifyError::Timeout(timeout)),
                    Err(RecvTimeoutError::Disconnected) => {
                        Err(ClassifyError::Transport("classifier closed its output".into()))
                    }
                }
            }
        }
    }
}

impl Drop for Link {
    fn drop(&mut self) {
        if let Link::Child { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Client for an external classifier. Calls are serialized per endpoint.
pub struct ExternalClassifier {
    vocabulary: ClassVocabulary,
    timeout: Duration,
    link: Mutex<Link>,
}

impl ExternalClassifier {
    pub fn connect(
        endpoint: &Endpoint,
        vocabulary: ClassVocabulary,
        timeout: Duration,
    ) -> Result<Self, ClassifyError> {
        let link = match endpoint {
            Endpoint::Http(url) => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(timeout))
                    .http_status_as_error(true)
                    .build()
                    .into();
                Link::Http { url: url.clone(), agent }
            }
            Endpoint::Subprocess { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ClassifyError::Transport(format!("cannot start {program:?}: {e}")))?;
                let stdin = child.stdin.take().expect("stdin is piped");
                let stdout = child.stdout.take().expect("stdout is piped");
                let (tx, rx) = mpsc::channel();
                std::thread::spawn(move || {
                    for line in BufReader::new(stdout).lines() {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                Link::Child { child, stdin, lines: rx }
            }
        };
        Ok(Self { vocabulary, timeout, link: Mutex::new(link) })
    }
}

impl RegionClassifier for ExternalClassifier {
    fn vocabulary(&self) -> &ClassVocabulary {
        &self.vocabulary
    }

    fn classify(&self, image: &RgbImage, bbox: &BBox) -> Result<ClassifierVerdict, ClassifyError> {
        let request = encode_request(image, bbox)?;
        let line = {
            let mut link = self.link.lock().unwrap_or_else(|p| p.into_inner());
            link.round_trip(&request, self.timeout)?
        };
        decode_response(&line, &self.vocabulary)
    }
}

/// Classify the crop of `image` under `bbox` through `endpoint`.
pub fn classify_region_external(
    image: &RgbImage,
    bbox: &BBox,
    endpoint: &Endpoint,
    vocabulary: &ClassVocabulary,
    timeout: Duration,
) -> Result<ClassifierVerdict, ClassifyError> {
    ExternalClassifier::connect(endpoint, vocabulary.clone(), timeout)?.classify(image, bbox)
}

/// Classify with the built-in decision list.
pub fn classify_region_heuristic(
    image: &RgbImage,
    bbox: &BBox,
    vocabulary: &ClassVocabulary,
) -> Result<ClassifierVerdict, ClassifyError> {
    HeuristicClassifier::new(vocabulary.clone(), HeuristicConfig::default()).classify(image, bbox)
}
