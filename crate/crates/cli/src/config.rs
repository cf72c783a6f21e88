use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use uied::classify::{ClassVocabulary, Endpoint, HeuristicClassifier, HeuristicConfig};
use uied::elements::PipelineConfig;
use uied::eval::DEFAULT_THRESHOLDS;
use uied::layout::BlockConfig;

/// Settings shared by all commands. Values come from the built-in defaults,
/// then the config file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub binarize_threshold: u8,
    pub flood_tolerance: u8,
    /// Smallest block as a fraction of the screen area.
    pub min_block_fraction: f64,
    pub image_density: f64,
    /// Smallest element candidate, in pixels.
    pub min_component_area: usize,
    pub nms_threshold: f64,
    pub iou_thresholds: Vec<f64>,
    pub vocabulary: Option<PathBuf>,
    /// `http://...` or `exec:program args...`.
    pub classifier: Option<String>,
    pub classifier_timeout_ms: u64,
    pub status_bar_px: u32,
    pub nav_bar_px: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let blocks = BlockConfig::default();
        let pipeline = PipelineConfig::default();
        Self {
            binarize_threshold: blocks.binarize_threshold,
            flood_tolerance: blocks.flood_tolerance,
            min_block_fraction: blocks.min_area_fraction,
            image_density: blocks.image_density,
            min_component_area: pipeline.component_min_area,
            nms_threshold: pipeline.nms_threshold,
            iou_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            vocabulary: None,
            classifier: None,
            classifier_timeout_ms: 10_000,
            status_bar_px: 0,
            nav_bar_px: 0,
        }
    }
}

/// Command-line overrides for [`RunConfig`].
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file
    #[arg(long, global = true, env = "UIED_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub binarize_threshold: Option<u8>,
    #[arg(long, global = true)]
    pub flood_tolerance: Option<u8>,
    #[arg(long, global = true)]
    pub min_block_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub image_density: Option<f64>,
    #[arg(long, global = true)]
    pub min_component_area: Option<usize>,
    #[arg(long, global = true)]
    pub nms_threshold: Option<f64>,
    /// Comma-separated IoU thresholds
    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Class list, one name per line
    #[arg(long, global = true)]
    pub vocabulary: Option<PathBuf>,
    /// External classifier endpoint (http://... or exec:...)
    #[arg(long, global = true)]
    pub classifier: Option<String>,
    #[arg(long, global = true)]
    pub classifier_timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub status_bar_px: Option<u32>,
    #[arg(long, global = true)]
    pub nav_bar_px: Option<u32>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Defaults, overlaid by the config file, overlaid by flags.
    pub fn resolve(args: &ConfigArgs) -> Result<Self> {
        let mut c = match &args.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        macro_rules! overlay {
            ($($f:ident),*) => {$(
                if let Some(v) = &args.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        overlay!(
            binarize_threshold,
            flood_tolerance,
            min_block_fraction,
            image_density,
            min_component_area,
            nms_threshold,
            classifier_timeout_ms,
            status_bar_px,
            nav_bar_px
        );
        if let Some(t) = &args.thresholds {
            c.iou_thresholds = t.clone();
        }
        if args.vocabulary.is_some() {
            c.vocabulary = args.vocabulary.clone();
        }
        if args.classifier.is_some() {
            c.classifier = args.classifier.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, lo_open: bool| -> Result<()> {
            let ok = if lo_open { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
            if !ok {
                bail!("{name} must be in {}0, 1], got {v}", if lo_open { "(" } else { "[" });
            }
            Ok(())
        };
        unit("min_block_fraction", self.min_block_fraction, false)?;
        unit("image_density", self.image_density, false)?;
        unit("nms_threshold", self.nms_threshold, false)?;
        if self.iou_thresholds.is_empty() {
            bail!("iou_thresholds must not be empty");
        }
        for &t in &self.iou_thresholds {
            unit("IoU threshold", t, true)?;
        }
        if self.classifier_timeout_ms == 0 {
            bail!("classifier_timeout_ms must be positive");
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            blocks: BlockConfig {
                flood_tolerance: self.flood_tolerance,
                binarize_threshold: self.binarize_threshold,
                min_area_fraction: self.min_block_fraction,
                image_density: self.image_density,
                ..BlockConfig::default()
            },
            component_min_area: self.min_component_area,
            nms_threshold: self.nms_threshold,
            ..PipelineConfig::default()
        }
    }

    pub fn load_vocabulary(&self) -> Result<ClassVocabulary> {
        match &self.vocabulary {
            Some(p) => ClassVocabulary::load(p).with_context(|| format!("cannot load vocabulary {}", p.display())),
            None => Ok(ClassVocabulary::default()),
        }
    }

    pub fn heuristic(&self, vocabulary: ClassVocabulary) -> HeuristicClassifier {
        HeuristicClassifier::new(
            vocabulary,
            HeuristicConfig {
                binarize_threshold: self.binarize_threshold,
                image_density: self.image_density,
                ..HeuristicConfig::default()
            },
        )
    }

    pub fn endpoint(&self) -> Result<Option<Endpoint>> {
        self.classifier.as_deref().map(Endpoint::parse).transpose().context("bad classifier endpoint")
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.classifier_timeout_ms)
    }
}
