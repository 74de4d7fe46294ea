//! Screen localization and text digitization for monitor frames.
//!
//! The pipeline is: [`detect_screen`] picks the monitor screen, [`segment_fields`]
//! cuts it into label/value blocks and glyph boxes, [`recognize_text`] reads each
//! block against a [`GlyphLibrary`], and [`extract`] ties them together into
//! [`RawReading`]s.

mod detect;
mod glyphs;
mod recognize;
mod segment;

pub use detect::{ring_contrast, suppress_overlaps, ContrastDetector, SUPPRESSION_IOU};
pub use glyphs::{similarity, Bitmap, GlyphLibrary};
pub use recognize::{normalize_glyph, recognize_text, TemplateRecognizer, MIN_OVERLAP};
pub use segment::{segment_fields, BLOCK_GAP_FACTOR, INK_FRACTION};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::frame::{GrayImage, MonitorFrame, Rect};

/// Default detection threshold.
pub const DEFAULT_THETA: f64 = 0.5;

/// Minimum gap between Otsu class means for a region to count as holding ink.
pub(crate) const MIN_INK_CONTRAST: f64 = 80.0;

#[derive(Debug, thiserror::Error)]
pub enum VisionError {
    #[error("glyph library: {0}")]
    GlyphLibrary(String),
    #[error("glyph {glyph} unrecognized (best overlap {best:.3})")]
    Recognition { glyph: usize, best: f64 },
}

/// A scored detection in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub score: f64,
}

impl RegionBox {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Label,
    Value,
}

/// A run of glyphs on one text line, in screen-region coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldBlock {
    pub bbox: Rect,
    pub kind: BlockKind,
    /// Left to right, non-overlapping.
    pub glyph_boxes: Vec<Rect>,
    /// Index of the text line within the region.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recognized {
    pub text: String,
    pub confidence: f64,
}

/// One label/value pair read off the screen, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReading {
    pub label_text: String,
    pub value_text: String,
    pub confidence: f64,
    pub frame_time: f64,
}

/// Frame to scored candidate boxes.
pub trait Detector {
    fn detect(&self, frame: &MonitorFrame, theta: f64) -> Vec<RegionBox>;
}

/// Block pixels to text and confidence.
pub trait Recognizer {
    fn recognize(&self, block: &FieldBlock, region: &GrayImage) -> Result<Recognized, VisionError>;
}

pub fn detect_screen(frame: &MonitorFrame, theta: f64) -> Vec<RegionBox> {
    ContrastDetector::default().detect(frame, theta)
}

/// Result of reading one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub readings: Vec<RawReading>,
    /// Label/value pairs that could not be read.
    pub dropped: usize,
    pub no_screen: bool,
    pub region: Option<RegionBox>,
    pub blocks: Vec<FieldBlock>,
}

/// Detector and recognizer bundled with a threshold.
pub struct Extractor {
    detector: Box<dyn Detector + Send + Sync>,
    recognizer: Box<dyn Recognizer + Send + Sync>,
    theta: f64,
}

impl Extractor {
    pub fn new(
        detector: Box<dyn Detector + Send + Sync>,
        recognizer: Box<dyn Recognizer + Send + Sync>,
        theta: f64,
    ) -> Self {
        Extractor {
            detector,
            recognizer,
            theta,
        }
    }

    pub fn with_library(lib: Arc<GlyphLibrary>, theta: f64) -> Self {
        Extractor::new(
            Box::new(ContrastDetector::default()),
            Box::new(TemplateRecognizer::new(lib)),
            theta,
        )
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn extract(&self, frame: &MonitorFrame) -> Extraction {
        let Some(region) = self.detector.detect(frame, self.theta).into_iter().next() else {
            return Extraction {
                no_screen: true,
                ..Extraction::default()
            };
        };
        let screen = frame.image.crop(region.rect());
        let blocks = segment_fields(&screen);
        let mut out = Extraction {
            region: Some(region),
            ..Extraction::default()
        };

        let mut i = 0;
        while i < blocks.len() {
            let label = &blocks[i];
            let value = blocks
                .get(i + 1)
                .filter(|v| v.line == label.line && v.kind == BlockKind::Value);
            let Some(value) = value.filter(|_| label.kind == BlockKind::Label) else {
                out.dropped += 1;
                i += 1;
                continue;
            };
            i += 2;
            let read = self
                .recognizer
                .recognize(label, &screen)
                .and_then(|l| self.recognizer.recognize(value, &screen).map(|v| (l, v)));
            let Ok((l, v)) = read else {
                out.dropped += 1;
                continue;
            };
            let confidence = l.confidence.min(v.confidence);
            match split_compound(&l.text, &v.text) {
                Some(parts) => {
                    out.readings
                        .extend(
                            parts
                                .into_iter()
                                .map(|(label_text, value_text)| RawReading {
                                    label_text,
                                    value_text,
                                    confidence,
                                    frame_time: frame.capture_time,
                                }),
                        )
                }
                None => out.dropped += 1,
            }
        }
        out.blocks = blocks;
        out
    }
}

/// Expands a `SYS/DIA` style value into two readings suffixed `-S` and `-D`.
fn split_compound(label: &str, value: &str) -> Option<Vec<(String, String)>> {
    let parts: Vec<&str> = value.split('/').collect();
    match parts.as_slice() {
        [v] if !v.is_empty() => Some(vec![(label.to_string(), v.to_string())]),
        [s, d] if !s.is_empty() && !d.is_empty() => {
            let base = label.trim_end_matches(|c: char| c == ':' || c.is_whitespace());
            Some(vec![
                (format!("{base}-S"), s.to_string()),
                (format!("{base}-D"), d.to_string()),
            ])
        }
        _ => None,
    }
}

/// Reads `frame` with the default detector and a template recognizer.
pub fn extract(frame: &MonitorFrame, theta: f64, lib: Arc<GlyphLibrary>) -> Extraction {
    Extractor::with_library(lib, theta).extract(frame)
}

/// Otsu threshold over a set of 8-bit samples, returned with the distance
/// between the two class means. Pixels `< threshold` form the dark class.
pub(crate) fn otsu(samples: impl Iterator<Item = u8>) -> (u8, f64) {
    let mut hist = [0u64; 256];
    for p in samples {
        hist[p as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return (0, 0.0);
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let (mut best_t, mut best_var, mut best_gap) = (0u8, -1.0f64, 0.0f64);
    for t in 1..256usize {
        w0 += hist[t - 1];
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m1 - m0) * (m1 - m0);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
            best_gap = m1 - m0;
        }
    }
    (best_t, best_gap)
}

/// Frame copy with the detected region and block/glyph boxes outlined, for
/// debugging segmentation.
pub fn annotate(frame: &MonitorFrame, extraction: &Extraction) -> GrayImage {
    let mut img = frame.image.clone();
    if let Some(region) = extraction.region {
        outline(&mut img, region.rect(), 255);
        for block in &extraction.blocks {
            let shift = |r: Rect| Rect::new(r.x + region.x, r.y + region.y, r.w, r.h);
            let shade = if block.kind == BlockKind::Label {
                128
            } else {
                0
            };
            outline(&mut img, shift(block.bbox).grow(2), shade);
            for g in &block.glyph_boxes {
                outline(&mut img, shift(*g), 160);
            }
        }
    }
    img
}

fn outline(img: &mut GrayImage, r: Rect, v: u8) {
    if r.w == 0 || r.h == 0 {
        return;
    }
    let (x1, y1) = (
        (r.right() - 1).min(img.width() - 1),
        (r.bottom() - 1).min(img.height() - 1),
    );
    for x in r.x.min(x1)..=x1 {
        img.set(x, r.y.min(y1), v);
        img.set(x, y1, v);
    }
    for y in r.y.min(y1)..=y1 {
        img.set(r.x.min(x1), y, v);
        img.set(x1, y, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn otsu_separates_two_levels() {
        let samples = std::iter::repeat_n(35u8, 100).chain(std::iter::repeat_n(215u8, 300));
        let (t, gap) = otsu(samples);
        assert!(t > 35 && t <= 215);
        assert_eq!(gap, 180.0);
        assert_eq!(otsu(std::iter::repeat_n(9u8, 10)), (0, 0.0));
    }

    #[test]
    fn compound_values_split() {
        assert_eq!(
            split_compound("NIBP:", "120/80"),
            Some(vec![
                ("NIBP-S".into(), "120".into()),
                ("NIBP-D".into(), "80".into())
            ])
        );
        assert_eq!(
            split_compound("HR:", "85"),
            Some(vec![("HR:".into(), "85".into())])
        );
        assert_eq!(split_compound("NIBP:", "1/2/3"), None);
        assert_eq!(split_compound("NIBP:", "/80"), None);
    }
}
