//! Glyph-template recognition of segmented blocks.

use std::sync::Arc;

use crate::frame::GrayImage;

use super::glyphs::{Bitmap, GlyphLibrary};
use super::{otsu, FieldBlock, Recognized, Recognizer, VisionError, MIN_INK_CONTRAST};

/// Glyphs whose best template similarity falls below this are rejected.
pub const MIN_OVERLAP: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct TemplateRecognizer {
    lib: Arc<GlyphLibrary>,
}

impl TemplateRecognizer {
    pub fn new(lib: Arc<GlyphLibrary>) -> Self {
        TemplateRecognizer { lib }
    }

    pub fn library(&self) -> &GlyphLibrary {
        &self.lib
    }
}

impl Recognizer for TemplateRecognizer {
    fn recognize(&self, block: &FieldBlock, region: &GrayImage) -> Result<Recognized, VisionError> {
        recognize_text(block, region, &self.lib)
    }
}

pub fn recognize_text(
    block: &FieldBlock,
    region: &GrayImage,
    lib: &GlyphLibrary,
) -> Result<Recognized, VisionError> {
    if block.glyph_boxes.is_empty() {
        return Err(VisionError::Recognition {
            glyph: 0,
            best: 0.0,
        });
    }
    let b = block.bbox;
    let pixels = (b.y..b.bottom()).flat_map(|y| region.row(y)[b.x..b.right()].iter().copied());
    let (thr, contrast) = otsu(pixels);
    if contrast < MIN_INK_CONTRAST {
        return Err(VisionError::Recognition {
            glyph: 0,
            best: 0.0,
        });
    }
    let mut text = String::with_capacity(block.glyph_boxes.len());
    let mut confidence = 1.0f64;
    for (i, g) in block.glyph_boxes.iter().enumerate() {
        let Some(norm) = normalize_glyph(region, *g, thr, lib.width(), lib.height()) else {
            return Err(VisionError::Recognition {
                glyph: i,
                best: 0.0,
            });
        };
        let (ch, score) = lib.best_match(&norm);
        if score < MIN_OVERLAP {
            return Err(VisionError::Recognition {
                glyph: i,
                best: score,
            });
        }
        text.push(ch);
        confidence = confidence.min(score);
    }
    Ok(Recognized { text, confidence })
}

/// Binarizes the glyph box, crops it to its ink columns and resamples it to
/// the template size. `None` when the box holds no ink.
pub fn normalize_glyph(
    region: &GrayImage,
    g: crate::frame::Rect,
    thr: u8,
    w: usize,
    h: usize,
) -> Option<Bitmap> {
    let bits: Vec<bool> = (g.y..g.bottom())
        .flat_map(|y| region.row(y)[g.x..g.right()].iter().map(move |&p| p < thr))
        .collect();
    let raw = Bitmap {
        width: g.w,
        height: g.h,
        bits,
    };
    let (x0, x1) = raw.ink_columns()?;
    Some(raw.resample(x0, x1, w, h))
}
