//! Fixed-size binary glyph templates.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use super::VisionError;

const BUILTIN_V1: &str = include_str!("../../assets/glyphs_v1.json");

/// A binary bitmap; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Bitmap {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Columns containing at least one ink pixel, as an inclusive range.
    pub fn ink_columns(&self) -> Option<(usize, usize)> {
        let has_ink = |x: usize| (0..self.height).any(|y| self.get(x, y));
        let first = (0..self.width).find(|&x| has_ink(x))?;
        let last = (0..self.width).rev().find(|&x| has_ink(x))?;
        Some((first, last))
    }

    /// Nearest-neighbour resample of columns `x0..=x1` (all rows) to `w`×`h`.
    pub fn resample(&self, x0: usize, x1: usize, w: usize, h: usize) -> Bitmap {
        let src_w = x1 - x0 + 1;
        let mut bits = Vec::with_capacity(w * h);
        for j in 0..h {
            let sy = nearest(j, self.height, h);
            for i in 0..w {
                bits.push(self.get(x0 + nearest(i, src_w, w), sy));
            }
        }
        Bitmap {
            width: w,
            height: h,
            bits,
        }
    }
}

/// Source index for destination index `i` when scaling `src` samples to `dst`.
#[inline]
pub(crate) fn nearest(i: usize, src: usize, dst: usize) -> usize {
    (((2 * i + 1) * src) / (2 * dst)).min(src - 1)
}

/// Mean of the ink IoU and the background IoU of two same-sized bitmaps.
///
/// Using both classes keeps a solid blob from scoring well against
/// glyphs that happen to be ink-heavy.
pub fn similarity(a: &Bitmap, b: &Bitmap) -> f64 {
    debug_assert_eq!(a.bits.len(), b.bits.len());
    let (mut ink_and, mut ink_or, mut bg_and, mut bg_or) = (0u32, 0u32, 0u32, 0u32);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        ink_and += (p && q) as u32;
        ink_or += (p || q) as u32;
        bg_and += (!p && !q) as u32;
        bg_or += (!p || !q) as u32;
    }
    let iou = |and: u32, or: u32| if or == 0 { 1.0 } else { and as f64 / or as f64 };
    0.5 * (iou(ink_and, ink_or) + iou(bg_and, bg_or))
}

/// Character templates, immutable once loaded.
#[derive(Debug, Clone)]
pub struct GlyphLibrary {
    width: usize,
    height: usize,
    entries: BTreeMap<char, Bitmap>,
    normalized: Vec<(char, Bitmap)>,
}

impl GlyphLibrary {
    /// The font used by the monitor simulator.
    pub fn builtin() -> Arc<GlyphLibrary> {
        static LIB: OnceLock<Arc<GlyphLibrary>> = OnceLock::new();
        LIB.get_or_init(|| {
            Arc::new(GlyphLibrary::from_json(BUILTIN_V1).expect("bundled glyph asset is valid"))
        })
        .clone()
    }

    pub fn from_json(text: &str) -> Result<GlyphLibrary, VisionError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| VisionError::GlyphLibrary(e.to_string()))?;
        let mut entries = BTreeMap::new();
        let mut dims: Option<(usize, usize)> = None;
        for (key, rows) in raw {
            let mut chars = key.chars();
            let (Some(ch), None) = (chars.next(), chars.next()) else {
                return Err(VisionError::GlyphLibrary(format!(
                    "key {key:?} is not a single character"
                )));
            };
            let height = rows.len();
            let width = rows.first().map_or(0, |r| r.len());
            if width == 0 || height == 0 {
                return Err(VisionError::GlyphLibrary(format!("glyph {ch:?} is empty")));
            }
            match dims {
                None => dims = Some((width, height)),
                Some(d) if d != (width, height) => {
                    return Err(VisionError::GlyphLibrary(format!(
                        "glyph {ch:?} is {width}x{height}, expected {}x{}",
                        d.0, d.1
                    )))
                }
                _ => {}
            }
            let mut bits = Vec::with_capacity(width * height);
            for row in &rows {
                if row.len() != width {
                    return Err(VisionError::GlyphLibrary(format!(
                        "glyph {ch:?} has ragged rows"
                    )));
                }
                for c in row.chars() {
                    match c {
                        '0' => bits.push(false),
                        '1' => bits.push(true),
                        _ => {
                            return Err(VisionError::GlyphLibrary(format!(
                                "glyph {ch:?}: bad cell {c:?}"
                            )))
                        }
                    }
                }
            }
            if !bits.contains(&true) {
                return Err(VisionError::GlyphLibrary(format!(
                    "glyph {ch:?} has no ink"
                )));
            }
            entries.insert(
                ch,
                Bitmap {
                    width,
                    height,
                    bits,
                },
            );
        }
        let (width, height) = dims.ok_or_else(|| VisionError::GlyphLibrary("no glyphs".into()))?;
        let normalized = entries
            .iter()
            .map(|(&ch, bm)| {
                let (x0, x1) = bm.ink_columns().expect("checked above");
                (ch, bm.resample(x0, x1, width, height))
            })
            .collect();
        Ok(GlyphLibrary {
            width,
            height,
            entries,
            normalized,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, ch: char) -> Option<&Bitmap> {
        self.entries.get(&ch)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.entries.keys().copied()
    }

    /// Templates cropped to their ink columns and stretched back to full
    /// size, the same normalization applied to observed glyphs.
    pub fn normalized(&self) -> &[(char, Bitmap)] {
        &self.normalized
    }

    /// Best matching character and its similarity. Iteration is in
    /// character order and only a strictly better score replaces the
    /// current best, so ties go to the smallest character.
    pub fn best_match(&self, glyph: &Bitmap) -> (char, f64) {
        let mut best = (self.normalized[0].0, f64::NEG_INFINITY);
        for (ch, tpl) in &self.normalized {
            let s = similarity(glyph, tpl);
            if s > best.1 {
                best = (*ch, s);
            }
        }
        best
    }
}
