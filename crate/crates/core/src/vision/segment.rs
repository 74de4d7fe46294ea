//! Splitting a screen region into text lines, label/value blocks and glyphs.

use crate::frame::{GrayImage, Rect};

use super::{otsu, BlockKind, FieldBlock, MIN_INK_CONTRAST};

/// Rows (and columns) whose ink fraction is below this are gaps.
pub const INK_FRACTION: f64 = 0.02;

/// A gap between ink runs at least this many times the median gap splits
/// a line into blocks.
pub const BLOCK_GAP_FACTOR: usize = 2;

/// Lines shorter than this many rows are treated as specks.
const MIN_LINE_ROWS: usize = 3;

/// Ink mask of a region: pixels darker than the Otsu threshold, or `None`
/// when the region has no bimodal contrast to speak of.
pub(crate) fn ink_mask(img: &GrayImage) -> Option<Vec<bool>> {
    let (thr, contrast) = otsu(img.pixels().iter().copied());
    if contrast < MIN_INK_CONTRAST {
        return None;
    }
    Some(img.pixels().iter().map(|&p| p < thr).collect())
}

pub fn segment_fields(region: &GrayImage) -> Vec<FieldBlock> {
    let (w, h) = (region.width(), region.height());
    let Some(ink) = ink_mask(region) else {
        return Vec::new();
    };
    let row_min = (INK_FRACTION * w as f64).ceil().max(1.0) as usize;
    let row_ink: Vec<usize> = (0..h)
        .map(|y| ink[y * w..(y + 1) * w].iter().filter(|&&b| b).count())
        .collect();

    let mut blocks = Vec::new();
    let mut line_index = 0;
    for (y0, y1) in runs(&row_ink, row_min) {
        if y1 - y0 + 1 < MIN_LINE_ROWS {
            continue;
        }
        let col_ink: Vec<usize> = (0..w)
            .map(|x| (y0..=y1).filter(|&y| ink[y * w + x]).count())
            .collect();
        let col_runs = runs(&col_ink, 1);
        if col_runs.is_empty() {
            continue;
        }
        let gaps: Vec<usize> = col_runs.windows(2).map(|p| p[1].0 - p[0].1 - 1).collect();
        let groups = split_runs(&col_runs, &gaps);
        let single = groups.len() == 1;
        for (i, (bx0, bx1)) in groups.into_iter().enumerate() {
            let Some((band, glyph_boxes)) =
                glyphs_in(&ink, w, Rect::new(bx0, y0, bx1 + 1 - bx0, y1 + 1 - y0))
            else {
                continue;
            };
            let kind = if single || i % 2 == 1 {
                BlockKind::Value
            } else {
                BlockKind::Label
            };
            blocks.push(FieldBlock {
                bbox: band,
                kind,
                glyph_boxes,
                line: line_index,
            });
        }
        line_index += 1;
    }
    blocks
}

/// Maximal runs of indices whose count is at least `min`, inclusive.
fn runs(counts: &[usize], min: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &c) in counts.iter().enumerate() {
        match (c >= min, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, counts.len() - 1));
    }
    out
}

/// Groups column runs into blocks, splitting at wide gaps.
fn split_runs(col_runs: &[(usize, usize)], gaps: &[usize]) -> Vec<(usize, usize)> {
    if gaps.is_empty() {
        return vec![(col_runs[0].0, col_runs[0].1)];
    }
    let mut sorted = gaps.to_vec();
    sorted.sort_unstable();
    let median = sorted[(sorted.len() - 1) / 2];
    let mut out = Vec::new();
    let mut cur = col_runs[0];
    for (next, &gap) in col_runs[1..].iter().zip(gaps) {
        if gap >= BLOCK_GAP_FACTOR * median && gap > median {
            out.push(cur);
            cur = *next;
        } else {
            cur.1 = next.1;
        }
    }
    out.push(cur);
    out
}

/// 8-connected ink components inside `area`, merged when their column
/// ranges overlap. Returns the block box (columns of the glyphs, rows of
/// the tallest extent) and the glyph boxes sharing that row band.
fn glyphs_in(ink: &[bool], stride: usize, area: Rect) -> Option<(Rect, Vec<Rect>)> {
    let (aw, ah) = (area.w, area.h);
    let at = |x: usize, y: usize| ink[(area.y + y) * stride + area.x + x];
    let mut seen = vec![false; aw * ah];
    let mut spans: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut stack = Vec::new();
    for sy in 0..ah {
        for sx in 0..aw {
            if !at(sx, sy) || seen[sy * aw + sx] {
                continue;
            }
            seen[sy * aw + sx] = true;
            stack.push((sx, sy));
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            while let Some((x, y)) = stack.pop() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                for ny in y.saturating_sub(1)..=(y + 1).min(ah - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(aw - 1) {
                        if at(nx, ny) && !seen[ny * aw + nx] {
                            seen[ny * aw + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            spans.push((x0, x1, y0, y1));
        }
    }
    if spans.is_empty() {
        return None;
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for &(x0, x1, _, _) in &spans {
        match merged.last_mut() {
            Some(last) if x0 <= last.1 => last.1 = last.1.max(x1),
            _ => merged.push((x0, x1)),
        }
    }
    let top = spans.iter().map(|s| s.2).min()?;
    let bottom = spans.iter().map(|s| s.3).max()?;
    let (y, h) = (area.y + top, bottom + 1 - top);
    let glyphs: Vec<Rect> = merged
        .iter()
        .map(|&(x0, x1)| Rect::new(area.x + x0, y, x1 + 1 - x0, h))
        .collect();
    let first = glyphs.first()?.x;
    let last = glyphs.last()?.right();
    Some((Rect::new(first, y, last - first, h), glyphs))
}
