//! Screen localization: bright, well-filled rectangles scored by how much
//! brighter their inner border is than their surroundings.

use crate::frame::{MonitorFrame, Rect};

use super::{Detector, RegionBox};

/// Overlap above which the lower-ranked of two candidates is suppressed.
pub const SUPPRESSION_IOU: f64 = 0.5;

/// Contrast-rectangle detector.
///
/// Bright pixels are grouped at each threshold level on a coarse grid, then
/// each component's edges are refined at full resolution. A component
/// becomes a candidate if it covers enough of the frame and fills most of
/// its bounding box.
#[derive(Debug, Clone)]
pub struct ContrastDetector {
    pub levels: Vec<u8>,
    pub stride: usize,
    pub min_area_fraction: f64,
    pub min_fill: f64,
    pub ring: usize,
}

impl Default for ContrastDetector {
    fn default() -> Self {
        ContrastDetector {
            levels: vec![96, 160],
            stride: 4,
            min_area_fraction: 0.01,
            min_fill: 0.5,
            ring: 2,
        }
    }
}

impl Detector for ContrastDetector {
    fn detect(&self, frame: &MonitorFrame, theta: f64) -> Vec<RegionBox> {
        let kept: Vec<RegionBox> = self
            .candidates(frame)
            .into_iter()
            .filter(|b| b.score >= theta)
            .collect();
        suppress_overlaps(kept)
    }
}

impl ContrastDetector {
    /// All scored candidates before thresholding and suppression.
    pub fn candidates(&self, frame: &MonitorFrame) -> Vec<RegionBox> {
        let img = &frame.image;
        let (w, h) = (img.width(), img.height());
        if w == 0 || h == 0 {
            return Vec::new();
        }
        let s = self.stride.max(1);
        let (cw, ch) = (w.div_ceil(s), h.div_ceil(s));
        let mut out: Vec<RegionBox> = Vec::new();
        for &level in &self.levels {
            let mask: Vec<bool> = (0..ch)
                .flat_map(|cy| (0..cw).map(move |cx| (cx, cy)))
                .map(|(cx, cy)| img.get(cx * s, cy * s) >= level)
                .collect();
            for comp in components4(&mask, cw, ch) {
                let (cx0, cy0, cx1, cy1, count) = comp;
                if ((count * s * s) as f64) < self.min_area_fraction * (w * h) as f64 {
                    continue;
                }
                let fill = count as f64 / ((cx1 - cx0 + 1) * (cy1 - cy0 + 1)) as f64;
                if fill < self.min_fill {
                    continue;
                }
                let rect = refine(frame, level, s, (cx0 * s, cy0 * s, cx1 * s, cy1 * s));
                if rect.w == 0 || rect.h == 0 || out.iter().any(|b| b.rect() == rect) {
                    continue;
                }
                let score = ring_contrast(frame, rect, self.ring);
                out.push(RegionBox {
                    x: rect.x,
                    y: rect.y,
                    w: rect.w,
                    h: rect.h,
                    score,
                });
            }
        }
        out
    }
}

/// 4-connected components of a mask: (x0, y0, x1, y1, pixel count).
fn components4(mask: &[bool], w: usize, h: usize) -> Vec<(usize, usize, usize, usize, usize)> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1, mut count) = (usize::MAX, usize::MAX, 0, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            count += 1;
            let mut push = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        out.push((x0, y0, x1, y1, count));
    }
    out
}

/// Moves each coarse edge to the outermost full-resolution line that is at
/// least half bright within the coarse extent.
fn refine(frame: &MonitorFrame, level: u8, s: usize, coarse: (usize, usize, usize, usize)) -> Rect {
    let img = &frame.image;
    let (w, h) = (img.width(), img.height());
    let (x0, y0, x1, y1) = coarse;
    let col_bright = |x: usize| {
        let n = (y0..=y1).step_by(2).count();
        (y0..=y1)
            .step_by(2)
            .filter(|&y| img.get(x, y) >= level)
            .count()
            * 2
            >= n
    };
    let row_bright = |y: usize| {
        let row = img.row(y);
        let n = (x0..=x1).step_by(2).count();
        (x0..=x1).step_by(2).filter(|&x| row[x] >= level).count() * 2 >= n
    };
    let left = (x0.saturating_sub(s - 1)..=x0)
        .find(|&x| col_bright(x))
        .unwrap_or(x0);
    let right = (x1..=(x1 + s - 1).min(w - 1))
        .rev()
        .find(|&x| col_bright(x))
        .unwrap_or(x1);
    let top = (y0.saturating_sub(s - 1)..=y0)
        .find(|&y| row_bright(y))
        .unwrap_or(y0);
    let bottom = (y1..=(y1 + s - 1).min(h - 1))
        .rev()
        .find(|&y| row_bright(y))
        .unwrap_or(y1);
    Rect::new(left, top, right + 1 - left, bottom + 1 - top)
}

/// (mean of the `ring`-px band just inside `r`) minus (mean of the band just
/// outside, clipped to the frame), scaled to [0, 1]. A box touching every
/// frame edge has no outside band; its surroundings count as black.
pub fn ring_contrast(frame: &MonitorFrame, r: Rect, ring: usize) -> f64 {
    let img = &frame.image;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (rx0, ry0, rx1, ry1) = (r.x as i64, r.y as i64, r.right() as i64, r.bottom() as i64);
    let k = ring as i64;
    let band_sum = |x0: i64, y0: i64, x1: i64, y1: i64, inner: bool| -> (u64, u64) {
        let (mut sum, mut n) = (0u64, 0u64);
        for y in y0.max(0)..y1.min(h) {
            let row = img.row(y as usize);
            for x in x0.max(0)..x1.min(w) {
                let inside = x >= rx0 && x < rx1 && y >= ry0 && y < ry1;
                let near_edge = x < rx0 + k || x >= rx1 - k || y < ry0 + k || y >= ry1 - k;
                if inside == inner && (!inner || near_edge) {
                    sum += row[x as usize] as u64;
                    n += 1;
                }
            }
        }
        (sum, n)
    };
    // Inner band: the four edge strips of the box itself.
    let mut inner = (0u64, 0u64);
    let mut outer = (0u64, 0u64);
    let strips = [
        (rx0 - k, ry0 - k, rx1 + k, ry0 + k),
        (rx0 - k, ry1 - k, rx1 + k, ry1 + k),
        (rx0 - k, ry0 + k, rx0 + k, ry1 - k),
        (rx1 - k, ry0 + k, rx1 + k, ry1 - k),
    ];
    for (x0, y0, x1, y1) in strips {
        let a = band_sum(x0, y0, x1, y1, true);
        let b = band_sum(x0, y0, x1, y1, false);
        inner = (inner.0 + a.0, inner.1 + a.1);
        outer = (outer.0 + b.0, outer.1 + b.1);
    }
    if inner.1 == 0 {
        return 0.0;
    }
    let mean_in = inner.0 as f64 / inner.1 as f64;
    let mean_out = if outer.1 == 0 {
        0.0
    } else {
        outer.0 as f64 / outer.1 as f64
    };
    ((mean_in - mean_out) / 255.0).clamp(0.0, 1.0)
}

/// Greedy suppression: rank by score (descending, ties by smaller `(x, y)`),
/// keep a box unless it overlaps an already kept one by more than
/// [`SUPPRESSION_IOU`].
pub fn suppress_overlaps(mut boxes: Vec<RegionBox>) -> Vec<RegionBox> {
    boxes.sort_by(rank_order);
    let mut kept: Vec<RegionBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if kept
            .iter()
            .all(|k| k.rect().iou(&b.rect()) <= SUPPRESSION_IOU)
        {
            kept.push(b);
        }
    }
    kept
}

pub(crate) fn rank_order(a: &RegionBox, b: &RegionBox) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then((a.x, a.y).cmp(&(b.x, b.y)))
}
