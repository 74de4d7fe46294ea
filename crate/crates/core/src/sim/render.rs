//! Drawing vital states as monitor frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{GrayImage, MonitorFrame, Rect};
use crate::vision::GlyphLibrary;

use super::{mix, VitalState};

/// Fixed screen layout. Coordinates inside the screen are relative to its
/// top-left corner.
pub mod layout {
    pub const FRAME_W: usize = 1280;
    pub const FRAME_H: usize = 800;
    pub const SCREEN_W: usize = 640;
    pub const SCREEN_H: usize = 480;

    pub const BACKGROUND: u8 = 15;
    pub const SCREEN: u8 = 215;
    pub const INK: u8 = 35;
    /// Mid-tone so the trace binarizes with the screen, not with text.
    pub const WAVEFORM: u8 = 190;

    pub const GLYPH_SCALE: usize = 4;
    /// Blank font columns between adjacent glyphs.
    pub const GLYPH_GAP: usize = 2;
    pub const LABEL_X: usize = 32;
    pub const VALUE_X: usize = 288;
    pub const LINE_Y: [usize; 4] = [36, 116, 196, 276];
    pub const LABELS: [&str; 4] = ["HR:", "RR:", "SPO2:", "NIBP:"];

    pub const ECG_X0: usize = 32;
    pub const ECG_X1: usize = 608;
    pub const ECG_BASELINE: usize = 410;
    pub const ECG_AMPLITUDE: f64 = 50.0;
    pub const ECG_PX_PER_SEC: f64 = 144.0;

    /// Peak noise amplitude in luminance units at noise level 1.
    pub const NOISE_SCALE: f64 = 50.0;

    /// Screen origin for a centred screen shifted by `(dx, dy)`, if it fits.
    pub fn screen_origin(
        frame_w: usize,
        frame_h: usize,
        dx: i32,
        dy: i32,
    ) -> Option<(usize, usize)> {
        let x = (frame_w as i64 - SCREEN_W as i64) / 2 + dx as i64;
        let y = (frame_h as i64 - SCREEN_H as i64) / 2 + dy as i64;
        let fits = x >= 0
            && y >= 0
            && x as usize + SCREEN_W <= frame_w
            && y as usize + SCREEN_H <= frame_h;
        fits.then_some((x as usize, y as usize))
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("offset ({0}, {1}) moves the screen outside the frame")]
    OffsetOutOfRange(i32, i32),
    #[error("noise level {0} outside [0, 1]")]
    NoiseLevel(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub noise_level: f64,
    pub offset: (i32, i32),
    /// Noise seed; derived from the state when absent.
    pub noise_seed: Option<u64>,
    /// Opaque dark rectangles in screen coordinates, drawn over the text.
    pub occlusions: Vec<Rect>,
    pub width: usize,
    pub height: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            noise_level: 0.0,
            offset: (0, 0),
            noise_seed: None,
            occlusions: Vec::new(),
            width: layout::FRAME_W,
            height: layout::FRAME_H,
        }
    }
}

/// Area covering the value text of display line `line`, in screen
/// coordinates; handy for scripting occlusions.
pub fn value_field_rect(line: usize) -> Rect {
    let adv = (7 + layout::GLYPH_GAP) * layout::GLYPH_SCALE;
    Rect::new(
        layout::VALUE_X - 4,
        layout::LINE_Y[line] - 4,
        7 * adv + 8,
        11 * layout::GLYPH_SCALE + 8,
    )
}

pub fn render_frame(
    state: &VitalState,
    noise_level: f64,
    offset: (i32, i32),
) -> Result<MonitorFrame, RenderError> {
    render_frame_with(
        state,
        &RenderOptions {
            noise_level,
            offset,
            ..RenderOptions::default()
        },
    )
}

pub fn render_frame_with(
    state: &VitalState,
    opts: &RenderOptions,
) -> Result<MonitorFrame, RenderError> {
    if !(0.0..=1.0).contains(&opts.noise_level) {
        return Err(RenderError::NoiseLevel(opts.noise_level));
    }
    let (dx, dy) = opts.offset;
    let (sx, sy) = layout::screen_origin(opts.width, opts.height, dx, dy)
        .ok_or(RenderError::OffsetOutOfRange(dx, dy))?;
    let mut img = GrayImage::new(opts.width, opts.height, layout::BACKGROUND);
    img.fill_rect(
        Rect::new(sx, sy, layout::SCREEN_W, layout::SCREEN_H),
        layout::SCREEN,
    );

    let lib = GlyphLibrary::builtin();
    let values = [
        state.hr.to_string(),
        state.rr.to_string(),
        state.spo2.to_string(),
        format!("{}/{}", state.sys_bp, state.dia_bp),
    ];
    for (i, value) in values.iter().enumerate() {
        let y = sy + layout::LINE_Y[i];
        draw_text(&mut img, &lib, layout::LABELS[i], sx + layout::LABEL_X, y);
        draw_text(&mut img, &lib, value, sx + layout::VALUE_X, y);
    }
    draw_ecg(&mut img, state, sx, sy);
    for r in &opts.occlusions {
        let clipped = Rect::new(
            sx + r.x.min(layout::SCREEN_W),
            sy + r.y.min(layout::SCREEN_H),
            r.w.min(layout::SCREEN_W.saturating_sub(r.x)),
            r.h.min(layout::SCREEN_H.saturating_sub(r.y)),
        );
        img.fill_rect(clipped, layout::INK);
    }

    let amplitude = (opts.noise_level * layout::NOISE_SCALE).round() as i32;
    if amplitude > 0 {
        let seed = opts
            .noise_seed
            .unwrap_or_else(|| mix(state.sim_time.to_bits(), state.start_time as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in img.pixels_mut() {
            *p = (*p as i32 + rng.random_range(-amplitude..=amplitude)).clamp(0, 255) as u8;
        }
    }
    Ok(MonitorFrame::new(img, state.wall_time()))
}

fn draw_text(img: &mut GrayImage, lib: &GlyphLibrary, text: &str, x: usize, y: usize) {
    let s = layout::GLYPH_SCALE;
    let advance = (lib.width() + layout::GLYPH_GAP) * s;
    for (k, ch) in text.chars().enumerate() {
        let Some(bm) = lib.get(ch) else { continue };
        let gx = x + k * advance;
        for row in 0..bm.height {
            for col in 0..bm.width {
                if bm.get(col, row) {
                    img.fill_rect(Rect::new(gx + col * s, y + row * s, s, s), layout::INK);
                }
            }
        }
    }
}

/// Sum of Gaussian bumps standing in for P, QRS and T waves over one beat.
fn ecg_wave(phase: f64) -> f64 {
    let u = phase.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
    let bump = |c: f64, w: f64, a: f64| a * (-((u - c) / w).powi(2)).exp();
    bump(0.2, 0.03, 0.15)
        + bump(0.38, 0.012, -0.15)
        + bump(0.4, 0.01, 1.0)
        + bump(0.42, 0.012, -0.25)
        + bump(0.65, 0.05, 0.3)
}

fn draw_ecg(img: &mut GrayImage, state: &VitalState, sx: usize, sy: usize) {
    let beats_per_sec = state.hr as f64 / 60.0;
    let y_at = |x: usize| {
        let t = (x - layout::ECG_X0) as f64 / layout::ECG_PX_PER_SEC;
        let phase = state.ecg_phase + std::f64::consts::TAU * beats_per_sec * t;
        (layout::ECG_BASELINE as f64 - layout::ECG_AMPLITUDE * ecg_wave(phase)).round() as usize
    };
    let mut prev = y_at(layout::ECG_X0);
    for x in layout::ECG_X0..layout::ECG_X1 {
        let y = y_at(x);
        let (lo, hi) = (prev.min(y), prev.max(y));
        img.fill_rect(Rect::new(sx + x, sy + lo, 1, hi - lo + 2), layout::WAVEFORM);
        prev = y;
    }
}
