//! Grayscale images and captured monitor frames, with binary PGM (P5) I/O.

use std::io::{self, Read, Write};

/// Axis-aligned pixel rectangle; `x`, `y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Expands by `m` on every side, saturating at zero.
    pub fn grow(&self, m: usize) -> Rect {
        let x = self.x.saturating_sub(m);
        let y = self.y.saturating_sub(m);
        Rect::new(x, y, self.right() + m - x, self.bottom() + m - y)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersection(&self, other: &Rect) -> usize {
        let w = self
            .right()
            .min(other.right())
            .saturating_sub(self.x.max(other.x));
        let h = self
            .bottom()
            .min(other.bottom())
            .saturating_sub(self.y.max(other.y));
        w * h
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height).then_some(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Fills `r` clipped to the image.
    pub fn fill_rect(&mut self, r: Rect, v: u8) {
        let x1 = r.right().min(self.width);
        let y1 = r.bottom().min(self.height);
        if r.x >= x1 {
            return;
        }
        for y in r.y..y1 {
            let start = y * self.width;
            self.pixels[start + r.x..start + x1].fill(v);
        }
    }

    pub fn crop(&self, r: Rect) -> GrayImage {
        let x1 = r.right().min(self.width);
        let y1 = r.bottom().min(self.height);
        let w = x1.saturating_sub(r.x);
        let mut pixels = Vec::with_capacity(w * y1.saturating_sub(r.y));
        for y in r.y..y1 {
            pixels.extend_from_slice(&self.row(y)[r.x..x1]);
        }
        GrayImage {
            width: w,
            height: y1.saturating_sub(r.y),
            pixels,
        }
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn read_pgm<R: Read>(mut input: R) -> io::Result<GrayImage> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
        let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if max != 255 {
            return Err(bad("only 8-bit PGM is supported"));
        }
        pos += 1; // single whitespace before raster
        let raster = bytes
            .get(pos..pos + w * h)
            .ok_or_else(|| bad("truncated PGM raster"))?;
        Ok(GrayImage {
            width: w,
            height: h,
            pixels: raster.to_vec(),
        })
    }
}

/// One captured monitor image. `capture_time` is epoch seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorFrame {
    pub image: GrayImage,
    pub capture_time: f64,
}

impl MonitorFrame {
    pub fn new(image: GrayImage, capture_time: f64) -> Self {
        MonitorFrame {
            image,
            capture_time,
        }
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn pixels(&self) -> &[u8] {
        self.image.pixels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let mut img = GrayImage::new(5, 3, 7);
        img.set(4, 2, 200);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(GrayImage::read_pgm(&buf[..]).unwrap(), img);
        let with_comment = b"P5 # made by hand\n2 1\n255\n\x01\x02";
        assert_eq!(
            GrayImage::read_pgm(&with_comment[..]).unwrap().pixels(),
            &[1, 2]
        );
        assert!(GrayImage::read_pgm(&b"P5\n5 3\n255\n\x00"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
    }

    #[test]
    fn rect_overlap() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 0, 10, 10);
        assert_eq!(a.intersection(&b), 50);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&Rect::new(20, 20, 1, 1)), 0.0);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn crop_and_fill_clip() {
        let mut img = GrayImage::new(4, 4, 0);
        img.fill_rect(Rect::new(2, 2, 10, 10), 9);
        let c = img.crop(Rect::new(1, 1, 3, 3));
        assert_eq!(c.pixels(), &[0, 0, 0, 0, 9, 9, 0, 9, 9]);
    }
}
