//! Equirectangular RGB frames: in-memory representation, rectangle drawing
//! for the synthetic ground truth, and raster I/O (binary PPM and PNG).

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit RGB frame, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    /// New frame filled with a uniform color.
    pub fn filled(
        frame_index: usize,
        timestamp_s: f64,
        width_px: u32,
        height_px: u32,
        rgb: [u8; 3],
    ) -> Self {
        let mut pixels = vec![0u8; 3 * width_px as usize * height_px as usize];
        for chunk in pixels.chunks_exact_mut(3) {
            chunk.copy_from_slice(&rgb);
        }
        Self {
            frame_index,
            timestamp_s,
            width_px,
            height_px,
            pixels,
        }
    }

    #[inline]
    fn offset(&self, row: u32, col: u32) -> usize {
        3 * (row as usize * self.width_px as usize + col as usize)
    }

    pub fn pixel(&self, row: u32, col: u32) -> [u8; 3] {
        let o = self.offset(row, col);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set_pixel(&mut self, row: u32, col: u32, rgb: [u8; 3]) {
        let o = self.offset(row, col);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Fill a rectangle whose columns wrap around the panorama seam and whose
    /// rows are clipped to the frame.
    pub fn fill_rect_wrapped(&mut self, left: i64, top: i64, w: u32, h: u32, rgb: [u8; 3]) {
        let width = self.width_px as i64;
        let row_lo = top.max(0);
        let row_hi = (top + h as i64).min(self.height_px as i64);
        for row in row_lo..row_hi {
            for dc in 0..w as i64 {
                let col = (left + dc).rem_euclid(width) as u32;
                self.set_pixel(row as u32, col, rgb);
            }
        }
    }

    // ── binary PPM (P6) ────────────────────────────────────────────────

    pub fn write_ppm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width_px, self.height_px)?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn read_ppm<R: BufRead>(mut input: R) -> Result<Self> {
        fn token<R: BufRead>(input: &mut R) -> Result<String> {
            let mut tok = String::new();
            let mut byte = [0u8; 1];
            // skip whitespace and '#' comments
            loop {
                if input.read(&mut byte)? == 0 {
                    return Err(Error::Format("truncated PPM header".into()));
                }
                match byte[0] {
                    b'#' => {
                        let mut line = String::new();
                        input.read_line(&mut line)?;
                    }
                    c if c.is_ascii_whitespace() => {}
                    c => {
                        tok.push(c as char);
                        break;
                    }
                }
            }
            loop {
                if input.read(&mut byte)? == 0 || byte[0].is_ascii_whitespace() {
                    break;
                }
                tok.push(byte[0] as char);
            }
            Ok(tok)
        }

        if token(&mut input)? != "P6" {
            return Err(Error::Format("not a binary PPM (P6) file".into()));
        }
        let parse = |s: String| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad PPM header token '{s}'")))
        };
        let width = parse(token(&mut input)?)?;
        let height = parse(token(&mut input)?)?;
        let maxval = parse(token(&mut input)?)?;
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
        }
        let mut pixels = vec![0u8; 3 * width as usize * height as usize];
        input.read_exact(&mut pixels)?;
        Ok(Self {
            frame_index: 0,
            timestamp_s: 0.0,
            width_px: width,
            height_px: height,
            pixels,
        })
    }

    // ── PNG ────────────────────────────────────────────────────────────

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width_px, self.height_px, self.pixels.clone())
            .ok_or_else(|| Error::Format("pixel buffer does not match dimensions".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("png decode: {e}")))?
            .to_rgb8();
        Ok(Self {
            frame_index: 0,
            timestamp_s: 0.0,
            width_px: img.width(),
            height_px: img.height(),
            pixels: img.into_raw(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn patterned(w: u32, h: u32) -> Frame {
        let mut f = Frame::filled(0, 0.0, w, h, [0, 0, 0]);
        for row in 0..h {
            for col in 0..w {
                f.set_pixel(row, col, [(row % 256) as u8, (col % 256) as u8, ((col / 256) % 256) as u8]);
            }
        }
        f
    }

    #[test]
    fn ppm_round_trip() {
        let f = patterned(37, 19);
        let mut buf = Vec::new();
        f.write_ppm(&mut buf).unwrap();
        let g = Frame::read_ppm(Cursor::new(&buf)).unwrap();
        assert_eq!(f.width_px, g.width_px);
        assert_eq!(f.height_px, g.height_px);
        assert_eq!(f.pixels, g.pixels);
    }

    #[test]
    fn ppm_header_with_comment() {
        let mut buf = b"P6\n# a comment\n2 1\n255\n".to_vec();
        buf.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = Frame::read_ppm(Cursor::new(&buf)).unwrap();
        assert_eq!((f.width_px, f.height_px), (2, 1));
        assert_eq!(f.pixel(0, 1), [4, 5, 6]);
    }

    #[test]
    fn ppm_rejects_wrong_magic() {
        assert!(Frame::read_ppm(Cursor::new(b"P3\n1 1\n255\n".to_vec())).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.png");
        let f = patterned(64, 32);
        f.write_png(&path).unwrap();
        let g = Frame::read_png(&path).unwrap();
        assert_eq!(f.pixels, g.pixels);
    }

    #[test]
    fn rect_wraps_columns_and_clips_rows() {
        let mut f = Frame::filled(0, 0.0, 10, 6, [0, 0, 0]);
        f.fill_rect_wrapped(8, -2, 4, 5, [255, 0, 0]);
        // columns 8, 9, 0, 1; rows 0..3
        for row in 0..3 {
            for col in [8u32, 9, 0, 1] {
                assert_eq!(f.pixel(row, col), [255, 0, 0], "row {row} col {col}");
            }
            assert_eq!(f.pixel(row, 2), [0, 0, 0]);
            assert_eq!(f.pixel(row, 7), [0, 0, 0]);
        }
        for col in 0..10 {
            assert_eq!(f.pixel(3, col), [0, 0, 0]);
        }
    }
}
