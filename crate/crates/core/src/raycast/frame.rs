use std::io::Write;
use std::path::Path;

use crate::transfer::Rgba;

/// 8-bit RGBA image, row-major with the origin at the top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 4]>,
}

/// Round-half-up quantization of a `[0, 1]` channel.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn quantize_rgba(c: Rgba) -> [u8; 4] {
    [quantize(c.r), quantize(c.g), quantize(c.b), quantize(c.a)]
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0, 0, 0, 0])
    }

    pub fn filled(width: usize, height: usize, px: [u8; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![px; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 4]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 4] {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [u8; 4]) {
        self.pixels[y * self.width + x] = px;
    }

    pub fn as_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    /// Binary PPM (P6); alpha is dropped.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(&p[..3]);
        }
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("png header into memory");
            writer
                .write_image_data(&self.as_bytes())
                .expect("png data into memory");
        }
        out
    }

    /// Writes PNG for `.png` paths and PPM otherwise.
    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => self.to_png(),
            _ => self.to_ppm(),
        };
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)
    }

    /// Mean absolute per-channel difference over RGB, in `[0, 1]` units.
    pub fn mean_abs_diff(&self, other: &FrameBuffer) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| a[c].abs_diff(b[c]) as u64))
            .sum();
        total as f64 / (self.pixels.len() * 3) as f64 / 255.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
        assert_eq!(quantize(1.5 / 255.0), 2);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn ppm_layout() {
        let mut f = FrameBuffer::new(2, 1);
        f.set_pixel(1, 0, [1, 2, 3, 4]);
        assert_eq!(f.to_ppm(), b"P6\n2 1\n255\n\0\0\0\x01\x02\x03".to_vec());
    }

    #[test]
    fn png_decodes_back() {
        let mut f = FrameBuffer::filled(3, 2, [10, 20, 30, 255]);
        f.set_pixel(2, 1, [200, 100, 50, 128]);
        let bytes = f.to_png();
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (3, 2));
        assert_eq!(&buf[..info.buffer_size()], f.as_bytes().as_slice());
    }
}
