use thiserror::Error;

/// Row-major 8-bit RGB image; row 0 is the top of the picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decoding failed: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Layout(String),
}

impl RgbImage {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&fill);
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, col: u32, row: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes a pixel; coordinates outside the image are ignored.
    pub fn put(&mut self, col: i64, row: i64, color: [u8; 3]) {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return;
        }
        let i = (row as usize * self.width as usize + col as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    /// Fills every pixel whose centre lies inside the convex polygon.
    pub fn fill_convex(&mut self, poly: &[[f64; 2]], color: [u8; 3]) {
        if poly.len() < 3 {
            return;
        }
        let min_c = poly.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let max_c = poly.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.width as f64) as i64;
        let min_r = poly.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
        let max_r = poly.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(self.height as f64) as i64;
        // Orientation-independent inside test.
        let area: f64 = (0..poly.len())
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        let sign = if area >= 0.0 { 1.0 } else { -1.0 };
        for r in min_r..max_r {
            for c in min_c..max_c {
                let p = [c as f64 + 0.5, r as f64 + 0.5];
                let inside = (0..poly.len()).all(|i| {
                    let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                    sign * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) >= 0.0
                });
                if inside {
                    self.put(c, r, color);
                }
            }
        }
    }

    /// Segment of the given pixel width, drawn as a filled quad.
    pub fn draw_segment(&mut self, a: [f64; 2], b: [f64; 2], width: f64, color: [u8; 3]) {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len < 1e-12 {
            return;
        }
        let h = width.max(1.0) / 2.0;
        let n = [-(b[1] - a[1]) / len * h, (b[0] - a[0]) / len * h];
        self.fill_convex(
            &[
                [a[0] + n[0], a[1] + n[1]],
                [b[0] + n[0], b[1] + n[1]],
                [b[0] - n[0], b[1] - n[1]],
                [a[0] - n[0], a[1] - n[1]],
            ],
            color,
        );
    }

    /// Lossless PNG bytes; identical images give identical bytes.
    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Default);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.data)?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let decoder = png::Decoder::new(bytes);
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf)?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(ImageError::Layout(format!("{:?} {:?}", info.color_type, info.bit_depth)));
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            width: info.width,
            height: info.height,
            data: buf,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let mut img = RgbImage::new(7, 5, [1, 2, 3]);
        img.put(3, 2, [200, 100, 50]);
        let bytes = img.to_png().unwrap();
        assert_eq!(RgbImage::from_png(&bytes).unwrap(), img);
        assert_eq!(img.to_png().unwrap(), bytes);
    }

    #[test]
    fn square_fill_counts_pixel_centres() {
        let mut img = RgbImage::new(10, 10, [0; 3]);
        img.fill_convex(&[[2.0, 2.0], [6.0, 2.0], [6.0, 5.0], [2.0, 5.0]], [9; 3]);
        let filled = img.as_bytes().chunks(3).filter(|p| p[0] == 9).count();
        assert_eq!(filled, 12);
    }
}
