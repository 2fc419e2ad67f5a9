//! 3×5 bitmap glyphs for object labels.

use super::raster::RgbImage;

const W: usize = 3;
const H: usize = 5;

fn glyph(c: char) -> Option<[u8; H]> {
    // Each row is three bits, most significant bit on the left.
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        _ => return None,
    })
}

/// Pixel size of `text` at the given scale.
pub fn text_size(text: &str, scale: u32) -> (u32, u32) {
    let n = text.chars().count() as u32;
    let s = scale.max(1);
    if n == 0 {
        return (0, 0);
    }
    ((n * (W as u32 + 1) - 1) * s, H as u32 * s)
}

/// Draws `text` with its top-left corner at `(col, row)`. Unknown
/// characters are left blank.
pub fn draw_text(img: &mut RgbImage, col: i64, row: i64, text: &str, scale: u32, color: [u8; 3]) {
    let s = scale.max(1) as i64;
    for (k, ch) in text.chars().enumerate() {
        let Some(rows) = glyph(ch) else { continue };
        let x0 = col + k as i64 * (W as i64 + 1) * s;
        for (r, bits) in rows.iter().enumerate() {
            for c in 0..W {
                if bits >> (W - 1 - c) & 1 == 1 {
                    for dy in 0..s {
                        for dx in 0..s {
                            img.put(x0 + c as i64 * s + dx, row + r as i64 * s + dy, color);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_one_has_eight_pixels() {
        let mut img = RgbImage::new(5, 7, [255; 3]);
        draw_text(&mut img, 1, 1, "1", 1, [0; 3]);
        let dark = img.as_bytes().chunks(3).filter(|p| p[0] == 0).count();
        assert_eq!(dark, 8);
        assert_eq!(text_size("12", 2), (14, 10));
    }
}
