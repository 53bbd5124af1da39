//! PGM (P2/P5) and 8-bit PNG reading and writing.
//! https://netpbm.sourceforge.net/doc/pgm.html

use std::fs;
use std::path::Path;

use super::{to_grayscale, Image, ImageError};

/// On-disk encodings understood by [`save_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    PgmAscii,
    PgmBinary,
    Png,
}

impl ImageFormat {
    /// `.pgm` maps to binary PGM, `.png` to PNG.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(ImageFormat::PgmBinary),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a PGM or PNG file into a `[0, 1]` grayscale image. Colour PNGs go
/// through [`to_grayscale`].
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(&bytes)
    } else {
        let head: String = bytes
            .iter()
            .take(2)
            .map(|&b| if b.is_ascii_graphic() { b as char } else { '?' })
            .collect();
        Err(ImageError::UnsupportedFormat(format!(
            "{}: unrecognised magic '{head}'",
            path.display()
        )))
    }
}

/// Cursor over the whitespace/comment separated PGM header tokens.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("{what} out of range"))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, ImageError> {
    let binary = bytes[1] == b'5';
    let mut tok = Tokens { bytes, pos: 2 };
    let header = |e: String| ImageError::CorruptHeader(e);
    let width = tok.next_uint("width").map_err(header)?;
    let height = tok.next_uint("height").map_err(header)?;
    let maxval = tok.next_uint("maxval").map_err(header)?;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(ImageError::CorruptHeader("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "16-bit PGM (maxval {maxval})"
        )));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::CorruptHeader("dimensions overflow".into()))?;
    let scale = maxval as f64;

    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates maxval from the raster
        if tok.pos >= bytes.len() || !bytes[tok.pos].is_ascii_whitespace() {
            return Err(ImageError::CorruptHeader("missing raster separator".into()));
        }
        let body = &bytes[tok.pos + 1..];
        if body.len() < n {
            return Err(ImageError::CorruptData(format!(
                "expected {n} bytes, found {}",
                body.len()
            )));
        }
        body[..n].iter().map(|&b| b as usize).collect()
    } else {
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let px = tok
                .next_uint("pixel")
                .map_err(|e| ImageError::CorruptData(format!("pixel {i}: {e}")))?;
            v.push(px);
        }
        v
    };
    if let Some(bad) = raw.iter().find(|&&p| p > maxval) {
        return Err(ImageError::CorruptData(format!(
            "sample {bad} exceeds maxval {maxval}"
        )));
    }
    Image::from_vec(
        width,
        height,
        raw.into_iter().map(|p| p as f64 / scale).collect(),
    )
}

fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if dynimg.color().has_color() {
        let rgb = dynimg.to_rgb8();
        let channel =
            |c: usize| Image::from_vec(w, h, rgb.pixels().map(|p| p.0[c] as f64 / 255.0).collect());
        to_grayscale(&channel(0)?, &channel(1)?, &channel(2)?)
    } else {
        let luma = dynimg.to_luma8();
        Image::from_vec(w, h, luma.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a PGM file in memory. Header is `P2\n<w> <h>\n255\n` (or `P5`).
/// ASCII rasters hold one image row per line.
pub fn encode_pgm(img: &Image, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    if binary {
        out.extend(img.data().iter().map(|&v| quantize(v)));
    } else {
        for row in img.data().chunks(img.width()) {
            let line: Vec<String> = row.iter().map(|&v| quantize(v).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

/// Writes `img` quantized to 8 bits. Values outside `[0, 1]` are clamped.
pub fn save_image(
    img: &Image,
    path: impl AsRef<Path>,
    format: ImageFormat,
) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = match format {
        ImageFormat::PgmAscii => encode_pgm(img, false),
        ImageFormat::PgmBinary => encode_pgm(img, true),
        ImageFormat::Png => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
            let gray = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
                .expect("buffer matches dimensions");
            let mut out = std::io::Cursor::new(Vec::new());
            gray.write_to(&mut out, image::ImageFormat::Png)
                .map_err(|e| ImageError::Png(e.to_string()))?;
            out.into_inner()
        }
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}
