//! Grayscale image representation and the pixel operations shared by every
//! detector: 2-D convolution, min-max normalization and percentile
//! thresholding. File I/O lives in [`io`].

mod io;

pub use io::{encode_pgm, load_image, save_image, ImageFormat};

use rayon::prelude::*;
use thiserror::Error;

/// Errors raised by image construction, I/O and pixel operations.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt pixel data: {0}")]
    CorruptData(String),
    #[error("png codec error: {0}")]
    Png(String),
    #[error("invalid dimensions {width}x{height} for {len} values")]
    Dimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image contains non-finite values")]
    NonFinite,
    #[error("channel sizes differ: {0}")]
    ChannelMismatch(String),
    #[error("kernel {kw}x{kh} is larger than image {w}x{h}")]
    KernelTooLarge {
        kw: usize,
        kh: usize,
        w: usize,
        h: usize,
    },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("percentile {0} outside [0, 1]")]
    Percentile(f64),
}

/// A single-channel image of `f64` pixels stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// All-zero image. Panics if either dimension is zero.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!(value.is_finite());
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImageError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite);
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Image::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        debug_assert!(img.data.iter().all(|v| v.is_finite()));
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Applies `f` to every pixel.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two equally sized images.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        assert!(self.same_size(other), "image sizes differ");
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Top-left `width` x `height` sub-image.
    pub fn crop(&self, width: usize, height: usize) -> Image {
        assert!(width <= self.width && height <= self.height && width > 0 && height > 0);
        Image::from_fn(width, height, |x, y| self.get(x, y))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A small convolution mask with an anchor cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
    anchor: (usize, usize),
}

impl Kernel {
    /// Creates a kernel anchored at `(floor((kw-1)/2), floor((kh-1)/2))`.
    pub fn new(width: usize, height: usize, coeffs: Vec<f64>) -> Result<Self, ImageError> {
        let anchor = ((width.max(1) - 1) / 2, (height.max(1) - 1) / 2);
        Self::with_anchor(width, height, coeffs, anchor)
    }

    /// `anchor` is `(column, row)` inside the grid.
    pub fn with_anchor(
        width: usize,
        height: usize,
        coeffs: Vec<f64>,
        anchor: (usize, usize),
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || coeffs.len() != width * height {
            return Err(ImageError::InvalidKernel(format!(
                "{width}x{height} kernel with {} coefficients",
                coeffs.len()
            )));
        }
        if anchor.0 >= width || anchor.1 >= height {
            return Err(ImageError::InvalidKernel(format!(
                "anchor {anchor:?} outside {width}x{height} grid"
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ImageError::InvalidKernel("non-finite coefficient".into()));
        }
        Ok(Kernel {
            width,
            height,
            coeffs,
            anchor,
        })
    }

    /// Builds a square kernel from row-major rows.
    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        let coeffs = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Kernel::new(N, N, coeffs).expect("square kernel is valid")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient at column `i`, row `j`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.coeffs[j * self.width + i]
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn transpose(&self) -> Kernel {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for i in 0..self.width {
            for j in 0..self.height {
                coeffs.push(self.at(i, j));
            }
        }
        Kernel {
            width: self.height,
            height: self.width,
            coeffs,
            anchor: (self.anchor.1, self.anchor.0),
        }
    }
}

/// How pixels outside the image are synthesized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Border {
    /// Clamp to the nearest edge pixel.
    #[default]
    Replicate,
    /// Treat outside pixels as zero.
    Zero,
}

impl std::str::FromStr for Border {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replicate" => Ok(Border::Replicate),
            "zero" => Ok(Border::Zero),
            other => Err(format!("unknown border mode '{other}'")),
        }
    }
}

impl std::fmt::Display for Border {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Border::Replicate => "replicate",
            Border::Zero => "zero",
        })
    }
}

/// True 2-D convolution (kernel flipped), output the same size as `src`.
///
/// `out(x, y) = sum_j sum_i k(i, j) * src(x + ax - i, y + ay - j)` where
/// `(ax, ay)` is the kernel anchor. The sum runs row-major over the kernel
/// starting from `0.0`, so results are reproducible bit for bit.
pub fn convolve(src: &Image, k: &Kernel, border: Border) -> Result<Image, ImageError> {
    let (w, h) = (src.width, src.height);
    let (kw, kh) = (k.width, k.height);
    if kw > w || kh > h {
        return Err(ImageError::KernelTooLarge { kw, kh, w, h });
    }
    let (ax, ay) = k.anchor;
    // Source column for output x and kernel column i is x + ax - i, so the
    // padded buffer needs kw-1-ax columns on the left and ax on the right.
    let pad_l = kw - 1 - ax;
    let pad_t = kh - 1 - ay;
    let pw = w + kw - 1;
    let ph = h + kh - 1;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = py as isize - pad_t as isize;
        let row = match border {
            Border::Replicate => Some(sy.clamp(0, h as isize - 1) as usize),
            Border::Zero => (0..h as isize).contains(&sy).then_some(sy as usize),
        };
        let Some(row) = row else { continue };
        for px in 0..pw {
            let sx = px as isize - pad_l as isize;
            padded[py * pw + px] = match border {
                Border::Replicate => src.data[row * w + sx.clamp(0, w as isize - 1) as usize],
                Border::Zero if (0..w as isize).contains(&sx) => src.data[row * w + sx as usize],
                Border::Zero => 0.0,
            };
        }
    }

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..kh {
                // padded row index of source row y + ay - j
                let prow = &padded[(y + kh - 1 - j) * pw..];
                for i in 0..kw {
                    acc += k.coeffs[j * kw + i] * prow[x + kw - 1 - i];
                }
            }
            *o = acc;
        }
    });
    Ok(Image {
        width: w,
        height: h,
        data: out,
    })
}

/// Luminance from three channels using BT.601 weights, clamped to `[0, 1]`.
pub fn to_grayscale(r: &Image, g: &Image, b: &Image) -> Result<Image, ImageError> {
    if !r.same_size(g) || !r.same_size(b) {
        return Err(ImageError::ChannelMismatch(format!(
            "r {}x{}, g {}x{}, b {}x{}",
            r.width, r.height, g.width, g.height, b.width, b.height
        )));
    }
    let data = r
        .data
        .iter()
        .zip(&g.data)
        .zip(&b.data)
        .map(|((&r, &g), &b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
        .collect();
    Ok(Image {
        width: r.width,
        height: r.height,
        data,
    })
}

/// Affine min-max map onto `[0, 1]`; a constant image maps to zeros.
pub fn normalize(src: &Image) -> Image {
    let (lo, hi) = src.min_max();
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return Image::zeros(src.width, src.height);
    }
    src.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

/// Value at the given fraction of the cumulative histogram: the pixel of
/// rank `floor(p * N)` (clamped to the last pixel) in ascending order.
pub fn percentile_value(src: &Image, percentile: f64) -> Result<f64, ImageError> {
    if !(0.0..=1.0).contains(&percentile) {
        return Err(ImageError::Percentile(percentile));
    }
    let mut sorted = src.data.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    Ok(sorted[rank])
}

/// Zeroes every pixel strictly below the `percentile` value.
/// Returns the thresholded image and the cut value.
pub fn threshold(src: &Image, percentile: f64) -> Result<(Image, f64), ImageError> {
    let t = percentile_value(src, percentile)?;
    Ok((src.map(|v| if v < t { 0.0 } else { v }), t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(src: &Image, k: &Kernel, border: Border) -> Image {
        let (w, h) = (src.width() as isize, src.height() as isize);
        let (ax, ay) = (k.anchor().0 as isize, k.anchor().1 as isize);
        Image::from_fn(src.width(), src.height(), |x, y| {
            let mut acc = 0.0;
            for j in 0..k.height() {
                for i in 0..k.width() {
                    let sx = x as isize + ax - i as isize;
                    let sy = y as isize + ay - j as isize;
                    let v = match border {
                        Border::Replicate => {
                            src.get(sx.clamp(0, w - 1) as usize, sy.clamp(0, h - 1) as usize)
                        }
                        Border::Zero => {
                            if sx < 0 || sy < 0 || sx >= w || sy >= h {
                                0.0
                            } else {
                                src.get(sx as usize, sy as usize)
                            }
                        }
                    };
                    acc += k.at(i, j) * v;
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel() {
        let img = Image::from_fn(5, 4, |x, y| (x * 7 + y * 3) as f64 / 40.0);
        let k = Kernel::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(convolve(&img, &k, Border::Replicate).unwrap(), img);
        assert_eq!(convolve(&img, &k, Border::Zero).unwrap(), img);
    }

    #[test]
    fn zero_sum_kernel_kills_constant() {
        let img = Image::filled(6, 6, 0.7);
        let k = Kernel::from_rows([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]);
        let out = convolve(&img, &k, Border::Replicate).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolution_flips_kernel() {
        // A delta image reproduces the kernel itself around the anchor.
        let mut img = Image::zeros(5, 5);
        img.set(2, 2, 1.0);
        let k = Kernel::from_rows([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let out = convolve(&img, &k, Border::Zero).unwrap();
        assert_eq!(out.get(1, 1), 1.0);
        assert_eq!(out.get(3, 1), 3.0);
        assert_eq!(out.get(1, 3), 7.0);
        assert_eq!(out.get(2, 2), 5.0);
    }

    #[test]
    fn even_kernel_anchor() {
        let k = Kernel::new(4, 4, vec![0.0; 16]).unwrap();
        assert_eq!(k.anchor(), (1, 1));
        let k = Kernel::new(4, 2, vec![0.0; 8]).unwrap();
        assert_eq!(k.anchor(), (1, 0));
    }

    #[test]
    fn matches_naive_on_odd_and_even_kernels() {
        let img = Image::from_fn(9, 7, |x, y| ((x * 31 + y * 17) % 11) as f64 / 10.0);
        for (kw, kh) in [(3, 3), (4, 4), (2, 3), (5, 1)] {
            let coeffs = (0..kw * kh).map(|i| (i as f64 * 0.37).sin()).collect();
            let k = Kernel::new(kw, kh, coeffs).unwrap();
            for border in [Border::Replicate, Border::Zero] {
                assert_eq!(convolve(&img, &k, border).unwrap(), naive(&img, &k, border));
            }
        }
    }

    #[test]
    fn kernel_larger_than_image() {
        let img = Image::zeros(3, 3);
        let k = Kernel::new(4, 4, vec![0.0; 16]).unwrap();
        assert!(matches!(
            convolve(&img, &k, Border::Replicate),
            Err(ImageError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn bad_kernels_rejected() {
        assert!(Kernel::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Kernel::with_anchor(2, 2, vec![1.0; 4], (2, 0)).is_err());
        assert!(Kernel::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn grayscale_weights() {
        let half = Image::filled(3, 2, 0.5);
        let g = to_grayscale(&half, &half, &half).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let one = Image::filled(1, 1, 1.0);
        let zero = Image::zeros(1, 1);
        let red = to_grayscale(&one, &zero, &zero).unwrap();
        assert!((red.get(0, 0) - 0.299).abs() < 1e-15);

        let black = to_grayscale(&zero, &zero, &zero).unwrap();
        assert_eq!(black.get(0, 0), 0.0);

        assert!(matches!(
            to_grayscale(&one, &Image::zeros(2, 1), &zero),
            Err(ImageError::ChannelMismatch(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let a = Image::from_vec(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(normalize(&a).data(), &[0.0, 1.0]);
        let c = Image::filled(3, 3, 0.4);
        assert!(normalize(&c).data().iter().all(|&v| v == 0.0));
        let b = Image::from_vec(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(normalize(&b).data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn threshold_examples() {
        let img = Image::from_fn(4, 4, |x, y| (x + 4 * y) as f64 / 15.0);
        let (same, t0) = threshold(&img, 0.0).unwrap();
        assert_eq!(same, img);
        assert_eq!(t0, 0.0);

        let (top, t1) = threshold(&img, 1.0).unwrap();
        assert_eq!(t1, 1.0);
        assert_eq!(top.data().iter().filter(|&&v| v > 0.0).count(), 1);

        // 8 background pixels at 0.1, 8 foreground at 0.9
        let bimodal = Image::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 });
        let (fg, t) = threshold(&bimodal, 0.5).unwrap();
        assert_eq!(t, 0.9);
        for (a, b) in fg.data().iter().zip(bimodal.data()) {
            if *b == 0.9 {
                assert_eq!(*a, 0.9);
            } else {
                assert_eq!(*a, 0.0);
            }
        }

        assert!(matches!(
            threshold(&img, 1.5),
            Err(ImageError::Percentile(_))
        ));
        assert!(threshold(&img, -0.1).is_err());
    }

    #[test]
    fn from_vec_validation() {
        assert!(Image::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::from_vec(0, 2, vec![]).is_err());
        assert!(matches!(
            Image::from_vec(1, 1, vec![f64::INFINITY]),
            Err(ImageError::NonFinite)
        ));
    }
}
