//! Classical baseline detectors: Sobel, Prewitt, Laplacian of Gaussian and
//! Canny.
//!
//! All convolutions use [`convolve`] (true convolution, kernel flipped), so
//! with the standard `[-1 0 1]` masks `gx` is positive where intensity falls
//! with increasing `x`. Magnitudes and the 4-bin direction quantization used
//! by Canny are unaffected by that sign.

use std::collections::VecDeque;
use std::f64::consts::PI;

use thiserror::Error;

use crate::imgcore::{convolve, normalize, percentile_value, Border, Image, ImageError, Kernel};

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error("image {w}x{h} is smaller than the {min}x{min} minimum")]
    TooSmall { w: usize, h: usize, min: usize },
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("kernel size must be odd, got {0}")]
    EvenSize(usize),
    #[error("invalid Canny thresholds: need 0 < low < high <= 1, got low={low} high={high}")]
    Thresholds { low: f64, high: f64 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Gradient components with magnitude and direction (radians, `(-pi, pi]`).
#[derive(Clone, Debug)]
pub struct GradientField {
    pub gx: Image,
    pub gy: Image,
    pub magnitude: Image,
    pub direction: Image,
}

impl GradientField {
    fn from_components(gx: Image, gy: Image) -> Self {
        let magnitude = gx.zip_map(&gy, f64::hypot);
        let direction = gy.zip_map(&gx, f64::atan2);
        GradientField {
            gx,
            gy,
            magnitude,
            direction,
        }
    }
}

pub fn sobel_kernels() -> (Kernel, Kernel) {
    let gx = Kernel::from_rows([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]);
    let gy = gx.transpose();
    (gx, gy)
}

pub fn prewitt_kernels() -> (Kernel, Kernel) {
    let gx = Kernel::from_rows([[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]]);
    let gy = gx.transpose();
    (gx, gy)
}

fn gradient(
    src: &Image,
    (kx, ky): (Kernel, Kernel),
    border: Border,
) -> Result<GradientField, ClassicError> {
    if src.width() < 3 || src.height() < 3 {
        return Err(ClassicError::TooSmall {
            w: src.width(),
            h: src.height(),
            min: 3,
        });
    }
    let gx = convolve(src, &kx, border)?;
    let gy = convolve(src, &ky, border)?;
    Ok(GradientField::from_components(gx, gy))
}

/// Sobel gradient with replicate border.
pub fn sobel(src: &Image) -> Result<GradientField, ClassicError> {
    gradient(src, sobel_kernels(), Border::Replicate)
}

pub fn sobel_with_border(src: &Image, border: Border) -> Result<GradientField, ClassicError> {
    gradient(src, sobel_kernels(), border)
}

/// Prewitt gradient with replicate border.
pub fn prewitt(src: &Image) -> Result<GradientField, ClassicError> {
    gradient(src, prewitt_kernels(), Border::Replicate)
}

pub fn prewitt_with_border(src: &Image, border: Border) -> Result<GradientField, ClassicError> {
    gradient(src, prewitt_kernels(), border)
}

/// Binary edge map from a gradient magnitude: normalize, then keep pixels at
/// or above the `percentile` value (and strictly positive).
pub fn binarize_magnitude(magnitude: &Image, percentile: f64) -> Result<Image, ClassicError> {
    let norm = normalize(magnitude);
    let t = percentile_value(&norm, percentile)?;
    Ok(norm.map(|v| if v >= t && v > 0.0 { 1.0 } else { 0.0 }))
}

/// Raw Laplacian-of-Gaussian value at offset `(x, y)` from the centre.
pub fn log_value(x: f64, y: f64, sigma: f64) -> f64 {
    let r2 = (x * x + y * y) / (2.0 * sigma * sigma);
    -1.0 / (PI * sigma.powi(4)) * (1.0 - r2) * (-r2).exp()
}

fn check_sigma(sigma: f64) -> Result<(), ClassicError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(ClassicError::Sigma(sigma))
    }
}

/// Sampled LoG kernel of odd side `size`, shifted so the coefficients sum to 0.
pub fn log_kernel(sigma: f64, size: usize) -> Result<Kernel, ClassicError> {
    check_sigma(sigma)?;
    if size.is_multiple_of(2) {
        return Err(ClassicError::EvenSize(size));
    }
    let half = (size / 2) as isize;
    let mut coeffs = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            coeffs.push(log_value(x as f64, y as f64, sigma));
        }
    }
    let mean = coeffs.iter().sum::<f64>() / coeffs.len() as f64;
    coeffs.iter_mut().for_each(|c| *c -= mean);
    Ok(Kernel::new(size, size, coeffs)?)
}

/// Side length `2 * ceil(3 sigma) + 1`.
pub fn default_kernel_size(sigma: f64) -> usize {
    2 * (3.0 * sigma).ceil() as usize + 1
}

/// Parameters for zero-crossing LoG detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogParams {
    pub sigma: f64,
    /// Minimum response jump across a crossing, as a fraction of `max |response|`.
    pub slope_floor: f64,
}

impl Default for LogParams {
    fn default() -> Self {
        LogParams {
            sigma: 2.0,
            slope_floor: 0.01,
        }
    }
}

pub fn log_response(src: &Image, sigma: f64) -> Result<Image, ClassicError> {
    let k = log_kernel(sigma, default_kernel_size(sigma))?;
    Ok(convolve(src, &k, Border::Replicate)?)
}

/// Binary zero-crossing map of the LoG response.
///
/// Each horizontally or vertically adjacent pair whose responses have strictly
/// opposite signs and differ by more than the slope floor marks one edge
/// pixel: the one with the smaller absolute response (the first on ties).
pub fn log_detect(src: &Image, params: &LogParams) -> Result<Image, ClassicError> {
    let resp = log_response(src, params.sigma)?;
    Ok(zero_crossings(&resp, params.slope_floor))
}

pub fn zero_crossings(resp: &Image, slope_floor: f64) -> Image {
    let (w, h) = (resp.width(), resp.height());
    let max_abs = resp.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = Image::zeros(w, h);
    if max_abs == 0.0 {
        return out;
    }
    let floor = slope_floor * max_abs;
    for y in 0..h {
        for x in 0..w {
            let a = resp.get(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let b = resp.get(nx, ny);
                let flips = (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0);
                if flips && (a - b).abs() > floor {
                    if a.abs() <= b.abs() {
                        out.set(x, y, 1.0);
                    } else {
                        out.set(nx, ny, 1.0);
                    }
                }
            }
        }
    }
    out
}

/// Smoothing with a unit-sum sampled Gaussian of half-width `ceil(3 sigma)`.
///
/// The 2-D kernel is separable, so it is applied as a row pass followed by a
/// column pass.
pub fn gaussian_smooth(src: &Image, sigma: f64) -> Result<Image, ClassicError> {
    gaussian_smooth_with_border(src, sigma, Border::Replicate)
}

pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>, ClassicError> {
    check_sigma(sigma)?;
    let half = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

pub fn gaussian_smooth_with_border(
    src: &Image,
    sigma: f64,
    border: Border,
) -> Result<Image, ClassicError> {
    let taps = gaussian_kernel_1d(sigma)?;
    let n = taps.len();
    let row = Kernel::new(n, 1, taps.clone())?;
    let col = Kernel::new(1, n, taps)?;
    let tmp = convolve(src, &row, border)?;
    Ok(convolve(&tmp, &col, border)?)
}

/// Canny parameters; thresholds are fractions of the maximum gradient magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            low: 0.1,
            high: 0.3,
        }
    }
}

impl CannyParams {
    pub fn new(sigma: f64, low: f64, high: f64) -> Result<Self, ClassicError> {
        let p = CannyParams { sigma, low, high };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ClassicError> {
        check_sigma(self.sigma)?;
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(ClassicError::Thresholds {
                low: self.low,
                high: self.high,
            });
        }
        Ok(())
    }
}

/// Quantizes a gradient direction into one of four bins and returns the
/// pixel step `(dx, dy)` along it: 0 deg, 45 deg, 90 deg or 135 deg.
pub fn direction_step(theta: f64) -> (isize, isize) {
    let mut deg = theta.to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Thins the gradient magnitude to ridge pixels along the quantized
/// direction. A pixel survives when it is strictly greater than its backward
/// neighbour and not smaller than its forward neighbour, so a two-pixel
/// plateau keeps exactly one pixel.
///
/// Survivors that still have surviving neighbours on both sides along their
/// own direction (possible where neighbouring directions fall in different
/// bins) are then dropped, evaluated against the same candidate set, so the
/// result never contains a three-pixel run across the gradient.
pub fn non_max_suppression(grad: &GradientField) -> Image {
    let mag = &grad.magnitude;
    let (w, h) = (mag.width() as isize, mag.height() as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
    let at = |x: isize, y: isize| {
        if inside(x, y) {
            mag.get(x as usize, y as usize)
        } else {
            0.0
        }
    };
    let step = |x: usize, y: usize| direction_step(grad.direction.get(x, y));
    let candidates = Image::from_fn(mag.width(), mag.height(), |x, y| {
        let m = mag.get(x, y);
        if m == 0.0 {
            return 0.0;
        }
        let (dx, dy) = step(x, y);
        let (x, y) = (x as isize, y as isize);
        if m > at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
            m
        } else {
            0.0
        }
    });
    let kept = |x: isize, y: isize| inside(x, y) && candidates.get(x as usize, y as usize) > 0.0;
    Image::from_fn(mag.width(), mag.height(), |x, y| {
        let m = candidates.get(x, y);
        if m == 0.0 {
            return 0.0;
        }
        let (dx, dy) = step(x, y);
        let (x, y) = (x as isize, y as isize);
        if kept(x - dx, y - dy) && kept(x + dx, y + dy) {
            0.0
        } else {
            m
        }
    })
}

/// Double-threshold hysteresis: pixels `>= high` seed, pixels `>= low`
/// connected to a seed through 8-neighbours survive.
pub fn hysteresis(thin: &Image, low: f64, high: f64) -> Image {
    let (w, h) = (thin.width(), thin.height());
    let mut out = Image::zeros(w, h);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let v = thin.get(x, y);
            if v > 0.0 && v >= high {
                out.set(x, y, 1.0);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let v = thin.get(nx, ny);
                if out.get(nx, ny) == 0.0 && v > 0.0 && v >= low {
                    out.set(nx, ny, 1.0);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    out
}

const GRADIENT_NOISE_FLOOR: f64 = 1e-10;

/// Canny detector returning the suppressed gradient along with the binary map.
pub fn canny_stages(
    src: &Image,
    params: &CannyParams,
) -> Result<(GradientField, Image, Image), ClassicError> {
    params.validate()?;
    let smooth = gaussian_smooth(src, params.sigma)?;
    let grad = sobel(&smooth)?;
    let thin = non_max_suppression(&grad);
    let (_, max) = grad.magnitude.min_max();
    // rounding residue of zero-sum masks on flat input is not an edge
    let (lo, hi) = src.min_max();
    let floor = GRADIENT_NOISE_FLOOR * lo.abs().max(hi.abs()).max(1.0);
    let edges = if max > floor {
        hysteresis(&thin, params.low * max, params.high * max)
    } else {
        Image::zeros(src.width(), src.height())
    };
    Ok((grad, thin, edges))
}

/// Binary Canny edge map.
pub fn canny(src: &Image, params: &CannyParams) -> Result<Image, ClassicError> {
    canny_stages(src, params).map(|(_, _, edges)| edges)
}
