#![allow(dead_code)]

use eigedge::{Border, Image, Kernel};
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _| rng.gen::<f64>())
}

pub fn random_kernel(rng: &mut impl Rng, w: usize, h: usize) -> Kernel {
    Kernel::new(w, h, (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct four-loop convolution, summing kernel rows then columns from 0.0.
pub fn naive_convolve(src: &Image, k: &Kernel, border: Border) -> Image {
    let (w, h) = (src.width() as isize, src.height() as isize);
    let (ax, ay) = (k.anchor().0 as isize, k.anchor().1 as isize);
    let mut out = Image::zeros(src.width(), src.height());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for j in 0..k.height() as isize {
                for i in 0..k.width() as isize {
                    let (sx, sy) = (x + ax - i, y + ay - j);
                    let v = match border {
                        Border::Replicate => {
                            src.get(sx.clamp(0, w - 1) as usize, sy.clamp(0, h - 1) as usize)
                        }
                        Border::Zero if sx < 0 || sy < 0 || sx >= w || sy >= h => 0.0,
                        Border::Zero => src.get(sx as usize, sy as usize),
                    };
                    acc += k.at(i as usize, j as usize) * v;
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Rotates 90 degrees counter-clockwise: output (x, y) = input (w-1-y, x).
pub fn rotate_ccw(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(h, w, |x, y| img.get(w - 1 - y, x))
}
