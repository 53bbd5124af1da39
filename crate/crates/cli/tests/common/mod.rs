#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eigedge::houghcells::draw_circle;
use eigedge::imgcore::{save_image, ImageFormat};
use eigedge::{Border, Image, Kernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn eigedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigedge"))
        .args(args)
        .output()
        .expect("spawn eigedge")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn write_pgm(dir: &Path, name: &str, img: &Image) -> PathBuf {
    let path = dir.join(name);
    save_image(img, &path, ImageFormat::PgmBinary).unwrap();
    path
}

/// Smooth waves with a bright block and light noise, quantized to 8 bits so
/// a PGM round trip is lossless.
pub fn natural_like(seed: u64, w: usize, h: usize) -> Image {
    let mut r = rng(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                r.gen_range(0.02..0.4),
                r.gen_range(0.02..0.4),
                r.gen_range(0.0..6.3),
                r.gen_range(0.05..0.2),
            )
        })
        .collect();
    let noise: Vec<f64> = (0..w * h).map(|_| r.gen_range(-0.03..0.03)).collect();
    Image::from_fn(w, h, |x, y| {
        let mut v = 0.5;
        for &(fx, fy, ph, amp) in &waves {
            v += amp * (fx * x as f64 + fy * y as f64 + ph).sin();
        }
        if (w / 4..w / 2).contains(&x) && (h / 3..2 * h / 3).contains(&y) {
            v += 0.3;
        }
        ((v + noise[y * w + x]).clamp(0.0, 1.0) * 255.0).round() / 255.0
    })
}

/// White 64-pixel square at 32..96 on a black 128x128 frame.
pub fn square_fixture() -> Image {
    Image::from_fn(128, 128, |x, y| {
        if (32..96).contains(&x) && (32..96).contains(&y) {
            1.0
        } else {
            0.0
        }
    })
}

/// Distance from a pixel centre to the square outline (lines at 31.5 and 95.5).
pub fn square_boundary_distance(x: usize, y: usize) -> f64 {
    let (lo, hi) = (31.5, 95.5);
    let (x, y) = (x as f64, y as f64);
    let dx = if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    };
    let dy = if y < lo {
        lo - y
    } else if y > hi {
        y - hi
    } else {
        0.0
    };
    if dx == 0.0 && dy == 0.0 {
        (x - lo).min(hi - x).min(y - lo).min(hi - y)
    } else {
        dx.hypot(dy)
    }
}

/// Inner boundary pixels of the square, one list per side: top, bottom, left, right.
pub fn square_sides() -> [(&'static str, Vec<(usize, usize)>); 4] {
    let span = 32..96usize;
    [
        ("top", span.clone().map(|x| (x, 32)).collect()),
        ("bottom", span.clone().map(|x| (x, 95)).collect()),
        ("left", span.clone().map(|y| (32, y)).collect()),
        ("right", span.map(|y| (95, y)).collect()),
    ]
}

/// Whether some pixel of `mask` lies within Euclidean distance `tol` of `(x, y)`.
pub fn near_mask(mask: &[bool], w: usize, h: usize, x: usize, y: usize, tol: f64) -> bool {
    let t = tol.floor() as isize;
    for dy in -t..=t {
        for dx in -t..=t {
            let (sx, sy) = (x as isize + dx, y as isize + dy);
            if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                continue;
            }
            if ((dx * dx + dy * dy) as f64).sqrt() <= tol && mask[sy as usize * w + sx as usize] {
                return true;
            }
        }
    }
    false
}

pub fn box_blur(img: &Image, side: usize) -> Image {
    let k = Kernel::new(side, side, vec![1.0 / (side * side) as f64; side * side]).unwrap();
    eigedge::imgcore::convolve(img, &k, Border::Replicate).unwrap()
}

/// `n` non-overlapping midpoint circles of radius 3..=8 inside a `size` frame.
pub fn circle_field(seed: u64, size: usize, n: usize) -> (Image, Vec<(isize, isize, usize)>) {
    let mut r = rng(seed);
    let mut placed: Vec<(isize, isize, usize)> = Vec::new();
    while placed.len() < n {
        let rad = r.gen_range(3..=8usize);
        let margin = rad as isize + 2;
        let cx = r.gen_range(margin..size as isize - margin);
        let cy = r.gen_range(margin..size as isize - margin);
        let clear = placed.iter().all(|&(x, y, pr)| {
            (((x - cx).pow(2) + (y - cy).pow(2)) as f64).sqrt() >= (pr + rad) as f64 + 4.0
        });
        if clear {
            placed.push((cx, cy, rad));
        }
    }
    let mut img = Image::zeros(size, size);
    for &(x, y, rad) in &placed {
        draw_circle(&mut img, x, y, rad, 1.0);
    }
    (img, placed)
}

/// Micrograph-like field: `n` filled disks at 0.9 on a 0.1 background.
pub fn blob_field(seed: u64, size: usize, n: usize) -> (Image, Vec<(isize, isize, usize)>) {
    let mut r = rng(seed);
    let mut placed: Vec<(isize, isize, usize)> = Vec::new();
    while placed.len() < n {
        let rad = r.gen_range(3..=8usize);
        let lo = rad as isize + 3;
        let hi = size as isize - 3 - rad as isize;
        let cx = r.gen_range(lo..hi);
        let cy = r.gen_range(lo..hi);
        let clear = placed.iter().all(|&(x, y, pr)| {
            (((x - cx).pow(2) + (y - cy).pow(2)) as f64).sqrt() >= (pr + rad) as f64 + 6.0
        });
        if clear {
            placed.push((cx, cy, rad));
        }
    }
    let img = Image::from_fn(size, size, |x, y| {
        let inside = placed.iter().any(|&(cx, cy, rad)| {
            let (dx, dy) = (x as isize - cx, y as isize - cy);
            dx * dx + dy * dy <= (rad * rad) as isize
        });
        if inside {
            0.9
        } else {
            0.1
        }
    });
    (img, placed)
}
