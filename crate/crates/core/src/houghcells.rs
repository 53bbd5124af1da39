//! Circular Hough transform over an edge map, circle extraction and cell
//! counting.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::imgcore::{percentile_value, Image, ImageError};

#[derive(Debug, Error)]
pub enum HoughError {
    #[error("invalid radius range {r_min}..={r_max}")]
    RadiusRange { r_min: usize, r_max: usize },
    #[error("radius {r_max} exceeds half the image extent ({half})")]
    RadiusTooLarge { r_max: usize, half: usize },
    #[error("{name} must lie in (0, 1], got {value}")]
    Fraction { name: &'static str, value: f64 },
    #[error("minimum center distance must be non-negative and finite, got {0}")]
    MinDistance(f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughConfig {
    pub r_min: usize,
    pub r_max: usize,
    /// Minimum score, as a fraction of a perfect circle's votes.
    pub accumulator_threshold: f64,
    pub min_center_distance: f64,
    /// Edge pixels are those at or above this percentile of the edge map.
    pub edge_binarize_percentile: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            r_min: 3,
            r_max: 8,
            accumulator_threshold: 0.4,
            min_center_distance: 3.0,
            edge_binarize_percentile: 0.9,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self) -> Result<(), HoughError> {
        if self.r_min < 1 || self.r_min > self.r_max {
            return Err(HoughError::RadiusRange {
                r_min: self.r_min,
                r_max: self.r_max,
            });
        }
        for (name, value) in [
            ("accumulator threshold", self.accumulator_threshold),
            (
                "edge binarization percentile",
                self.edge_binarize_percentile,
            ),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(HoughError::Fraction { name, value });
            }
        }
        if !(self.min_center_distance >= 0.0 && self.min_center_distance.is_finite()) {
            return Err(HoughError::MinDistance(self.min_center_distance));
        }
        Ok(())
    }
}

/// Integer offsets of the midpoint (Bresenham) circle of radius `r`,
/// deduplicated and sorted.
pub fn circle_offsets(r: usize) -> Vec<(isize, isize)> {
    let r = r as isize;
    let mut pts = Vec::new();
    let (mut x, mut y) = (r, 0isize);
    let mut err = 1 - r;
    while x >= y {
        for (a, b) in [(x, y), (y, x)] {
            pts.extend([(a, b), (-a, b), (a, -b), (-a, -b)]);
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Rasterizes a midpoint circle into `img`, clipping at the borders.
pub fn draw_circle(img: &mut Image, cx: isize, cy: isize, r: usize, value: f64) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    for (dx, dy) in circle_offsets(r) {
        let (x, y) = (cx + dx, cy + dy);
        if x >= 0 && y >= 0 && x < w && y < h {
            img.set(x as usize, y as usize, value);
        }
    }
}

/// Vote counts indexed by `(radius, cy, cx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    pub width: usize,
    pub height: usize,
    pub r_min: usize,
    pub r_max: usize,
    votes: Vec<u32>,
    circumference: Vec<usize>,
}

impl Accumulator {
    fn empty(width: usize, height: usize, r_min: usize, r_max: usize) -> Self {
        let depth = r_max - r_min + 1;
        Accumulator {
            width,
            height,
            r_min,
            r_max,
            votes: vec![0; depth * width * height],
            circumference: (r_min..=r_max).map(|r| circle_offsets(r).len()).collect(),
        }
    }

    #[inline]
    fn index(&self, x: usize, y: usize, r: usize) -> usize {
        ((r - self.r_min) * self.height + y) * self.width + x
    }

    pub fn votes(&self, x: usize, y: usize, r: usize) -> u32 {
        self.votes[self.index(x, y, r)]
    }

    /// Votes divided by the number of pixels on a radius-`r` circle.
    pub fn score(&self, x: usize, y: usize, r: usize) -> f64 {
        self.votes(x, y, r) as f64 / self.circumference[r - self.r_min] as f64
    }

    pub fn max_score(&self) -> f64 {
        let mut best = 0.0f64;
        for r in self.r_min..=self.r_max {
            for y in 0..self.height {
                for x in 0..self.width {
                    best = best.max(self.score(x, y, r));
                }
            }
        }
        best
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.votes
            .iter_mut()
            .zip(other.votes)
            .for_each(|(a, b)| *a += b);
        self
    }
}

/// Pixels counted as edges: strictly above the value at the configured
/// percentile. When that value is already the maximum (a dense binary map),
/// the maximal pixels are used instead. Zero pixels never vote.
pub fn edge_pixels(edges: &Image, percentile: f64) -> Result<Vec<(usize, usize)>, HoughError> {
    let t = percentile_value(edges, percentile)?;
    let (_, max) = edges.min_max();
    let keep = |v: f64| v > 0.0 && (v > t || (t == max && v == max));
    let mut pts = Vec::new();
    for y in 0..edges.height() {
        for x in 0..edges.width() {
            if keep(edges.get(x, y)) {
                pts.push((x, y));
            }
        }
    }
    Ok(pts)
}

const VOTE_CHUNK: usize = 512;

/// Every edge pixel votes for all centres at each radius in range.
pub fn hough_accumulate(edges: &Image, cfg: &HoughConfig) -> Result<Accumulator, HoughError> {
    cfg.validate()?;
    let (w, h) = (edges.width(), edges.height());
    let half = w.min(h) / 2;
    if cfg.r_max > half {
        return Err(HoughError::RadiusTooLarge {
            r_max: cfg.r_max,
            half,
        });
    }
    let points = edge_pixels(edges, cfg.edge_binarize_percentile)?;
    let rings: Vec<Vec<(isize, isize)>> = (cfg.r_min..=cfg.r_max).map(circle_offsets).collect();

    let acc = points
        .par_chunks(VOTE_CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::empty(w, h, cfg.r_min, cfg.r_max);
            for &(px, py) in chunk {
                for (ri, ring) in rings.iter().enumerate() {
                    let base = ri * w * h;
                    for &(dx, dy) in ring {
                        let cx = px as isize - dx;
                        let cy = py as isize - dy;
                        if cx >= 0 && cy >= 0 && (cx as usize) < w && (cy as usize) < h {
                            acc.votes[base + cy as usize * w + cx as usize] += 1;
                        }
                    }
                }
            }
            acc
        })
        .reduce(
            || Accumulator::empty(w, h, cfg.r_min, cfg.r_max),
            Accumulator::merge,
        );
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: usize,
    pub score: f64,
}

/// Vertex offset of the parabola through three equally spaced samples,
/// clamped to half a cell.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Local maxima of the score volume above the threshold, accepted greedily by
/// descending score (ties by `(cx, cy, r)`) while keeping centres at least
/// `min_center_distance` apart.
pub fn find_circles(acc: &Accumulator, cfg: &HoughConfig) -> Vec<Circle> {
    let (w, h) = (acc.width, acc.height);
    let mut candidates = Vec::new();
    for r in acc.r_min..=acc.r_max {
        for y in 0..h {
            for x in 0..w {
                let s = acc.score(x, y, r);
                if s <= 0.0 || s < cfg.accumulator_threshold {
                    continue;
                }
                let mut is_max = true;
                'nbhd: for nr in r.saturating_sub(1).max(acc.r_min)..=(r + 1).min(acc.r_max) {
                    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                            if acc.score(nx, ny, nr) > s {
                                is_max = false;
                                break 'nbhd;
                            }
                        }
                    }
                }
                if is_max {
                    candidates.push((x, y, r, s));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.3.total_cmp(&a.3)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut accepted: Vec<Circle> = Vec::new();
    for (x, y, r, s) in candidates {
        let ox = if x > 0 && x + 1 < w {
            parabolic_offset(acc.score(x - 1, y, r), s, acc.score(x + 1, y, r))
        } else {
            0.0
        };
        let oy = if y > 0 && y + 1 < h {
            parabolic_offset(acc.score(x, y - 1, r), s, acc.score(x, y + 1, r))
        } else {
            0.0
        };
        let c = Circle {
            cx: x as f64 + ox,
            cy: y as f64 + oy,
            r,
            score: s,
        };
        let far = accepted
            .iter()
            .all(|a| (a.cx - c.cx).hypot(a.cy - c.cy) >= cfg.min_center_distance);
        if far {
            accepted.push(c);
        }
    }
    accepted
}

/// Result of a counting run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCountReport {
    /// Circles whose disk lies fully inside the image.
    pub circles: Vec<Circle>,
    pub count: usize,
    pub mean_radius: f64,
    pub radius_stddev: f64,
    /// Detections dropped because their disk crosses the image border.
    pub border_excluded: Vec<Circle>,
}

impl CellCountReport {
    pub fn from_circles(circles: Vec<Circle>, width: usize, height: usize) -> Self {
        let (inside, border_excluded): (Vec<Circle>, Vec<Circle>) =
            circles.into_iter().partition(|c| {
                let r = c.r as f64;
                c.cx - r >= 0.0
                    && c.cy - r >= 0.0
                    && c.cx + r <= (width - 1) as f64
                    && c.cy + r <= (height - 1) as f64
            });
        let count = inside.len();
        let (mean_radius, radius_stddev) = if count == 0 {
            (0.0, 0.0)
        } else {
            let n = count as f64;
            let mean = inside.iter().map(|c| c.r as f64).sum::<f64>() / n;
            let var = inside
                .iter()
                .map(|c| (c.r as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        };
        CellCountReport {
            circles: inside,
            count,
            mean_radius,
            radius_stddev,
            border_excluded,
        }
    }

    /// Summary line followed by one `cx,cy,r,score` line per circle.
    pub fn to_records(&self) -> String {
        let mut s = format!(
            "count={} mean_r={:.4} std_r={:.4} border_excluded={}\n",
            self.count,
            self.mean_radius,
            self.radius_stddev,
            self.border_excluded.len()
        );
        for c in &self.circles {
            let _ = writeln!(s, "{:.3},{:.3},{},{:.4}", c.cx, c.cy, c.r, c.score);
        }
        s
    }

    /// Human-readable key/value summary with a circle table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count: {}", self.count);
        let _ = writeln!(s, "mean radius: {:.4} px", self.mean_radius);
        let _ = writeln!(s, "radius std dev: {:.4} px", self.radius_stddev);
        let _ = writeln!(s, "border excluded: {}", self.border_excluded.len());
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>9} {:>3} {:>7}",
            "#", "cx", "cy", "r", "score"
        );
        for (i, c) in self.circles.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>5} {:>9.3} {:>9.3} {:>3} {:>7.4}",
                i + 1,
                c.cx,
                c.cy,
                c.r,
                c.score
            );
        }
        s
    }
}

/// Accumulates, extracts circles and summarizes them.
pub fn count_cells(edges: &Image, cfg: &HoughConfig) -> Result<CellCountReport, HoughError> {
    let acc = hough_accumulate(edges, cfg)?;
    let circles = find_circles(&acc, cfg);
    Ok(CellCountReport::from_circles(
        circles,
        edges.width(),
        edges.height(),
    ))
}
