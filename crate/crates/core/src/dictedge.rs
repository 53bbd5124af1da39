//! Edge detection with a dictionary of eigenfilters learned from the input
//! image itself.
//!
//! The pipeline:
//!
//! 1. Tile the image into non-overlapping `n x n` patches, vectorize each
//!    tile row-major into a column of the patch matrix `A` and subtract the
//!    mean patch from every column.
//! 2. Solve the `n^2 x n^2` eigenproblem of `A A^T`. Each eigenvector,
//!    reshaped row-major to `n x n`, is an eigenfilter. Filters are ordered by
//!    ascending eigenvalue, so the last one is the averaging (DC-like) filter
//!    that carries most of the patch energy.
//! 3. Convolve the image with every eigenfilter, giving a stack of `n^2`
//!    filtered images.
//! 4. Subtract the pixelwise mean of the stack from each layer.
//! 5. Fuse consecutive centered layers with a pixelwise maximum, giving
//!    `n^2 - 1` layers. The second-last fused layer (the max of the two
//!    strongest non-DC responses) is the edge map.

use rayon::prelude::*;
use thiserror::Error;

use crate::eigen::{jacobi_eigen, EigenError, SymMatrix};
use crate::imgcore::{convolve, normalize, threshold, Border, Image, ImageError, Kernel};

pub const MIN_PATCH: usize = 2;
pub const MAX_PATCH: usize = 8;

/// Largest eigenvalue, relative to the number of pixel samples in the
/// dictionary, below which the image is treated as featureless.
const FEATURELESS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DictError {
    #[error("patch size {0} outside supported range {MIN_PATCH}..={MAX_PATCH}")]
    PatchSize(usize),
    #[error("threshold percentile {0} outside [0, 1]")]
    Percentile(f64),
    #[error("image {w}x{h} is smaller than one {n}x{n} patch")]
    TooSmall { w: usize, h: usize, n: usize },
    #[error("featureless image: patch covariance is numerically zero (largest eigenvalue {0:e})")]
    Featureless(f64),
    #[error("stack stage is {found:?}, expected {expected:?}")]
    Stage { expected: Stage, found: Stage },
    #[error("stack needs at least {need} layers, has {have}")]
    Depth { need: usize, have: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DictConfig {
    /// Patch side `n`; the bank holds `n^2` filters.
    pub patch_size: usize,
    /// Percentile cut applied to the normalized edge map; `0.0` disables it.
    pub threshold_percentile: f64,
    pub border: Border,
}

impl Default for DictConfig {
    fn default() -> Self {
        DictConfig {
            patch_size: 4,
            threshold_percentile: 0.0,
            border: Border::Replicate,
        }
    }
}

impl DictConfig {
    pub fn validate(&self) -> Result<(), DictError> {
        if !(MIN_PATCH..=MAX_PATCH).contains(&self.patch_size) {
            return Err(DictError::PatchSize(self.patch_size));
        }
        if !(0.0..=1.0).contains(&self.threshold_percentile) {
            return Err(DictError::Percentile(self.threshold_percentile));
        }
        Ok(())
    }
}

/// The centered patch matrix `A` (`patch_dim` rows, one column per tile).
#[derive(Clone, Debug)]
pub struct PatchMatrix {
    pub patch_dim: usize,
    pub count: usize,
    /// Row-major `patch_dim x count`, mean patch already removed.
    pub entries: Vec<f64>,
    /// Mean patch, vectorized row-major.
    pub patch_mean: Vec<f64>,
}

impl PatchMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.count + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.count..(row + 1) * self.count]
    }
}

/// Splits `src` into non-overlapping `n x n` tiles (row-major scan, bottom and
/// right remainders cropped) and returns the mean-removed patch matrix.
pub fn extract_patches(src: &Image, n: usize) -> Result<PatchMatrix, DictError> {
    if n == 0 || src.width() < n || src.height() < n {
        return Err(DictError::TooSmall {
            w: src.width(),
            h: src.height(),
            n,
        });
    }
    let tiles_x = src.width() / n;
    let tiles_y = src.height() / n;
    let count = tiles_x * tiles_y;
    let patch_dim = n * n;
    let mut entries = vec![0.0; patch_dim * count];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let col = ty * tiles_x + tx;
            for dy in 0..n {
                for dx in 0..n {
                    entries[(dy * n + dx) * count + col] = src.get(tx * n + dx, ty * n + dy);
                }
            }
        }
    }
    let mut patch_mean = vec![0.0; patch_dim];
    for (r, mean) in patch_mean.iter_mut().enumerate() {
        let row = &mut entries[r * count..(r + 1) * count];
        *mean = row.iter().sum::<f64>() / count as f64;
        row.iter_mut().for_each(|v| *v -= *mean);
    }
    Ok(PatchMatrix {
        patch_dim,
        count,
        entries,
        patch_mean,
    })
}

/// `A A^T` over the centered columns, one dot product per unordered pair.
pub fn covariance(p: &PatchMatrix) -> SymMatrix {
    SymMatrix::from_upper(p.patch_dim, |i, j| {
        p.row(i).iter().zip(p.row(j)).map(|(a, b)| a * b).sum()
    })
}

/// `n^2` eigenfilters in ascending eigenvalue order.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenfilterBank {
    pub n: usize,
    pub filters: Vec<Kernel>,
    pub eigenvalues: Vec<f64>,
    pub border: Border,
}

impl EigenfilterBank {
    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

/// Learns the eigenfilter bank of `src`.
pub fn build_filter_bank(src: &Image, cfg: &DictConfig) -> Result<EigenfilterBank, DictError> {
    cfg.validate()?;
    let n = cfg.patch_size;
    let patches = extract_patches(src, n)?;
    let cov = covariance(&patches);
    let eig = jacobi_eigen(&cov)?;

    let largest = eig.eigenvalues.last().copied().unwrap_or(0.0);
    let scale = (patches.patch_dim * patches.count) as f64;
    if largest <= FEATURELESS_TOL * scale {
        return Err(DictError::Featureless(largest));
    }

    let filters = eig
        .eigenvectors
        .into_iter()
        .map(|v| Kernel::new(n, n, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EigenfilterBank {
        n,
        filters,
        eigenvalues: eig.eigenvalues,
        border: cfg.border,
    })
}

/// Processing stage of an [`EdgeStack`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Raw eigenfilter responses.
    Filtered,
    /// Responses minus the pixelwise stack mean.
    Centered,
    /// Pairwise maxima of consecutive centered layers.
    Fused,
}

/// Stack of equally sized images.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeStack {
    pub stage: Stage,
    pub layers: Vec<Image>,
}

impl EdgeStack {
    pub fn new(stage: Stage, layers: Vec<Image>) -> Self {
        assert!(
            layers.windows(2).all(|w| w[0].same_size(&w[1])),
            "stack layers must share dimensions"
        );
        EdgeStack { stage, layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Convolves `src` with every filter of the bank.
pub fn apply_filter_bank(src: &Image, bank: &EigenfilterBank) -> Result<EdgeStack, DictError> {
    if src.width() < bank.n || src.height() < bank.n {
        return Err(DictError::TooSmall {
            w: src.width(),
            h: src.height(),
            n: bank.n,
        });
    }
    let layers = bank
        .filters
        .par_iter()
        .map(|k| convolve(src, k, bank.border))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EdgeStack::new(Stage::Filtered, layers))
}

/// Subtracts the pixelwise mean over all layers (divisor = depth).
pub fn center_stack(s: &EdgeStack) -> Result<EdgeStack, DictError> {
    if s.stage != Stage::Filtered {
        return Err(DictError::Stage {
            expected: Stage::Filtered,
            found: s.stage,
        });
    }
    if s.layers.is_empty() {
        return Err(DictError::Depth { need: 1, have: 0 });
    }
    let (w, h) = (s.layers[0].width(), s.layers[0].height());
    let depth = s.depth() as f64;
    let mut mean = vec![0.0; w * h];
    for layer in &s.layers {
        for (m, v) in mean.iter_mut().zip(layer.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= depth);
    let mean = Image::from_vec(w, h, mean)?;
    let layers = s
        .layers
        .iter()
        .map(|l| l.zip_map(&mean, |a, b| a - b))
        .collect();
    Ok(EdgeStack::new(Stage::Centered, layers))
}

/// Layer `i` of the output is `max(layer[i + 1], layer[i])`; depth drops by one.
pub fn fuse_pairwise_max(s: &EdgeStack) -> Result<EdgeStack, DictError> {
    if s.stage != Stage::Centered {
        return Err(DictError::Stage {
            expected: Stage::Centered,
            found: s.stage,
        });
    }
    if s.depth() < 2 {
        return Err(DictError::Depth {
            need: 2,
            have: s.depth(),
        });
    }
    let layers = s
        .layers
        .windows(2)
        .map(|pair| pair[1].zip_map(&pair[0], f64::max))
        .collect();
    Ok(EdgeStack::new(Stage::Fused, layers))
}

/// Every intermediate product of one dictionary run.
#[derive(Clone, Debug)]
pub struct DictionaryRun {
    pub bank: EigenfilterBank,
    pub filtered: EdgeStack,
    pub centered: EdgeStack,
    pub fused: EdgeStack,
    /// Normalized (and optionally thresholded) edge map.
    pub edges: Image,
    /// Cut value when thresholding was applied.
    pub threshold: Option<f64>,
}

/// Runs the full pipeline and keeps the intermediate stacks.
pub fn run_dictionary(src: &Image, cfg: &DictConfig) -> Result<DictionaryRun, DictError> {
    let bank = build_filter_bank(src, cfg)?;
    let filtered = apply_filter_bank(src, &bank)?;
    let centered = center_stack(&filtered)?;
    let fused = fuse_pairwise_max(&centered)?;
    // second-last fused layer; with n = 2 the fused stack has 3 layers
    let pick = fused.depth() - 2;
    let edges = normalize(&fused.layers[pick]);
    let (edges, threshold) = if cfg.threshold_percentile > 0.0 {
        let (img, t) = threshold(&edges, cfg.threshold_percentile)?;
        (img, Some(t))
    } else {
        (edges, None)
    };
    Ok(DictionaryRun {
        bank,
        filtered,
        centered,
        fused,
        edges,
        threshold,
    })
}

/// Dictionary edge map of `src`, normalized to `[0, 1]`.
pub fn detect_edges(src: &Image, cfg: &DictConfig) -> Result<Image, DictError> {
    run_dictionary(src, cfg).map(|run| run.edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.25 * (0.3 * x + 0.1 * y).sin() + 0.2 * (0.17 * x * y).cos() * 0.5
        })
    }

    #[test]
    fn patch_shapes() {
        let p = extract_patches(&Image::zeros(8, 8), 4).unwrap();
        assert_eq!((p.patch_dim, p.count), (16, 4));
        assert_eq!(p.entries.len(), 64);

        let p = extract_patches(&Image::zeros(512, 512), 3).unwrap();
        assert_eq!(p.count, 170 * 170);

        assert!(matches!(
            extract_patches(&Image::zeros(3, 8), 4),
            Err(DictError::TooSmall { .. })
        ));
    }

    #[test]
    fn patches_are_row_major_and_centered() {
        let img = Image::from_fn(4, 2, |x, y| (x + 4 * y) as f64);
        let p = extract_patches(&img, 2).unwrap();
        // tiles: [0 1 / 4 5] and [2 3 / 6 7]
        assert_eq!(p.patch_mean, vec![1.0, 2.0, 5.0, 6.0]);
        assert_eq!(p.row(0), &[-1.0, 1.0]);
        assert_eq!(p.row(3), &[-1.0, 1.0]);
        for r in 0..p.patch_dim {
            assert!(p.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_special_cases() {
        let p = PatchMatrix {
            patch_dim: 2,
            count: 2,
            entries: vec![1.0, 0.0, 0.0, 1.0],
            patch_mean: vec![0.0; 2],
        };
        assert_eq!(covariance(&p).entries(), &[1.0, 0.0, 0.0, 1.0]);

        let flat = extract_patches(&Image::filled(8, 8, 0.6), 4).unwrap();
        assert!(covariance(&flat).entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_is_featureless() {
        let cfg = DictConfig::default();
        let err = build_filter_bank(&Image::filled(16, 16, 0.2), &cfg).unwrap_err();
        assert!(matches!(err, DictError::Featureless(_)));
        assert!(err.to_string().contains("featureless"));
        assert!(matches!(
            detect_edges(&Image::filled(16, 16, 0.2), &cfg),
            Err(DictError::Featureless(_))
        ));
    }

    #[test]
    fn config_validation() {
        for n in [0, 1, 9] {
            let cfg = DictConfig {
                patch_size: n,
                ..Default::default()
            };
            assert!(matches!(cfg.validate(), Err(DictError::PatchSize(_))));
        }
        let cfg = DictConfig {
            threshold_percentile: 1.5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(DictError::Percentile(_))));
    }

    #[test]
    fn bank_is_orthonormal_and_sorted() {
        let bank = build_filter_bank(&textured(64, 48), &DictConfig::default()).unwrap();
        assert_eq!(bank.len(), 16);
        assert!(bank.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for (a, fa) in bank.filters.iter().enumerate() {
            assert_eq!((fa.width(), fa.height()), (4, 4));
            for (b, fb) in bank.filters.iter().enumerate() {
                let dot: f64 = fa
                    .coeffs()
                    .iter()
                    .zip(fb.coeffs())
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn stack_stages() {
        let img = textured(32, 32);
        let bank = build_filter_bank(&img, &DictConfig::default()).unwrap();
        let filtered = apply_filter_bank(&img, &bank).unwrap();
        assert_eq!(filtered.depth(), 16);
        assert_eq!(
            filtered.layers[5],
            convolve(&img, &bank.filters[5], Border::Replicate).unwrap()
        );
        assert!(matches!(
            fuse_pairwise_max(&filtered),
            Err(DictError::Stage { .. })
        ));

        let centered = center_stack(&filtered).unwrap();
        assert!(matches!(
            center_stack(&centered),
            Err(DictError::Stage { .. })
        ));
        let fused = fuse_pairwise_max(&centered).unwrap();
        assert_eq!(fused.depth(), 15);
        assert_eq!(fused.stage, Stage::Fused);
    }

    #[test]
    fn centering_examples() {
        let x = textured(6, 6);
        let s = EdgeStack::new(Stage::Filtered, vec![x.clone(), x]);
        let c = center_stack(&s).unwrap();
        assert!(c.layers.iter().all(|l| l.data().iter().all(|&v| v == 0.0)));

        let s = EdgeStack::new(
            Stage::Filtered,
            vec![Image::zeros(3, 3), Image::filled(3, 3, 1.5)],
        );
        let c = center_stack(&s).unwrap();
        assert!(c.layers[0].data().iter().all(|&v| v == -0.75));
        assert!(c.layers[1].data().iter().all(|&v| v == 0.75));

        let empty = EdgeStack::new(Stage::Filtered, vec![]);
        assert!(matches!(center_stack(&empty), Err(DictError::Depth { .. })));
    }

    #[test]
    fn fusion_examples() {
        let lo = Image::filled(4, 4, -1.0);
        let hi = Image::filled(4, 4, 1.0);
        let f = fuse_pairwise_max(&EdgeStack::new(
            Stage::Centered,
            vec![lo.clone(), hi.clone()],
        ))
        .unwrap();
        assert_eq!(f.layers, vec![hi.clone()]);
        let f = fuse_pairwise_max(&EdgeStack::new(
            Stage::Centered,
            vec![lo.clone(), lo.clone()],
        ))
        .unwrap();
        assert_eq!(f.layers, vec![lo.clone()]);
        assert!(matches!(
            fuse_pairwise_max(&EdgeStack::new(Stage::Centered, vec![lo])),
            Err(DictError::Depth { need: 2, have: 1 })
        ));
    }

    #[test]
    fn non_divisible_size_filters_full_image() {
        let img = textured(35, 29);
        let run = run_dictionary(&img, &DictConfig::default()).unwrap();
        assert_eq!((run.edges.width(), run.edges.height()), (35, 29));
        let (lo, hi) = run.edges.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn threshold_option() {
        let img = textured(32, 32);
        let cfg = DictConfig {
            threshold_percentile: 0.8,
            ..Default::default()
        };
        let run = run_dictionary(&img, &cfg).unwrap();
        let t = run.threshold.unwrap();
        assert!(run.edges.data().iter().all(|&v| v == 0.0 || v >= t));
    }
}
