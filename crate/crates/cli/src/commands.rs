use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eigedge::classic::{self, CannyParams, LogParams};
use eigedge::dictedge::{self, DictConfig, EigenfilterBank};
use eigedge::houghcells::{self, CellCountReport, HoughConfig};
use eigedge::imgcore::{self, load_image, save_image, Image, ImageFormat};
use eigedge::Border;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    output_format, CliError, CompareArgs, CountArgs, DetectArgs, DetectorFlags, FiltersArgs, Method,
};

const DEFAULT_GRADIENT_PERCENTILE: f64 = 0.9;

/// Fully resolved, validated settings for one detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MethodSettings {
    Sobel { percentile: f64, border: Border },
    Prewitt { percentile: f64, border: Border },
    Log(LogParams),
    Canny(CannyParams),
    Dictionary(DictConfig),
}

impl MethodSettings {
    /// Resolves `flags` for `method`, filling method-specific defaults, and
    /// validates every value.
    pub fn resolve(method: Method, flags: &DetectorFlags) -> Result<Self, CliError> {
        let border = Border::from(flags.border);
        let settings = match method {
            Method::Sobel | Method::Prewitt => {
                let percentile = flags
                    .threshold_percentile
                    .unwrap_or(DEFAULT_GRADIENT_PERCENTILE);
                check_percentile(percentile)?;
                if method == Method::Sobel {
                    MethodSettings::Sobel { percentile, border }
                } else {
                    MethodSettings::Prewitt { percentile, border }
                }
            }
            Method::Log => {
                let p = LogParams {
                    sigma: flags.sigma.unwrap_or(LogParams::default().sigma),
                    ..LogParams::default()
                };
                // kernel construction checks sigma without touching pixels
                classic::log_kernel(p.sigma, 1)?;
                MethodSettings::Log(p)
            }
            Method::Canny => MethodSettings::Canny(CannyParams::new(
                flags.sigma.unwrap_or(CannyParams::default().sigma),
                flags.low,
                flags.high,
            )?),
            Method::Dictionary => {
                let cfg = DictConfig {
                    patch_size: flags.patch_size,
                    threshold_percentile: flags.threshold_percentile.unwrap_or(0.0),
                    border,
                };
                cfg.validate()?;
                MethodSettings::Dictionary(cfg)
            }
        };
        Ok(settings)
    }

    pub fn params_json(&self) -> Value {
        match self {
            MethodSettings::Sobel { percentile, border }
            | MethodSettings::Prewitt { percentile, border } => {
                json!({ "threshold_percentile": percentile, "border": border.to_string() })
            }
            MethodSettings::Log(p) => json!({ "sigma": p.sigma, "slope_floor": p.slope_floor }),
            MethodSettings::Canny(p) => json!({ "sigma": p.sigma, "low": p.low, "high": p.high }),
            MethodSettings::Dictionary(c) => json!({
                "patch_size": c.patch_size,
                "threshold_percentile": c.threshold_percentile,
                "border": c.border.to_string(),
            }),
        }
    }
}

fn check_percentile(p: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "threshold percentile {p} outside [0, 1]"
        )))
    }
}

/// Edge map of one detector plus the dictionary bank when it was learned.
pub struct DetectorOutput {
    pub edges: Image,
    pub bank: Option<EigenfilterBank>,
}

/// The library composition behind every command.
pub fn run_detector(src: &Image, settings: &MethodSettings) -> Result<DetectorOutput, CliError> {
    let plain = |edges| DetectorOutput { edges, bank: None };
    Ok(match settings {
        MethodSettings::Sobel { percentile, border } => {
            let g = classic::sobel_with_border(src, *border)?;
            plain(classic::binarize_magnitude(&g.magnitude, *percentile)?)
        }
        MethodSettings::Prewitt { percentile, border } => {
            let g = classic::prewitt_with_border(src, *border)?;
            plain(classic::binarize_magnitude(&g.magnitude, *percentile)?)
        }
        MethodSettings::Log(p) => plain(classic::log_detect(src, p)?),
        MethodSettings::Canny(p) => plain(classic::canny(src, p)?),
        MethodSettings::Dictionary(cfg) => {
            let run = dictedge::run_dictionary(src, cfg)?;
            DetectorOutput {
                edges: run.edges,
                bank: Some(run.bank),
            }
        }
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn detect(args: &DetectArgs) -> Result<(), CliError> {
    let settings = MethodSettings::resolve(args.method, &args.flags)?;
    let format = output_format(&args.output)?;
    let src = load_image(&args.input)?;
    let start = Instant::now();
    let out = run_detector(&src, &settings)?;
    let ms = elapsed_ms(start);
    save_image(&out.edges, &args.output, format)?;
    println!(
        "method={} params={} size={}x{} time_ms={:.3} output={}",
        args.method.name(),
        settings.params_json(),
        src.width(),
        src.height(),
        ms,
        args.output.display()
    );
    Ok(())
}

/// `index,c0..c{n^2-1},eigenvalue` with one row per filter.
pub fn filters_csv(bank: &EigenfilterBank) -> String {
    let dim = bank.n * bank.n;
    let mut s = String::from("index");
    for c in 0..dim {
        let _ = write!(s, ",c{c}");
    }
    s.push_str(",eigenvalue\n");
    for (i, (k, ev)) in bank.filters.iter().zip(&bank.eigenvalues).enumerate() {
        let _ = write!(s, "{i}");
        for c in k.coeffs() {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{ev}");
    }
    s
}

pub fn filters(args: &FiltersArgs) -> Result<(), CliError> {
    let cfg = DictConfig {
        patch_size: args.patch_size,
        threshold_percentile: 0.0,
        border: args.border.into(),
    };
    cfg.validate()?;
    let src = load_image(&args.input)?;
    let start = Instant::now();
    let run = dictedge::run_dictionary(&src, &cfg)?;
    let ms = elapsed_ms(start);
    create_dir(&args.out_dir)?;
    let n = cfg.patch_size;
    for (i, k) in run.bank.filters.iter().enumerate() {
        let kimg = Image::from_vec(n, n, k.coeffs().to_vec())?;
        save_image(
            &imgcore::normalize(&kimg),
            args.out_dir.join(format!("filter_{i:02}.pgm")),
            ImageFormat::PgmBinary,
        )?;
    }
    for (i, layer) in run.filtered.layers.iter().enumerate() {
        save_image(
            &imgcore::normalize(layer),
            args.out_dir.join(format!("edge_{i:02}.pgm")),
            ImageFormat::PgmBinary,
        )?;
    }
    write_file(&args.out_dir.join("filters.csv"), filters_csv(&run.bank))?;
    println!(
        "filters={} patch_size={} time_ms={:.3} out_dir={}",
        run.bank.len(),
        n,
        ms,
        args.out_dir.display()
    );
    Ok(())
}

/// Input rendered in gray with each counted circle drawn in red.
pub fn overlay(src: &Image, report: &CellCountReport) -> image::RgbImage {
    let gray = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = image::RgbImage::from_fn(src.width() as u32, src.height() as u32, |x, y| {
        let g = gray(src.get(x as usize, y as usize));
        image::Rgb([g, g, g])
    });
    for c in &report.circles {
        let (cx, cy) = (c.cx.round() as isize, c.cy.round() as isize);
        for (dx, dy) in houghcells::circle_offsets(c.r) {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as usize) < src.width() && (y as usize) < src.height() {
                out.put_pixel(x as u32, y as u32, image::Rgb([255, 0, 0]));
            }
        }
    }
    out
}

pub fn count(args: &CountArgs) -> Result<(), CliError> {
    let dict = DictConfig {
        patch_size: args.patch_size,
        threshold_percentile: args.threshold_percentile,
        border: args.border.into(),
    };
    dict.validate()?;
    let hough = HoughConfig {
        r_min: args.rmin,
        r_max: args.rmax,
        accumulator_threshold: args.acc_threshold,
        min_center_distance: args.min_dist.unwrap_or(args.rmin as f64),
        ..HoughConfig::default()
    };
    hough.validate()?;
    let src = load_image(&args.input)?;
    let start = Instant::now();
    let edges = dictedge::detect_edges(&src, &dict)?;
    let report = houghcells::count_cells(&edges, &hough)?;
    let ms = elapsed_ms(start);

    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("report.txt"), report.to_text())?;
    write_file(&args.out_dir.join("circles.txt"), report.to_records())?;
    let overlay_path = args.out_dir.join("overlay.png");
    overlay(&src, &report)
        .save(&overlay_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", overlay_path.display())))?;
    println!(
        "count={} mean_r={:.4} std_r={:.4} border_excluded={} time_ms={:.3}",
        report.count,
        report.mean_radius,
        report.radius_stddev,
        report.border_excluded.len(),
        ms
    );
    Ok(())
}

#[derive(Serialize)]
struct ManifestEntry {
    method: &'static str,
    status: &'static str,
    params: Value,
    output: Option<String>,
    time_ms: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct Manifest {
    input: String,
    width: usize,
    height: usize,
    methods: Vec<ManifestEntry>,
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let settings = Method::ALL
        .iter()
        .map(|&m| MethodSettings::resolve(m, &args.flags).map(|s| (m, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let src = load_image(&args.input)?;
    create_dir(&args.out_dir)?;

    let mut entries = Vec::with_capacity(settings.len());
    for (method, s) in settings {
        let start = Instant::now();
        let result = run_detector(&src, &s);
        let time_ms = elapsed_ms(start);
        let mut entry = ManifestEntry {
            method: method.name(),
            status: "ok",
            params: s.params_json(),
            output: None,
            time_ms,
            error: None,
        };
        match result {
            Ok(out) => {
                let name = format!("{}.pgm", method.name());
                save_image(&out.edges, args.out_dir.join(&name), ImageFormat::PgmBinary)?;
                if let Some(bank) = &out.bank {
                    write_file(
                        &args.out_dir.join("dictionary_filters.csv"),
                        filters_csv(bank),
                    )?;
                }
                entry.output = Some(name);
            }
            // I/O problems abort; detector failures are recorded
            Err(e @ CliError::Io(_)) => return Err(e),
            Err(e) => {
                entry.status = "failed";
                entry.error = Some(e.to_string());
            }
        }
        println!(
            "method={} status={} time_ms={:.3}",
            entry.method, entry.status, entry.time_ms
        );
        entries.push(entry);
    }

    let manifest = Manifest {
        input: file_name(&args.input),
        width: src.width(),
        height: src.height(),
        methods: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
    text.push('\n');
    write_file(&args.out_dir.join("manifest.json"), text)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(path).display().to_string())
}
