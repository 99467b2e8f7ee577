//! `walshreg` command line: `encode`, `register`, `metrics`, `diff` and
//! `benchmark`.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 2    | usage or configuration error                         |
//! | 3    | file I/O or CSV error                                |
//! | 4    | malformed or unsupported image file                  |
//! | 5    | registration finished with `status = error`          |
//! | 6    | metric undefined (empty overlap, zero variance)      |
//! | 7    | invalid parameter, dimension mismatch or bad input   |

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::geometry::{difference_image, warp_into, GrayImage};
use crate::io::benchmark::{default_perturbations, load_perturbations, run_benchmark};
use crate::io::config::RunConfig;
use crate::io::pgm::{load_image, save_image, save_pgm16};
use crate::io::report::{
    write_csv, RegistrationRow, BENCHMARK_HEADER, REGISTRATION_HEADER, SUMMARY_HEADER,
};
use crate::metrics::{entropy, intensity_correlation, mutual_information, OverlapMask};
use crate::registration::register;
use crate::structure_codes::{encode_image_with, Backend, TransformPath};
use crate::synthetic::phantom;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_REGISTRATION: i32 = 5;
pub const EXIT_METRIC: i32 = 6;
pub const EXIT_INVALID: i32 = 7;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Csv(_) => EXIT_IO,
        Error::Format { .. } => EXIT_FORMAT,
        Error::Metric(_) => EXIT_METRIC,
        Error::Parameter { .. } | Error::Dimension { .. } | Error::Input(_) | Error::Encoding { .. } => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "walshreg", version, about = "Rigid registration of gray images with Walsh structure codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the structure-code image of IMAGE (codes.pgm, codes.txt).
    Encode {
        /// Input image; a synthetic phantom (seeded by --seed) if omitted.
        image: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Register MOVING onto REFERENCE (registered.pgm, difference.pgm, report.csv).
    Register {
        reference: PathBuf,
        moving: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Print MI, CC and entropies of two same-sized images.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Write |A - B| to difference.pgm.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Warp IMAGE by each perturbation and register it back with both
    /// backends (benchmark.csv, summary.csv).
    Benchmark {
        /// Reference image; a synthetic phantom if omitted.
        image: Option<PathBuf>,
        /// `x_mm, y_mm, angle` lines; the 21 table triples if omitted.
        #[arg(long)]
        perturbations: Option<PathBuf>,
        /// Side of the synthetic phantom.
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Repeats for the encoding-time comparison (0 skips it).
        #[arg(long, default_value_t = 3)]
        encode_repeats: usize,
        #[command(flatten)]
        opts: Options,
    },
}

/// Flags shared by every subcommand. Each one overrides the config-file
/// key of the same name.
#[derive(Debug, Args)]
struct Options {
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// walsh3 | fwht4
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    base: Option<String>,
    /// IA | IB | IIA | IIB | rowmajor
    #[arg(long)]
    ordering: Option<String>,
    /// MIN:MAX horizontal shift in pixels
    #[arg(long, allow_hyphen_values = true)]
    t_range: Option<String>,
    /// MIN:MAX vertical shift in pixels
    #[arg(long, allow_hyphen_values = true)]
    s_range: Option<String>,
    /// MIN:MAX rotation in degrees
    #[arg(long, allow_hyphen_values = true)]
    theta_range: Option<String>,
    /// T,S,THETA grid steps
    #[arg(long)]
    steps: Option<String>,
    /// Pyramid levels (1 = exhaustive)
    #[arg(long)]
    pyramid: Option<String>,
    /// Histogram bins for the reported MI
    #[arg(long)]
    bins: Option<String>,
    /// Worker threads (0 = all cores, 1 = sequential)
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// nearest | bilinear
    #[arg(long)]
    interp: Option<String>,
    /// Millimetres per pixel for perturbation triples
    #[arg(long)]
    spacing: Option<String>,
    /// intensity | structure
    #[arg(long)]
    mi_source: Option<String>,
}

impl Options {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("backend", &self.backend),
            ("base", &self.base),
            ("ordering", &self.ordering),
            ("t-range", &self.t_range),
            ("s-range", &self.s_range),
            ("theta-range", &self.theta_range),
            ("steps", &self.steps),
            ("pyramid", &self.pyramid),
            ("bins", &self.bins),
            ("workers", &self.workers),
            ("seed", &self.seed),
            ("out", &self.out),
            ("interp", &self.interp),
            ("spacing", &self.spacing),
            ("mi-source", &self.mi_source),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Encode { image, opts } => {
            let cfg = opts.resolve()?;
            let img = input_or_phantom(image.as_deref(), &cfg, 256)?;
            cmd_encode(&img, &cfg)?;
            Ok(EXIT_OK)
        }
        Command::Register {
            reference,
            moving,
            opts,
        } => {
            let cfg = opts.resolve()?;
            cmd_register(&reference, &moving, &cfg)
        }
        Command::Metrics { a, b, opts } => {
            let cfg = opts.resolve()?;
            cmd_metrics(&a, &b, &cfg)?;
            Ok(EXIT_OK)
        }
        Command::Diff { a, b, opts } => {
            let cfg = opts.resolve()?;
            cmd_diff(&a, &b, &cfg)?;
            Ok(EXIT_OK)
        }
        Command::Benchmark {
            image,
            perturbations,
            size,
            encode_repeats,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let img = input_or_phantom(image.as_deref(), &cfg, size)?;
            let list = match perturbations {
                Some(p) => load_perturbations(p)?,
                None => default_perturbations(),
            };
            cmd_benchmark(&img, &list, &cfg, encode_repeats)?;
            Ok(EXIT_OK)
        }
    }
}

fn input_or_phantom(path: Option<&Path>, cfg: &RunConfig, size: usize) -> Result<GrayImage> {
    match path {
        Some(p) => load_image(p),
        None if size >= 16 => Ok(phantom(size, cfg.seed, 200)),
        None => Err(Error::Config(format!("--size must be at least 16, got {size}"))),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

/// Writes `codes.pgm` (codes scaled to 16 bits by the largest code, border
/// pixels 0) and `codes.txt` (`W H`, then one line of codes per row;
/// border pixels without a full neighborhood are written as 0).
pub fn cmd_encode(img: &GrayImage, cfg: &RunConfig) -> Result<()> {
    let ordering = cfg.search_spec().digit_ordering();
    let codes = encode_image_with(img, cfg.backend, cfg.base, &ordering, TransformPath::Fast, cfg.execution())?;
    let dir = out_dir(cfg)?;
    let (w, h) = (codes.width(), codes.height());
    let max = codes.codes().iter().copied().max().unwrap_or(0);
    let scaled: Vec<u16> = codes
        .codes()
        .iter()
        .map(|&c| if max == 0 { 0 } else { (c as f64 / max as f64 * 65535.0).round() as u16 })
        .collect();
    save_pgm16(w, h, &scaled, dir.join("codes.pgm"))?;

    let mut text = format!("{w} {h}\n");
    for row in codes.codes().chunks(w) {
        let line: Vec<String> = row.iter().map(u64::to_string).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    let path = dir.join("codes.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!(
        "encoded {w}x{h} with {} base {} ({} valid codes) -> {}",
        cfg.backend,
        cfg.base,
        codes.valid_count(),
        dir.display()
    );
    Ok(())
}

/// Registers `moving` onto `reference` and writes `registered.pgm`,
/// `difference.pgm` and a one-row `report.csv`. Returns
/// [`EXIT_REGISTRATION`] when the registration status is `error`.
pub fn cmd_register(reference: &Path, moving: &Path, cfg: &RunConfig) -> Result<i32> {
    let (a, b) = (load_image(reference)?, load_image(moving)?);
    let spec = cfg.search_spec();
    let result = register(&a, &b, &spec)?;
    let dir = out_dir(cfg)?;
    if result.is_ok() {
        let (registered, mask) = warp_into(&b, &result.params, a.width(), a.height(), cfg.interp);
        save_image(&registered, dir.join("registered.pgm"))?;
        save_image(&difference_image(&a, &registered, &mask)?, dir.join("difference.pgm"))?;
    }
    let row = RegistrationRow::new(
        &reference.display().to_string(),
        &moving.display().to_string(),
        cfg.backend,
        cfg.base,
        spec.digit_ordering().tag().name(),
        &result,
    );
    write_csv(&[row], dir.join("report.csv"), REGISTRATION_HEADER)?;
    let p = result.params;
    if result.is_ok() {
        println!(
            "t={} s={} theta={} cc_after={:.6} mi_after={:.6} elapsed={:.3}s",
            p.t,
            p.s,
            p.theta,
            result.cc_after.unwrap_or(f64::NAN),
            result.mi_after.unwrap_or(f64::NAN),
            result.elapsed_seconds
        );
        Ok(EXIT_OK)
    } else {
        let kind = result.error_kind.map_or("unknown", |k| k.name());
        eprintln!("registration error occurred: {kind}");
        Ok(EXIT_REGISTRATION)
    }
}

/// Prints `mi`, `cc`, `entropy_a` and `entropy_b` (bits, `bins` bins) over
/// the full frame.
pub fn cmd_metrics(a: &Path, b: &Path, cfg: &RunConfig) -> Result<()> {
    let (a, b) = (load_image(a)?, load_image(b)?);
    let mask = OverlapMask::full(a.width(), a.height());
    let mi = mutual_information(&a, &b, &mask, cfg.bins)?;
    let cc = intensity_correlation(&a, &b, &mask)?;
    let ha = entropy(&a, &mask, cfg.bins)?;
    let hb = entropy(&b, &mask, cfg.bins)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "mi={mi:.12}\ncc={cc:.12}\nentropy_a={ha:.12}\nentropy_b={hb:.12}")
        .map_err(|e| Error::io("<stdout>", e))
}

/// Writes `difference.pgm = |a - b|`.
pub fn cmd_diff(a: &Path, b: &Path, cfg: &RunConfig) -> Result<()> {
    let (a, b) = (load_image(a)?, load_image(b)?);
    let mask = OverlapMask::full(a.width(), a.height());
    let diff = difference_image(&a, &b, &mask)?;
    let dir = out_dir(cfg)?;
    save_image(&diff, dir.join("difference.pgm"))?;
    let total: u64 = diff.pixels().iter().map(|&v| v as u64).sum();
    println!("sum_abs_difference={total}");
    Ok(())
}

/// Runs the perturbation benchmark with both backends and writes
/// `benchmark.csv` and `summary.csv`.
pub fn cmd_benchmark(
    img: &GrayImage,
    perturbations: &[crate::io::benchmark::Perturbation],
    cfg: &RunConfig,
    encode_repeats: usize,
) -> Result<()> {
    let report = run_benchmark(img, perturbations, cfg, &[Backend::Walsh3, Backend::Fwht4], encode_repeats)?;
    let dir = out_dir(cfg)?;
    write_csv(&report.rows, dir.join("benchmark.csv"), BENCHMARK_HEADER)?;
    write_csv(&report.summary, dir.join("summary.csv"), SUMMARY_HEADER)?;
    for row in &report.summary {
        println!("{}={}", row.metric, row.value);
    }
    Ok(())
}
