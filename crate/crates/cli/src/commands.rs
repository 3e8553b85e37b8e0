use std::path::{Path, PathBuf};

use xscope_core::dataset::{load_image, prepare_dataset, save_image_u16, to_rgb, DatasetManifest, PrepareConfig};
use xscope_core::metrics::{format_value, Metric};
use xscope_core::nn::Tensor;
use xscope_core::psf::{channel_psfs, deconvolve_channels, Psf};
use xscope_core::stats::{evaluate_dataset, parse_metrics_csv, render_report, Comparison, Deconvolution, Evaluation};
use xscope_core::training::{load_generator, train_from_manifest, LOG_HEADER};

use crate::config::RunConfig;
use crate::Status;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn require_file(path: &Path, what: &str) -> Result<(), String> {
    if path.is_file() {
        Ok(())
    } else {
        Err(format!("{what} not found: {}", path.display()))
    }
}

fn create_dir(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn status(failed: usize) -> Status {
    if failed == 0 {
        Status::Done
    } else {
        Status::Partial(failed)
    }
}

/// `<out>/<stem><suffix>.<ext>`, keeping PNG inputs as PNG and writing TIFF
/// otherwise.
fn output_path(out: &Path, input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    let ext = match input.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "png" => "png",
        _ => "tif",
    };
    out.join(format!("{stem}{suffix}.{ext}"))
}

pub fn prepare(lq: &Path, hq: &Path, out: &Path, cfg: &RunConfig) -> Result<Status, String> {
    for dir in [lq, hq] {
        if !dir.is_dir() {
            return Err(format!("not a directory: {}", dir.display()));
        }
    }
    let prep = PrepareConfig {
        align: cfg.align.clone(),
        augment: cfg.augment.clone(),
        fractions: cfg.fractions,
        seed: cfg.seed,
        order: cfg.order,
    };
    let report = prepare_dataset(lq, hq, out, &prep).map_err(err)?;
    for row in &report.rows {
        if let Err(msg) = &row.outcome {
            eprintln!("rejected {}: {msg}", row.id);
        }
    }
    let m = &report.manifest;
    use xscope_core::dataset::Split::*;
    println!(
        "aligned {} of {} pairs; {} entries (train {}, test {}, validation {}) in {}",
        report.rows.len() - report.failures(),
        report.rows.len(),
        m.entries.len(),
        m.count(Train),
        m.count(Test),
        m.count(Validation),
        out.join("manifest.json").display()
    );
    Ok(status(report.failures()))
}

pub fn train(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<Status, String> {
    require_file(manifest, "manifest")?;
    println!("{LOG_HEADER}");
    let outcome = train_from_manifest(manifest, &cfg.train, Some(out), &mut |r| println!("{}", r.csv_line()))
        .map_err(err)?;
    match &outcome.best {
        Some(b) => println!(
            "best validation ssim {} psnr {} at iteration {}",
            format_value(b.val_ssim),
            format_value(b.val_psnr),
            b.iteration
        ),
        None => println!("no validation pass ran"),
    }
    println!("checkpoints in {}", out.display());
    Ok(Status::Done)
}

pub fn enhance(checkpoint: &Path, images: &[PathBuf], out: &Path) -> Result<Status, String> {
    require_file(checkpoint, "checkpoint")?;
    let (g, _) = load_generator(checkpoint).map_err(err)?;
    let cfg = *g.config();
    let step = cfg.granularity();
    create_dir(out)?;
    let mut failed = 0;
    for path in images {
        let result = load_image(path).map_err(err).and_then(|x| {
            let x = if x.shape().c == 1 && cfg.in_channels == 3 { to_rgb(x).map_err(err)? } else { x };
            let s = x.shape();
            if s.h % step != 0 || s.w % step != 0 {
                return Err(format!(
                    "{}x{} is not divisible by {step}; center-crop to {}x{}",
                    s.h,
                    s.w,
                    s.h / step * step,
                    s.w / step * step
                ));
            }
            let y = g.forward(&x).map_err(err)?.clamp(0.0, 1.0);
            let dst = output_path(out, path, "_generated");
            save_image_u16(&dst, &y).map_err(err)?;
            Ok(dst)
        });
        match result {
            Ok(dst) => println!("{} -> {}", path.display(), dst.display()),
            Err(msg) => {
                eprintln!("{}: {msg}", path.display());
                failed += 1;
            }
        }
    }
    Ok(status(failed))
}

fn psfs_for(cfg: &RunConfig, channels: usize, delta: bool) -> Result<Vec<Psf>, String> {
    if delta {
        return Ok(vec![Psf::delta(1).map_err(err)?; channels]);
    }
    channel_psfs(&cfg.psf, &cfg.wavelengths_nm.for_channels(channels)).map_err(err)
}

fn deconvolve_one(image: &Tensor, cfg: &RunConfig, delta: bool) -> Result<Tensor, String> {
    let psfs = psfs_for(cfg, image.shape().c, delta)?;
    Ok(deconvolve_channels(image, &psfs, cfg.deconvolve_iterations)
        .map_err(err)?
        .clamp(0.0, 1.0))
}

pub fn deconvolve(images: &[PathBuf], out: &Path, cfg: &RunConfig, delta: bool) -> Result<Status, String> {
    create_dir(out)?;
    let mut failed = 0;
    for path in images {
        let result = load_image(path).map_err(err).and_then(|x| {
            let y = deconvolve_one(&x, cfg, delta)?;
            let dst = output_path(out, path, "_deconvolved");
            save_image_u16(&dst, &y).map_err(err)?;
            Ok(dst)
        });
        match result {
            Ok(dst) => println!("{} -> {}", path.display(), dst.display()),
            Err(msg) => {
                eprintln!("{}: {msg}", path.display());
                failed += 1;
            }
        }
    }
    Ok(status(failed))
}

fn print_medians(e: &Evaluation) {
    print!("{:<14}", "median");
    for m in Metric::ALL {
        print!(" {:>12}", m.name());
    }
    println!();
    for c in e.comparisons() {
        print!("{:<14}", c.label());
        for m in Metric::ALL {
            let v = e.median(c, m).map_or("-".to_string(), |v| format!("{v:.4}"));
            print!(" {v:>12}");
        }
        println!();
    }
}

pub fn evaluate(
    manifest_path: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
    cfg: &RunConfig,
    deconv: bool,
    delta: bool,
) -> Result<Status, String> {
    require_file(manifest_path, "manifest")?;
    let manifest = DatasetManifest::load(manifest_path).map_err(err)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let generator = match checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Some(load_generator(p).map_err(err)?.0)
        }
        None => None,
    };
    let psfs = psfs_for(cfg, 3, delta)?;
    let baseline = Deconvolution {
        psfs: &psfs,
        iterations: cfg.deconvolve_iterations,
    };
    let e = evaluate_dataset(
        &manifest,
        root,
        cfg.split,
        generator.as_ref(),
        deconv.then_some(&baseline),
        &cfg.ssim,
    )
    .map_err(err)?;
    create_dir(out)?;
    let path = out.join("metrics.csv");
    std::fs::write(&path, e.to_csv()).map_err(|x| format!("{}: {x}", path.display()))?;
    for f in &e.failures {
        let what = f.comparison.map_or("pair", Comparison::label);
        eprintln!("{} ({what}): {}", f.id, f.message);
    }
    print_medians(&e);
    println!("{} rows written to {}", e.rows.len(), path.display());
    Ok(status(e.failures.len()))
}

pub fn report(metrics: &Path, out: &Path) -> Result<Status, String> {
    require_file(metrics, "metrics table")?;
    let text = std::fs::read_to_string(metrics).map_err(|e| format!("{}: {e}", metrics.display()))?;
    let e = Evaluation {
        rows: parse_metrics_csv(&text).map_err(err)?,
        failures: Vec::new(),
    };
    let dists = e.distributions().map_err(err)?;
    // Read everything before writing: `metrics` may live in `out`.
    let written = render_report(&e.rows, &dists, out).map_err(err)?;
    let labels = e.comparisons();
    for m in Metric::ALL {
        match e.significance(m) {
            Ok((kw, dunn)) => {
                println!("{}: Kruskal-Wallis H = {:.4} (df {}), p = {:.4e}", m.name(), kw.h, kw.df, kw.p);
                for p in &dunn.pairs {
                    println!(
                        "  {} vs {}: Dunn z = {:.4}, p = {:.4e}, Bonferroni p = {:.4e}",
                        labels[p.i], labels[p.j], p.z, p.p, p.p_adjusted
                    );
                }
            }
            Err(why) => println!("{}: no test ({why})", m.name()),
        }
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(Status::Done)
}
