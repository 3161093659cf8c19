//! Band sweeps and their output directories.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use geoshoot_core::image::{displacement_jacobian_determinant, make_phantom, read_image, write_field, write_image};
use geoshoot_core::optimizer::{run, ConvergenceRecord, ConvergenceRow};
use geoshoot_core::problem::{RegistrationProblem, StorageCounts, Variant};
use geoshoot_core::transport::TimeGrid;
use geoshoot_core::{BandLimitedField, FrequencyBand, ScalarImage, SpectralOperators};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ImageInput, RunConfig};
use crate::error::{io_context, CliError, Result};

pub const CSV_HEADER: &str = "iter,energy,mse_rel,grad_inf_rel,cg_iters,step,wall_time_s";

/// Source and target images, the latter with the configured noise.
pub fn load_images(cfg: &RunConfig) -> Result<(ScalarImage, ScalarImage)> {
    let (source, target) = match &cfg.input {
        ImageInput::Files { source, target } => (read_image(source)?, read_image(target)?),
        ImageInput::Phantom { source, target, grid, smoothness } => {
            (make_phantom(*source, grid, *smoothness)?, make_phantom(*target, grid, *smoothness)?)
        }
    };
    if source.sizes() != target.sizes() {
        return Err(CliError::Config(format!(
            "source grid {:?} and target grid {:?} differ",
            source.sizes(),
            target.sizes()
        )));
    }
    if cfg.noise == 0.0 {
        return Ok((source, target));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noisy = target.values().iter().map(|v| v + rng.gen_range(-cfg.noise..=cfg.noise)).collect();
    let target = ScalarImage::new(target.sizes(), noisy)?.with_spacing(target.spacing().to_vec())?;
    Ok((source, target))
}

pub fn build_problem(cfg: &RunConfig, band: usize, source: &ScalarImage, target: &ScalarImage) -> Result<RegistrationProblem> {
    let grid = source.sizes();
    if let Some(&n) = grid.iter().find(|&&n| band > n) {
        return Err(CliError::Config(format!("band size {band} exceeds grid size {n}")));
    }
    let band = Arc::new(FrequencyBand::new(&vec![band; grid.len()], grid)?);
    let ops = SpectralOperators::new(&band, cfg.alpha, cfg.s)?;
    Ok(RegistrationProblem::new(
        cfg.variant,
        source.clone(),
        target.clone(),
        ops,
        cfg.sigma,
        TimeGrid::new(cfg.nt)?,
    )?)
}

pub fn band_dir(out: &Path, band: usize) -> PathBuf {
    out.join(format!("band_{band}"))
}

#[derive(Clone, Debug)]
pub struct BandOutcome {
    pub band: usize,
    pub dir: PathBuf,
    pub record: ConvergenceRecord,
    pub v0: BandLimitedField,
    /// Over the full-resolution flow map.
    pub min_jacobian_determinant: f64,
    /// Over `id + iota(u(1))` with the band-limited displacement.
    pub min_jacobian_determinant_band_limited: f64,
    pub storage: StorageCounts,
}

pub fn convergence_csv(record: &ConvergenceRecord, wall_time: bool) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &record.rows {
        let wall = if wall_time { r.wall_time_s.to_string() } else { String::new() };
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iteration, r.energy, r.mse_rel, r.grad_inf_rel, r.cg_iterations, r.step_length, wall
        )
        .expect("writing to a string");
    }
    s
}

/// One coefficient per line: the frequency, then `re im` per component.
pub fn velocity_dump(v: &BandLimitedField) -> String {
    let band = v.band();
    let d = band.dims();
    let sizes: Vec<String> = band.band_sizes().iter().map(usize::to_string).collect();
    let mut s = format!("# band {} components {d}\n", sizes.join("x"));
    for i in 0..band.len() {
        let k = band.frequency(i);
        let ks: Vec<String> = k[..d].iter().map(i64::to_string).collect();
        s.push_str(&ks.join(" "));
        for c in 0..d {
            let z = v.component(c).data()[i];
            write!(s, " {} {}", z.re, z.im).expect("writing to a string");
        }
        s.push('\n');
    }
    s
}

fn min_value(img: &ScalarImage) -> f64 {
    img.values().iter().copied().fold(f64::INFINITY, f64::min)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_context(format!("cannot write {}", path.display())))
}

/// Registers at one band size and writes its directory.
pub fn run_band(
    cfg: &RunConfig,
    band: usize,
    source: &ScalarImage,
    target: &ScalarImage,
    console: &mut dyn Write,
) -> Result<BandOutcome> {
    let clock = Instant::now();
    let problem = build_problem(cfg, band, source, target)?;
    let dir = band_dir(&cfg.out, band);
    fs::create_dir_all(&dir).map_err(io_context(format!("cannot create {}", dir.display())))?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;

    let zero = BandLimitedField::zeros(problem.ops().band());
    let outcome = run(&problem, &zero, &cfg.optimizer, |row: &ConvergenceRow| {
        writeln!(
            console,
            "band {band} iter {:>3}  energy {:.6e}  mse_rel {:8.4}  grad_inf_rel {:.3e}  cg {:>2}  step {}",
            row.iteration, row.energy, row.mse_rel, row.grad_inf_rel, row.cg_iterations, row.step_length
        )?;
        Ok(())
    })?;

    let report = &outcome.report;
    let flow = problem.flow_displacement(&report.forward)?;
    let min_det = min_value(&displacement_jacobian_determinant(&flow, source.spacing())?);
    let u = problem.map_displacement(&report.forward)?;
    let min_det_band_limited = min_value(&problem.displacement_jacobian_determinant(&u)?);
    let storage = problem.storage(report);

    write_text(&dir.join("convergence.csv"), &convergence_csv(&outcome.record, cfg.wall_time))?;
    write_image(dir.join("warped.img"), &report.forward.warped)?;
    write_field(dir.join("displacement.fld"), &flow)?;
    write_text(&dir.join("initial_velocity.txt"), &velocity_dump(&outcome.v0))?;

    let last = outcome.record.rows.last().expect("row 0 is always recorded");
    let grid: Vec<String> = source.sizes().iter().map(usize::to_string).collect();
    let mut summary = String::new();
    let mut kv = |k: &str, v: String| writeln!(summary, "{k}={v}").expect("writing to a string");
    kv("variant", cfg.variant.name().into());
    kv("band", band.to_string());
    kv("grid", grid.join("x"));
    kv("iterations", last.iteration.to_string());
    kv("energy", report.energy.to_string());
    kv("regularizer", report.regularizer.to_string());
    kv("image_term", report.image_term.to_string());
    kv("mse_rel", last.mse_rel.to_string());
    kv("grad_inf_rel", last.grad_inf_rel.to_string());
    kv("min_jacobian_determinant", min_det.to_string());
    kv("min_jacobian_determinant_band_limited", min_det_band_limited.to_string());
    kv("stalled", outcome.record.stalled.to_string());
    kv("negative_curvature", outcome.record.negative_curvature.to_string());
    kv("velocity_coefficients", storage.velocity_coefficients.to_string());
    kv("state_coefficients", storage.state_coefficients.to_string());
    kv("tangent_coefficients", storage.tangent_coefficients.to_string());
    kv("costate_coefficients", storage.costate_coefficients.to_string());
    kv("peak_coefficients", storage.coefficients().to_string());
    kv("grid_scalars", storage.grid_scalars.to_string());
    if cfg.wall_time {
        kv("wall_time_s", clock.elapsed().as_secs_f64().to_string());
    }
    write_text(&dir.join("summary.txt"), &summary)?;

    Ok(BandOutcome {
        band,
        dir,
        record: outcome.record,
        v0: outcome.v0,
        min_jacobian_determinant: min_det,
        min_jacobian_determinant_band_limited: min_det_band_limited,
        storage,
    })
}

/// Runs every configured band in order.
pub fn run_registration(cfg: &RunConfig, console: &mut dyn Write) -> Result<Vec<BandOutcome>> {
    let (source, target) = load_images(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(io_context(format!("cannot create {}", cfg.out.display())))?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml())?;
    cfg.bands
        .iter()
        .map(|&b| run_band(cfg, b, &source, &target, console))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub band: usize,
    pub variant: Variant,
    pub storage: StorageCounts,
    pub gradient_time_s: f64,
}

/// Storage of one Gauss-Newton product and the time of one gradient at
/// `v0 = 0`, for both variants at every band size.
pub fn report_complexity(cfg: &RunConfig, console: &mut dyn Write) -> Result<Vec<ComplexityRow>> {
    let (source, target) = load_images(cfg)?;
    let mut rows = Vec::new();
    writeln!(
        console,
        "{:>5} {:>12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>12} {:>12}",
        "band", "variant", "velocity", "state", "tangent", "costate", "peak_coeffs", "grid_scalars", "gradient_s"
    )
    .map_err(io_context("console"))?;
    for &band in &cfg.bands {
        for variant in [Variant::State, Variant::Deformation] {
            let cfg = RunConfig { variant, ..cfg.clone() };
            let problem = build_problem(&cfg, band, &source, &target)?;
            let zero = BandLimitedField::zeros(problem.ops().band());
            let clock = Instant::now();
            let report = problem.gradient(&zero)?;
            let t = clock.elapsed().as_secs_f64();
            let storage = problem.storage(&report);
            writeln!(
                console,
                "{:>5} {:>12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>12} {:>12.4}",
                band,
                variant.name(),
                storage.velocity_coefficients,
                storage.state_coefficients,
                storage.tangent_coefficients,
                storage.costate_coefficients,
                storage.coefficients(),
                storage.grid_scalars,
                t
            )
            .map_err(io_context("console"))?;
            rows.push(ComplexityRow {
                band,
                variant,
                storage,
                gradient_time_s: t,
            });
        }
    }
    Ok(rows)
}
