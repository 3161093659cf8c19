//! Run configuration assembled from a TOML file, `GEOSHOOT_*` environment
//! variables and command-line flags, in increasing order of precedence.

use std::path::{Path, PathBuf};

use clap::Parser;
use geoshoot_core::image::PhantomKind;
use geoshoot_core::optimizer::OptimizerConfig;
use geoshoot_core::problem::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "GEOSHOOT_";

/// Every key accepted in a config file or as `GEOSHOOT_<KEY>`.
pub const KEYS: [&str; 20] = [
    "source",
    "target",
    "phantom",
    "grid",
    "smoothness",
    "variant",
    "bands",
    "alpha",
    "s",
    "sigma",
    "nt",
    "iters",
    "cg_iters",
    "cg_tol",
    "grad_tol",
    "noise",
    "out",
    "seed",
    "wall_time",
    "complexity_report",
];

/// One configuration layer. Unset keys fall through to lower layers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    /// `<source>:<target>` phantom names, e.g. `circle:c-shape`.
    pub phantom: Option<String>,
    pub grid: Option<Vec<usize>>,
    pub smoothness: Option<f64>,
    pub variant: Option<String>,
    pub bands: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub s: Option<u32>,
    pub sigma: Option<f64>,
    pub nt: Option<usize>,
    pub iters: Option<usize>,
    pub cg_iters: Option<usize>,
    pub cg_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub noise: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub wall_time: Option<bool>,
    pub complexity_report: Option<bool>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        Layer { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Layer {
    /// `top` wins wherever it sets a key.
    pub fn overlay(self, top: Layer) -> Layer {
        overlay!(
            self, top, source, target, phantom, grid, smoothness, variant, bands, alpha, s, sigma, nt, iters,
            cg_iters, cg_tol, grad_tol, noise, out, seed, wall_time, complexity_report
        )
    }

    pub fn from_toml(text: &str) -> Result<Layer> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {}", e.message().trim())))
    }

    pub fn from_file(path: &Path) -> Result<Layer> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Reads `GEOSHOOT_<KEY>` pairs. Values are parsed as TOML scalars where
    /// possible; `grid` and `bands` also accept `8,16` and `64x64`.
    pub fn from_env(vars: impl IntoIterator<Item = (String, String)>) -> Result<Layer> {
        let mut table = toml::Table::new();
        for (name, raw) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(unknown_key(&format!("environment variable {name}")));
            }
            let value = if key == "grid" || key == "bands" {
                toml::Value::Array(
                    parse_list(&raw)
                        .map_err(|e| CliError::Config(format!("{name}: {e}")))?
                        .into_iter()
                        .map(|n| toml::Value::Integer(n as i64))
                        .collect(),
                )
            } else {
                scalar(&raw)
            };
            table.insert(key, value);
        }
        Layer::deserialize(table).map_err(|e| CliError::Config(format!("environment: {}", e.message().trim())))
    }
}

fn scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn unknown_key(what: &str) -> CliError {
    CliError::Config(format!("unknown key in {what}; valid keys are: {}", KEYS.join(", ")))
}

/// Parses `64x64`, `64,64` or `8`.
pub fn parse_list(raw: &str) -> std::result::Result<Vec<usize>, String> {
    raw.split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("'{raw}' is not a list of positive integers")))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeList(pub Vec<usize>);

fn size_list(raw: &str) -> std::result::Result<SizeList, String> {
    parse_list(raw).map(SizeList)
}

/// Band-limited geodesic shooting registration.
#[derive(Debug, Parser)]
#[command(name = "geoshoot", version, about)]
pub struct Cli {
    /// TOML file with any of the keys below; flags and GEOSHOOT_* variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Source image file.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target image file.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Synthetic pair `<source>:<target>`, e.g. circle:c-shape.
    #[arg(long)]
    pub phantom: Option<String>,
    /// Phantom grid, e.g. 64x64 or 32x32x32.
    #[arg(long, value_parser = size_list)]
    pub grid: Option<SizeList>,
    /// Phantom edge width in voxels.
    #[arg(long)]
    pub smoothness: Option<f64>,
    /// state or deformation.
    #[arg(long, action = clap::ArgAction::Append)]
    pub variant: Vec<String>,
    /// Band sizes to sweep, e.g. 8,16,32.
    #[arg(long, value_parser = size_list)]
    pub bands: Option<SizeList>,
    /// Regularization weight of the metric.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Exponent of the metric.
    #[arg(long)]
    pub s: Option<u32>,
    /// Noise level of the image term.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of time steps on [0, 1].
    #[arg(long)]
    pub nt: Option<usize>,
    /// Gauss-Newton iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Maximum CG iterations per Gauss-Newton step.
    #[arg(long)]
    pub cg_iters: Option<usize>,
    /// Relative CG residual tolerance.
    #[arg(long)]
    pub cg_tol: Option<f64>,
    /// Stop once the relative gradient infinity norm falls below this.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Amplitude of uniform noise added to the target.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the target noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print a storage and timing table instead of registering.
    #[arg(long)]
    pub complexity_report: bool,
    /// Record wall time in convergence.csv and summary.txt.
    #[arg(long)]
    pub wall_time: bool,
}

impl Cli {
    fn into_layer(self) -> Result<(Option<PathBuf>, Layer)> {
        let mut variants = self.variant;
        variants.dedup();
        if variants.len() > 1 {
            return Err(CliError::Config(format!("conflicting variant values: {}", variants.join(" vs "))));
        }
        let layer = Layer {
            source: self.source,
            target: self.target,
            phantom: self.phantom,
            grid: self.grid.map(|g| g.0),
            smoothness: self.smoothness,
            variant: variants.pop(),
            bands: self.bands.map(|b| b.0),
            alpha: self.alpha,
            s: self.s,
            sigma: self.sigma,
            nt: self.nt,
            iters: self.iters,
            cg_iters: self.cg_iters,
            cg_tol: self.cg_tol,
            grad_tol: self.grad_tol,
            noise: self.noise,
            out: self.out,
            seed: self.seed,
            wall_time: self.wall_time.then_some(true),
            complexity_report: self.complexity_report.then_some(true),
        };
        Ok((self.config, layer))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImageInput {
    Files { source: PathBuf, target: PathBuf },
    Phantom { source: PhantomKind, target: PhantomKind, grid: Vec<usize>, smoothness: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: ImageInput,
    pub variant: Variant,
    pub bands: Vec<usize>,
    pub alpha: f64,
    pub s: u32,
    pub sigma: f64,
    pub nt: usize,
    pub optimizer: OptimizerConfig,
    pub noise: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub wall_time: bool,
    pub complexity_report: bool,
}

pub const DEFAULT_GRID: [usize; 2] = [64, 64];

impl RunConfig {
    /// Resolves a merged layer, applying defaults and validating.
    pub fn from_layer(layer: Layer) -> Result<RunConfig> {
        let input = match (layer.phantom, layer.source, layer.target) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::Config("give either phantom or source/target files, not both".into()))
            }
            (Some(spec), None, None) => {
                let (a, b) = spec
                    .split_once(':')
                    .ok_or_else(|| CliError::Config(format!("phantom '{spec}' must look like <source>:<target>")))?;
                ImageInput::Phantom {
                    source: a.parse()?,
                    target: b.parse()?,
                    grid: layer.grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
                    smoothness: layer.smoothness.unwrap_or(2.0),
                }
            }
            (None, Some(source), Some(target)) => {
                for p in [&source, &target] {
                    if !p.is_file() {
                        return Err(CliError::Config(format!("input file {} does not exist", p.display())));
                    }
                }
                if layer.grid.is_some() || layer.smoothness.is_some() {
                    return Err(CliError::Config("grid and smoothness only apply to phantom inputs".into()));
                }
                ImageInput::Files { source, target }
            }
            (None, _, _) => {
                return Err(CliError::Config(
                    "no input: give phantom, e.g. --phantom circle:c-shape, or both source and target".into(),
                ))
            }
        };
        let variant: Variant = layer.variant.as_deref().unwrap_or("state").parse()?;
        let defaults = OptimizerConfig::default();
        let optimizer = OptimizerConfig {
            max_outer_iterations: layer.iters.unwrap_or(defaults.max_outer_iterations),
            cg_max_iterations: layer.cg_iters.unwrap_or(defaults.cg_max_iterations),
            cg_relative_tolerance: layer.cg_tol.unwrap_or(defaults.cg_relative_tolerance),
            gradient_tolerance: layer.grad_tol.unwrap_or(defaults.gradient_tolerance),
            ..defaults
        };
        optimizer.validate()?;
        let cfg = RunConfig {
            input,
            variant,
            bands: layer.bands.unwrap_or_else(|| vec![16]),
            alpha: layer.alpha.unwrap_or(3.0),
            s: layer.s.unwrap_or(2),
            sigma: layer.sigma.unwrap_or(1.0),
            nt: layer.nt.unwrap_or(10),
            optimizer,
            noise: layer.noise.unwrap_or(0.0),
            out: layer.out.unwrap_or_else(|| PathBuf::from("geoshoot-out")),
            seed: layer.seed.unwrap_or(0),
            wall_time: layer.wall_time.unwrap_or(false),
            complexity_report: layer.complexity_report.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.bands.is_empty() || self.bands.contains(&0) {
            return bad("bands must be a non-empty list of positive sizes".into());
        }
        if let ImageInput::Phantom { grid, smoothness, .. } = &self.input {
            if !(2..=3).contains(&grid.len()) || grid.contains(&0) {
                return bad(format!("grid must have 2 or 3 positive sizes, got {grid:?}"));
            }
            if let Some(&b) = self.bands.iter().find(|&&b| grid.iter().any(|&n| b > n)) {
                return bad(format!("band size {b} exceeds the grid {grid:?}"));
            }
            if !(smoothness.is_finite() && *smoothness > 0.0) {
                return bad(format!("smoothness must be positive, got {smoothness}"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if self.s == 0 || self.nt == 0 {
            return bad("s and nt must be at least 1".into());
        }
        Ok(())
    }

    /// The fully resolved configuration as a layer, suitable for `--config`.
    pub fn to_layer(&self) -> Layer {
        let mut layer = Layer {
            variant: Some(self.variant.name().to_string()),
            bands: Some(self.bands.clone()),
            alpha: Some(self.alpha),
            s: Some(self.s),
            sigma: Some(self.sigma),
            nt: Some(self.nt),
            iters: Some(self.optimizer.max_outer_iterations),
            cg_iters: Some(self.optimizer.cg_max_iterations),
            cg_tol: Some(self.optimizer.cg_relative_tolerance),
            grad_tol: Some(self.optimizer.gradient_tolerance),
            noise: Some(self.noise),
            out: Some(self.out.clone()),
            seed: Some(self.seed),
            wall_time: Some(self.wall_time),
            complexity_report: Some(self.complexity_report),
            ..Layer::default()
        };
        match &self.input {
            ImageInput::Files { source, target } => {
                layer.source = Some(source.clone());
                layer.target = Some(target.clone());
            }
            ImageInput::Phantom { source, target, grid, smoothness } => {
                layer.phantom = Some(format!("{source}:{target}"));
                layer.grid = Some(grid.clone());
                layer.smoothness = Some(*smoothness);
            }
        }
        layer
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_layer()).expect("config layer serializes")
    }
}

/// Parses flags, then layers file < environment < flags.
pub fn parse_config<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (file, flags) = cli.into_layer()?;
    let base = match file {
        Some(path) => Layer::from_file(&path)?,
        None => Layer::default(),
    };
    RunConfig::from_layer(base.overlay(Layer::from_env(env)?).overlay(flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str], env: &[(&str, &str)]) -> Result<RunConfig> {
        let argv = std::iter::once("geoshoot").chain(args.iter().copied());
        parse_config(argv, env.iter().map(|(k, v)| (k.to_string(), v.to_string())))
    }

    #[test]
    fn phantom_only_applies_defaults() {
        let cfg = parse(&["--phantom", "circle:c-shape"], &[]).unwrap();
        assert_eq!(cfg.variant, Variant::State);
        assert_eq!(cfg.bands, vec![16]);
        assert_eq!((cfg.alpha, cfg.s, cfg.sigma, cfg.nt), (3.0, 2, 1.0, 10));
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
        assert_eq!(
            cfg.input,
            ImageInput::Phantom {
                source: PhantomKind::Circle,
                target: PhantomKind::CShape,
                grid: vec![64, 64],
                smoothness: 2.0
            }
        );
        assert!(!cfg.wall_time);
    }

    #[test]
    fn band_larger_than_grid_is_rejected() {
        let err = parse(&["--phantom", "circle:c-shape", "--grid", "16x16", "--bands", "8,32"], &[]).unwrap_err();
        assert!(err.to_string().contains("band size 32"), "{err}");
    }

    #[test]
    fn env_sits_between_file_and_flags() {
        let file = Layer::from_toml("alpha = 1.5\nsigma = 0.5\nnt = 4\n").unwrap();
        let env = Layer::from_env([("GEOSHOOT_SIGMA".to_string(), "0.25".to_string()), ("GEOSHOOT_NT".to_string(), "6".to_string())]).unwrap();
        let flags = Layer {
            nt: Some(8),
            phantom: Some("circle:c-shape".into()),
            ..Layer::default()
        };
        let cfg = RunConfig::from_layer(file.overlay(env).overlay(flags)).unwrap();
        assert_eq!((cfg.alpha, cfg.sigma, cfg.nt), (1.5, 0.25, 8));
    }

    #[test]
    fn env_lists_are_parsed() {
        let env = Layer::from_env([
            ("GEOSHOOT_BANDS".to_string(), "8,16".to_string()),
            ("GEOSHOOT_GRID".to_string(), "32x32".to_string()),
            ("GEOSHOOT_VARIANT".to_string(), "deformation".to_string()),
            ("GEOSHOOT_WALL_TIME".to_string(), "true".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_eq!(env.bands, Some(vec![8, 16]));
        assert_eq!(env.grid, Some(vec![32, 32]));
        assert_eq!(env.variant.as_deref(), Some("deformation"));
        assert_eq!(env.wall_time, Some(true));
    }

    #[test]
    fn unknown_keys_list_the_valid_ones() {
        let err = Layer::from_toml("alpah = 2.0\n").unwrap_err().to_string();
        assert!(err.contains("alpah") && err.contains("alpha") && err.contains("cg_tol"), "{err}");
        let err = Layer::from_env([("GEOSHOOT_ALPAH".to_string(), "2".to_string())]).unwrap_err().to_string();
        assert!(err.contains("GEOSHOOT_ALPAH") && err.contains("alpha"), "{err}");
    }

    #[test]
    fn conflicting_variants_are_rejected() {
        let err = parse(&["--phantom", "circle:c-shape", "--variant", "state", "--variant", "deformation"], &[]).unwrap_err();
        assert!(err.to_string().contains("conflicting variant"), "{err}");
        assert!(parse(&["--phantom", "circle:c-shape", "--variant", "state", "--variant", "state"], &[]).is_ok());
        assert!(parse(&["--phantom", "circle:c-shape", "--variant", "both"], &[]).is_err());
    }

    #[test]
    fn inputs_must_be_unambiguous() {
        assert!(parse(&[], &[]).is_err());
        assert!(parse(&["--phantom", "circle"], &[]).is_err());
        assert!(parse(&["--phantom", "circle:c-shape", "--source", "a.img"], &[]).is_err());
        let err = parse(&["--source", "/nonexistent/a.img", "--target", "/nonexistent/b.img"], &[]).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn echoed_config_round_trips() {
        let cfg = parse(
            &["--phantom", "gaussian-blob:offset-blob", "--grid", "24x24", "--bands", "4,8", "--variant", "deformation", "--wall-time"],
            &[("GEOSHOOT_SEED", "9")],
        )
        .unwrap();
        let again = RunConfig::from_layer(Layer::from_toml(&cfg.to_toml()).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
