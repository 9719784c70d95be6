//! Command-line pipelines: `mi-curve`, `select`, `sweep`, `classify`, `synth`.
//!
//! Experiments are driven by one flat `key=value` config file. Relative paths
//! in it resolve against the file's directory. `--set key=value` overrides any
//! key; the output directory can also come from `BANDSEL_OUTPUT` or `--out`.
//!
//! Every run writes `config.resolved` next to its outputs. Timestamps only
//! appear in `run.log`, so all other outputs are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use crate::classify::{
    build_estimated_map, split, ClassifierConfig, ClassifierModel, PixelDataset, SplitSpec,
    Trainer,
};
use crate::error::{Error, Result};
use crate::eval::{accuracy_table, evaluate, per_class_table, write_map, Palette, Table};
use crate::hypercube::{
    estimate_gt_by_average, load_cube, load_ground_truth, make_synthetic_cube, write_cube,
    write_ground_truth, GroundTruth, HyperCube, SyntheticSpec,
};
use crate::infotheory::{mi_curve, Quantizer, Reference};
use crate::selection::{
    select_filter, threshold_sweep, FanoProblem, FilterParams, WrapperParams,
};

pub const OUTPUT_ENV: &str = "BANDSEL_OUTPUT";

/// Threshold list of the reference sweep.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.0, 0.001, 0.008, 0.015, 0.02, 0.03];

#[derive(Debug, Parser)]
#[command(name = "bandsel", version, about = "Hyperspectral band selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Experiment config file (key=value lines).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set threshold=0.03`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; beats the config file and BANDSEL_OUTPUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Filter,
    Fano,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-band MI with the ground truth (and with an averaged-band map when
    /// `band_range` is set).
    MiCurve(ConfigArgs),
    /// Run one selection algorithm and write its trace.
    Select {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
    },
    /// Wrapper selection over a list of thresholds; accuracy tables.
    Sweep(ConfigArgs),
    /// Train on a band list, report accuracy and write class maps.
    Classify {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated 1-based bands; overrides `bands` in the config.
        #[arg(long, value_delimiter = ',')]
        bands: Option<Vec<usize>>,
    },
    /// Generate a synthetic cube, ground truth and starter config.
    Synth {
        /// Synthetic spec file.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cube: PathBuf,
    pub gt: PathBuf,
    pub bins: usize,
    pub labeled_only: bool,
    pub classifier: ClassifierConfig,
    pub split: SplitSpec,
    /// `None` means every band may be selected.
    pub target_bands: Option<usize>,
    pub threshold: f64,
    pub pe_init: Option<f64>,
    pub half_bandwidth: usize,
    pub filter_threshold: f64,
    pub thresholds: Vec<f64>,
    pub checkpoints: Option<Vec<usize>>,
    pub band_range: Option<(usize, usize)>,
    pub bands: Option<Vec<usize>>,
    pub output: PathBuf,
    pub seed: u64,
}

const KNOWN_KEYS: &[&str] = &[
    "cube",
    "gt",
    "bins",
    "labeled_only",
    "classifier",
    "regularization",
    "max_iter",
    "train_fraction",
    "stratified",
    "target_bands",
    "threshold",
    "pe_init",
    "half_bandwidth",
    "filter_threshold",
    "thresholds",
    "checkpoints",
    "band_range",
    "bands",
    "output",
    "seed",
];

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value for `{key}`: `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean for `{key}`: `{v}`"))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Builds a config from key/value pairs; relative paths resolve against `base`.
    pub fn from_pairs(map: &BTreeMap<String, String>, base: &Path) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let path = |k: &str| -> Result<PathBuf> {
            let v = get(k).ok_or_else(|| Error::Config(format!("missing `{k}`")))?;
            Ok(base.join(v))
        };
        let seed: u64 = parse_value(
            "seed",
            get("seed").ok_or_else(|| Error::Config("missing `seed` (mandatory)".into()))?,
        )?;
        let regularization = get("regularization")
            .map(|v| parse_value("regularization", v))
            .transpose()?
            .unwrap_or(1e-3);
        let max_iter = get("max_iter")
            .map(|v| parse_value("max_iter", v))
            .transpose()?
            .unwrap_or(50);
        let classifier = match get("classifier").unwrap_or("linear") {
            "linear" => ClassifierConfig::Linear {
                regularization,
                max_iter,
                seed,
            },
            "knn" => ClassifierConfig::Knn,
            other => {
                return Err(Error::Config(format!(
                    "classifier must be linear or knn, got `{other}`"
                )))
            }
        };
        let band_range = match get("band_range") {
            None => None,
            Some(v) => {
                let r: Vec<usize> = parse_list("band_range", v)?;
                match r.as_slice() {
                    [lo, hi] => Some((*lo, *hi)),
                    _ => return Err(Error::Config("band_range needs two bands `lo,hi`".into())),
                }
            }
        };
        Ok(ExperimentConfig {
            cube: path("cube")?,
            gt: path("gt")?,
            bins: get("bins").map(|v| parse_value("bins", v)).transpose()?.unwrap_or(256),
            labeled_only: get("labeled_only")
                .map(|v| parse_bool("labeled_only", v))
                .transpose()?
                .unwrap_or(true),
            classifier,
            split: SplitSpec {
                train_fraction: get("train_fraction")
                    .map(|v| parse_value("train_fraction", v))
                    .transpose()?
                    .unwrap_or(0.5),
                seed,
                stratified: get("stratified")
                    .map(|v| parse_bool("stratified", v))
                    .transpose()?
                    .unwrap_or(true),
            },
            target_bands: get("target_bands")
                .map(|v| parse_value("target_bands", v))
                .transpose()?,
            threshold: get("threshold")
                .map(|v| parse_value("threshold", v))
                .transpose()?
                .unwrap_or(0.03),
            pe_init: get("pe_init").map(|v| parse_value("pe_init", v)).transpose()?,
            half_bandwidth: get("half_bandwidth")
                .map(|v| parse_value("half_bandwidth", v))
                .transpose()?
                .unwrap_or(1),
            filter_threshold: get("filter_threshold")
                .map(|v| parse_value("filter_threshold", v))
                .transpose()?
                .unwrap_or(0.02),
            thresholds: get("thresholds")
                .map(|v| parse_list("thresholds", v))
                .transpose()?
                .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()),
            checkpoints: get("checkpoints")
                .map(|v| parse_list("checkpoints", v))
                .transpose()?,
            band_range,
            bands: get("bands").map(|v| parse_list("bands", v)).transpose()?,
            output: get("output").map_or_else(|| base.join("out"), |v| base.join(v)),
            seed,
        })
    }

    /// Reads a config file, applies `KEY=VALUE` overrides, then the output
    /// directory from the environment and from `out`.
    pub fn load(path: &Path, overrides: &[String], out: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = parse_pairs(&text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut cfg = Self::from_pairs(&map, base)?;
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            if !dir.is_empty() {
                cfg.output = PathBuf::from(dir);
            }
        }
        if let Some(dir) = out {
            cfg.output = dir.to_path_buf();
        }
        Ok(cfg)
    }

    /// Checks that referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("cube", &self.cube), ("gt", &self.gt)] {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "{what} path does not exist: {}",
                    p.display()
                )));
            }
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be ≥ 2".into()));
        }
        Ok(())
    }

    /// Deterministic snapshot of every resolved setting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("cube", self.cube.display().to_string());
        kv("gt", self.gt.display().to_string());
        kv("bins", self.bins.to_string());
        kv("labeled_only", self.labeled_only.to_string());
        match self.classifier {
            ClassifierConfig::Linear {
                regularization,
                max_iter,
                ..
            } => {
                kv("classifier", "linear".into());
                kv("regularization", regularization.to_string());
                kv("max_iter", max_iter.to_string());
            }
            ClassifierConfig::Knn => kv("classifier", "knn".into()),
        }
        kv("train_fraction", self.split.train_fraction.to_string());
        kv("stratified", self.split.stratified.to_string());
        if let Some(x) = self.target_bands {
            kv("target_bands", x.to_string());
        }
        kv("threshold", self.threshold.to_string());
        if let Some(p) = self.pe_init {
            kv("pe_init", p.to_string());
        }
        kv("half_bandwidth", self.half_bandwidth.to_string());
        kv("filter_threshold", self.filter_threshold.to_string());
        kv("thresholds", join(&self.thresholds));
        if let Some(c) = &self.checkpoints {
            kv("checkpoints", join(c));
        }
        if let Some((lo, hi)) = self.band_range {
            kv("band_range", format!("{lo},{hi}"));
        }
        if let Some(b) = &self.bands {
            kv("bands", join(b));
        }
        kv("output", self.output.display().to_string());
        kv("seed", self.seed.to_string());
        s
    }

    pub fn quantizer(&self) -> Result<Quantizer> {
        Quantizer::new(self.bins)
    }

    fn load_inputs(&self) -> Result<(HyperCube, GroundTruth)> {
        self.validate()?;
        let cube = load_cube(&self.cube)?;
        let gt = load_ground_truth(&self.gt, (cube.rows(), cube.cols()))?;
        Ok((cube, gt))
    }
}

/// Files written by a command; removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn track(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Runs `body` with a fresh output set; writes the config snapshot and log on
/// success, removes everything written on failure.
fn with_outputs(
    cfg: &ExperimentConfig,
    command: &str,
    body: impl FnOnce(&mut Outputs) -> Result<()>,
) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.output)?;
    let started = unix_time();
    let result = out
        .write("config.resolved", cfg.to_text())
        .and_then(|_| body(&mut out))
        .and_then(|_| {
            let log = format!(
                "command={command}\nstarted_unix={started}\nfinished_unix={}\nstatus=ok\n",
                unix_time()
            );
            out.write("run.log", log).map(|_| ())
        });
    match result {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn wrapper_params(cfg: &ExperimentConfig, cube: &HyperCube, threshold: f64) -> WrapperParams {
    WrapperParams {
        target_bands: cfg.target_bands.unwrap_or(cube.n_bands()),
        threshold,
        pe_init: cfg.pe_init,
    }
}

pub fn cmd_mi_curve(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (cube, gt) = cfg.load_inputs()?;
    let q = cfg.quantizer()?;
    with_outputs(cfg, "mi-curve", |out| {
        let curve = mi_curve(&cube, Reference::Labels(&gt), &q, cfg.labeled_only)?;
        let mut buf = Vec::new();
        curve
            .write_csv(&mut buf)
            .map_err(|e| Error::io(&cfg.output, e))?;
        out.write("mi_curve.csv", buf)?;
        if let Some(range) = cfg.band_range {
            let avg = estimate_gt_by_average(&cube, range)?;
            // the averaged map has a value everywhere, so use every pixel
            let est = mi_curve(
                &cube,
                Reference::Map {
                    image: &avg,
                    mask: Some(&gt),
                },
                &q,
                false,
            )?;
            let mut buf = Vec::new();
            est.write_csv(&mut buf)
                .map_err(|e| Error::io(&cfg.output, e))?;
            out.write("mi_curve_est.csv", buf)?;
        }
        Ok(())
    })
}

pub fn cmd_select(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<Vec<PathBuf>> {
    let (cube, gt) = cfg.load_inputs()?;
    let q = cfg.quantizer()?;
    let name = match algorithm {
        Algorithm::Filter => "select-filter",
        Algorithm::Fano => "select-fano",
    };
    with_outputs(cfg, name, |out| {
        let result = match algorithm {
            Algorithm::Filter => {
                let curve = mi_curve(&cube, Reference::Labels(&gt), &q, cfg.labeled_only)?;
                let p = FilterParams {
                    target_bands: cfg.target_bands.unwrap_or(cube.n_bands()),
                    half_bandwidth: cfg.half_bandwidth,
                    threshold: cfg.filter_threshold,
                };
                select_filter(&curve, &p)?
            }
            Algorithm::Fano => {
                let problem = FanoProblem::new(&cube, &gt, &cfg.split, &q)?;
                problem.run(&wrapper_params(cfg, &cube, cfg.threshold), &cfg.classifier)?
            }
        };
        let stem = match algorithm {
            Algorithm::Filter => "filter",
            Algorithm::Fano => "fano",
        };
        out.track([
            cfg.output.join(format!("{stem}_trace.csv")),
            cfg.output.join(format!("{stem}_summary.json")),
        ]);
        result.save(&cfg.output, stem)?;
        Ok(())
    })
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (cube, gt) = cfg.load_inputs()?;
    let q = cfg.quantizer()?;
    with_outputs(cfg, "sweep", |out| {
        let problem = FanoProblem::new(&cube, &gt, &cfg.split, &q)?;
        let max_bands = cfg.target_bands.unwrap_or(cube.n_bands());
        let (report, results) = threshold_sweep(
            &problem,
            &cfg.thresholds,
            max_bands,
            &cfg.classifier,
            cfg.checkpoints.as_deref(),
        )?;
        let acc = accuracy_table(&report)?;
        out.write("sweep_accuracy.csv", acc.to_csv())?;
        out.write("sweep_accuracy.txt", acc.to_text())?;
        let per_class = per_class_table(&report, &gt)?;
        out.write("sweep_per_class.csv", per_class.to_csv())?;
        out.write("sweep_per_class.txt", per_class.to_text())?;
        let mut selected = String::from("threshold,n_selected,bands\n");
        for (run, result) in report.runs.iter().zip(&results) {
            let bands: Vec<String> = result.selected.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                selected,
                "{},{},{}",
                run.threshold,
                result.selected.len(),
                bands.join(" ")
            );
        }
        out.write("sweep_selected.csv", selected)?;
        Ok(())
    })
}

pub fn cmd_classify(cfg: &ExperimentConfig, bands: Option<&[usize]>) -> Result<Vec<PathBuf>> {
    let bands: Vec<usize> = bands
        .map(<[usize]>::to_vec)
        .or_else(|| cfg.bands.clone())
        .ok_or_else(|| Error::Config("no band list given (`bands` or --bands)".into()))?;
    if bands.is_empty() {
        return Err(Error::Config("empty band list".into()));
    }
    let (cube, gt) = cfg.load_inputs()?;
    for &b in &bands {
        cube.check_band(b)?;
    }
    with_outputs(cfg, "classify", |out| {
        let s = split(&gt, &cfg.split)?;
        let data = PixelDataset::from_cube(&cube, &gt, &bands, &s.train)?;
        let model: ClassifierModel = cfg.classifier.train(&data)?;
        let c_est = build_estimated_map(&cube, &gt, &bands, &model)?;
        let cm = evaluate(&gt, &c_est, &s.test)?;
        let row_sums = cm.row_sums();
        let table = Table {
            header: vec![
                "class".into(),
                "total_pixels".into(),
                "test_pixels".into(),
                "accuracy".into(),
                "low_confidence".into(),
            ],
            rows: cm
                .per_class_accuracy()
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    vec![
                        (k + 1).to_string(),
                        gt.class_counts()[k].to_string(),
                        row_sums[k].to_string(),
                        a.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v)),
                        if cm.low_confidence_classes().contains(&(k as u16 + 1)) {
                            "yes".into()
                        } else {
                            "no".into()
                        },
                    ]
                })
                .collect(),
        };
        let mut report = format!(
            "bands={}\noverall_accuracy={:.2}\ntest_pixels={}\n\n",
            join(&bands),
            100.0 * cm.overall_accuracy(),
            cm.total()
        );
        report.push_str(&table.to_text());
        out.write("classify_report.txt", &report)?;
        out.write("classify_per_class.csv", table.to_csv())?;
        let palette = Palette::for_classes(gt.n_classes());
        for (name, grid) in [("gt_map.ppm", gt.to_grid()), ("estimate_map.ppm", c_est)] {
            let path = cfg.output.join(name);
            out.track([path.clone()]);
            write_map(&grid, &palette, &path)?;
        }
        let model_path = cfg.output.join("model.json");
        out.track([model_path.clone()]);
        model.save(&model_path)?;
        println!("overall accuracy: {:.2}%", 100.0 * cm.overall_accuracy());
        Ok(())
    })
}

pub fn cmd_synth(spec_path: &Path, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = SyntheticSpec::load(spec_path)?;
    let (cube, gt) = make_synthetic_cube(&spec, seed)?;
    let mut out = Outputs::new(out_dir)?;
    let result = (|| {
        let hdr = out_dir.join("cube.hdr");
        out.track([hdr.clone(), out_dir.join("cube.raw")]);
        write_cube(&cube, &hdr)?;
        let gt_path = out_dir.join("gt.txt");
        out.track([gt_path.clone()]);
        write_ground_truth(&gt, &gt_path)?;
        out.write("synthetic.spec", spec.to_text())?;
        out.write(
            "experiment.cfg",
            format!(
                "cube=cube.hdr\ngt=gt.txt\nseed={seed}\ntarget_bands={}\nthresholds=-0.01,0,0.01,0.03\noutput=out\n",
                cube.n_bands()
            ),
        )?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let load = |a: &ConfigArgs| ExperimentConfig::load(&a.config, &a.overrides, a.out.as_deref());
    match cli.command {
        Command::MiCurve(args) => cmd_mi_curve(&load(&args)?),
        Command::Select { args, algorithm } => cmd_select(&load(&args)?, algorithm),
        Command::Sweep(args) => cmd_sweep(&load(&args)?),
        Command::Classify { args, bands } => cmd_classify(&load(&args)?, bands.as_deref()),
        Command::Synth { spec, seed, out } => cmd_synth(&spec, seed, &out),
    }
}
