//! Seeded synthetic cubes with planted band structure.
//!
//! Each band is one of:
//! - `informative`: class-dependent mean plus Gaussian noise,
//! - `redundant(k)`: band `k` plus a small amount of fresh noise,
//! - `noise`: label-independent Gaussian noise.
//!
//! With one informative band the classes sit on evenly spaced levels. With
//! several, class `c` gets the ±1 codeword from row `c` of a Sylvester Hadamard
//! matrix (first column dropped), so a single band only splits the classes into
//! two groups and the informative bands are jointly, not individually,
//! sufficient.
//!
//! Text form (`key=value` per line, `#` comments):
//!
//! ```text
//! rows=64
//! cols=64
//! classes=4
//! bands=informative,noise*2,redundant(1),noise
//! signal=400        # optional, class-mean amplitude
//! noise=0.4         # optional, informative-band noise sd / signal
//! redundant_noise=0.3
//! unlabeled=0.1     # optional, fraction of pixels left unlabeled
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GroundTruth, HyperCube};
use crate::error::{Error, Result};
use crate::infotheory::{mi_curve, Quantizer, Reference};

const BASE_LEVEL: f64 = 3000.0;
const MAX_RETRIES: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Informative,
    /// Copy of the given 1-based band plus fresh noise.
    Redundant(usize),
    Noise,
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandKind::Informative => f.write_str("informative"),
            BandKind::Redundant(k) => write!(f, "redundant({k})"),
            BandKind::Noise => f.write_str("noise"),
        }
    }
}

impl FromStr for BandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "informative" => Ok(BandKind::Informative),
            "noise" => Ok(BandKind::Noise),
            _ => {
                let inner = s
                    .strip_prefix("redundant(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::SyntheticSpec(format!("unknown band kind `{s}`")))?;
                let k = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::SyntheticSpec(format!("bad redundant source `{inner}`")))?;
                Ok(BandKind::Redundant(k))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_classes: usize,
    pub bands: Vec<BandKind>,
    pub signal: f64,
    pub noise: f64,
    pub redundant_noise: f64,
    pub unlabeled_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, n_classes: usize, bands: Vec<BandKind>) -> Self {
        SyntheticSpec {
            rows,
            cols,
            n_classes,
            bands,
            signal: 400.0,
            noise: 0.4,
            redundant_noise: 0.3,
            unlabeled_fraction: 0.1,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::new(0, 0, 0, Vec::new());
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::SyntheticSpec(format!("line {}: expected key=value", lineno + 1))
            })?;
            let value = value.trim();
            let bad = || Error::SyntheticSpec(format!("bad value for `{}`: {value}", key.trim()));
            match key.trim() {
                "rows" => spec.rows = value.parse().map_err(|_| bad())?,
                "cols" => spec.cols = value.parse().map_err(|_| bad())?,
                "classes" => spec.n_classes = value.parse().map_err(|_| bad())?,
                "signal" => spec.signal = value.parse().map_err(|_| bad())?,
                "noise" => spec.noise = value.parse().map_err(|_| bad())?,
                "redundant_noise" => spec.redundant_noise = value.parse().map_err(|_| bad())?,
                "unlabeled" => spec.unlabeled_fraction = value.parse().map_err(|_| bad())?,
                "bands" => spec.bands = parse_band_list(value)?,
                other => return Err(Error::SyntheticSpec(format!("unknown key `{other}`"))),
            }
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let bands: Vec<String> = self.bands.iter().map(ToString::to_string).collect();
        format!(
            "rows={}\ncols={}\nclasses={}\nbands={}\nsignal={}\nnoise={}\nredundant_noise={}\nunlabeled={}\n",
            self.rows,
            self.cols,
            self.n_classes,
            bands.join(","),
            self.signal,
            self.noise,
            self.redundant_noise,
            self.unlabeled_fraction
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Unsatisfiable(format!(
                "{} class(es); MI is undefined against constant labels",
                self.n_classes
            )));
        }
        if self.n_classes > u16::MAX as usize {
            return Err(Error::Unsatisfiable("too many classes".into()));
        }
        if self.rows == 0 || self.cols == 0 || self.bands.is_empty() {
            return Err(Error::Unsatisfiable(
                "rows, cols and band list must be non-empty".into(),
            ));
        }
        if self.rows * self.cols < self.n_classes {
            return Err(Error::Unsatisfiable(
                "fewer pixels than classes".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::Unsatisfiable("unlabeled fraction must be in [0, 1)".into()));
        }
        if !(self.signal > 0.0) || !(self.noise >= 0.0) || !(self.redundant_noise >= 0.0) {
            return Err(Error::Unsatisfiable(
                "signal must be positive and noise levels non-negative".into(),
            ));
        }
        for (i, kind) in self.bands.iter().enumerate() {
            if let BandKind::Redundant(k) = *kind {
                if k == 0 || k > i {
                    return Err(Error::Unsatisfiable(format!(
                        "band {} is redundant({k}) but must copy an earlier band",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_band_list(value: &str) -> Result<Vec<BandKind>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (kind, times) = match item.rsplit_once('*') {
            Some((k, n)) => (
                k,
                n.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::SyntheticSpec(format!("bad repeat count in `{item}`")))?,
            ),
            None => (item, 1),
        };
        let kind: BandKind = kind.parse()?;
        out.extend(std::iter::repeat_n(kind, times));
    }
    Ok(out)
}

/// Sylvester Hadamard entry: `(-1)^popcount(i & j)`.
fn hadamard(i: usize, j: usize) -> f64 {
    if (i & j).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Class-mean codes in signal units, `codes[class - 1][informative index]`.
fn class_codes(n_classes: usize, n_informative: usize) -> Vec<Vec<f64>> {
    if n_informative <= 1 {
        let mid = (n_classes - 1) as f64;
        return (0..n_classes)
            .map(|k| vec![2.0 * k as f64 - mid])
            .collect();
    }
    let order = n_classes.max(n_informative + 1).next_power_of_two();
    (0..n_classes)
        .map(|k| {
            (0..n_informative)
                .map(|j| hadamard(k, 1 + j % (order - 1)))
                .collect()
        })
        .collect()
}

fn assign_classes(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let (rows, cols, nc) = (spec.rows, spec.cols, spec.n_classes);
    let tile = (rows.min(cols) / 8).max(1);
    let tiles_r = rows.div_ceil(tile);
    let tiles_c = cols.div_ceil(tile);
    let n_tiles = tiles_r * tiles_c;
    let mut classes: Vec<u16> = Vec::new();
    if n_tiles >= nc {
        let mut tile_class: Vec<u16> = (0..n_tiles)
            .map(|t| if t < nc { t as u16 + 1 } else { rng.random_range(1..=nc as u16) })
            .collect();
        tile_class.shuffle(rng);
        for r in 0..rows {
            for c in 0..cols {
                classes.push(tile_class[(r / tile) * tiles_c + c / tile]);
            }
        }
    } else {
        classes = (0..rows * cols)
            .map(|p| if p < nc { p as u16 + 1 } else { rng.random_range(1..=nc as u16) })
            .collect();
        classes.shuffle(rng);
    }
    classes
}

fn generate(spec: &SyntheticSpec, seed: u64) -> Result<(HyperCube, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pix = spec.rows * spec.cols;
    let classes = assign_classes(spec, &mut rng);

    // Unlabeled pixels keep their class-driven spectra, only the label is hidden.
    let mut labels = classes.clone();
    for l in labels.iter_mut() {
        if rng.random::<f64>() < spec.unlabeled_fraction {
            *l = 0;
        }
    }
    // at least one pixel per class stays labeled
    for class in 1..=spec.n_classes as u16 {
        if !labels.contains(&class) {
            if let Some(p) = classes.iter().position(|&c| c == class) {
                labels[p] = class;
            }
        }
    }

    let n_informative = spec
        .bands
        .iter()
        .filter(|k| **k == BandKind::Informative)
        .count();
    let codes = class_codes(spec.n_classes, n_informative);

    let mut bands: Vec<Vec<f64>> = Vec::with_capacity(spec.bands.len());
    let mut informative_seen = 0;
    for kind in &spec.bands {
        let mut gauss = || rng.sample::<f64, _>(StandardNormal);
        let band: Vec<f64> = match *kind {
            BandKind::Informative => {
                let j = informative_seen;
                informative_seen += 1;
                classes
                    .iter()
                    .map(|&c| {
                        BASE_LEVEL
                            + spec.signal * codes[c as usize - 1][j]
                            + spec.noise * spec.signal * gauss()
                    })
                    .collect()
            }
            BandKind::Redundant(k) => bands[k - 1]
                .iter()
                .map(|&v| v + spec.redundant_noise * spec.signal * gauss())
                .collect(),
            BandKind::Noise => (0..n_pix)
                .map(|_| BASE_LEVEL + spec.signal * gauss())
                .collect(),
        };
        bands.push(band);
    }

    let values = bands
        .iter()
        .flatten()
        .map(|&v| v.round().clamp(0.0, f64::from(u16::MAX)) as u16)
        .collect();
    let cube = HyperCube::new(spec.rows, spec.cols, spec.bands.len(), values)?;
    let gt = GroundTruth::new(spec.rows, spec.cols, labels)?;
    Ok((cube, gt))
}

/// True when every informative band's MI with the labels beats every noise
/// band's, and every copy of an informative band ranks below its source.
fn planted_order_holds(spec: &SyntheticSpec, cube: &HyperCube, gt: &GroundTruth) -> Result<bool> {
    let curve = mi_curve(cube, Reference::Labels(gt), &Quantizer::default(), true)?;
    let pick = |want: BandKind| {
        spec.bands
            .iter()
            .enumerate()
            .filter(move |(_, k)| **k == want)
            .map(|(i, _)| curve.mi(i + 1))
            .collect::<Vec<_>>()
    };
    let weakest = pick(BandKind::Informative)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let strongest = pick(BandKind::Noise)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let copies_below = spec.bands.iter().enumerate().all(|(i, k)| match *k {
        BandKind::Redundant(src) if spec.bands[src - 1] == BandKind::Informative => {
            curve.mi(i + 1) < curve.mi(src)
        }
        _ => true,
    });
    Ok(weakest > strongest && copies_below)
}

/// Deterministic cube and label map for `spec` and `seed`.
///
/// If the planted MI ordering (informative above noise, copies of informative
/// bands below their source) does not hold for a draw, the noise is redrawn with a derived seed,
/// up to five times.
pub fn make_synthetic_cube(spec: &SyntheticSpec, seed: u64) -> Result<(HyperCube, GroundTruth)> {
    spec.validate()?;
    for attempt in 0..=MAX_RETRIES {
        let draw_seed = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (cube, gt) = generate(spec, draw_seed)?;
        if planted_order_holds(spec, &cube, &gt)? {
            return Ok((cube, gt));
        }
        log::debug!("synthetic draw {attempt} violated the planted MI order, redrawing");
    }
    Err(Error::Unsatisfiable(format!(
        "planted MI order did not hold after {MAX_RETRIES} retries"
    )))
}
