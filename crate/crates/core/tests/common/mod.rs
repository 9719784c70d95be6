#![allow(dead_code)]

use std::path::Path;

use bandsel::classify::SplitSpec;
use bandsel::hypercube::{write_cube, write_ground_truth, BandKind, GroundTruth, HyperCube, SyntheticSpec};

/// Informative bands of [`planted_spec`].
pub const PLANTED_INFORMATIVE: [usize; 3] = [1, 4, 9];
/// Redundant copies of the informative bands, in source order.
pub const PLANTED_COPIES: [usize; 3] = [6, 11, 16];

/// 64×64×20, 4 classes: informative 1, 4, 9; copies at 6, 11, 16; noise elsewhere.
pub fn planted_spec() -> SyntheticSpec {
    let bands = (1..=20)
        .map(|b| match b {
            1 | 4 | 9 => BandKind::Informative,
            6 => BandKind::Redundant(1),
            11 => BandKind::Redundant(4),
            16 => BandKind::Redundant(9),
            _ => BandKind::Noise,
        })
        .collect();
    SyntheticSpec::new(64, 64, 4, bands)
}

pub fn noise_bands(spec: &SyntheticSpec) -> Vec<usize> {
    spec.bands
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == BandKind::Noise)
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn informative_bands(spec: &SyntheticSpec) -> Vec<usize> {
    spec.bands
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == BandKind::Informative)
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn split_spec(seed: u64) -> SplitSpec {
    SplitSpec {
        train_fraction: 0.5,
        seed,
        stratified: true,
    }
}

/// Writes `cube.hdr`/`cube.raw`, `gt.txt` and `experiment.cfg` into `dir`.
pub fn write_experiment(dir: &Path, cube: &HyperCube, gt: &GroundTruth, extra: &str) {
    write_cube(cube, dir.join("cube.hdr")).unwrap();
    write_ground_truth(gt, dir.join("gt.txt")).unwrap();
    std::fs::write(
        dir.join("experiment.cfg"),
        format!("cube=cube.hdr\ngt=gt.txt\nseed=11\n{extra}"),
    )
    .unwrap();
}
