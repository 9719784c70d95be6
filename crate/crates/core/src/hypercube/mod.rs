//! Hyperspectral cubes, ground-truth label maps and averaged-band images.
//!
//! Cubes are stored band-sequential: band `b` (0-based internally) occupies
//! `values[b * rows * cols .. (b + 1) * rows * cols]`, row-major within a band.
//! Every user-facing band number is 1-based.

mod io;
mod synthetic;

pub use io::{load_cube, load_ground_truth, write_cube, write_ground_truth};
pub use synthetic::{make_synthetic_cube, BandKind, SyntheticSpec};

use crate::error::{Error, Result};

/// Band count of the full AVIRIS 92AV3C product.
pub const AVIRIS_BANDS: usize = 220;
/// Band count of the common water-absorption-removed AVIRIS variant.
pub const AVIRIS_REDUCED_BANDS: usize = 200;

/// A rows × cols × bands block of integer reflectance values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperCube {
    rows: usize,
    cols: usize,
    n_bands: usize,
    values: Vec<u16>,
    value_range: (u16, u16),
}

impl HyperCube {
    /// Builds a cube from band-sequential samples.
    pub fn new(rows: usize, cols: usize, n_bands: usize, values: Vec<u16>) -> Result<Self> {
        if rows == 0 || cols == 0 || n_bands == 0 {
            return Err(Error::Dimensions(format!(
                "rows={rows} cols={cols} bands={n_bands}; all must be positive"
            )));
        }
        let expected = rows * cols * n_bands;
        if values.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        let min = values.iter().copied().min().unwrap_or(0);
        let max = values.iter().copied().max().unwrap_or(0);
        Ok(HyperCube {
            rows,
            cols,
            n_bands,
            values,
            value_range: (min, max),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Smallest and largest sample in the cube.
    pub fn value_range(&self) -> (u16, u16) {
        self.value_range
    }

    /// All samples in band-sequential order.
    pub fn values(&self) -> &[u16] {
        &self.values
    }

    /// The image of a 1-based band.
    pub fn band(&self, band: usize) -> Result<&[u16]> {
        self.check_band(band)?;
        let n = self.n_pixels();
        let start = (band - 1) * n;
        Ok(&self.values[start..start + n])
    }

    /// Sample at a pixel (row-major index) of a 1-based band.
    pub fn value(&self, pixel: usize, band: usize) -> u16 {
        self.values[(band - 1) * self.n_pixels() + pixel]
    }

    /// Single band as a real-valued image.
    pub fn band_image(&self, band: usize) -> Result<BandImage> {
        let values = self.band(band)?.iter().map(|&v| f64::from(v)).collect();
        Ok(BandImage {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    pub fn check_band(&self, band: usize) -> Result<()> {
        if band == 0 || band > self.n_bands {
            return Err(Error::BandIndex {
                band,
                n_bands: self.n_bands,
            });
        }
        Ok(())
    }
}

/// Per-pixel class labels; 0 marks an unlabeled pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
    n_classes: usize,
    class_counts: Vec<usize>,
}

impl GroundTruth {
    /// Builds a label map and takes its class census. `Nc` is the largest label.
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimensions(format!(
                "ground truth rows={rows} cols={cols}; both must be positive"
            )));
        }
        if labels.len() != rows * cols {
            return Err(Error::SizeMismatch {
                expected: rows * cols,
                actual: labels.len(),
            });
        }
        let n_classes = labels.iter().copied().max().unwrap_or(0) as usize;
        if n_classes == 0 {
            return Err(Error::NoLabeledPixels);
        }
        let mut class_counts = vec![0usize; n_classes];
        for &l in labels.iter().filter(|&&l| l != 0) {
            class_counts[l as usize - 1] += 1;
        }
        Ok(GroundTruth {
            rows,
            cols,
            labels,
            n_classes,
            class_counts,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Pixel count of each class; entry `k` belongs to class `k + 1`.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn n_labeled(&self) -> usize {
        self.class_counts.iter().sum()
    }

    /// Row-major indices of every labeled pixel, ascending.
    pub fn labeled_pixels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of classes that actually own at least one pixel.
    pub fn n_present_classes(&self) -> usize {
        self.class_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn to_grid(&self) -> LabelGrid {
        LabelGrid {
            rows: self.rows,
            cols: self.cols,
            labels: self.labels.clone(),
        }
    }

    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::Dimensions(format!(
                "ground truth is {}x{}, expected {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// A plain label map, e.g. a classifier's estimated reference map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u16>,
}

/// One real value per pixel: a band slice or an averaged map.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl BandImage {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::SizeMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(BandImage { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-pixel mean over the inclusive 1-based band range `lo..=hi`.
///
/// The result stays real-valued; quantization happens only when it is used
/// as an MI reference.
pub fn estimate_gt_by_average(cube: &HyperCube, band_range: (usize, usize)) -> Result<BandImage> {
    let (lo, hi) = band_range;
    if lo == 0 || hi < lo || hi > cube.n_bands() {
        return Err(Error::BandRange {
            lo,
            hi,
            n_bands: cube.n_bands(),
        });
    }
    let n = cube.n_pixels();
    let mut sums = vec![0.0f64; n];
    for band in lo..=hi {
        for (s, &v) in sums.iter_mut().zip(cube.band(band)?) {
            *s += f64::from(v);
        }
    }
    let count = (hi - lo + 1) as f64;
    let values = sums.into_iter().map(|s| s / count).collect();
    BandImage::new(cube.rows(), cube.cols(), values)
}
