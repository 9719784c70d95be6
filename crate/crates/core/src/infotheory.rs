//! Histogram-based entropy, mutual information and Fano error bounds.
//!
//! All logarithms are base 2, so every quantity is in bits.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypercube::{BandImage, GroundTruth, HyperCube};

pub const DEFAULT_BINS: usize = 256;

/// Linear min–max binning.
///
/// With `range: None` the range is taken from the values being quantized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub n_bins: usize,
    pub range: Option<(f64, f64)>,
}

impl Default for Quantizer {
    fn default() -> Self {
        Quantizer {
            n_bins: DEFAULT_BINS,
            range: None,
        }
    }
}

impl Quantizer {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "quantizer needs at least 2 bins, got {n_bins}"
            )));
        }
        Ok(Quantizer { n_bins, range: None })
    }

    pub fn with_range(self, min: f64, max: f64) -> Self {
        Quantizer {
            range: Some((min, max)),
            ..self
        }
    }
}

/// Maps each value to `floor((v - min) / (max - min) * n_bins)`, clamped to
/// the last bin. A degenerate range sends everything to bin 0.
pub fn quantize(values: &[f64], q: &Quantizer) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if q.n_bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "quantizer needs at least 2 bins, got {}",
            q.n_bins
        )));
    }
    let (min, max) = q.range.unwrap_or_else(|| {
        values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    });
    if !(max > min) {
        return Ok(vec![0; values.len()]);
    }
    let scale = q.n_bins as f64 / (max - min);
    let last = q.n_bins - 1;
    Ok(values
        .iter()
        .map(|&v| {
            let b = ((v - min) * scale).floor();
            if b <= 0.0 {
                0
            } else {
                (b as usize).min(last)
            }
        })
        .collect())
}

/// Which variable of a joint histogram is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// The first (row) variable.
    A,
    /// The second (column) variable.
    B,
}

/// Co-occurrence counts of two discrete variables, row-major `n_a × n_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    n_a: usize,
    n_b: usize,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    /// Counts pairs with explicit alphabet sizes.
    pub fn from_bins(a: &[usize], n_a: usize, b: &[usize], n_b: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        if a.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut counts = vec![0u64; n_a * n_b];
        for (&i, &j) in a.iter().zip(b) {
            if i >= n_a || j >= n_b {
                return Err(Error::InvalidParameter(format!(
                    "bin pair ({i}, {j}) outside {n_a}x{n_b} histogram"
                )));
            }
            counts[i * n_b + j] += 1;
        }
        Ok(JointHistogram {
            n_a,
            n_b,
            counts,
            total: a.len() as u64,
        })
    }

    /// Builds a histogram from explicit rows of counts.
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n_a = rows.len();
        let n_b = rows.first().map_or(0, Vec::len);
        if n_a == 0 || n_b == 0 || rows.iter().any(|r| r.len() != n_b) {
            return Err(Error::InvalidParameter("ragged or empty count table".into()));
        }
        let counts: Vec<u64> = rows.iter().flatten().copied().collect();
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(JointHistogram {
            n_a,
            n_b,
            counts,
            total,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_a, self.n_b)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_b + j]
    }

    pub fn marginal_a(&self) -> Vec<u64> {
        self.counts
            .chunks(self.n_b)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn marginal_b(&self) -> Vec<u64> {
        let mut m = vec![0u64; self.n_b];
        for row in self.counts.chunks(self.n_b) {
            for (acc, &c) in m.iter_mut().zip(row) {
                *acc += c;
            }
        }
        m
    }

    pub fn transposed(&self) -> JointHistogram {
        let mut counts = vec![0u64; self.counts.len()];
        for i in 0..self.n_a {
            for j in 0..self.n_b {
                counts[j * self.n_a + i] = self.count(i, j);
            }
        }
        JointHistogram {
            n_a: self.n_b,
            n_b: self.n_a,
            counts,
            total: self.total,
        }
    }

    /// Entropy of the pair `(A, B)`.
    pub fn joint_entropy(&self) -> f64 {
        entropy(&self.counts)
    }
}

/// Histogram of two bin sequences with alphabets sized by their largest bin.
pub fn joint_histogram(a: &[usize], b: &[usize]) -> Result<JointHistogram> {
    let n_a = a.iter().max().map_or(0, |&m| m + 1);
    let n_b = b.iter().max().map_or(0, |&m| m + 1);
    JointHistogram::from_bins(a, n_a, b, n_b)
}

/// Shannon entropy in bits of a count vector, with `0 log 0 = 0`.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c / n).log2()
        })
        .sum();
    (-h / n).max(0.0)
}

/// `I(A;B) = Σ p(a,b) log2[p(a,b) / (p(a) p(b))]`.
pub fn mutual_information(h: &JointHistogram) -> f64 {
    let ma = h.marginal_a();
    let mb = h.marginal_b();
    let n = h.total as f64;
    let mut acc = 0.0;
    for (i, &ca) in ma.iter().enumerate() {
        if ca == 0 {
            continue;
        }
        for (j, &cb) in mb.iter().enumerate() {
            let c = h.count(i, j);
            if c == 0 {
                continue;
            }
            let c = c as f64;
            acc += c * (c * n / (ca as f64 * cb as f64)).log2();
        }
    }
    (acc / n).max(0.0)
}

/// `H(A|B)` when `given == Axis::B`, `H(B|A)` when `given == Axis::A`.
pub fn conditional_entropy(h: &JointHistogram, given: Axis) -> f64 {
    let cond = match given {
        Axis::A => h.marginal_a(),
        Axis::B => h.marginal_b(),
    };
    let n = h.total as f64;
    let mut acc = 0.0;
    for i in 0..h.n_a {
        for j in 0..h.n_b {
            let c = h.count(i, j);
            if c == 0 {
                continue;
            }
            let g = match given {
                Axis::A => cond[i],
                Axis::B => cond[j],
            } as f64;
            let c = c as f64;
            acc -= c * (c / g).log2();
        }
    }
    (acc / n).max(0.0)
}

/// Fano's bounds on the error probability of predicting `C` from `X`:
/// `(H(C|X) - 1) / log2 Nc ≤ Pe ≤ H(C|X) / log2 Nc`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FanoBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_unclamped: f64,
    pub upper_unclamped: f64,
    pub cond_entropy: f64,
    pub n_classes: usize,
}

impl FanoBounds {
    /// Width of the unclamped interval; always `1 / log2 Nc`.
    pub fn width(&self) -> f64 {
        self.upper_unclamped - self.lower_unclamped
    }
}

pub fn fano_bounds(cond_entropy_bits: f64, n_classes: usize) -> Result<FanoBounds> {
    if n_classes < 2 {
        return Err(Error::TooFewClasses(n_classes));
    }
    if !(cond_entropy_bits >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "conditional entropy must be non-negative, got {cond_entropy_bits}"
        )));
    }
    let log_nc = (n_classes as f64).log2();
    let lower_unclamped = (cond_entropy_bits - 1.0) / log_nc;
    let upper_unclamped = cond_entropy_bits / log_nc;
    Ok(FanoBounds {
        lower: lower_unclamped.clamp(0.0, 1.0),
        upper: upper_unclamped.clamp(0.0, 1.0),
        lower_unclamped,
        upper_unclamped,
        cond_entropy: cond_entropy_bits,
        n_classes,
    })
}

/// What each band is compared against in an MI curve.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Class labels; label values are used directly as symbols.
    Labels(&'a GroundTruth),
    /// A real-valued map (e.g. an averaged-band estimate), quantized like a
    /// band. `mask` selects labeled pixels when `labeled_only` is set.
    Map {
        image: &'a BandImage,
        mask: Option<&'a GroundTruth>,
    },
}

/// Per-band mutual information with a reference; index 0 is band 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MiCurve {
    values: Vec<f64>,
}

impl MiCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(MiCurve { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// MI of a 1-based band.
    pub fn mi(&self, band: usize) -> f64 {
        self.values[band - 1]
    }

    /// 1-based bands sorted by descending MI; ties go to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=self.values.len()).collect();
        order.sort_by(|&a, &b| self.mi(b).total_cmp(&self.mi(a)).then(a.cmp(&b)));
        order
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "band_index,mi_bits")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{:.12}", i + 1, v)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// MI between every band and `reference`.
///
/// Bins are fitted over the pixels actually used: labeled pixels when
/// `labeled_only`, all pixels otherwise.
pub fn mi_curve(
    cube: &HyperCube,
    reference: Reference<'_>,
    q: &Quantizer,
    labeled_only: bool,
) -> Result<MiCurve> {
    let (rows, cols) = match reference {
        Reference::Labels(gt) => (gt.rows(), gt.cols()),
        Reference::Map { image, .. } => (image.rows(), image.cols()),
    };
    if (rows, cols) != (cube.rows(), cube.cols()) {
        return Err(Error::Dimensions(format!(
            "reference is {rows}x{cols}, cube is {}x{}",
            cube.rows(),
            cube.cols()
        )));
    }
    let mask = match reference {
        Reference::Labels(gt) => Some(gt),
        Reference::Map { mask, .. } => mask,
    };
    if let Some(m) = mask {
        m.check_dims(cube.rows(), cube.cols())?;
    }
    let pixels: Vec<usize> = if labeled_only {
        let m = mask.ok_or_else(|| {
            Error::InvalidParameter("labeled-only MI needs a ground-truth mask".into())
        })?;
        m.labeled_pixels()
    } else {
        (0..cube.n_pixels()).collect()
    };
    if pixels.is_empty() {
        return Err(Error::NoLabeledPixels);
    }

    let (ref_bins, n_ref) = match reference {
        Reference::Labels(gt) => {
            let bins: Vec<usize> = pixels.iter().map(|&p| gt.labels()[p] as usize).collect();
            (bins, gt.n_classes() + 1)
        }
        Reference::Map { image, .. } => {
            let vals: Vec<f64> = pixels.iter().map(|&p| image.values()[p]).collect();
            (quantize(&vals, &Quantizer { range: None, ..*q })?, q.n_bins)
        }
    };

    let values = (1..=cube.n_bands())
        .into_par_iter()
        .map(|band| {
            let data = cube.band(band)?;
            let vals: Vec<f64> = pixels.iter().map(|&p| f64::from(data[p])).collect();
            let bins = quantize(&vals, &Quantizer { range: None, ..*q })?;
            let h = JointHistogram::from_bins(&bins, q.n_bins, &ref_bins, n_ref)?;
            Ok(mutual_information(&h))
        })
        .collect::<Result<Vec<f64>>>()?;
    MiCurve::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quantize_examples() {
        let q = Quantizer::new(2).unwrap().with_range(0.0, 1.0);
        assert_eq!(quantize(&[0.0, 0.5, 1.0], &q).unwrap(), vec![0, 1, 1]);
        let q = Quantizer::default();
        assert_eq!(quantize(&[7.0, 7.0, 7.0], &q).unwrap(), vec![0, 0, 0]);
        let q = Quantizer::default().with_range(955.0, 9406.0);
        assert_eq!(quantize(&[955.0, 9406.0], &q).unwrap(), vec![0, 255]);
        assert!(matches!(quantize(&[], &q), Err(Error::EmptyInput)));
        assert!(Quantizer::new(1).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = joint_histogram(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(h, JointHistogram::from_counts(&[vec![1, 1], vec![1, 1]]).unwrap());
        assert_eq!(h.total(), 4);
        let h = joint_histogram(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(h, JointHistogram::from_counts(&[vec![2, 0], vec![0, 2]]).unwrap());
        assert!(matches!(
            joint_histogram(&[0, 1, 0], &[0, 1, 0, 1]),
            Err(Error::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[5, 5, 5, 5]), 2.0);
        assert_eq!(entropy(&[9]), 0.0);
        assert_eq!(entropy(&[2, 1, 1]), 1.5);
        assert_eq!(entropy(&[2, 0, 1, 1]), 1.5);
    }

    #[test]
    fn mi_and_conditional_examples() {
        let diag = JointHistogram::from_counts(&[vec![2, 0], vec![0, 2]]).unwrap();
        assert!(close(mutual_information(&diag), 1.0, 1e-15));
        assert!(close(conditional_entropy(&diag, Axis::B), 0.0, 1e-15));
        let ind = JointHistogram::from_counts(&[vec![1, 1], vec![1, 1]]).unwrap();
        assert!(close(mutual_information(&ind), 0.0, 1e-15));
        assert!(close(conditional_entropy(&ind, Axis::B), 1.0, 1e-15));
    }

    #[test]
    fn fano_examples() {
        let f = fano_bounds(0.0, 16).unwrap();
        assert_eq!((f.lower, f.upper), (0.0, 0.0));
        assert_eq!(f.lower_unclamped, -0.25);
        let f = fano_bounds(4.0, 16).unwrap();
        assert_eq!((f.lower, f.upper), (0.75, 1.0));
        let f = fano_bounds(2.0, 16).unwrap();
        assert_eq!((f.lower, f.upper), (0.25, 0.5));
        assert!(matches!(fano_bounds(1.0, 1), Err(Error::TooFewClasses(1))));
        assert!(fano_bounds(-0.5, 4).is_err());
    }

    #[test]
    fn identity_band_mi_equals_class_entropy() {
        let labels = vec![1u16, 2, 3, 1, 2, 3, 1, 1, 0];
        let gt = GroundTruth::new(3, 3, labels.clone()).unwrap();
        let cube = HyperCube::new(3, 3, 2, {
            let mut v: Vec<u16> = labels.iter().map(|&l| l * 100).collect();
            v.extend([5u16; 9]);
            v
        })
        .unwrap();
        let curve = mi_curve(&cube, Reference::Labels(&gt), &Quantizer::default(), true).unwrap();
        let hc = entropy(
            &gt.class_counts()
                .iter()
                .map(|&c| c as u64)
                .collect::<Vec<_>>(),
        );
        assert!(close(curve.mi(1), hc, 1e-12));
        assert_eq!(curve.mi(2), 0.0);
        assert_eq!(curve.ranking(), vec![1, 2]);
    }

    #[test]
    fn mi_curve_dimension_mismatch() {
        let gt = GroundTruth::new(2, 2, vec![1, 2, 1, 2]).unwrap();
        let cube = HyperCube::new(3, 3, 1, vec![0; 9]).unwrap();
        assert!(matches!(
            mi_curve(&cube, Reference::Labels(&gt), &Quantizer::default(), true),
            Err(Error::Dimensions(_))
        ));
    }

    #[test]
    fn curve_csv_is_one_based() {
        let c = MiCurve::new(vec![0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "band_index,mi_bits\n1,0.500000000000\n2,0.250000000000\n");
    }
}
