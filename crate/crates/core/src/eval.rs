//! Accuracy metrics, report tables and class-map images.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypercube::{GroundTruth, LabelGrid};
use crate::infotheory::JointHistogram;
use crate::selection::SweepReport;

/// Classes with fewer test pixels than this are flagged in reports.
pub const LOW_CONFIDENCE_TEST_COUNT: u64 = 15;

/// Rows are true classes, columns predicted classes, both 1-based ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, truth: u16, predicted: u16) -> u64 {
        self.counts[(truth as usize - 1) * self.n_classes + predicted as usize - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Test pixels per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.n_classes)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes)
            .map(|k| self.counts[k * self.n_classes + k])
            .sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Producer's accuracy per class; `None` for classes absent from the test set.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                (n > 0).then(|| self.counts[k * self.n_classes + k] as f64 / n as f64)
            })
            .collect()
    }

    /// Classes whose test count is below [`LOW_CONFIDENCE_TEST_COUNT`].
    pub fn low_confidence_classes(&self) -> Vec<u16> {
        self.row_sums()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n < LOW_CONFIDENCE_TEST_COUNT)
            .map(|(k, _)| k as u16 + 1)
            .collect()
    }

    /// The matrix as a joint histogram of (truth, prediction).
    pub fn joint_histogram(&self) -> Result<JointHistogram> {
        let rows: Vec<Vec<u64>> = self
            .counts
            .chunks(self.n_classes)
            .map(<[u64]>::to_vec)
            .collect();
        JointHistogram::from_counts(&rows)
    }
}

/// Confusion matrix of `c_est` against `gt` over the `test` pixels.
pub fn evaluate(gt: &GroundTruth, c_est: &LabelGrid, test: &[usize]) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    if (c_est.rows, c_est.cols) != (gt.rows(), gt.cols()) {
        return Err(Error::Dimensions(format!(
            "estimate is {}x{}, ground truth is {}x{}",
            c_est.rows,
            c_est.cols,
            gt.rows(),
            gt.cols()
        )));
    }
    let nc = gt.n_classes();
    let mut counts = vec![0u64; nc * nc];
    for &p in test {
        let truth = gt.labels()[p];
        if truth == 0 {
            return Err(Error::InvalidParameter(format!(
                "test pixel {p} is unlabeled"
            )));
        }
        let pred = c_est.labels[p];
        if pred == 0 || pred as usize > nc {
            return Err(Error::LabelRange {
                label: pred,
                max: nc,
            });
        }
        counts[(truth as usize - 1) * nc + pred as usize - 1] += 1;
    }
    Ok(ConfusionMatrix {
        n_classes: nc,
        counts,
    })
}

/// Background plus one RGB color per class.
///
/// The first 16 class colors are fixed:
/// red, green, blue, yellow, magenta, cyan, maroon, dark green, navy, olive,
/// purple, teal, orange, lime, azure, rose. Further classes get evenly spaced
/// hues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub background: [u8; 3],
    pub classes: Vec<[u8; 3]>,
}

const BASE_COLORS: [[u8; 3]; 16] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [128, 0, 0],
    [0, 128, 0],
    [0, 0, 128],
    [128, 128, 0],
    [128, 0, 128],
    [0, 128, 128],
    [255, 128, 0],
    [128, 255, 0],
    [0, 128, 255],
    [255, 0, 128],
];

impl Palette {
    pub fn for_classes(n_classes: usize) -> Self {
        let mut classes: Vec<[u8; 3]> = BASE_COLORS.iter().take(n_classes).copied().collect();
        let extra = n_classes.saturating_sub(BASE_COLORS.len());
        for i in 0..extra {
            classes.push(hue_color(i as f64 / extra as f64));
        }
        Palette {
            background: [0, 0, 0],
            classes,
        }
    }

    pub fn color(&self, label: u16) -> Result<[u8; 3]> {
        if label == 0 {
            return Ok(self.background);
        }
        self.classes
            .get(label as usize - 1)
            .copied()
            .ok_or(Error::LabelRange {
                label,
                max: self.classes.len(),
            })
    }
}

fn hue_color(h: f64) -> [u8; 3] {
    let x = h * 6.0;
    let f = x - x.floor();
    let up = (255.0 * f).round() as u8;
    let down = 255 - up;
    match x.floor() as u32 % 6 {
        0 => [255, up, 64],
        1 => [down, 255, 64],
        2 => [64, 255, up],
        3 => [64, down, 255],
        4 => [up, 64, 255],
        _ => [255, 64, down],
    }
}

/// Encodes a label grid as a binary PPM (P6).
pub fn render_map(labels: &LabelGrid, palette: &Palette) -> Result<Vec<u8>> {
    let mut out = format!("P6\n{} {}\n255\n", labels.cols, labels.rows).into_bytes();
    out.reserve(labels.labels.len() * 3);
    for &l in &labels.labels {
        out.extend_from_slice(&palette.color(l)?);
    }
    Ok(out)
}

pub fn write_map(labels: &LabelGrid, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = render_map(labels, palette)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A simple table with CSV and aligned-text renderings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &self.header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut s, &rule);
        for r in &self.rows {
            line(&mut s, r);
        }
        s
    }
}

pub fn format_threshold(th: f64) -> String {
    let s = format!("{th:.3}");
    if th.is_infinite() {
        th.to_string()
    } else {
        s
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Overall accuracy (%) by retained-band count (rows) and threshold (columns);
/// `-` where a threshold never retained that many bands.
pub fn accuracy_table(sweep: &SweepReport) -> Result<Table> {
    if sweep.runs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut header = vec!["bands_retained".to_string()];
    header.extend(sweep.runs.iter().map(|r| format_threshold(r.threshold)));
    let rows = sweep
        .checkpoints
        .iter()
        .map(|&k| {
            let mut row = vec![k.to_string()];
            row.extend(
                sweep
                    .runs
                    .iter()
                    .map(|r| r.accuracy_at(k).map_or_else(|| "-".to_string(), pct)),
            );
            row
        })
        .collect();
    Ok(Table { header, rows })
}

/// Per-class accuracy (%) at each threshold's terminal checkpoint, with the
/// class census and a low-confidence marker.
pub fn per_class_table(sweep: &SweepReport, gt: &GroundTruth) -> Result<Table> {
    if sweep.runs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut header = vec!["class".to_string(), "total_pixels".to_string()];
    header.extend(sweep.runs.iter().map(|r| format_threshold(r.threshold)));
    header.push("low_confidence".to_string());
    let per_class: Vec<Vec<Option<f64>>> = sweep
        .runs
        .iter()
        .map(|r| {
            r.final_confusion
                .as_ref()
                .map_or_else(|| vec![None; gt.n_classes()], ConfusionMatrix::per_class_accuracy)
        })
        .collect();
    let test_counts: Option<Vec<u64>> = sweep
        .runs
        .iter()
        .find_map(|r| r.final_confusion.as_ref().map(ConfusionMatrix::row_sums));
    let rows = (0..gt.n_classes())
        .map(|k| {
            let mut row = vec![(k + 1).to_string(), gt.class_counts()[k].to_string()];
            row.extend(
                per_class
                    .iter()
                    .map(|col| col[k].map_or_else(|| "-".to_string(), pct)),
            );
            let low = test_counts
                .as_ref()
                .is_some_and(|t| t[k] < LOW_CONFIDENCE_TEST_COUNT);
            row.push(if low { "yes" } else { "no" }.to_string());
            row
        })
        .collect();
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::ThresholdRun;

    fn fixture() -> (GroundTruth, Vec<usize>) {
        let gt = GroundTruth::new(2, 3, vec![1, 2, 3, 1, 2, 0]).unwrap();
        (gt, vec![0, 1, 2, 3, 4])
    }

    #[test]
    fn identity_estimate_is_perfect() {
        let (gt, test) = fixture();
        let cm = evaluate(&gt, &gt.to_grid(), &test).unwrap();
        assert_eq!(cm.overall_accuracy(), 1.0);
        assert!(cm.per_class_accuracy().iter().all(|a| *a == Some(1.0)));
        assert_eq!(cm.row_sums(), vec![2, 2, 1]);
    }

    #[test]
    fn constant_estimate() {
        let (gt, test) = fixture();
        let est = LabelGrid {
            rows: 2,
            cols: 3,
            labels: vec![1; 6],
        };
        let cm = evaluate(&gt, &est, &test).unwrap();
        assert_eq!(
            cm.per_class_accuracy(),
            vec![Some(1.0), Some(0.0), Some(0.0)]
        );
        assert_eq!(cm.low_confidence_classes(), vec![1, 2, 3]);
    }

    #[test]
    fn evaluate_errors() {
        let (gt, _) = fixture();
        assert!(matches!(
            evaluate(&gt, &gt.to_grid(), &[]),
            Err(Error::EmptyInput)
        ));
        let mut est = gt.to_grid();
        est.labels[0] = 9;
        assert!(matches!(
            evaluate(&gt, &est, &[0]),
            Err(Error::LabelRange { label: 9, .. })
        ));
    }

    #[test]
    fn ppm_census_matches_classes() {
        let (gt, _) = fixture();
        let palette = Palette::for_classes(gt.n_classes());
        let bytes = render_map(&gt.to_grid(), &palette).unwrap();
        let header = b"P6\n3 2\n255\n";
        assert!(bytes.starts_with(header));
        let pixels: Vec<&[u8]> = bytes[header.len()..].chunks(3).collect();
        assert_eq!(pixels.len(), 6);
        for k in 1..=3u16 {
            let color = palette.color(k).unwrap();
            let n = pixels.iter().filter(|p| **p == color).count();
            assert_eq!(n, gt.class_counts()[k as usize - 1]);
        }
        assert_eq!(render_map(&gt.to_grid(), &palette).unwrap(), bytes);
    }

    #[test]
    fn blank_map_is_background() {
        let grid = LabelGrid {
            rows: 2,
            cols: 2,
            labels: vec![0; 4],
        };
        let bytes = render_map(&grid, &Palette::for_classes(16)).unwrap();
        assert!(bytes[11..].iter().all(|&b| b == 0));
        let bad = LabelGrid {
            rows: 1,
            cols: 1,
            labels: vec![17],
        };
        assert!(render_map(&bad, &Palette::for_classes(16)).is_err());
    }

    #[test]
    fn palette_colors_are_distinct() {
        let p = Palette::for_classes(24);
        let mut all = p.classes.clone();
        all.push(p.background);
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    fn run(threshold: f64, accuracies: &[f64]) -> ThresholdRun {
        ThresholdRun {
            threshold,
            selected: (1..=accuracies.len()).collect(),
            accuracy_by_count: accuracies.to_vec(),
            final_confusion: None,
        }
    }

    #[test]
    fn accuracy_table_marks_unreached_counts() {
        let sweep = SweepReport {
            checkpoints: vec![1, 2, 3],
            runs: vec![run(0.0, &[0.5, 0.75, 0.9]), run(0.03, &[0.6])],
        };
        let t = accuracy_table(&sweep).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.header, vec!["bands_retained", "0.000", "0.030"]);
        assert_eq!(t.rows[0], vec!["1", "50.00", "60.00"]);
        assert_eq!(t.rows[2], vec!["3", "90.00", "-"]);
        assert!(t.to_csv().starts_with("bands_retained,0.000,0.030\n1,50.00,60.00\n"));
        assert!(t.to_text().lines().count() == 5);
        let empty = SweepReport {
            checkpoints: vec![],
            runs: vec![],
        };
        assert!(accuracy_table(&empty).is_err());
    }
}
