//! Band selection: the MI-ranked filter with rejection bandwidth and the
//! Fano-bound wrapper with a complementary threshold.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{build_estimated_map, split, PixelDataset, Split, SplitSpec, Trainer};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ConfusionMatrix};
use crate::hypercube::{GroundTruth, HyperCube};
use crate::infotheory::{
    conditional_entropy, entropy, fano_bounds, mi_curve, Axis, FanoBounds, MiCurve, Quantizer,
    Reference,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Number of bands to select.
    pub target_bands: usize,
    /// Neighbour radius around each pick.
    pub half_bandwidth: usize,
    /// Neighbours are discarded when the largest adjacent MI step in the
    /// window falls below this many bits.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapperParams {
    pub target_bands: usize,
    /// Minimum drop in the error proxy for a band to be kept. May be negative.
    pub threshold: f64,
    /// Starting error proxy; `None` uses the majority-class Fano bound `H(C) / log2 Nc`.
    pub pe_init: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accepted,
    Rejected,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accepted => "accepted",
            Decision::Rejected => "rejected",
        })
    }
}

/// One visited candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub band: usize,
    pub mi_bits: f64,
    /// Error proxy before the candidate was tried (wrapper only).
    pub pe_before: Option<f64>,
    /// Upper Fano bound with the candidate included (wrapper only).
    pub pe_after: Option<f64>,
    /// Clamped lower Fano bound with the candidate included.
    pub pe_lower: Option<f64>,
    /// `upper - lower` of the unclamped Fano interval.
    pub fano_width: Option<f64>,
    /// Test accuracy of the classifier built with the candidate included.
    pub accuracy: Option<f64>,
    pub decision: Decision,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum SelectionParams {
    Filter(FilterParams),
    Fano(WrapperParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Retained 1-based bands in selection order.
    pub selected: Vec<usize>,
    pub trace: Vec<TraceStep>,
    pub params: SelectionParams,
    pub stop: StopReason,
}

#[derive(Serialize)]
struct Summary<'a> {
    params: &'a SelectionParams,
    selected: &'a [usize],
    n_selected: usize,
    n_visited: usize,
    stop: StopReason,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12}"))
}

impl SelectionResult {
    /// Error-proxy values after each accepted step, in order.
    pub fn accepted_pe(&self) -> Vec<f64> {
        self.trace
            .iter()
            .filter(|s| s.decision == Decision::Accepted)
            .filter_map(|s| s.pe_after)
            .collect()
    }

    pub fn write_trace_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "step,band,mi_bits,pe_before,pe_after,decision,reason,pe_lower,fano_width,accuracy"
        )?;
        for s in &self.trace {
            writeln!(
                out,
                "{},{},{:.12},{},{},{},{},{},{},{}",
                s.step,
                s.band,
                s.mi_bits,
                opt(s.pe_before),
                opt(s.pe_after),
                s.decision,
                s.reason.replace(',', ";"),
                opt(s.pe_lower),
                opt(s.fano_width),
                opt(s.accuracy),
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let summary = Summary {
            params: &self.params,
            selected: &self.selected,
            n_selected: self.selected.len(),
            n_visited: self.trace.len(),
            stop: self.stop,
        };
        Ok(serde_json::to_string_pretty(&summary)? + "\n")
    }

    /// Writes `<stem>_trace.csv` and `<stem>_summary.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let trace_path = dir.join(format!("{stem}_trace.csv"));
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf)
            .map_err(|e| Error::io(&trace_path, e))?;
        std::fs::write(&trace_path, buf).map_err(|e| Error::io(&trace_path, e))?;
        let summary_path = dir.join(format!("{stem}_summary.json"));
        std::fs::write(&summary_path, self.summary_json()?)
            .map_err(|e| Error::io(&summary_path, e))?;
        Ok(vec![trace_path, summary_path])
    }
}

/// Lowest-index argmax of `curve` over the bands still in `remaining`.
fn argmax_remaining(curve: &MiCurve, remaining: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for band in 1..=curve.len() {
        if !remaining[band] {
            continue;
        }
        match best {
            Some(b) if curve.mi(band) <= curve.mi(b) => {}
            _ => best = Some(band),
        }
    }
    best
}

/// MI-ranked filter with rejection bandwidth.
///
/// Repeatedly takes the remaining band `S` of highest MI. Its neighbours are
/// the remaining bands within `half_bandwidth` of `S`. If the largest
/// `|MI(n) - MI(n-1)|` over `n` in the neighbours and `S` is below the
/// threshold, the neighbours are discarded as redundant. `S` is always kept.
pub fn select_filter(curve: &MiCurve, p: &FilterParams) -> Result<SelectionResult> {
    if curve.is_empty() {
        return Err(Error::EmptyInput);
    }
    if p.target_bands == 0 {
        return Err(Error::InvalidParameter("target band count must be ≥ 1".into()));
    }
    if !p.threshold.is_finite() {
        return Err(Error::InvalidParameter("filter threshold must be finite".into()));
    }
    let n = curve.len();
    let mut remaining = vec![true; n + 1];
    remaining[0] = false;
    let mut selected = Vec::new();
    let mut trace = Vec::new();
    let mut step = 0;
    let stop = loop {
        if selected.len() == p.target_bands {
            break StopReason::TargetReached;
        }
        let Some(s) = argmax_remaining(curve, &remaining) else {
            break StopReason::Exhausted;
        };
        remaining[s] = false;
        let lo = s.saturating_sub(p.half_bandwidth).max(1);
        let hi = (s + p.half_bandwidth).min(n);
        let neighbours: Vec<usize> = (lo..=hi).filter(|&b| b != s && remaining[b]).collect();
        let d = neighbours
            .iter()
            .copied()
            .chain(std::iter::once(s))
            .filter(|&b| b >= 2)
            .map(|b| (curve.mi(b) - curve.mi(b - 1)).abs())
            .fold(0.0f64, f64::max);
        let discard = !neighbours.is_empty() && d < p.threshold;
        step += 1;
        let reason = if discard {
            format!("d={d:.6} < threshold; discarded {neighbours:?}")
        } else {
            format!("d={d:.6}; neighbours kept")
        };
        trace.push(TraceStep {
            step,
            band: s,
            mi_bits: curve.mi(s),
            pe_before: None,
            pe_after: None,
            pe_lower: None,
            fano_width: None,
            accuracy: None,
            decision: Decision::Accepted,
            reason,
        });
        selected.push(s);
        if discard {
            for &nb in &neighbours {
                remaining[nb] = false;
                step += 1;
                trace.push(TraceStep {
                    step,
                    band: nb,
                    mi_bits: curve.mi(nb),
                    pe_before: None,
                    pe_after: None,
                    pe_lower: None,
                    fano_width: None,
                    accuracy: None,
                    decision: Decision::Rejected,
                    reason: format!("redundant neighbour of band {s}"),
                });
            }
        }
    };
    Ok(SelectionResult {
        selected,
        trace,
        params: SelectionParams::Filter(*p),
        stop,
    })
}

/// Score of one candidate subset inside the wrapper loop.
#[derive(Debug, Clone)]
pub struct SubsetScore {
    pub bounds: FanoBounds,
    pub confusion: ConfusionMatrix,
}

impl SubsetScore {
    pub fn accuracy(&self) -> f64 {
        self.confusion.overall_accuracy()
    }
}

/// Everything the wrapper needs that does not depend on the threshold:
/// the MI ranking against the ground truth and the train/test split.
#[derive(Debug, Clone)]
pub struct FanoProblem<'a> {
    cube: &'a HyperCube,
    gt: &'a GroundTruth,
    curve: MiCurve,
    order: Vec<usize>,
    split: Split,
}

impl<'a> FanoProblem<'a> {
    pub fn new(
        cube: &'a HyperCube,
        gt: &'a GroundTruth,
        split_spec: &SplitSpec,
        quantizer: &Quantizer,
    ) -> Result<Self> {
        let curve = mi_curve(cube, Reference::Labels(gt), quantizer, true)?;
        let s = split(gt, split_spec)?;
        Self::with_parts(cube, gt, curve, s)
    }

    /// Uses a precomputed MI curve and split.
    pub fn with_parts(
        cube: &'a HyperCube,
        gt: &'a GroundTruth,
        curve: MiCurve,
        split: Split,
    ) -> Result<Self> {
        gt.check_dims(cube.rows(), cube.cols())?;
        if gt.n_present_classes() < 2 {
            return Err(Error::TooFewClasses(gt.n_present_classes()));
        }
        if curve.len() != cube.n_bands() {
            return Err(Error::LengthMismatch {
                left: curve.len(),
                right: cube.n_bands(),
            });
        }
        if split.test.is_empty() || split.train.is_empty() {
            return Err(Error::InvalidParameter("split has an empty side".into()));
        }
        let order = curve.ranking();
        Ok(FanoProblem {
            cube,
            gt,
            curve,
            order,
            split,
        })
    }

    pub fn curve(&self) -> &MiCurve {
        &self.curve
    }

    /// Bands in visiting order (descending MI, lower index on ties).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn n_classes(&self) -> usize {
        self.gt.n_classes()
    }

    /// `H(C) / log2 Nc` over the test pixels: the error proxy of a
    /// constant predictor.
    pub fn majority_pe(&self) -> Result<f64> {
        let mut counts = vec![0u64; self.gt.n_classes()];
        for &p in &self.split.test {
            counts[self.gt.labels()[p] as usize - 1] += 1;
        }
        Ok(fano_bounds(entropy(&counts), self.gt.n_classes())?.upper)
    }

    /// Trains on the training pixels restricted to `bands`, predicts every
    /// labeled pixel and scores the estimate on the test pixels.
    pub fn score_subset<T: Trainer>(&self, bands: &[usize], trainer: &T) -> Result<SubsetScore> {
        let data = PixelDataset::from_cube(self.cube, self.gt, bands, &self.split.train)?;
        let model = trainer.train(&data)?;
        let c_est = build_estimated_map(self.cube, self.gt, bands, &model)?;
        let confusion = evaluate(self.gt, &c_est, &self.split.test)?;
        let h = conditional_entropy(&confusion.joint_histogram()?, Axis::B);
        let bounds = fano_bounds(h, self.gt.n_classes())?;
        Ok(SubsetScore { bounds, confusion })
    }

    /// Runs the wrapper; also returns the score of the final accepted subset.
    pub fn run_detailed<T: Trainer>(
        &self,
        p: &WrapperParams,
        trainer: &T,
    ) -> Result<(SelectionResult, Option<SubsetScore>)> {
        if p.target_bands == 0 {
            return Err(Error::InvalidParameter("target band count must be ≥ 1".into()));
        }
        if p.threshold.is_nan() {
            return Err(Error::InvalidParameter("threshold is NaN".into()));
        }
        let mut pe_star = match p.pe_init {
            Some(v) if (0.0..=1.0).contains(&v) => v,
            Some(v) => {
                return Err(Error::InvalidParameter(format!(
                    "initial error proxy {v} not in [0, 1]"
                )))
            }
            None => self.majority_pe()?,
        };
        let mut selected: Vec<usize> = Vec::new();
        let mut trace = Vec::new();
        let mut last_score = None;
        let mut stop = StopReason::Exhausted;
        for (i, &band) in self.order.iter().enumerate() {
            if selected.len() == p.target_bands {
                stop = StopReason::TargetReached;
                break;
            }
            let mut candidate = selected.clone();
            candidate.push(band);
            let score = self
                .score_subset(&candidate, trainer)
                .map_err(|e| Error::Training {
                    band,
                    source: Box::new(e),
                })?;
            let pe = score.bounds.upper;
            let accept = pe <= pe_star - p.threshold;
            let reason = if accept {
                format!("decrease {:.6}", pe_star - pe)
            } else {
                "insufficient decrease".to_string()
            };
            trace.push(TraceStep {
                step: i + 1,
                band,
                mi_bits: self.curve.mi(band),
                pe_before: Some(pe_star),
                pe_after: Some(pe),
                pe_lower: Some(score.bounds.lower),
                fano_width: Some(score.bounds.width()),
                accuracy: Some(score.accuracy()),
                decision: if accept {
                    Decision::Accepted
                } else {
                    Decision::Rejected
                },
                reason,
            });
            if accept {
                pe_star = pe;
                selected = candidate;
                last_score = Some(score);
            }
        }
        if selected.len() == p.target_bands {
            stop = StopReason::TargetReached;
        }
        let result = SelectionResult {
            selected,
            trace,
            params: SelectionParams::Fano(*p),
            stop,
        };
        Ok((result, last_score))
    }

    pub fn run<T: Trainer>(&self, p: &WrapperParams, trainer: &T) -> Result<SelectionResult> {
        self.run_detailed(p, trainer).map(|(r, _)| r)
    }
}

/// Fano-bound wrapper selection.
///
/// Bands are visited in descending MI with the ground truth. Each candidate is
/// tentatively added, a classifier is trained on the enlarged subset and the
/// upper Fano bound `H(C | C_est) / log2 Nc` on the test pixels becomes the
/// error proxy `Pe`. The candidate stays only if `Pe ≤ Pe* − Th`, and then
/// `Pe*` becomes `Pe`.
pub fn select_fano<T: Trainer>(
    cube: &HyperCube,
    gt: &GroundTruth,
    p: &WrapperParams,
    trainer: &T,
    split_spec: &SplitSpec,
) -> Result<SelectionResult> {
    if gt.n_present_classes() < 2 {
        return Err(Error::TooFewClasses(gt.n_present_classes()));
    }
    FanoProblem::new(cube, gt, split_spec, &Quantizer::default())?.run(p, trainer)
}

/// Outcome of one threshold in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRun {
    pub threshold: f64,
    pub selected: Vec<usize>,
    /// Test accuracy after the k-th accepted band, at index k − 1.
    pub accuracy_by_count: Vec<f64>,
    /// Confusion matrix of the final accepted subset.
    pub final_confusion: Option<ConfusionMatrix>,
}

impl ThresholdRun {
    pub fn accuracy_at(&self, n_bands: usize) -> Option<f64> {
        n_bands
            .checked_sub(1)
            .and_then(|i| self.accuracy_by_count.get(i))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Retained-band counts reported as table rows.
    pub checkpoints: Vec<usize>,
    pub runs: Vec<ThresholdRun>,
}

/// Runs the wrapper once per threshold and reads accuracy at each
/// retained-band checkpoint off the single run.
///
/// With `checkpoints: None`, every count from 1 to the largest reached is a
/// checkpoint.
pub fn threshold_sweep<T: Trainer>(
    problem: &FanoProblem<'_>,
    thresholds: &[f64],
    max_bands: usize,
    trainer: &T,
    checkpoints: Option<&[usize]>,
) -> Result<(SweepReport, Vec<SelectionResult>)> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("empty threshold list".into()));
    }
    let outcomes = thresholds
        .par_iter()
        .map(|&th| {
            let params = WrapperParams {
                target_bands: max_bands,
                threshold: th,
                pe_init: None,
            };
            problem.run_detailed(&params, trainer)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut results = Vec::with_capacity(outcomes.len());
    for (&th, (result, last)) in thresholds.iter().zip(outcomes) {
        let accuracy_by_count = result
            .trace
            .iter()
            .filter(|s| s.decision == Decision::Accepted)
            .filter_map(|s| s.accuracy)
            .collect();
        runs.push(ThresholdRun {
            threshold: th,
            selected: result.selected.clone(),
            accuracy_by_count,
            final_confusion: last.map(|s| s.confusion),
        });
        results.push(result);
    }
    let checkpoints = match checkpoints {
        Some(c) => c.to_vec(),
        None => {
            let max = runs.iter().map(|r| r.selected.len()).max().unwrap_or(0);
            (1..=max).collect()
        }
    };
    Ok((SweepReport { checkpoints, runs }, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: &[f64]) -> MiCurve {
        MiCurve::new(v.to_vec()).unwrap()
    }

    #[test]
    fn plateau_discards_neighbours() {
        let c = curve(&[0.4, 0.4, 0.4, 0.4]);
        let p = FilterParams {
            target_bands: 4,
            half_bandwidth: 1,
            threshold: 0.01,
        };
        let r = select_filter(&c, &p).unwrap();
        assert_eq!(r.selected, vec![1, 3]);
        assert_eq!(r.stop, StopReason::Exhausted);
        let rejected: Vec<usize> = r
            .trace
            .iter()
            .filter(|s| s.decision == Decision::Rejected)
            .map(|s| s.band)
            .collect();
        assert_eq!(rejected, vec![2, 4]);
    }

    #[test]
    fn zero_threshold_is_pure_ranking() {
        // d is never negative, so nothing is ever discarded
        let c = curve(&[0.1, 0.7, 0.3, 0.7, 0.2, 0.9]);
        let p = FilterParams {
            target_bands: 4,
            half_bandwidth: 2,
            threshold: 0.0,
        };
        let r = select_filter(&c, &p).unwrap();
        assert_eq!(r.selected, vec![6, 2, 4, 3]);
        assert_eq!(r.selected, c.ranking()[..4]);
        assert_eq!(r.stop, StopReason::TargetReached);
    }

    #[test]
    fn filter_rejects_bad_params() {
        let c = curve(&[0.1]);
        let mut p = FilterParams {
            target_bands: 0,
            half_bandwidth: 1,
            threshold: 0.1,
        };
        assert!(select_filter(&c, &p).is_err());
        p.target_bands = 1;
        p.threshold = f64::INFINITY;
        assert!(select_filter(&c, &p).is_err());
    }

    #[test]
    fn threshold_run_lookup() {
        let r = ThresholdRun {
            threshold: 0.0,
            selected: vec![3, 1],
            accuracy_by_count: vec![0.5, 0.8],
            final_confusion: None,
        };
        assert_eq!(r.accuracy_at(0), None);
        assert_eq!(r.accuracy_at(2), Some(0.8));
        assert_eq!(r.accuracy_at(3), None);
    }
}
