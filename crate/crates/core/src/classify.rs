//! Pixel classification over a band subset.
//!
//! The built-in linear classifier is one-vs-rest L2-regularized logistic
//! regression on standardized features, fitted per class by a fixed-budget
//! Newton iteration. A 1-nearest-neighbour classifier is available as an
//! assumption-free cross-check.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{GroundTruth, HyperCube, LabelGrid};

/// Version written into saved model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.5,
            seed: 0,
            stratified: true,
        }
    }
}

/// Disjoint train/test pixel sets, both ascending row-major indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

fn train_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return n;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Splits the labeled pixels of `gt`.
///
/// Stratified splits cut each class separately; a class with a single pixel
/// sends it to the training side and records a warning.
pub fn split(gt: &GroundTruth, s: &SplitSpec) -> Result<Split> {
    if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {} not in (0, 1)",
            s.train_fraction
        )));
    }
    let labeled = gt.labeled_pixels();
    if labeled.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    if gt.class_counts().iter().all(|&c| c < 2) {
        return Err(Error::InvalidParameter(
            "no class has two or more labeled pixels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    if s.stratified {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); gt.n_classes()];
        for &p in &labeled {
            per_class[gt.labels()[p] as usize - 1].push(p);
        }
        for (k, mut pixels) in per_class.into_iter().enumerate() {
            if pixels.len() == 1 {
                warnings.push(format!(
                    "class {} has a single labeled pixel; it goes to the training side",
                    k + 1
                ));
            }
            pixels.shuffle(&mut rng);
            let n_train = train_count(pixels.len(), s.train_fraction);
            train.extend_from_slice(&pixels[..n_train]);
            test.extend_from_slice(&pixels[n_train..]);
        }
    } else {
        let mut pixels = labeled;
        pixels.shuffle(&mut rng);
        let n_train = train_count(pixels.len(), s.train_fraction);
        train.extend_from_slice(&pixels[..n_train]);
        test.extend_from_slice(&pixels[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Split {
        train,
        test,
        warnings,
    })
}

/// Raw reflectance of a set of pixels restricted to a band subset.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDataset {
    bands: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<u16>,
    pixels: Vec<usize>,
}

impl PixelDataset {
    /// Gathers the labeled pixels in `pixels` over the 1-based `bands`.
    pub fn from_cube(
        cube: &HyperCube,
        gt: &GroundTruth,
        bands: &[usize],
        pixels: &[usize],
    ) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidParameter("empty band subset".into()));
        }
        gt.check_dims(cube.rows(), cube.cols())?;
        for &b in bands {
            cube.check_band(b)?;
        }
        let slices: Vec<&[u16]> = bands.iter().map(|&b| cube.band(b)).collect::<Result<_>>()?;
        let mut features = Vec::with_capacity(pixels.len() * bands.len());
        let mut labels = Vec::with_capacity(pixels.len());
        for &p in pixels {
            let label = gt.labels()[p];
            if label == 0 {
                return Err(Error::InvalidParameter(format!(
                    "pixel {p} is unlabeled and cannot enter a dataset"
                )));
            }
            labels.push(label);
            features.extend(slices.iter().map(|s| f64::from(s[p])));
        }
        Ok(PixelDataset {
            bands: bands.to_vec(),
            features,
            labels,
            pixels: pixels.to_vec(),
        })
    }

    /// Builds a dataset from explicit feature rows.
    pub fn from_rows(bands: Vec<usize>, rows: &[Vec<f64>], labels: Vec<u16>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidParameter("empty band subset".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if labels.contains(&0) {
            return Err(Error::InvalidParameter("label 0 is reserved for unlabeled".into()));
        }
        let dim = bands.len();
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::FeatureDimension {
                    expected: dim,
                    actual: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        let pixels = (0..rows.len()).collect();
        Ok(PixelDataset {
            bands,
            features,
            labels,
            pixels,
        })
    }

    pub fn bands(&self) -> &[usize] {
        &self.bands
    }

    pub fn dim(&self) -> usize {
        self.bands.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    fn classes(&self) -> Vec<u16> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Per-band mean and standard deviation from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &PixelDataset) -> Self {
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, &x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((v, &x), &m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        // zero-variance bands fall back to a unit divisor
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((&v, &m), &s)| (v - m) / s),
        );
    }
}

/// A trained pixel classifier.
pub trait PixelClassifier: Send + Sync {
    /// 1-based bands the model was trained on, in feature order.
    fn bands(&self) -> &[usize];

    /// Class ids seen in training, ascending.
    fn classes(&self) -> &[u16];

    fn predict_one(&self, x: &[f64]) -> Result<u16>;

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<u16>> {
        rows.par_iter().map(|r| self.predict_one(r)).collect()
    }

    fn predict_dataset(&self, data: &PixelDataset) -> Result<Vec<u16>> {
        if data.dim() != self.bands().len() {
            return Err(Error::FeatureDimension {
                expected: self.bands().len(),
                actual: data.dim(),
            });
        }
        (0..data.len())
            .into_par_iter()
            .map(|i| self.predict_one(data.row(i)))
            .collect()
    }
}

/// Builds classifiers; must be deterministic for a fixed configuration.
pub trait Trainer: Sync {
    type Model: PixelClassifier;

    fn train(&self, data: &PixelDataset) -> Result<Self::Model>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierConfig {
    /// One-vs-rest logistic regression.
    Linear {
        regularization: f64,
        max_iter: usize,
        seed: u64,
    },
    /// 1-nearest-neighbour on standardized features.
    Knn,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Linear {
            regularization: 1e-3,
            max_iter: 50,
            seed: 0,
        }
    }
}

impl Trainer for ClassifierConfig {
    type Model = ClassifierModel;

    fn train(&self, data: &PixelDataset) -> Result<ClassifierModel> {
        let classes = data.classes();
        if classes.len() < 2 {
            return Err(Error::SingleClass);
        }
        let scaler = Standardizer::fit(data);
        match *self {
            ClassifierConfig::Linear {
                regularization,
                max_iter,
                ..
            } => {
                if !(regularization > 0.0) {
                    return Err(Error::InvalidParameter(
                        "regularization must be positive".into(),
                    ));
                }
                let z = standardized_matrix(data, &scaler);
                let weights = classes
                    .par_iter()
                    .map(|&c| {
                        let y: Vec<f64> = data
                            .labels()
                            .iter()
                            .map(|&l| if l == c { 1.0 } else { 0.0 })
                            .collect();
                        fit_logistic(&z, &y, regularization, max_iter)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ClassifierModel::Linear(LinearModel {
                    bands: data.bands().to_vec(),
                    classes,
                    scaler,
                    weights,
                }))
            }
            ClassifierConfig::Knn => {
                let mut train = Vec::with_capacity(data.len() * data.dim());
                let mut buf = Vec::new();
                for i in 0..data.len() {
                    scaler.apply(data.row(i), &mut buf);
                    train.extend_from_slice(&buf);
                }
                Ok(ClassifierModel::Knn(KnnModel {
                    bands: data.bands().to_vec(),
                    classes,
                    scaler,
                    train,
                    labels: data.labels().to_vec(),
                }))
            }
        }
    }
}

fn standardized_matrix(data: &PixelDataset, scaler: &Standardizer) -> DMatrix<f64> {
    let d = data.dim();
    let mut z = DMatrix::zeros(data.len(), d);
    let mut buf = Vec::new();
    for i in 0..data.len() {
        scaler.apply(data.row(i), &mut buf);
        for j in 0..d {
            z[(i, j)] = buf[j];
        }
    }
    z
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^s) without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn logistic_loss(z: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>, lambda: f64) -> f64 {
    let d = z.ncols();
    let n = z.nrows() as f64;
    let w = theta.rows(0, d);
    let b = theta[d];
    let scores = z * w;
    let data: f64 = scores
        .iter()
        .zip(y)
        .map(|(&s, &t)| softplus(s + b) - t * (s + b))
        .sum();
    data / n + 0.5 * lambda * w.norm_squared()
}

/// Newton's method with backtracking on the L2-regularized logistic loss.
/// Returns weights followed by the intercept.
fn fit_logistic(z: &DMatrix<f64>, y: &[f64], lambda: f64, max_iter: usize) -> Result<Vec<f64>> {
    let (n, d) = z.shape();
    let nf = n as f64;
    let mut theta = DVector::<f64>::zeros(d + 1);
    let prior = y.iter().sum::<f64>() / nf;
    theta[d] = (prior / (1.0 - prior)).ln();
    let mut loss = logistic_loss(z, y, &theta, lambda);
    for _ in 0..max_iter {
        let scores = z * theta.rows(0, d) + DVector::from_element(n, theta[d]);
        let mut grad = DVector::<f64>::zeros(d + 1);
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        for i in 0..n {
            let p = sigmoid(scores[i]);
            let r = p - y[i];
            let w = (p * (1.0 - p)).max(1e-12);
            for a in 0..d {
                let za = z[(i, a)];
                grad[a] += r * za;
                for b in a..d {
                    hess[(a, b)] += w * za * z[(i, b)];
                }
                hess[(a, d)] += w * za;
            }
            grad[d] += r;
            hess[(d, d)] += w;
        }
        for a in 0..=d {
            for b in a..=d {
                hess[(a, b)] /= nf;
                hess[(b, a)] = hess[(a, b)];
            }
            grad[a] /= nf;
        }
        for a in 0..d {
            grad[a] += lambda * theta[a];
            hess[(a, a)] += lambda;
        }
        hess[(d, d)] += 1e-10;
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Numerical("logistic Hessian is not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let candidate = &theta - &step * t;
            let l = logistic_loss(z, y, &candidate, lambda);
            if l <= loss {
                theta = candidate;
                accepted = l < loss;
                loss = l;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.amax() * t < 1e-10 {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("logistic weights diverged".into()));
    }
    Ok(theta.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    bands: Vec<usize>,
    classes: Vec<u16>,
    scaler: Standardizer,
    /// Per class: one weight per band, then the intercept.
    weights: Vec<Vec<f64>>,
}

impl LinearModel {
    /// Per-class decision scores for a raw feature vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.bands.len(), x)?;
        let mut z = Vec::new();
        self.scaler.apply(x, &mut z);
        Ok(self
            .weights
            .iter()
            .map(|w| {
                let (coef, bias) = w.split_at(z.len());
                coef.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + bias[0]
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    bands: Vec<usize>,
    classes: Vec<u16>,
    scaler: Standardizer,
    /// Standardized training rows, flattened.
    train: Vec<f64>,
    labels: Vec<u16>,
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::FeatureDimension {
            expected,
            actual: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierModel {
    Linear(LinearModel),
    Knn(KnnModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: ClassifierModel,
}

impl ClassifierModel {
    /// Saves as JSON: `{"format_version": 1, "model": {"kind": "linear"|"knn", ...}}`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file.model)
    }
}

impl PixelClassifier for ClassifierModel {
    fn bands(&self) -> &[usize] {
        match self {
            ClassifierModel::Linear(m) => &m.bands,
            ClassifierModel::Knn(m) => &m.bands,
        }
    }

    fn classes(&self) -> &[u16] {
        match self {
            ClassifierModel::Linear(m) => &m.classes,
            ClassifierModel::Knn(m) => &m.classes,
        }
    }

    fn predict_one(&self, x: &[f64]) -> Result<u16> {
        match self {
            ClassifierModel::Linear(m) => {
                let scores = m.scores(x)?;
                // strict comparison keeps the lowest class id on ties
                let mut best = 0;
                for (i, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = i;
                    }
                }
                Ok(m.classes[best])
            }
            ClassifierModel::Knn(m) => {
                check_dim(m.bands.len(), x)?;
                let mut z = Vec::new();
                m.scaler.apply(x, &mut z);
                let d = z.len();
                let mut best = (f64::INFINITY, u16::MAX);
                for (row, &label) in m.train.chunks(d).zip(&m.labels) {
                    let dist: f64 = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist < best.0 || (dist == best.0 && label < best.1) {
                        best = (dist, label);
                    }
                }
                Ok(best.1)
            }
        }
    }
}

/// Trains on `data`; a thin wrapper over [`Trainer::train`].
pub fn train<T: Trainer>(data: &PixelDataset, trainer: &T) -> Result<T::Model> {
    trainer.train(data)
}

/// Predicted class for every labeled pixel; unlabeled pixels stay 0.
pub fn build_estimated_map<M: PixelClassifier + ?Sized>(
    cube: &HyperCube,
    gt: &GroundTruth,
    bands: &[usize],
    model: &M,
) -> Result<LabelGrid> {
    if bands.is_empty() {
        return Err(Error::InvalidParameter("empty band subset".into()));
    }
    if model.bands() != bands {
        return Err(Error::InvalidParameter(format!(
            "model trained on bands {:?}, asked to map bands {:?}",
            model.bands(),
            bands
        )));
    }
    let pixels = gt.labeled_pixels();
    let data = PixelDataset::from_cube(cube, gt, bands, &pixels)?;
    let predicted = model.predict_dataset(&data)?;
    let mut labels = vec![0u16; cube.n_pixels()];
    for (&p, &c) in pixels.iter().zip(&predicted) {
        labels[p] = c;
    }
    Ok(LabelGrid {
        rows: cube.rows(),
        cols: cube.cols(),
        labels,
    })
}
