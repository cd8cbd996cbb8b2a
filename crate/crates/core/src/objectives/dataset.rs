use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Slack on the unit-ball check, for rounding left by normalization.
const NORM_SLACK: f64 = 1e-12;

/// Labelled classification data with every input in the closed unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    /// Factor every raw input was divided by at ingestion (1 if none).
    scale: f64,
}

/// Gaussian-blob classification problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance of each class mean from the origin, in units of the
    /// per-coordinate noise standard deviation.
    pub separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// Class means generated under this spec's seed.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        self.draw_means(&mut crate::rng::rng_from_seed(self.seed))
    }

    fn draw_means(&self, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|_| {
                let mut u: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
                let n = numeric::norm(&u).max(f64::MIN_POSITIVE);
                u.iter_mut().for_each(|v| *v *= self.separation / n);
                u
            })
            .collect()
    }
}

impl Dataset {
    /// Validates `‖xⁱ‖₂ ≤ 1` and `yⁱ < num_classes`.
    pub fn new(inputs: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::with_scale(inputs, dim, labels, num_classes, 1.0)
    }

    fn with_scale(
        inputs: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
        scale: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dataset dimension must be positive"));
        }
        if labels.is_empty() || inputs.len() != labels.len() * dim {
            return Err(Error::config(format!(
                "{} input values do not form {} rows of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::config("a classification dataset needs at least 2 classes"));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::rejected(format!(
                "label {y} of example {i} out of range for {num_classes} classes"
            )));
        }
        for (i, row) in inputs.chunks(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("input row {i}")));
            }
            let n = numeric::norm(row);
            if n > 1.0 + NORM_SLACK {
                return Err(Error::rejected(format!(
                    "input row {i} has norm {n} > 1; normalize at ingestion"
                )));
            }
        }
        Ok(Self {
            inputs,
            dim,
            labels,
            num_classes,
            scale,
        })
    }

    /// Divides every row by the largest row norm, then validates.
    pub fn normalized(
        mut inputs: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dataset dimension must be positive"));
        }
        let max_norm = inputs
            .chunks(dim)
            .map(numeric::norm)
            .fold(0.0f64, f64::max);
        let scale = if max_norm > 0.0 { max_norm } else { 1.0 };
        inputs.iter_mut().for_each(|v| *v /= scale);
        Self::with_scale(inputs, dim, labels, num_classes, scale)
    }

    /// Reads a CSV with a header row; `label_column` names the class column
    /// and every other column is a feature. Rows are rescaled so the largest
    /// input norm is 1. `num_classes` defaults to `max label + 1`.
    pub fn from_csv<R: Read>(reader: R, label_column: &str, num_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let label_idx = headers
            .iter()
            .position(|h| h.trim() == label_column)
            .ok_or_else(|| Error::config(format!("label column `{label_column}` not found")))?;
        let dim = headers.len() - 1;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let field = field.trim();
                if j == label_idx {
                    let y: usize = field.parse().map_err(|_| {
                        Error::rejected(format!("row {row}: label `{field}` is not a class index"))
                    })?;
                    labels.push(y);
                } else {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::rejected(format!("row {row}: feature `{field}` is not a number"))
                    })?;
                    inputs.push(v);
                }
            }
        }
        let observed = labels.iter().max().map_or(0, |m| m + 1);
        let classes = num_classes.unwrap_or(observed).max(observed);
        Self::normalized(inputs, dim, labels, classes)
    }

    /// Writes the dataset as CSV: `x0,…,x{d-1},label`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".to_string());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.input(i).iter().map(|v| format!("{v:.16e}")).collect();
            row.push(self.labels[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Balanced Gaussian blobs: class `c` has mean `separation·u_c` for a
    /// random unit vector `u_c`, plus standard normal noise. Inputs are
    /// normalized to the unit ball; examples are grouped by class.
    pub fn blobs(spec: &BlobSpec) -> Result<Self> {
        if spec.classes < 2 {
            return Err(Error::config("blobs need at least 2 classes"));
        }
        if spec.per_class == 0 || spec.dim == 0 {
            return Err(Error::config("blobs need a positive dimension and per-class count"));
        }
        if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
            return Err(Error::config("blob separation must be a non-negative real"));
        }
        let mut rng = crate::rng::rng_from_seed(spec.seed);
        let means = spec.draw_means(&mut rng);
        let mut inputs = Vec::with_capacity(spec.classes * spec.per_class * spec.dim);
        let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..spec.per_class {
                for m in mean {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    inputs.push(m + noise);
                }
                labels.push(c);
            }
        }
        Self::normalized(inputs, spec.dim, labels, spec.classes)
    }

    /// Every example repeated `k` times in place.
    pub fn repeated(&self, k: usize) -> Result<Self> {
        let mut inputs = Vec::with_capacity(self.inputs.len() * k);
        let mut labels = Vec::with_capacity(self.labels.len() * k);
        for _ in 0..k {
            inputs.extend_from_slice(&self.inputs);
            labels.extend_from_slice(&self.labels);
        }
        Self::with_scale(inputs, self.dim, labels, self.num_classes, self.scale)
    }

    /// Random subset of `n` distinct examples.
    pub fn subsample(&self, n: usize, rng: &mut crate::rng::Rng) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::rejected(format!("cannot draw {n} of {} examples", self.len())));
        }
        let idx = rand::seq::index::sample(rng, self.len(), n);
        let mut inputs = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for i in idx.iter() {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Self::with_scale(inputs, self.dim, labels, self.num_classes, self.scale)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn max_norm(&self) -> f64 {
        self.inputs
            .chunks(self.dim)
            .map(numeric::norm)
            .fold(0.0, f64::max)
    }
}
