//! Bag-level relation classifier: mean-pooled bag representation, linear
//! scores, softmax over relations. Trained by full-batch gradient ascent on
//! the mean log-likelihood.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, log_softmax_at, mean_pool, softmax, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    /// `n_r × d_s`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(n_r: usize, d_s: usize) -> Self {
        ClassifierParams {
            weight: Matrix::zeros(n_r, d_s),
            bias: vec![0.0; n_r],
        }
    }

    pub fn n_relations(&self) -> usize {
        self.bias.len()
    }

    pub fn d_s(&self) -> usize {
        self.weight.cols()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.weight.as_slice()) && all_finite(&self.bias)
    }

    /// `self + step · other`
    pub fn add_scaled(&self, step: f64, other: &ClassifierParams) -> ClassifierParams {
        let mut out = self.clone();
        axpy(step, other.weight.as_slice(), out.weight.as_mut_slice());
        axpy(step, &other.bias, &mut out.bias);
        out
    }
}

pub fn bag_representation<V: AsRef<[f64]>>(selected: &[V], d_s: usize) -> Result<Vec<f64>> {
    mean_pool(selected, d_s, "bag representation")
}

pub fn scores(bag_repr: &[f64], params: &ClassifierParams) -> Result<Vec<f64>> {
    if bag_repr.len() != params.d_s() {
        return Err(Error::dim("classifier input", params.d_s(), bag_repr.len()));
    }
    let mut o = params.weight.matvec(bag_repr);
    axpy(1.0, &params.bias, &mut o);
    Ok(o)
}

pub fn predict_proba(scores: &[f64]) -> Vec<f64> {
    softmax(scores)
}

fn check_relation(relation: usize, params: &ClassifierParams) -> Result<()> {
    if relation >= params.n_relations() {
        return Err(Error::UnknownRelation(format!(
            "#{relation} (vocabulary has {})",
            params.n_relations()
        )));
    }
    Ok(())
}

/// `log P(relation | selected)`; always ≤ 0.
pub fn log_likelihood<V: AsRef<[f64]>>(selected: &[V], relation: usize, params: &ClassifierParams) -> Result<f64> {
    check_relation(relation, params)?;
    let x = bag_representation(selected, params.d_s())?;
    let o = scores(&x, params)?;
    Ok(log_softmax_at(&o, relation).min(0.0))
}

/// One training bag: the selected instance representations and the gold relation.
pub type BagExample<V> = (Vec<V>, usize);

fn total_order(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Gradient of the mean log-likelihood over `batch`.
///
/// Contributions are accumulated in a canonical order (relation, then pooled
/// representation), so the result does not depend on the order of `batch`.
pub fn classifier_gradient<V: AsRef<[f64]>>(
    batch: &[BagExample<V>],
    params: &ClassifierParams,
) -> Result<ClassifierParams> {
    if batch.is_empty() {
        return Err(Error::Argument("empty classifier batch".into()));
    }
    let d_s = params.d_s();
    let mut pooled = Vec::with_capacity(batch.len());
    for (selected, relation) in batch {
        check_relation(*relation, params)?;
        pooled.push((bag_representation(selected, d_s)?, *relation));
    }
    pooled.sort_by(|(xa, ra), (xb, rb)| ra.cmp(rb).then_with(|| total_order(xa, xb)));

    let mut grad = ClassifierParams::zeros(params.n_relations(), d_s);
    for (x, relation) in &pooled {
        let mut residual = predict_proba(&scores(x, params)?);
        residual.iter_mut().for_each(|p| *p = -*p);
        residual[*relation] += 1.0;
        grad.weight.add_outer(1.0, &residual, x);
        axpy(1.0, &residual, &mut grad.bias);
    }
    let n = batch.len() as f64;
    grad.weight.as_mut_slice().iter_mut().for_each(|g| *g /= n);
    grad.bias.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

pub fn classifier_train_step<V: AsRef<[f64]>>(
    batch: &[BagExample<V>],
    params: &ClassifierParams,
    lr: f64,
) -> Result<ClassifierParams> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!("classifier learning rate {lr}")));
    }
    let grad = classifier_gradient(batch, params)?;
    Ok(params.add_scaled(lr, &grad))
}

/// Mean log-likelihood of a batch (the quantity `classifier_train_step` ascends).
pub fn mean_log_likelihood<V: AsRef<[f64]>>(batch: &[BagExample<V>], params: &ClassifierParams) -> Result<f64> {
    let mut total = 0.0;
    for (sel, r) in batch {
        total += log_likelihood(sel, *r, params)?;
    }
    Ok(total / batch.len().max(1) as f64)
}

pub const CHECKPOINT_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub format_version: String,
    pub d_s: usize,
    pub n_r: usize,
    pub hash_seed: u64,
    pub relations: Vec<String>,
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl ClassifierCheckpoint {
    pub fn new(params: &ClassifierParams, relations: &[String], hash_seed: u64) -> Self {
        ClassifierCheckpoint {
            format_version: CHECKPOINT_VERSION.into(),
            d_s: params.d_s(),
            n_r: params.n_relations(),
            hash_seed,
            relations: relations.to_vec(),
            weight: params.weight.to_rows(),
            bias: params.bias.clone(),
        }
    }

    pub fn params(&self) -> Result<ClassifierParams> {
        let weight = if self.weight.is_empty() {
            Matrix::zeros(0, self.d_s)
        } else {
            Matrix::from_rows(self.weight.clone())?
        };
        if weight.rows() != self.n_r || self.bias.len() != self.n_r || self.relations.len() != self.n_r {
            return Err(Error::Validation(format!(
                "classifier checkpoint declares n_r = {} but has {} weight rows, {} biases, {} relations",
                self.n_r,
                weight.rows(),
                self.bias.len(),
                self.relations.len()
            )));
        }
        if weight.cols() != self.d_s {
            return Err(Error::dim("classifier checkpoint weight", self.d_s, weight.cols()));
        }
        Ok(ClassifierParams {
            weight,
            bias: self.bias.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
