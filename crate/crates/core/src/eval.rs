//! Evaluation: ranked precision/recall curves, selection quality against gold
//! labels, episodes-to-threshold, and run comparison reports.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::EpisodeStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bag_id: String,
    pub relation: String,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub rank: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Rank predictions by confidence (descending; ties by bag id, then relation)
/// and report precision/recall at every rank.
pub fn pr_curve(predictions: &[Prediction], gold: &[(String, String)]) -> Result<Vec<PRPoint>> {
    if gold.is_empty() {
        return Err(Error::Argument(
            "precision/recall curve needs at least one gold fact".into(),
        ));
    }
    if let Some(p) = predictions.iter().find(|p| !p.confidence.is_finite()) {
        return Err(Error::Argument(format!(
            "non-finite confidence for ({}, {})",
            p.bag_id, p.relation
        )));
    }
    let gold: HashSet<(&str, &str)> = gold.iter().map(|(b, r)| (b.as_str(), r.as_str())).collect();
    let mut ranked: Vec<&Prediction> = predictions.iter().collect();
    ranked.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.bag_id.cmp(&b.bag_id))
            .then_with(|| a.relation.cmp(&b.relation))
    });
    let n_gold = gold.len() as f64;
    let mut correct = 0usize;
    Ok(ranked
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if gold.contains(&(p.bag_id.as_str(), p.relation.as_str())) {
                correct += 1;
            }
            PRPoint {
                rank: i + 1,
                recall: correct as f64 / n_gold,
                precision: correct as f64 / (i + 1) as f64,
            }
        })
        .collect())
}

/// Area under a ranked curve: each recall increment is credited with the
/// precision measured at the rank where it happened.
pub fn pr_auc(curve: &[PRPoint]) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for pt in curve {
        area += (pt.recall - prev_recall).max(0.0) * pt.precision;
        prev_recall = prev_recall.max(pt.recall);
    }
    area.clamp(0.0, 1.0)
}

pub fn write_curve_csv(curve: &[PRPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("rank,recall,precision\n");
    for p in curve {
        let _ = writeln!(out, "{},{:?},{:?}", p.rank, p.recall, p.precision);
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Instance-level precision/recall/F1 of `chosen` against gold flags, pooled
/// over all bags. 0/0 counts as 0.
pub fn selection_metrics(chosen: &[Vec<usize>], gold: &[Vec<Option<bool>>]) -> Result<SelectionQuality> {
    if chosen.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} selections for {} bags",
            chosen.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut positives) = (0usize, 0usize, 0usize);
    for (bag, (sel, flags)) in chosen.iter().zip(gold).enumerate() {
        let flags: Vec<bool> = flags
            .iter()
            .map(|f| f.ok_or_else(|| Error::Argument(format!("bag #{bag} lacks gold selection flags"))))
            .collect::<Result<_>>()?;
        positives += flags.iter().filter(|&&f| f).count();
        for &i in sel {
            match flags.get(i) {
                Some(true) => tp += 1,
                Some(false) => fp += 1,
                None => return Err(Error::Argument(format!("bag #{bag}: selected index {i} out of range"))),
            }
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, positives);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SelectionQuality { precision, recall, f1 })
}

/// First 0-based episode whose trailing `window`-episode mean reaches `threshold`.
pub fn episodes_to_threshold(trace: &[f64], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    if trace.len() < window {
        return None;
    }
    (window - 1..trace.len()).find(|&e| {
        let mean = trace[e + 1 - window..=e].iter().sum::<f64>() / window as f64;
        mean >= threshold
    })
}

/// Best trailing-window mean of a trace (`None` when shorter than the window).
pub fn best_window_mean(trace: &[f64], window: usize) -> Option<f64> {
    let window = window.max(1);
    trace
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .max_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeStats>,
    pub episodes_to_threshold: Option<usize>,
    pub pr_curve: Vec<PRPoint>,
    pub pr_auc: f64,
    pub selection_f1_final: f64,
}

impl RunMetrics {
    pub fn reward_trace(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.mean_reward).collect()
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

/// Median with `None` ordered after every number (an unreached threshold is
/// "infinitely late"). Even-length inputs average the two middle values.
pub fn median_with_missing(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

pub fn median(values: &[f64]) -> f64 {
    let wrapped: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    median_with_missing(&wrapped).unwrap_or(f64::NAN)
}

/// An episodes-to-threshold value as it appears in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reached {
    Episode(f64),
    Label(String),
}

impl From<Option<f64>> for Reached {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(e) => Reached::Episode(e),
            None => Reached::Label("not reached".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub pr_auc: f64,
    pub selection_f1_final: f64,
    pub episodes_to_threshold: Reached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub a: String,
    pub b: String,
    /// `b − a`
    pub pr_auc: f64,
    pub selection_f1_final: f64,
    /// `b − a`; absent unless both runs reached the threshold.
    pub episodes_to_threshold: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub seeds: Vec<u64>,
    pub median_pr_auc: f64,
    pub median_selection_f1_final: f64,
    pub median_episodes_to_threshold: Reached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<RunSummary>,
    pub pairwise: Vec<PairDelta>,
    pub by_mode: Vec<ModeSummary>,
}

impl ComparisonReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn compare_runs(runs: &[(String, RunMetrics)]) -> Result<ComparisonReport> {
    if runs.len() < 2 {
        return Err(Error::Argument(format!(
            "compare needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let summaries = runs
        .iter()
        .map(|(name, m)| RunSummary {
            name: name.clone(),
            mode: m.mode.clone(),
            seed: m.seed,
            pr_auc: m.pr_auc,
            selection_f1_final: m.selection_f1_final,
            episodes_to_threshold: m.episodes_to_threshold.map(|e| e as f64).into(),
        })
        .collect();

    let mut pairwise = Vec::new();
    for (i, (na, a)) in runs.iter().enumerate() {
        for (nb, b) in &runs[i + 1..] {
            pairwise.push(PairDelta {
                a: na.clone(),
                b: nb.clone(),
                pr_auc: b.pr_auc - a.pr_auc,
                selection_f1_final: b.selection_f1_final - a.selection_f1_final,
                episodes_to_threshold: match (a.episodes_to_threshold, b.episodes_to_threshold) {
                    (Some(x), Some(y)) => Some(y as i64 - x as i64),
                    _ => None,
                },
            });
        }
    }

    let mut modes: Vec<&str> = Vec::new();
    for (_, m) in runs {
        if !modes.contains(&m.mode.as_str()) {
            modes.push(&m.mode);
        }
    }
    let by_mode = modes
        .into_iter()
        .map(|mode| {
            let group: Vec<&RunMetrics> = runs.iter().map(|(_, m)| m).filter(|m| m.mode == mode).collect();
            let eps: Vec<Option<f64>> = group
                .iter()
                .map(|m| m.episodes_to_threshold.map(|e| e as f64))
                .collect();
            ModeSummary {
                mode: mode.to_owned(),
                seeds: group.iter().map(|m| m.seed).collect(),
                median_pr_auc: median(&group.iter().map(|m| m.pr_auc).collect::<Vec<_>>()),
                median_selection_f1_final: median(&group.iter().map(|m| m.selection_f1_final).collect::<Vec<_>>()),
                median_episodes_to_threshold: median_with_missing(&eps).into(),
            }
        })
        .collect();

    Ok(ComparisonReport {
        runs: summaries,
        pairwise,
        by_mode,
    })
}
