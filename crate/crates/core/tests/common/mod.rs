//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Written for clarity, not speed, and deliberately
//! without calling the code they check.
#![allow(dead_code)]

use bagclean::classifier::ClassifierParams;
use bagclean::dataset::Instance;
use bagclean::eval::Prediction;
use bagclean::policy::PolicyParams;
use bagclean::rules::{Rule, RuleSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a − b|` relative to the larger magnitude, floored so that entries that
/// are both essentially zero are judged on absolute error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log π(action | state)` evaluated from scratch.
pub fn policy_log_prob(state: &[f64], action: u8, p: &PolicyParams) -> f64 {
    let mut logits = [p.bias[0], p.bias[1]];
    for (row, logit) in logits.iter_mut().enumerate() {
        for (j, s) in state.iter().enumerate() {
            *logit += p.weight.get(row, j) * s;
        }
    }
    logits[action as usize] - log_sum_exp(&logits)
}

/// Central differences of `f` with respect to every policy parameter, laid
/// out as weight rows followed by the two biases.
pub fn policy_fd(p: &PolicyParams, f: impl Fn(&PolicyParams) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..2 {
        for c in 0..p.d_state() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi.weight.set(r, c, p.weight.get(r, c) + FD_STEP);
            lo.weight.set(r, c, p.weight.get(r, c) - FD_STEP);
            out.push((f(&hi) - f(&lo)) / (2.0 * FD_STEP));
        }
    }
    for b in 0..2 {
        let (mut hi, mut lo) = (p.clone(), p.clone());
        hi.bias[b] += FD_STEP;
        lo.bias[b] -= FD_STEP;
        out.push((f(&hi) - f(&lo)) / (2.0 * FD_STEP));
    }
    out
}

pub fn policy_flat(p: &PolicyParams) -> Vec<f64> {
    let mut v = p.weight.as_slice().to_vec();
    v.extend_from_slice(&p.bias);
    v
}

/// Mean over bags of `log softmax(W x̄ + b)[relation]`, from scratch.
pub fn classifier_objective(batch: &[(Vec<Vec<f64>>, usize)], p: &ClassifierParams) -> f64 {
    let d_s = p.d_s();
    let mut total = 0.0;
    for (instances, relation) in batch {
        let mut mean = vec![0.0; d_s];
        for x in instances {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / instances.len() as f64;
            }
        }
        let scores: Vec<f64> = (0..p.n_relations())
            .map(|r| p.bias[r] + (0..d_s).map(|j| p.weight.get(r, j) * mean[j]).sum::<f64>())
            .collect();
        total += scores[*relation] - log_sum_exp(&scores);
    }
    total / batch.len() as f64
}

pub fn classifier_fd(p: &ClassifierParams, f: impl Fn(&ClassifierParams) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..p.n_relations() {
        for c in 0..p.d_s() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi.weight.set(r, c, p.weight.get(r, c) + FD_STEP);
            lo.weight.set(r, c, p.weight.get(r, c) - FD_STEP);
            out.push((f(&hi) - f(&lo)) / (2.0 * FD_STEP));
        }
    }
    for b in 0..p.n_relations() {
        let (mut hi, mut lo) = (p.clone(), p.clone());
        hi.bias[b] += FD_STEP;
        lo.bias[b] -= FD_STEP;
        out.push((f(&hi) - f(&lo)) / (2.0 * FD_STEP));
    }
    out
}

pub fn classifier_flat(p: &ClassifierParams) -> Vec<f64> {
    let mut v = p.weight.as_slice().to_vec();
    v.extend_from_slice(&p.bias);
    v
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_policy(rng: &mut ChaCha8Rng, d_state: usize) -> PolicyParams {
    let mut p = PolicyParams::zeros(d_state);
    for v in p.weight.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    p.bias = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    p
}

pub fn random_classifier(rng: &mut ChaCha8Rng, n_r: usize, d_s: usize) -> ClassifierParams {
    let mut p = ClassifierParams::zeros(n_r, d_s);
    for v in p.weight.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    for b in p.bias.iter_mut() {
        *b = rng.random_range(-1.0..1.0);
    }
    p
}

/// `(recall, precision)` at each rank `k`, computing every prediction's rank
/// by counting how many others beat it.
pub fn brute_pr_curve(preds: &[Prediction], gold: &[(String, String)]) -> Vec<(f64, f64)> {
    let beats = |a: &Prediction, b: &Prediction| {
        a.confidence > b.confidence
            || (a.confidence == b.confidence
                && (a.bag_id.as_str(), a.relation.as_str()) < (b.bag_id.as_str(), b.relation.as_str()))
    };
    let ranks: Vec<usize> = preds
        .iter()
        .map(|p| 1 + preds.iter().filter(|q| beats(q, p)).count())
        .collect();
    let is_gold = |p: &Prediction| gold.iter().any(|(b, r)| *b == p.bag_id && *r == p.relation);
    (1..=preds.len())
        .map(|k| {
            let hits = preds
                .iter()
                .zip(&ranks)
                .filter(|(p, &rank)| rank <= k && is_gold(p))
                .count();
            (hits as f64 / gold.len() as f64, hits as f64 / k as f64)
        })
        .collect()
}

/// Area with each distinct recall level weighted by the precision at the
/// first rank that reaches it.
pub fn brute_pr_auc(points: &[(f64, f64)]) -> f64 {
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for level in levels {
        if level <= 0.0 {
            continue;
        }
        let first = points.iter().find(|p| p.0 >= level).expect("level comes from points");
        area += (level - prev) * first.1;
        prev = level;
    }
    area
}

/// Scan every window end, averaging by explicit summation.
pub fn brute_episodes_to_threshold(trace: &[f64], threshold: f64, window: usize) -> Option<usize> {
    for end in 0..trace.len() {
        if end + 1 < window {
            continue;
        }
        let mut sum = 0.0;
        for v in &trace[end + 1 - window..=end] {
            sum += v;
        }
        if sum / window as f64 >= threshold {
            return Some(end);
        }
    }
    None
}

/// Try every alignment of every rule against the instance.
pub fn naive_in_matched_set(rules: &RuleSet, inst: &Instance, bag_relation: &str) -> bool {
    rules
        .rules
        .iter()
        .any(|rule| naive_rule_matches(rule, inst, bag_relation))
}

pub fn naive_rule_matches(rule: &Rule, inst: &Instance, bag_relation: &str) -> bool {
    if rule.relation != bag_relation || rule.pattern.len() > inst.tokens.len() {
        return false;
    }
    (0..=inst.tokens.len() - rule.pattern.len()).any(|start| {
        rule.pattern.iter().enumerate().all(|(j, p)| {
            let pos = start + j;
            match p.as_str() {
                "E1" => pos == inst.e1_pos,
                "E2" => pos == inst.e2_pos,
                word => inst.tokens[pos] == word,
            }
        })
    })
}

/// Exact expected F1 of a selector that keeps each instance independently
/// with probability `rate`, when a fraction `noise` of instances is noise.
/// Precision is the true fraction and recall equals `rate`.
pub fn coin_selector_f1(noise: f64, rate: f64) -> f64 {
    let precision = 1.0 - noise;
    2.0 * precision * rate / (precision + rate)
}

/// Small vocabularies and coarse confidences so ties and hits are common.
pub fn random_predictions(rng: &mut ChaCha8Rng) -> (Vec<Prediction>, Vec<(String, String)>) {
    let n_bags = rng.random_range(1..40);
    let rels = ["r1", "r2", "r3"];
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for b in 0..n_bags {
        let bag = format!("b{b:02}");
        for r in rels {
            if rng.random_bool(0.7) {
                preds.push(Prediction {
                    bag_id: bag.clone(),
                    relation: r.into(),
                    confidence: rng.random_range(0..6) as f64 / 5.0,
                });
            }
        }
        if rng.random_bool(0.6) {
            gold.push((bag.clone(), rels[rng.random_range(0..3)].to_string()));
        }
    }
    if gold.is_empty() {
        gold.push(("b00".into(), "r1".into()));
    }
    (preds, gold)
}

pub fn random_instance(rng: &mut ChaCha8Rng, words: &[&str]) -> Instance {
    let len = rng.random_range(2..=20);
    let mut tokens: Vec<String> = (0..len)
        .map(|_| words[rng.random_range(0..words.len())].to_owned())
        .collect();
    let e1 = rng.random_range(0..len);
    let e2 = (e1 + rng.random_range(1..len)) % len;
    tokens[e1] = "head".into();
    tokens[e2] = "tail".into();
    Instance::new(tokens, e1, e2)
}

pub fn random_rule(rng: &mut ChaCha8Rng, words: &[&str]) -> Rule {
    let len = rng.random_range(2..=5);
    let mut pattern: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
    let h = rng.random_range(0..len);
    let t = (h + rng.random_range(1..len)) % len;
    pattern[h] = "E1";
    pattern[t] = "E2";
    Rule::new(["r1", "r2"][rng.random_range(0..2)], &pattern).unwrap()
}
