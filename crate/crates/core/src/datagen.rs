//! Synthetic distant-supervision corpora with known selection labels.
//!
//! Every bag draws a relation, an entity pair whose embeddings satisfy
//! `tail ≈ head + ρ_relation`, and a list of instances. A TRUE instance's
//! feature vector is its bag relation's prototype plus Gaussian noise; a NOISE
//! instance borrows some other relation's prototype. Rule patterns are planted
//! only in TRUE instances of non-NA bags, in exactly as many instances as the
//! requested coverage asks for.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Bag, Dataset, DatasetMeta, Instance, NA_RELATION};
use crate::encoder::ENTITY_DIM;
use crate::error::{Error, Result};
use crate::rules::{Rule, RuleSet, HEAD_SLOT, TAIL_SLOT};

const MIN_TOKENS: usize = 6;
const MAX_TOKENS: usize = 12;
const KEYWORDS_PER_RULE: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Relation vocabulary size, NA included.
    pub n_relations: usize,
    pub n_bags: usize,
    pub min_bag_size: usize,
    pub max_bag_size: usize,
    pub noise_rate: f64,
    pub rule_coverage: f64,
    pub vocab_size: usize,
    pub d_s: usize,
    pub d_e: usize,
    /// Norm of the feature prototypes (approximately).
    pub proto_scale: f64,
    /// Per-coordinate standard deviation of instance features around a prototype.
    pub feature_noise: f64,
    /// Per-coordinate standard deviation of the relation translation vectors ρ.
    pub relation_scale: f64,
    /// Per-coordinate standard deviation of the translation residual `tail − head − ρ`.
    pub embedding_noise: f64,
    /// Probability that a NOISE instance in a non-NA bag borrows the NA
    /// prototype; otherwise another non-NA relation is drawn uniformly.
    pub na_noise_share: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_relations: 4,
            n_bags: 200,
            min_bag_size: 4,
            max_bag_size: 8,
            noise_rate: 0.4,
            rule_coverage: 0.04,
            vocab_size: 500,
            d_s: 64,
            d_e: ENTITY_DIM,
            proto_scale: 3.0,
            feature_noise: 0.5,
            relation_scale: 1.0,
            embedding_noise: 0.1,
            na_noise_share: 0.5,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_relations < 2 {
            return bad(format!(
                "n_relations = {} (need NA plus at least one relation)",
                self.n_relations
            ));
        }
        if self.n_bags == 0 || self.min_bag_size == 0 || self.max_bag_size < self.min_bag_size {
            return bad(format!(
                "need n_bags > 0 and 1 <= min_bag_size <= max_bag_size (got {}, {}..{})",
                self.n_bags, self.min_bag_size, self.max_bag_size
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} not in [0,1)", self.noise_rate));
        }
        if !(0.0..=1.0).contains(&self.rule_coverage) {
            return bad(format!("rule_coverage {} not in [0,1]", self.rule_coverage));
        }
        if !(0.0..=1.0).contains(&self.na_noise_share) {
            return bad(format!("na_noise_share {} not in [0,1]", self.na_noise_share));
        }
        if self.vocab_size == 0 || self.d_s == 0 || self.d_e == 0 {
            return bad("vocab_size, d_s and d_e must be positive".into());
        }
        for (name, v) in [
            ("proto_scale", self.proto_scale),
            ("feature_noise", self.feature_noise),
            ("relation_scale", self.relation_scale),
            ("embedding_noise", self.embedding_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v}"));
            }
        }
        // Only TRUE instances of non-NA bags can carry a pattern.
        let reachable = (1.0 - self.noise_rate) * (self.n_relations - 1) as f64 / self.n_relations as f64;
        if self.rule_coverage > reachable {
            return bad(format!(
                "rule_coverage {} exceeds the expected plantable fraction {reachable:.3}",
                self.rule_coverage
            ));
        }
        Ok(())
    }

    pub fn relation_names(&self) -> Vec<String> {
        std::iter::once(NA_RELATION.to_owned())
            .chain((1..self.n_relations).map(|r| format!("r{r}")))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub n_bags: usize,
    pub n_instances: usize,
    pub n_noise: usize,
    pub n_rule_matched: usize,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: Dataset,
    pub rules: RuleSet,
    pub summary: GenSummary,
    /// The translation vector ρ of each relation (`tail ≈ head + ρ`).
    pub relation_prototypes: Vec<Vec<f64>>,
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn keyword(relation: usize, k: usize) -> String {
    format!("kw{relation}_{k}")
}

pub fn rule_for_relation(relation: usize, name: &str) -> Rule {
    let mut pattern = vec![HEAD_SLOT.to_owned()];
    pattern.extend((0..KEYWORDS_PER_RULE).map(|k| keyword(relation, k)));
    pattern.push(TAIL_SLOT.to_owned());
    Rule {
        relation: name.to_owned(),
        pattern,
    }
}

/// Relation whose prototype a NOISE instance of a relation-`r` bag borrows.
/// Relation 0 is NA.
fn noise_source(rng: &mut impl Rng, r: usize, n_r: usize, na_share: f64) -> usize {
    if r != 0 && (n_r == 2 || rng.random_bool(na_share)) {
        return 0;
    }
    // uniform over the other non-NA relations (all non-NA ones for an NA bag)
    let others: Vec<usize> = (1..n_r).filter(|&o| o != r).collect();
    others[rng.random_range(0..others.len())]
}

struct BagPlan {
    rng: ChaCha8Rng,
    relation: usize,
    truth: Vec<bool>,
}

pub fn generate(config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    let n_r = config.n_relations;
    let relations = config.relation_names();
    let mut global = ChaCha8Rng::seed_from_u64(config.seed);

    let feature_protos: Vec<Vec<f64>> = (0..n_r)
        .map(|_| gaussian_vec(&mut global, config.d_s, config.proto_scale / (config.d_s as f64).sqrt()))
        .collect();
    let relation_protos: Vec<Vec<f64>> = (0..n_r)
        .map(|_| gaussian_vec(&mut global, config.d_e, config.relation_scale))
        .collect();

    // Structure: relation, bag size, TRUE/NOISE flags. One stream per bag.
    let mut plans: Vec<BagPlan> = (0..config.n_bags)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64 + 1);
            let relation = rng.random_range(0..n_r);
            let size = rng.random_range(config.min_bag_size..=config.max_bag_size);
            let mut truth: Vec<bool> = (0..size).map(|_| !rng.random_bool(config.noise_rate)).collect();
            if !truth.iter().any(|&t| t) {
                let keep = rng.random_range(0..size);
                truth[keep] = true;
            }
            BagPlan { rng, relation, truth }
        })
        .collect();

    // Choose exactly round(coverage · total) TRUE non-NA instances for patterns.
    let total: usize = plans.iter().map(|p| p.truth.len()).sum();
    let mut eligible: Vec<(usize, usize)> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| relations[p.relation] != NA_RELATION)
        .flat_map(|(k, p)| {
            p.truth
                .iter()
                .enumerate()
                .filter(|(_, t)| **t)
                .map(move |(i, _)| (k, i))
        })
        .collect();
    let target = (config.rule_coverage * total as f64).round() as usize;
    if target > eligible.len() {
        return Err(Error::Config(format!(
            "rule_coverage {} needs {target} patterned instances but only {} TRUE non-NA instances exist",
            config.rule_coverage,
            eligible.len()
        )));
    }
    eligible.shuffle(&mut global);
    let mut planted: Vec<Vec<bool>> = plans.iter().map(|p| vec![false; p.truth.len()]).collect();
    for &(k, i) in &eligible[..target] {
        planted[k][i] = true;
    }

    let mut bags = Vec::with_capacity(config.n_bags);
    let mut n_noise = 0;
    for (k, plan) in plans.iter_mut().enumerate() {
        let rng = &mut plan.rng;
        let r = plan.relation;
        let head = format!("ent{}", 2 * k);
        let tail = format!("ent{}", 2 * k + 1);
        let e1_emb = gaussian_vec(rng, config.d_e, 1.0);
        let residual = gaussian_vec(rng, config.d_e, config.embedding_noise);
        let e2_emb: Vec<f64> = e1_emb
            .iter()
            .zip(&relation_protos[r])
            .zip(&residual)
            .map(|((h, rho), eps)| h + rho + eps)
            .collect();

        let mut instances = Vec::with_capacity(plan.truth.len());
        for (i, &is_true) in plan.truth.iter().enumerate() {
            let source = if is_true {
                r
            } else {
                n_noise += 1;
                noise_source(rng, r, n_r, config.na_noise_share)
            };
            let len = rng.random_range(MIN_TOKENS..=MAX_TOKENS);
            let mut tokens: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.random_range(0..config.vocab_size)))
                .collect();
            let (e1_pos, e2_pos) = if planted[k][i] {
                let width = KEYWORDS_PER_RULE + 2;
                let start = rng.random_range(0..=len - width);
                for kw in 0..KEYWORDS_PER_RULE {
                    tokens[start + 1 + kw] = keyword(r, kw);
                }
                (start, start + width - 1)
            } else {
                let a = rng.random_range(0..len);
                let b = (a + rng.random_range(1..len)) % len;
                (a, b)
            };
            tokens[e1_pos] = head.clone();
            tokens[e2_pos] = tail.clone();

            let noise = gaussian_vec(rng, config.d_s, config.feature_noise);
            let repr = feature_protos[source].iter().zip(noise).map(|(p, e)| p + e).collect();
            instances.push(Instance {
                tokens,
                e1_pos,
                e2_pos,
                repr: Some(repr),
                gold_select: Some(is_true),
            });
        }
        bags.push(Bag {
            bag_id: format!("bag{k:06}"),
            e1: head,
            e2: tail,
            relation: relations[r].clone(),
            e1_emb,
            e2_emb,
            instances,
        });
    }

    let rules = RuleSet::new((1..n_r).map(|r| rule_for_relation(r, &relations[r])).collect());
    let summary = GenSummary {
        n_bags: bags.len(),
        n_instances: total,
        n_noise,
        n_rule_matched: target,
    };
    Ok(Generated {
        dataset: Dataset {
            meta: DatasetMeta::new(config.d_s, config.d_e, relations),
            bags,
        },
        rules,
        summary,
        relation_prototypes: relation_protos,
    })
}
