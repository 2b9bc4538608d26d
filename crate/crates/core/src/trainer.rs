//! Joint training of the selection agent and the bag classifier.
//!
//! Per episode, every bag is walked instance by instance. The delayed policy
//! picks keep/discard (rule-matched candidates use the boosted policy in `pr`
//! mode), the delayed classifier scores the cleaned bag, that single terminal
//! reward is given to every step, and the live policy takes one REINFORCE step
//! per bag. After the sweep the delayed policy tracks the live one with rate
//! `tau`, the classifier takes one full-batch step on the cleaned bags and its
//! delayed copy is refreshed.
//!
//! The trainer only sees [`TrainingBag`]s, which carry no gold labels.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    bag_representation, classifier_train_step, log_likelihood, predict_proba, scores, ClassifierParams,
};
use crate::dataset::{Dataset, EntityTable, NA_RELATION};
use crate::encoder::{build_state, encode_instance, relation_embedding, state_dim, EncoderConfig, ENTITY_DIM};
use crate::error::{Error, Result};
use crate::eval::{episodes_to_threshold, pr_auc, pr_curve, selection_metrics, Prediction, RunMetrics};
use crate::policy::{
    action_distribution, pr_transform, reinforce_update, sample_action, soft_update, softmax_score_gradient,
    PolicyParams, TrajectoryStep, SELECT,
};
use crate::rules::{in_matched_set, RuleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rule-regularized behavior policy on matched candidates.
    Pr,
    /// Plain REINFORCE.
    Vanilla,
    /// No selection: the classifier trains on full bags.
    NoSelect,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pr => "pr",
            Mode::Vanilla => "vanilla",
            Mode::NoSelect => "noselect",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pr" => Ok(Mode::Pr),
            "vanilla" => Ok(Mode::Vanilla),
            "noselect" => Ok(Mode::NoSelect),
            other => Err(Error::Config(format!("unknown mode `{other}` (pr|vanilla|noselect)"))),
        }
    }
}

/// Which log-probability a rule-boosted step is differentiated through.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrGradient {
    /// `∇ log π` of the base policy, whichever policy sampled the action.
    /// With non-positive rewards this drives matched candidates toward discard.
    Base,
    /// `∇ log π_r` on boosted steps (on-policy for the behavior policy).
    #[default]
    Boosted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub lr_policy: f64,
    pub lr_classifier: f64,
    pub tau: f64,
    pub pretrain_steps: usize,
    pub mode: Mode,
    pub pr_gradient: PrGradient,
    pub seed: u64,
    pub d_e: usize,
    /// `d_s` here must agree with the dataset header when set; the header wins otherwise.
    pub d_s: Option<usize>,
    pub hash_seed: u64,
    pub reward_threshold: Option<f64>,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 200,
            lr_policy: 0.01,
            lr_classifier: 0.01,
            tau: 0.005,
            pretrain_steps: 50,
            mode: Mode::Pr,
            pr_gradient: PrGradient::Boosted,
            seed: 0,
            d_e: ENTITY_DIM,
            d_s: None,
            hash_seed: 0,
            reward_threshold: None,
            window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_policy >= 0.0 && self.lr_policy.is_finite()) {
            return bad(format!("lr_policy = {}", self.lr_policy));
        }
        if !(self.lr_classifier >= 0.0 && self.lr_classifier.is_finite()) {
            return bad(format!("lr_classifier = {}", self.lr_classifier));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau = {} not in (0, 1]", self.tau));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        Ok(())
    }

    fn encoder(&self, d_s: usize) -> EncoderConfig {
        EncoderConfig {
            d_s,
            hash_seed: self.hash_seed,
        }
    }
}

/// A bag as the trainer sees it: encoded instances, relation embedding and
/// rule-match flags. No gold selection labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBag {
    pub bag_id: String,
    pub relation: usize,
    pub reprs: Vec<Vec<f64>>,
    pub relation_embedding: Vec<f64>,
    pub rule_matched: Vec<bool>,
}

impl TrainingBag {
    pub fn len(&self) -> usize {
        self.reprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reprs.is_empty()
    }

    pub fn selected(&self, chosen: &[usize]) -> Vec<&[f64]> {
        chosen.iter().map(|&i| self.reprs[i].as_slice()).collect()
    }

    pub fn all(&self) -> Vec<&[f64]> {
        self.reprs.iter().map(Vec::as_slice).collect()
    }
}

pub fn prepare_bags(dataset: &Dataset, rules: &RuleSet, encoder: &EncoderConfig) -> Result<Vec<TrainingBag>> {
    let table = EntityTable::from_bags(&dataset.bags);
    dataset
        .bags
        .iter()
        .map(|bag| {
            let reprs = bag
                .instances
                .iter()
                .map(|x| encode_instance(x, encoder))
                .collect::<Result<Vec<_>>>()?;
            Ok(TrainingBag {
                bag_id: bag.bag_id.clone(),
                relation: dataset.meta.relation_index(&bag.relation)?,
                relation_embedding: relation_embedding(&bag.e1, &bag.e2, &table)?,
                rule_matched: bag
                    .instances
                    .iter()
                    .map(|x| in_matched_set(rules, x, &bag.relation))
                    .collect(),
                reprs,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    pub chosen: Vec<usize>,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Walk one bag with `policy`, sampling keep/discard for each instance in
/// stored order. The recorded gradients are taken at `policy` as well.
pub fn select_bag(
    bag: &TrainingBag,
    policy: &PolicyParams,
    mode: Mode,
    pr_gradient: PrGradient,
    rng: &mut ChaCha8Rng,
) -> Result<Selection> {
    if bag.is_empty() {
        warn!("bag {} has no instances; skipped", bag.bag_id);
        return Ok(Selection::default());
    }
    if mode == Mode::NoSelect {
        return Ok(Selection {
            chosen: (0..bag.len()).collect(),
            trajectory: Vec::new(),
        });
    }
    let mut chosen = Vec::new();
    let mut trajectory = Vec::with_capacity(bag.len());
    for (i, candidate) in bag.reprs.iter().enumerate() {
        let selected = bag.selected(&chosen);
        let state = build_state(&selected, candidate, &bag.relation_embedding)?.to_flat();
        let base = action_distribution(&state, policy)?;
        let used_pr = mode == Mode::Pr && bag.rule_matched[i];
        let dist = if used_pr { pr_transform(base) } else { base };
        let action = sample_action(&dist, rng);
        if action == SELECT {
            chosen.push(i);
        }
        let log_prob_grad = match pr_gradient {
            PrGradient::Boosted if used_pr => softmax_score_gradient(&state, action, &dist),
            _ => softmax_score_gradient(&state, action, &base),
        };
        trajectory.push(TrajectoryStep {
            log_prob_grad,
            behavior_prob: dist.prob(action),
            state,
            action,
            used_pr,
        });
    }
    Ok(Selection { chosen, trajectory })
}

/// Deterministic selection: keep each candidate the base policy more likely
/// selects than discards.
pub fn greedy_select(bag: &TrainingBag, policy: &PolicyParams) -> Result<Vec<usize>> {
    let mut chosen = Vec::new();
    for (i, candidate) in bag.reprs.iter().enumerate() {
        let state = build_state(&bag.selected(&chosen), candidate, &bag.relation_embedding)?.to_flat();
        if action_distribution(&state, policy)?.p_select >= 0.5 {
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// `log P(relation | cleaned bag)` under the given classifier.
pub fn terminal_reward(chosen: &[usize], bag: &TrainingBag, classifier: &ClassifierParams) -> Result<f64> {
    if let Some(&bad) = chosen.iter().find(|&&i| i >= bag.len()) {
        return Err(Error::Argument(format!(
            "index {bad} out of range for bag {}",
            bag.bag_id
        )));
    }
    log_likelihood(&bag.selected(chosen), bag.relation, classifier)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub policy_live: PolicyParams,
    pub policy_delayed: PolicyParams,
    pub classifier_live: ClassifierParams,
    pub classifier_delayed: ClassifierParams,
    pub episode: usize,
    pub rng: ChaCha8Rng,
}

impl TrainerState {
    /// Zero parameters everywhere; delayed copies equal to live ones.
    pub fn new(d_s: usize, d_e: usize, n_r: usize, seed: u64) -> Self {
        let policy = PolicyParams::zeros(state_dim(d_s, d_e));
        let classifier = ClassifierParams::zeros(n_r, d_s);
        TrainerState {
            policy_live: policy.clone(),
            policy_delayed: policy,
            classifier_live: classifier.clone(),
            classifier_delayed: classifier,
            episode: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    pub selection_rate: f64,
    pub matched_selection_rate: f64,
    /// Only when the dataset carries gold selection labels.
    pub selection_f1: Option<f64>,
}

/// What happened to each bag in one episode, in dataset order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTrace {
    pub selections: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    /// Per-step rewards as handed to the update (all equal to the bag's reward).
    pub step_rewards: Vec<Vec<f64>>,
    pub used_pr: Vec<Vec<bool>>,
    pub behavior_probs: Vec<Vec<f64>>,
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One sweep over `bags`. Updates `state` in place.
pub fn run_episode(
    bags: &[TrainingBag],
    state: &mut TrainerState,
    config: &TrainConfig,
) -> Result<(EpisodeStats, EpisodeTrace)> {
    if bags.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let mut trace = EpisodeTrace::default();
    let (mut decisions, mut kept) = (0usize, 0usize);
    let (mut matched, mut matched_kept) = (0usize, 0usize);
    let mut reward_sum = 0.0;
    let mut rewarded = 0usize;

    for bag in bags {
        let sel = select_bag(
            bag,
            &state.policy_delayed,
            config.mode,
            config.pr_gradient,
            &mut state.rng,
        )?;
        let mut used = Vec::new();
        let mut probs = Vec::new();
        let mut step_rewards = Vec::new();
        if !bag.is_empty() {
            let reward = terminal_reward(&sel.chosen, bag, &state.classifier_delayed)?;
            step_rewards = vec![reward; sel.trajectory.len()];
            state.policy_live = reinforce_update(&state.policy_live, &sel.trajectory, &step_rewards, config.lr_policy)?;
            reward_sum += reward;
            rewarded += 1;
            trace.rewards.push(reward);

            decisions += bag.len();
            kept += sel.chosen.len();
            matched += bag.rule_matched.iter().filter(|&&m| m).count();
            matched_kept += sel.chosen.iter().filter(|&&i| bag.rule_matched[i]).count();
            used = sel.trajectory.iter().map(|s| s.used_pr).collect();
            probs = sel.trajectory.iter().map(|s| s.behavior_prob).collect();
        } else {
            trace.rewards.push(f64::NAN);
        }
        trace.selections.push(sel.chosen);
        trace.step_rewards.push(step_rewards);
        trace.used_pr.push(used);
        trace.behavior_probs.push(probs);
    }

    state.policy_delayed = soft_update(&state.policy_live, &state.policy_delayed, config.tau)?;

    let batch: Vec<(Vec<&[f64]>, usize)> = bags
        .iter()
        .zip(&trace.selections)
        .filter(|(b, _)| !b.is_empty())
        .map(|(b, chosen)| (b.selected(chosen), b.relation))
        .collect();
    if !batch.is_empty() {
        state.classifier_live = classifier_train_step(&batch, &state.classifier_live, config.lr_classifier)?;
    }
    state.classifier_delayed = state.classifier_live.clone();

    let stats = EpisodeStats {
        episode: state.episode,
        mean_reward: if rewarded == 0 {
            0.0
        } else {
            reward_sum / rewarded as f64
        },
        selection_rate: rate(kept, decisions),
        matched_selection_rate: rate(matched_kept, matched),
        selection_f1: None,
    };
    state.episode += 1;
    Ok((stats, trace))
}

/// Full-batch classifier steps on the unselected bags.
pub fn pretrain_classifier(
    bags: &[TrainingBag],
    params: &ClassifierParams,
    steps: usize,
    lr: f64,
) -> Result<ClassifierParams> {
    let batch: Vec<(Vec<&[f64]>, usize)> = bags
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| (b.all(), b.relation))
        .collect();
    let mut p = params.clone();
    if batch.is_empty() {
        return Ok(p);
    }
    for _ in 0..steps {
        p = classifier_train_step(&batch, &p, lr)?;
    }
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainerState,
    pub episodes: Vec<EpisodeStats>,
    pub final_selections: Vec<Vec<usize>>,
    pub episodes_to_threshold: Option<usize>,
}

fn check_dataset(dataset: &Dataset, config: &TrainConfig) -> Result<usize> {
    let m = &dataset.meta;
    if let Some(d_s) = config.d_s {
        if d_s != m.d_s {
            return Err(Error::Config(format!(
                "config d_s = {d_s} but dataset header says {}",
                m.d_s
            )));
        }
    }
    if m.d_e != config.d_e {
        return Err(Error::Config(format!(
            "entity-embedding dimension {} in dataset, {} configured",
            m.d_e, config.d_e
        )));
    }
    Ok(m.d_s)
}

/// Pretrain the classifier, then run `config.episodes` episodes.
pub fn train(dataset: &Dataset, rules: &RuleSet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(dataset, rules, config, |_, _| {})
}

/// As [`train`], calling `observe` after each episode.
pub fn train_observed(
    dataset: &Dataset,
    rules: &RuleSet,
    config: &TrainConfig,
    mut observe: impl FnMut(&EpisodeStats, &EpisodeTrace),
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.mode == Mode::Pr && rules.is_empty() {
        return Err(Error::Config("mode `pr` needs a non-empty rule set".into()));
    }
    rules.check_vocabulary(&dataset.meta.relations)?;
    let d_s = check_dataset(dataset, config)?;
    if dataset.bags.is_empty() && config.episodes > 0 {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }

    let bags = prepare_bags(dataset, rules, &config.encoder(d_s))?;
    let gold = dataset.gold_flags();
    let has_gold = dataset.has_gold();

    let mut state = TrainerState::new(d_s, config.d_e, dataset.meta.n_r, config.seed);
    if config.episodes == 0 {
        return Ok(TrainOutcome {
            state,
            episodes: Vec::new(),
            final_selections: Vec::new(),
            episodes_to_threshold: None,
        });
    }
    state.classifier_live = pretrain_classifier(
        &bags,
        &state.classifier_live,
        config.pretrain_steps,
        config.lr_classifier,
    )?;
    state.classifier_delayed = state.classifier_live.clone();
    info!(
        "training {} bags, mode {}, {} episodes, seed {}",
        bags.len(),
        config.mode,
        config.episodes,
        config.seed
    );

    let mut episodes = Vec::with_capacity(config.episodes);
    let mut final_selections = Vec::new();
    for _ in 0..config.episodes {
        let (mut stats, trace) = run_episode(&bags, &mut state, config)?;
        if has_gold {
            stats.selection_f1 = Some(selection_metrics(&trace.selections, &gold)?.f1);
        }
        debug!(
            "episode {}: reward {:.5} selected {:.3} matched-selected {:.3}",
            stats.episode, stats.mean_reward, stats.selection_rate, stats.matched_selection_rate
        );
        observe(&stats, &trace);
        final_selections = trace.selections;
        episodes.push(stats);
    }
    let trace: Vec<f64> = episodes.iter().map(|e| e.mean_reward).collect();
    let reached = config
        .reward_threshold
        .and_then(|t| episodes_to_threshold(&trace, t, config.window));
    Ok(TrainOutcome {
        state,
        episodes,
        final_selections,
        episodes_to_threshold: reached,
    })
}

/// Per-(bag, relation) confidences for every non-NA relation, on full bags.
pub fn classifier_predictions(
    bags: &[TrainingBag],
    classifier: &ClassifierParams,
    relations: &[String],
) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for bag in bags {
        let x = bag_representation(&bag.all(), classifier.d_s())?;
        let probs = predict_proba(&scores(&x, classifier)?);
        for (r, p) in probs.into_iter().enumerate() {
            if relations[r] != NA_RELATION {
                out.push(Prediction {
                    bag_id: bag.bag_id.clone(),
                    relation: relations[r].clone(),
                    confidence: p,
                });
            }
        }
    }
    Ok(out)
}

/// Non-NA `(bag_id, relation)` facts.
pub fn gold_facts(bags: &[TrainingBag], relations: &[String]) -> Vec<(String, String)> {
    bags.iter()
        .filter(|b| relations[b.relation] != NA_RELATION)
        .map(|b| (b.bag_id.clone(), relations[b.relation].clone()))
        .collect()
}

/// Ranked curve and its area for a classifier on a dataset.
pub fn evaluate_classifier(
    dataset: &Dataset,
    classifier: &ClassifierParams,
    hash_seed: u64,
) -> Result<(Vec<crate::eval::PRPoint>, f64)> {
    let enc = EncoderConfig {
        d_s: classifier.d_s(),
        hash_seed,
    };
    let bags = prepare_bags(dataset, &RuleSet::empty(), &enc)?;
    let preds = classifier_predictions(&bags, classifier, &dataset.meta.relations)?;
    let gold = gold_facts(&bags, &dataset.meta.relations);
    let curve = pr_curve(&preds, &gold)?;
    let auc = pr_auc(&curve);
    Ok((curve, auc))
}

/// Train, then evaluate the classifier on `holdout` (or on the training data).
pub fn train_and_evaluate(
    dataset: &Dataset,
    holdout: Option<&Dataset>,
    rules: &RuleSet,
    config: &TrainConfig,
) -> Result<(TrainOutcome, RunMetrics)> {
    let outcome = train(dataset, rules, config)?;
    let eval_set = holdout.unwrap_or(dataset);
    let (pr_curve, pr_auc) = evaluate_classifier(eval_set, &outcome.state.classifier_live, config.hash_seed)?;
    let metrics = RunMetrics {
        mode: config.mode.to_string(),
        seed: config.seed,
        episodes: outcome.episodes.clone(),
        episodes_to_threshold: outcome.episodes_to_threshold,
        pr_curve,
        pr_auc,
        selection_f1_final: outcome.episodes.last().and_then(|e| e.selection_f1).unwrap_or(0.0),
    };
    Ok((outcome, metrics))
}

/// `episode,mean_reward,selection_rate,matched_selection_rate,selection_f1`
pub fn metrics_csv(episodes: &[EpisodeStats]) -> String {
    let mut out = String::from("episode,mean_reward,selection_rate,matched_selection_rate,selection_f1\n");
    for e in episodes {
        let f1 = e.selection_f1.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.episode, e.mean_reward, e.selection_rate, e.matched_selection_rate, f1
        );
    }
    out
}

pub fn write_metrics_csv(episodes: &[EpisodeStats], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(episodes)).map_err(|e| Error::io(path, e))
}
