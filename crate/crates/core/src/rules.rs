//! Rule patterns and membership in the rule-matched instance set.
//!
//! A pattern is a token list containing exactly one `E1` and one `E2` slot.
//! An instance matches when the pattern occurs contiguously in its tokens with
//! the slots landing exactly on the instance's entity positions, and the rule's
//! relation equals the bag's label.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::Instance;
use crate::error::{Error, Result};

pub const HEAD_SLOT: &str = "E1";
pub const TAIL_SLOT: &str = "E2";
pub const RULES_FORMAT_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub relation: String,
    pub pattern: Vec<String>,
}

impl Rule {
    pub fn new(relation: impl Into<String>, pattern: &[&str]) -> Result<Self> {
        let rule = Rule {
            relation: relation.into(),
            pattern: pattern.iter().map(|t| (*t).to_owned()).collect(),
        };
        rule.validate()
            .map_err(|message| Error::RuleInvalid { index: 0, message })?;
        Ok(rule)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.relation.is_empty() {
            return Err("empty relation".into());
        }
        if self.pattern.len() < 2 {
            return Err(format!("pattern has {} tokens, need at least 2", self.pattern.len()));
        }
        for slot in [HEAD_SLOT, TAIL_SLOT] {
            let n = self.pattern.iter().filter(|t| *t == slot).count();
            if n != 1 {
                return Err(format!("pattern must contain exactly one `{slot}`, found {n}"));
            }
        }
        Ok(())
    }

    fn slot_offsets(&self) -> (usize, usize) {
        let find = |slot| self.pattern.iter().position(|t| t == slot).unwrap();
        (find(HEAD_SLOT), find(TAIL_SLOT))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: String,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet {
            version: RULES_FORMAT_VERSION.to_owned(),
            rules,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Check every rule's relation against a relation vocabulary.
    pub fn check_vocabulary(&self, relations: &[String]) -> Result<()> {
        for (index, r) in self.rules.iter().enumerate() {
            if !relations.contains(&r.relation) {
                return Err(Error::RuleInvalid {
                    index,
                    message: format!("relation `{}` not in vocabulary", r.relation),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Parse and validate a rules document.
pub fn compile_rules(document: &str) -> Result<RuleSet> {
    let root: Value = serde_json::from_str(document).map_err(|e| Error::RulesParse(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::RulesParse("top level must be an object".into()))?;
    let version = match obj.get("version") {
        Some(Value::String(v)) => v.clone(),
        Some(_) => return Err(Error::RulesParse("`version` must be a string".into())),
        None => return Err(Error::RulesParse("missing `version`".into())),
    };
    let items = obj
        .get("rules")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::RulesParse("missing `rules` array".into()))?;

    let mut rules = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let rule: Rule = serde_json::from_value(item.clone()).map_err(|e| Error::RuleInvalid {
            index,
            message: format!("malformed rule: {e}"),
        })?;
        rule.validate()
            .map_err(|message| Error::RuleInvalid { index, message })?;
        rules.push(rule);
    }
    Ok(RuleSet { version, rules })
}

pub fn rule_matches(rule: &Rule, instance: &Instance, bag_relation: &str) -> bool {
    if rule.relation != bag_relation {
        return false;
    }
    let (head_off, tail_off) = rule.slot_offsets();
    // The head slot pins the start offset.
    let Some(start) = instance.e1_pos.checked_sub(head_off) else {
        return false;
    };
    if start + tail_off != instance.e2_pos || start + rule.pattern.len() > instance.tokens.len() {
        return false;
    }
    rule.pattern
        .iter()
        .zip(&instance.tokens[start..])
        .all(|(p, tok)| p == HEAD_SLOT || p == TAIL_SLOT || p == tok)
}

pub fn in_matched_set(rule_set: &RuleSet, instance: &Instance, bag_relation: &str) -> bool {
    rule_set.rules.iter().any(|r| rule_matches(r, instance, bag_relation))
}
