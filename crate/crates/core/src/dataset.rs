//! Bag/instance records, the line-delimited dataset file, and bag-level splits.
//!
//! File layout: a first comment line `# {meta json}` carrying the dimensions and
//! relation vocabulary, then one JSON object per bag.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the "no relation" class.
pub const NA_RELATION: &str = "NA";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub e1_pos: usize,
    pub e2_pos: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_select: Option<bool>,
}

impl Instance {
    pub fn new(tokens: Vec<String>, e1_pos: usize, e2_pos: usize) -> Self {
        Instance {
            tokens,
            e1_pos,
            e2_pos,
            repr: None,
            gold_select: None,
        }
    }

    /// Entity positions distinct and inside the token list.
    pub fn positions_valid(&self) -> bool {
        self.e1_pos != self.e2_pos && self.e1_pos < self.tokens.len() && self.e2_pos < self.tokens.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub bag_id: String,
    pub e1: String,
    pub e2: String,
    pub relation: String,
    pub e1_emb: Vec<f64>,
    pub e2_emb: Vec<f64>,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d_s: usize,
    pub d_e: usize,
    pub n_r: usize,
    pub relations: Vec<String>,
}

impl DatasetMeta {
    pub fn new(d_s: usize, d_e: usize, relations: Vec<String>) -> Self {
        DatasetMeta {
            d_s,
            d_e,
            n_r: relations.len(),
            relations,
        }
    }

    pub fn relation_index(&self, name: &str) -> Result<usize> {
        self.relations
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_owned()))
    }

    pub fn na_index(&self) -> Option<usize> {
        self.relations.iter().position(|r| r == NA_RELATION)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub bags: Vec<Bag>,
}

impl Dataset {
    pub fn instance_count(&self) -> usize {
        self.bags.iter().map(|b| b.instances.len()).sum()
    }

    /// Per-bag gold selection flags as stored (synthetic data only).
    pub fn gold_flags(&self) -> Vec<Vec<Option<bool>>> {
        self.bags
            .iter()
            .map(|b| b.instances.iter().map(|i| i.gold_select).collect())
            .collect()
    }

    pub fn has_gold(&self) -> bool {
        self.bags
            .iter()
            .flat_map(|b| &b.instances)
            .all(|i| i.gold_select.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.n_r != m.relations.len() {
            return Err(Error::Validation(format!(
                "header n_r = {} but {} relations listed",
                m.n_r,
                m.relations.len()
            )));
        }
        for bag in &self.bags {
            validate_bag(m, bag).map_err(|e| Error::Validation(format!("bag {}: {e}", bag.bag_id)))?;
        }
        Ok(())
    }
}

fn validate_bag(m: &DatasetMeta, bag: &Bag) -> std::result::Result<(), String> {
    if !m.relations.contains(&bag.relation) {
        return Err(format!("relation `{}` not in vocabulary", bag.relation));
    }
    if bag.e1_emb.len() != m.d_e || bag.e2_emb.len() != m.d_e {
        return Err(format!(
            "entity embeddings have dimensions {}/{}, expected {}",
            bag.e1_emb.len(),
            bag.e2_emb.len(),
            m.d_e
        ));
    }
    for (i, inst) in bag.instances.iter().enumerate() {
        if !inst.positions_valid() {
            return Err(format!("instance {i}: invalid entity positions"));
        }
        if let Some(r) = &inst.repr {
            if r.len() != m.d_s {
                return Err(format!("instance {i}: repr dimension {} != {}", r.len(), m.d_s));
            }
        }
    }
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# {}", serde_json::to_string(&dataset.meta)?).map_err(io)?;
    for bag in &dataset.bags {
        serde_json::to_writer(&mut w, bag)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut meta: Option<DatasetMeta> = None;
    let mut bags = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            if meta.is_none() && bags.is_empty() {
                meta =
                    Some(serde_json::from_str(header.trim()).map_err(|e| parse_err(lineno, format!("header: {e}")))?);
            }
            continue;
        }
        let Some(m) = meta.as_ref() else {
            return Err(parse_err(lineno, "missing `# {meta}` header line".into()));
        };
        let bag: Bag = serde_json::from_str(trimmed).map_err(|e| parse_err(lineno, e.to_string()))?;
        validate_bag(m, &bag).map_err(|msg| Error::Validation(format!("line {lineno}: {msg}")))?;
        bags.push(bag);
    }
    let meta = meta.ok_or_else(|| parse_err(1, "missing `# {meta}` header line".into()))?;
    let dataset = Dataset { meta, bags };
    dataset.validate()?;
    Ok(dataset)
}

/// Seeded shuffle, then cut by bag. Returns `(train, test)`.
pub fn split(bags: &[Bag], train_fraction: f64, seed: u64) -> Result<(Vec<Bag>, Vec<Bag>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * bags.len() as f64).round() as usize;
    if n_train == 0 || n_train == bags.len() {
        return Err(Error::Argument(format!(
            "fraction {train_fraction} of {} bags leaves one side empty",
            bags.len()
        )));
    }
    let mut order: Vec<usize> = (0..bags.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = order.split_at(n_train);
    let pick = |ix: &[usize]| ix.iter().map(|&i| bags[i].clone()).collect();
    Ok((pick(a), pick(b)))
}

/// Entity → embedding lookup assembled from the bags' own embeddings.
#[derive(Clone, Debug, Default)]
pub struct EntityTable {
    embeddings: HashMap<String, Vec<f64>>,
}

impl EntityTable {
    pub fn from_bags(bags: &[Bag]) -> Self {
        let mut embeddings = HashMap::new();
        for b in bags {
            embeddings.entry(b.e1.clone()).or_insert_with(|| b.e1_emb.clone());
            embeddings.entry(b.e2.clone()).or_insert_with(|| b.e2_emb.clone());
        }
        EntityTable { embeddings }
    }

    pub fn insert(&mut self, entity: impl Into<String>, embedding: Vec<f64>) {
        self.embeddings.insert(entity.into(), embedding);
    }

    pub fn get(&self, entity: &str) -> Result<&[f64]> {
        self.embeddings
            .get(entity)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEntity(entity.to_owned()))
    }
}
