//! Binyan pools harvested from Hebrew treebanks.
//!
//! Matching is the single-node pattern `X [HebBinyan = "<value>"]`,
//! optionally restricted to the root verb.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::conllu::ConlluSentence;
use crate::model::{BinyanLabel, ModelError};

pub const BINYAN_FEATURE: &str = "HebBinyan";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Any syntactic word carrying the feature.
    #[default]
    Any,
    /// Only the word attached with `root`.
    Root,
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "any" => Ok(Scope::Any),
            "root" => Ok(Scope::Root),
            other => Err(format!("unknown scope {other:?} (expected any|root)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PoolEntry {
    pub text: String,
    pub verb: String,
    pub source: String,
    pub sent_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolLine {
    binyan: BinyanLabel,
    text: String,
    verb: String,
    source: String,
    sent_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinyanPool {
    entries: BTreeMap<BinyanLabel, Vec<PoolEntry>>,
}

impl BinyanPool {
    pub fn new() -> Self {
        BinyanPool { entries: BinyanLabel::ALL.iter().map(|b| (*b, Vec::new())).collect() }
    }

    pub fn push(&mut self, binyan: BinyanLabel, entry: PoolEntry) {
        self.entries.entry(binyan).or_default().push(entry);
    }

    pub fn get(&self, binyan: BinyanLabel) -> &[PoolEntry] {
        self.entries.get(&binyan).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sizes(&self) -> BTreeMap<BinyanLabel, usize> {
        BinyanLabel::ALL.iter().map(|b| (*b, self.get(*b).len())).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (BinyanLabel, &PoolEntry)> {
        self.entries.iter().flat_map(|(b, es)| es.iter().map(move |e| (*b, e)))
    }

    /// Combines pools, orders entries by (source, sent_id) and keeps the
    /// first occurrence of each (text, verb) pair per binyan.
    pub fn merge<I: IntoIterator<Item = BinyanPool>>(pools: I) -> BinyanPool {
        let mut out = BinyanPool::new();
        for pool in pools {
            for (b, es) in pool.entries {
                out.entries.entry(b).or_default().extend(es);
            }
        }
        for es in out.entries.values_mut() {
            es.sort_by(|a, b| (&a.source, &a.sent_id).cmp(&(&b.source, &b.sent_id)));
            let mut seen = BTreeSet::new();
            es.retain(|e| seen.insert((e.text.clone(), e.verb.clone())));
        }
        out
    }

    /// Keeps only entries whose text passes `keep`.
    pub fn filter_text(&self, keep: impl Fn(&str) -> bool) -> BinyanPool {
        let mut out = BinyanPool::new();
        for (b, e) in self.iter() {
            if keep(&e.text) {
                out.push(b, e.clone());
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (binyan, e) in self.iter() {
            let line = PoolLine {
                binyan,
                text: e.text.clone(),
                verb: e.verb.clone(),
                source: e.source.clone(),
                sent_id: e.sent_id.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<BinyanPool, ModelError> {
        let mut pool = BinyanPool::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: PoolLine =
                serde_json::from_str(&line).map_err(|source| ModelError::Json { line: idx + 1, source })?;
            pool.push(l.binyan, PoolEntry { text: l.text, verb: l.verb, source: l.source, sent_id: l.sent_id });
        }
        Ok(pool)
    }
}

/// Pool plus the out-of-scope binyan values that were seen and dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Harvest {
    pub pool: BinyanPool,
    pub discarded: BTreeMap<String, usize>,
}

#[derive(Serialize)]
pub struct DiscardReport<'a> {
    pub scope: Scope,
    pub pooled: BTreeMap<BinyanLabel, usize>,
    pub discarded: &'a BTreeMap<String, usize>,
}

impl Harvest {
    pub fn merge<I: IntoIterator<Item = Harvest>>(harvests: I) -> Harvest {
        let mut discarded = BTreeMap::new();
        let mut pools = Vec::new();
        for h in harvests {
            for (k, n) in h.discarded {
                *discarded.entry(k).or_insert(0) += n;
            }
            pools.push(h.pool);
        }
        Harvest { pool: BinyanPool::merge(pools), discarded }
    }

    pub fn report(&self, scope: Scope) -> DiscardReport<'_> {
        DiscardReport { scope, pooled: self.pool.sizes(), discarded: &self.discarded }
    }
}

/// Collects (sentence, verb form) pairs per binyan. A sentence with k
/// matching words contributes k entries.
pub fn harvest_binyan(source: &str, sentences: &[ConlluSentence], scope: Scope) -> Harvest {
    let mut harvest = Harvest { pool: BinyanPool::new(), discarded: BTreeMap::new() };
    for s in sentences {
        for t in &s.tokens {
            if t.id.is_range() {
                continue;
            }
            let Some(value) = t.feat(BINYAN_FEATURE) else { continue };
            if scope == Scope::Root && t.deprel.as_deref() != Some("root") {
                continue;
            }
            match value.parse::<BinyanLabel>() {
                Ok(b) => harvest.pool.push(
                    b,
                    PoolEntry {
                        text: s.text.clone(),
                        verb: t.form.clone(),
                        source: source.to_string(),
                        sent_id: s.sent_id.clone(),
                    },
                ),
                Err(_) => *harvest.discarded.entry(value.to_string()).or_insert(0) += 1,
            }
        }
    }
    harvest
}

/// Replaces every sentence by its verb form alone.
pub fn synthetic_pool(pool: &BinyanPool) -> BinyanPool {
    let mut out = BinyanPool::new();
    for (b, e) in pool.iter() {
        out.push(b, PoolEntry { text: e.verb.clone(), ..e.clone() });
    }
    out
}
