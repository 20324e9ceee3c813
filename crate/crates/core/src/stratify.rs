//! Selection-bias removal by re-stratification: synthesize altered copies of
//! positive documents until every group reaches a common positive ratio.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label, Provenance};
use crate::error::{Error, Result};
use crate::schema::AttributeSchema;
use crate::text;

pub const DEFAULT_TARGET_RATIO: f64 = 0.5;
pub const DEFAULT_SUBSTITUTION_RATE: f64 = 0.3;
const MAX_ATTEMPTS: usize = 16;

const DEFAULT_SYNONYMS: &str = include_str!("../data/synonyms.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub group: String,
    pub positives: usize,
    pub total: usize,
    pub copies: usize,
}

impl GroupPlan {
    pub fn achieved_ratio(&self) -> f64 {
        (self.positives + self.copies) as f64 / (self.total + self.copies) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub attribute: String,
    pub target_ratio: f64,
    pub groups: Vec<GroupPlan>,
}

impl AugmentationPlan {
    pub fn total_copies(&self) -> usize {
        self.groups.iter().map(|g| g.copies).sum()
    }
}

/// Number of positive copies that lifts `positives / total` to `target`:
/// the smallest k with (positives + k) / (total + k) >= target.
pub fn copies_needed(positives: usize, total: usize, target: f64) -> usize {
    let exact = (target * total as f64 - positives as f64) / (1.0 - target);
    // guard against 80.00000000001 rounding up to 81
    (exact - 1e-9).ceil().max(0.0) as usize
}

/// Plans positive-only augmentation for every group of `schema`.
pub fn plan_stratification(corpus: &Corpus, schema: &AttributeSchema, target_ratio: f64) -> Result<AugmentationPlan> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target ratio must lie in (0, 1), got {target_ratio}"
        )));
    }
    let mut groups = Vec::with_capacity(schema.groups.len());
    for g in &schema.groups {
        let (total, positives) = corpus
            .in_group(&schema.name, &g.name)
            .fold((0, 0), |(n, p), d| (n + 1, p + usize::from(d.is_toxic())));
        if positives == 0 {
            return Err(Error::Infeasible {
                group: g.name.clone(),
                reason: format!("no positive documents among {total} to augment from"),
            });
        }
        let ratio = positives as f64 / total as f64;
        if ratio > target_ratio + 1e-12 {
            return Err(Error::Infeasible {
                group: g.name.clone(),
                reason: format!(
                    "positive ratio {ratio:.4} is already above the target {target_ratio}; reaching it would need deletions"
                ),
            });
        }
        groups.push(GroupPlan {
            group: g.name.clone(),
            positives,
            total,
            copies: copies_needed(positives, total, target_ratio),
        });
    }
    Ok(AugmentationPlan {
        attribute: schema.name.clone(),
        target_ratio,
        groups,
    })
}

/// Word substitution table: lowercase word -> replacement candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubstitutionTable(pub BTreeMap<String, Vec<String>>);

impl SubstitutionTable {
    /// Small bundled synonym table.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_SYNONYMS).expect("bundled synonyms are valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let table: SubstitutionTable = serde_json::from_str(json).map_err(|e| Error::json("substitution table", e))?;
        for (word, candidates) in &table.0 {
            if candidates.is_empty() {
                return Err(Error::InvalidValue(format!("no candidates for `{word}`")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn candidates(&self, word: &str) -> Option<&[String]> {
        self.0.get(word).map(Vec::as_slice)
    }
}

/// Substitution settings used when synthesizing positives.
#[derive(Debug, Clone)]
pub struct Substituter {
    pub table: SubstitutionTable,
    pub rate: f64,
    pub protected: HashSet<String>,
}

impl Substituter {
    pub fn new(table: SubstitutionTable, rate: f64, protected: HashSet<String>) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidArgument(format!("rate must lie in (0, 1], got {rate}")));
        }
        Ok(Substituter { table, rate, protected })
    }

    pub fn apply(&self, text: &str, seed: u64) -> String {
        substitute_words(text, &self.protected, &self.table, seed, self.rate)
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, token: &str, candidates: &'a [String]) -> &'a str {
    let different: Vec<&String> = candidates.iter().filter(|c| c.as_str() != token).collect();
    match different.choose(rng) {
        Some(c) => c.as_str(),
        None => candidates[0].as_str(),
    }
}

/// Replaces each eligible token (present in `table`, absent from
/// `protected`) with probability `rate`, redrawing up to 16 times until at
/// least one token changes and then forcing the first eligible token.
pub fn substitute_words(
    text: &str,
    protected: &HashSet<String>,
    table: &SubstitutionTable,
    seed: u64,
    rate: f64,
) -> String {
    let lowered = text::tokens(text);
    let eligible: Vec<usize> = lowered
        .iter()
        .enumerate()
        .filter(|(_, t)| !protected.contains(*t) && table.candidates(t).is_some())
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return text.to_string();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut chosen: HashMap<usize, String> = HashMap::new();
        for &i in &eligible {
            if rng.gen::<f64>() < rate {
                let word = pick(&mut rng, &lowered[i], table.candidates(&lowered[i]).unwrap());
                if word != lowered[i] {
                    chosen.insert(i, word.to_string());
                }
            }
        }
        if !chosen.is_empty() {
            return text::rewrite_tokens(text, |i, tok| chosen.get(&i).map(|w| text::match_case(tok, w)));
        }
    }
    let first = eligible[0];
    let word = pick(&mut rng, &lowered[first], table.candidates(&lowered[first]).unwrap()).to_string();
    text::rewrite_tokens(text, |i, tok| (i == first).then(|| text::match_case(tok, &word)))
}

/// Appends the planned synthetic positives.
///
/// For each group the copies cycle through the group's positives in corpus
/// order; the j-th copy of a group uses seed `seed + j`. New documents carry
/// augmented provenance and are appended after the originals.
pub fn apply_plan(corpus: &Corpus, plan: &AugmentationPlan, substituter: &Substituter, seed: u64) -> Result<Corpus> {
    let mut docs = corpus.documents().to_vec();
    let mut taken: HashSet<String> = docs.iter().map(|d| d.id.clone()).collect();
    for gp in &plan.groups {
        if gp.copies == 0 {
            continue;
        }
        let sources: Vec<&Document> = corpus
            .in_group(&plan.attribute, &gp.group)
            .filter(|d| d.is_toxic())
            .collect();
        if sources.is_empty() {
            return Err(Error::Infeasible {
                group: gp.group.clone(),
                reason: "no positive documents to augment from".into(),
            });
        }
        for j in 0..gp.copies {
            let src = sources[j % sources.len()];
            let mut n = j / sources.len();
            let id = loop {
                let candidate = format!("{}+aug{n}", src.id);
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
                n += 1;
            };
            docs.push(Document {
                id,
                text: substituter.apply(&src.text, seed.wrapping_add(j as u64)),
                label: Label::Toxic,
                identities: src.identities.clone(),
                score: None,
                provenance: Provenance::Augmented { source: src.id.clone() },
            });
        }
    }
    corpus.derive(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::schema::SchemaSet;

    fn gender() -> AttributeSchema {
        SchemaSet::builtin().attribute("gender").unwrap().clone()
    }

    fn group(prefix: &str, group: &str, n: usize, pos: usize) -> Vec<Document> {
        (0..n)
            .map(|i| {
                Document::new(
                    format!("{prefix}{i}"),
                    "the movie was good",
                    Label::try_from(u8::from(i < pos)).unwrap(),
                )
                .with_identity("gender", group)
            })
            .collect()
    }

    fn table(pairs: &[(&str, &[&str])]) -> SubstitutionTable {
        SubstitutionTable(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }

    #[test]
    fn copies_reach_the_ratio_exactly() {
        assert_eq!(copies_needed(10, 100, 0.5), 80);
        assert_eq!(copies_needed(5, 10, 0.5), 0);
        assert_eq!(copies_needed(1, 3, 0.5), 1);
        // brute force: smallest k with (p+k)/(n+k) >= t
        for n in 1..40 {
            for p in 1..=n {
                for t in [0.3, 0.5, 0.55, 0.7] {
                    if p as f64 / n as f64 > t {
                        continue;
                    }
                    let brute = (0..).find(|&k| (p + k) as f64 / (n + k) as f64 >= t - 1e-12).unwrap();
                    assert_eq!(copies_needed(p, n, t), brute, "p={p} n={n} t={t}");
                }
            }
        }
    }

    #[test]
    fn plan_cases() {
        let mut docs = group("f", "Female", 100, 10);
        docs.extend(group("m", "Male", 10, 5));
        let c = Corpus::new(docs).unwrap();
        let plan = plan_stratification(&c, &gender(), 0.5).unwrap();
        assert_eq!(plan.groups[0].copies, 80);
        assert_eq!(plan.groups[0].achieved_ratio(), 0.5);
        assert_eq!(plan.groups[1].copies, 0);

        let mut docs = group("f", "Female", 10, 0);
        docs.extend(group("m", "Male", 10, 5));
        assert!(matches!(
            plan_stratification(&Corpus::new(docs).unwrap(), &gender(), 0.5),
            Err(Error::Infeasible { group, .. }) if group == "Female"
        ));
        let mut docs = group("f", "Female", 10, 8);
        docs.extend(group("m", "Male", 10, 5));
        assert!(plan_stratification(&Corpus::new(docs).unwrap(), &gender(), 0.5).is_err());
        assert!(plan_stratification(&c, &gender(), 1.0).is_err());
    }

    #[test]
    fn substitution_is_seeded_and_changes_something() {
        let t = table(&[("good", &["great", "fine"])]);
        let none = HashSet::new();
        let a = substitute_words("the movie was good", &none, &t, 1, 1.0);
        assert!(a == "the movie was great" || a == "the movie was fine");
        assert_eq!(a, substitute_words("the movie was good", &none, &t, 1, 1.0));
        let outs: HashSet<String> = (0..32)
            .map(|s| substitute_words("the movie was good", &none, &t, s, 1.0))
            .collect();
        assert_eq!(outs.len(), 2);
        // low rate still changes one token
        assert_ne!(substitute_words("Good", &none, &t, 3, 0.01), "Good");
        assert!(substitute_words("Good", &none, &t, 3, 0.01).starts_with(|c: char| c.is_uppercase()));
    }

    #[test]
    fn nothing_eligible_or_protected() {
        let t = table(&[("muslim", &["x"]), ("good", &["fine"])]);
        let protected: HashSet<String> = ["muslim".to_string()].into();
        assert_eq!(substitute_words("a muslim man", &protected, &t, 0, 1.0), "a muslim man");
        assert_eq!(substitute_words("nothing here", &protected, &t, 0, 1.0), "nothing here");
        for seed in 0..20 {
            let out = substitute_words("muslim good", &protected, &t, seed, 1.0);
            assert_eq!(out, "muslim fine");
        }
    }

    #[test]
    fn apply_cycles_sources_with_successive_seeds() {
        let mut docs = group("f", "Female", 3, 1);
        docs.extend(group("m", "Male", 2, 1));
        let c = Corpus::new(docs).unwrap();
        let plan = plan_stratification(&c, &gender(), 0.5).unwrap();
        assert_eq!(plan.groups[0].copies, 1);
        let plan = AugmentationPlan {
            groups: vec![GroupPlan {
                copies: 2,
                ..plan.groups[0].clone()
            }],
            ..plan
        };
        let sub = Substituter::new(table(&[("good", &["great", "fine", "nice"])]), 0.5, HashSet::new()).unwrap();
        let out = apply_plan(&c, &plan, &sub, 10).unwrap();
        assert_eq!(out.len(), c.len() + 2);
        let added = &out.documents()[c.len()..];
        assert_eq!(added[0].id, "f0+aug0");
        assert_eq!(added[1].id, "f0+aug1");
        assert_eq!(added[0].text, sub.apply("the movie was good", 10));
        assert_eq!(added[1].text, sub.apply("the movie was good", 11));
        assert!(added
            .iter()
            .all(|d| d.is_toxic() && d.provenance == Provenance::Augmented { source: "f0".into() }));
        assert_eq!(&out.documents()[..c.len()], c.documents());
    }

    #[test]
    fn zero_plan_is_identity() {
        let mut docs = group("f", "Female", 4, 2);
        docs.extend(group("m", "Male", 2, 1));
        let c = Corpus::new(docs).unwrap();
        let plan = plan_stratification(&c, &gender(), 0.5).unwrap();
        assert_eq!(plan.total_copies(), 0);
        let sub = Substituter::new(SubstitutionTable::builtin(), 0.3, HashSet::new()).unwrap();
        assert_eq!(apply_plan(&c, &plan, &sub, 0).unwrap(), c);
    }

    #[test]
    fn stratified_corpus_has_small_selection_bias() {
        let mut docs = group("f", "Female", 300, 40);
        docs.extend(group("m", "Male", 120, 50));
        let c = Corpus::new(docs).unwrap();
        let plan = plan_stratification(&c, &gender(), 0.5).unwrap();
        let sub = Substituter::new(
            SubstitutionTable::builtin(),
            0.3,
            SchemaSet::builtin().protected_surfaces(),
        )
        .unwrap();
        let out = apply_plan(&c, &plan, &sub, 5).unwrap();
        for gp in &plan.groups {
            let n = out.in_group("gender", &gp.group).count();
            let p = out.in_group("gender", &gp.group).filter(|d| d.is_toxic()).count();
            assert!((p as f64 / n as f64 - 0.5).abs() <= 1.0 / n as f64);
        }
        let min = plan.groups.iter().map(|g| g.total).min().unwrap();
        assert!(metrics::selection_bias(&out, &gender()).unwrap() <= 1.0 / min as f64);
    }
}
