//! Desk-scale verification: synthetic corpora with injected bias, a hashed
//! bag-of-words logistic regression standing in for the audited models, and
//! the end-to-end audit workflow.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, BiasSource, CorrelationMatrix, DeltaReport, DeltaTable, Metric};
use crate::corpus::{self, Corpus, Document, Format, Label, LoadOptions, SplitFractions};
use crate::error::{Error, Result};
use crate::metrics::{self, DatasetBiasReport, FairnessReport, SenseReport};
use crate::perturb::{self, PerturbationRule};
use crate::schema::{AttributeSchema, GroupSpec, LexiconEntry, Role, SchemaSet};
use crate::stratify::{self, Substituter, SubstitutionTable};
use crate::subspace::{self, EmbeddingSet, FitInput};
use crate::{text, FORMAT_VERSION};

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Named random stream derived from a run seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

pub fn substream_seed(seed: u64, name: &str) -> u64 {
    substream(seed, name).next_u64()
}

// Filler words are drawn from the synonym table so that re-stratification
// has something to substitute.
const NEUTRAL_WORDS: &[&str] = &[
    "account",
    "automobile",
    "car",
    "cash",
    "chat",
    "city",
    "country",
    "earth",
    "film",
    "funds",
    "globe",
    "home",
    "house",
    "job",
    "labor",
    "money",
    "movie",
    "nation",
    "novel",
    "picture",
    "story",
    "tale",
    "town",
    "vehicle",
    "work",
    "world",
    "issue",
    "look",
    "talk",
    "think",
    "know",
    "make",
    "get",
    "go",
    "say",
    "speak",
    "understand",
    "believe",
    "want",
    "need",
    "help",
    "create",
    "leave",
    "often",
    "always",
    "really",
    "very",
    "quite",
    "new",
    "old",
    "big",
    "small",
    "fast",
    "slow",
    "fresh",
    "clean",
    "quick",
    "large",
    "little",
    "huge",
];

const TOXIC_WORDS: &[&str] = &[
    "idiot",
    "moron",
    "stupid",
    "garbage",
    "trash",
    "pathetic",
    "disgusting",
    "liar",
    "jerk",
    "loser",
    "dumb",
    "hideous",
    "rubbish",
    "nonsense",
    "fool",
    "filthy",
    "wicked",
    "awful",
];

fn vocabulary(pool: &[&str], size: usize, prefix: &str, exclude: &HashSet<String>) -> Vec<String> {
    let mut out: Vec<String> = pool
        .iter()
        .filter(|w| !exclude.contains(**w))
        .take(size)
        .map(|w| w.to_string())
        .collect();
    let mut i = 0;
    while out.len() < size {
        let w = format!("{prefix}{i}");
        if !exclude.contains(&w) {
            out.push(w);
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub group: String,
    /// Needed only for generated lexicons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub count: usize,
    pub positive_ratio: f64,
    /// Probability that a non-toxic document carries toxic-context tokens.
    #[serde(default)]
    pub contamination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthAttribute {
    pub name: String,
    pub groups: Vec<SynthGroup>,
}

/// Where identity surfaces come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lexicon {
    /// The built-in gender/race/religion schema.
    #[default]
    Builtin,
    /// One surface per group: the group name, lowercased.
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub attributes: Vec<SynthAttribute>,
    #[serde(default)]
    pub lexicon: Lexicon,
    #[serde(default = "defaults::neutral_vocab")]
    pub neutral_vocab: usize,
    #[serde(default = "defaults::toxic_vocab")]
    pub toxic_vocab: usize,
    /// Filler tokens per document.
    #[serde(default = "defaults::doc_length")]
    pub doc_length: usize,
    /// Toxic tokens added to positives and to contaminated negatives.
    #[serde(default = "defaults::toxic_tokens")]
    pub toxic_tokens: usize,
    /// Identity surfaces used per group (canonical forms of the first slots).
    #[serde(default = "defaults::one")]
    pub surfaces_per_group: usize,
    /// When absent, the audit derives one from its own seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

mod defaults {
    pub fn neutral_vocab() -> usize {
        40
    }
    pub fn toxic_vocab() -> usize {
        12
    }
    pub fn doc_length() -> usize {
        8
    }
    pub fn toxic_tokens() -> usize {
        2
    }
    pub fn one() -> usize {
        1
    }
}

impl SynthSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(json).map_err(|e| Error::json("synthetic spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::InvalidValue("synthetic spec has no attributes".into()));
        }
        if self.neutral_vocab == 0 || self.toxic_vocab == 0 || self.doc_length == 0 || self.toxic_tokens == 0 {
            return Err(Error::InvalidValue(
                "vocabulary sizes, doc_length and toxic_tokens must be at least 1".into(),
            ));
        }
        if self.surfaces_per_group == 0 {
            return Err(Error::InvalidValue("surfaces_per_group must be at least 1".into()));
        }
        for a in &self.attributes {
            if a.groups.is_empty() {
                return Err(Error::InvalidValue(format!("attribute `{}` has no groups", a.name)));
            }
            for g in &a.groups {
                if g.count == 0 {
                    return Err(Error::InvalidValue(format!("group `{}` needs count >= 1", g.group)));
                }
                for (what, v) in [("positive_ratio", g.positive_ratio), ("contamination", g.contamination)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidValue(format!(
                            "{what} of group `{}` must lie in [0, 1], got {v}",
                            g.group
                        )));
                    }
                }
            }
        }
        self.schema().map(|_| ())
    }

    /// Schema whose lexicon supplies the identity surfaces.
    pub fn schema(&self) -> Result<SchemaSet> {
        match self.lexicon {
            Lexicon::Builtin => {
                let names: Vec<String> = self.attributes.iter().map(|a| a.name.clone()).collect();
                let schemas = SchemaSet::builtin().select(&names)?;
                for a in &self.attributes {
                    let schema = schemas.attribute(&a.name)?;
                    for g in &a.groups {
                        schema.group(&g.group)?;
                    }
                }
                Ok(schemas)
            }
            Lexicon::Generated => {
                let attributes = self
                    .attributes
                    .iter()
                    .map(|a| {
                        let groups = a
                            .groups
                            .iter()
                            .map(|g| {
                                let role = g.role.ok_or_else(|| {
                                    Error::InvalidValue(format!(
                                        "group `{}` needs a role for a generated lexicon",
                                        g.group
                                    ))
                                })?;
                                Ok(GroupSpec {
                                    name: g.group.clone(),
                                    role,
                                    lexicon: vec![LexiconEntry {
                                        slot: "identity".into(),
                                        surfaces: vec![g.group.to_lowercase()],
                                    }],
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(AttributeSchema {
                            name: a.name.clone(),
                            groups,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                SchemaSet::new("synthetic", attributes)
            }
        }
    }

    fn roles(&self, schemas: &SchemaSet, attribute: &SynthAttribute) -> Result<Vec<Role>> {
        let schema = schemas.attribute(&attribute.name)?;
        attribute
            .groups
            .iter()
            .map(|g| Ok(schema.group(&g.group)?.role))
            .collect()
    }

    /// Selection bias implied by the spec: pooled positive ratios of each
    /// side, before rounding to whole documents.
    pub fn expected_selection_bias(&self, attribute: &str) -> Result<f64> {
        let schemas = self.schema()?;
        let a = self.attribute(attribute)?;
        let roles = self.roles(&schemas, a)?;
        let side = |role: Role| {
            let (pos, n) = a
                .groups
                .iter()
                .zip(&roles)
                .filter(|(_, r)| **r == role)
                .fold((0.0, 0.0), |(p, n), (g, _)| {
                    (p + g.count as f64 * g.positive_ratio, n + g.count as f64)
                });
            (n > 0.0).then(|| pos / n)
        };
        match (side(Role::Marginalized), side(Role::NonMarginalized)) {
            (Some(m), Some(n)) => Ok((m - n).abs()),
            _ => Err(Error::EmptyGroup {
                attribute: attribute.into(),
                group: "one side has no groups".into(),
            }),
        }
    }

    /// Raw overamplification implied by the spec's group counts.
    pub fn expected_overamplification(&self, attribute: &str) -> Result<f64> {
        let schemas = self.schema()?;
        let a = self.attribute(attribute)?;
        let roles = self.roles(&schemas, a)?;
        let side = |role: Role| {
            let sizes: Vec<f64> = a
                .groups
                .iter()
                .zip(&roles)
                .filter(|(_, r)| **r == role)
                .map(|(g, _)| g.count as f64)
                .collect();
            if sizes.is_empty() {
                0.0
            } else {
                sizes.iter().sum::<f64>() / sizes.len() as f64
            }
        };
        Ok((side(Role::Marginalized) - side(Role::NonMarginalized)).abs())
    }

    fn attribute(&self, name: &str) -> Result<&SynthAttribute> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.into()))
    }
}

fn group(name: &str, role: Option<Role>, count: usize, ratio: f64, contamination: f64) -> SynthGroup {
    SynthGroup {
        group: name.into(),
        role,
        count,
        positive_ratio: ratio,
        contamination,
    }
}

/// Built-in-lexicon spec shaped after a civil-comments style corpus:
/// selection bias ordered religion > race > gender, marginalized groups
/// more often in toxic contexts.
pub fn default_synth_spec() -> SynthSpec {
    SynthSpec {
        attributes: vec![
            SynthAttribute {
                name: "gender".into(),
                groups: vec![
                    group("Female", None, 500, 0.177, 0.3),
                    group("Male", None, 700, 0.15, 0.05),
                ],
            },
            SynthAttribute {
                name: "race".into(),
                groups: vec![
                    group("Black", None, 250, 0.21, 0.4),
                    group("Asian", None, 250, 0.196, 0.3),
                    group("White", None, 700, 0.15, 0.05),
                ],
            },
            SynthAttribute {
                name: "religion".into(),
                groups: vec![
                    group("Jewish", None, 200, 0.217, 0.3),
                    group("Muslim", None, 300, 0.237, 0.5),
                    group("Christian", None, 900, 0.15, 0.05),
                ],
            },
        ],
        lexicon: Lexicon::Builtin,
        neutral_vocab: defaults::neutral_vocab(),
        toxic_vocab: defaults::toxic_vocab(),
        doc_length: defaults::doc_length(),
        toxic_tokens: defaults::toxic_tokens(),
        surfaces_per_group: 1,
        seed: None,
    }
}

/// One generated attribute per contamination level. Attribute `i` pairs a
/// marginalized group of `base + i * step` documents with a non-marginalized
/// group of `base`, so count imbalance rises together with contamination.
pub fn contamination_sweep_spec(levels: &[f64], base: usize, step: usize) -> SynthSpec {
    let attributes = levels
        .iter()
        .enumerate()
        .map(|(i, &c)| SynthAttribute {
            name: format!("attr{i}"),
            groups: vec![
                group(&format!("grp{i}m"), Some(Role::Marginalized), base + i * step, 0.3, c),
                group(&format!("grp{i}n"), Some(Role::NonMarginalized), base, 0.3, 0.0),
            ],
        })
        .collect();
    SynthSpec {
        attributes,
        lexicon: Lexicon::Generated,
        ..default_synth_spec()
    }
}

/// Generates the corpus described by `spec`.
///
/// Each group gets `round(count * positive_ratio)` toxic documents at
/// seeded positions. A document is `doc_length` filler words plus one
/// identity surface; toxic documents, and non-toxic ones with probability
/// `contamination`, also get `toxic_tokens` toxic words.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let schemas = spec.schema()?;
    let protected = schemas.protected_surfaces();
    let neutral = vocabulary(NEUTRAL_WORDS, spec.neutral_vocab, "w", &protected);
    let toxic = vocabulary(TOXIC_WORDS, spec.toxic_vocab, "tx", &protected);
    let mut rng = substream(spec.seed.unwrap_or(0), "synthesis");

    let mut docs = Vec::new();
    for a in &spec.attributes {
        let schema = schemas.attribute(&a.name)?;
        for g in &a.groups {
            let surfaces: Vec<&str> = schema
                .group(&g.group)?
                .lexicon
                .iter()
                .take(spec.surfaces_per_group)
                .map(|e| e.canonical())
                .collect();
            let positives = (g.count as f64 * g.positive_ratio).round() as usize;
            let mut labels: Vec<bool> = (0..g.count).map(|i| i < positives).collect();
            labels.shuffle(&mut rng);
            for (i, toxic_doc) in labels.into_iter().enumerate() {
                let mut words: Vec<&str> = (0..spec.doc_length)
                    .map(|_| neutral.choose(&mut rng).unwrap().as_str())
                    .collect();
                let contaminated = !toxic_doc && rng.gen::<f64>() < g.contamination;
                if toxic_doc || contaminated {
                    for _ in 0..spec.toxic_tokens {
                        let at = rng.gen_range(0..=words.len());
                        words.insert(at, toxic.choose(&mut rng).unwrap().as_str());
                    }
                }
                let at = rng.gen_range(0..=words.len());
                words.insert(at, surfaces.choose(&mut rng).unwrap());
                let label = if toxic_doc { Label::Toxic } else { Label::NonToxic };
                docs.push(
                    Document::new(format!("{}-{}-{i:05}", a.name, g.group), words.join(" "), label)
                        .with_identity(&a.name, &g.group),
                );
            }
        }
    }
    Ok(Corpus::new(docs)?.with_schema_ref(schemas.name.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "train_defaults::dim")]
    pub dim: usize,
    #[serde(default = "train_defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "train_defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "train_defaults::l2")]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
}

mod train_defaults {
    pub fn dim() -> usize {
        4096
    }
    pub fn learning_rate() -> f64 {
        2.0
    }
    pub fn epochs() -> usize {
        150
    }
    pub fn l2() -> f64 {
        1e-4
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: train_defaults::dim(),
            learning_rate: train_defaults::learning_rate(),
            epochs: train_defaults::epochs(),
            l2: train_defaults::l2(),
            seed: 0,
        }
    }
}

/// Logistic regression over hashed token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
    /// Objective before training and after every epoch.
    pub loss_trace: Vec<f64>,
}

pub fn feature_index(token: &str, dim: usize) -> usize {
    (fnv1a(token.as_bytes()) % dim as u64) as usize
}

/// Sparse token counts, sorted by bucket.
pub fn featurize(text: &str, dim: usize) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in text::tokens(text) {
        *counts.entry(feature_index(&t, dim)).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

fn sigmoid(z: f64) -> f64 {
    // keeps scores strictly inside (0, 1)
    let z = z.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot_sparse(w: &[f64], x: &[(usize, f64)]) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

/// Removes the span of an orthonormal basis from `v`.
fn project_basis(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
    }
}

const MAX_HALVINGS: usize = 40;

pub fn train_toy(train: &Corpus, config: &TrainConfig) -> Result<ToyModel> {
    train_toy_projected(train, config, &[])
}

/// Full-batch gradient descent with step halving, so the recorded
/// objective never increases. Weight updates are confined to the
/// orthogonal complement of `basis`, which is the same as training on
/// features with that subspace projected out.
pub fn train_toy_projected(train: &Corpus, config: &TrainConfig, basis: &[Vec<f64>]) -> Result<ToyModel> {
    let lr_ok = config.learning_rate.is_finite() && config.learning_rate > 0.0;
    let l2_ok = config.l2.is_finite() && config.l2 >= 0.0;
    if config.dim == 0 || !lr_ok || !l2_ok {
        return Err(Error::InvalidArgument(
            "model needs dim >= 1, learning_rate > 0 and l2 >= 0".into(),
        ));
    }
    if let Some(b) = basis.iter().find(|b| b.len() != config.dim) {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            found: b.len(),
        });
    }
    let positives = train.positives();
    if positives == 0 || positives == train.len() {
        return Err(Error::InvalidValue(
            "training corpus needs both toxic and non-toxic documents".into(),
        ));
    }
    let xs: Vec<Vec<(usize, f64)>> = train.iter().map(|d| featurize(&d.text, config.dim)).collect();
    let ys: Vec<f64> = train.iter().map(|d| if d.is_toxic() { 1.0 } else { 0.0 }).collect();
    let n = xs.len() as f64;

    let objective = |w: &[f64], b: f64| {
        let data: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, &y)| {
                let z = dot_sparse(w, x) + b;
                softplus(z) - y * z
            })
            .sum::<f64>()
            / n;
        data + 0.5 * config.l2 * w.iter().map(|v| v * v).sum::<f64>()
    };

    let mut rng = substream(config.seed, "model");
    let mut w: Vec<f64> = (0..config.dim).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
    project_basis(&mut w, basis);
    let mut b = 0.0;
    let mut lr = config.learning_rate;
    let mut loss = objective(&w, b);
    let mut trace = vec![loss];

    for _ in 0..config.epochs {
        let mut gw: Vec<f64> = w.iter().map(|v| config.l2 * v).collect();
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let r = (sigmoid(dot_sparse(&w, x) + b) - y) / n;
            gb += r;
            for &(i, v) in x {
                gw[i] += r * v;
            }
        }
        project_basis(&mut gw, basis);
        for _ in 0..MAX_HALVINGS {
            let w2: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - lr * g).collect();
            let b2 = b - lr * gb;
            let l2 = objective(&w2, b2);
            if l2 <= loss {
                w = w2;
                b = b2;
                loss = l2;
                break;
            }
            lr *= 0.5;
        }
        trace.push(loss);
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::InvalidValue("training diverged".into()));
    }
    Ok(ToyModel {
        dim: config.dim,
        weights: w,
        bias: b,
        config: config.clone(),
        loss_trace: trace,
    })
}

impl ToyModel {
    pub fn score(&self, text: &str) -> f64 {
        sigmoid(dot_sparse(&self.weights, &featurize(text, self.dim)) + self.bias)
    }

    pub fn accuracy(&self, corpus: &Corpus) -> f64 {
        if corpus.is_empty() {
            return 0.0;
        }
        let hits = corpus
            .iter()
            .filter(|d| (self.score(&d.text) >= 0.5) == d.is_toxic())
            .count();
        hits as f64 / corpus.len() as f64
    }
}

/// Scores every document with the model.
pub fn predict(model: &ToyModel, corpus: &Corpus) -> Result<Corpus> {
    let docs = corpus
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.score = Some(model.score(&d.text));
            d
        })
        .collect();
    corpus.derive(docs)
}

/// Bias subspace of the hashed feature space for one attribute, fitted on
/// the differences between each document and its counterfactuals. Each
/// pair enters in both directions so the differences are centered per pair.
pub fn fit_feature_subspace(
    train: &Corpus,
    schema: &AttributeSchema,
    k: usize,
    dim: usize,
) -> Result<subspace::BiasSubspace> {
    let mut rules: HashMap<(String, String), PerturbationRule> = HashMap::new();
    let mut factual: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut counter: Vec<Vec<(usize, f64)>> = Vec::new();
    for d in train {
        if d.identities.len() != 1 {
            continue;
        }
        let Some(from) = d.single_group(&schema.name) else {
            continue;
        };
        let f = featurize(&d.text, dim);
        for to in &schema.groups {
            if to.name == from {
                continue;
            }
            let key = (from.to_string(), to.name.clone());
            if !rules.contains_key(&key) {
                rules.insert(key.clone(), PerturbationRule::new(schema, from, &to.name)?);
            }
            let cf = featurize(&perturb::perturb_text(&d.text, &rules[&key]), dim);
            factual.push(f.clone());
            counter.push(cf);
        }
    }
    let mut active: Vec<usize> = factual
        .iter()
        .chain(&counter)
        .zip(counter.iter().chain(&factual))
        .flat_map(|(a, b)| {
            let a: BTreeMap<usize, f64> = a.iter().copied().collect();
            let b: BTreeMap<usize, f64> = b.iter().copied().collect();
            a.keys()
                .chain(b.keys())
                .filter(|i| a.get(i) != b.get(i))
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    active.sort_unstable();
    active.dedup();
    let position: HashMap<usize, usize> = active.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let dense = |rows: &[Vec<(usize, f64)>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|x| {
                let mut v = vec![0.0; active.len()];
                for (i, val) in x {
                    if let Some(&p) = position.get(i) {
                        v[p] = *val;
                    }
                }
                v
            })
            .collect()
    };
    let (f, c) = (dense(&factual), dense(&counter));
    let lhs: Vec<Vec<f64>> = f.iter().chain(&c).cloned().collect();
    let rhs: Vec<Vec<f64>> = c.iter().chain(&f).cloned().collect();
    let ids: Vec<String> = (0..lhs.len()).map(|i| i.to_string()).collect();
    let lhs = EmbeddingSet::new(ids.clone(), lhs)?;
    let rhs = EmbeddingSet::new(ids, rhs)?;
    let reduced = subspace::fit_bias_subspace(
        FitInput::Paired {
            factual: &lhs,
            counterfactual: &rhs,
        },
        k,
        &schema.name,
    )?;
    let lift = |v: &[f64]| {
        let mut out = vec![0.0; dim];
        for (p, &i) in active.iter().enumerate() {
            out[i] = v[p];
        }
        out
    };
    Ok(subspace::BiasSubspace {
        k: reduced.k,
        d: dim,
        mean: lift(&reduced.mean),
        components: reduced.components.iter().map(|c| lift(c)).collect(),
        eigenvalues: reduced.eigenvalues,
        attribute: reduced.attribute,
        fitted_from: reduced.fitted_from,
    })
}

/// Orthonormal basis spanning all components of `subspaces`.
fn combined_basis(subspaces: &[subspace::BiasSubspace]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in subspaces.iter().flat_map(|s| &s.components) {
        let mut v = c.clone();
        project_basis(&mut v, &basis);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "none")]
    Baseline,
    #[serde(rename = "perturbed")]
    Perturbed,
    #[serde(rename = "stratified")]
    Stratified,
    #[serde(rename = "perturbed+stratified")]
    PerturbedStratified,
    #[serde(rename = "subspace")]
    Subspace,
}

impl Treatment {
    pub const ALL: [Treatment; 5] = [
        Treatment::Baseline,
        Treatment::Perturbed,
        Treatment::Stratified,
        Treatment::PerturbedStratified,
        Treatment::Subspace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Treatment::Baseline => "none",
            Treatment::Perturbed => "perturbed",
            Treatment::Stratified => "stratified",
            Treatment::PerturbedStratified => "perturbed+stratified",
            Treatment::Subspace => "subspace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Labelled corpus (JSONL or CSV); mutually exclusive with `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Restricts the audit to these attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<String>>,
    #[serde(default = "audit_defaults::treatments")]
    pub treatments: Vec<Treatment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "audit_defaults::threshold")]
    pub threshold: f64,
    /// Largest tolerated drop in test AUC relative to the baseline.
    #[serde(default = "audit_defaults::auc_budget")]
    pub auc_budget: f64,
    #[serde(default = "audit_defaults::split")]
    pub split: [f64; 3],
    #[serde(default = "audit_defaults::target_ratio")]
    pub target_ratio: f64,
    #[serde(default = "audit_defaults::substitution_rate")]
    pub substitution_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substitutions: Option<PathBuf>,
    #[serde(default = "audit_defaults::subspace_k")]
    pub subspace_k: usize,
    #[serde(default)]
    pub model: TrainConfig,
    /// Scores per treatment produced outside the toolkit. When present the
    /// corpus is used as evaluation data as-is and no model is trained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<BTreeMap<Treatment, PathBuf>>,
    /// Representation-bias scores per attribute, recorded verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod audit_defaults {
    use super::Treatment;

    pub fn treatments() -> Vec<Treatment> {
        Treatment::ALL.to_vec()
    }
    pub fn threshold() -> f64 {
        crate::metrics::DEFAULT_THRESHOLD
    }
    pub fn auc_budget() -> f64 {
        0.02
    }
    pub fn split() -> [f64; 3] {
        [0.4, 0.3, 0.3]
    }
    pub fn target_ratio() -> f64 {
        crate::stratify::DEFAULT_TARGET_RATIO
    }
    pub fn substitution_rate() -> f64 {
        crate::stratify::DEFAULT_SUBSTITUTION_RATE
    }
    pub fn subspace_k() -> usize {
        1
    }
}

impl Default for AuditConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl AuditConfig {
    pub fn synthetic(spec: SynthSpec, treatments: Vec<Treatment>, seed: u64) -> Self {
        AuditConfig {
            synth: Some(spec),
            treatments,
            seed,
            ..AuditConfig::default()
        }
    }

    pub fn from_json(json: &str, base_dir: &Path) -> Result<Self> {
        let mut c: AuditConfig = serde_json::from_str(json).map_err(|e| Error::json("audit config", e))?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    /// Relative paths in the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&raw, dir)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.corpus, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::InvalidArgument("config names both `corpus` and `synth`".into())),
            (None, None) => return Err(Error::InvalidArgument("config needs `corpus` or `synth`".into())),
            (None, Some(_)) if self.predictions.is_some() => {
                return Err(Error::InvalidArgument(
                    "`predictions` require a `corpus` whose ids they score".into(),
                ))
            }
            _ => {}
        }
        metrics::check_threshold(self.threshold)?;
        if !(self.auc_budget >= 0.0 && self.auc_budget.is_finite()) {
            return Err(Error::InvalidArgument(
                "auc_budget must be a non-negative number".into(),
            ));
        }
        if self.subspace_k == 0 {
            return Err(Error::InvalidArgument("subspace_k must be at least 1".into()));
        }
        SplitFractions::new(self.split[0], self.split[1], self.split[2])?;
        if let Some(spec) = &self.synth {
            spec.validate()?;
        }
        Ok(())
    }

    /// Treatments in canonical order, baseline first and always present.
    pub fn treatment_order(&self) -> Vec<Treatment> {
        let wanted: HashSet<Treatment> = match &self.predictions {
            Some(p) => p.keys().copied().collect(),
            None => self.treatments.iter().copied().collect(),
        };
        Treatment::ALL
            .into_iter()
            .filter(|t| *t == Treatment::Baseline || wanted.contains(t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub documents: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub fairness_set: usize,
}

/// Fairness on the unbalanced evaluation data, where a group may lack a
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalFairness {
    pub attribute: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FairnessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentResult {
    pub treatment: Treatment,
    pub train_size: usize,
    /// Bias of the treated training data (absent for external predictions).
    pub training_bias: Vec<DatasetBiasReport>,
    pub test_auc: f64,
    /// Group fairness on the balanced fairness set.
    pub fairness: Vec<FairnessReport>,
    pub original_fairness: Vec<OriginalFairness>,
    pub sense: Vec<SenseReport>,
    pub mean_sense_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub treatment: Treatment,
    pub attribute: String,
    pub deltas: Vec<DeltaReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<CorrelationMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub treatment: Treatment,
    pub test_auc: f64,
    pub mean_sense_score: f64,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub recommended: Treatment,
    pub rule: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub format_version: u32,
    pub seed: u64,
    pub threshold: f64,
    pub auc_budget: f64,
    pub data: DataSummary,
    /// Selection and overamplification bias of the training data.
    pub dataset_bias: Vec<DatasetBiasReport>,
    pub treatments: Vec<TreatmentResult>,
    pub deltas: Vec<DeltaEntry>,
    pub correlation: CorrelationOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<BTreeMap<String, f64>>,
    pub selection: Selection,
}

impl AuditBundle {
    pub fn treatment(&self, t: Treatment) -> Option<&TreatmentResult> {
        self.treatments.iter().find(|r| r.treatment == t)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::json("audit bundle", e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn delta_tables(&self) -> Vec<DeltaTable> {
        let Some(base) = self.treatment(Treatment::Baseline) else {
            return Vec::new();
        };
        base.fairness
            .iter()
            .map(|b| DeltaTable {
                attribute: b.attribute.clone(),
                baseline_label: "baseline".into(),
                baseline: b.clone(),
                rows: self
                    .treatments
                    .iter()
                    .filter(|t| t.treatment != Treatment::Baseline)
                    .filter_map(|t| {
                        t.fairness
                            .iter()
                            .find(|f| f.attribute == b.attribute)
                            .map(|f| (format!("+ {}", t.treatment.name()), f.clone()))
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn deltas_csv(&self) -> Result<String> {
        analysis::render_csv(&self.delta_tables())
    }

    pub fn render_markdown(&self) -> Result<String> {
        let mut out = String::from("# Fairness audit\n\n");
        let _ = writeln!(
            out,
            "Source: {} ({} documents; train {}, test {}, fairness set {}). Seed {}, threshold {}.\n",
            self.data.source,
            self.data.documents,
            self.data.train,
            self.data.test,
            self.data.fairness_set,
            self.seed,
            analysis::format_score(self.threshold)
        );
        out.push_str("## Training data bias\n\n");
        out.push_str("| Attribute | Selection | Overamplification (raw) | Overamplification (norm) |\n");
        out.push_str("|---|---|---|---|\n");
        for b in &self.dataset_bias {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                b.attribute,
                b.selection.map_or_else(|| "n/a".into(), analysis::format_score),
                analysis::format_score(b.overamplification_raw),
                analysis::format_score(b.overamplification_norm)
            );
        }
        out.push_str("\n## Group fairness on the balanced set\n\n");
        out.push_str(&analysis::render_markdown(&self.delta_tables())?);
        out.push_str("\n## Counterfactual fairness (SenseScore)\n\n");
        let attrs: Vec<&str> = self
            .treatments
            .first()
            .map(|t| t.sense.iter().map(|s| s.attribute.as_str()).collect())
            .unwrap_or_default();
        let _ = writeln!(out, "| Model | Test AUC | {} | Mean |", attrs.join(" | "));
        let _ = writeln!(out, "|---|---|{}---|", "---|".repeat(attrs.len()));
        let base = self.treatment(Treatment::Baseline);
        for t in &self.treatments {
            let cells: Vec<String> = t
                .sense
                .iter()
                .map(|s| {
                    let b = base
                        .filter(|_| t.treatment != Treatment::Baseline)
                        .and_then(|b| b.sense.iter().find(|x| x.attribute == s.attribute));
                    match b {
                        Some(b) => analysis::delta(Metric::SenseScore, b.sense_score, s.sense_score).rendered,
                        None => analysis::format_score(s.sense_score),
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                t.treatment.name(),
                analysis::format_score(t.test_auc),
                cells.join(" | "),
                analysis::format_score(t.mean_sense_score)
            );
        }
        out.push_str("\n## Bias/fairness correlation\n\n");
        match (&self.correlation.matrix, &self.correlation.error) {
            (Some(m), _) => {
                let _ = writeln!(out, "| Source | {} |", m.col_names.join(" | "));
                let _ = writeln!(out, "|---|{}", "---|".repeat(m.col_names.len()));
                for (name, row) in m.row_names.iter().zip(&m.values) {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                    let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
                }
                let _ = writeln!(
                    out,
                    "\nn = {} attributes{}",
                    m.n,
                    if m.small_sample { " (small sample)" } else { "" }
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(out, "Not computed: {e}");
            }
            (None, None) => {}
        }
        out.push_str("\n## Model selection\n\n");
        let _ = writeln!(
            out,
            "Recommended: **{}** ({})",
            self.selection.recommended.name(),
            self.selection.rule
        );
        Ok(out)
    }
}

fn test_auc(scored: &Corpus) -> Result<f64> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for d in scored {
        let s = d.score.ok_or_else(|| Error::MissingScore { id: d.id.clone() })?;
        if d.is_toxic() {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    metrics::auc(&pos, &neg)
}

fn evaluate(
    treatment: Treatment,
    train_size: usize,
    training_bias: Vec<DatasetBiasReport>,
    scored_test: &Corpus,
    scored_fair: &Corpus,
    schemas: &SchemaSet,
    threshold: f64,
) -> Result<TreatmentResult> {
    let mut fairness = Vec::new();
    let mut original = Vec::new();
    let mut sense = Vec::new();
    for schema in &schemas.attributes {
        fairness.push(metrics::fairness_report(scored_fair, schema, threshold)?);
        let mut s = metrics::sense_report(scored_fair, schema)?;
        s.pairs.clear();
        sense.push(s);
        let (report, error) = match metrics::fairness_report(scored_test, schema, threshold) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        original.push(OriginalFairness {
            attribute: schema.name.clone(),
            report,
            error,
        });
    }
    let mean_sense_score = sense.iter().map(|s| s.sense_score).sum::<f64>() / sense.len() as f64;
    Ok(TreatmentResult {
        treatment,
        train_size,
        training_bias,
        test_auc: test_auc(scored_test)?,
        fairness,
        original_fairness: original,
        sense,
        mean_sense_score,
    })
}

/// Lifts every group's positive ratio to the target, attribute by
/// attribute. A group already above the target raises the target for its
/// attribute to its own ratio.
fn stratify_all(
    train: &Corpus,
    schemas: &SchemaSet,
    target: f64,
    substituter: &Substituter,
    seed: u64,
) -> Result<Corpus> {
    let mut current = train.clone();
    for (i, schema) in schemas.attributes.iter().enumerate() {
        let highest = schema
            .groups
            .iter()
            .filter_map(|g| {
                let (n, p) = current
                    .in_group(&schema.name, &g.name)
                    .fold((0usize, 0usize), |(n, p), d| (n + 1, p + usize::from(d.is_toxic())));
                (n > 0).then(|| p as f64 / n as f64)
            })
            .fold(target, f64::max);
        let plan = stratify::plan_stratification(&current, schema, highest.min(1.0 - 1e-9))?;
        current = stratify::apply_plan(&current, &plan, substituter, seed.wrapping_add((i as u64) << 32))?;
    }
    Ok(current)
}

fn correlate(
    dataset_bias: &[DatasetBiasReport],
    baseline: &TreatmentResult,
    external: Option<&BTreeMap<String, f64>>,
) -> CorrelationOutcome {
    let fairness: Option<Vec<FairnessReport>> = baseline.original_fairness.iter().map(|o| o.report.clone()).collect();
    let Some(fairness) = fairness else {
        return CorrelationOutcome {
            matrix: None,
            error: Some("baseline fairness on the evaluation data is incomplete".into()),
        };
    };
    let mut sources = vec![BiasSource::Selection, BiasSource::Overamplification];
    if external.is_some() {
        sources.push(BiasSource::External);
    }
    match analysis::correlate_bias_fairness(dataset_bias, &fairness, &sources, external) {
        Ok(m) => CorrelationOutcome {
            matrix: Some(m),
            error: None,
        },
        Err(e) => CorrelationOutcome {
            matrix: None,
            error: Some(e.to_string()),
        },
    }
}

fn select(results: &[TreatmentResult], budget: f64) -> Selection {
    let base_auc = results[0].test_auc;
    let candidates: Vec<Candidate> = results
        .iter()
        .map(|r| Candidate {
            treatment: r.treatment,
            test_auc: r.test_auc,
            mean_sense_score: r.mean_sense_score,
            eligible: r.treatment == Treatment::Baseline || r.test_auc >= base_auc - budget,
        })
        .collect();
    let recommended = candidates
        .iter()
        .filter(|c| c.eligible)
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if b.mean_sense_score <= c.mean_sense_score => Some(b),
            _ => Some(c),
        })
        .map(|c| c.treatment)
        .unwrap_or(Treatment::Baseline);
    Selection {
        recommended,
        rule: format!(
            "smallest mean SenseScore with test AUC at least baseline - {}",
            analysis::format_score(budget)
        ),
        candidates,
    }
}

/// Runs the full audit: training-data bias, treated training sets, toy
/// models (or external predictions), fairness on a balanced fairness set,
/// deltas against the baseline, bias/fairness correlation and a model
/// recommendation.
pub fn run_audit(config: &AuditConfig) -> Result<AuditBundle> {
    config.validate()?;
    let mut schemas = match (&config.schema, &config.synth) {
        (Some(p), _) => SchemaSet::load(&config.resolve(p))?,
        (None, Some(spec)) => spec.schema()?,
        (None, None) => SchemaSet::builtin(),
    };
    if let Some(names) = &config.attributes {
        schemas = schemas.select(names)?;
    }
    let (corpus, source) = match (&config.corpus, &config.synth) {
        (Some(p), _) => {
            let path = config.resolve(p);
            let c = corpus::load_corpus(
                &path,
                Format::from_path(&path),
                &schemas,
                LoadOptions {
                    normalize: config.normalize,
                },
            )?;
            (c, p.display().to_string())
        }
        (None, Some(spec)) => {
            let mut spec = spec.clone();
            spec.seed = Some(spec.seed.unwrap_or_else(|| substream_seed(config.seed, "synthesis")));
            (generate_synthetic_corpus(&spec)?, "synthetic".to_string())
        }
        (None, None) => unreachable!("validated"),
    };

    let order = config.treatment_order();
    let mut results = Vec::with_capacity(order.len());
    let (data, dataset_bias) = if let Some(predictions) = &config.predictions {
        let fair = perturb::build_balanced_fairness_set(&corpus, &schemas)?;
        let dataset_bias = metrics::overamplification_bias(&corpus, &schemas)?;
        for &t in &order {
            let path = predictions
                .get(&t)
                .ok_or_else(|| Error::InvalidArgument(format!("no predictions for treatment `{}`", t.name())))?;
            let path = config.resolve(path);
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let preds = corpus::read_predictions(file)?;
            let pick = |c: &Corpus| -> Vec<(String, f64)> {
                preds.iter().filter(|(id, _)| c.get(id).is_some()).cloned().collect()
            };
            let scored_test = corpus::attach_predictions(&corpus, &pick(&corpus))?;
            let scored_fair = corpus::attach_predictions(&fair, &pick(&fair))?;
            results.push(evaluate(
                t,
                0,
                Vec::new(),
                &scored_test,
                &scored_fair,
                &schemas,
                config.threshold,
            )?);
        }
        let data = DataSummary {
            source,
            documents: corpus.len(),
            train: 0,
            val: 0,
            test: corpus.len(),
            fairness_set: fair.len(),
        };
        (data, dataset_bias)
    } else {
        let fr = SplitFractions::new(config.split[0], config.split[1], config.split[2])?;
        let split = corpus::split(&corpus, fr, substream_seed(config.seed, "split"))?;
        let dataset_bias = metrics::overamplification_bias(&split.train, &schemas)?;
        let fair = perturb::build_balanced_fairness_set(&split.test, &schemas)?;
        let table = match &config.substitutions {
            Some(p) => SubstitutionTable::load(&config.resolve(p))?,
            None => SubstitutionTable::builtin(),
        };
        let substituter = Substituter::new(table, config.substitution_rate, schemas.protected_surfaces())?;
        let sub_seed = substream_seed(config.seed, "substitution");
        let model = TrainConfig {
            seed: substream_seed(config.seed, "model"),
            ..config.model.clone()
        };
        for &t in &order {
            let (train, basis) = match t {
                Treatment::Baseline => (split.train.clone(), Vec::new()),
                Treatment::Perturbed => (
                    perturb::build_perturbed_training_set(&split.train, &schemas)?,
                    Vec::new(),
                ),
                Treatment::Stratified => (
                    stratify_all(&split.train, &schemas, config.target_ratio, &substituter, sub_seed)?,
                    Vec::new(),
                ),
                Treatment::PerturbedStratified => {
                    let p = perturb::build_perturbed_training_set(&split.train, &schemas)?;
                    (
                        stratify_all(&p, &schemas, config.target_ratio, &substituter, sub_seed)?,
                        Vec::new(),
                    )
                }
                Treatment::Subspace => {
                    let subspaces = schemas
                        .attributes
                        .iter()
                        .map(|s| fit_feature_subspace(&split.train, s, config.subspace_k, model.dim))
                        .collect::<Result<Vec<_>>>()?;
                    (split.train.clone(), combined_basis(&subspaces))
                }
            };
            let training_bias = metrics::overamplification_bias(&train, &schemas)?;
            let m = train_toy_projected(&train, &model, &basis)?;
            let scored_test = predict(&m, &split.test)?;
            let scored_fair = predict(&m, &fair)?;
            results.push(evaluate(
                t,
                train.len(),
                training_bias,
                &scored_test,
                &scored_fair,
                &schemas,
                config.threshold,
            )?);
        }
        let data = DataSummary {
            source,
            documents: corpus.len(),
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
            fairness_set: fair.len(),
        };
        (data, dataset_bias)
    };

    let mut deltas = Vec::new();
    for t in &results[1..] {
        for (b, f) in results[0].fairness.iter().zip(&t.fairness) {
            let mut d = analysis::delta_report(b, f)?;
            if let (Some(bs), Some(ts)) = (
                results[0].sense.iter().find(|s| s.attribute == b.attribute),
                t.sense.iter().find(|s| s.attribute == b.attribute),
            ) {
                d.push(analysis::delta(Metric::SenseScore, bs.sense_score, ts.sense_score));
            }
            deltas.push(DeltaEntry {
                treatment: t.treatment,
                attribute: b.attribute.clone(),
                deltas: d,
            });
        }
    }
    let correlation = correlate(&dataset_bias, &results[0], config.external_scores.as_ref());
    let selection = select(&results, config.auc_budget);
    Ok(AuditBundle {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        threshold: config.threshold,
        auc_budget: config.auc_budget,
        data,
        dataset_bias,
        treatments: results,
        deltas,
        correlation,
        external_scores: config.external_scores.clone(),
        selection,
    })
}
