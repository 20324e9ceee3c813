//! Labelled corpora: data model, ingestion, identity annotation, filtering
//! and stratified splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, SchemaSet};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NonToxic,
    Toxic,
}

impl Label {
    pub fn is_toxic(self) -> bool {
        self == Label::Toxic
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NonToxic),
            1 => Ok(Label::Toxic),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NonToxic => 0,
            Label::Toxic => 1,
        }
    }
}

/// One (attribute, group) annotation, e.g. (gender, Female).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Identity {
    pub attribute: String,
    pub group: String,
}

impl Identity {
    pub fn new(attribute: impl Into<String>, group: impl Into<String>) -> Self {
        Identity {
            attribute: attribute.into(),
            group: group.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Original,
    Perturbed {
        source: String,
        from: String,
        to: String,
    },
    Augmented {
        source: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default)]
    pub identities: BTreeSet<Identity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label,
            identities: BTreeSet::new(),
            score: None,
            provenance: Provenance::Original,
        }
    }

    pub fn with_identity(mut self, attribute: &str, group: &str) -> Self {
        self.identities.insert(Identity::new(attribute, group));
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn is_toxic(&self) -> bool {
        self.label.is_toxic()
    }

    pub fn has_group(&self, attribute: &str, group: &str) -> bool {
        self.identities
            .iter()
            .any(|i| i.attribute == attribute && i.group == group)
    }

    /// Groups of `attribute` this document is annotated with.
    pub fn groups_of<'a>(&'a self, attribute: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.identities
            .iter()
            .filter(move |i| i.attribute == attribute)
            .map(|i| i.group.as_str())
    }

    /// The group when exactly one group of `attribute` is annotated.
    pub fn single_group<'a>(&'a self, attribute: &'a str) -> Option<&'a str> {
        let mut it = self.groups_of(attribute);
        match (it.next(), it.next()) {
            (Some(g), None) => Some(g),
            _ => None,
        }
    }

    pub fn mentions_attribute(&self, attribute: &str) -> bool {
        self.identities.iter().any(|i| i.attribute == attribute)
    }

    fn check_score(&self) -> std::result::Result<(), String> {
        match self.score {
            Some(s) if !(0.0..=1.0).contains(&s) => Err(format!("score {s} for `{}` is outside [0, 1]", self.id)),
            _ => Ok(()),
        }
    }
}

/// Ordered, id-unique collection of documents.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    schema_ref: String,
    index: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents && self.schema_ref == other.schema_ref
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            d.check_score().map_err(Error::InvalidValue)?;
            if index.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { id: d.id.clone() });
            }
        }
        Ok(Corpus {
            documents,
            schema_ref: String::new(),
            index,
        })
    }

    pub fn empty() -> Self {
        Corpus::default()
    }

    pub fn with_schema_ref(mut self, schema_ref: impl Into<String>) -> Self {
        self.schema_ref = schema_ref.into();
        self
    }

    pub fn schema_ref(&self) -> &str {
        &self.schema_ref
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.documents[i])
    }

    /// Builds a new corpus with the same schema reference.
    pub fn derive(&self, documents: Vec<Document>) -> Result<Corpus> {
        Ok(Corpus::new(documents)?.with_schema_ref(self.schema_ref.clone()))
    }

    /// Checks every annotation against `schemas`.
    pub fn validate_against(&self, schemas: &SchemaSet) -> Result<()> {
        for d in &self.documents {
            for i in &d.identities {
                let attr = schemas.attribute(&i.attribute)?;
                attr.group(&i.group)?;
            }
        }
        Ok(())
    }

    /// Documents annotated with (attribute, group).
    pub fn in_group<'a>(&'a self, attribute: &'a str, group: &'a str) -> impl Iterator<Item = &'a Document> + 'a {
        self.documents.iter().filter(move |d| d.has_group(attribute, group))
    }

    pub fn positives(&self) -> usize {
        self.documents.iter().filter(|d| d.is_toxic()).count()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` files are CSV, everything else JSON Lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Apply URL/non-ASCII removal, lowercasing, contraction expansion and
    /// punctuation spacing to every text.
    pub normalize: bool,
}

#[derive(Deserialize)]
struct RawRecord {
    id: serde_json::Value,
    text: serde_json::Value,
    label: serde_json::Value,
    #[serde(default)]
    identities: Vec<Identity>,
    #[serde(default)]
    score: Option<serde_json::Value>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

fn invalid(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::InvalidRecord {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_label(line: usize, v: &serde_json::Value) -> Result<Label> {
    match v.as_u64() {
        Some(0) => Ok(Label::NonToxic),
        Some(1) => Ok(Label::Toxic),
        _ => Err(invalid(line, "label", format!("expected 0 or 1, got {v}"))),
    }
}

fn parse_score(line: usize, v: Option<&serde_json::Value>) -> Result<Option<f64>> {
    match v {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => match v.as_f64() {
            Some(s) if (0.0..=1.0).contains(&s) => Ok(Some(s)),
            _ => Err(invalid(line, "score", format!("expected a number in [0, 1], got {v}"))),
        },
    }
}

fn check_identities(line: usize, ids: &BTreeSet<Identity>, schemas: &SchemaSet) -> Result<()> {
    for i in ids {
        if !schemas.contains(&i.attribute, &i.group) {
            return Err(invalid(
                line,
                "identities",
                format!("unknown group ({}, {})", i.attribute, i.group),
            ));
        }
    }
    Ok(())
}

struct Builder<'a> {
    docs: Vec<Document>,
    seen: HashSet<String>,
    schemas: &'a SchemaSet,
    options: LoadOptions,
}

impl<'a> Builder<'a> {
    fn new(schemas: &'a SchemaSet, options: LoadOptions) -> Self {
        Builder {
            docs: Vec::new(),
            seen: HashSet::new(),
            schemas,
            options,
        }
    }

    fn push(&mut self, line: usize, mut doc: Document) -> Result<()> {
        if doc.id.is_empty() {
            return Err(invalid(line, "id", "empty id"));
        }
        check_identities(line, &doc.identities, self.schemas)?;
        if !self.seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId { id: doc.id });
        }
        if self.options.normalize {
            doc.text = text::normalize(&doc.text);
        }
        self.docs.push(doc);
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        Ok(Corpus::new(self.docs)?.with_schema_ref(self.schemas.name.clone()))
    }
}

/// Reads a JSON Lines corpus. Blank lines are skipped.
pub fn read_jsonl<R: Read>(reader: R, schemas: &SchemaSet, options: LoadOptions) -> Result<Corpus> {
    let mut builder = Builder::new(schemas, options);
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let id = raw
            .id
            .as_str()
            .ok_or_else(|| invalid(line_no, "id", "expected a string"))?
            .to_string();
        let text = raw
            .text
            .as_str()
            .ok_or_else(|| invalid(line_no, "text", "expected a string"))?
            .to_string();
        let doc = Document {
            id,
            text,
            label: parse_label(line_no, &raw.label)?,
            identities: raw.identities.into_iter().collect(),
            score: parse_score(line_no, raw.score.as_ref())?,
            provenance: raw.provenance.unwrap_or_default(),
        };
        builder.push(line_no, doc)?;
    }
    builder.finish()
}

/// Reads a CSV corpus with columns `id,text,label`, an optional `score`
/// column and one column per schema attribute holding the group name
/// (several groups separated by `|`, empty for none).
pub fn read_csv<R: Read>(reader: R, schemas: &SchemaSet, options: LoadOptions) -> Result<Corpus> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_col, text_col, label_col) = match (col("id"), col("text"), col("label")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "CSV header must contain id, text and label".into(),
            })
        }
    };
    let score_col = col("score");
    let attr_cols: Vec<(usize, &str)> = schemas
        .attributes
        .iter()
        .filter_map(|a| col(&a.name).map(|c| (c, a.name.as_str())))
        .collect();

    let mut builder = Builder::new(schemas, options);
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let label = match field(label_col) {
            "0" => Label::NonToxic,
            "1" => Label::Toxic,
            other => return Err(invalid(line_no, "label", format!("expected 0 or 1, got `{other}`"))),
        };
        let score = match score_col.map(field) {
            None | Some("") => None,
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| invalid(line_no, "score", format!("not a number: `{s}`")))?;
                parse_score(line_no, Some(&serde_json::json!(v)))?
            }
        };
        let mut identities = BTreeSet::new();
        for &(c, attr) in &attr_cols {
            for g in field(c).split('|').map(str::trim).filter(|g| !g.is_empty()) {
                identities.insert(Identity::new(attr, g));
            }
        }
        let doc = Document {
            id: field(id_col).to_string(),
            text: record.get(text_col).unwrap_or("").to_string(),
            label,
            identities,
            score,
            provenance: Provenance::Original,
        };
        builder.push(line_no, doc)?;
    }
    builder.finish()
}

pub fn load_corpus(path: &Path, format: Format, schemas: &SchemaSet, options: LoadOptions) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => read_jsonl(file, schemas, options),
        Format::Csv => read_csv(file, schemas, options),
    }
}

/// Writes one JSON object per line, fields in declaration order.
pub fn write_jsonl<W: Write>(corpus: &Corpus, mut writer: W) -> std::io::Result<()> {
    for d in corpus {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn to_jsonl_string(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_jsonl(corpus, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Labels each unannotated document with the single group of `schema`
/// whose lexicon it mentions. Documents matching no group, or more than
/// one, are left without an annotation for the attribute.
pub fn annotate_by_lexicon(corpus: &Corpus, schema: &AttributeSchema) -> Result<Corpus> {
    let lookup: HashMap<&str, Vec<&str>> = schema.groups.iter().fold(HashMap::new(), |mut m, g| {
        for s in g.surfaces() {
            m.entry(s).or_default().push(g.name.as_str());
        }
        m
    });
    let docs = corpus
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.mentions_attribute(&schema.name) {
                return d;
            }
            let matched: BTreeSet<&str> = text::tokens(&d.text)
                .iter()
                .filter_map(|t| lookup.get(t.as_str()))
                .flatten()
                .copied()
                .collect();
            if matched.len() == 1 {
                let group = matched.into_iter().next().unwrap();
                d.identities.insert(Identity::new(&schema.name, group));
            }
            d
        })
        .collect();
    corpus.derive(docs)
}

/// Keeps the documents annotated with exactly one group of `attribute`.
pub fn filter_single_identity(corpus: &Corpus, schemas: &SchemaSet, attribute: &str) -> Result<Corpus> {
    schemas.attribute(attribute)?;
    let docs = corpus
        .iter()
        .filter(|d| d.single_group(attribute).is_some())
        .cloned()
        .collect();
    corpus.derive(docs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let parts = [train, val, test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(SplitFractions { train, val, test })
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.4,
            val: 0.3,
            test: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Stratified train/validation/test split.
///
/// Within each label class the documents are shuffled with the seed, every
/// part receives `floor(n * fraction)` of them and leftover documents go to
/// train, then validation, then test. Each part keeps corpus order.
pub fn split(corpus: &Corpus, fractions: SplitFractions, seed: u64) -> Result<Split> {
    let fr = [fractions.train, fractions.val, fractions.test];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; corpus.len()];
    for label in [Label::NonToxic, Label::Toxic] {
        let mut members: Vec<usize> = corpus
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut counts: Vec<usize> = fr.iter().map(|f| (n as f64 * f).floor() as usize).collect();
        let mut leftover = n - counts.iter().sum::<usize>();
        let mut part = 0;
        while leftover > 0 {
            counts[part % 3] += 1;
            leftover -= 1;
            part += 1;
        }
        let mut it = members.into_iter();
        for (p, &c) in counts.iter().enumerate() {
            for idx in it.by_ref().take(c) {
                assignment[idx] = p;
            }
        }
    }
    let mut parts: [Vec<Document>; 3] = Default::default();
    for (d, &p) in corpus.iter().zip(&assignment) {
        parts[p].push(d.clone());
    }
    let [train, val, test] = parts;
    Ok(Split {
        train: corpus.derive(train)?,
        val: corpus.derive(val)?,
        test: corpus.derive(test)?,
    })
}

/// Attaches classifier scores by document id.
pub fn attach_predictions(corpus: &Corpus, predictions: &[(String, f64)]) -> Result<Corpus> {
    let mut scores: HashMap<&str, f64> = HashMap::with_capacity(predictions.len());
    for (id, s) in predictions {
        if corpus.get(id).is_none() {
            return Err(Error::UnknownId(id.clone()));
        }
        if !(0.0..=1.0).contains(s) {
            return Err(Error::InvalidValue(format!("score {s} for `{id}` is outside [0, 1]")));
        }
        scores.insert(id, *s);
    }
    let docs = corpus
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if let Some(&s) = scores.get(d.id.as_str()) {
                d.score = Some(s);
            }
            d
        })
        .collect();
    corpus.derive(docs)
}

/// Reads predictions as JSON Lines `{"id": ..., "score": ...}`.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        score: f64,
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((row.id, row.score));
    }
    Ok(out)
}

/// Most frequent lowercase tokens among documents of one group with one
/// label, ties broken lexicographically.
pub fn token_frequency_report(
    corpus: &Corpus,
    schema: &AttributeSchema,
    group: &str,
    label: Label,
    top_k: usize,
) -> Result<Vec<(String, usize)>> {
    schema.group(group)?;
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in corpus.in_group(&schema.name, group).filter(|d| d.label == label) {
        for t in text::tokens(&d.text) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(ranked)
}
