//! Group fairness gaps, dataset bias scores and counterfactual fairness.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Provenance};
use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, Role, SchemaSet};

/// Default operating point: a score at or above it predicts toxic.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionStats {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// fp / (fp + tn); undefined without negatives.
    pub fn fpr(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }

    /// tp / (tp + fn); undefined without positives.
    pub fn tpr(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    fn add(&mut self, doc: &Document, threshold: f64) -> Result<()> {
        let score = doc.score.ok_or_else(|| Error::MissingScore { id: doc.id.clone() })?;
        match (doc.is_toxic(), score >= threshold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
        Ok(())
    }
}

/// Confusion counts over the documents of one group.
pub fn confusion(corpus: &Corpus, attribute: &str, group: &str, threshold: f64) -> Result<ConfusionStats> {
    check_threshold(threshold)?;
    let mut stats = ConfusionStats::default();
    for d in corpus.in_group(attribute, group) {
        stats.add(d, threshold)?;
    }
    if stats.total() == 0 {
        return Err(Error::EmptyGroup {
            attribute: attribute.to_string(),
            group: group.to_string(),
        });
    }
    Ok(stats)
}

/// Rank-based AUC: the fraction of (positive, negative) pairs in which the
/// positive scores higher, ties counting one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptyInput(
            "AUC needs at least one positive and one negative score".into(),
        ));
    }
    if positive.iter().chain(negative).any(|s| !s.is_finite()) {
        return Err(Error::InvalidValue("AUC scores must be finite".into()));
    }
    let mut neg = negative.to_vec();
    neg.sort_by(f64::total_cmp);
    // twice the Mann-Whitney U, kept integral
    let mut twice_u: u64 = 0;
    for &p in positive {
        let below = neg.partition_point(|&x| x < p);
        let tied = neg.partition_point(|&x| x <= p) - below;
        twice_u += 2 * below as u64 + tied as u64;
    }
    Ok(twice_u as f64 / (2.0 * positive.len() as f64 * negative.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub group: String,
    pub role: Role,
    pub fpr: f64,
    pub tpr: f64,
    pub auc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub auc_overall: f64,
    pub fpr_gap: f64,
    pub tpr_gap: f64,
    pub auc_gap: f64,
    pub groups: Vec<GroupScores>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaps {
    pub fpr: f64,
    pub tpr: f64,
    pub auc: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// |mean over marginalized - mean over non-marginalized| for each rate.
pub fn gaps(groups: &[GroupScores]) -> Gaps {
    let side = |role: Role, f: fn(&GroupScores) -> f64| mean(groups.iter().filter(|g| g.role == role).map(f));
    let gap = |f: fn(&GroupScores) -> f64| (side(Role::Marginalized, f) - side(Role::NonMarginalized, f)).abs();
    Gaps {
        fpr: gap(|g| g.fpr),
        tpr: gap(|g| g.tpr),
        auc: gap(|g| g.auc),
    }
}

fn split_scores<'a>(docs: impl Iterator<Item = &'a Document>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for d in docs {
        let s = d.score.ok_or_else(|| Error::MissingScore { id: d.id.clone() })?;
        if d.is_toxic() {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok((pos, neg))
}

fn degenerate(group: &str, metric: &str, reason: &str) -> Error {
    Error::DegenerateMetric {
        group: group.to_string(),
        metric: metric.to_string(),
        reason: reason.to_string(),
    }
}

/// FPR, TPR and AUC gaps between marginalized and non-marginalized groups.
/// Several groups on one side are averaged.
pub fn fairness_report(corpus: &Corpus, schema: &AttributeSchema, threshold: f64) -> Result<FairnessReport> {
    check_threshold(threshold)?;
    let mut groups = Vec::with_capacity(schema.groups.len());
    for g in &schema.groups {
        let stats = confusion(corpus, &schema.name, &g.name, threshold)?;
        let fpr = stats
            .fpr()
            .ok_or_else(|| degenerate(&g.name, "FPR", "no negative documents"))?;
        let tpr = stats
            .tpr()
            .ok_or_else(|| degenerate(&g.name, "TPR", "no positive documents"))?;
        let (pos, neg) = split_scores(corpus.in_group(&schema.name, &g.name))?;
        let auc = auc(&pos, &neg).map_err(|_| degenerate(&g.name, "AUC", "needs both classes"))?;
        groups.push(GroupScores {
            group: g.name.clone(),
            role: g.role,
            fpr,
            tpr,
            auc,
            n: stats.total(),
        });
    }
    let (pos, neg) = split_scores(
        corpus
            .iter()
            .filter(|d| schema.groups.iter().any(|g| d.has_group(&schema.name, &g.name))),
    )?;
    let auc_overall =
        auc(&pos, &neg).map_err(|_| degenerate(&schema.name, "AUC", "the attribute's documents need both classes"))?;
    let gaps = gaps(&groups);
    Ok(FairnessReport {
        attribute: schema.name.clone(),
        auc_overall,
        fpr_gap: gaps.fpr,
        tpr_gap: gaps.tpr,
        auc_gap: gaps.auc,
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub group: String,
    pub role: Role,
    pub n: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBiasReport {
    pub attribute: String,
    /// Undefined (null) when one side has no documents.
    pub selection: Option<f64>,
    pub overamplification_raw: f64,
    pub overamplification_norm: f64,
    pub groups: Vec<GroupCounts>,
}

/// (documents, positives) in the union of the groups with `role`.
fn pool(corpus: &Corpus, schema: &AttributeSchema, role: Role) -> (usize, usize) {
    let names: Vec<&str> = schema.groups_with_role(role).map(|g| g.name.as_str()).collect();
    corpus
        .iter()
        .filter(|d| names.iter().any(|g| d.has_group(&schema.name, g)))
        .fold((0, 0), |(n, p), d| (n + 1, p + usize::from(d.is_toxic())))
}

/// Difference in positive ratios between the marginalized and the
/// non-marginalized pools (each pool unions its groups' documents).
pub fn selection_bias(corpus: &Corpus, schema: &AttributeSchema) -> Result<f64> {
    let (nm, pm) = pool(corpus, schema, Role::Marginalized);
    let (nn, pn) = pool(corpus, schema, Role::NonMarginalized);
    if nm == 0 || nn == 0 {
        return Err(Error::EmptyGroup {
            attribute: schema.name.clone(),
            group: if nm == 0 {
                "marginalized pool"
            } else {
                "non-marginalized pool"
            }
            .into(),
        });
    }
    Ok((pm as f64 / nm as f64 - pn as f64 / nn as f64).abs())
}

fn group_counts(corpus: &Corpus, schema: &AttributeSchema) -> Vec<GroupCounts> {
    schema
        .groups
        .iter()
        .map(|g| {
            let (n, positives) = corpus
                .in_group(&schema.name, &g.name)
                .fold((0, 0), |(n, p), d| (n + 1, p + usize::from(d.is_toxic())));
            GroupCounts {
                group: g.name.clone(),
                role: g.role,
                n,
                positives,
            }
        })
        .collect()
}

/// |mean group size on the marginalized side - mean group size on the
/// non-marginalized side|.
pub fn overamplification_raw(counts: &[GroupCounts]) -> f64 {
    let side = |role| mean(counts.iter().filter(|c| c.role == role).map(|c| c.n as f64));
    (side(Role::Marginalized) - side(Role::NonMarginalized)).abs()
}

/// Divides each value by the maximum; all zeros stay zero.
pub fn max_normalize(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.iter().map(|&r| if max > 0.0 { r / max } else { 0.0 }).collect()
}

/// Selection and overamplification bias for every attribute of `schemas`,
/// overamplification max-normalized across the attributes.
pub fn overamplification_bias(corpus: &Corpus, schemas: &SchemaSet) -> Result<Vec<DatasetBiasReport>> {
    if schemas.attributes.is_empty() {
        return Err(Error::EmptyInput("no attributes to measure".into()));
    }
    let mut reports: Vec<DatasetBiasReport> = schemas
        .attributes
        .iter()
        .map(|schema| {
            let groups = group_counts(corpus, schema);
            DatasetBiasReport {
                attribute: schema.name.clone(),
                selection: selection_bias(corpus, schema).ok(),
                overamplification_raw: overamplification_raw(&groups),
                overamplification_norm: 0.0,
                groups,
            }
        })
        .collect();
    let raw: Vec<f64> = reports.iter().map(|r| r.overamplification_raw).collect();
    for (r, n) in reports.iter_mut().zip(max_normalize(&raw)) {
        r.overamplification_norm = n;
    }
    Ok(reports)
}

/// |mean(counterfactual - factual)|: the absolute value of the mean shift,
/// so opposite shifts cancel.
pub fn sense_score(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no counterfactual pairs".into()));
    }
    let mut sum = 0.0;
    for &(factual, counter) in pairs {
        if !(0.0..=1.0).contains(&factual) || !(0.0..=1.0).contains(&counter) {
            return Err(Error::InvalidValue(format!(
                "pair scores ({factual}, {counter}) must lie in [0, 1]"
            )));
        }
        sum += counter - factual;
    }
    Ok((sum / pairs.len() as f64).abs())
}

/// (factual score, counterfactual score) for every perturbed document that
/// moved an original of `from` to `to`, in corpus order.
pub fn pair_counterfactuals(corpus: &Corpus, attribute: &str, from: &str, to: &str) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for d in corpus {
        let Provenance::Perturbed { source, from: f, to: t } = &d.provenance else {
            continue;
        };
        if f != from || t != to || !d.has_group(attribute, to) {
            continue;
        }
        let original = corpus.get(source).ok_or_else(|| Error::UnknownId(source.clone()))?;
        if !original.has_group(attribute, from) {
            continue;
        }
        let factual = original.score.ok_or_else(|| Error::MissingScore {
            id: original.id.clone(),
        })?;
        let counter = d.score.ok_or_else(|| Error::MissingScore { id: d.id.clone() })?;
        pairs.push((factual, counter));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensePair {
    pub from: String,
    pub to: String,
    pub n: usize,
    pub sense_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseReport {
    pub attribute: String,
    /// Pooled over every non-marginalized original and its marginalized
    /// counterfactuals.
    pub sense_score: f64,
    pub n: usize,
    pub pairs: Vec<SensePair>,
}

pub fn sense_report(corpus: &Corpus, schema: &AttributeSchema) -> Result<SenseReport> {
    let mut pooled = Vec::new();
    let mut pairs = Vec::new();
    for from in schema.non_marginalized() {
        for to in schema.marginalized() {
            let p = pair_counterfactuals(corpus, &schema.name, &from.name, &to.name)?;
            if p.is_empty() {
                continue;
            }
            pairs.push(SensePair {
                from: from.name.clone(),
                to: to.name.clone(),
                n: p.len(),
                sense_score: sense_score(&p)?,
            });
            pooled.extend(p);
        }
    }
    Ok(SenseReport {
        attribute: schema.name.clone(),
        sense_score: sense_score(&pooled)?,
        n: pooled.len(),
        pairs,
    })
}

/// Ids of documents annotated with any group of `schema`.
pub fn attribute_members<'a>(corpus: &'a Corpus, schema: &AttributeSchema) -> HashSet<&'a str> {
    corpus
        .iter()
        .filter(|d| d.mentions_attribute(&schema.name))
        .map(|d| d.id.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::schema::{GroupSpec, LexiconEntry};

    fn scored(id: &str, attr: &str, group: &str, label: u8, score: f64) -> Document {
        Document::new(id, "", Label::try_from(label).unwrap())
            .with_identity(attr, group)
            .with_score(score)
    }

    #[test]
    fn confusion_counts() {
        let c = Corpus::new(vec![
            scored("a", "gender", "Male", 1, 0.9),
            scored("b", "gender", "Male", 0, 0.2),
        ])
        .unwrap();
        let s = confusion(&c, "gender", "Male", 0.5).unwrap();
        assert_eq!((s.tp, s.tn, s.fp, s.fn_), (1, 1, 0, 0));

        let c = Corpus::new(vec![scored("a", "gender", "Male", 0, 0.5)]).unwrap();
        assert_eq!(confusion(&c, "gender", "Male", 0.5).unwrap().fp, 1);

        let c = Corpus::new(vec![
            scored("a", "gender", "Male", 0, 0.6),
            scored("b", "gender", "Male", 1, 0.7),
            scored("c", "gender", "Male", 1, 0.4),
        ])
        .unwrap();
        let s = confusion(&c, "gender", "Male", 0.5).unwrap();
        assert_eq!((s.fp, s.tp, s.fn_, s.tn), (1, 1, 1, 0));

        assert!(matches!(
            confusion(&c, "gender", "Female", 0.5),
            Err(Error::EmptyGroup { .. })
        ));
        assert!(confusion(&c, "gender", "Male", 1.0).is_err());
        let unscored = Corpus::new(vec![
            Document::new("u", "", Label::Toxic).with_identity("gender", "Male")
        ])
        .unwrap();
        assert!(matches!(
            confusion(&unscored, "gender", "Male", 0.5),
            Err(Error::MissingScore { .. })
        ));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.8, 0.9], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.4], &[0.3, 0.8]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert!(matches!(auc(&[], &[0.5]), Err(Error::EmptyInput(_))));
        assert!(auc(&[f64::NAN], &[0.5]).is_err());
    }

    fn abc_schema() -> AttributeSchema {
        let g = |name: &str, role| GroupSpec {
            name: name.into(),
            role,
            lexicon: vec![LexiconEntry {
                slot: "s".into(),
                surfaces: vec![name.to_lowercase()],
            }],
        };
        AttributeSchema {
            name: "race".into(),
            groups: vec![
                g("Black", Role::Marginalized),
                g("Asian", Role::Marginalized),
                g("White", Role::NonMarginalized),
            ],
        }
    }

    /// Group with `fp` false positives among `neg` negatives and one
    /// positive scored 0.9.
    fn group_docs(group: &str, fp: usize, neg: usize) -> Vec<Document> {
        let mut docs = vec![scored(&format!("{group}-p"), "race", group, 1, 0.9)];
        for i in 0..neg {
            let s = if i < fp { 0.7 } else { 0.1 };
            docs.push(scored(&format!("{group}-n{i}"), "race", group, 0, s));
        }
        docs
    }

    #[test]
    fn fpr_gap_averages_marginalized_groups() {
        // FPRs: Black 2/10 = 0.2, Asian 1/10 = 0.1, White 3/25 = 0.12
        let mut docs = group_docs("Black", 2, 10);
        docs.extend(group_docs("Asian", 1, 10));
        docs.extend(group_docs("White", 3, 25));
        let c = Corpus::new(docs).unwrap();
        let r = fairness_report(&c, &abc_schema(), 0.5).unwrap();
        assert!((r.fpr_gap - 0.03).abs() < 1e-12);
        assert_eq!(r.tpr_gap, 0.0);
        let g = gaps(&r.groups);
        assert_eq!((g.fpr, g.tpr, g.auc), (r.fpr_gap, r.tpr_gap, r.auc_gap));
    }

    #[test]
    fn swapping_roles_with_one_group_per_side_keeps_gaps() {
        let gender = SchemaSet::builtin().attribute("gender").unwrap().clone();
        let docs = vec![
            scored("f1", "gender", "Female", 1, 0.8),
            scored("f2", "gender", "Female", 0, 0.6),
            scored("f3", "gender", "Female", 0, 0.2),
            scored("m1", "gender", "Male", 1, 0.4),
            scored("m2", "gender", "Male", 0, 0.3),
        ];
        let c = Corpus::new(docs).unwrap();
        let r = fairness_report(&c, &gender, 0.5).unwrap();
        let mut swapped = gender.clone();
        swapped.groups.iter_mut().for_each(|g| {
            g.role = if g.role == Role::Marginalized {
                Role::NonMarginalized
            } else {
                Role::Marginalized
            }
        });
        let s = fairness_report(&c, &swapped, 0.5).unwrap();
        assert_eq!((r.fpr_gap, r.tpr_gap, r.auc_gap), (s.fpr_gap, s.tpr_gap, s.auc_gap));
        assert_eq!(r.fpr_gap, 0.5);
        assert_eq!(r.tpr_gap, 1.0);
    }

    #[test]
    fn identical_groups_have_zero_gaps() {
        let gender = SchemaSet::builtin().attribute("gender").unwrap().clone();
        let mut docs = Vec::new();
        for (i, (l, s)) in [(1, 0.8), (0, 0.3), (0, 0.6), (1, 0.45)].into_iter().enumerate() {
            docs.push(scored(&format!("f{i}"), "gender", "Female", l, s));
            docs.push(scored(&format!("m{i}"), "gender", "Male", l, s));
        }
        let r = fairness_report(&Corpus::new(docs).unwrap(), &gender, 0.5).unwrap();
        assert_eq!((r.fpr_gap, r.tpr_gap, r.auc_gap), (0.0, 0.0, 0.0));
    }

    #[test]
    fn degenerate_group_names_metric() {
        let gender = SchemaSet::builtin().attribute("gender").unwrap().clone();
        let c = Corpus::new(vec![
            scored("f1", "gender", "Female", 1, 0.8),
            scored("f2", "gender", "Female", 0, 0.6),
            scored("m1", "gender", "Male", 1, 0.4),
        ])
        .unwrap();
        match fairness_report(&c, &gender, 0.5) {
            Err(Error::DegenerateMetric { group, metric, .. }) => {
                assert_eq!(group, "Male");
                assert_eq!(metric, "FPR");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn labelled(prefix: &str, group: &str, n: usize, pos: usize) -> Vec<Document> {
        (0..n)
            .map(|i| {
                Document::new(format!("{prefix}{i}"), "", Label::try_from(u8::from(i < pos)).unwrap())
                    .with_identity("gender", group)
            })
            .collect()
    }

    #[test]
    fn selection_bias_arithmetic() {
        let gender = SchemaSet::builtin().attribute("gender").unwrap().clone();
        let mut docs = labelled("f", "Female", 10, 3);
        docs.extend(labelled("m", "Male", 8, 2));
        let c = Corpus::new(docs).unwrap();
        assert!((selection_bias(&c, &gender).unwrap() - 0.05).abs() < 1e-12);

        let mut docs = labelled("f", "Female", 10, 5);
        docs.extend(labelled("m", "Male", 4, 2));
        assert_eq!(selection_bias(&Corpus::new(docs).unwrap(), &gender).unwrap(), 0.0);
        assert!(selection_bias(&Corpus::new(labelled("f", "Female", 3, 1)).unwrap(), &gender).is_err());
    }

    #[test]
    fn max_normalization_matches_reported_values() {
        let norm = max_normalize(&[5795.0, 5795.0, 6118.5]);
        assert_eq!(norm[2], 1.0);
        assert!((norm[0] - 0.9471).abs() < 1e-4);
        assert_eq!(norm[0], norm[1]);
        assert_eq!(max_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn overamplification_uses_group_counts() {
        let schemas = SchemaSet::builtin().select(&["gender".into()]).unwrap();
        let mut docs = labelled("f", "Female", 100, 0);
        docs.extend(labelled("m", "Male", 60, 0));
        let r = overamplification_bias(&Corpus::new(docs).unwrap(), &schemas).unwrap();
        assert_eq!(r[0].overamplification_raw, 40.0);
        assert_eq!(r[0].overamplification_norm, 1.0);

        let mut docs = labelled("f", "Female", 5, 0);
        docs.extend(labelled("m", "Male", 5, 0));
        let r = overamplification_bias(&Corpus::new(docs).unwrap(), &schemas).unwrap();
        assert_eq!((r[0].overamplification_raw, r[0].overamplification_norm), (0.0, 0.0));
    }

    #[test]
    fn sense_score_is_abs_of_mean() {
        assert_eq!(sense_score(&[(0.3, 0.3), (0.9, 0.9)]).unwrap(), 0.0);
        assert!(sense_score(&[(0.5, 0.6), (0.5, 0.4)]).unwrap() < 1e-15);
        assert!((sense_score(&[(0.1, 0.3), (0.2, 0.6)]).unwrap() - 0.3).abs() < 1e-12);
        assert!(sense_score(&[]).is_err());
        assert!(sense_score(&[(0.1, 1.5)]).is_err());
    }

    #[test]
    fn pairs_follow_provenance() {
        let schemas = SchemaSet::builtin();
        let base = Corpus::new(vec![
            Document::new("m1", "he", Label::NonToxic).with_identity("gender", "Male"),
            Document::new("m2", "his", Label::Toxic).with_identity("gender", "Male"),
            Document::new("b1", "black", Label::Toxic).with_identity("race", "Black"),
        ])
        .unwrap();
        let gender =
            crate::perturb::build_balanced_fairness_set(&base, &schemas.select(&["gender".into()]).unwrap()).unwrap();
        let race =
            crate::perturb::build_balanced_fairness_set(&base, &schemas.select(&["race".into()]).unwrap()).unwrap();
        let mut docs: Vec<Document> = gender.into_documents();
        docs.extend(
            race.into_documents()
                .into_iter()
                .filter(|d| d.id != "b1")
                .collect::<Vec<_>>(),
        );
        docs.push(base.get("b1").unwrap().clone());
        let docs = docs
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.with_score(0.1 + 0.05 * i as f64))
            .collect();
        let c = Corpus::new(docs).unwrap();
        assert_eq!(pair_counterfactuals(&c, "gender", "Male", "Female").unwrap().len(), 2);
        assert_eq!(pair_counterfactuals(&c, "race", "Black", "White").unwrap().len(), 1);
        assert!(pair_counterfactuals(&c, "gender", "Female", "Male").unwrap().is_empty());
    }
}
