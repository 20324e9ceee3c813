//! Counterfactual text generation by slot-aligned lexical replacement.
//!
//! A source-group surface is replaced by the canonical surface that fills
//! the same slot in the target group ("men" -> "women", "sir" ->
//! "mademoiselle"). The same machinery builds the balanced fairness set and
//! the perturbed training set: every eligible document is emitted once per
//! group of the attribute with its label untouched.

use std::collections::HashMap;

use crate::corpus::{Corpus, Document, Identity, Provenance};
use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, SchemaSet};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationRule {
    pub attribute: String,
    pub from: String,
    pub to: String,
    mapping: HashMap<String, String>,
}

impl PerturbationRule {
    pub fn new(schema: &AttributeSchema, from: &str, to: &str) -> Result<Self> {
        let source = schema.group(from)?;
        let target = schema.group(to)?;
        let mut mapping = HashMap::new();
        for entry in &source.lexicon {
            let dest = target.entry(&entry.slot).ok_or_else(|| Error::IncompleteMapping {
                attribute: schema.name.clone(),
                group: to.to_string(),
                slot: entry.slot.clone(),
            })?;
            for s in &entry.surfaces {
                mapping.insert(s.clone(), dest.canonical().to_string());
            }
        }
        Ok(PerturbationRule {
            attribute: schema.name.clone(),
            from: from.to_string(),
            to: to.to_string(),
            mapping,
        })
    }

    /// Target surface for a lowercase source surface.
    pub fn target_of(&self, surface: &str) -> Option<&str> {
        self.mapping.get(surface).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// The rule mapping `to` back onto `from`.
    pub fn inverse(&self, schema: &AttributeSchema) -> Result<Self> {
        PerturbationRule::new(schema, &self.to, &self.from)
    }
}

/// Replaces every whole-token occurrence of a source-group surface.
pub fn perturb_text(text: &str, rule: &PerturbationRule) -> String {
    text::rewrite_tokens(text, |_, token| {
        rule.target_of(&token.to_lowercase())
            .map(|t| text::match_case(token, t))
    })
}

/// Replaces each surface of `group` by its slot's canonical surface.
pub fn canonicalize(text: &str, schema: &AttributeSchema, group: &str) -> Result<String> {
    let g = schema.group(group)?;
    Ok(text::rewrite_tokens(text, |_, token| {
        g.slot_of(&token.to_lowercase())
            .map(|e| text::match_case(token, e.canonical()))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fairness,
    Training,
}

/// Id given to the counterfactual of `source` moved to group `to`.
pub fn perturbed_id(source: &str, to: &str) -> String {
    format!("{source}~{to}")
}

struct RuleCache<'a> {
    schema: &'a AttributeSchema,
    rules: HashMap<(String, String), PerturbationRule>,
}

impl<'a> RuleCache<'a> {
    fn get(&mut self, from: &str, to: &str) -> Result<&PerturbationRule> {
        let key = (from.to_string(), to.to_string());
        if !self.rules.contains_key(&key) {
            let rule = PerturbationRule::new(self.schema, from, to)?;
            self.rules.insert(key.clone(), rule);
        }
        Ok(&self.rules[&key])
    }
}

/// Which listed attribute (and group) a document can be expanded over:
/// exactly one group of exactly one listed attribute.
enum Eligibility<'a> {
    None,
    One(usize, &'a str),
    Ambiguous,
}

fn eligibility<'a>(doc: &'a Document, schemas: &'a SchemaSet) -> Eligibility<'a> {
    let mut found = Eligibility::None;
    for (ai, attr) in schemas.attributes.iter().enumerate() {
        if !doc.mentions_attribute(&attr.name) {
            continue;
        }
        match (&found, doc.single_group(&attr.name)) {
            (Eligibility::None, Some(g)) => found = Eligibility::One(ai, g),
            _ => return Eligibility::Ambiguous,
        }
    }
    found
}

fn counterfactual(doc: &Document, rule: &PerturbationRule) -> Document {
    let mut identities = doc.identities.clone();
    identities.remove(&Identity::new(&rule.attribute, &rule.from));
    identities.insert(Identity::new(&rule.attribute, &rule.to));
    Document {
        id: perturbed_id(&doc.id, &rule.to),
        text: perturb_text(&doc.text, rule),
        label: doc.label,
        identities,
        score: None,
        provenance: Provenance::Perturbed {
            source: doc.id.clone(),
            from: rule.from.clone(),
            to: rule.to.clone(),
        },
    }
}

fn expand(corpus: &Corpus, schemas: &SchemaSet, mode: Mode) -> Result<Corpus> {
    for a in &schemas.attributes {
        a.validate()?;
    }
    let mut caches: Vec<RuleCache> = schemas
        .attributes
        .iter()
        .map(|schema| RuleCache {
            schema,
            rules: HashMap::new(),
        })
        .collect();
    let mut out = Vec::with_capacity(corpus.len() * 2);
    for doc in corpus {
        match eligibility(doc, schemas) {
            Eligibility::None => {
                if mode == Mode::Training {
                    out.push(doc.clone());
                }
            }
            Eligibility::Ambiguous => {}
            Eligibility::One(ai, group) => {
                let schema = &schemas.attributes[ai];
                schema.group(group)?;
                for target in &schema.groups {
                    if target.name == group {
                        out.push(doc.clone());
                    } else {
                        let rule = caches[ai].get(group, &target.name)?;
                        out.push(counterfactual(doc, rule));
                    }
                }
            }
        }
    }
    corpus.derive(out)
}

/// Evaluation set in which every group of every listed attribute has the
/// same size and the same positive ratio.
///
/// Each document carrying exactly one group of exactly one listed
/// attribute is emitted once per group of that attribute: the original at
/// its own group's position, a counterfactual everywhere else, in schema
/// group order. Documents mentioning no listed attribute, several listed
/// attributes or several groups of one attribute are left out.
pub fn build_balanced_fairness_set(corpus: &Corpus, schemas: &SchemaSet) -> Result<Corpus> {
    expand(corpus, schemas, Mode::Fairness)
}

/// Training set in which every identity group appears in every context.
///
/// Same expansion as [`build_balanced_fairness_set`], except that
/// documents mentioning no listed attribute pass through once.
pub fn build_perturbed_training_set(corpus: &Corpus, schemas: &SchemaSet) -> Result<Corpus> {
    expand(corpus, schemas, Mode::Training)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::metrics;
    use crate::schema::{GroupSpec, LexiconEntry, Role};
    use proptest::prelude::*;

    const MALE_EXAMPLE: &str = "% of men lie to law-enforcement officers when question into domestic violence cases it is not without marks on the body or conclusive proof that the men are charged you sir you are one of the men that is the problem I can tell !";
    const FEMALE_EXAMPLE: &str = "% of women lie to law-enforcement officers when question into domestic violence cases it is not without marks on the body or conclusive proof that the women are charged you mademoiselle you are one of the women that is the problem I can tell !";

    fn gender() -> AttributeSchema {
        SchemaSet::builtin().attribute("gender").unwrap().clone()
    }

    fn race_two_slots() -> AttributeSchema {
        let g = |name: &str, role, adj: &[&str], pl: &[&str]| GroupSpec {
            name: name.into(),
            role,
            lexicon: vec![
                LexiconEntry {
                    slot: "adj".into(),
                    surfaces: adj.iter().map(|s| s.to_string()).collect(),
                },
                LexiconEntry {
                    slot: "plural".into(),
                    surfaces: pl.iter().map(|s| s.to_string()).collect(),
                },
            ],
        };
        AttributeSchema {
            name: "race".into(),
            groups: vec![
                g("Black", Role::Marginalized, &["black"], &["blacks"]),
                g("Asian", Role::Marginalized, &["asian", "chinese"], &["asians"]),
                g("White", Role::NonMarginalized, &["white"], &["whites"]),
            ],
        }
    }

    #[test]
    fn gender_swap_example() {
        let rule = PerturbationRule::new(&gender(), "Male", "Female").unwrap();
        assert_eq!(perturb_text(MALE_EXAMPLE, &rule), FEMALE_EXAMPLE);
    }

    #[test]
    fn no_identity_terms_unchanged() {
        let rule = PerturbationRule::new(&gender(), "Male", "Female").unwrap();
        assert_eq!(perturb_text("the weather is nice", &rule), "the weather is nice");
    }

    #[test]
    fn capitalization_preserved() {
        let rule = PerturbationRule::new(&race_two_slots(), "Black", "Asian").unwrap();
        assert_eq!(
            perturb_text("Black people and blacks", &rule),
            "Asian people and asians"
        );
        assert_eq!(perturb_text("BLACKS, black!", &rule), "ASIANS, asian!");
    }

    #[test]
    fn many_surfaces_map_to_one_canonical() {
        let schema = race_two_slots();
        let rule = PerturbationRule::new(&schema, "Asian", "White").unwrap();
        assert_eq!(perturb_text("chinese and asian", &rule), "white and white");
        let back = rule.inverse(&schema).unwrap();
        assert_eq!(perturb_text("white and white", &back), "asian and asian");
        assert_eq!(
            canonicalize("Chinese and asian", &schema, "Asian").unwrap(),
            "Asian and asian"
        );
    }

    #[test]
    fn incomplete_mapping_is_an_error() {
        let mut schema = race_two_slots();
        schema.groups[2].lexicon.pop();
        assert!(matches!(
            PerturbationRule::new(&schema, "Black", "White"),
            Err(Error::IncompleteMapping { .. })
        ));
    }

    fn set(schema: AttributeSchema) -> SchemaSet {
        SchemaSet {
            name: "t".into(),
            attributes: vec![schema],
        }
    }

    #[test]
    fn two_gender_docs_become_four() {
        let c = Corpus::new(vec![
            Document::new("m", "he is here", Label::NonToxic).with_identity("gender", "Male"),
            Document::new("f", "she is here", Label::NonToxic).with_identity("gender", "Female"),
        ])
        .unwrap();
        let out = build_balanced_fairness_set(&c, &set(gender())).unwrap();
        let ids: Vec<_> = out.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["m~Female", "m", "f", "f~Male"]);
        assert_eq!(out.get("m~Female").unwrap().text, "she is here");
        assert_eq!(out.in_group("gender", "Female").count(), 2);
        assert_eq!(out.in_group("gender", "Male").count(), 2);
        assert!(out.iter().all(|d| !d.is_toxic()));
    }

    #[test]
    fn three_groups_triple_the_input() {
        let schema = race_two_slots();
        let groups = ["Black", "Asian", "White", "Black", "Black", "White"];
        let docs = groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                Document::new(format!("d{i}"), "some text", Label::try_from((i % 2) as u8).unwrap())
                    .with_identity("race", g)
            })
            .collect();
        let out = build_balanced_fairness_set(&Corpus::new(docs).unwrap(), &set(schema)).unwrap();
        assert_eq!(out.len(), 18);
        for g in ["Black", "Asian", "White"] {
            assert_eq!(out.in_group("race", g).count(), 6);
            assert_eq!(out.in_group("race", g).filter(|d| d.is_toxic()).count(), 3);
        }
    }

    #[test]
    fn unequal_ratios_are_equalized() {
        let mut docs = Vec::new();
        for i in 0..25 {
            docs.push(
                Document::new(format!("f{i}"), "she", Label::try_from(u8::from(i < 3)).unwrap())
                    .with_identity("gender", "Female"),
            );
        }
        for i in 0..10 {
            docs.push(
                Document::new(format!("m{i}"), "he", Label::try_from(u8::from(i < 1)).unwrap())
                    .with_identity("gender", "Male"),
            );
        }
        // ratios 3/25 = 0.12 and 1/10 = 0.10 before balancing
        let out = build_balanced_fairness_set(&Corpus::new(docs).unwrap(), &set(gender())).unwrap();
        for g in ["Female", "Male"] {
            let members: Vec<_> = out.in_group("gender", g).collect();
            assert_eq!(members.len(), 35);
            assert_eq!(members.iter().filter(|d| d.is_toxic()).count(), 4);
        }
    }

    #[test]
    fn training_set_sizes_and_passthrough() {
        let mut docs = Vec::new();
        for i in 0..100 {
            docs.push(Document::new(format!("f{i}"), "she", Label::NonToxic).with_identity("gender", "Female"));
        }
        for i in 0..40 {
            docs.push(Document::new(format!("m{i}"), "he", Label::Toxic).with_identity("gender", "Male"));
        }
        docs.push(Document::new("n", "nobody", Label::NonToxic));
        let schemas = set(gender());
        let out = build_perturbed_training_set(&Corpus::new(docs).unwrap(), &schemas).unwrap();
        assert_eq!(out.in_group("gender", "Female").count(), 140);
        assert_eq!(out.in_group("gender", "Male").count(), 140);
        assert_eq!(out.iter().filter(|d| d.id == "n").count(), 1);
        assert_eq!(out.len(), 281);
        let report = metrics::overamplification_bias(&out, &schemas).unwrap();
        assert_eq!(report[0].overamplification_raw, 0.0);
    }

    #[test]
    fn other_attribute_annotations_carried() {
        let schemas = SchemaSet::builtin();
        let only_gender = schemas.select(&["gender".into()]).unwrap();
        let c = Corpus::new(vec![Document::new("a", "the black man", Label::Toxic)
            .with_identity("gender", "Male")
            .with_identity("race", "Black")])
        .unwrap();
        let out = build_balanced_fairness_set(&c, &only_gender).unwrap();
        let cf = out.get("a~Female").unwrap();
        assert_eq!(cf.text, "the black woman");
        assert!(cf.has_group("race", "Black"));
        assert!(cf.has_group("gender", "Female"));
        assert!(!cf.has_group("gender", "Male"));
        // Balancing gender and race at once cannot keep both exact for it.
        assert!(build_balanced_fairness_set(&c, &schemas).unwrap().is_empty());
    }

    fn male_sentence() -> impl Strategy<Value = String> {
        let male: Vec<String> = gender().group("Male").unwrap().surfaces().map(String::from).collect();
        let filler = vec![
            "the", "a", "went", "home", "toxic", "people", "you", "are", "one", "of", "nice", "42",
        ];
        let word = prop_oneof![
            proptest::sample::select(male),
            proptest::sample::select(filler.into_iter().map(String::from).collect::<Vec<_>>()),
        ];
        let cased = (word, 0..3u8).prop_map(|(w, c)| match c {
            0 => w,
            1 => text::match_case("Xx", &w),
            _ => w.to_uppercase(),
        });
        let sep = proptest::sample::select(vec![" ", ", ", "! ", " - ", "'s "]);
        proptest::collection::vec((cased, sep), 1..20)
            .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect::<String>())
    }

    proptest! {
        #[test]
        fn round_trip_recovers_canonical_text(t in male_sentence()) {
            let schema = gender();
            let there = PerturbationRule::new(&schema, "Male", "Female").unwrap();
            let back = there.inverse(&schema).unwrap();
            let round = perturb_text(&perturb_text(&t, &there), &back);
            prop_assert_eq!(round, canonicalize(&t, &schema, "Male").unwrap());
            prop_assert_eq!(text::tokens(&perturb_text(&t, &there)).len(), text::tokens(&t).len());
        }
    }
}
