//! Sensitive attributes, their identity groups and slot-aligned lexicons.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

const DEFAULT_SCHEMA: &str = include_str!("../data/default_schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Marginalized,
    NonMarginalized,
}

/// Surface forms filling one cross-group slot. The first surface is the
/// canonical form used when another group's surface is mapped onto this slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub slot: String,
    pub surfaces: Vec<String>,
}

impl LexiconEntry {
    pub fn canonical(&self) -> &str {
        &self.surfaces[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub lexicon: Vec<LexiconEntry>,
}

impl GroupSpec {
    pub fn entry(&self, slot: &str) -> Option<&LexiconEntry> {
        self.lexicon.iter().find(|e| e.slot == slot)
    }

    /// Slot holding `surface` (lowercase), if any.
    pub fn slot_of(&self, surface: &str) -> Option<&LexiconEntry> {
        self.lexicon.iter().find(|e| e.surfaces.iter().any(|s| s == surface))
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.lexicon.iter().flat_map(|e| e.surfaces.iter().map(String::as_str))
    }
}

/// A sensitive attribute such as gender, with its identity groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub groups: Vec<GroupSpec>,
}

impl AttributeSchema {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchema(format!("attribute `{}`: {msg}", self.name)));
        if self.name.is_empty() {
            return Err(Error::InvalidSchema("attribute with empty name".into()));
        }
        if !self.groups.iter().any(|g| g.role == Role::Marginalized) {
            return bad("needs at least one marginalized group".into());
        }
        if !self.groups.iter().any(|g| g.role == Role::NonMarginalized) {
            return bad("needs at least one non-marginalized group".into());
        }
        let mut names = HashSet::new();
        for g in &self.groups {
            if !names.insert(g.name.as_str()) {
                return bad(format!("duplicate group `{}`", g.name));
            }
            let mut slots = HashSet::new();
            let mut seen = HashSet::new();
            for e in &g.lexicon {
                if !slots.insert(e.slot.as_str()) {
                    return bad(format!("group `{}` repeats slot `{}`", g.name, e.slot));
                }
                if e.surfaces.is_empty() {
                    return bad(format!("slot `{}` of group `{}` has no surfaces", e.slot, g.name));
                }
                for s in &e.surfaces {
                    if !text::is_single_token(s) || s.to_lowercase() != *s {
                        return bad(format!(
                            "surface `{s}` in group `{}` must be one lowercase alphanumeric token",
                            g.name
                        ));
                    }
                    if !seen.insert(s.as_str()) {
                        return bad(format!("surface `{s}` appears in two slots of group `{}`", g.name));
                    }
                }
            }
        }
        let all_slots: BTreeSet<&str> = self
            .groups
            .iter()
            .flat_map(|g| g.lexicon.iter().map(|e| e.slot.as_str()))
            .collect();
        for g in &self.groups {
            for slot in &all_slots {
                if g.entry(slot).is_none() {
                    return Err(Error::IncompleteMapping {
                        attribute: self.name.clone(),
                        group: g.name.clone(),
                        slot: slot.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn group(&self, name: &str) -> Result<&GroupSpec> {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGroup {
                attribute: self.name.clone(),
                group: name.to_string(),
            })
    }

    pub fn has_group(&self, name: &str) -> bool {
        self.groups.iter().any(|g| g.name == name)
    }

    pub fn groups_with_role(&self, role: Role) -> impl Iterator<Item = &GroupSpec> {
        self.groups.iter().filter(move |g| g.role == role)
    }

    pub fn marginalized(&self) -> impl Iterator<Item = &GroupSpec> {
        self.groups_with_role(Role::Marginalized)
    }

    pub fn non_marginalized(&self) -> impl Iterator<Item = &GroupSpec> {
        self.groups_with_role(Role::NonMarginalized)
    }

    /// Every surface of every group, lowercase.
    pub fn all_surfaces(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flat_map(GroupSpec::surfaces)
    }
}

/// The attribute schemas active for one corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSet {
    pub name: String,
    pub attributes: Vec<AttributeSchema>,
}

impl SchemaSet {
    pub fn new(name: impl Into<String>, attributes: Vec<AttributeSchema>) -> Result<Self> {
        let set = SchemaSet {
            name: name.into(),
            attributes,
        };
        set.validate()?;
        Ok(set)
    }

    /// Gender, race and religion with the marginalized / non-marginalized
    /// split Female/Male, Black+Asian/White and Jewish+Muslim/Christian.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let set: SchemaSet = serde_json::from_str(json).map_err(|e| Error::json("schema", e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path.display().to_string(), source),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for a in &self.attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute `{}`", a.name)));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeSchema> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn contains(&self, attribute: &str, group: &str) -> bool {
        self.attributes
            .iter()
            .any(|a| a.name == attribute && a.has_group(group))
    }

    /// Restricts the set to the named attributes, in the given order.
    pub fn select(&self, names: &[String]) -> Result<SchemaSet> {
        let attributes = names
            .iter()
            .map(|n| self.attribute(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Ok(SchemaSet {
            name: self.name.clone(),
            attributes,
        })
    }

    /// Every lexicon surface across all attributes.
    pub fn protected_surfaces(&self) -> HashSet<String> {
        self.attributes
            .iter()
            .flat_map(|a| a.all_surfaces().map(str::to_string))
            .collect()
    }

    /// Lookup from attribute name to schema.
    pub fn by_name(&self) -> HashMap<&str, &AttributeSchema> {
        self.attributes.iter().map(|a| (a.name.as_str(), a)).collect()
    }
}
