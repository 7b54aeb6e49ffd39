//! The item corpus: embeddings, curated tags and the demographic groups
//! derived from them.
//!
//! A [`Catalog`] is validated once at construction and immutable afterwards.
//! Items are kept in a `BTreeMap`, so every iteration is in ascending id order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Canonical form of a curated tag: trimmed and lowercased.
pub fn normalize_tag(tag: &str) -> String {
    tag.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingItem {
    pub id: String,
    pub vector: Vec<f64>,
    pub tags: BTreeSet<String>,
    pub groups: BTreeSet<String>,
}

impl EmbeddingItem {
    pub fn in_group(&self, group: &str) -> bool {
        self.groups.contains(group)
    }
}

/// Ordered demographic groups plus the tag rules that assign items to them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMapping {
    groups: Vec<String>,
    tag_rules: BTreeMap<String, String>,
}

impl GroupMapping {
    /// Builds a mapping; tag keys are normalized, every rule must target a
    /// declared group and group names must be unique.
    pub fn new<G, R, T, U>(groups: G, rules: R) -> Result<Self>
    where
        G: IntoIterator,
        G::Item: Into<String>,
        R: IntoIterator<Item = (T, U)>,
        T: AsRef<str>,
        U: Into<String>,
    {
        let groups: Vec<String> = groups.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidMapping("empty group name".to_string()));
            }
            if !seen.insert(g.as_str()) {
                return Err(Error::InvalidMapping(alloc::format!("group `{g}` declared twice")));
            }
        }
        let mut tag_rules = BTreeMap::new();
        for (tag, group) in rules {
            let tag = normalize_tag(tag.as_ref());
            let group = group.into();
            if !seen.contains(group.as_str()) {
                return Err(Error::InvalidMapping(alloc::format!("rule `{tag}` targets undeclared group `{group}`")));
            }
            if let Some(prev) = tag_rules.insert(tag.clone(), group.clone()) {
                if prev != group {
                    return Err(Error::InvalidMapping(alloc::format!(
                        "tag `{tag}` mapped to both `{prev}` and `{group}`"
                    )));
                }
            }
        }
        Ok(Self { groups, tag_rules })
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn rules(&self) -> &BTreeMap<String, String> {
        &self.tag_rules
    }

    pub fn contains(&self, group: &str) -> bool {
        self.groups.iter().any(|g| g == group)
    }

    pub fn index_of(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    /// Image of the tag rules over a tag set.
    pub fn groups_for<'a, I>(&self, tags: I) -> BTreeSet<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        tags.into_iter().filter_map(|t| self.tag_rules.get(t)).cloned().collect()
    }

    /// `UnknownGroup` unless the group is declared.
    pub fn require(&self, group: &str) -> Result<()> {
        if self.contains(group) {
            Ok(())
        } else {
            Err(Error::UnknownGroup(group.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: BTreeMap<String, EmbeddingItem>,
    dimension: usize,
    mapping: GroupMapping,
}

impl Catalog {
    /// Validates raw records and derives group memberships.
    ///
    /// The dimension is fixed by the first embedding record. Items without a
    /// tag record get an empty tag set; tag records for unknown ids are
    /// rejected.
    pub fn from_records<E, T, S>(embeddings: E, tags: T, mapping: GroupMapping) -> Result<Self>
    where
        E: IntoIterator<Item = (String, Vec<f64>)>,
        T: IntoIterator<Item = (String, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut items = BTreeMap::new();
        let mut dimension = None;
        for (id, vector) in embeddings {
            let expected = *dimension.get_or_insert(vector.len());
            if vector.len() != expected || expected == 0 {
                return Err(Error::DimensionMismatch { id, expected, found: vector.len() });
            }
            if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { id, index });
            }
            if items.contains_key(&id) {
                return Err(Error::DuplicateId(id));
            }
            let item = EmbeddingItem { id: id.clone(), vector, tags: BTreeSet::new(), groups: BTreeSet::new() };
            items.insert(id, item);
        }
        let dimension = dimension.ok_or(Error::EmptyCatalog)?;

        let mut tagged = BTreeSet::new();
        for (id, raw) in tags {
            let item = items.get_mut(&id).ok_or_else(|| Error::OrphanTags(id.clone()))?;
            if !tagged.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            item.tags = raw.iter().map(|t| normalize_tag(t.as_ref())).filter(|t| !t.is_empty()).collect();
            item.groups = mapping.groups_for(&item.tags);
        }
        Ok(Self { items, dimension, mapping })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mapping(&self) -> &GroupMapping {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingItem> {
        self.items.get(id)
    }

    pub fn item(&self, id: &str) -> Result<&EmbeddingItem> {
        self.items.get(id).ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    /// Items in ascending id order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &EmbeddingItem> + Clone + '_ {
        self.items.values()
    }

    /// Members of `group` in ascending id order.
    pub fn items_in_group(&self, group: &str) -> Result<Vec<&EmbeddingItem>> {
        self.mapping.require(group)?;
        Ok(self.iter().filter(|it| it.in_group(group)).collect())
    }

    /// Member count for every declared group, in mapping order.
    pub fn group_counts(&self) -> Vec<(String, usize)> {
        self.mapping.groups().iter().map(|g| (g.clone(), self.iter().filter(|it| it.in_group(g)).count())).collect()
    }

    pub(crate) fn check_dimension(&self, id: &str, vector: &[f64]) -> Result<()> {
        if vector.len() == self.dimension {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { id: id.to_string(), expected: self.dimension, found: vector.len() })
        }
    }
}
