//! Registries of concepts, predicates and instances.
//!
//! All five kinds share one id space; an id is also the column of the
//! embedding matrix that belongs to it. Ids are assigned in registration
//! order, so growth (new instances, new entities) only ever appends.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};

/// Name of the reserved unary predicate.
pub const HAS_ATTRIBUTE: &str = "hA";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VocabId(pub u32);

impl VocabId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Entity,
    Class,
    Attribute,
    Predicate,
    Instance,
}

impl Kind {
    pub fn is_concept(self) -> bool {
        matches!(self, Kind::Entity | Kind::Class | Kind::Attribute)
    }
}

/// A group of mutually exclusive unary labels (one softmax head).
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub name: String,
    pub members: Vec<VocabId>,
}

#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    names: Vec<String>,
    kinds: Vec<Kind>,
    by_name: HashMap<String, VocabId>,
    entities: Vec<VocabId>,
    classes: Vec<VocabId>,
    attributes: Vec<VocabId>,
    predicates: Vec<VocabId>,
    instances: Vec<VocabId>,
    families: Vec<Family>,
    family_of: HashMap<VocabId, usize>,
    has_attribute: VocabId,
}

/// On-disk vocabulary layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub entities: Vec<String>,
    pub classes: Vec<String>,
    pub attributes: Vec<String>,
    pub predicates: Vec<String>,
    pub instances: Vec<String>,
    pub families: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    /// Empty vocabulary holding only the reserved `hA` predicate.
    pub fn new() -> Self {
        let mut v = Vocabulary::default();
        v.push(HAS_ATTRIBUTE, Kind::Predicate).expect("fresh vocabulary");
        v
    }

    fn push(&mut self, name: &str, kind: Kind) -> Result<VocabId> {
        if self.by_name.contains_key(name) {
            return Err(BtnError::Duplicate(format!("name {name:?} already registered")));
        }
        let id = VocabId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.by_name.insert(name.to_string(), id);
        match kind {
            Kind::Entity => self.entities.push(id),
            Kind::Class => self.classes.push(id),
            Kind::Attribute => self.attributes.push(id),
            Kind::Predicate => {
                if name == HAS_ATTRIBUTE {
                    self.has_attribute = id;
                }
                self.predicates.push(id)
            }
            Kind::Instance => self.instances.push(id),
        }
        Ok(id)
    }

    pub fn add_entity(&mut self, name: &str) -> Result<VocabId> {
        self.push(name, Kind::Entity)
    }
    pub fn add_class(&mut self, name: &str) -> Result<VocabId> {
        self.push(name, Kind::Class)
    }
    pub fn add_attribute(&mut self, name: &str) -> Result<VocabId> {
        self.push(name, Kind::Attribute)
    }
    pub fn add_predicate(&mut self, name: &str) -> Result<VocabId> {
        self.push(name, Kind::Predicate)
    }
    pub fn add_instance(&mut self, name: &str) -> Result<VocabId> {
        self.push(name, Kind::Instance)
    }

    /// Declare a family of mutually exclusive labels. Members must be
    /// registered classes or attributes not already in another family.
    pub fn add_family(&mut self, name: &str, members: &[&str]) -> Result<usize> {
        if members.is_empty() {
            return Err(BtnError::InvalidInput(format!("family {name:?} is empty")));
        }
        if self.families.iter().any(|f| f.name == name) {
            return Err(BtnError::Duplicate(format!("family {name:?}")));
        }
        let idx = self.families.len();
        let mut ids = Vec::with_capacity(members.len());
        for m in members {
            let id = self.id(m)?;
            if !matches!(self.kind(id), Kind::Class | Kind::Attribute) {
                return Err(BtnError::InvalidInput(format!(
                    "family member {m:?} is not a class or attribute"
                )));
            }
            if self.family_of.contains_key(&id) || ids.contains(&id) {
                return Err(BtnError::InvalidInput(format!("{m:?} is already in a family")));
            }
            ids.push(id);
        }
        for &id in &ids {
            self.family_of.insert(id, idx);
        }
        self.families.push(Family { name: name.to_string(), members: ids });
        Ok(idx)
    }

    pub fn id(&self, name: &str) -> Result<VocabId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| BtnError::UnknownId(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<VocabId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: VocabId) -> &str {
        &self.names[id.index()]
    }

    pub fn kind(&self, id: VocabId) -> Kind {
        self.kinds[id.index()]
    }

    pub fn contains(&self, id: VocabId) -> bool {
        id.index() < self.names.len()
    }

    /// Checks that `id` is registered and of one of the `allowed` kinds.
    pub fn check(&self, id: VocabId, allowed: &[Kind]) -> Result<()> {
        if !self.contains(id) {
            return Err(BtnError::UnknownId(format!("#{}", id.0)));
        }
        if !allowed.contains(&self.kind(id)) {
            return Err(BtnError::InvalidInput(format!(
                "{} is a {:?}, expected one of {:?}",
                self.name(id),
                self.kind(id),
                allowed
            )));
        }
        Ok(())
    }

    /// Total number of ids, i.e. columns of the embedding matrix.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn has_attribute(&self) -> VocabId {
        self.has_attribute
    }

    pub fn entities(&self) -> &[VocabId] {
        &self.entities
    }
    pub fn classes(&self) -> &[VocabId] {
        &self.classes
    }
    pub fn attributes(&self) -> &[VocabId] {
        &self.attributes
    }
    pub fn instances(&self) -> &[VocabId] {
        &self.instances
    }
    /// All predicates including `hA`.
    pub fn predicates(&self) -> &[VocabId] {
        &self.predicates
    }
    /// Binary labels: every predicate except `hA`.
    pub fn binary_labels(&self) -> &[VocabId] {
        &self.predicates[1..]
    }

    /// Entities, classes and attributes in id order.
    pub fn concepts(&self) -> Vec<VocabId> {
        (0..self.len() as u32)
            .map(VocabId)
            .filter(|&id| self.kind(id).is_concept())
            .collect()
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn family_index(&self, name: &str) -> Option<usize> {
        self.families.iter().position(|f| f.name == name)
    }

    pub fn family_of(&self, label: VocabId) -> Option<usize> {
        self.family_of.get(&label).copied()
    }

    pub fn to_file(&self) -> VocabularyFile {
        let names = |ids: &[VocabId]| ids.iter().map(|&i| self.name(i).to_string()).collect();
        VocabularyFile {
            entities: names(&self.entities),
            classes: names(&self.classes),
            attributes: names(&self.attributes),
            predicates: names(&self.predicates),
            instances: names(&self.instances),
            families: self
                .families
                .iter()
                .map(|f| (f.name.clone(), names(&f.members)))
                .collect(),
        }
    }

    /// Rebuilds a vocabulary from its file form. Ids come out in canonical
    /// order: entities, classes, attributes, predicates, instances.
    pub fn from_file(file: &VocabularyFile) -> Result<Self> {
        let mut v = Vocabulary::default();
        for n in &file.entities {
            v.add_entity(n)?;
        }
        for n in &file.classes {
            v.add_class(n)?;
        }
        for n in &file.attributes {
            v.add_attribute(n)?;
        }
        // hA must exist and is kept as a predicate like any other name.
        if !file.predicates.iter().any(|p| p == HAS_ATTRIBUTE) {
            return Err(BtnError::Format("vocabulary lacks the hA predicate".into()));
        }
        v.add_predicate(HAS_ATTRIBUTE)?;
        for n in file.predicates.iter().filter(|p| *p != HAS_ATTRIBUTE) {
            v.add_predicate(n)?;
        }
        for n in &file.instances {
            v.add_instance(n)?;
        }
        for (name, members) in &file.families {
            let refs: Vec<&str> = members.iter().map(String::as_str).collect();
            v.add_family(name, &refs)?;
        }
        Ok(v)
    }

    /// Same vocabulary with ids renumbered into canonical order, plus the
    /// mapping `new_id -> old_id`.
    pub fn canonical(&self) -> Result<(Vocabulary, Vec<VocabId>)> {
        let canon = Vocabulary::from_file(&self.to_file())?;
        let perm = (0..canon.len() as u32)
            .map(|i| self.id(canon.name(VocabId(i))))
            .collect::<Result<Vec<_>>>()?;
        Ok((canon, perm))
    }

    /// SHA-256 over the canonical file form.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(&self.to_file()).expect("vocabulary serializes");
        hex::encode(Sha256::digest(&json))
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.kinds == other.kinds && self.families == other.families
    }
}
