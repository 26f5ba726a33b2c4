//! Label families, the class hierarchy and binary-label plausibilities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};

pub const B_CLASS: &str = "B-Class";
pub const P_CLASS: &str = "P-Class";
pub const G_CLASS: &str = "G-Class";
pub const AGE: &str = "Age";
pub const COLOR: &str = "Color";
pub const ACTIVITY: &str = "Activity";
pub const RISK: &str = "Risk";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub members: Vec<String>,
    /// Class families are registered as classes, the rest as attributes.
    pub is_class: bool,
    /// Stated in scenes; hidden families appear only in background instances.
    pub visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub families: Vec<FamilySpec>,
    /// Basic class to its parent class, parent class to its general class.
    pub parent: BTreeMap<String, String>,
    /// General class to the hidden label it implies.
    pub hidden_rule: BTreeMap<String, String>,
    pub visual_predicates: Vec<String>,
    pub owned_by: String,
    pub loved_by: String,
    pub knows: String,
    /// Basic class of nonvisual owners and of social-network members.
    pub person: String,
    /// Basic classes whose members get a nonvisual owner or lover.
    pub owned_classes: Vec<String>,
    pub loved_classes: Vec<String>,
    /// General class assigned to living things.
    pub living: String,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Ontology {
    pub fn preset(name: &str) -> Result<Ontology> {
        match name {
            "default" => Ok(Self::default_preset()),
            other => Err(BtnError::Config(format!("unknown ontology preset {other:?}; valid: default"))),
        }
    }

    fn default_preset() -> Ontology {
        let fam = |name: &str, members: &[&str], is_class: bool, visible: bool| FamilySpec {
            name: name.into(),
            members: strings(members),
            is_class,
            visible,
        };
        let mut parent = BTreeMap::new();
        for (c, p) in [
            ("Dog", "Mammal"),
            ("Cat", "Mammal"),
            ("Horse", "Mammal"),
            ("Person", "Human"),
            ("Parrot", "Bird"),
            ("Bench", "Furniture"),
            ("Chair", "Furniture"),
            ("Car", "Vehicle"),
            ("Bus", "Vehicle"),
            ("Shirt", "Clothing"),
            ("Mammal", "LivingBeing"),
            ("Human", "LivingBeing"),
            ("Bird", "LivingBeing"),
            ("Furniture", "NonLiving"),
            ("Vehicle", "NonLiving"),
            ("Clothing", "NonLiving"),
        ] {
            parent.insert(c.to_string(), p.to_string());
        }
        Ontology {
            families: vec![
                fam(
                    B_CLASS,
                    &["Dog", "Cat", "Horse", "Person", "Parrot", "Bench", "Chair", "Car", "Bus", "Shirt"],
                    true,
                    true,
                ),
                fam(P_CLASS, &["Mammal", "Human", "Bird", "Furniture", "Vehicle", "Clothing"], true, true),
                fam(G_CLASS, &["LivingBeing", "NonLiving"], true, true),
                fam(AGE, &["Young", "Old"], false, true),
                fam(COLOR, &["Black", "White", "Brown", "Red", "OtherColor"], false, true),
                fam(ACTIVITY, &["Standing", "Sitting", "Running", "OtherActivity"], false, true),
                fam(RISK, &["Dangerous", "Harmless"], false, false),
            ],
            parent,
            hidden_rule: [("LivingBeing", "Dangerous"), ("NonLiving", "Harmless")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            visual_predicates: strings(&["on", "nextTo", "behind", "wears", "has"]),
            owned_by: "ownedBy".into(),
            loved_by: "lovedBy".into(),
            knows: "knows".into(),
            person: "Person".into(),
            owned_classes: strings(&["Dog"]),
            loved_classes: strings(&["Cat"]),
            living: "LivingBeing".into(),
        }
    }

    pub fn family(&self, name: &str) -> Option<&FamilySpec> {
        self.families.iter().find(|f| f.name == name)
    }

    pub fn basic_classes(&self) -> &[String] {
        &self.family(B_CLASS).expect("validated").members
    }

    /// All binary labels: visual ones first, then the nonvisual ones.
    pub fn binary_labels(&self) -> Vec<String> {
        let mut out = self.visual_predicates.clone();
        out.extend([self.owned_by.clone(), self.loved_by.clone(), self.knows.clone()]);
        out
    }

    /// Ancestors of a basic class, nearest first.
    pub fn ancestors(&self, class: &str) -> Vec<String> {
        let mut out = vec![];
        let mut cur = class;
        while let Some(p) = self.parent.get(cur) {
            out.push(p.clone());
            cur = p;
        }
        out
    }

    /// Checks that every basic class has a parent class with a general class
    /// above it, and that the hidden rule covers every general class.
    pub fn validate(&self) -> Result<()> {
        let need = |n: &str| self.family(n).ok_or_else(|| BtnError::Infeasible(format!("ontology lacks family {n}")));
        let b = need(B_CLASS)?;
        let p = need(P_CLASS)?;
        let g = need(G_CLASS)?;
        need(RISK)?;
        for f in &self.families {
            if f.members.is_empty() {
                return Err(BtnError::Infeasible(format!("family {} is empty", f.name)));
            }
        }
        for c in &b.members {
            let anc = self.ancestors(c);
            if anc.len() != 2 || !p.members.contains(&anc[0]) || !g.members.contains(&anc[1]) {
                return Err(BtnError::Infeasible(format!("class {c} lacks a parent chain to a general class")));
            }
        }
        for gc in &g.members {
            if !self.hidden_rule.contains_key(gc) {
                return Err(BtnError::Infeasible(format!("no hidden label for {gc}")));
            }
        }
        if !b.members.contains(&self.person) {
            return Err(BtnError::Infeasible("person class missing".into()));
        }
        Ok(())
    }

    /// Unnormalized frequencies of the visual predicates for a subject and
    /// object class, in `visual_predicates` order.
    pub fn predicate_weights(&self, s_class: &str, o_class: &str) -> Vec<f64> {
        let p = |c: &str| self.parent.get(c).map(String::as_str).unwrap_or("");
        let living = |c: &str| self.ancestors(c).iter().any(|a| *a == self.living);
        self.visual_predicates
            .iter()
            .map(|pred| match pred.as_str() {
                "on" => match (living(s_class), p(o_class)) {
                    (true, "Furniture" | "Vehicle") => 3.0,
                    (false, "Furniture") if p(s_class) == "Clothing" => 1.0,
                    _ => 0.0,
                },
                "wears" => {
                    if s_class == self.person && p(o_class) == "Clothing" {
                        4.0
                    } else {
                        0.0
                    }
                }
                "has" => match (s_class == self.person, p(o_class)) {
                    (true, "Mammal" | "Bird") => 2.0,
                    _ => 0.0,
                },
                "nextTo" => {
                    if p(o_class) == "Clothing" {
                        0.2
                    } else {
                        1.0
                    }
                }
                "behind" => 0.5,
                _ => 0.0,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_preset_is_consistent() {
        let o = Ontology::preset("default").unwrap();
        o.validate().unwrap();
        assert_eq!(o.ancestors("Dog"), vec!["Mammal".to_string(), "LivingBeing".to_string()]);
        assert_eq!(o.families.len(), 7);
        assert_eq!(o.binary_labels().len(), 8);
        assert!(Ontology::preset("nope").is_err());
    }

    #[test]
    fn broken_chain_is_infeasible() {
        let mut o = Ontology::preset("default").unwrap();
        o.parent.remove("Mammal");
        assert!(matches!(o.validate(), Err(BtnError::Infeasible(_))));
    }

    #[test]
    fn wears_only_for_people_and_clothes() {
        let o = Ontology::preset("default").unwrap();
        let wi = o.visual_predicates.iter().position(|p| p == "wears").unwrap();
        assert!(o.predicate_weights("Person", "Shirt")[wi] > 0.0);
        assert_eq!(o.predicate_weights("Dog", "Shirt")[wi], 0.0);
    }
}
