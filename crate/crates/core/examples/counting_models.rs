//! Count-based models of a small hand-written store.

use btn::vocab::HAS_ATTRIBUTE;
use btn::{TripleTensor, Vocabulary};

fn main() -> btn::Result<()> {
    let mut v = Vocabulary::new();
    for e in ["rex", "tom", "sofa"] {
        v.add_entity(e)?;
    }
    for c in ["Dog", "Cat", "Mammal", "Furniture"] {
        v.add_class(c)?;
    }
    v.add_family("Basic", &["Dog", "Cat", "Furniture"])?;
    v.add_family("Parent", &["Mammal"])?;
    v.add_predicate("on")?;
    for t in ["morning", "evening"] {
        v.add_instance(t)?;
    }
    let mut store = TripleTensor::new(v);
    let ha = HAS_ATTRIBUTE;
    for t in ["morning", "evening"] {
        store.observe("rex", ha, "Dog", t, true)?;
        store.observe("rex", ha, "Mammal", t, true)?;
        store.observe("tom", ha, "Cat", t, true)?;
        store.observe("tom", ha, "Mammal", t, true)?;
        store.observe("sofa", ha, "Furniture", t, true)?;
    }
    store.observe("rex", "on", "sofa", "morning", true)?;
    store.observe("tom", "on", "sofa", "evening", true)?;
    store.observe("rex", "on", "sofa", "evening", false)?;

    let v = store.vocab().clone();
    let show = |id| v.name(id).to_string();
    let morning = v.id("morning")?;
    println!("observation model at morning:");
    for (tr, p) in store.empirical_observation_dist(morning)?.iter() {
        println!("  ({}, {}, {}) {p:.3}", show(tr.s), show(tr.p), show(tr.o));
    }
    let pre = store.empirical_pre_observation_dist()?;
    println!("pre-observation model has {} triples", pre.len());
    let (rex, on, sofa) = (v.id("rex")?, v.id("on")?, v.id("sofa")?);
    println!("expected state of (rex, on, sofa): {:?}", store.expected_state(rex, on, sofa));

    // Generalized statements need the unobserved labels filled in as false.
    store.lcwa_expand_all()?;
    let (mammal, dog) = (v.id("Mammal")?, v.id("Dog")?);
    println!("P(Mammal | Dog) = {:?}", store.generalized_statement(dog, mammal));
    println!("P(Dog | Mammal) = {:?}", store.generalized_statement(mammal, dog));
    Ok(())
}
