//! Semantic memory: what the model believes about an entity regardless of
//! time, generalized statements between classes, and free recall.

use btn::eval::zero_shot_split;
use btn::model::{decode, DecodeInput, IndexSets, ModelConfig};
use btn::pipeline::{train_world, Modes};
use btn::train::{AdamConfig, TrainConfig};
use btn::world::{gen_world, Split, WorldConfig};

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig { entities: 120, scenes: 60, ..Default::default() })?;
    let zs = zero_shot_split(&world)?;
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 60, batch_size: 32, ..Default::default() };
    let modes = Modes { perception: false, ..Default::default() };
    let tr = train_world(&world, &zs, &ModelConfig { rank: 32, ..Default::default() }, &cfg, &modes, |_| {})?;
    let (v, sets) = (&tr.vocab, IndexSets::from_vocab(&tr.vocab));

    let e = (0..world.entities.len()).find(|&i| world.entities[i].split == Split::Train).expect("a training entity");
    let s = world.entity_id(v, e).expect("entity in vocabulary");
    let d = decode(&DecodeInput::semantic(Some(s)).unary_only(), &tr.params, v, &sets)?;
    println!("{}:", v.name(s));
    for ((fam, c), truth) in d.c_stars.iter().zip(&world.entities[e].labels) {
        println!("  {fam:<9} {:<12} true {truth}", v.name(*c));
    }

    // A class in the subject slot decodes the labels its members share.
    let mut store = tr.store.clone();
    store.lcwa_expand_all()?;
    for (c1, fam, c2) in [("Dog", "P-Class", "Mammal"), ("Dog", "Color", "Black"), ("Car", "G-Class", "NonLiving")] {
        let (c1, c2) = (v.id(c1)?, v.id(c2)?);
        let d = decode(&DecodeInput::semantic(Some(c1)).unary_only(), &tr.params, v, &sets)?;
        let model = d.label_dist(fam).map_or(0.0, |x| x.prob(&c2));
        println!("P({} | {}) model {model:.3} store {:?}", v.name(c2), v.name(c1), store.generalized_statement(c1, c2));
    }

    println!("free recall:");
    for seed in 0..5 {
        let d = decode(&DecodeInput::semantic(None).with_beta(1.0).with_seed(seed), &tr.params, v, &sets)?;
        let (s, p, o) = (d.s_star.unwrap(), d.p_star.unwrap(), d.o_star.unwrap());
        println!("  {} {} {}", v.name(s), v.name(p), v.name(o));
    }
    Ok(())
}
