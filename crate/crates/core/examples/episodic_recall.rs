//! Memorizes a small world episodically, then replays one scene: for every
//! entity in it, the decoded labels and the predicate towards each object.

use btn::eval::metrics::ZeroShotSplit;
use btn::model::{decode, DecodeInput, IndexSets, ModelConfig};
use btn::pipeline::{train_world, Modes};
use btn::train::{AdamConfig, TrainConfig};
use btn::world::{gen_world, WorldConfig};

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig::tiny(20, 10, 0))?;
    let model = ModelConfig { rank: 32, hidden: 32, ..Default::default() };
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 1e-2, ..Default::default() }, epochs: 1000, batch_size: 16, ..Default::default() };
    let modes = Modes { episodic: true, semantic: false, perception: false, direct: false };
    let zs = ZeroShotSplit { train: vec![], held_out: vec![] };
    let tr = train_world(&world, &zs, &model, &cfg, &modes, |s| {
        if s.epoch % 250 == 0 {
            println!("epoch {:>4} loss {:.4}", s.epoch, s.loss);
        }
    })?;
    let (v, sets) = (&tr.vocab, IndexSets::from_vocab(&tr.vocab));
    let t = v.instances()[0];
    let (mut right, mut total) = (0, 0);
    println!("recalling {}", v.name(t));
    for s in tr.store.entities_at(t) {
        let labels = decode(&DecodeInput::episodic(t).with_subject(s).unary_only(), &tr.params, v, &sets)?;
        let names: Vec<&str> = labels.c_stars.iter().map(|(_, c)| v.name(*c)).collect();
        println!("  {}: {}", v.name(s), names.join(" "));
        for q in tr.store.positives_at(t).filter(|q| q.s == s && q.p != v.has_attribute()) {
            let d = decode(&DecodeInput::episodic(t).with_subject(s).with_object(q.o), &tr.params, v, &sets)?;
            let p = d.p_star.expect("binary decode");
            println!("    {} {} (stored {})", v.name(p), v.name(q.o), v.name(q.p));
            right += (p == q.p) as usize;
            total += 1;
        }
    }
    println!("{right}/{total} predicates recalled");
    Ok(())
}
