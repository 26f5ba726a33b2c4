//! Consolidation: an instance's memory is copied into a fresh index by
//! replay, and decoding through the copy reproduces the original.

use btn::eval::experiments::preexisting_identical;
use btn::eval::metrics::ZeroShotSplit;
use btn::model::{decode, DecodeInput, IndexSets, ModelConfig};
use btn::pipeline::{train_world, Modes};
use btn::train::{consolidate, AdamConfig, ConsolidateConfig, TrainConfig};
use btn::world::{gen_world, WorldConfig};

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig::tiny(20, 10, 0))?;
    let model = ModelConfig { rank: 32, hidden: 32, ..Default::default() };
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 1e-2, ..Default::default() }, epochs: 400, batch_size: 16, ..Default::default() };
    let modes = Modes { episodic: true, semantic: true, perception: false, direct: false };
    let zs = ZeroShotSplit { train: vec![], held_out: vec![] };
    let tr = train_world(&world, &zs, &model, &cfg, &modes, |_| {})?;

    let mut params = tr.params.clone();
    let mut vocab = tr.vocab.clone();
    let t = vocab.instances()[2];
    let dup = consolidate(t, &mut params, &mut vocab, &ConsolidateConfig::default())?;
    let sets = IndexSets::from_vocab(&vocab);
    println!("{} consolidated into {}", vocab.name(t), vocab.name(dup));

    let (mut same, mut total) = (0, 0);
    for q in tr.store.positives_at(t) {
        let input = |inst| {
            let i = DecodeInput::episodic(inst).with_subject(q.s);
            if q.p == vocab.has_attribute() { i.unary_only() } else { i.with_object(q.o) }
        };
        let run = |inst| decode(&input(inst), &params, &vocab, &sets);
        let (a, b) = (run(t)?, run(dup)?);
        same += (a.c_stars == b.c_stars && a.p_star == b.p_star) as usize;
        total += 1;
    }
    println!("{same}/{total} memorized statements decode identically through both indices");
    println!("pre-existing parameters unchanged: {}", preexisting_identical(&tr.params, &params));
    Ok(())
}
