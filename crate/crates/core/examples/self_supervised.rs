//! Self-supervised learning on unlabeled scenes: the model labels them
//! itself, allocates indices for the new instances and for boxes it does
//! not recognize, and trains only those new columns.

use btn::eval::experiments::preexisting_identical;
use btn::eval::zero_shot_split;
use btn::model::ModelConfig;
use btn::pipeline::train_world;
use btn::train::{ssl_step, AdamConfig, SslConfig, TrainConfig};
use btn::world::gen::VIEW_TRAIN;
use btn::world::{gen_world, unlabeled_scenes, WorldConfig};

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig { entities: 150, scenes: 80, ..Default::default() })?;
    let zs = zero_shot_split(&world)?;
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 60, batch_size: 32, ..Default::default() };
    let tr = train_world(&world, &zs, &ModelConfig { rank: 32, ..Default::default() }, &cfg, &Default::default(), |_| {})?;

    let (scenes, truth) = unlabeled_scenes(&world, VIEW_TRAIN);
    let mut params = tr.params.clone();
    let mut vocab = tr.vocab.clone();
    let out = ssl_step(&scenes, &mut params, &mut vocab, &SslConfig::default(), &Default::default())?;
    println!(
        "{} scenes, {} boxes: {} new instances, {} boxes taken as new entities",
        scenes.len(),
        truth.len(),
        out.new_instances.len(),
        out.novelty_triggers
    );
    println!("{} pseudo-labeled statements, for example:", out.pseudo.len());
    for l in out.pseudo.iter().take(4) {
        println!("  {} {} {} @ {}", l.s, l.p, l.o, l.t);
    }
    if let (Some(a), Some(b)) = (out.losses.first(), out.losses.last()) {
        println!("loss {:.4} -> {:.4}", a.loss, b.loss);
    }
    println!("pre-existing parameters unchanged: {}", preexisting_identical(&tr.params, &params));
    Ok(())
}
