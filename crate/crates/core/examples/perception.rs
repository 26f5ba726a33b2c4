//! Perception of known entities seen from a new view and of entities never
//! seen in training, decoded bottom-up only and through the entity index.

use btn::eval::experiments::Variant;
use btn::eval::zero_shot_split;
use btn::model::{decode, IndexSets, ModelConfig};
use btn::pipeline::train_world;
use btn::train::{AdamConfig, TrainConfig};
use btn::world::gen::{VIEW_TEST, VIEW_TRAIN};
use btn::world::views::unary_items;
use btn::world::{gen_world, Split, WorldConfig};

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig { entities: 150, scenes: 80, class_signal: 0.5, ..Default::default() })?;
    let zs = zero_shot_split(&world)?;
    let cfg = TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 60, batch_size: 32, ..Default::default() };
    let tr = train_world(&world, &zs, &ModelConfig { rank: 32, ..Default::default() }, &cfg, &Default::default(), |_| {})?;
    let (v, sets) = (&tr.vocab, IndexSets::from_vocab(&tr.vocab));
    let families: Vec<_> = world.ontology.families.iter().filter(|f| f.visible).map(|f| f.name.clone()).collect();

    for (title, split, view) in [("known entities, new view", Split::Train, VIEW_TEST), ("new entities", Split::Test, VIEW_TRAIN)] {
        let items = unary_items(&world, split, view);
        print!("{title} ({} boxes):", items.len());
        for variant in Variant::ALL {
            let mut right = 0;
            for it in &items {
                let d = decode(&variant.input(&it.scene_features, &it.features, None), &tr.params, v, &sets)?;
                for f in &families {
                    right += d.label(f).is_some_and(|c| v.name(c) == world.label(it.entity, f)) as usize;
                }
            }
            print!(" {} {:.3}", variant.name(), right as f64 / (items.len() * families.len()) as f64);
        }
        println!();
    }
    Ok(())
}
