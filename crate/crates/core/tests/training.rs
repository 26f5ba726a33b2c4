mod common;

use std::collections::BTreeSet;

use btn::eval::experiments::preexisting_identical;
use btn::eval::zero_shot_split;
use btn::model::{Block, ModelConfig};
use btn::pipeline::{train_world, Modes};
use btn::train::{gradients, ssl_step, train, AdamConfig, SslConfig, TrainConfig};
use btn::world::gen::VIEW_TRAIN;
use btn::world::{gen_world, unlabeled_scenes, WorldConfig};
use common::grad_case;

fn world() -> WorldConfig {
    WorldConfig { entities: 60, scenes: 20, test_scenes: 4, unlabeled_scenes: 6, ..Default::default() }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs, batch_size: 32, ..Default::default() }
}

#[test]
fn ssl_moves_only_the_columns_it_allocates() {
    let w = gen_world(&world()).unwrap();
    let z = zero_shot_split(&w).unwrap();
    let mc = ModelConfig { rank: 16, hidden: 8, ..Default::default() };
    let tr = train_world(&w, &z, &mc, &quick(3), &Modes::default(), |_| {}).unwrap();
    let (scenes, _) = unlabeled_scenes(&w, VIEW_TRAIN);
    assert!(!scenes.is_empty());
    let mut params = tr.params.clone();
    let mut vocab = tr.vocab.clone();
    let cfg = SslConfig { learning_rate: 1e-2, epochs: 3, ..Default::default() };
    let out = ssl_step(&scenes, &mut params, &mut vocab, &cfg, &Default::default()).unwrap();
    assert!(preexisting_identical(&tr.params, &params));
    assert_eq!(out.new_instances.len(), scenes.len());
    assert_eq!(out.new_entities.len(), out.novelty_triggers);
    assert_eq!(params.num_columns(), tr.vocab.len() + scenes.len() + out.novelty_triggers);
    assert_eq!(vocab.len(), params.num_columns());
    assert!(out.pseudo.iter().all(|l| l.provenance.as_deref() == Some("ssl")));
    // The new columns did train.
    assert!(out.losses.first().unwrap().loss > out.losses.last().unwrap().loss);
}

#[test]
fn frozen_blocks_stay_bit_identical() {
    let case = grad_case(11, &[0, 1, 2, 3]);
    let frozen: BTreeSet<Block> = [Block::W, Block::B, Block::V, Block::EncoderWeight].into();
    let cfg = TrainConfig { frozen: frozen.clone(), epochs: 3, batch_size: 2, adam: AdamConfig { learning_rate: 1e-2, ..Default::default() }, ..Default::default() };
    let mut p = case.params.clone();
    train(&mut p, &case.sets, &case.batch, &cfg, |_| {}).unwrap();
    for b in Block::ALL {
        let (Some(before), Some(after)) = (case.params.t.block(b), p.t.block(b)) else { continue };
        let same = before.iter().zip(after).all(|(x, y)| x.to_bits() == y.to_bits());
        assert_eq!(same, frozen.contains(&b), "{}", b.name());
    }
}

#[test]
fn gradients_do_not_depend_on_the_thread_count() {
    let case = grad_case(5, &[0, 1, 2, 3]);
    let mut batch = vec![];
    for i in 0..10 {
        batch.extend(grad_case(50 + i, &[0, 1, 2, 3]).batch);
    }
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| gradients(&case.params, &case.sets, &batch, &case.cfg).unwrap())
    };
    let (l1, g1) = run(1);
    let (l4, g4) = run(4);
    assert_eq!(l1.to_bits(), l4.to_bits());
    assert_eq!(g1, g4);
}
