//! Fusing the pre-observation model with one instance's observations, in
//! closed form and by sampling from the two sources.

use std::collections::BTreeMap;

use btn::model::post_observation_sample;
use btn::store::dirichlet_fuse;
use btn::world::{gen_world, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig::tiny(12, 6, 3))?;
    let store = world.training_store(&Default::default())?;
    let v = store.vocab();
    let t = store.populated_instances()[0];
    let pre = store.empirical_pre_observation_dist()?;
    let obs = store.empirical_observation_dist(t)?;
    let n_t = store.n_t(t) as u64;
    println!("instance {} holds {n_t} statements; the store {}", v.name(t), store.n_total());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for gamma in [0.0, 2.0, 20.0, 200.0] {
        let fused = dirichlet_fuse(&pre, &obs, gamma, n_t)?;
        let draws = post_observation_sample(|r| Ok(*pre.sample(r)), |r| Ok(*obs.sample(r)), gamma, n_t, 20_000, &mut rng)?;
        let mut freq: BTreeMap<_, f64> = BTreeMap::new();
        for (_, tr) in &draws {
            *freq.entry(*tr).or_default() += 1.0 / draws.len() as f64;
        }
        let gap = fused.iter().map(|(k, p)| (p - freq.get(k).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max);
        let top = fused.argmax();
        println!(
            "gamma {gamma:>5}: mass on memory of this instance {:.3}, top triple ({}, {}, {}), sampling gap {gap:.4}",
            obs.support().iter().map(|k| fused.prob(k)).sum::<f64>(),
            v.name(top.s),
            v.name(top.p),
            v.name(top.o),
        );
    }
    Ok(())
}
