use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BtnError, Result};
use crate::eval::metrics::ZeroShotSplit;
use crate::world::{Combo, GroundTruthWorld, Split};

/// Splits the `(class, predicate, class)` combos of the training scenes into
/// trained and held-out ones. Deterministic in the world seed.
pub fn zero_shot_split(world: &GroundTruthWorld) -> Result<ZeroShotSplit> {
    let combos: BTreeSet<Combo> = world
        .scenes_in(Split::Train)
        .flat_map(|(_, sc)| sc.binary.iter().map(|st| world.combo(st)))
        .collect();
    if combos.len() < 2 {
        return Err(BtnError::Infeasible(format!("{} distinct combos cannot be split", combos.len())));
    }
    let mut all: Vec<Combo> = combos.into_iter().collect();
    let frac = world.config.zero_shot_fraction;
    let mut n = (frac * all.len() as f64).round() as usize;
    if frac > 0.0 {
        n = n.max(1);
    }
    n = n.min(all.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(world.config.seed ^ 0x5EED_2E70);
    all.shuffle(&mut rng);
    let mut held_out = all.split_off(all.len() - n);
    all.sort();
    held_out.sort();
    Ok(ZeroShotSplit { train: all, held_out })
}

impl ZeroShotSplit {
    pub fn held_out_set(&self) -> BTreeSet<Combo> {
        self.held_out.iter().cloned().collect()
    }
}
