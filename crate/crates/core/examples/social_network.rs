//! Social links among persons: each `knows` edge points from the person
//! with the larger latent norm more often than not.

use btn::linalg::norm;
use btn::world::gen::Split;
use btn::world::social::{gen_social_network, orientation_probability};
use btn::world::{gen_world, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> btn::Result<()> {
    let world = gen_world(&WorldConfig::default())?;
    let persons: Vec<usize> = (0..world.entities.len())
        .filter(|&i| world.entities[i].split == Split::Train && world.class_of(i) == world.ontology.person)
        .collect();
    println!("{} persons, {} social instances in the world", persons.len(), world.social.len());
    if let Some(inst) = world.social.first() {
        for st in inst.binary.iter().take(5) {
            println!("  {}: {} {} {}", inst.name, world.entities[st.s].name, st.p, world.entities[st.o].name);
        }
    }

    // The same generator on the persons' latent vectors, at two sharpness levels.
    let latents: Vec<Vec<f64>> = persons.iter().map(|&i| world.entities[i].latent.clone()).collect();
    for beta in [1.0, 20.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let edges = gen_social_network(&latents, world.config.social_k, beta, &mut rng)?;
        let outward = edges.iter().filter(|&&(s, o)| norm(&latents[s]) > norm(&latents[o])).count();
        let expected: f64 = edges.iter().map(|&(s, o)| orientation_probability(&latents[s], &latents[o], beta).max(orientation_probability(&latents[o], &latents[s], beta))).sum::<f64>() / edges.len() as f64;
        println!(
            "beta {beta:>4}: {} edges, {:.3} point from the larger norm, mean orientation probability {expected:.3}",
            edges.len(),
            outward as f64 / edges.len() as f64,
        );
    }
    Ok(())
}
