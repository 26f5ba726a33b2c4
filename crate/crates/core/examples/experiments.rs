//! Runs named evaluation scenarios on a small world. Pass scenario names as
//! arguments, or nothing for zero-shot labeling and hidden-label enrichment.

use btn::eval::{run_experiment, zero_shot_split, EvalContext, ExperimentConfig, EXPERIMENTS};
use btn::model::ModelConfig;
use btn::pipeline::train_world;
use btn::train::{AdamConfig, TrainConfig};
use btn::world::{gen_world, WorldConfig};

fn main() -> btn::Result<()> {
    let mut names: Vec<String> = std::env::args().skip(1).collect();
    if names.is_empty() {
        names = vec!["zero-shot-binary".into(), "hidden-label-enrichment".into()];
    }
    if let Some(bad) = names.iter().find(|n| !EXPERIMENTS.contains(&n.as_str())) {
        eprintln!("unknown scenario {bad}; known: {}", EXPERIMENTS.join(", "));
        std::process::exit(2);
    }
    let world = gen_world(&WorldConfig { entities: 150, scenes: 80, ..Default::default() })?;
    let zero_shot = zero_shot_split(&world)?;
    let train = TrainConfig { adam: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 60, batch_size: 32, ..Default::default() };
    let tr = train_world(&world, &zero_shot, &ModelConfig { rank: 32, ..Default::default() }, &train, &Default::default(), |_| {})?;
    let config = ExperimentConfig { train, ..Default::default() };
    let ctx = EvalContext { world: &world, zero_shot: &zero_shot, params: &tr.params, vocab: &tr.vocab, config: &config };
    for name in &names {
        let r = run_experiment(name, &ctx)?;
        println!("{name}");
        for m in &r.metrics {
            println!("  {:<40} {:.4} (n={})", m.name, m.value, m.count);
        }
    }
    Ok(())
}
