mod common;

use btn::eval::experiments::preexisting_identical;
use btn::eval::{Tallies, Tally};
use btn::model::ops::softmax_beta;
use btn::model::{decode, Attention, BtnParams, DecodeInput, DecodeMode, DecodeTrace, IndexSets, ModelConfig, Tensors};
use btn::train::{consolidate, AdamConfig, AdamState, ConsolidateConfig, UpdateMask};
use btn::{VocabId, Vocabulary};
use common::{tiny_vocab, FEATURES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(seed: u64, symmetric: bool, v: &Vocabulary) -> BtnParams {
    let cfg = ModelConfig { rank: 8, hidden: 6, feature_dim: FEATURES, symmetric, init_scale: 1.5, seed, ..Default::default() };
    BtnParams::init(cfg, v.len())
}

fn feats(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn random_input(v: &Vocabulary, rng: &mut ChaCha8Rng) -> DecodeInput {
    let pick = |rng: &mut ChaCha8Rng, ids: &[VocabId]| ids[rng.random_range(0..ids.len())];
    let mut input = match rng.random_range(0..4) {
        0 => DecodeInput::episodic(pick(rng, v.instances())),
        1 => DecodeInput::semantic(rng.random_bool(0.3).then(|| pick(rng, v.entities()))),
        2 => DecodeInput::perception(feats(rng), feats(rng), Some((feats(rng), feats(rng)))),
        _ => DecodeInput::direct(feats(rng), Some((feats(rng), feats(rng)))),
    };
    input.beta = [1.0, 0.5, 3.0, f64::INFINITY][rng.random_range(0..4)];
    input.attention = Attention { episodic: rng.random_bool(0.5), semantic: rng.random_bool(0.5), beta: [1.0, f64::INFINITY][rng.random_range(0..2)] };
    if rng.random_bool(0.3) {
        input.o_in = Some(pick(rng, v.entities()));
    }
    input.unary_only = rng.random_bool(0.2);
    input.seed = rng.random();
    input
}

fn dists(tr: &DecodeTrace) -> Vec<&btn::CategoricalDist<VocabId>> {
    let mut out: Vec<_> = [&tr.t_dist, &tr.s_dist, &tr.o_dist, &tr.p_dist].into_iter().flatten().collect();
    out.extend(tr.c_dists.iter().map(|(_, d)| d));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn argmax_is_invariant_to_beta(x in prop::collection::vec(-20.0f64..20.0, 2..12), beta in 0.05f64..50.0) {
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
        let ids: Vec<VocabId> = (0..x.len() as u32).map(VocabId).collect();
        let a = *softmax_beta(&ids, &x, beta).unwrap().argmax();
        prop_assert_eq!(a, *softmax_beta(&ids, &x, 1.0).unwrap().argmax());
        prop_assert_eq!(a, *softmax_beta(&ids, &x, f64::INFINITY).unwrap().argmax());
    }

    #[test]
    fn decoded_ids_respect_their_index_sets(seed in any::<u64>(), symmetric in any::<bool>()) {
        let v = tiny_vocab();
        let sets = IndexSets::from_vocab(&v);
        let p = params(seed, symmetric, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let input = random_input(&v, &mut rng);
            let tr = decode(&input, &p, &v, &sets).unwrap();
            for d in dists(&tr) {
                prop_assert!((d.total() - 1.0).abs() <= 1e-9);
            }
            if let Some(t) = tr.t_star {
                prop_assert!(sets.instances.contains(&t));
            }
            prop_assert!(tr.s_star.is_some_and(|s| sets.entities.contains(&s)));
            for (fam, c) in &tr.c_stars {
                prop_assert!(sets.family(fam).unwrap().contains(c));
            }
            prop_assert_eq!(tr.c_stars.len(), sets.families.len());
            if input.unary_only {
                prop_assert!(tr.o_star.is_none() && tr.p_star.is_none());
            } else {
                prop_assert!(tr.o_star.is_some_and(|o| sets.entities.contains(&o)));
                prop_assert!(tr.p_star.is_some_and(|x| sets.binary.contains(&x)));
            }
            if input.mode == DecodeMode::Semantic {
                prop_assert!(tr.t_star.is_none());
            }
        }
    }

    #[test]
    fn memory_decoding_is_reproducible(seed in any::<u64>()) {
        let v = tiny_vocab();
        let sets = IndexSets::from_vocab(&v);
        let p = params(seed, seed % 2 == 0, &v);
        let t = v.instances()[seed as usize % v.instances().len()];
        for input in [DecodeInput::episodic(t), DecodeInput::semantic(None)] {
            let input = input.with_beta(1.0).with_seed(seed);
            prop_assert_eq!(decode(&input, &p, &v, &sets).unwrap(), decode(&input, &p, &v, &sets).unwrap());
        }
    }

    #[test]
    fn semantic_decoding_ignores_instance_columns(seed in any::<u64>(), symmetric in any::<bool>()) {
        let v = tiny_vocab();
        let sets = IndexSets::from_vocab(&v);
        let p = params(seed, symmetric, &v);
        let mut scrambled = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        for &t in v.instances() {
            for x in scrambled.t.embed.row_mut(t.index()) {
                *x = rng.random_range(-5.0..5.0);
            }
            if let Some(up) = &mut scrambled.t.embed_up {
                for x in up.row_mut(t.index()) {
                    *x = rng.random_range(-5.0..5.0);
                }
            }
        }
        for beta in [1.0, f64::INFINITY] {
            let input = DecodeInput::semantic(None).with_beta(beta).with_seed(seed);
            prop_assert_eq!(decode(&input, &p, &v, &sets).unwrap(), decode(&input, &scrambled, &v, &sets).unwrap());
        }
    }

    /// Attention at β = ∞ writes the same vector as a winner-take-all draw.
    #[test]
    fn hard_attention_equals_winner_take_all(seed in any::<u64>(), symmetric in any::<bool>()) {
        let v = tiny_vocab();
        let sets = IndexSets::from_vocab(&v);
        let p = params(seed, symmetric, &v);
        let hard = Attention { episodic: true, semantic: true, beta: f64::INFINITY };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = feats(&mut rng);
        let sub = feats(&mut rng);
        let cases = [
            DecodeInput::semantic(None),
            DecodeInput::episodic(v.instances()[0]),
            DecodeInput::perception(scene, sub, None),
        ];
        for input in cases {
            let wta = decode(&input.clone().with_attention(Attention { episodic: false, semantic: false, beta: 1.0 }), &p, &v, &sets).unwrap();
            let att = decode(&input.with_attention(hard), &p, &v, &sets).unwrap();
            prop_assert_eq!(wta.s_star, att.s_star);
            for (a, b) in wta.q_s.iter().zip(&att.q_s) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_the_identity(seed in any::<u64>(), steps in 1usize..5, lr in 1e-5f64..1e-1) {
        let v = tiny_vocab();
        let mut p = params(seed, seed % 2 == 1, &v);
        let before = p.clone();
        let zero = Tensors::zeros_like(&p.t);
        let mut state = AdamState::new(&p);
        let cfg = AdamConfig { learning_rate: lr, ..Default::default() };
        for _ in 0..steps {
            state.step(&mut p, &zero, &cfg, &UpdateMask::all());
        }
        prop_assert!(preexisting_identical(&before, &p));
        prop_assert_eq!(before, p);
    }

    #[test]
    fn consolidation_leaves_existing_parameters_bit_identical(seed in any::<u64>(), symmetric in any::<bool>()) {
        let mut v = tiny_vocab();
        let mut p = params(seed, symmetric, &v);
        let before = p.clone();
        let t = v.instances()[seed as usize % v.instances().len()];
        let dup = consolidate(t, &mut p, &mut v, &ConsolidateConfig::default()).unwrap();
        prop_assert!(preexisting_identical(&before, &p));
        prop_assert_eq!(p.num_columns(), before.num_columns() + 1);
        let gap = p.column(dup).iter().zip(p.column(t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-9);
    }

    /// A metric over merged shards is the count-weighted mean of the shard
    /// metrics.
    #[test]
    fn tallies_are_sharding_invariant(hits in prop::collection::vec(any::<bool>(), 1..200), cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..6)) {
        let mut bounds: Vec<usize> = cuts.iter().map(|c| c.index(hits.len() + 1)).collect();
        bounds.extend([0, hits.len()]);
        bounds.sort();
        let mut whole = Tally::default();
        hits.iter().for_each(|&h| whole.add(h));
        let mut merged = Tallies::default();
        let mut weighted = 0.0;
        for w in bounds.windows(2) {
            let mut shard = Tallies::default();
            for &h in &hits[w[0]..w[1]] {
                shard.add("m", h);
            }
            let t = shard.get("m");
            weighted += t.value() * t.count as f64;
            merged.merge(&shard);
        }
        prop_assert_eq!(merged.get("m"), whole);
        prop_assert!((weighted / hits.len() as f64 - whole.value()).abs() <= 1e-12);
    }
}
