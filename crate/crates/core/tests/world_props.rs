use std::collections::BTreeMap;

use btn::eval::zero_shot_split;
use btn::world::ontology::{G_CLASS, RISK};
use btn::world::{gen_world, Split, WorldConfig};
use proptest::prelude::*;

fn small(seed: u64) -> WorldConfig {
    WorldConfig { seed, entities: 80, scenes: 30, test_scenes: 6, unlabeled_scenes: 6, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labels_are_exclusive_and_closed_under_subclass(seed in any::<u64>()) {
        let w = gen_world(&small(seed)).unwrap();
        let o = &w.ontology;
        for (i, e) in w.entities.iter().enumerate() {
            prop_assert_eq!(e.labels.len(), o.families.len());
            for (f, l) in o.families.iter().zip(&e.labels) {
                prop_assert_eq!(f.members.iter().filter(|m| *m == l).count(), 1);
            }
            let chain = o.ancestors(w.class_of(i));
            for a in &chain {
                prop_assert!(e.labels.contains(a), "{} lacks ancestor {}", e.name, a);
            }
        }
    }

    #[test]
    fn hidden_label_follows_the_general_class(seed in any::<u64>()) {
        let w = gen_world(&small(seed)).unwrap();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for i in 0..w.entities.len() {
            let g = w.label(i, G_CLASS).to_string();
            let risk = w.label(i, RISK).to_string();
            prop_assert_eq!(&w.ontology.hidden_rule[&g], &risk);
            prop_assert_eq!(seen.entry(g).or_insert_with(|| risk.clone()), &risk);
        }
    }

    #[test]
    fn each_person_heads_one_social_instance(seed in any::<u64>()) {
        let w = gen_world(&small(seed)).unwrap();
        let persons: Vec<usize> = (0..w.entities.len())
            .filter(|&i| w.entities[i].split == Split::Train && w.class_of(i) == w.ontology.person)
            .collect();
        prop_assert_eq!(w.social.len(), persons.len());
        for &p in &persons {
            let own: Vec<_> = w.social.iter().filter(|x| x.name == format!("soc_{}", w.entities[p].name)).collect();
            prop_assert_eq!(own.len(), 1);
            prop_assert!(own[0].binary.iter().all(|st| st.s == p || st.o == p));
        }
    }

    #[test]
    fn generation_and_split_are_pure(seed in any::<u64>()) {
        let c = small(seed);
        let a = gen_world(&c).unwrap();
        let b = gen_world(&c).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        prop_assert_eq!(zero_shot_split(&a).unwrap(), zero_shot_split(&b).unwrap());
    }

    #[test]
    fn held_out_combos_never_reach_training(seed in any::<u64>()) {
        let w = gen_world(&small(seed)).unwrap();
        let z = zero_shot_split(&w).unwrap();
        let store = w.training_store(&z.held_out_set()).unwrap();
        btn::world::export::check_holdout(&w, &store, &z).unwrap();
        prop_assert!(!z.held_out.is_empty());
    }
}
