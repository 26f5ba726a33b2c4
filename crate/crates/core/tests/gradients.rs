mod common;

use btn::model::Block;
use btn::train::{gradients, Context};
use common::{finite_difference_error, grad_case};

fn check_kinds(kinds: &[usize], seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let case = grad_case(seed, kinds);
        let (err, blocks) = finite_difference_error(&case);
        assert!(err < 1e-4, "seed {seed} kinds {kinds:?}: relative error {err:.3e} ({blocks:?})");
    }
}

#[test]
fn episodic_gradients_match_finite_differences() {
    check_kinds(&[0], 0..8);
}

#[test]
fn semantic_gradients_match_finite_differences() {
    check_kinds(&[1], 100..108);
}

#[test]
fn perception_gradients_match_finite_differences() {
    check_kinds(&[2], 200..208);
}

#[test]
fn direct_and_mixed_gradients_match_finite_differences() {
    check_kinds(&[3], 300..304);
    check_kinds(&[0, 1, 2, 3], 400..404);
}

#[test]
fn injection_moves_gradient_to_the_label_column() {
    // A semantic example without objects: once a label is injected, the
    // subject's own column receives no gradient at all.
    for seed in 0..50 {
        let mut case = grad_case(seed, &[1]);
        case.batch.truncate(1);
        let ex = &mut case.batch[0];
        if ex.unary.is_empty() {
            continue;
        }
        ex.objects.clear();
        ex.inject = Some(ex.unary[0].1);
        let s = ex.s;
        let c = ex.unary[0].1;
        let (_, g) = gradients(&case.params, &case.sets, &case.batch, &case.cfg).unwrap();
        assert!(g.embed.row(s.index()).iter().all(|&x| x == 0.0));
        if let Some(up) = &g.embed_up {
            assert!(up.row(s.index()).iter().all(|&x| x == 0.0));
        }
        assert!(g.embed.row(c.index()).iter().any(|&x| x != 0.0));
        ex_without_injection_touches_subject(&case, s);
        return;
    }
    panic!("no suitable example drawn");
}

fn ex_without_injection_touches_subject(case: &common::GradCase, s: btn::VocabId) {
    let mut batch = case.batch.clone();
    batch[0].inject = None;
    let (_, g) = gradients(&case.params, &case.sets, &batch, &case.cfg).unwrap();
    // Writing into q_S goes through the up matrix when there is one.
    let written = g.embed_up.as_ref().unwrap_or(&g.embed);
    assert!(written.row(s.index()).iter().any(|&x| x != 0.0));
}

#[test]
fn episodic_examples_leave_a_bar_and_encoder_untouched() {
    let case = grad_case(7, &[0]);
    assert!(case.batch.iter().all(|e| matches!(e.context, Context::Episodic(_))));
    let (_, g) = gradients(&case.params, &case.sets, &case.batch, &case.cfg).unwrap();
    for b in [Block::ABar, Block::EncoderWeight, Block::EncoderBias] {
        assert!(g.block(b).unwrap().iter().all(|&x| x == 0.0), "{}", b.name());
    }
}
