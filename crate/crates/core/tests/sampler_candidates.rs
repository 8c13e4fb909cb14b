use mixsel_core::sampler::candidates::*;
use mixsel_core::types::check_zeta_constraint;
use mixsel_core::types::{ExposureSet, ZetaMatrix};

fn z(p: usize, sets: &[&[usize]]) -> ZetaMatrix {
    ZetaMatrix::from_sets(
        p,
        sets.iter()
            .map(|s| ExposureSet::from_indices(s.iter().copied()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn empty_state_family_is_add_only() {
    let cs = candidate_models(&ZetaMatrix::empty(3, 3), (0, 0), 4);
    assert_eq!(
        cs.models(),
        vec![ZetaMatrix::empty(3, 3), z(3, &[&[0], &[], &[]])]
    );
    assert_eq!(cs.current, 0);
}

#[test]
fn lower_order_example_has_exactly_three_models() {
    // p = 3, k = 4, A_1 = {1}; update exposure 2 in function 1.
    let s = z(3, &[&[0], &[], &[], &[]]);
    let cs = candidate_models(&s, (1, 0), 4);
    assert_eq!(
        (0..cs.classes.len())
            .map(|c| cs.class_size(c))
            .collect::<Vec<_>>(),
        vec![1, 1, 3]
    );
    assert_eq!(
        cs.models()[..3],
        [
            s.clone(),
            z(3, &[&[0, 1], &[], &[], &[]]),
            z(3, &[&[0], &[1], &[], &[]]),
        ]
    );
    assert!(cs.models().contains(&z(3, &[&[0], &[], &[], &[1]])));
    // Same family from the merged and decomposed states.
    for m in &cs.models() {
        assert_eq!(candidate_models(m, (1, 0), 4).models(), cs.models());
    }
}

#[test]
fn decompositions_enumerate_proper_subsets() {
    let s = z(3, &[&[0, 1], &[], &[], &[]]);
    let cs = candidate_models(&s, (2, 0), 4);
    for extra in [
        z(3, &[&[0, 1, 2], &[], &[], &[]]),
        z(3, &[&[0, 1], &[2], &[], &[]]),
        z(3, &[&[0, 1], &[0, 2], &[], &[]]),
        z(3, &[&[0, 1], &[1, 2], &[], &[]]),
    ] {
        assert!(cs.models().contains(&extra), "{extra:?}");
    }
    assert_eq!(cs.classes.len(), 5);
    assert_eq!(cs.len(), 2 + 3 * 3);
}

#[test]
fn decomposition_in_any_slot_can_merge() {
    let s = z(3, &[&[0], &[], &[1]]);
    let cs = candidate_models(&s, (1, 0), 4);
    assert_eq!(cs.anchor, z(3, &[&[0], &[], &[]]));
    assert!(cs.models().contains(&z(3, &[&[0, 1], &[], &[]])));
    assert!(cs.models().contains(&z(3, &[&[0], &[1], &[]])));
}

#[test]
fn members_are_valid_and_share_anchor() {
    let states = [
        z(4, &[&[0, 1], &[2], &[], &[]]),
        z(4, &[&[1, 2], &[0], &[3], &[]]),
        z(4, &[&[1, 2, 3], &[0, 1], &[], &[]]),
    ];
    for s in &states {
        for j in 0..4 {
            for h in 0..4 {
                let cs = candidate_models(s, (j, h), 4);
                for m in &cs.models() {
                    assert!(check_zeta_constraint(m));
                    let again = candidate_models(m, (j, h), 4);
                    assert_eq!(again.models(), cs.models());
                }
            }
        }
    }
}

#[test]
fn saturated_when_no_slot_left() {
    let s = z(3, &[&[1], &[2]]);
    let cs = candidate_models(&s, (0, 0), 4);
    assert!(cs.saturated);
}

#[test]
fn subset_cap_limits_decompositions() {
    let s = z(4, &[&[1, 2, 3], &[], &[]]);
    let cs = candidate_models(&s, (0, 0), 2);
    assert!(cs.models().iter().all(|m| m.active_set(1).len() <= 2));
    assert!(cs.models().contains(&z(4, &[&[1, 2, 3], &[0], &[]])));
    assert!(cs.models().contains(&z(4, &[&[1, 2, 3], &[0, 2], &[]])));
    assert_eq!(cs.len(), 2 + 4 * 2);
}

#[test]
fn proposals_sum_to_one() {
    let s = z(3, &[&[0, 1], &[], &[], &[]]);
    let cs = candidate_models(&s, (2, 0), 4);
    for from in 0..cs.len() {
        let total: f64 = (0..cs.len()).map(|t| cs.proposal_prob(from, t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kernel_rows_sum_to_one() {
    let s = z(3, &[&[1], &[], &[]]);
    let w = |m: &ZetaMatrix| m.active_sets().iter().map(|a| a.len() as f64).sum::<f64>() * 0.3;
    for gibbs in [false, true] {
        let row = transition_probabilities(&s, (0, 0), 4, gibbs, w);
        let total: f64 = row.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
