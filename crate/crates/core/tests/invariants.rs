//! Cross-module invariants as property tests.

use clgroups::forms::{abelian_invariant, extend_isometry};
use clgroups::gf::{make_field, Scalar};
use clgroups::groups::GroupDesc;
use clgroups::linalg::{span_rank, Matrix};
use clgroups::par::{map_tasks, map_tasks_seq, seed_stream};
use clgroups::words::Word;
use proptest::prelude::*;
use rand::Rng;

const GROUPS: [&str; 8] = ["GL(4,3)", "SL(3,4)", "Sp(6,2)", "GU(3,9)", "GO+(6,3)", "GO-(4,5)", "GO(5,3)", "GO+(6,4)"];
const FIELDS: [(u32, u32); 6] = [(2, 1), (2, 4), (3, 2), (5, 1), (7, 2), (2, 8)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_operations_form_a_field(fi in 0..FIELDS.len(), a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        let (p, e) = FIELDS[fi];
        let f = make_field(p, e).unwrap();
        let q = f.q();
        let (a, b, c) = ((a % q) as Scalar, (b % q) as Scalar, (c % q) as Scalar);
        prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
        if a != 0 {
            prop_assert_eq!(f.mul(a, f.inv(a)), 1);
            prop_assert_eq!(f.pow(a, q as u64 - 1), 1);
        }
    }

    #[test]
    fn samples_lie_in_the_group_and_invariants_multiply(gi in 0..GROUPS.len(), seed in any::<u64>()) {
        let desc = GroupDesc::parse(GROUPS[gi]).unwrap();
        let (space, f) = (desc.space(), desc.field());
        let mut rng = seed_stream(seed, 0);
        let g = desc.sample_uniform(&mut rng);
        let h = desc.sample_gcl(&mut rng);
        prop_assert!(desc.contains(&g));
        prop_assert!(space.is_isometry(&h));
        let gh = abelian_invariant(space, &g.mul(f, &h)).unwrap();
        let prod = abelian_invariant(space, &g).unwrap().combine(f, &abelian_invariant(space, &h).unwrap());
        prop_assert_eq!(gh, prod);
    }

    #[test]
    fn witt_extension_maps_every_pair(gi in 0..GROUPS.len(), seed in any::<u64>(), k in 1usize..4) {
        let desc = GroupDesc::parse(GROUPS[gi]).unwrap();
        let (space, f) = (desc.space(), desc.field());
        let n = space.n();
        let mut rng = seed_stream(seed, 1);
        let mut us: Vec<Vec<Scalar>> = Vec::new();
        while us.len() < k.min(n) {
            us.push((0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect());
            if span_rank(f, &us) < us.len() {
                us.pop();
            }
        }
        let x = desc.sample_gcl(&mut rng);
        let pairs: Vec<_> = us.iter().map(|u| (u.clone(), x.mul_vec(f, u))).collect();
        let g = extend_isometry(space, &pairs, false, &mut rng).unwrap();
        prop_assert!(space.is_isometry(&g));
        for (u, v) in &pairs {
            prop_assert_eq!(&g.mul_vec(f, u), v);
        }
    }

    #[test]
    fn words_evaluate_as_homomorphisms(gi in 0..GROUPS.len(), seed in any::<u64>(), letters in prop::collection::vec(prop_oneof![-2i32..=-1, 1i32..=2], 0..8)) {
        let desc = GroupDesc::parse(GROUPS[gi]).unwrap();
        let f = desc.field();
        let mut rng = seed_stream(seed, 2);
        let gens: Vec<Matrix> = (0..2).map(|_| desc.sample_uniform(&mut rng)).collect();
        let w = Word::new(2, letters).unwrap();
        let g = w.evaluate(f, &gens).unwrap();
        prop_assert_eq!(w.reduce().evaluate(f, &gens).unwrap(), g.clone());
        prop_assert!(w.concat(&w.inverse()).evaluate(f, &gens).unwrap().is_identity());
        prop_assert_eq!(w.inverse().evaluate(f, &gens).unwrap(), g.inverse(f).unwrap());
    }

    #[test]
    fn parallel_runner_matches_sequential(n in 0usize..200, seed in any::<u64>()) {
        let task = |i: usize| seed_stream(seed, i as u64).gen::<u64>();
        prop_assert_eq!(map_tasks(n, task), map_tasks_seq(n, task));
    }
}
