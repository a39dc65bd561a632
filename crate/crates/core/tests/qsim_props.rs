use anonq_core::graph::ring;
use anonq_core::qsim::{
    adjoint, hadamard_low, identity4, mat_mul, phase_on_one, union_write, unitarity_defect, RegisterId, RegisterTag,
    SparseQuantumState, Symbol,
};
use anonq_core::quantum::{build_w, Qhm, QhmOut};
use anonq_core::runtime::Runtime;
use proptest::prelude::*;

fn rid(seq: u32) -> RegisterId {
    RegisterId {
        creator: 0,
        tag: RegisterTag::Garbage,
        epoch: 0,
        seq,
    }
}

#[derive(Debug, Clone)]
enum Op {
    Hadamard(u32),
    Phase(u32, f64),
    W(u32, usize),
    Union(u32, u32, u32),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u32..3).prop_map(Op::Hadamard),
        (0u32..3, -3.2f64..3.2).prop_map(|(r, t)| Op::Phase(r, t)),
        (0u32..3, 2usize..7).prop_map(|(r, h)| Op::W(r, h)),
        (0u32..3, 0u32..3, 0u32..3)
            .prop_filter("distinct registers", |(a, b, t)| a != b && b != t && a != t)
            .prop_map(|(a, b, t)| Op::Union(a, b, t)),
    ]
}

fn symbol() -> impl Strategy<Value = Symbol> {
    (0u8..4).prop_map(Symbol::from_bits)
}

fn apply(s: &mut SparseQuantumState, op: &Op) {
    match *op {
        Op::Hadamard(r) => s.apply_local_unitary(rid(r), &hadamard_low()).unwrap(),
        Op::Phase(r, t) => s.apply_local_unitary(rid(r), &phase_on_one(t)).unwrap(),
        Op::W(r, h) => s.apply_local_unitary(rid(r), &build_w(h).unwrap().matrix).unwrap(),
        Op::Union(a, b, t) => s.apply_reversible_map(&[rid(a), rid(b), rid(t)], union_write).unwrap(),
    }
}

proptest! {
    #[test]
    fn norm_is_preserved(init in prop::collection::vec(symbol(), 3), ops in prop::collection::vec(op(), 0..24)) {
        let mut s = SparseQuantumState::new();
        for (i, &sym) in init.iter().enumerate() {
            s.init_register(rid(i as u32), sym).unwrap();
        }
        for o in &ops {
            apply(&mut s, o);
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permutations_move_amplitudes(ops in prop::collection::vec(op(), 0..12), perm in Just([0u8, 1, 2, 3]).prop_shuffle()) {
        let mut s = SparseQuantumState::new();
        for i in 0..3 {
            s.init_register(rid(i), Symbol::Empty).unwrap();
        }
        for o in &ops {
            apply(&mut s, o);
        }
        let before: Vec<(Vec<Symbol>, _)> = s.entries().collect();
        let mut t = s.clone();
        t.apply_reversible_map(&[rid(1)], |v| vec![Symbol::from_bits(perm[v[0].bits() as usize])]).unwrap();
        prop_assert_eq!(t.support_size(), s.support_size());
        for (mut k, a) in before {
            k[1] = Symbol::from_bits(perm[k[1].bits() as usize]);
            prop_assert!((t.amplitude(&k) - a).norm() < 1e-12);
        }
    }

    #[test]
    fn w_is_unitary(h in 0usize..14) {
        let w = build_w(h).unwrap().matrix;
        prop_assert!(unitarity_defect(&w) < 1e-9);
        let p = mat_mul(&w, &adjoint(&w));
        let id = identity4();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((p[i][j] - id[i][j]).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn sampling_agrees_with_branch_weights() {
    let g = ring(2);
    let rt = Runtime::new(&g);
    let q = Qhm::new(2, 2).unwrap().stop_after_scaledown();
    let x = [true, true];
    let p: f64 = rt
        .branches(&q, &x)
        .unwrap()
        .iter()
        .filter(|r| matches!(r.transcript.outputs[0], QhmOut::Scaled { .. }))
        .map(|r| r.transcript.probability)
        .sum();
    let trials = 2000;
    let hits = (0..trials)
        .filter(|&seed| matches!(rt.sample(&q, &x, seed).unwrap().transcript.outputs[0], QhmOut::Scaled { .. }))
        .count();
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let freq = hits as f64 / trials as f64;
    assert!((freq - p).abs() <= 5.0 * sigma, "frequency {freq} vs {p}");
}
