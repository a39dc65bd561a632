use anonq_core::compose::factored_distribution;
use anonq_core::graph::{complete, example1a, example1b, ring, PortDigraph};
use anonq_core::qsim::{hadamard_low, identity4, RegisterId, SparseQuantumState, Symbol};
use anonq_core::quantum::qsv::qsv_with_w;
use anonq_core::quantum::{Qhm, QhmOut};
use anonq_core::runtime::Runtime;

fn inputs(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << n).map(move |b| (0..n).map(|i| b >> i & 1 == 1).collect())
}

fn ghz(ids: &[RegisterId]) -> SparseQuantumState {
    let mut s = SparseQuantumState::new();
    for &id in ids {
        s.init_register(id, Symbol::Zero).unwrap();
    }
    s.apply_local_unitary(ids[0], &hadamard_low()).unwrap();
    for &id in &ids[1..] {
        s.apply_reversible_map(&[ids[0], id], |v| {
            let t = Symbol::from_bits(v[1].bits() ^ v[0].bits());
            vec![v[0], t]
        })
        .unwrap();
    }
    s
}

fn check_fidelity(g: &PortDigraph) {
    let n = g.n();
    let rt = Runtime::new(g);
    for x in inputs(n) {
        let h = x.iter().filter(|&&b| b).count();
        if h == 0 {
            continue;
        }
        let q = Qhm::new(h, n).unwrap().stop_after_scaledown();
        let mut reached = 0.0;
        for run in rt.branches(&q, &x).unwrap() {
            let outs = &run.transcript.outputs;
            if outs.iter().all(|o| matches!(o, QhmOut::Verdict { .. })) {
                continue;
            }
            reached += run.transcript.probability;
            let mut ids = Vec::new();
            for (v, o) in outs.iter().enumerate() {
                match (x[v], o) {
                    (true, QhmOut::Scaled { r: Some(r) }) => ids.push(run.register(v, *r).unwrap()),
                    (false, QhmOut::Scaled { r: None }) => {}
                    _ => panic!("party {v} reported {o:?} for x={x:?}"),
                }
            }
            let state = run.memory.reduced(&ids).unwrap();
            let f = state.fidelity(&ghz(&ids), &ids).unwrap();
            assert!(f >= 1.0 - 1e-9, "n={n} x={x:?} fidelity {f}");
        }
        // The consistency check passes with probability 2^{1-h}.
        let expect = 2f64.powi(1 - h as i32);
        assert!((reached - expect).abs() < 1e-9, "x={x:?} reached {reached}");
    }
}

#[test]
fn scaledown_leaves_ghz_on_the_active_parties() {
    for g in [ring(2), ring(3), complete(3), ring(4), example1a(), example1b()] {
        check_fidelity(&g);
    }
}

#[test]
fn consistency_splits_two_actives_evenly() {
    let g = ring(2);
    let rt = Runtime::new(&g);
    let q = Qhm::new(2, 2).unwrap().stop_after_scaledown();
    let mut consistent = 0.0;
    let mut inconsistent = 0.0;
    for run in rt.branches(&q, &[true, true]).unwrap() {
        match run.transcript.outputs[0] {
            QhmOut::Scaled { .. } => consistent += run.transcript.probability,
            QhmOut::Verdict { value: false, .. } => inconsistent += run.transcript.probability,
            o => panic!("{o:?}"),
        }
    }
    assert!((consistent - 0.5).abs() < 1e-9);
    assert!((inconsistent - 0.5).abs() < 1e-9);
}

#[test]
fn identity_in_place_of_w_breaks_exactness() {
    let g = ring(2);
    let rt = Runtime::new(&g);
    let (d, _) = factored_distribution(&rt, &qsv_with_w(2, identity4()).unwrap(), &[true, true]).unwrap();
    let wrong = d.probability(&vec![true, true]);
    assert!(wrong > 0.1, "identity W should sometimes accept two actives, got {wrong}");
}
