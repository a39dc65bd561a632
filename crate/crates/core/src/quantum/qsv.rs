//! Solitude verification: `Q_{h,m}` for every guess, side by side, plus
//! the all-zero test.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::classical::{AllZero, ColorSet, PhaseProgram, Solo, SoloState};
use crate::compose::{Combine, Parallel};
use crate::qsim::Mat4;
use crate::quantum::qhm::{QMsg, Qhm, QhmError, QhmOut, QhmState, SENTINEL};
use crate::runtime::{Action, Envelope, PartyEnv, QuantumPort, RoundProgram, StepResult, WireSize};

/// `(h, m)` for every lane: `2 ≤ m ≤ N`, `0 ≤ h ≤ m`, sorted by `h`, then `m`.
pub fn guesses(upper_bound: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for h in 0..=upper_bound {
        for m in h.max(2)..=upper_bound {
            v.push((h, m));
        }
    }
    v
}

pub struct AllZeroLane;

impl PhaseProgram for AllZeroLane {
    type Input = bool;
    type Phase = AllZero;
    fn begin(&self, env: &PartyEnv, x: bool) -> AllZero {
        AllZero::new(env.global.upper_bound, x)
    }
}

pub enum QsvLane {
    Guess(Box<Qhm>),
    AllZero,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QsvLaneState {
    Guess(QhmState),
    AllZero(SoloState<AllZero>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QsvMsg {
    Guess(QMsg),
    AllZero(ColorSet<()>),
}

impl WireSize for QsvMsg {
    fn wire_bits(&self) -> u64 {
        match self {
            QsvMsg::Guess(m) => m.wire_bits(),
            QsvMsg::AllZero(m) => m.wire_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QsvLaneOut {
    Guess(QhmOut),
    AllZero(bool),
}

fn retag<A, B>(inbox: Vec<Vec<Envelope<A>>>, f: impl Fn(A) -> Option<B>) -> Vec<Vec<Envelope<B>>> {
    inbox
        .into_iter()
        .map(|envs| {
            envs.into_iter()
                .filter_map(|e| {
                    f(e.payload).map(|payload| Envelope {
                        payload,
                        registers: e.registers,
                    })
                })
                .collect()
        })
        .collect()
}

fn lift<A, B, O, P>(a: Action<A, O>, f: impl Fn(A) -> B, g: impl Fn(O) -> P) -> Action<B, P> {
    match a {
        Action::Send(out) => Action::Send(retag(out, |m| Some(f(m)))),
        Action::Halt(o) => Action::Halt(g(o)),
    }
}

impl RoundProgram for QsvLane {
    type Input = bool;
    type State = QsvLaneState;
    type Msg = QsvMsg;
    type Output = QsvLaneOut;

    fn start(&self, env: &PartyEnv, x: bool) -> QsvLaneState {
        match self {
            QsvLane::Guess(q) => QsvLaneState::Guess(q.start(env, x)),
            QsvLane::AllZero => QsvLaneState::AllZero(Solo(AllZeroLane).start(env, x)),
        }
    }

    fn round(
        &self,
        env: &PartyEnv,
        state: &mut QsvLaneState,
        inbox: Vec<Vec<Envelope<QsvMsg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<QsvMsg, QsvLaneOut>> {
        Ok(match (self, state) {
            (QsvLane::Guess(p), QsvLaneState::Guess(s)) => {
                let inbox = retag(inbox, |m| match m {
                    QsvMsg::Guess(m) => Some(m),
                    QsvMsg::AllZero(_) => None,
                });
                lift(p.round(env, s, inbox, q)?, QsvMsg::Guess, QsvLaneOut::Guess)
            }
            (QsvLane::AllZero, QsvLaneState::AllZero(s)) => {
                let inbox = retag(inbox, |m| match m {
                    QsvMsg::AllZero(m) => Some(m),
                    QsvMsg::Guess(_) => None,
                });
                lift(Solo(AllZeroLane).round(env, s, inbox, q)?, QsvMsg::AllZero, QsvLaneOut::AllZero)
            }
            _ => unreachable!("lane and state kinds always match"),
        })
    }
}

/// One `Q_{h,m}` lane per guess, then the all-zero lane.
pub fn lanes(upper_bound: usize, record: bool, w_override: Option<Mat4>) -> Result<Vec<QsvLane>, QhmError> {
    let mut v = Vec::new();
    for (h, m) in guesses(upper_bound) {
        let mut q = Qhm::new(h, m)?;
        if record {
            q = q.record_outcomes();
        }
        if let Some(w) = w_override {
            q = q.with_w(w);
        }
        v.push(QsvLane::Guess(Box::new(q)));
    }
    v.push(QsvLane::AllZero);
    Ok(v)
}

/// Per-party fold of the lane outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct QsvAcc {
    /// No `Q_{h,m}` lane said false.
    pub all_true: bool,
    /// The all-zero lane's answer.
    pub all_zero: bool,
    /// `r` of the first lane that said false.
    pub first_false: Option<u8>,
}

fn absorb(acc: &mut QsvAcc, out: &QsvLaneOut) {
    match out {
        QsvLaneOut::Guess(QhmOut::Verdict { value: false, r }) => {
            acc.all_true = false;
            if acc.first_false.is_none() {
                acc.first_false = Some(r.unwrap_or(SENTINEL));
            }
        }
        QsvLaneOut::Guess(_) => {}
        QsvLaneOut::AllZero(z) => acc.all_zero = *z,
    }
}

fn init() -> QsvAcc {
    QsvAcc {
        all_true: true,
        all_zero: false,
        first_false: None,
    }
}

/// `¬y₀ ∧ y₁`.
pub struct QsvVerdict;

impl Combine for QsvVerdict {
    type LaneOut = QsvLaneOut;
    type Acc = QsvAcc;
    type Out = bool;

    fn init(&self) -> QsvAcc {
        init()
    }

    fn absorb(&self, acc: &mut QsvAcc, _: usize, out: &QsvLaneOut) {
        absorb(acc, out)
    }

    fn finish(&self, acc: &QsvAcc) -> bool {
        !acc.all_zero && acc.all_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrimeOut {
    True,
    /// Outcome in `0..=3`, or [`SENTINEL`].
    Outcome(u8),
}

/// `true`, or the outcome from the first lane that said false.
pub struct QsvPrime;

impl Combine for QsvPrime {
    type LaneOut = QsvLaneOut;
    type Acc = QsvAcc;
    type Out = PrimeOut;

    fn init(&self) -> QsvAcc {
        init()
    }

    fn absorb(&self, acc: &mut QsvAcc, _: usize, out: &QsvLaneOut) {
        absorb(acc, out)
    }

    fn finish(&self, acc: &QsvAcc) -> PrimeOut {
        if !acc.all_zero && acc.all_true {
            PrimeOut::True
        } else {
            PrimeOut::Outcome(acc.first_false.unwrap_or(SENTINEL))
        }
    }
}

pub type Qsv = Parallel<QsvLane, QsvVerdict>;
pub type QsvPrimeProgram = Parallel<QsvLane, QsvPrime>;

pub fn qsv(upper_bound: usize) -> Result<Qsv, QhmError> {
    Ok(Parallel {
        lanes: lanes(upper_bound, false, None)?,
        combine: QsvVerdict,
    })
}

/// QSV with every `W_h` replaced by `w`; for negative controls.
pub fn qsv_with_w(upper_bound: usize, w: Mat4) -> Result<Qsv, QhmError> {
    Ok(Parallel {
        lanes: lanes(upper_bound, false, Some(w))?,
        combine: QsvVerdict,
    })
}

pub fn qsv_prime(upper_bound: usize) -> Result<QsvPrimeProgram, QhmError> {
    Ok(Parallel {
        lanes: lanes(upper_bound, true, None)?,
        combine: QsvPrime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::factored_distribution;
    use crate::graph::{example1b, ring};
    use crate::runtime::Runtime;

    #[test]
    fn lane_order() {
        assert_eq!(guesses(3), vec![(0, 2), (0, 3), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]);
    }

    #[test]
    fn factored_matches_monolithic_on_two_parties() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        let p = qsv(2).unwrap();
        for x in [[true, true], [true, false], [false, false]] {
            let mono = rt.output_distribution(&p, &x).unwrap();
            let (fact, meter) = factored_distribution(&rt, &p, &x).unwrap();
            assert!(mono.approx_eq(&fact, 1e-9), "x={x:?}");
            let expect = x.iter().filter(|&&b| b).count() == 1;
            assert_eq!(fact.outcomes().collect::<Vec<_>>(), vec![&vec![expect; 2]]);
            assert_eq!(meter.rounds, 10);
        }
    }

    #[test]
    fn examples() {
        let g = example1b();
        let rt = Runtime::new(&g);
        let (d, _) = factored_distribution(&rt, &qsv(4).unwrap(), &[true, false, false, false]).unwrap();
        assert_eq!(d.outcomes().collect::<Vec<_>>(), vec![&vec![true; 4]]);
        let g = ring(3);
        let rt = Runtime::new(&g);
        let (d, _) = factored_distribution(&rt, &qsv(3).unwrap(), &[true, true, false]).unwrap();
        assert_eq!(d.outcomes().collect::<Vec<_>>(), vec![&vec![false; 3]]);
        let (d, _) = factored_distribution(&rt, &qsv(3).unwrap(), &[false; 3]).unwrap();
        assert_eq!(d.outcomes().collect::<Vec<_>>(), vec![&vec![false; 3]]);
    }

    #[test]
    fn prime_outcomes_split_two_actives() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        let p = qsv_prime(2).unwrap();
        let (d, _) = factored_distribution(&rt, &p, &[true, true]).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-9);
        for outs in d.outcomes() {
            match (outs[0], outs[1]) {
                (PrimeOut::Outcome(a), PrimeOut::Outcome(b)) => {
                    assert!(a < SENTINEL && b < SENTINEL && a != b, "{outs:?}")
                }
                _ => panic!("{outs:?}"),
            }
        }
        let (d, _) = factored_distribution(&rt, &p, &[true, false]).unwrap();
        assert_eq!(d.outcomes().collect::<Vec<_>>(), vec![&vec![PrimeOut::True; 2]]);
        let (d, _) = factored_distribution(&rt, &p, &[false, false]).unwrap();
        assert_eq!(d.outcomes().collect::<Vec<_>>(), vec![&vec![PrimeOut::Outcome(SENTINEL); 2]]);
    }
}
