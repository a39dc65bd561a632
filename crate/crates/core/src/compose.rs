//! Parallel composition of round programs.
//!
//! A [`Parallel`] program runs several lanes side by side. Messages are
//! tagged with their lane, and the composite halts once every lane has
//! halted. Per-party lane outputs are folded left to right by a
//! [`Combine`].
//!
//! Lanes never share registers or randomness, so the joint output law is
//! the product of the lane laws. [`factored_distribution`] and
//! [`factored_sample`] use this to evaluate each lane on its own.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::dist::Dist;
use crate::runtime::{Action, Envelope, PartyEnv, QuantumPort, RoundProgram, RunError, Runtime, StepResult, WireSize};

/// Bits charged for a lane tag.
pub const LANE_TAG_BITS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneMsg<M> {
    pub lane: u16,
    pub msg: M,
}

impl<M: WireSize> WireSize for LaneMsg<M> {
    fn wire_bits(&self) -> u64 {
        LANE_TAG_BITS + self.msg.wire_bits()
    }
}

/// Folds one party's lane outputs, in lane order.
pub trait Combine {
    type LaneOut: Ord;
    type Acc: Clone + Ord + Debug;
    type Out: Clone + Ord + Debug;

    fn init(&self) -> Self::Acc;
    fn absorb(&self, acc: &mut Self::Acc, lane: usize, out: &Self::LaneOut);
    fn finish(&self, acc: &Self::Acc) -> Self::Out;
}

pub struct Parallel<P, C> {
    pub lanes: Vec<P>,
    pub combine: C,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LaneState<S, O> {
    Running(S),
    Done(O),
}

impl<P, C> RoundProgram for Parallel<P, C>
where
    P: RoundProgram,
    C: Combine<LaneOut = P::Output>,
{
    type Input = P::Input;
    type State = Vec<LaneState<P::State, P::Output>>;
    type Msg = LaneMsg<P::Msg>;
    type Output = C::Out;

    fn start(&self, env: &PartyEnv, input: P::Input) -> Self::State {
        self.lanes
            .iter()
            .map(|l| LaneState::Running(l.start(env, input.clone())))
            .collect()
    }

    fn round(
        &self,
        env: &PartyEnv,
        states: &mut Self::State,
        inbox: Vec<Vec<Envelope<Self::Msg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<Self::Msg, Self::Output>> {
        let mut split: Vec<Vec<Vec<Envelope<P::Msg>>>> = vec![vec![Vec::new(); env.d_in]; self.lanes.len()];
        for (p, envs) in inbox.into_iter().enumerate() {
            for e in envs {
                if let Some(lane) = split.get_mut(e.payload.lane as usize) {
                    lane[p].push(Envelope {
                        payload: e.payload.msg,
                        registers: e.registers,
                    });
                }
            }
        }
        let mut outbox: Vec<Vec<Envelope<Self::Msg>>> = vec![Vec::new(); env.d_out];
        for (i, (lane, lane_inbox)) in self.lanes.iter().zip(split).enumerate() {
            let LaneState::Running(st) = &mut states[i] else { continue };
            match lane.round(env, st, lane_inbox, q)? {
                Action::Send(out) => {
                    for (p, envs) in out.into_iter().enumerate() {
                        let Some(port) = outbox.get_mut(p) else { break };
                        port.extend(envs.into_iter().map(|e| Envelope {
                            payload: LaneMsg {
                                lane: i as u16,
                                msg: e.payload,
                            },
                            registers: e.registers,
                        }));
                    }
                }
                Action::Halt(o) => states[i] = LaneState::Done(o),
            }
        }
        let mut acc = self.combine.init();
        for (i, s) in states.iter().enumerate() {
            match s {
                LaneState::Done(o) => self.combine.absorb(&mut acc, i, o),
                LaneState::Running(_) => return Ok(Action::Send(outbox)),
            }
        }
        Ok(Action::Halt(self.combine.finish(&acc)))
    }
}

/// Gives lane `index` its own entry of a per-lane input vector.
pub struct Select<P> {
    pub index: usize,
    pub inner: P,
}

impl<P: RoundProgram> RoundProgram for Select<P> {
    type Input = Vec<P::Input>;
    type State = P::State;
    type Msg = P::Msg;
    type Output = P::Output;

    fn start(&self, env: &PartyEnv, input: Vec<P::Input>) -> P::State {
        self.inner.start(env, input[self.index].clone())
    }

    fn round(
        &self,
        env: &PartyEnv,
        state: &mut P::State,
        inbox: Vec<Vec<Envelope<P::Msg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<P::Msg, P::Output>> {
        self.inner.round(env, state, inbox, q)
    }
}

/// Resource use of a set of runs. For a single program these are maxima
/// over branches; [`Meter::beside`] combines lanes run side by side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub rounds: u32,
    pub cbits: u64,
    pub qubits: u64,
    pub branches: u64,
}

impl Meter {
    pub fn beside(self, other: Meter) -> Meter {
        Meter {
            rounds: self.rounds.max(other.rounds),
            cbits: self.cbits + other.cbits,
            qubits: self.qubits + other.qubits,
            branches: self.branches + other.branches,
        }
    }

    /// Worst case over alternative executions.
    pub fn either(self, other: Meter) -> Meter {
        Meter {
            rounds: self.rounds.max(other.rounds),
            cbits: self.cbits.max(other.cbits),
            qubits: self.qubits.max(other.qubits),
            branches: self.branches + other.branches,
        }
    }
}

/// Exact output law of one program, by branch enumeration.
pub fn lane_distribution<P: RoundProgram>(
    rt: &Runtime<'_>,
    program: &P,
    inputs: &[P::Input],
) -> Result<(Dist<Vec<P::Output>>, Meter), RunError> {
    let mut d = Dist::new();
    let mut meter = Meter::default();
    for run in rt.branches(program, inputs)? {
        let t = run.transcript;
        meter = meter.either(Meter {
            rounds: t.rounds,
            cbits: t.cbits,
            qubits: t.qubits,
            branches: 1,
        });
        d.add_with_witness(t.outputs, t.probability, || vec![t.path.clone()]);
    }
    Ok((d, meter))
}

/// Folds per-lane output laws with `combine`, lane by lane.
pub fn fold_lanes<C: Combine>(
    n: usize,
    combine: &C,
    lanes: impl IntoIterator<Item = Dist<Vec<C::LaneOut>>>,
) -> Dist<Vec<C::Out>> {
    let mut acc: Dist<Vec<C::Acc>> = Dist::point(vec![combine.init(); n]);
    for (i, d) in lanes.into_iter().enumerate() {
        acc = acc.product(&d, |accs, outs| {
            accs.iter()
                .zip(outs)
                .map(|(a, o)| {
                    let mut a = a.clone();
                    combine.absorb(&mut a, i, o);
                    a
                })
                .collect()
        });
    }
    acc.map(|accs| accs.iter().map(|a| combine.finish(a)).collect())
}

/// Exact output law of `par`, evaluating each lane separately. Witnesses
/// hold one branch path per lane, in lane order.
pub fn factored_distribution<P, C>(
    rt: &Runtime<'_>,
    par: &Parallel<P, C>,
    inputs: &[P::Input],
) -> Result<(Dist<Vec<C::Out>>, Meter), RunError>
where
    P: RoundProgram,
    C: Combine<LaneOut = P::Output>,
{
    let mut meter = Meter::default();
    let mut dists = Vec::with_capacity(par.lanes.len());
    for lane in &par.lanes {
        let (d, m) = lane_distribution(rt, lane, inputs)?;
        meter = meter.beside(m);
        dists.push(d);
    }
    Ok((fold_lanes(rt.graph().n(), &par.combine, dists), meter))
}

/// Seed for lane `lane` of a run seeded with `seed`.
pub fn lane_seed(seed: u64, lane: usize) -> u64 {
    let mut z = seed ^ (lane as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One sampled execution of `par`, each lane sampled on its own with
/// [`lane_seed`].
pub fn factored_sample<P, C>(
    rt: &Runtime<'_>,
    par: &Parallel<P, C>,
    inputs: &[P::Input],
    seed: u64,
) -> Result<(Vec<C::Out>, Meter), RunError>
where
    P: RoundProgram,
    C: Combine<LaneOut = P::Output>,
{
    let n = rt.graph().n();
    let mut accs = vec![par.combine.init(); n];
    let mut meter = Meter::default();
    for (i, lane) in par.lanes.iter().enumerate() {
        let run = rt.sample(lane, inputs, lane_seed(seed, i))?;
        let t = run.transcript;
        meter = meter.beside(Meter {
            rounds: t.rounds,
            cbits: t.cbits,
            qubits: t.qubits,
            branches: 1,
        });
        for (a, o) in accs.iter_mut().zip(&t.outputs) {
            par.combine.absorb(a, i, o);
        }
    }
    Ok((accs.iter().map(|a| par.combine.finish(a)).collect(), meter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{AllZero, Phase, PhaseProgram, Solo};
    use crate::graph::{example1a, ring};
    use crate::qsim::{computational_basis, hadamard_low, RegisterTag, Symbol};

    // Each party measures a fresh |+̂⟩ and reports the bit.
    struct Coin;

    impl RoundProgram for Coin {
        type Input = ();
        type State = ();
        type Msg = ();
        type Output = u8;

        fn start(&self, _: &PartyEnv, _: ()) {}

        fn round(
            &self,
            _: &PartyEnv,
            _: &mut (),
            _: Vec<Vec<Envelope<()>>>,
            q: &mut QuantumPort<'_>,
        ) -> StepResult<Action<(), u8>> {
            let r = q.alloc(RegisterTag::R, Symbol::Zero)?;
            q.apply_unitary(r, &hadamard_low())?;
            let o = q.measure(r, &computational_basis())?;
            q.discard(r)?;
            Ok(Action::Halt(o as u8))
        }
    }

    struct Sum;

    impl Combine for Sum {
        type LaneOut = u8;
        type Acc = u8;
        type Out = u8;
        fn init(&self) -> u8 {
            0
        }
        fn absorb(&self, acc: &mut u8, _: usize, out: &u8) {
            *acc += out;
        }
        fn finish(&self, acc: &u8) -> u8 {
            *acc
        }
    }

    #[test]
    fn factored_matches_monolithic() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        let par = Parallel {
            lanes: vec![Coin, Coin, Coin],
            combine: Sum,
        };
        let mono = rt.output_distribution(&par, &[(), ()]).unwrap();
        let (fact, meter) = factored_distribution(&rt, &par, &[(), ()]).unwrap();
        assert!(mono.approx_eq(&fact, 1e-12));
        assert_eq!(mono.len(), 16);
        assert!((fact.probability(&vec![0, 0]) - 1.0 / 64.0).abs() < 1e-12);
        assert_eq!(meter.rounds, 1);
        let (out, _) = factored_sample(&rt, &par, &[(), ()], 5).unwrap();
        assert!(out.iter().all(|&s| s <= 3));
    }

    struct ZeroLanes;

    impl PhaseProgram for ZeroLanes {
        type Input = bool;
        type Phase = AllZero;
        fn begin(&self, env: &PartyEnv, x: bool) -> AllZero {
            AllZero::new(env.global.upper_bound, x)
        }
    }

    struct All;

    impl Combine for All {
        type LaneOut = bool;
        type Acc = (bool, usize);
        type Out = (bool, usize);
        fn init(&self) -> (bool, usize) {
            (true, 0)
        }
        fn absorb(&self, acc: &mut (bool, usize), lane: usize, out: &bool) {
            acc.0 &= *out;
            acc.1 += lane;
        }
        fn finish(&self, acc: &(bool, usize)) -> (bool, usize) {
            *acc
        }
    }

    #[test]
    fn lanes_do_not_cross_talk() {
        let g = example1a();
        let rt = Runtime::new(&g);
        let par = Parallel {
            lanes: vec![
                Select {
                    index: 0,
                    inner: Solo(ZeroLanes),
                },
                Select {
                    index: 1,
                    inner: Solo(ZeroLanes),
                },
            ],
            combine: All,
        };
        let inputs = vec![vec![false, false], vec![false, true], vec![false, false], vec![false, false]];
        let run = rt.sample(&par, &inputs, 0).unwrap();
        assert_eq!(run.transcript.outputs, vec![(false, 1); 4]);
        assert_eq!(run.transcript.rounds as usize, AllZero::new(4, false).exchanges() + 1);
        let single = rt.sample(&Solo(ZeroLanes), &[false; 4], 0).unwrap();
        assert_eq!(single.transcript.outputs, vec![true; 4]);
    }
}
