//! Exact computation of a symmetric Boolean function that is constant on
//! all inputs of Hamming weight above `k`.
//!
//! Stage 1 runs the all-zero test and QSV′ on the input. When QSV′ says
//! false, every active party holds an outcome `r ∈ 0..4`, and the active
//! parties do not all agree. Each class of active parties is then split by
//! `r` and QSV′ runs once per class. As soon as some class is a singleton,
//! its member (from the smallest such class) becomes leader, everyone
//! learns `|x|` from it and evaluates the table.
//!
//! A class that is not a singleton splits into at least two classes, so
//! after stage `t` without a singleton every surviving class has at least
//! two members and `|x| ≥ 2^t`. With `⌊log₂ k⌋ + 1` stages, reaching the
//! end without a singleton proves `|x| > k`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{ColorSet, LeaderWeight, Phase, PhaseProgram, Role, Solo, SoloState, WeightMsg};
use crate::compose::{factored_distribution, fold_lanes, lane_distribution, Combine, LaneMsg, Meter, Parallel, Select};
use crate::dist::Dist;
use crate::quantum::qhm::{QhmError, SENTINEL};
use crate::quantum::qsv::{qsv_prime, AllZeroLane, PrimeOut, QsvPrimeProgram};
use crate::runtime::{Action, Envelope, Fault, PartyEnv, QuantumPort, RoundProgram, RunError, Runtime, StepResult, WireSize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("a table needs at least the value at weight 0")]
    Empty,
}

/// `f(w)` for `w ≤ k`, and the constant value above `k`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct SymmetricTable {
    values: Vec<bool>,
    tail: bool,
}

#[derive(Deserialize)]
struct RawTable {
    values: Vec<bool>,
    tail: bool,
}

impl TryFrom<RawTable> for SymmetricTable {
    type Error = TableError;
    fn try_from(r: RawTable) -> Result<Self, TableError> {
        Self::new(r.values, r.tail)
    }
}

impl SymmetricTable {
    pub fn new(values: Vec<bool>, tail: bool) -> Result<Self, TableError> {
        if values.is_empty() {
            return Err(TableError::Empty);
        }
        Ok(Self { values, tail })
    }

    /// `|x| = j`.
    pub fn exactly(j: usize) -> Self {
        Self {
            values: (0..=j).map(|w| w == j).collect(),
            tail: false,
        }
    }

    /// `|x| ≤ j`.
    pub fn at_most(j: usize) -> Self {
        Self {
            values: vec![true; j + 1],
            tail: false,
        }
    }

    pub fn k(&self) -> usize {
        self.values.len() - 1
    }

    pub fn tail(&self) -> bool {
        self.tail
    }

    pub fn eval(&self, weight: usize) -> bool {
        self.values.get(weight).copied().unwrap_or(self.tail)
    }
}

/// Number of QSV′ stages for threshold `k`: `⌊log₂ max(k, 1)⌋ + 1`.
pub fn stage_count(k: usize) -> usize {
    (usize::BITS - k.max(1).leading_zeros()) as usize
}

/// `⌈log₂ max(k, 2)⌉`.
pub fn ceil_log2_stages(k: usize) -> usize {
    let k = k.max(2);
    (usize::BITS - (k - 1).leading_zeros()) as usize
}

/// Sequence of outcomes naming a class; classes of one stage are ordered
/// lexicographically.
pub type ClassLabel = Vec<u8>;

/// Classes of stage `i` (0-based) in lane order.
pub fn class_labels(stage: usize) -> Vec<ClassLabel> {
    let mut v: Vec<ClassLabel> = vec![Vec::new()];
    for _ in 0..stage {
        v = v
            .into_iter()
            .flat_map(|l| {
                (0..4u8).map(move |z| {
                    let mut l = l.clone();
                    l.push(z);
                    l
                })
            })
            .collect();
    }
    v
}

pub enum StageLane {
    AllZero,
    Class(QsvPrimeProgram),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageLaneState {
    AllZero(SoloState<crate::classical::AllZero>),
    Class(<QsvPrimeProgram as RoundProgram>::State),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageMsg {
    AllZero(ColorSet<()>),
    Class(<QsvPrimeProgram as RoundProgram>::Msg),
}

impl WireSize for StageMsg {
    fn wire_bits(&self) -> u64 {
        match self {
            StageMsg::AllZero(m) => m.wire_bits(),
            StageMsg::Class(m) => m.wire_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageOut {
    AllZero(bool),
    Class(PrimeOut),
}

fn map_inbox<A, B>(inbox: Vec<Vec<Envelope<A>>>, f: impl Fn(A) -> Option<B>) -> Vec<Vec<Envelope<B>>> {
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

fn map_action<A, B, O, P>(a: Action<A, O>, f: impl Fn(A) -> B, g: impl Fn(O) -> P) -> Action<B, P> {
    match a {
        Action::Send(out) => Action::Send(map_inbox(out, |m| Some(f(m)))),
        Action::Halt(o) => Action::Halt(g(o)),
    }
}

impl RoundProgram for StageLane {
    type Input = bool;
    type State = StageLaneState;
    type Msg = StageMsg;
    type Output = StageOut;

    fn start(&self, env: &PartyEnv, x: bool) -> StageLaneState {
        match self {
            StageLane::AllZero => StageLaneState::AllZero(Solo(AllZeroLane).start(env, x)),
            StageLane::Class(p) => StageLaneState::Class(p.start(env, x)),
        }
    }

    fn round(
        &self,
        env: &PartyEnv,
        state: &mut StageLaneState,
        inbox: Vec<Vec<Envelope<StageMsg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<StageMsg, StageOut>> {
        Ok(match (self, state) {
            (StageLane::AllZero, StageLaneState::AllZero(s)) => {
                let inbox = map_inbox(inbox, |m| match m {
                    StageMsg::AllZero(m) => Some(m),
                    StageMsg::Class(_) => None,
                });
                map_action(Solo(AllZeroLane).round(env, s, inbox, q)?, StageMsg::AllZero, StageOut::AllZero)
            }
            (StageLane::Class(p), StageLaneState::Class(s)) => {
                let inbox = map_inbox(inbox, |m| match m {
                    StageMsg::Class(m) => Some(m),
                    StageMsg::AllZero(_) => None,
                });
                map_action(p.round(env, s, inbox, q)?, StageMsg::Class, StageOut::Class)
            }
            _ => unreachable!("lane and state kinds always match"),
        })
    }
}

/// Collects the stage's lane outputs in lane order.
pub struct StageCombine;

impl Combine for StageCombine {
    type LaneOut = StageOut;
    type Acc = Vec<StageOut>;
    type Out = Vec<StageOut>;

    fn init(&self) -> Vec<StageOut> {
        Vec::new()
    }

    fn absorb(&self, acc: &mut Vec<StageOut>, _: usize, out: &StageOut) {
        acc.push(*out);
    }

    fn finish(&self, acc: &Vec<StageOut>) -> Vec<StageOut> {
        acc.clone()
    }
}

pub type StageProgram = Parallel<Select<StageLane>, StageCombine>;

/// What a party does after a stage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageDecision {
    /// Everyone is inactive.
    AllZero,
    /// A singleton class exists; `Role` is this party's.
    Lead(Role),
    /// No singleton: the party's class for the next stage.
    Refine(Option<ClassLabel>),
}

/// Lane inputs of stage `stage` for a party with class `label`.
pub fn memberships(stage: usize, x: bool, label: &Option<ClassLabel>) -> Vec<bool> {
    let mut v = Vec::new();
    if stage == 0 {
        v.push(x);
    }
    for c in class_labels(stage) {
        v.push(label.as_ref() == Some(&c));
    }
    v
}

/// A party's decision from its stage outputs.
pub fn decide(stage: usize, label: &Option<ClassLabel>, outs: &[StageOut]) -> StageDecision {
    let (zero, classes) = if stage == 0 {
        (matches!(outs[0], StageOut::AllZero(true)), &outs[1..])
    } else {
        (false, outs)
    };
    if zero {
        return StageDecision::AllZero;
    }
    let labels = class_labels(stage);
    if let Some(i) = classes.iter().position(|o| *o == StageOut::Class(PrimeOut::True)) {
        let leader = label.as_ref() == Some(&labels[i]);
        return StageDecision::Lead(if leader { Role::Leader } else { Role::Follower });
    }
    let next = label.as_ref().and_then(|l| {
        let i = labels.iter().position(|c| c == l)?;
        match classes[i] {
            StageOut::Class(PrimeOut::Outcome(r)) if r < SENTINEL => {
                let mut l = l.clone();
                l.push(r);
                Some(l)
            }
            _ => None,
        }
    });
    StageDecision::Refine(next)
}

pub struct Qsym {
    pub table: SymmetricTable,
    pub upper_bound: usize,
    pub stages: Vec<StageProgram>,
}

pub fn qsym(table: SymmetricTable, upper_bound: usize) -> Result<Qsym, QhmError> {
    let mut stages = Vec::new();
    for i in 0..stage_count(table.k()) {
        let mut lanes = Vec::new();
        if i == 0 {
            lanes.push(StageLane::AllZero);
        }
        for _ in class_labels(i) {
            lanes.push(StageLane::Class(qsv_prime(upper_bound)?));
        }
        stages.push(Parallel {
            lanes: lanes
                .into_iter()
                .enumerate()
                .map(|(index, inner)| Select { index, inner })
                .collect(),
            combine: StageCombine,
        });
    }
    Ok(Qsym {
        table,
        upper_bound,
        stages,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum QsymPhase {
    Start,
    Stage(usize, <StageProgram as RoundProgram>::State),
    Weight { lw: LeaderWeight, sent: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QsymState {
    x: bool,
    label: Option<ClassLabel>,
    phase: QsymPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QsymMsg {
    Stage(u8, LaneMsg<StageMsg>),
    Weight(WeightMsg),
}

impl WireSize for QsymMsg {
    fn wire_bits(&self) -> u64 {
        4 + match self {
            QsymMsg::Stage(_, m) => m.wire_bits(),
            QsymMsg::Weight(m) => m.wire_bits(),
        }
    }
}

type QsymAction = Action<QsymMsg, bool>;

impl Qsym {
    fn run_stage(
        &self,
        env: &PartyEnv,
        st: &mut QsymState,
        i: usize,
        mut inner: <StageProgram as RoundProgram>::State,
        inbox: Vec<Vec<Envelope<QsymMsg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<QsymAction> {
        let inbox = map_inbox(inbox, |m| match m {
            QsymMsg::Stage(s, m) if s as usize == i => Some(m),
            _ => None,
        });
        match self.stages[i].round(env, &mut inner, inbox, q)? {
            Action::Send(out) => {
                st.phase = QsymPhase::Stage(i, inner);
                Ok(Action::Send(map_inbox(out, |m| Some(QsymMsg::Stage(i as u8, m)))))
            }
            Action::Halt(outs) => match decide(i, &st.label, &outs) {
                StageDecision::AllZero => Ok(Action::Halt(self.table.eval(0))),
                StageDecision::Lead(role) => {
                    let lw = LeaderWeight::new(env.global.upper_bound, st.x, role);
                    let out = lw.outgoing(env.d_out);
                    st.phase = QsymPhase::Weight { lw, sent: 1 };
                    Ok(Action::Send(
                        out.into_iter()
                            .map(|m| m.map(|m| Envelope::classical(QsymMsg::Weight(m))).into_iter().collect())
                            .collect(),
                    ))
                }
                StageDecision::Refine(label) => {
                    st.label = label;
                    if i + 1 == self.stages.len() {
                        return Ok(Action::Halt(self.table.tail()));
                    }
                    let next = self.stages[i + 1].start(env, memberships(i + 1, st.x, &st.label));
                    self.run_stage(env, st, i + 1, next, vec![Vec::new(); env.d_in], q)
                }
            },
        }
    }
}

impl RoundProgram for Qsym {
    type Input = bool;
    type State = QsymState;
    type Msg = QsymMsg;
    type Output = bool;

    fn start(&self, _: &PartyEnv, x: bool) -> QsymState {
        QsymState {
            x,
            label: x.then(Vec::new),
            phase: QsymPhase::Start,
        }
    }

    fn round(
        &self,
        env: &PartyEnv,
        st: &mut QsymState,
        inbox: Vec<Vec<Envelope<QsymMsg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<QsymAction> {
        if env.global.upper_bound != self.upper_bound {
            return Err(Fault::Program(String::from("upper bound differs from the one the lanes were built for")).into());
        }
        match core::mem::replace(&mut st.phase, QsymPhase::Start) {
            QsymPhase::Start => {
                let inner = self.stages[0].start(env, memberships(0, st.x, &st.label));
                self.run_stage(env, st, 0, inner, inbox, q)
            }
            QsymPhase::Stage(i, inner) => self.run_stage(env, st, i, inner, inbox, q),
            QsymPhase::Weight { mut lw, sent } => {
                lw.incoming(
                    inbox
                        .into_iter()
                        .map(|envs| {
                            envs.into_iter().find_map(|e| match e.payload {
                                QsymMsg::Weight(m) => Some(m),
                                QsymMsg::Stage(..) => None,
                            })
                        })
                        .collect(),
                );
                if sent == lw.exchanges() {
                    return Ok(Action::Halt(self.table.eval(lw.finish().weight as usize)));
                }
                let out = lw.outgoing(env.d_out);
                st.phase = QsymPhase::Weight { lw, sent: sent + 1 };
                Ok(Action::Send(
                    out.into_iter()
                        .map(|m| m.map(|m| Envelope::classical(QsymMsg::Weight(m))).into_iter().collect())
                        .collect(),
                ))
            }
        }
    }
}

struct WeightLane;

impl PhaseProgram for WeightLane {
    type Input = (bool, Role);
    type Phase = LeaderWeight;
    fn begin(&self, env: &PartyEnv, (x, role): (bool, Role)) -> LeaderWeight {
        LeaderWeight::new(env.global.upper_bound, x, role)
    }
}

/// Result of [`qsym_distribution`].
#[derive(Debug, Clone)]
pub struct QsymLaw {
    pub outputs: Dist<Vec<bool>>,
    /// Most stages any branch ran.
    pub stages_run: usize,
    pub meter: Meter,
}

/// Exact law of the outputs, stage by stage. Within a stage the class
/// lanes are evaluated separately; QSV′ laws are cached by membership.
pub fn qsym_distribution(rt: &Runtime<'_>, q: &Qsym, x: &[bool]) -> Result<QsymLaw, RunError> {
    let n = rt.graph().n();
    let disagree = |round: u32| RunError::Fault {
        party: 0,
        round,
        fault: Fault::Program(String::from("parties disagree on the stage decision")),
    };
    let mut cache: BTreeMap<Vec<bool>, (Dist<Vec<PrimeOut>>, Meter)> = BTreeMap::new();
    let mut weight_cache: BTreeMap<Vec<Role>, (usize, u32)> = BTreeMap::new();
    let mut outputs = Dist::new();
    let mut meter = Meter::default();
    let mut stages_run = 0;
    // Per-party classes and the round the last stage ended in.
    let mut frontier: Dist<(Vec<Option<ClassLabel>>, u32)> =
        Dist::point((x.iter().map(|&b| b.then(Vec::new)).collect(), 0));
    for (i, stage) in q.stages.iter().enumerate() {
        if frontier.is_empty() {
            break;
        }
        stages_run = i + 1;
        let mut next = Dist::new();
        for ((labels, ended), w) in frontier.iter() {
            let inputs: Vec<Vec<bool>> = (0..n).map(|v| memberships(i, x[v], &labels[v])).collect();
            let mut lanes = Vec::with_capacity(stage.lanes.len());
            let mut stage_meter = Meter::default();
            for (li, lane) in stage.lanes.iter().enumerate() {
                let column: Vec<bool> = inputs.iter().map(|m| m[li]).collect();
                let d = match &lane.inner {
                    StageLane::AllZero => {
                        let (d, m) = lane_distribution(rt, &Solo(AllZeroLane), &column)?;
                        stage_meter = stage_meter.beside(m);
                        d.map(|v| v.iter().map(|&b| StageOut::AllZero(b)).collect::<Vec<_>>())
                    }
                    StageLane::Class(p) => {
                        if !cache.contains_key(&column) {
                            let r = factored_distribution(rt, p, &column)?;
                            cache.insert(column.clone(), r);
                        }
                        let (d, m) = &cache[&column];
                        stage_meter = stage_meter.beside(*m);
                        d.map(|v| v.iter().map(|&o| StageOut::Class(o)).collect::<Vec<_>>())
                    }
                };
                lanes.push(d);
            }
            meter = meter.either(stage_meter);
            // A stage started in the round the previous one halted in.
            let end = if i == 0 { stage_meter.rounds } else { ended + stage_meter.rounds - 1 };
            for (outs, w2) in fold_lanes(n, &stage.combine, lanes).iter() {
                let p = w.probability * w2.probability;
                let decisions: Vec<StageDecision> = (0..n).map(|v| decide(i, &labels[v], &outs[v])).collect();
                match &decisions[0] {
                    StageDecision::AllZero => {
                        if decisions.iter().any(|d| *d != StageDecision::AllZero) {
                            return Err(disagree(end));
                        }
                        outputs.add(vec![q.table.eval(0); n], p);
                        meter.rounds = meter.rounds.max(end);
                    }
                    StageDecision::Lead(_) => {
                        let roles: Vec<Role> = decisions
                            .iter()
                            .map(|d| match d {
                                StageDecision::Lead(r) => Ok(*r),
                                _ => Err(disagree(end)),
                            })
                            .collect::<Result<_, _>>()?;
                        if !weight_cache.contains_key(&roles) {
                            let inputs: Vec<(bool, Role)> = x.iter().copied().zip(roles.iter().copied()).collect();
                            let run = rt.sample(&Solo(WeightLane), &inputs, 0)?;
                            let t = run.transcript;
                            let report = t.outputs[0].clone();
                            if t.outputs.iter().any(|r| *r != report) || report.members != n {
                                return Err(disagree(end));
                            }
                            weight_cache.insert(roles.clone(), (report.weight as usize, t.rounds));
                        }
                        let (weight, lw_rounds) = weight_cache[&roles];
                        outputs.add(vec![q.table.eval(weight); n], p);
                        meter.rounds = meter.rounds.max(end + lw_rounds - 1);
                    }
                    StageDecision::Refine(_) => {
                        let next_labels: Vec<Option<ClassLabel>> = decisions
                            .into_iter()
                            .map(|d| match d {
                                StageDecision::Refine(l) => Ok(l),
                                _ => Err(disagree(end)),
                            })
                            .collect::<Result<_, _>>()?;
                        if i + 1 == q.stages.len() {
                            outputs.add(vec![q.table.tail(); n], p);
                            meter.rounds = meter.rounds.max(end);
                        } else {
                            next.add((next_labels, end), p);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(QsymLaw {
        outputs,
        stages_run,
        meter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ring;

    #[test]
    fn stage_arithmetic() {
        assert_eq!((0..=8).map(stage_count).collect::<Vec<_>>(), vec![1, 1, 2, 2, 3, 3, 3, 3, 4]);
        assert_eq!((0..=5).map(ceil_log2_stages).collect::<Vec<_>>(), vec![1, 1, 1, 2, 2, 3]);
        assert_eq!(ceil_log2_stages(4), 2);
        assert_eq!(class_labels(1).len(), 4);
        assert_eq!(class_labels(2)[5], vec![1, 1]);
    }

    #[test]
    fn tables() {
        let t2 = SymmetricTable::at_most(2);
        assert_eq!((0..5).map(|w| t2.eval(w)).collect::<Vec<_>>(), vec![true, true, true, false, false]);
        let e2 = SymmetricTable::exactly(2);
        assert_eq!((0..5).map(|w| e2.eval(w)).collect::<Vec<_>>(), vec![false, false, true, false, false]);
        assert_eq!(SymmetricTable::new(Vec::new(), true), Err(TableError::Empty));
    }

    #[test]
    fn stagewise_law_matches_monolithic_runs() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        let q = qsym(SymmetricTable::exactly(2), 2).unwrap();
        for x in [[true, false], [false, false]] {
            let law = qsym_distribution(&rt, &q, &x).unwrap();
            let mono = rt.output_distribution(&q, &x).unwrap();
            assert!(law.outputs.approx_eq(&mono, 1e-9), "x={x:?}");
            assert_eq!(law.outputs.outcomes().collect::<Vec<_>>(), vec![&vec![false; 2]]);
            let rounds = rt.branches(&q, &x).unwrap().iter().map(|r| r.transcript.rounds).max().unwrap();
            assert_eq!(law.meter.rounds, rounds, "x={x:?}");
        }
        // Two actives branch too much for full enumeration; sample instead.
        let x = [true, true];
        let law = qsym_distribution(&rt, &q, &x).unwrap();
        assert_eq!(law.outputs.outcomes().collect::<Vec<_>>(), vec![&vec![true; 2]]);
        assert_eq!(law.stages_run, 2);
        for seed in 0..4 {
            let run = rt.sample(&q, &x, seed).unwrap();
            assert_eq!(run.transcript.outputs, vec![true; 2]);
            assert_eq!(run.transcript.rounds, law.meter.rounds);
        }
    }
}
