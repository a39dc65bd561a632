//! Synchronous round scheduler for anonymous parties.
//!
//! A [`RoundProgram`] sees only its own port counts, the shared
//! [`GlobalInfo`], its inbox, and a [`QuantumPort`] restricted to registers
//! it currently owns. Registers are named by party-local [`Reg`] handles;
//! handles for received registers are assigned in in-port order so they
//! carry no information about other parties.
//!
//! Two execution modes share one step function. Sampling draws outcomes
//! from per-party ChaCha streams. Branch enumeration re-runs a party's step
//! once per outcome of its first unresolved measurement (a "fork") until
//! the step completes, then merges configurations that became identical.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::PortDigraph;
use crate::qsim::{
    sample_index, Basis, Mat4, QsimError, QuantumMemory, RegisterId, RegisterTag, Symbol, SymbolPermutation, PRUNE,
};

/// Configurations are merged when their memories agree to this tolerance.
pub const MERGE_TOL: f64 = 1e-9;
pub const DEFAULT_BRANCH_CAP: usize = 1 << 16;

/// Party-local name of an owned register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub u32);

/// Values every party knows in advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlobalInfo {
    /// Upper bound `N` on the number of parties.
    pub upper_bound: usize,
}

/// Everything a party may look at besides its input and inbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyEnv {
    pub d_in: usize,
    pub d_out: usize,
    pub global: GlobalInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Envelope<M> {
    pub payload: M,
    pub registers: Vec<Reg>,
}

impl<M> Envelope<M> {
    pub fn classical(payload: M) -> Self {
        Self {
            payload,
            registers: Vec::new(),
        }
    }
}

/// Size of a classical payload in bits, for metering only.
pub trait WireSize {
    fn wire_bits(&self) -> u64;
}

impl WireSize for () {
    fn wire_bits(&self) -> u64 {
        0
    }
}

impl WireSize for bool {
    fn wire_bits(&self) -> u64 {
        1
    }
}

impl<T: WireSize> WireSize for Vec<T> {
    fn wire_bits(&self) -> u64 {
        self.iter().map(WireSize::wire_bits).sum()
    }
}

pub enum Action<M, O> {
    /// One list of envelopes per out-port (index `p - 1`).
    Send(Vec<Vec<Envelope<M>>>),
    Halt(O),
}

impl<M: Clone, O> Action<M, O> {
    /// The same envelope on every out-port.
    pub fn broadcast(env: &PartyEnv, payload: M) -> Self {
        Action::Send(vec![vec![Envelope::classical(payload)]; env.d_out])
    }

    pub fn silent(env: &PartyEnv) -> Self {
        Action::Send(vec![Vec::new(); env.d_out])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Fault {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("no register with handle {0}")]
    UnknownHandle(u32),
    #[error("outbox has {got} ports, expected {expected}")]
    BadOutbox { expected: usize, got: usize },
    #[error("replay path does not match the execution")]
    ReplayMismatch,
    #[error("{0}")]
    Program(String),
}

/// Why a step did not complete.
#[derive(Debug, Clone, PartialEq)]
pub enum QError {
    /// Branch mode hit an unresolved measurement; the scheduler re-runs
    /// the step once per option.
    Fork,
    Fault(Fault),
}

impl From<Fault> for QError {
    fn from(f: Fault) -> Self {
        QError::Fault(f)
    }
}

impl From<QsimError> for QError {
    fn from(e: QsimError) -> Self {
        QError::Fault(Fault::Qsim(e))
    }
}

pub type StepResult<T> = Result<T, QError>;

/// Per-round behavior shared by every party.
pub trait RoundProgram {
    type Input: Clone;
    type State: Clone + Ord + Debug;
    type Msg: Clone + Ord + Debug + WireSize;
    type Output: Clone + Ord + Debug;

    fn start(&self, env: &PartyEnv, input: Self::Input) -> Self::State;

    /// One round. `inbox[p - 1]` holds what arrived on in-port `p` during
    /// the previous round.
    fn round(
        &self,
        env: &PartyEnv,
        state: &mut Self::State,
        inbox: Vec<Vec<Envelope<Self::Msg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<Self::Msg, Self::Output>>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
struct PartyRegs {
    map: BTreeMap<u32, RegisterId>,
    next_handle: u32,
    next_seq: u32,
}

impl PartyRegs {
    fn adopt(&mut self, id: RegisterId) -> Reg {
        let h = self.next_handle;
        self.next_handle += 1;
        self.map.insert(h, id);
        Reg(h)
    }
}

enum Chooser<'a> {
    Sample(&'a mut ChaCha8Rng),
    Script {
        script: &'a [usize],
        pos: usize,
        fork: Option<Vec<usize>>,
    },
}

/// A party's window onto the shared quantum memory.
pub struct QuantumPort<'a> {
    memory: &'a mut QuantumMemory,
    regs: &'a mut PartyRegs,
    chooser: Chooser<'a>,
    party: usize,
    round: u32,
    probability: f64,
}

impl<'a> QuantumPort<'a> {
    fn resolve(&self, r: Reg) -> Result<RegisterId, Fault> {
        self.regs.map.get(&r.0).copied().ok_or(Fault::UnknownHandle(r.0))
    }

    fn choose(&mut self, probs: &[f64]) -> StepResult<usize> {
        let live: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > PRUNE).collect();
        if live.len() == 1 {
            return Ok(live[0]);
        }
        match &mut self.chooser {
            Chooser::Sample(rng) => Ok(sample_index(probs, *rng)),
            Chooser::Script { script, pos, fork } => {
                if let Some(&c) = script.get(*pos) {
                    *pos += 1;
                    if probs.get(c).is_none_or(|&p| p <= PRUNE) {
                        return Err(Fault::ReplayMismatch.into());
                    }
                    Ok(c)
                } else {
                    *fork = Some(live);
                    Err(QError::Fork)
                }
            }
        }
    }

    /// Allocates a fresh register holding `symbol`.
    pub fn alloc(&mut self, tag: RegisterTag, symbol: Symbol) -> StepResult<Reg> {
        let id = RegisterId {
            creator: self.party,
            tag,
            epoch: self.round,
            seq: self.regs.next_seq,
        };
        self.regs.next_seq += 1;
        self.memory.alloc(id, symbol)?;
        Ok(self.regs.adopt(id))
    }

    pub fn apply_unitary(&mut self, r: Reg, u: &Mat4) -> StepResult<()> {
        let id = self.resolve(r)?;
        self.memory.apply_local_unitary(id, u)?;
        Ok(())
    }

    pub fn apply_map<F>(&mut self, regs: &[Reg], f: F) -> StepResult<()>
    where
        F: Fn(&[Symbol]) -> Vec<Symbol>,
    {
        let ids: Vec<RegisterId> = regs.iter().map(|&r| self.resolve(r)).collect::<Result<_, _>>()?;
        self.memory.apply_reversible_map(&ids, f)?;
        Ok(())
    }

    pub fn apply_permutation(&mut self, regs: &[Reg], perm: &SymbolPermutation) -> StepResult<()> {
        let ids: Vec<RegisterId> = regs.iter().map(|&r| self.resolve(r)).collect::<Result<_, _>>()?;
        self.memory.apply_permutation(&ids, perm)?;
        Ok(())
    }

    /// Measures `r` in `basis`; the register stays, collapsed.
    pub fn measure(&mut self, r: Reg, basis: &Basis) -> StepResult<usize> {
        let id = self.resolve(r)?;
        let probs = self.memory.outcome_probabilities(id, basis)?;
        let o = self.choose(&probs)?;
        self.probability *= self.memory.collapse(id, basis, o)?;
        Ok(o)
    }

    /// Measures each register of `regs` in `basis`, discarding it, and
    /// folds the outcomes with `fold` starting from `init`. In branch mode
    /// outcome sequences that fold to the same value and leave the same
    /// memory count as one option.
    pub fn measure_fold<F>(&mut self, regs: &[Reg], basis: &Basis, init: u64, fold: F) -> StepResult<u64>
    where
        F: Fn(u64, usize) -> u64,
    {
        let ids: Vec<RegisterId> = regs.iter().map(|&r| self.resolve(r)).collect::<Result<_, _>>()?;
        let value = if let Chooser::Sample(rng) = &mut self.chooser {
            let mut acc = init;
            for &id in &ids {
                let probs = self.memory.outcome_probabilities(id, basis)?;
                let o = sample_index(&probs, *rng);
                self.probability *= self.memory.project_out(id, basis, o)?;
                acc = fold(acc, o);
            }
            acc
        } else {
            let mut entries: Vec<(f64, u64, QuantumMemory)> = vec![(1.0, init, self.memory.clone())];
            for &id in &ids {
                let mut next: Vec<(f64, u64, QuantumMemory)> = Vec::new();
                for (p, acc, mem) in &entries {
                    let probs = mem.outcome_probabilities(id, basis)?;
                    for (o, &q) in probs.iter().enumerate() {
                        if q <= PRUNE {
                            continue;
                        }
                        let mut m = mem.clone();
                        m.project_out(id, basis, o)?;
                        let a = fold(*acc, o);
                        match next
                            .iter_mut()
                            .find(|(_, b, other)| *b == a && other.approx_eq(&m, MERGE_TOL))
                        {
                            Some(slot) => slot.0 += p * q,
                            None => next.push((p * q, a, m)),
                        }
                    }
                }
                entries = next;
            }
            let probs: Vec<f64> = entries.iter().map(|e| e.0).collect();
            let pick = self.choose(&probs)?;
            let (p, acc, mem) = entries.swap_remove(pick);
            *self.memory = mem;
            self.probability *= p;
            acc
        };
        for r in regs {
            self.regs.map.remove(&r.0);
        }
        Ok(value)
    }

    /// Forgets a register that is unentangled from everything else.
    pub fn discard(&mut self, r: Reg) -> StepResult<()> {
        let id = self.resolve(r)?;
        self.memory.discard(id)?;
        self.regs.map.remove(&r.0);
        Ok(())
    }

    /// A classical coin that is heads with probability `num / den`.
    pub fn flip(&mut self, num: u64, den: u64) -> StepResult<bool> {
        let p = num as f64 / den as f64;
        let probs = [1.0 - p, p];
        let o = self.choose(&probs)?;
        self.probability *= probs[o];
        Ok(o == 1)
    }

    /// Number of registers this party owns.
    pub fn owned(&self) -> usize {
        self.regs.map.len()
    }
}

/// Order in which parties take their step inside a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartyOrder {
    #[default]
    Forward,
    Reverse,
}

/// Measurement options taken by one party in one round.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Choice {
    pub round: u32,
    pub party: usize,
    pub options: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript<O> {
    pub rounds: u32,
    pub cbits: u64,
    pub qubits: u64,
    pub outputs: Vec<O>,
    pub probability: f64,
    /// Measurement choices reproducing this transcript via [`Runtime::replay`].
    pub path: Vec<Choice>,
}

/// A finished run with its final memory, for inspection by tests.
#[derive(Debug, Clone)]
pub struct Run<O> {
    pub transcript: Transcript<O>,
    pub memory: QuantumMemory,
    handles: Vec<BTreeMap<u32, RegisterId>>,
}

impl<O> Run<O> {
    /// Global name of a handle held by `party` at the end of the run.
    pub fn register(&self, party: usize, r: Reg) -> Option<RegisterId> {
        self.handles[party].get(&r.0).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("not every party halted within {0} rounds")]
    NonTermination(u32),
    #[error("party {party} failed in round {round}: {fault}")]
    Fault { party: usize, round: u32, fault: Fault },
    #[error("branch count exceeds the cap of {0}")]
    Capacity(usize),
}

struct Config<P: RoundProgram> {
    states: Vec<Option<P::State>>,
    outputs: Vec<Option<P::Output>>,
    halted_at: Vec<Option<u32>>,
    pending: Vec<Vec<Vec<Envelope<P::Msg>>>>,
    outbox: Vec<Option<Vec<Vec<Envelope<P::Msg>>>>>,
    regs: Vec<PartyRegs>,
    memory: QuantumMemory,
    cbits: u64,
    qubits: u64,
}

impl<P: RoundProgram> Clone for Config<P> {
    fn clone(&self) -> Self {
        Self {
            states: self.states.clone(),
            outputs: self.outputs.clone(),
            halted_at: self.halted_at.clone(),
            pending: self.pending.clone(),
            outbox: self.outbox.clone(),
            regs: self.regs.clone(),
            memory: self.memory.clone(),
            cbits: self.cbits,
            qubits: self.qubits,
        }
    }
}

impl<P: RoundProgram> Config<P> {
    fn classical_cmp(&self, other: &Self) -> Ordering {
        (
            &self.states,
            &self.outputs,
            &self.halted_at,
            &self.pending,
            &self.regs,
            self.cbits,
            self.qubits,
        )
            .cmp(&(
                &other.states,
                &other.outputs,
                &other.halted_at,
                &other.pending,
                &other.regs,
                other.cbits,
                other.qubits,
            ))
    }

    fn all_halted(&self) -> bool {
        self.states.iter().all(Option::is_none)
    }
}

struct Branch<P: RoundProgram> {
    probability: f64,
    config: Config<P>,
    path: Vec<Choice>,
}

/// Scheduler bound to one graph.
pub struct Runtime<'g> {
    g: &'g PortDigraph,
    global: GlobalInfo,
    max_rounds: u32,
    order: PartyOrder,
    branch_cap: usize,
}

impl<'g> Runtime<'g> {
    /// Defaults: `N = n`, round limit `20·N + 50`.
    pub fn new(g: &'g PortDigraph) -> Self {
        let n = g.n();
        Self {
            g,
            global: GlobalInfo { upper_bound: n },
            max_rounds: (20 * n + 50) as u32,
            order: PartyOrder::Forward,
            branch_cap: DEFAULT_BRANCH_CAP,
        }
    }

    /// Sets `N` and resets the round limit to `20·N + 50`.
    pub fn upper_bound(mut self, upper_bound: usize) -> Self {
        self.global.upper_bound = upper_bound;
        self.max_rounds = (20 * upper_bound + 50) as u32;
        self
    }

    pub fn max_rounds(mut self, rounds: u32) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn party_order(mut self, order: PartyOrder) -> Self {
        self.order = order;
        self
    }

    pub fn branch_cap(mut self, cap: usize) -> Self {
        self.branch_cap = cap;
        self
    }

    pub fn graph(&self) -> &PortDigraph {
        self.g
    }

    pub fn global(&self) -> GlobalInfo {
        self.global
    }

    pub fn env(&self, party: usize) -> PartyEnv {
        PartyEnv {
            d_in: self.g.d_in(party),
            d_out: self.g.d_out(party),
            global: self.global,
        }
    }

    fn order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.g.n()).collect();
        if self.order == PartyOrder::Reverse {
            v.reverse();
        }
        v
    }

    fn init<P: RoundProgram>(&self, program: &P, inputs: &[P::Input]) -> Result<Config<P>, RunError> {
        let n = self.g.n();
        if inputs.len() != n {
            return Err(RunError::InputLength {
                expected: n,
                got: inputs.len(),
            });
        }
        Ok(Config {
            states: (0..n)
                .map(|v| Some(program.start(&self.env(v), inputs[v].clone())))
                .collect(),
            outputs: vec![None; n],
            halted_at: vec![None; n],
            pending: (0..n).map(|v| vec![Vec::new(); self.g.d_in(v)]).collect(),
            outbox: vec![None; n],
            regs: vec![PartyRegs::default(); n],
            memory: QuantumMemory::new(),
            cbits: 0,
            qubits: 0,
        })
    }

    // Runs one party's step in place. Returns the chooser's fork options
    // (if the step forked), the number of script entries consumed, and the
    // probability of the choices made.
    fn step<P: RoundProgram>(
        &self,
        program: &P,
        cfg: &mut Config<P>,
        party: usize,
        round: u32,
        chooser: Chooser<'_>,
    ) -> (Result<(), QError>, Option<Vec<usize>>, f64) {
        let env = self.env(party);
        let Some(mut state) = cfg.states[party].take() else {
            return (Ok(()), None, 1.0);
        };
        let inbox = core::mem::replace(&mut cfg.pending[party], vec![Vec::new(); env.d_in]);
        let mut port = QuantumPort {
            memory: &mut cfg.memory,
            regs: &mut cfg.regs[party],
            chooser,
            party,
            round,
            probability: 1.0,
        };
        let result = program.round(&env, &mut state, inbox, &mut port);
        let probability = port.probability;
        let fork = match port.chooser {
            Chooser::Script { fork, .. } => fork,
            Chooser::Sample(_) => None,
        };
        let result = match result {
            Ok(Action::Send(out)) => {
                if out.len() != env.d_out {
                    Err(QError::Fault(Fault::BadOutbox {
                        expected: env.d_out,
                        got: out.len(),
                    }))
                } else {
                    cfg.outbox[party] = Some(out);
                    cfg.states[party] = Some(state);
                    Ok(())
                }
            }
            Ok(Action::Halt(o)) => {
                cfg.outputs[party] = Some(o);
                cfg.halted_at[party] = Some(round);
                Ok(())
            }
            Err(e) => Err(e),
        };
        (result, fork, probability)
    }

    fn deliver<P: RoundProgram>(&self, cfg: &mut Config<P>, round: u32) -> Result<(), RunError> {
        let n = self.g.n();
        let mut staged: Vec<Vec<Vec<(P::Msg, Vec<RegisterId>)>>> =
            (0..n).map(|v| vec![Vec::new(); self.g.d_in(v)]).collect();
        for v in 0..n {
            let Some(out) = cfg.outbox[v].take() else { continue };
            for (p, envelopes) in out.into_iter().enumerate() {
                let e = *self.g.out_edge(v, p + 1);
                for env in envelopes {
                    let mut ids = Vec::with_capacity(env.registers.len());
                    for r in &env.registers {
                        let id = cfg.regs[v].map.remove(&r.0).ok_or(RunError::Fault {
                            party: v,
                            round,
                            fault: Fault::UnknownHandle(r.0),
                        })?;
                        ids.push(id);
                    }
                    cfg.cbits += env.payload.wire_bits();
                    cfg.qubits += 2 * ids.len() as u64;
                    staged[e.dst][e.in_port - 1].push((env.payload, ids));
                }
            }
        }
        for (u, ports) in staged.into_iter().enumerate() {
            let halted = cfg.states[u].is_none();
            for (p, msgs) in ports.into_iter().enumerate() {
                for (payload, ids) in msgs {
                    let registers: Vec<Reg> = ids.into_iter().map(|id| cfg.regs[u].adopt(id)).collect();
                    if !halted {
                        cfg.pending[u][p].push(Envelope { payload, registers });
                    }
                }
            }
        }
        Ok(())
    }

    fn transcript<P: RoundProgram>(&self, cfg: &Config<P>, probability: f64, path: Vec<Choice>) -> Run<P::Output> {
        Run {
            transcript: Transcript {
                rounds: cfg.halted_at.iter().flatten().copied().max().unwrap_or(0),
                cbits: cfg.cbits,
                qubits: cfg.qubits,
                outputs: cfg.outputs.iter().map(|o| o.clone().expect("all parties halted")).collect(),
                probability,
                path,
            },
            memory: cfg.memory.clone(),
            handles: cfg.regs.iter().map(|r| r.map.clone()).collect(),
        }
    }

    /// One sampled execution. Party `v` draws from stream `v` of the
    /// ChaCha8 generator seeded with `seed`.
    pub fn sample<P: RoundProgram>(&self, program: &P, inputs: &[P::Input], seed: u64) -> Result<Run<P::Output>, RunError> {
        let mut cfg = self.init(program, inputs)?;
        let mut rngs: Vec<ChaCha8Rng> = (0..self.g.n())
            .map(|v| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(v as u64);
                r
            })
            .collect();
        let mut probability = 1.0;
        for round in 1..=self.max_rounds {
            for party in self.order() {
                let (res, _, p) = self.step(program, &mut cfg, party, round, Chooser::Sample(&mut rngs[party]));
                probability *= p;
                if let Err(e) = res {
                    return Err(fault(party, round, e));
                }
            }
            self.deliver(&mut cfg, round)?;
            if cfg.all_halted() {
                return Ok(self.transcript(&cfg, probability, Vec::new()));
            }
        }
        Err(RunError::NonTermination(self.max_rounds))
    }

    /// Every execution branch with its exact probability. Branches whose
    /// configurations coincide at a round boundary are merged; the path of
    /// the first one is kept as the replay handle.
    pub fn branches<P: RoundProgram>(&self, program: &P, inputs: &[P::Input]) -> Result<Vec<Run<P::Output>>, RunError> {
        let mut live = vec![Branch {
            probability: 1.0,
            config: self.init(program, inputs)?,
            path: Vec::new(),
        }];
        let mut done: Vec<Run<P::Output>> = Vec::new();
        for round in 1..=self.max_rounds {
            for party in self.order() {
                let mut next = Vec::with_capacity(live.len());
                for b in live {
                    self.expand(program, b, party, round, &mut next)?;
                    if next.len() > self.branch_cap {
                        return Err(RunError::Capacity(self.branch_cap));
                    }
                }
                live = next;
            }
            for b in &mut live {
                self.deliver(&mut b.config, round)?;
            }
            live = merge(live);
            let (finished, running): (Vec<_>, Vec<_>) = live.into_iter().partition(|b| b.config.all_halted());
            done.extend(finished.into_iter().map(|b| self.transcript(&b.config, b.probability, b.path)));
            live = running;
            if live.is_empty() {
                return Ok(done);
            }
        }
        Err(RunError::NonTermination(self.max_rounds))
    }

    fn expand<P: RoundProgram>(
        &self,
        program: &P,
        b: Branch<P>,
        party: usize,
        round: u32,
        out: &mut Vec<Branch<P>>,
    ) -> Result<(), RunError> {
        if b.config.states[party].is_none() {
            out.push(b);
            return Ok(());
        }
        let mut work: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(script) = work.pop() {
            let mut cfg = b.config.clone();
            let chooser = Chooser::Script {
                script: &script,
                pos: 0,
                fork: None,
            };
            let (res, fork, p) = self.step(program, &mut cfg, party, round, chooser);
            match res {
                Ok(()) => {
                    let mut path = b.path.clone();
                    if !script.is_empty() {
                        path.push(Choice {
                            round,
                            party,
                            options: script.clone(),
                        });
                    }
                    out.push(Branch {
                        probability: b.probability * p,
                        config: cfg,
                        path,
                    });
                }
                Err(QError::Fork) => {
                    for option in fork.unwrap_or_default().into_iter().rev() {
                        let mut s = script.clone();
                        s.push(option);
                        work.push(s);
                    }
                }
                Err(QError::Fault(f)) => {
                    return Err(RunError::Fault {
                        party,
                        round,
                        fault: f,
                    })
                }
            }
        }
        Ok(())
    }

    /// Re-executes the branch identified by `path`.
    pub fn replay<P: RoundProgram>(&self, program: &P, inputs: &[P::Input], path: &[Choice]) -> Result<Run<P::Output>, RunError> {
        let mut cfg = self.init(program, inputs)?;
        let mut probability = 1.0;
        for round in 1..=self.max_rounds {
            for party in self.order() {
                let script: &[usize] = path
                    .iter()
                    .find(|c| c.round == round && c.party == party)
                    .map_or(&[], |c| &c.options);
                let chooser = Chooser::Script {
                    script,
                    pos: 0,
                    fork: None,
                };
                let (res, _, p) = self.step(program, &mut cfg, party, round, chooser);
                probability *= p;
                match res {
                    Ok(()) => {}
                    Err(QError::Fork) => return Err(fault(party, round, QError::Fault(Fault::ReplayMismatch))),
                    Err(e) => return Err(fault(party, round, e)),
                }
            }
            self.deliver(&mut cfg, round)?;
            if cfg.all_halted() {
                return Ok(self.transcript(&cfg, probability, path.to_vec()));
            }
        }
        Err(RunError::NonTermination(self.max_rounds))
    }

    /// Exact distribution of the output vector.
    pub fn output_distribution<P: RoundProgram>(
        &self,
        program: &P,
        inputs: &[P::Input],
    ) -> Result<crate::dist::Dist<Vec<P::Output>>, RunError> {
        let mut d = crate::dist::Dist::new();
        for run in self.branches(program, inputs)? {
            let t = run.transcript;
            d.add_with_witness(t.outputs, t.probability, || alloc::vec![t.path.clone()]);
        }
        Ok(d)
    }

    /// Checks that relabelling parties by the automorphism `perm` maps the
    /// output distribution on `inputs` to the one on the permuted inputs.
    pub fn assert_anonymity<P: RoundProgram>(
        &self,
        program: &P,
        inputs: &[P::Input],
        perm: &[usize],
    ) -> Result<bool, AnonymityError> {
        if !self.g.is_automorphism(perm) {
            return Err(AnonymityError::NotAutomorphism);
        }
        let n = self.g.n();
        let mut moved: Vec<Option<P::Input>> = vec![None; n];
        for v in 0..n {
            moved[perm[v]] = Some(inputs[v].clone());
        }
        let moved: Vec<P::Input> = moved.into_iter().map(|x| x.expect("perm is a bijection")).collect();
        let base = self.output_distribution(program, inputs)?;
        let image = self.output_distribution(program, &moved)?;
        let relabelled = base.map(|outs| {
            let mut v: Vec<Option<P::Output>> = vec![None; n];
            for (i, o) in outs.iter().enumerate() {
                v[perm[i]] = Some(o.clone());
            }
            v.into_iter().map(|o| o.expect("perm is a bijection")).collect::<Vec<_>>()
        });
        Ok(relabelled.approx_eq(&image, MERGE_TOL))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnonymityError {
    #[error("permutation is not a label-preserving automorphism")]
    NotAutomorphism,
    #[error(transparent)]
    Run(#[from] RunError),
}

fn fault(party: usize, round: u32, e: QError) -> RunError {
    match e {
        QError::Fault(fault) => RunError::Fault { party, round, fault },
        QError::Fork => RunError::Fault {
            party,
            round,
            fault: Fault::ReplayMismatch,
        },
    }
}

fn merge<P: RoundProgram>(mut branches: Vec<Branch<P>>) -> Vec<Branch<P>> {
    branches.sort_by(|a, b| a.config.classical_cmp(&b.config));
    let mut out: Vec<Branch<P>> = Vec::with_capacity(branches.len());
    let mut group_start = 0;
    for b in branches {
        if out
            .last()
            .is_some_and(|last| last.config.classical_cmp(&b.config) != Ordering::Equal)
        {
            group_start = out.len();
        }
        match out[group_start..]
            .iter_mut()
            .find(|o| o.config.memory.approx_eq(&b.config.memory, MERGE_TOL))
        {
            Some(o) => o.probability += b.probability,
            None => out.push(b),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{example1a, example1b, ring};
    use crate::qsim::{computational_basis, copy_write, hadamard_low};
    use core::cell::Cell;

    #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
    struct Port(usize);

    impl WireSize for Port {
        fn wire_bits(&self) -> u64 {
            8
        }
    }

    // Sends "p" on out-port p, then reports (in-port, sender's out-port).
    struct Echo;

    impl RoundProgram for Echo {
        type Input = ();
        type State = bool;
        type Msg = Port;
        type Output = Vec<(usize, usize)>;

        fn start(&self, _: &PartyEnv, _: ()) -> bool {
            false
        }

        fn round(
            &self,
            env: &PartyEnv,
            sent: &mut bool,
            inbox: Vec<Vec<Envelope<Port>>>,
            _: &mut QuantumPort<'_>,
        ) -> StepResult<Action<Port, Self::Output>> {
            if !*sent {
                *sent = true;
                return Ok(Action::Send(
                    (1..=env.d_out).map(|p| vec![Envelope::classical(Port(p))]).collect(),
                ));
            }
            Ok(Action::Halt(
                inbox
                    .iter()
                    .enumerate()
                    .flat_map(|(i, m)| m.iter().map(move |e| (i + 1, e.payload.0)))
                    .collect(),
            ))
        }
    }

    #[test]
    fn echo_learns_edge_labels() {
        let g = example1a();
        let rt = Runtime::new(&g);
        let run = rt.sample(&Echo, &[(); 4], 0).unwrap();
        assert_eq!(run.transcript.rounds, 2);
        assert_eq!(run.transcript.cbits, 8 * 8);
        for v in 0..4 {
            let mut expect: Vec<(usize, usize)> = g
                .edges()
                .iter()
                .filter(|e| e.dst == v)
                .map(|e| (e.in_port, e.out_port))
                .collect();
            expect.sort();
            assert_eq!(run.transcript.outputs[v], expect);
        }
    }

    // Prepares (0̂+1̂)/√2, copies it into a fresh register sent on out-port
    // 1, then measures its own and the received register.
    struct SharePair;

    impl RoundProgram for SharePair {
        type Input = ();
        type State = Option<Reg>;
        type Msg = ();
        type Output = (usize, usize);

        fn start(&self, _: &PartyEnv, _: ()) -> Option<Reg> {
            None
        }

        fn round(
            &self,
            env: &PartyEnv,
            own: &mut Option<Reg>,
            inbox: Vec<Vec<Envelope<()>>>,
            q: &mut QuantumPort<'_>,
        ) -> StepResult<Action<(), (usize, usize)>> {
            match *own {
                None => {
                    let r = q.alloc(RegisterTag::R, Symbol::Zero)?;
                    q.apply_unitary(r, &hadamard_low())?;
                    let c = q.alloc(RegisterTag::Garbage, Symbol::Empty)?;
                    q.apply_map(&[r, c], copy_write)?;
                    *own = Some(r);
                    let mut out = vec![Vec::new(); env.d_out];
                    out[0].push(Envelope {
                        payload: (),
                        registers: vec![c],
                    });
                    Ok(Action::Send(out))
                }
                Some(r) => {
                    let got = inbox[0][0].registers[0];
                    let a = q.measure(r, &computational_basis())?;
                    let b = q.measure(got, &computational_basis())?;
                    Ok(Action::Halt((a, b)))
                }
            }
        }
    }

    #[test]
    fn transferred_registers_stay_correlated() {
        let g = ring(3);
        let rt = Runtime::new(&g);
        let runs = rt.branches(&SharePair, &[(); 3]).unwrap();
        assert_eq!(runs.len(), 8);
        let total: f64 = runs.iter().map(|r| r.transcript.probability).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for run in &runs {
            let o = &run.transcript.outputs;
            for v in 0..3 {
                // Party v+1 received party v's copy.
                assert_eq!(o[(v + 1) % 3].1, o[v].0);
            }
            assert!((run.transcript.probability - 0.125).abs() < 1e-9);
            assert_eq!(run.transcript.qubits, 6);
            let replayed = rt.replay(&SharePair, &[(); 3], &run.transcript.path).unwrap();
            assert_eq!(replayed.transcript.outputs, run.transcript.outputs);
        }
        let a = rt.sample(&SharePair, &[(); 3], 42).unwrap();
        let b = rt.sample(&SharePair, &[(); 3], 42).unwrap();
        assert_eq!(a.transcript, b.transcript);
    }

    #[test]
    fn party_order_does_not_change_distribution() {
        let g = example1b();
        let fwd = Runtime::new(&g).output_distribution(&SharePair, &[(); 4]).unwrap();
        let rev = Runtime::new(&g)
            .party_order(PartyOrder::Reverse)
            .output_distribution(&SharePair, &[(); 4])
            .unwrap();
        assert!(fwd.approx_eq(&rev, 1e-9));
    }

    struct Forever;

    impl RoundProgram for Forever {
        type Input = ();
        type State = ();
        type Msg = ();
        type Output = ();

        fn start(&self, _: &PartyEnv, _: ()) {}

        fn round(
            &self,
            env: &PartyEnv,
            _: &mut (),
            _: Vec<Vec<Envelope<()>>>,
            _: &mut QuantumPort<'_>,
        ) -> StepResult<Action<(), ()>> {
            Ok(Action::silent(env))
        }
    }

    #[test]
    fn non_termination_is_reported() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        assert_eq!(rt.sample(&Forever, &[(); 2], 0).unwrap_err(), RunError::NonTermination(90));
        assert!(matches!(
            rt.sample(&Forever, &[()], 0),
            Err(RunError::InputLength { expected: 2, got: 1 })
        ));
    }

    // Deliberately broken: numbers parties in the order `start` is called.
    struct ReadsIndex {
        counter: Cell<usize>,
    }

    impl RoundProgram for ReadsIndex {
        type Input = ();
        type State = usize;
        type Msg = ();
        type Output = usize;

        fn start(&self, _: &PartyEnv, _: ()) -> usize {
            let i = self.counter.get();
            self.counter.set(i + 1);
            i % 4
        }

        fn round(
            &self,
            _: &PartyEnv,
            i: &mut usize,
            _: Vec<Vec<Envelope<()>>>,
            _: &mut QuantumPort<'_>,
        ) -> StepResult<Action<(), usize>> {
            Ok(Action::Halt(*i))
        }
    }

    #[test]
    fn anonymity_check() {
        let g = ring(4);
        let rt = Runtime::new(&g);
        let rot = [1, 2, 3, 0];
        assert_eq!(rt.assert_anonymity(&SharePair, &[(); 4], &rot), Ok(true));
        assert_eq!(rt.assert_anonymity(&Echo, &[(); 4], &rot), Ok(true));
        let broken = ReadsIndex { counter: Cell::new(0) };
        assert_eq!(rt.assert_anonymity(&broken, &[(); 4], &rot), Ok(false));
        assert_eq!(
            rt.assert_anonymity(&Echo, &[(); 4], &[1, 0, 2, 3]),
            Err(AnonymityError::NotAutomorphism)
        );
        let b = example1b();
        assert_eq!(Runtime::new(&b).assert_anonymity(&SharePair, &[(); 4], &rot), Ok(true));
    }
}
