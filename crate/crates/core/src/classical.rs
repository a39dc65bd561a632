//! Classical subroutines built from fixed-length message exchanges.
//!
//! Each subroutine is a [`Phase`]: a party-local state machine that sends
//! one message per out-port and absorbs one message per in-port, a fixed
//! number of times. The quantum algorithms embed phases directly; the
//! [`Solo`] wrapper turns one into a standalone [`RoundProgram`], and
//! [`run_phases`] drives one without the scheduler for bulk sweeps.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Debug;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::graph::PortDigraph;
use crate::runtime::{Action, Envelope, PartyEnv, QuantumPort, RoundProgram, StepResult, WireSize};

/// Bits charged for one port number in a message.
pub const PORT_BITS: u64 = 16;

pub trait Phase: Clone + Ord + Debug {
    type Msg: Clone + Ord + Debug + WireSize;
    type Out;

    /// How many send/receive exchanges the phase needs.
    fn exchanges(&self) -> usize;
    /// Message for each out-port, index `p - 1`.
    fn outgoing(&self, d_out: usize) -> Vec<Option<Self::Msg>>;
    /// Messages that arrived on each in-port, index `p - 1`.
    fn incoming(&mut self, inbox: Vec<Option<Self::Msg>>);
    fn finish(&self) -> Self::Out;
}

/// Converts phase messages to envelopes.
pub fn to_outbox<M>(msgs: Vec<Option<M>>) -> Vec<Vec<Envelope<M>>> {
    msgs.into_iter()
        .map(|m| m.map(Envelope::classical).into_iter().collect())
        .collect()
}

/// First payload on each in-port.
pub fn from_inbox<M>(inbox: Vec<Vec<Envelope<M>>>) -> Vec<Option<M>> {
    inbox
        .into_iter()
        .map(|envs| envs.into_iter().next().map(|e| e.payload))
        .collect()
}

/// Which of the three color-count cases holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColorCase {
    /// No active party.
    None,
    /// All active parties share one color.
    One,
    /// At least two colors.
    Many,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColorReport<T: Ord> {
    pub colors: BTreeSet<T>,
    pub case: ColorCase,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColorSet<T: Ord>(pub BTreeSet<T>);

/// Bit size of one color, for metering.
pub trait ColorBits {
    fn color_bits(&self) -> u64;
}

impl ColorBits for () {
    fn color_bits(&self) -> u64 {
        1
    }
}

impl ColorBits for u8 {
    fn color_bits(&self) -> u64 {
        8
    }
}

impl ColorBits for bool {
    fn color_bits(&self) -> u64 {
        1
    }
}

impl ColorBits for u64 {
    fn color_bits(&self) -> u64 {
        64
    }
}

impl ColorBits for Ratio<u64> {
    fn color_bits(&self) -> u64 {
        self.numer().color_bits() + self.denom().color_bits()
    }
}

impl<A: ColorBits, B: ColorBits> ColorBits for (A, B) {
    fn color_bits(&self) -> u64 {
        self.0.color_bits() + self.1.color_bits()
    }
}

impl<T: ColorBits> ColorBits for Vec<T> {
    fn color_bits(&self) -> u64 {
        self.iter().map(ColorBits::color_bits).sum::<u64>() + 8
    }
}

impl<T: Ord + ColorBits> WireSize for ColorSet<T> {
    fn wire_bits(&self) -> u64 {
        self.0.iter().map(ColorBits::color_bits).sum::<u64>() + 8
    }
}

/// Flooding union of the colors held by active parties.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColorCount<T: Ord> {
    delta: usize,
    seen: BTreeSet<T>,
}

impl<T: Ord + Clone + Debug + ColorBits> ColorCount<T> {
    pub fn new(delta: usize, active: bool, color: T) -> Self {
        let mut seen = BTreeSet::new();
        if active {
            seen.insert(color);
        }
        Self { delta, seen }
    }

    /// Starts from an arbitrary local set (the union is still flooded).
    pub fn from_set(delta: usize, seen: BTreeSet<T>) -> Self {
        Self { delta, seen }
    }
}

impl<T: Ord + Clone + Debug + ColorBits> Phase for ColorCount<T> {
    type Msg = ColorSet<T>;
    type Out = ColorReport<T>;

    fn exchanges(&self) -> usize {
        self.delta
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<ColorSet<T>>> {
        vec![Some(ColorSet(self.seen.clone())); d_out]
    }

    fn incoming(&mut self, inbox: Vec<Option<ColorSet<T>>>) {
        for m in inbox.into_iter().flatten() {
            self.seen.extend(m.0);
        }
    }

    fn finish(&self) -> ColorReport<T> {
        let case = match self.seen.len() {
            0 => ColorCase::None,
            1 => ColorCase::One,
            _ => ColorCase::Many,
        };
        ColorReport {
            colors: self.seen.clone(),
            case,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

impl Verdict {
    pub fn of(case: ColorCase) -> Self {
        match case {
            ColorCase::Many => Verdict::Inconsistent,
            _ => Verdict::Consistent,
        }
    }
}

/// Whether all active parties hold the same value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Consistency<T: Ord>(pub ColorCount<T>);

impl<T: Ord + Clone + Debug + ColorBits> Consistency<T> {
    pub fn new(delta: usize, active: bool, value: T) -> Self {
        Self(ColorCount::new(delta, active, value))
    }
}

impl<T: Ord + Clone + Debug + ColorBits> Phase for Consistency<T> {
    type Msg = ColorSet<T>;
    type Out = Verdict;

    fn exchanges(&self) -> usize {
        self.0.exchanges()
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<ColorSet<T>>> {
        self.0.outgoing(d_out)
    }

    fn incoming(&mut self, inbox: Vec<Option<ColorSet<T>>>) {
        self.0.incoming(inbox)
    }

    fn finish(&self) -> Verdict {
        Verdict::of(self.0.finish().case)
    }
}

/// `¬(x_1 ∨ … ∨ x_n)`: color count with the single color `()`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AllZero(pub ColorCount<()>);

impl AllZero {
    pub fn new(delta: usize, x: bool) -> Self {
        Self(ColorCount::new(delta, x, ()))
    }
}

impl Phase for AllZero {
    type Msg = ColorSet<()>;
    type Out = bool;

    fn exchanges(&self) -> usize {
        self.0.exchanges()
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<ColorSet<()>>> {
        self.0.outgoing(d_out)
    }

    fn incoming(&mut self, inbox: Vec<Option<ColorSet<()>>>) {
        self.0.incoming(inbox)
    }

    fn finish(&self) -> bool {
        self.0.finish().case == ColorCase::None
    }
}

/// `(out-port of the sender, in-port of the receiver)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub out_port: u16,
    pub in_port: u16,
}

/// Rooted labelled tree of walks into a party. Children are ordered by the
/// receiving in-port. Subtrees are shared between the views of different
/// parties.
#[derive(Debug)]
pub struct ViewTree {
    label: u8,
    children: Vec<(EdgeLabel, Arc<ViewTree>)>,
    hash: u64,
    size: u64,
    depth: u32,
}

fn mix(mut h: u64, x: u64) -> u64 {
    h ^= x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb)
}

impl ViewTree {
    pub fn leaf(label: u8) -> Arc<ViewTree> {
        Self::node(label, Vec::new())
    }

    pub fn node(label: u8, children: Vec<(EdgeLabel, Arc<ViewTree>)>) -> Arc<ViewTree> {
        let mut hash = mix(0x5157_5645, label as u64);
        let mut size = 1u64;
        let mut depth = 0u32;
        for (e, c) in &children {
            hash = mix(hash, ((e.out_port as u64) << 16) | e.in_port as u64);
            hash = mix(hash, c.hash);
            size = size.saturating_add(c.size);
            depth = depth.max(c.depth + 1);
        }
        Arc::new(ViewTree {
            label,
            children,
            hash,
            size,
            depth,
        })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn children(&self) -> &[(EdgeLabel, Arc<ViewTree>)] {
        &self.children
    }

    /// Node count of the (unshared) tree.
    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// The view cut off below `depth`.
    pub fn truncate(self: &Arc<Self>, depth: u32) -> Arc<ViewTree> {
        if self.depth <= depth {
            return self.clone();
        }
        if depth == 0 {
            return ViewTree::leaf(self.label);
        }
        ViewTree::node(
            self.label,
            self.children.iter().map(|(e, c)| (*e, c.truncate(depth - 1))).collect(),
        )
    }
}

impl PartialEq for ViewTree {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ViewTree {}

impl PartialOrd for ViewTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ViewTree {
    fn cmp(&self, other: &Self) -> Ordering {
        if core::ptr::eq(self, other) {
            return Ordering::Equal;
        }
        (self.hash, self.size, self.depth, self.label, self.children.len())
            .cmp(&(other.hash, other.size, other.depth, other.label, other.children.len()))
            .then_with(|| {
                for ((ea, ca), (eb, cb)) in self.children.iter().zip(&other.children) {
                    let o = ea.cmp(eb).then_with(|| ca.as_ref().cmp(cb.as_ref()));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            })
    }
}

/// A view sent through out-port `out_port`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ViewMsg {
    pub out_port: u16,
    pub view: Arc<ViewTree>,
}

impl WireSize for ViewMsg {
    fn wire_bits(&self) -> u64 {
        PORT_BITS + self.view.size.saturating_mul(1 + 2 * PORT_BITS)
    }
}

/// Builds the depth-`k` view: each exchange wraps the neighbours' views.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ViewBuilder {
    depth: usize,
    label: u8,
    view: Arc<ViewTree>,
}

impl ViewBuilder {
    pub fn new(depth: usize, label: u8) -> Self {
        Self {
            depth,
            label,
            view: ViewTree::leaf(label),
        }
    }
}

impl Phase for ViewBuilder {
    type Msg = ViewMsg;
    type Out = Arc<ViewTree>;

    fn exchanges(&self) -> usize {
        self.depth
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<ViewMsg>> {
        (1..=d_out)
            .map(|p| {
                Some(ViewMsg {
                    out_port: p as u16,
                    view: self.view.clone(),
                })
            })
            .collect()
    }

    fn incoming(&mut self, inbox: Vec<Option<ViewMsg>>) {
        let children = inbox
            .into_iter()
            .enumerate()
            .filter_map(|(q, m)| {
                m.map(|m| {
                    (
                        EdgeLabel {
                            out_port: m.out_port,
                            in_port: q as u16 + 1,
                        },
                        m.view,
                    )
                })
            })
            .collect();
        self.view = ViewTree::node(self.label, children);
    }

    fn finish(&self) -> Arc<ViewTree> {
        self.view.clone()
    }
}

/// Counts, in a depth-`2m−1` view, the distinct depth-`(m−1)` views of
/// the nodes at depth at most `m`, and how many of those carry label 1.
pub fn view_class_counts(view: &Arc<ViewTree>, m: usize) -> (u64, u64) {
    let keep = (m as u32).saturating_sub(1);
    let mut interned: BTreeMap<(u8, Vec<(EdgeLabel, u32)>), u32> = BTreeMap::new();
    let mut memo: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    let mut classes: BTreeMap<u32, u8> = BTreeMap::new();
    let mut frontier: BTreeMap<usize, Arc<ViewTree>> = BTreeMap::new();
    frontier.insert(Arc::as_ptr(view) as usize, view.clone());
    for level in 0..=m {
        let mut next = BTreeMap::new();
        for node in frontier.values() {
            let id = class_id(node, keep, &mut interned, &mut memo);
            classes.insert(id, node.label);
            if level < m {
                for (_, c) in &node.children {
                    next.insert(Arc::as_ptr(c) as usize, c.clone());
                }
            }
        }
        frontier = next;
    }
    let q = classes.len() as u64;
    let q1 = classes.values().filter(|&&l| l == 1).count() as u64;
    (q, q1)
}

fn class_id(
    node: &Arc<ViewTree>,
    depth: u32,
    interned: &mut BTreeMap<(u8, Vec<(EdgeLabel, u32)>), u32>,
    memo: &mut BTreeMap<(usize, u32), u32>,
) -> u32 {
    let key = (Arc::as_ptr(node) as usize, depth);
    if let Some(&id) = memo.get(&key) {
        return id;
    }
    let children = if depth == 0 {
        Vec::new()
    } else {
        node.children
            .iter()
            .map(|(e, c)| (*e, class_id(c, depth - 1, interned, memo)))
            .collect()
    };
    let next = interned.len() as u32;
    let id = *interned.entry((node.label, children)).or_insert(next);
    memo.insert(key, id);
    id
}

/// `χ = m·q₁/q` from a depth-`2m−1` view.
pub fn symmetric_guess(view: &Arc<ViewTree>, m: usize) -> Ratio<u64> {
    let (q, q1) = view_class_counts(view, m);
    Ratio::new(m as u64 * q1, q)
}

/// View phase of depth `2m−1` followed by the `χ` computation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SymmetricGuess {
    m: usize,
    views: ViewBuilder,
}

impl SymmetricGuess {
    pub fn new(m: usize, s: bool) -> Self {
        Self {
            m,
            views: ViewBuilder::new(2 * m - 1, s as u8),
        }
    }
}

impl Phase for SymmetricGuess {
    type Msg = ViewMsg;
    type Out = Ratio<u64>;

    fn exchanges(&self) -> usize {
        self.views.exchanges()
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<ViewMsg>> {
        self.views.outgoing(d_out)
    }

    fn incoming(&mut self, inbox: Vec<Option<ViewMsg>>) {
        self.views.incoming(inbox)
    }

    fn finish(&self) -> Ratio<u64> {
        symmetric_guess(&self.views.view, self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
}

/// Out-port path from the leader; the leader's is empty.
pub type PathId = Vec<u16>;

impl ColorBits for u16 {
    fn color_bits(&self) -> u64 {
        PORT_BITS
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IdMsg(pub PathId);

impl WireSize for IdMsg {
    fn wire_bits(&self) -> u64 {
        self.0.len() as u64 * PORT_BITS + 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum WeightMsg {
    Id(IdMsg),
    Pairs(ColorSet<(PathId, bool)>),
}

impl WireSize for WeightMsg {
    fn wire_bits(&self) -> u64 {
        1 + match self {
            WeightMsg::Id(m) => m.wire_bits(),
            WeightMsg::Pairs(s) => s.wire_bits(),
        }
    }
}

/// What [`LeaderWeight`] reports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightReport {
    pub weight: u64,
    /// Distinct identifiers collected; equals `n` when ids are unique.
    pub members: usize,
}

/// Identifier assignment from a unique leader (`N` exchanges), then a
/// flooding union of `(id, x)` pairs (`N` exchanges); outputs `|x|`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LeaderWeight {
    n_bound: usize,
    x: bool,
    id: Option<PathId>,
    forwarded: bool,
    done: usize,
    pairs: ColorCount<(PathId, bool)>,
}

impl LeaderWeight {
    pub fn new(n_bound: usize, x: bool, role: Role) -> Self {
        Self {
            n_bound,
            x,
            id: (role == Role::Leader).then(Vec::new),
            forwarded: false,
            done: 0,
            pairs: ColorCount::from_set(n_bound, BTreeSet::new()),
        }
    }
}

impl Phase for LeaderWeight {
    type Msg = WeightMsg;
    type Out = WeightReport;

    fn exchanges(&self) -> usize {
        2 * self.n_bound
    }

    fn outgoing(&self, d_out: usize) -> Vec<Option<WeightMsg>> {
        if self.done < self.n_bound {
            match &self.id {
                Some(id) if !self.forwarded => (1..=d_out)
                    .map(|p| {
                        let mut path = id.clone();
                        path.push(p as u16);
                        Some(WeightMsg::Id(IdMsg(path)))
                    })
                    .collect(),
                _ => vec![None; d_out],
            }
        } else {
            self.pairs
                .outgoing(d_out)
                .into_iter()
                .map(|m| m.map(WeightMsg::Pairs))
                .collect()
        }
    }

    fn incoming(&mut self, inbox: Vec<Option<WeightMsg>>) {
        if self.done < self.n_bound {
            if self.id.is_some() {
                self.forwarded = true;
            } else {
                // Lowest in-port wins among simultaneous first messages.
                self.id = inbox.into_iter().flatten().find_map(|m| match m {
                    WeightMsg::Id(IdMsg(path)) => Some(path),
                    WeightMsg::Pairs(_) => None,
                });
            }
            self.done += 1;
            if self.done == self.n_bound {
                if let Some(id) = &self.id {
                    self.pairs.seen.insert((id.clone(), self.x));
                }
            }
        } else {
            self.pairs.incoming(
                inbox
                    .into_iter()
                    .map(|m| match m {
                        Some(WeightMsg::Pairs(s)) => Some(s),
                        _ => None,
                    })
                    .collect(),
            );
            self.done += 1;
        }
    }

    fn finish(&self) -> WeightReport {
        let seen = &self.pairs.seen;
        WeightReport {
            weight: seen.iter().filter(|(_, x)| *x).count() as u64,
            members: seen.iter().map(|(id, _)| id).collect::<BTreeSet<_>>().len(),
        }
    }
}

/// Builds a phase from the party's environment and input.
pub trait PhaseProgram {
    type Input: Clone;
    type Phase: Phase;
    fn begin(&self, env: &PartyEnv, input: Self::Input) -> Self::Phase;
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SoloState<Ph> {
    phase: Ph,
    sent: usize,
}

/// A phase run on its own: `exchanges + 1` rounds.
pub struct Solo<P>(pub P);

impl<P> RoundProgram for Solo<P>
where
    P: PhaseProgram,
    <P::Phase as Phase>::Out: Clone + Ord + Debug,
{
    type Input = P::Input;
    type State = SoloState<P::Phase>;
    type Msg = <P::Phase as Phase>::Msg;
    type Output = <P::Phase as Phase>::Out;

    fn start(&self, env: &PartyEnv, input: P::Input) -> Self::State {
        SoloState {
            phase: self.0.begin(env, input),
            sent: 0,
        }
    }

    fn round(
        &self,
        env: &PartyEnv,
        st: &mut Self::State,
        inbox: Vec<Vec<Envelope<Self::Msg>>>,
        _: &mut QuantumPort<'_>,
    ) -> StepResult<Action<Self::Msg, Self::Output>> {
        if st.sent > 0 {
            st.phase.incoming(from_inbox(inbox));
        }
        if st.sent == st.phase.exchanges() {
            return Ok(Action::Halt(st.phase.finish()));
        }
        st.sent += 1;
        Ok(Action::Send(to_outbox(st.phase.outgoing(env.d_out))))
    }
}

/// Drives `phases[v]` (one per party) over `g` without the scheduler and
/// returns the outputs. All phases must need the same number of exchanges.
pub fn run_phases<Ph: Phase>(g: &PortDigraph, mut phases: Vec<Ph>) -> Vec<Ph::Out> {
    let n = g.n();
    let rounds = phases.first().map_or(0, Phase::exchanges);
    for _ in 0..rounds {
        let mut inboxes: Vec<Vec<Option<Ph::Msg>>> = (0..n).map(|v| vec![None; g.d_in(v)]).collect();
        for (v, ph) in phases.iter().enumerate() {
            for (p, m) in ph.outgoing(g.d_out(v)).into_iter().enumerate() {
                let e = g.out_edge(v, p + 1);
                inboxes[e.dst][e.in_port - 1] = m;
            }
        }
        for (ph, inbox) in phases.iter_mut().zip(inboxes) {
            ph.incoming(inbox);
        }
    }
    phases.iter().map(Phase::finish).collect()
}

/// Standalone [`ColorCount`] with flooding depth `delta`.
pub struct ColorCountProgram {
    pub delta: usize,
}

impl PhaseProgram for ColorCountProgram {
    type Input = (bool, u8);
    type Phase = ColorCount<u8>;
    fn begin(&self, _: &PartyEnv, (active, color): (bool, u8)) -> ColorCount<u8> {
        ColorCount::new(self.delta, active, color)
    }
}

pub struct ConsistencyProgram {
    pub delta: usize,
}

impl PhaseProgram for ConsistencyProgram {
    type Input = (bool, u8);
    type Phase = Consistency<u8>;
    fn begin(&self, _: &PartyEnv, (active, value): (bool, u8)) -> Consistency<u8> {
        Consistency::new(self.delta, active, value)
    }
}

pub struct T0Program {
    pub delta: usize,
}

impl PhaseProgram for T0Program {
    type Input = bool;
    type Phase = AllZero;
    fn begin(&self, _: &PartyEnv, x: bool) -> AllZero {
        AllZero::new(self.delta, x)
    }
}

pub struct ViewProgram {
    pub depth: usize,
}

impl PhaseProgram for ViewProgram {
    type Input = u8;
    type Phase = ViewBuilder;
    fn begin(&self, _: &PartyEnv, label: u8) -> ViewBuilder {
        ViewBuilder::new(self.depth, label)
    }
}

pub struct SymmetricGuessProgram {
    pub m: usize,
}

impl PhaseProgram for SymmetricGuessProgram {
    type Input = bool;
    type Phase = SymmetricGuess;
    fn begin(&self, _: &PartyEnv, s: bool) -> SymmetricGuess {
        SymmetricGuess::new(self.m, s)
    }
}

/// Uses the shared upper bound `N` from the environment.
pub struct LeaderWeightProgram;

impl PhaseProgram for LeaderWeightProgram {
    type Input = (bool, Role);
    type Phase = LeaderWeight;
    fn begin(&self, env: &PartyEnv, (x, role): (bool, Role)) -> LeaderWeight {
        LeaderWeight::new(env.global.upper_bound, x, role)
    }
}
