//! `Q_{h,m}`: one guess `(h, m)` at the number of active parties and the
//! network size.
//!
//! Schedule with `N` the shared upper bound and `Δ = N`:
//!
//! | rounds | step |
//! |---|---|
//! | `1` | prepare `R`, copy it, send one copy per out-port |
//! | `2 ..= N+1` | union the received copies into fresh registers, forward |
//! | `N+1` | write and measure `Y`; measure garbage, parity `s` |
//! | `N+1 ..= N+2m` | views of depth `2m−1` over `s`, giving `χ` |
//! | `.. 2N+2m` | consistency of `χ`; phase fix; `W_h`; measure `R` |
//! | `.. 3N+2m` | consistency of the outcomes over active parties |
//!
//! Every party then idles until round [`round_budget`]`(N) = 5N`.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_rational::Ratio;
use thiserror::Error;

use crate::classical::{ColorSet, Consistency, Phase, SymmetricGuess, Verdict, ViewMsg};
use crate::qsim::{
    computational_basis, copy_write, hadamard_low, phase_on_one, plus_minus_basis, union_write, Mat4, RegisterTag, SymbolPermutation,
    Symbol,
};
use crate::quantum::w::{build_w, WError};
use crate::runtime::{Action, Envelope, Fault, PartyEnv, QuantumPort, Reg, RoundProgram, StepResult, WireSize};

/// Outcome reported by an inactive party in place of a measurement.
pub const SENTINEL: u8 = 4;

/// Rounds used by `Q_{h,m}` for every `(h, m)` under the bound `N`.
pub fn round_budget(upper_bound: usize) -> u32 {
    5 * upper_bound as u32
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QhmError {
    #[error("need 2 <= m and h <= m, got (h, m) = ({h}, {m})")]
    Range { h: usize, m: usize },
    #[error(transparent)]
    W(#[from] WError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QhmOut {
    Verdict { value: bool, r: Option<u8> },
    /// Only with [`Qhm::stop_after_scaledown`]: the `R` handle of an
    /// active party, left unmeasured.
    Scaled { r: Option<Reg> },
}

impl QhmOut {
    pub fn verdict(&self) -> Option<bool> {
        match self {
            QhmOut::Verdict { value, .. } => Some(*value),
            QhmOut::Scaled { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QMsg {
    /// Carries one register.
    Carrier,
    View(ViewMsg),
    Chi(ColorSet<Ratio<u64>>),
    Outcome(ColorSet<u8>),
}

impl WireSize for QMsg {
    fn wire_bits(&self) -> u64 {
        2 + match self {
            QMsg::Carrier => 0,
            QMsg::View(v) => v.wire_bits(),
            QMsg::Chi(c) => c.wire_bits(),
            QMsg::Outcome(c) => c.wire_bits(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Qhm {
    pub h: usize,
    pub m: usize,
    record: bool,
    stop_after_scaledown: bool,
    w: Mat4,
    copy: SymbolPermutation,
    union: SymbolPermutation,
    flag: SymbolPermutation,
}

// `Y ⊕= [cur = ×]`.
fn flag_cross(v: &[Symbol]) -> Vec<Symbol> {
    let flip = (v[0] == Symbol::Cross) as u8;
    alloc::vec![v[0], Symbol::from_bits(v[1].bits() ^ flip)]
}

impl Qhm {
    pub fn new(h: usize, m: usize) -> Result<Self, QhmError> {
        if m < 2 || h > m {
            return Err(QhmError::Range { h, m });
        }
        Ok(Self {
            h,
            m,
            record: false,
            stop_after_scaledown: false,
            w: build_w(h)?.matrix,
            copy: SymbolPermutation::new(2, copy_write).expect("copy is a bijection"),
            union: SymbolPermutation::new(3, union_write).expect("union write is a bijection"),
            flag: SymbolPermutation::new(2, flag_cross).expect("flag write is a bijection"),
        })
    }

    /// Report the measured outcome `r` with every `false` verdict,
    /// measuring `R` on the inconsistent branch as well.
    pub fn record_outcomes(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn stop_after_scaledown(mut self) -> Self {
        self.stop_after_scaledown = true;
        self
    }

    /// Uses `w` in place of the verified `W_h`.
    pub fn with_w(mut self, w: Mat4) -> Self {
        self.w = w;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Spread,
    Views(SymmetricGuess),
    Chi { check: Consistency<Ratio<u64>>, chi: Ratio<u64> },
    Outcomes { check: Consistency<u8>, r: u8 },
    Wait(QhmOut),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QhmState {
    t: u32,
    active: bool,
    r: Option<Reg>,
    cur: Option<Reg>,
    garbage: Vec<Reg>,
    stage: Stage,
}

type Out = Action<QMsg, QhmOut>;

fn pick<T>(inbox: Vec<Vec<Envelope<QMsg>>>, f: impl Fn(QMsg) -> Option<T>) -> Vec<Option<T>> {
    inbox
        .into_iter()
        .map(|envs| envs.into_iter().next().and_then(|e| f(e.payload)))
        .collect()
}

fn wrap<T>(msgs: Vec<Option<T>>, f: impl Fn(T) -> QMsg) -> Vec<Vec<Envelope<QMsg>>> {
    msgs.into_iter()
        .map(|m| m.map(|m| Envelope::classical(f(m))).into_iter().collect())
        .collect()
}

fn program_fault(msg: &str) -> Fault {
    Fault::Program(String::from(msg))
}

impl Qhm {
    fn send_copies(&self, env: &PartyEnv, cur: Reg, q: &mut QuantumPort<'_>) -> StepResult<Out> {
        let mut out = Vec::with_capacity(env.d_out);
        for _ in 0..env.d_out {
            let c = q.alloc(RegisterTag::Garbage, Symbol::Empty)?;
            q.apply_permutation(&[cur, c], &self.copy)?;
            out.push(alloc::vec![Envelope {
                payload: QMsg::Carrier,
                registers: alloc::vec![c],
            }]);
        }
        Ok(Action::Send(out))
    }

    fn end_spread(&self, env: &PartyEnv, st: &mut QhmState, q: &mut QuantumPort<'_>) -> StepResult<Out> {
        let cur = st.cur.take().ok_or_else(|| program_fault("missing union register"))?;
        let y = q.alloc(RegisterTag::Y, Symbol::Zero)?;
        q.apply_permutation(&[cur, y], &self.flag)?;
        let inconsistent = q.measure(y, &computational_basis())? == 1;
        q.discard(y)?;
        st.garbage.push(cur);
        if inconsistent {
            let r = if !self.record {
                None
            } else if st.active {
                let r = st.r.ok_or_else(|| program_fault("missing R"))?;
                Some(q.measure(r, &computational_basis())? as u8)
            } else {
                Some(SENTINEL)
            };
            st.stage = Stage::Wait(QhmOut::Verdict { value: false, r });
            return Ok(Action::silent(env));
        }
        let garbage = core::mem::take(&mut st.garbage);
        let s = q.measure_fold(&garbage, &plus_minus_basis(), 0, |acc, o| acc ^ (o == 1) as u64)?;
        let views = SymmetricGuess::new(self.m, s == 1);
        let out = wrap(views.outgoing(env.d_out), QMsg::View);
        st.stage = Stage::Views(views);
        Ok(Action::Send(out))
    }

    fn after_scaledown(
        &self,
        env: &PartyEnv,
        st: &mut QhmState,
        chi: Ratio<u64>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Out> {
        let r = st.r.take().ok_or_else(|| program_fault("missing R"))?;
        if st.active && chi.to_integer() % 2 == 1 && self.h >= 1 {
            q.apply_unitary(r, &phase_on_one(PI / self.h as f64))?;
        }
        if self.stop_after_scaledown {
            let handle = if st.active {
                Some(r)
            } else {
                q.discard(r)?;
                None
            };
            st.stage = Stage::Wait(QhmOut::Scaled { r: handle });
            return Ok(Action::silent(env));
        }
        let outcome = if st.active {
            q.apply_unitary(r, &self.w)?;
            q.measure(r, &computational_basis())? as u8
        } else {
            SENTINEL
        };
        q.discard(r)?;
        let check = Consistency::new(env.global.upper_bound, st.active, outcome);
        let out = wrap(check.outgoing(env.d_out), QMsg::Outcome);
        st.stage = Stage::Outcomes { check, r: outcome };
        Ok(Action::Send(out))
    }
}

impl RoundProgram for Qhm {
    type Input = bool;
    type State = QhmState;
    type Msg = QMsg;
    type Output = QhmOut;

    fn start(&self, _: &PartyEnv, x: bool) -> QhmState {
        QhmState {
            t: 0,
            active: x,
            r: None,
            cur: None,
            garbage: Vec::new(),
            stage: Stage::Spread,
        }
    }

    fn round(
        &self,
        env: &PartyEnv,
        st: &mut QhmState,
        inbox: Vec<Vec<Envelope<QMsg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Out> {
        let n = env.global.upper_bound as u32;
        let m = self.m as u32;
        st.t += 1;
        let t = st.t;
        if t == 1 && self.m > env.global.upper_bound {
            return Err(program_fault("m exceeds the upper bound").into());
        }
        let views_end = n + 2 * m;
        let chi_end = views_end + n;
        let outcomes_end = chi_end + n;
        let stage = core::mem::replace(&mut st.stage, Stage::Spread);
        let action = match stage {
            Stage::Spread if t == 1 => {
                let (sym, prep) = if st.active { (Symbol::Zero, true) } else { (Symbol::Empty, false) };
                let r = q.alloc(RegisterTag::R, sym)?;
                if prep {
                    q.apply_unitary(r, &hadamard_low())?;
                }
                let cur = q.alloc(RegisterTag::Garbage, Symbol::Empty)?;
                q.apply_permutation(&[r, cur], &self.copy)?;
                st.r = Some(r);
                st.cur = Some(cur);
                self.send_copies(env, cur, q)?
            }
            Stage::Spread => {
                let mut cur = st.cur.ok_or_else(|| program_fault("missing union register"))?;
                for envs in inbox {
                    for reg in envs.into_iter().flat_map(|e| e.registers) {
                        let u = q.alloc(RegisterTag::Garbage, Symbol::Empty)?;
                        q.apply_permutation(&[cur, reg, u], &self.union)?;
                        st.garbage.push(cur);
                        st.garbage.push(reg);
                        cur = u;
                    }
                }
                st.cur = Some(cur);
                if t <= n {
                    self.send_copies(env, cur, q)?
                } else {
                    self.end_spread(env, st, q)?
                }
            }
            Stage::Views(mut views) => {
                views.incoming(pick(inbox, |m| match m {
                    QMsg::View(v) => Some(v),
                    _ => None,
                }));
                if t == views_end {
                    let chi = views.finish();
                    let check = Consistency::new(env.global.upper_bound, true, chi);
                    let out = wrap(check.outgoing(env.d_out), QMsg::Chi);
                    st.stage = Stage::Chi { check, chi };
                    Action::Send(out)
                } else {
                    let out = wrap(views.outgoing(env.d_out), QMsg::View);
                    st.stage = Stage::Views(views);
                    Action::Send(out)
                }
            }
            Stage::Chi { mut check, chi } => {
                check.incoming(pick(inbox, |m| match m {
                    QMsg::Chi(c) => Some(c),
                    _ => None,
                }));
                if t == chi_end {
                    if check.finish() == Verdict::Inconsistent || !chi.is_integer() {
                        st.stage = Stage::Wait(QhmOut::Verdict { value: true, r: None });
                        Action::silent(env)
                    } else {
                        self.after_scaledown(env, st, chi, q)?
                    }
                } else {
                    let out = wrap(check.outgoing(env.d_out), QMsg::Chi);
                    st.stage = Stage::Chi { check, chi };
                    Action::Send(out)
                }
            }
            Stage::Outcomes { mut check, r } => {
                check.incoming(pick(inbox, |m| match m {
                    QMsg::Outcome(c) => Some(c),
                    _ => None,
                }));
                if t == outcomes_end {
                    let value = check.finish() == Verdict::Consistent;
                    let r = (self.record && !value).then_some(r);
                    st.stage = Stage::Wait(QhmOut::Verdict { value, r });
                    Action::silent(env)
                } else {
                    let out = wrap(check.outgoing(env.d_out), QMsg::Outcome);
                    st.stage = Stage::Outcomes { check, r };
                    Action::Send(out)
                }
            }
            Stage::Wait(out) => {
                st.stage = Stage::Wait(out);
                Action::silent(env)
            }
        };
        if let Stage::Wait(out) = &st.stage {
            if t >= round_budget(env.global.upper_bound) {
                return Ok(Action::Halt(*out));
            }
            return Ok(Action::silent(env));
        }
        Ok(action)
    }
}
