//! Sparse amplitude vectors over 4-level registers.
//!
//! Each register holds one [`Symbol`]; a basis string is a byte per register
//! in the state's register order. Amplitudes at or below [`PRUNE`] are
//! dropped after every operation.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use core::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PRUNE: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-9;
/// Amplitude magnitude treated as zero when checking exactness.
pub const ZERO_AMPLITUDE: f64 = 1e-9;

pub type C = Complex64;
pub type Mat4 = [[C; 4]; 4];
/// Four row vectors forming an orthonormal basis of one register.
pub type Basis = [[C; 4]; 4];

const fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Register contents, encoded `0̂=00, 1̂=01, ∅=10, ×=11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Symbol {
    Zero = 0,
    One = 1,
    Empty = 2,
    Cross = 3,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::Zero, Symbol::One, Symbol::Empty, Symbol::Cross];

    pub fn from_bits(b: u8) -> Symbol {
        Self::ALL[(b & 3) as usize]
    }

    pub fn bits(self) -> u8 {
        self as u8
    }

    // Subset of {0, 1} the symbol stands for, as a 2-bit mask.
    fn as_set(self) -> u8 {
        match self {
            Symbol::Empty => 0b00,
            Symbol::Zero => 0b01,
            Symbol::One => 0b10,
            Symbol::Cross => 0b11,
        }
    }

    fn from_set(mask: u8) -> Symbol {
        match mask & 3 {
            0b00 => Symbol::Empty,
            0b01 => Symbol::Zero,
            0b10 => Symbol::One,
            _ => Symbol::Cross,
        }
    }

    /// Set union, reading `∅ = {}`, `0̂ = {0}`, `1̂ = {1}`, `× = {0,1}`.
    pub fn union(self, other: Symbol) -> Symbol {
        Symbol::from_set(self.as_set() | other.as_set())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Symbol::Zero => "0",
            Symbol::One => "1",
            Symbol::Empty => "e",
            Symbol::Cross => "x",
        })
    }
}

/// Role of a register in the protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegisterTag {
    R,
    Y,
    Garbage,
}

/// Globally unique register name. The creator index is bookkeeping for
/// the scheduler only; programs never see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegisterId {
    pub creator: usize,
    pub tag: RegisterTag,
    pub epoch: u32,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsimError {
    #[error("register {0:?} is not part of this state")]
    UnknownRegister(RegisterId),
    #[error("register {0:?} already exists")]
    DuplicateRegister(RegisterId),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("basis is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("map is not a bijection on the product basis")]
    NotBijective,
    #[error("reversible map over {0} registers exceeds the validation limit")]
    MapTooWide(usize),
    #[error("outcome has zero probability")]
    ZeroProbability,
    #[error("registers are entangled with the rest of the state")]
    Entangled,
    #[error("branch count exceeds the cap of {0}")]
    Capacity(usize),
}

pub fn identity4() -> Mat4 {
    let mut m = [[c(0.0, 0.0); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(1.0, 0.0);
    }
    m
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[c(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn adjoint(a: &Mat4) -> Mat4 {
    let mut m = [[c(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[j][i].conj();
        }
    }
    m
}

/// Largest entry of `|U†U - I|`.
pub fn unitarity_defect(u: &Mat4) -> f64 {
    let p = mat_mul(&adjoint(u), u);
    let id = identity4();
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((p[i][j] - id[i][j]).norm());
        }
    }
    worst
}

/// `I₂ ⊗ u`: acts on the low qubit of the register.
pub fn on_low_qubit(u: [[C; 2]; 2]) -> Mat4 {
    let mut m = [[c(0.0, 0.0); 4]; 4];
    for hi in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                m[2 * hi + i][2 * hi + j] = u[i][j];
            }
        }
    }
    m
}

pub fn hadamard_low() -> Mat4 {
    let h = c(FRAC_1_SQRT_2, 0.0);
    on_low_qubit([[h, h], [h, -h]])
}

/// `diag(1, e^{iθ}, 1, 1)`: phase on `1̂` within span{0̂, 1̂}.
pub fn phase_on_one(theta: f64) -> Mat4 {
    let mut m = identity4();
    m[1][1] = C::from_polar(1.0, theta);
    m
}

pub fn computational_basis() -> Basis {
    identity4()
}

/// `{+̂, −̂, ∅, ×}` with `±̂ = (0̂ ± 1̂)/√2`.
pub fn plus_minus_basis() -> Basis {
    let h = c(FRAC_1_SQRT_2, 0.0);
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    [[h, h, z, z], [h, -h, z, z], [z, z, o, z], [z, z, z, o]]
}

pub fn orthonormality_defect(b: &Basis) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let ip: C = (0..4).map(|k| b[i][k].conj() * b[j][k]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ip - target).norm());
        }
    }
    worst
}

fn check_basis(b: &Basis) -> Result<(), QsimError> {
    // The two bases every algorithm uses are orthonormal by construction.
    if *b == computational_basis() || *b == plus_minus_basis() {
        return Ok(());
    }
    let d = orthonormality_defect(b);
    if d > NORM_TOL {
        return Err(QsimError::NotOrthonormal(d));
    }
    Ok(())
}

/// Widest reversible map whose bijectivity is checked exhaustively.
pub const MAX_MAP_WIDTH: usize = 6;

/// A bijection on `Symbol^k`, tabulated and checked once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolPermutation {
    width: usize,
    table: Vec<u16>,
}

impl SymbolPermutation {
    pub fn new<F>(width: usize, f: F) -> Result<Self, QsimError>
    where
        F: Fn(&[Symbol]) -> Vec<Symbol>,
    {
        if width > MAX_MAP_WIDTH {
            return Err(QsimError::MapTooWide(width));
        }
        let size = 1usize << (2 * width);
        let mut table = vec![0u16; size];
        let mut hit = vec![false; size];
        let mut input = [Symbol::Zero; MAX_MAP_WIDTH];
        for (code, slot) in table.iter_mut().enumerate() {
            for (j, s) in input[..width].iter_mut().enumerate() {
                *s = Symbol::from_bits((code >> (2 * j)) as u8);
            }
            let output = f(&input[..width]);
            if output.len() != width {
                return Err(QsimError::NotBijective);
            }
            let image = output
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, s)| acc | (s.bits() as usize) << (2 * j));
            if hit[image] {
                return Err(QsimError::NotBijective);
            }
            hit[image] = true;
            *slot = image as u16;
        }
        Ok(Self { width, table })
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Pure state over an ordered list of registers.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseQuantumState {
    registers: Vec<RegisterId>,
    amplitudes: BTreeMap<Vec<u8>, C>,
}

impl Default for SparseQuantumState {
    fn default() -> Self {
        Self::new()
    }
}

/// One leaf of [`SparseQuantumState::measure_branches`].
#[derive(Debug, Clone)]
pub struct BranchOutcome {
    pub outcomes: Vec<(RegisterId, usize)>,
    pub probability: f64,
    pub state: SparseQuantumState,
}

impl SparseQuantumState {
    /// The state on zero registers (amplitude 1 on the empty string).
    pub fn new() -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(Vec::new(), c(1.0, 0.0));
        Self {
            registers: Vec::new(),
            amplitudes,
        }
    }

    pub fn single(id: RegisterId, symbol: Symbol) -> Self {
        let mut s = Self::new();
        s.registers.push(id);
        s.amplitudes = BTreeMap::from([(vec![symbol.bits()], c(1.0, 0.0))]);
        s
    }

    pub fn registers(&self) -> &[RegisterId] {
        &self.registers
    }

    pub fn contains(&self, id: RegisterId) -> bool {
        self.registers.contains(&id)
    }

    pub fn support_size(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitude(&self, basis: &[Symbol]) -> C {
        let key: Vec<u8> = basis.iter().map(|s| s.bits()).collect();
        self.amplitudes.get(&key).copied().unwrap_or(c(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Nonzero amplitudes with their basis strings, in lexicographic order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<Symbol>, C)> + '_ {
        self.amplitudes
            .iter()
            .map(|(k, a)| (k.iter().map(|&b| Symbol::from_bits(b)).collect(), *a))
    }

    fn index(&self, id: RegisterId) -> Result<usize, QsimError> {
        self.registers
            .iter()
            .position(|&r| r == id)
            .ok_or(QsimError::UnknownRegister(id))
    }

    fn prune(&mut self) {
        self.amplitudes.retain(|_, a| a.norm_sqr() > PRUNE * PRUNE);
    }

    fn debug_check_norm(&self) {
        debug_assert!(
            (self.norm_sqr() - 1.0).abs() <= NORM_TOL,
            "norm drifted to {}",
            self.norm_sqr()
        );
    }

    /// Appends a fresh register in a computational basis state.
    pub fn init_register(&mut self, id: RegisterId, symbol: Symbol) -> Result<(), QsimError> {
        if self.contains(id) {
            return Err(QsimError::DuplicateRegister(id));
        }
        self.registers.push(id);
        let old = core::mem::take(&mut self.amplitudes);
        self.amplitudes = old
            .into_iter()
            .map(|(mut k, a)| {
                k.push(symbol.bits());
                (k, a)
            })
            .collect();
        Ok(())
    }

    /// `self ⊗ other`; register lists are concatenated.
    pub fn tensor(&self, other: &SparseQuantumState) -> Result<SparseQuantumState, QsimError> {
        if let Some(&dup) = other.registers.iter().find(|r| self.contains(**r)) {
            return Err(QsimError::DuplicateRegister(dup));
        }
        let mut registers = self.registers.clone();
        registers.extend_from_slice(&other.registers);
        let mut amplitudes = BTreeMap::new();
        for (ka, a) in &self.amplitudes {
            for (kb, b) in &other.amplitudes {
                let mut k = Vec::with_capacity(ka.len() + kb.len());
                k.extend_from_slice(ka);
                k.extend_from_slice(kb);
                amplitudes.insert(k, a * b);
            }
        }
        let mut s = SparseQuantumState {
            registers,
            amplitudes,
        };
        s.prune();
        Ok(s)
    }

    pub fn apply_local_unitary(&mut self, id: RegisterId, u: &Mat4) -> Result<(), QsimError> {
        let defect = unitarity_defect(u);
        if defect > NORM_TOL {
            return Err(QsimError::NotUnitary(defect));
        }
        let idx = self.index(id)?;
        let mut out: BTreeMap<Vec<u8>, C> = BTreeMap::new();
        for (k, a) in &self.amplitudes {
            let col = k[idx] as usize;
            for (row, u_row) in u.iter().enumerate() {
                let coeff = u_row[col];
                if coeff.norm() == 0.0 {
                    continue;
                }
                let mut key = k.clone();
                key[idx] = row as u8;
                *out.entry(key).or_insert(c(0.0, 0.0)) += coeff * a;
            }
        }
        self.amplitudes = out;
        self.prune();
        self.debug_check_norm();
        Ok(())
    }

    /// Permutes basis strings on `regs` by `f`, which must be a bijection on
    /// `Symbol^regs.len()` (checked exhaustively).
    pub fn apply_reversible_map<F>(&mut self, regs: &[RegisterId], f: F) -> Result<(), QsimError>
    where
        F: Fn(&[Symbol]) -> Vec<Symbol>,
    {
        self.apply_permutation(regs, &SymbolPermutation::new(regs.len(), f)?)
    }

    pub fn apply_permutation(&mut self, regs: &[RegisterId], perm: &SymbolPermutation) -> Result<(), QsimError> {
        if regs.len() != perm.width {
            return Err(QsimError::NotBijective);
        }
        let idx: Vec<usize> = regs.iter().map(|&r| self.index(r)).collect::<Result<_, _>>()?;
        for i in 0..idx.len() {
            if idx[i + 1..].contains(&idx[i]) {
                return Err(QsimError::DuplicateRegister(regs[i]));
            }
        }
        let old = core::mem::take(&mut self.amplitudes);
        self.amplitudes = old
            .into_iter()
            .map(|(mut key, a)| {
                let code = idx
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (j, &p)| acc | (key[p] as usize) << (2 * j));
                let image = perm.table[code] as usize;
                for (j, &p) in idx.iter().enumerate() {
                    key[p] = ((image >> (2 * j)) & 3) as u8;
                }
                (key, a)
            })
            .collect();
        Ok(())
    }

    /// Born probabilities of the four basis vectors of `basis` on `id`.
    pub fn outcome_probabilities(&self, id: RegisterId, basis: &Basis) -> Result<[f64; 4], QsimError> {
        check_basis(basis)?;
        let idx = self.index(id)?;
        let mut probs = [0.0f64; 4];
        for col in self.columns(idx).values() {
            for (o, b) in basis.iter().enumerate() {
                let a: C = (0..4).map(|v| b[v].conj() * col[v]).sum();
                if a.norm_sqr() > PRUNE * PRUNE {
                    probs[o] += a.norm_sqr();
                }
            }
        }
        Ok(probs)
    }

    // Amplitudes grouped by the string on every register but idx.
    fn columns(&self, idx: usize) -> BTreeMap<Vec<u8>, [C; 4]> {
        let mut out: BTreeMap<Vec<u8>, [C; 4]> = BTreeMap::new();
        for (k, a) in &self.amplitudes {
            let mut rest = Vec::with_capacity(k.len() - 1);
            rest.extend_from_slice(&k[..idx]);
            rest.extend_from_slice(&k[idx + 1..]);
            out.entry(rest).or_insert([c(0.0, 0.0); 4])[k[idx] as usize] = *a;
        }
        out
    }

    // <b| on register idx: amplitudes of the remaining registers.
    fn project_amplitudes(&self, idx: usize, b: &[C; 4]) -> BTreeMap<Vec<u8>, C> {
        self.columns(idx)
            .into_iter()
            .map(|(rest, col)| (rest, (0..4).map(|v| b[v].conj() * col[v]).sum::<C>()))
            .filter(|(_, a)| a.norm() > PRUNE)
            .collect()
    }

    /// Projects `id` onto basis vector `outcome` and removes the register.
    /// Returns the outcome probability; the rest is renormalized.
    pub fn project_out(&mut self, id: RegisterId, basis: &Basis, outcome: usize) -> Result<f64, QsimError> {
        check_basis(basis)?;
        let idx = self.index(id)?;
        let rest = self.project_amplitudes(idx, &basis[outcome]);
        let p: f64 = rest.values().map(|a| a.norm_sqr()).sum();
        if p <= PRUNE * PRUNE {
            return Err(QsimError::ZeroProbability);
        }
        let scale = 1.0 / libm::sqrt(p);
        self.registers.remove(idx);
        self.amplitudes = rest.into_iter().map(|(k, a)| (k, a * scale)).collect();
        self.normalize_phase();
        Ok(p)
    }

    /// Collapses `id` onto basis vector `outcome`, keeping the register.
    pub fn collapse(&mut self, id: RegisterId, basis: &Basis, outcome: usize) -> Result<f64, QsimError> {
        let idx = self.index(id)?;
        let p = self.project_out(id, basis, outcome)?;
        let vector = basis[outcome];
        let old = core::mem::take(&mut self.amplitudes);
        for (k, a) in old {
            for (v, &bv) in vector.iter().enumerate() {
                if bv.norm() == 0.0 {
                    continue;
                }
                let mut key = k.clone();
                key.insert(idx, v as u8);
                self.amplitudes.insert(key, a * bv);
            }
        }
        self.registers.insert(idx, id);
        self.prune();
        self.normalize_phase();
        Ok(p)
    }

    /// Samples a Born outcome for `id` in `basis` and collapses onto it.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        id: RegisterId,
        basis: &Basis,
        rng: &mut R,
    ) -> Result<usize, QsimError> {
        let probs = self.outcome_probabilities(id, basis)?;
        let outcome = sample_index(&probs, rng);
        self.collapse(id, basis, outcome)?;
        Ok(outcome)
    }

    /// All joint outcomes of measuring `regs` (each in its basis) with
    /// nonzero probability, each with its collapsed state.
    pub fn measure_branches(
        &self,
        regs: &[(RegisterId, Basis)],
        cap: usize,
    ) -> Result<Vec<BranchOutcome>, QsimError> {
        let mut frontier = vec![BranchOutcome {
            outcomes: Vec::new(),
            probability: 1.0,
            state: self.clone(),
        }];
        for (id, basis) in regs {
            let mut next = Vec::new();
            for branch in &frontier {
                let probs = branch.state.outcome_probabilities(*id, basis)?;
                for (o, &p) in probs.iter().enumerate() {
                    if p <= PRUNE {
                        continue;
                    }
                    let mut state = branch.state.clone();
                    state.collapse(*id, basis, o)?;
                    let mut outcomes = branch.outcomes.clone();
                    outcomes.push((*id, o));
                    next.push(BranchOutcome {
                        outcomes,
                        probability: branch.probability * p,
                        state,
                    });
                    if next.len() > cap {
                        return Err(QsimError::Capacity(cap));
                    }
                }
            }
            frontier = next;
        }
        Ok(frontier)
    }

    /// Rotates the global phase so the first nonzero amplitude is real and
    /// nonnegative.
    pub fn normalize_phase(&mut self) {
        if let Some(first) = self.amplitudes.values().next().copied() {
            let n = first.norm();
            if n > 0.0 {
                let rot = first.conj() / n;
                for a in self.amplitudes.values_mut() {
                    *a *= rot;
                }
            }
        }
    }

    /// Splits the state into the part on `regs` and the rest, provided the
    /// two are unentangled. Returns `(on_regs, rest)`, register order kept.
    pub fn split(&self, regs: &[RegisterId]) -> Result<(SparseQuantumState, SparseQuantumState), QsimError> {
        let idx: Vec<usize> = regs.iter().map(|&r| self.index(r)).collect::<Result<_, _>>()?;
        let rest_idx: Vec<usize> = (0..self.registers.len()).filter(|i| !idx.contains(i)).collect();
        let mut rows: BTreeMap<Vec<u8>, BTreeMap<Vec<u8>, C>> = BTreeMap::new();
        for (k, a) in &self.amplitudes {
            let ka: Vec<u8> = idx.iter().map(|&i| k[i]).collect();
            let kb: Vec<u8> = rest_idx.iter().map(|&i| k[i]).collect();
            rows.entry(ka).or_default().insert(kb, *a);
        }
        // Rank-one test against the largest entry M[a0][b0].
        let (a0, b0, pivot) = rows
            .iter()
            .flat_map(|(ka, row)| row.iter().map(move |(kb, v)| (ka, kb, *v)))
            .max_by(|x, y| x.2.norm().total_cmp(&y.2.norm()))
            .ok_or(QsimError::ZeroProbability)?;
        let zero = c(0.0, 0.0);
        let cols: Vec<&Vec<u8>> = {
            let mut all: Vec<&Vec<u8>> = rows.values().flat_map(|r| r.keys()).collect();
            all.sort();
            all.dedup();
            all
        };
        let row0 = &rows[a0];
        for row in rows.values() {
            let m_a_b0 = row.get(b0).copied().unwrap_or(zero);
            for kb in &cols {
                let m = row.get(*kb).copied().unwrap_or(zero);
                let m_a0_b = row0.get(*kb).copied().unwrap_or(zero);
                if (m * pivot - m_a_b0 * m_a0_b).norm() > ZERO_AMPLITUDE * pivot.norm() {
                    return Err(QsimError::Entangled);
                }
            }
        }
        let left_norm = libm::sqrt(rows.values().map(|r| r.get(b0).copied().unwrap_or(zero).norm_sqr()).sum::<f64>());
        let right_norm = libm::sqrt(row0.values().map(|v| v.norm_sqr()).sum::<f64>());
        let left = SparseQuantumState {
            registers: regs.to_vec(),
            amplitudes: rows
                .iter()
                .filter_map(|(ka, r)| r.get(b0).map(|v| (ka.clone(), *v / left_norm)))
                .filter(|(_, v)| v.norm() > PRUNE)
                .collect(),
        };
        let right = SparseQuantumState {
            registers: rest_idx.iter().map(|&i| self.registers[i]).collect(),
            amplitudes: row0
                .iter()
                .map(|(kb, v)| (kb.clone(), *v / right_norm))
                .filter(|(_, v)| v.norm() > PRUNE)
                .collect(),
        };
        let mut left = left;
        let mut right = right;
        left.normalize_phase();
        right.normalize_phase();
        Ok((left, right))
    }

    /// True if `regs` are unentangled from the remaining registers.
    pub fn is_product(&self, regs: &[RegisterId]) -> bool {
        self.split(regs).is_ok()
    }

    /// Drops a register that is unentangled from the rest.
    pub fn remove_register(&mut self, id: RegisterId) -> Result<SparseQuantumState, QsimError> {
        let (single, rest) = self.split(&[id])?;
        *self = rest;
        Ok(single)
    }

    /// The state reordered so its registers appear in the order of `order`
    /// (which must be a permutation of the current register list).
    pub fn reordered(&self, order: &[RegisterId]) -> Result<SparseQuantumState, QsimError> {
        if order.len() != self.registers.len() {
            return Err(QsimError::Entangled);
        }
        let idx: Vec<usize> = order.iter().map(|&r| self.index(r)).collect::<Result<_, _>>()?;
        Ok(SparseQuantumState {
            registers: order.to_vec(),
            amplitudes: self
                .amplitudes
                .iter()
                .map(|(k, a)| (idx.iter().map(|&i| k[i]).collect(), *a))
                .collect(),
        })
    }

    /// `|⟨reference|ρ_regs⟩|²` where `ρ_regs` is this state's part on `regs`,
    /// which must be unentangled from the remaining registers.
    pub fn fidelity(&self, reference: &SparseQuantumState, regs: &[RegisterId]) -> Result<f64, QsimError> {
        let (part, _) = if regs.len() == self.registers.len() {
            (self.reordered(regs)?, SparseQuantumState::new())
        } else {
            self.split(regs)?
        };
        let reference = reference.reordered(regs)?;
        let overlap: C = reference
            .amplitudes
            .iter()
            .filter_map(|(k, r)| part.amplitudes.get(k).map(|a| r.conj() * a))
            .sum();
        Ok(overlap.norm_sqr())
    }

    /// Equality of basis supports and amplitudes up to a global phase.
    pub fn approx_eq_up_to_phase(&self, other: &SparseQuantumState, tol: f64) -> bool {
        if self.registers != other.registers || self.amplitudes.len() != other.amplitudes.len() {
            return false;
        }
        let mut phase: Option<C> = None;
        for ((ka, a), (kb, b)) in self.amplitudes.iter().zip(other.amplitudes.iter()) {
            if ka != kb {
                return false;
            }
            let p = *phase.get_or_insert_with(|| {
                let n = a.norm() * b.norm();
                if n == 0.0 {
                    c(1.0, 0.0)
                } else {
                    b * a.conj() / n
                }
            });
            if (a * p - b).norm() > tol {
                return false;
            }
        }
        true
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= PRUNE {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// A pure state kept as a list of mutually unentangled factors.
///
/// Operations touching registers in several factors merge those factors
/// first. Measured-and-discarded registers leave the memory entirely.
#[derive(Debug, Clone, Default)]
pub struct QuantumMemory {
    factors: Vec<SparseQuantumState>,
}

impl QuantumMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factors(&self) -> &[SparseQuantumState] {
        &self.factors
    }

    pub fn register_count(&self) -> usize {
        self.factors.iter().map(|f| f.registers.len()).sum()
    }

    pub fn contains(&self, id: RegisterId) -> bool {
        self.factor_of(id).is_some()
    }

    fn factor_of(&self, id: RegisterId) -> Option<usize> {
        self.factors.iter().position(|f| f.contains(id))
    }

    pub fn alloc(&mut self, id: RegisterId, symbol: Symbol) -> Result<(), QsimError> {
        if self.contains(id) {
            return Err(QsimError::DuplicateRegister(id));
        }
        self.factors.push(SparseQuantumState::single(id, symbol));
        Ok(())
    }

    // Merges the factors holding `regs` into one and returns its index.
    fn gather(&mut self, regs: &[RegisterId]) -> Result<usize, QsimError> {
        let mut idx: Vec<usize> = regs
            .iter()
            .map(|&r| self.factor_of(r).ok_or(QsimError::UnknownRegister(r)))
            .collect::<Result<_, _>>()?;
        idx.sort_unstable();
        idx.dedup();
        let first = idx[0];
        for &j in idx[1..].iter().rev() {
            let f = self.factors.remove(j);
            self.factors[first] = self.factors[first].tensor(&f)?;
        }
        Ok(first)
    }

    pub fn apply_local_unitary(&mut self, id: RegisterId, u: &Mat4) -> Result<(), QsimError> {
        let f = self.gather(&[id])?;
        self.factors[f].apply_local_unitary(id, u)
    }

    pub fn apply_reversible_map<F>(&mut self, regs: &[RegisterId], f: F) -> Result<(), QsimError>
    where
        F: Fn(&[Symbol]) -> Vec<Symbol>,
    {
        self.apply_permutation(regs, &SymbolPermutation::new(regs.len(), f)?)
    }

    pub fn apply_permutation(&mut self, regs: &[RegisterId], perm: &SymbolPermutation) -> Result<(), QsimError> {
        let k = self.gather(regs)?;
        self.factors[k].apply_permutation(regs, perm)
    }

    pub fn outcome_probabilities(&self, id: RegisterId, basis: &Basis) -> Result<[f64; 4], QsimError> {
        let f = self.factor_of(id).ok_or(QsimError::UnknownRegister(id))?;
        self.factors[f].outcome_probabilities(id, basis)
    }

    /// Collapses `id` onto `basis[outcome]`; the register stays, split off
    /// into its own factor.
    pub fn collapse(&mut self, id: RegisterId, basis: &Basis, outcome: usize) -> Result<f64, QsimError> {
        let f = self.factor_of(id).ok_or(QsimError::UnknownRegister(id))?;
        let p = self.factors[f].project_out(id, basis, outcome)?;
        let mut single = SparseQuantumState::new();
        single.registers.push(id);
        single.amplitudes = basis[outcome]
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > PRUNE)
            .map(|(v, a)| (vec![v as u8], *a))
            .collect();
        single.normalize_phase();
        if self.factors[f].registers.is_empty() {
            self.factors[f] = single;
        } else {
            self.factors.insert(f + 1, single);
        }
        Ok(p)
    }

    /// Projects `id` onto `basis[outcome]` and forgets the register.
    pub fn project_out(&mut self, id: RegisterId, basis: &Basis, outcome: usize) -> Result<f64, QsimError> {
        let f = self.factor_of(id).ok_or(QsimError::UnknownRegister(id))?;
        let p = self.factors[f].project_out(id, basis, outcome)?;
        if self.factors[f].registers.is_empty() {
            self.factors.remove(f);
        }
        Ok(p)
    }

    pub fn measure<R: Rng + ?Sized>(&mut self, id: RegisterId, basis: &Basis, rng: &mut R) -> Result<usize, QsimError> {
        let probs = self.outcome_probabilities(id, basis)?;
        let o = sample_index(&probs, rng);
        self.collapse(id, basis, o)?;
        Ok(o)
    }

    /// Removes an unentangled register from the memory.
    pub fn discard(&mut self, id: RegisterId) -> Result<(), QsimError> {
        let f = self.factor_of(id).ok_or(QsimError::UnknownRegister(id))?;
        self.factors[f].remove_register(id)?;
        if self.factors[f].registers.is_empty() {
            self.factors.remove(f);
        }
        Ok(())
    }

    /// The joint state of `regs`, in that order, if they are unentangled
    /// from every other register.
    pub fn reduced(&self, regs: &[RegisterId]) -> Result<SparseQuantumState, QsimError> {
        let mut idx: Vec<usize> = regs
            .iter()
            .map(|&r| self.factor_of(r).ok_or(QsimError::UnknownRegister(r)))
            .collect::<Result<_, _>>()?;
        idx.sort_unstable();
        idx.dedup();
        let mut joint = SparseQuantumState::new();
        for &i in &idx {
            joint = joint.tensor(&self.factors[i])?;
        }
        let part = if joint.registers.len() == regs.len() {
            joint
        } else {
            joint.split(regs)?.0
        };
        part.reordered(regs)
    }

    /// Factor-wise equality up to per-factor global phase.
    pub fn approx_eq(&self, other: &QuantumMemory, tol: f64) -> bool {
        self.factors.len() == other.factors.len()
            && self
                .factors
                .iter()
                .zip(&other.factors)
                .all(|(a, b)| a.approx_eq_up_to_phase(b, tol))
    }

    /// Squared norm of the full product state.
    pub fn norm_sqr(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_sqr()).product()
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `ids`, built with a Hadamard and CNOTs.
pub fn ghz_state(ids: &[RegisterId]) -> Result<SparseQuantumState, QsimError> {
    let mut s = SparseQuantumState::new();
    for &id in ids {
        s.init_register(id, Symbol::Zero)?;
    }
    if let Some((&first, rest)) = ids.split_first() {
        s.apply_local_unitary(first, &hadamard_low())?;
        for &id in rest {
            s.apply_reversible_map(&[first, id], |v| vec![v[0], Symbol::from_bits(v[1].bits() ^ v[0].bits())])?;
        }
    }
    Ok(s)
}

/// Set-union write `|a, b, t⟩ ↦ |a, b, t ⊕ enc(a∪b) ⊕ enc(∅)⟩`; on an
/// `∅` target this writes `a ∪ b`.
pub fn union_write(v: &[Symbol]) -> Vec<Symbol> {
    let t = v[2].bits() ^ v[0].union(v[1]).bits() ^ Symbol::Empty.bits();
    vec![v[0], v[1], Symbol::from_bits(t)]
}

/// Copy `|a, t⟩ ↦ |a, t ⊕ enc(a) ⊕ enc(∅)⟩`; on an `∅` target this writes `a`.
pub fn copy_write(v: &[Symbol]) -> Vec<Symbol> {
    let t = v[1].bits() ^ v[0].bits() ^ Symbol::Empty.bits();
    vec![v[0], Symbol::from_bits(t)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rid(seq: u32) -> RegisterId {
        RegisterId {
            creator: 0,
            tag: RegisterTag::Garbage,
            epoch: 0,
            seq,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn union_table() {
        use Symbol::*;
        let expect = [
            (Empty, Empty, Empty),
            (Zero, Empty, Zero),
            (Empty, One, One),
            (Zero, One, Cross),
            (One, One, One),
            (Cross, Zero, Cross),
        ];
        for (a, b, u) in expect {
            assert_eq!(a.union(b), u);
            assert_eq!(union_write(&[a, b, Empty]), vec![a, b, u]);
        }
        assert_eq!(copy_write(&[One, Empty]), vec![One, One]);
    }

    #[test]
    fn init_and_hadamard() {
        let mut s = SparseQuantumState::new();
        s.init_register(rid(0), Symbol::Empty).unwrap();
        assert_eq!(s.support_size(), 1);
        assert!(close(s.amplitude(&[Symbol::Empty]).re, 1.0));
        s.init_register(rid(1), Symbol::Zero).unwrap();
        s.apply_local_unitary(rid(1), &hadamard_low()).unwrap();
        let a = s.amplitude(&[Symbol::Empty, Symbol::Zero]);
        let b = s.amplitude(&[Symbol::Empty, Symbol::One]);
        assert!(close(a.re, FRAC_1_SQRT_2) && close(b.re, FRAC_1_SQRT_2));
        assert_eq!(s.init_register(rid(1), Symbol::Zero), Err(QsimError::DuplicateRegister(rid(1))));
    }

    #[test]
    fn phase_rotation_on_one() {
        let mut s = SparseQuantumState::single(rid(0), Symbol::One);
        s.apply_local_unitary(rid(0), &phase_on_one(core::f64::consts::PI / 2.0)).unwrap();
        let a = s.amplitude(&[Symbol::One]);
        assert!(close(a.re, 0.0) && close(a.im, 1.0));
    }

    #[test]
    fn rejects_non_unitary_and_non_bijective() {
        let mut s = SparseQuantumState::single(rid(0), Symbol::Zero);
        let mut m = identity4();
        m[0][1] = c(0.5, 0.0);
        assert!(matches!(s.apply_local_unitary(rid(0), &m), Err(QsimError::NotUnitary(_))));
        assert_eq!(
            s.apply_reversible_map(&[rid(0)], |_| vec![Symbol::Zero]),
            Err(QsimError::NotBijective)
        );
        let mut bad = plus_minus_basis();
        bad[1] = bad[0];
        assert!(matches!(s.outcome_probabilities(rid(0), &bad), Err(QsimError::NotOrthonormal(_))));
    }

    #[test]
    fn tabulated_permutation_matches_the_map() {
        let perm = SymbolPermutation::new(3, union_write).unwrap();
        assert_eq!(perm.width(), 3);
        assert!(SymbolPermutation::new(7, |v| v.to_vec()).is_err());
        assert_eq!(SymbolPermutation::new(1, |_| vec![Symbol::One]), Err(QsimError::NotBijective));
        let mut a = SparseQuantumState::new();
        for (i, sym) in [Symbol::Zero, Symbol::One, Symbol::Empty].into_iter().enumerate() {
            a.init_register(rid(i as u32), sym).unwrap();
        }
        a.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
        let regs = [rid(0), rid(1), rid(2)];
        let mut b = a.clone();
        a.apply_reversible_map(&regs, union_write).unwrap();
        b.apply_permutation(&regs, &perm).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.apply_permutation(&regs[..2], &perm), Err(QsimError::NotBijective));
    }

    #[test]
    fn measurement_probabilities() {
        let mut s = SparseQuantumState::single(rid(0), Symbol::Zero);
        s.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
        let p = s.outcome_probabilities(rid(0), &computational_basis()).unwrap();
        assert!(close(p[0], 0.5) && close(p[1], 0.5) && p[2] == 0.0);

        let z = SparseQuantumState::single(rid(0), Symbol::Zero);
        let p = z.outcome_probabilities(rid(0), &plus_minus_basis()).unwrap();
        assert!(close(p[0], 0.5) && close(p[1], 0.5) && close(p[2], 0.0) && close(p[3], 0.0));

        let e = SparseQuantumState::single(rid(0), Symbol::Empty);
        let p = e.outcome_probabilities(rid(0), &plus_minus_basis()).unwrap();
        assert!(close(p[2], 1.0));
    }

    fn bell() -> SparseQuantumState {
        let mut s = SparseQuantumState::single(rid(0), Symbol::Zero);
        s.init_register(rid(1), Symbol::Empty).unwrap();
        s.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
        s.apply_reversible_map(&[rid(0), rid(1)], copy_write).unwrap();
        s
    }

    #[test]
    fn branches_of_bell_pair() {
        let s = bell();
        assert_eq!(s.support_size(), 2);
        let b = s
            .measure_branches(&[(rid(0), computational_basis()), (rid(1), computational_basis())], 16)
            .unwrap();
        assert_eq!(b.len(), 2);
        for br in &b {
            assert!(close(br.probability, 0.5));
            assert_eq!(br.outcomes[0].1, br.outcomes[1].1);
        }
        let mut empty = SparseQuantumState::single(rid(0), Symbol::Empty);
        empty.init_register(rid(1), Symbol::Empty).unwrap();
        let b = empty.measure_branches(&[(rid(0), computational_basis())], 16).unwrap();
        assert_eq!(b.len(), 1);
        assert!(close(b[0].probability, 1.0));
        assert!(matches!(
            s.measure_branches(&[(rid(0), computational_basis())], 1),
            Err(QsimError::Capacity(1))
        ));
    }

    #[test]
    fn fidelity_and_products() {
        let s = bell();
        assert!(close(s.fidelity(&s, &[rid(0), rid(1)]).unwrap(), 1.0));
        let mut minus = bell();
        minus.apply_local_unitary(rid(0), &phase_on_one(core::f64::consts::PI)).unwrap();
        assert!(close(s.fidelity(&minus, &[rid(0), rid(1)]).unwrap(), 0.0));
        let zero = SparseQuantumState::single(rid(0), Symbol::Zero);
        let one = SparseQuantumState::single(rid(0), Symbol::One);
        assert!(close(zero.fidelity(&one, &[rid(0)]).unwrap(), 0.0));
        assert_eq!(s.fidelity(&zero, &[rid(0)]), Err(QsimError::Entangled));
        assert!(!s.is_product(&[rid(0)]));

        let mut t = bell();
        t.init_register(rid(2), Symbol::Empty).unwrap();
        assert!(close(t.fidelity(&s, &[rid(0), rid(1)]).unwrap(), 1.0));
        let removed = t.remove_register(rid(2)).unwrap();
        assert_eq!(removed.support_size(), 1);
        assert!(t.approx_eq_up_to_phase(&s, 1e-12));
    }

    #[test]
    fn collapse_keeps_register_in_basis_state() {
        let mut s = bell();
        s.collapse(rid(0), &plus_minus_basis(), 1).unwrap();
        // Projecting register 0 onto −̂ leaves register 1 in (|0̂⟩ − |1̂⟩)/√2.
        assert!(close(s.norm_sqr(), 1.0));
        let (r0, r1) = s.split(&[rid(0)]).unwrap();
        let minus = {
            let mut m = SparseQuantumState::single(rid(0), Symbol::One);
            m.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
            m
        };
        assert!(close(r0.fidelity(&minus, &[rid(0)]).unwrap(), 1.0));
        assert_eq!(r1.support_size(), 2);
    }

    #[test]
    fn memory_merges_and_splits_factors() {
        let mut m = QuantumMemory::new();
        m.alloc(rid(0), Symbol::Zero).unwrap();
        m.alloc(rid(1), Symbol::Empty).unwrap();
        assert_eq!(m.factors().len(), 2);
        m.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
        m.apply_reversible_map(&[rid(0), rid(1)], copy_write).unwrap();
        assert_eq!(m.factors().len(), 1);
        m.collapse(rid(1), &computational_basis(), 1).unwrap();
        assert_eq!(m.factors().len(), 2);
        assert!(m.discard(rid(1)).is_ok());
        let r = m.reduced(&[rid(0)]).unwrap();
        assert!(close(r.amplitude(&[Symbol::One]).norm(), 1.0));
        assert!(close(m.norm_sqr(), 1.0));
    }

    #[test]
    fn project_out_removes_register() {
        let mut m = QuantumMemory::new();
        m.alloc(rid(0), Symbol::Zero).unwrap();
        m.alloc(rid(1), Symbol::Empty).unwrap();
        m.apply_local_unitary(rid(0), &hadamard_low()).unwrap();
        m.apply_reversible_map(&[rid(0), rid(1)], copy_write).unwrap();
        let p = m.project_out(rid(1), &plus_minus_basis(), 1).unwrap();
        assert!(close(p, 0.5));
        assert!(!m.contains(rid(1)));
        let r = m.reduced(&[rid(0)]).unwrap();
        let p = r.outcome_probabilities(rid(0), &plus_minus_basis()).unwrap();
        assert!(close(p[1], 1.0));
    }
}
