//! The symmetry-breaking unitary `W_h`.
//!
//! Applied by each of `h` parties sharing `(|0̂…0̂⟩ + |1̂…1̂⟩)/√2`, it leaves
//! zero amplitude on the four constant strings, so the parties' later
//! computational-basis outcomes can never all agree.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

use crate::qsim::{identity4, mat_mul, on_low_qubit, unitarity_defect, Mat4, C, NORM_TOL, ZERO_AMPLITUDE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WError {
    #[error("no usable triple of roots of -1 for h = {0}")]
    NoPhaseTriple(usize),
    #[error("W_{h} leaves amplitude {worst:e} on a constant string")]
    CheckFailed { h: usize, worst: f64 },
    #[error("W_{h} is not unitary (defect {defect:e})")]
    NotUnitary { h: usize, defect: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WUnitary {
    pub h: usize,
    pub matrix: Mat4,
}

fn zero() -> C {
    C::new(0.0, 0.0)
}

/// `CNOT` onto the high qubit controlled by the low one: `1̂ ↔ ×`.
pub fn cnot_2to1() -> Mat4 {
    let mut m = [[zero(); 4]; 4];
    for (input, output) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
        m[output][input] = C::new(1.0, 0.0);
    }
    m
}

/// `U_h = (1/√2)[[1, e^{iπ/h}], [1, −e^{iπ/h}]]` on the low qubit.
pub fn u_even(h: usize) -> Mat4 {
    let s = C::new(FRAC_1_SQRT_2, 0.0);
    let ph = C::from_polar(FRAC_1_SQRT_2, PI / h as f64);
    on_low_qubit([[s, ph], [s, -ph]])
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Positive weights `w` with `Σ w_j ω_j = 0`, `Σ w_j = 1`, if any.
fn weights(angles: [f64; 3]) -> Option<[f64; 3]> {
    let a = [
        [libm::cos(angles[0]), libm::cos(angles[1]), libm::cos(angles[2])],
        [libm::sin(angles[0]), libm::sin(angles[1]), libm::sin(angles[2])],
        [1.0, 1.0, 1.0],
    ];
    let d = det3(a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut w = [0.0; 3];
    for (j, wj) in w.iter_mut().enumerate() {
        let mut aj = a;
        for (row, rhs) in aj.iter_mut().zip([0.0, 0.0, 1.0]) {
            row[j] = rhs;
        }
        *wj = det3(aj) / d;
    }
    w.iter().all(|&x| x > 1e-9).then_some(w)
}

/// Three roots of −1 (as angles) whose smallest weight is largest.
fn phase_triple(h: usize) -> Option<([f64; 3], [f64; 3])> {
    let angle = |k: usize| PI * (2 * k + 1) as f64 / h as f64;
    let mut best: Option<([f64; 3], [f64; 3])> = None;
    for a in 0..h {
        for b in a + 1..h {
            for c in b + 1..h {
                let t = [angle(a), angle(b), angle(c)];
                if let Some(w) = weights(t) {
                    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
                    if best.is_none_or(|(_, bw)| min > bw.iter().copied().fold(f64::INFINITY, f64::min) + 1e-12) {
                        best = Some((t, w));
                    }
                }
            }
        }
    }
    best
}

fn inner(a: &[C; 4], b: &[C; 4]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `V_h`: column `0̂` is `Σ √w_j |c_j⟩`, column `×` is `Σ ω_j √w_j |c_j⟩`
/// over `c_j ∈ {0̂, 1̂, ∅}`; the other two columns complete a unitary.
pub fn v_odd(h: usize) -> Result<Mat4, WError> {
    let (angles, w) = phase_triple(h).ok_or(WError::NoPhaseTriple(h))?;
    let mut cols: Vec<[C; 4]> = Vec::with_capacity(4);
    let mut a = [zero(); 4];
    let mut b = [zero(); 4];
    for j in 0..3 {
        a[j] = C::new(libm::sqrt(w[j]), 0.0);
        b[j] = C::from_polar(libm::sqrt(w[j]), angles[j]);
    }
    cols.push(a);
    cols.push(b);
    while cols.len() < 4 {
        let mut best: Option<(f64, [C; 4])> = None;
        for k in 0..4 {
            let mut v = [zero(); 4];
            v[k] = C::new(1.0, 0.0);
            for q in &cols {
                let p = inner(q, &v);
                for i in 0..4 {
                    v[i] -= p * q[i];
                }
            }
            let norm = libm::sqrt(v.iter().map(|x| x.norm_sqr()).sum());
            if best.is_none_or(|(bn, _)| norm > bn + 1e-12) {
                best = Some((norm, v.map(|x| x / norm)));
            }
        }
        cols.push(best.expect("four candidates").1);
    }
    // Inputs in order 0̂, 1̂, ∅, ×.
    let order = [0usize, 2, 3, 1];
    let mut m = [[zero(); 4]; 4];
    for (input, &ci) in order.iter().enumerate() {
        for row in 0..4 {
            m[row][input] = cols[ci][row];
        }
    }
    Ok(m)
}

/// `|⟨c^h| W^{⊗h} |GHZ_h⟩|` for `c = 0̂, 1̂, ∅, ×`.
pub fn ghz_constant_amplitudes(m: &Mat4, h: usize) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (c, o) in out.iter_mut().enumerate() {
        *o = ((m[c][0].powu(h as u32) + m[c][1].powu(h as u32)) * FRAC_1_SQRT_2).norm();
    }
    out
}

/// The unchecked candidate matrix.
pub fn w_matrix(h: usize) -> Result<Mat4, WError> {
    Ok(match h {
        0 | 1 => identity4(),
        h if h % 2 == 0 => u_even(h),
        h => mat_mul(&v_odd(h)?, &cnot_2to1()),
    })
}

/// `W_h`, verified unitary and vanishing on the constant strings.
pub fn build_w(h: usize) -> Result<WUnitary, WError> {
    let matrix = w_matrix(h)?;
    let defect = unitarity_defect(&matrix);
    if defect > NORM_TOL {
        return Err(WError::NotUnitary { h, defect });
    }
    if h >= 2 {
        let worst = ghz_constant_amplitudes(&matrix, h).iter().copied().fold(0.0, f64::max);
        if worst > ZERO_AMPLITUDE {
            return Err(WError::CheckFailed { h, worst });
        }
    }
    Ok(WUnitary { h, matrix })
}
