//! Finite probability distributions with replay witnesses.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::runtime::Choice;

/// Branch paths of the independent executions that produced an outcome,
/// in the order they were combined.
pub type Witness = Vec<Vec<Choice>>;

#[derive(Debug, Clone)]
pub struct Weighted {
    pub probability: f64,
    pub witness: Witness,
}

/// Outcome -> probability, merged on equal outcomes.
#[derive(Debug, Clone)]
pub struct Dist<T: Ord> {
    entries: BTreeMap<T, Weighted>,
}

impl<T: Ord> Default for Dist<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord> Dist<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn point(t: T) -> Self {
        let mut d = Self::new();
        d.add(t, 1.0);
        d
    }

    pub fn add(&mut self, t: T, p: f64) {
        self.add_with_witness(t, p, Witness::new);
    }

    /// Adds mass `p` to `t`; the witness is kept only for a new outcome.
    pub fn add_with_witness(&mut self, t: T, p: f64, witness: impl FnOnce() -> Witness) {
        self.entries
            .entry(t)
            .and_modify(|w| w.probability += p)
            .or_insert_with(|| Weighted {
                probability: p,
                witness: witness(),
            });
    }

    pub fn total(&self) -> f64 {
        self.entries.values().map(|w| w.probability).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Weighted)> {
        self.entries.iter()
    }

    pub fn probability(&self, t: &T) -> f64 {
        self.entries.get(t).map_or(0.0, |w| w.probability)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &T> {
        self.entries.keys()
    }

    pub fn map<U: Ord>(&self, f: impl Fn(&T) -> U) -> Dist<U> {
        let mut d = Dist::new();
        for (t, w) in &self.entries {
            d.add_with_witness(f(t), w.probability, || w.witness.clone());
        }
        d
    }

    /// Distribution of `f(a, b)` for independent `a ~ self`, `b ~ other`.
    pub fn product<U: Ord, V: Ord>(&self, other: &Dist<U>, f: impl Fn(&T, &U) -> V) -> Dist<V> {
        let mut d = Dist::new();
        for (a, wa) in &self.entries {
            for (b, wb) in &other.entries {
                d.add_with_witness(f(a, b), wa.probability * wb.probability, || {
                    let mut w = wa.witness.clone();
                    w.extend(wb.witness.iter().cloned());
                    w
                });
            }
        }
        d
    }

    /// Mixture `Σ_t p(t) · f(t)`.
    pub fn bind<U: Ord, E>(&self, mut f: impl FnMut(&T) -> Result<Dist<U>, E>) -> Result<Dist<U>, E> {
        let mut d = Dist::new();
        for (t, wt) in &self.entries {
            for (u, wu) in f(t)?.entries {
                d.add_with_witness(u, wt.probability * wu.probability, || {
                    let mut w = wt.witness.clone();
                    w.extend(wu.witness);
                    w
                });
            }
        }
        Ok(d)
    }

    /// Same support and probabilities within `tol`.
    pub fn approx_eq(&self, other: &Dist<T>, tol: f64) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, wa), (b, wb))| a == b && (wa.probability - wb.probability).abs() <= tol)
    }
}
