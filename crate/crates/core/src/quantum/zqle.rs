//! Zero-error leader election.
//!
//! Lane `s ∈ 2..=N` draws a coin that is heads with probability `1/s` at
//! every party and runs QSV on the coins. The party whose coin was heads in
//! the largest lane that said true becomes the leader; without such a lane
//! everyone gives up.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compose::{factored_distribution, factored_sample, fold_lanes, lane_seed, Combine, Meter, Parallel};
use crate::dist::Dist;
use crate::quantum::qhm::QhmError;
use crate::quantum::qsv::{qsv, Qsv};
use crate::runtime::{Action, Envelope, PartyEnv, QuantumPort, RoundProgram, RunError, Runtime, StepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Elected {
    Leader,
    Follower,
    GiveUp,
}

/// Coin with bias `1/s`, then QSV on the coins.
pub struct CoinLane {
    pub s: usize,
    pub qsv: Qsv,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoinLaneState {
    coin: Option<bool>,
    inner: Option<<Qsv as RoundProgram>::State>,
}

impl RoundProgram for CoinLane {
    type Input = ();
    type State = CoinLaneState;
    type Msg = <Qsv as RoundProgram>::Msg;
    /// `(coin, QSV verdict)`.
    type Output = (bool, bool);

    fn start(&self, _: &PartyEnv, _: ()) -> CoinLaneState {
        CoinLaneState { coin: None, inner: None }
    }

    fn round(
        &self,
        env: &PartyEnv,
        st: &mut CoinLaneState,
        inbox: Vec<Vec<Envelope<Self::Msg>>>,
        q: &mut QuantumPort<'_>,
    ) -> StepResult<Action<Self::Msg, (bool, bool)>> {
        let coin = match st.coin {
            Some(c) => c,
            None => {
                let c = q.flip(1, self.s as u64)?;
                st.coin = Some(c);
                st.inner = Some(self.qsv.start(env, c));
                c
            }
        };
        let inner = st.inner.as_mut().expect("started in the first round");
        Ok(match self.qsv.round(env, inner, inbox, q)? {
            Action::Send(out) => Action::Send(out),
            Action::Halt(v) => Action::Halt((coin, v)),
        })
    }
}

pub struct ZqleCombine;

impl Combine for ZqleCombine {
    type LaneOut = (bool, bool);
    /// Coin of the largest lane so far that said true.
    type Acc = Option<bool>;
    type Out = Elected;

    fn init(&self) -> Option<bool> {
        None
    }

    fn absorb(&self, acc: &mut Option<bool>, _: usize, &(coin, verdict): &(bool, bool)) {
        if verdict {
            *acc = Some(coin);
        }
    }

    fn finish(&self, acc: &Option<bool>) -> Elected {
        match acc {
            Some(true) => Elected::Leader,
            Some(false) => Elected::Follower,
            None => Elected::GiveUp,
        }
    }
}

pub type Zqle = Parallel<CoinLane, ZqleCombine>;

/// Lanes `s = 2..=N` in increasing order.
pub fn zqle(upper_bound: usize) -> Result<Zqle, QhmError> {
    let mut lanes = Vec::new();
    for s in 2..=upper_bound {
        lanes.push(CoinLane {
            s,
            qsv: qsv(upper_bound)?,
        });
    }
    Ok(Parallel {
        lanes,
        combine: ZqleCombine,
    })
}

fn coin_law(n: usize, s: usize) -> Dist<Vec<bool>> {
    let p = 1.0 / s as f64;
    let mut d = Dist::point(Vec::new());
    for _ in 0..n {
        let mut c = Dist::new();
        c.add(false, 1.0 - p);
        c.add(true, p);
        d = d.product(&c, |v, &b| {
            let mut v = v.clone();
            v.push(b);
            v
        });
    }
    d
}

/// Exact law of the elected roles. Each lane mixes over the `2^n` coin
/// vectors; QSV laws are shared between lanes with the same coins.
pub fn zqle_distribution(rt: &Runtime<'_>, z: &Zqle) -> Result<(Dist<Vec<Elected>>, Meter), RunError> {
    let n = rt.graph().n();
    let mut cache: BTreeMap<Vec<bool>, (Dist<Vec<bool>>, Meter)> = BTreeMap::new();
    let mut meter = Meter::default();
    let mut lanes = Vec::with_capacity(z.lanes.len());
    for lane in &z.lanes {
        let mut lane_meter = Meter::default();
        let d = coin_law(n, lane.s).bind(|coins| {
            if !cache.contains_key(coins) {
                let r = factored_distribution(rt, &lane.qsv, coins)?;
                cache.insert(coins.clone(), r);
            }
            let (d, m) = &cache[coins];
            lane_meter = lane_meter.either(*m);
            Ok::<_, RunError>(d.map(|vs| coins.iter().copied().zip(vs.iter().copied()).collect::<Vec<_>>()))
        })?;
        meter = meter.beside(lane_meter);
        lanes.push(d);
    }
    Ok((fold_lanes(n, &z.combine, lanes), meter))
}

/// One sampled election; lanes and QSV sub-lanes are sampled on their own.
pub fn zqle_sample(rt: &Runtime<'_>, z: &Zqle, seed: u64) -> Result<(Vec<Elected>, Meter), RunError> {
    let n = rt.graph().n();
    let mut accs = vec![z.combine.init(); n];
    let mut meter = Meter::default();
    for (i, lane) in z.lanes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, i));
        let coins: Vec<bool> = (0..n).map(|_| rng.gen_range(0..lane.s) == 0).collect();
        let (verdicts, m) = factored_sample(rt, &lane.qsv, &coins, rng.gen())?;
        meter = meter.beside(m);
        for ((a, &c), &v) in accs.iter_mut().zip(&coins).zip(&verdicts) {
            z.combine.absorb(a, i, &(c, v));
        }
    }
    Ok((accs.iter().map(|a| z.combine.finish(a)).collect(), meter))
}

/// `P[exactly one heads]` among `n` coins of bias `1/n`.
pub fn single_heads_probability(n: usize) -> f64 {
    let p = 1.0 / n as f64;
    n as f64 * p * libm::pow(1.0 - p, (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ring;

    fn leaders(v: &[Elected]) -> usize {
        v.iter().filter(|&&e| e == Elected::Leader).count()
    }

    #[test]
    fn two_parties_succeed_half_the_time() {
        let g = ring(2);
        let rt = Runtime::new(&g);
        let z = zqle(2).unwrap();
        let (d, _) = zqle_distribution(&rt, &z).unwrap();
        let mut success = 0.0;
        for (outs, w) in d.iter() {
            if outs.contains(&Elected::GiveUp) {
                assert!(outs.iter().all(|&e| e == Elected::GiveUp));
            } else {
                assert_eq!(leaders(outs), 1);
                success += w.probability;
            }
        }
        assert!((success - 0.5).abs() < 1e-9);
        let mono = rt.output_distribution(&z, &[(), ()]).unwrap();
        assert!(mono.approx_eq(&d, 1e-9));
    }

    #[test]
    fn three_parties_beat_the_single_lane_bound() {
        let g = ring(3);
        let rt = Runtime::new(&g);
        let (d, _) = zqle_distribution(&rt, &zqle(3).unwrap()).unwrap();
        let mut success = 0.0;
        for (outs, w) in d.iter() {
            if !outs.contains(&Elected::GiveUp) {
                assert_eq!(leaders(outs), 1);
                success += w.probability;
            }
        }
        assert!(success >= single_heads_probability(3) - 1e-9);
        assert!(single_heads_probability(3) > 1.0 / core::f64::consts::E);
        for seed in 0..20 {
            let (outs, _) = zqle_sample(&rt, &zqle(3).unwrap(), seed).unwrap();
            assert!(leaders(&outs) <= 1);
        }
    }
}
