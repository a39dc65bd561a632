//! Verification campaigns.
//!
//! A campaign expands a [`CampaignSpec`] into instances (graph, numbering,
//! input, upper bound), evaluates them on a worker pool and returns one
//! [`Record`] per instance plus a [`Summary`]. Records come back in
//! instance order, so reports are stable for a fixed spec and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use anonq_core::classical::{ColorCase, ColorCountProgram, ConsistencyProgram, Solo, SymmetricGuessProgram, T0Program, Verdict};
use anonq_core::compose::{factored_distribution, factored_sample, lane_distribution, lane_seed, Combine, Parallel};
use anonq_core::dist::Dist;
use anonq_core::graph::{enumerate_graphs, enumerate_isomorphism_classes, enumerate_port_numberings, fixture, sample_port_numberings, PortDigraph, DEFAULT_ENUMERATION_CAP};
use anonq_core::qsim::{ghz_state, identity4, unitarity_defect};
use anonq_core::quantum::qsv::{guesses, qsv, qsv_with_w, Qsv};
use anonq_core::quantum::qsym::{ceil_log2_stages, qsym, qsym_distribution, stage_count, SymmetricTable};
use anonq_core::quantum::w::{ghz_constant_amplitudes, w_matrix};
use anonq_core::quantum::zqle::{single_heads_probability, zqle, zqle_distribution, zqle_sample, Elected};
use anonq_core::quantum::{round_budget, Qhm, QhmOut};
use anonq_core::runtime::{Choice, RoundProgram, RunError, Runtime};
use anyhow::{bail, Context, Result};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::format::{bits_string, parse_bits, parse_graph, serialize_graph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphSource {
    /// Every strongly connected digraph for each `n` in the spec.
    Enumerate { max_multiplicity: usize },
    Fixtures(Vec<String>),
    Files(Vec<PathBuf>),
    /// `count` distinct graphs per `n`, drawn from the enumeration with `seed`.
    Random { count: usize, max_multiplicity: usize, seed: u64 },
    /// One enumerated graph per isomorphism class.
    Classes { max_multiplicity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Numberings {
    /// Only the graph's own numbering.
    Given,
    All { cap: u128 },
    /// The given numbering plus `count` uniform draws.
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inputs {
    All,
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bounds {
    /// `N = n + d` for each `d`.
    Offsets(Vec<usize>),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Branch,
    Sample { seed: u64, trials: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub n: Vec<usize>,
    pub graphs: GraphSource,
    pub numberings: Numberings,
    pub inputs: Inputs,
    pub bounds: Bounds,
    pub mode: Mode,
    /// Allowed deviation of total probability mass from 1.
    pub tol: f64,
    /// Largest `n` accepted in branch mode.
    pub branch_max_n: usize,
    /// Replace every `W_h` by the identity (negative control).
    pub corrupt_w: bool,
    /// Tables for the QSYM campaign, with display names.
    pub tables: Vec<(String, SymmetricTable)>,
}

impl CampaignSpec {
    pub fn new(n: Vec<usize>, graphs: GraphSource) -> Self {
        Self {
            n,
            graphs,
            numberings: Numberings::All { cap: DEFAULT_ENUMERATION_CAP },
            inputs: Inputs::All,
            bounds: Bounds::Offsets(vec![0]),
            mode: Mode::Branch,
            tol: 1e-9,
            branch_max_n: 4,
            corrupt_w: false,
            tables: Vec::new(),
        }
    }
}

/// Everything needed to reproduce one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    /// Graph in the text format.
    pub graph: String,
    pub input: String,
    pub upper_bound: usize,
    pub variant: Option<String>,
    /// One branch path per lane (branch mode).
    pub lanes: Vec<Vec<Choice>>,
    /// Trial seed (sampling mode).
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub campaign: String,
    pub graph: String,
    pub numbering: String,
    pub input: String,
    pub upper_bound: usize,
    pub variant: Option<String>,
    pub branches: u64,
    pub mass: f64,
    pub expected: Value,
    /// Outcome and its probability (branch mode) or frequency (sampling).
    pub observed: Vec<(Value, f64)>,
    pub rounds: u32,
    pub cbits: u64,
    pub qubits: u64,
    pub pass: bool,
    pub detail: Option<String>,
    pub replay: Option<Replay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub campaign: String,
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub max_rounds: u32,
    pub max_cbits: u64,
    pub max_qubits: u64,
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<Record>,
    pub summary: Summary,
}

impl Record {
    fn named(campaign: &str) -> Self {
        Record {
            campaign: campaign.into(),
            graph: String::new(),
            numbering: String::new(),
            input: String::new(),
            upper_bound: 0,
            variant: None,
            branches: 0,
            mass: 0.0,
            expected: Value::Null,
            observed: Vec::new(),
            rounds: 0,
            cbits: 0,
            qubits: 0,
            pass: false,
            detail: None,
            replay: None,
        }
    }
}

impl Report {
    pub fn new(campaign: &str, records: Vec<Record>, extra: BTreeMap<String, Value>) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let summary = Summary {
            campaign: campaign.into(),
            instances: records.len(),
            passed,
            failed: records.len() - passed,
            max_rounds: records.iter().map(|r| r.rounds).max().unwrap_or(0),
            max_cbits: records.iter().map(|r| r.cbits).max().unwrap_or(0),
            max_qubits: records.iter().map(|r| r.qubits).max().unwrap_or(0),
            extra,
        };
        Self { records, summary }
    }

    pub fn ok(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// One JSON object per record, then `{"summary": ...}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &json!({ "summary": self.summary }))?;
        writeln!(w)?;
        Ok(())
    }
}

/// One (graph, numbering, input, upper bound) job.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph_id: String,
    pub numbering: u128,
    pub graph: PortDigraph,
    pub x: Vec<bool>,
    pub upper_bound: usize,
}

impl Instance {
    fn blank(&self, campaign: &str) -> Record {
        Record {
            graph: self.graph_id.clone(),
            numbering: self.numbering.to_string(),
            input: bits_string(&self.x),
            upper_bound: self.upper_bound,
            ..Record::named(campaign)
        }
    }

    fn replay(&self, variant: Option<String>, lanes: Vec<Vec<Choice>>, seed: Option<u64>) -> Replay {
        Replay {
            graph: serialize_graph(&self.graph),
            input: bits_string(&self.x),
            upper_bound: self.upper_bound,
            variant,
            lanes,
            seed,
        }
    }

    fn runtime(&self) -> Runtime<'_> {
        Runtime::new(&self.graph).upper_bound(self.upper_bound)
    }
}

/// Named base graphs of the spec.
pub fn base_graphs(spec: &CampaignSpec) -> Result<Vec<(String, PortDigraph)>> {
    let mut out = Vec::new();
    match &spec.graphs {
        GraphSource::Enumerate { max_multiplicity } => {
            for &n in &spec.n {
                for (i, g) in enumerate_graphs(n, *max_multiplicity)?.enumerate() {
                    out.push((format!("sc{n}#{i}"), g));
                }
            }
        }
        GraphSource::Random {
            count,
            max_multiplicity,
            seed,
        } => {
            for &n in &spec.n {
                let all: Vec<PortDigraph> = enumerate_graphs(n, *max_multiplicity)?.collect();
                if all.is_empty() {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(*seed, n));
                for i in index::sample(&mut rng, all.len(), (*count).min(all.len())) {
                    out.push((format!("sc{n}#{i}"), all[i].clone()));
                }
            }
        }
        GraphSource::Classes { max_multiplicity } => {
            for &n in &spec.n {
                for (i, g) in enumerate_isomorphism_classes(n, *max_multiplicity)?.enumerate() {
                    out.push((format!("iso{n}#{i}"), g));
                }
            }
        }
        GraphSource::Fixtures(names) => {
            for name in names {
                out.push((name.clone(), fixture(name)?));
            }
        }
        GraphSource::Files(paths) => {
            for p in paths {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                out.push((p.display().to_string(), parse_graph(&text)?));
            }
        }
    }
    Ok(out)
}

fn numberings(spec: &CampaignSpec, gi: usize, g: &PortDigraph) -> Result<Vec<(u128, PortDigraph)>> {
    Ok(match spec.numberings {
        Numberings::Given => vec![(0, g.clone())],
        Numberings::All { cap } => enumerate_port_numberings(g, cap)?.enumerate().map(|(i, h)| (i as u128, h)).collect(),
        Numberings::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, gi));
            let mut v = vec![(0, g.clone())];
            v.extend(sample_port_numberings(g, count, &mut rng));
            v
        }
    })
}

fn all_inputs(n: usize) -> Vec<Vec<bool>> {
    (0u64..1 << n).map(|b| (0..n).map(|i| b >> i & 1 == 1).collect()).collect()
}

fn inputs(spec: &CampaignSpec, n: usize) -> Vec<Vec<bool>> {
    match spec.inputs {
        Inputs::All => all_inputs(n),
        Inputs::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, n));
            (0..count).map(|_| (0..n).map(|_| rng.gen()).collect()).collect()
        }
    }
}

fn bounds(spec: &CampaignSpec, n: usize) -> Vec<usize> {
    match &spec.bounds {
        Bounds::Offsets(d) => d.iter().map(|d| n + d).collect(),
        Bounds::Fixed(b) => vec![*b],
    }
}

/// Expands the spec. With `with_inputs = false` every instance gets the
/// empty input.
pub fn instances(spec: &CampaignSpec, with_inputs: bool) -> Result<Vec<Instance>> {
    expand(spec, with_inputs, spec.mode == Mode::Branch)
}

fn expand(spec: &CampaignSpec, with_inputs: bool, limit_n: bool) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (gi, (id, g)) in base_graphs(spec)?.into_iter().enumerate() {
        let n = g.n();
        if limit_n && n > spec.branch_max_n {
            bail!("branch mode is limited to n <= {}; {id} has n = {n}", spec.branch_max_n);
        }
        let xs = if with_inputs { inputs(spec, n) } else { vec![Vec::new()] };
        for (k, h) in numberings(spec, gi, &g)? {
            for x in &xs {
                for upper_bound in bounds(spec, n) {
                    if upper_bound < n {
                        bail!("upper bound {upper_bound} is below n = {n} for {id}");
                    }
                    out.push(Instance {
                        graph_id: id.clone(),
                        numbering: k,
                        graph: h.clone(),
                        x: x.clone(),
                        upper_bound,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn weight(x: &[bool]) -> usize {
    x.iter().filter(|&&b| b).count()
}

/// Outcome list, total mass and the first offending outcome's witness.
fn check_law<O: Ord + Serialize>(d: &Dist<Vec<O>>, ok: impl Fn(&Vec<O>) -> bool) -> (Vec<(Value, f64)>, f64, Option<Vec<Vec<Choice>>>) {
    let mut observed = Vec::new();
    let mut bad = None;
    for (o, w) in d.iter() {
        observed.push((json!(o), w.probability));
        if bad.is_none() && !ok(o) {
            bad = Some(w.witness.clone());
        }
    }
    (observed, d.total(), bad)
}

fn frequencies<O: Ord + Serialize>(counts: BTreeMap<Vec<O>, usize>, trials: usize) -> Vec<(Value, f64)> {
    counts
        .into_iter()
        .map(|(o, c)| (json!(o), c as f64 / trials as f64))
        .collect()
}

fn fail_record(mut r: Record, e: impl std::fmt::Display) -> Record {
    r.pass = false;
    r.detail = Some(e.to_string());
    r
}

fn qsv_program(spec: &CampaignSpec, upper_bound: usize) -> Result<Qsv> {
    Ok(if spec.corrupt_w {
        qsv_with_w(upper_bound, identity4())?
    } else {
        qsv(upper_bound)?
    })
}

/// Every branch of QSV must output `H₁(x)` at every party.
pub fn verify_qsv(spec: &CampaignSpec) -> Result<Report> {
    let inst = instances(spec, true)?;
    let records: Vec<Record> = inst.par_iter().map(|i| qsv_record(spec, i)).collect();
    Ok(Report::new("verify_qsv", records, BTreeMap::new()))
}

fn qsv_record(spec: &CampaignSpec, i: &Instance) -> Record {
    let mut r = i.blank("verify_qsv");
    let expect = weight(&i.x) == 1;
    r.expected = json!(expect);
    let p = match qsv_program(spec, i.upper_bound) {
        Ok(p) => p,
        Err(e) => return fail_record(r, e),
    };
    let rt = i.runtime();
    let n = i.x.len();
    let ok = |o: &Vec<bool>| o.len() == n && o.iter().all(|&v| v == expect);
    match spec.mode {
        Mode::Branch => match factored_distribution(&rt, &p, &i.x) {
            Ok((d, m)) => {
                let (observed, mass, bad) = check_law(&d, ok);
                r.observed = observed;
                r.mass = mass;
                r.branches = m.branches;
                r.rounds = m.rounds;
                r.cbits = m.cbits;
                r.qubits = m.qubits;
                r.pass = bad.is_none() && (mass - 1.0).abs() <= spec.tol;
                if let Some(w) = bad {
                    r.replay = Some(i.replay(None, w, None));
                }
                r
            }
            Err(e) => fail_record(r, e),
        },
        Mode::Sample { seed, trials } => {
            let mut counts = BTreeMap::new();
            let mut first_bad = None;
            for t in 0..trials {
                let s = lane_seed(seed, t);
                match factored_sample(&rt, &p, &i.x, s) {
                    Ok((o, m)) => {
                        if first_bad.is_none() && !ok(&o) {
                            first_bad = Some(s);
                        }
                        *counts.entry(o).or_insert(0) += 1;
                        r.rounds = r.rounds.max(m.rounds);
                        r.cbits = r.cbits.max(m.cbits);
                        r.qubits = r.qubits.max(m.qubits);
                    }
                    Err(e) => return fail_record(r, e),
                }
            }
            r.branches = trials as u64;
            r.mass = 1.0;
            r.observed = frequencies(counts, trials);
            r.pass = first_bad.is_none();
            if let Some(s) = first_bad {
                r.replay = Some(i.replay(None, Vec::new(), Some(s)));
            }
            r
        }
    }
}

/// Replays each lane along its path and folds the outputs.
pub fn replay_parallel<P, C>(rt: &Runtime<'_>, par: &Parallel<P, C>, x: &[P::Input], lanes: &[Vec<Choice>]) -> Result<Vec<C::Out>, RunError>
where
    P: RoundProgram,
    C: Combine<LaneOut = P::Output>,
{
    let mut accs = vec![par.combine.init(); x.len()];
    for (i, (lane, path)) in par.lanes.iter().zip(lanes).enumerate() {
        let run = rt.replay(lane, x, path)?;
        for (a, o) in accs.iter_mut().zip(&run.transcript.outputs) {
            par.combine.absorb(a, i, o);
        }
    }
    Ok(accs.iter().map(|a| par.combine.finish(a)).collect())
}

fn replay_input(h: &Replay) -> Result<(PortDigraph, Vec<bool>)> {
    let g = parse_graph(&h.graph)?;
    let x = parse_bits(&h.input).context("input must be a 0/1 string")?;
    Ok((g, x))
}

/// Re-executes a QSV record's handle and returns the outputs it produced.
pub fn replay_qsv(h: &Replay, corrupt_w: bool) -> Result<Vec<bool>> {
    let (g, x) = replay_input(h)?;
    let rt = Runtime::new(&g).upper_bound(h.upper_bound);
    let p = if corrupt_w {
        qsv_with_w(h.upper_bound, identity4())?
    } else {
        qsv(h.upper_bound)?
    };
    Ok(match h.seed {
        Some(s) => factored_sample(&rt, &p, &x, s)?.0,
        None => replay_parallel(&rt, &p, &x, &h.lanes)?,
    })
}

/// Per-lane properties of `Q_{h,m}`: agreement on every branch, the right
/// answer at the correct guess, and all-true when `|x| ≤ 1`.
pub fn verify_lemma1(spec: &CampaignSpec) -> Result<Report> {
    let inst = instances(spec, true)?;
    let records: Vec<Record> = inst.par_iter().map(|i| lemma1_record(spec, i)).collect();
    Ok(Report::new("verify_lemma1", records, BTreeMap::new()))
}

fn lemma1_record(spec: &CampaignSpec, i: &Instance) -> Record {
    let mut r = i.blank("verify_lemma1");
    let n = i.x.len();
    let w = weight(&i.x);
    r.expected = json!({ "correct_guess": [w, n], "value_at_correct_guess": w <= 1 });
    r.mass = 1.0;
    r.pass = true;
    let rt = i.runtime();
    let mut problems = Vec::new();
    for (h, m) in guesses(i.upper_bound) {
        let q = match Qhm::new(h, m) {
            Ok(q) => q,
            Err(e) => return fail_record(r, e),
        };
        let check = |o: &Vec<QhmOut>| -> Option<&'static str> {
            let v: Vec<Option<bool>> = o.iter().map(QhmOut::verdict).collect();
            if v.iter().any(Option::is_none) || v.windows(2).any(|p| p[0] != p[1]) {
                return Some("disagreement");
            }
            let v = v[0].unwrap_or(false);
            if (h, m) == (w, n) && v != (w <= 1) {
                return Some("wrong at correct guess");
            }
            if w <= 1 && !v {
                return Some("false with |x| <= 1");
            }
            None
        };
        let variant = format!("{h},{m}");
        match spec.mode {
            Mode::Branch => match lane_distribution(&rt, &q, &i.x) {
                Ok((d, meter)) => {
                    r.branches += meter.branches;
                    r.rounds = r.rounds.max(meter.rounds);
                    r.cbits = r.cbits.max(meter.cbits);
                    r.qubits = r.qubits.max(meter.qubits);
                    let mass = d.total();
                    if (mass - 1.0).abs() > (r.mass - 1.0).abs() {
                        r.mass = mass;
                    }
                    if (mass - 1.0).abs() > spec.tol {
                        problems.push(format!("({variant}): mass {mass}"));
                        r.pass = false;
                    }
                    for (o, wt) in d.iter() {
                        if let Some(why) = check(o) {
                            problems.push(format!("({variant}): {why}"));
                            r.observed.push((json!({ "guess": [h, m], "outputs": o.iter().map(|q| q.verdict()).collect::<Vec<_>>() }), wt.probability));
                            if r.replay.is_none() {
                                r.replay = Some(i.replay(Some(variant.clone()), wt.witness.clone(), None));
                            }
                            r.pass = false;
                            break;
                        }
                    }
                }
                Err(e) => {
                    problems.push(format!("({variant}): {e}"));
                    r.pass = false;
                }
            },
            Mode::Sample { seed, trials } => {
                for t in 0..trials {
                    let s = lane_seed(seed, t);
                    match rt.sample(&q, &i.x, s) {
                        Ok(run) => {
                            let tr = run.transcript;
                            r.branches += 1;
                            r.rounds = r.rounds.max(tr.rounds);
                            r.cbits = r.cbits.max(tr.cbits);
                            r.qubits = r.qubits.max(tr.qubits);
                            if let Some(why) = check(&tr.outputs) {
                                problems.push(format!("({variant}): {why}"));
                                if r.replay.is_none() {
                                    r.replay = Some(i.replay(Some(variant.clone()), Vec::new(), Some(s)));
                                }
                                r.pass = false;
                                break;
                            }
                        }
                        Err(e) => {
                            problems.push(format!("({variant}): {e}"));
                            r.pass = false;
                            break;
                        }
                    }
                }
            }
        }
    }
    if !problems.is_empty() {
        r.detail = Some(problems.join("; "));
    }
    r
}

/// Re-executes the `Q_{h,m}` lane of a per-guess record.
pub fn replay_lemma1(h: &Replay) -> Result<Vec<QhmOut>> {
    let (g, x) = replay_input(h)?;
    let variant = h.variant.as_deref().context("per-guess handles name their guess as h,m")?;
    let (hh, mm) = variant.split_once(',').context("guess is written h,m")?;
    let q = Qhm::new(hh.parse()?, mm.parse()?)?;
    let rt = Runtime::new(&g).upper_bound(h.upper_bound);
    let run = match h.seed {
        Some(s) => rt.sample(&q, &x, s)?,
        None => rt.replay(&q, &x, h.lanes.first().map_or(&[][..], |p| p.as_slice()))?,
    };
    Ok(run.transcript.outputs)
}

/// At the correct guess `(|x|, n)`, stops `Q_{h,m}` after the scale-down
/// and checks that the active parties' `R` registers hold a GHZ state on
/// every branch past the consistency step, which must carry mass `2^{1−|x|}`.
/// Inputs with `|x| = 0` are skipped.
pub fn verify_scaledown(spec: &CampaignSpec) -> Result<Report> {
    let inst: Vec<Instance> = instances(spec, true)?.into_iter().filter(|i| weight(&i.x) > 0).collect();
    let records: Vec<Record> = inst.par_iter().map(|i| scaledown_record(spec, i)).collect();
    Ok(Report::new("verify_scaledown", records, BTreeMap::new()))
}

fn scaledown_record(spec: &CampaignSpec, i: &Instance) -> Record {
    let mut r = i.blank("verify_scaledown");
    let (n, h) = (i.x.len(), weight(&i.x));
    r.variant = Some(format!("{h},{n}"));
    let reach = 2f64.powi(1 - h as i32);
    r.expected = json!({ "min_fidelity": 1.0 - spec.tol, "consistent_mass": reach });
    let q = match Qhm::new(h, n) {
        Ok(q) => q.stop_after_scaledown(),
        Err(e) => return fail_record(r, e),
    };
    let runs = match i.runtime().branches(&q, &i.x) {
        Ok(runs) => runs,
        Err(e) => return fail_record(r, e),
    };
    let mut reached = 0.0;
    let mut worst = 1.0f64;
    let mut problem = None;
    for run in &runs {
        let t = &run.transcript;
        r.mass += t.probability;
        r.rounds = r.rounds.max(t.rounds);
        r.cbits = r.cbits.max(t.cbits);
        r.qubits = r.qubits.max(t.qubits);
        if t.outputs.iter().all(|o| matches!(o, QhmOut::Verdict { .. })) {
            continue;
        }
        reached += t.probability;
        let mut ids = Vec::new();
        for (v, o) in t.outputs.iter().enumerate() {
            match (i.x[v], o) {
                (true, &QhmOut::Scaled { r: Some(reg) }) if run.register(v, reg).is_some() => {
                    ids.extend(run.register(v, reg))
                }
                (false, QhmOut::Scaled { r: None }) => {}
                _ => problem = problem.or(Some(format!("party {v} reported {o:?}"))),
            }
        }
        let f = run
            .memory
            .reduced(&ids)
            .and_then(|s| ghz_state(&ids).and_then(|g| s.fidelity(&g, &ids)));
        match f {
            Ok(f) => worst = worst.min(f),
            Err(e) => problem = problem.or(Some(e.to_string())),
        }
    }
    r.branches = runs.len() as u64;
    r.observed = vec![(json!({ "min_fidelity": worst, "consistent_mass": reached }), 1.0)];
    r.pass = problem.is_none()
        && worst >= 1.0 - spec.tol
        && (reached - reach).abs() <= spec.tol
        && (r.mass - 1.0).abs() <= spec.tol;
    r.detail = problem;
    r
}

/// `χ` with `m = n` must equal `|x|` at every party.
pub fn verify_symmetric_guess(spec: &CampaignSpec) -> Result<Report> {
    let inst = expand(spec, true, false)?;
    let records: Vec<Record> = inst.par_iter().map(symmetric_guess_record).collect();
    Ok(Report::new("verify_symmetric_guess", records, BTreeMap::new()))
}

fn symmetric_guess_record(i: &Instance) -> Record {
    let mut r = i.blank("verify_symmetric_guess");
    let n = i.x.len();
    let expect = weight(&i.x) as u64;
    r.expected = json!(expect.to_string());
    match i.runtime().sample(&Solo(SymmetricGuessProgram { m: n }), &i.x, 0) {
        Ok(run) => {
            let t = run.transcript;
            let seen: BTreeSet<String> = t.outputs.iter().map(ToString::to_string).collect();
            r.observed = seen.into_iter().map(|c| (json!(c), 1.0)).collect();
            r.rounds = t.rounds;
            r.cbits = t.cbits;
            r.branches = 1;
            r.mass = 1.0;
            r.pass = t.outputs.iter().all(|c| *c.numer() == expect && *c.denom() == 1);
            r
        }
        Err(e) => fail_record(r, e),
    }
}

/// Color count, consistency and `T₀` against set-union oracles for every
/// coloring in `{0,1,2}ⁿ`, flooding for Δ (the diameter) exchanges and
/// finishing within Δ+1 rounds.
pub fn verify_classical(spec: &CampaignSpec) -> Result<Report> {
    let inst = expand(spec, true, false)?;
    let records: Vec<Record> = inst.par_iter().map(classical_record).collect();
    Ok(Report::new("verify_classical", records, BTreeMap::new()))
}

fn classical_record(i: &Instance) -> Record {
    let mut r = i.blank("verify_classical");
    let delta = match i.graph.diameter() {
        Ok(d) => d,
        Err(e) => return fail_record(r, e),
    };
    r.expected = json!({ "delta": delta, "rounds_at_most": delta + 1 });
    r.mass = 1.0;
    match classical_checks(i, delta, &mut r) {
        Ok(None) => r.pass = r.rounds as usize <= delta + 1,
        Ok(Some(problem)) => r.detail = Some(problem),
        Err(e) => return fail_record(r, e),
    }
    r
}

fn classical_checks(i: &Instance, delta: usize, r: &mut Record) -> Result<Option<String>> {
    let n = i.x.len();
    let rt = i.runtime();
    let mut meter = |t_rounds: u32, t_cbits: u64| {
        r.rounds = r.rounds.max(t_rounds);
        r.cbits = r.cbits.max(t_cbits);
        r.branches += 1;
    };
    let t0 = rt.sample(&Solo(T0Program { delta }), &i.x, 0)?.transcript;
    meter(t0.rounds, t0.cbits);
    let none_active = !i.x.contains(&true);
    if t0.outputs.iter().any(|&b| b != none_active) {
        return Ok(Some(format!("T0 reported {:?}", t0.outputs)));
    }
    for code in 0..3u32.pow(n as u32) {
        let colors: Vec<u8> = (0..n).map(|v| (code / 3u32.pow(v as u32) % 3) as u8).collect();
        let input: Vec<(bool, u8)> = i.x.iter().copied().zip(colors.iter().copied()).collect();
        let oracle: BTreeSet<u8> = input.iter().filter(|p| p.0).map(|p| p.1).collect();
        let case = match oracle.len() {
            0 => ColorCase::None,
            1 => ColorCase::One,
            _ => ColorCase::Many,
        };
        let count = rt.sample(&Solo(ColorCountProgram { delta }), &input, 0)?.transcript;
        meter(count.rounds, count.cbits);
        if count.outputs.iter().any(|o| o.colors != oracle || o.case != case) {
            return Ok(Some(format!("color count on colors {colors:?} reported {:?}", count.outputs)));
        }
        let verdict = rt.sample(&Solo(ConsistencyProgram { delta }), &input, 0)?.transcript;
        meter(verdict.rounds, verdict.cbits);
        if verdict.outputs.iter().any(|&v| v != Verdict::of(case)) {
            return Ok(Some(format!("consistency on colors {colors:?} reported {:?}", verdict.outputs)));
        }
    }
    Ok(None)
}

/// `H₁`, `T₂`, `|x| = 2`, and `[|x| = 0]` written with threshold `k`
/// for `k ≤ k_max` and either tail value.
pub fn standard_tables(k_max: usize) -> Vec<(String, SymmetricTable)> {
    let mut v = vec![
        ("H1".to_string(), SymmetricTable::exactly(1)),
        ("T2".to_string(), SymmetricTable::at_most(2)),
        ("exactly2".to_string(), SymmetricTable::exactly(2)),
    ];
    for k in 0..=k_max {
        for tail in [false, true] {
            let mut values = vec![false; k + 1];
            values[0] = true;
            let t = SymmetricTable::new(values, tail).expect("nonempty");
            v.push((format!("T0(k={k},tail={})", tail as u8), t));
        }
    }
    v
}

/// Every branch of QSYM must output `f(x)` for each table.
pub fn verify_qsym(spec: &CampaignSpec) -> Result<Report> {
    let inst = instances(spec, true)?;
    let jobs: Vec<(&Instance, &(String, SymmetricTable))> = inst.iter().flat_map(|i| spec.tables.iter().map(move |t| (i, t))).collect();
    let records: Vec<Record> = jobs.par_iter().map(|(i, t)| qsym_record(spec, i, t)).collect();
    let mut extra = BTreeMap::new();
    for (name, t) in &spec.tables {
        let used = records
            .iter()
            .filter(|r| r.variant.as_deref() == Some(name))
            .filter_map(|r| r.expected.get("stages_run").and_then(Value::as_u64))
            .max()
            .unwrap_or(0);
        extra.insert(
            name.clone(),
            json!({
                "k": t.k(),
                "stages": stage_count(t.k()),
                "stages_run_max": used,
                "ceil_log2_bound": ceil_log2_stages(t.k()),
                "within_ceil_log2_bound": stage_count(t.k()) <= ceil_log2_stages(t.k()),
            }),
        );
    }
    Ok(Report::new("verify_qsym", records, extra))
}

/// Re-evaluates a QSYM handle: the exact output law, or the outputs of the
/// sampled trial when the handle carries a seed. The table is looked up by
/// name among [`standard_tables`].
pub fn replay_qsym(h: &Replay) -> Result<Vec<(Vec<bool>, f64)>> {
    let (g, x) = replay_input(h)?;
    let name = h.variant.as_deref().context("QSYM handles name their table")?;
    let table = standard_tables(8)
        .into_iter()
        .find(|(n, _)| n == name)
        .with_context(|| format!("unknown table {name}"))?
        .1;
    let q = qsym(table, h.upper_bound)?;
    let rt = Runtime::new(&g).upper_bound(h.upper_bound);
    Ok(match h.seed {
        Some(s) => vec![(rt.sample(&q, &x, s)?.transcript.outputs, 1.0)],
        None => qsym_distribution(&rt, &q, &x)?
            .outputs
            .iter()
            .map(|(o, w)| (o.clone(), w.probability))
            .collect(),
    })
}

fn qsym_record(spec: &CampaignSpec, i: &Instance, (name, table): &(String, SymmetricTable)) -> Record {
    let mut r = i.blank("verify_qsym");
    r.variant = Some(name.clone());
    let expect = table.eval(weight(&i.x));
    let n = i.x.len();
    let q = match qsym(table.clone(), i.upper_bound) {
        Ok(q) => q,
        Err(e) => return fail_record(r, e),
    };
    let rt = i.runtime();
    let ok = |o: &Vec<bool>| o.len() == n && o.iter().all(|&v| v == expect);
    match spec.mode {
        Mode::Branch => match qsym_distribution(&rt, &q, &i.x) {
            Ok(law) => {
                let (observed, mass, bad) = check_law(&law.outputs, ok);
                r.expected = json!({ "value": expect, "stages_run": law.stages_run });
                r.observed = observed;
                r.mass = mass;
                r.branches = law.meter.branches;
                r.rounds = law.meter.rounds;
                r.cbits = law.meter.cbits;
                r.qubits = law.meter.qubits;
                r.pass = bad.is_none() && (mass - 1.0).abs() <= spec.tol && law.stages_run <= q.stages.len();
                if !r.pass {
                    r.replay = Some(i.replay(Some(name.clone()), Vec::new(), None));
                }
                r
            }
            Err(e) => fail_record(r, e),
        },
        Mode::Sample { seed, trials } => {
            r.expected = json!({ "value": expect });
            let mut counts = BTreeMap::new();
            let mut first_bad = None;
            for t in 0..trials {
                let s = lane_seed(seed, t);
                match rt.sample(&q, &i.x, s) {
                    Ok(run) => {
                        let tr = run.transcript;
                        if first_bad.is_none() && !ok(&tr.outputs) {
                            first_bad = Some(s);
                        }
                        r.rounds = r.rounds.max(tr.rounds);
                        r.cbits = r.cbits.max(tr.cbits);
                        r.qubits = r.qubits.max(tr.qubits);
                        *counts.entry(tr.outputs).or_insert(0) += 1;
                    }
                    Err(e) => return fail_record(r, e),
                }
            }
            r.branches = trials as u64;
            r.mass = 1.0;
            r.observed = frequencies(counts, trials);
            r.pass = first_bad.is_none();
            if let Some(s) = first_bad {
                r.replay = Some(i.replay(Some(name.clone()), Vec::new(), Some(s)));
            }
            r
        }
    }
}

fn leaders(v: &[Elected]) -> usize {
    v.iter().filter(|&&e| e == Elected::Leader).count()
}

/// All give up, or exactly one leader and everyone else a follower.
pub fn election_is_sound(v: &[Elected]) -> bool {
    v.iter().all(|&e| e == Elected::GiveUp) || (leaders(v) == 1 && !v.contains(&Elected::GiveUp))
}

/// Success probability and zero-error check of leader election.
pub fn zqle_stats(spec: &CampaignSpec) -> Result<Report> {
    let inst = instances(spec, false)?;
    let records: Vec<Record> = inst.par_iter().map(|i| zqle_record(spec, i)).collect();
    Ok(Report::new("zqle_stats", records, BTreeMap::new()))
}

fn zqle_record(spec: &CampaignSpec, i: &Instance) -> Record {
    let mut r = i.blank("zqle_stats");
    let n = i.graph.n();
    let bound = single_heads_probability(n);
    let z = match zqle(i.upper_bound) {
        Ok(z) => z,
        Err(e) => return fail_record(r, e),
    };
    let rt = i.runtime();
    match spec.mode {
        Mode::Branch => match zqle_distribution(&rt, &z) {
            Ok((d, m)) => {
                let (observed, mass, bad) = check_law(&d, |o| election_is_sound(o));
                let success: f64 = d.iter().filter(|(o, _)| leaders(o) == 1).map(|(_, w)| w.probability).sum();
                r.expected = json!({ "success_lower_bound": bound });
                r.detail = Some(format!("success probability {success:.12}"));
                r.observed = observed;
                r.mass = mass;
                r.branches = m.branches;
                r.rounds = m.rounds;
                r.cbits = m.cbits;
                r.qubits = m.qubits;
                r.pass = bad.is_none() && (mass - 1.0).abs() <= spec.tol && success >= bound - spec.tol;
                if let Some(w) = bad {
                    r.replay = Some(i.replay(None, w, None));
                }
                r
            }
            Err(e) => fail_record(r, e),
        },
        Mode::Sample { seed, trials } => {
            let mut counts = BTreeMap::new();
            let mut first_bad = None;
            let mut wins = 0usize;
            for t in 0..trials {
                let s = lane_seed(seed, t);
                match zqle_sample(&rt, &z, s) {
                    Ok((o, m)) => {
                        if first_bad.is_none() && !election_is_sound(&o) {
                            first_bad = Some(s);
                        }
                        wins += (leaders(&o) == 1) as usize;
                        r.rounds = r.rounds.max(m.rounds);
                        r.cbits = r.cbits.max(m.cbits);
                        r.qubits = r.qubits.max(m.qubits);
                        *counts.entry(o).or_insert(0) += 1;
                    }
                    Err(e) => return fail_record(r, e),
                }
            }
            let freq = wins as f64 / trials as f64;
            let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
            r.expected = json!({ "success_lower_bound": bound, "slack": 5.0 * sigma });
            r.detail = Some(format!("success frequency {freq:.6}"));
            r.branches = trials as u64;
            r.mass = 1.0;
            r.observed = frequencies(counts, trials);
            r.pass = first_bad.is_none() && freq >= bound - 5.0 * sigma;
            if let Some(s) = first_bad {
                r.replay = Some(i.replay(None, Vec::new(), Some(s)));
            }
            r
        }
    }
}

/// Success probability recorded in a ZQLE record's detail.
pub fn zqle_success(r: &Record) -> Option<f64> {
    r.detail.as_deref()?.rsplit(' ').next()?.parse().ok()
}

/// One row of the round meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterRow {
    pub algorithm: String,
    pub n: usize,
    pub upper_bound: usize,
    pub rounds: u32,
    pub cbits: u64,
    pub qubits: u64,
}

/// Least-squares line through `(x, y)` and the largest absolute residual.
pub fn affine_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let k = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let den = k * sxx - sx * sx;
    let a = if den == 0.0 { 0.0 } else { (k * sxy - sx * sy) / den };
    let b = (sy - a * sx) / k;
    let res = points.iter().map(|p| (p.1 - (a * p.0 + b)).abs()).fold(0.0, f64::max);
    (a, b, res)
}

/// Measures `Q_{h,m}` on ring(2) for every guess and `N ∈ bounds`, and at
/// the correct guess on ring(n) with `N = n` for `n ∈ rings`. Every lane
/// must halt at exactly `round_budget(N)`. Also meters `T₀` on rings.
pub fn meter_rounds(bounds: &[usize], rings: &[usize]) -> Result<Report> {
    let mut jobs: Vec<(usize, usize, usize, usize, Vec<bool>)> = Vec::new();
    for &nb in bounds {
        for (h, m) in guesses(nb) {
            for x in all_inputs(2) {
                jobs.push((2, nb, h, m, x));
            }
        }
    }
    for &n in rings {
        let x: Vec<bool> = (0..n).map(|v| v == 0).collect();
        jobs.push((n, n, 1, n, x));
    }
    let rows: Vec<Result<(Record, MeterRow)>> = jobs
        .par_iter()
        .map(|(n, nb, h, m, x)| {
            let g = anonq_core::graph::ring(*n);
            let rt = Runtime::new(&g).upper_bound(*nb);
            let q = Qhm::new(*h, *m)?;
            let (_, meter) = lane_distribution(&rt, &q, x)?;
            let inst = Instance {
                graph_id: format!("ring({n})"),
                numbering: 0,
                graph: g.clone(),
                x: x.clone(),
                upper_bound: *nb,
            };
            let mut r = inst.blank("meter_rounds");
            r.variant = Some(format!("{h},{m}"));
            r.expected = json!({ "rounds": round_budget(*nb) });
            r.rounds = meter.rounds;
            r.cbits = meter.cbits;
            r.qubits = meter.qubits;
            r.branches = meter.branches;
            r.mass = 1.0;
            r.pass = meter.rounds == round_budget(*nb);
            Ok((
                r,
                MeterRow {
                    algorithm: "q_hm".into(),
                    n: *n,
                    upper_bound: *nb,
                    rounds: meter.rounds,
                    cbits: meter.cbits,
                    qubits: meter.qubits,
                },
            ))
        })
        .collect();
    let mut records = Vec::new();
    let mut table = Vec::new();
    for row in rows {
        let (r, m) = row?;
        records.push(r);
        table.push(m);
    }
    let points: Vec<(f64, f64)> = table.iter().map(|m| (m.upper_bound as f64, m.rounds as f64)).collect();
    let (slope, intercept, residual) = affine_fit(&points);
    for &n in rings {
        let g = anonq_core::graph::ring(n);
        let rt = Runtime::new(&g).upper_bound(n);
        let x: Vec<bool> = (0..n).map(|v| v == 0).collect();
        let run = rt.sample(&anonq_core::classical::Solo(anonq_core::classical::T0Program { delta: n }), &x, 0)?;
        let inst = Instance {
            graph_id: format!("ring({n})"),
            numbering: 0,
            graph: g.clone(),
            x,
            upper_bound: n,
        };
        let mut r = inst.blank("meter_rounds");
        r.variant = Some("t0".into());
        r.expected = json!({ "rounds_at_most": n + 1 });
        r.rounds = run.transcript.rounds;
        r.cbits = run.transcript.cbits;
        r.mass = 1.0;
        r.pass = run.transcript.rounds as usize <= n + 1;
        table.push(MeterRow {
            algorithm: "t0".into(),
            n,
            upper_bound: n,
            rounds: run.transcript.rounds,
            cbits: run.transcript.cbits,
            qubits: 0,
        });
        records.push(r);
    }
    let mut extra = BTreeMap::new();
    extra.insert("fit".into(), json!({ "slope": slope, "intercept": intercept, "max_residual": residual }));
    extra.insert("table".into(), json!(table));
    extra.insert(
        "qsym_stages".into(),
        json!((1..=8).map(|k| json!({ "k": k, "stages": stage_count(k), "ceil_log2": ceil_log2_stages(k) })).collect::<Vec<_>>()),
    );
    Ok(Report::new("meter_rounds", records, extra))
}

/// Builds `W_h` for `h ≤ h_max` and checks unitarity and the vanishing
/// constant-string amplitudes.
pub fn selftest_wunitary(h_max: usize) -> Report {
    let records = (0..=h_max)
        .map(|h| {
            let mut r = Record::named("selftest_wunitary");
            r.variant = Some(format!("h={h}"));
            r.expected = json!({ "max_constant_amplitude": 1e-9, "unitarity_defect": 1e-9 });
            r.mass = 1.0;
            match w_matrix(h) {
                Ok(m) => {
                    let defect = unitarity_defect(&m);
                    let worst = if h >= 2 {
                        ghz_constant_amplitudes(&m, h).iter().copied().fold(0.0, f64::max)
                    } else {
                        0.0
                    };
                    r.observed = vec![(json!({ "max_constant_amplitude": worst, "unitarity_defect": defect }), 1.0)];
                    r.pass = defect <= 1e-9 && worst <= 1e-9;
                }
                Err(e) => r.detail = Some(e.to_string()),
            }
            r
        })
        .collect();
    Report::new("selftest_wunitary", records, BTreeMap::new())
}
