use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anonq::format::serialize_graph;
use anonq::harness::{
    meter_rounds, replay_lemma1, replay_qsv, replay_qsym, selftest_wunitary, standard_tables, verify_classical, verify_lemma1,
    verify_qsv, verify_qsym, verify_scaledown, verify_symmetric_guess, zqle_stats, Bounds, CampaignSpec, GraphSource, Mode, Numberings, Replay, Report,
};
use anonq_core::graph::{enumerate_graphs, DEFAULT_ENUMERATION_CAP};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "anonq", version, about = "Anonymous quantum network algorithms: verification campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exactness campaigns.
    Verify {
        #[arg(value_enum)]
        what: Verify,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
    /// Leader election statistics.
    Zqle {
        #[arg(value_enum)]
        what: ZqleWhat,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
    /// Round and bit counts of Q_{h,m} and T0.
    Meter {
        /// Upper bounds N metered on ring(2).
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        bounds: Vec<usize>,
        /// Ring sizes metered with N = n.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        rings: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graph utilities.
    Graphs {
        #[command(subcommand)]
        what: GraphsCmd,
    },
    /// Built-in self-tests.
    Selftest {
        #[command(subcommand)]
        what: SelftestCmd,
    },
    /// Re-executes a replay handle (a JSON object as found in a record).
    Replay {
        #[arg(value_enum)]
        campaign: ReplayKind,
        /// File holding the handle, or a whole record.
        handle: PathBuf,
        #[arg(long)]
        corrupt_w: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Verify {
    Qsv,
    Lemma1,
    Qsym,
    Scaledown,
    SymmetricGuess,
    Classical,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZqleWhat {
    Stats,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayKind {
    Qsv,
    Lemma1,
    Qsym,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ModeArg {
    Branch,
    Sample,
}

#[derive(Subcommand)]
enum GraphsCmd {
    /// Writes every strongly connected digraph on n nodes.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        max_mult: usize,
        /// Output directory (one file per graph); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SelftestCmd {
    /// Checks W_h for h up to the bound.
    Wunitary {
        #[arg(long, default_value_t = 8)]
        h_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// Graph sizes for enumerated graphs.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    n: Vec<usize>,
    /// Named fixtures such as `ring(4)` or `example1a`; replaces enumeration.
    #[arg(long)]
    fixture: Vec<String>,
    /// Graph files in the text format; replaces enumeration.
    #[arg(long)]
    graph_file: Vec<PathBuf>,
    /// Draw this many random enumerated graphs per n instead of all.
    #[arg(long)]
    random_graphs: Option<usize>,
    /// One enumerated graph per isomorphism class.
    #[arg(long)]
    classes: bool,
    #[arg(long, default_value_t = 1)]
    max_mult: usize,
    /// Fixed upper bound N; default is N = n.
    #[arg(long)]
    upper_bound: Option<usize>,
    /// Offsets d with N = n + d; ignored with --upper-bound.
    #[arg(long, value_delimiter = ',')]
    offsets: Vec<usize>,
    /// Sample this many port numberings per graph besides its own.
    #[arg(long)]
    numberings: Option<usize>,
    /// Every port numbering of fixtures, graph files and class representatives,
    /// not just their own.
    #[arg(long)]
    all_numberings: bool,
    #[arg(long, value_enum, default_value = "branch")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Largest threshold k of the QSYM tables.
    #[arg(long, default_value_t = 3)]
    k_max: usize,
    /// Replace W_h by the identity (negative control).
    #[arg(long)]
    corrupt_w: bool,
    /// JSON-lines report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CampaignArgs {
    fn spec(&self) -> CampaignSpec {
        let graphs = if !self.fixture.is_empty() {
            GraphSource::Fixtures(self.fixture.clone())
        } else if !self.graph_file.is_empty() {
            GraphSource::Files(self.graph_file.clone())
        } else if let Some(count) = self.random_graphs {
            GraphSource::Random {
                count,
                max_multiplicity: self.max_mult,
                seed: self.seed,
            }
        } else if self.classes {
            GraphSource::Classes {
                max_multiplicity: self.max_mult,
            }
        } else {
            GraphSource::Enumerate {
                max_multiplicity: self.max_mult,
            }
        };
        let mut spec = CampaignSpec::new(self.n.clone(), graphs);
        spec.bounds = match self.upper_bound {
            Some(b) => Bounds::Fixed(b),
            None if self.offsets.is_empty() => Bounds::Offsets(vec![0]),
            None => Bounds::Offsets(self.offsets.clone()),
        };
        let named = !self.fixture.is_empty() || !self.graph_file.is_empty() || self.classes;
        spec.numberings = match self.numberings {
            Some(count) => Numberings::Sample { count, seed: self.seed },
            None if named && !self.all_numberings => Numberings::Given,
            None => Numberings::All { cap: DEFAULT_ENUMERATION_CAP },
        };
        spec.mode = match self.mode {
            ModeArg::Branch => Mode::Branch,
            ModeArg::Sample => Mode::Sample {
                seed: self.seed,
                trials: self.trials,
            },
        };
        spec.corrupt_w = self.corrupt_w;
        spec.tables = standard_tables(self.k_max);
        spec
    }
}

fn emit(report: &Report, out: &Option<PathBuf>) -> Result<bool> {
    match out {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            report.write_jsonl(BufWriter::new(f))?;
        }
        None => report.write_jsonl(io::stdout().lock())?,
    }
    let s = &report.summary;
    eprintln!(
        "{}: {} instances, {} passed, {} failed; max rounds {}, max cbits {}, max qubits {}",
        s.campaign, s.instances, s.passed, s.failed, s.max_rounds, s.max_cbits, s.max_qubits
    );
    for (k, v) in &s.extra {
        if k != "table" {
            eprintln!("  {k}: {v}");
        }
    }
    Ok(report.ok())
}

fn load_handle(p: &PathBuf) -> Result<Replay> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let v: serde_json::Value = serde_json::from_str(text.trim())?;
    let v = match v.get("replay") {
        Some(h) => h.clone(),
        None => v,
    };
    if v.is_null() {
        bail!("record carries no replay handle");
    }
    Ok(serde_json::from_value(v)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify { what, campaign } => {
            let spec = campaign.spec();
            let report = match what {
                Verify::Qsv => verify_qsv(&spec)?,
                Verify::Lemma1 => verify_lemma1(&spec)?,
                Verify::Qsym => verify_qsym(&spec)?,
                Verify::Scaledown => verify_scaledown(&spec)?,
                Verify::SymmetricGuess => verify_symmetric_guess(&spec)?,
                Verify::Classical => verify_classical(&spec)?,
            };
            emit(&report, &campaign.out)
        }
        Command::Zqle {
            what: ZqleWhat::Stats,
            campaign,
        } => emit(&zqle_stats(&campaign.spec())?, &campaign.out),
        Command::Meter { bounds, rings, out } => emit(&meter_rounds(&bounds, &rings)?, &out),
        Command::Graphs {
            what: GraphsCmd::Enumerate { n, max_mult, out },
        } => {
            let graphs = enumerate_graphs(n, max_mult)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let mut count = 0;
                    for (i, g) in graphs.enumerate() {
                        std::fs::write(dir.join(format!("sc{n}-{i}.graph")), serialize_graph(&g))?;
                        count += 1;
                    }
                    eprintln!("wrote {count} graphs to {}", dir.display());
                }
                None => {
                    let mut w = io::stdout().lock();
                    for (i, g) in graphs.enumerate() {
                        writeln!(w, "# sc{n}#{i}\n{}", serialize_graph(&g))?;
                    }
                }
            }
            Ok(true)
        }
        Command::Selftest {
            what: SelftestCmd::Wunitary { h_max, out },
        } => emit(&selftest_wunitary(h_max), &out),
        Command::Replay {
            campaign,
            handle,
            corrupt_w,
        } => {
            let h = load_handle(&handle)?;
            let outputs = match campaign {
                ReplayKind::Qsv => serde_json::to_value(replay_qsv(&h, corrupt_w)?)?,
                ReplayKind::Lemma1 => serde_json::to_value(
                    replay_lemma1(&h)?.iter().map(|o| o.verdict()).collect::<Vec<_>>(),
                )?,
                ReplayKind::Qsym => serde_json::to_value(replay_qsym(&h)?)?,
            };
            println!("{outputs}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
