use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sce_ntt::phaseclk::{assign_phases, check_hold_safe, GateGraph, Method};
use sce_ntt::pipesim::{
    apply_output_permutation, derive_output_permutation, run_pipeline, table4_report, PipelineConfig, SimSpec,
};
use sce_ntt::reference::{dft_bruteforce, ntt_ct};
use sce_ntt::scale::{big_ntt_cycles, ckks_security_check, keyswitch_estimate, KeySwitchParams, DEFAULT_FLUSH};
use sce_ntt::{Clock, CostReport, ModulusContext, Polynomial};

#[derive(Parser)]
#[command(name = "sce-ntt", version, about = "Cycle-accurate NTT pipeline model and cost calculator")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "SCE_NTT_SEED", default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the pipeline against the reference transforms.
    Verify {
        #[command(subcommand)]
        what: VerifyCmd,
    },
    /// Run the cycle-accurate simulator.
    Sim {
        #[command(subcommand)]
        what: SimCmd,
    },
    /// Clock-phase assignment for gate netlists.
    Phase {
        #[command(subcommand)]
        what: PhaseCmd,
    },
    /// Latency, cycle and throughput reports.
    Cost {
        #[command(subcommand)]
        what: CostCmd,
    },
    /// Parameter checks.
    Params {
        #[command(subcommand)]
        what: ParamsCmd,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    Ntt {
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 2_013_265_921)]
        q: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Worker threads (0 = available parallelism).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, value_enum, default_value_t = Oracle::Ct)]
        oracle: Oracle,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Oracle {
    /// O(N^2) direct evaluation.
    Brute,
    /// Iterative Cooley-Tukey.
    Ct,
}

#[derive(Subcommand)]
enum SimCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the event trace as newline-delimited JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the latency report (format from the extension: .json or .csv).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        fmt: FormatArg,
    },
}

#[derive(Subcommand)]
enum PhaseCmd {
    Assign {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "lp_relax_round")]
        method: Method,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum CostCmd {
    /// Large NTT from 128-point units.
    BigNtt {
        #[arg(long, default_value_t = 1 << 14)]
        n_big: usize,
        #[arg(long, default_value_t = 1)]
        units: usize,
        #[arg(long, default_value_t = DEFAULT_FLUSH)]
        flush: u64,
        #[command(flatten)]
        clock: ClockArgs,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Key-switch throughput.
    Keyswitch {
        #[arg(long, default_value_t = 1 << 14)]
        n: usize,
        /// Number of RNS limbs (L + 1).
        #[arg(long, default_value_t = 8)]
        limbs: u64,
        #[command(flatten)]
        clock: ClockArgs,
        #[command(flatten)]
        fmt: FormatArg,
    },
    /// Headline latency and throughput of the 128-point pipeline.
    Table4 {
        #[command(flatten)]
        fmt: FormatArg,
    },
}

#[derive(Subcommand)]
enum ParamsCmd {
    /// Ring dimension bound for CKKS security.
    Check {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        logpql: f64,
    },
}

#[derive(Args)]
struct ClockArgs {
    #[arg(long, conflicts_with = "clock_ghz")]
    clock_ps: Option<f64>,
    #[arg(long)]
    clock_ghz: Option<f64>,
}

impl ClockArgs {
    fn clock(&self) -> Clock {
        match (self.clock_ps, self.clock_ghz) {
            (Some(ps), _) => Clock::from_period_ps(ps),
            (None, Some(g)) => Clock::from_ghz(g),
            _ => Clock::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct FormatArg {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

/// Failure carrying its exit code: 1 for a failed check, 2 for bad usage.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    detail: serde_json::Value,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self { code: 2, kind: "usage", message: message.to_string(), detail: serde_json::Value::Null }
    }

    fn check(kind: &'static str, message: impl ToString, detail: serde_json::Value) -> Self {
        Self { code: 1, kind, message: message.to_string(), detail }
    }
}

type CmdResult = Result<(), Failure>;

fn render(report: &CostReport, format: Format) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    }
}

fn print(s: &str) -> CmdResult {
    io::stdout().write_all(s.as_bytes()).map_err(Failure::usage)
}

fn verify_ntt(n: usize, q: u64, cases: usize, threads: usize, oracle: Oracle, seed: u64) -> CmdResult {
    let ctx = ModulusContext::with_defaults(q, n).map_err(Failure::usage)?;
    let cfg = PipelineConfig::hardware(n);
    let perm = derive_output_permutation(&ctx, &cfg).map_err(|e| Failure::check("permutation", e, json!(null)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Polynomial> = (0..cases).map(|_| Polynomial::random(&ctx, &mut rng)).collect();
    let workers = match threads {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        t => t,
    }
    .clamp(1, cases.max(1));
    let chunk = cases.div_ceil(workers).max(1);

    // each worker streams its chunk back to back through its own pipeline
    let results: Vec<Result<Vec<usize>, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .chunks(chunk)
            .enumerate()
            .map(|(w, part)| {
                let (ctx, cfg, perm) = (&ctx, &cfg, &perm);
                s.spawn(move || {
                    let run = run_pipeline(part, ctx, cfg).map_err(|e| e.to_string())?;
                    let mut bad = Vec::new();
                    for (i, (x, y)) in part.iter().zip(&run.outputs).enumerate() {
                        let want = match oracle {
                            Oracle::Brute => dft_bruteforce(x, ctx),
                            Oracle::Ct => ntt_ct(x, ctx),
                        }
                        .map_err(|e| e.to_string())?;
                        if apply_output_permutation(y, perm) != want {
                            bad.push(w * chunk + i);
                        }
                    }
                    Ok(bad)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut mismatches = Vec::new();
    for r in results {
        mismatches.extend(r.map_err(|e| Failure::check("simulation", e, json!(null)))?);
    }
    let summary = json!({ "n": n, "q": q, "cases": cases, "seed": seed, "mismatches": mismatches.len() });
    if mismatches.is_empty() {
        print(&format!("{summary}\n"))
    } else {
        mismatches.truncate(20);
        Err(Failure::check("mismatch", "pipeline output differs from the reference", json!({ "first_cases": mismatches, "summary": summary })))
    }
}

fn sim_run(config: PathBuf, trace: Option<PathBuf>, report: Option<PathBuf>, format: Format, seed: u64) -> CmdResult {
    let text = fs::read_to_string(&config).map_err(|e| Failure::usage(format!("{}: {e}", config.display())))?;
    let spec = SimSpec::parse(&text).map_err(Failure::usage)?;
    let ctx = spec.context().map_err(Failure::usage)?;
    let mut cfg = spec.pipeline.clone();
    cfg.trace = trace.is_some();
    let seed = spec.seed.unwrap_or(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Polynomial> = (0..spec.transforms).map(|_| Polynomial::random(&ctx, &mut rng)).collect();
    let run = run_pipeline(&inputs, &ctx, &cfg).map_err(|e| Failure::check("schedule", e, json!(null)))?;
    let perm = derive_output_permutation(&ctx, &cfg).map_err(|e| Failure::check("permutation", e, json!(null)))?;

    if let (Some(path), Some(t)) = (&trace, &run.trace) {
        let f = fs::File::create(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        t.write_ndjson(&mut w).and_then(|_| w.flush()).map_err(Failure::usage)?;
    }
    let bad: Vec<usize> = inputs
        .iter()
        .zip(&run.outputs)
        .enumerate()
        .filter(|(_, (x, y))| ntt_ct(x, &ctx).map(|w| w != apply_output_permutation(y, &perm)).unwrap_or(true))
        .map(|(i, _)| i)
        .collect();

    let mut cost = run.report.to_cost_report();
    cost = cost
        .row("transforms", spec.transforms as f64, "count", spec.transforms.to_string())
        .row("simulated_cycles", run.total_cycles as f64, "cycles", format!("{} cycles", run.total_cycles))
        .row(
            "measured_latency",
            run.measured_latency.unwrap_or(0) as f64,
            "cycles",
            format!("{} cycles", run.measured_latency.unwrap_or(0)),
        )
        .row("mismatches", bad.len() as f64, "count", bad.len().to_string());
    if let Some(path) = &report {
        let body = if path.extension().is_some_and(|e| e == "csv") { cost.to_csv() } else { cost.to_json() };
        fs::write(path, body).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    print(&render(&cost, format))?;
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::check("mismatch", "simulated outputs differ from the reference", json!({ "transforms": bad })))
    }
}

fn phase_assign(graph: PathBuf, k: usize, method: Method, format: Format) -> CmdResult {
    let text = fs::read_to_string(&graph).map_err(|e| Failure::usage(format!("{}: {e}", graph.display())))?;
    let g = GateGraph::parse(&text).map_err(Failure::usage)?;
    let a = assign_phases(&g, k, method).map_err(Failure::usage)?;
    let hold = check_hold_safe(&g, &a);
    let baseline = assign_phases(&g, 1, method).map_err(Failure::usage)?.total;
    let saved = if baseline == 0 { 0.0 } else { 100.0 * (baseline - a.total.min(baseline)) as f64 / baseline as f64 };
    let out = match format {
        Format::Csv => a.to_csv(&g),
        Format::Json => {
            let gates: Vec<_> = g
                .gates()
                .iter()
                .enumerate()
                .map(|(i, gate)| json!({ "gate": gate.name, "kind": gate.kind, "slot": a.slots[i], "phase": a.phase(i) }))
                .collect();
            let edges: Vec<_> = g
                .edges()
                .iter()
                .zip(&a.dff)
                .map(|(&(u, v), d)| json!({ "src": g.gates()[u].name, "dst": g.gates()[v].name, "dff": d }))
                .collect();
            let v = json!({
                "k": k, "method": format!("{method:?}"), "total_dff": a.total, "k1_dff": baseline,
                "saved_percent": saved, "hold_violations": hold.violations, "gates": gates, "edges": edges,
            });
            serde_json::to_string_pretty(&v).unwrap() + "\n"
        }
        Format::Text => format!(
            "gates {}\nedges {}\nk {k}\ntotal DFFs {}\nDFFs at k=1 {baseline}\nsaved {saved:.1}%\nhold violations {}\n",
            g.len(),
            g.edges().len(),
            a.total,
            hold.violations.len()
        ),
    };
    print(&out)?;
    if hold.is_safe() {
        Ok(())
    } else {
        Err(Failure::check("hold", "assignment has hold violations", json!(hold.violations)))
    }
}

fn run(cli: Cli) -> CmdResult {
    let seed = cli.seed;
    match cli.cmd {
        Command::Verify { what: VerifyCmd::Ntt { n, q, cases, threads, oracle } } => {
            verify_ntt(n, q, cases, threads, oracle, seed)
        }
        Command::Sim { what: SimCmd::Run { config, trace, report, fmt } } => {
            sim_run(config, trace, report, fmt.format, seed)
        }
        Command::Phase { what: PhaseCmd::Assign { graph, k, method, format } } => phase_assign(graph, k, method, format),
        Command::Cost { what } => {
            let (report, format) = match what {
                CostCmd::BigNtt { n_big, units, flush, clock, fmt } => {
                    let c = clock.clock();
                    let cost = big_ntt_cycles(n_big, units, flush, c).map_err(Failure::usage)?;
                    (cost.to_cost_report(c), fmt.format)
                }
                CostCmd::Keyswitch { n, limbs, clock, fmt } => {
                    let p = KeySwitchParams { n, limbs, clock: clock.clock() };
                    (keyswitch_estimate(&p).map_err(Failure::usage)?.1, fmt.format)
                }
                CostCmd::Table4 { fmt } => (table4_report(), fmt.format),
            };
            print(&render(&report, format))
        }
        Command::Params { what: ParamsCmd::Check { n, lambda, logpql } } => {
            if n == 0 || lambda <= 0.0 || logpql < 0.0 {
                return Err(Failure::usage("n and lambda must be positive, logpql non-negative"));
            }
            let s = ckks_security_check(n, lambda, logpql);
            let v = json!({ "n": n, "lambda": lambda, "log_pql": logpql, "required": s.required, "margin": s.margin, "satisfied": s.satisfied });
            print(&format!("{v}\n"))?;
            if s.satisfied {
                Ok(())
            } else {
                Err(Failure::check("insecure", "ring dimension below the required bound", v))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let v = json!({ "error": f.kind, "message": f.message, "detail": f.detail });
            eprintln!("{v}");
            ExitCode::from(f.code)
        }
    }
}
