//! Cycle-accurate model of the pipelined NTT.
//!
//! One processing element per stage. Each PE owns two coefficient banks used
//! ping-pong, a pair of circular twiddle memories (TW and its Shoup
//! companion), an event-driven access controller, a fixed read-path delay
//! and a pipelined butterfly unit. PEs are chained output to input, and a
//! global cycle loop ticks them in order.
//!
//! Timing convention: a pair entering PE k at cycle t is written that cycle.
//! The bank is read from the cycle after it fills; a read word spends
//! `l_mem - n/2` cycles in the read path and `l_bu` cycles in the butterfly
//! unit, so the first output of a PE leaves `l_mem + l_bu` cycles after its
//! first input arrived.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::mac::GatedMac;
use crate::memsim::{mask_of, BankMode, CoefficientBank, Csrm, MemError};
use crate::modmath::{IndexOrder, ModError, ModulusContext, Polynomial};
use crate::reference::{twiddle_schedule, Butterfly, RefError};
use crate::report::{Clock, CostReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipeError {
    #[error("input {index} does not match the context (length {len}, n = {n}, natural order, reduced)")]
    ContextMismatch { index: usize, len: usize, n: usize },
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("schedule violation at cycle {cycle}, PE {pe}: {detail}")]
    ScheduleViolation { cycle: u64, pe: usize, detail: String },
    #[error("output ordering is not a permutation")]
    NotAPermutation,
    #[error(transparent)]
    Ref(#[from] RefError),
    #[error(transparent)]
    Mod(#[from] ModError),
}

/// Per-pipeline knobs. Latencies are in cycles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Butterfly-unit depth.
    pub l_bu: usize,
    /// Memory latency per PE: bank fill time plus read path.
    pub l_mem: Vec<usize>,
    pub clock: Clock,
    /// Idle cycles between dependent batches.
    pub flush_cycles: u64,
    /// Idle input cycles inserted between consecutive transforms.
    pub gap: usize,
    /// Raise memory anomalies instead of recording them.
    pub strict: bool,
    pub trace: bool,
    pub record_butterflies: bool,
}

impl PipelineConfig {
    /// Synthesized design: 79-cycle butterfly units and 69-cycle memories at
    /// n = 128 (the read path adds 5 cycles past the 64-cycle fill).
    pub fn hardware(n: usize) -> Self {
        Self::uniform(n, 79, n / 2 + 5)
    }

    /// Short latencies for desk-scale runs: memory is exactly the fill time.
    pub fn desk(n: usize) -> Self {
        Self::uniform(n, 5, n / 2)
    }

    pub fn uniform(n: usize, l_bu: usize, l_mem: usize) -> Self {
        Self {
            l_bu,
            l_mem: vec![l_mem; n.trailing_zeros() as usize],
            clock: Clock::default(),
            flush_cycles: 200,
            gap: 0,
            strict: true,
            trace: false,
            record_butterflies: false,
        }
    }

    pub fn stages(&self) -> usize {
        self.l_mem.len()
    }

    fn validate(&self, n: usize) -> Result<(), PipeError> {
        if n < 4 || !n.is_power_of_two() {
            return Err(PipeError::Config(format!("n = {n} must be a power of two >= 4")));
        }
        if self.l_mem.len() != n.trailing_zeros() as usize {
            return Err(PipeError::Config(format!(
                "{} memory latencies given for {} stages",
                self.l_mem.len(),
                n.trailing_zeros()
            )));
        }
        if let Some((pe, &l)) = self.l_mem.iter().enumerate().find(|(_, &l)| l < n / 2) {
            return Err(PipeError::Config(format!(
                "PE {pe}: memory latency {l} is shorter than the {}-cycle bank fill",
                n / 2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Twiddle memory load: [position, tw, tw'].
    TwLoad,
    /// Pair presented on DI0/DI1 with VI0/VI1 high: [di0, di1].
    Input,
    /// Word latched: [bank, queue, word].
    Write,
    /// Word popped: [bank, queue, word].
    Read,
    /// Banks swap roles: [bank now reading].
    Flip,
    /// Butterfly issued: [a, b, tw, tw'].
    Butterfly,
    /// Valid pair leaving the PE: [do0, do1].
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub pe: usize,
    pub event: EventKind,
    pub value: Vec<u128>,
}

/// Append-only, cycle-ordered event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineTrace {
    records: Vec<TraceRecord>,
}

impl PipelineTrace {
    pub fn push(&mut self, cycle: u64, pe: usize, event: EventKind, value: Vec<u128>) {
        debug_assert!(self.records.last().is_none_or(|r| r.cycle <= cycle));
        self.records.push(TraceRecord { cycle, pe, event, value });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line: {"cycle","pe","event","value"}.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct BuOp {
    a: u64,
    b: u64,
    tw: u64,
    twp: u128,
}

/// Pipelined butterfly: (a + b*tw, a - b*tw) mod q, `depth` cycles later.
#[derive(Debug, Clone)]
pub struct ButterflyUnit {
    pipe: VecDeque<Option<(u64, u64)>>,
}

impl ButterflyUnit {
    pub fn new(depth: usize) -> Self {
        Self { pipe: std::iter::repeat_n(None, depth).collect() }
    }

    pub fn depth(&self) -> usize {
        self.pipe.len()
    }

    pub fn compute(ctx: &ModulusContext, a: u64, b: u64, tw: u64, twp: u128) -> (u64, u64) {
        let t = ctx.shoup_mul(b, tw, twp);
        (ctx.mod_add(a, t), ctx.mod_sub(a, t))
    }

    fn tick(&mut self, ctx: &ModulusContext, op: Option<BuOp>) -> Option<(u64, u64)> {
        self.pipe.push_back(op.map(|o| Self::compute(ctx, o.a, o.b, o.tw, o.twp)));
        self.pipe.pop_front().flatten()
    }

    pub fn in_flight(&self) -> usize {
        self.pipe.iter().filter(|s| s.is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct ProcessingElement {
    index: usize,
    banks: [CoefficientBank; 2],
    writing: usize,
    reading: Option<usize>,
    tw: Csrm,
    twp: Csrm,
    mac: GatedMac,
    read_path: VecDeque<Option<BuOp>>,
    bu: ButterflyUnit,
}

struct TickCtx<'a> {
    ctx: &'a ModulusContext,
    cycle: u64,
    trace: Option<&'a mut PipelineTrace>,
    butterflies: Option<&'a mut Vec<Butterfly>>,
}

impl ProcessingElement {
    fn new(index: usize, ctx: &ModulusContext, config: &PipelineConfig) -> Result<Self, PipeError> {
        let n = ctx.n();
        let mem = |e: MemError| PipeError::ScheduleViolation { cycle: 0, pe: index, detail: e.to_string() };
        let mut banks = [
            CoefficientBank::new(n, config.strict).map_err(mem)?,
            CoefficientBank::new(n, config.strict).map_err(mem)?,
        ];
        banks[1].set_mode(BankMode::Writing);
        let sched = twiddle_schedule(index, ctx)?;
        let mut tw = Csrm::new(sched.len(), ctx.width());
        let mut twp = Csrm::new(sched.len(), ctx.beta());
        tw.load_all(sched.iter().map(|&(w, _)| u128::from(w))).map_err(mem)?;
        twp.load_all(sched.iter().map(|&(_, p)| p)).map_err(mem)?;
        Ok(Self {
            index,
            banks,
            writing: 0,
            reading: None,
            tw,
            twp,
            mac: GatedMac::new(n),
            read_path: std::iter::repeat_n(None, config.l_mem[index] - n / 2).collect(),
            bu: ButterflyUnit::new(config.l_bu),
        })
    }

    fn violation(&self, cycle: u64, detail: impl Into<String>) -> PipeError {
        PipeError::ScheduleViolation { cycle, pe: self.index, detail: detail.into() }
    }

    fn tick(&mut self, tc: &mut TickCtx<'_>, input: Option<(u64, u64)>) -> Result<Option<(u64, u64)>, PipeError> {
        let cycle = tc.cycle;
        let mut issued = None;

        if let Some(rb) = self.reading {
            let (pair, drained) = self.mac.on_read();
            let words = self.banks[rb]
                .tick(mask_of(pair), (None, None))
                .map_err(|e| self.violation(cycle, e.to_string()))?
                .ok_or_else(|| self.violation(cycle, "read produced no pair"))?;
            let tw = self.tw.tick().map_err(|e| self.violation(cycle, e.to_string()))?;
            let twp = self.twp.tick().map_err(|e| self.violation(cycle, e.to_string()))?;
            if let Some(t) = tc.trace.as_deref_mut() {
                t.push(cycle, self.index, EventKind::Read, vec![rb as u128, pair.0 as u128, words.0.into()]);
                t.push(cycle, self.index, EventKind::Read, vec![rb as u128, pair.1 as u128, words.1.into()]);
            }
            issued = Some(BuOp { a: words.0, b: words.1, tw: tw as u64, twp });
            if drained {
                self.reading = None;
            }
        }

        if let Some((d0, d1)) = input {
            let (pair, filled) = self.mac.on_write();
            let wb = self.writing;
            self.banks[wb]
                .tick(mask_of(pair), (Some(d0), Some(d1)))
                .map_err(|e| self.violation(cycle, e.to_string()))?;
            if let Some(t) = tc.trace.as_deref_mut() {
                t.push(cycle, self.index, EventKind::Input, vec![d0.into(), d1.into()]);
                t.push(cycle, self.index, EventKind::Write, vec![wb as u128, pair.0 as u128, d0.into()]);
                t.push(cycle, self.index, EventKind::Write, vec![wb as u128, pair.1 as u128, d1.into()]);
            }
            if filled {
                if self.reading.is_some() {
                    return Err(self.violation(cycle, "bank filled while the other bank is still draining"));
                }
                if !self.banks[wb].is_full() {
                    return Err(self.violation(cycle, "controller wrapped before the bank filled"));
                }
                self.banks[wb].set_mode(BankMode::Reading);
                self.reading = Some(wb);
                self.writing = 1 - wb;
                if !self.banks[self.writing].is_empty() {
                    return Err(self.violation(cycle, "next write bank is not empty"));
                }
                self.banks[self.writing].set_mode(BankMode::Writing);
                if let Some(t) = tc.trace.as_deref_mut() {
                    t.push(cycle, self.index, EventKind::Flip, vec![wb as u128]);
                }
            }
        }

        self.read_path.push_back(issued);
        let to_bu = self.read_path.pop_front().flatten();
        if let Some(op) = to_bu {
            if let Some(b) = tc.butterflies.as_deref_mut() {
                b.push(Butterfly { a: op.a, b: op.b, tw: op.tw });
            }
            if let Some(t) = tc.trace.as_deref_mut() {
                t.push(cycle, self.index, EventKind::Butterfly, vec![op.a.into(), op.b.into(), op.tw.into(), op.twp]);
            }
        }
        let out = self.bu.tick(tc.ctx, to_bu);
        if let (Some((o0, o1)), Some(t)) = (out, tc.trace.as_deref_mut()) {
            t.push(cycle, self.index, EventKind::Output, vec![o0.into(), o1.into()]);
        }
        Ok(out)
    }

    fn busy(&self) -> bool {
        self.reading.is_some()
            || self.banks.iter().any(|b| !b.is_empty())
            || self.read_path.iter().any(Option::is_some)
            || self.bu.in_flight() > 0
    }
}

/// The chained PEs plus the global cycle counter.
#[derive(Debug, Clone)]
pub struct Pipeline {
    ctx: ModulusContext,
    config: PipelineConfig,
    pes: Vec<ProcessingElement>,
    cycle: u64,
    trace: Option<PipelineTrace>,
    butterflies: Option<Vec<Vec<Butterfly>>>,
}

impl Pipeline {
    /// Builds the PEs and loads every twiddle memory.
    pub fn new(ctx: &ModulusContext, config: PipelineConfig) -> Result<Self, PipeError> {
        config.validate(ctx.n())?;
        let pes = (0..config.stages())
            .map(|k| ProcessingElement::new(k, ctx, &config))
            .collect::<Result<Vec<_>, _>>()?;
        let mut trace = config.trace.then(PipelineTrace::default);
        if let Some(t) = trace.as_mut() {
            for (k, sched) in (0..pes.len()).map(|k| (k, twiddle_schedule(k, ctx))) {
                for (pos, (tw, twp)) in sched?.into_iter().enumerate() {
                    t.push(0, k, EventKind::TwLoad, vec![pos as u128, tw.into(), twp]);
                }
            }
        }
        let butterflies = config.record_butterflies.then(|| vec![Vec::new(); pes.len()]);
        Ok(Self { ctx: ctx.clone(), config, pes, cycle: 0, trace, butterflies })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn context(&self) -> &ModulusContext {
        &self.ctx
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Advances every PE by one cycle. `input` is the DI0/DI1 pair with both
    /// valid bits high, or `None` for an idle cycle. Returns the last PE's
    /// valid output pair, if any.
    pub fn tick(&mut self, input: Option<(u64, u64)>) -> Result<Option<(u64, u64)>, PipeError> {
        let mut carry = input;
        for (k, pe) in self.pes.iter_mut().enumerate() {
            let mut tc = TickCtx {
                ctx: &self.ctx,
                cycle: self.cycle,
                trace: self.trace.as_mut(),
                butterflies: self.butterflies.as_mut().map(|b| &mut b[k]),
            };
            carry = pe.tick(&mut tc, carry)?;
        }
        self.cycle += 1;
        Ok(carry)
    }

    /// True while any data is still inside the pipeline.
    pub fn busy(&self) -> bool {
        self.pes.iter().any(ProcessingElement::busy)
    }

    pub fn take_trace(&mut self) -> Option<PipelineTrace> {
        self.trace.take()
    }

    /// Butterflies consumed so far, per PE, in issue order.
    pub fn butterflies(&self) -> Option<&[Vec<Butterfly>]> {
        self.butterflies.as_deref()
    }
}

/// Result of streaming a batch of transforms through the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    /// Raw outputs, one per input, in pipeline order.
    pub outputs: Vec<Polynomial>,
    pub trace: Option<PipelineTrace>,
    /// butterflies[t][k]: the n/2 butterflies PE k issued for transform t.
    pub butterflies: Option<Vec<Vec<Vec<Butterfly>>>>,
    pub report: LatencyReport,
    /// Cycle of the first valid output, counted from the first input.
    pub measured_latency: Option<u64>,
    /// Cycle at which each transform's first output pair appeared.
    pub output_start_cycles: Vec<u64>,
    pub total_cycles: u64,
}

/// Streams `inputs` (natural order) back to back, `config.gap` idle cycles
/// apart, and collects every output.
pub fn run_pipeline(
    inputs: &[Polynomial],
    ctx: &ModulusContext,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipeError> {
    let n = ctx.n();
    for (index, p) in inputs.iter().enumerate() {
        if !p.fits(ctx) || p.order != IndexOrder::Natural {
            return Err(PipeError::ContextMismatch { index, len: p.len(), n });
        }
    }
    let mut pipe = Pipeline::new(ctx, config.clone())?;
    let report = latency_report(n, config);

    let mut feed: VecDeque<Option<(u64, u64)>> = VecDeque::new();
    for (t, p) in inputs.iter().enumerate() {
        if t > 0 {
            feed.extend(std::iter::repeat_n(None, config.gap));
        }
        feed.extend(p.coeffs.chunks(2).map(|c| Some((c[0], c[1]))));
    }
    let budget = feed.len() as u64 + report.total_cycles + n as u64 * 2 + 16;

    let mut outputs = Vec::with_capacity(inputs.len());
    let mut current = Vec::with_capacity(n);
    let mut starts = Vec::with_capacity(inputs.len());
    let mut first = None;
    while outputs.len() < inputs.len() {
        if pipe.cycle() > budget {
            return Err(PipeError::ScheduleViolation {
                cycle: pipe.cycle(),
                pe: config.stages() - 1,
                detail: format!("pipeline stalled with {} of {} outputs", outputs.len(), inputs.len()),
            });
        }
        let cycle = pipe.cycle();
        if let Some((o0, o1)) = pipe.tick(feed.pop_front().flatten())? {
            first.get_or_insert(cycle);
            if current.is_empty() {
                starts.push(cycle);
            }
            current.extend([o0, o1]);
            if current.len() == n {
                outputs.push(Polynomial::with_order(std::mem::take(&mut current), IndexOrder::Pipeline));
            }
        }
    }
    let total_cycles = pipe.cycle();
    let butterflies = pipe.butterflies().map(|per_pe| {
        (0..inputs.len())
            .map(|t| per_pe.iter().map(|b| b[t * n / 2..(t + 1) * n / 2].to_vec()).collect())
            .collect()
    });
    Ok(PipelineRun {
        outputs,
        trace: pipe.take_trace(),
        butterflies,
        report,
        measured_latency: first,
        output_start_cycles: starts,
        total_cycles,
    })
}

/// Maps pipeline output position p to the natural-order frequency index.
///
/// Found by streaming the monomial x through the pipeline: position p then
/// carries omega^r, and r is recovered from the twiddle table.
pub fn derive_output_permutation(ctx: &ModulusContext, config: &PipelineConfig) -> Result<Vec<usize>, PipeError> {
    let n = ctx.n();
    let probe = Polynomial::monomial(n, 1);
    let mut cfg = config.clone();
    cfg.trace = false;
    cfg.record_butterflies = false;
    let run = run_pipeline(std::slice::from_ref(&probe), ctx, &cfg)?;
    let log: HashMap<u64, usize> = ctx.twiddles().iter().enumerate().map(|(e, &w)| (w, e)).collect();
    let perm: Vec<usize> = run.outputs[0]
        .coeffs
        .iter()
        .map(|v| log.get(v).copied().ok_or(PipeError::NotAPermutation))
        .collect::<Result<_, _>>()?;
    let mut seen = vec![false; n];
    for &r in &perm {
        if std::mem::replace(&mut seen[r], true) {
            return Err(PipeError::NotAPermutation);
        }
    }
    Ok(perm)
}

/// Reorders a pipeline-order output into natural order.
pub fn apply_output_permutation(out: &Polynomial, perm: &[usize]) -> Polynomial {
    let mut natural = vec![0; out.len()];
    for (p, &r) in perm.iter().enumerate() {
        natural[r] = out.coeffs[p];
    }
    Polynomial::new(natural)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeLatency {
    pub pe: usize,
    pub l_bu: usize,
    pub l_mem: usize,
    pub total: usize,
}

/// Latency/throughput accounting for one pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub n: usize,
    pub per_pe: Vec<PeLatency>,
    pub total_cycles: u64,
    /// Cycles between successive transform starts in steady state.
    pub initiation_interval: u64,
    pub clock: Clock,
    pub latency_ns: f64,
    pub throughput_per_s: f64,
    /// Cycles to load the largest twiddle memory (PEs load in parallel);
    /// not part of the steady-state figures.
    pub tw_load_cycles: u64,
}

pub fn latency_report(n: usize, config: &PipelineConfig) -> LatencyReport {
    let per_pe: Vec<PeLatency> = config
        .l_mem
        .iter()
        .enumerate()
        .map(|(pe, &l_mem)| PeLatency { pe, l_bu: config.l_bu, l_mem, total: config.l_bu + l_mem })
        .collect();
    let total_cycles = per_pe.iter().map(|p| p.total as u64).sum();
    let ii = n as u64 / 2;
    LatencyReport {
        n,
        total_cycles,
        initiation_interval: ii,
        clock: config.clock,
        latency_ns: config.clock.ns(total_cycles),
        throughput_per_s: config.clock.rate(ii),
        tw_load_cycles: 1 << per_pe.len().saturating_sub(1),
        per_pe,
    }
}

impl LatencyReport {
    pub fn to_cost_report(&self) -> CostReport {
        let mut r = CostReport::new(format!("NTT-{} pipeline latency @ {}", self.n, self.clock.describe()));
        for p in &self.per_pe {
            r = r.row(
                &format!("pe{}_cycles", p.pe),
                p.total as f64,
                "cycles",
                format!("{} cycles (BU {} + memory {})", p.total, p.l_bu, p.l_mem),
            );
        }
        r.row("total_latency", self.total_cycles as f64, "cycles", format!("{} cycles", self.total_cycles))
            .row("latency_ns", self.latency_ns, "ns", format!("{:.2} ns", self.latency_ns))
            .row(
                "initiation_interval",
                self.initiation_interval as f64,
                "cycles",
                format!("{} cycles", self.initiation_interval),
            )
            .row(
                "throughput",
                self.throughput_per_s,
                "NTT/s",
                format!("{:.2}M NTT/s", self.throughput_per_s / 1e6),
            )
            .row("tw_load_cycles", self.tw_load_cycles as f64, "cycles", format!("{} cycles", self.tw_load_cycles))
            .note("twiddle loading happens once before streaming and is excluded from latency and throughput")
    }
}

/// Headline figures of the 128-point design: per-PE and total latency at the
/// 29.4 ps cycle time, throughput at the 34 GHz operating clock.
pub fn table4_report() -> CostReport {
    let cfg = PipelineConfig::hardware(128);
    let lat = latency_report(128, &cfg);
    let fast = latency_report(128, &PipelineConfig { clock: Clock::DESIGN_FREQUENCY, ..cfg.clone() });
    CostReport::new("NTT-128 pipeline, 7 PEs")
        .row("bu_cycles", cfg.l_bu as f64, "cycles", format!("{} cycles", cfg.l_bu))
        .row("memory_cycles", cfg.l_mem[6] as f64, "cycles", format!("{} cycles", cfg.l_mem[6]))
        .row("pe_cycles", lat.per_pe[6].total as f64, "cycles", format!("{} cycles", lat.per_pe[6].total))
        .row("total_latency", lat.total_cycles as f64, "cycles", format!("{} cycles", lat.total_cycles))
        .row("latency_ns", lat.latency_ns, "ns", format!("{:.2} ns @ {}", lat.latency_ns, lat.clock.describe()))
        .row(
            "throughput",
            fast.throughput_per_s,
            "NTT/s",
            format!("{:.2}M NTT/s @ {}", fast.throughput_per_s / 1e6, fast.clock.describe()),
        )
        .row(
            "throughput_at_period",
            lat.throughput_per_s,
            "NTT/s",
            format!("{:.2}M NTT/s @ {}", lat.throughput_per_s / 1e6, lat.clock.describe()),
        )
        .row("tw_load_cycles", lat.tw_load_cycles as f64, "cycles", format!("{} cycles", lat.tw_load_cycles))
        .note("twiddle loading is a one-time preamble and is excluded from latency and throughput")
}

/// Parsed `key = value` simulation file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSpec {
    pub n: usize,
    pub q: u64,
    pub width: u32,
    pub beta: u32,
    pub transforms: usize,
    /// Overrides the caller's seed when present.
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
}

impl SimSpec {
    /// Keys: n, q, width, beta, l_bu, l_mem (one value or a comma list),
    /// clock_ps | clock_ghz, flush, gap, transforms, seed, strict.
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PipeError> {
        let mut kv: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipeError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            kv.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipeError> {
            v.parse().map_err(|_| PipeError::Config(format!("bad value for {key}: {v:?}")))
        }
        const KNOWN: [&str; 13] = [
            "n", "q", "width", "beta", "l_bu", "l_mem", "clock_ps", "clock_ghz", "flush", "gap", "transforms", "seed",
            "strict",
        ];
        if let Some((k, _)) = kv.iter().find(|(k, _)| !KNOWN.contains(&k.as_str())) {
            return Err(PipeError::Config(format!("unknown key {k:?}")));
        }

        let n: usize = get("n").map(|v| num("n", v)).transpose()?.unwrap_or(128);
        let q: u64 = get("q").map(|v| num("q", v)).transpose()?.unwrap_or(2_013_265_921);
        let width = get("width").map(|v| num("width", v)).transpose()?.unwrap_or(crate::modmath::DEFAULT_WIDTH);
        let beta = get("beta").map(|v| num("beta", v)).transpose()?.unwrap_or(width + 1);
        let mut pipeline = PipelineConfig::hardware(n);
        if let Some(v) = get("l_bu") {
            pipeline.l_bu = num("l_bu", v)?;
        }
        if let Some(v) = get("l_mem") {
            let vals: Vec<usize> = v.split(',').map(|s| num("l_mem", s.trim())).collect::<Result<_, _>>()?;
            pipeline.l_mem = if vals.len() == 1 { vec![vals[0]; pipeline.stages()] } else { vals };
        }
        match (get("clock_ps"), get("clock_ghz")) {
            (Some(_), Some(_)) => return Err(PipeError::Config("give clock_ps or clock_ghz, not both".into())),
            (Some(v), None) => pipeline.clock = Clock::from_period_ps(num("clock_ps", v)?),
            (None, Some(v)) => pipeline.clock = Clock::from_ghz(num("clock_ghz", v)?),
            (None, None) => {}
        }
        if let Some(v) = get("flush") {
            pipeline.flush_cycles = num("flush", v)?;
        }
        if let Some(v) = get("gap") {
            pipeline.gap = num("gap", v)?;
        }
        if let Some(v) = get("strict") {
            pipeline.strict = num("strict", v)?;
        }
        let transforms = get("transforms").map(|v| num("transforms", v)).transpose()?.unwrap_or(16);
        let seed = get("seed").map(|v| num("seed", v)).transpose()?;
        pipeline.validate(n)?;
        Ok(Self { n, q, width, beta, transforms, seed, pipeline })
    }

    pub fn context(&self) -> Result<ModulusContext, PipeError> {
        Ok(ModulusContext::new(self.q, self.n, self.width, self.beta)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmath::bit_reverse;
    use crate::reference::{dft_bruteforce, ntt_ct};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const Q31: u64 = 2_013_265_921;

    fn random_inputs(ctx: &ModulusContext, count: usize, seed: u64) -> Vec<Polynomial> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| Polynomial::random(ctx, &mut rng)).collect()
    }

    #[test]
    fn desk_scale_matches_brute_force() {
        let ctx = ModulusContext::new(17, 8, 32, 33).unwrap();
        let cfg = PipelineConfig::desk(8);
        let inputs = random_inputs(&ctx, 20, 2);
        let run = run_pipeline(&inputs, &ctx, &cfg).unwrap();
        let perm = derive_output_permutation(&ctx, &cfg).unwrap();
        for (x, y) in inputs.iter().zip(&run.outputs) {
            assert_eq!(apply_output_permutation(y, &perm), dft_bruteforce(x, &ctx).unwrap());
        }
        assert_eq!(run.measured_latency, Some(27));
        assert_eq!(run.report.total_cycles, 27);
    }

    #[test]
    fn output_order_is_bit_reversed() {
        for n in [4usize, 8, 16, 128] {
            let ctx = ModulusContext::with_defaults(Q31, n).unwrap();
            let perm = derive_output_permutation(&ctx, &PipelineConfig::desk(n)).unwrap();
            let bits = n.trailing_zeros();
            assert!(perm.iter().enumerate().all(|(p, &r)| r == bit_reverse(p, bits)));
        }
    }

    #[test]
    fn hardware_latencies_stream_at_half_n_interval() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        let cfg = PipelineConfig::hardware(128);
        let inputs = random_inputs(&ctx, 16, 3);
        let run = run_pipeline(&inputs, &ctx, &cfg).unwrap();
        assert_eq!(run.measured_latency, Some(1036));
        let gaps: Vec<u64> = run.output_start_cycles.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.iter().all(|&g| g == 64));
        let perm = derive_output_permutation(&ctx, &cfg).unwrap();
        for (x, y) in inputs.iter().zip(&run.outputs) {
            assert_eq!(apply_output_permutation(y, &perm), ntt_ct(x, &ctx).unwrap());
        }
    }

    #[test]
    fn latency_report_examples() {
        let r = latency_report(128, &PipelineConfig::hardware(128));
        assert_eq!(r.total_cycles, 1036);
        assert!((r.latency_ns - 30.4584).abs() < 1e-9);
        assert_eq!(r.initiation_interval, 64);
        assert_eq!(r.tw_load_cycles, 64);
        let mut at34 = PipelineConfig::hardware(128);
        at34.clock = Clock::DESIGN_FREQUENCY;
        assert_eq!(latency_report(128, &at34).throughput_per_s, 531_250_000.0);
        let mut slow = PipelineConfig::hardware(128);
        slow.clock = Clock::DESIGN_PERIOD.slowed(2);
        let base = latency_report(128, &PipelineConfig::hardware(128)).throughput_per_s;
        assert!((latency_report(128, &slow).throughput_per_s * 2.0 - base).abs() < 1e-6);
        assert_eq!(latency_report(8, &PipelineConfig::desk(8)).total_cycles, 27);
        let text = latency_report(128, &at34).to_cost_report().to_text();
        assert!(text.contains("1036 cycles") && text.contains("531.25M NTT/s"));
        let t4 = table4_report().to_text();
        assert!(t4.contains("1036 cycles") && t4.contains("531.25M NTT/s") && t4.contains("30.46 ns"));
    }

    #[test]
    fn config_validation() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        let mut cfg = PipelineConfig::hardware(128);
        cfg.l_mem[3] = 10;
        assert!(matches!(Pipeline::new(&ctx, cfg), Err(PipeError::Config(_))));
        assert!(matches!(Pipeline::new(&ctx, PipelineConfig::hardware(64)), Err(PipeError::Config(_))));
        let bad = Polynomial::zero(64);
        assert!(matches!(
            run_pipeline(&[bad], &ctx, &PipelineConfig::hardware(128)),
            Err(PipeError::ContextMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn sim_spec_parsing() {
        let spec = SimSpec::parse("# demo\nn = 16\nq = 17\nl_bu = 3\nl_mem = 8, 9, 8, 10\nclock_ghz = 34\ngap = 2\n").unwrap();
        assert_eq!(spec.n, 16);
        assert_eq!(spec.pipeline.l_mem, vec![8, 9, 8, 10]);
        assert_eq!(spec.pipeline.clock, Clock::DESIGN_FREQUENCY);
        assert_eq!(spec.beta, 33);
        spec.context().unwrap();
        assert!(SimSpec::parse("bogus = 1").is_err());
        assert!(SimSpec::parse("n = 16\nl_mem = 3").is_err());
        assert!(SimSpec::parse("n 16").is_err());
        assert!(SimSpec::parse("clock_ps = 29.4\nclock_ghz = 34").is_err());
    }
}
