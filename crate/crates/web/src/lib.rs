//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string, so the page needs no generated type glue beyond wasm-bindgen's.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use sce_ntt::memsim::{layout_address, read_schedule, write_schedule};
use sce_ntt::phaseclk::{assign_phases, throughput_of, GateGraph, Method};
use sce_ntt::pipesim::{apply_output_permutation, derive_output_permutation, run_pipeline, EventKind, PipelineConfig};
use sce_ntt::reference::ntt_ct;
use sce_ntt::{ModulusContext, Polynomial};

const TRACE_LIMIT: usize = 400;

#[derive(Serialize)]
struct NttRun {
    n: usize,
    q: u64,
    omega: u64,
    input: Vec<u64>,
    pipeline_order: Vec<u64>,
    output: Vec<u64>,
    matches_reference: bool,
    output_permutation: Vec<usize>,
    latency_cycles: u64,
    measured_latency: Option<u64>,
    initiation_interval: u64,
    latency_ns: f64,
    throughput_per_s: f64,
    trace: Vec<TraceLine>,
}

#[derive(Serialize)]
struct TraceLine {
    cycle: u64,
    pe: usize,
    event: EventKind,
    value: Vec<String>,
}

/// Streams one random transform through the cycle-accurate pipeline.
pub fn ntt_run(n: usize, q: u64, seed: u64, l_bu: usize, mem_extra: usize) -> Result<String, String> {
    let ctx = ModulusContext::with_defaults(q, n).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig { trace: true, ..PipelineConfig::uniform(n, l_bu, n / 2 + mem_extra) };
    let x = Polynomial::random(&ctx, &mut ChaCha8Rng::seed_from_u64(seed));
    let run = run_pipeline(std::slice::from_ref(&x), &ctx, &cfg).map_err(|e| e.to_string())?;
    let perm = derive_output_permutation(&ctx, &cfg).map_err(|e| e.to_string())?;
    let out = apply_output_permutation(&run.outputs[0], &perm);
    let reference = ntt_ct(&x, &ctx).map_err(|e| e.to_string())?;
    let trace = run
        .trace
        .as_ref()
        .map(|t| {
            t.records()
                .iter()
                .filter(|r| r.event != EventKind::TwLoad)
                .take(TRACE_LIMIT)
                .map(|r| TraceLine {
                    cycle: r.cycle,
                    pe: r.pe,
                    event: r.event,
                    // u128 does not survive JSON numbers in JS
                    value: r.value.iter().map(u128::to_string).collect(),
                })
                .collect()
        })
        .unwrap_or_default();
    let body = NttRun {
        n,
        q,
        omega: ctx.omega(),
        matches_reference: out == reference,
        input: x.coeffs,
        pipeline_order: run.outputs[0].coeffs.clone(),
        output: out.coeffs,
        output_permutation: perm,
        latency_cycles: run.report.total_cycles,
        measured_latency: run.measured_latency,
        initiation_interval: run.report.initiation_interval,
        latency_ns: run.report.latency_ns,
        throughput_per_s: run.report.throughput_per_s,
        trace,
    };
    serde_json::to_string(&body).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MemoryView {
    n: usize,
    stage: usize,
    /// queues[q][slot] = index stored there at this stage.
    queues: Vec<Vec<usize>>,
    cycles: Vec<CycleAccess>,
}

#[derive(Serialize)]
struct CycleAccess {
    cycle: usize,
    write: (usize, usize),
    read: (usize, usize),
}

/// Queue layout of stage `stage` and the per-cycle access pattern.
pub fn memory_view(n: usize, stage: usize) -> Result<String, String> {
    if n < 4 || !n.is_power_of_two() || n > 1 << 12 {
        return Err(format!("n = {n} must be a power of two in [4, 4096]"));
    }
    let bits = n.trailing_zeros();
    if stage >= bits as usize {
        return Err(format!("stage {stage} out of range for n = {n}"));
    }
    let mut queues = vec![vec![0usize; n / 4]; 4];
    for i in 0..n {
        let (q, slot) = layout_address(i, stage, bits).map_err(|e| e.to_string())?;
        queues[q][slot] = i;
    }
    let cycles = (0..n / 2)
        .map(|c| {
            Ok(CycleAccess {
                cycle: c,
                write: write_schedule(c, n).map_err(|e| e.to_string())?,
                read: read_schedule(c, n).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<_, String>>()?;
    serde_json::to_string(&MemoryView { n, stage, queues, cycles }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TradeoffPoint {
    k: usize,
    dff: u64,
    saved_percent: f64,
    throughput_ghz: f64,
}

#[derive(Serialize)]
struct Tradeoff {
    gates: usize,
    edges: usize,
    max_imbalance: i64,
    points: Vec<TradeoffPoint>,
}

/// DFF count against phase count for a random netlist, or for `edge_list`
/// when it is non-empty.
pub fn phase_tradeoff(gates: usize, seed: u64, k_max: usize, edge_list: &str, base_ghz: f64) -> Result<String, String> {
    let g = if edge_list.trim().is_empty() {
        if !(2..=2000).contains(&gates) {
            return Err(format!("gate count {gates} outside [2, 2000]"));
        }
        GateGraph::random(gates, (gates / 25).max(1), &mut ChaCha8Rng::seed_from_u64(seed))
    } else {
        GateGraph::parse(edge_list).map_err(|e| e.to_string())?
    };
    let k_max = k_max.clamp(1, 32);
    let mut points = Vec::with_capacity(k_max);
    let mut base = None;
    for k in 1..=k_max {
        let dff = assign_phases(&g, k, Method::LpRelaxRound).map_err(|e| e.to_string())?.total;
        let b = *base.get_or_insert(dff);
        let saved_percent = if b == 0 { 0.0 } else { 100.0 * (b - dff) as f64 / b as f64 };
        points.push(TradeoffPoint { k, dff, saved_percent, throughput_ghz: throughput_of(k, base_ghz * 1e9) / 1e9 });
    }
    let body = Tradeoff { gates: g.len(), edges: g.edges().len(), max_imbalance: g.max_imbalance(), points };
    serde_json::to_string(&body).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = nttRun)]
pub fn ntt_run_js(n: usize, q: f64, seed: f64, l_bu: usize, mem_extra: usize) -> Result<String, JsValue> {
    ntt_run(n, q as u64, seed as u64, l_bu, mem_extra).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = memoryView)]
pub fn memory_view_js(n: usize, stage: usize) -> Result<String, JsValue> {
    memory_view(n, stage).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = phaseTradeoff)]
pub fn phase_tradeoff_js(gates: usize, seed: f64, k_max: usize, edge_list: &str, base_ghz: f64) -> Result<String, JsValue> {
    phase_tradeoff(gates, seed as u64, k_max, edge_list, base_ghz).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn ntt_run_matches_reference() {
        let v: Value = serde_json::from_str(&ntt_run(16, 17, 3, 2, 1).unwrap()).unwrap();
        assert_eq!(v["matches_reference"], true);
        assert_eq!(v["latency_cycles"], 4 * (2 + 9));
        assert_eq!(v["measured_latency"], 44);
        assert_eq!(v["output"].as_array().unwrap().len(), 16);
        let v: Value = serde_json::from_str(&ntt_run(128, 2_013_265_921, 1, 79, 5).unwrap()).unwrap();
        assert_eq!(v["latency_cycles"], 1036);
        assert_eq!(v["trace"].as_array().unwrap().len(), TRACE_LIMIT);
        assert!(ntt_run(12, 17, 0, 1, 0).is_err());
        assert!(ntt_run(16, 19, 0, 1, 0).is_err());
    }

    #[test]
    fn memory_view_shape() {
        let v: Value = serde_json::from_str(&memory_view(16, 1).unwrap()).unwrap();
        let queues = v["queues"].as_array().unwrap();
        assert_eq!(queues.len(), 4);
        let mut all: Vec<u64> = queues.iter().flat_map(|q| q.as_array().unwrap().iter().map(|x| x.as_u64().unwrap())).collect();
        all.sort();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        assert_eq!(v["cycles"].as_array().unwrap().len(), 8);
        assert!(memory_view(16, 4).is_err());
        assert!(memory_view(3, 0).is_err());
    }

    #[test]
    fn tradeoff_is_monotone() {
        let v: Value = serde_json::from_str(&phase_tradeoff(150, 2, 6, "", 34.0).unwrap()).unwrap();
        let dffs: Vec<u64> = v["points"].as_array().unwrap().iter().map(|p| p["dff"].as_u64().unwrap()).collect();
        assert_eq!(dffs.len(), 6);
        assert!(dffs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(v["points"][1]["throughput_ghz"], 17.0);
        let d: Value = serde_json::from_str(&phase_tradeoff(0, 0, 2, "a b\nb d\na d\n", 34.0).unwrap()).unwrap();
        assert_eq!(d["points"][0]["dff"], 1);
        assert_eq!(d["points"][1]["dff"], 0);
        assert!(phase_tradeoff(0, 0, 2, "a b\nb a\n", 34.0).is_err());
    }
}
