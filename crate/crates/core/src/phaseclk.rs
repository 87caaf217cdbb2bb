//! Multiphase clock assignment over gate-level DAGs.
//!
//! Every gate gets an integer time slot; with k phases, slot mod k is the
//! phase it is clocked on. An edge u -> v must go strictly forward in time,
//! and an edge spanning d slots needs floor((d - 1) / k) path-balancing DFFs,
//! since one DFF re-times a signal by a whole period of k slots.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhaseError {
    #[error("graph has a cycle through gate {0:?}")]
    CyclicGraph(String),
    #[error("k = {0} phases is infeasible")]
    InfeasibleK(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("exact search is limited to {limit} gates, graph has {gates}")]
    TooLarge { gates: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Logic,
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Gate {
    pub name: String,
    pub kind: GateKind,
}

/// Gates plus producer -> consumer edges. Always acyclic once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GateGraph {
    gates: Vec<Gate>,
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    topo: Vec<usize>,
}

impl GateGraph {
    /// Builds a graph from named gates and index edges. Gates without fan-in
    /// that are not marked otherwise become inputs.
    pub fn new(mut gates: Vec<Gate>, edges: Vec<(usize, usize)>) -> Result<Self, PhaseError> {
        let n = gates.len();
        let mut indeg = vec![0usize; n];
        for &(_, v) in &edges {
            indeg[v] += 1;
        }
        for (g, &d) in gates.iter_mut().zip(&indeg) {
            if d == 0 && g.kind == GateKind::Logic {
                g.kind = GateKind::Input;
            }
        }
        let topo = topological_order(n, &edges).map_err(|v| PhaseError::CyclicGraph(gates[v].name.clone()))?;
        Ok(Self { gates, edges, topo })
    }

    /// Edge-list text: one "src dst" pair per line, plus optional
    /// "input NAME" / "output NAME" annotations. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PhaseError> {
        let mut names: HashMap<String, usize> = HashMap::new();
        let mut gates: Vec<Gate> = Vec::new();
        let mut edges = Vec::new();
        let mut id = |name: &str, gates: &mut Vec<Gate>| {
            *names.entry(name.to_string()).or_insert_with(|| {
                gates.push(Gate { name: name.to_string(), kind: GateKind::Logic });
                gates.len() - 1
            })
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                [] => {}
                ["input", name] => {
                    let v = id(name, &mut gates);
                    gates[v].kind = GateKind::Input;
                }
                ["output", name] => {
                    let v = id(name, &mut gates);
                    gates[v].kind = GateKind::Output;
                }
                [a, b] => {
                    let (u, v) = (id(a, &mut gates), id(b, &mut gates));
                    if u == v {
                        return Err(PhaseError::CyclicGraph(a.to_string()));
                    }
                    edges.push((u, v));
                }
                _ => {
                    return Err(PhaseError::Parse { line: i + 1, msg: format!("expected \"src dst\", got {line:?}") })
                }
            }
        }
        Self::new(gates, edges)
    }

    /// Random layered-ish DAG: each gate after the first `inputs` draws 1-3
    /// fan-ins from earlier gates, biased towards recent ones so paths of
    /// different depth reconverge.
    pub fn random<R: Rng + ?Sized>(gates: usize, inputs: usize, rng: &mut R) -> Self {
        let inputs = inputs.clamp(1, gates.max(1));
        let mut edges = Vec::new();
        for v in inputs..gates {
            let fanin = rng.gen_range(1..=3usize).min(v);
            let mut picked: Vec<usize> = Vec::with_capacity(fanin);
            while picked.len() < fanin {
                let u = if rng.gen_bool(0.7) { v - 1 - rng.gen_range(0..v.min(8)) } else { rng.gen_range(0..v) };
                if !picked.contains(&u) {
                    picked.push(u);
                }
            }
            edges.extend(picked.into_iter().map(|u| (u, v)));
        }
        let named = (0..gates).map(|i| Gate { name: format!("g{i}"), kind: GateKind::Logic }).collect();
        Self::new(named, edges).expect("edges point forward")
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Earliest slots: sources at 0, every gate one after its latest fan-in.
    pub fn asap(&self) -> Vec<i64> {
        let mut s = vec![0i64; self.len()];
        let preds = self.preds();
        for &v in &self.topo {
            s[v] = preds[v].iter().map(|&u| s[u] + 1).max().unwrap_or(0);
        }
        s
    }

    /// Latest slots with the same depth as ASAP: sinks at the maximum level.
    pub fn alap(&self) -> Vec<i64> {
        let depth = self.asap().into_iter().max().unwrap_or(0);
        let mut s = vec![depth; self.len()];
        let succs = self.succs();
        for &v in self.topo.iter().rev() {
            s[v] = succs[v].iter().map(|&w| s[w] - 1).min().unwrap_or(depth);
        }
        s
    }

    /// Largest slot span of any edge under ASAP. Any k at least this large
    /// needs no DFFs at all.
    pub fn max_imbalance(&self) -> i64 {
        let s = self.asap();
        self.edges.iter().map(|&(u, v)| s[v] - s[u]).max().unwrap_or(0)
    }

    fn preds(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            p[v].push(u);
        }
        p
    }

    fn succs(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            s[u].push(v);
        }
        s
    }
}

/// Kahn's algorithm; on a cycle returns some gate on it.
fn topological_order(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>, usize> {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(u, v) in edges {
        indeg[v] += 1;
        succ[u].push(v);
    }
    let mut order: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                order.push(v);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&v| indeg[v] > 0).unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact LP optimum for k = 1, improved by local search for larger k.
    LpRelaxRound,
    GreedyAsap,
    /// Branch and bound; optimal, small graphs only.
    ExactSmall,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "lp_relax_round" | "lp" => Ok(Method::LpRelaxRound),
            "greedy_asap" | "greedy" | "asap" => Ok(Method::GreedyAsap),
            "exact_small" | "exact" => Ok(Method::ExactSmall),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseAssignment {
    pub k: usize,
    pub slots: Vec<i64>,
    /// DFFs per edge, in graph edge order.
    pub dff: Vec<u64>,
    pub total: u64,
}

impl PhaseAssignment {
    pub fn from_slots(graph: &GateGraph, k: usize, mut slots: Vec<i64>) -> Self {
        let lo = slots.iter().copied().min().unwrap_or(0);
        slots.iter_mut().for_each(|s| *s -= lo);
        let dff: Vec<u64> = graph.edges().iter().map(|&(u, v)| dff_for(slots[v] - slots[u], k)).collect();
        let total = dff.iter().sum();
        Self { k, slots, dff, total }
    }

    pub fn phase(&self, gate: usize) -> usize {
        (self.slots[gate] % self.k as i64) as usize
    }

    pub fn to_csv(&self, graph: &GateGraph) -> String {
        let mut out = String::from("gate,kind,slot,phase\n");
        for (i, g) in graph.gates().iter().enumerate() {
            let kind = serde_json::to_value(g.kind).unwrap();
            let _ = writeln!(out, "{},{},{},{}", g.name, kind.as_str().unwrap(), self.slots[i], self.phase(i));
        }
        out.push_str("\nsrc,dst,dff\n");
        for (&(u, v), d) in graph.edges().iter().zip(&self.dff) {
            let _ = writeln!(out, "{},{},{}", graph.gates()[u].name, graph.gates()[v].name, d);
        }
        out
    }
}

/// DFFs needed on an edge spanning `span` slots. Non-positive spans are
/// hold violations and are reported by `check_hold_safe`, not here.
pub fn dff_for(span: i64, k: usize) -> u64 {
    if span <= 1 {
        0
    } else {
        ((span - 1) / k as i64) as u64
    }
}

fn total_dff(graph: &GateGraph, slots: &[i64], k: usize) -> u64 {
    graph.edges().iter().map(|&(u, v)| dff_for(slots[v] - slots[u], k)).sum()
}

pub fn assign_phases(graph: &GateGraph, k: usize, method: Method) -> Result<PhaseAssignment, PhaseError> {
    if k == 0 {
        return Err(PhaseError::InfeasibleK(0));
    }
    let slots = match method {
        Method::GreedyAsap => graph.asap(),
        Method::ExactSmall => exact_small(graph, k)?,
        Method::LpRelaxRound => {
            let mut best = lp_k1(graph);
            for kk in 1..=k {
                best = improve(graph, kk, best);
            }
            best
        }
    };
    Ok(PhaseAssignment::from_slots(graph, k, slots))
}

/// Best of several local-search runs for `k` phases. Starting from the
/// previous k's answer keeps results non-increasing in k.
fn improve(graph: &GateGraph, k: usize, prev: Vec<i64>) -> Vec<i64> {
    let starts = [prev, graph.asap(), graph.alap()];
    starts
        .into_iter()
        .map(|s| local_search(graph, k, s))
        .min_by_key(|s| total_dff(graph, s, k))
        .unwrap()
}

/// Moves one gate at a time to the best slot inside its feasible window
/// until nothing improves.
fn local_search(graph: &GateGraph, k: usize, mut slots: Vec<i64>) -> Vec<i64> {
    let preds = graph.preds();
    let succs = graph.succs();
    let ki = k as i64;
    let local = |slots: &[i64], v: usize, s: i64| -> u64 {
        preds[v].iter().map(|&u| dff_for(s - slots[u], k)).sum::<u64>()
            + succs[v].iter().map(|&w| dff_for(slots[w] - s, k)).sum::<u64>()
    };
    loop {
        let mut changed = false;
        for &v in graph.topological_order() {
            let lo = preds[v].iter().map(|&u| slots[u] + 1).max();
            let hi = succs[v].iter().map(|&w| slots[w] - 1).min();
            let (lo, hi) = match (lo, hi) {
                (Some(l), Some(h)) => (l, h),
                (Some(l), None) => (l, l),
                (None, Some(h)) => (h, h),
                (None, None) => continue,
            };
            if lo > hi {
                continue;
            }
            // cost only changes at these breakpoints
            let mut cands = vec![lo, hi];
            for &u in &preds[v] {
                let mut s = slots[u] + 1;
                while s <= hi {
                    if s >= lo {
                        cands.push(s);
                    }
                    s += ki;
                }
            }
            for &w in &succs[v] {
                let mut s = slots[w] - 1;
                while s >= lo {
                    if s <= hi {
                        cands.push(s);
                    }
                    s -= ki;
                }
            }
            let here = local(&slots, v, slots[v]);
            if let Some(best) = cands.into_iter().min_by_key(|&s| (local(&slots, v, s), (s - slots[v]).abs())) {
                if local(&slots, v, best) < here {
                    slots[v] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            return slots;
        }
    }
}

/// Optimal slots for k = 1, where the objective is linear:
/// minimize sum over edges of (s_v - s_u - 1) subject to s_v - s_u >= 1.
///
/// The constraint matrix is a network matrix, so the LP optimum is integral.
/// Its dual is a min-cost flow (cost -1 per edge, node supply
/// outdeg - indeg); complementary slackness then pins s_v - s_u = 1 on every
/// edge carrying flow, and difference constraints recover the slots.
fn lp_k1(graph: &GateGraph) -> Vec<i64> {
    let n = graph.len();
    if n == 0 {
        return Vec::new();
    }
    let flow = min_cost_dual_flow(graph);
    // difference constraints x_b <= x_a + w, solved by Bellman-Ford
    let mut cons: Vec<(usize, usize, i64)> = Vec::new();
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        cons.push((v, u, -1));
        if flow[e] > 0 {
            cons.push((u, v, 1));
        }
    }
    let mut x = vec![0i64; n];
    for _ in 0..=n {
        let mut changed = false;
        for &(a, b, w) in &cons {
            if x[a] + w < x[b] {
                x[b] = x[a] + w;
                changed = true;
            }
        }
        if !changed {
            return x;
        }
    }
    unreachable!("optimal dual flow always yields feasible difference constraints")
}

/// Successive shortest paths with Johnson potentials. Returns flow per
/// graph edge.
fn min_cost_dual_flow(graph: &GateGraph) -> Vec<i64> {
    let n = graph.len();
    let (src, dst) = (n, n + 1);
    let mut net = Network::new(n + 2);
    let edge_ids: Vec<usize> = graph.edges().iter().map(|&(u, v)| net.add(u, v, i64::MAX / 4, -1)).collect();
    let mut supply = vec![0i64; n];
    for &(u, v) in graph.edges() {
        supply[u] += 1;
        supply[v] -= 1;
    }
    for (v, &b) in supply.iter().enumerate() {
        if b > 0 {
            net.add(src, v, b, 0);
        } else if b < 0 {
            net.add(v, dst, -b, 0);
        }
    }
    // initial potentials: shortest distances on the DAG (no residual back
    // edges carry capacity yet)
    let mut pot = vec![0i64; n + 2];
    let preds = graph.preds();
    for &v in graph.topological_order() {
        for &u in &preds[v] {
            pot[v] = pot[v].min(pot[u] - 1);
        }
    }
    let min_pot = pot[..n].iter().copied().min().unwrap_or(0);
    pot[dst] = min_pot;
    loop {
        let Some((dist, prev)) = net.dijkstra(src, &pot) else { break };
        if dist[dst] == i64::MAX {
            break;
        }
        for v in 0..n + 2 {
            if dist[v] != i64::MAX {
                pot[v] += dist[v];
            }
        }
        let mut push = i64::MAX;
        let mut v = dst;
        while v != src {
            let e = prev[v];
            push = push.min(net.cap[e]);
            v = net.to[e ^ 1];
        }
        let mut v = dst;
        while v != src {
            let e = prev[v];
            net.cap[e] -= push;
            net.cap[e ^ 1] += push;
            v = net.to[e ^ 1];
        }
    }
    edge_ids.into_iter().map(|e| net.cap[e ^ 1]).collect()
}

struct Network {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i64>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self { head: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new(), cost: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> usize {
        let e = self.to.len();
        self.head[u].push(e);
        self.to.push(v);
        self.cap.push(cap);
        self.cost.push(cost);
        self.head[v].push(e + 1);
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
        e
    }

    fn dijkstra(&self, src: usize, pot: &[i64]) -> Option<(Vec<i64>, Vec<usize>)> {
        let n = self.head.len();
        let mut dist = vec![i64::MAX; n];
        let mut prev = vec![usize::MAX; n];
        dist[src] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0i64, src)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &self.head[u] {
                if self.cap[e] <= 0 {
                    continue;
                }
                let v = self.to[e];
                let rc = self.cost[e] + pot[u] - pot[v];
                debug_assert!(rc >= 0, "reduced cost must be non-negative");
                if d + rc < dist[v] {
                    dist[v] = d + rc;
                    prev[v] = e;
                    heap.push(Reverse((dist[v], v)));
                }
            }
        }
        Some((dist, prev))
    }
}

/// Branch and bound in topological order. Slots are confined to
/// [0, k(n - 1)]: in an optimal assignment no gap between consecutive used
/// slots exceeds k, or closing it by k would save a DFF on every edge that
/// crosses it.
fn exact_small(graph: &GateGraph, k: usize) -> Result<Vec<i64>, PhaseError> {
    let n = graph.len();
    if n > EXACT_LIMIT {
        return Err(PhaseError::TooLarge { gates: n, limit: EXACT_LIMIT });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let preds = graph.preds();
    let order = graph.topological_order().to_vec();
    let top = (k * (n - 1)) as i64;
    let seed = {
        let mut s = lp_k1(graph);
        let lo = s.iter().copied().min().unwrap();
        s.iter_mut().for_each(|x| *x -= lo);
        s
    };
    let mut best = (total_dff(graph, &seed, k), seed.clone());
    if seed.iter().any(|&s| s > top) {
        best.0 = u64::MAX;
    }

    struct Search<'a> {
        preds: &'a [Vec<usize>],
        order: &'a [usize],
        k: usize,
        top: i64,
        slots: Vec<i64>,
        best: (u64, Vec<i64>),
    }
    impl Search<'_> {
        fn go(&mut self, depth: usize, cost: u64) {
            if cost >= self.best.0 {
                return;
            }
            if depth == self.order.len() {
                self.best = (cost, self.slots.clone());
                return;
            }
            let v = self.order[depth];
            let lo = self.preds[v].iter().map(|&u| self.slots[u] + 1).max().unwrap_or(0);
            for s in lo..=self.top {
                let add: u64 = self.preds[v].iter().map(|&u| dff_for(s - self.slots[u], self.k)).sum();
                self.slots[v] = s;
                self.go(depth + 1, cost + add);
            }
        }
    }
    let mut search = Search { preds: &preds, order: &order, k, top, slots: vec![0; n], best };
    search.go(0, 0);
    Ok(search.best.1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoldViolation {
    pub src: String,
    pub dst: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoldReport {
    pub violations: Vec<HoldViolation>,
}

impl HoldReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Independent re-check of an assignment: strict slot order on every edge,
/// distinct phases where the span is under one period, and DFF counts
/// matching the cost model.
pub fn check_hold_safe(graph: &GateGraph, a: &PhaseAssignment) -> HoldReport {
    let mut violations = Vec::new();
    let name = |i: usize| graph.gates()[i].name.clone();
    if a.slots.len() != graph.len() || a.dff.len() != graph.edges().len() {
        violations.push(HoldViolation { src: String::new(), dst: String::new(), detail: "size mismatch".into() });
        return HoldReport { violations };
    }
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        let span = a.slots[v] - a.slots[u];
        let mut bad = |detail: String| violations.push(HoldViolation { src: name(u), dst: name(v), detail });
        if span < 1 {
            bad(format!("consumer slot {} not after producer slot {}", a.slots[v], a.slots[u]));
            continue;
        }
        if span < a.k as i64 && a.phase(u) == a.phase(v) {
            bad(format!("same phase {} within one period", a.phase(u)));
        }
        let want = ((span + a.k as i64 - 1) / a.k as i64 - 1).max(0) as u64;
        if a.dff[e] != want {
            bad(format!("{} DFFs recorded, span {span} needs {want}", a.dff[e]));
        }
    }
    if a.dff.iter().sum::<u64>() != a.total {
        violations.push(HoldViolation { src: String::new(), dst: String::new(), detail: "total does not match".into() });
    }
    HoldReport { violations }
}

/// Maximum throughput with k phases: the clock is divided by k.
pub fn throughput_of(k: usize, base_hz: f64) -> f64 {
    base_hz / k as f64
}
