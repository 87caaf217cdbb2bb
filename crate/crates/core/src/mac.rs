//! Memory access controller.
//!
//! A chain of toggle flip-flops divides the input pulse stream by two at each
//! level. Decoding the toggle states gives a one-hot cycle position, and
//! set/reset latches driven by a handful of those positions produce every
//! queue trigger. Nothing feeds back into the tree.

use serde::Serialize;

use crate::memsim;

/// Ripple TFF counter. Toggle `i` flips when toggle `i - 1` falls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TffTree {
    toggles: Vec<bool>,
}

impl TffTree {
    /// A tree of `depth` TFFs; its one-hot output is 2^depth wide.
    pub fn new(depth: u32) -> Self {
        Self { toggles: vec![false; depth as usize] }
    }

    pub fn depth(&self) -> u32 {
        self.toggles.len() as u32
    }

    pub fn width(&self) -> usize {
        1 << self.toggles.len()
    }

    pub fn toggles(&self) -> &[bool] {
        &self.toggles
    }

    /// Source of each TFF's clock: `None` for the root, else the TFF index.
    /// Every edge points from a lower to a higher index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..self.toggles.len()).map(|i| (i - 1, i)).collect()
    }

    /// Applies one input pulse to the root.
    pub fn pulse(&mut self) {
        for t in &mut self.toggles {
            *t = !*t;
            if *t {
                // rose: no falling edge for the next divider
                break;
            }
        }
    }

    /// The active line of the one-hot decoder.
    pub fn one_hot_index(&self) -> usize {
        self.one_hot().iter().position(|&b| b).expect("decoder always has one active line")
    }

    /// Full decoder output: line j is active iff every toggle matches bit j.
    pub fn one_hot(&self) -> Vec<bool> {
        (0..self.width())
            .map(|j| self.toggles.iter().enumerate().all(|(b, &t)| (j >> b & 1 == 1) == t))
            .collect()
    }

    /// Reports the active index for this clock, then advances.
    pub fn tff_step(&mut self) -> usize {
        let idx = self.one_hot_index();
        self.pulse();
        idx
    }
}

/// Triggers one PE's memories receive in one cycle of free-running streaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TriggerSet {
    pub cycle: u64,
    pub write_bank: usize,
    pub write_queues: (usize, usize),
    /// (bank, queue pair) being drained, once the first bank has filled.
    pub read: Option<(usize, (usize, usize))>,
    /// Banks swap roles at the start of this cycle.
    pub flip: bool,
    /// Position of the twiddle memory head when a read happens.
    pub tw_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Latches {
    upper_half: bool,
    bank: bool,
    primed: bool,
}

/// Free-running controller for PE `pe` of an `n`-point pipeline.
#[derive(Debug, Clone)]
pub struct Mac {
    n: usize,
    pe: usize,
    tree: TffTree,
    pruned: bool,
    latches: Latches,
    cycle: u64,
    tw_pos: usize,
}

impl Mac {
    pub fn new(n: usize, pe: usize) -> Self {
        Self::build(n, pe, false)
    }

    /// Variant that only looks at the toggles it needs (lsb, the bit below
    /// the msb, and the msb) instead of the full decoder.
    pub fn pruned(n: usize, pe: usize) -> Self {
        Self::build(n, pe, true)
    }

    fn build(n: usize, pe: usize, pruned: bool) -> Self {
        assert!(n >= 4 && n.is_power_of_two(), "controller needs a power-of-two n >= 4");
        Self {
            n,
            pe,
            tree: TffTree::new(n.trailing_zeros()),
            pruned,
            latches: Latches::default(),
            cycle: 0,
            tw_pos: 0,
        }
    }

    /// Decoded (odd cycle, upper write half, bank) for the current cycle.
    fn decode(&mut self) -> (bool, bool, bool) {
        let n = self.n;
        if self.pruned {
            let t = self.tree.toggles();
            let d = t.len();
            if t[d - 1] {
                self.latches.primed = true;
            }
            return (t[0], t[d - 2], t[d - 1]);
        }
        let j = self.tree.one_hot_index();
        // set/reset latches keyed on individual one-hot lines
        if j == n / 4 || j == 3 * n / 4 {
            self.latches.upper_half = true;
        }
        if j == 0 || j == n / 2 {
            self.latches.upper_half = false;
        }
        if j == n / 2 {
            self.latches.bank = true;
            self.latches.primed = true;
        }
        if j == 0 {
            self.latches.bank = false;
        }
        let odd = self.tree.one_hot().iter().skip(1).step_by(2).any(|&b| b);
        (odd, self.latches.upper_half, self.latches.bank)
    }

    pub fn step(&mut self) -> TriggerSet {
        let (odd, upper, bank) = self.decode();
        let flip = self.cycle > 0 && self.cycle.is_multiple_of(self.n as u64 / 2);
        let write_bank = usize::from(bank);
        let write_queues = if upper { (2, 3) } else { (0, 1) };
        let (read, tw_index) = if self.latches.primed {
            let pos = self.tw_pos;
            self.tw_pos = (self.tw_pos + 1) % (1 << self.pe);
            let pair = if odd { (1, 3) } else { (0, 2) };
            (Some((1 - write_bank, pair)), Some(pos))
        } else {
            (None, None)
        };
        self.tree.pulse();
        let set = TriggerSet { cycle: self.cycle, write_bank, write_queues, read, flip, tw_index };
        self.cycle += 1;
        set
    }
}

/// Trigger set of PE `pe` at local `cycle` of free-running streaming.
pub fn mac_triggers(cycle: u64, pe: usize, n: usize) -> TriggerSet {
    let mut mac = Mac::new(n, pe);
    for _ in 0..cycle {
        mac.step();
    }
    mac.step()
}

/// Event-driven controller used inside the pipeline, where idle input cycles
/// must not advance the write side. Two counters: one pulsed per accepted
/// write, one per read.
#[derive(Debug, Clone)]
pub struct GatedMac {
    n: usize,
    write_tree: TffTree,
    read_tree: TffTree,
}

impl GatedMac {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n.is_power_of_two());
        let d = (n / 2).trailing_zeros();
        Self { n, write_tree: TffTree::new(d), read_tree: TffTree::new(d) }
    }

    /// Queue pair for the next write; `true` once this write completes a bank.
    pub fn on_write(&mut self) -> ((usize, usize), bool) {
        let t = self.write_tree.toggles();
        let upper = t[t.len() - 1];
        self.write_tree.pulse();
        let wrapped = self.write_tree.toggles().iter().all(|&b| !b);
        (if upper { (2, 3) } else { (0, 1) }, wrapped)
    }

    /// Queue pair for the next read; `true` once this read drains a bank.
    pub fn on_read(&mut self) -> ((usize, usize), bool) {
        let odd = self.read_tree.toggles()[0];
        self.read_tree.pulse();
        let wrapped = self.read_tree.toggles().iter().all(|&b| !b);
        (if odd { (1, 3) } else { (0, 2) }, wrapped)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Trigger table built straight from the write/read schedules, one period
/// (n cycles) long.
pub fn schedule_table(n: usize) -> Vec<(usize, (usize, usize), (usize, usize))> {
    (0..n)
        .map(|c| {
            let phase = c % (n / 2);
            let bank = c / (n / 2);
            let w = memsim::write_schedule(phase, n).unwrap();
            let r = memsim::read_schedule(phase, n).unwrap();
            (bank, w, r)
        })
        .collect()
}
