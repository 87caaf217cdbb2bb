//! Shift-register memories.
//!
//! A coefficient bank is four triggered FIFOs. Writes broadcast DI0 to queues
//! 0/2 and DI1 to queues 1/3, and only the triggered queue latches the word.
//! Reads pop the heads of queues (0, 2) or (1, 3) onto two merger lanes.
//! Twiddles live in circular shift registers whose head re-enters the tail
//! on every trigger.

use serde::Serialize;
use thiserror::Error;

use crate::modmath::rotate_left_bits;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("index {index} out of range for a {bits}-bit address (stage {stage})")]
    IndexOutOfRange { index: usize, stage: usize, bits: u32 },
    #[error("cycle {cycle} out of range (schedule period {period})")]
    CycleOutOfRange { cycle: usize, period: usize },
    #[error("two words reached merger lane {lane} in one cycle")]
    CollisionDetected { lane: usize },
    #[error("queue {queue} overflowed: a write pushed out an unread word")]
    OverflowDetected { queue: usize },
    #[error("queue {queue} read while empty")]
    EmptyRead { queue: usize },
    #[error("invalid trigger mask {mask:#06b} for a bank in {mode:?} mode")]
    BadTrigger { mask: u8, mode: BankMode },
    #[error("word {word:#x} wider than {width} bits")]
    WordTooWide { word: u128, width: u32 },
    #[error("circular memory misuse: {0}")]
    CsrmMisuse(&'static str),
    #[error("bank size must be a power of two >= 4, got {0}")]
    BadSize(usize),
}

/// Queue/slot address of coefficient `i` in the bank of stage `k`, for a
/// transform of 2^`s` points.
///
/// The stage-k address is the index rotated left by k; its msb and lsb select
/// one of the four queues and the middle `s - 2` bits give the slot.
pub fn layout_address(i: usize, k: usize, s: u32) -> Result<(usize, usize), MemError> {
    if s < 2 || i >> s != 0 || k >= s as usize {
        return Err(MemError::IndexOutOfRange { index: i, stage: k, bits: s });
    }
    let r = rotate_left_bits(i, k as u32, s);
    let msb = r >> (s - 1);
    let lsb = r & 1;
    let slot = (r >> 1) & ((1 << (s - 2)) - 1);
    Ok((2 * msb + lsb, slot))
}

/// Queues latching (DI0, DI1) at write cycle `c` of an `n`-point transform.
pub fn write_schedule(c: usize, n: usize) -> Result<(usize, usize), MemError> {
    if c >= n / 2 {
        return Err(MemError::CycleOutOfRange { cycle: c, period: n / 2 });
    }
    Ok(if c < n / 4 { (0, 1) } else { (2, 3) })
}

/// Queues whose heads are popped at read cycle `c`.
pub fn read_schedule(c: usize, n: usize) -> Result<(usize, usize), MemError> {
    if c >= n / 2 {
        return Err(MemError::CycleOutOfRange { cycle: c, period: n / 2 });
    }
    Ok(if c.is_multiple_of(2) { (0, 2) } else { (1, 3) })
}

/// Triggered shift register: slot 0 is the head, the last slot the tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrmQueue {
    slots: Vec<Option<u64>>,
}

impl SrmQueue {
    pub fn new(depth: usize) -> Self {
        Self { slots: vec![None; depth] }
    }

    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    pub fn occupancy(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn head(&self) -> Option<u64> {
        self.slots[0]
    }

    /// One trigger: every slot moves one step toward the head, the old head
    /// leaves, and `input` enters at the tail.
    pub fn trigger(&mut self, input: Option<u64>) -> Option<u64> {
        let out = self.slots[0];
        self.slots.rotate_left(1);
        *self.slots.last_mut().unwrap() = input;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BankMode {
    Writing,
    Reading,
}

/// Anomaly recorded instead of raised when a bank runs permissively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemAnomaly {
    pub error: MemError,
}

/// Four queues of n/4 slots, filled by writes and drained by reads.
#[derive(Debug, Clone)]
pub struct CoefficientBank {
    queues: [SrmQueue; 4],
    mode: BankMode,
    fill_count: usize,
    capacity: usize,
    strict: bool,
    anomalies: Vec<MemAnomaly>,
}

impl CoefficientBank {
    pub fn new(n: usize, strict: bool) -> Result<Self, MemError> {
        if n < 4 || !n.is_power_of_two() {
            return Err(MemError::BadSize(n));
        }
        let q = || SrmQueue::new(n / 4);
        Ok(Self {
            queues: [q(), q(), q(), q()],
            mode: BankMode::Writing,
            fill_count: 0,
            capacity: n,
            strict,
            anomalies: Vec::new(),
        })
    }

    pub fn mode(&self) -> BankMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: BankMode) {
        self.mode = mode;
    }

    pub fn fill_count(&self) -> usize {
        self.fill_count
    }

    pub fn is_full(&self) -> bool {
        self.fill_count == self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.fill_count == 0
    }

    pub fn queue(&self, i: usize) -> &SrmQueue {
        &self.queues[i]
    }

    pub fn anomalies(&self) -> &[MemAnomaly] {
        &self.anomalies
    }

    fn fault(&mut self, error: MemError) -> Result<(), MemError> {
        if self.strict {
            Err(error)
        } else {
            self.anomalies.push(MemAnomaly { error });
            Ok(())
        }
    }

    /// Advances one cycle with the queues in `mask` (bit i = queue i)
    /// triggered. In writing mode, DI0 feeds queues 0/2 and DI1 feeds 1/3; in
    /// reading mode the popped heads merge onto lane 0 (queues 0/1) and
    /// lane 1 (queues 2/3).
    pub fn tick(&mut self, mask: u8, inputs: (Option<u64>, Option<u64>)) -> Result<Option<(u64, u64)>, MemError> {
        if mask & !0b1111 != 0 {
            return Err(MemError::BadTrigger { mask, mode: self.mode });
        }
        match self.mode {
            BankMode::Writing => {
                for q in (0..4).filter(|q| mask >> q & 1 == 1) {
                    let word = if q % 2 == 0 { inputs.0 } else { inputs.1 };
                    if self.queues[q].trigger(word).is_some() {
                        self.fault(MemError::OverflowDetected { queue: q })?;
                    }
                    if word.is_some() {
                        self.fill_count += 1;
                    }
                }
                Ok(None)
            }
            BankMode::Reading => {
                let mut lanes: [Option<u64>; 2] = [None, None];
                for q in (0..4).filter(|q| mask >> q & 1 == 1) {
                    let lane = q / 2;
                    match self.queues[q].trigger(None) {
                        Some(w) => {
                            self.fill_count -= 1;
                            if lanes[lane].is_some() {
                                self.fault(MemError::CollisionDetected { lane })?;
                            }
                            lanes[lane] = Some(w);
                        }
                        None => self.fault(MemError::EmptyRead { queue: q })?,
                    }
                }
                Ok(match lanes {
                    [Some(a), Some(b)] => Some((a, b)),
                    _ => None,
                })
            }
        }
    }
}

/// Trigger mask with queues `a` and `b` set.
pub fn mask_of(pair: (usize, usize)) -> u8 {
    (1 << pair.0) | (1 << pair.1)
}

/// Circular shift register memory for twiddles (2^k stages at stage k).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csrm {
    stages: Vec<Option<u128>>,
    width: u32,
    load_mode: bool,
    loaded: usize,
}

impl Csrm {
    pub fn new(len: usize, width: u32) -> Self {
        Self { stages: vec![None; len], width, load_mode: false, loaded: 0 }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn load_mode(&self) -> bool {
        self.load_mode
    }

    pub fn begin_load(&mut self) {
        self.load_mode = true;
        self.loaded = 0;
        self.stages.iter_mut().for_each(|s| *s = None);
    }

    /// Shifts one word in at the tail while loading.
    pub fn load(&mut self, word: u128) -> Result<(), MemError> {
        if !self.load_mode {
            return Err(MemError::CsrmMisuse("load outside load mode"));
        }
        if self.width < 128 && word >> self.width != 0 {
            return Err(MemError::WordTooWide { word, width: self.width });
        }
        if self.loaded == self.stages.len() {
            return Err(MemError::CsrmMisuse("load past capacity"));
        }
        self.stages.rotate_left(1);
        *self.stages.last_mut().unwrap() = Some(word);
        self.loaded += 1;
        Ok(())
    }

    /// Leaves load mode; fails unless every stage holds a word.
    pub fn finish_load(&mut self) -> Result<(), MemError> {
        if self.loaded != self.stages.len() {
            return Err(MemError::CsrmMisuse("finished loading before the memory was full"));
        }
        self.load_mode = false;
        Ok(())
    }

    pub fn load_all(&mut self, words: impl IntoIterator<Item = u128>) -> Result<(), MemError> {
        self.begin_load();
        for w in words {
            self.load(w)?;
        }
        self.finish_load()
    }

    pub fn head(&self) -> Option<u128> {
        self.stages.first().copied().flatten()
    }

    /// Emits the head word and recirculates it to the tail.
    pub fn tick(&mut self) -> Result<u128, MemError> {
        if self.load_mode {
            return Err(MemError::CsrmMisuse("triggered while loading"));
        }
        let head = self.head().ok_or(MemError::CsrmMisuse("triggered while empty"))?;
        self.stages.rotate_left(1);
        Ok(head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Fills a bank through the write schedule, then drains it through the
    /// read schedule; returns the pairs read.
    fn replay(n: usize, words: &[u64]) -> Vec<(u64, u64)> {
        let mut bank = CoefficientBank::new(n, true).unwrap();
        for c in 0..n / 2 {
            let m = mask_of(write_schedule(c, n).unwrap());
            bank.tick(m, (Some(words[2 * c]), Some(words[2 * c + 1]))).unwrap();
        }
        assert!(bank.is_full());
        bank.set_mode(BankMode::Reading);
        let out = (0..n / 2)
            .map(|c| bank.tick(mask_of(read_schedule(c, n).unwrap()), (None, None)).unwrap().unwrap())
            .collect();
        assert!(bank.is_empty());
        out
    }

    #[test]
    fn layout_examples() {
        assert_eq!(layout_address(5, 0, 7).unwrap(), (1, 2));
        assert_eq!(layout_address(64, 1, 7).unwrap(), (1, 0));
        assert!(layout_address(128, 0, 7).is_err());
        assert!(layout_address(3, 7, 7).is_err());
    }

    #[test]
    fn layout_is_bijective_per_stage() {
        for k in 0..7 {
            let seen: HashSet<_> = (0..128).map(|i| layout_address(i, k, 7).unwrap()).collect();
            assert_eq!(seen.len(), 128);
            assert!(seen.iter().all(|&(q, s)| q < 4 && s < 32));
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(write_schedule(0, 128).unwrap(), (0, 1));
        assert_eq!(write_schedule(32, 128).unwrap(), (2, 3));
        assert_eq!(read_schedule(0, 128).unwrap(), (0, 2));
        assert_eq!(read_schedule(1, 128).unwrap(), (1, 3));
        assert!(matches!(write_schedule(64, 128), Err(MemError::CycleOutOfRange { .. })));
        assert!(read_schedule(64, 128).is_err());
    }

    #[test]
    fn natural_fill_reads_half_apart_pairs() {
        let words: Vec<u64> = (0..128).collect();
        let pairs = replay(128, &words);
        let want: Vec<_> = (0..64).map(|i| (i, i + 64)).collect();
        assert_eq!(pairs, want);
    }

    #[test]
    fn written_words_land_where_layout_says() {
        // stage-0 layout: queue/slot of index i after a natural-order fill
        let n = 128;
        let mut bank = CoefficientBank::new(n, true).unwrap();
        for c in 0..n / 2 {
            let m = mask_of(write_schedule(c, n).unwrap());
            bank.tick(m, (Some(2 * c as u64), Some(2 * c as u64 + 1))).unwrap();
        }
        for i in 0..n {
            let (q, slot) = layout_address(i, 0, 7).unwrap();
            let mut probe = bank.queue(q).clone();
            for _ in 0..slot {
                probe.trigger(None);
            }
            assert_eq!(probe.head(), Some(i as u64));
        }
    }

    #[test]
    fn queue_latency_equals_depth() {
        let mut q = SrmQueue::new(5);
        assert_eq!(q.trigger(Some(42)), None);
        for _ in 0..4 {
            assert_eq!(q.trigger(None), None);
        }
        assert_eq!(q.trigger(None), Some(42));
        assert_eq!(q.occupancy(), 0);
    }

    #[test]
    fn empty_read_is_an_error_in_strict_mode() {
        let mut bank = CoefficientBank::new(8, true).unwrap();
        bank.set_mode(BankMode::Reading);
        assert_eq!(bank.tick(0b0101, (None, None)), Err(MemError::EmptyRead { queue: 0 }));

        let mut lax = CoefficientBank::new(8, false).unwrap();
        lax.set_mode(BankMode::Reading);
        assert_eq!(lax.tick(0b0101, (None, None)), Ok(None));
        assert_eq!(lax.anomalies().len(), 2);
    }

    #[test]
    fn merger_collision_and_overflow_are_detected() {
        let mut bank = CoefficientBank::new(8, true).unwrap();
        for c in 0..4 {
            bank.tick(mask_of(write_schedule(c, 8).unwrap()), (Some(1), Some(2))).unwrap();
        }
        let mut over = bank.clone();
        assert_eq!(over.tick(0b0011, (Some(9), Some(9))), Err(MemError::OverflowDetected { queue: 0 }));
        bank.set_mode(BankMode::Reading);
        assert_eq!(bank.tick(0b0011, (None, None)), Err(MemError::CollisionDetected { lane: 0 }));
        assert!(matches!(bank.tick(0b10000, (None, None)), Err(MemError::BadTrigger { .. })));
    }

    #[test]
    fn csrm_rotates_with_its_length() {
        let mut m = Csrm::new(64, 32);
        m.load_all(0..64u128).unwrap();
        for t in 0..300u128 {
            assert_eq!(m.tick().unwrap(), t % 64);
        }
        let mut one = Csrm::new(1, 33);
        one.load_all([7]).unwrap();
        assert_eq!(one.tick().unwrap(), 7);
        assert_eq!(one.tick().unwrap(), 7);
    }

    #[test]
    fn csrm_load_discipline() {
        let mut m = Csrm::new(4, 32);
        assert!(m.load(1).is_err());
        m.begin_load();
        assert!(m.tick().is_err());
        assert!(matches!(m.load(1 << 32), Err(MemError::WordTooWide { .. })));
        m.load(1).unwrap();
        assert!(m.finish_load().is_err());
        for w in 2..=4 {
            m.load(w).unwrap();
        }
        assert!(m.load(5).is_err());
        m.finish_load().unwrap();
        assert_eq!(m.tick().unwrap(), 1);
    }
}
