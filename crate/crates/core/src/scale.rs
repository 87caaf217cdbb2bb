//! Large transforms built from small kernels, plus the cycle and throughput
//! estimators for big NTTs and key switching, the CKKS parameter bound, and
//! RNS conversion.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::modmath::{IndexOrder, ModError, ModulusContext, Polynomial};
use crate::pipesim::{apply_output_permutation, derive_output_permutation, run_pipeline, PipeError, PipelineConfig};
use crate::reference::{ntt_ct, RefError};
use crate::report::{group_thousands, Clock, CostReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaleError {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("basis moduli {0} and {1} are not coprime")]
    NotCoprime(u64, u64),
    #[error("value is not below the basis product")]
    OutOfRange,
    #[error("empty or zero modulus in basis")]
    BadBasis,
    #[error(transparent)]
    Ref(#[from] RefError),
    #[error(transparent)]
    Pipe(#[from] PipeError),
    #[error(transparent)]
    Mod(#[from] ModError),
}

/// A fixed-size forward NTT in natural order, applied to a batch.
pub trait NttKernel {
    fn context(&self) -> &ModulusContext;

    fn forward_batch(&self, inputs: &[Polynomial]) -> Result<Vec<Polynomial>, ScaleError>;

    fn size(&self) -> usize {
        self.context().n()
    }
}

/// Context for the m-point kernel of an m*m-point transform: its root is
/// omega_big^m so the pieces recombine into the big transform exactly.
pub fn kernel_context(big: &ModulusContext) -> Result<ModulusContext, ScaleError> {
    let m = square_side(big.n())?;
    Ok(ModulusContext::with_root(big.q(), m, big.width(), big.beta(), big.omega_pow(m as i64))?)
}

fn square_side(n: usize) -> Result<usize, ScaleError> {
    let log = n.trailing_zeros();
    if !n.is_power_of_two() || !log.is_multiple_of(2) || n < 4 {
        return Err(ScaleError::SizeMismatch(format!("{n} is not m*m for a power of two m >= 2")));
    }
    Ok(1 << (log / 2))
}

pub struct ReferenceKernel {
    ctx: ModulusContext,
}

impl ReferenceKernel {
    pub fn new(ctx: ModulusContext) -> Self {
        Self { ctx }
    }

    pub fn for_big(big: &ModulusContext) -> Result<Self, ScaleError> {
        Ok(Self::new(kernel_context(big)?))
    }
}

impl NttKernel for ReferenceKernel {
    fn context(&self) -> &ModulusContext {
        &self.ctx
    }

    fn forward_batch(&self, inputs: &[Polynomial]) -> Result<Vec<Polynomial>, ScaleError> {
        inputs.iter().map(|p| Ok(ntt_ct(p, &self.ctx)?)).collect()
    }
}

/// Streams each batch through the cycle-accurate pipeline back to back and
/// undoes its output ordering.
pub struct PipelineKernel {
    ctx: ModulusContext,
    config: PipelineConfig,
    perm: Vec<usize>,
    cycles: std::cell::Cell<u64>,
}

impl PipelineKernel {
    pub fn new(ctx: ModulusContext, config: PipelineConfig) -> Result<Self, ScaleError> {
        let perm = derive_output_permutation(&ctx, &config)?;
        Ok(Self { ctx, config, perm, cycles: std::cell::Cell::new(0) })
    }

    pub fn for_big(big: &ModulusContext, config: PipelineConfig) -> Result<Self, ScaleError> {
        Self::new(kernel_context(big)?, config)
    }

    /// Simulated cycles spent in all batches so far.
    pub fn cycles(&self) -> u64 {
        self.cycles.get()
    }
}

impl NttKernel for PipelineKernel {
    fn context(&self) -> &ModulusContext {
        &self.ctx
    }

    fn forward_batch(&self, inputs: &[Polynomial]) -> Result<Vec<Polynomial>, ScaleError> {
        let run = run_pipeline(inputs, &self.ctx, &self.config)?;
        self.cycles.set(self.cycles.get() + run.total_cycles);
        Ok(run.outputs.iter().map(|o| apply_output_permutation(o, &self.perm)).collect())
    }
}

/// Forward NTT of size m*m from m-point kernels.
///
/// With index n = m*n1 + n2 and frequency k = k1 + m*k2: column transforms
/// over n1, a twiddle correction omega^(n2*k1), then row transforms over n2.
pub fn four_step_ntt(
    poly: &Polynomial,
    big: &ModulusContext,
    kernel: &dyn NttKernel,
) -> Result<Polynomial, ScaleError> {
    let n = big.n();
    let m = square_side(n)?;
    if poly.len() != n || poly.order != IndexOrder::Natural || !poly.fits(big) {
        return Err(ScaleError::SizeMismatch(format!("input of length {} for a {n}-point context", poly.len())));
    }
    let kctx = kernel.context();
    if kernel.size() != m || kctx.q() != big.q() || kctx.omega() != big.omega_pow(m as i64) {
        return Err(ScaleError::SizeMismatch(format!("kernel does not fit a {m}x{m} split")));
    }

    let columns: Vec<Polynomial> =
        (0..m).map(|n2| Polynomial::new((0..m).map(|n1| poly.coeffs[m * n1 + n2]).collect())).collect();
    let col_out = kernel.forward_batch(&columns)?;

    // rows[k1][n2] = col_out[n2][k1] * omega^(n2*k1)
    let rows: Vec<Polynomial> = (0..m)
        .map(|k1| {
            Polynomial::new(
                (0..m).map(|n2| big.mul_naive(col_out[n2].coeffs[k1], big.twiddles()[(n2 * k1) % n])).collect(),
            )
        })
        .collect();
    let row_out = kernel.forward_batch(&rows)?;

    let mut out = vec![0u64; n];
    for (k1, r) in row_out.iter().enumerate() {
        for (k2, &v) in r.coeffs.iter().enumerate() {
            out[k1 + m * k2] = v;
        }
    }
    Ok(Polynomial::new(out))
}

pub const KERNEL_N: usize = 128;
pub const BASE_BIG_N: usize = 1 << 14;
pub const DEFAULT_FLUSH: u64 = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BigNttCost {
    pub n_big: usize,
    pub units: usize,
    pub cycles: u64,
    pub no_flush_cycles: u64,
    pub flush: u64,
    pub wall_ns: f64,
    pub no_flush_ns: f64,
}

/// Cycles for an n_big-point NTT on `units` parallel 128-point pipelines:
/// two passes of 128 transforms, each 64 cycles apart, per 2^14 block, plus
/// one pipeline flush. Reordering is not counted.
pub fn big_ntt_cycles(n_big: usize, units: usize, flush: u64, clock: Clock) -> Result<BigNttCost, ScaleError> {
    if !n_big.is_power_of_two() || n_big < BASE_BIG_N {
        return Err(ScaleError::SizeMismatch(format!("{n_big} is not a power of two >= {BASE_BIG_N}")));
    }
    if units == 0 {
        return Err(ScaleError::SizeMismatch("need at least one NTT unit".into()));
    }
    let blocks = (n_big / BASE_BIG_N) as u64;
    let per_pass = (KERNEL_N as u64 * (KERNEL_N as u64 / 2)).div_ceil(units as u64);
    let no_flush = blocks * per_pass * 2;
    let cycles = no_flush + flush;
    Ok(BigNttCost {
        n_big,
        units,
        cycles,
        no_flush_cycles: no_flush,
        flush,
        wall_ns: clock.ns(cycles),
        no_flush_ns: clock.ns(no_flush),
    })
}

impl BigNttCost {
    pub fn to_cost_report(&self, clock: Clock) -> CostReport {
        CostReport::new(format!("{}-point NTT on {} unit(s) @ {}", self.n_big, self.units, clock.describe()))
            .row("cycles", self.cycles as f64, "cycles", format!("{} cycles", group_thousands(self.cycles)))
            .row(
                "no_flush_cycles",
                self.no_flush_cycles as f64,
                "cycles",
                format!("{} cycles", group_thousands(self.no_flush_cycles)),
            )
            .row("flush_cycles", self.flush as f64, "cycles", format!("{} cycles", self.flush))
            .row("latency_ns", self.wall_ns, "ns", format!("{:.1} ns", self.wall_ns))
            .row("no_flush_latency_ns", self.no_flush_ns, "ns", format!("{:.1} ns", self.no_flush_ns))
            .note("reorder cycles between the two passes are not counted")
    }
}

/// Cycles per key-switch iteration at N = 2^14 (one iteration per RNS limb).
pub const KEYSWITCH_CYCLES_PER_LIMB: u64 = 2600;
pub const KEYSWITCH_NTT_UNITS: u64 = 90;
pub const KEYSWITCH_MOD_MULTIPLIERS: u64 = 302;
pub const KEYSWITCH_MOD_ADDERS: u64 = 150;
/// Published CPU-FPGA key-switch rate used as the comparison baseline.
pub const HEAX_KEYSWITCH_PER_S: u64 = 2616;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeySwitchParams {
    pub n: usize,
    /// L + 1 limbs.
    pub limbs: u64,
    pub clock: Clock,
}

impl Default for KeySwitchParams {
    fn default() -> Self {
        Self { n: BASE_BIG_N, limbs: 8, clock: Clock::DESIGN_PERIOD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeySwitchEstimate {
    pub cycles: u64,
    pub ops_per_s: f64,
    /// floor(ops/s) in integer arithmetic.
    pub ops_per_s_floor: u64,
    pub heax_ratio: f64,
}

pub fn keyswitch_estimate(p: &KeySwitchParams) -> Result<(KeySwitchEstimate, CostReport), ScaleError> {
    if !p.n.is_power_of_two() || p.n < BASE_BIG_N || p.limbs == 0 {
        return Err(ScaleError::SizeMismatch(format!("n = {}, L+1 = {}", p.n, p.limbs)));
    }
    let cycles = KEYSWITCH_CYCLES_PER_LIMB * (p.n / BASE_BIG_N) as u64 * p.limbs;
    let ops = p.clock.rate(cycles);
    let est = KeySwitchEstimate {
        cycles,
        ops_per_s: ops,
        ops_per_s_floor: p.clock.rate_floor(cycles),
        heax_ratio: ops / HEAX_KEYSWITCH_PER_S as f64,
    };
    let report = CostReport::new(format!("key switch, N = {}, L+1 = {} @ {}", p.n, p.limbs, p.clock.describe()))
        .row("ntt128_units", KEYSWITCH_NTT_UNITS as f64, "units", format!("~{KEYSWITCH_NTT_UNITS}"))
        .row("mod_multipliers", KEYSWITCH_MOD_MULTIPLIERS as f64, "units", KEYSWITCH_MOD_MULTIPLIERS.to_string())
        .row("mod_adders", KEYSWITCH_MOD_ADDERS as f64, "units", KEYSWITCH_MOD_ADDERS.to_string())
        .row("cycles", cycles as f64, "cycles", format!("{} cycles", group_thousands(cycles)))
        .row("throughput", ops, "ops/s", format!("{:.1} ops/s", ops))
        .row(
            "throughput_floor",
            est.ops_per_s_floor as f64,
            "ops/s",
            format!("{} ops/s", group_thousands(est.ops_per_s_floor)),
        )
        .row("heax_ratio", est.heax_ratio, "x", format!("{:.1}x vs {HEAX_KEYSWITCH_PER_S} ops/s", est.heax_ratio))
        .note("unit counts are recorded constants, not derived");
    Ok((est, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecurityCheck {
    pub satisfied: bool,
    /// N minus the required ring dimension.
    pub margin: f64,
    pub required: f64,
}

/// N >= ((lambda + 110) / 7.2) * log2(P * q_L).
pub fn ckks_security_check(n: u64, lambda: f64, log_pql: f64) -> SecurityCheck {
    let required = (lambda + 110.0) / 7.2 * log_pql;
    SecurityCheck { satisfied: n as f64 >= required, margin: n as f64 - required, required }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Inverse of a modulo m (gcd 1), m not necessarily prime.
fn inv_any(a: u64, m: u64) -> u64 {
    let (mut r0, mut r1) = (i128::from(m), i128::from(a % m));
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    t0.rem_euclid(i128::from(m)) as u64
}

fn check_basis(basis: &[u64]) -> Result<BigUint, ScaleError> {
    if basis.is_empty() || basis.contains(&0) {
        return Err(ScaleError::BadBasis);
    }
    for (i, &a) in basis.iter().enumerate() {
        for &b in &basis[i + 1..] {
            if gcd(a, b) != 1 {
                return Err(ScaleError::NotCoprime(a, b));
            }
        }
    }
    Ok(basis.iter().map(|&p| BigUint::from(p)).product())
}

pub fn rns_decompose(x: &BigUint, basis: &[u64]) -> Result<Vec<u64>, ScaleError> {
    let big = check_basis(basis)?;
    if *x >= big {
        return Err(ScaleError::OutOfRange);
    }
    Ok(basis.iter().map(|&p| (x % p).to_u64().unwrap()).collect())
}

/// Chinese remaindering: the unique x below the basis product.
pub fn rns_reconstruct(residues: &[u64], basis: &[u64]) -> Result<BigUint, ScaleError> {
    let big = check_basis(basis)?;
    if residues.len() != basis.len() || residues.iter().zip(basis).any(|(r, p)| r >= p) {
        return Err(ScaleError::OutOfRange);
    }
    let mut x = BigUint::zero();
    for (&r, &p) in residues.iter().zip(basis) {
        let m_i = &big / p;
        let inv = inv_any((&m_i % p).to_u64().unwrap(), p);
        x += m_i * ((u128::from(r) * u128::from(inv)) % u128::from(p));
    }
    Ok(x % big)
}
