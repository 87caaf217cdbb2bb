//! Exact modular arithmetic over word-sized NTT-friendly primes.
//!
//! A [`ModulusContext`] bundles the modulus, the transform size, the chosen
//! primitive root and the twiddle tables (plain and Shoup-precomputed) that
//! every other module consumes. Two hardware-style multipliers are provided:
//! Shoup (precomputed quotient, one conditional subtraction) and Barrett
//! (precomputed reciprocal, at most two conditional subtractions). Both are
//! checked against a plain double-width `%` in the tests.

use serde::Serialize;
use thiserror::Error;

/// Default datapath width in bits.
pub const DEFAULT_WIDTH: u32 = 32;
/// Default Shoup shift. The companion of a 32-bit twiddle fits in 33 bits.
pub const DEFAULT_BETA: u32 = 33;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("no primitive {n}-th root of unity modulo {q} (q - 1 is not divisible by {n})")]
    NoRootExists { q: u64, n: usize },
    #[error("modulus {q} does not fit a {width}-bit datapath (need q < 2^{})", width - 1)]
    ModulusTooLarge { q: u64, width: u32 },
    #[error("transform size {0} is not a power of two")]
    InvalidSize(usize),
    #[error("datapath width {0} outside 2..=64")]
    InvalidWidth(u32),
    #[error("shoup shift {beta} invalid for width {width} (need width - 1 <= beta <= 129 - width)")]
    InvalidShift { width: u32, beta: u32 },
    #[error("{omega} is not a primitive {n}-th root of unity modulo {q}")]
    NotPrimitiveRoot { omega: u64, q: u64, n: usize },
    #[error("no primitive {n2}-th root of unity modulo {q} for negacyclic weighting")]
    NoPsiExists { q: u64, n2: usize },
}

/// Index order of a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexOrder {
    Natural,
    BitReversed,
    /// Raw order in which the hardware pipeline emits results.
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    pub coeffs: Vec<u64>,
    pub order: IndexOrder,
}

impl Polynomial {
    pub fn new(coeffs: Vec<u64>) -> Self {
        Self { coeffs, order: IndexOrder::Natural }
    }

    pub fn with_order(coeffs: Vec<u64>, order: IndexOrder) -> Self {
        Self { coeffs, order }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![0; n])
    }

    /// Unit impulse at `index`, i.e. the monomial x^index.
    pub fn monomial(n: usize, index: usize) -> Self {
        let mut coeffs = vec![0; n];
        coeffs[index] = 1;
        Self::new(coeffs)
    }

    pub fn random<R: rand::Rng + ?Sized>(ctx: &ModulusContext, rng: &mut R) -> Self {
        Self::new((0..ctx.n()).map(|_| rng.gen_range(0..ctx.q())).collect())
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when the length matches `ctx` and every coefficient is reduced.
    pub fn fits(&self, ctx: &ModulusContext) -> bool {
        self.coeffs.len() == ctx.n() && self.coeffs.iter().all(|&c| c < ctx.q())
    }
}

/// Immutable modulus/transform context shared by all simulators and oracles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModulusContext {
    q: u64,
    n: usize,
    log_n: u32,
    width: u32,
    beta: u32,
    omega: u64,
    omega_inv: u64,
    n_inv: u64,
    psi: Option<u64>,
    barrett_mu: u128,
    twiddles: Vec<u64>,
    shoup_twiddles: Vec<u128>,
}

impl ModulusContext {
    /// Builds a context with the canonical root: the smallest primitive
    /// `n`-th root of unity among the powers of the smallest generator.
    pub fn new(q: u64, n: usize, width: u32, beta: u32) -> Result<Self, ModError> {
        Self::validate(q, n, width, beta)?;
        let omega = canonical_root(q, n);
        Self::build(q, n, width, beta, omega)
    }

    /// Context with the default 32-bit datapath, or a 64-bit one when `q` does
    /// not fit 31 bits.
    pub fn with_defaults(q: u64, n: usize) -> Result<Self, ModError> {
        if q < 1 << (DEFAULT_WIDTH - 1) {
            Self::new(q, n, DEFAULT_WIDTH, DEFAULT_BETA)
        } else {
            Self::new(q, n, 64, 65)
        }
    }

    /// Context around a caller-chosen primitive root (used when a small
    /// transform must agree with the root of a larger one).
    pub fn with_root(q: u64, n: usize, width: u32, beta: u32, omega: u64) -> Result<Self, ModError> {
        Self::validate(q, n, width, beta)?;
        if omega >= q || !is_primitive_root_of_unity(omega, n, q) {
            return Err(ModError::NotPrimitiveRoot { omega, q, n });
        }
        Self::build(q, n, width, beta, omega)
    }

    fn validate(q: u64, n: usize, width: u32, beta: u32) -> Result<(), ModError> {
        if !n.is_power_of_two() {
            return Err(ModError::InvalidSize(n));
        }
        if !(2..=64).contains(&width) {
            return Err(ModError::InvalidWidth(width));
        }
        if beta + 1 < width || width + beta > 129 {
            return Err(ModError::InvalidShift { width, beta });
        }
        if width < 64 && q >= 1u64 << (width - 1) || width == 64 && q >= 1u64 << 63 {
            return Err(ModError::ModulusTooLarge { q, width });
        }
        if !is_prime(q) {
            return Err(ModError::NotPrime(q));
        }
        if !(q - 1).is_multiple_of(n as u64) {
            return Err(ModError::NoRootExists { q, n });
        }
        Ok(())
    }

    fn build(q: u64, n: usize, width: u32, beta: u32, omega: u64) -> Result<Self, ModError> {
        let omega_inv = inv_mod(omega, q);
        let n_inv = inv_mod(n as u64 % q, q);
        let psi = find_psi(q, n, omega);

        let barrett_mu = if width == 64 {
            // floor(2^128 / q) without a 129-bit intermediate
            u128::MAX / q as u128 + u128::from(u128::MAX % q as u128 == q as u128 - 1)
        } else {
            (1u128 << (2 * width)) / q as u128
        };

        let mut twiddles = Vec::with_capacity(n);
        let mut w = 1u64;
        for _ in 0..n {
            twiddles.push(w);
            w = mul_naive(w, omega, q);
        }
        let shoup_twiddles = twiddles
            .iter()
            .map(|&t| (u128::from(t) << beta) / q as u128)
            .collect();

        Ok(Self {
            q,
            n,
            log_n: n.trailing_zeros(),
            width,
            beta,
            omega,
            omega_inv,
            n_inv,
            psi,
            barrett_mu,
            twiddles,
            shoup_twiddles,
        })
    }

    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn log_n(&self) -> u32 {
        self.log_n
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn beta(&self) -> u32 {
        self.beta
    }
    pub fn omega(&self) -> u64 {
        self.omega
    }
    pub fn omega_inv(&self) -> u64 {
        self.omega_inv
    }
    pub fn n_inv(&self) -> u64 {
        self.n_inv
    }
    pub fn barrett_mu(&self) -> u128 {
        self.barrett_mu
    }
    /// omega^j for j in [0, n).
    pub fn twiddles(&self) -> &[u64] {
        &self.twiddles
    }
    pub fn shoup_twiddles(&self) -> &[u128] {
        &self.shoup_twiddles
    }

    /// Primitive 2n-th root with psi^2 = omega, for negacyclic weighting.
    pub fn psi(&self) -> Result<u64, ModError> {
        self.psi.ok_or(ModError::NoPsiExists { q: self.q, n2: 2 * self.n })
    }

    /// omega^e for any integer exponent (reduced modulo n).
    pub fn omega_pow(&self, e: i64) -> u64 {
        self.twiddles[e.rem_euclid(self.n as i64) as usize]
    }

    #[inline]
    pub fn mod_add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn mod_sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    /// floor(b * 2^beta / q).
    #[inline]
    pub fn shoup_precompute(&self, b: u64) -> u128 {
        debug_assert!(b < self.q);
        (u128::from(b) << self.beta) / self.q as u128
    }

    #[inline]
    pub fn shoup_mul(&self, a: u64, b: u64, b_prime: u128) -> u64 {
        let steps = self.shoup_steps(a, b, b_prime);
        if steps.partial >= u128::from(self.q) {
            (steps.partial - u128::from(self.q)) as u64
        } else {
            steps.partial as u64
        }
    }

    /// Intermediate values of a Shoup multiplication before the final
    /// conditional subtraction.
    #[inline]
    pub fn shoup_steps(&self, a: u64, b: u64, b_prime: u128) -> ShoupSteps {
        debug_assert!(a < self.q && b < self.q);
        let quotient = (u128::from(a) * b_prime) >> self.beta;
        let partial = (u128::from(a) * u128::from(b)).wrapping_sub(quotient * u128::from(self.q));
        ShoupSteps { quotient, partial }
    }

    #[inline]
    pub fn barrett_mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        let x = u128::from(a) * u128::from(b);
        let shift = 2 * self.width;
        let estimate = if shift < 128 && x.leading_zeros() + self.barrett_mu.leading_zeros() >= 128 {
            // the product fits in 128 bits
            (x * self.barrett_mu) >> shift
        } else {
            let (hi, lo) = mul_wide_u128(x, self.barrett_mu);
            if shift >= 128 {
                hi >> (shift - 128)
            } else {
                (hi << (128 - shift)) | (lo >> shift)
            }
        };
        let q = u128::from(self.q);
        let mut r = x - estimate * q;
        if r >= q {
            r -= q;
        }
        if r >= q {
            r -= q;
        }
        debug_assert!(r < q);
        r as u64
    }

    /// Reference product through a plain double-width remainder.
    #[inline]
    pub fn mul_naive(&self, a: u64, b: u64) -> u64 {
        mul_naive(a, b, self.q)
    }

    pub fn pow(&self, base: u64, exp: u64) -> u64 {
        pow_mod(base, exp, self.q)
    }

    pub fn inv(&self, a: u64) -> u64 {
        inv_mod(a, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShoupSteps {
    /// floor(a * b' / 2^beta)
    pub quotient: u128,
    /// a*b - quotient*q, in [0, 2q)
    pub partial: u128,
}

#[inline]
pub fn mul_naive(a: u64, b: u64, q: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(q)) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_naive(acc, base, q);
        }
        base = mul_naive(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo a prime via Fermat.
pub fn inv_mod(a: u64, q: u64) -> u64 {
    debug_assert!(!a.is_multiple_of(q) || q == 1);
    pow_mod(a, q - 2, q)
}

/// Full 256-bit product of two u128 values as (hi, lo).
fn mul_wide_u128(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

/// Deterministic Miller-Rabin, exact for every u64.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_naive(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Pollard-Brent with fixed seeds; returns a nontrivial factor of composite `n`.
fn pollard_brent(n: u64) -> u64 {
    if n.is_multiple_of(2) {
        return 2;
    }
    for c in 1u64.. {
        let f = |x: u64| (mul_naive(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
    }
    unreachable!()
}

/// Distinct prime factors, ascending.
pub fn prime_factors(n: u64) -> Vec<u64> {
    fn split(n: u64, out: &mut Vec<u64>) {
        if n == 1 {
            return;
        }
        if is_prime(n) {
            out.push(n);
            return;
        }
        let d = pollard_brent(n);
        split(d, out);
        split(n / d, out);
    }
    let mut out = Vec::new();
    let mut m = n;
    for p in [2u64, 3, 5, 7, 11, 13] {
        if m.is_multiple_of(p) {
            out.push(p);
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
    }
    split(m, &mut out);
    out.sort_unstable();
    out.dedup();
    out
}

/// Smallest generator of the multiplicative group modulo prime `q`.
pub fn smallest_generator(q: u64) -> u64 {
    if q == 2 {
        return 1;
    }
    let factors = prime_factors(q - 1);
    (2..q)
        .find(|&g| factors.iter().all(|&p| pow_mod(g, (q - 1) / p, q) != 1))
        .expect("a prime modulus always has a generator")
}

/// For power-of-two `n`: omega^n = 1 and omega^(n/2) != 1.
pub fn is_primitive_root_of_unity(omega: u64, n: usize, q: u64) -> bool {
    if pow_mod(omega, n as u64, q) != 1 {
        return false;
    }
    n == 1 || pow_mod(omega, n as u64 / 2, q) != 1
}

fn canonical_root(q: u64, n: usize) -> u64 {
    if n == 1 {
        return 1;
    }
    let g = smallest_generator(q);
    let base = pow_mod(g, (q - 1) / n as u64, q);
    // all primitive n-th roots are the odd powers of `base`
    let step = mul_naive(base, base, q);
    let mut cur = base;
    let mut best = base;
    for _ in 0..n / 2 {
        best = best.min(cur);
        cur = mul_naive(cur, step, q);
    }
    best
}

fn find_psi(q: u64, n: usize, omega: u64) -> Option<u64> {
    let n2 = 2 * n as u64;
    if !(q - 1).is_multiple_of(n2) {
        return None;
    }
    let g = smallest_generator(q);
    let base = pow_mod(g, (q - 1) / n2, q);
    let step = mul_naive(base, base, q);
    let mut cur = base;
    let mut best: Option<u64> = None;
    for _ in 0..n {
        if mul_naive(cur, cur, q) == omega {
            best = Some(best.map_or(cur, |b| b.min(cur)));
        }
        cur = mul_naive(cur, step, q);
    }
    best
}

/// Reverses the low `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    debug_assert!(bits == usize::BITS || i >> bits == 0);
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Rotates the `bits`-wide value `i` left by `k`.
#[inline]
pub fn rotate_left_bits(i: usize, k: u32, bits: u32) -> usize {
    debug_assert!(i >> bits == 0);
    if bits == 0 {
        return 0;
    }
    let k = k % bits;
    let mask = (1usize << bits) - 1;
    ((i << k) | (i >> ((bits - k) % bits))) & mask
}

#[inline]
pub fn rotate_right_bits(i: usize, k: u32, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    rotate_left_bits(i, bits - k % bits, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Q31: u64 = 2_013_265_921;

    fn ctx17() -> ModulusContext {
        ModulusContext::new(17, 8, 32, 33).unwrap()
    }

    /// Order of `x` in Z_q^*, by exhaustive powering.
    fn order(x: u64, q: u64) -> u64 {
        let mut acc = x % q;
        let mut k = 1;
        while acc != 1 {
            acc = acc * x % q;
            k += 1;
        }
        k
    }

    #[test]
    fn root_for_17_is_smallest_order_8_element() {
        let ctx = ctx17();
        let exhaustive = (2..17).find(|&x| order(x, 17) == 8).unwrap();
        assert_eq!(exhaustive, 2);
        assert_eq!(ctx.omega(), 2);
        assert_eq!(ctx.pow(2, 4), 16);
        assert_eq!(ctx.omega_inv(), 9);
        assert_eq!(ctx.n_inv(), 15);
        assert_eq!(ctx.twiddles(), &[1, 2, 4, 8, 16, 15, 13, 9]);
    }

    #[test]
    fn trivial_size_one() {
        let ctx = ModulusContext::new(17, 1, 32, 33).unwrap();
        assert_eq!(ctx.omega(), 1);
        assert_eq!(ctx.twiddles(), &[1]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(ModulusContext::new(15, 8, 32, 33), Err(ModError::NotPrime(15)));
        assert_eq!(
            ModulusContext::new(19, 8, 32, 33),
            Err(ModError::NoRootExists { q: 19, n: 8 })
        );
        assert!(matches!(
            ModulusContext::new(Q31, 8, 16, 33),
            Err(ModError::ModulusTooLarge { .. })
        ));
        assert_eq!(ModulusContext::new(17, 6, 32, 33), Err(ModError::InvalidSize(6)));
        assert!(matches!(ModulusContext::new(17, 8, 32, 20), Err(ModError::InvalidShift { .. })));
        assert!(matches!(
            ModulusContext::with_root(17, 8, 32, 33, 4),
            Err(ModError::NotPrimitiveRoot { .. })
        ));
    }

    #[test]
    fn context_invariants_hold_for_large_prime() {
        for n in [2usize, 8, 128, 16384] {
            let ctx = ModulusContext::with_defaults(Q31, n).unwrap();
            let q = ctx.q();
            assert_eq!(ctx.pow(ctx.omega(), n as u64), 1);
            if n > 1 {
                assert_ne!(ctx.pow(ctx.omega(), n as u64 / 2), 1);
            }
            assert_eq!(ctx.mul_naive(ctx.omega(), ctx.omega_inv()), 1);
            assert_eq!(ctx.mul_naive(n as u64 % q, ctx.n_inv()), 1);
            assert!(ctx.twiddles().iter().all(|&t| t < q));
            assert!(ctx.shoup_twiddles().iter().all(|&t| t < 1u128 << 33));
            for j in 0..n {
                let a = ctx.twiddles()[j];
                let b = ctx.twiddles()[(n - j) % n];
                assert_eq!(ctx.mul_naive(a, b), 1);
            }
            let psi = ctx.psi().unwrap();
            assert_eq!(ctx.mul_naive(psi, psi), ctx.omega());
            assert_ne!(ctx.pow(psi, n as u64), 1);
        }
    }

    #[test]
    fn psi_missing_when_2n_does_not_divide() {
        let ctx = ModulusContext::new(17, 16, 32, 33).unwrap();
        assert_eq!(ctx.psi(), Err(ModError::NoPsiExists { q: 17, n2: 32 }));
    }

    #[test]
    fn add_sub_examples() {
        let ctx = ctx17();
        assert_eq!(ctx.mod_add(0, 5), 5);
        assert_eq!(ctx.mod_add(16, 3), 2);
        assert_eq!(ctx.mod_sub(3, 5), 15);
    }

    #[test]
    fn shoup_precompute_examples() {
        let ctx = ctx17();
        // floor(5 * 2^33 / 17), by hand: 42949672960 / 17
        assert_eq!(ctx.shoup_precompute(5), 2_526_451_350);
        assert_eq!(ctx.shoup_precompute(0), 0);
        assert!(ctx.shoup_precompute(16) < 1u128 << 33);
        assert_eq!(ctx.shoup_precompute(1), (1u128 << 33) / 17);
    }

    #[test]
    fn small_products() {
        let ctx = ctx17();
        let bp = ctx.shoup_precompute(5);
        assert_eq!(ctx.shoup_mul(7, 5, bp), 1);
        assert_eq!(ctx.barrett_mul(7, 5), 1);
        assert_eq!(ctx.barrett_mul(0, 13), 0);
        for a in 0..17 {
            assert_eq!(ctx.shoup_mul(a, 1, ctx.shoup_precompute(1)), a);
        }
    }

    #[test]
    fn exhaustive_multipliers_small_primes() {
        for q in [17u64, 257] {
            let ctx = ModulusContext::new(q, 16, 32, 33).unwrap();
            for b in 0..q {
                let bp = ctx.shoup_precompute(b);
                for a in 0..q {
                    let want = (a * b) % q;
                    let steps = ctx.shoup_steps(a, b, bp);
                    assert!(steps.partial < 2 * u128::from(q));
                    assert_eq!(ctx.shoup_mul(a, b, bp), want);
                    assert_eq!(ctx.barrett_mul(a, b), want);
                }
            }
        }
    }

    #[test]
    fn random_31_bit_multipliers() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let a = rng.gen_range(0..Q31);
            let b = rng.gen_range(0..Q31);
            let want = ((a as u128 * b as u128) % Q31 as u128) as u64;
            let bp = ctx.shoup_precompute(b);
            assert!(ctx.shoup_steps(a, b, bp).partial < 2 * u128::from(Q31));
            assert_eq!(ctx.shoup_mul(a, b, bp), want);
            assert_eq!(ctx.barrett_mul(a, b), want);
        }
    }

    #[test]
    fn wide_datapath_multipliers() {
        // 0xffffffff00000001 exceeds 2^63, so use a 60-bit NTT-friendly prime
        let q = 1_152_921_504_606_830_593; // 2^60 - 2^14 + 1
        assert!(is_prime(q));
        let ctx = ModulusContext::new(q, 1024, 64, 65).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let a = rng.gen_range(0..q);
            let b = rng.gen_range(0..q);
            let want = ((a as u128 * b as u128) % q as u128) as u64;
            let bp = ctx.shoup_precompute(b);
            assert!(ctx.shoup_steps(a, b, bp).partial < 2 * u128::from(q));
            assert_eq!(ctx.shoup_mul(a, b, bp), want);
            assert_eq!(ctx.barrett_mul(a, b), want);
        }
        for (a, b) in [(q - 1, q - 1), (q - 1, 1), (1, q - 1)] {
            let want = ((a as u128 * b as u128) % q as u128) as u64;
            assert_eq!(ctx.barrett_mul(a, b), want);
            assert_eq!(ctx.shoup_mul(a, b, ctx.shoup_precompute(b)), want);
        }
    }

    #[test]
    fn wide_mul_matches_split_arithmetic() {
        let (hi, lo) = mul_wide_u128(u128::MAX, u128::MAX);
        assert_eq!(hi, u128::MAX - 1);
        assert_eq!(lo, 1);
        assert_eq!(mul_wide_u128(1 << 100, 1 << 100), (1 << 72, 0));
    }

    #[test]
    fn primality_and_factoring() {
        let primes: Vec<u64> = (0..200).filter(|&n| is_prime(n)).collect();
        let sieve: Vec<u64> = (0..200u64)
            .filter(|&n| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
            .collect();
        assert_eq!(primes, sieve);
        assert!(is_prime(Q31));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
        assert_eq!(prime_factors(Q31 - 1), vec![2, 3, 5]);
        assert_eq!(prime_factors(600_851_475_143), vec![71, 839, 1471, 6857]);
        assert_eq!(smallest_generator(17), 3);
        assert_eq!(smallest_generator(Q31), 31);
    }

    #[test]
    fn bit_helpers() {
        assert_eq!(bit_reverse(1, 7), 64);
        assert_eq!(bit_reverse(0b0000110, 7), 0b0110000);
        assert_eq!(rotate_left_bits(0b1000000, 1, 7), 1);
        for i in 0..128 {
            assert_eq!(rotate_left_bits(i, 7, 7), i);
            assert_eq!(bit_reverse(bit_reverse(i, 7), 7), i);
            assert_eq!(rotate_right_bits(rotate_left_bits(i, 3, 7), 3, 7), i);
        }
    }

    proptest! {
        #[test]
        fn rotation_composed_s_times_is_identity(bits in 1u32..16, raw in any::<usize>()) {
            let i = raw & ((1usize << bits) - 1);
            let mut j = i;
            for _ in 0..bits {
                j = rotate_left_bits(j, 1, bits);
            }
            prop_assert_eq!(j, i);
        }

        #[test]
        fn multipliers_agree_on_31_bit_prime(a in 0..Q31, b in 0..Q31) {
            let ctx = ModulusContext::with_defaults(Q31, 2).unwrap();
            let want = ctx.mul_naive(a, b);
            prop_assert_eq!(ctx.shoup_mul(a, b, ctx.shoup_precompute(b)), want);
            prop_assert_eq!(ctx.barrett_mul(a, b), want);
        }
    }
}
