//! Golden-model transforms.
//!
//! Four routes to the same forward NTT, from slowest to most hardware-like:
//! the O(N^2) sum of products, the recursive even/odd split, the iterative
//! decimation-in-time Cooley-Tukey loop, and the constant-geometry loop whose
//! read/write pattern the pipelined datapath follows. All of them are exact.

use serde::Serialize;
use thiserror::Error;

use crate::modmath::{bit_reverse, rotate_right_bits, IndexOrder, ModError, ModulusContext, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefError {
    #[error("polynomial does not match context (length {len}, expected {n}, or a coefficient >= q)")]
    ContextMismatch { len: usize, n: usize },
    #[error("expected {expected:?} input order, got {got:?}")]
    WrongOrder { expected: IndexOrder, got: IndexOrder },
    #[error("stage {stage} out of range for a {stages}-stage transform")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error(transparent)]
    Mod(#[from] ModError),
}

/// One radix-2 butterfly as consumed by a datapath: inputs and twiddle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Butterfly {
    pub a: u64,
    pub b: u64,
    pub tw: u64,
}

fn check(poly: &Polynomial, ctx: &ModulusContext) -> Result<(), RefError> {
    if !poly.fits(ctx) {
        return Err(RefError::ContextMismatch { len: poly.len(), n: ctx.n() });
    }
    if poly.order != IndexOrder::Natural {
        return Err(RefError::WrongOrder { expected: IndexOrder::Natural, got: poly.order });
    }
    Ok(())
}

/// out[r] = sum_i a_i * omega^(r*i), evaluated term by term.
pub fn dft_bruteforce(poly: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(poly, ctx)?;
    let n = ctx.n();
    let q = u128::from(ctx.q());
    let out = (0..n)
        .map(|r| {
            let mut acc = 0u128;
            for (i, &a) in poly.coeffs.iter().enumerate() {
                let w = ctx.twiddles()[(r * i) % n];
                acc = (acc + u128::from(a) * u128::from(w)) % q;
            }
            acc as u64
        })
        .collect();
    Ok(Polynomial::new(out))
}

/// Recursive even/odd divide and conquer.
pub fn ntt_recursive(poly: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(poly, ctx)?;
    fn go(a: &[u64], stride: usize, ctx: &ModulusContext) -> Vec<u64> {
        let n = a.len();
        if n == 1 {
            return a.to_vec();
        }
        let even: Vec<u64> = a.iter().step_by(2).copied().collect();
        let odd: Vec<u64> = a.iter().skip(1).step_by(2).copied().collect();
        let e = go(&even, stride * 2, ctx);
        let o = go(&odd, stride * 2, ctx);
        let mut out = vec![0; n];
        for r in 0..n / 2 {
            // omega_n^r where omega_n = omega^stride
            let t = ctx.mul_naive(ctx.twiddles()[r * stride], o[r]);
            out[r] = ctx.mod_add(e[r], t);
            out[r + n / 2] = ctx.mod_sub(e[r], t);
        }
        out
    }
    Ok(Polynomial::new(go(&poly.coeffs, 1, ctx)))
}

/// In-place iterative DIT over a bit-reversed copy, with an optional hook
/// observing every butterfly as (stage, butterfly).
fn dit_in_place(
    coeffs: &[u64],
    ctx: &ModulusContext,
    inverse: bool,
    mut observe: impl FnMut(usize, Butterfly),
) -> Vec<u64> {
    let n = ctx.n();
    let bits = ctx.log_n();
    let mut a: Vec<u64> = (0..n).map(|p| coeffs[bit_reverse(p, bits)]).collect();
    let mut half = 1;
    let mut stage = 0;
    while half < n {
        let step = n / (2 * half);
        for start in (0..n).step_by(2 * half) {
            for j in 0..half {
                let e = (j * step) as i64;
                let tw = ctx.omega_pow(if inverse { -e } else { e });
                let (x, y) = (a[start + j], a[start + j + half]);
                observe(stage, Butterfly { a: x, b: y, tw });
                let t = ctx.mul_naive(tw, y);
                a[start + j] = ctx.mod_add(x, t);
                a[start + j + half] = ctx.mod_sub(x, t);
            }
        }
        half *= 2;
        stage += 1;
    }
    a
}

/// Iterative Cooley-Tukey NTT; natural order in and out.
pub fn ntt_ct(poly: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(poly, ctx)?;
    Ok(Polynomial::new(dit_in_place(&poly.coeffs, ctx, false, |_, _| {})))
}

/// Every butterfly of [`ntt_ct`], grouped by stage.
pub fn ntt_ct_stages(poly: &Polynomial, ctx: &ModulusContext) -> Result<Vec<Vec<Butterfly>>, RefError> {
    check(poly, ctx)?;
    let mut stages = vec![Vec::with_capacity(ctx.n() / 2); ctx.log_n() as usize];
    dit_in_place(&poly.coeffs, ctx, false, |s, b| stages[s].push(b));
    Ok(stages)
}

pub fn intt(poly: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(poly, ctx)?;
    let mut out = dit_in_place(&poly.coeffs, ctx, true, |_, _| {});
    for c in &mut out {
        *c = ctx.mul_naive(*c, ctx.n_inv());
    }
    Ok(Polynomial::new(out))
}

/// Exponents e_t (twiddle omega^e_t) that stage `k` consumes in
/// constant-geometry read order, one period long.
///
/// Obtained by replaying the DIT butterflies on coefficient labels and then
/// walking the constant-geometry read order of stage `k`.
pub fn twiddle_exponents(k: usize, n: usize) -> Result<Vec<usize>, RefError> {
    let bits = n.trailing_zeros();
    let stages = bits as usize;
    if k >= stages {
        return Err(RefError::StageOutOfRange { stage: k, stages });
    }
    // label -> exponent used when that label is the upper ("a") input at stage k
    let mut exponent_of = vec![usize::MAX; n];
    let labels: Vec<usize> = (0..n).map(|p| bit_reverse(p, bits)).collect();
    let half = 1usize << k;
    let step = n / (2 * half);
    for start in (0..n).step_by(2 * half) {
        for j in 0..half {
            exponent_of[labels[start + j]] = j * step;
        }
    }
    // constant geometry: stage k reads position j, which holds label rotr(j, k)
    let read: Vec<usize> = (0..n / 2)
        .map(|j| exponent_of[rotate_right_bits(j, k as u32, bits)])
        .collect();
    debug_assert!(read.iter().all(|&e| e != usize::MAX));
    let period = &read[..half];
    debug_assert!(read.chunks(half).all(|c| c == period));
    Ok(period.to_vec())
}

/// (tw, tw') pairs that stage `k`'s circular twiddle memory cycles through.
pub fn twiddle_schedule(k: usize, ctx: &ModulusContext) -> Result<Vec<(u64, u128)>, RefError> {
    Ok(twiddle_exponents(k, ctx.n())?
        .into_iter()
        .map(|e| (ctx.twiddles()[e], ctx.shoup_twiddles()[e]))
        .collect())
}

/// Constant-geometry NTT: every stage reads (Y[j], Y[j + N/2]) and writes
/// (Y'[2j], Y'[2j + 1]). Output is in bit-reversed order.
pub fn ntt_constant_geometry(poly: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(poly, ctx)?;
    let n = ctx.n();
    let mut y = poly.coeffs.clone();
    let mut next = vec![0; n];
    for k in 0..ctx.log_n() as usize {
        let sched = twiddle_schedule(k, ctx)?;
        for j in 0..n / 2 {
            let (tw, twp) = sched[j % sched.len()];
            let t = ctx.shoup_mul(y[j + n / 2], tw, twp);
            next[2 * j] = ctx.mod_add(y[j], t);
            next[2 * j + 1] = ctx.mod_sub(y[j], t);
        }
        std::mem::swap(&mut y, &mut next);
    }
    Ok(Polynomial::with_order(y, IndexOrder::BitReversed))
}

/// Reorders a bit-reversed vector into natural order.
pub fn to_natural(poly: &Polynomial) -> Polynomial {
    match poly.order {
        IndexOrder::BitReversed => {
            let bits = poly.len().trailing_zeros();
            let coeffs = (0..poly.len()).map(|i| poly.coeffs[bit_reverse(i, bits)]).collect();
            Polynomial::new(coeffs)
        }
        _ => poly.clone(),
    }
}

pub fn pointwise_mul(a: &Polynomial, b: &Polynomial, ctx: &ModulusContext) -> Polynomial {
    Polynomial::new(a.coeffs.iter().zip(&b.coeffs).map(|(&x, &y)| ctx.mul_naive(x, y)).collect())
}

/// a * b mod (x^N + 1, q) through psi-weighted transforms.
pub fn negacyclic_mul(a: &Polynomial, b: &Polynomial, ctx: &ModulusContext) -> Result<Polynomial, RefError> {
    check(a, ctx)?;
    check(b, ctx)?;
    let psi = ctx.psi()?;
    let psi_inv = ctx.inv(psi);
    let weights: Vec<u64> = std::iter::successors(Some(1u64), |&w| Some(ctx.mul_naive(w, psi)))
        .take(ctx.n())
        .collect();
    let weigh = |p: &Polynomial| {
        Polynomial::new(p.coeffs.iter().zip(&weights).map(|(&c, &w)| ctx.mul_naive(c, w)).collect())
    };
    let prod = pointwise_mul(&ntt_ct(&weigh(a), ctx)?, &ntt_ct(&weigh(b), ctx)?, ctx);
    let mut out = intt(&prod, ctx)?;
    let mut w = 1u64;
    for c in &mut out.coeffs {
        *c = ctx.mul_naive(*c, w);
        w = ctx.mul_naive(w, psi_inv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const Q31: u64 = 2_013_265_921;

    fn ctx17() -> ModulusContext {
        ModulusContext::new(17, 8, 32, 33).unwrap()
    }

    #[test]
    fn brute_force_examples() {
        let ctx = ctx17();
        let delta = Polynomial::monomial(8, 0);
        assert_eq!(dft_bruteforce(&delta, &ctx).unwrap().coeffs, vec![1; 8]);
        let p = Polynomial::new(vec![1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(dft_bruteforce(&p, &ctx).unwrap().coeffs, vec![2, 3, 5, 9, 0, 16, 14, 10]);
        assert_eq!(dft_bruteforce(&Polynomial::zero(8), &ctx).unwrap().coeffs, vec![0; 8]);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let ctx = ctx17();
        assert!(matches!(
            ntt_ct(&Polynomial::zero(4), &ctx),
            Err(RefError::ContextMismatch { len: 4, n: 8 })
        ));
        assert!(dft_bruteforce(&Polynomial::new(vec![17, 0, 0, 0, 0, 0, 0, 0]), &ctx).is_err());
        let rev = Polynomial::with_order(vec![0; 8], IndexOrder::BitReversed);
        assert!(matches!(intt(&rev, &ctx), Err(RefError::WrongOrder { .. })));
    }

    #[test]
    fn all_routes_agree_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 4, 8, 16, 128] {
            let ctx = ModulusContext::with_defaults(Q31, n).unwrap();
            for _ in 0..100 {
                let p = Polynomial::random(&ctx, &mut rng);
                let want = dft_bruteforce(&p, &ctx).unwrap();
                assert_eq!(ntt_ct(&p, &ctx).unwrap(), want);
                assert_eq!(ntt_recursive(&p, &ctx).unwrap(), want);
                let cg = ntt_constant_geometry(&p, &ctx).unwrap();
                assert_eq!(cg.order, IndexOrder::BitReversed);
                assert_eq!(to_natural(&cg), want);
                assert_eq!(intt(&want, &ctx).unwrap(), p);
            }
        }
    }

    #[test]
    fn size_one_is_identity() {
        let ctx = ModulusContext::new(17, 1, 32, 33).unwrap();
        let p = Polynomial::new(vec![9]);
        assert_eq!(ntt_ct(&p, &ctx).unwrap(), p);
        assert_eq!(intt(&p, &ctx).unwrap(), p);
    }

    #[test]
    fn twiddle_schedule_lengths_and_closed_form() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        assert_eq!(twiddle_schedule(0, &ctx).unwrap(), vec![(1, ctx.shoup_precompute(1))]);
        assert_eq!(twiddle_schedule(6, &ctx).unwrap().len(), 64);
        for k in 0..7 {
            let exps = twiddle_exponents(k, 128).unwrap();
            assert_eq!(exps.len(), 1 << k);
            for (t, &e) in exps.iter().enumerate() {
                assert_eq!(e, bit_reverse(t, k as u32) << (6 - k));
            }
            for (tw, twp) in twiddle_schedule(k, &ctx).unwrap() {
                let j = ctx.twiddles().iter().position(|&x| x == tw).unwrap();
                assert_eq!(ctx.shoup_twiddles()[j], twp);
            }
        }
        assert!(matches!(twiddle_exponents(7, 128), Err(RefError::StageOutOfRange { .. })));
    }

    #[test]
    fn stage_snapshots_have_expected_shape() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Polynomial::random(&ctx, &mut rng);
        let stages = ntt_ct_stages(&p, &ctx).unwrap();
        assert_eq!(stages.len(), 7);
        assert!(stages.iter().all(|s| s.len() == 64));
        assert!(stages[0].iter().all(|b| b.tw == 1));
        let mut first: Vec<_> = (0..64).map(|i| (p.coeffs[i], p.coeffs[i + 64])).collect();
        let mut seen: Vec<_> = stages[0].iter().map(|b| (b.a, b.b)).collect();
        first.sort_unstable();
        seen.sort_unstable();
        assert_eq!(first, seen);
    }

    #[test]
    fn negacyclic_identities() {
        let ctx = ModulusContext::with_defaults(Q31, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = Polynomial::random(&ctx, &mut rng);
        assert_eq!(negacyclic_mul(&Polynomial::monomial(128, 0), &b, &ctx).unwrap(), b);
        let r = negacyclic_mul(&Polynomial::monomial(128, 127), &Polynomial::monomial(128, 1), &ctx).unwrap();
        let mut want = vec![0; 128];
        want[0] = Q31 - 1;
        assert_eq!(r.coeffs, want);
    }

    #[test]
    fn negacyclic_needs_psi() {
        let ctx = ModulusContext::new(17, 16, 32, 33).unwrap();
        let one = Polynomial::monomial(16, 0);
        assert!(matches!(negacyclic_mul(&one, &one, &ctx), Err(RefError::Mod(ModError::NoPsiExists { .. }))));
    }
}
