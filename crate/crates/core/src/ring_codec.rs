//! Canonical-embedding encode/decode between complex slot vectors and
//! coefficient rings modulo Q.
//!
//! The ring R_Q = Z_Q[X]/(X^N + 1) with N = 2n packs n complex slots by
//! evaluating at the odd primitive 2N-th roots of unity. Q is held as a
//! single arbitrary-precision modulus (the product of the active chain
//! primes): conversion correctness only needs mod-Q arithmetic, so no RNS or
//! NTT machinery appears here. The transforms run in double-double precision
//! so decoded shares round to the intended integers even at ~2^84 moduli.

use crate::dd::{fft_in_place, sincos_taylor, Dd, DdComplex};
use num_bigint::{BigInt, BigUint, RandBigInt};
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("encoded coefficient magnitude reaches Q/2; scale or inputs too large")]
    Overflow,
    #[error("slot vector has length {0}, codec expects {1}")]
    LengthMismatch(usize, usize),
    #[error("ring element has modulus {0}, expected {1}")]
    ModulusMismatch(BigUint, BigUint),
}

pub type CodecResult<T> = Result<T, CodecError>;

/// Coefficient vector modulo Q, canonical representatives in [0, Q).
#[derive(Debug, Clone, PartialEq)]
pub struct RingElem {
    coeffs: Vec<BigUint>,
    modulus: BigUint,
}

impl RingElem {
    pub fn zero(n_ring: usize, modulus: BigUint) -> Self {
        Self {
            coeffs: vec![BigUint::zero(); n_ring],
            modulus,
        }
    }

    pub fn from_signed(coeffs: &[BigInt], modulus: &BigUint) -> Self {
        let q = BigInt::from(modulus.clone());
        let coeffs = coeffs
            .iter()
            .map(|c| {
                let r = c % &q;
                let r = if r.is_negative() { r + &q } else { r };
                r.to_biguint().unwrap()
            })
            .collect();
        Self {
            coeffs,
            modulus: modulus.clone(),
        }
    }

    pub fn n_ring(&self) -> usize {
        self.coeffs.len()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn coeffs(&self) -> &[BigUint] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Centered representative cl_Q(c) in (-Q/2, Q/2].
    pub fn centered(&self, idx: usize) -> BigInt {
        let c = BigInt::from(self.coeffs[idx].clone());
        let q = BigInt::from(self.modulus.clone());
        if &c * 2 > q {
            c - q
        } else {
            c
        }
    }

    pub fn add(&self, other: &RingElem) -> CodecResult<RingElem> {
        self.check(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| {
                let s = a + b;
                if s >= self.modulus {
                    s - &self.modulus
                } else {
                    s
                }
            })
            .collect();
        Ok(RingElem {
            coeffs,
            modulus: self.modulus.clone(),
        })
    }

    pub fn neg(&self) -> RingElem {
        let coeffs = self
            .coeffs
            .iter()
            .map(|a| {
                if a.is_zero() {
                    BigUint::zero()
                } else {
                    &self.modulus - a
                }
            })
            .collect();
        RingElem {
            coeffs,
            modulus: self.modulus.clone(),
        }
    }

    pub fn sub(&self, other: &RingElem) -> CodecResult<RingElem> {
        self.add(&other.neg())
    }

    fn check(&self, other: &RingElem) -> CodecResult<()> {
        if self.modulus != other.modulus {
            return Err(CodecError::ModulusMismatch(
                other.modulus.clone(),
                self.modulus.clone(),
            ));
        }
        if self.coeffs.len() != other.coeffs.len() {
            return Err(CodecError::LengthMismatch(
                other.coeffs.len(),
                self.coeffs.len(),
            ));
        }
        Ok(())
    }
}

/// Uniformly random ring element from a seeded generator.
pub fn uniform_ring(n_ring: usize, modulus: &BigUint, rng: &mut impl Rng) -> RingElem {
    let coeffs = (0..n_ring)
        .map(|_| rng.gen_biguint_below(modulus))
        .collect();
    RingElem {
        coeffs,
        modulus: modulus.clone(),
    }
}

fn dd_from_bigint(v: &BigInt) -> Dd {
    let hi = v.to_f64().unwrap_or(0.0);
    // hi is within one ulp of v, so the residual fits comfortably in f64.
    let r = v - BigInt::from(hi as i128);
    let lo = r.to_f64().unwrap_or(0.0);
    Dd { hi: hi as i128 as f64, lo }
}

pub fn dd_from_i128(v: i128) -> Dd {
    let hi = v as f64;
    let lo = (v - hi as i128) as f64;
    Dd { hi, lo }
}

/// Canonical embedding codec for a fixed slot count.
///
/// Evaluation points are omega_j = zeta^(2j+1) with zeta = e^(i*pi/N), one
/// representative per conjugate pair, so real polynomials carry n free
/// complex slots.
pub struct Codec {
    n: usize,
    n_ring: usize,
    /// zeta^k for k in [0, N): e^(i*pi*k/N).
    zeta_pow: Vec<DdComplex>,
    /// e^(2*pi*i*k/N) for k < N/2, the FFT twiddles (equal to zeta^(2k)).
    fft_twiddles: Vec<DdComplex>,
}

impl Codec {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 1);
        let n_ring = 2 * n;
        let base = Dd::PI.div(Dd::from_f64(n_ring as f64));
        let (s, c) = sincos_taylor(base);
        let zeta = DdComplex::new(c, s);
        let mut zeta_pow = Vec::with_capacity(n_ring);
        let mut acc = DdComplex::new(Dd::ONE, Dd::ZERO);
        for _ in 0..n_ring {
            zeta_pow.push(acc);
            acc = acc.mul(zeta);
        }
        let fft_twiddles = (0..n_ring / 2).map(|k| zeta_pow[2 * k]).collect();
        Self {
            n,
            n_ring,
            zeta_pow,
            fft_twiddles,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_ring(&self) -> usize {
        self.n_ring
    }

    /// Signed integer coefficients of the rounded inverse embedding of
    /// delta * z (delta = 2^delta_bits). No modular reduction.
    pub fn encode_coeffs(&self, z: &[DdComplex], delta_bits: u32) -> CodecResult<Vec<i128>> {
        if z.len() != self.n {
            return Err(CodecError::LengthMismatch(z.len(), self.n));
        }
        let mut data = vec![DdComplex::ZERO; self.n_ring];
        data[..self.n].copy_from_slice(z);
        fft_in_place(&mut data, &self.fft_twiddles, true);
        let mut out = Vec::with_capacity(self.n_ring);
        let scale_exp = delta_bits as i32 - (self.n as f64).log2() as i32;
        for (k, f) in data.iter().enumerate() {
            // Re(F_k * conj(zeta^k)) / n, then * delta.
            let w = self.zeta_pow[k];
            let re = f.re.mul(w.re).add(f.im.mul(w.im));
            out.push(re.scale_pow2(scale_exp).round_to_i128());
        }
        Ok(out)
    }

    /// Encode delta * z into the ring modulo Q, center-lifted into [0, Q).
    pub fn encode(&self, z: &[Complex64], delta_bits: u32, q: &BigUint) -> CodecResult<RingElem> {
        let zdd: Vec<DdComplex> = z.iter().map(|c| DdComplex::from_f64(c.re, c.im)).collect();
        self.encode_dd(&zdd, delta_bits, q)
    }

    pub fn encode_dd(
        &self,
        z: &[DdComplex],
        delta_bits: u32,
        q: &BigUint,
    ) -> CodecResult<RingElem> {
        let coeffs = self.encode_coeffs(z, delta_bits)?;
        let qi = BigInt::from(q.clone());
        let signed: Vec<BigInt> = coeffs.iter().map(|&c| BigInt::from(c)).collect();
        for c in &signed {
            if c.abs() * 2 >= qi.clone().abs() {
                return Err(CodecError::Overflow);
            }
        }
        Ok(RingElem::from_signed(&signed, q))
    }

    /// Forward embedding of center-lifted coefficients, divided by delta.
    pub fn decode_dd(&self, p: &RingElem, delta_bits: u32) -> Vec<DdComplex> {
        let centered: Vec<BigInt> = (0..self.n_ring).map(|k| p.centered(k)).collect();
        self.decode_signed(&centered, delta_bits)
    }

    pub fn decode_signed(&self, coeffs: &[BigInt], delta_bits: u32) -> Vec<DdComplex> {
        assert_eq!(coeffs.len(), self.n_ring);
        let mut data: Vec<DdComplex> = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let v = dd_from_bigint(c);
                let w = self.zeta_pow[k];
                DdComplex::new(v.mul(w.re), v.mul(w.im))
            })
            .collect();
        fft_in_place(&mut data, &self.fft_twiddles, false);
        data.truncate(self.n);
        let exp = -(delta_bits as i32);
        data.iter()
            .map(|z| DdComplex::new(z.re.scale_pow2(exp), z.im.scale_pow2(exp)))
            .collect()
    }

    pub fn decode(&self, p: &RingElem, delta_bits: u32) -> Vec<Complex64> {
        self.decode_dd(p, delta_bits)
            .into_iter()
            .map(|z| Complex64::new(z.re.to_f64(), z.im.to_f64()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn modulus(bits: u32) -> BigUint {
        BigUint::from(1u32) << bits
    }

    #[test]
    fn encode_zero_gives_zero_polynomial() {
        let codec = Codec::new(4);
        let q = modulus(60);
        let z = vec![Complex64::new(0.0, 0.0); 4];
        let p = codec.encode(&z, 30, &q).unwrap();
        assert!(p.is_zero());
        let back = codec.decode(&p, 30);
        assert!(back.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn decode_matches_direct_evaluation_small() {
        // Pin the transform convention against a direct O(N^2) evaluation at
        // the odd 2N-th roots.
        let n = 4;
        let codec = Codec::new(n);
        let q = modulus(40);
        let mut rng = StdRng::seed_from_u64(2);
        let coeffs: Vec<BigInt> = (0..2 * n)
            .map(|_| BigInt::from(rng.gen_range(-100i64..100)))
            .collect();
        let p = RingElem::from_signed(&coeffs, &q);
        let got = codec.decode(&p, 0);
        for j in 0..n {
            let theta = std::f64::consts::PI * (2 * j + 1) as f64 / (2 * n) as f64;
            let omega = Complex64::new(theta.cos(), theta.sin());
            let mut want = Complex64::new(0.0, 0.0);
            let mut pw = Complex64::new(1.0, 0.0);
            for c in &coeffs {
                want += pw * c.to_f64().unwrap();
                pw *= omega;
            }
            assert!(
                (got[j] - want).norm() < 1e-9,
                "slot {j}: {} vs {}",
                got[j],
                want
            );
        }
    }

    #[test]
    fn roundtrip_error_small_at_large_scale() {
        let n = 1 << 14;
        let codec = Codec::new(n);
        let q = modulus(120);
        let mut rng = StdRng::seed_from_u64(3);
        let z: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(
                    rng.gen_range(-1024.0..1024.0),
                    rng.gen_range(-1024.0..1024.0),
                )
            })
            .collect();
        let p = codec.encode(&z, 40, &q).unwrap();
        let back = codec.decode(&p, 40);
        let max_err = z
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        // The paper-level bound is ~1e-5 per slot after an encode/decode
        // roundtrip at delta = 2^40; the exact transform sits far below it.
        assert!(max_err < 1e-5, "roundtrip error {max_err}");
        assert!(max_err < 1e-9, "roundtrip error {max_err}");
    }

    #[test]
    fn encode_is_additive_up_to_rounding() {
        let n = 8;
        let codec = Codec::new(n);
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let z1: Vec<DdComplex> = (0..n)
                .map(|_| DdComplex::from_f64(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)))
                .collect();
            let z2: Vec<DdComplex> = (0..n)
                .map(|_| DdComplex::from_f64(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)))
                .collect();
            let sum: Vec<DdComplex> = z1.iter().zip(&z2).map(|(a, b)| a.add(*b)).collect();
            let c1 = codec.encode_coeffs(&z1, 30).unwrap();
            let c2 = codec.encode_coeffs(&z2, 30).unwrap();
            let cs = codec.encode_coeffs(&sum, 30).unwrap();
            for k in 0..2 * n {
                assert!((c1[k] + c2[k] - cs[k]).abs() <= 1, "coefficient {k}");
            }
        }
    }

    #[test]
    fn decode_is_linear_without_wraparound() {
        let n = 4;
        let codec = Codec::new(n);
        let q = modulus(50);
        let mut rng = StdRng::seed_from_u64(5);
        let c1: Vec<BigInt> = (0..2 * n)
            .map(|_| BigInt::from(rng.gen_range(-1000i64..1000)))
            .collect();
        let c2: Vec<BigInt> = (0..2 * n)
            .map(|_| BigInt::from(rng.gen_range(-1000i64..1000)))
            .collect();
        let p1 = RingElem::from_signed(&c1, &q);
        let p2 = RingElem::from_signed(&c2, &q);
        let sum = p1.add(&p2).unwrap();
        let z1 = codec.decode(&p1, 10);
        let z2 = codec.decode(&p2, 10);
        let zs = codec.decode(&sum, 10);
        for j in 0..n {
            assert!((z1[j] + z2[j] - zs[j]).norm() < 1e-9);
        }
    }

    #[test]
    fn encode_overflow_is_detected() {
        let codec = Codec::new(4);
        let q = modulus(20);
        let z = vec![Complex64::new(1000.0, 0.0); 4];
        assert!(matches!(
            codec.encode(&z, 15, &q),
            Err(CodecError::Overflow)
        ));
    }

    #[test]
    fn uniform_ring_is_reproducible_and_centered() {
        let q = modulus(16);
        let mut rng = StdRng::seed_from_u64(42);
        let a = uniform_ring(8, &q, &mut rng);
        let mut rng = StdRng::seed_from_u64(42);
        let b = uniform_ring(8, &q, &mut rng);
        assert_eq!(a, b);
        let mut rng2 = StdRng::seed_from_u64(43);
        let c = uniform_ring(8, &q, &mut rng2);
        assert_ne!(a, c);

        let mut rng = StdRng::seed_from_u64(7);
        let draws = 10_000usize;
        let mut sum = 0.0f64;
        for _ in 0..draws {
            let e = uniform_ring(8, &q, &mut rng);
            for k in 0..8 {
                sum += e.coeffs()[k].to_f64().unwrap();
            }
        }
        let samples = (draws * 8) as f64;
        let mean = sum / samples;
        let q_f = 65536.0;
        let sigma_mean = q_f / (12.0f64.sqrt() * samples.sqrt());
        assert!(
            (mean - q_f / 2.0).abs() < 3.0 * sigma_mean + 1.0,
            "mean {mean} vs {}",
            q_f / 2.0
        );
    }

    #[test]
    fn masked_decode_is_message_independent() {
        // Chi-square homogeneity: slot values of decode(uniform + msg) and
        // decode(uniform) fall in the same distribution.
        let n = 4;
        let codec = Codec::new(n);
        let q = modulus(16);
        let msg = codec
            .encode(&vec![Complex64::new(3.0, -2.0); n], 8, &q)
            .unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let trials = 4000;
        let bins = 8;
        let mut hist_masked = vec![0usize; bins];
        let mut hist_plain = vec![0usize; bins];
        let limit = 65536.0 * 3.0;
        for _ in 0..trials {
            let r = uniform_ring(2 * n, &q, &mut rng);
            let masked = r.add(&msg).unwrap();
            for (hist, elem) in [(&mut hist_masked, &masked), (&mut hist_plain, &r)] {
                let v = codec.decode(elem, 0)[0].re;
                let idx = (((v / limit) + 0.5).clamp(0.0, 0.999) * bins as f64) as usize;
                hist[idx] += 1;
            }
        }
        let mut chi2 = 0.0f64;
        for b in 0..bins {
            let o = hist_masked[b] as f64;
            let e = hist_plain[b] as f64;
            if o + e > 0.0 {
                chi2 += (o - e).powi(2) / (o + e);
            }
        }
        // df = 7, alpha = 0.001 critical value 24.32.
        assert!(chi2 < 24.32, "chi-square statistic {chi2}");
    }
}
