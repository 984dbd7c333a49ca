//! Double-double ("two-float") arithmetic with ~106-bit effective mantissa.
//!
//! The conversion protocols round decoded plaintext shares to integers whose
//! magnitude approaches the boundary modulus (~2^84). Plain f64 transforms
//! would leave ~2^-3 slot error there; the double-double transform keeps it
//! below 2^-50 so share rounding is exact.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// pi to double-double precision.
    pub const PI: Dd = Dd {
        hi: std::f64::consts::PI,
        lo: 1.2246467991473532e-16,
    };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        quick_two_sum(s, e)
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        quick_two_sum(p, e)
    }

    pub fn mul_f64(self, other: f64) -> Dd {
        let (p, e) = two_prod(self.hi, other);
        let e = e + self.lo * other;
        quick_two_sum(p, e)
    }

    /// Exact scaling by a power of two.
    pub fn scale_pow2(self, exp: i32) -> Dd {
        let f = (exp as f64).exp2();
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.mul_f64(q2));
        let q3 = r.hi / other.hi;
        quick_two_sum(q1, q2).add(Dd::from_f64(q3))
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }

    /// Nearest integer as i128, ties to even. The value must fit in i128.
    pub fn round_to_i128(self) -> i128 {
        let a = self.hi.round_ties_even();
        let (s, e) = two_sum(self.hi - a, self.lo);
        let mut adj = s.round_ties_even();
        // Resolve exact half-integer boundaries that the two_sum exposes.
        if s.abs() == 0.5 && e != 0.0 {
            adj = if s + e > 0.0 { s.ceil() } else { s.floor() };
        }
        debug_assert!(a.abs() < 1.7e38);
        a as i128 + adj as i128
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let err = b - (s - a);
    Dd { hi: s, lo: err }
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

/// sin and cos of a small angle via Taylor series in double-double.
/// Accurate for |x| < 1, which covers the base twiddle angle pi/N for N >= 4.
pub fn sincos_taylor(x: Dd) -> (Dd, Dd) {
    let x2 = x.mul(x);
    let mut sin = x;
    let mut term = x;
    let mut k = 1.0f64;
    for _ in 0..24 {
        term = term.mul(x2).div(Dd::from_f64(-(k + 1.0) * (k + 2.0)));
        sin = sin.add(term);
        k += 2.0;
    }
    let mut cos = Dd::ONE;
    let mut term = Dd::ONE;
    let mut k = 0.0f64;
    for _ in 0..24 {
        term = term.mul(x2).div(Dd::from_f64(-(k + 1.0) * (k + 2.0)));
        cos = cos.add(term);
        k += 2.0;
    }
    (sin, cos)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };

    pub fn new(re: Dd, im: Dd) -> Self {
        Self { re, im }
    }

    pub fn from_f64(re: f64, im: f64) -> Self {
        Self {
            re: Dd::from_f64(re),
            im: Dd::from_f64(im),
        }
    }

    pub fn add(self, other: DdComplex) -> DdComplex {
        DdComplex::new(self.re.add(other.re), self.im.add(other.im))
    }

    pub fn sub(self, other: DdComplex) -> DdComplex {
        DdComplex::new(self.re.sub(other.re), self.im.sub(other.im))
    }

    pub fn mul(self, other: DdComplex) -> DdComplex {
        DdComplex::new(
            self.re.mul(other.re).sub(self.im.mul(other.im)),
            self.re.mul(other.im).add(self.im.mul(other.re)),
        )
    }

    pub fn conj(self) -> DdComplex {
        DdComplex::new(self.re, self.im.neg())
    }
}

/// In-place iterative radix-2 FFT over double-double complex values.
/// `twiddles[k]` must hold e^(2*pi*i*k/len) for k < len/2; `inverse` selects
/// the conjugate transform. No normalization is applied.
pub fn fft_in_place(data: &mut [DdComplex], twiddles: &[DdComplex], inverse: bool) {
    let len = data.len();
    assert!(len.is_power_of_two());
    assert!(twiddles.len() >= len / 2);
    // Bit-reversal permutation.
    let bits = len.trailing_zeros();
    for i in 0..len {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if i < j {
            data.swap(i, j);
        }
    }
    let mut half = 1usize;
    while half < len {
        let step = len / (2 * half);
        for start in (0..len).step_by(2 * half) {
            for k in 0..half {
                let mut w = twiddles[k * step];
                if inverse {
                    w = w.conj();
                }
                let a = data[start + k];
                let b = data[start + k + half].mul(w);
                data[start + k] = a.add(b);
                data[start + k + half] = a.sub(b);
            }
        }
        half *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_mul_exactness() {
        let a = Dd::from_f64(1.0 + 2f64.powi(-40)).mul(Dd::from_f64(1.0 - 2f64.powi(-40)));
        let want = 1.0 - 2f64.powi(-80);
        assert!((a.hi + a.lo - want).abs() < 1e-31);
    }

    #[test]
    fn round_to_i128_near_half() {
        assert_eq!(Dd { hi: 2.5, lo: 0.0 }.round_to_i128(), 2);
        assert_eq!(Dd { hi: 3.5, lo: 0.0 }.round_to_i128(), 4);
        assert_eq!(Dd { hi: 2.5, lo: 1e-20 }.round_to_i128(), 3);
        let big = 2f64.powi(80);
        assert_eq!(
            Dd { hi: big, lo: 0.4 }.round_to_i128(),
            (big as i128) as i128
        );
        assert_eq!(Dd { hi: big, lo: 0.6 }.round_to_i128(), big as i128 + 1);
    }

    #[test]
    fn sincos_matches_f64_for_moderate_angles() {
        for &x in &[1e-6, 0.01, 0.3, 0.7] {
            let (s, c) = sincos_taylor(Dd::from_f64(x));
            assert!((s.to_f64() - x.sin()).abs() < 1e-15);
            assert!((c.to_f64() - x.cos()).abs() < 1e-15);
            let unit = s.mul(s).add(c.mul(c)).to_f64();
            assert!((unit - 1.0).abs() < 1e-30);
        }
    }

    #[test]
    fn fft_roundtrip() {
        let n = 16;
        let base = Dd::PI.scale_pow2(1).div(Dd::from_f64(n as f64));
        let mut tw = Vec::with_capacity(n / 2);
        let mut acc = DdComplex::new(Dd::ONE, Dd::ZERO);
        let (s, c) = sincos_taylor(base);
        let w = DdComplex::new(c, s);
        for _ in 0..n / 2 {
            tw.push(acc);
            acc = acc.mul(w);
        }
        let orig: Vec<DdComplex> = (0..n)
            .map(|i| DdComplex::from_f64((i as f64).sin(), (i as f64).cos()))
            .collect();
        let mut data = orig.clone();
        fft_in_place(&mut data, &tw, false);
        fft_in_place(&mut data, &tw, true);
        for (got, want) in data.iter().zip(&orig) {
            let scale = 1.0 / n as f64;
            assert!((got.re.to_f64() * scale - want.re.to_f64()).abs() < 1e-28);
            assert!((got.im.to_f64() * scale - want.im.to_f64()).abs() < 1e-28);
        }
    }
}
