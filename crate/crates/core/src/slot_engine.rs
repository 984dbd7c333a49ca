//! Exact complex-slot emulation of leveled CKKS ciphertext algebra.
//!
//! A [`CipherVec`] carries the exact slot values of a ciphertext together with
//! level/scale bookkeeping and a key-domain tag. Every key-switched primitive
//! (ctmul/relin, rot, conj) and every cheap primitive (add, ptmul, rescale,
//! mod-switch) is metered on an [`OpLedger`], so kernel schedules can be
//! audited against analytic key-switching counts without running a lattice
//! backend. Slot values are exact; approximation error is modeled elsewhere.

use num_bigint::BigUint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Relative tolerance under which two scales are considered equal.
///
/// Scales drift by at most a few ulps when two operands share the same
/// rescale history; anything larger is a schedule bug and must surface.
const SCALE_EQ_RTOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SlotError {
    #[error("slot length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("scale mismatch in add: {0:e} vs {1:e}")]
    ScaleMismatch(f64, f64),
    #[error("level mismatch in ctmul: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("level exhausted: operation requires level >= 1")]
    LevelExhausted,
    #[error("operands belong to different ledgers")]
    LedgerMismatch,
    #[error("operands belong to different slot configurations")]
    ConfigMismatch,
}

pub type SlotResult<T> = Result<T, SlotError>;

/// Key domain a ciphertext lives under. The emulator has no real keys; the
/// tag gates which party may "decrypt" at a conversion boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyDomain {
    ClientKey,
    Public,
}

/// RNS-style modulus chain: q_0..q_L with partial products Q_i.
#[derive(Debug, Clone)]
pub struct ModulusChain {
    primes: Vec<u64>,
    target_scale: f64,
    partial_products: Vec<BigUint>,
}

impl ModulusChain {
    pub fn new(primes: Vec<u64>, target_scale: f64) -> Self {
        assert!(!primes.is_empty(), "modulus chain needs at least one prime");
        for (i, &p) in primes.iter().enumerate() {
            assert!(p % 2 == 1, "chain primes must be odd");
            assert!(
                !primes[..i].contains(&p),
                "chain primes must be pairwise distinct"
            );
        }
        let mut partial_products = Vec::with_capacity(primes.len());
        let mut acc = BigUint::from(1u32);
        for &p in &primes {
            acc *= BigUint::from(p);
            partial_products.push(acc.clone());
        }
        Self {
            primes,
            target_scale,
            partial_products,
        }
    }

    /// Chain of `count` pseudo-primes near 2^scale_bits, for bookkeeping only.
    pub fn with_bit_sizes(scale_bits: u32, count: usize) -> Self {
        let mut primes = Vec::with_capacity(count);
        let mut candidate = (1u64 << scale_bits) + 1;
        while primes.len() < count {
            if is_prime_u64(candidate) {
                primes.push(candidate);
            }
            candidate += 2;
        }
        Self::new(primes, (1u64 << scale_bits) as f64)
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// Highest level index L (chain length is L+1).
    pub fn max_level(&self) -> usize {
        self.primes.len() - 1
    }

    /// Q_i, the remaining ciphertext modulus at level i.
    pub fn modulus_at(&self, level: usize) -> &BigUint {
        &self.partial_products[level]
    }
}

/// Deterministic Miller-Rabin, exact for all u64.
fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, m);
        }
        base = mod_mul(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Ambient slot configuration: slot count and modulus chain.
#[derive(Debug, Clone)]
pub struct SlotConfig {
    pub n: usize,
    pub chain: ModulusChain,
}

impl SlotConfig {
    pub fn new(n: usize, chain: ModulusChain) -> Arc<Self> {
        assert!(n.is_power_of_two(), "slot count must be a power of two");
        Arc::new(Self { n, chain })
    }
}

/// Metered primitive kinds, in ledger snapshot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Add,
    Ptmul,
    Ctmul,
    Relin,
    Rot,
    Conj,
    Rescale,
    Modswitch,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Add,
        OpKind::Ptmul,
        OpKind::Ctmul,
        OpKind::Relin,
        OpKind::Rot,
        OpKind::Conj,
        OpKind::Rescale,
        OpKind::Modswitch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Ptmul => "ptmul",
            OpKind::Ctmul => "ctmul",
            OpKind::Relin => "relin",
            OpKind::Rot => "rot",
            OpKind::Conj => "conj",
            OpKind::Rescale => "rescale",
            OpKind::Modswitch => "modswitch",
        }
    }
}

#[derive(Debug, Default)]
struct LedgerInner {
    label: String,
    counts: [AtomicU64; 8],
}

/// Shared, thread-safe operation ledger. Cloning shares the counters, so
/// parallel block evaluation merges automatically (counter increments are
/// associative and commutative).
#[derive(Debug, Clone, Default)]
pub struct OpLedger {
    inner: Arc<LedgerInner>,
}

impl OpLedger {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            inner: Arc::new(LedgerInner {
                label: label.into(),
                counts: Default::default(),
            }),
        }
    }

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    pub fn bump(&self, kind: OpKind) {
        self.bump_by(kind, 1);
    }

    pub fn bump_by(&self, kind: OpKind, amount: u64) {
        self.inner.counts[kind as usize].fetch_add(amount, Ordering::Relaxed);
    }

    pub fn count(&self, kind: OpKind) -> u64 {
        self.inner.counts[kind as usize].load(Ordering::Relaxed)
    }

    pub fn same_ledger(&self, other: &OpLedger) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Flat key -> count record for serialization.
    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut counts = BTreeMap::new();
        for kind in OpKind::ALL {
            counts.insert(kind.name().to_string(), self.count(kind));
        }
        LedgerSnapshot {
            label: self.label().to_string(),
            counts,
        }
    }

    /// Add every counter of `other` into `self`.
    pub fn absorb(&self, other: &LedgerSnapshot) {
        for kind in OpKind::ALL {
            if let Some(&c) = other.counts.get(kind.name()) {
                self.bump_by(kind, c);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub label: String,
    pub counts: BTreeMap<String, u64>,
}

impl LedgerSnapshot {
    pub fn get(&self, kind: OpKind) -> u64 {
        *self.counts.get(kind.name()).unwrap_or(&0)
    }

    pub fn diff(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let mut counts = BTreeMap::new();
        for kind in OpKind::ALL {
            counts.insert(kind.name().to_string(), self.get(kind) - earlier.get(kind));
        }
        LedgerSnapshot {
            label: self.label.clone(),
            counts,
        }
    }

    pub fn merged(&self, other: &LedgerSnapshot) -> LedgerSnapshot {
        let mut counts = BTreeMap::new();
        for kind in OpKind::ALL {
            counts.insert(kind.name().to_string(), self.get(kind) + other.get(kind));
        }
        LedgerSnapshot {
            label: self.label.clone(),
            counts,
        }
    }
}

impl fmt::Display for LedgerSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.label)?;
        for kind in OpKind::ALL {
            let c = self.get(kind);
            if c > 0 {
                write!(f, " {}={}", kind.name(), c)?;
            }
        }
        Ok(())
    }
}

/// Per-primitive latency profile in seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveProfile {
    pub name: String,
    pub latency: BTreeMap<String, f64>,
}

impl PrimitiveProfile {
    fn build(name: &str, ms: [f64; 5]) -> Self {
        let mut latency = BTreeMap::new();
        let kinds = ["add", "ptmul", "ctmul", "rot", "conj"];
        for (k, v) in kinds.iter().zip(ms) {
            latency.insert(k.to_string(), v * 1e-3);
        }
        Self {
            name: name.to_string(),
            latency,
        }
    }

    /// A100 GPU latencies, fast backend (N=65536, depth 16).
    pub fn phantom() -> Self {
        Self::build("phantom", [0.07, 0.36, 2.65, 2.32, 2.33])
    }

    /// A100 GPU latencies, alternative backend under the same parameters.
    pub fn liberate() -> Self {
        Self::build("liberate", [3.04, 13.72, 48.66, 32.70, 22.73])
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "phantom" => Some(Self::phantom()),
            "liberate" => Some(Self::liberate()),
            _ => None,
        }
    }

    pub fn seconds_for(&self, kind: OpKind) -> f64 {
        *self.latency.get(kind.name()).unwrap_or(&0.0)
    }
}

/// Which counters enter the weighted cost proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyMode {
    /// Every counter with a latency entry.
    Full,
    /// rot and ctmul terms only, matching the kernel-count comparison tables.
    RotCtmul,
}

/// Weighted primitive-cost proxy in seconds.
pub fn ledger_proxy(snapshot: &LedgerSnapshot, profile: &PrimitiveProfile, mode: ProxyMode) -> f64 {
    let kinds: &[OpKind] = match mode {
        ProxyMode::Full => &OpKind::ALL,
        ProxyMode::RotCtmul => &[OpKind::Rot, OpKind::Ctmul],
    };
    kinds
        .iter()
        .map(|&k| snapshot.get(k) as f64 * profile.seconds_for(k))
        .sum()
}

/// Plaintext slot vector (weights, masks, constants).
#[derive(Debug, Clone)]
pub struct PlainVec {
    pub slots: Vec<Complex64>,
    pub scale: f64,
}

impl PlainVec {
    pub fn new(slots: Vec<Complex64>, scale: f64) -> Self {
        assert!(scale > 0.0);
        Self { slots, scale }
    }

    pub fn from_real(values: &[f64], scale: f64) -> Self {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), scale)
    }

    /// 0/1 mask at scale 1, so masking ptmuls never perturb the scale.
    pub fn mask(bits: &[bool]) -> Self {
        Self::new(
            bits.iter()
                .map(|&b| Complex64::new(if b { 1.0 } else { 0.0 }, 0.0))
                .collect(),
            1.0,
        )
    }

    /// Constant vector at scale 1.
    pub fn constant(n: usize, value: Complex64) -> Self {
        Self::new(vec![value; n], 1.0)
    }
}

/// Emulated CKKS ciphertext: exact slot values plus bookkeeping.
#[derive(Debug, Clone)]
pub struct CipherVec {
    pub slots: Vec<Complex64>,
    pub level: usize,
    pub scale: f64,
    pub owner: KeyDomain,
    pub noise_amp: Option<f64>,
    config: Arc<SlotConfig>,
    ledger: OpLedger,
}

fn scales_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_EQ_RTOL * a.abs().max(b.abs())
}

impl CipherVec {
    pub fn new(
        slots: Vec<Complex64>,
        level: usize,
        scale: f64,
        config: Arc<SlotConfig>,
        ledger: OpLedger,
    ) -> Self {
        assert_eq!(slots.len(), config.n, "slot vector must fill the ciphertext");
        assert!(level <= config.chain.max_level());
        assert!(scale > 0.0);
        Self {
            slots,
            level,
            scale,
            owner: KeyDomain::ClientKey,
            noise_amp: None,
            config,
            ledger,
        }
    }

    pub fn zeros(level: usize, scale: f64, config: Arc<SlotConfig>, ledger: OpLedger) -> Self {
        let n = config.n;
        Self::new(vec![Complex64::new(0.0, 0.0); n], level, scale, config, ledger)
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn config(&self) -> &Arc<SlotConfig> {
        &self.config
    }

    pub fn ledger(&self) -> &OpLedger {
        &self.ledger
    }

    fn check_partner(&self, other: &CipherVec) -> SlotResult<()> {
        if !Arc::ptr_eq(&self.config, &other.config) {
            return Err(SlotError::ConfigMismatch);
        }
        if self.slots.len() != other.slots.len() {
            return Err(SlotError::LengthMismatch(self.slots.len(), other.slots.len()));
        }
        if !self.ledger.same_ledger(&other.ledger) {
            return Err(SlotError::LedgerMismatch);
        }
        Ok(())
    }

    fn derived(&self, slots: Vec<Complex64>, level: usize, scale: f64) -> CipherVec {
        CipherVec {
            slots,
            level,
            scale,
            owner: self.owner,
            noise_amp: self.noise_amp,
            config: Arc::clone(&self.config),
            ledger: self.ledger.clone(),
        }
    }

    /// Ciphertext-ciphertext addition. Scales must already agree.
    pub fn add(&self, other: &CipherVec) -> SlotResult<CipherVec> {
        self.check_partner(other)?;
        if !scales_equal(self.scale, other.scale) {
            return Err(SlotError::ScaleMismatch(self.scale, other.scale));
        }
        let slots = self
            .slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| a + b)
            .collect();
        self.ledger.bump(OpKind::Add);
        Ok(self.derived(slots, self.level.min(other.level), self.scale))
    }

    /// Plaintext-ciphertext multiplication. Scales multiply; level unchanged.
    pub fn ptmul(&self, plain: &PlainVec) -> SlotResult<CipherVec> {
        if plain.slots.len() != self.slots.len() {
            return Err(SlotError::LengthMismatch(self.slots.len(), plain.slots.len()));
        }
        let slots = self
            .slots
            .iter()
            .zip(&plain.slots)
            .map(|(a, w)| a * w)
            .collect();
        self.ledger.bump(OpKind::Ptmul);
        Ok(self.derived(slots, self.level, self.scale * plain.scale))
    }

    /// Ciphertext-ciphertext multiplication with implicit relinearization.
    /// Operands must sit at the same level; the caller mod-switches first.
    pub fn ctmul(&self, other: &CipherVec) -> SlotResult<CipherVec> {
        self.check_partner(other)?;
        if self.level != other.level {
            return Err(SlotError::LevelMismatch(self.level, other.level));
        }
        let slots = self
            .slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| a * b)
            .collect();
        self.ledger.bump(OpKind::Ctmul);
        self.ledger.bump(OpKind::Relin);
        Ok(self.derived(slots, self.level, self.scale * other.scale))
    }

    /// Cyclic left shift by `r` slots. `r` is reduced mod n; a zero shift is
    /// the identity and is not metered.
    pub fn rot(&self, r: i64) -> CipherVec {
        let n = self.slots.len() as i64;
        let r = r.rem_euclid(n) as usize;
        if r == 0 {
            return self.clone();
        }
        let mut slots = Vec::with_capacity(self.slots.len());
        slots.extend_from_slice(&self.slots[r..]);
        slots.extend_from_slice(&self.slots[..r]);
        self.ledger.bump(OpKind::Rot);
        self.derived(slots, self.level, self.scale)
    }

    /// Slotwise complex conjugation.
    pub fn conj(&self) -> CipherVec {
        let slots = self.slots.iter().map(|z| z.conj()).collect();
        self.ledger.bump(OpKind::Conj);
        self.derived(slots, self.level, self.scale)
    }

    /// Drop a level and divide the scale by the departing prime. Slot values
    /// are exact here, so only bookkeeping changes.
    pub fn rescale(&self) -> SlotResult<CipherVec> {
        if self.level == 0 {
            return Err(SlotError::LevelExhausted);
        }
        let q = self.config.chain.primes()[self.level] as f64;
        self.ledger.bump(OpKind::Rescale);
        Ok(self.derived(self.slots.clone(), self.level - 1, self.scale / q))
    }

    /// Remove the last RNS prime without rescaling: level drops, scale stays.
    pub fn mod_switch(&self) -> SlotResult<CipherVec> {
        if self.level == 0 {
            return Err(SlotError::LevelExhausted);
        }
        self.ledger.bump(OpKind::Modswitch);
        Ok(self.derived(self.slots.clone(), self.level - 1, self.scale))
    }

    /// Mod-switch down to `target` level (no-op if already there).
    pub fn mod_switch_to(&self, target: usize) -> SlotResult<CipherVec> {
        let mut ct = self.clone();
        while ct.level > target {
            ct = ct.mod_switch()?;
        }
        Ok(ct)
    }

    /// Multiply by the all-ones plaintext at `target/self.scale`, aligning the
    /// scale for a later add without touching slot values.
    pub fn align_scale_to(&self, target: f64) -> SlotResult<CipherVec> {
        if scales_equal(self.scale, target) {
            return Ok(self.clone());
        }
        let one = PlainVec::constant(self.slots.len(), Complex64::new(1.0, 0.0));
        let mut adjusted = self.ptmul(&PlainVec {
            slots: one.slots,
            scale: target / self.scale,
        })?;
        // Pin the scale exactly so chained alignments cannot drift.
        adjusted.scale = target;
        Ok(adjusted)
    }

    /// Slot values as seen by a decoder. With `noise_amp` set, a per-slot
    /// Gaussian amplitude models the approximation error of a real backend.
    pub fn read_slots(&self, rng: &mut impl rand::Rng) -> Vec<Complex64> {
        match self.noise_amp {
            None | Some(0.0) => self.slots.clone(),
            Some(amp) => {
                use rand::prelude::Distribution;
                let gauss = statrs::distribution::Normal::new(0.0, amp).unwrap();
                self.slots
                    .iter()
                    .map(|z| {
                        Complex64::new(z.re + gauss.sample(rng), z.im + gauss.sample(rng))
                    })
                    .collect()
            }
        }
    }
}
