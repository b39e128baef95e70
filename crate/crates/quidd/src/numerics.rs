//! Complex arithmetic at configurable precision, plus the terminal table.
//!
//! Every diagram terminal is an integer index into a [`TerminalTable`] owned
//! by the manager. Interning a value either finds an existing entry that is
//! equal under the configured merge predicate or appends a new one. The merge
//! predicate decides whether two nearly-equal amplitudes collapse into one
//! terminal node, so it directly controls how well diagrams compress.
//!
//! Two backends share one value type: hardware `f64` pairs (53-bit mantissa)
//! and MPFR floats at any other mantissa width. A manager never mixes
//! backends; the variant is fixed by its [`PrecisionConfig`].

use std::fmt;

use rug::float::OrdFloat;
use rug::ops::Pow;
use rug::{Float, Integer};
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// How `merge_epsilon` is interpreted when comparing two complex values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonMode {
    /// `|u - v| <= eps`
    Absolute,
    /// `|u - v| <= eps * max(|u|, |v|)`
    Relative,
}

/// Numeric configuration for one manager.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionConfig {
    /// Mantissa width in bits. 53 selects hardware doubles, anything else an
    /// MPFR float of that precision.
    pub mantissa_bits: u32,
    /// Merge tolerance for terminal deduplication. Zero means exact
    /// comparison of (sign-normalized) bit patterns.
    pub merge_epsilon: f64,
    pub comparison_mode: ComparisonMode,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig {
            mantissa_bits: 128,
            merge_epsilon: 1e-30,
            comparison_mode: ComparisonMode::Relative,
        }
    }
}

impl PrecisionConfig {
    /// Hardware double precision with the default relative merge tolerance.
    pub fn double() -> Self {
        PrecisionConfig {
            mantissa_bits: 53,
            ..PrecisionConfig::default()
        }
    }

    pub fn with_bits(mantissa_bits: u32) -> Self {
        PrecisionConfig {
            mantissa_bits,
            ..PrecisionConfig::default()
        }
    }

    /// The bucketed dedup index keeps 128-bit bucket coordinates; epsilons
    /// below 2^-120 would overflow them.
    pub fn validate(&self) -> Result<()> {
        if self.mantissa_bits < 8 || self.mantissa_bits > 8192 {
            return Err(Error::InvalidPrecision(format!(
                "mantissa_bits {} outside supported range 8..=8192",
                self.mantissa_bits
            )));
        }
        let eps = self.merge_epsilon;
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidPrecision(format!(
                "merge_epsilon {eps} must be finite and non-negative"
            )));
        }
        if eps > 0.0 && eps < 2f64.powi(-120) {
            return Err(Error::InvalidPrecision(format!(
                "merge_epsilon {eps} below minimum 2^-120; use 0 for exact comparison"
            )));
        }
        if eps > 0.0625 {
            return Err(Error::InvalidPrecision(format!(
                "merge_epsilon {eps} above maximum 1/16"
            )));
        }
        Ok(())
    }

    fn is_double(&self) -> bool {
        self.mantissa_bits == 53
    }

    /// Builds a value from double literals, rounding into this precision.
    pub fn complex(&self, re: f64, im: f64) -> ComplexValue {
        if self.is_double() {
            ComplexValue::F64 {
                re: norm_zero(re),
                im: norm_zero(im),
            }
        } else {
            let p = self.mantissa_bits;
            ComplexValue::big(Float::with_val(p, re), Float::with_val(p, im))
        }
    }

    pub fn real(&self, re: f64) -> ComplexValue {
        self.complex(re, 0.0)
    }

    pub fn zero(&self) -> ComplexValue {
        self.complex(0.0, 0.0)
    }

    pub fn one(&self) -> ComplexValue {
        self.complex(1.0, 0.0)
    }

    /// `e^(i*2*pi*k/n)`, computed at the configured precision.
    pub fn root_of_unity(&self, k: i64, n: u64) -> ComplexValue {
        assert!(n > 0, "root_of_unity: degree must be positive");
        let k = k.rem_euclid(n as i64) as u64;
        // Exact values on the axes; avoids sin/cos rounding noise there.
        if (4 * k) % n == 0 {
            return match (4 * k) / n {
                0 => self.one(),
                1 => self.complex(0.0, 1.0),
                2 => self.complex(-1.0, 0.0),
                _ => self.complex(0.0, -1.0),
            };
        }
        if self.is_double() {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            let (s, c) = theta.sin_cos();
            self.complex(c, s)
        } else {
            let p = self.mantissa_bits;
            let theta =
                Float::with_val(p, rug::float::Constant::Pi) * 2u32 * Float::with_val(p, k)
                    / Float::with_val(p, n);
            let (s, c) = theta.sin_cos(Float::new(p));
            ComplexValue::big(c, s)
        }
    }

    /// `2^(-n/2)`: the amplitude of an n-qubit equal superposition.
    pub fn inv_sqrt2_pow(&self, n: u32) -> ComplexValue {
        if self.is_double() {
            self.real(2f64.powf(-(n as f64) / 2.0))
        } else {
            let p = self.mantissa_bits;
            let half = Float::with_val(p, 0.5).sqrt();
            ComplexValue::big(half.pow(n), Float::with_val(p, 0))
        }
    }
}

/// A complex number at the manager's precision. Pure value type; freely
/// clonable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub enum ComplexValue {
    F64 { re: f64, im: f64 },
    Big(Box<BigComplex>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigComplex {
    pub re: Float,
    pub im: Float,
}

fn norm_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn norm_zero_big(x: Float) -> Float {
    if x.is_zero() && x.is_sign_negative() {
        -x
    } else {
        x
    }
}

impl ComplexValue {
    fn big(re: Float, im: Float) -> Self {
        ComplexValue::Big(Box::new(BigComplex {
            re: norm_zero_big(re),
            im: norm_zero_big(im),
        }))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ComplexValue::F64 { re, im } => *re == 0.0 && *im == 0.0,
            ComplexValue::Big(b) => b.re.is_zero() && b.im.is_zero(),
        }
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        match self {
            ComplexValue::F64 { re, im } => (*re, *im),
            ComplexValue::Big(b) => (b.re.to_f64(), b.im.to_f64()),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (ComplexValue::F64 { re: a, im: b }, ComplexValue::F64 { re: c, im: d }) => {
                ComplexValue::F64 {
                    re: norm_zero(a + c),
                    im: norm_zero(b + d),
                }
            }
            (ComplexValue::Big(x), ComplexValue::Big(y)) => {
                let p = x.re.prec();
                ComplexValue::big(
                    Float::with_val(p, &x.re + &y.re),
                    Float::with_val(p, &x.im + &y.im),
                )
            }
            _ => panic!("mixed-precision complex arithmetic"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self, other) {
            (ComplexValue::F64 { re: a, im: b }, ComplexValue::F64 { re: c, im: d }) => {
                ComplexValue::F64 {
                    re: norm_zero(a * c - b * d),
                    im: norm_zero(a * d + b * c),
                }
            }
            (ComplexValue::Big(x), ComplexValue::Big(y)) => {
                let p = x.re.prec();
                let re = Float::with_val(p, &x.re * &y.re) - Float::with_val(p, &x.im * &y.im);
                let im = Float::with_val(p, &x.re * &y.im) + Float::with_val(p, &x.im * &y.re);
                ComplexValue::big(Float::with_val(p, re), Float::with_val(p, im))
            }
            _ => panic!("mixed-precision complex arithmetic"),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        let den = other.magnitude_sq_value();
        let num = self.mul(&other.conj());
        match (num, den) {
            (ComplexValue::F64 { re, im }, ComplexValue::F64 { re: d, .. }) => ComplexValue::F64 {
                re: norm_zero(re / d),
                im: norm_zero(im / d),
            },
            (ComplexValue::Big(n), ComplexValue::Big(d)) => {
                let p = n.re.prec();
                ComplexValue::big(
                    Float::with_val(p, &n.re / &d.re),
                    Float::with_val(p, &n.im / &d.re),
                )
            }
            _ => unreachable!(),
        }
    }

    pub fn neg(&self) -> Self {
        match self {
            ComplexValue::F64 { re, im } => ComplexValue::F64 {
                re: norm_zero(-re),
                im: norm_zero(-im),
            },
            ComplexValue::Big(b) => {
                let p = b.re.prec();
                ComplexValue::big(Float::with_val(p, -&b.re), Float::with_val(p, -&b.im))
            }
        }
    }

    pub fn conj(&self) -> Self {
        match self {
            ComplexValue::F64 { re, im } => ComplexValue::F64 {
                re: *re,
                im: norm_zero(-im),
            },
            ComplexValue::Big(b) => {
                let p = b.re.prec();
                ComplexValue::big(b.re.clone(), Float::with_val(p, -&b.im))
            }
        }
    }

    /// Exact scaling by `2^k`.
    pub fn mul_pow2(&self, k: u32) -> Self {
        match self {
            ComplexValue::F64 { re, im } => {
                let f = 2f64.powi(k as i32);
                ComplexValue::F64 {
                    re: norm_zero(re * f),
                    im: norm_zero(im * f),
                }
            }
            ComplexValue::Big(b) => {
                let p = b.re.prec();
                ComplexValue::big(
                    Float::with_val(p, &b.re << k),
                    Float::with_val(p, &b.im << k),
                )
            }
        }
    }

    /// `|z|^2` as a real-valued complex.
    pub fn magnitude_sq_value(&self) -> Self {
        match self {
            ComplexValue::F64 { re, im } => ComplexValue::F64 {
                re: re * re + im * im,
                im: 0.0,
            },
            ComplexValue::Big(b) => {
                let p = b.re.prec();
                let m = Float::with_val(p, b.re.clone().square() + b.im.clone().square());
                ComplexValue::big(m, Float::with_val(p, 0))
            }
        }
    }

    /// Square root of a non-negative real value; measurement normalization is
    /// the only caller. Negative inputs clamp to zero.
    pub fn sqrt_real(&self) -> Self {
        match self {
            ComplexValue::F64 { re, .. } => ComplexValue::F64 {
                re: re.max(0.0).sqrt(),
                im: 0.0,
            },
            ComplexValue::Big(b) => {
                let p = b.re.prec();
                let re = if b.re.is_sign_negative() {
                    Float::with_val(p, 0)
                } else {
                    b.re.clone().sqrt()
                };
                ComplexValue::big(re, Float::with_val(p, 0))
            }
        }
    }
}

impl fmt::Display for ComplexValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (re, im) = self.to_f64_pair();
        if im == 0.0 {
            write!(f, "{re}")
        } else if re == 0.0 {
            write!(f, "{im}i")
        } else if im < 0.0 {
            write!(f, "{re}{im}i")
        } else {
            write!(f, "{re}+{im}i")
        }
    }
}

/// The merge predicate: symmetric, reflexive, exact when `eps == 0`.
pub fn dedup_equal(a: &ComplexValue, b: &ComplexValue, cfg: &PrecisionConfig) -> bool {
    let eps = cfg.merge_epsilon;
    let diff = a.sub(b);
    if eps == 0.0 {
        return diff.is_zero();
    }
    let dsq = diff.magnitude_sq_value();
    match cfg.comparison_mode {
        ComparisonMode::Absolute => match &dsq {
            ComplexValue::F64 { re, .. } => *re <= eps * eps,
            ComplexValue::Big(d) => d.re.clone() <= Float::with_val(d.re.prec(), eps).square(),
        },
        ComparisonMode::Relative => {
            let ma = a.magnitude_sq_value();
            let mb = b.magnitude_sq_value();
            match (&dsq, &ma, &mb) {
                (
                    ComplexValue::F64 { re: d, .. },
                    ComplexValue::F64 { re: x, .. },
                    ComplexValue::F64 { re: y, .. },
                ) => *d <= eps * eps * x.max(*y),
                (ComplexValue::Big(d), ComplexValue::Big(x), ComplexValue::Big(y)) => {
                    let p = d.re.prec();
                    let m = if x.re >= y.re { &x.re } else { &y.re };
                    d.re.clone() <= Float::with_val(p, m * eps) * eps
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Deduplicated, append-only store of terminal values.
///
/// Indices are stable for the life of the manager. Lookup goes through a
/// bucket index keyed by value magnitude so interning stays near O(1) even
/// with hundreds of thousands of distinct terminals.
pub struct TerminalTable {
    cfg: PrecisionConfig,
    values: Vec<ComplexValue>,
    index: DedupIndex,
}

impl TerminalTable {
    pub fn new(cfg: PrecisionConfig) -> Self {
        let index = if cfg.merge_epsilon == 0.0 {
            DedupIndex::Exact(FxHashMap::default())
        } else {
            DedupIndex::Bucketed(FxHashMap::default())
        };
        TerminalTable {
            cfg,
            values: Vec::new(),
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, idx: u32) -> &ComplexValue {
        &self.values[idx as usize]
    }

    pub fn config(&self) -> &PrecisionConfig {
        &self.cfg
    }

    /// Approximate heap footprint, for the bench report.
    pub fn approx_bytes(&self) -> usize {
        let per = if self.cfg.mantissa_bits == 53 {
            std::mem::size_of::<ComplexValue>()
        } else {
            std::mem::size_of::<ComplexValue>() + 2 * (16 + self.cfg.mantissa_bits as usize / 8)
        };
        self.values.len() * per
    }

    /// Index of an existing entry equal to `v` under the merge predicate, if
    /// any. Within a bucket the earliest-inserted match wins.
    pub fn lookup(&self, v: &ComplexValue) -> Option<u32> {
        match &self.index {
            DedupIndex::Exact(map) => map.get(&exact_key(v)).copied(),
            DedupIndex::Bucketed(map) => {
                // Fast path: values re-interned verbatim share the canonical
                // bucket, which is almost always where the match lives.
                if let Some(list) = map.get(&insert_key(v, &self.cfg)) {
                    if let Some(i) = self.scan(list, v) {
                        return Some(i);
                    }
                }
                let mut candidates: Vec<u32> = Vec::new();
                for key in probe_keys(v, &self.cfg) {
                    if let Some(list) = map.get(&key) {
                        candidates.extend_from_slice(list);
                    }
                }
                candidates.sort_unstable();
                candidates.dedup();
                self.scan(&candidates, v)
            }
        }
    }

    fn scan(&self, candidates: &[u32], v: &ComplexValue) -> Option<u32> {
        candidates
            .iter()
            .copied()
            .find(|&i| dedup_equal(&self.values[i as usize], v, &self.cfg))
    }

    pub fn intern(&mut self, v: ComplexValue) -> u32 {
        if let Some(i) = self.lookup(&v) {
            return i;
        }
        let idx = self.values.len() as u32;
        match &mut self.index {
            DedupIndex::Exact(map) => {
                map.insert(exact_key(&v), idx);
            }
            DedupIndex::Bucketed(map) => {
                map.entry(insert_key(&v, &self.cfg)).or_default().push(idx);
            }
        }
        self.values.push(v);
        idx
    }
}

enum DedupIndex {
    Exact(FxHashMap<ExactKey, u32>),
    Bucketed(FxHashMap<BucketKey, Vec<u32>>),
}

#[derive(PartialEq, Eq, Hash)]
enum ExactKey {
    F64(u64, u64),
    Big(OrdFloat, OrdFloat),
}

fn exact_key(v: &ComplexValue) -> ExactKey {
    match v {
        ComplexValue::F64 { re, im } => ExactKey::F64(re.to_bits(), im.to_bits()),
        ComplexValue::Big(b) => ExactKey::Big(b.re.clone().into(), b.im.clone().into()),
    }
}

// ---------------------------------------------------------------------------
// Approximate-dedup bucket index.
//
// A value is filed under (scale exponent e, key(re), key(im)) where
// 2^(e-1) <= max(|re|,|im|) < 2^e. With L = floor(log2 eps) and p the
// mantissa width, each component x with exponent ex (2^(ex-1) <= |x| < 2^ex)
// is classed by how far it sits below the modulus:
//
//   Tiny:  ex <= e+L+6            one shared bucket per (e, side)
//   Bits:  ex >  e+L+p+6          exact bit pattern; at this magnitude two
//                                 distinct p-bit floats can never be within
//                                 eps*|v| of each other
//   Mid:   otherwise              integer coordinate floor(x / 2^(e+L+2))
//
// All band and coordinate math is exact integer arithmetic on the float's own
// (mantissa, exponent) decomposition. Lookup probes e-1, e, e+1 with widened
// bands and +-3 coordinate offsets, which is enough to cover the maximum
// drift |u-v| <= eps*sqrt(2)*2^e between merge-equal values; the predicate
// then filters candidates exactly. Relative mode only; absolute mode uses a
// single global scale.
// ---------------------------------------------------------------------------

#[derive(PartialEq, Eq, Hash, Clone)]
struct BucketKey {
    exp: i64,
    re: ComponentKey,
    im: ComponentKey,
}

#[derive(PartialEq, Eq, Hash, Clone)]
enum ComponentKey {
    Tiny,
    Mid(i128),
    Bits(BitsKey),
}

#[derive(PartialEq, Eq, Hash, Clone)]
enum BitsKey {
    D(u64),
    B(OrdFloat),
}

const ZERO_EXP: i64 = i64::MIN;
const SAT_COORD: i128 = 1 << 126;

/// `floor(x / 2^k)` from the decomposition, saturating to +-SAT_COORD.
fn floor_div_pow2(m: i128, ex: i64, frac_bits: i64, k: i64) -> i128 {
    // value = m * 2^(ex - frac_bits); floor(value / 2^k) = floor(m / 2^(k - ex + frac_bits))
    let shift = k - ex + frac_bits;
    if shift >= 0 {
        if shift >= 127 {
            if m < 0 {
                -1
            } else {
                0
            }
        } else {
            m >> shift
        }
    } else {
        let up = -shift;
        if up >= 127 || m.unsigned_abs().leading_zeros() as i64 <= up + 1 {
            if m < 0 {
                -SAT_COORD
            } else {
                SAT_COORD
            }
        } else {
            (m << up).clamp(-SAT_COORD, SAT_COORD)
        }
    }
}

struct CompInfo {
    /// `(mantissa, exponent, frac_bits)` with value = m * 2^(ex - frac_bits)
    /// and 2^(ex-1) <= |value| < 2^ex; `None` for an exact zero. Big-float
    /// mantissas are truncated to their top 120 bits, which shifts a bucket
    /// coordinate by strictly less than one unit.
    parts: Option<(i128, i64, i64)>,
}

fn comp_info(v: &ComplexValue, comp: usize) -> CompInfo {
    match v {
        ComplexValue::F64 { re, im } => {
            let x = if comp == 0 { *re } else { *im };
            if x == 0.0 {
                return CompInfo { parts: None };
            }
            let bits = x.to_bits();
            let biased = ((bits >> 52) & 0x7ff) as i64;
            let frac = (bits & ((1u64 << 52) - 1)) as i128;
            let (m, ex, fb) = if biased != 0 {
                (frac | (1i128 << 52), biased - 1022, 53)
            } else {
                // subnormal: value = frac * 2^-1074, frac != 0
                let lead = 127 - (frac as u128).leading_zeros() as i64;
                (frac, lead + 1 - 1074, lead + 1)
            };
            CompInfo {
                parts: Some((if x < 0.0 { -m } else { m }, ex, fb)),
            }
        }
        ComplexValue::Big(b) => {
            let x = if comp == 0 { &b.re } else { &b.im };
            if x.is_zero() {
                return CompInfo { parts: None };
            }
            let (mant, _e2) = x.to_integer_exp().expect("finite");
            let ex = x.get_exp().expect("nonzero") as i64;
            let bits = mant.significant_bits() as i64;
            let (m, kept) = if bits > 120 {
                (
                    Integer::from(&mant >> (bits - 120) as u32)
                        .to_i128()
                        .expect("fits"),
                    120,
                )
            } else {
                (mant.to_i128().expect("fits"), bits)
            };
            CompInfo {
                parts: Some((m, ex, kept)),
            }
        }
    }
}

impl CompInfo {
    fn exp(&self) -> i64 {
        self.parts.map(|(_, ex, _)| ex).unwrap_or(ZERO_EXP)
    }

    fn coord(&self, k: i64) -> i128 {
        match self.parts {
            None => 0,
            Some((m, ex, fb)) => floor_div_pow2(m, ex, fb, k),
        }
    }
}

fn log2_eps(eps: f64) -> i64 {
    debug_assert!(eps > 0.0);
    eps.log2().floor() as i64
}

fn bits_key(v: &ComplexValue, comp: usize) -> BitsKey {
    match v {
        ComplexValue::F64 { re, im } => BitsKey::D(if comp == 0 {
            re.to_bits()
        } else {
            im.to_bits()
        }),
        ComplexValue::Big(b) => BitsKey::B(if comp == 0 {
            b.re.clone().into()
        } else {
            b.im.clone().into()
        }),
    }
}

fn modulus_exp(re: &CompInfo, im: &CompInfo) -> i64 {
    re.exp().max(im.exp())
}

fn insert_key(v: &ComplexValue, cfg: &PrecisionConfig) -> BucketKey {
    let eps = cfg.merge_epsilon;
    let ll = log2_eps(eps);
    let p = cfg.mantissa_bits as i64;
    let re = comp_info(v, 0);
    let im = comp_info(v, 1);
    match cfg.comparison_mode {
        ComparisonMode::Absolute => BucketKey {
            exp: 0,
            re: ComponentKey::Mid(re.coord(ll + 2)),
            im: ComponentKey::Mid(im.coord(ll + 2)),
        },
        ComparisonMode::Relative => {
            let e = modulus_exp(&re, &im);
            if e == ZERO_EXP {
                return BucketKey {
                    exp: ZERO_EXP,
                    re: ComponentKey::Tiny,
                    im: ComponentKey::Tiny,
                };
            }
            let class = |info: &CompInfo, comp: usize| -> ComponentKey {
                let ex = info.exp();
                if ex <= e + ll + 6 {
                    ComponentKey::Tiny
                } else if ex > e + ll + p + 6 {
                    ComponentKey::Bits(bits_key(v, comp))
                } else {
                    ComponentKey::Mid(info.coord(e + ll + 2))
                }
            };
            BucketKey {
                exp: e,
                re: class(&re, 0),
                im: class(&im, 1),
            }
        }
    }
}

fn probe_keys(v: &ComplexValue, cfg: &PrecisionConfig) -> Vec<BucketKey> {
    let eps = cfg.merge_epsilon;
    let ll = log2_eps(eps);
    let p = cfg.mantissa_bits as i64;
    let re = comp_info(v, 0);
    let im = comp_info(v, 1);
    let mut keys = Vec::new();
    match cfg.comparison_mode {
        ComparisonMode::Absolute => {
            let cr = re.coord(ll + 2);
            let ci = im.coord(ll + 2);
            for dr in -1..=1i128 {
                for di in -1..=1i128 {
                    keys.push(BucketKey {
                        exp: 0,
                        re: ComponentKey::Mid(cr.saturating_add(dr).clamp(-SAT_COORD, SAT_COORD)),
                        im: ComponentKey::Mid(ci.saturating_add(di).clamp(-SAT_COORD, SAT_COORD)),
                    });
                }
            }
        }
        ComparisonMode::Relative => {
            let e = modulus_exp(&re, &im);
            if e == ZERO_EXP {
                keys.push(BucketKey {
                    exp: ZERO_EXP,
                    re: ComponentKey::Tiny,
                    im: ComponentKey::Tiny,
                });
                return keys;
            }
            for de in -1..=1i64 {
                let ep = e + de;
                let side = |info: &CompInfo, comp: usize| -> Vec<ComponentKey> {
                    let mut out = Vec::new();
                    let ex = info.exp();
                    if ex <= ep + ll + 8 {
                        out.push(ComponentKey::Tiny);
                    }
                    if ex > ep + ll + p + 4 {
                        out.push(ComponentKey::Bits(bits_key(v, comp)));
                    }
                    if ex > ep + ll + 3 && ex <= ep + ll + p + 8 {
                        let c = info.coord(ep + ll + 2);
                        for d in -3..=3i128 {
                            out.push(ComponentKey::Mid(
                                c.saturating_add(d).clamp(-SAT_COORD, SAT_COORD),
                            ));
                        }
                    }
                    out
                };
                let rs = side(&re, 0);
                let is = side(&im, 1);
                for kr in &rs {
                    for ki in &is {
                        keys.push(BucketKey {
                            exp: ep,
                            re: kr.clone(),
                            im: ki.clone(),
                        });
                    }
                }
            }
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cfg: PrecisionConfig) -> TerminalTable {
        cfg.validate().unwrap();
        TerminalTable::new(cfg)
    }

    #[test]
    fn intern_is_idempotent() {
        let cfg = PrecisionConfig::double();
        let mut t = table(cfg);
        let a = t.intern(cfg.complex(0.0, 0.0));
        let b = t.intern(cfg.complex(0.0, 0.0));
        assert_eq!(a, b);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn distinct_values_get_distinct_indices() {
        let cfg = PrecisionConfig::double();
        let mut t = table(cfg);
        let a = t.intern(cfg.real(0.5));
        let b = t.intern(cfg.real(-0.5));
        assert_ne!(a, b);
        let one = t.intern(cfg.one());
        let neg_one = t.intern(cfg.real(-1.0));
        assert_ne!(one, neg_one);
    }

    #[test]
    fn relative_epsilon_merges_nearby_values() {
        let cfg = PrecisionConfig::with_bits(128);
        let mut t = table(cfg);
        let x = std::f64::consts::FRAC_1_SQRT_2;
        let a = t.intern(cfg.real(x));
        // 1e-40 is below the default 1e-30 relative tolerance at this magnitude
        let bumped = cfg.real(x).add(&cfg.real(1e-40));
        let b = t.intern(bumped);
        assert_eq!(a, b);
    }

    #[test]
    fn dedup_predicate_properties() {
        let cfg = PrecisionConfig::default();
        let a = cfg.real(1.0 / 3.0);
        let b = cfg.complex(1.0 / 3.0, 1e-33);
        assert!(dedup_equal(&a, &a, &cfg));
        assert_eq!(dedup_equal(&a, &b, &cfg), dedup_equal(&b, &a, &cfg));
    }

    #[test]
    fn epsilon_zero_is_bitwise() {
        let cfg = PrecisionConfig {
            mantissa_bits: 53,
            merge_epsilon: 0.0,
            comparison_mode: ComparisonMode::Relative,
        };
        let a = cfg.real(0.1 + 0.2);
        let b = cfg.real(0.3);
        assert!(!dedup_equal(&a, &b, &cfg));
        let mut t = table(cfg);
        let ia = t.intern(a);
        let ib = t.intern(b);
        assert_ne!(ia, ib);
        // Signed zeros are normalized before comparison.
        assert!(dedup_equal(&cfg.complex(-0.0, 0.0), &cfg.zero(), &cfg));
    }

    #[test]
    fn tiny_component_cross_match() {
        // Components far below the modulus merge even though their own bits
        // differ: |u - v| is dominated by the large component.
        let cfg = PrecisionConfig::double();
        let mut t = table(cfg);
        let a = t.intern(cfg.complex(1.0, 1e-300));
        let b = t.intern(cfg.complex(1.0, -3e-301));
        assert_eq!(a, b);
        let c = t.intern(cfg.complex(1.0, 1e-3));
        assert_ne!(a, c);
    }

    #[test]
    fn high_precision_superposition_survives() {
        // 2^(-n/2) for n=2048 underflows a double but not a 256-bit float.
        let cfg = PrecisionConfig::with_bits(256);
        let mut t = table(cfg);
        let zero = t.intern(cfg.zero());
        let amp = t.intern(cfg.inv_sqrt2_pow(2048));
        assert_ne!(zero, amp);
        assert!(!t.get(amp).is_zero());
    }

    #[test]
    fn precision_sufficiency_for_neighboring_amplitudes() {
        let cfg = PrecisionConfig::default();
        let mut t = table(cfg);
        let n = 200;
        let a = t.intern(cfg.inv_sqrt2_pow(n));
        let b = t.intern(cfg.inv_sqrt2_pow(n + 2));
        let z = t.intern(cfg.zero());
        assert_ne!(a, b);
        assert_ne!(a, z);
        assert_ne!(b, z);
    }

    #[test]
    fn absolute_mode_buckets() {
        let cfg = PrecisionConfig {
            mantissa_bits: 53,
            merge_epsilon: 1e-6,
            comparison_mode: ComparisonMode::Absolute,
        };
        let mut t = table(cfg);
        let a = t.intern(cfg.real(1.0));
        let b = t.intern(cfg.real(1.0 + 5e-7));
        let c = t.intern(cfg.real(1.0 + 5e-6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn first_match_wins_by_insertion_order() {
        let cfg = PrecisionConfig {
            mantissa_bits: 53,
            merge_epsilon: 1e-2,
            comparison_mode: ComparisonMode::Absolute,
        };
        let mut t = table(cfg);
        let a = t.intern(cfg.real(0.0));
        let far = t.intern(cfg.real(0.02));
        assert_ne!(a, far);
        // 0.008 is within eps of both 0.0 and 0.02; the earlier entry wins.
        let c = t.intern(cfg.real(0.008));
        assert_eq!(c, a);
    }

    #[test]
    fn randomized_lookup_agrees_with_linear_scan() {
        use rand::{Rng, SeedableRng};
        for bits in [53u32, 128] {
            let cfg = PrecisionConfig::with_bits(bits);
            let mut t = table(cfg);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            let mut values = Vec::new();
            for _ in 0..400 {
                let scale = 2f64.powi(rng.gen_range(-60..60));
                let v = cfg.complex(
                    rng.gen_range(-1.0..1.0) * scale,
                    rng.gen_range(-1.0..1.0) * scale,
                );
                values.push(v.clone());
                t.intern(v);
            }
            for v in &values {
                let by_index = t.lookup(v).expect("interned value must be found");
                let by_scan = (0..t.len() as u32)
                    .find(|&i| dedup_equal(t.get(i), v, &cfg))
                    .unwrap();
                assert_eq!(by_index, by_scan);
            }
        }
    }
}
