//! Truncated multivariate trigonometric-exponential series.
//!
//! A series value is a finite sum of terms
//!
//! ```text
//! e^{(i-j)·θ3} · (c·cos(p·θ1 + q·θ2) + s·sin(p·θ1 + q·θ2)) · a1^i a2^j a3^k a4^m
//! ```
//!
//! over four motion amplitudes `a1..a4` and two phase angles, with a secular
//! exponential in the third angle. Terms are truncated at a fixed total
//! amplitude order `i+j+k+m <= N`. The phase rates themselves are amplitude
//! polynomials ([`FrequencySeries`]), so differentiation in time mixes
//! amplitude orders.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Exponents of the four motion amplitudes, `[i, j, k, m]`.
pub type AmpExponents = [u32; 4];

/// Coefficients with magnitude below this (both cosine and sine) are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-18;

/// Index of one series term: amplitude exponents plus phase harmonics.
///
/// Canonical form keeps `p >= 0`, and `q >= 0` whenever `p == 0`; terms with a
/// negative leading harmonic are folded through cosine parity / sine oddness.
/// The pure-constant harmonic `(p, q) = (0, 0)` never stores a sine part.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TermIndex {
    /// Amplitude exponents `[i, j, k, m]`.
    pub amp: AmpExponents,
    /// Harmonic of the first phase angle.
    pub p: u32,
    /// Harmonic of the second phase angle (may be negative when `p > 0`).
    pub q: i32,
}

impl TermIndex {
    pub fn new(amp: AmpExponents, p: u32, q: i32) -> Self {
        Self { amp, p, q }
    }

    /// Total amplitude order `i + j + k + m`.
    pub fn order(&self) -> u32 {
        self.amp.iter().sum()
    }

    /// Exponent `i - j` of the secular exponential.
    pub fn hyperbolic_exponent(&self) -> i64 {
        i64::from(self.amp[0]) - i64::from(self.amp[1])
    }

    pub fn is_canonical(&self) -> bool {
        self.p > 0 || self.q >= 0
    }
}

impl std::fmt::Display for TermIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({},{},{},{};{},{})",
            self.amp[0], self.amp[1], self.amp[2], self.amp[3], self.p, self.q
        )
    }
}

/// Cosine/sine coefficient pair of one term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffPair<T> {
    pub cos: T,
    pub sin: T,
}

impl<T: Real> CoeffPair<T> {
    pub fn zero() -> Self {
        Self {
            cos: T::zero(),
            sin: T::zero(),
        }
    }
}

/// Truncated series with real coefficients, canonical indices and pruning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSeries<T> {
    order: u32,
    terms: BTreeMap<TermIndex, CoeffPair<T>>,
}

impl<T: Real> TrigSeries<T> {
    /// The empty series at truncation order `order`.
    pub fn zero(order: u32) -> Self {
        Self {
            order,
            terms: BTreeMap::new(),
        }
    }

    /// A constant series (single `(0,0,0,0;0,0)` cosine term).
    pub fn constant(order: u32, value: T) -> Self {
        let mut s = Self::zero(order);
        s.add_term(TermIndex::new([0, 0, 0, 0], 0, 0), value, T::zero());
        s
    }

    /// A single-term series; the index is canonicalized.
    pub fn term(order: u32, index: TermIndex, cos: T, sin: T) -> Self {
        let mut s = Self::zero(order);
        s.add_term(index, cos, sin);
        s
    }

    pub fn max_order(&self) -> u32 {
        self.order
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermIndex, &CoeffPair<T>)> {
        self.terms.iter()
    }

    /// Coefficient pair at a (canonicalized) index; zero when absent.
    pub fn coeff(&self, index: TermIndex) -> CoeffPair<T> {
        let (idx, flip) = canonicalize(index.amp, i64::from(index.p), i64::from(index.q));
        match self.terms.get(&idx) {
            Some(cs) => CoeffPair {
                cos: cs.cos,
                sin: if flip { -cs.sin } else { cs.sin },
            },
            None => CoeffPair::zero(),
        }
    }

    /// Accumulate a contribution at `index`, canonicalizing and pruning.
    pub fn add_term(&mut self, index: TermIndex, cos: T, sin: T) {
        self.add_raw(index.amp, i64::from(index.p), i64::from(index.q), cos, sin);
    }

    fn add_raw(&mut self, amp: AmpExponents, p: i64, q: i64, cos: T, sin: T) {
        if amp.iter().sum::<u32>() > self.order {
            return;
        }
        let (idx, flip) = canonicalize(amp, p, q);
        let sin = if flip { -sin } else { sin };
        let sin = if idx.p == 0 && idx.q == 0 { T::zero() } else { sin };
        let entry = self.terms.entry(idx).or_insert_with(CoeffPair::zero);
        entry.cos += cos;
        entry.sin += sin;
        let thresh = T::c(PRUNE_THRESHOLD);
        if entry.cos.abs() < thresh && entry.sin.abs() < thresh {
            self.terms.remove(&idx);
        }
    }

    /// Overwrite the coefficients at `index` (used by the order-n solves).
    pub fn set_term(&mut self, index: TermIndex, cos: T, sin: T) {
        let (idx, flip) = canonicalize(index.amp, i64::from(index.p), i64::from(index.q));
        debug_assert!(!flip, "set_term expects a canonical index");
        self.terms.remove(&idx);
        self.add_term(index, cos, sin);
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::OrderMismatch(self.order, other.order));
        }
        let mut out = self.clone();
        for (idx, cs) in &other.terms {
            out.add_term(*idx, cs.cos, cs.sin);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn scale(&self, factor: T) -> Self {
        let mut out = Self::zero(self.order);
        for (idx, cs) in &self.terms {
            out.add_term(*idx, cs.cos * factor, cs.sin * factor);
        }
        out
    }

    /// Drop all terms above `order` and lower the truncation order.
    pub fn truncated(&self, order: u32) -> Self {
        let mut out = Self::zero(order);
        for (idx, cs) in &self.terms {
            if idx.order() <= order {
                out.terms.insert(*idx, *cs);
            }
        }
        out
    }

    /// Terms of exactly the given amplitude order.
    pub fn order_slice(&self, order: u32) -> impl Iterator<Item = (&TermIndex, &CoeffPair<T>)> {
        self.terms.iter().filter(move |(idx, _)| idx.order() == order)
    }

    /// Product with truncation. Trig products expand through the
    /// product-to-sum identities; amplitude exponents add.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::OrderMismatch(self.order, other.order));
        }
        let n = self.order;
        let half = T::c(0.5);

        // Bucket terms by total amplitude order so pairs beyond the
        // truncation are skipped wholesale. Iteration order stays fixed, so
        // per-key accumulation is deterministic.
        let buckets_a = bucket_by_order(self, n);
        let buckets_b = bucket_by_order(other, n);

        let mut acc: FxHashMap<TermIndex, CoeffPair<T>> = FxHashMap::default();
        for (oa, bucket_a) in buckets_a.iter().enumerate() {
            if bucket_a.is_empty() {
                continue;
            }
            for bucket_b in buckets_b.iter().take((n as usize + 1) - oa) {
                for &(ia, ca) in bucket_a {
                    for &(ib, cb) in bucket_b.iter() {
                        let amp = [
                            ia.amp[0] + ib.amp[0],
                            ia.amp[1] + ib.amp[1],
                            ia.amp[2] + ib.amp[2],
                            ia.amp[3] + ib.amp[3],
                        ];
                        let cc = ca.cos * cb.cos;
                        let ss = ca.sin * cb.sin;
                        let cs = ca.cos * cb.sin;
                        let sc = ca.sin * cb.cos;
                        // cos(A)cos(B), sin terms via product-to-sum:
                        //   at A+B: ((cc - ss)/2, (cs + sc)/2)
                        //   at A-B: ((cc + ss)/2, (sc - cs)/2)
                        let p_sum = i64::from(ia.p) + i64::from(ib.p);
                        let q_sum = i64::from(ia.q) + i64::from(ib.q);
                        accumulate(
                            &mut acc,
                            amp,
                            p_sum,
                            q_sum,
                            (cc - ss) * half,
                            (cs + sc) * half,
                        );
                        let p_diff = i64::from(ia.p) - i64::from(ib.p);
                        let q_diff = i64::from(ia.q) - i64::from(ib.q);
                        accumulate(
                            &mut acc,
                            amp,
                            p_diff,
                            q_diff,
                            (cc + ss) * half,
                            (sc - cs) * half,
                        );
                    }
                }
            }
        }

        Ok(Self::from_accumulator(n, acc))
    }

    fn from_accumulator(order: u32, acc: FxHashMap<TermIndex, CoeffPair<T>>) -> Self {
        let thresh = T::c(PRUNE_THRESHOLD);
        let mut terms = BTreeMap::new();
        for (idx, cs) in acc {
            if cs.cos.abs() < thresh && cs.sin.abs() < thresh {
                continue;
            }
            terms.insert(idx, cs);
        }
        Self { order, terms }
    }

    /// Time derivative given the three phase-rate series.
    ///
    /// Each term differentiates into a secular part `(i-j)·λ` carrying the
    /// same harmonics and a phase part `(p·ω + q·ν)` rotating cosine into
    /// sine; both multiply the corresponding rate polynomial, which shifts
    /// amplitude exponents upward.
    pub fn ddt(&self, freqs: &Frequencies<T>) -> Self {
        let n = self.order;
        let mut out = Self::zero(n);
        for (idx, cs) in &self.terms {
            let expo = idx.hyperbolic_exponent();
            if expo != 0 {
                let factor = T::c(expo as f64);
                for (fidx, w) in freqs.lambda.terms() {
                    let Some(amp) = add_exponents(idx.amp, *fidx, n) else {
                        continue;
                    };
                    let scale = factor * *w;
                    out.add_raw(
                        amp,
                        i64::from(idx.p),
                        i64::from(idx.q),
                        cs.cos * scale,
                        cs.sin * scale,
                    );
                }
            }
            if idx.p != 0 {
                let pf = T::of_usize(idx.p as usize);
                for (fidx, w) in freqs.omega.terms() {
                    let Some(amp) = add_exponents(idx.amp, *fidx, n) else {
                        continue;
                    };
                    let scale = pf * *w;
                    out.add_raw(
                        amp,
                        i64::from(idx.p),
                        i64::from(idx.q),
                        cs.sin * scale,
                        -cs.cos * scale,
                    );
                }
            }
            if idx.q != 0 {
                let qf = T::c(f64::from(idx.q));
                for (fidx, w) in freqs.nu.terms() {
                    let Some(amp) = add_exponents(idx.amp, *fidx, n) else {
                        continue;
                    };
                    let scale = qf * *w;
                    out.add_raw(
                        amp,
                        i64::from(idx.p),
                        i64::from(idx.q),
                        cs.sin * scale,
                        -cs.cos * scale,
                    );
                }
            }
        }
        out
    }

    /// Evaluate the series at given amplitudes, phases and time.
    ///
    /// The phase rates are evaluated from their amplitude polynomials first;
    /// then `θ1 = ω t + φ1`, `θ2 = ν t + φ2`, `θ3 = λ t`.
    pub fn evaluate(&self, freqs: &Frequencies<T>, amps: [T; 4], phi1: T, phi2: T, t: T) -> T {
        let omega = freqs.omega.evaluate(amps);
        let nu = freqs.nu.evaluate(amps);
        let lambda = freqs.lambda.evaluate(amps);
        let theta1 = omega * t + phi1;
        let theta2 = nu * t + phi2;
        let theta3 = lambda * t;
        let mut total = T::zero();
        for (idx, cs) in &self.terms {
            let mut amp_factor = T::one();
            for (axis, &e) in idx.amp.iter().enumerate() {
                amp_factor *= amps[axis].powi(e as i32);
            }
            if amp_factor == T::zero() {
                continue;
            }
            let expo = idx.hyperbolic_exponent();
            let exp_factor = if expo == 0 {
                T::one()
            } else {
                (T::c(expo as f64) * theta3).exp()
            };
            let phase = T::of_usize(idx.p as usize) * theta1 + T::c(f64::from(idx.q)) * theta2;
            let (sin_ph, cos_ph) = phase.sin_cos();
            total += exp_factor * amp_factor * (cs.cos * cos_ph + cs.sin * sin_ph);
        }
        total
    }
}

fn bucket_by_order<T: Real>(s: &TrigSeries<T>, order: u32) -> Vec<Vec<(TermIndex, CoeffPair<T>)>> {
    let mut buckets = vec![Vec::new(); order as usize + 1];
    for (idx, cs) in &s.terms {
        buckets[idx.order() as usize].push((*idx, *cs));
    }
    buckets
}

fn accumulate<T: Real>(
    acc: &mut FxHashMap<TermIndex, CoeffPair<T>>,
    amp: AmpExponents,
    p: i64,
    q: i64,
    cos: T,
    sin: T,
) {
    let (idx, flip) = canonicalize(amp, p, q);
    let sin = if flip { -sin } else { sin };
    let entry = acc.entry(idx).or_insert_with(CoeffPair::zero);
    entry.cos += cos;
    if !(idx.p == 0 && idx.q == 0) {
        entry.sin += sin;
    }
}

/// Fold a raw `(p, q)` pair into canonical form. Returns the canonical index
/// and whether the sine coefficient changes sign.
fn canonicalize(amp: AmpExponents, p: i64, q: i64) -> (TermIndex, bool) {
    if p < 0 || (p == 0 && q < 0) {
        (
            TermIndex::new(amp, (-p) as u32, (-q) as i32),
            true,
        )
    } else {
        (TermIndex::new(amp, p as u32, q as i32), false)
    }
}

fn add_exponents(a: AmpExponents, b: AmpExponents, max_order: u32) -> Option<AmpExponents> {
    let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
    if sum.iter().sum::<u32>() > max_order {
        None
    } else {
        Some(sum)
    }
}

/// Amplitude polynomial for one phase rate.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySeries<T> {
    order: u32,
    terms: BTreeMap<AmpExponents, T>,
}

impl<T: Real> FrequencySeries<T> {
    pub fn zero(order: u32) -> Self {
        Self {
            order,
            terms: BTreeMap::new(),
        }
    }

    /// Polynomial with only the constant (zeroth-order) rate.
    pub fn constant(order: u32, value: T) -> Self {
        let mut s = Self::zero(order);
        s.set([0, 0, 0, 0], value);
        s
    }

    pub fn max_order(&self) -> u32 {
        self.order
    }

    /// The zeroth-order rate.
    pub fn zeroth(&self) -> T {
        self.coeff([0, 0, 0, 0])
    }

    pub fn coeff(&self, idx: AmpExponents) -> T {
        self.terms.get(&idx).copied().unwrap_or_else(T::zero)
    }

    pub fn set(&mut self, idx: AmpExponents, value: T) {
        assert!(
            idx.iter().sum::<u32>() <= self.order,
            "frequency coefficient beyond truncation order"
        );
        if value == T::zero() {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, value);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&AmpExponents, &T)> {
        self.terms.iter()
    }

    pub fn evaluate(&self, amps: [T; 4]) -> T {
        let mut total = T::zero();
        for (idx, w) in &self.terms {
            let mut factor = T::one();
            for (axis, &e) in idx.iter().enumerate() {
                factor *= amps[axis].powi(e as i32);
            }
            total += *w * factor;
        }
        total
    }

    pub fn truncated(&self, order: u32) -> Self {
        let mut out = Self::zero(order);
        for (idx, w) in &self.terms {
            if idx.iter().sum::<u32>() <= order {
                out.terms.insert(*idx, *w);
            }
        }
        out
    }
}

/// The three phase-rate polynomials bundled for differentiation/evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Frequencies<T> {
    pub omega: FrequencySeries<T>,
    pub nu: FrequencySeries<T>,
    pub lambda: FrequencySeries<T>,
}

impl<T: Real> Frequencies<T> {
    pub fn constant(order: u32, omega0: T, nu0: T, lambda0: T) -> Self {
        Self {
            omega: FrequencySeries::constant(order, omega0),
            nu: FrequencySeries::constant(order, nu0),
            lambda: FrequencySeries::constant(order, lambda0),
        }
    }

    pub fn truncated(&self, order: u32) -> Self {
        Self {
            omega: self.omega.truncated(order),
            nu: self.nu.truncated(order),
            lambda: self.lambda.truncated(order),
        }
    }
}

// --- serialized representation -------------------------------------------

/// One serialized series term.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermRecord<T> {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub m: u32,
    pub p: u32,
    pub q: i32,
    pub c: T,
    pub s: T,
}

/// Serialized form of a [`TrigSeries`]: `{order, terms: [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesRecord<T> {
    pub order: u32,
    pub terms: Vec<TermRecord<T>>,
}

impl<T: Real> TrigSeries<T> {
    pub fn to_record(&self) -> SeriesRecord<T> {
        SeriesRecord {
            order: self.order,
            terms: self
                .terms
                .iter()
                .map(|(idx, cs)| TermRecord {
                    i: idx.amp[0],
                    j: idx.amp[1],
                    k: idx.amp[2],
                    m: idx.amp[3],
                    p: idx.p,
                    q: idx.q,
                    c: cs.cos,
                    s: cs.sin,
                })
                .collect(),
        }
    }

    pub fn from_record(record: &SeriesRecord<T>) -> Result<Self>
    where
        T: Clone,
    {
        let mut out = Self::zero(record.order);
        for t in &record.terms {
            let idx = TermIndex::new([t.i, t.j, t.k, t.m], t.p, t.q);
            if !idx.is_canonical() {
                return Err(Error::Format(format!("non-canonical term index {idx}")));
            }
            if idx.order() > record.order {
                return Err(Error::Format(format!(
                    "term {idx} exceeds stated order {}",
                    record.order
                )));
            }
            if out.terms.insert(idx, CoeffPair { cos: t.c, sin: t.s }).is_some() {
                return Err(Error::Format(format!("duplicate term index {idx}")));
            }
        }
        Ok(out)
    }
}

/// One serialized frequency coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreqRecord<T> {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub m: u32,
    pub coef: T,
}

/// Serialized form of a [`FrequencySeries`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyRecord<T> {
    pub order: u32,
    pub terms: Vec<FreqRecord<T>>,
}

impl<T: Real> FrequencySeries<T> {
    pub fn to_record(&self) -> FrequencyRecord<T> {
        FrequencyRecord {
            order: self.order,
            terms: self
                .terms
                .iter()
                .map(|(idx, w)| FreqRecord {
                    i: idx[0],
                    j: idx[1],
                    k: idx[2],
                    m: idx[3],
                    coef: *w,
                })
                .collect(),
        }
    }

    pub fn from_record(record: &FrequencyRecord<T>) -> Result<Self> {
        let mut out = Self::zero(record.order);
        for t in &record.terms {
            let idx = [t.i, t.j, t.k, t.m];
            if idx.iter().sum::<u32>() > record.order {
                return Err(Error::Format(format!(
                    "frequency coefficient ({},{},{},{}) exceeds order {}",
                    t.i, t.j, t.k, t.m, record.order
                )));
            }
            if out.terms.insert(idx, t.coef).is_some() {
                return Err(Error::Format("duplicate frequency index".into()));
            }
        }
        Ok(out)
    }
}
