//! Boolean functions on `{0,1}^n`, restrictions, and influence analysis.
//!
//! Inputs are packed into a [`Point`]: bit `i` of the integer is `x_i`.
//! Coordinates are 0-based throughout the crate.
//!
//! Exact quantities are computed as integer counts over the free
//! sub-cube and converted to `f64` once, so every exact probability is a
//! dyadic rational. Structured families (symmetric, Tribes, address and
//! the decision-list hard instance) additionally carry closed forms that
//! remain valid under arbitrary restrictions.

use std::sync::Arc;

use rand::Rng;

use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::seed;

/// An input point; bit `i` holds `x_i`.
pub type Point = u64;

pub const MAX_ARITY: usize = 64;

/// Default number of free variables up to which exhaustive enumeration is allowed.
pub const ENUMERATION_CAP: usize = 20;

pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A partial assignment of coordinates to bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Restriction {
    mask: u64,
    values: u64,
}

impl Restriction {
    pub const fn empty() -> Self {
        Restriction { mask: 0, values: 0 }
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, bool)>>(pairs: I) -> Result<Self> {
        let mut r = Restriction::empty();
        for (i, b) in pairs {
            r.assign(i, b)?;
        }
        Ok(r)
    }

    /// Builds a restriction from raw masks; `values` outside `mask` are ignored.
    pub fn from_masks(mask: u64, values: u64) -> Self {
        Restriction { mask, values: values & mask }
    }

    pub fn assign(&mut self, i: usize, bit: bool) -> Result<()> {
        if i >= MAX_ARITY {
            return Err(Error::CoordinateOutOfRange { index: i, arity: MAX_ARITY });
        }
        let m = 1u64 << i;
        if self.mask & m != 0 {
            return Err(Error::DuplicateAssignment(i));
        }
        self.mask |= m;
        if bit {
            self.values |= m;
        }
        Ok(())
    }

    pub fn with(mut self, i: usize, bit: bool) -> Result<Self> {
        self.assign(i, bit)?;
        Ok(self)
    }

    /// Disjoint union of two restrictions.
    pub fn compose(&self, other: &Restriction) -> Result<Self> {
        let clash = self.mask & other.mask;
        if clash != 0 {
            return Err(Error::DuplicateAssignment(clash.trailing_zeros() as usize));
        }
        Ok(Restriction { mask: self.mask | other.mask, values: self.values | other.values })
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        if i < MAX_ARITY && self.mask >> i & 1 == 1 {
            Some(self.values >> i & 1 == 1)
        } else {
            None
        }
    }

    pub fn is_assigned(&self, i: usize) -> bool {
        self.get(i).is_some()
    }

    /// Overrides the assigned coordinates of `x`.
    #[inline]
    pub fn apply(&self, x: Point) -> Point {
        (x & !self.mask) | self.values
    }

    pub fn agrees_with(&self, x: Point) -> bool {
        x & self.mask == self.values
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn values(&self) -> u64 {
        self.values
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        (0..MAX_ARITY).filter_map(move |i| self.get(i).map(|b| (i, b)))
    }

    pub fn check_arity(&self, n: usize) -> Result<()> {
        if self.mask & !full_mask(n) != 0 {
            let index = (self.mask & !full_mask(n)).trailing_zeros() as usize;
            return Err(Error::CoordinateOutOfRange { index, arity: n });
        }
        Ok(())
    }
}

/// Packed truth table: bit `x` of the table is `f(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TruthTable {
    n: usize,
    words: Vec<u64>,
}

impl TruthTable {
    pub fn from_fn(n: usize, mut f: impl FnMut(Point) -> bool) -> Result<Self> {
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
        }
        let len = 1usize << n;
        let mut words = vec![0u64; len.div_ceil(64)];
        for x in 0..len {
            if f(x as Point) {
                words[x / 64] |= 1 << (x % 64);
            }
        }
        Ok(TruthTable { n, words })
    }

    pub fn from_bits(n: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != 1usize << n.min(ENUMERATION_CAP) || n > ENUMERATION_CAP {
            return Err(Error::InvalidFunction(format!(
                "truth table for n={n} needs {} entries, got {}",
                1u64 << n.min(63),
                bits.len()
            )));
        }
        Self::from_fn(n, |x| bits[x as usize])
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, x: Point) -> bool {
        let x = x as usize;
        self.words[x / 64] >> (x % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Hex encoding, most significant digit first, of the integer whose bit `x` is `f(x)`.
    pub fn to_hex(&self) -> String {
        let len = 1usize << self.n;
        let digits = len.div_ceil(4);
        (0..digits)
            .rev()
            .map(|d| {
                let mut v = 0u32;
                for b in 0..4 {
                    let x = d * 4 + b;
                    if x < len && self.get(x as Point) {
                        v |= 1 << b;
                    }
                }
                char::from_digit(v, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self> {
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
        }
        let len = 1usize << n;
        let digits = len.div_ceil(4);
        let hex = hex.trim().trim_start_matches("0x");
        if hex.len() != digits {
            return Err(Error::Parse(format!("truth table for n={n} needs {digits} hex digits, got {}", hex.len())));
        }
        let values: Vec<u32> = hex
            .chars()
            .rev()
            .map(|c| c.to_digit(16).ok_or_else(|| Error::Parse(format!("bad hex digit {c:?}"))))
            .collect::<Result<_>>()?;
        for (d, v) in values.iter().enumerate() {
            for b in 0..4 {
                if d * 4 + b >= len && v >> b & 1 == 1 {
                    return Err(Error::Parse("truth table has bits beyond 2^n".into()));
                }
            }
        }
        Self::from_fn(n, |x| values[x as usize / 4] >> (x % 4) & 1 == 1)
    }
}

/// Structured family tag. Every family except `TruthTable` and `Tree`
/// carries an analytic influence provider.
#[derive(Clone, Debug)]
pub enum Family {
    TruthTable(Arc<TruthTable>),
    /// `profile[w]` is the value on inputs of Hamming weight `w`.
    Symmetric(Arc<[bool]>),
    /// OR of `2^w` disjoint ANDs of width `w`; tribe `t` owns bits `t*w..(t+1)*w`.
    Tribes { w: usize },
    /// `k` control bits select one of `2^k` rows of a `2^k x 2^k` matrix of
    /// action bits; the output is the parity of that row.
    Address { k: usize },
    /// Alternating decision list on `k` list bits that falls through to an
    /// address function on `z = 0^k`.
    HardInstance { k: usize },
    Tree(Arc<DecisionTree>),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::TruthTable(_) => "truth_table",
            Family::Symmetric(_) => "symmetric",
            Family::Tribes { .. } => "tribes",
            Family::Address { .. } => "address",
            Family::HardInstance { .. } => "hard_instance",
            Family::Tree(_) => "tree",
        }
    }

    pub fn has_provider(&self) -> bool {
        !matches!(self, Family::TruthTable(_) | Family::Tree(_))
    }
}

/// Per-coordinate influences and their sum.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct InfluenceProfile {
    pub per_coordinate: Vec<f64>,
    pub total: f64,
}

impl InfluenceProfile {
    pub fn new(per_coordinate: Vec<f64>) -> Self {
        let total = per_coordinate.iter().sum();
        InfluenceProfile { per_coordinate, total }
    }
}

/// Influences and mean of a (possibly restricted) function.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub influences: Vec<f64>,
    pub expectation: f64,
    /// True when the values are Monte Carlo estimates.
    pub approximate: bool,
}

impl Analysis {
    pub fn bias(&self) -> f64 {
        self.expectation.min(1.0 - self.expectation)
    }

    pub fn is_constant(&self) -> bool {
        !self.approximate && (self.expectation == 0.0 || self.expectation == 1.0)
    }

    /// Output of the Bayes rule `1{E[f] >= 1/2}`.
    pub fn majority(&self) -> bool {
        self.expectation >= 0.5
    }

    pub fn total_influence(&self) -> f64 {
        self.influences.iter().sum()
    }
}

/// Monte Carlo parameters for quantities beyond the enumeration cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub samples: u64,
    pub seed: u64,
}

/// A total function `{0,1}^n -> {0,1}`, possibly restricted.
///
/// Restriction keeps the arity: restricted coordinates simply become
/// irrelevant, so coordinate identities stay stable.
#[derive(Clone, Debug)]
pub struct BooleanFunction {
    n: usize,
    family: Family,
    restriction: Restriction,
}

impl BooleanFunction {
    fn build(n: usize, family: Family) -> Result<Self> {
        if n > MAX_ARITY {
            return Err(Error::ArityOverflow(n));
        }
        Ok(BooleanFunction { n, family, restriction: Restriction::empty() })
    }

    pub fn from_table(table: TruthTable) -> Self {
        BooleanFunction { n: table.n, family: Family::TruthTable(Arc::new(table)), restriction: Restriction::empty() }
    }

    pub fn from_fn(n: usize, f: impl FnMut(Point) -> bool) -> Result<Self> {
        Ok(Self::from_table(TruthTable::from_fn(n, f)?))
    }

    pub fn constant(n: usize, bit: bool) -> Result<Self> {
        Self::symmetric(vec![bit; n + 1])
    }

    /// Symmetric function from its weight profile of length `n + 1`.
    pub fn symmetric(profile: Vec<bool>) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::InvalidFunction("symmetric profile must have length n+1 >= 1".into()));
        }
        let n = profile.len() - 1;
        Self::build(n, Family::Symmetric(profile.into()))
    }

    pub fn and(n: usize) -> Result<Self> {
        Self::threshold(n, n)
    }

    pub fn or(n: usize) -> Result<Self> {
        Self::threshold(n, 1)
    }

    /// `1{|x| >= t}`.
    pub fn threshold(n: usize, t: usize) -> Result<Self> {
        Self::symmetric((0..=n).map(|w| w >= t).collect())
    }

    /// Strict majority, `1{|x| > n/2}`.
    pub fn majority(n: usize) -> Result<Self> {
        Self::threshold(n, n / 2 + 1)
    }

    pub fn parity(n: usize) -> Result<Self> {
        Self::symmetric((0..=n).map(|w| w % 2 == 1).collect())
    }

    pub fn dictator(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::CoordinateOutOfRange { index: i, arity: n });
        }
        Self::from_fn(n, |x| x >> i & 1 == 1)
    }

    pub fn tribes(w: usize) -> Result<Self> {
        if w == 0 || w > 4 {
            return Err(Error::ArityOverflow(if w == 0 { 0 } else { w << w }));
        }
        Self::build(w << w, Family::Tribes { w })
    }

    pub fn address(k: usize) -> Result<Self> {
        if k == 0 || k > 2 {
            return Err(Error::ArityOverflow(if k == 0 { 0 } else { k + (1 << (2 * k)) }));
        }
        Self::build(k + (1 << (2 * k)), Family::Address { k })
    }

    pub fn hard_instance(k: usize) -> Result<Self> {
        if k == 0 || k > 2 {
            return Err(Error::ArityOverflow(if k == 0 { 0 } else { 2 * k + (1 << (2 * k)) }));
        }
        Self::build(2 * k + (1 << (2 * k)), Family::HardInstance { k })
    }

    pub fn from_tree(n: usize, tree: DecisionTree) -> Result<Self> {
        if let Some(v) = tree.max_var() {
            if v >= n {
                return Err(Error::CoordinateOutOfRange { index: v, arity: n });
            }
        }
        Self::build(n, Family::Tree(Arc::new(tree)))
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn restriction(&self) -> &Restriction {
        &self.restriction
    }

    pub fn free_mask(&self) -> u64 {
        full_mask(self.n) & !self.restriction.mask
    }

    pub fn free_count(&self) -> usize {
        self.free_mask().count_ones() as usize
    }

    pub fn check_point(&self, x: Point) -> Result<()> {
        if x & !full_mask(self.n) != 0 {
            return Err(Error::ArityMismatch { expected: self.n, found: 64 - x.leading_zeros() as usize });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: Point) -> Result<bool> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the arity check; bits above `n` must be zero.
    #[inline]
    pub fn eval_unchecked(&self, x: Point) -> bool {
        let y = self.restriction.apply(x);
        match &self.family {
            Family::TruthTable(t) => t.get(y),
            Family::Symmetric(p) => p[y.count_ones() as usize],
            Family::Tribes { w } => eval_tribes(*w, y),
            Family::Address { k } => eval_address(*k, y),
            Family::HardInstance { k } => eval_hard(*k, y),
            Family::Tree(t) => t.eval(y),
        }
    }

    /// The restriction `f_π`; arity is unchanged.
    pub fn restrict(&self, pi: &Restriction) -> Result<Self> {
        pi.check_arity(self.n)?;
        // Coordinates already fixed by `self` stay fixed; re-fixing them is a no-op
        // only when the bits agree.
        let overlap = pi.mask & self.restriction.mask;
        if (pi.values ^ self.restriction.values) & overlap != 0 {
            return Err(Error::DuplicateAssignment((overlap & (pi.values ^ self.restriction.values)).trailing_zeros() as usize));
        }
        let mut g = self.clone();
        g.restriction = Restriction::from_masks(pi.mask | self.restriction.mask, pi.values | self.restriction.values);
        Ok(g)
    }

    /// Materializes the truth table (restriction baked in).
    pub fn to_truth_table(&self) -> Result<TruthTable> {
        TruthTable::from_fn(self.n, |x| self.eval_unchecked(x))
    }

    /// Influences and mean, from the analytic provider when the family has
    /// one, otherwise by enumerating the free sub-cube.
    pub fn analysis(&self) -> Result<Analysis> {
        match self.analytic() {
            Some(a) => Ok(a),
            None => self.analysis_enumerated(),
        }
    }

    /// Closed-form analysis, if the family supports it.
    pub fn analytic(&self) -> Option<Analysis> {
        let (influences, expectation) = match &self.family {
            Family::TruthTable(_) | Family::Tree(_) => return None,
            Family::Symmetric(p) => analytic_symmetric(p, &self.restriction),
            Family::Tribes { w } => analytic_tribes(*w, &self.restriction),
            Family::Address { k } => analytic_address(*k, 0, &self.restriction),
            Family::HardInstance { k } => analytic_hard(*k, &self.restriction),
        };
        Some(Analysis { influences, expectation, approximate: false })
    }

    /// Exhaustive analysis over the free coordinates, independent of any
    /// analytic provider.
    pub fn analysis_enumerated(&self) -> Result<Analysis> {
        self.analysis_enumerated_with_cap(ENUMERATION_CAP)
    }

    pub fn analysis_enumerated_with_cap(&self, cap: usize) -> Result<Analysis> {
        let free = self.free_mask();
        let m = free.count_ones() as usize;
        if m > cap {
            return Err(Error::EnumerationCap { n: m, cap });
        }
        let positions: Vec<usize> = (0..self.n).filter(|&i| free >> i & 1 == 1).collect();
        let size = 1usize << m;
        let mut values = Vec::with_capacity(size);
        let mut sub = 0u64;
        // Submasks of `free` in increasing order correspond to 0..2^m.
        loop {
            values.push(self.eval_unchecked(sub));
            if sub == free {
                break;
            }
            sub = sub.wrapping_sub(free) & free;
        }
        let ones = values.iter().filter(|&&v| v).count() as u64;
        let mut influences = vec![0.0; self.n];
        for (b, &i) in positions.iter().enumerate() {
            let bit = 1usize << b;
            let mut flips = 0u64;
            for j in 0..size {
                if j & bit == 0 && values[j] != values[j | bit] {
                    flips += 1;
                }
            }
            influences[i] = flips as f64 / (size >> 1) as f64;
        }
        Ok(Analysis { influences, expectation: ones as f64 / size as f64, approximate: false })
    }

    /// Monte Carlo analysis (influences and mean) with a seeded stream.
    pub fn analysis_sampled(&self, sampling: Sampling) -> Analysis {
        let samples = sampling.samples.max(1);
        let mut rng = seed::rng(sampling.seed);
        let mask = self.free_mask();
        let mut ones = 0u64;
        let mut flips = vec![0u64; self.n];
        for _ in 0..samples {
            let x = rng.gen::<u64>() & mask;
            let v = self.eval_unchecked(x);
            ones += v as u64;
            for (i, count) in flips.iter_mut().enumerate() {
                if mask >> i & 1 == 1 && self.eval_unchecked(x ^ (1 << i)) != v {
                    *count += 1;
                }
            }
        }
        Analysis {
            influences: flips.iter().map(|&c| c as f64 / samples as f64).collect(),
            expectation: ones as f64 / samples as f64,
            approximate: true,
        }
    }

    fn check_coordinate(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::CoordinateOutOfRange { index: i, arity: self.n });
        }
        Ok(())
    }

    /// `Pr_x[f(x) != f(x^i)]`, analytic provider first.
    pub fn influence(&self, i: usize) -> Result<f64> {
        self.check_coordinate(i)?;
        Ok(self.analysis()?.influences[i])
    }

    pub fn influence_enumerated(&self, i: usize) -> Result<f64> {
        self.check_coordinate(i)?;
        Ok(self.analysis_enumerated()?.influences[i])
    }

    pub fn influence_profile(&self) -> Result<InfluenceProfile> {
        Ok(InfluenceProfile::new(self.analysis()?.influences))
    }

    pub fn total_influence(&self) -> Result<f64> {
        Ok(self.analysis()?.total_influence())
    }

    /// Unbiased Monte Carlo estimate of `Inf_i[f]`, deterministic given the seed.
    pub fn estimate_influence(&self, i: usize, samples: u64, seed: u64) -> Result<f64> {
        self.check_coordinate(i)?;
        if samples == 0 {
            return Err(Error::InvalidParameter("samples must be >= 1".into()));
        }
        let mut rng = seed::rng(seed);
        let mask = full_mask(self.n);
        let mut flips = 0u64;
        for _ in 0..samples {
            let x = rng.gen::<u64>() & mask;
            if self.eval_unchecked(x) != self.eval_unchecked(x ^ (1 << i)) {
                flips += 1;
            }
        }
        Ok(flips as f64 / samples as f64)
    }

    /// `E_x[f(x)]` under the uniform distribution.
    pub fn expectation(&self) -> Result<f64> {
        Ok(self.analysis()?.expectation)
    }

    /// `min(dist(f, 0), dist(f, 1))`.
    pub fn bias(&self) -> Result<f64> {
        Ok(self.analysis()?.bias())
    }

    pub fn is_constant(&self) -> Result<bool> {
        Ok(self.analysis()?.is_constant())
    }
}

/// `Pr_x[f(x) != g(x)]`. Exact when the coordinates free in either
/// function number at most [`ENUMERATION_CAP`]; otherwise `sampling` is required.
pub fn distance(f: &BooleanFunction, g: &BooleanFunction, sampling: Option<Sampling>) -> Result<f64> {
    if f.arity() != g.arity() {
        return Err(Error::ArityMismatch { expected: f.arity(), found: g.arity() });
    }
    let free = f.free_mask() | g.free_mask();
    let m = free.count_ones() as usize;
    if m <= ENUMERATION_CAP {
        let mut sub = 0u64;
        let mut differ = 0u64;
        loop {
            if f.eval_unchecked(sub) != g.eval_unchecked(sub) {
                differ += 1;
            }
            if sub == free {
                break;
            }
            sub = sub.wrapping_sub(free) & free;
        }
        return Ok(differ as f64 / (1u64 << m) as f64);
    }
    let s = sampling.ok_or(Error::EnumerationCap { n: m, cap: ENUMERATION_CAP })?;
    let mut rng = seed::rng(s.seed);
    let samples = s.samples.max(1);
    let differ = (0..samples)
        .filter(|_| {
            let x = rng.gen::<u64>() & free;
            f.eval_unchecked(x) != g.eval_unchecked(x)
        })
        .count();
    Ok(differ as f64 / samples as f64)
}

/// Slack of the OSSS inequality for `(f, T)`:
/// `Σ_i δ_i(T)·Inf_i[f] − (bias(f) − error_f(T))`. Never negative.
pub fn osss_slack(f: &BooleanFunction, tree: &DecisionTree) -> Result<f64> {
    let n = f.arity();
    let t = BooleanFunction::from_tree(n, tree.clone())?;
    let a = f.analysis_enumerated()?;
    let error = distance(f, &t, None)?;
    let delta = tree.query_probabilities(n);
    let weighted: f64 = delta.iter().zip(&a.influences).map(|(d, inf)| d * inf).sum();
    Ok(weighted - (a.bias() - error))
}

fn eval_tribes(w: usize, y: Point) -> bool {
    let tribe = (1u64 << w) - 1;
    (0..1usize << w).any(|t| (y >> (t * w)) & tribe == tribe)
}

fn eval_address_at(k: usize, off: usize, y: Point) -> bool {
    let side = 1usize << k;
    let row = ((y >> off) & ((1u64 << k) - 1)) as usize;
    let start = off + k + row * side;
    ((y >> start) & ((1u64 << side) - 1)).count_ones() % 2 == 1
}

fn eval_address(k: usize, y: Point) -> bool {
    eval_address_at(k, 0, y)
}

/// Output of rule `j` (0-based) of the alternating decision list.
fn list_label(j: usize) -> bool {
    j.is_multiple_of(2)
}

fn eval_hard(k: usize, y: Point) -> bool {
    for j in 0..k {
        if y >> j & 1 == 1 {
            return list_label(j);
        }
    }
    eval_address_at(k, k, y)
}

fn binomial_row(m: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..m {
        let mut next = vec![1u128; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

fn pow2(m: usize) -> f64 {
    (m as f64).exp2()
}

fn analytic_symmetric(profile: &[bool], pi: &Restriction) -> (Vec<f64>, f64) {
    let n = profile.len() - 1;
    let ones = (pi.values & full_mask(n)).count_ones() as usize;
    let m = n - (pi.mask & full_mask(n)).count_ones() as usize;
    let row = binomial_row(m);
    let hits: u128 = (0..=m).filter(|&k| profile[ones + k]).map(|k| row[k]).sum();
    let expectation = hits as f64 / pow2(m);
    let mut influences = vec![0.0; n];
    if m > 0 {
        let row1 = binomial_row(m - 1);
        let pivotal: u128 =
            (0..m).filter(|&k| profile[ones + k] != profile[ones + k + 1]).map(|k| row1[k]).sum();
        let inf = pivotal as f64 / pow2(m - 1);
        for (i, v) in influences.iter_mut().enumerate() {
            if pi.mask >> i & 1 == 0 {
                *v = inf;
            }
        }
    }
    (influences, expectation)
}

fn analytic_tribes(w: usize, pi: &Restriction) -> (Vec<f64>, f64) {
    let tribes = 1usize << w;
    let n = w * tribes;
    let unit = (1u64 << w) - 1;
    // Probability each tribe is all-ones; `None` marks a tribe already satisfied.
    let mut p = vec![0.0; tribes];
    let mut free = vec![0usize; tribes];
    let mut satisfied = false;
    for t in 0..tribes {
        let mask = (pi.mask >> (t * w)) & unit;
        let vals = (pi.values >> (t * w)) & unit;
        if vals != mask {
            p[t] = 0.0;
            continue;
        }
        free[t] = w - mask.count_ones() as usize;
        if free[t] == 0 {
            satisfied = true;
        }
        p[t] = 1.0 / pow2(free[t]);
    }
    let mut influences = vec![0.0; n];
    if satisfied {
        return (influences, 1.0);
    }
    let zero: f64 = p.iter().map(|q| 1.0 - q).product();
    for t in 0..tribes {
        if p[t] == 0.0 {
            continue;
        }
        let others: f64 = p.iter().enumerate().filter(|&(s, _)| s != t).map(|(_, q)| 1.0 - q).product();
        let inf = others / pow2(free[t] - 1);
        for j in 0..w {
            let i = t * w + j;
            if pi.mask >> i & 1 == 0 {
                influences[i] = inf;
            }
        }
    }
    (influences, 1.0 - zero)
}

/// Address function placed at bit offset `off`; returns influences over
/// `off + k + 4^k` coordinates (leading entries zero) and the mean.
fn analytic_address(k: usize, off: usize, pi: &Restriction) -> (Vec<f64>, f64) {
    let side = 1usize << k;
    let n = off + k + side * side;
    let ctrl_mask = ((1u64 << k) - 1) << off;
    let ctrl_fixed = (pi.mask & ctrl_mask) >> off;
    let ctrl_vals = (pi.values & ctrl_mask) >> off;
    // Per row: Some(parity) when every action bit is fixed, None when random.
    let row_parity: Vec<Option<bool>> = (0..side)
        .map(|r| {
            let start = off + k + r * side;
            let rm = ((1u64 << side) - 1) << start;
            if pi.mask & rm == rm {
                Some((pi.values & rm).count_ones() % 2 == 1)
            } else {
                None
            }
        })
        .collect();
    let consistent: Vec<usize> = (0..side).filter(|&r| (r as u64) & ctrl_fixed == ctrl_vals).collect();
    let s = consistent.len() as f64;
    let p1 = |r: usize| match row_parity[r] {
        Some(b) => b as u8 as f64,
        None => 0.5,
    };
    let expectation = consistent.iter().map(|&r| p1(r)).sum::<f64>() / s;
    let mut influences = vec![0.0; n];
    for b in 0..k {
        if ctrl_fixed >> b & 1 == 1 {
            continue;
        }
        let total: f64 = consistent
            .iter()
            .map(|&r| match (row_parity[r], row_parity[r ^ (1 << b)]) {
                (Some(a), Some(c)) => (a != c) as u8 as f64,
                _ => 0.5,
            })
            .sum();
        influences[off + b] = total / s;
    }
    for &r in &consistent {
        for c in 0..side {
            let i = off + k + r * side + c;
            if pi.mask >> i & 1 == 0 {
                influences[i] = 1.0 / s;
            }
        }
    }
    (influences, expectation)
}

fn analytic_hard(k: usize, pi: &Restriction) -> (Vec<f64>, f64) {
    let (mut influences, e_addr) = analytic_address(k, k, pi);
    // reach[j]: probability the list reaches rule j.
    let mut reach = vec![0.0; k + 1];
    reach[0] = 1.0;
    for j in 0..k {
        reach[j + 1] = reach[j]
            * match pi.get(j) {
                Some(true) => 0.0,
                Some(false) => 1.0,
                None => 0.5,
            };
    }
    // q[j]: probability of output 1 given rule j is reached.
    let mut q = vec![0.0; k + 1];
    q[k] = e_addr;
    for j in (0..k).rev() {
        let label = list_label(j) as u8 as f64;
        q[j] = match pi.get(j) {
            Some(true) => label,
            Some(false) => q[j + 1],
            None => 0.5 * label + 0.5 * q[j + 1],
        };
    }
    for v in influences.iter_mut().skip(k) {
        *v *= reach[k];
    }
    for j in 0..k {
        if pi.get(j).is_none() {
            let differ = if list_label(j) { 1.0 - q[j + 1] } else { q[j + 1] };
            influences[j] = reach[j] * differ;
        }
    }
    (influences, q[0])
}
