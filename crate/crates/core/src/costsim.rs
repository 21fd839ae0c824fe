//! The online priced-query environment.
//!
//! Every coordinate `i` has a hidden cost `c_i` and a hidden bit `x_i`.
//! A strategy repeatedly invests `β` in a coordinate; once the cumulative
//! investment `θ_i` reaches `c_i` the bit is revealed. The cost of a run is
//! `‖θ‖₁` when the strategy halts.
//!
//! Investments are tracked as integer step counts so `θ_i = steps_i·β` is
//! always an exact multiple of `β`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boolfn::{full_mask, BooleanFunction, Point, Restriction, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::seed;

/// Nonnegative per-coordinate costs. `f64::INFINITY` marks a coordinate
/// that can never be revealed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if let Some((i, c)) = costs.iter().enumerate().find(|(_, c)| c.is_nan() || **c < 0.0) {
            return Err(Error::InvalidCosts(format!("c_{i} = {c} is not a nonnegative number")));
        }
        Ok(CostVector(costs))
    }

    pub fn uniform(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Number of `β` steps needed to reveal coordinate `i`; at least one.
    pub fn steps_to_reveal(&self, i: usize, beta: f64) -> Option<u64> {
        let c = self.0[i];
        if !c.is_finite() {
            return None;
        }
        let mut k = (c / beta).ceil().max(1.0) as u64;
        // Correct for rounding in the division.
        while (k as f64) * beta < c {
            k += 1;
        }
        while k > 1 && ((k - 1) as f64) * beta >= c {
            k -= 1;
        }
        Some(k)
    }
}

/// What a strategy sees: revealed bits, its own investments and `β`.
///
/// Neither the hidden input nor the cost vector is reachable through this
/// trait; the only channel is the return value of [`QueryEnv::invest`].
pub trait QueryEnv {
    fn arity(&self) -> usize;
    fn beta(&self) -> f64;
    /// Adds `β` to `θ_i`. Returns the bit when this step reveals `x_i`.
    fn invest(&mut self, i: usize) -> Result<Option<bool>>;
    fn revealed(&self, i: usize) -> Option<bool>;
    /// Number of `β` steps invested in `i` so far.
    fn steps(&self, i: usize) -> u64;
    /// Step count at which `i` was revealed.
    fn reveal_steps(&self, i: usize) -> Option<u64>;

    fn theta(&self, i: usize) -> f64 {
        self.steps(i) as f64 * self.beta()
    }

    fn restriction(&self) -> Restriction {
        let mut mask = 0u64;
        let mut values = 0u64;
        for i in 0..self.arity() {
            if let Some(b) = self.revealed(i) {
                mask |= 1 << i;
                values |= (b as u64) << i;
            }
        }
        Restriction::from_masks(mask, values)
    }

    /// Records the restricted influence used for the next investment.
    fn note_influence(&mut self, _i: usize, _influence: f64) {}
}

/// Per-coordinate investment bookkeeping shared by the harness and nested sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct InvestmentState {
    steps: Vec<u64>,
    beta: f64,
    revealed: Vec<Option<bool>>,
    reveal_steps: Vec<Option<u64>>,
    reveal_order: Vec<(usize, bool)>,
    total_steps: u64,
    wasted: u64,
}

impl InvestmentState {
    pub fn new(n: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(InvestmentState {
            steps: vec![0; n],
            beta,
            revealed: vec![None; n],
            reveal_steps: vec![None; n],
            reveal_order: Vec::new(),
            total_steps: 0,
            wasted: 0,
        })
    }

    pub fn arity(&self) -> usize {
        self.steps.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One `β` step on `i`; `reveal_at` is the step count at which `i` reveals
    /// and `bit` its value.
    fn step(&mut self, i: usize, reveal_at: Option<u64>, bit: bool) -> Result<Option<bool>> {
        if i >= self.steps.len() {
            return Err(Error::CoordinateOutOfRange { index: i, arity: self.steps.len() });
        }
        self.steps[i] += 1;
        self.total_steps += 1;
        if self.revealed[i].is_some() {
            self.wasted += 1;
            return Ok(None);
        }
        match reveal_at {
            Some(k) if self.steps[i] >= k => {
                self.revealed[i] = Some(bit);
                self.reveal_steps[i] = Some(self.steps[i]);
                self.reveal_order.push((i, bit));
                Ok(Some(bit))
            }
            _ => Ok(None),
        }
    }

    pub fn steps(&self, i: usize) -> u64 {
        self.steps[i]
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.steps[i] as f64 * self.beta
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.arity()).map(|i| self.theta(i)).collect()
    }

    pub fn revealed(&self, i: usize) -> Option<bool> {
        self.revealed[i]
    }

    pub fn reveal_steps(&self, i: usize) -> Option<u64> {
        self.reveal_steps[i]
    }

    /// `θ_i` at the moment of reveal.
    pub fn reveal_cost(&self, i: usize) -> Option<f64> {
        self.reveal_steps[i].map(|k| k as f64 * self.beta)
    }

    pub fn reveal_order(&self) -> &[(usize, bool)] {
        &self.reveal_order
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn total_cost(&self) -> f64 {
        self.total_steps as f64 * self.beta
    }

    /// Steps spent on coordinates that were already revealed.
    pub fn wasted(&self) -> u64 {
        self.wasted
    }
}

/// A query strategy. Instances are single-use; build a fresh one per run.
pub trait Strategy {
    fn name(&self) -> String;

    /// Deterministic strategies can be evaluated exactly by enumeration.
    fn is_deterministic(&self) -> bool {
        true
    }

    /// Drives `env` until halting and returns the output bit.
    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool>;

    /// True if any influence used during the run was a sampled estimate.
    fn approximate(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub step_limit: u64,
    pub record_trajectory: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { step_limit: 10_000_000, record_trajectory: false }
    }
}

/// Transcript of a single run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub output: bool,
    pub total_cost: f64,
    pub per_variable_theta: Vec<f64>,
    pub reveal_order: Vec<(usize, bool)>,
    pub reveal_cost: Vec<Option<f64>>,
    /// `(coordinate invested, restricted influence used)` per step, when recorded.
    pub influence_trajectory: Option<Vec<(usize, f64)>>,
    pub steps: u64,
    pub wasted: u64,
    pub approximate: bool,
}

/// The harness-side environment holding the hidden input and costs.
struct Harness<'a> {
    x: Point,
    costs: &'a CostVector,
    state: InvestmentState,
    config: RunConfig,
    trajectory: Vec<(usize, f64)>,
}

impl QueryEnv for Harness<'_> {
    fn arity(&self) -> usize {
        self.state.arity()
    }

    fn beta(&self) -> f64 {
        self.state.beta
    }

    fn invest(&mut self, i: usize) -> Result<Option<bool>> {
        if self.state.total_steps >= self.config.step_limit {
            return Err(Error::StepLimit(self.config.step_limit));
        }
        if i >= self.arity() {
            return Err(Error::CoordinateOutOfRange { index: i, arity: self.arity() });
        }
        let at = self.costs.steps_to_reveal(i, self.state.beta);
        self.state.step(i, at, self.x >> i & 1 == 1)
    }

    fn revealed(&self, i: usize) -> Option<bool> {
        self.state.revealed(i)
    }

    fn steps(&self, i: usize) -> u64 {
        self.state.steps(i)
    }

    fn reveal_steps(&self, i: usize) -> Option<u64> {
        self.state.reveal_steps(i)
    }

    fn note_influence(&mut self, i: usize, influence: f64) {
        if self.config.record_trajectory {
            self.trajectory.push((i, influence));
        }
    }
}

/// Runs `strategy` on hidden input `x` with hidden costs `c`.
pub fn run(strategy: &mut dyn Strategy, x: Point, c: &CostVector, beta: f64, config: &RunConfig) -> Result<RunRecord> {
    let n = c.len();
    if x & !full_mask(n) != 0 {
        return Err(Error::ArityMismatch { expected: n, found: 64 - x.leading_zeros() as usize });
    }
    let mut env =
        Harness { x, costs: c, state: InvestmentState::new(n, beta)?, config: *config, trajectory: Vec::new() };
    let output = strategy.execute(&mut env)?;
    let s = env.state;
    Ok(RunRecord {
        output,
        total_cost: s.total_cost(),
        per_variable_theta: s.thetas(),
        reveal_order: s.reveal_order.clone(),
        reveal_cost: (0..n).map(|i| s.reveal_cost(i)).collect(),
        influence_trajectory: config.record_trajectory.then_some(env.trajectory),
        steps: s.total_steps,
        wasted: s.wasted,
        approximate: strategy.approximate(),
    })
}

/// Where a nested session takes the bits it reveals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSource {
    /// A sample input known to the outer algorithm.
    Known(Point),
    /// The outer session's own revealed bits.
    Outer,
}

/// A simulated run inside an outer session.
///
/// Investments are charged to the outer session only when the inner level
/// exceeds it, so after any sequence of sessions the outer `θ_i` is the
/// maximum of the inner levels (joined with direct outer investments).
pub struct NestedSession<'a> {
    outer: &'a mut dyn QueryEnv,
    source: SampleSource,
    state: InvestmentState,
    step_limit: u64,
    closed: bool,
}

impl<'a> NestedSession<'a> {
    pub fn open(outer: &'a mut dyn QueryEnv, source: SampleSource, step_limit: u64) -> Result<Self> {
        let state = InvestmentState::new(outer.arity(), outer.beta())?;
        Ok(NestedSession { outer, source, state, step_limit, closed: false })
    }

    pub fn state(&self) -> &InvestmentState {
        &self.state
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    fn bit(&self, i: usize) -> bool {
        match self.source {
            SampleSource::Known(x) => x >> i & 1 == 1,
            SampleSource::Outer => self.outer.revealed(i).expect("bit is revealed before it is read"),
        }
    }
}

impl QueryEnv for NestedSession<'_> {
    fn arity(&self) -> usize {
        self.state.arity()
    }

    fn beta(&self) -> f64 {
        self.state.beta
    }

    fn invest(&mut self, i: usize) -> Result<Option<bool>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        if self.state.total_steps >= self.step_limit {
            return Err(Error::StepLimit(self.step_limit));
        }
        if i >= self.arity() {
            return Err(Error::CoordinateOutOfRange { index: i, arity: self.arity() });
        }
        let inner = self.state.steps(i) + 1;
        if self.outer.revealed(i).is_none() && inner > self.outer.steps(i) {
            // Raise the outer investment to the inner level; a reveal there
            // means c_i ≤ θ_inner as well.
            while self.outer.steps(i) < inner {
                if self.outer.invest(i)?.is_some() {
                    break;
                }
            }
        }
        // After the catch-up above, the outer reveal step (if any) is the
        // effective cost known to the simulation.
        let at = self.outer.reveal_steps(i);
        let bit = if at.is_some_and(|k| inner >= k) { self.bit(i) } else { false };
        self.state.step(i, at, bit)
    }

    fn revealed(&self, i: usize) -> Option<bool> {
        self.state.revealed(i)
    }

    fn steps(&self, i: usize) -> u64 {
        self.state.steps(i)
    }

    fn reveal_steps(&self, i: usize) -> Option<u64> {
        self.state.reveal_steps(i)
    }
}

/// Evaluation mode for [`avg_cost_and_error`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Every input of `{0,1}^n`; deterministic strategies only.
    Exact,
    /// Uniform random inputs, seeded.
    MonteCarlo { trials: u64, seed: u64 },
}

/// One evaluated input.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub index: u64,
    pub input: Point,
    pub record: RunRecord,
    pub correct: bool,
}

/// Builds a fresh strategy for trial seed `s`.
pub type Factory<'a> = dyn Fn(u64) -> Result<Box<dyn Strategy>> + Sync + 'a;

/// Input and strategy seed of Monte Carlo trial `t` under base seed `base`.
pub fn monte_carlo_trial(base: u64, t: u64, n: usize) -> (Point, u64) {
    let s = seed::derive(base, t);
    (seed::rng(s).gen::<u64>() & full_mask(n), seed::derive(s, 1))
}

/// Runs a strategy over the inputs selected by `mode`. Trials run in
/// parallel and are returned in index order.
pub fn run_trials(
    factory: &Factory<'_>,
    f: &BooleanFunction,
    c: &CostVector,
    beta: f64,
    mode: EvalMode,
    config: &RunConfig,
) -> Result<Vec<Trial>> {
    let n = f.arity();
    if c.len() != n {
        return Err(Error::ArityMismatch { expected: n, found: c.len() });
    }
    let (count, base) = match mode {
        EvalMode::Exact => {
            if n > ENUMERATION_CAP {
                return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
            }
            if !factory(0)?.is_deterministic() {
                return Err(Error::Randomized("exact evaluation needs a deterministic strategy".into()));
            }
            (1u64 << n, None)
        }
        EvalMode::MonteCarlo { trials, seed } => (trials, Some(seed)),
    };
    (0..count)
        .into_par_iter()
        .map(|t| {
            let (x, s) = match base {
                None => (t, 0),
                Some(b) => monte_carlo_trial(b, t, n),
            };
            let mut strategy = factory(s)?;
            let record = run(strategy.as_mut(), x, c, beta, config)?;
            let correct = record.output == f.eval_unchecked(x);
            Ok(Trial { index: t, input: x, record, correct })
        })
        .collect()
}

/// Mean cost and error probability of a strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostError {
    pub avg_cost: f64,
    pub error: f64,
    pub trials: u64,
}

pub fn summarize(trials: &[Trial]) -> CostError {
    let m = trials.len().max(1) as f64;
    CostError {
        avg_cost: trials.iter().map(|t| t.record.total_cost).sum::<f64>() / m,
        error: trials.iter().filter(|t| !t.correct).count() as f64 / m,
        trials: trials.len() as u64,
    }
}

pub fn avg_cost_and_error(
    factory: &Factory<'_>,
    f: &BooleanFunction,
    c: &CostVector,
    beta: f64,
    mode: EvalMode,
) -> Result<CostError> {
    Ok(summarize(&run_trials(factory, f, c, beta, mode, &RunConfig::default())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Invests in a fixed sequence, then outputs a constant.
    struct Script(Vec<usize>);

    impl Strategy for Script {
        fn name(&self) -> String {
            "script".into()
        }
        fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
            for &i in &self.0 {
                env.invest(i)?;
            }
            Ok(false)
        }
    }

    fn record(seq: Vec<usize>, x: Point, c: Vec<f64>, beta: f64) -> RunRecord {
        run(&mut Script(seq), x, &CostVector::new(c).unwrap(), beta, &RunConfig::default()).unwrap()
    }

    #[test]
    fn reveal_rule_examples() {
        let r = record(vec![0, 0, 0], 1, vec![1.2], 0.5);
        assert_eq!(r.reveal_order, vec![(0, true)]);
        assert_eq!(r.reveal_cost[0], Some(1.5));
        let r = record(vec![0], 0, vec![0.0], 0.25);
        assert_eq!(r.reveal_cost[0], Some(0.25));
        let r = record(vec![0; 100], 1, vec![f64::INFINITY], 1.0);
        assert!(r.reveal_order.is_empty());
        assert_eq!(r.total_cost, 100.0);
    }

    #[test]
    fn steps_to_reveal_is_exact_on_grid() {
        let c = CostVector::new(vec![1.0, 1.0000001, 0.0, 3.0]).unwrap();
        assert_eq!(c.steps_to_reveal(0, 0.5), Some(2));
        assert_eq!(c.steps_to_reveal(1, 0.5), Some(3));
        assert_eq!(c.steps_to_reveal(2, 0.5), Some(1));
        assert_eq!(c.steps_to_reveal(3, 0.1), Some(30));
    }

    #[test]
    fn waste_is_counted() {
        let r = record(vec![0, 0, 0], 0, vec![1.0], 1.0);
        assert_eq!(r.wasted, 2);
        assert_eq!(r.total_cost, 3.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CostVector::new(vec![-1.0]).is_err());
        assert!(CostVector::new(vec![f64::NAN]).is_err());
        let c = CostVector::new(vec![1.0]).unwrap();
        assert!(run(&mut Script(vec![3]), 0, &c, 1.0, &RunConfig::default()).is_err());
        assert!(run(&mut Script(vec![]), 0b10, &c, 1.0, &RunConfig::default()).is_err());
        assert!(run(&mut Script(vec![]), 0, &c, 0.0, &RunConfig::default()).is_err());
        let cfg = RunConfig { step_limit: 5, record_trajectory: false };
        assert!(matches!(run(&mut Script(vec![0; 6]), 0, &c, 0.01, &cfg), Err(Error::StepLimit(5))));
    }

    /// Outer strategy opening a nested session per script, then investing directly.
    struct Nested {
        sessions: Vec<(Point, Vec<usize>)>,
        seen: Vec<Vec<(usize, bool)>>,
    }

    impl Strategy for Nested {
        fn name(&self) -> String {
            "nested".into()
        }
        fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
            for (xs, seq) in &self.sessions {
                let mut s = NestedSession::open(env, SampleSource::Known(*xs), 1000)?;
                for &i in seq {
                    s.invest(i)?;
                }
                self.seen.push(s.state().reveal_order().to_vec());
            }
            Ok(true)
        }
    }

    fn nested(sessions: Vec<(Point, Vec<usize>)>, x: Point, c: Vec<f64>) -> (RunRecord, Vec<Vec<(usize, bool)>>) {
        let mut s = Nested { sessions, seen: vec![] };
        let r = run(&mut s, x, &CostVector::new(c).unwrap(), 1.0, &RunConfig::default()).unwrap();
        (r, s.seen)
    }

    #[test]
    fn nested_sessions_join_by_maximum() {
        let (r, _) = nested(vec![(0, vec![0; 3]), (0, vec![0; 5])], 0, vec![10.0]);
        assert_eq!(r.per_variable_theta, vec![5.0]);
    }

    #[test]
    fn nested_below_outer_costs_nothing() {
        let (r, _) = nested(vec![(0, vec![0; 4]), (0, vec![0; 2])], 0, vec![10.0]);
        assert_eq!(r.total_cost, 4.0);
    }

    #[test]
    fn nested_reveal_fires_for_both() {
        // inner sample has x'_0 = 1, real input x_0 = 0
        let (r, seen) = nested(vec![(1, vec![0; 3])], 0, vec![3.0]);
        assert_eq!(r.reveal_order, vec![(0, false)]);
        assert_eq!(seen[0], vec![(0, true)]);
        // a later session learns the bit at the recorded reveal level only
        let (r, seen) = nested(vec![(1, vec![0; 3]), (0, vec![0; 2]), (0, vec![0; 3])], 0, vec![3.0]);
        assert_eq!(r.total_cost, 3.0);
        assert!(seen[1].is_empty());
        assert_eq!(seen[2], vec![(0, false)]);
    }

    #[test]
    fn passthrough_session_matches_direct_run() {
        struct Through(Vec<usize>);
        impl Strategy for Through {
            fn name(&self) -> String {
                "through".into()
            }
            fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
                let mut pre = NestedSession::open(env, SampleSource::Known(0b11), 100)?;
                pre.invest(1)?;
                pre.invest(1)?;
                let mut s = NestedSession::open(env, SampleSource::Outer, 100)?;
                let mut order = vec![];
                for &i in &self.0 {
                    if let Some(b) = s.invest(i)? {
                        order.push((i, b));
                    }
                }
                Ok(order == vec![(0, true), (1, false)])
            }
        }
        let c = CostVector::new(vec![1.0, 2.0]).unwrap();
        let r = run(&mut Through(vec![0, 1, 1]), 0b01, &c, 1.0, &RunConfig::default()).unwrap();
        assert!(r.output);
        assert_eq!(r.total_cost, 3.0);
    }
}
