//! Exact offline benchmarks.
//!
//! The dynamic programs range over all restrictions of `f`, encoded in
//! base 3: digit `i` of a state is 0 or 1 when `x_i` is fixed to that bit
//! and 2 when `x_i` is free. Fixing a free digit always yields a smaller
//! state, so every table is filled in increasing state order.

use serde::Serialize;

use crate::boolfn::{BooleanFunction, Family, Restriction};
use crate::costsim::CostVector;
use crate::error::{Error, Result};

/// Largest arity accepted by the restriction DPs (`3^n` states).
pub const DP_CAP: usize = 12;

/// Largest arity accepted by the budgeted worst-case DP.
pub const BUDGET_DP_CAP: usize = 6;

/// Decision of an offline policy at a restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PolicyAction {
    Stop(bool),
    Query(usize),
}

/// A deterministic offline strategy given as one action per restriction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Policy {
    n: usize,
    actions: Vec<PolicyAction>,
}

impl Policy {
    pub fn action(&self, pi: &Restriction) -> PolicyAction {
        self.actions[state_of(pi, self.n)]
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    /// Compact table: one token per state, `q<i>` or `s<bit>`.
    pub fn table(&self) -> Vec<String> {
        self.actions
            .iter()
            .map(|a| match a {
                PolicyAction::Stop(b) => format!("s{}", *b as u8),
                PolicyAction::Query(i) => format!("q{i}"),
            })
            .collect()
    }
}

/// Base-3 index of a restriction.
pub fn state_of(pi: &Restriction, n: usize) -> usize {
    let mut s = 0usize;
    for i in (0..n).rev() {
        s = s * 3 + pi.get(i).map_or(2, |b| b as usize);
    }
    s
}

/// Subcube statistics for every restriction state.
struct Cube {
    n: usize,
    pow3: Vec<usize>,
    ones: Vec<u32>,
    free: Vec<u8>,
}

impl Cube {
    fn new(f: &BooleanFunction, cap: usize) -> Result<Self> {
        let n = f.arity();
        if n > cap {
            return Err(Error::EnumerationCap { n, cap });
        }
        let pow3: Vec<usize> = (0..=n).map(|i| 3usize.pow(i as u32)).collect();
        let states = pow3[n];
        let mut ones = vec![0u32; states];
        let mut free = vec![0u8; states];
        for s in 0..states {
            match (0..n).find(|&i| s / pow3[i] % 3 == 2) {
                None => {
                    let mut x = 0u64;
                    for i in 0..n {
                        x |= ((s / pow3[i] % 3) as u64) << i;
                    }
                    ones[s] = f.eval_unchecked(x) as u32;
                }
                Some(i) => {
                    ones[s] = ones[s - 2 * pow3[i]] + ones[s - pow3[i]];
                    free[s] = free[s - pow3[i]] + 1;
                }
            }
        }
        Ok(Cube { n, pow3, ones, free })
    }

    fn states(&self) -> usize {
        self.pow3[self.n]
    }

    fn root(&self) -> usize {
        self.states() - 1
    }

    fn size(&self, s: usize) -> u32 {
        1 << self.free[s]
    }

    fn minority(&self, s: usize) -> u32 {
        self.ones[s].min(self.size(s) - self.ones[s])
    }

    fn bias(&self, s: usize) -> f64 {
        self.minority(s) as f64 / self.size(s) as f64
    }

    fn is_constant(&self, s: usize) -> bool {
        self.minority(s) == 0
    }

    fn majority(&self, s: usize) -> bool {
        2 * self.ones[s] >= self.size(s)
    }

    /// Free coordinates of `s` with the two child states.
    fn children(&self, s: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).filter(move |&i| s / self.pow3[i] % 3 == 2).map(move |i| (i, s - 2 * self.pow3[i], s - self.pow3[i]))
    }
}

fn check_costs(f: &BooleanFunction, c: &CostVector) -> Result<()> {
    if c.len() != f.arity() {
        return Err(Error::ArityMismatch { expected: f.arity(), found: c.len() });
    }
    Ok(())
}

/// Zero-error DP; `worst` selects max over the two branches instead of the mean.
fn zero_error_dp(f: &BooleanFunction, c: &CostVector, worst: bool) -> Result<(f64, Policy)> {
    check_costs(f, c)?;
    let cube = Cube::new(f, DP_CAP)?;
    let mut v = vec![0.0f64; cube.states()];
    let mut actions = vec![PolicyAction::Stop(false); cube.states()];
    for s in 0..cube.states() {
        if cube.is_constant(s) {
            actions[s] = PolicyAction::Stop(cube.majority(s));
            continue;
        }
        let mut best = f64::INFINITY;
        for (i, s0, s1) in cube.children(s) {
            let tail = if worst { v[s0].max(v[s1]) } else { 0.5 * (v[s0] + v[s1]) };
            let val = c.get(i) + tail;
            if val < best {
                best = val;
                actions[s] = PolicyAction::Query(i);
            }
        }
        v[s] = best;
    }
    Ok((v[cube.root()], Policy { n: cube.n, actions }))
}

/// `opt^avg_0(f, c)` and an optimal policy.
pub fn opt_avg_0(f: &BooleanFunction, c: &CostVector) -> Result<(f64, Policy)> {
    zero_error_dp(f, c, false)
}

/// `opt^w_0(f, c)` and an optimal policy.
pub fn opt_worst_0(f: &BooleanFunction, c: &CostVector) -> Result<(f64, Policy)> {
    zero_error_dp(f, c, true)
}

/// One Lagrangian frontier point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParetoPoint {
    /// `None` stands for λ = ∞.
    pub lambda: Option<f64>,
    pub error: f64,
    pub avg_cost: f64,
    /// `min_A avg-cost(A) + λ·error(A)`.
    pub value: f64,
}

struct Lagrangian {
    cube: Cube,
    costs: Vec<f64>,
}

impl Lagrangian {
    fn new(f: &BooleanFunction, c: &CostVector) -> Result<Self> {
        check_costs(f, c)?;
        Ok(Lagrangian { cube: Cube::new(f, DP_CAP)?, costs: c.as_slice().to_vec() })
    }

    fn solve(&self, lambda: f64) -> ParetoPoint {
        let cube = &self.cube;
        let states = cube.states();
        let mut val = vec![0.0f64; states];
        let mut err = vec![0.0f64; states];
        let mut cost = vec![0.0f64; states];
        for s in 0..states {
            let bias = cube.bias(s);
            let stop = if bias == 0.0 { 0.0 } else { lambda * bias };
            val[s] = stop;
            err[s] = bias;
            cost[s] = 0.0;
            for (i, s0, s1) in cube.children(s) {
                let v = self.costs[i] + 0.5 * (val[s0] + val[s1]);
                // Stopping wins ties.
                if v < val[s] {
                    val[s] = v;
                    err[s] = 0.5 * (err[s0] + err[s1]);
                    cost[s] = self.costs[i] + 0.5 * (cost[s0] + cost[s1]);
                }
            }
        }
        let r = cube.root();
        ParetoPoint { lambda: lambda.is_finite().then_some(lambda), error: err[r], avg_cost: cost[r], value: val[r] }
    }
}

/// Frontier over the given λ values (use `f64::INFINITY` for the zero-error end).
pub fn pareto_avg(f: &BooleanFunction, c: &CostVector, lambdas: &[f64]) -> Result<Vec<ParetoPoint>> {
    let l = Lagrangian::new(f, c)?;
    Ok(lambdas.iter().map(|&lam| l.solve(lam)).collect())
}

/// Default λ grid: `2^-10 .. 2^20` and ∞.
pub fn default_lambda_grid() -> Vec<f64> {
    (-10..=20).map(|k| (k as f64).exp2()).chain(std::iter::once(f64::INFINITY)).collect()
}

/// Certified bracket for `opt^avg_ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AvgEpsBracket {
    pub eps: f64,
    /// `max_λ (V_λ − λ·ε)`, a valid lower bound.
    pub lower: f64,
    /// Cost of the cheapest frontier strategy with error at most ε.
    pub upper: f64,
}

/// Brackets `opt^avg_ε` from the Lagrangian frontier, refining λ by bisection
/// between the grid points where the frontier error crosses ε.
pub fn opt_avg_eps(f: &BooleanFunction, c: &CostVector, eps: f64) -> Result<(AvgEpsBracket, Vec<ParetoPoint>)> {
    let l = Lagrangian::new(f, c)?;
    let mut points: Vec<ParetoPoint> = default_lambda_grid().into_iter().map(|lam| l.solve(lam)).collect();
    // Bisect in log λ between the last point above ε and the first at or below it.
    let finite: Vec<ParetoPoint> = points.iter().copied().filter(|p| p.lambda.is_some()).collect();
    if let Some(k) = finite.iter().position(|p| p.error <= eps) {
        if k > 0 {
            let (mut lo, mut hi) = (finite[k - 1].lambda.unwrap().ln(), finite[k].lambda.unwrap().ln());
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let p = l.solve(mid.exp());
                points.push(p);
                if p.error <= eps {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }
    points.sort_by(|a, b| {
        a.lambda.unwrap_or(f64::INFINITY).total_cmp(&b.lambda.unwrap_or(f64::INFINITY))
    });
    let lower = points
        .iter()
        .filter_map(|p| p.lambda.map(|lam| p.value - lam * eps))
        .fold(0.0f64, f64::max);
    let upper = points.iter().filter(|p| p.error <= eps).map(|p| p.avg_cost).fold(f64::INFINITY, f64::min);
    Ok((AvgEpsBracket { eps, lower: lower.min(upper), upper }, points))
}

/// `opt^w_ε(f, c)` over deterministic strategies: a budget of
/// `floor(ε·2^n)` erring inputs is split between the branches.
pub fn opt_worst_eps(f: &BooleanFunction, c: &CostVector, eps: f64) -> Result<f64> {
    check_costs(f, c)?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {eps}")));
    }
    let cube = Cube::new(f, BUDGET_DP_CAP)?;
    let n = cube.n;
    let budget = ((eps * (1u64 << n) as f64).floor() as usize).min(1 << n);
    let width = budget + 1;
    let mut v = vec![0.0f64; cube.states() * width];
    for s in 0..cube.states() {
        let minority = cube.minority(s) as usize;
        for k in 0..=budget {
            if minority <= k {
                continue;
            }
            let mut best = f64::INFINITY;
            for (i, s0, s1) in cube.children(s) {
                let mut split = f64::INFINITY;
                for k0 in 0..=k {
                    split = split.min(v[s0 * width + k0].max(v[s1 * width + k - k0]));
                }
                best = best.min(c.get(i) + split);
            }
            v[s * width + k] = best;
        }
    }
    Ok(v[cube.root() * width + budget])
}

/// `Σ_i c_i·Inf_i[f]`, a lower bound on `opt^avg_0`.
pub fn certificate_lower_bound(f: &BooleanFunction, c: &CostVector) -> Result<f64> {
    check_costs(f, c)?;
    let a = f.analysis()?;
    Ok(a.influences.iter().zip(c.as_slice()).map(|(inf, ci)| inf * ci).sum())
}

/// `Σ_i Inf_i·(1 + ln(1/Inf_i))`, with zero influences contributing 0.
pub fn influence_log_sum(influences: &[f64]) -> f64 {
    influences.iter().filter(|&&v| v > 0.0).map(|&v| v * (1.0 + (1.0 / v).ln())).sum()
}

/// `βn + (opt^w_0/ε)·Σ Inf_i(1 + ln(1/Inf_i))`, the Warmup-IPRR cost guarantee.
pub fn warmup_bound(f: &BooleanFunction, opt_worst_0: f64, eps: f64, beta: f64) -> Result<f64> {
    let a = f.analysis()?;
    Ok(beta * f.arity() as f64 + opt_worst_0 / eps * influence_log_sum(&a.influences))
}

/// `βn + opt·ε^-3·log₂(log₂(opt)/ε)·Σ Inf_i(1 + ln(1/Inf_i))` with unit
/// constants; `log₂(opt)` is floored at 1 so the factor stays positive.
pub fn online_query_bound(f: &BooleanFunction, opt_avg_eps: f64, eps: f64, beta: f64) -> Result<f64> {
    let a = f.analysis()?;
    let inner = opt_avg_eps.max(2.0).log2().max(1.0) / eps;
    Ok(beta * f.arity() as f64 + opt_avg_eps / eps.powi(3) * inner.log2() * influence_log_sum(&a.influences))
}

/// Exact laws of the stopping times of a symmetric function revealed one
/// bit at a time: `tau0[t] = Pr[τ^(0) = t]`, `tau_eps[t] = Pr[τ^(ε) = t]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StopTimes {
    pub tau0: Vec<f64>,
    pub tau_eps: Vec<f64>,
}

impl StopTimes {
    pub fn expected_tau0(&self) -> f64 {
        self.tau0.iter().enumerate().map(|(t, p)| t as f64 * p).sum()
    }

    /// `Pr[τ ≥ i]` from a point-mass law.
    pub fn tail(law: &[f64], i: usize) -> f64 {
        law.iter().skip(i).sum()
    }
}

fn symmetric_profile(f: &BooleanFunction) -> Result<&[bool]> {
    match f.family() {
        Family::Symmetric(p) if f.restriction().is_empty() => Ok(p),
        _ => Err(Error::InvalidFunction("expected an unrestricted symmetric function".into())),
    }
}

/// Law of the first time the profile restricted by the revealed prefix
/// has bias at most `eps`.
fn stop_law(profile: &[bool], eps: f64) -> Vec<f64> {
    let n = profile.len() - 1;
    let mut law = vec![0.0; n + 1];
    // alive[a]: probability of having seen `a` ones after t reveals without stopping.
    let mut alive = vec![0.0; n + 1];
    alive[0] = 1.0;
    for t in 0..=n {
        let m = n - t;
        let mut next = vec![0.0; n + 1];
        for a in 0..=t {
            if alive[a] == 0.0 {
                continue;
            }
            let ones: f64 = (0..=m).filter(|&k| profile[a + k]).map(|k| binom(m, k)).sum::<f64>() / (m as f64).exp2();
            if ones.min(1.0 - ones) <= eps {
                law[t] += alive[a];
            } else {
                next[a] += 0.5 * alive[a];
                next[a + 1] += 0.5 * alive[a];
            }
        }
        alive = next;
    }
    law
}

fn binom(m: usize, k: usize) -> f64 {
    let mut r = 1.0f64;
    for j in 0..k {
        r = r * (m - j) as f64 / (j + 1) as f64;
    }
    r.round()
}

pub fn symmetric_stop_times(f: &BooleanFunction, eps: f64) -> Result<StopTimes> {
    let p = symmetric_profile(f)?;
    Ok(StopTimes { tau0: stop_law(p, 0.0), tau_eps: stop_law(p, eps) })
}

/// Closed forms for a symmetric function with costs sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetricBounds {
    /// `Σ c_i·Pr[τ^(0) ≥ i]`.
    pub opt_avg_0: f64,
    /// `βn + Σ c_i·[Pr(τ^(ε) ≥ i) + (n − i)·Pr(τ^(ε) = i)]`.
    pub warmup_upper: f64,
    pub stop_times: StopTimes,
}

pub fn symmetric_opt(f: &BooleanFunction, c: &CostVector, eps: f64, beta: f64) -> Result<SymmetricBounds> {
    check_costs(f, c)?;
    let stop_times = symmetric_stop_times(f, eps)?;
    let n = f.arity();
    let mut sorted = c.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut opt = 0.0;
    let mut upper = beta * n as f64;
    for i in 1..=n {
        let ci = sorted[i - 1];
        opt += ci * StopTimes::tail(&stop_times.tau0, i);
        upper += ci * (StopTimes::tail(&stop_times.tau_eps, i) + (n - i) as f64 * stop_times.tau_eps[i]);
    }
    Ok(SymmetricBounds { opt_avg_0: opt, warmup_upper: upper, stop_times })
}

/// `E[τ^(0)]·log₂(1/ε)/n` for a symmetric `f` with `bias(f) ≥ ε`.
pub fn empirical_stop_time_check(f: &BooleanFunction, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let bias = f.bias()?;
    if bias < eps {
        return Err(Error::InvalidParameter(format!("bias {bias} is below ε = {eps}")));
    }
    let st = symmetric_stop_times(f, eps)?;
    Ok(st.expected_tau0() * (1.0 / eps).log2() / f.arity() as f64)
}

/// Everything the oracle knows about one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub opt_avg_0: f64,
    pub opt_worst_0: f64,
    pub certificate_lower_bound: f64,
    pub pareto: Vec<ParetoPoint>,
    pub opt_avg_eps: Vec<AvgEpsBracket>,
    /// `(ε, opt^w_ε)`; only for arity at most [`BUDGET_DP_CAP`].
    pub opt_worst_eps: Vec<(f64, f64)>,
    /// Strategies enumerated by the DPs.
    pub strategy_class: &'static str,
    pub policy: Vec<String>,
}

pub fn benchmark(f: &BooleanFunction, c: &CostVector, eps_list: &[f64]) -> Result<BenchmarkResult> {
    let (avg0, policy) = opt_avg_0(f, c)?;
    let (w0, _) = opt_worst_0(f, c)?;
    let pareto = pareto_avg(f, c, &default_lambda_grid())?;
    let mut brackets = Vec::new();
    let mut worst = Vec::new();
    for &eps in eps_list {
        brackets.push(opt_avg_eps(f, c, eps)?.0);
        if f.arity() <= BUDGET_DP_CAP {
            worst.push((eps, opt_worst_eps(f, c, eps)?));
        }
    }
    Ok(BenchmarkResult {
        opt_avg_0: avg0,
        opt_worst_0: w0,
        certificate_lower_bound: certificate_lower_bound(f, c)?,
        pareto,
        opt_avg_eps: brackets,
        opt_worst_eps: worst,
        strategy_class: "deterministic offline",
        policy: policy.table(),
    })
}
