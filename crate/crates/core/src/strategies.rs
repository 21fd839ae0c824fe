//! Query strategies for the online priced-query model.
//!
//! The influence-driven strategies share an [`AnalysisCache`] that maps
//! the current restriction to the influences and mean of `f_π`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;

use crate::boolfn::{full_mask, Analysis, BooleanFunction, Restriction, Sampling};
use crate::costsim::{CostVector, NestedSession, QueryEnv, SampleSource, Strategy};
use crate::dtree::{DecisionTree, Node};
use crate::error::{Error, Result};
use crate::oracle::{Policy, PolicyAction};
use crate::seed;

/// Arity up to which the cache is a dense table over (mask, values) pairs.
const DENSE_ARITY: usize = 8;

/// Samples per restriction when neither a closed form nor enumeration applies.
pub const FALLBACK_SAMPLES: u64 = 1 << 14;

/// Thread-safe memo of `f_π ↦ (Inf[f_π], E[f_π])`, cheap to clone.
#[derive(Clone)]
pub struct AnalysisCache {
    inner: Arc<CacheInner>,
}

struct CacheInner {
    f: BooleanFunction,
    seed: u64,
    dense: Vec<OnceLock<Arc<Analysis>>>,
    sparse: RwLock<HashMap<Restriction, Arc<Analysis>>>,
}

impl AnalysisCache {
    pub fn new(f: BooleanFunction) -> Self {
        Self::with_seed(f, 0)
    }

    /// `seed` drives the sampled fallback used beyond the enumeration cap.
    pub fn with_seed(f: BooleanFunction, seed: u64) -> Self {
        let n = f.arity();
        let dense = if n <= DENSE_ARITY { (0..1usize << (2 * n)).map(|_| OnceLock::new()).collect() } else { Vec::new() };
        AnalysisCache { inner: Arc::new(CacheInner { f, seed, dense, sparse: RwLock::new(HashMap::new()) }) }
    }

    pub fn function(&self) -> &BooleanFunction {
        &self.inner.f
    }

    fn compute(&self, pi: &Restriction) -> Result<Analysis> {
        let g = self.inner.f.restrict(pi)?;
        match g.analysis() {
            Err(Error::EnumerationCap { .. }) => {
                let key = seed::derive(pi.mask(), pi.values());
                Ok(g.analysis_sampled(Sampling { samples: FALLBACK_SAMPLES, seed: seed::derive(self.inner.seed, key) }))
            }
            other => other,
        }
    }

    pub fn get(&self, pi: &Restriction) -> Result<Arc<Analysis>> {
        let inner = &self.inner;
        if !inner.dense.is_empty() {
            let n = inner.f.arity();
            let slot = &inner.dense[((pi.mask() as usize) << n) | pi.values() as usize];
            if let Some(a) = slot.get() {
                return Ok(a.clone());
            }
            let a = Arc::new(self.compute(pi)?);
            return Ok(slot.get_or_init(|| a).clone());
        }
        if let Some(a) = inner.sparse.read().expect("cache lock").get(pi) {
            return Ok(a.clone());
        }
        let a = Arc::new(self.compute(pi)?);
        inner.sparse.write().expect("cache lock").entry(*pi).or_insert_with(|| a.clone());
        Ok(a)
    }
}

impl fmt::Debug for AnalysisCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalysisCache").field("arity", &self.inner.f.arity()).finish()
    }
}

/// Rule for equal ratios in the influence-proportional argmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

/// Ordering key for `Inf_i / θ_i`: `+∞` for an uninvested influential
/// coordinate, `−∞` for a zero influence.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Ratio {
    NegInf,
    Finite { inf: f64, steps: u64 },
    PosInf,
}

impl Ratio {
    fn of(inf: f64, steps: u64) -> Self {
        if inf <= 0.0 {
            Ratio::NegInf
        } else if steps == 0 {
            Ratio::PosInf
        } else {
            Ratio::Finite { inf, steps }
        }
    }

    fn gt(self, other: Ratio) -> bool {
        use Ratio::*;
        match (self, other) {
            (Finite { inf: a, steps: s }, Finite { inf: b, steps: t }) => a * t as f64 > b * s as f64,
            (a, b) => a.rank() > b.rank(),
        }
    }

    fn rank(self) -> u8 {
        match self {
            Ratio::NegInf => 0,
            Ratio::Finite { .. } => 1,
            Ratio::PosInf => 2,
        }
    }
}

/// `argmax_i Inf_i[f_π]/θ_i` over unrevealed coordinates.
fn argmax(env: &dyn QueryEnv, a: &Analysis, tie: TieBreak) -> Option<(usize, Ratio)> {
    let mut best: Option<(usize, Ratio)> = None;
    for i in 0..env.arity() {
        if env.revealed(i).is_some() {
            continue;
        }
        let r = Ratio::of(a.influences[i], env.steps(i));
        best = match best {
            None => Some((i, r)),
            Some((j, s)) => {
                let take = match tie {
                    TieBreak::LowestIndex => r.gt(s),
                    TieBreak::HighestIndex => !s.gt(r),
                };
                Some(if take { (i, r) } else { (j, s) })
            }
        };
    }
    best
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 0.5], got {eps}")));
    }
    Ok(())
}

/// Invest in the coordinate maximizing `Inf_i[f_π]/θ_i` while `bias(f_π) > ε`,
/// then output `1{E[f_π] ≥ 1/2}`.
#[derive(Debug)]
pub struct WarmupIprr {
    cache: AnalysisCache,
    eps: f64,
    tie: TieBreak,
    approximate: bool,
}

impl WarmupIprr {
    pub fn new(cache: AnalysisCache, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(WarmupIprr { cache, eps, tie: TieBreak::default(), approximate: false })
    }

    pub fn with_tie_break(mut self, tie: TieBreak) -> Self {
        self.tie = tie;
        self
    }
}

impl Strategy for WarmupIprr {
    fn name(&self) -> String {
        format!("warmup-iprr(eps={})", self.eps)
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        loop {
            let a = self.cache.get(&env.restriction())?;
            self.approximate |= a.approximate;
            if a.bias() <= self.eps {
                return Ok(a.majority());
            }
            match argmax(env, &a, self.tie) {
                Some((i, r)) if r != Ratio::NegInf => {
                    env.note_influence(i, a.influences[i]);
                    env.invest(i)?;
                }
                _ => {
                    return Err(Error::NoInfluencePath(format!(
                        "bias {} > ε but no unrevealed coordinate has positive influence",
                        a.bias()
                    )))
                }
            }
        }
    }

    fn approximate(&self) -> bool {
        self.approximate
    }
}

/// Influence-proportional round robin with budget threshold `B`: halt when
/// the best ratio `Inf_{i*}[f_π]/θ_{i*}` drops below `ε/B`.
#[derive(Debug, Clone)]
pub struct Iprr {
    cache: AnalysisCache,
    eps: f64,
    budget: f64,
    tie: TieBreak,
    approximate: bool,
}

impl Iprr {
    pub fn new(cache: AnalysisCache, eps: f64, budget: f64) -> Result<Self> {
        check_eps(eps)?;
        if !(budget > 0.0) {
            return Err(Error::InvalidParameter(format!("budget B must be positive, got {budget}")));
        }
        Ok(Iprr { cache, eps, budget, tie: TieBreak::default(), approximate: false })
    }

    pub fn with_tie_break(mut self, tie: TieBreak) -> Self {
        self.tie = tie;
        self
    }
}

impl Strategy for Iprr {
    fn name(&self) -> String {
        format!("iprr(eps={},B={})", self.eps, self.budget)
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        let beta = env.beta();
        loop {
            let a = self.cache.get(&env.restriction())?;
            self.approximate |= a.approximate;
            let (i, r) = match argmax(env, &a, self.tie) {
                Some((i, r)) if r != Ratio::NegInf => (i, r),
                _ => return Ok(a.majority()),
            };
            // Inf/θ < ε/B  ⟺  Inf·B < ε·θ
            if let Ratio::Finite { inf, steps } = r {
                if inf * self.budget < self.eps * (steps as f64 * beta) {
                    return Ok(a.majority());
                }
            }
            env.note_influence(i, a.influences[i]);
            env.invest(i)?;
        }
    }

    fn approximate(&self) -> bool {
        self.approximate
    }
}

/// Doubling search over the IPRR budget. Round `i` simulates
/// `IPRR(f, ε, 2^i)` on `m_i` uniform samples inside nested sessions and,
/// if the empirical error is at most `threshold·ε`, runs it on the real input.
#[derive(Debug)]
pub struct OnlineQuery {
    cache: AnalysisCache,
    eps: f64,
    seed: u64,
    /// Constant in `m_i = ceil(C_m/ε · ln((i+1)/ε))`.
    pub sample_constant: f64,
    /// Multiplier of `ε` in the acceptance test of a round.
    pub threshold: f64,
    pub max_rounds: u32,
    pub session_step_limit: u64,
    rounds: u32,
    approximate: bool,
}

impl OnlineQuery {
    pub const DEFAULT_SAMPLE_CONSTANT: f64 = 8.0;
    pub const DEFAULT_THRESHOLD: f64 = 3.0;

    pub fn new(cache: AnalysisCache, eps: f64, seed: u64) -> Result<Self> {
        check_eps(eps)?;
        Ok(OnlineQuery {
            cache,
            eps,
            seed,
            sample_constant: Self::DEFAULT_SAMPLE_CONSTANT,
            threshold: Self::DEFAULT_THRESHOLD,
            max_rounds: 62,
            session_step_limit: 10_000_000,
            rounds: 0,
            approximate: false,
        })
    }

    pub fn samples_in_round(&self, i: u32) -> u64 {
        (self.sample_constant / self.eps * ((i as f64 + 1.0) / self.eps).ln()).ceil() as u64
    }

    /// Index of the round that ran on the real input.
    pub fn rounds(&self) -> u32 {
        self.rounds
    }
}

impl Strategy for OnlineQuery {
    fn name(&self) -> String {
        format!("online-query(eps={})", self.eps)
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        let n = env.arity();
        let f = self.cache.function().clone();
        let mut rng = seed::rng(self.seed);
        for i in 1..=self.max_rounds {
            let budget = (i as f64).exp2();
            let m = self.samples_in_round(i);
            let mut errors = 0u64;
            for _ in 0..m {
                let xs = rng.gen::<u64>() & full_mask(n);
                let mut session = NestedSession::open(env, SampleSource::Known(xs), self.session_step_limit)?;
                let mut sim = Iprr::new(self.cache.clone(), self.eps, budget)?;
                let b = sim.execute(&mut session)?;
                session.close();
                self.approximate |= sim.approximate;
                if b != f.eval_unchecked(xs) {
                    errors += 1;
                }
            }
            if (errors as f64) <= self.threshold * self.eps * m as f64 {
                self.rounds = i;
                let mut session = NestedSession::open(env, SampleSource::Outer, self.session_step_limit)?;
                let mut last = Iprr::new(self.cache.clone(), self.eps, budget)?;
                let out = last.execute(&mut session)?;
                self.approximate |= last.approximate;
                return Ok(out);
            }
        }
        Err(Error::StepLimit(self.max_rounds as u64))
    }

    fn approximate(&self) -> bool {
        self.approximate
    }
}

/// Walks a decision tree, investing in each queried coordinate until it reveals.
#[derive(Debug, Clone)]
pub struct FollowTree {
    tree: DecisionTree,
}

impl FollowTree {
    pub fn new(tree: DecisionTree) -> Self {
        FollowTree { tree }
    }

    /// Follows `tree` pruned at `τ = ε/Δ(T)` against `f`.
    pub fn pruned(tree: &DecisionTree, f: &BooleanFunction, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
        }
        let depth = tree.average_depth();
        if depth == 0.0 {
            return Ok(FollowTree::new(tree.clone()));
        }
        Ok(FollowTree::new(tree.prune(f, eps / depth)?))
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }
}

impl Strategy for FollowTree {
    fn name(&self) -> String {
        "follow-tree".into()
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        let mut id = self.tree.root();
        loop {
            match self.tree.node(id) {
                Node::Leaf(b) => return Ok(b),
                Node::Query { var, lo, hi } => {
                    let bit = loop {
                        if let Some(b) = env.revealed(var) {
                            break b;
                        }
                        env.invest(var)?;
                    };
                    id = if bit { hi } else { lo };
                }
            }
        }
    }
}

/// Offline baseline: query coordinates in ascending cost order (ties by
/// index) until `f_π` is constant.
#[derive(Debug)]
pub struct CheapestFirst {
    cache: AnalysisCache,
    order: Vec<usize>,
}

impl CheapestFirst {
    pub fn new(cache: AnalysisCache, costs: &CostVector) -> Result<Self> {
        let n = cache.function().arity();
        if costs.len() != n {
            return Err(Error::ArityMismatch { expected: n, found: costs.len() });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| costs.get(a).total_cmp(&costs.get(b)).then(a.cmp(&b)));
        Ok(CheapestFirst { cache, order })
    }
}

impl Strategy for CheapestFirst {
    fn name(&self) -> String {
        "cheapest-first".into()
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        for &i in &self.order {
            let a = self.cache.get(&env.restriction())?;
            if a.is_constant() {
                return Ok(a.majority());
            }
            if a.influences[i] == 0.0 && !a.approximate {
                continue;
            }
            while env.revealed(i).is_none() {
                env.invest(i)?;
            }
        }
        Ok(self.cache.get(&env.restriction())?.majority())
    }
}

/// Online baseline: invest `β` cyclically in unrevealed coordinates until
/// `bias(f_π) ≤ ε`.
#[derive(Debug)]
pub struct RoundRobin {
    cache: AnalysisCache,
    eps: f64,
}

impl RoundRobin {
    pub fn new(cache: AnalysisCache, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(RoundRobin { cache, eps })
    }
}

impl Strategy for RoundRobin {
    fn name(&self) -> String {
        format!("round-robin(eps={})", self.eps)
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        let n = env.arity();
        let mut next = 0usize;
        loop {
            let a = self.cache.get(&env.restriction())?;
            if a.bias() <= self.eps {
                return Ok(a.majority());
            }
            let i = (0..n)
                .map(|k| (next + k) % n)
                .find(|&i| env.revealed(i).is_none())
                .ok_or_else(|| Error::NoInfluencePath("all coordinates revealed but bias > ε".into()))?;
            env.invest(i)?;
            next = (i + 1) % n;
        }
    }
}

/// Replays an optimal policy computed by the offline oracle.
#[derive(Debug, Clone)]
pub struct PolicyReplay {
    policy: Arc<Policy>,
}

impl PolicyReplay {
    pub fn new(policy: Arc<Policy>) -> Self {
        PolicyReplay { policy }
    }
}

impl Strategy for PolicyReplay {
    fn name(&self) -> String {
        "policy".into()
    }

    fn execute(&mut self, env: &mut dyn QueryEnv) -> Result<bool> {
        loop {
            match self.policy.action(&env.restriction()) {
                PolicyAction::Stop(b) => return Ok(b),
                PolicyAction::Query(i) => {
                    while env.revealed(i).is_none() {
                        env.invest(i)?;
                    }
                }
            }
        }
    }
}

/// Parsed strategy selection string such as `iprr:eps=0.1,B=8`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub eps: Option<f64>,
    pub budget: Option<f64>,
    pub seed: Option<u64>,
    pub tree: Option<String>,
    pub tie: TieBreak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    WarmupIprr,
    Iprr,
    OnlineQuery,
    FollowTree,
    FollowPrunedTree,
    CheapestFirst,
    RoundRobin,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::WarmupIprr => "warmup-iprr",
            StrategyKind::Iprr => "iprr",
            StrategyKind::OnlineQuery => "online-query",
            StrategyKind::FollowTree => "follow-tree",
            StrategyKind::FollowPrunedTree => "follow-pruned-tree",
            StrategyKind::CheapestFirst => "cheapest-first",
            StrategyKind::RoundRobin => "round-robin",
        }
    }
}

impl StrategySpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let kind = match name.trim() {
            "warmup-iprr" => StrategyKind::WarmupIprr,
            "iprr" => StrategyKind::Iprr,
            "online-query" => StrategyKind::OnlineQuery,
            "follow-tree" => StrategyKind::FollowTree,
            "follow-pruned-tree" => StrategyKind::FollowPrunedTree,
            "cheapest-first" => StrategyKind::CheapestFirst,
            "round-robin" => StrategyKind::RoundRobin,
            other => return Err(Error::Parse(format!("unknown strategy {other:?}"))),
        };
        let mut spec = StrategySpec { kind, eps: None, budget: None, seed: None, tree: None, tie: TieBreak::default() };
        for kv in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got {kv:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {v:?} for {k}")));
            match k {
                "eps" => spec.eps = Some(num(v)?),
                "B" | "budget" => spec.budget = Some(num(v)?),
                "seed" => spec.seed = Some(v.parse().map_err(|_| Error::Parse(format!("bad seed {v:?}")))?),
                "tree" => spec.tree = Some(v.to_string()),
                "tie" => {
                    spec.tie = match v {
                        "lowest" => TieBreak::LowestIndex,
                        "highest" => TieBreak::HighestIndex,
                        _ => return Err(Error::Parse(format!("tie must be lowest or highest, got {v:?}"))),
                    }
                }
                _ => return Err(Error::Parse(format!("unknown strategy parameter {k:?}"))),
            }
        }
        Ok(spec)
    }

    fn eps(&self) -> Result<f64> {
        self.eps.ok_or_else(|| Error::InvalidParameter(format!("{} needs eps", self.kind.name())))
    }

    /// Builds a fresh strategy. `tree` must be supplied for the tree-following
    /// kinds; `seed` is the per-trial seed for randomized strategies.
    pub fn build(
        &self,
        cache: &AnalysisCache,
        costs: &CostVector,
        tree: Option<&DecisionTree>,
        seed: u64,
    ) -> Result<Box<dyn Strategy>> {
        let need_tree = || tree.cloned().ok_or_else(|| Error::InvalidParameter("tree strategy needs a tree".into()));
        Ok(match self.kind {
            StrategyKind::WarmupIprr => Box::new(WarmupIprr::new(cache.clone(), self.eps()?)?.with_tie_break(self.tie)),
            StrategyKind::Iprr => {
                let b = self.budget.ok_or_else(|| Error::InvalidParameter("iprr needs B".into()))?;
                Box::new(Iprr::new(cache.clone(), self.eps()?, b)?.with_tie_break(self.tie))
            }
            StrategyKind::OnlineQuery => Box::new(OnlineQuery::new(cache.clone(), self.eps()?, seed)?),
            StrategyKind::FollowTree => Box::new(FollowTree::new(need_tree()?)),
            StrategyKind::FollowPrunedTree => Box::new(FollowTree::pruned(&need_tree()?, cache.function(), self.eps()?)?),
            StrategyKind::CheapestFirst => Box::new(CheapestFirst::new(cache.clone(), costs)?),
            StrategyKind::RoundRobin => Box::new(RoundRobin::new(cache.clone(), self.eps()?)?),
        })
    }
}
