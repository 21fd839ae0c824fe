//! Experiment catalog. Each experiment produces a CSV table and a summary
//! document; both depend only on the resolved configuration.
//!
//! | id                  | default trials | default β | default ε |
//! |---------------------|----------------|-----------|-----------|
//! | `exp-and-lb`        | 10000          | 1         | 2^-(n+1)  |
//! | `exp-tribes-lb`     | 1000           | 1         | 0.2       |
//! | `exp-symmetric`     | exact          | 1         | 2^-2..2^-8|
//! | `exp-hard-instance` | 20000 (k = 2)  | 1/64      | 0.1       |
//! | `exp-iprr`          | 10000 per case | 1         | 0.1       |
//! | `exp-pruning`       | exact          | 1         | drawn     |
//!
//! Calibrated acceptance constant for `exp-iprr`: Online-Query error at most 5ε.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boolfn::{distance, full_mask, BooleanFunction, TruthTable};
use crate::costsim::{run, run_trials, summarize, CostVector, EvalMode, RunConfig, Strategy};
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::instances;
use crate::oracle;
use crate::seed;
use crate::strategies::{AnalysisCache, CheapestFirst, FollowTree, Iprr, OnlineQuery, RoundRobin, WarmupIprr};

pub const EXPERIMENT_IDS: [&str; 6] =
    ["exp-and-lb", "exp-tribes-lb", "exp-symmetric", "exp-hard-instance", "exp-iprr", "exp-pruning"];

/// Calibrated multiple of ε allowed for the Online-Query error.
pub const ONLINE_QUERY_ERROR_FACTOR: f64 = 5.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo trials per row.
    #[serde(default)]
    pub trials: Option<u64>,
    /// Number of random cases (`exp-iprr`, `exp-pruning`).
    #[serde(default)]
    pub cases: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        ExperimentConfig { id: id.into(), seed, ..Default::default() }
    }

    /// Fills every unset field with the catalog default.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let (trials, cases, beta, eps) = match self.id.as_str() {
            "exp-and-lb" => (Some(10_000), None, 1.0, None),
            "exp-tribes-lb" => (Some(1_000), None, 1.0, Some(0.2)),
            "exp-symmetric" => (None, None, 1.0, None),
            "exp-hard-instance" => (Some(20_000), None, 1.0 / 64.0, Some(0.1)),
            "exp-iprr" => (Some(10_000), Some(12), 1.0, Some(0.1)),
            "exp-pruning" => (None, Some(200), 1.0, None),
            other => return Err(Error::InvalidParameter(format!("unknown experiment {other:?}"))),
        };
        let r = ExperimentConfig {
            id: self.id.clone(),
            seed: self.seed,
            trials: self.trials.or(trials),
            cases: self.cases.or(cases),
            beta: Some(self.beta.unwrap_or(beta)),
            eps: self.eps.or(eps),
        };
        if r.trials == Some(0) || r.cases == Some(0) {
            return Err(Error::InvalidParameter("trials and cases must be at least 1".into()));
        }
        if !(r.beta.unwrap() > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if let Some(e) = r.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        Ok(r)
    }

    fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub id: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    /// Seed of each CSV row, in row order.
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, f64>,
    /// Contract violations detected while running.
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub csv: String,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = config.resolve()?;
    let mut metrics = BTreeMap::new();
    let mut violations = 0;
    let (csv, seeds) = match cfg.id.as_str() {
        "exp-and-lb" => and_lb(&cfg, &mut metrics)?,
        "exp-tribes-lb" => tribes_lb(&cfg, &mut metrics)?,
        "exp-symmetric" => symmetric(&cfg, &mut metrics)?,
        "exp-hard-instance" => hard_instance(&cfg, &mut metrics)?,
        "exp-iprr" => iprr(&cfg, &mut metrics, &mut violations)?,
        "exp-pruning" => pruning(&cfg, &mut metrics, &mut violations)?,
        _ => unreachable!("resolve rejects unknown ids"),
    };
    let hash = Sha256::digest(serde_json::to_string(&cfg)?.as_bytes());
    Ok(ExperimentOutput {
        csv,
        summary: Summary {
            id: cfg.id.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: hex::encode(hash),
            config: cfg,
            seeds,
            metrics,
            violations,
        },
    })
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// One run of `strategy` on a seeded uniform input.
fn single_run(strategy: &mut dyn Strategy, f: &BooleanFunction, c: &CostVector, beta: f64, s: u64) -> Result<(f64, bool)> {
    let x = seed::rng(s).gen::<u64>() & full_mask(f.arity());
    let r = run(strategy, x, c, beta, &RunConfig::default())?;
    Ok((r.total_cost, r.output == f.eval_unchecked(x)))
}

#[derive(Serialize)]
struct AndRow {
    n: usize,
    seed: u64,
    trials: u64,
    cheapest_first_mean: f64,
    round_robin_eps: f64,
    round_robin_mean: f64,
    ratio: f64,
}

fn and_lb(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>) -> Result<(String, Vec<u64>)> {
    let trials = cfg.trials.unwrap();
    let beta = cfg.beta();
    let mut rows = Vec::new();
    for n in [4usize, 8, 16, 32] {
        let row_seed = seed::derive(cfg.seed, n as u64);
        let eps = cfg.eps.unwrap_or_else(|| (-(n as f64 + 1.0)).exp2());
        let runs: Vec<(f64, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = seed::derive(row_seed, t);
                let inst = instances::and_instance(n, s)?;
                let cache = AnalysisCache::new(inst.function.clone());
                let x_seed = seed::derive(s, 1);
                let mut cf = CheapestFirst::new(cache.clone(), &inst.costs)?;
                let a = single_run(&mut cf, &inst.function, &inst.costs, beta, x_seed)?.0;
                let mut rr = RoundRobin::new(cache, eps)?;
                let b = single_run(&mut rr, &inst.function, &inst.costs, beta, x_seed)?.0;
                Ok((a, b))
            })
            .collect::<Result<_>>()?;
        let cf = mean(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let rr = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        metrics.insert(format!("cheapest_first_mean_n{n}"), cf);
        metrics.insert(format!("round_robin_mean_n{n}"), rr);
        rows.push(AndRow {
            n,
            seed: row_seed,
            trials,
            cheapest_first_mean: cf,
            round_robin_eps: eps,
            round_robin_mean: rr,
            ratio: rr / cf,
        });
    }
    metrics.insert("round_robin_growth_n32_over_n8".into(), rows[3].round_robin_mean / rows[1].round_robin_mean);
    let seeds = rows.iter().map(|r| r.seed).collect();
    Ok((to_csv(&rows)?, seeds))
}

#[derive(Serialize)]
struct TribesRow {
    w: usize,
    n: usize,
    seed: u64,
    trials: u64,
    cheapest_first_mean: f64,
    cheapest_first_per_2w: f64,
    warmup_eps: f64,
    warmup_mean: f64,
    warmup_per_2w: f64,
    warmup_error: f64,
}

fn tribes_lb(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>) -> Result<(String, Vec<u64>)> {
    let trials = cfg.trials.unwrap();
    let beta = cfg.beta();
    let eps = cfg.eps.unwrap();
    let mut rows = Vec::new();
    for w in 1..=3usize {
        let row_seed = seed::derive(cfg.seed, w as u64);
        let runs: Vec<(f64, f64, bool)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = seed::derive(row_seed, t);
                let inst = instances::tribes_instance(w, s)?;
                let cache = AnalysisCache::new(inst.function.clone());
                let x_seed = seed::derive(s, 1);
                let mut cf = CheapestFirst::new(cache.clone(), &inst.costs)?;
                let a = single_run(&mut cf, &inst.function, &inst.costs, beta, x_seed)?.0;
                let mut wi = WarmupIprr::new(cache, eps)?;
                let (b, ok) = single_run(&mut wi, &inst.function, &inst.costs, beta, x_seed)?;
                Ok((a, b, ok))
            })
            .collect::<Result<_>>()?;
        let scale = (1u64 << w) as f64;
        let cf = mean(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let wm = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        let err = runs.iter().filter(|r| !r.2).count() as f64 / trials as f64;
        metrics.insert(format!("warmup_per_2w_w{w}"), wm / scale);
        rows.push(TribesRow {
            w,
            n: w << w,
            seed: row_seed,
            trials,
            cheapest_first_mean: cf,
            cheapest_first_per_2w: cf / scale,
            warmup_eps: eps,
            warmup_mean: wm,
            warmup_per_2w: wm / scale,
            warmup_error: err,
        });
    }
    metrics.insert("warmup_growth_w3_over_w1".into(), rows[2].warmup_per_2w / rows[0].warmup_per_2w);
    let seeds = rows.iter().map(|r| r.seed).collect();
    Ok((to_csv(&rows)?, seeds))
}

#[derive(Serialize)]
struct SymmetricRow {
    n: usize,
    eps: f64,
    log2_inv_eps: f64,
    warmup_cost: f64,
    warmup_error: f64,
    opt_avg_0: f64,
    symmetric_opt_avg_0: f64,
    warmup_upper: f64,
    ratio: f64,
    ratio_over_log: f64,
}

/// `MAJ_9` with costs `1..9`, evaluated exactly over all inputs.
fn symmetric(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>) -> Result<(String, Vec<u64>)> {
    let beta = cfg.beta();
    let n = 9;
    let f = BooleanFunction::majority(n)?;
    let c = CostVector::new((1..=n).map(|i| i as f64).collect())?;
    let opt = oracle::opt_avg_0(&f, &c)?.0;
    let cache = AnalysisCache::new(f.clone());
    let grid: Vec<f64> = match cfg.eps {
        Some(e) => vec![e],
        None => (2..=8).map(|k| (-(k as f64)).exp2()).collect(),
    };
    let mut rows = Vec::new();
    for eps in grid {
        let factory = |_s: u64| -> Result<Box<dyn Strategy>> { Ok(Box::new(WarmupIprr::new(cache.clone(), eps)?)) };
        let ce = summarize(&run_trials(&factory, &f, &c, beta, EvalMode::Exact, &RunConfig::default())?);
        let sb = oracle::symmetric_opt(&f, &c, eps, beta)?;
        let log = (1.0 / eps).log2();
        rows.push(SymmetricRow {
            n,
            eps,
            log2_inv_eps: log,
            warmup_cost: ce.avg_cost,
            warmup_error: ce.error,
            opt_avg_0: opt,
            symmetric_opt_avg_0: sb.opt_avg_0,
            warmup_upper: sb.warmup_upper,
            ratio: ce.avg_cost / opt,
            ratio_over_log: ce.avg_cost / opt / log,
        });
    }
    metrics.insert("fitted_c".into(), rows.iter().map(|r| r.ratio_over_log).fold(0.0, f64::max));
    metrics.insert("opt_avg_0".into(), opt);
    let seeds = vec![cfg.seed; rows.len()];
    Ok((to_csv(&rows)?, seeds))
}

#[derive(Serialize)]
struct HardRow {
    k: usize,
    n: usize,
    eps: f64,
    beta: f64,
    mode: &'static str,
    trials: u64,
    seed: u64,
    avg_cost: f64,
    error: f64,
    opt_avg_0: f64,
    opt_source: &'static str,
    witness_cost: f64,
    total_influence: f64,
    ratio: f64,
}

/// Expected cost of following `tree` with full-price queries.
pub fn tree_cost(tree: &DecisionTree, c: &CostVector) -> f64 {
    tree.query_probabilities(c.len()).iter().zip(c.as_slice()).map(|(d, ci)| d * ci).sum()
}

fn hard_instance(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>) -> Result<(String, Vec<u64>)> {
    let beta = cfg.beta();
    let eps = cfg.eps.unwrap();
    let mut rows = Vec::new();
    for k in 1..=2usize {
        let inst = instances::hard_instance(k, beta)?;
        let (f, c) = (&inst.function, &inst.costs);
        let witness = tree_cost(&instances::hard_instance_witness(k)?, c);
        let cache = AnalysisCache::new(f.clone());
        let factory = |_s: u64| -> Result<Box<dyn Strategy>> { Ok(Box::new(WarmupIprr::new(cache.clone(), eps)?)) };
        let row_seed = seed::derive(cfg.seed, k as u64);
        let (mode, trials_used, opt, source) = if f.arity() <= oracle::DP_CAP {
            ("exact", 1u64 << f.arity(), oracle::opt_avg_0(f, c)?.0, "dp")
        } else {
            ("monte_carlo", cfg.trials.unwrap(), witness, "witness")
        };
        let eval = if mode == "exact" {
            EvalMode::Exact
        } else {
            EvalMode::MonteCarlo { trials: trials_used, seed: row_seed }
        };
        let ce = summarize(&run_trials(&factory, f, c, beta, eval, &RunConfig::default())?);
        let tinf = f.total_influence()?;
        let ratio = ce.avg_cost / (opt * tinf);
        metrics.insert(format!("ratio_k{k}"), ratio);
        rows.push(HardRow {
            k,
            n: f.arity(),
            eps,
            beta,
            mode,
            trials: trials_used,
            seed: row_seed,
            avg_cost: ce.avg_cost,
            error: ce.error,
            opt_avg_0: opt,
            opt_source: source,
            witness_cost: witness,
            total_influence: tinf,
            ratio,
        });
    }
    metrics.insert("ratio_growth_k2_over_k1".into(), rows[1].ratio / rows[0].ratio);
    let seeds = rows.iter().map(|r| r.seed).collect();
    Ok((to_csv(&rows)?, seeds))
}

#[derive(Serialize)]
struct IprrRow {
    case: usize,
    seed: u64,
    n: usize,
    table: String,
    costs: String,
    eps: f64,
    opt_worst_eps: f64,
    iprr_error: f64,
    iprr_ok: bool,
    opt_avg_eps_lower: f64,
    online_trials: u64,
    online_mean_cost: f64,
    online_error: f64,
    bound: f64,
    cost_over_bound: f64,
}

fn join_costs(c: &CostVector) -> String {
    c.as_slice().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Random truth tables on 2..=4 bits with costs in `1..=4`; only instances
/// with `opt^avg_ε ≥ 1` (certified lower end) are kept.
fn iprr(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>, violations: &mut u64) -> Result<(String, Vec<u64>)> {
    let beta = cfg.beta();
    let eps = cfg.eps.unwrap();
    let trials = cfg.trials.unwrap();
    let mut picked = Vec::new();
    let mut draw = 0u64;
    while picked.len() < cfg.cases.unwrap() {
        let s = seed::derive(cfg.seed, draw);
        draw += 1;
        if draw > 1_000_000 {
            return Err(Error::InvalidParameter("no in-scope instances found".into()));
        }
        let n = seed::rng(s).gen_range(2..=4usize);
        let inst = instances::random_table_instance(n, 4, seed::derive(s, 1))?;
        let (bracket, _) = oracle::opt_avg_eps(&inst.function, &inst.costs, eps)?;
        if bracket.lower >= 1.0 {
            picked.push((s, inst, bracket.lower));
        }
    }
    let mut rows = Vec::new();
    for (case, (s, inst, lower)) in picked.into_iter().enumerate() {
        let (f, c) = (&inst.function, &inst.costs);
        let cache = AnalysisCache::new(f.clone());
        let ow = oracle::opt_worst_eps(f, c, eps)?;
        let budget = ow.max(1e-9);
        let factory = |_s: u64| -> Result<Box<dyn Strategy>> { Ok(Box::new(Iprr::new(cache.clone(), eps, budget)?)) };
        let exact = summarize(&run_trials(&factory, f, c, beta, EvalMode::Exact, &RunConfig::default())?);
        let factory = |t: u64| -> Result<Box<dyn Strategy>> { Ok(Box::new(OnlineQuery::new(cache.clone(), eps, t)?)) };
        let mc = summarize(&run_trials(
            &factory,
            f,
            c,
            beta,
            EvalMode::MonteCarlo { trials, seed: seed::derive(s, 2) },
            &RunConfig::default(),
        )?);
        let bound = oracle::online_query_bound(f, lower, eps, beta)?;
        let iprr_ok = exact.error <= 2.0 * eps;
        if !iprr_ok {
            *violations += 1;
        }
        rows.push(IprrRow {
            case,
            seed: s,
            n: f.arity(),
            table: f.to_truth_table()?.to_hex(),
            costs: join_costs(c),
            eps,
            opt_worst_eps: ow,
            iprr_error: exact.error,
            iprr_ok,
            opt_avg_eps_lower: lower,
            online_trials: trials,
            online_mean_cost: mc.avg_cost,
            online_error: mc.error,
            bound,
            cost_over_bound: mc.avg_cost / bound,
        });
    }
    let total: u64 = rows.iter().map(|r| r.online_trials).sum();
    let pooled = rows.iter().map(|r| r.online_error * r.online_trials as f64).sum::<f64>() / total as f64;
    metrics.insert("online_pooled_error".into(), pooled);
    metrics.insert("online_max_error".into(), rows.iter().map(|r| r.online_error).fold(0.0, f64::max));
    metrics.insert("online_max_cost_over_bound".into(), rows.iter().map(|r| r.cost_over_bound).fold(0.0, f64::max));
    metrics.insert("iprr_max_error".into(), rows.iter().map(|r| r.iprr_error).fold(0.0, f64::max));
    let seeds = rows.iter().map(|r| r.seed).collect();
    Ok((to_csv(&rows)?, seeds))
}

#[derive(Serialize)]
struct PruningRow {
    case: usize,
    seed: u64,
    n: usize,
    table: String,
    costs: String,
    tree_size: usize,
    avg_depth: f64,
    eps: f64,
    tau: f64,
    contract_ok: bool,
    pruned_size: usize,
    distance: f64,
    error_ok: bool,
    follow_cost: f64,
    cost_bound: f64,
    cost_ok: bool,
    delta_ok: bool,
    influence_ok: bool,
    violations: u64,
}

/// Outcome of one pruning case.
#[derive(Clone, Debug)]
pub struct PruningCase {
    pub f: BooleanFunction,
    pub tree: DecisionTree,
    pub costs: CostVector,
    pub eps: f64,
}

/// Draws `(f, T, c, ε)` with `n ≤ 4` and `T` computing `f`: half the time a
/// random tree and its own function, otherwise a random table and a random
/// tree for it.
pub fn pruning_case(s: u64) -> Result<PruningCase> {
    let mut rng = seed::rng(s);
    let n = rng.gen_range(1..=4usize);
    let (f, tree) = if rng.gen_bool(0.5) {
        let t = DecisionTree::random(n, n, 0.25, &mut rng);
        (t.to_function(n)?, t)
    } else {
        let f = BooleanFunction::from_table(TruthTable::from_fn(n, |_| rng.gen())?);
        let t = DecisionTree::random_for_function(&f, &mut rng)?;
        (f, t)
    };
    let costs = CostVector::new((0..n).map(|_| rng.gen_range(1..=4u32) as f64).collect())?;
    let eps = [0.05, 0.1, 0.2, 0.3, 0.5][rng.gen_range(0..5)];
    Ok(PruningCase { f, tree, costs, eps })
}

/// Reveal frequency of each coordinate when following `tree` on every input.
pub fn follow_reveal_frequencies(tree: &DecisionTree, f: &BooleanFunction, c: &CostVector, beta: f64) -> Result<(Vec<f64>, f64, f64)> {
    let n = f.arity();
    let t = tree.clone();
    let factory = move |_s: u64| -> Result<Box<dyn Strategy>> { Ok(Box::new(FollowTree::new(t.clone()))) };
    let trials = run_trials(&factory, f, c, beta, EvalMode::Exact, &RunConfig::default())?;
    let mut freq = vec![0.0; n];
    for tr in &trials {
        for &(i, _) in &tr.record.reveal_order {
            freq[i] += 1.0;
        }
    }
    let m = trials.len() as f64;
    freq.iter_mut().for_each(|v| *v /= m);
    let s = summarize(&trials);
    Ok((freq, s.avg_cost, s.error))
}

fn pruning(cfg: &ExperimentConfig, metrics: &mut BTreeMap<String, f64>, violations: &mut u64) -> Result<(String, Vec<u64>)> {
    let beta = cfg.beta();
    let cases = cfg.cases.unwrap();
    let rows: Vec<PruningRow> = (0..cases)
        .into_par_iter()
        .map(|case| -> Result<PruningRow> {
            let s = seed::derive(cfg.seed, case as u64);
            let PruningCase { f, tree, costs, eps } = pruning_case(s)?;
            let n = f.arity();
            let depth = tree.average_depth();
            let tau = if depth > 0.0 { eps / depth } else { 0.0 };
            let pruned = if depth > 0.0 { tree.prune(&f, tau) } else { Ok(tree.clone()) };
            let contract_ok = pruned.is_ok();
            let pruned = pruned.unwrap_or_else(|_| tree.clone());
            let dist = distance(&pruned.to_function(n)?, &f, None)?;
            let opt = oracle::opt_avg_0(&f, &costs)?.0;
            let (freq, cost, err) = follow_reveal_frequencies(&pruned, &f, &costs, beta)?;
            let (freq_t, _, _) = follow_reveal_frequencies(&tree, &f, &costs, beta)?;
            let error_ok = err <= eps && dist == err;
            let cost_bound = if depth > 0.0 { beta * n as f64 + opt * depth / eps } else { beta * n as f64 };
            let cost_ok = cost <= cost_bound;
            let delta_ok = freq == pruned.query_probabilities(n) && freq_t == tree.query_probabilities(n);
            let inf = f.analysis()?.influences;
            let influence_ok = pruned.query_probabilities(n).iter().zip(&inf).all(|(d, i)| *i >= tau * d - 1e-12);
            let v = [contract_ok, error_ok, cost_ok, delta_ok, influence_ok].iter().filter(|ok| !**ok).count() as u64;
            Ok(PruningRow {
                case,
                seed: s,
                n,
                table: f.to_truth_table()?.to_hex(),
                costs: join_costs(&costs),
                tree_size: tree.size(),
                avg_depth: depth,
                eps,
                tau,
                contract_ok,
                pruned_size: pruned.size(),
                distance: dist,
                error_ok,
                follow_cost: cost,
                cost_bound,
                cost_ok,
                delta_ok,
                influence_ok,
                violations: v,
            })
        })
        .collect::<Result<_>>()?;
    *violations += rows.iter().map(|r| r.violations).sum::<u64>();
    metrics.insert("cases".into(), rows.len() as f64);
    metrics.insert("violations".into(), *violations as f64);
    let seeds = rows.iter().map(|r| r.seed).collect();
    Ok((to_csv(&rows)?, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id_is_rejected() {
        assert!(run_experiment(&ExperimentConfig::new("exp-nope", 0)).is_err());
        let mut c = ExperimentConfig::new("exp-and-lb", 0);
        c.trials = Some(0);
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn pruning_small_run_is_clean() {
        let mut c = ExperimentConfig::new("exp-pruning", 3);
        c.cases = Some(20);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.summary.violations, 0, "{}", out.csv);
        assert_eq!(out.csv.lines().count(), 21);
        assert!(out.csv.starts_with("case,seed,n,"));
        assert_eq!(out.summary.config_sha256.len(), 64);
    }

    #[test]
    fn and_small_run_is_reproducible() {
        let mut c = ExperimentConfig::new("exp-and-lb", 5);
        c.trials = Some(50);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.seeds.len(), 4);
        assert!(!a.csv.contains('\r'));
    }
}
