//! Property tests over small random functions, trees and cost vectors.

use std::sync::Arc;

use proptest::prelude::*;

use uql_core::boolfn::{distance, osss_slack};
use uql_core::costsim::{run, run_trials, summarize, EvalMode, NestedSession, QueryEnv, RunConfig, SampleSource};
use uql_core::experiments::follow_reveal_frequencies;
use uql_core::instances;
use uql_core::oracle;
use uql_core::seed;
use uql_core::strategies::{AnalysisCache, FollowTree, OnlineQuery, PolicyReplay, TieBreak, WarmupIprr};
use uql_core::{BooleanFunction, CostVector, DecisionTree, Restriction, Strategy, TruthTable};

fn table(n: usize, bits: u64) -> BooleanFunction {
    BooleanFunction::from_table(TruthTable::from_fn(n, |x| bits >> x & 1 == 1).unwrap())
}

prop_compose! {
    fn small_fn()(n in 1usize..=4)(n in Just(n), bits in any::<u64>()) -> BooleanFunction {
        table(n, bits)
    }
}

prop_compose! {
    fn fn_and_costs()(f in small_fn())(c in prop::collection::vec(1u32..=4, f.arity()), f in Just(f)) -> (BooleanFunction, CostVector) {
        let c = CostVector::new(c.into_iter().map(f64::from).collect()).unwrap();
        (f, c)
    }
}

prop_compose! {
    fn symmetric_fn()(n in 1usize..=4)(profile in prop::collection::vec(any::<bool>(), n + 1)) -> BooleanFunction {
        BooleanFunction::symmetric(profile).unwrap()
    }
}

fn restriction_from(n: usize, mask: u64, values: u64) -> Restriction {
    Restriction::from_pairs((0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i, values >> i & 1 == 1))).unwrap()
}

fn warmup(f: &BooleanFunction, eps: f64, tie: TieBreak) -> WarmupIprr {
    WarmupIprr::new(AnalysisCache::new(f.clone()), eps).unwrap().with_tie_break(tie)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn restriction_overrides_input(f in small_fn(), mask in any::<u64>(), values in any::<u64>()) {
        let n = f.arity();
        let pi = restriction_from(n, mask, values);
        let g = f.restrict(&pi).unwrap();
        for x in 0..1u64 << n {
            prop_assert_eq!(g.evaluate(x).unwrap(), f.evaluate(pi.apply(x)).unwrap());
        }
    }

    #[test]
    fn symmetric_influences_are_equal(f in symmetric_fn()) {
        let a = f.analysis_enumerated().unwrap();
        for v in &a.influences {
            prop_assert!((v - a.influences[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn providers_match_enumeration(which in 0usize..4, mask in any::<u64>(), values in any::<u64>()) {
        let f = [
            BooleanFunction::tribes(2).unwrap(),
            BooleanFunction::address(1).unwrap(),
            BooleanFunction::hard_instance(1).unwrap(),
            BooleanFunction::majority(7).unwrap(),
        ][which].clone();
        let g = f.restrict(&restriction_from(f.arity(), mask & values.rotate_left(7), values)).unwrap();
        let a = g.analytic().unwrap();
        let b = g.analysis_enumerated().unwrap();
        prop_assert!((a.expectation - b.expectation).abs() <= 1e-12);
        for (x, y) in a.influences.iter().zip(&b.influences) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn osss_slack_is_nonnegative(f in small_fn(), s in any::<u64>()) {
        let mut rng = seed::rng(s);
        let t = DecisionTree::random(f.arity(), f.arity(), 0.3, &mut rng);
        prop_assert!(osss_slack(&f, &t).unwrap() >= -1e-12);
        let t = DecisionTree::random_for_function(&f, &mut rng).unwrap();
        prop_assert!(osss_slack(&f, &t).unwrap() >= -1e-12);
    }

    #[test]
    fn cost_accounting_and_overshoot((f, c) in fn_and_costs(), x in any::<u64>(), beta_k in 0usize..3, eps in 0.01f64..=0.5) {
        let beta = [1.0, 0.5, 0.3][beta_k];
        let x = x & ((1 << f.arity()) - 1);
        let r = run(&mut warmup(&f, eps, TieBreak::LowestIndex), x, &c, beta, &RunConfig::default()).unwrap();
        let l1: f64 = r.per_variable_theta.iter().sum();
        prop_assert!((r.total_cost - l1).abs() <= 1e-9);
        prop_assert!((r.total_cost - beta * r.steps as f64).abs() <= 1e-9);
        prop_assert_eq!(r.wasted, 0);
        for (i, rc) in r.reveal_cost.iter().enumerate() {
            match rc {
                Some(v) => prop_assert!(*v - c.get(i) >= -1e-12 && *v - c.get(i) < beta),
                None => prop_assert!(r.per_variable_theta[i] < c.get(i)),
            }
        }
    }

    #[test]
    fn information_hiding((f, c) in fn_and_costs(), x in any::<u64>(), flip in any::<u64>(), extra in 1u32..5, eps in 0.01f64..=0.5) {
        let n = f.arity();
        let x = x & ((1 << n) - 1);
        let cfg = RunConfig { record_trajectory: true, ..RunConfig::default() };
        let r = run(&mut warmup(&f, eps, TieBreak::LowestIndex), x, &c, 1.0, &cfg).unwrap();
        let hidden: Vec<usize> = (0..n).filter(|&i| r.reveal_cost[i].is_none()).collect();
        let mut x2 = x;
        let mut c2 = c.as_slice().to_vec();
        for &i in &hidden {
            if flip >> i & 1 == 1 {
                x2 ^= 1 << i;
            }
            c2[i] += f64::from(extra);
        }
        let r2 = run(&mut warmup(&f, eps, TieBreak::LowestIndex), x2, &CostVector::new(c2).unwrap(), 1.0, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&r2).unwrap());
    }

    #[test]
    fn online_query_is_deterministic_per_seed((f, c) in fn_and_costs(), x in any::<u64>(), s in any::<u64>()) {
        let x = x & ((1 << f.arity()) - 1);
        let cache = AnalysisCache::new(f.clone());
        let a = run(&mut OnlineQuery::new(cache.clone(), 0.2, s).unwrap(), x, &c, 1.0, &RunConfig::default()).unwrap();
        let b = run(&mut OnlineQuery::new(cache, 0.2, s).unwrap(), x, &c, 1.0, &RunConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_trials_ignore_worker_count((f, c) in fn_and_costs(), s in any::<u64>()) {
        let cache = AnalysisCache::new(f.clone());
        let factory = |t: u64| -> uql_core::Result<Box<dyn Strategy>> { Ok(Box::new(OnlineQuery::new(cache.clone(), 0.2, t)?)) };
        let mode = EvalMode::MonteCarlo { trials: 20, seed: s };
        let go = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
                .install(|| run_trials(&factory, &f, &c, 1.0, mode, &RunConfig::default()).unwrap())
        };
        prop_assert_eq!(go(1), go(4));
    }

    #[test]
    fn nested_sessions_join_by_max(c in prop::collection::vec(1u32..=6, 3), script in prop::collection::vec((0usize..3, 0usize..3, 1u64..4), 1..8)) {
        // Each entry: (session id, coordinate, number of steps).
        struct Script(Vec<(usize, usize, u64)>, Vec<[u64; 3]>);
        impl Strategy for Script {
            fn name(&self) -> String { "script".into() }
            fn execute(&mut self, env: &mut dyn QueryEnv) -> uql_core::Result<bool> {
                let mut per_session = vec![[0u64; 3]; 3];
                for &(sess, i, k) in &self.0 {
                    let mut inner = NestedSession::open(env, SampleSource::Known(0b101), 1_000)?;
                    for _ in 0..per_session[sess][i] + k {
                        if inner.revealed(i).is_some() && inner.steps(i) >= per_session[sess][i] + k { break; }
                        inner.invest(i)?;
                    }
                    per_session[sess][i] = inner.steps(i);
                }
                self.1 = per_session;
                Ok(false)
            }
        }
        let cv = CostVector::new(c.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let mut s = Script(script, Vec::new());
        let r = run(&mut s, 0b011, &cv, 1.0, &RunConfig::default()).unwrap();
        for i in 0..3 {
            let joined = s.1.iter().map(|p| p[i]).max().unwrap() as f64;
            prop_assert!(r.per_variable_theta[i] <= joined.max(c[i] as f64));
        }
    }

    #[test]
    fn symmetric_reveal_order_follows_costs(f in symmetric_fn(), c in prop::collection::vec(1u32..=4, 4), x in any::<u64>(), eps in 0.01f64..=0.5) {
        let n = f.arity();
        let c = CostVector::new(c[..n].iter().map(|&v| f64::from(v)).collect()).unwrap();
        let x = x & ((1 << n) - 1);
        let r = run(&mut warmup(&f, eps, TieBreak::LowestIndex), x, &c, 1.0, &RunConfig::default()).unwrap();
        let keys: Vec<(f64, usize)> = r.reveal_order.iter().map(|&(i, _)| (c.get(i), i)).collect();
        for w in keys.windows(2) {
            prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
        }
    }

    #[test]
    fn tie_break_is_a_relabelling(f in symmetric_fn(), cost in 1u32..=4, eps in 0.01f64..=0.5) {
        // With uniform costs the highest-index rule on x is the lowest-index
        // rule on x reversed, so error and average cost agree exactly.
        let n = f.arity();
        let c = CostVector::uniform(n, f64::from(cost)).unwrap();
        let rev = |x: u64| (0..n).fold(0u64, |acc, i| acc | (x >> i & 1) << (n - 1 - i));
        let (mut cost_lo, mut cost_hi, mut err_lo, mut err_hi) = (0.0, 0.0, 0, 0);
        for x in 0..1u64 << n {
            let a = run(&mut warmup(&f, eps, TieBreak::LowestIndex), rev(x), &c, 1.0, &RunConfig::default()).unwrap();
            let b = run(&mut warmup(&f, eps, TieBreak::HighestIndex), x, &c, 1.0, &RunConfig::default()).unwrap();
            prop_assert_eq!(a.output, b.output);
            prop_assert_eq!(a.total_cost, b.total_cost);
            cost_lo += a.total_cost;
            cost_hi += b.total_cost;
            err_lo += (a.output != f.evaluate(rev(x)).unwrap()) as u32;
            err_hi += (b.output != f.evaluate(x).unwrap()) as u32;
        }
        prop_assert_eq!(cost_lo, cost_hi);
        prop_assert_eq!(err_lo, err_hi);
    }

    #[test]
    fn follow_tree_reveals_with_query_probability(f in small_fn(), c in prop::collection::vec(1u32..=4, 4), s in any::<u64>()) {
        let n = f.arity();
        let c = CostVector::new(c[..n].iter().map(|&v| f64::from(v)).collect()).unwrap();
        let t = DecisionTree::random(n, n, 0.3, &mut seed::rng(s));
        let (freq, cost, _) = follow_reveal_frequencies(&t, &f, &c, 1.0).unwrap();
        prop_assert_eq!(&freq, &t.query_probabilities(n));
        let expected: f64 = freq.iter().zip(c.as_slice()).map(|(d, ci)| d * ci).sum();
        prop_assert!((cost - expected).abs() <= 1e-12);
    }

    #[test]
    fn influential_trees_dominate_query_probability(f in small_fn(), s in any::<u64>(), eps in 0.01f64..0.5) {
        let n = f.arity();
        let t = DecisionTree::random_for_function(&f, &mut seed::rng(s)).unwrap();
        let depth = t.average_depth();
        prop_assume!(depth > 0.0);
        let tau = eps / depth;
        let p = t.prune(&f, tau).unwrap();
        prop_assert!(p.is_everywhere_influential(&f, tau).unwrap());
        let inf = f.analysis_enumerated().unwrap().influences;
        for (i, d) in p.query_probabilities(n).iter().enumerate() {
            prop_assert!(inf[i] >= tau * d - 1e-12);
        }
        prop_assert!(distance(&p.to_function(n).unwrap(), &f, None).unwrap() <= tau * depth + 1e-12);
        // Pruning the pruned tree against its own function changes nothing.
        let own = p.to_function(n).unwrap();
        let again = p.prune(&own, tau).unwrap();
        prop_assert_eq!(distance(&again.to_function(n).unwrap(), &own, None).unwrap(), 0.0);
    }

    #[test]
    fn dp_witness_replays_to_its_value((f, c) in fn_and_costs()) {
        let (value, policy) = oracle::opt_avg_0(&f, &c).unwrap();
        let policy = Arc::new(policy);
        let factory = |_s: u64| -> uql_core::Result<Box<dyn Strategy>> { Ok(Box::new(PolicyReplay::new(policy.clone()))) };
        let s = summarize(&run_trials(&factory, &f, &c, 1.0, EvalMode::Exact, &RunConfig::default()).unwrap());
        prop_assert_eq!(s.error, 0.0);
        prop_assert!((s.avg_cost - value).abs() <= 1e-12);
    }

    #[test]
    fn pareto_frontier_is_monotone((f, c) in fn_and_costs()) {
        let pts = oracle::pareto_avg(&f, &c, &oracle::default_lambda_grid()).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].error <= w[0].error + 1e-12);
            prop_assert!(w[1].avg_cost >= w[0].avg_cost - 1e-12);
        }
    }

    #[test]
    fn generators_are_reproducible(n in 1usize..10, w in 1usize..4, s in any::<u64>()) {
        prop_assert_eq!(instances::and_instance(n, s).unwrap().to_json().unwrap(), instances::and_instance(n, s).unwrap().to_json().unwrap());
        prop_assert_eq!(instances::tribes_instance(w, s).unwrap().to_json().unwrap(), instances::tribes_instance(w, s).unwrap().to_json().unwrap());
    }
}

#[test]
fn martingale_terminal_identity() {
    for t in 0..50u64 {
        let inst = instances::random_table_instance(1 + (t % 4) as usize, 4, seed::derive(99, t)).unwrap();
        let (f, c) = (&inst.function, &inst.costs);
        let n = f.arity();
        let cache = AnalysisCache::new(f.clone());
        let mut sums = vec![0.0; n];
        for x in 0..1u64 << n {
            let mut s = WarmupIprr::new(cache.clone(), 0.1).unwrap();
            let r = run(&mut s, x, c, 1.0, &RunConfig::default()).unwrap();
            let mut pi = Restriction::empty();
            let mut frozen = vec![None; n];
            for &(j, b) in &r.reveal_order {
                frozen[j] = Some(f.restrict(&pi).unwrap().influence_enumerated(j).unwrap());
                pi.assign(j, b).unwrap();
            }
            let end = f.restrict(&pi).unwrap();
            for i in 0..n {
                sums[i] += frozen[i].unwrap_or_else(|| end.influence_enumerated(i).unwrap());
            }
        }
        let inf = f.analysis_enumerated().unwrap().influences;
        for i in 0..n {
            assert!((sums[i] / (1u64 << n) as f64 - inf[i]).abs() <= 1e-9);
        }
    }
}

#[test]
fn warmup_on_grid_meets_error_bound() {
    for t in 0..40u64 {
        let inst = instances::random_table_instance(1 + (t % 4) as usize, 4, seed::derive(7, t)).unwrap();
        for eps in [0.05, 0.2, 0.4] {
            let cache = AnalysisCache::new(inst.function.clone());
            let factory = |_s: u64| -> uql_core::Result<Box<dyn Strategy>> { Ok(Box::new(WarmupIprr::new(cache.clone(), eps)?)) };
            let s = summarize(&run_trials(&factory, &inst.function, &inst.costs, 1.0, EvalMode::Exact, &RunConfig::default()).unwrap());
            assert!(s.error <= eps);
        }
    }
}

#[test]
fn permutations_are_uniform() {
    let draws = 100_000u64;
    let mut counts = std::collections::HashMap::new();
    for t in 0..draws {
        let p: Vec<u8> = instances::permutation_costs(4, seed::derive(2024, t)).iter().map(|&v| v as u8).collect();
        *counts.entry(p).or_insert(0u64) += 1;
    }
    assert_eq!(counts.len(), 24);
    let expected = draws as f64 / 24.0;
    let chi2: f64 = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // Upper 10^-3 quantile of chi-square with 23 degrees of freedom.
    assert!(chi2 < 49.728, "chi-square {chi2}");
}

#[test]
fn hard_instance_dilution_at_k1() {
    let beta = 1.0 / 64.0;
    let h = instances::hard_instance(1, beta).unwrap();
    let a = h.function.analysis_enumerated().unwrap();
    // One list bit, one control bit, four action bits.
    assert_eq!(a.influences[0], 0.5);
    assert_eq!(a.influences[1], 0.25);
    for i in 2..6 {
        assert_eq!(a.influences[i], 0.25);
    }
    let g = BooleanFunction::address(1).map(|f| (f, CostVector::new(h.costs.as_slice()[1..].to_vec()).unwrap())).unwrap();
    let opt_h = oracle::opt_avg_0(&h.function, &h.costs).unwrap().0;
    let opt_g = oracle::opt_avg_0(&g.0, &g.1).unwrap().0;
    // Query the list bit first; the address part is reached with probability 1/2.
    assert_eq!(opt_h, beta + 0.5 * opt_g);
}

#[test]
fn follow_tree_is_exact_on_its_own_function() {
    let t = DecisionTree::and_chain(&[2, 0, 1]).unwrap();
    let f = t.to_function(3).unwrap();
    let c = CostVector::new(vec![1.0, 2.0, 3.0]).unwrap();
    let factory = |_s: u64| -> uql_core::Result<Box<dyn Strategy>> { Ok(Box::new(FollowTree::new(t.clone()))) };
    let s = summarize(&run_trials(&factory, &f, &c, 1.0, EvalMode::Exact, &RunConfig::default()).unwrap());
    assert_eq!(s.error, 0.0);
    // x2 always, x0 half the time, x1 a quarter of the time.
    assert_eq!(s.avg_cost, 3.0 + 0.5 + 0.5);
}
