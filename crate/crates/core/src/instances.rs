//! Function and cost generators for the instances studied in the experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::boolfn::{BooleanFunction, TruthTable};
use crate::costsim::CostVector;
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::format::{FunctionSpec, InstanceFile};
use crate::seed;

#[derive(Clone, Debug)]
pub struct Instance {
    pub function: BooleanFunction,
    pub costs: CostVector,
    pub label: String,
    pub seed: u64,
}

impl Instance {
    pub fn new(function: BooleanFunction, costs: CostVector, label: impl Into<String>, seed: u64) -> Result<Self> {
        if function.arity() != costs.len() {
            return Err(Error::ArityMismatch { expected: function.arity(), found: costs.len() });
        }
        Ok(Instance { function, costs, label: label.into(), seed })
    }

    pub fn to_file(&self) -> Result<InstanceFile> {
        Ok(InstanceFile {
            function: FunctionSpec::of(&self.function)?,
            costs: self.costs.as_slice().to_vec(),
            label: self.label.clone(),
            seed: self.seed,
        })
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        Instance::new(file.function.build()?, CostVector::new(file.costs.clone())?, file.label.clone(), file.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file()?)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Instance::from_file(&serde_json::from_str(s)?)
    }
}

/// Seeded uniform permutation of `1..=n`.
pub fn permutation_costs(n: usize, seed: u64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    v.shuffle(&mut seed::rng(seed));
    v
}

/// `AND_n` with a uniformly random permutation of `{1..n}` as costs.
pub fn and_instance(n: usize, seed: u64) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidParameter("AND instance needs n >= 1".into()));
    }
    Instance::new(BooleanFunction::and(n)?, CostVector::new(permutation_costs(n, seed))?, format!("and-{n}"), seed)
}

/// `Tribes(w)` with an independent permutation of `{1..w}` inside each tribe.
pub fn tribes_instance(w: usize, seed: u64) -> Result<Instance> {
    let f = BooleanFunction::tribes(w)?;
    let mut rng = seed::rng(seed);
    let mut costs = Vec::with_capacity(f.arity());
    for _ in 0..1usize << w {
        let mut perm: Vec<f64> = (1..=w).map(|i| i as f64).collect();
        perm.shuffle(&mut rng);
        costs.extend(perm);
    }
    Instance::new(f, CostVector::new(costs)?, format!("tribes-{w}"), seed)
}

fn round_up(c: f64, beta: f64) -> f64 {
    (c / beta).ceil() * beta
}

/// Address function with costs `κ·Inf_i` rounded up to the `β` grid.
pub fn address_instance(k: usize, beta: f64, scale: f64) -> Result<Instance> {
    if !(beta > 0.0 && scale > 0.0) {
        return Err(Error::InvalidParameter("beta and scale must be positive".into()));
    }
    let f = BooleanFunction::address(k)?;
    let inf = f.analysis()?.influences;
    let costs = inf.iter().map(|&v| round_up(scale * v, beta)).collect();
    Instance::new(f, CostVector::new(costs)?, format!("address-{k}"), 0)
}

/// Decision-list hard instance: list bits cost `β`, control bits 1 and
/// action bits `2^{-k}`, rounded up to the `β` grid.
pub fn hard_instance(k: usize, beta: f64) -> Result<Instance> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let f = BooleanFunction::hard_instance(k)?;
    let side = 1usize << k;
    let mut costs = vec![beta; k];
    costs.extend(std::iter::repeat_n(round_up(1.0, beta), k));
    costs.extend(std::iter::repeat_n(round_up(1.0 / side as f64, beta), side * side));
    Instance::new(f, CostVector::new(costs)?, format!("hard-{k}"), 0)
}

/// Zero-error strategy for the hard instance: scan the list, then read
/// the control bits and the parity of the selected row.
pub fn hard_instance_witness(k: usize) -> Result<DecisionTree> {
    if k == 0 || k > 2 {
        return Err(Error::InvalidParameter(format!("hard instance needs k in 1..=2, got {k}")));
    }
    let side = 1usize << k;
    fn controls(k: usize, side: usize, depth: usize, row: usize) -> Result<DecisionTree> {
        if depth == k {
            let start = 2 * k + row * side;
            let vars: Vec<usize> = (start..start + side).collect();
            return DecisionTree::complete(&vars, |acc| acc.count_ones() % 2 == 1);
        }
        DecisionTree::query(
            k + depth,
            controls(k, side, depth + 1, row)?,
            controls(k, side, depth + 1, row | 1 << depth)?,
        )
    }
    let mut t = controls(k, side, 0, 0)?;
    for j in (0..k).rev() {
        t = DecisionTree::query(j, t, DecisionTree::leaf(j % 2 == 0))?;
    }
    Ok(t)
}

/// Uniformly random truth table on `n` bits with integer costs in `1..=max_cost`.
pub fn random_table_instance(n: usize, max_cost: u32, seed: u64) -> Result<Instance> {
    if max_cost == 0 {
        return Err(Error::InvalidParameter("max_cost must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let table = TruthTable::from_fn(n, |_| rng.gen())?;
    let costs = (0..n).map(|_| rng.gen_range(1..=max_cost) as f64).collect();
    Instance::new(BooleanFunction::from_table(table), CostVector::new(costs)?, format!("table-{n}"), seed)
}

/// Named functions: `and:n=3`, `or:n=3`, `maj:n=5`, `threshold:n=5,t=2`,
/// `parity:n=4`, `dictator:n=3,i=0`, `constant:n=3,value=1`, `tribes:w=2`,
/// `address:k=1`, `hard:k=1`, `profile:0110`.
pub fn named_function(spec: &str) -> Result<BooleanFunction> {
    let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
    if name == "profile" {
        let bits = params
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("profile digit {c:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        return BooleanFunction::symmetric(bits);
    }
    let mut kv = std::collections::HashMap::new();
    for p in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = p.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got {p:?}")))?;
        let v: usize = v.parse().map_err(|_| Error::Parse(format!("bad integer {v:?}")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Parse(format!("{name} needs {k}=")));
    match name {
        "and" => BooleanFunction::and(get("n")?),
        "or" => BooleanFunction::or(get("n")?),
        "maj" => BooleanFunction::majority(get("n")?),
        "threshold" => BooleanFunction::threshold(get("n")?, get("t")?),
        "parity" => BooleanFunction::parity(get("n")?),
        "dictator" => BooleanFunction::dictator(get("n")?, get("i")?),
        "constant" => BooleanFunction::constant(get("n")?, get("value")? != 0),
        "tribes" => BooleanFunction::tribes(get("w")?),
        "address" => BooleanFunction::address(get("k")?),
        "hard" => BooleanFunction::hard_instance(get("k")?),
        _ => Err(Error::Parse(format!("unknown function {name:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_instances() {
        let i = and_instance(1, 9).unwrap();
        assert_eq!(i.costs.as_slice(), &[1.0]);
        let i = and_instance(3, 9).unwrap();
        let mut c = i.costs.as_slice().to_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![1.0, 2.0, 3.0]);
        assert_eq!(and_instance(3, 9).unwrap().to_json().unwrap(), i.to_json().unwrap());
    }

    #[test]
    fn tribes_instances() {
        let i = tribes_instance(1, 4).unwrap();
        assert_eq!(i.costs.as_slice(), &[1.0, 1.0]);
        let i = tribes_instance(3, 4).unwrap();
        for t in 0..8 {
            let mut c = i.costs.as_slice()[t * 3..t * 3 + 3].to_vec();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![1.0, 2.0, 3.0]);
        }
        assert!(tribes_instance(5, 0).is_err());
    }

    #[test]
    fn address_instance_costs() {
        let i = address_instance(1, 0.125, 1.0).unwrap();
        assert_eq!(i.costs.as_slice(), &[0.5, 0.5, 0.5, 0.5, 0.5]);
        let i = address_instance(2, 1.0 / 64.0, 1.0).unwrap();
        assert_eq!(i.costs.get(0), 0.5);
        assert_eq!(i.costs.get(2), 0.25);
        let tinf: f64 = i.function.total_influence().unwrap();
        assert_eq!(tinf, 0.5 * 2.0 + 4.0);
        assert!(address_instance(3, 0.1, 1.0).is_err());
    }

    #[test]
    fn hard_instance_layout() {
        let i = hard_instance(2, 1.0 / 64.0).unwrap();
        assert_eq!(i.function.arity(), 20);
        assert_eq!(i.costs.get(0), 1.0 / 64.0);
        assert_eq!(i.costs.get(2), 1.0);
        assert_eq!(i.costs.get(19), 0.25);
        assert!((i.function.expectation().unwrap() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn witness_computes_the_hard_instance() {
        for k in 1..=2 {
            let i = hard_instance(k, 1.0 / 64.0).unwrap();
            let t = hard_instance_witness(k).unwrap();
            let g = t.to_function(i.function.arity()).unwrap();
            assert_eq!(crate::boolfn::distance(&g, &i.function, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn random_tables_are_seeded() {
        let a = random_table_instance(3, 4, 11).unwrap();
        assert_eq!(a.to_json().unwrap(), random_table_instance(3, 4, 11).unwrap().to_json().unwrap());
        assert!(a.costs.as_slice().iter().all(|&c| (1.0..=4.0).contains(&c)));
    }

    #[test]
    fn named_functions() {
        let m = named_function("profile:0011").unwrap();
        assert_eq!(m.influence(0).unwrap(), 0.5);
        let t = named_function("threshold:n=4,t=4").unwrap();
        assert_eq!(crate::boolfn::distance(&t, &BooleanFunction::and(4).unwrap(), None).unwrap(), 0.0);
        assert!(named_function("profile:1111").unwrap().is_constant().unwrap());
        assert!(named_function("maj").is_err());
        assert!(named_function("xor:n=2").is_err());
    }

    #[test]
    fn instance_file_round_trip() {
        let i = tribes_instance(2, 77).unwrap();
        let j = Instance::from_json(&i.to_json().unwrap()).unwrap();
        assert_eq!(j.costs, i.costs);
        assert_eq!(j.label, "tribes-2");
        assert_eq!(j.seed, 77);
    }
}
