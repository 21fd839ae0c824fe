//! Fixtures shared by the benchmarks.

use uql_core::instances::{self, random_table_instance};
use uql_core::{CostVector, Instance};

/// Random truth table with costs in `1..=4`.
pub fn table(n: usize, seed: u64) -> Instance {
    random_table_instance(n, 4, seed).expect("n within the enumeration cap")
}

/// `MAJ_9` with costs `1..9`.
pub fn majority9() -> Instance {
    let f = uql_core::BooleanFunction::majority(9).expect("valid arity");
    let c = CostVector::new((1..=9).map(f64::from).collect()).expect("positive costs");
    Instance::new(f, c, "maj-9", 0).expect("matching arity")
}

pub fn tribes(w: usize, seed: u64) -> Instance {
    instances::tribes_instance(w, seed).expect("w at most 4")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        assert_eq!(super::table(5, 1).function.arity(), 5);
        assert_eq!(super::majority9().costs.len(), 9);
        assert_eq!(super::tribes(2, 0).function.arity(), 8);
    }
}
