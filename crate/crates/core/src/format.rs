//! JSON documents for functions and instances.

use serde::{Deserialize, Serialize};

use crate::boolfn::{BooleanFunction, Family, TruthTable};
use crate::dtree::{DecisionTree, TreeDocument};
use crate::error::{Error, Result};

/// Function specification: `{"family": ..., <family fields>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `bits` is the hex form of the integer whose bit `x` is `f(x)`.
    TruthTable { n: usize, bits: String },
    Symmetric { profile: Vec<u8> },
    Tribes { w: usize },
    Address { k: usize },
    HardInstance { k: usize },
    Tree { n: usize, tree: TreeDocument },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<BooleanFunction> {
        match self {
            FunctionSpec::TruthTable { n, bits } => Ok(BooleanFunction::from_table(TruthTable::from_hex(*n, bits)?)),
            FunctionSpec::Symmetric { profile } => BooleanFunction::symmetric(
                profile
                    .iter()
                    .map(|&b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(Error::Parse(format!("profile entries must be 0 or 1, got {b}"))),
                    })
                    .collect::<Result<_>>()?,
            ),
            FunctionSpec::Tribes { w } => BooleanFunction::tribes(*w),
            FunctionSpec::Address { k } => BooleanFunction::address(*k),
            FunctionSpec::HardInstance { k } => BooleanFunction::hard_instance(*k),
            FunctionSpec::Tree { n, tree } => BooleanFunction::from_tree(*n, DecisionTree::from_document(tree)?),
        }
    }

    /// Spec reproducing `f`; restricted functions are written as truth tables.
    pub fn of(f: &BooleanFunction) -> Result<Self> {
        if !f.restriction().is_empty() {
            return Ok(FunctionSpec::TruthTable { n: f.arity(), bits: f.to_truth_table()?.to_hex() });
        }
        Ok(match f.family() {
            Family::TruthTable(t) => FunctionSpec::TruthTable { n: f.arity(), bits: t.to_hex() },
            Family::Symmetric(p) => FunctionSpec::Symmetric { profile: p.iter().map(|&b| b as u8).collect() },
            Family::Tribes { w } => FunctionSpec::Tribes { w: *w },
            Family::Address { k } => FunctionSpec::Address { k: *k },
            Family::HardInstance { k } => FunctionSpec::HardInstance { k: *k },
            Family::Tree(t) => FunctionSpec::Tree { n: f.arity(), tree: t.to_document() },
        })
    }
}

/// Instance file: `{"function": <spec>, "costs": [...], "label": "...", "seed": 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub function: FunctionSpec,
    pub costs: Vec<f64>,
    pub label: String,
    #[serde(default)]
    pub seed: u64,
}
