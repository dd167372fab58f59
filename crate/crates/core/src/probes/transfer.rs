//! Share of solved tasks that need knowledge only the dominant language's
//! corpus teaches.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetMode {
    /// Tasks tagged with exclusive operations by the suite generator.
    ByConstruction,
    /// Solved by the dominant-language model but not by the new-language model.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub mode: SubsetMode,
    pub p_size: usize,
    pub c_size: usize,
    pub intersection: usize,
    pub proportion: f64,
}

/// `|P ∩ C| / |C|`; an empty `C` is an error rather than zero.
pub fn knowledge_transfer_proportion(p: &BTreeSet<u32>, c: &BTreeSet<u32>, mode: SubsetMode) -> Result<TransferReport, ProbeError> {
    if c.is_empty() {
        return Err(ProbeError::EmptySolvedSet);
    }
    let intersection = p.intersection(c).count();
    Ok(TransferReport {
        mode,
        p_size: p.len(),
        c_size: c.len(),
        intersection,
        proportion: intersection as f64 / c.len() as f64,
    })
}

/// Tasks solved by the dominant model and missed by the new-language model.
pub fn empirical_subset(solved_by_dominant: &BTreeSet<u32>, solved_by_new: &BTreeSet<u32>) -> BTreeSet<u32> {
    solved_by_dominant.difference(solved_by_new).copied().collect()
}
