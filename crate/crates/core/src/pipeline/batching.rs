//! Greedy packing of items into token-budgeted batches.

use std::ops::Range;

/// Splits `costs` into consecutive ranges whose summed cost stays within
/// `budget`. An item costing more than the budget gets a batch of its own;
/// items are never split, and concatenating the ranges yields `0..len`.
pub fn pack_batches(costs: &[usize], budget: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut used = 0usize;
    for (i, &c) in costs.iter().enumerate() {
        if i > start && used + c > budget {
            out.push(start..i);
            start = i;
            used = 0;
        }
        used += c;
    }
    if start < costs.len() {
        out.push(start..costs.len());
    }
    out
}
