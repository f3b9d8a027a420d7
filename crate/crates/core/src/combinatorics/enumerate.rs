use crate::market::PermutationOutcome;
use crate::{Error, Result};

/// Largest `n` whose `n!` outcomes may be enumerated.
pub const MAX_ENUMERATION_N: usize = 10;

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All `n!` outcomes in lexicographic order of their mappings.
pub fn enumerate_permutations(n: usize) -> Result<Permutations> {
    if n > MAX_ENUMERATION_N {
        return Err(Error::BudgetExceeded(format!(
            "refusing to enumerate {n}! outcomes (limit n = {MAX_ENUMERATION_N})"
        )));
    }
    Ok(Permutations {
        next: Some((0..n).collect()),
    })
}

#[derive(Debug, Clone)]
pub struct Permutations {
    next: Option<Vec<usize>>,
}

impl Iterator for Permutations {
    type Item = PermutationOutcome;

    fn next(&mut self) -> Option<PermutationOutcome> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(PermutationOutcome::from_vec_unchecked(current))
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
