//! Matchings, permanents, permutation enumeration and Birkhoff–von Neumann
//! decomposition.

mod bvn;
mod enumerate;
mod matching;
mod permanent;

pub use bvn::{bvn_decompose, BvnDecomposition, BvnTerm};
pub use enumerate::{enumerate_permutations, factorial, Permutations, MAX_ENUMERATION_N};
pub use matching::{
    lexicographic_max_matching, max_weight_matching, perfect_matching_on_support,
};
pub use permanent::{
    check_estimate, log_permanent, log_permanent_exp, permanent, permanent_with,
    ExactPermanent, PermanentEstimator, PermanentInterval, PERMANENT_CAP,
};
