use super::MaxEntModel;
use crate::combinatorics::enumerate_permutations;
use crate::linalg::log_sum_exp;
use crate::market::PermutationOutcome;
use crate::{Error, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest `n` for which the outcome space is enumerated for sampling.
pub const MAX_SAMPLING_N: usize = 8;

/// Every outcome with its normalized probability, in lexicographic order.
pub fn distribution(model: &MaxEntModel) -> Result<Vec<(PermutationOutcome, f64)>> {
    if model.n > MAX_SAMPLING_N {
        return Err(Error::BudgetExceeded(format!(
            "exact distribution limited to n <= {MAX_SAMPLING_N}, got {}",
            model.n
        )));
    }
    let outcomes: Vec<PermutationOutcome> = enumerate_permutations(model.n)?.collect();
    let logs: Vec<f64> = outcomes.iter().map(|p| model.log_weight(p)).collect();
    let log_z = log_sum_exp(logs.iter().copied());
    if !log_z.is_finite() {
        return Err(Error::InvalidArgument("model puts no mass on any outcome".into()));
    }
    Ok(outcomes
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - log_z).exp()))
        .collect())
}

/// `count` independent draws from `p_σ ∝ e^{Y•M_σ}`, reproducible from `seed`.
pub fn sample(model: &MaxEntModel, count: usize, seed: u64) -> Result<Vec<PermutationOutcome>> {
    let dist = distribution(model)?;
    let index = WeightedIndex::new(dist.iter().map(|(_, w)| *w))
        .map_err(|e| Error::InvalidArgument(format!("bad sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| dist[index.sample(&mut rng)].0.clone()).collect())
}
