//! Rank-normalized split R-hat and bulk effective sample size for a single
//! scalar quantity observed in several chains.
//!
//! Both return `NaN` when the draws are constant.

use statrs::distribution::{ContinuousCDF, Normal};

fn split(chains: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let len = chains.iter().map(Vec::len).min()?;
    let half = len / 2;
    if half < 4 || chains.iter().any(|c| c.len() != len) {
        return None;
    }
    // An odd middle draw is dropped.
    Some(
        chains
            .iter()
            .flat_map(|c| [c[..half].to_vec(), c[len - half..].to_vec()])
            .collect(),
    )
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains.iter().flatten().next().copied();
    first.is_none_or(|f| chains.iter().flatten().all(|v| *v == f))
}

/// Normal scores of the pooled ranks (average rank for ties), with the
/// offset `(r - 3/8) / (N + 1/4)`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let total = pooled.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; total];
    let mut start = 0;
    while start < total {
        let mut end = start + 1;
        while end < total && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &j in &order[start..end] {
            ranks[j] = avg;
        }
        start = end;
    }
    let normal = Normal::standard();
    let mut it = ranks
        .into_iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (total as f64 + 0.25)));
    chains
        .iter()
        .map(|c| it.by_ref().take(c.len()).collect())
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between = n * var(&means);
    let within = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    ((between / within + n - 1.0) / n).sqrt()
}

/// Maximum of the bulk and the folded (tail) rank-normalized split R-hat.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let Some(parts) = split(chains) else {
        return f64::NAN;
    };
    if is_constant(&parts) {
        return f64::NAN;
    }
    let bulk = rhat_basic(&rank_normalize(&parts));
    let mut pooled: Vec<f64> = parts.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mid = pooled.len() / 2;
    let median = if pooled.len().is_multiple_of(2) {
        0.5 * (pooled[mid - 1] + pooled[mid])
    } else {
        pooled[mid]
    };
    let folded: Vec<Vec<f64>> = parts
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect();
    let tail = if is_constant(&folded) {
        bulk
    } else {
        rhat_basic(&rank_normalize(&folded))
    };
    bulk.max(tail)
}

fn autocov(c: &[f64], m: f64, lag: usize) -> f64 {
    let n = c.len();
    (0..n - lag).map(|t| (c[t] - m) * (c[t + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size by Geyer's initial monotone sequence.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m_chains = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &m)| autocov(c, m, lag))
            .sum::<f64>()
            / m_chains as f64
    };
    let nf = n as f64;
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m_chains > 1 {
        var_plus += var(&means);
    }
    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut rho_t = vec![0.0; n];
    rho_t[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_t[1] = odd;
    let mut t = 1;
    while t + 3 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_t[t + 1] = even;
            rho_t[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t.saturating_sub(2);
    if even > 0.0 {
        rho_t[max_t + 1] = even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho_t[t + 1] + rho_t[t + 2] > rho_t[t - 1] + rho_t[t] {
            rho_t[t + 1] = (rho_t[t - 1] + rho_t[t]) / 2.0;
            rho_t[t + 2] = rho_t[t + 1];
        }
        t += 2;
    }
    let total = (m_chains * n) as f64;
    let tau = -1.0 + 2.0 * rho_t[..=max_t].iter().sum::<f64>() + rho_t[max_t + 1];
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Bulk effective sample size: the ESS of rank-normalized split chains,
/// capped at the total number of draws.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let Some(parts) = split(chains) else {
        return f64::NAN;
    };
    if is_constant(&parts) {
        return f64::NAN;
    }
    let total: usize = chains.iter().map(Vec::len).sum();
    ess_raw(&rank_normalize(&parts)).min(total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn iid_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..m)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn constant_chains_give_sentinel() {
        let c = vec![vec![2.0; 100]; 4];
        assert!(split_rhat(&c).is_nan());
        assert!(ess_bulk(&c).is_nan());
    }

    #[test]
    fn iid_draws_have_rhat_near_one() {
        let c = iid_chains(4, 1000, 11);
        let r = split_rhat(&c);
        assert!(r < 1.01, "rhat {r}");
        let e = ess_bulk(&c);
        assert!(e > 2500.0 && e <= 4000.0, "ess {e}");
    }

    #[test]
    fn offset_chain_is_detected() {
        let mut c = iid_chains(4, 1000, 12);
        c[2].iter_mut().for_each(|v| *v += 10.0);
        assert!(split_rhat(&c) > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_small_ess() {
        let mut rng = rng_from_seed(13);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        x = 0.95 * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi = 0.95 has ESS/N = (1 - phi)/(1 + phi) ≈ 0.026.
        let e = ess_bulk(&chains);
        assert!(e > 40.0 && e < 250.0, "ess {e}");
    }

    #[test]
    fn too_short_chains_give_sentinel() {
        assert!(split_rhat(&[vec![1.0, 2.0, 3.0]]).is_nan());
    }

    #[test]
    fn uses_uniform_draws() {
        let mut rng = rng_from_seed(14);
        let c: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..500).map(|_| rng.random::<f64>()).collect())
            .collect();
        assert!(split_rhat(&c) < 1.02);
    }
}
