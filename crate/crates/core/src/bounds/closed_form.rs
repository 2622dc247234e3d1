use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{DeltaBound, DeltaMethod};
use crate::scalar::Probability;

/// Interception probability without edge deletion: the chance that at least
/// one of `rho` attacked nodes escapes ablation, `1 - p_abl^rho`.
pub fn delta_node_ablation_exact<P: Probability>(p_abl: &P, rho: usize) -> DeltaBound<P> {
    DeltaBound::new(P::one() - p_abl.powi(rho), DeltaMethod::NodeAblationExact, rho)
}

/// Largest `rho` with `p_abl^rho > 1/2`, the ceiling on any certificate under
/// pure ablation smoothing. Returns `usize::MAX` for `p_abl >= 1`.
pub fn max_certifiable_radius<P: Probability>(p_abl: &P) -> usize {
    let half = P::one() / (P::one() + P::one());
    if *p_abl <= half {
        return 0;
    }
    if *p_abl >= P::one() {
        return usize::MAX;
    }
    let mut rho = 0;
    let mut pow = p_abl.clone();
    while pow > half {
        rho += 1;
        pow = pow * p_abl.clone();
    }
    rho
}

/// `1 - C(n - rho, keep) / C(n, keep)`: the interception probability when
/// exactly `keep` of `n` nodes are retained uniformly at random.
pub fn levine_delta_exact(n: usize, keep: usize, rho: usize) -> BigRational {
    if rho == 0 {
        return BigRational::zero();
    }
    if keep > n {
        return BigRational::one();
    }
    let total = binomial(BigUint::from(n), BigUint::from(keep));
    let clean = if rho > n || keep > n - rho {
        BigUint::zero()
    } else {
        binomial(BigUint::from(n - rho), BigUint::from(keep))
    };
    BigRational::one()
        - BigRational::new(BigInt::from(clean), BigInt::from(total))
}

pub fn levine_delta(n: usize, keep: usize, rho: usize) -> f64 {
    levine_delta_exact(n, keep, rho).to_f64().unwrap_or(1.0)
}

/// Largest `rho` with `levine_delta(n, keep, rho) < 1/2`.
pub fn levine_max_radius(n: usize, keep: usize) -> usize {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    (1..=n)
        .take_while(|&rho| levine_delta_exact(n, keep, rho) < half)
        .last()
        .unwrap_or(0)
}
