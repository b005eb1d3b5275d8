//! Integer-count discretization of the kRR and OUE output distributions.
//!
//! The secure protocols sample a report by obliviously selecting one slot of
//! a committed vector, so each mechanism's probabilities must be expressed as
//! slot counts: `l` of `n` slots hold the true category, every other category
//! fills `(n - l) / (d - 1)` slots (kRR), or a bit vector carries `n/2` or `l`
//! ones (OUE).

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no slot split found for width {width} and d = {d}; increase width")]
    NoValidSplit { width: u64, d: u64 },
    #[error("degenerate OUE parameters: l = n/2 = {l}")]
    DegenerateOue { l: u64 },
    #[error("encoded sums reach {needed_bits} bits but the group order has {q_bits}")]
    ExceedsGroupOrder { needed_bits: u64, q_bits: u64 },
}

/// Slot counts and encoding radix for secure kRR (and OLH over the hashed
/// domain).
#[derive(Debug, Clone, PartialEq)]
pub struct KrrSharedParams {
    /// Slots holding the true category.
    pub l: u64,
    /// Total slot count.
    pub n: u64,
    /// Radix of the per-slot payload encoding `z^category`.
    pub z: u64,
    pub epsilon: f64,
    /// Category count of the domain the vector ranges over.
    pub d: u64,
    /// Requested approximation granularity.
    pub width: u64,
}

/// Bit-vector counts for secure OUE.
#[derive(Debug, Clone, PartialEq)]
pub struct OueSharedParams {
    /// Ones in each q-type (non-secret position) vector.
    pub l: u64,
    /// Bits per vector; even.
    pub n: u64,
    pub epsilon: f64,
    pub d: u64,
}

fn check_epsilon(epsilon: f64) -> Result<(), ParamsError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(ParamsError::InvalidInput(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    Ok(())
}

/// Finds the largest `l/n <= e^eps / (d - 1 + e^eps)` with `n = width`
/// (before reduction) such that the remaining slots split evenly across the
/// other `d - 1` categories, then reduces `(l, n)` by their common factor.
/// A split that leaves `l/n` no larger than the per-category share of the
/// others is rejected: it would make `p <= q`.
pub fn decide_shared_parameters(
    epsilon: f64,
    width: u64,
    d: u64,
) -> Result<KrrSharedParams, ParamsError> {
    check_epsilon(epsilon)?;
    if d < 2 {
        return Err(ParamsError::InvalidInput(format!("d must be at least 2, got {d}")));
    }
    if width < d {
        return Err(ParamsError::InvalidInput(format!(
            "width ({width}) must be at least d ({d})"
        )));
    }
    let e = epsilon.exp();
    let others = d - 1;
    let mut i = (width as f64 * e / (others as f64 + e)).floor() as u64;
    // e/(d-1+e) < 1, but guard against rounding at huge epsilon.
    i = i.min(width - 1);
    while i > 0 {
        if (width - i).is_multiple_of(others) {
            let per_other = (width - i) / others;
            // p must stay strictly above q; smaller i only lowers p
            if i <= per_other {
                break;
            }
            let common = i.gcd(&width).gcd(&per_other);
            let l = i / common;
            let n = width / common;
            let z = l.max((n - l) / others) + 1;
            return Ok(KrrSharedParams {
                l,
                n,
                z,
                epsilon,
                d,
                width,
            });
        }
        i -= 1;
    }
    Err(ParamsError::NoValidSplit { width, d })
}

impl KrrSharedParams {
    /// Slots per non-true category.
    pub fn per_other(&self) -> u64 {
        (self.n - self.l) / (self.d - 1)
    }

    pub fn p_exact(&self) -> f64 {
        let e = self.epsilon.exp();
        e / ((self.d - 1) as f64 + e)
    }

    pub fn q_exact(&self) -> f64 {
        1.0 / ((self.d - 1) as f64 + self.epsilon.exp())
    }

    /// Probability that the sampled slot holds the true category.
    pub fn p_approx(&self) -> f64 {
        self.l as f64 / self.n as f64
    }

    /// Probability that the sampled slot holds one specific other category.
    pub fn q_approx(&self) -> f64 {
        self.per_other() as f64 / self.n as f64
    }

    /// Payload exponent `z^category` encrypted into a slot.
    pub fn slot_exponent(&self, category: u64) -> BigUint {
        BigUint::from(self.z).pow(category as u32)
    }

    /// Expected exponent sum `Z_j` of a vector whose true category is `j`.
    pub fn sum_exponent(&self, true_category: u64) -> BigUint {
        let per_other = BigUint::from(self.per_other());
        let l = BigUint::from(self.l);
        (0..self.d)
            .map(|k| {
                let weight = if k == true_category { &l } else { &per_other };
                weight * self.slot_exponent(k)
            })
            .sum()
    }

    /// Upper bound `n * z^(d-1)` on any honest or per-slot-valid exponent sum.
    pub fn max_sum_exponent(&self) -> BigUint {
        BigUint::from(self.n) * self.slot_exponent(self.d - 1)
    }

    /// Checks that exponent sums cannot wrap modulo the group order `q`.
    pub fn check_group_order(&self, q: &BigUint) -> Result<(), ParamsError> {
        let bound = self.max_sum_exponent();
        if bound >= *q {
            return Err(ParamsError::ExceedsGroupOrder {
                needed_bits: bound.bits() + 1,
                q_bits: q.bits(),
            });
        }
        Ok(())
    }
}

/// `e^eps / (d - 1 + e^eps) - l/n`; never negative.
pub fn approximation_error(params: &KrrSharedParams) -> f64 {
    params.p_exact() - params.p_approx()
}

/// `l = ceil(width / (1 + e^eps))` ones per q-type vector, `n = width`.
pub fn oue_shared_parameters(epsilon: f64, width: u64, d: u64) -> Result<OueSharedParams, ParamsError> {
    check_epsilon(epsilon)?;
    if width < 2 || !width.is_multiple_of(2) {
        return Err(ParamsError::InvalidInput(format!(
            "OUE width must be even and at least 2, got {width}"
        )));
    }
    if d < 2 {
        return Err(ParamsError::InvalidInput(format!("d must be at least 2, got {d}")));
    }
    let l = (width as f64 / (1.0 + epsilon.exp())).ceil() as u64;
    if l * 2 == width {
        return Err(ParamsError::DegenerateOue { l });
    }
    Ok(OueSharedParams {
        l,
        n: width,
        epsilon,
        d,
    })
}

impl OueSharedParams {
    /// Ones in the vector of the secret category.
    pub fn half(&self) -> u64 {
        self.n / 2
    }

    pub fn q_exact(&self) -> f64 {
        1.0 / (1.0 + self.epsilon.exp())
    }

    /// Probability that the sampled bit of the secret category's vector is 1.
    pub fn p_approx(&self) -> f64 {
        self.half() as f64 / self.n as f64
    }

    pub fn q_approx(&self) -> f64 {
        self.l as f64 / self.n as f64
    }

    /// Exponent of `g` in the product of all `d * n` ciphertexts.
    pub fn total_exponent(&self) -> u64 {
        self.half() + self.l * (self.d - 1)
    }

    pub fn check_group_order(&self, q: &BigUint) -> Result<(), ParamsError> {
        // Per-vector sums are at most n; the aggregate is at most d*n.
        let bound = BigUint::from(self.n) * BigUint::from(self.d) + BigUint::one();
        if bound >= *q {
            return Err(ParamsError::ExceedsGroupOrder {
                needed_bits: bound.bits(),
                q_bits: q.bits(),
            });
        }
        Ok(())
    }
}
