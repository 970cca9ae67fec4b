//! Closed-form fork, fail and uncle probabilities of a proof-of-work
//! network, and the expected mining rewards they imply.
//!
//! Blocks arrive as a Poisson process with rate `lambda`. A freshly mined
//! block takes `tau` seconds to reach the other pools, and a second block
//! found inside that window splits the chain into a two-branch race. The
//! race is decided by the next block that leads the opposing branch by at
//! least `tau`; the losing branch's block goes stale. A stale block may
//! still earn the fraction `theta` of the full reward.
//!
//! The miner of the latest block keeps mining on it immediately while
//! everyone else waits out the propagation delay (the last-block effect),
//! so a pool never races its own block and larger pools see fewer forks.
//!
//! Everything here is a pure function of immutable inputs and can be called
//! from any number of threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Selects the exact race integral or its quadratic (Taylor) approximation
/// in the fail/uncle probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Approx,
}

/// Decomposition of the propagation delay into transmission and
/// verification: `tau(s) = s/(gamma*c) + beta*s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockSizeModelRaw<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct BlockSizeModel<T: Real> {
    /// Block size `s` in data units. Zero is accepted and yields `tau = 0`.
    pub size_s: T,
    /// Dimensionless network scale factor `gamma`.
    pub gamma: T,
    /// Bandwidth `c` in data units per second.
    pub bandwidth_c: T,
    /// Verification speed `beta` in seconds per data unit. Zero means
    /// verification is free.
    pub verify_beta: T,
}

#[derive(Deserialize)]
struct BlockSizeModelRaw<T> {
    size_s: T,
    gamma: T,
    bandwidth_c: T,
    verify_beta: T,
}

impl<T: Real> TryFrom<BlockSizeModelRaw<T>> for BlockSizeModel<T> {
    type Error = Error;

    fn try_from(raw: BlockSizeModelRaw<T>) -> Result<Self> {
        Self::new(raw.size_s, raw.gamma, raw.bandwidth_c, raw.verify_beta)
    }
}

impl<T: Real> BlockSizeModel<T> {
    pub fn new(size_s: T, gamma: T, bandwidth_c: T, verify_beta: T) -> Result<Self> {
        let m = Self { size_s, gamma, bandwidth_c, verify_beta };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("size_s", self.size_s), ("verify_beta", self.verify_beta)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "block size model: {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("bandwidth_c", self.bandwidth_c)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "block size model: {name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Propagation delay `tau(s) = s/(gamma*c) + beta*s` in seconds.
pub fn propagation_delay<T: Real>(m: &BlockSizeModel<T>) -> Result<T> {
    m.validate()?;
    Ok(m.size_s / (m.gamma * m.bandwidth_c) + m.verify_beta * m.size_s)
}

/// Network-level parameters of the fork model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkParamsRaw<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct NetworkParams<T: Real> {
    /// Block generation rate `lambda` in blocks per second.
    pub lambda: T,
    /// Propagation delay `tau` in seconds.
    pub tau: T,
    /// Full block reward `R`.
    pub reward: T,
    /// Fraction of the full reward paid to a stale block, in `[0, 1]`.
    /// `theta = 1` is the limit in which stale blocks cost nothing.
    pub theta: T,
}

#[derive(Deserialize)]
struct NetworkParamsRaw<T> {
    lambda: T,
    tau: T,
    reward: T,
    theta: T,
}

impl<T: Real> TryFrom<NetworkParamsRaw<T>> for NetworkParams<T> {
    type Error = Error;

    fn try_from(raw: NetworkParamsRaw<T>) -> Result<Self> {
        Self::new(raw.lambda, raw.tau, raw.reward, raw.theta)
    }
}

impl<T: Real> NetworkParams<T> {
    pub fn new(lambda: T, tau: T, reward: T, theta: T) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::domain(format!(
                "network params: lambda must be finite and positive, got {lambda}"
            )));
        }
        if !(tau >= T::zero()) || !tau.is_finite() {
            return Err(Error::domain(format!(
                "network params: tau must be finite and nonnegative, got {tau}"
            )));
        }
        if !(reward > T::zero()) || !reward.is_finite() {
            return Err(Error::domain(format!(
                "network params: reward must be finite and positive, got {reward}"
            )));
        }
        if !(theta >= T::zero() && theta <= T::one()) {
            return Err(Error::domain(format!(
                "network params: theta must lie in [0, 1], got {theta}"
            )));
        }
        Ok(Self { lambda, tau, reward, theta })
    }

    /// Builds the parameters with `tau` computed from a block-size model.
    pub fn from_block_size(
        lambda: T,
        m: &BlockSizeModel<T>,
        reward: T,
        theta: T,
    ) -> Result<Self> {
        let tau = propagation_delay(m)?;
        Self::new(lambda, tau, reward, theta)
    }

    /// Expected number of block arrivals per propagation window.
    #[inline]
    pub fn lambda_tau(&self) -> T {
        self.lambda * self.tau
    }
}

/// Absolute tolerance for simplex membership. `1e-12` for `f64`; wider
/// types cannot hit that, so the bound degrades gracefully with epsilon.
pub(crate) fn simplex_tolerance<T: Real>() -> T {
    T::c(1e-12).max(T::epsilon() * T::c(16.0))
}

pub(crate) fn check_simplex<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::domain(format!("{what}: needs at least one entry")));
    }
    let mut sum = T::zero();
    for (i, &e) in v.iter().enumerate() {
        if !(e >= T::zero()) || !e.is_finite() {
            return Err(Error::domain(format!(
                "{what}: entry {i} must be finite and nonnegative, got {e}"
            )));
        }
        sum = sum + e;
    }
    if (sum - T::one()).abs() > simplex_tolerance::<T>() {
        return Err(Error::domain(format!(
            "{what}: entries must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Normalized hash-rate fractions of the `M` pools; a point on the simplex.
///
/// Raw per-pool hash rates and the network total are absorbed at
/// construction through [`HashDistribution::from_weights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<T>", try_from = "Vec<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct HashDistribution<T: Real> {
    x: Vec<T>,
}

impl<T: Real> HashDistribution<T> {
    /// Accepts an already normalized distribution; the sum must be 1 within
    /// the simplex tolerance.
    pub fn new(x: Vec<T>) -> Result<Self> {
        check_simplex(&x, "hash distribution")?;
        Ok(Self { x })
    }

    /// Normalizes raw nonnegative hash rates. The total must be positive.
    pub fn from_weights(h: &[T]) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::domain("hash distribution: needs at least one pool"));
        }
        let mut sum = T::zero();
        for (i, &w) in h.iter().enumerate() {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::domain(format!(
                    "hash distribution: weight {i} must be finite and nonnegative, got {w}"
                )));
            }
            sum = sum + w;
        }
        if !(sum > T::zero()) {
            return Err(Error::domain("hash distribution: total hash rate must be positive"));
        }
        let x: Vec<T> = h.iter().map(|&w| w / sum).collect();
        Self::new(x)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("hash distribution: needs at least one pool"));
        }
        Self::from_weights(&vec![T::one(); m])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<T> {
        self.x.get(i).copied()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.x
    }
}

impl<T: Real> From<HashDistribution<T>> for Vec<T> {
    fn from(d: HashDistribution<T>) -> Self {
        d.x
    }
}

impl<T: Real> TryFrom<Vec<T>> for HashDistribution<T> {
    type Error = Error;

    fn try_from(x: Vec<T>) -> Result<Self> {
        Self::new(x)
    }
}

/// A two-branch fork race between the initiator of the fork (the pool that
/// mined the contested block, hash fraction `alpha`) and the rival that
/// found the competing block (`beta_rival`). Non-combatant hash power
/// splits evenly between the branches, giving the chain hash shares `eta2`
/// (initiator side) and `eta1` (rival side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForkRace<T> {
    pub alpha: T,
    pub beta_rival: T,
    /// Rival branch share `(1 - alpha + beta_rival) / 2`.
    pub eta1: T,
    /// Initiator branch share `(1 + alpha - beta_rival) / 2`.
    pub eta2: T,
    /// Rival branch block rate `eta1 * lambda`.
    pub lambda1: T,
    /// Initiator branch block rate `eta2 * lambda`.
    pub lambda2: T,
}

impl<T: Real> ForkRace<T> {
    /// `eta1` is computed as the exact complement of `eta2`, so the two
    /// branch shares sum to one in floating point as well.
    pub fn new(alpha: T, beta_rival: T, lambda: T) -> Result<Self> {
        if !(alpha >= T::zero()) || !(beta_rival >= T::zero()) {
            return Err(Error::domain(format!(
                "fork race: hash fractions must be nonnegative, got alpha={alpha}, beta_rival={beta_rival}"
            )));
        }
        if alpha + beta_rival > T::one() + simplex_tolerance::<T>() {
            return Err(Error::domain(format!(
                "fork race: alpha + beta_rival must not exceed 1, got {}",
                alpha + beta_rival
            )));
        }
        if !(lambda > T::zero()) {
            return Err(Error::domain(format!(
                "fork race: lambda must be positive, got {lambda}"
            )));
        }
        let eta2 = (T::one() + alpha - beta_rival) * T::c(0.5);
        let eta1 = T::one() - eta2;
        Ok(Self {
            alpha,
            beta_rival,
            eta1,
            eta2,
            lambda1: eta1 * lambda,
            lambda2: eta2 * lambda,
        })
    }
}

/// Probability that a rival block appears during one propagation window:
/// `1 - e^(-lambda*tau)`.
pub fn prob_concurrent_block<T: Real>(p: &NetworkParams<T>) -> T {
    -((-p.lambda_tau()).exp_m1())
}

/// Probability that mining pool `i`'s fresh block gets forked:
/// `(1 - x_i) * (1 - e^(-lambda*tau))`. The pool itself learns its own
/// block instantly, so only rival hash power can contest it. The
/// complement `1 - P_fork` is the probability the block extends the chain
/// uncontested.
pub fn prob_fork_after<T: Real>(
    i: usize,
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
) -> Result<T> {
    let xi = x
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={})", x.len())))?;
    Ok((T::one() - xi) * prob_concurrent_block(p))
}

/// Win probabilities of a two-branch race: the initiator chain wins
/// outright with `eta2*e^(-lambda*tau*eta1)`, the rival chain with
/// `eta1*e^(-lambda*tau*eta2)`, and the remainder is a tie (neither next
/// block leads by `tau`). The tie share is computed as the complement, so
/// the three values sum to one by construction.
pub fn race_win_probabilities<T: Real>(race: &ForkRace<T>, p: &NetworkParams<T>) -> (T, T, T) {
    let lt = p.lambda_tau();
    // min(1) guards an exp implementation overshooting 1 by an ulp for
    // arguments near zero, which would push the tie share negative.
    let e1 = (-lt * race.eta1).exp().min(T::one());
    let e2 = (-lt * race.eta2).exp().min(T::one());
    let p_c1 = race.eta2 * e1;
    let p_c2 = race.eta1 * e2;
    let p_tie = (T::one() - p_c1) - p_c2;
    (p_c1, p_c2, p_tie)
}

/// Probability that the initiator's block loses a race against a rival of
/// hash fraction `xj`, with ties split evenly.
#[inline]
pub(crate) fn pair_fail<T: Real>(xi: T, xj: T, lambda_tau: T) -> T {
    let half = T::c(0.5);
    let eta2 = (T::one() + xi - xj) * half;
    let eta1 = T::one() - eta2;
    let win_init = eta2 * (-lambda_tau * eta1).exp().min(T::one());
    let win_riv = eta1 * (-lambda_tau * eta2).exp().min(T::one());
    half * (T::one() + win_riv - win_init)
}

pub(crate) fn prob_fail_slice<T: Real>(
    i: usize,
    xs: &[T],
    lambda_tau: T,
    mode: Mode,
) -> Result<T> {
    let m = xs.len();
    let xi = *xs
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={m})")))?;
    let rest = T::one() - xi;
    if !(rest > T::zero()) {
        return Err(Error::domain(format!(
            "fail probability undefined for pool {i}: no rival hash power (x_i = {xi})"
        )));
    }
    let half = T::c(0.5);
    let mut sum = T::zero();
    for (j, &xj) in xs.iter().enumerate() {
        if j == i {
            continue;
        }
        match mode {
            Mode::Exact => sum = sum + xj * pair_fail(xi, xj, lambda_tau),
            Mode::Approx => sum = sum + xj * (T::one() - xi + xj) * half,
        }
    }
    // The last-ulp clamp keeps the result a probability when the sum
    // rounds a hair above the rival mass.
    Ok((sum / rest).min(T::one()).max(T::zero()))
}

/// Probability that pool `i`'s block loses the race, given a fork
/// happened. The rival is one of the other pools in proportion to hash
/// rate; against rival `j` the initiator's block goes stale with
/// probability `(1 + eta1*e^(-lt*eta2) - eta2*e^(-lt*eta1)) / 2` where
/// `eta1 = (1-x_i+x_j)/2` and `eta2` is its complement. `Mode::Approx`
/// replaces the per-pair term by its quadratic expansion
/// `(1 - x_i + x_j)/2`.
pub fn prob_fail<T: Real>(
    i: usize,
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<T> {
    prob_fail_slice(i, x.as_slice(), p.lambda_tau(), mode)
}

pub(crate) fn prob_uncle_slice<T: Real>(
    i: usize,
    xs: &[T],
    lambda_tau: T,
    mode: Mode,
) -> Result<T> {
    let m = xs.len();
    let xi = *xs
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={m})")))?;
    if m == 1 || xi >= T::one() {
        return Ok(T::zero());
    }
    let p_delta = -((-lambda_tau).exp_m1());
    let half = T::c(0.5);
    // P_fork * P_fail with the common (1 - x_i) factor cancelled, which
    // keeps the value finite and exact as x_i approaches 1.
    let mut sum = T::zero();
    for (j, &xj) in xs.iter().enumerate() {
        if j == i {
            continue;
        }
        match mode {
            Mode::Exact => sum = sum + xj * pair_fail(xi, xj, lambda_tau),
            Mode::Approx => sum = sum + xj * (T::one() - xi + xj) * half,
        }
    }
    Ok((p_delta * sum).min(T::one()).max(T::zero()))
}

/// Probability that pool `i` mines a stale block per initiated block:
/// `P_fork_i * P_fail_i`. Zero for a monopoly and at `tau = 0`.
pub fn prob_uncle<T: Real>(
    i: usize,
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<T> {
    prob_uncle_slice(i, x.as_slice(), p.lambda_tau(), mode)
}

/// Expected mining reward of pool `i` per block period:
/// `Y_i = x_i * R * (1 - (1-theta) * P_uncle_i)`. Always in `[0, x_i*R]`.
pub fn expected_reward<T: Real>(
    i: usize,
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<T> {
    let xi = x
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={})", x.len())))?;
    let pu = prob_uncle(i, x, p, mode)?;
    Ok(xi * p.reward * (T::one() - (T::one() - p.theta) * pu))
}

/// Reward per unit hash share, normalized so the fork-free baseline is 1:
/// `Y_i / (x_i * R) = 1 - (1-theta) * P_uncle_i`. Without forks (or with
/// full stale compensation) every pool's ratio is exactly 1; with them,
/// smaller pools fall further below it.
pub fn reward_ratio<T: Real>(
    i: usize,
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<T> {
    let xi = x
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={})", x.len())))?;
    if !(xi > T::zero()) {
        return Err(Error::domain(format!(
            "reward ratio undefined for pool {i} with zero hash share"
        )));
    }
    let pu = prob_uncle(i, x, p, mode)?;
    Ok(T::one() - (T::one() - p.theta) * pu)
}

/// Probability that a temporary fork has exactly one rival branch, given
/// that at least one rival block appeared in the window:
/// `lambda*tau * e^(-lambda*tau) / (1 - e^(-lambda*tau))`.
///
/// Strictly decreasing in `lambda*tau` with limit 1 at zero; the limit is
/// returned explicitly at `lambda*tau = 0`.
pub fn prob_single_rival_branch<T: Real>(lambda_tau: T) -> Result<T> {
    if !(lambda_tau >= T::zero()) || !lambda_tau.is_finite() {
        return Err(Error::domain(format!(
            "lambda*tau must be finite and nonnegative, got {lambda_tau}"
        )));
    }
    if lambda_tau == T::zero() {
        return Ok(T::one());
    }
    let denom = -((-lambda_tau).exp_m1());
    Ok(lambda_tau * (-lambda_tau).exp() / denom)
}
