//! Evolutionary-game layer: miner payoffs and replicator dynamics over a
//! population of mining pools.
//!
//! `N` miners each pick one of `M` pools; pool `i` demands hash rate
//! `omega_i` per miner at cost `p` per hash unit per block period. The
//! population shares `r` induce the network hash distribution
//! `x_i = omega_i r_i / sum(omega_j r_j)`, the fork model prices each
//! pool's stale risk, and miners drift toward above-average payoff pools
//! under the replicator equation `dr_i/dt = r_i (y_i - mean(y))`.
//!
//! Integration is classical fixed-step RK4: the dynamics are smooth on the
//! simplex and a fixed step keeps runs bit-reproducible.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fork_model::{self, check_simplex, HashDistribution, Mode, NetworkParams};
use crate::Real;

/// Market structure of the pools: per-miner hash demands, miner count, and
/// hash cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolMarketRaw<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct PoolMarket<T: Real> {
    omega: Vec<T>,
    n: T,
    p: T,
}

#[derive(Deserialize)]
struct PoolMarketRaw<T> {
    omega: Vec<T>,
    n: T,
    p: T,
}

impl<T: Real> TryFrom<PoolMarketRaw<T>> for PoolMarket<T> {
    type Error = Error;

    fn try_from(raw: PoolMarketRaw<T>) -> Result<Self> {
        Self::new(raw.omega, raw.n, raw.p)
    }
}

impl<T: Real> PoolMarket<T> {
    pub fn new(omega: Vec<T>, n: T, p: T) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::domain("pool market: needs at least one pool"));
        }
        for (i, &w) in omega.iter().enumerate() {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::domain(format!(
                    "pool market: omega[{i}] must be finite and positive, got {w}"
                )));
            }
        }
        if !(n >= T::c(omega.len() as f64)) || !n.is_finite() {
            return Err(Error::domain(format!(
                "pool market: miner count n must be finite and at least M={}, got {n}",
                omega.len()
            )));
        }
        if !(p >= T::zero()) || !p.is_finite() {
            return Err(Error::domain(format!(
                "pool market: hash cost p must be finite and nonnegative, got {p}"
            )));
        }
        Ok(Self { omega, n, p })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    #[inline]
    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    #[inline]
    pub fn miner_count(&self) -> T {
        self.n
    }

    #[inline]
    pub fn hash_cost(&self) -> T {
        self.p
    }
}

/// Population shares of the pools; a point on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<T>", try_from = "Vec<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct PopulationState<T: Real> {
    r: Vec<T>,
}

impl<T: Real> PopulationState<T> {
    pub fn new(r: Vec<T>) -> Result<Self> {
        check_simplex(&r, "population state")?;
        Ok(Self { r })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("population state: needs at least one pool"));
        }
        let share = T::one() / T::c(m as f64);
        let mut r = vec![share; m];
        // Rebuild the last entry so the shares sum to 1 exactly.
        let partial: T = r[..m - 1].iter().fold(T::zero(), |a, &b| a + b);
        r[m - 1] = T::one() - partial;
        Self::new(r)
    }

    /// The vertex `e_i`: everyone in pool `i`.
    pub fn vertex(m: usize, i: usize) -> Result<Self> {
        if i >= m {
            return Err(Error::domain(format!("vertex index {i} out of range (M={m})")));
        }
        let mut r = vec![T::zero(); m];
        r[i] = T::one();
        Self::new(r)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.r.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<T> {
        self.r.get(i).copied()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.r
    }

    /// L1 distance to another state of the same dimension.
    pub fn l1_distance(&self, other: &Self) -> T {
        self.r
            .iter()
            .zip(&other.r)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs())
    }
}

impl<T: Real> From<PopulationState<T>> for Vec<T> {
    fn from(s: PopulationState<T>) -> Self {
        s.r
    }
}

impl<T: Real> TryFrom<Vec<T>> for PopulationState<T> {
    type Error = Error;

    fn try_from(r: Vec<T>) -> Result<Self> {
        Self::new(r)
    }
}

/// Record of one replicator integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct Trajectory<T: Real> {
    /// Sample times, strictly increasing, starting at 0.
    pub times: Vec<T>,
    /// Sampled states, one per time. Long runs are decimated to at most
    /// about 2048 samples; the final state is always included.
    pub states: Vec<PopulationState<T>>,
    pub terminal: PopulationState<T>,
    /// True when the velocity stayed below the convergence threshold for
    /// 10 consecutive steps before `t_max`.
    pub converged: bool,
    /// Max-norm of the velocity at the terminal state.
    pub residual: T,
}

fn dims_match<T: Real>(m: &PoolMarket<T>, len: usize, what: &str) -> Result<()> {
    if m.len() != len {
        return Err(Error::domain(format!(
            "{what}: dimension mismatch, market has {} pools but state has {len}",
            m.len()
        )));
    }
    Ok(())
}

/// Network hash distribution induced by a population:
/// `x_i = omega_i r_i / sum(omega_j r_j)`.
pub fn hash_fraction<T: Real>(
    r: &PopulationState<T>,
    m: &PoolMarket<T>,
) -> Result<HashDistribution<T>> {
    dims_match(m, r.len(), "hash fraction")?;
    let weights: Vec<T> = m.omega.iter().zip(r.as_slice()).map(|(&w, &ri)| w * ri).collect();
    let total = weights.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) {
        return Err(Error::domain("hash fraction: all-zero weighted population"));
    }
    HashDistribution::from_weights(&weights)
}

/// Per-pool miner payoffs on a raw share slice. Entries with `r_i <= 0`
/// get payoff 0; they carry zero weight everywhere this is used. Negative
/// entries (transient RK4 stage states) are clamped to 0 first.
pub(crate) fn payoffs_slice<T: Real>(
    r: &[T],
    m: &PoolMarket<T>,
    net: &NetworkParams<T>,
    mode: Mode,
) -> Vec<T> {
    let mm = r.len();
    let mut xs = vec![T::zero(); mm];
    let mut total = T::zero();
    for i in 0..mm {
        let ri = r[i].max(T::zero());
        xs[i] = m.omega[i] * ri;
        total = total + xs[i];
    }
    if !(total > T::zero()) {
        return vec![T::zero(); mm];
    }
    for x in &mut xs {
        *x = *x / total;
    }
    let lt = net.lambda_tau();
    let one_minus_theta = T::one() - net.theta;
    let mut ys = vec![T::zero(); mm];
    for i in 0..mm {
        let ri = r[i].max(T::zero());
        if !(ri > T::zero()) {
            continue;
        }
        let pu = fork_model::prob_uncle_slice(i, &xs, lt, mode)
            .expect("index in range by construction");
        ys[i] = net.reward * xs[i] / (m.n * ri) * (T::one() - one_minus_theta * pu)
            - m.p * m.omega[i];
    }
    ys
}

/// Expected payoff of one miner in pool `i`:
/// `y_i = R x_i / (N r_i) * (1 - (1-theta) P_uncle_i) - p omega_i`.
pub fn miner_payoff<T: Real>(
    i: usize,
    r: &PopulationState<T>,
    m: &PoolMarket<T>,
    net: &NetworkParams<T>,
    mode: Mode,
) -> Result<T> {
    dims_match(m, r.len(), "miner payoff")?;
    let ri = r
        .get(i)
        .ok_or_else(|| Error::domain(format!("pool index {i} out of range (M={})", r.len())))?;
    if !(ri > T::zero()) {
        return Err(Error::domain(format!(
            "miner payoff undefined for empty pool {i} (r_i = 0)"
        )));
    }
    Ok(payoffs_slice(r.as_slice(), m, net, mode)[i])
}

/// Replicator velocity on a raw slice; see [`replicator_rhs`].
pub(crate) fn rhs_slice<T: Real>(
    r: &[T],
    m: &PoolMarket<T>,
    net: &NetworkParams<T>,
    mode: Mode,
) -> Vec<T> {
    let ys = payoffs_slice(r, m, net, mode);
    let mut y_bar = T::zero();
    for (ri, yi) in r.iter().zip(&ys) {
        y_bar = y_bar + ri.max(T::zero()) * *yi;
    }
    r.iter()
        .zip(&ys)
        .map(|(&ri, &yi)| {
            let ri = ri.max(T::zero());
            if ri > T::zero() {
                ri * (yi - y_bar)
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Replicator velocity `dr_i/dt = r_i (y_i - mean(y))` with
/// `mean(y) = sum(r_k y_k)`. Empty pools have zero velocity, so simplex
/// faces are invariant, and the components sum to 0 up to roundoff.
pub fn replicator_rhs<T: Real>(
    r: &PopulationState<T>,
    m: &PoolMarket<T>,
    net: &NetworkParams<T>,
    mode: Mode,
) -> Result<Vec<T>> {
    dims_match(m, r.len(), "replicator rhs")?;
    Ok(rhs_slice(r.as_slice(), m, net, mode))
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

/// Default RK4 step size.
pub const DEFAULT_STEP: f64 = 0.01;
/// Default integration horizon.
pub const DEFAULT_T_MAX: f64 = 1e4;
/// Default convergence threshold on the max-norm velocity.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Steps the velocity threshold must stay quiet before the run stops.
const QUIET_STEPS: u32 = 10;

/// Cap on stored trajectory samples (plus the final state).
const MAX_SAMPLES: u64 = 2047;

/// Integrates the replicator dynamics from `r0` with fixed-step RK4.
///
/// After each step, negative components are clamped to zero and the state
/// renormalized onto the simplex. The run stops once the max-norm velocity
/// stays below `eps_converge` for 10 consecutive steps (converged) or at
/// `t_max` (not converged).
pub fn integrate<T: Real>(
    r0: &PopulationState<T>,
    m: &PoolMarket<T>,
    net: &NetworkParams<T>,
    mode: Mode,
    step: T,
    t_max: T,
    eps_converge: T,
) -> Result<Trajectory<T>> {
    dims_match(m, r0.len(), "integrate")?;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::domain(format!("integrate: step must be positive, got {step}")));
    }
    if !(t_max > T::zero()) || !t_max.is_finite() {
        return Err(Error::domain(format!("integrate: t_max must be positive, got {t_max}")));
    }
    if !(eps_converge >= T::zero()) {
        return Err(Error::domain(format!(
            "integrate: eps_converge must be nonnegative, got {eps_converge}"
        )));
    }
    let mm = r0.len();
    let n_steps = (t_max / step).ceil().as_f64() as u64;
    let n_steps = n_steps.max(1);
    let stride = n_steps.div_ceil(MAX_SAMPLES).max(1);

    let mut r: Vec<T> = r0.as_slice().to_vec();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut quiet = 0u32;
    let mut converged = false;
    let half = T::c(0.5);
    let sixth = T::one() / T::c(6.0);

    let record = |k: u64, r: &[T], times: &mut Vec<T>, states: &mut Vec<PopulationState<T>>| {
        times.push(step * T::c(k as f64));
        states.push(PopulationState { r: r.to_vec() });
    };

    record(0, &r, &mut times, &mut states);
    let mut last_recorded = 0u64;
    let mut k = 0u64;
    while k < n_steps {
        let k1 = rhs_slice(&r, m, net, mode);
        if max_abs(&k1) < eps_converge {
            quiet += 1;
            if quiet >= QUIET_STEPS {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }

        let stage = |base: &[T], dir: &[T], h: T| -> Vec<T> {
            base.iter().zip(dir).map(|(&b, &d)| b + h * d).collect()
        };
        let k2 = rhs_slice(&stage(&r, &k1, step * half), m, net, mode);
        let k3 = rhs_slice(&stage(&r, &k2, step * half), m, net, mode);
        let k4 = rhs_slice(&stage(&r, &k3, step), m, net, mode);
        for i in 0..mm {
            let incr = k1[i] + T::c(2.0) * k2[i] + T::c(2.0) * k3[i] + k4[i];
            r[i] = r[i] + step * sixth * incr;
        }
        // Clamp and renormalize: the dynamics cannot leave the simplex,
        // the floating-point step can.
        let mut total = T::zero();
        for v in &mut r {
            *v = v.max(T::zero());
            total = total + *v;
        }
        for v in &mut r {
            *v = *v / total;
        }
        k += 1;
        if k % stride == 0 {
            record(k, &r, &mut times, &mut states);
            last_recorded = k;
        }
    }
    if last_recorded != k {
        record(k, &r, &mut times, &mut states);
    }

    let residual = max_abs(&rhs_slice(&r, m, net, mode));
    let terminal = PopulationState::new(r)?;
    Ok(Trajectory { times, states, terminal, converged, residual })
}

/// Writes a trajectory as CSV with columns `t, r_1..r_M`.
pub fn write_trajectory_csv<T: Real, W: Write>(traj: &Trajectory<T>, mut w: W) -> Result<()> {
    let m = traj.terminal.len();
    write!(w, "t")?;
    for i in 1..=m {
        write!(w, ",r_{i}")?;
    }
    writeln!(w)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        write!(w, "{t}")?;
        for v in s.as_slice() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
