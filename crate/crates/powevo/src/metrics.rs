//! Centralization and fairness measurement, and parameter sweeps over the
//! delay/compensation plane.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, InvasionOutcome};
use crate::error::{Error, Result};
use crate::evolution::{
    hash_fraction, integrate, PoolMarket, PopulationState, Trajectory, DEFAULT_EPS, DEFAULT_STEP,
    DEFAULT_T_MAX,
};
use crate::fork_model::{reward_ratio, HashDistribution, Mode, NetworkParams};
use crate::Real;

/// Gini coefficient of a hash distribution:
/// `G = sum_ij |x_i - x_j| / (2 M^2 mean(x))`. Zero for complete equality,
/// `(M-1)/M` for a one-pool monopoly.
pub fn gini<T: Real>(x: &HashDistribution<T>) -> T {
    gini_slice(x.as_slice()).expect("hash distribution is a valid gini input")
}

/// The same coefficient on raw nonnegative values; the formula is
/// scale-free, so normalization does not change the result.
pub fn gini_slice<T: Real>(h: &[T]) -> Result<T> {
    if h.is_empty() {
        return Err(Error::domain("gini: needs at least one value"));
    }
    let mut total = T::zero();
    for (i, &v) in h.iter().enumerate() {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::domain(format!(
                "gini: value {i} must be finite and nonnegative, got {v}"
            )));
        }
        total = total + v;
    }
    if !(total > T::zero()) {
        return Err(Error::domain("gini: values must not all be zero"));
    }
    let m = T::c(h.len() as f64);
    let mut abs_sum = T::zero();
    for &a in h {
        for &b in h {
            abs_sum = abs_sum + (a - b).abs();
        }
    }
    // sum / (2 M^2 (total/M)) = sum / (2 M total).
    Ok(abs_sum / (T::c(2.0) * m * total))
}

/// Minimum and maximum reward ratio over the pools and their difference.
/// The spread is zero exactly when forks carry no penalty (`tau = 0` or
/// `theta = 1`) or there is a single pool.
pub fn fairness_spread<T: Real>(
    x: &HashDistribution<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<(T, T, T)> {
    for (i, &xi) in x.as_slice().iter().enumerate() {
        if !(xi > T::zero()) {
            return Err(Error::domain(format!(
                "fairness spread: pool {i} has zero hash share; its ratio is undefined"
            )));
        }
    }
    let mut min = T::infinity();
    let mut max = T::neg_infinity();
    for i in 0..x.len() {
        let ratio = reward_ratio(i, x, p, mode)?;
        min = min.min(ratio);
        max = max.max(ratio);
    }
    Ok((min, max, max - min))
}

/// How each sweep grid point is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMethod {
    /// Closed-form classification; grid points it cannot pin to a single
    /// state (manifolds, ambiguous cases) are resolved by integration.
    Analytic,
    /// Replicator integration from the shared start.
    Ode,
}

impl SweepMethod {
    fn label(self) -> &'static str {
        match self {
            SweepMethod::Analytic => "analytic",
            SweepMethod::Ode => "ode",
        }
    }
}

/// A sweep over the delay/compensation plane for one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SweepSpec<T: Real> {
    pub market: PoolMarket<T>,
    pub lambda: T,
    pub reward: T,
    pub tau_grid: Vec<T>,
    pub theta_grid: Vec<T>,
    pub method: SweepMethod,
    /// Start state shared by every integrated grid point; uniform when
    /// absent.
    pub r0: Option<PopulationState<T>>,
}

impl<T: Real> SweepSpec<T> {
    pub fn new(
        market: PoolMarket<T>,
        lambda: T,
        reward: T,
        tau_grid: Vec<T>,
        theta_grid: Vec<T>,
        method: SweepMethod,
        r0: Option<PopulationState<T>>,
    ) -> Result<Self> {
        let spec = Self { market, lambda, reward, tau_grid, theta_grid, method, r0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() || self.theta_grid.is_empty() {
            return Err(Error::config("sweep: tau and theta grids must be nonempty"));
        }
        for &tau in &self.tau_grid {
            if !(tau >= T::zero()) || !tau.is_finite() {
                return Err(Error::config(format!(
                    "sweep: tau grid values must be finite and nonnegative, got {tau}"
                )));
            }
        }
        for &theta in &self.theta_grid {
            if !(theta >= T::zero() && theta <= T::one()) {
                return Err(Error::config(format!(
                    "sweep: theta grid values must lie in [0, 1], got {theta}"
                )));
            }
        }
        // Surfaces lambda/reward violations before the grid loop does.
        NetworkParams::new(self.lambda, self.tau_grid[0], self.reward, self.theta_grid[0])?;
        if let Some(r0) = &self.r0 {
            if r0.len() != self.market.len() {
                return Err(Error::config(format!(
                    "sweep: r0 has {} pools but the market has {}",
                    r0.len(),
                    self.market.len()
                )));
            }
        }
        Ok(())
    }
}

/// One sweep grid point. Failed points keep their error in `status` and
/// leave the state columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SweepRow<T: Real> {
    pub tau: T,
    pub theta: T,
    pub terminal: Option<PopulationState<T>>,
    pub gini: Option<T>,
    pub method: SweepMethod,
    pub status: String,
}

fn integrate_point<T: Real>(
    spec: &SweepSpec<T>,
    params: &NetworkParams<T>,
) -> Result<Trajectory<T>> {
    let uniform;
    let start = match &spec.r0 {
        Some(s) => s,
        None => {
            uniform = PopulationState::uniform(spec.market.len())?;
            &uniform
        }
    };
    integrate(
        start,
        &spec.market,
        params,
        Mode::Approx,
        T::c(DEFAULT_STEP),
        T::c(DEFAULT_T_MAX),
        T::c(DEFAULT_EPS),
    )
}

fn sweep_point<T: Real>(spec: &SweepSpec<T>, tau: T, theta: T) -> SweepRow<T> {
    let fail = |msg: String| SweepRow {
        tau,
        theta,
        terminal: None,
        gini: None,
        method: spec.method,
        status: format!("error: {msg}"),
    };
    let params = match NetworkParams::new(spec.lambda, tau, spec.reward, theta) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let (terminal, status) = match spec.method {
        SweepMethod::Ode => match integrate_point(spec, &params) {
            Ok(traj) => {
                let status = if traj.converged {
                    "ok".to_string()
                } else {
                    format!("ok; not converged (residual {})", traj.residual)
                };
                (traj.terminal, status)
            }
            Err(e) => return fail(e.to_string()),
        },
        SweepMethod::Analytic => {
            match equilibrium::classify(&spec.market, &params, Mode::Approx, spec.r0.as_ref()) {
                Ok(results) => {
                    let single = results.len() == 1 && !results[0].ambiguous;
                    match (single, &results[0].state) {
                        (true, Some(state)) => (state.clone(), "ok".to_string()),
                        // Manifolds and ambiguous classifications do not
                        // pin a single population; let the dynamics pick.
                        _ => match integrate_point(spec, &params) {
                            Ok(traj) => (traj.terminal, "ok; resolved by integration".to_string()),
                            Err(e) => return fail(e.to_string()),
                        },
                    }
                }
                Err(e) => return fail(e.to_string()),
            }
        }
    };
    let gini_val = match hash_fraction(&terminal, &spec.market) {
        Ok(x) => gini(&x),
        Err(e) => return fail(e.to_string()),
    };
    SweepRow {
        tau,
        theta,
        terminal: Some(terminal),
        gini: Some(gini_val),
        method: spec.method,
        status,
    }
}

/// Runs the sweep: rows in grid order (outer loop tau, inner theta), one
/// per grid point. Points are solved in parallel; the row order is
/// deterministic regardless. Per-point failures are recorded in the row
/// and do not abort the sweep.
pub fn sweep<T: Real>(spec: &SweepSpec<T>) -> Result<Vec<SweepRow<T>>> {
    spec.validate()?;
    let points: Vec<(T, T)> = spec
        .tau_grid
        .iter()
        .flat_map(|&tau| spec.theta_grid.iter().map(move |&theta| (tau, theta)))
        .collect();
    Ok(points
        .into_par_iter()
        .map(|(tau, theta)| sweep_point(spec, tau, theta))
        .collect())
}

/// Writes sweep rows as CSV with columns `tau, theta, r_1..r_M, gini,
/// method, status`. Failed rows leave the state and gini cells empty.
pub fn write_sweep_csv<T: Real, W: Write>(rows: &[SweepRow<T>], m: usize, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["tau".to_string(), "theta".to_string()];
    for i in 1..=m {
        header.push(format!("r_{i}"));
    }
    header.extend(["gini".to_string(), "method".to_string(), "status".to_string()]);
    wtr.write_record(&header)?;
    for row in rows {
        let mut rec = vec![format!("{}", row.tau), format!("{}", row.theta)];
        match &row.terminal {
            Some(state) => {
                for &v in state.as_slice() {
                    rec.push(format!("{v}"));
                }
            }
            None => rec.extend(std::iter::repeat(String::new()).take(m)),
        }
        rec.push(row.gini.map(|g| format!("{g}")).unwrap_or_default());
        rec.push(row.method.label().to_string());
        rec.push(row.status.clone());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Confirms a state against the invasion grid and maps the outcome to a
/// short label; convenience for report assembly.
pub fn stability_label<T: Real>(
    state: &PopulationState<T>,
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
    mode: Mode,
) -> Result<&'static str> {
    let report = equilibrium::invasion_test(
        state,
        m,
        p,
        mode,
        &equilibrium::default_epsilons::<T>(),
        &equilibrium::default_invaders::<T>(m.len())?,
    )?;
    Ok(match report.outcome {
        InvasionOutcome::EssConfirmed => "ess",
        InvasionOutcome::NssConfirmed => "nss",
        InvasionOutcome::Refuted => "refuted",
    })
}
