//! Equilibrium structure of the pool-selection game: closed-form
//! classification of stable population states and numerical stability
//! probes.
//!
//! The classifiers cover the regimes with known closed forms: equal specs
//! (every vertex is evolutionarily stable), two pools with distinct specs
//! (boundary-capture conditions plus an interior cubic), the
//! full-compensation limit `theta = 1`, and ordered specs with `tau = 0`
//! or `theta = 1` (a neutrally stable balanced hyperplane). Outside those
//! regimes [`classify`] falls back to integrating the dynamics and says
//! so in the result.
//!
//! Results carry a `witness`: a numeric tag for the classification branch
//! that fired, the evaluated inequality values, and any polynomial roots
//! with their residuals, so a reader can audit the decision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{
    self, integrate, PoolMarket, PopulationState, DEFAULT_EPS, DEFAULT_STEP, DEFAULT_T_MAX,
};
use crate::fork_model::{Mode, NetworkParams};
use crate::Real;

/// What kind of equilibrium a classification produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// A single pool holds the whole population.
    VertexEss,
    /// An interior point with every pool populated.
    InteriorEss,
    /// A neutrally stable set: the hyperplane of populations whose
    /// spec-weighted sum equals the balance constant.
    NssManifold,
    /// No closed form applies; the state was reached by integrating the
    /// dynamics.
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    AsymptoticallyStable,
    LyapunovStable,
}

/// One evaluated inequality: `holds` records whether the comparison named
/// by `name` came out true for the shown `lhs`/`rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionValue<T> {
    pub name: String,
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

/// A real root of the interior-equilibrium cubic. `stable` marks roots
/// accepted as stable interior equilibria: inside the open unit interval
/// with positive slope of the cubic (equivalently, a negative slope of
/// the payoff gap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootInfo<T> {
    pub r: T,
    pub residual: T,
    pub stable: bool,
}

/// Audit trail of a classification: which branch fired (`theorem` is the
/// branch tag used across the library and CLI: 2 equal specs, 3 two
/// pools, 4 two-pool full-compensation limit, 5 ordered specs; `case` the
/// sub-case), the inequalities evaluated, and any cubic roots inspected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness<T> {
    pub theorem: Option<u8>,
    pub case: Option<u8>,
    pub conditions: Vec<ConditionValue<T>>,
    pub roots: Vec<RootInfo<T>>,
}

impl<T> Default for Witness<T> {
    fn default() -> Self {
        Self { theorem: None, case: None, conditions: Vec::new(), roots: Vec::new() }
    }
}

/// Outcome of one classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct EquilibriumResult<T: Real> {
    pub kind: Kind,
    /// The equilibrium state; absent for a manifold of equilibria.
    pub state: Option<PopulationState<T>>,
    /// Balance constant `R/(pN)` of the neutrally stable hyperplane
    /// `sum(r_i omega_i) = R/(pN)`; present only for `NssManifold`.
    pub manifold_constraint: Option<T>,
    pub stability: Stability,
    pub witness: Witness<T>,
    /// True when the classification is not unique (several stable states
    /// coexist) and the companion results carry the others.
    pub ambiguous: bool,
    pub notice: Option<String>,
}

/// Closed-form leading principal minors of the reduced stability matrix
/// on the balanced hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorReport<T> {
    /// `D_1 .. D_{M-1}`.
    pub minors: Vec<T>,
    /// True iff the signs strictly alternate starting negative.
    pub negative_definite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvasionOutcome {
    EssConfirmed,
    NssConfirmed,
    Refuted,
}

/// The (epsilon, invader) pair that produced the minimal payoff margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct InvasionWitness<T: Real> {
    pub epsilon: T,
    pub invader: PopulationState<T>,
}

/// Result of brute-forcing the invasion inequality over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct InvasionReport<T: Real> {
    pub outcome: InvasionOutcome,
    /// Smallest incumbent-minus-invader payoff margin seen.
    pub min_diff: T,
    /// Violating pair when refuted.
    pub witness: Option<InvasionWitness<T>>,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Margins whose absolute value is below this count as exact ties.
const ZERO_TOL: f64 = 1e-11;
/// Invaders closer than this (L1) to the tested state are skipped: the
/// margin there is dominated by roundoff, not by game structure.
const EXCLUSION_RADIUS: f64 = 2e-2;
/// Roots this close to 0 or 1 are boundary cases, not interior ones.
const BOUNDARY_TOL: f64 = 1e-9;
/// Seed for the deterministic default invader grid.
const INVADER_SEED: u64 = 0x5eed_1a7e;

fn condition<T: Real>(name: &str, lhs: T, rhs: T, holds: bool) -> ConditionValue<T> {
    ConditionValue { name: name.to_string(), lhs, rhs, holds }
}

fn vertex_state<T: Real>(m: usize, i: usize) -> PopulationState<T> {
    PopulationState::vertex(m, i).expect("index checked by caller")
}

/// Every pool spec equal within this tolerance counts as an equal-spec
/// market.
fn specs_equal<T: Real>(omega: &[T]) -> bool {
    let w0 = omega[0];
    let tol = T::c(1e-12) * w0.abs().max(T::one());
    omega.iter().all(|&w| (w - w0).abs() <= tol)
}

fn specs_strictly_decreasing<T: Real>(omega: &[T]) -> bool {
    omega.windows(2).all(|w| {
        let tol = T::c(1e-12) * w[0].abs().max(T::one());
        w[0] - w[1] > tol
    })
}

/// `tau = 0` or `theta = 1`: the regimes where stale blocks carry no
/// payoff penalty and the closed forms below are exact.
fn penalty_free<T: Real>(p: &NetworkParams<T>) -> bool {
    p.lambda_tau() == T::zero() || p.theta == T::one()
}

/// Classifies an equal-spec market: every vertex is an evolutionarily
/// stable state and no other equilibrium is stable, so one result per
/// pool is returned.
pub fn classify_equal_spec<T: Real>(m: &PoolMarket<T>) -> Result<Vec<EquilibriumResult<T>>> {
    if !specs_equal(m.omega()) {
        return Err(Error::domain(
            "equal-spec classifier: pool specs differ; use the two-pool or ordered classifier",
        ));
    }
    let mm = m.len();
    Ok((0..mm)
        .map(|i| EquilibriumResult {
            kind: Kind::VertexEss,
            state: Some(vertex_state(mm, i)),
            manifold_constraint: None,
            stability: Stability::AsymptoticallyStable,
            witness: Witness { theorem: Some(2), case: None, ..Witness::default() },
            ambiguous: mm > 1,
            notice: if mm > 1 {
                Some("every vertex is stable; the realized one depends on the start".to_string())
            } else {
                None
            },
        })
        .collect())
}

fn two_pool_check<T: Real>(m: &PoolMarket<T>) -> Result<(T, T)> {
    if m.len() != 2 {
        return Err(Error::domain(format!(
            "two-pool classifier: expected 2 pools, got {}",
            m.len()
        )));
    }
    let w1 = m.omega()[0];
    let w2 = m.omega()[1];
    if !(w1 > w2) {
        return Err(Error::domain(format!(
            "two-pool classifier: specs must satisfy omega1 > omega2, got [{w1}, {w2}]"
        )));
    }
    Ok((w1, w2))
}

/// Coefficients `(a, b, c, d)` of the interior-equilibrium cubic in `r`,
/// the share of pool 1. With `W = omega2 + (omega1-omega2) r` and
/// `q = (1 - e^(-lambda tau)) (1 - theta)`, the payoff gap satisfies
/// `y_1 - y_2 = -(a r^3 + b r^2 + c r + d) / (N W^3)` under the quadratic
/// fail-probability approximation, so interior equilibria are the cubic's
/// roots in (0,1) and stable ones have positive cubic slope.
pub fn two_pool_cubic_coefficients<T: Real>(
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
) -> Result<(T, T, T, T)> {
    let (w1, w2) = two_pool_check(m)?;
    let n = m.miner_count();
    let pc = m.hash_cost();
    let r = p.reward;
    let d = w1 - w2;
    let q = -((-p.lambda_tau()).exp_m1()) * (T::one() - p.theta);
    let two = T::c(2.0);
    let three = T::c(3.0);
    let a = n * pc * d * d * d * d;
    let b = three * n * pc * w2 * d * d * d - r * d * d * d - r * q * d * w1 * w2;
    let c = three * n * pc * w2 * w2 * d * d - two * r * w2 * d * d - two * r * q * w1 * w2 * w2;
    let dd = w2 * w2 * (r * q * w1 - d * (r - pc * n * w2));
    Ok((a, b, c, dd))
}

/// All real roots of `a r^3 + b r^2 + c r + d = 0`, ascending, each
/// polished by Newton iteration to residual below
/// `1e-12 * max(|a|,|b|,|c|,|d|)` and with multiplicities collapsed.
/// Degenerate constants (`a=b=c=0`, `d != 0`) yield an empty list; all
/// four zero is a domain error.
pub fn cubic_real_roots<T: Real>(a: T, b: T, c: T, d: T) -> Result<Vec<T>> {
    let maxc = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if maxc == T::zero() {
        return Err(Error::domain("cubic: all coefficients are zero"));
    }
    let bound = T::c(1e-12).max(T::epsilon() * T::c(8.0)) * maxc;
    let eval = |r: T| ((a * r + b) * r + c) * r + d;
    let slope = |r: T| (three_a(a) * r + b + b) * r + c;

    let mut roots: Vec<T> = if a == T::zero() {
        if b == T::zero() {
            if c == T::zero() {
                return Ok(Vec::new());
            }
            vec![-d / c]
        } else {
            quadratic_roots(b, c, d)
        }
    } else {
        cubic_roots_raw(a, b, c, d)
    };

    for r in &mut roots {
        let mut cur = *r;
        for _ in 0..60 {
            let f = eval(cur);
            if f.abs() <= bound {
                break;
            }
            let df = slope(cur);
            if df == T::zero() || !df.is_finite() {
                break;
            }
            let next = cur - f / df;
            if !next.is_finite() {
                break;
            }
            cur = next;
        }
        *r = cur;
    }
    for &r in &roots {
        if !r.is_finite() || eval(r).abs() > bound {
            return Err(Error::numerical(format!(
                "cubic: root polishing failed at r = {r} (residual {})",
                eval(r)
            )));
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    let mut out: Vec<T> = Vec::with_capacity(roots.len());
    for r in roots {
        match out.last() {
            Some(&prev) if (r - prev).abs() <= T::c(1e-8) * r.abs().max(T::one()) => {
                // Keep the better-polished representative of the cluster.
                if eval(r).abs() < eval(prev).abs() {
                    *out.last_mut().expect("nonempty") = r;
                }
            }
            _ => out.push(r),
        }
    }
    Ok(out)
}

#[inline]
fn three_a<T: Real>(a: T) -> T {
    a + a + a
}

fn quadratic_roots<T: Real>(b: T, c: T, d: T) -> Vec<T> {
    let four = T::c(4.0);
    let disc = c * c - four * b * d;
    if disc < T::zero() {
        return Vec::new();
    }
    let half = T::c(0.5);
    if disc == T::zero() {
        return vec![-c * half / b];
    }
    let s = disc.sqrt();
    // Cancellation-free split: the large-magnitude root first, the other
    // from the product of roots.
    let qq = -(c + c.signum() * s) * half;
    if qq == T::zero() {
        vec![T::zero(), -c / b]
    } else {
        vec![qq / b, d / qq]
    }
}

fn cubic_roots_raw<T: Real>(a: T, b: T, c: T, d: T) -> Vec<T> {
    let bn = b / a;
    let cn = c / a;
    let dn = d / a;
    let third = T::one() / T::c(3.0);
    let shift = bn * third;
    // Depressed form t^3 + p t + q with r = t - b/(3a).
    let p = cn - bn * bn * third;
    let q = (T::c(2.0) * bn * bn * bn / T::c(27.0)) - bn * cn * third + dn;
    let disc = -(T::c(4.0) * p * p * p) - T::c(27.0) * q * q;
    let mut ts = Vec::with_capacity(3);
    if disc > T::zero() {
        // Three distinct real roots: trigonometric form.
        let mag = T::c(2.0) * (-p * third).sqrt();
        let arg = (three_a(q) / (p * mag)).max(-T::one()).min(T::one());
        let phi = arg.acos() * third;
        let two_pi_third = T::c(2.0 * std::f64::consts::PI / 3.0);
        for k in 0..3 {
            ts.push(mag * (phi - two_pi_third * T::c(k as f64)).cos());
        }
    } else if disc == T::zero() {
        if p == T::zero() {
            ts.push(T::zero());
        } else {
            // A simple root and a double root.
            ts.push(three_a(q) / p);
            ts.push(-three_a(q) / (p + p));
        }
    } else {
        // One real root: Cardano.
        let half = T::c(0.5);
        let s = (q * q * T::c(0.25) + p * p * p / T::c(27.0)).sqrt();
        let u = (-q * half + s).cbrt();
        let v = (-q * half - s).cbrt();
        ts.push(u + v);
    }
    ts.into_iter().map(|t| t - shift).collect()
}

fn interior_result<T: Real>(
    r_star: T,
    witness: Witness<T>,
    ambiguous: bool,
    notice: Option<String>,
) -> EquilibriumResult<T> {
    EquilibriumResult {
        kind: Kind::InteriorEss,
        state: Some(
            PopulationState::new(vec![r_star, T::one() - r_star])
                .expect("interior root lies on the simplex"),
        ),
        manifold_constraint: None,
        stability: Stability::AsymptoticallyStable,
        witness,
        ambiguous,
        notice,
    }
}

fn two_pool_vertex<T: Real>(
    pool: usize,
    case: u8,
    conditions: Vec<ConditionValue<T>>,
    ambiguous: bool,
    notice: Option<String>,
) -> EquilibriumResult<T> {
    EquilibriumResult {
        kind: Kind::VertexEss,
        state: Some(vertex_state(2, pool)),
        manifold_constraint: None,
        stability: Stability::AsymptoticallyStable,
        witness: Witness {
            theorem: Some(3),
            case: Some(case),
            conditions,
            roots: Vec::new(),
        },
        ambiguous,
        notice,
    }
}

/// Classifies a two-pool market with `omega1 > omega2`.
///
/// First the two capture conditions are checked: a large enough reward
/// hands the whole population to pool 1 (`pN omega1 < R + Rq omega2 /
/// (omega1-omega2)`), a small enough one to pool 2 (`pN omega2 > R - Rq
/// omega1 / (omega1-omega2)`). If neither holds, the interior cubic is
/// solved and its stable roots in (0,1) returned.
///
/// Both capture conditions can hold at once for long delays: both
/// vertices are then stable and the results are marked ambiguous rather
/// than rejected.
pub fn two_pool_ess<T: Real>(
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
) -> Result<Vec<EquilibriumResult<T>>> {
    let (w1, w2) = two_pool_check(m)?;
    let n = m.miner_count();
    let pc = m.hash_cost();
    let r = p.reward;
    let delta = w1 - w2;
    let q = -((-p.lambda_tau()).exp_m1()) * (T::one() - p.theta);

    let rhs1 = r + r * q * w2 / delta;
    let lhs1 = pc * n * w1;
    let cond1 = lhs1 < rhs1;
    let rhs2 = r - r * q * w1 / delta;
    let lhs2 = pc * n * w2;
    let cond2 = lhs2 > rhs2;
    let conditions = vec![
        condition("capture_by_pool_1", lhs1, rhs1, cond1),
        condition("capture_by_pool_2", lhs2, rhs2, cond2),
    ];

    match (cond1, cond2) {
        (true, true) => {
            let notice = Some(
                "both capture conditions hold: the game is bistable and the realized \
                 vertex depends on the start"
                    .to_string(),
            );
            Ok(vec![
                two_pool_vertex(0, 1, conditions.clone(), true, notice.clone()),
                two_pool_vertex(1, 2, conditions, true, notice),
            ])
        }
        (true, false) => Ok(vec![two_pool_vertex(0, 1, conditions, false, None)]),
        (false, true) => Ok(vec![two_pool_vertex(1, 2, conditions, false, None)]),
        (false, false) => {
            let (a, b, c, d) = two_pool_cubic_coefficients(m, p)?;
            let roots = cubic_real_roots(a, b, c, d)?;
            let maxc = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
            let btol = T::c(BOUNDARY_TOL);
            let slope_up =
                |r: T| (three_a(a) * r + b + b) * r + c > T::zero();
            let infos: Vec<RootInfo<T>> = roots
                .iter()
                .map(|&root| RootInfo {
                    r: root,
                    residual: ((a * root + b) * root + c) * root + d,
                    stable: root > btol && root < T::one() - btol && slope_up(root),
                })
                .collect();
            let stable: Vec<T> = infos.iter().filter(|i| i.stable).map(|i| i.r).collect();
            if stable.is_empty() {
                // A stable root sitting numerically on the boundary is a
                // vertex in disguise.
                for &root in &roots {
                    if (root - T::one()).abs() <= btol && slope_up(root) {
                        return Ok(vec![two_pool_vertex(
                            0,
                            1,
                            conditions,
                            false,
                            Some("interior root degenerated to the pool-1 vertex".to_string()),
                        )]);
                    }
                    if root.abs() <= btol && slope_up(root) {
                        return Ok(vec![two_pool_vertex(
                            1,
                            2,
                            conditions,
                            false,
                            Some("interior root degenerated to the pool-2 vertex".to_string()),
                        )]);
                    }
                }
                return Err(Error::numerical(format!(
                    "two-pool classifier: no stable equilibrium in the unit interval \
                     (coefficient scale {maxc})"
                )));
            }
            let ambiguous = stable.len() > 1;
            let notice = if ambiguous {
                Some("several stable interior equilibria coexist".to_string())
            } else {
                None
            };
            Ok(stable
                .iter()
                .map(|&r_star| {
                    interior_result(
                        r_star,
                        Witness {
                            theorem: Some(3),
                            case: Some(3),
                            conditions: conditions.clone(),
                            roots: infos.clone(),
                        },
                        ambiguous,
                        notice.clone(),
                    )
                })
                .collect())
        }
    }
}

/// Two-pool classification in the full-compensation limit: stale blocks
/// earn the full reward, the delay terms cancel, and the equilibrium has
/// the closed form `r* = (R - pN omega2) / (pN (omega1 - omega2))`,
/// clipped to the vertices when the reward leaves the miner-cost bracket
/// (boundaries inclusive).
pub fn two_pool_ess_limit<T: Real>(
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
) -> Result<EquilibriumResult<T>> {
    let (w1, w2) = two_pool_check(m)?;
    let n = m.miner_count();
    let pc = m.hash_cost();
    let r = p.reward;
    let cond1 = r >= pc * n * w1;
    let cond2 = r <= pc * n * w2;
    let conditions = vec![
        condition("reward_covers_pool_1_cost", r, pc * n * w1, cond1),
        condition("reward_below_pool_2_cost", r, pc * n * w2, cond2),
    ];
    let witness = |case: u8, roots: Vec<RootInfo<T>>| Witness {
        theorem: Some(4),
        case: Some(case),
        conditions: conditions.clone(),
        roots,
    };
    if cond1 {
        return Ok(EquilibriumResult {
            kind: Kind::VertexEss,
            state: Some(vertex_state(2, 0)),
            manifold_constraint: None,
            stability: Stability::AsymptoticallyStable,
            witness: witness(1, Vec::new()),
            ambiguous: false,
            notice: None,
        });
    }
    if cond2 {
        return Ok(EquilibriumResult {
            kind: Kind::VertexEss,
            state: Some(vertex_state(2, 1)),
            manifold_constraint: None,
            stability: Stability::AsymptoticallyStable,
            witness: witness(2, Vec::new()),
            ambiguous: false,
            notice: None,
        });
    }
    let r_star = (r - w2 * pc * n) / (pc * n * (w1 - w2));
    Ok(interior_result(
        r_star,
        witness(3, vec![RootInfo { r: r_star, residual: T::zero(), stable: true }]),
        false,
        None,
    ))
}

/// Classifies a market with strictly decreasing specs in a penalty-free
/// regime (`tau = 0` or `theta = 1`). Rewards above the top spec's miner
/// cost hand everything to pool 1; rewards below the bottom spec's cost
/// to pool M. In between, every population with
/// `sum(r_i omega_i) = R/(pN)` is an equilibrium and the set is neutrally
/// stable: transversally attracting, neutral along itself.
pub fn multi_pool_nss<T: Real>(
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
) -> Result<EquilibriumResult<T>> {
    if !specs_strictly_decreasing(m.omega()) {
        return Err(Error::domain(
            "ordered classifier: pool specs must be strictly decreasing; merge equal-spec pools",
        ));
    }
    if !penalty_free(p) {
        return Err(Error::domain(
            "ordered classifier: needs tau = 0 or theta = 1; no closed form otherwise",
        ));
    }
    let mm = m.len();
    let n = m.miner_count();
    let pc = m.hash_cost();
    let r = p.reward;
    let w1 = m.omega()[0];
    let wm = m.omega()[mm - 1];
    let cond1 = r >= pc * n * w1;
    let cond2 = r <= pc * n * wm;
    let conditions = vec![
        condition("reward_covers_top_spec_cost", r, pc * n * w1, cond1),
        condition("reward_below_bottom_spec_cost", r, pc * n * wm, cond2),
    ];
    if cond1 {
        return Ok(EquilibriumResult {
            kind: Kind::VertexEss,
            state: Some(vertex_state(mm, 0)),
            manifold_constraint: None,
            stability: Stability::AsymptoticallyStable,
            witness: Witness { theorem: Some(5), case: Some(1), conditions, roots: Vec::new() },
            ambiguous: false,
            notice: None,
        });
    }
    if cond2 {
        return Ok(EquilibriumResult {
            kind: Kind::VertexEss,
            state: Some(vertex_state(mm, mm - 1)),
            manifold_constraint: None,
            stability: Stability::AsymptoticallyStable,
            witness: Witness { theorem: Some(5), case: Some(2), conditions, roots: Vec::new() },
            ambiguous: false,
            notice: None,
        });
    }
    let k = r / (pc * n);
    Ok(EquilibriumResult {
        kind: Kind::NssManifold,
        state: None,
        manifold_constraint: Some(k),
        stability: Stability::LyapunovStable,
        witness: Witness { theorem: Some(5), case: Some(3), conditions, roots: Vec::new() },
        ambiguous: false,
        notice: Some(
            "every population with the given spec-weighted sum is an equilibrium; \
             the set attracts transversally"
                .to_string(),
        ),
    })
}

/// Balance constant `R/(pN)` of the penalty-free regime.
pub fn balance_constant<T: Real>(m: &PoolMarket<T>, p: &NetworkParams<T>) -> T {
    p.reward / (m.hash_cost() * m.miner_count())
}

/// Closed-form leading principal minors `D_1..D_{M-1}` of the reduced
/// stability matrix at a state on the balanced hyperplane:
/// `D_k = (-1)^k (Np^2/R)^k (prod_{i<=k} omega_i r_i (omega_i - omega_M))
/// (1 - (R/(Np)) sum_{i<=k} 1/omega_i)`, with pools ordered by decreasing
/// spec. `negative_definite` reports whether the signs alternate strictly
/// starting negative.
pub fn jacobian_minors<T: Real>(
    r: &PopulationState<T>,
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
) -> Result<MinorReport<T>> {
    let mm = m.len();
    if r.len() != mm {
        return Err(Error::domain(format!(
            "minors: dimension mismatch, market has {mm} pools but state has {}",
            r.len()
        )));
    }
    if mm < 2 {
        return Err(Error::domain("minors: need at least two pools"));
    }
    if !penalty_free(p) {
        return Err(Error::domain("minors: closed form needs tau = 0 or theta = 1"));
    }
    let k_const = balance_constant(m, p);
    let weighted: T = m
        .omega()
        .iter()
        .zip(r.as_slice())
        .fold(T::zero(), |acc, (&w, &ri)| acc + w * ri);
    // ODE terminals approach the hyperplane to roughly eps/rate, so the
    // gate scales with the constraint instead of demanding exactness.
    if (weighted - k_const).abs() > T::c(1e-6) * k_const.abs().max(T::one()) {
        return Err(Error::domain(format!(
            "minors: state is off the balanced hyperplane \
             (spec-weighted sum {weighted}, expected {k_const})"
        )));
    }
    let n = m.miner_count();
    let pc = m.hash_cost();
    let rw = p.reward;
    let scale = n * pc * pc / rw;
    let w_last = m.omega()[mm - 1];
    let mut minors = Vec::with_capacity(mm - 1);
    let mut prod = T::one();
    let mut scale_pow = T::one();
    let mut inv_sum = T::zero();
    let mut negative_definite = true;
    for k in 1..mm {
        let i = k - 1;
        let wi = m.omega()[i];
        let ri = r.get(i).expect("length checked");
        prod = prod * wi * ri * (wi - w_last);
        scale_pow = scale_pow * scale;
        inv_sum = inv_sum + T::one() / wi;
        let unsigned = scale_pow * prod * (T::one() - k_const * inv_sum);
        let dk = if k % 2 == 1 { -unsigned } else { unsigned };
        let sign_ok = if k % 2 == 1 { dk < T::zero() } else { dk > T::zero() };
        negative_definite &= sign_ok;
        minors.push(dk);
    }
    Ok(MinorReport { minors, negative_definite })
}

/// Jacobian of the replicator velocity in reduced coordinates (the last
/// share eliminated through the simplex constraint), by central
/// differences with stencil `h` along the directions `e_j - e_M`.
pub fn numeric_reduced_jacobian<T: Real>(
    r: &PopulationState<T>,
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
    mode: Mode,
    h: T,
) -> Result<Vec<Vec<T>>> {
    let mm = m.len();
    if r.len() != mm {
        return Err(Error::domain(format!(
            "jacobian: dimension mismatch, market has {mm} pools but state has {}",
            r.len()
        )));
    }
    if mm < 2 {
        return Err(Error::domain("jacobian: need at least two pools"));
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::domain(format!("jacobian: stencil must be positive, got {h}")));
    }
    let base = r.as_slice();
    let last = mm - 1;
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(last);
    for j in 0..last {
        let mut plus = base.to_vec();
        let mut minus = base.to_vec();
        plus[j] = plus[j] + h;
        plus[last] = plus[last] - h;
        minus[j] = minus[j] - h;
        minus[last] = minus[last] + h;
        let fp = evolution::rhs_slice(&plus, m, p, mode);
        let fm = evolution::rhs_slice(&minus, m, p, mode);
        let col: Vec<T> = (0..last).map(|i| (fp[i] - fm[i]) / (h + h)).collect();
        cols.push(col);
    }
    Ok((0..last)
        .map(|i| (0..last).map(|j| cols[j][i]).collect())
        .collect())
}

fn det<T: Real>(mat: &[Vec<T>], k: usize) -> T {
    // Gaussian elimination with partial pivoting on the leading k x k
    // block.
    let mut a: Vec<Vec<T>> = mat[..k].iter().map(|row| row[..k].to_vec()).collect();
    let mut sign = T::one();
    for col in 0..k {
        let mut pivot = col;
        for row in col + 1..k {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col] == T::zero() {
            return T::zero();
        }
        if pivot != col {
            a.swap(pivot, col);
            sign = -sign;
        }
        for row in col + 1..k {
            let factor = a[row][col] / a[col][col];
            for c in col..k {
                let upd = a[col][c];
                a[row][c] = a[row][c] - factor * upd;
            }
        }
    }
    let mut d = sign;
    for (i, row) in a.iter().enumerate() {
        d = d * row[i];
    }
    d
}

/// Leading principal minors (orders 1..n) of a square matrix.
pub fn leading_principal_minors<T: Real>(mat: &[Vec<T>]) -> Result<Vec<T>> {
    let n = mat.len();
    if n == 0 || mat.iter().any(|row| row.len() != n) {
        return Err(Error::domain("minors: matrix must be square and nonempty"));
    }
    Ok((1..=n).map(|k| det(mat, k)).collect())
}

/// Default perturbation sizes for [`invasion_test`].
pub fn default_epsilons<T: Real>() -> Vec<T> {
    [0.005, 0.01, 0.05, 0.1, 0.25].iter().map(|&e| T::c(e)).collect()
}

/// Deterministic default invader grid: all vertices, the uniform state,
/// and uniformly distributed simplex points (fixed seed) up to 200 total.
pub fn default_invaders<T: Real>(m: usize) -> Result<Vec<PopulationState<T>>> {
    if m == 0 {
        return Err(Error::domain("invaders: need at least one pool"));
    }
    let mut out = Vec::new();
    for i in 0..m {
        out.push(vertex_state(m, i));
    }
    out.push(PopulationState::uniform(m)?);
    let mut rng = ChaCha12Rng::seed_from_u64(INVADER_SEED);
    while out.len() < 200 {
        out.push(random_simplex_point(m, &mut rng)?);
    }
    Ok(out)
}

fn random_simplex_point<T: Real>(m: usize, rng: &mut ChaCha12Rng) -> Result<PopulationState<T>> {
    // Normalized unit exponentials: uniform on the simplex. Draws stay in
    // f64 so the stream is identical for every scalar type.
    let mut g = vec![0.0f64; m];
    let mut total = 0.0;
    for v in &mut g {
        let u: f64 = rng.random();
        *v = -(1.0 - u).ln();
        total += *v;
    }
    if total <= 0.0 {
        // All draws zero has probability zero but a safe fallback is free.
        return PopulationState::uniform(m);
    }
    PopulationState::new(g.iter().map(|&v| T::c(v / total)).collect())
}

/// States on the hyperplane `sum(r_i omega_i) = constraint`: every
/// two-pool mix that meets the constraint, plus random convex
/// combinations of those (convexity keeps the constraint exact), `count`
/// states in total when reachable.
pub fn manifold_states<T: Real>(
    m: &PoolMarket<T>,
    constraint: T,
    count: usize,
    seed: u64,
) -> Result<Vec<PopulationState<T>>> {
    let mm = m.len();
    let mut bases: Vec<Vec<T>> = Vec::new();
    for i in 0..mm {
        for j in 0..mm {
            if i == j {
                continue;
            }
            let wi = m.omega()[i];
            let wj = m.omega()[j];
            if wi == wj {
                continue;
            }
            let t = (constraint - wj) / (wi - wj);
            if t >= T::zero() && t <= T::one() {
                let mut r = vec![T::zero(); mm];
                r[i] = t;
                r[j] = T::one() - t;
                if !bases.contains(&r) {
                    bases.push(r);
                }
            }
        }
    }
    if bases.is_empty() {
        return Err(Error::domain(format!(
            "manifold: constraint {constraint} is not reachable from these specs"
        )));
    }
    let mut out: Vec<PopulationState<T>> = bases
        .iter()
        .map(|r| PopulationState::new(r.clone()).expect("bases lie on the simplex"))
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    while out.len() < count {
        let weights = random_simplex_point::<T>(bases.len(), &mut rng)?;
        let mut r = vec![T::zero(); mm];
        for (b, &w) in bases.iter().zip(weights.as_slice()) {
            for (ri, &bi) in r.iter_mut().zip(b) {
                *ri = *ri + w * bi;
            }
        }
        out.push(PopulationState::new(r)?);
    }
    Ok(out)
}

/// Brute-forces the invasion inequality: for every perturbation size
/// `epsilon` and invader `r'`, compares the incumbent's payoff against
/// the invader's in the mixed population `(1-eps) r* + eps r'`. Strictly
/// positive margins everywhere confirm an evolutionarily stable state;
/// nonnegative margins with ties confirm neutral stability; any negative
/// margin refutes, with the violating pair as witness. Invaders within
/// L1 distance 2e-2 of `r_star` are excluded as numerically
/// indistinguishable.
pub fn invasion_test<T: Real>(
    r_star: &PopulationState<T>,
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
    mode: Mode,
    epsilons: &[T],
    invaders: &[PopulationState<T>],
) -> Result<InvasionReport<T>> {
    let mm = m.len();
    if r_star.len() != mm {
        return Err(Error::domain(format!(
            "invasion: dimension mismatch, market has {mm} pools but state has {}",
            r_star.len()
        )));
    }
    if epsilons.is_empty() {
        return Err(Error::domain("invasion: needs at least one epsilon"));
    }
    for &e in epsilons {
        if !(e > T::zero() && e < T::one()) {
            return Err(Error::domain(format!(
                "invasion: epsilon must lie strictly inside (0, 1), got {e}"
            )));
        }
    }
    let ztol = T::c(ZERO_TOL);
    let radius = T::c(EXCLUSION_RADIUS);
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    let mut ties = 0usize;
    let mut min_diff = T::infinity();
    let mut argmin: Option<(T, PopulationState<T>)> = None;
    for inv in invaders {
        if inv.len() != mm {
            return Err(Error::domain(format!(
                "invasion: invader has {} pools, expected {mm}",
                inv.len()
            )));
        }
        if r_star.l1_distance(inv) < radius {
            excluded += 1;
            continue;
        }
        for &eps in epsilons {
            let sigma: Vec<T> = r_star
                .as_slice()
                .iter()
                .zip(inv.as_slice())
                .map(|(&a, &b)| (T::one() - eps) * a + eps * b)
                .collect();
            let ys = evolution::payoffs_slice(&sigma, m, p, mode);
            let mut diff = T::zero();
            for i in 0..mm {
                diff = diff + (r_star.get(i).expect("len checked")
                    - inv.get(i).expect("len checked"))
                    * ys[i];
            }
            evaluated += 1;
            if diff.abs() <= ztol {
                ties += 1;
            }
            if diff < min_diff {
                min_diff = diff;
                argmin = Some((eps, inv.clone()));
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::domain(
            "invasion: every invader fell inside the exclusion radius",
        ));
    }
    let outcome = if min_diff < -ztol {
        InvasionOutcome::Refuted
    } else if ties > 0 {
        InvasionOutcome::NssConfirmed
    } else {
        InvasionOutcome::EssConfirmed
    };
    let witness = match outcome {
        InvasionOutcome::Refuted => {
            argmin.map(|(epsilon, invader)| InvasionWitness { epsilon, invader })
        }
        _ => None,
    };
    Ok(InvasionReport { outcome, min_diff, witness, evaluated, excluded })
}

fn descending_permutation<T: Real>(omega: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..omega.len()).collect();
    idx.sort_by(|&a, &b| omega[b].partial_cmp(&omega[a]).expect("finite specs"));
    idx
}

fn permute_state_back<T: Real>(
    state: &PopulationState<T>,
    perm: &[usize],
) -> Result<PopulationState<T>> {
    let mut r = vec![T::zero(); perm.len()];
    for (sorted_pos, &orig) in perm.iter().enumerate() {
        r[orig] = state.get(sorted_pos).expect("permutation length matches");
    }
    PopulationState::new(r)
}

fn permute_results_back<T: Real>(
    results: Vec<EquilibriumResult<T>>,
    perm: &[usize],
    reordered: bool,
) -> Result<Vec<EquilibriumResult<T>>> {
    if !reordered {
        return Ok(results);
    }
    results
        .into_iter()
        .map(|mut res| {
            if let Some(state) = &res.state {
                res.state = Some(permute_state_back(state, perm)?);
            }
            let note = "pools were reordered by decreasing spec internally; \
                        states are reported in the input order"
                .to_string();
            res.notice = Some(match res.notice.take() {
                Some(prev) => format!("{prev}; {note}"),
                None => note,
            });
            Ok(res)
        })
        .collect()
}

/// Auto-dispatching classifier: equal specs get the vertex enumeration,
/// two distinct specs the capture/cubic analysis (or its closed-form
/// limit at `theta = 1`), ordered specs in a penalty-free regime the
/// balanced-hyperplane result. Anything else is integrated from `r0`
/// (uniform when absent) and reported as a numerical result with a
/// notice. Pools are reordered by decreasing spec internally when needed;
/// reported states are always in the input order.
pub fn classify<T: Real>(
    m: &PoolMarket<T>,
    p: &NetworkParams<T>,
    mode: Mode,
    r0: Option<&PopulationState<T>>,
) -> Result<Vec<EquilibriumResult<T>>> {
    if let Some(start) = r0 {
        if start.len() != m.len() {
            return Err(Error::domain(format!(
                "classify: dimension mismatch, market has {} pools but r0 has {}",
                m.len(),
                start.len()
            )));
        }
    }
    if specs_equal(m.omega()) {
        return classify_equal_spec(m);
    }
    let perm = descending_permutation(m.omega());
    let reordered = perm.iter().enumerate().any(|(i, &v)| i != v);
    let sorted_omega: Vec<T> = perm.iter().map(|&i| m.omega()[i]).collect();
    let sorted_market = PoolMarket::new(sorted_omega.clone(), m.miner_count(), m.hash_cost())?;

    if m.len() == 2 {
        let results = if p.theta == T::one() {
            vec![two_pool_ess_limit(&sorted_market, p)?]
        } else {
            two_pool_ess(&sorted_market, p)?
        };
        return permute_results_back(results, &perm, reordered);
    }
    if specs_strictly_decreasing(&sorted_omega) && penalty_free(p) {
        let result = multi_pool_nss(&sorted_market, p)?;
        return permute_results_back(vec![result], &perm, reordered);
    }

    // No closed form: integrate the dynamics and report what it reached.
    let uniform;
    let start = match r0 {
        Some(s) => s,
        None => {
            uniform = PopulationState::uniform(m.len())?;
            &uniform
        }
    };
    let traj = integrate(
        start,
        m,
        p,
        mode,
        T::c(DEFAULT_STEP),
        T::c(DEFAULT_T_MAX),
        T::c(DEFAULT_EPS),
    )?;
    let report = invasion_test(
        &traj.terminal,
        m,
        p,
        mode,
        &default_epsilons::<T>(),
        &default_invaders::<T>(m.len())?,
    )?;
    let stability = match report.outcome {
        InvasionOutcome::EssConfirmed => Stability::AsymptoticallyStable,
        _ => Stability::LyapunovStable,
    };
    let ambiguous = !traj.converged || report.outcome == InvasionOutcome::Refuted;
    Ok(vec![EquilibriumResult {
        kind: Kind::Numerical,
        state: Some(traj.terminal),
        manifold_constraint: None,
        stability,
        witness: Witness::default(),
        ambiguous,
        notice: Some(
            "no closed-form classification for this parameter regime; the state was \
             reached by integrating the dynamics"
                .to_string(),
        ),
    }])
}
