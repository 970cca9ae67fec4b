//! Discrete-event Monte Carlo simulator of proof-of-work mining with
//! temporary forks; an independent oracle for the closed forms in
//! [`crate::fork_model`].
//!
//! Each slot produces exactly one canonical block. The slot winner is drawn
//! proportional to hash share; with probability `1 - e^(-lambda*tau)` a
//! second pool finds a competing block inside the propagation window and a
//! two-branch race decides which block survives. The race draws per-branch
//! next-block times from exponentials; a branch wins by leading the other
//! by at least `tau`, and anything closer is a tie. Forks during a race are
//! ignored (two-branch model).
//!
//! The concurrent finder is drawn proportional to hash share over all
//! pools, and a draw landing on the slot winner itself is dropped (the
//! winner mines on its own block instantly, so it never races itself).
//! This rejection step realizes both the `(1 - x_i)` factor of the fork
//! probability and the rival law `x_j / (1 - x_i)` at once.
//!
//! Randomness comes from ChaCha12, a stream cipher with a published,
//! platform-independent specification, seeded directly from the config
//! seed; exponential times use the inverse transform. Identical configs
//! therefore reproduce bit-identical reports anywhere. All draws are made
//! in `f64` regardless of the scalar type, so a config converted between
//! float widths replays the same event sequence when its parameters are
//! exactly representable in both.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::chain_data::{BlockRecord, BlockStatus, ForkRecord, ForkWinner};
use crate::error::{Error, Result};
use crate::fork_model::{HashDistribution, NetworkParams};
use crate::Real;

/// How a race ends when neither branch leads by `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Fair coin. The closed-form model treats ties this way.
    #[default]
    CoinFlip,
    /// Re-run the race with the same branch shares until someone leads by
    /// `tau`; probes the error of the coin approximation.
    RecursiveRace,
}

/// How non-combatant hash power is assigned to the two branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every non-combatant contributes exactly half its hash to each
    /// branch, the expectation used by the closed forms.
    #[default]
    DeterministicHalf,
    /// One fair Bernoulli per non-combatant pool per race.
    RandomPerPool,
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SimConfig<T: Real> {
    pub params: NetworkParams<T>,
    pub x: HashDistribution<T>,
    /// Number of canonical blocks to produce; at least 1.
    pub horizon_blocks: u64,
    pub seed: u64,
    #[serde(default)]
    pub tie_mode: TieMode,
    #[serde(default)]
    pub split_mode: SplitMode,
}

impl<T: Real> SimConfig<T> {
    /// Config with the default tie and split modes.
    pub fn new(params: NetworkParams<T>, x: HashDistribution<T>, horizon_blocks: u64, seed: u64) -> Self {
        Self {
            params,
            x,
            horizon_blocks,
            seed,
            tie_mode: TieMode::default(),
            split_mode: SplitMode::default(),
        }
    }
}

/// Per-pool counters of one run.
///
/// The serialized fields count both sides of every race: `forks_involved`
/// increments for initiator and rival alike, and `uncles` for whichever of
/// the two lost. The skipped fields single out the initiator's view, which
/// is what the closed-form per-block probabilities describe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolStats<T> {
    /// Canonical blocks owned at the end of the run.
    pub blocks_won: u64,
    /// Stale blocks left behind by lost races.
    pub uncles: u64,
    /// Races this pool fought, on either side.
    pub forks_involved: u64,
    /// Races this pool fought and lost.
    pub forks_lost: u64,
    /// `blocks_won * R + uncles * theta * R`, exactly.
    pub reward: T,
    /// Races in which this pool's own fresh block was the contested one.
    #[serde(skip)]
    pub forks_initiated: u64,
    /// Slot wins, counted before fork resolution.
    #[serde(skip)]
    pub slot_wins: u64,
    /// Slot wins that ended up stale.
    #[serde(skip)]
    pub initiator_losses: u64,
}

impl<T: Real> Default for PoolStats<T> {
    fn default() -> Self {
        Self {
            blocks_won: 0,
            uncles: 0,
            forks_involved: 0,
            forks_lost: 0,
            reward: T::zero(),
            forks_initiated: 0,
            slot_wins: 0,
            initiator_losses: 0,
        }
    }
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Default"
))]
pub struct SimReport<T> {
    pub pools: Vec<PoolStats<T>>,
    pub total_blocks: u64,
    pub fork_events: u64,
    pub seed: u64,
    /// Wall-clock seconds of the run; excluded from equality and JSON.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl<T: PartialEq> PartialEq for SimReport<T> {
    fn eq(&self, other: &Self) -> bool {
        self.pools == other.pools
            && self.total_blocks == other.total_blocks
            && self.fork_events == other.fork_events
            && self.seed == other.seed
    }
}

/// Full block-by-block history of a run, in the same record types the CSV
/// ingestion layer reads back.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLedger {
    pub blocks: Vec<BlockRecord>,
    pub forks: Vec<ForkRecord>,
}

/// Stable name of pool `i` in exported ledgers: `p1`, `p2`, ...
pub fn pool_label(i: usize) -> String {
    format!("p{}", i + 1)
}

/// Chain-level rates of one pool, from the two-sided counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalRates {
    /// `uncles / (blocks_won + uncles)`: the pool's stale share of all
    /// blocks attributed to it.
    pub uncle_rate: f64,
    /// `forks_involved / (blocks_won + uncles)`.
    pub fork_rate: f64,
    /// `forks_lost / forks_involved`: loss frequency per race fought, the
    /// empirical counterpart of the closed-form fail probability.
    pub fail_rate: f64,
}

/// Initiator-side rates of one pool, the empirical counterparts of the
/// per-fresh-block fork and uncle probabilities.
///
/// A pool's chain-level uncle share counts races started by others too, so
/// it exceeds the per-block stale probability; conditioning on the pool's
/// own slot wins recovers the quantity the closed forms predict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitiatorRates {
    /// `forks_initiated / slot_wins`, estimating the fork probability of a
    /// fresh block.
    pub fork_rate: f64,
    /// `initiator_losses / slot_wins`, estimating the uncle probability.
    pub uncle_rate: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-pool chain-level rates; every rate is 0 when its denominator is 0.
pub fn empirical_rates<T>(r: &SimReport<T>) -> Vec<EmpiricalRates> {
    r.pools
        .iter()
        .map(|p| EmpiricalRates {
            uncle_rate: ratio(p.uncles, p.blocks_won + p.uncles),
            fork_rate: ratio(p.forks_involved, p.blocks_won + p.uncles),
            fail_rate: ratio(p.forks_lost, p.forks_involved),
        })
        .collect()
}

/// Per-pool initiator-side rates; 0 when the pool never won a slot.
pub fn initiator_rates<T>(r: &SimReport<T>) -> Vec<InitiatorRates> {
    r.pools
        .iter()
        .map(|p| InitiatorRates {
            fork_rate: ratio(p.forks_initiated, p.slot_wins),
            uncle_rate: ratio(p.initiator_losses, p.slot_wins),
        })
        .collect()
}

/// Runs the simulation. Identical configs give bit-identical reports.
pub fn simulate<T: Real>(cfg: &SimConfig<T>) -> Result<SimReport<T>> {
    run(cfg, None)
}

/// Like [`simulate`], also returning the block-by-block ledger. Recording
/// consumes no randomness, so the report is bit-identical to the one
/// [`simulate`] returns for the same config.
pub fn simulate_with_ledger<T: Real>(cfg: &SimConfig<T>) -> Result<(SimReport<T>, SimLedger)> {
    let mut ledger = SimLedger::default();
    let report = run(cfg, Some(&mut ledger))?;
    Ok((report, ledger))
}

/// Index into the prefix-sum table `cum` for a uniform draw. Entries of
/// zero weight are unreachable except through the final rounding clamp,
/// which the walk-back undoes.
fn draw_categorical<R: Rng>(cum: &[f64], x: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut idx = cum.partition_point(|&c| c <= u);
    if idx >= cum.len() {
        idx = cum.len() - 1;
    }
    while idx > 0 && x[idx] == 0.0 {
        idx -= 1;
    }
    idx
}

fn exp_draw<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    // random::<f64>() is in [0, 1), so the argument of ln is in (0, 1].
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Branch hash shares `(eta1, eta2)` for rival and initiator chains.
fn branch_shares<R: Rng>(
    i: usize,
    k: usize,
    x: &[f64],
    split: SplitMode,
    rng: &mut R,
) -> (f64, f64) {
    match split {
        SplitMode::DeterministicHalf => {
            let eta2 = (1.0 + x[i] - x[k]) / 2.0;
            (1.0 - eta2, eta2)
        }
        SplitMode::RandomPerPool => {
            let mut eta2 = x[i];
            let mut eta1 = x[k];
            // Fixed iteration order keeps the draw count and stream
            // position independent of the outcomes.
            for (j, &xj) in x.iter().enumerate() {
                if j == i || j == k {
                    continue;
                }
                if rng.random::<f64>() < 0.5 {
                    eta2 += xj;
                } else {
                    eta1 += xj;
                }
            }
            let s = eta1 + eta2;
            (eta1 / s, eta2 / s)
        }
    }
}

/// A tie this improbable never happens; the cap only bounds the loop.
const MAX_RACE_ROUNDS: u32 = 10_000;

/// Returns true when the initiator's branch wins.
fn race<R: Rng>(
    eta1: f64,
    eta2: f64,
    lambda: f64,
    tau: f64,
    tie_mode: TieMode,
    rng: &mut R,
) -> bool {
    let l1 = lambda * eta1;
    let l2 = lambda * eta2;
    for _ in 0..MAX_RACE_ROUNDS {
        let t1 = exp_draw(rng, l1);
        let t2 = exp_draw(rng, l2);
        if t2 <= t1 - tau {
            return true;
        }
        if t1 <= t2 - tau {
            return false;
        }
        match tie_mode {
            TieMode::CoinFlip => return rng.random::<f64>() < 0.5,
            TieMode::RecursiveRace => continue,
        }
    }
    rng.random::<f64>() < 0.5
}

fn run<T: Real>(cfg: &SimConfig<T>, mut ledger: Option<&mut SimLedger>) -> Result<SimReport<T>> {
    if cfg.horizon_blocks == 0 {
        return Err(Error::domain("simulate: horizon_blocks must be at least 1"));
    }
    let start = Instant::now();
    let m = cfg.x.len();
    let x: Vec<f64> = cfg.x.as_slice().iter().map(|v| v.as_f64()).collect();
    let mut cum = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &v in &x {
        acc += v;
        cum.push(acc);
    }
    let lambda = cfg.params.lambda.as_f64();
    let tau = cfg.params.tau.as_f64();
    let p_delta = -(-lambda * tau).exp_m1();

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut pools = vec![PoolStats::<T>::default(); m];
    let mut fork_events = 0u64;

    for height in 1..=cfg.horizon_blocks {
        let i = draw_categorical(&cum, &x, &mut rng);
        pools[i].slot_wins += 1;
        let mut canonical = i;
        let mut contest: Option<(usize, bool)> = None;
        if m > 1 && p_delta > 0.0 && rng.random::<f64>() < p_delta {
            let k = draw_categorical(&cum, &x, &mut rng);
            if k != i {
                let (eta1, eta2) = branch_shares(i, k, &x, cfg.split_mode, &mut rng);
                let initiator_won = race(eta1, eta2, lambda, tau, cfg.tie_mode, &mut rng);
                fork_events += 1;
                pools[i].forks_initiated += 1;
                pools[i].forks_involved += 1;
                pools[k].forks_involved += 1;
                let loser = if initiator_won { k } else { i };
                pools[loser].forks_lost += 1;
                pools[loser].uncles += 1;
                if !initiator_won {
                    pools[i].initiator_losses += 1;
                    canonical = k;
                }
                contest = Some((k, initiator_won));
            }
        }
        pools[canonical].blocks_won += 1;
        if let Some(led) = ledger.as_deref_mut() {
            led.blocks.push(BlockRecord {
                height,
                miner: pool_label(canonical),
                status: BlockStatus::Canonical,
            });
            if let Some((k, initiator_won)) = contest {
                let loser = if initiator_won { k } else { i };
                led.blocks.push(BlockRecord {
                    height,
                    miner: pool_label(loser),
                    status: BlockStatus::Uncle,
                });
                led.forks.push(ForkRecord {
                    height,
                    miner_a: pool_label(i),
                    miner_b: pool_label(k),
                    winner: if initiator_won { ForkWinner::A } else { ForkWinner::B },
                    branches: 2,
                });
            }
        }
    }

    let stale_reward = cfg.params.theta * cfg.params.reward;
    for p in &mut pools {
        p.reward = T::c(p.blocks_won as f64) * cfg.params.reward + T::c(p.uncles as f64) * stale_reward;
    }

    Ok(SimReport {
        pools,
        total_blocks: cfg.horizon_blocks,
        fork_events,
        seed: cfg.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fork_model::{self, Mode};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cfg(x: Vec<f64>, lambda_tau: f64, theta: f64, horizon: u64, seed: u64) -> SimConfig<f64> {
        let params = NetworkParams::new(1.0, lambda_tau, 100.0, theta).unwrap();
        SimConfig::new(params, HashDistribution::new(x).unwrap(), horizon, seed)
    }

    /// lambda*tau making the window probability exactly 0.2.
    fn lt_point_two() -> f64 {
        1.25f64.ln()
    }

    fn binom_3se(p: f64, n: u64) -> f64 {
        3.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn monopoly_has_no_forks() {
        let report = simulate(&cfg(vec![1.0], 5.0, 0.5, 1000, 1)).unwrap();
        assert_eq!(report.fork_events, 0);
        assert_eq!(report.total_blocks, 1000);
        assert_eq!(report.pools[0].blocks_won, 1000);
        assert_eq!(report.pools[0].uncles, 0);
        assert_eq!(report.pools[0].reward, 1000.0 * 100.0);
        let rates = empirical_rates(&report);
        assert_eq!(
            (rates[0].uncle_rate, rates[0].fork_rate, rates[0].fail_rate),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn same_seed_reproduces_report_and_ledger() {
        let c = cfg(vec![0.3, 0.7], 1.0, 0.4, 5000, 99);
        let (r1, l1) = simulate_with_ledger(&c).unwrap();
        let (r2, l2) = simulate_with_ledger(&c).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(l1, l2);
        let plain = simulate(&c).unwrap();
        assert_eq!(plain, r1);
    }

    #[test]
    fn ledger_is_consistent_with_report() {
        let c = cfg(vec![0.2, 0.3, 0.5], 1.0, 0.5, 20_000, 7);
        let (report, ledger) = simulate_with_ledger(&c).unwrap();
        let canon = ledger.blocks.iter().filter(|b| b.status == BlockStatus::Canonical).count();
        let uncles = ledger.blocks.iter().filter(|b| b.status == BlockStatus::Uncle).count();
        assert_eq!(canon as u64, report.total_blocks);
        assert_eq!(uncles as u64, report.fork_events);
        assert_eq!(ledger.forks.len() as u64, report.fork_events);
        for (i, p) in report.pools.iter().enumerate() {
            let name = pool_label(i);
            let won = ledger
                .blocks
                .iter()
                .filter(|b| b.miner == name && b.status == BlockStatus::Canonical)
                .count();
            let stale = ledger
                .blocks
                .iter()
                .filter(|b| b.miner == name && b.status == BlockStatus::Uncle)
                .count();
            assert_eq!(won as u64, p.blocks_won);
            assert_eq!(stale as u64, p.uncles);
        }
        for f in &ledger.forks {
            let winner = match f.winner {
                ForkWinner::A => &f.miner_a,
                ForkWinner::B => &f.miner_b,
            };
            let canonical = ledger
                .blocks
                .iter()
                .find(|b| b.height == f.height && b.status == BlockStatus::Canonical)
                .unwrap();
            assert_eq!(&canonical.miner, winner);
            assert_eq!(f.branches, 2);
        }
    }

    #[test]
    fn conservation_and_reward_identity() {
        let c = cfg(vec![0.2, 0.3, 0.5], 1.0, 0.7, 20_000, 3);
        let report = simulate(&c).unwrap();
        assert_eq!(report.pools.iter().map(|p| p.blocks_won).sum::<u64>(), 20_000);
        assert_eq!(report.pools.iter().map(|p| p.uncles).sum::<u64>(), report.fork_events);
        assert_eq!(
            report.pools.iter().map(|p| p.forks_initiated).sum::<u64>(),
            report.fork_events
        );
        assert!(report.fork_events <= report.total_blocks);
        for p in &report.pools {
            assert!(p.forks_lost <= p.forks_involved);
            assert!(p.forks_initiated <= p.slot_wins);
            assert!(p.initiator_losses <= p.forks_initiated);
            let expected = p.blocks_won as f64 * 100.0 + p.uncles as f64 * (0.7 * 100.0);
            assert_eq!(p.reward, expected);
        }
    }

    #[test]
    fn symmetric_uncle_rate_matches_closed_form() {
        // Window probability 0.2; each pool's per-block stale probability
        // is 0.1 * 0.5 = 0.05.
        let report = simulate(&cfg(vec![0.5, 0.5], lt_point_two(), 0.0, 1_000_000, 42)).unwrap();
        let rates = initiator_rates(&report);
        for (p, r) in report.pools.iter().zip(&rates) {
            let tol = binom_3se(0.05, p.slot_wins);
            assert!(
                (r.uncle_rate - 0.05).abs() < tol,
                "uncle rate {} vs 0.05 (tol {tol})",
                r.uncle_rate
            );
        }
    }

    #[test]
    fn fail_rate_matches_exact_probability() {
        let x = vec![0.33, 0.67];
        let report = simulate(&cfg(x.clone(), 0.2, 0.0, 400_000, 11)).unwrap();
        let rates = empirical_rates(&report);
        let xs = HashDistribution::new(x).unwrap();
        let p = NetworkParams::new(1.0, 0.2, 100.0, 0.0).unwrap();
        for i in 0..2 {
            let want = fork_model::prob_fail(i, &xs, &p, Mode::Exact).unwrap();
            let tol = binom_3se(want, report.pools[i].forks_involved);
            assert!(
                (rates[i].fail_rate - want).abs() < tol,
                "pool {i}: fail rate {} vs {want} (tol {tol})",
                rates[i].fail_rate
            );
        }
    }

    #[test]
    fn initiator_fork_rate_matches_closed_form() {
        let x = vec![0.7, 0.3];
        let report = simulate(&cfg(x.clone(), 1.0, 0.0, 400_000, 5)).unwrap();
        let rates = initiator_rates(&report);
        let xs = HashDistribution::new(x).unwrap();
        let p = NetworkParams::new(1.0, 1.0, 100.0, 0.0).unwrap();
        for i in 0..2 {
            let want = fork_model::prob_fork_after(i, &xs, &p).unwrap();
            let tol = binom_3se(want, report.pools[i].slot_wins);
            assert!(
                (rates[i].fork_rate - want).abs() < tol,
                "pool {i}: fork rate {} vs {want} (tol {tol})",
                rates[i].fork_rate
            );
        }
    }

    #[test]
    fn tie_modes_agree_at_the_symmetric_point() {
        let mut coin = cfg(vec![0.5, 0.5], 0.5, 0.0, 200_000, 13);
        let mut race = coin.clone();
        coin.tie_mode = TieMode::CoinFlip;
        race.tie_mode = TieMode::RecursiveRace;
        let rc = empirical_rates(&simulate(&coin).unwrap());
        let rr = empirical_rates(&simulate(&race).unwrap());
        let n = simulate(&coin).unwrap().pools[0].forks_involved;
        let tol = 3.0 * (2.0 * 0.25 / n as f64).sqrt();
        for i in 0..2 {
            assert!(
                (rc[i].fail_rate - rr[i].fail_rate).abs() < tol,
                "pool {i}: {} vs {} (tol {tol})",
                rc[i].fail_rate,
                rr[i].fail_rate
            );
        }
    }

    #[test]
    fn zero_delay_never_forks_and_tracks_hash_share() {
        let report = simulate(&cfg(vec![0.3, 0.7], 0.0, 0.0, 100_000, 2)).unwrap();
        assert_eq!(report.fork_events, 0);
        for (i, want) in [0.3, 0.7].iter().enumerate() {
            let share = report.pools[i].blocks_won as f64 / report.total_blocks as f64;
            assert!((share - want).abs() < binom_3se(*want, report.total_blocks));
        }
    }

    #[test]
    fn symmetric_win_share_is_preserved_under_forks() {
        let report = simulate(&cfg(vec![0.5, 0.5], 1.0, 0.0, 200_000, 17)).unwrap();
        let share = report.pools[0].blocks_won as f64 / report.total_blocks as f64;
        assert!((share - 0.5).abs() < binom_3se(0.5, report.total_blocks));
    }

    #[test]
    fn forks_shift_canonical_share_toward_the_large_pool() {
        // Per slot, pool i ends canonical with probability
        // x_i*(1 + P_fork_i - 2*P_uncle_i): above x_i for the large pool,
        // below for the small one.
        let x = vec![0.7, 0.3];
        let report = simulate(&cfg(x.clone(), 1.0, 0.0, 400_000, 23)).unwrap();
        let xs = HashDistribution::new(x.clone()).unwrap();
        let p = NetworkParams::new(1.0, 1.0, 100.0, 0.0).unwrap();
        for i in 0..2 {
            let pf = fork_model::prob_fork_after(i, &xs, &p).unwrap();
            let pu = fork_model::prob_uncle(i, &xs, &p, Mode::Exact).unwrap();
            let want = x[i] * (1.0 + pf - 2.0 * pu);
            let share = report.pools[i].blocks_won as f64 / report.total_blocks as f64;
            assert!(
                (share - want).abs() < binom_3se(want, report.total_blocks),
                "pool {i}: share {share} vs {want}"
            );
        }
        let big = report.pools[0].blocks_won as f64 / report.total_blocks as f64;
        assert!(big > 0.7, "large pool share {big} did not exceed its hash share");
    }

    #[test]
    fn hand_counted_rates() {
        let mk = |blocks_won, uncles, forks_involved, forks_lost| PoolStats::<f64> {
            blocks_won,
            uncles,
            forks_involved,
            forks_lost,
            ..PoolStats::default()
        };
        let report = SimReport {
            pools: vec![mk(3, 1, 2, 1), mk(5, 0, 0, 0)],
            total_blocks: 8,
            fork_events: 1,
            seed: 0,
            wall_time_secs: 0.0,
        };
        let rates = empirical_rates(&report);
        assert_eq!(
            (rates[0].uncle_rate, rates[0].fork_rate, rates[0].fail_rate),
            (0.25, 0.5, 0.5)
        );
        assert_eq!(
            (rates[1].uncle_rate, rates[1].fork_rate, rates[1].fail_rate),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn symmetric_pools_report_matching_rates() {
        let report = simulate(&cfg(vec![0.5, 0.5], lt_point_two(), 0.0, 200_000, 29)).unwrap();
        let rates = empirical_rates(&report);
        let n = (report.pools[0].blocks_won + report.pools[0].uncles).min(
            report.pools[1].blocks_won + report.pools[1].uncles,
        );
        for (a, b, p) in [
            (rates[0].uncle_rate, rates[1].uncle_rate, rates[0].uncle_rate),
            (rates[0].fork_rate, rates[1].fork_rate, rates[0].fork_rate),
            (rates[0].fail_rate, rates[1].fail_rate, 0.5),
        ] {
            let tol = 3.0 * (2.0 * p.max(0.05) * (1.0 - p.max(0.05)).max(0.1) / n as f64).sqrt();
            assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
        }
    }

    #[test]
    fn uncle_rate_rises_as_pool_size_falls() {
        // Top-heavy market: five named pools and a tail of 100 small ones.
        let mut x = vec![0.33, 0.21, 0.11, 0.08, 0.04];
        x.extend(std::iter::repeat(0.0023).take(100));
        let c = cfg(x, lt_point_two(), 0.0, 150_000, 31);
        let report = simulate(&c).unwrap();
        // Aggregate the tail into one class so its estimate is tight.
        let mut class_rates = Vec::new();
        for cls in [vec![0], vec![1], vec![2], vec![3], vec![4], (5..105).collect::<Vec<_>>()] {
            let losses: u64 = cls.iter().map(|&i| report.pools[i].initiator_losses).sum();
            let wins: u64 = cls.iter().map(|&i| report.pools[i].slot_wins).sum();
            class_rates.push((ratio(losses, wins), wins));
        }
        for w in class_rates.windows(2) {
            let ((a, na), (b, nb)) = (w[0], w[1]);
            let slack = binom_3se(a.max(0.01), na.min(nb));
            assert!(a <= b + slack, "rate {a} (n={na}) not below {b} (n={nb})");
        }
        let first = class_rates.first().unwrap().0;
        let last = class_rates.last().unwrap().0;
        assert!(first < last, "largest pool rate {first} not below tail rate {last}");
    }

    #[test]
    fn report_wire_schema_is_pinned() {
        let report = simulate(&cfg(vec![0.5, 0.5], 0.5, 0.5, 100, 1)).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        let top: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            top,
            ["pools", "total_blocks", "fork_events", "seed"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
        let pool: BTreeSet<_> = v["pools"][0].as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            pool,
            ["blocks_won", "uncles", "forks_involved", "forks_lost", "reward"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut c = cfg(vec![0.4, 0.6], 0.3, 0.9, 500, 77);
        c.tie_mode = TieMode::RecursiveRace;
        c.split_mode = SplitMode::RandomPerPool;
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("recursive_race") && json.contains("random_per_pool"));
        let back: SimConfig<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn float_width_does_not_change_the_event_stream() {
        // All parameters exactly representable in f32, so both widths
        // present identical f64 values to the draw layer.
        let p64 = NetworkParams::new(0.25f64, 1.0, 64.0, 0.5).unwrap();
        let p32 = NetworkParams::new(0.25f32, 1.0, 64.0, 0.5).unwrap();
        let c64 = SimConfig::new(p64, HashDistribution::new(vec![0.5f64, 0.5]).unwrap(), 20_000, 8);
        let c32 = SimConfig::new(p32, HashDistribution::new(vec![0.5f32, 0.5]).unwrap(), 20_000, 8);
        let r64 = simulate(&c64).unwrap();
        let r32 = simulate(&c32).unwrap();
        for (a, b) in r64.pools.iter().zip(&r32.pools) {
            assert_eq!(a.blocks_won, b.blocks_won);
            assert_eq!(a.uncles, b.uncles);
            assert_eq!(a.forks_involved, b.forks_involved);
        }
        assert_eq!(r64.fork_events, r32.fork_events);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let c = cfg(vec![1.0], 0.5, 0.0, 1, 1);
        let bad = SimConfig { horizon_blocks: 0, ..c };
        assert!(simulate(&bad).is_err());
    }

    proptest! {
        #[test]
        fn prop_conservation_holds(
            raw in proptest::collection::vec(0.05f64..1.0, 2..5),
            lt in 0.0f64..2.0,
            theta in 0.0f64..1.0,
            horizon in 1u64..150,
            seed in any::<u64>(),
            tie in prop_oneof![Just(TieMode::CoinFlip), Just(TieMode::RecursiveRace)],
            split in prop_oneof![Just(SplitMode::DeterministicHalf), Just(SplitMode::RandomPerPool)],
        ) {
            let x = HashDistribution::from_weights(&raw).unwrap();
            let params = NetworkParams::new(1.0, lt, 50.0, theta).unwrap();
            let mut c = SimConfig::new(params, x, horizon, seed);
            c.tie_mode = tie;
            c.split_mode = split;
            let (report, ledger) = simulate_with_ledger(&c).unwrap();
            prop_assert_eq!(report.total_blocks, horizon);
            prop_assert_eq!(report.pools.iter().map(|p| p.blocks_won).sum::<u64>(), horizon);
            prop_assert_eq!(report.pools.iter().map(|p| p.uncles).sum::<u64>(), report.fork_events);
            prop_assert_eq!(ledger.blocks.len() as u64, horizon + report.fork_events);
            prop_assert_eq!(ledger.forks.len() as u64, report.fork_events);
            for p in &report.pools {
                prop_assert!(p.forks_lost <= p.forks_involved);
                let expected = p.blocks_won as f64 * 50.0 + p.uncles as f64 * (theta * 50.0);
                prop_assert_eq!(p.reward, expected);
            }
            prop_assert_eq!(simulate(&c).unwrap(), report);
        }
    }
}
