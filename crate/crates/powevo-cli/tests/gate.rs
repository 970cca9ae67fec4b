//! Acceptance gate: one test per criterion, each printing a single
//! `ACCEPTANCE n PASS/FAIL` line with the measured values before
//! asserting. Criteria are evaluated at their stated tolerances; a
//! failing criterion stays a failing test.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use powevo::chain_data::{
    load_blocks, load_forks, miner_stats, top_k_gini, write_blocks_csv, write_forks_csv,
    BlockRecord, BlockStatus, DEFAULT_BIN_EDGES,
};
use powevo::equilibrium::{
    balance_constant, classify, default_epsilons, default_invaders, invasion_test,
    jacobian_minors, leading_principal_minors, manifold_states, numeric_reduced_jacobian,
    InvasionOutcome, Kind, Stability,
};
use powevo::error::Result;
use powevo::evolution::{integrate, DEFAULT_EPS, DEFAULT_STEP, DEFAULT_T_MAX};
use powevo::fork_model::{prob_fail, prob_uncle, Mode};
use powevo::metrics::gini_slice;
use powevo::mining_sim::{empirical_rates, initiator_rates, simulate, simulate_with_ledger};
use powevo::{HashDistribution, NetworkParams, PoolMarket, PopulationState, SimConfig};

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {verdict}: {detail}");
    assert!(pass, "criterion {n}: {detail}");
}

/// The 105-pool hash distribution used throughout: five major pools at
/// 33/21/11/8/4 percent plus one hundred fringe miners at 0.23 percent.
fn major_plus_fringe() -> HashDistribution {
    let mut weights = vec![0.33, 0.21, 0.11, 0.08, 0.04];
    weights.extend(std::iter::repeat(0.0023).take(100));
    HashDistribution::from_weights(&weights).expect("valid weights")
}

fn two_pool_market() -> PoolMarket {
    PoolMarket::new(vec![30.0, 20.0], 5000.0, 0.01).expect("valid market")
}

fn four_pool_market() -> PoolMarket {
    PoolMarket::new(vec![40.0, 30.0, 20.0, 10.0], 5000.0, 0.015).expect("valid market")
}

fn net(tau: f64, reward: f64, theta: f64) -> NetworkParams {
    NetworkParams::new(0.1, tau, reward, theta).expect("valid params")
}

fn random_interior(m: usize, rng: &mut ChaCha12Rng) -> PopulationState {
    // Normalized unit exponentials: uniform over the open simplex.
    let mut g = vec![0.0f64; m];
    let mut total = 0.0;
    for v in &mut g {
        let u: f64 = rng.random();
        *v = -(1.0 - u).ln();
        total += *v;
    }
    PopulationState::new(g.iter().map(|&v| v / total).collect()).expect("interior state")
}

fn integrate_default(
    r0: &PopulationState,
    market: &PoolMarket,
    params: &NetworkParams,
) -> Result<powevo::Trajectory> {
    integrate(r0, market, params, Mode::Approx, DEFAULT_STEP, DEFAULT_T_MAX, DEFAULT_EPS)
}

#[test]
fn acceptance_01_simulated_uncle_rates_match_closed_form() {
    let x = major_plus_fringe();
    let mut max_z: f64 = 0.0;
    let mut max_secs: f64 = 0.0;
    for (k, lambda_tau) in [0.05, 0.2, 1.0].into_iter().enumerate() {
        let params = NetworkParams::new(1.0, lambda_tau, 100.0, 0.5).unwrap();
        let config = SimConfig::new(params, x.clone(), 1_000_000, 7 + k as u64);
        let start = Instant::now();
        let run = simulate(&config).unwrap();
        max_secs = max_secs.max(start.elapsed().as_secs_f64());
        let rates = initiator_rates(&run);
        for i in 0..x.len() {
            let p = prob_uncle(i, &x, &params, Mode::Exact).unwrap();
            let n = run.pools[i].slot_wins;
            if n == 0 {
                continue;
            }
            let se = (p * (1.0 - p) / n as f64).sqrt();
            max_z = max_z.max((rates[i].uncle_rate - p).abs() / se);
        }
    }
    report(
        1,
        max_z <= 3.0 && max_secs < 60.0,
        &format!("max |z| {max_z:.3} (limit 3), slowest setting {max_secs:.1} s (limit 60)"),
    );
}

#[test]
fn acceptance_02_fail_approximation_within_two_percent() {
    let start = Instant::now();
    let mut max_gap: f64 = 0.0;
    let steps = 20u32;
    for m in [2usize, 3] {
        let mut points: Vec<Vec<u32>> = Vec::new();
        if m == 2 {
            for a in 0..=steps {
                points.push(vec![a, steps - a]);
            }
        } else {
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    points.push(vec![a, b, steps - a - b]);
                }
            }
        }
        for ks in points {
            let shares: Vec<f64> = ks.iter().map(|&k| f64::from(k) / f64::from(steps)).collect();
            let x = HashDistribution::new(shares).unwrap();
            for lt in 1..=steps {
                let params =
                    NetworkParams::new(1.0, f64::from(lt) / f64::from(steps), 100.0, 0.5)
                        .unwrap();
                for i in 0..m {
                    if ks[i] == steps {
                        continue;
                    }
                    let exact = prob_fail(i, &x, &params, Mode::Exact).unwrap();
                    let approx = prob_fail(i, &x, &params, Mode::Approx).unwrap();
                    max_gap = max_gap.max((exact - approx).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        max_gap <= 0.02 && secs < 5.0,
        &format!("max |exact - approx| {max_gap:.5} (limit 0.02), {secs:.2} s (limit 5)"),
    );
}

#[test]
fn acceptance_03_equal_cost_markets_converge_to_vertices() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut max_l1: f64 = 0.0;
    for m in [2usize, 3, 4] {
        let market = PoolMarket::new(vec![20.0; m], 5000.0, 0.01).unwrap();
        let params = net(5.0, 1200.0, 0.0);
        for _ in 0..20 {
            let r0 = random_interior(m, &mut rng);
            let traj = integrate_default(&r0, &market, &params).unwrap();
            let term = traj.terminal.as_slice();
            let leader = term
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let l1: f64 = term
                .iter()
                .enumerate()
                .map(|(i, &v)| (v - if i == leader { 1.0 } else { 0.0 }).abs())
                .sum();
            max_l1 = max_l1.max(l1);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        max_l1 < 1e-3 && secs < 30.0,
        &format!("max L1 distance to a vertex {max_l1:.2e} (limit 1e-3), {secs:.1} s (limit 30)"),
    );
}

#[test]
fn acceptance_04_full_compensation_limit_recovers_closed_form() {
    let market = two_pool_market();
    let params = net(0.5, 1200.0, 1.0 - 1e-9);
    let r0 = PopulationState::uniform(2).unwrap();
    let traj = integrate_default(&r0, &market, &params).unwrap();
    let ode_err = (traj.terminal.as_slice()[0] - 0.4).abs();

    let results = classify(&market, &params, Mode::Approx, None).unwrap();
    let state = results
        .iter()
        .find_map(|r| r.state.as_ref())
        .expect("classifier returns a state");
    let cls_err = (state.as_slice()[0] - 0.4).abs();
    report(
        4,
        ode_err <= 1e-3 && cls_err <= 1e-6,
        &format!("ODE |r_1 - 0.4| {ode_err:.2e} (limit 1e-3), classifier {cls_err:.2e} (limit 1e-6)"),
    );
}

#[test]
fn acceptance_05_delayed_two_pool_race_favors_cheap_pool() {
    let market = two_pool_market();
    let params = net(0.5, 1200.0, 0.0);
    let r0 = PopulationState::new(vec![0.6, 0.4]).unwrap();
    let traj = integrate_default(&r0, &market, &params).unwrap();
    let r2 = traj.terminal.as_slice()[1];
    report(5, r2 > 0.65, &format!("terminal r_2 {r2:.4} (needs > 0.65)"));
}

#[test]
fn acceptance_06_four_pool_manifold_balance_and_minors() {
    let market = four_pool_market();
    let params = net(0.5, 1500.0, 1.0);
    let target = balance_constant(&market, &params);
    let r0 = PopulationState::uniform(4).unwrap();
    let traj = integrate_default(&r0, &market, &params).unwrap();
    let term = traj.terminal.clone();
    let balance: f64 = term
        .as_slice()
        .iter()
        .zip(market.omega())
        .map(|(&r, &w)| r * w)
        .sum();
    let balance_err = (balance - target).abs();
    let minors = jacobian_minors(&term, &market, &params).unwrap();
    let pass = balance_err <= 1e-6 && minors.negative_definite;
    report(
        6,
        pass,
        &format!(
            "balance {balance:.9} vs {target} (err {balance_err:.2e}, limit 1e-6); minors {:?}, negative_definite {}",
            minors.minors, minors.negative_definite
        ),
    );
}

#[test]
fn acceptance_07_closed_form_minors_match_finite_differences() {
    let market = four_pool_market();
    let params = net(0.5, 1500.0, 1.0);
    let target = balance_constant(&market, &params);
    let interior: Vec<PopulationState> = manifold_states(&market, target, 200, 7)
        .unwrap()
        .into_iter()
        .filter(|r| r.as_slice().iter().all(|&v| v > 1e-3))
        .take(20)
        .collect();
    assert_eq!(interior.len(), 20, "not enough interior on-constraint states");
    let mut max_rel = vec![0.0f64; market.len() - 1];
    for r in &interior {
        let closed = jacobian_minors(r, &market, &params).unwrap().minors;
        let reduced = numeric_reduced_jacobian(r, &market, &params, Mode::Approx, 1e-5).unwrap();
        let numeric = leading_principal_minors(&reduced).unwrap();
        for k in 0..closed.len() {
            let scale = closed[k].abs().max(numeric[k].abs());
            // Values both below differencing noise agree as zero.
            let rel = if scale <= 1e-9 { 0.0 } else { (closed[k] - numeric[k]).abs() / scale };
            max_rel[k] = max_rel[k].max(rel);
        }
    }
    let pass = max_rel.iter().all(|&r| r <= 1e-4);
    let detail: Vec<String> = max_rel
        .iter()
        .enumerate()
        .map(|(k, r)| format!("D_{} rel {:.2e}", k + 1, r))
        .collect();
    report(7, pass, &format!("{} (limit 1e-4, 20 on-constraint states)", detail.join(", ")));
}

#[test]
fn acceptance_08_invasion_confirms_classifier_and_refutes_random() {
    let start = Instant::now();
    let market = two_pool_market();
    let epsilons = default_epsilons::<f64>();
    let invaders = default_invaders(market.len()).unwrap();

    let mut confirmed = 0usize;
    let mut ess_states: Vec<PopulationState> = Vec::new();
    for tau in [0.5, 1.0, 2.0] {
        for theta in [0.0, 0.5, 1.0 - 1e-9] {
            let params = net(tau, 1200.0, theta);
            let results = classify(&market, &params, Mode::Approx, None).unwrap();
            for r in results {
                if r.stability != Stability::AsymptoticallyStable || r.kind == Kind::NssManifold {
                    continue;
                }
                let state = r.state.expect("stable result carries a state");
                let rep =
                    invasion_test(&state, &market, &params, Mode::Approx, &epsilons, &invaders)
                        .unwrap();
                assert_eq!(
                    rep.outcome,
                    InvasionOutcome::EssConfirmed,
                    "tau {tau} theta {theta} state {:?} min_diff {}",
                    state.as_slice(),
                    rep.min_diff
                );
                confirmed += 1;
                if tau == 0.5 && theta == 0.0 {
                    ess_states.push(state);
                }
            }
        }
    }

    let params = net(0.5, 1200.0, 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let mut refuted = 0usize;
    while refuted < 20 {
        let r = random_interior(market.len(), &mut rng);
        let near_equilibrium = ess_states.iter().any(|s| {
            r.as_slice()
                .iter()
                .zip(s.as_slice())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                < 0.05
        });
        if near_equilibrium {
            continue;
        }
        let rep = invasion_test(&r, &market, &params, Mode::Approx, &epsilons, &invaders).unwrap();
        assert_eq!(
            rep.outcome,
            InvasionOutcome::Refuted,
            "state {:?} survived with min_diff {}",
            r.as_slice(),
            rep.min_diff
        );
        refuted += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        confirmed > 0 && refuted == 20 && secs < 60.0,
        &format!("{confirmed} classifier states confirmed, {refuted} random states refuted, {secs:.1} s (limit 60)"),
    );
}

#[test]
fn acceptance_09_gini_values_and_pipeline_round_trip() {
    let equal_ok = (2..=10).all(|m| gini_slice(&vec![1.0 / m as f64; m]).unwrap() == 0.0);
    let mut one_hot = vec![0.0f64; 10];
    one_hot[0] = 1.0;
    let one_hot_err = (gini_slice(&one_hot).unwrap() - 0.9).abs();
    let pair_err = (gini_slice(&[0.75f64, 0.25]).unwrap() - 0.25).abs();

    // Round trip: simulate, serialize the ledger, reload, and re-derive
    // the per-pool rates through the binned statistics.
    let x = HashDistribution::new(vec![0.7, 0.3]).unwrap();
    let params = NetworkParams::new(0.1, 2.5, 100.0, 0.5).unwrap();
    let config = SimConfig::new(params, x, 20_000, 7);
    let (run, ledger) = simulate_with_ledger(&config).unwrap();
    let expected = empirical_rates(&run);

    let dir = tempfile::tempdir().unwrap();
    let blocks_path = dir.path().join("blocks.csv");
    let forks_path = dir.path().join("forks.csv");
    write_blocks_csv(&ledger.blocks, fs::File::create(&blocks_path).unwrap()).unwrap();
    write_forks_csv(&ledger.forks, fs::File::create(&forks_path).unwrap()).unwrap();
    let blocks = load_blocks(&blocks_path, true).unwrap().records;
    let forks = load_forks(&forks_path, true).unwrap().records;
    // One pool per bin: p2 stays below 10^4 attributed blocks, p1 above.
    let stats = miner_stats(&blocks, &forks, &[10_000]).unwrap();
    let round_trip_ok = stats.bins[0].uncle_rate == expected[1].uncle_rate
        && stats.bins[0].fork_rate == expected[1].fork_rate
        && stats.bins[0].fail_rate == expected[1].fail_rate
        && stats.bins[1].uncle_rate == expected[0].uncle_rate
        && stats.bins[1].fork_rate == expected[0].fork_rate
        && stats.bins[1].fail_rate == expected[0].fail_rate;

    // Ranked extraction agrees with the direct coefficient.
    let weights = [40.0, 30.0, 20.0, 10.0];
    let mut records = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        for _ in 0..w as usize {
            records.push(BlockRecord {
                height: records.len() as u64,
                miner: format!("m{i}"),
                status: BlockStatus::Canonical,
            });
        }
    }
    let ranked = top_k_gini(&records, 4).unwrap();
    let rank_err = (ranked.gini - gini_slice(&weights).unwrap()).abs();

    report(
        9,
        equal_ok
            && one_hot_err < 1e-15
            && pair_err < 1e-15
            && round_trip_ok
            && rank_err < 1e-12,
        &format!(
            "equal 0 {equal_ok}, one-hot err {one_hot_err:.1e}, [0.75,0.25] err {pair_err:.1e}, rates round trip exact {round_trip_ok}, ranked gini err {rank_err:.1e}"
        ),
    );
}

#[test]
fn acceptance_10_binned_rates_weakly_decreasing() {
    let x = major_plus_fringe();
    let params = NetworkParams::new(0.1, 2.2314, 100.0, 0.5).unwrap();
    let config = SimConfig::new(params, x, 150_000, 20_260_810);
    let (_, ledger) = simulate_with_ledger(&config).unwrap();
    let stats = miner_stats(&ledger.blocks, &ledger.forks, &DEFAULT_BIN_EDGES).unwrap();
    let filled: Vec<_> = stats.bins.iter().filter(|b| b.miner_count > 0).collect();
    assert!(filled.len() >= 3, "expected at least three occupied bins");
    let mut ok = true;
    let mut detail = String::new();
    for (name, rate) in [
        ("uncle", filled.iter().map(|b| b.uncle_rate).collect::<Vec<_>>()),
        ("fork", filled.iter().map(|b| b.fork_rate).collect::<Vec<_>>()),
        ("fail", filled.iter().map(|b| b.fail_rate).collect::<Vec<_>>()),
    ] {
        let monotone = rate.windows(2).all(|w| w[1] <= w[0]);
        ok &= monotone;
        let cells: Vec<String> = rate.iter().map(|r| format!("{r:.4}")).collect();
        detail.push_str(&format!("{name} [{}] {} ", cells.join(", "), monotone));
    }
    report(10, ok, detail.trim_end());
}

#[test]
fn acceptance_11_identical_seeds_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    fs::write(
        &config_path,
        r#"{
            "network": {"lambda": 0.1, "tau": 2.5, "reward": 100.0, "theta": 0.5},
            "market": {"omega": [30.0, 20.0], "miners": 5000.0, "hash_cost": 0.01},
            "population": {"r0": [0.5, 0.5]},
            "sim": {"blocks": 20000, "seed": 11}
        }"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_powevo");
    let run = |args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(out)
            .arg("--quiet")
            .status()
            .expect("binary runs");
        assert!(status.success(), "command failed: {args:?}");
        fs::read(out).unwrap()
    };
    let config = config_path.to_str().unwrap();

    // The simulate run must exercise the RNG at the given seed; analytic
    // shares only enter through its CSV export. The swept grid exercises
    // the parallel integrator path.
    let a = run(
        &["simulate", "--config", config],
        &dir.path().join("sim_a.json"),
    );
    let b = run(
        &["simulate", "--config", config],
        &dir.path().join("sim_b.json"),
    );
    let sim_ok = a == b;
    let sweep_args =
        ["sweep", "--config", config, "--tau", "0.5:2:4", "--theta", "0:1:3", "--method", "ode"];
    let c = run(&sweep_args, &dir.path().join("sweep_a.csv"));
    let d = run(&sweep_args, &dir.path().join("sweep_b.csv"));
    let sweep_ok = c == d;
    report(
        11,
        sim_ok && sweep_ok,
        &format!(
            "simulate identical {sim_ok} ({} bytes), sweep identical {sweep_ok} ({} bytes)",
            a.len(),
            c.len()
        ),
    );
}
