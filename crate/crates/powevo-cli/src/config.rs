//! Run configuration: one JSON document with `network`, `market`,
//! `population`, `sim`, and `sweep` sections. Unknown keys are rejected so
//! typos surface as errors instead of silently ignored settings.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use powevo::error::{Error, Result};
use powevo::evolution::hash_fraction;
use powevo::fork_model::Mode;
use powevo::metrics::SweepMethod;
use powevo::mining_sim::{SplitMode, TieMode};
use powevo::{BlockSizeModel, HashDistribution, NetworkParams, PoolMarket, PopulationState};

/// Closed-form evaluation mode as a CLI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Exact,
    Approx,
}

impl From<ModeChoice> for Mode {
    fn from(c: ModeChoice) -> Self {
        match c {
            ModeChoice::Exact => Mode::Exact,
            ModeChoice::Approx => Mode::Approx,
        }
    }
}

/// Tie handling as a CLI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TieChoice {
    Coin,
    Race,
}

impl From<TieChoice> for TieMode {
    fn from(c: TieChoice) -> Self {
        match c {
            TieChoice::Coin => TieMode::CoinFlip,
            TieChoice::Race => TieMode::RecursiveRace,
        }
    }
}

/// Non-combatant split handling as a CLI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Half,
    Random,
}

impl From<SplitChoice> for SplitMode {
    fn from(c: SplitChoice) -> Self {
        match c {
            SplitChoice::Half => SplitMode::DeterministicHalf,
            SplitChoice::Random => SplitMode::RandomPerPool,
        }
    }
}

/// Sweep solver as a CLI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Analytic,
    Ode,
}

impl From<MethodChoice> for SweepMethod {
    fn from(c: MethodChoice) -> Self {
        match c {
            MethodChoice::Analytic => SweepMethod::Analytic,
            MethodChoice::Ode => SweepMethod::Ode,
        }
    }
}

/// A grid: either the string form `a:b:n` (n evenly spaced points, both
/// ends included) or an explicit array of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Expr(String),
}

/// Parses `a:b:n` into n evenly spaced points including both ends.
pub fn parse_grid(expr: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = expr.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "grid {expr:?} must have the form a:b:n (n points from a to b inclusive)"
        )));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|_| Error::config(format!("grid {expr:?}: bad start {:?}", parts[0])))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| Error::config(format!("grid {expr:?}: bad end {:?}", parts[1])))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| Error::config(format!("grid {expr:?}: bad count {:?}", parts[2])))?;
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::config(format!("grid {expr:?}: ends must be finite")));
    }
    if n == 0 {
        return Err(Error::config(format!("grid {expr:?}: needs at least one point")));
    }
    if n == 1 {
        if a != b {
            return Err(Error::config(format!(
                "grid {expr:?}: a single-point grid needs matching ends"
            )));
        }
        return Ok(vec![a]);
    }
    let mut points: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    points[n - 1] = b;
    Ok(points)
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::Points(p) => Ok(p.clone()),
            GridSpec::Expr(e) => parse_grid(e),
        }
    }
}

/// `network` section: lambda, reward, theta, and exactly one of `tau` or a
/// block-size model that determines it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockSizeModel>,
    pub reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl NetworkSection {
    /// Full parameter set; used by every command except `sweep`.
    pub fn params(&self) -> Result<NetworkParams> {
        let theta = self
            .theta
            .ok_or_else(|| Error::config("network.theta is required for this command"))?;
        match (self.tau, &self.block) {
            (Some(_), Some(_)) => {
                Err(Error::config("network.tau and network.block are mutually exclusive"))
            }
            (Some(tau), None) => NetworkParams::new(self.lambda, tau, self.reward, theta),
            (None, Some(block)) => {
                NetworkParams::from_block_size(self.lambda, block, self.reward, theta)
            }
            (None, None) => Err(Error::config("network needs either tau or block")),
        }
    }
}

/// `market` section: either a pool market (`omega`, `miners`, `hash_cost`)
/// or a direct hash distribution (`shares`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miners: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
}

pub enum MarketKind {
    Pools(PoolMarket),
    Shares(HashDistribution),
}

impl MarketSection {
    pub fn resolve(&self) -> Result<MarketKind> {
        let pool_fields = [self.omega.is_some(), self.miners.is_some(), self.hash_cost.is_some()];
        let any_pool = pool_fields.iter().any(|&b| b);
        let all_pool = pool_fields.iter().all(|&b| b);
        match (&self.shares, any_pool) {
            (Some(_), true) => Err(Error::config(
                "market.shares and market.omega/miners/hash_cost are mutually exclusive",
            )),
            (Some(shares), false) => Ok(MarketKind::Shares(HashDistribution::new(shares.clone())?)),
            (None, true) if !all_pool => Err(Error::config(
                "market needs omega, miners, and hash_cost together",
            )),
            (None, true) => Ok(MarketKind::Pools(PoolMarket::new(
                self.omega.clone().expect("checked"),
                self.miners.expect("checked"),
                self.hash_cost.expect("checked"),
            )?)),
            (None, false) => Err(Error::config(
                "market needs either shares or omega/miners/hash_cost",
            )),
        }
    }

    /// The pool-market form, required by the evolution commands.
    pub fn pools(&self) -> Result<PoolMarket> {
        match self.resolve()? {
            MarketKind::Pools(m) => Ok(m),
            MarketKind::Shares(_) => Err(Error::config(
                "this command needs the pool form of market (omega, miners, hash_cost), \
                 not market.shares",
            )),
        }
    }
}

/// `population` section: the initial strategy distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub r0: Vec<f64>,
}

/// `sim` section: simulation knobs; flags override these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie: Option<TieChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitChoice>,
}

/// `sweep` section: grids and solver; flags override these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
}

/// One run configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config {}: {e}", path.display())))
    }

    pub fn network(&self) -> Result<&NetworkSection> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::config("config needs a network section"))
    }

    pub fn market(&self) -> Result<&MarketSection> {
        self.market
            .as_ref()
            .ok_or_else(|| Error::config("config needs a market section"))
    }

    /// Initial population from the config, or the uniform default for `m`
    /// pools when the section is absent.
    pub fn population(&self, m: usize) -> Result<PopulationState> {
        match &self.population {
            Some(section) => PopulationState::new(section.r0.clone()),
            None => PopulationState::uniform(m),
        }
    }

    /// Hash distribution for the closed-form and simulation commands:
    /// either direct `market.shares` or the weighted population of a pool
    /// market. When the population defaulted to uniform, the resolved
    /// config is updated to record it.
    pub fn hash_distribution(&mut self) -> Result<HashDistribution> {
        match self.market()?.resolve()? {
            MarketKind::Shares(x) => Ok(x),
            MarketKind::Pools(market) => {
                let r0 = self.population(market.len())?;
                let x = hash_fraction(&r0, &market)?;
                self.population = Some(PopulationSection { r0: r0.as_slice().to_vec() });
                Ok(x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expr_inclusive_ends() {
        assert_eq!(parse_grid("0:2:5").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        assert_eq!(parse_grid("0:1:2").unwrap(), vec![0.0, 1.0]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1:1").is_err(), "one point with distinct ends");
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a:1:3").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"netwrok": {}}"#).unwrap_err();
        assert!(err.to_string().contains("netwrok"), "{err}");
        let err = serde_json::from_str::<RunConfig>(
            r#"{"network": {"lambda": 0.1, "tau": 1, "reward": 100, "theta": 0, "lamda": 2}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn network_requires_exactly_one_delay_source() {
        let base = NetworkSection {
            lambda: 0.1,
            tau: None,
            block: None,
            reward: 100.0,
            theta: Some(0.0),
        };
        assert!(base.params().is_err());
        let with_tau = NetworkSection { tau: Some(1.0), ..base.clone() };
        assert_eq!(with_tau.params().unwrap().lambda_tau(), 0.1);
        let text = r#"{"size_s": 80.0, "gamma": 2.0, "bandwidth_c": 1.5, "verify_beta": 0.001}"#;
        let block: BlockSizeModel = serde_json::from_str(text).unwrap();
        let with_block = NetworkSection { block: Some(block), ..base.clone() };
        assert!(with_block.params().is_ok());
        let both = NetworkSection {
            tau: Some(1.0),
            block: with_block.block.clone(),
            ..base
        };
        assert!(both.params().is_err());
    }

    #[test]
    fn market_forms_are_exclusive() {
        let shares: MarketSection = serde_json::from_str(r#"{"shares": [0.4, 0.6]}"#).unwrap();
        assert!(matches!(shares.resolve().unwrap(), MarketKind::Shares(_)));
        assert!(shares.pools().is_err());

        let pools: MarketSection =
            serde_json::from_str(r#"{"omega": [30, 20], "miners": 5000, "hash_cost": 0.01}"#)
                .unwrap();
        assert!(pools.pools().is_ok());

        let mixed: MarketSection =
            serde_json::from_str(r#"{"shares": [1.0], "omega": [10]}"#).unwrap();
        assert!(mixed.resolve().is_err());
        let partial: MarketSection = serde_json::from_str(r#"{"omega": [10]}"#).unwrap();
        assert!(partial.resolve().is_err());
    }

    #[test]
    fn hash_distribution_records_defaulted_population() {
        let mut config: RunConfig = serde_json::from_str(
            r#"{"market": {"omega": [30, 20], "miners": 5000, "hash_cost": 0.01}}"#,
        )
        .unwrap();
        let x = config.hash_distribution().unwrap();
        assert_eq!(x.len(), 2);
        let recorded = config.population.unwrap().r0;
        assert_eq!(recorded, vec![0.5, 0.5]);
    }
}
