//! Ingestion of block and fork records from CSV files and the empirical
//! statistics computed from them: binned uncle/fork/fail rates, fork branch
//! histograms, and the concentration of block production.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fork_model::HashDistribution;
use crate::metrics;

/// Table 2 style bin edges; the implied intervals are `(0, 10]`,
/// `(10, 100]`, `(100, 1000]`, `(1000, 10000]`, `(10000, inf)`.
pub const DEFAULT_BIN_EDGES: [u64; 4] = [10, 100, 1000, 10000];

/// Whether a mined block ended up on the canonical chain or as a stale
/// (uncle) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockStatus {
    Canonical,
    Uncle,
}

/// One mined block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub miner: String,
    pub status: BlockStatus,
}

/// Which side of a fork record kept its block on the canonical chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForkWinner {
    A,
    B,
}

/// One temporary fork event between two block producers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkRecord {
    pub height: u64,
    pub miner_a: String,
    pub miner_b: String,
    pub winner: ForkWinner,
    /// Number of competing branches; 2 unless the file says otherwise.
    pub branches: u32,
}

/// A row-level problem, tagged with its file line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parsed records plus everything that went wrong on the way. In lenient
/// mode bad rows land in `errors` and are skipped; warnings never reject a
/// row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadReport<R> {
    pub records: Vec<R>,
    pub errors: Vec<RowIssue>,
    pub warnings: Vec<RowIssue>,
}

const BLOCK_HEADER: [&str; 3] = ["height", "miner", "status"];
const FORK_HEADER: [&str; 5] = ["height", "miner_a", "miner_b", "winner", "branches"];

fn header_matches(found: &csv::StringRecord, expected: &[&str]) -> bool {
    found.len() == expected.len()
        && found.iter().zip(expected).all(|(f, e)| f.trim() == *e)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

struct RowSink<R> {
    report: LoadReport<R>,
    strict: bool,
}

impl<R> RowSink<R> {
    fn new(strict: bool) -> Self {
        Self {
            report: LoadReport { records: Vec::new(), errors: Vec::new(), warnings: Vec::new() },
            strict,
        }
    }

    fn row(
        &mut self,
        line: u64,
        parsed: std::result::Result<R, String>,
        warning: Option<String>,
    ) -> Result<()> {
        match parsed {
            Ok(record) => {
                self.report.records.push(record);
                if let Some(message) = warning {
                    self.report.warnings.push(RowIssue { line, message });
                }
            }
            Err(message) => {
                if self.strict {
                    return Err(Error::domain(format!("line {line}: {message}")));
                }
                self.report.errors.push(RowIssue { line, message });
            }
        }
        Ok(())
    }
}

fn parse_height(field: &str) -> std::result::Result<u64, String> {
    field.trim().parse::<u64>().map_err(|_| format!("invalid height {:?}", field))
}

fn parse_miner(field: &str, column: &str) -> std::result::Result<String, String> {
    if field.is_empty() {
        return Err(format!("empty {column} identifier"));
    }
    Ok(field.to_string())
}

fn parse_block_row(rec: &csv::StringRecord) -> std::result::Result<BlockRecord, String> {
    let height = parse_height(&rec[0])?;
    let miner = parse_miner(&rec[1], "miner")?;
    let status = match rec[2].trim() {
        "canonical" => BlockStatus::Canonical,
        "uncle" => BlockStatus::Uncle,
        other => return Err(format!("unknown status {other:?}")),
    };
    Ok(BlockRecord { height, miner, status })
}

fn parse_fork_row(
    rec: &csv::StringRecord,
    has_branches: bool,
) -> std::result::Result<(ForkRecord, Option<String>), String> {
    let height = parse_height(&rec[0])?;
    let miner_a = parse_miner(&rec[1], "miner_a")?;
    let miner_b = parse_miner(&rec[2], "miner_b")?;
    let winner = match rec[3].trim() {
        "a" => ForkWinner::A,
        "b" => ForkWinner::B,
        other => return Err(format!("unknown winner {other:?}")),
    };
    let branches = if has_branches && !rec[4].trim().is_empty() {
        let n = rec[4]
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("invalid branches {:?}", &rec[4]))?;
        if n < 2 {
            return Err(format!("branches must be at least 2, got {n}"));
        }
        n
    } else {
        2
    };
    let warning = (miner_a == miner_b)
        .then(|| format!("miner_a equals miner_b ({miner_a:?}); kept as self-competition"));
    Ok((ForkRecord { height, miner_a, miner_b, winner, branches }, warning))
}

/// Reads block records from any CSV source. The header must be exactly
/// `height,miner,status`. With `strict` the first bad row aborts the
/// parse; otherwise bad rows are collected and skipped.
pub fn read_blocks<R: Read>(reader: R, strict: bool) -> Result<LoadReport<BlockRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if !header_matches(&headers, &BLOCK_HEADER) {
        return Err(Error::domain(format!(
            "bad header: expected \"height,miner,status\", got {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut sink = RowSink::new(strict);
    for result in rdr.records() {
        match result {
            Ok(rec) => sink.row(record_line(&rec), parse_block_row(&rec), None)?,
            Err(e) if strict => return Err(e.into()),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.report.errors.push(RowIssue { line, message: e.to_string() });
            }
        }
    }
    Ok(sink.report)
}

/// Reads fork records. The header must be `height,miner_a,miner_b,winner,
/// branches`; the `branches` column may be absent or its cells empty, in
/// which case events default to two branches.
pub fn read_forks<R: Read>(reader: R, strict: bool) -> Result<LoadReport<ForkRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let has_branches = if header_matches(&headers, &FORK_HEADER) {
        true
    } else if header_matches(&headers, &FORK_HEADER[..4]) {
        false
    } else {
        return Err(Error::domain(format!(
            "bad header: expected \"height,miner_a,miner_b,winner,branches\", got {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let mut sink = RowSink::new(strict);
    for result in rdr.records() {
        match result {
            Ok(rec) => {
                let line = record_line(&rec);
                match parse_fork_row(&rec, has_branches) {
                    Ok((record, warning)) => sink.row(line, Ok(record), warning)?,
                    Err(message) => sink.row(line, Err(message), None)?,
                }
            }
            Err(e) if strict => return Err(e.into()),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.report.errors.push(RowIssue { line, message: e.to_string() });
            }
        }
    }
    Ok(sink.report)
}

/// [`read_blocks`] on a file path.
pub fn load_blocks<P: AsRef<Path>>(path: P, strict: bool) -> Result<LoadReport<BlockRecord>> {
    read_blocks(File::open(path)?, strict)
}

/// [`read_forks`] on a file path.
pub fn load_forks<P: AsRef<Path>>(path: P, strict: bool) -> Result<LoadReport<ForkRecord>> {
    read_forks(File::open(path)?, strict)
}

/// Writes block records in the same schema the readers accept.
pub fn write_blocks_csv<W: Write>(records: &[BlockRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes fork records in the same schema the readers accept.
pub fn write_forks_csv<W: Write>(records: &[ForkRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Pooled statistics of the miners whose block totals fall in one bin.
/// The interval is `(lower, upper]`, open-ended when `upper` is absent.
///
/// Rates are aggregate count ratios, not per-miner averages. Their block
/// denominator clamps a zero-block miner's total to 1, so a fork-only
/// miner cannot divide by zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinStats {
    pub lower: u64,
    pub upper: Option<u64>,
    pub miner_count: u64,
    pub total_blocks: u64,
    pub uncles: u64,
    pub forks_involved: u64,
    pub forks_lost: u64,
    pub uncle_rate: f64,
    pub fork_rate: f64,
    pub fail_rate: f64,
}

impl BinStats {
    fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("({}, {}]", self.lower, u),
            None => format!("({}, inf)", self.lower),
        }
    }
}

/// Binned miner statistics plus the warnings produced while binning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedStats {
    pub bins: Vec<BinStats>,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct MinerAgg {
    canonical: u64,
    uncles: u64,
    involved: u64,
    lost: u64,
}

#[derive(Default)]
struct BinAgg {
    miner_count: u64,
    total_blocks: u64,
    uncles: u64,
    involved: u64,
    lost: u64,
    /// Sum of per-miner totals clamped to at least 1; the rate denominator.
    rate_blocks: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Groups miners into bins by their block totals (canonical plus uncle)
/// and reports pooled uncle, fork, and fail rates per bin. `edges` are the
/// inclusive upper bounds of all bins but the last; they must be strictly
/// increasing and positive.
pub fn miner_stats(
    blocks: &[BlockRecord],
    forks: &[ForkRecord],
    edges: &[u64],
) -> Result<BinnedStats> {
    for (i, &e) in edges.iter().enumerate() {
        if e == 0 {
            return Err(Error::domain("bin edges must be positive"));
        }
        if i > 0 && e <= edges[i - 1] {
            return Err(Error::domain(format!(
                "bin edges must be strictly increasing, got {} after {}",
                e,
                edges[i - 1]
            )));
        }
    }

    let mut miners: BTreeMap<&str, MinerAgg> = BTreeMap::new();
    for b in blocks {
        let agg = miners.entry(&b.miner).or_default();
        match b.status {
            BlockStatus::Canonical => agg.canonical += 1,
            BlockStatus::Uncle => agg.uncles += 1,
        }
    }
    for f in forks {
        miners.entry(&f.miner_a).or_default().involved += 1;
        miners.entry(&f.miner_b).or_default().involved += 1;
        let loser = match f.winner {
            ForkWinner::A => &f.miner_b,
            ForkWinner::B => &f.miner_a,
        };
        miners.entry(loser).or_default().lost += 1;
    }

    let mut warnings = Vec::new();
    let mut bins: Vec<BinAgg> = (0..=edges.len()).map(|_| BinAgg::default()).collect();
    for (name, agg) in &miners {
        let total = agg.canonical + agg.uncles;
        let rate_total = if total == 0 {
            warnings.push(format!(
                "miner {name:?} appears in fork records but mined no blocks; \
                 total clamped to 1 for binning and rates"
            ));
            1
        } else {
            total
        };
        let idx = edges.partition_point(|&e| e < rate_total);
        let bin = &mut bins[idx];
        bin.miner_count += 1;
        bin.total_blocks += total;
        bin.uncles += agg.uncles;
        bin.involved += agg.involved;
        bin.lost += agg.lost;
        bin.rate_blocks += rate_total;
    }

    let stats = bins
        .into_iter()
        .enumerate()
        .map(|(i, b)| BinStats {
            lower: if i == 0 { 0 } else { edges[i - 1] },
            upper: edges.get(i).copied(),
            miner_count: b.miner_count,
            total_blocks: b.total_blocks,
            uncles: b.uncles,
            forks_involved: b.involved,
            forks_lost: b.lost,
            uncle_rate: ratio(b.uncles, b.rate_blocks),
            fork_rate: ratio(b.involved, b.rate_blocks),
            fail_rate: ratio(b.lost, b.involved),
        })
        .collect();
    Ok(BinnedStats { bins: stats, warnings })
}

/// One bucket of the fork branch histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchBucket {
    pub count: u64,
    pub fraction: f64,
}

/// Counts fork events per branch multiplicity. Fractions sum to 1 for
/// nonempty input; empty input gives an empty map.
pub fn branch_histogram(forks: &[ForkRecord]) -> BTreeMap<u32, BranchBucket> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for f in forks {
        *counts.entry(f.branches).or_default() += 1;
    }
    let total = forks.len() as f64;
    counts
        .into_iter()
        .map(|(branches, count)| {
            (branches, BranchBucket { count, fraction: count as f64 / total })
        })
        .collect()
}

/// Concentration of canonical block production among the top miners.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiniReport {
    pub requested_k: usize,
    pub miners_used: usize,
    pub gini: f64,
    pub warning: Option<String>,
}

/// Gini coefficient of the canonical block counts of the `k` most
/// productive miners. Fewer than `k` miners present is a warning, not an
/// error; the computation then uses all of them.
pub fn top_k_gini(blocks: &[BlockRecord], k: usize) -> Result<GiniReport> {
    if k == 0 {
        return Err(Error::domain("top-k gini: k must be at least 1"));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for b in blocks {
        let c = counts.entry(&b.miner).or_default();
        if b.status == BlockStatus::Canonical {
            *c += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::domain("top-k gini: no miners in the input"));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let available = ranked.len();
    let used = available.min(k);
    let weights: Vec<f64> = ranked[..used].iter().map(|&(_, c)| c as f64).collect();
    let dist = HashDistribution::from_weights(&weights)
        .map_err(|_| Error::domain("top-k gini: the selected miners have no canonical blocks"))?;
    Ok(GiniReport {
        requested_k: k,
        miners_used: used,
        gini: metrics::gini(&dist),
        warning: (available < k).then(|| {
            format!("requested top {k} miners but only {available} present; using all")
        }),
    })
}

/// Renders binned stats as an aligned text table.
pub fn render_table(stats: &BinnedStats) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>10} {:>8} {:>12} {:>12} {:>12}",
        "blocks mined", "miners", "blocks", "uncles", "uncle_rate", "fork_rate", "fail_rate"
    );
    for bin in &stats.bins {
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>10} {:>8} {:>12.6} {:>12.6} {:>12.6}",
            bin.label(),
            bin.miner_count,
            bin.total_blocks,
            bin.uncles,
            bin.uncle_rate,
            bin.fork_rate,
            bin.fail_rate
        );
    }
    for w in &stats.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fork_model::NetworkParams;
    use crate::mining_sim::{empirical_rates, simulate_with_ledger, SimConfig};

    fn block(miner: &str, status: BlockStatus) -> BlockRecord {
        BlockRecord { height: 1, miner: miner.to_string(), status }
    }

    fn fork(a: &str, b: &str, winner: ForkWinner) -> ForkRecord {
        ForkRecord {
            height: 1,
            miner_a: a.to_string(),
            miner_b: b.to_string(),
            winner,
            branches: 2,
        }
    }

    #[test]
    fn reads_four_row_sample() {
        let csv = "height,miner,status\n1,A,canonical\n2,A,canonical\n3,A,canonical\n4,A,uncle\n";
        let report = read_blocks(csv.as_bytes(), true).unwrap();
        assert_eq!(report.records.len(), 4);
        assert_eq!(report.records[3].status, BlockStatus::Uncle);
        assert!(report.errors.is_empty());
    }

    #[test]
    fn empty_file_with_header_is_empty_list() {
        let report = read_blocks("height,miner,status\n".as_bytes(), true).unwrap();
        assert!(report.records.is_empty());
        let report = read_forks("height,miner_a,miner_b,winner,branches\n".as_bytes(), true)
            .unwrap();
        assert!(report.records.is_empty());
    }

    #[test]
    fn unknown_status_is_a_row_error_with_line_number() {
        let csv = "height,miner,status\n1,A,canonical\n2,B,orphan\n3,C,uncle\n";
        let report = read_blocks(csv.as_bytes(), false).unwrap();
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 3);
        assert!(report.errors[0].message.contains("unknown status"), "{}", report.errors[0]);

        let err = read_blocks(csv.as_bytes(), true).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_bad_header() {
        let err = read_blocks("height,pool,status\n".as_bytes(), true).unwrap_err();
        assert!(err.to_string().contains("bad header"), "{err}");
        let err = read_forks("height,miner_a,miner_b\n".as_bytes(), true).unwrap_err();
        assert!(err.to_string().contains("bad header"), "{err}");
    }

    #[test]
    fn fork_branches_default_to_two() {
        let with_empty_cell = "height,miner_a,miner_b,winner,branches\n5,A,B,a,\n6,A,B,b,3\n";
        let report = read_forks(with_empty_cell.as_bytes(), true).unwrap();
        assert_eq!(report.records[0].branches, 2);
        assert_eq!(report.records[1].branches, 3);

        let without_column = "height,miner_a,miner_b,winner\n5,A,B,a\n";
        let report = read_forks(without_column.as_bytes(), true).unwrap();
        assert_eq!(report.records[0].branches, 2);
    }

    #[test]
    fn fork_row_validation() {
        let csv = "height,miner_a,miner_b,winner,branches\n\
                   1,A,B,c,2\n2,A,B,a,1\n3,A,A,a,2\n4,,B,a,2\n";
        let report = read_forks(csv.as_bytes(), false).unwrap();
        assert_eq!(report.records.len(), 1, "only the self-competition row parses");
        assert_eq!(report.errors.len(), 3);
        assert!(report.errors[0].message.contains("unknown winner"));
        assert!(report.errors[1].message.contains("at least 2"));
        assert!(report.errors[2].message.contains("empty miner_a"));
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 4);
    }

    #[test]
    fn miner_stats_hand_count() {
        let mut blocks = vec![
            block("A", BlockStatus::Canonical),
            block("A", BlockStatus::Canonical),
            block("A", BlockStatus::Canonical),
            block("A", BlockStatus::Uncle),
        ];
        blocks.extend((0..15).map(|_| block("B", BlockStatus::Canonical)));
        let forks = vec![fork("A", "B", ForkWinner::A), fork("A", "B", ForkWinner::B)];
        let stats = miner_stats(&blocks, &forks, &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(stats.bins.len(), 5);
        assert!(stats.warnings.is_empty());

        let first = &stats.bins[0];
        assert_eq!((first.lower, first.upper), (0, Some(10)));
        assert_eq!(first.miner_count, 1);
        assert_eq!(first.total_blocks, 4);
        assert_eq!((first.uncle_rate, first.fork_rate, first.fail_rate), (0.25, 0.5, 0.5));

        let second = &stats.bins[1];
        assert_eq!(second.miner_count, 1);
        assert_eq!(second.total_blocks, 15);
        assert_eq!(second.uncle_rate, 0.0);
        assert_eq!(second.fail_rate, 0.5);

        for empty in &stats.bins[2..] {
            assert_eq!(empty.miner_count, 0);
            assert_eq!((empty.uncle_rate, empty.fork_rate, empty.fail_rate), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn miner_stats_without_forks_has_zero_fork_rates() {
        let blocks = vec![block("A", BlockStatus::Canonical), block("B", BlockStatus::Uncle)];
        let stats = miner_stats(&blocks, &[], &DEFAULT_BIN_EDGES).unwrap();
        for bin in &stats.bins {
            assert_eq!(bin.fork_rate, 0.0);
            assert_eq!(bin.fail_rate, 0.0);
        }
        assert_eq!(stats.bins[0].uncle_rate, 0.5);
    }

    #[test]
    fn zero_block_miner_warns_and_is_clamped() {
        let blocks = vec![block("A", BlockStatus::Canonical)];
        let forks = vec![fork("A", "ghost", ForkWinner::A)];
        let stats = miner_stats(&blocks, &forks, &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(stats.warnings.len(), 1);
        assert!(stats.warnings[0].contains("ghost"), "{}", stats.warnings[0]);
        let first = &stats.bins[0];
        assert_eq!(first.miner_count, 2);
        assert_eq!(first.total_blocks, 1, "the phantom total is not counted as a block");
        assert_eq!(first.forks_involved, 2);
        assert_eq!(first.forks_lost, 1);
        assert_eq!(first.fork_rate, 1.0, "denominator clamps the ghost to one block");
    }

    #[test]
    fn every_miner_lands_in_exactly_one_bin() {
        let blocks: Vec<BlockRecord> = (0..400)
            .map(|i| block(&format!("m{}", i % 37), BlockStatus::Canonical))
            .collect();
        let stats = miner_stats(&blocks, &[], &[5, 11, 200]).unwrap();
        let count: u64 = stats.bins.iter().map(|b| b.miner_count).sum();
        assert_eq!(count, 37);
        let blocks_total: u64 = stats.bins.iter().map(|b| b.total_blocks).sum();
        assert_eq!(blocks_total, 400);
    }

    #[test]
    fn rejects_bad_bin_edges() {
        assert!(miner_stats(&[], &[], &[10, 10]).is_err());
        assert!(miner_stats(&[], &[], &[100, 10]).is_err());
        assert!(miner_stats(&[], &[], &[0, 10]).is_err());
        assert!(miner_stats(&[], &[], &[]).is_ok(), "a single open-ended bin is fine");
    }

    #[test]
    fn branch_histogram_fractions() {
        let mut forks: Vec<ForkRecord> =
            (0..19).map(|_| fork("A", "B", ForkWinner::A)).collect();
        forks.push(ForkRecord {
            height: 1,
            miner_a: "A".into(),
            miner_b: "B".into(),
            winner: ForkWinner::B,
            branches: 3,
        });
        let hist = branch_histogram(&forks);
        assert_eq!(hist.len(), 2);
        assert_eq!(hist[&2].count, 19);
        assert_eq!(hist[&2].fraction, 0.95);
        assert_eq!(hist[&3].fraction, 0.05);

        let all_two = branch_histogram(&forks[..19]);
        assert_eq!(all_two[&2].fraction, 1.0);
        assert!(branch_histogram(&[]).is_empty());
    }

    #[test]
    fn top_k_gini_examples() {
        let one = vec![block("A", BlockStatus::Canonical)];
        assert_eq!(top_k_gini(&one, 1).unwrap().gini, 0.0);

        let mut split = vec![block("B", BlockStatus::Canonical)];
        split.extend((0..3).map(|_| block("A", BlockStatus::Canonical)));
        let report = top_k_gini(&split, 2).unwrap();
        assert!((report.gini - 0.25).abs() < 1e-15);
        assert_eq!(report.miners_used, 2);
        assert!(report.warning.is_none());

        let uniform: Vec<BlockRecord> =
            (0..6).map(|i| block(&format!("m{}", i % 3), BlockStatus::Canonical)).collect();
        assert_eq!(top_k_gini(&uniform, 3).unwrap().gini, 0.0);
    }

    #[test]
    fn top_k_gini_warns_when_short_of_miners() {
        let blocks = vec![block("A", BlockStatus::Canonical), block("B", BlockStatus::Canonical)];
        let report = top_k_gini(&blocks, 10).unwrap();
        assert_eq!(report.miners_used, 2);
        assert!(report.warning.as_ref().unwrap().contains("only 2"), "{report:?}");
        assert!(top_k_gini(&blocks, 0).is_err());
        assert!(top_k_gini(&[], 1).is_err());
    }

    #[test]
    fn top_k_ranks_by_canonical_blocks_only() {
        let mut blocks: Vec<BlockRecord> =
            (0..5).map(|_| block("uncle_farm", BlockStatus::Uncle)).collect();
        blocks.push(block("small", BlockStatus::Canonical));
        blocks.extend((0..3).map(|_| block("big", BlockStatus::Canonical)));
        let report = top_k_gini(&blocks, 2).unwrap();
        assert!((report.gini - 0.25).abs() < 1e-15, "uncle-only miner is outranked");
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let blocks = vec![block("A", BlockStatus::Canonical), block("B", BlockStatus::Uncle)];
        let mut buf = Vec::new();
        write_blocks_csv(&blocks, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("height,miner,status\n"), "{text}");
        assert_eq!(read_blocks(buf.as_slice(), true).unwrap().records, blocks);

        let forks = vec![fork("A", "B", ForkWinner::B)];
        let mut buf = Vec::new();
        write_forks_csv(&forks, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("height,miner_a,miner_b,winner,branches\n"), "{text}");
        assert_eq!(read_forks(buf.as_slice(), true).unwrap().records, forks);
    }

    #[test]
    fn pipeline_closure_reproduces_sim_rates() {
        let params = NetworkParams::new(0.1, 2.5, 100.0, 0.5).unwrap();
        let x = HashDistribution::new(vec![0.7, 0.3]).unwrap();
        let cfg = SimConfig::new(params, x, 20_000, 77);
        let (report, ledger) = simulate_with_ledger(&cfg).unwrap();

        let mut bbuf = Vec::new();
        write_blocks_csv(&ledger.blocks, &mut bbuf).unwrap();
        let mut fbuf = Vec::new();
        write_forks_csv(&ledger.forks, &mut fbuf).unwrap();
        let blocks = read_blocks(bbuf.as_slice(), true).unwrap();
        let forks = read_forks(fbuf.as_slice(), true).unwrap();
        assert_eq!(blocks.records, ledger.blocks);
        assert_eq!(forks.records, ledger.forks);

        // p1 holds 70% of the hash power, so its block total clears 10000
        // and p2 stays below; each pool is alone in its bin.
        let stats = miner_stats(&blocks.records, &forks.records, &[10_000]).unwrap();
        assert!(stats.warnings.is_empty());
        assert_eq!(stats.bins[0].miner_count, 1);
        assert_eq!(stats.bins[1].miner_count, 1);

        let rates = empirical_rates(&report);
        let p1 = &stats.bins[1];
        assert_eq!(p1.uncle_rate, rates[0].uncle_rate);
        assert_eq!(p1.fork_rate, rates[0].fork_rate);
        assert_eq!(p1.fail_rate, rates[0].fail_rate);
        let p2 = &stats.bins[0];
        assert_eq!(p2.uncle_rate, rates[1].uncle_rate);
        assert_eq!(p2.fork_rate, rates[1].fork_rate);
        assert_eq!(p2.fail_rate, rates[1].fail_rate);
    }

    #[test]
    fn fixture_sample_loads_cleanly() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
        let blocks = load_blocks(dir.join("sample_blocks.csv"), true).unwrap();
        let forks = load_forks(dir.join("sample_forks.csv"), true).unwrap();
        assert!(blocks.records.len() > 9_000, "got {}", blocks.records.len());
        assert!(!forks.records.is_empty());

        let stats = miner_stats(&blocks.records, &forks.records, &DEFAULT_BIN_EDGES).unwrap();
        let miners: u64 = stats.bins.iter().map(|b| b.miner_count).sum();
        assert_eq!(miners, 105, "the fixture market has 105 pools");
        for bin in &stats.bins {
            assert!(bin.uncle_rate >= 0.0 && bin.uncle_rate <= 1.0);
            assert!(bin.fail_rate >= 0.0 && bin.fail_rate <= 1.0);
        }
        let hist = branch_histogram(&forks.records);
        assert_eq!(hist.keys().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn render_table_layout() {
        let blocks = vec![block("A", BlockStatus::Canonical), block("A", BlockStatus::Uncle)];
        let stats = miner_stats(&blocks, &[], &DEFAULT_BIN_EDGES).unwrap();
        let table = render_table(&stats);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 6, "header plus five bins");
        assert!(lines[0].starts_with("blocks mined"));
        assert!(lines[1].starts_with("(0, 10]"));
        assert!(lines[5].starts_with("(10000, inf)"));
        assert!(lines[1].contains("0.500000"));
    }
}
