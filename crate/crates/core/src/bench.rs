//! Throughput and overhead measurements for both key modes.
//!
//! Timed comparisons are always paired: every round runs each scenario
//! once, in order, so drift hits all of them alike. Operation and byte
//! counts are exact; only the time columns are statistical.

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use ipkpq_mldsa::Level;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::center::KeyCenter;
use crate::resolver::{InProcess, OnlineResolver, QueryServer};
use crate::rpki::objects::{digest, Mode, RoaObject, Validity};
use crate::rpki::repo::MemoryRepo;
use crate::rpki::tree::{build_tree, Naming, Tree, TreeError, TreeSpec};
use crate::rpki::IssueError;
use crate::seed::Dimensions;
use crate::validator::{validate_ipkpq, StandardValidator, ValidateError, ValidationReport};

/// Key center dimensions used for benchmark trees.
pub const BENCH_DIMS: (usize, usize) = (32, 32);

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Scenario(&'static str),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Issue(#[from] IssueError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error("honest ROA rejected: {0:?}")]
    Rejected(ValidationReport),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub level: Level,
    pub mode: Mode,
    pub depth: usize,
    pub fanout: usize,
    pub roa_count: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Scenario {
    /// Desk-scale defaults: a chain of the given depth, 200 ROAs per round
    /// and 8 rounds.
    pub fn new(level: Level, mode: Mode, depth: usize) -> Self {
        Scenario {
            level,
            mode,
            depth,
            fanout: 1,
            roa_count: 200,
            rounds: 8,
            seed: 1,
        }
    }

    pub fn id(&self) -> String {
        format!("L{}-{}-d{}-f{}", self.level.number(), self.mode, self.depth, self.fanout)
    }

    pub fn check(&self) -> Result<(), BenchError> {
        if self.depth < 3 {
            return Err(BenchError::Scenario("depth must be at least 3"));
        }
        if self.fanout == 0 {
            return Err(BenchError::Scenario("fanout must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(BenchError::Scenario("at least one round"));
        }
        Ok(())
    }

    fn tree_spec(&self) -> TreeSpec {
        TreeSpec {
            mode: self.mode,
            level: self.level,
            depth: self.depth,
            fanout: self.fanout,
            naming: Naming::Flat,
            validity: Validity::new(epoch(), epoch() + chrono::Duration::days(365)),
        }
    }

    fn rng(&self, round: usize) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ round as u64)
    }
}

/// Fixed clock for benchmark objects.
pub fn epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
        .expect("constant")
        .with_timezone(&Utc)
}

fn bench_now() -> DateTime<Utc> {
    epoch() + chrono::Duration::days(1)
}

/// One measurement. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `gen`, `verify` or `overhead`.
    pub bench: String,
    pub scenario: String,
    pub level: u8,
    pub mode: Mode,
    pub depth: usize,
    pub fanout: usize,
    /// `build` for generation; `cold` or `warm` cache for the others.
    pub variant: String,
    pub round: usize,
    pub roa_count: usize,
    pub setup_secs: f64,
    pub work_secs: f64,
    /// ROAs per second with setup included; empty when no ROAs ran.
    pub roas_per_sec: Option<f64>,
    /// ROAs per second over the ROA phase alone.
    pub steady_roas_per_sec: Option<f64>,
    pub sign_ops: u64,
    pub keygens: u64,
    pub verify_ops: u64,
    pub objects_fetched: u64,
    pub bytes_fetched: u64,
    /// Certificate bytes a validator of a leaf ROA must hold.
    pub storage_bytes: u64,
}

impl BenchRow {
    fn new(bench: &str, s: &Scenario, variant: &str, round: usize) -> Self {
        BenchRow {
            bench: bench.to_owned(),
            scenario: s.id(),
            level: s.level.number(),
            mode: s.mode,
            depth: s.depth,
            fanout: s.fanout,
            variant: variant.to_owned(),
            round,
            roa_count: 0,
            setup_secs: 0.0,
            work_secs: 0.0,
            roas_per_sec: None,
            steady_roas_per_sec: None,
            sign_ops: 0,
            keygens: 0,
            verify_ops: 0,
            objects_fetched: 0,
            bytes_fetched: 0,
            storage_bytes: 0,
        }
    }

    fn set_times(&mut self, roas: usize, setup: Duration, work: Duration) {
        self.roa_count = roas;
        self.setup_secs = setup.as_secs_f64();
        self.work_secs = work.as_secs_f64();
        if roas > 0 {
            self.roas_per_sec = Some(roas as f64 / (setup + work).as_secs_f64());
            self.steady_roas_per_sec = Some(roas as f64 / work.as_secs_f64());
        }
    }
}

/// Standard mode: every certificate on the leaf's chain. Identity mode:
/// the leaf's own certificate.
pub fn storage_bytes(tree: &Tree) -> u64 {
    let leaf = tree.nodes.len() - 1;
    match tree.spec.mode {
        Mode::Standard => tree
            .chain(leaf)
            .iter()
            .map(|n| n.rc().encode().len() as u64)
            .sum(),
        Mode::Ipkpq => tree.nodes[leaf].rc().encode().len() as u64,
    }
}

fn new_center(level: Level, rng: &mut ChaCha20Rng) -> KeyCenter {
    let dims = Dimensions::new(BENCH_DIMS.0, BENCH_DIMS.1).expect("valid constants");
    KeyCenter::init(level, dims, rng)
}

fn generation_round(s: &Scenario, round: usize) -> Result<BenchRow, BenchError> {
    let mut rng = s.rng(round);
    let mut center = (s.mode == Mode::Ipkpq).then(|| new_center(s.level, &mut rng));
    let start = Instant::now();
    let mut tree = build_tree(s.tree_spec(), center.as_mut(), &mut rng)?;
    let setup = start.elapsed();
    let mut stats = tree.stats;
    let start = Instant::now();
    for i in 0..s.roa_count {
        let (_, st) = tree.issue_roa(i, bench_now(), &mut rng)?;
        stats += st;
    }
    let work = start.elapsed();
    let mut row = BenchRow::new("gen", s, "build", round);
    row.set_times(s.roa_count, setup, work);
    row.sign_ops = stats.sign_ops;
    row.keygens = stats.keygens;
    row.storage_bytes = storage_bytes(&tree);
    Ok(row)
}

/// Build the tree and issue every scenario's ROAs up front.
fn prepare(s: &Scenario) -> Result<(Tree, Option<KeyCenter>, Vec<RoaObject>), BenchError> {
    let mut rng = s.rng(u32::MAX as usize);
    let mut center = (s.mode == Mode::Ipkpq).then(|| new_center(s.level, &mut rng));
    let mut tree = build_tree(s.tree_spec(), center.as_mut(), &mut rng)?;
    let roas = (0..s.roa_count.max(1))
        .map(|i| tree.issue_roa(i, bench_now(), &mut rng).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    Ok((tree, center, roas))
}

struct Prepared {
    scenario: Scenario,
    tree: Tree,
    center: Option<KeyCenter>,
    roas: Vec<RoaObject>,
    repo: MemoryRepo,
    server: Option<Arc<QueryServer>>,
}

impl Prepared {
    fn new(s: &Scenario) -> Result<Self, BenchError> {
        let (tree, center, roas) = prepare(s)?;
        let repo = MemoryRepo::new();
        tree.publish(&repo)?;
        let server = center
            .as_ref()
            .map(|kc| Arc::new(QueryServer::new(kc.file_pk().clone())));
        Ok(Prepared {
            scenario: *s,
            tree,
            center,
            roas,
            repo,
            server,
        })
    }

    /// Validate `count` ROAs; `warm` pre-loads caches outside the timing.
    fn run(&self, count: usize, warm: bool, round: usize) -> Result<BenchRow, BenchError> {
        let s = &self.scenario;
        let mut row = BenchRow::new("verify", s, if warm { "warm" } else { "cold" }, round);
        let mut reports = Vec::with_capacity(count);
        let (setup, work);
        match s.mode {
            Mode::Standard => {
                let anchor = self.tree.root().rc().encode();
                let start = Instant::now();
                let mut v = StandardValidator::new(&self.repo, &anchor, &digest(&anchor))?;
                if warm {
                    v = v.with_chain_cache();
                    v.validate(&self.roas[0], bench_now())?;
                }
                setup = start.elapsed();
                let start = Instant::now();
                for i in 0..count {
                    reports.push(v.validate(&self.roas[i % self.roas.len()], bench_now())?);
                }
                work = start.elapsed();
            }
            Mode::Ipkpq => {
                let server = self.server.as_ref().expect("identity mode has a server");
                let table = self.center.as_ref().expect("identity mode has a center").registrations();
                let start = Instant::now();
                let resolver = OnlineResolver::new(InProcess::new(server.clone()));
                if warm {
                    validate_ipkpq(&self.roas[0], &resolver, table, bench_now())?;
                }
                setup = start.elapsed();
                let start = Instant::now();
                for i in 0..count {
                    reports.push(validate_ipkpq(&self.roas[i % self.roas.len()], &resolver, table, bench_now())?);
                }
                work = start.elapsed();
            }
        }
        for rep in reports {
            if !rep.verdict.is_valid() {
                return Err(BenchError::Rejected(rep));
            }
            row.verify_ops += rep.sig_verifies;
            row.objects_fetched += rep.objects_fetched;
            row.bytes_fetched += rep.bytes_fetched;
        }
        row.set_times(count, setup, work);
        row.storage_bytes = storage_bytes(&self.tree);
        Ok(row)
    }
}

/// Generation throughput, rounds interleaved across `scenarios`. Each
/// round builds the tree from scratch, root certificate included, then
/// issues the ROAs. Key center setup is not timed.
pub fn run_generation_bench(scenarios: &[Scenario]) -> Result<Vec<BenchRow>, BenchError> {
    scenarios.iter().try_for_each(Scenario::check)?;
    let rounds = scenarios.iter().map(|s| s.rounds).max().unwrap_or(0);
    let mut rows = Vec::new();
    for round in 0..rounds {
        for s in scenarios.iter().filter(|s| round < s.rounds) {
            rows.push(generation_round(s, round)?);
        }
    }
    Ok(rows)
}

/// Verification throughput over pre-issued ROAs, cold and warm, rounds
/// interleaved across `scenarios`.
pub fn run_verification_bench(scenarios: &[Scenario]) -> Result<Vec<BenchRow>, BenchError> {
    scenarios.iter().try_for_each(Scenario::check)?;
    let prepared = scenarios.iter().map(Prepared::new).collect::<Result<Vec<_>, _>>()?;
    let rounds = scenarios.iter().map(|s| s.rounds).max().unwrap_or(0);
    let mut rows = Vec::new();
    for round in 0..rounds {
        for warm in [false, true] {
            for p in prepared.iter().filter(|p| round < p.scenario.rounds) {
                rows.push(p.run(p.scenario.roa_count, warm, round)?);
            }
        }
    }
    Ok(rows)
}

/// Exact per-validation byte and storage model for one ROA, no timing.
pub fn run_overhead_accounting(scenario: &Scenario) -> Result<Vec<BenchRow>, BenchError> {
    scenario.check()?;
    let s = Scenario {
        roa_count: 1,
        ..*scenario
    };
    let p = Prepared::new(&s)?;
    let mut rows = Vec::new();
    for warm in [false, true] {
        let mut row = p.run(1, warm, 0)?;
        row.bench = "overhead".to_owned();
        row.setup_secs = 0.0;
        row.work_secs = 0.0;
        row.roas_per_sec = None;
        row.steady_roas_per_sec = None;
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares fit `y = slope * x + intercept` and its R².
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Median throughput over rounds for one bench/scenario/variant.
pub fn median_throughput(rows: &[BenchRow], bench: &str, scenario: &str, variant: &str, steady: bool) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.bench == bench && r.scenario == scenario && r.variant == variant)
        .filter_map(|r| if steady { r.steady_roas_per_sec } else { r.roas_per_sec })
        .collect();
    median(&mut v)
}

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<BenchRow>, BenchError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// Mode comparison per bench, level, depth and variant: median
/// throughput of each mode and the identity/standard quotient.
pub fn summary(rows: &[BenchRow]) -> String {
    use std::collections::BTreeSet;
    use std::fmt::Write;
    let keys: BTreeSet<(String, u8, usize, usize, String)> = rows
        .iter()
        .map(|r| (r.bench.clone(), r.level, r.depth, r.fanout, r.variant.clone()))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>5} {:>5} {:<6} {:>14} {:>14} {:>7} {:>12} {:>12}",
        "bench", "level", "depth", "cache", "standard/s", "ipkpq/s", "ratio", "std bytes", "ipkpq bytes"
    );
    for (bench, level, depth, fanout, variant) in keys {
        let pick = |mode: Mode| {
            let sel: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.bench == bench && r.level == level && r.depth == depth && r.fanout == fanout)
                .filter(|r| r.variant == variant && r.mode == mode)
                .collect();
            let mut tps: Vec<f64> = sel.iter().filter_map(|r| r.roas_per_sec).collect();
            let bytes = sel.first().map(|r| r.bytes_fetched / r.roa_count.max(1) as u64);
            (median(&mut tps), bytes)
        };
        let (s_tps, s_bytes) = pick(Mode::Standard);
        let (i_tps, i_bytes) = pick(Mode::Ipkpq);
        let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.1}"));
        let ratio = match (s_tps, i_tps) {
            (Some(s), Some(i)) if s > 0.0 => format!("{:.2}x", i / s),
            _ => "-".to_owned(),
        };
        let fb = |v: Option<u64>| v.map_or("-".to_owned(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:>5} {:<6} {:>14} {:>14} {:>7} {:>12} {:>12}",
            bench,
            format!("{level}"),
            depth,
            variant,
            fmt(s_tps),
            fmt(i_tps),
            ratio,
            fb(s_bytes),
            fb(i_bytes)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode, depth: usize) -> Scenario {
        Scenario {
            roa_count: 3,
            rounds: 2,
            ..Scenario::new(Level::MlDsa44, mode, depth)
        }
    }

    #[test]
    fn generation_op_counts() {
        let rows = run_generation_bench(&[small(Mode::Standard, 3), small(Mode::Ipkpq, 3)]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].mode, Mode::Standard);
        assert_eq!(rows[1].mode, Mode::Ipkpq);
        // Tree: 3 certificate signatures and 3 CA key pairs.
        assert_eq!((rows[0].sign_ops, rows[0].keygens), (3 + 2 * 3, 3 + 3));
        assert_eq!((rows[1].sign_ops, rows[1].keygens), (3 + 3, 3));
        assert!(rows.iter().all(|r| r.roas_per_sec.unwrap() > 0.0));
    }

    #[test]
    fn zero_roa_round_has_no_throughput() {
        let s = Scenario {
            roa_count: 0,
            rounds: 1,
            ..small(Mode::Standard, 3)
        };
        let rows = run_generation_bench(&[s]).unwrap();
        assert_eq!(rows[0].roas_per_sec, None);
        assert!(rows[0].setup_secs > 0.0);
    }

    #[test]
    fn verification_counts_follow_the_law() {
        for d in [3, 4] {
            let rows = run_verification_bench(&[small(Mode::Standard, d), small(Mode::Ipkpq, d)]).unwrap();
            for r in rows {
                let per = r.verify_ops / r.roa_count as u64;
                match (r.mode, r.variant.as_str()) {
                    (Mode::Standard, _) => assert_eq!(per, d as u64 + 1),
                    (Mode::Ipkpq, _) => assert_eq!(per, 1),
                }
                if r.mode == Mode::Ipkpq && r.variant == "warm" {
                    assert_eq!(r.bytes_fetched, 3 * (13 + 1317));
                }
                if r.mode == Mode::Standard && r.variant == "warm" {
                    assert_eq!(r.objects_fetched, 0);
                }
            }
        }
    }

    #[test]
    fn overhead_model() {
        let mut std_bytes = Vec::new();
        let mut ipk = Vec::new();
        for d in 3..=5 {
            let s = run_overhead_accounting(&Scenario::new(Level::MlDsa44, Mode::Standard, d)).unwrap();
            let i = run_overhead_accounting(&Scenario::new(Level::MlDsa44, Mode::Ipkpq, d)).unwrap();
            std_bytes.push((s[0].bytes_fetched, s[0].storage_bytes));
            ipk.push((i[1].bytes_fetched, i[1].storage_bytes));
            assert!(i[0].bytes_fetched > i[1].bytes_fetched);
        }
        assert!(std_bytes.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
        assert!(ipk.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(ipk[0].0, 1330);
    }

    #[test]
    fn fit_and_median() {
        let (m, b, r2) = linear_fit(&[3.0, 4.0, 5.0], &[7.0, 9.0, 11.0]);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let rows = run_generation_bench(&[small(Mode::Standard, 3), small(Mode::Ipkpq, 3)]).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("bench,scenario,level,mode,depth,fanout,variant,round,roa_count,"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
        let mut again = Vec::new();
        write_csv(&rows, &mut again).unwrap();
        assert_eq!(buf, again);
        let text = summary(&rows);
        let line = text.lines().nth(1).unwrap();
        let s = median_throughput(&rows, "gen", &small(Mode::Standard, 3).id(), "build", false).unwrap();
        let i = median_throughput(&rows, "gen", &small(Mode::Ipkpq, 3).id(), "build", false).unwrap();
        assert!(line.contains(&format!("{:.2}x", i / s)), "{text}");
    }

    #[test]
    fn scenario_checks() {
        let mut s = Scenario::new(Level::MlDsa44, Mode::Standard, 2);
        assert!(s.check().is_err());
        s.depth = 3;
        assert!(s.check().is_ok());
        assert_eq!(s.id(), "L44-standard-d3-f1");
    }
}
