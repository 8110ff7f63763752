//! `ipkpq`: key center, directory, CA, validation and benchmark commands.

mod state;

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ipkpq_core::bench::{self, BenchRow, Scenario};
use ipkpq_core::center::{KeyCenter, RegistrationTable, FILE_PK, REGISTRATIONS_FILE};
use ipkpq_core::directory::FilePk;
use ipkpq_core::mldsa::Level;
use ipkpq_core::protocol::run_keygen;
use ipkpq_core::resolver::{FileResolver, KeyResolver, OnlineResolver, QueryServer, Resolution, Tcp};
use ipkpq_core::rpki::{
    repo, AsRange, CaKeys, CaNode, InrSet, IpPrefix, Mode, Repository, RoaObject, Software, Validity,
};
use ipkpq_core::seed::{Dimensions, Seed32};
use ipkpq_core::validator::{validate_ipkpq, validate_standard, ValidationReport};
use serde_json::json;

use state::DataDir;

#[derive(Parser)]
#[command(name = "ipkpq", version, about = "Identity-based ML-DSA keys for RPKI")]
struct Cli {
    /// Data directory holding the key center, repository and CA keys.
    #[arg(long, global = true, env = "IPKPQ_DIR", default_value = "ipkpq-data")]
    dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key center administration.
    #[command(subcommand)]
    Center(CenterCmd),
    /// Inspect published File_PK files.
    #[command(subcommand)]
    Filepk(FilepkCmd),
    /// Resolve an explicit identity (id, R) to a checked public key.
    Resolve(ResolveArgs),
    /// Serve online key queries over TCP.
    Serve(ServeArgs),
    /// Certification authority operations.
    #[command(subcommand)]
    Ca(CaCmd),
    /// Validate a ROA and print the report as JSON.
    Validate(ValidateArgs),
    /// Throughput and overhead benchmarks, written as CSV.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum CenterCmd {
    /// Create the key center and its seed matrices.
    Init {
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 32)]
        h: usize,
        #[arg(long, default_value = "44", value_parser = parse_level)]
        level: Level,
    },
    /// Register a CA identity.
    Register {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        attrs: String,
        #[arg(long, default_value_t = 365)]
        days: i64,
    },
    /// Extend a registration; the CA must run key generation again.
    Renew {
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 365)]
        days: i64,
    },
    /// Revoke a registration.
    Revoke {
        #[arg(long)]
        id: String,
    },
    /// Print the current registration of every identity.
    List,
    /// Write File_PK and the registration table for relying parties.
    Publish {
        /// Output directory [default: <dir>/published].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FilepkCmd {
    /// Print the header and record summary.
    Inspect { path: PathBuf },
    /// Print the latest public key recorded for an id, hex encoded.
    Lookup {
        path: PathBuf,
        #[arg(long)]
        id: String,
    },
}

#[derive(Args)]
struct Source {
    /// Local File_PK [default: <dir>/published/file_pk.bin].
    #[arg(long, conflicts_with = "server")]
    filepk: Option<PathBuf>,
    /// Address of an online query server.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct ResolveArgs {
    #[arg(long)]
    id: String,
    /// Accompanying public key R, 64 hex digits.
    #[arg(long, value_parser = parse_seed)]
    r: Seed32,
    #[command(flatten)]
    source: Source,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    filepk: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7400")]
    listen: String,
}

#[derive(Subcommand)]
enum CaCmd {
    /// Create a trust anchor holding all resources.
    Init {
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Standard mode only; identity mode uses the key center's level.
        #[arg(long, default_value = "44", value_parser = parse_level)]
        level: Level,
        #[arg(long, default_value_t = 365)]
        days: i64,
    },
    /// Certify a child CA named `<parent>||<label>`.
    IssueRc {
        #[arg(long)]
        parent: String,
        #[arg(long)]
        label: String,
        #[arg(long = "prefix", required = true)]
        prefixes: Vec<IpPrefix>,
        #[arg(long = "asn")]
        asns: Vec<AsRange>,
        #[arg(long, default_value_t = 365)]
        days: i64,
    },
    /// Issue a ROA and publish it in the repository.
    IssueRoa {
        #[arg(long)]
        ca: String,
        #[arg(long = "prefix", required = true)]
        prefixes: Vec<IpPrefix>,
        #[arg(long)]
        asn: u32,
        /// Must match the issuing CA's mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    roa: PathBuf,
    /// Standard: trust anchor locator [default: <dir>/tal.json].
    #[arg(long)]
    tal: Option<PathBuf>,
    /// Standard: repository root [default: <dir>/repo].
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Identity: registration table [default: <dir>/published/registrations.jsonl].
    #[arg(long)]
    registrations: Option<PathBuf>,
    #[command(flatten)]
    source: Source,
    /// Validation time, RFC 3339 [default: now].
    #[arg(long)]
    at: Option<DateTime<Utc>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Gen,
    Verify,
    Overhead,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeSel {
    Both,
    Standard,
    Ipkpq,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_enum)]
    kind: BenchKind,
    /// Comma-separated levels.
    #[arg(long, default_value = "44", value_delimiter = ',', value_parser = parse_level)]
    level: Vec<Level>,
    #[arg(long, value_enum, default_value_t = ModeSel::Both)]
    mode: ModeSel,
    /// One depth or an inclusive range such as `3..8`.
    #[arg(long, default_value = "3..8", value_parser = parse_depths)]
    depth: DepthRange,
    #[arg(long, default_value_t = 1)]
    fanout: usize,
    #[arg(long, default_value_t = 8)]
    rounds: usize,
    /// ROAs per round.
    #[arg(long, default_value_t = 200)]
    roas: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run scenario groups on this many threads. Rounds are then no
    /// longer interleaved across groups.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct DepthRange(usize, usize);

fn parse_level(s: &str) -> Result<Level, String> {
    s.trim_start_matches("ML-DSA-")
        .parse()
        .ok()
        .and_then(Level::from_number)
        .ok_or_else(|| format!("unknown level {s:?}; use 44, 65 or 87"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_seed(s: &str) -> Result<Seed32, String> {
    hex::decode(s)
        .map_err(|e| e.to_string())?
        .try_into()
        .map_err(|_| "R must be 32 bytes".to_owned())
}

fn parse_depths(s: &str) -> Result<DepthRange, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
        None => (num(s)?, num(s)?),
    };
    if lo > hi {
        return Err(format!("empty depth range {s}"));
    }
    Ok(DepthRange(lo, hi))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn validity(days: i64) -> Result<Validity> {
    if days <= 0 {
        bail!("--days must be positive");
    }
    let now = Utc::now();
    Ok(Validity::new(now, now + Duration::days(days)))
}

fn center(dir: &DataDir, cmd: CenterCmd) -> Result<()> {
    let mut rng = rand::rngs::OsRng;
    match cmd {
        CenterCmd::Init { m, h, level } => {
            let dims = Dimensions::new(m, h)?;
            let kc = KeyCenter::init_at(&dir.center_dir(), level, dims, &state::passphrase()?, &mut rng)?;
            print_json(&json!({
                "level": level.number(),
                "m": m,
                "h": h,
                "file_pk_bytes": kc.file_pk().as_bytes().len(),
            }))
        }
        CenterCmd::Register { id, attrs, days } => {
            let mut kc = dir.open_center()?;
            let v = validity(days)?;
            let rec = kc.register(&attrs, &id, v.not_before, v.not_after, &mut rng)?;
            dir.save_center(&kc)?;
            print_json(&serde_json::to_value(rec)?)
        }
        CenterCmd::Renew { id, days } => {
            let mut kc = dir.open_center()?;
            let rec = kc.renew(&id, Utc::now() + Duration::days(days), &mut rng)?;
            dir.save_center(&kc)?;
            print_json(&serde_json::to_value(rec)?)
        }
        CenterCmd::Revoke { id } => {
            let mut kc = dir.open_center()?;
            let rec = kc.revoke(&id)?;
            dir.save_center(&kc)?;
            print_json(&serde_json::to_value(rec)?)
        }
        CenterCmd::List => {
            let kc = dir.open_center()?;
            for rec in kc.registrations().current() {
                println!("{}", serde_json::to_string(rec)?);
            }
            Ok(())
        }
        CenterCmd::Publish { out } => {
            let kc = dir.open_center()?;
            let out = out.unwrap_or_else(|| dir.published_dir());
            std::fs::create_dir_all(&out)?;
            kc.publish_to(&out)?;
            print_json(&json!({
                "dir": out,
                "records": kc.file_pk().record_count(),
                "file_pk_bytes": kc.file_pk().as_bytes().len(),
            }))
        }
    }
}

fn filepk(cmd: FilepkCmd) -> Result<()> {
    match cmd {
        FilepkCmd::Inspect { path } => {
            let f = FilePk::read(&path)?;
            let h = f.header();
            let records: Vec<_> = f
                .records()
                .into_iter()
                .map(|r| json!({ "offset": r.offset, "id": r.id, "rho": hex::encode(&r.pk[..32]) }))
                .collect();
            print_json(&json!({
                "level": h.level.number(),
                "m": h.dims.m(),
                "h": h.dims.h(),
                "matrix_bytes": h.matrix_len(),
                "records_offset": h.records_offset(),
                "record_count": f.record_count(),
                "bytes": f.as_bytes().len(),
                "records": records,
            }))
        }
        FilepkCmd::Lookup { path, id } => {
            let f = FilePk::read(&path)?;
            let pk = f.lookup(&id).ok_or_else(|| anyhow!("no record for {id:?}"))?;
            println!("{}", hex::encode(pk));
            Ok(())
        }
    }
}

fn resolver(dir: &DataDir, source: &Source) -> Result<Box<dyn KeyResolver>> {
    Ok(match (&source.server, &source.filepk) {
        (Some(addr), _) => Box::new(OnlineResolver::new(
            Tcp::connect(addr.as_str()).with_context(|| format!("connecting to {addr}"))?,
        )),
        (None, path) => {
            let path = path.clone().unwrap_or_else(|| dir.published_dir().join(FILE_PK));
            Box::new(FileResolver::new(
                FilePk::read(&path).with_context(|| format!("reading {}", path.display()))?,
            ))
        }
    })
}

fn resolve(dir: &DataDir, args: ResolveArgs) -> Result<ExitCode> {
    let lookup = resolver(dir, &args.source)?.lookup(&args.id, &args.r)?;
    let (result, found) = match &lookup.resolution {
        Resolution::Key(k) => (json!({ "result": "key", "pk": hex::encode(&k.pk) }), true),
        Resolution::Bottom(b) => (json!({ "result": "bottom", "reason": format!("{b:?}") }), false),
    };
    let mut v = result;
    v["objects_fetched"] = json!(lookup.objects_fetched);
    v["bytes_fetched"] = json!(lookup.bytes_fetched);
    print_json(&v)?;
    Ok(if found { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn serve(dir: &DataDir, args: ServeArgs) -> Result<()> {
    let path = args.filepk.unwrap_or_else(|| dir.published_dir().join(FILE_PK));
    let file = FilePk::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let listener = TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    Arc::new(QueryServer::new(file))
        .spawn_tcp(listener)
        .join()
        .map_err(|_| anyhow!("server thread panicked"))
}

/// Keys for a new CA named `name`: local generation, or a key generation
/// run with the local key center.
fn new_keys(dir: &DataDir, name: &str, mode: Mode, level: Level) -> Result<CaKeys> {
    let mut rng = rand::rngs::OsRng;
    match mode {
        Mode::Standard => Ok(CaKeys::generate_standard(level, &Software, &mut rng)),
        Mode::Ipkpq => {
            let mut kc = dir.open_center()?;
            if kc.level() != level {
                bail!("key center is ML-DSA-{}, CA is ML-DSA-{}", kc.level().number(), level.number());
            }
            let key = run_keygen(&mut kc, name, &mut rng)
                .with_context(|| format!("key generation for {name:?} (register it with the center first)"))?;
            dir.save_center(&kc)?;
            Ok(CaKeys::from_protocol(name, key))
        }
    }
}

fn ca(dir: &DataDir, cmd: CaCmd) -> Result<()> {
    match cmd {
        CaCmd::Init { name, mode, level, days } => {
            if dir.ca_exists(&name) {
                bail!("CA {name:?} already exists");
            }
            let level = match mode {
                Mode::Ipkpq => dir.open_center()?.level(),
                Mode::Standard => level,
            };
            let keys = new_keys(dir, &name, mode, level)?;
            let (root, _) = CaNode::root(&name, level, keys, InrSet::all(), validity(days)?)?;
            dir.save_ca(&root)?;
            dir.write_tal(&root)?;
            print_json(&json!({
                "name": name,
                "mode": mode,
                "certificate": dir.repo_dir().join(repo::rc_path(&name)),
                "certificate_bytes": root.rc().encode().len(),
                "tal": dir.tal_path(),
            }))
        }
        CaCmd::IssueRc { parent, label, prefixes, asns, days } => {
            let mut p = dir.load_ca(&parent)?;
            let name = format!("{parent}||{label}");
            if dir.ca_exists(&name) {
                bail!("CA {name:?} already exists");
            }
            let keys = new_keys(dir, &name, p.mode(), p.level())?;
            let (child, _) = p.issue_rc(&label, keys, InrSet::new(prefixes, asns), validity(days)?)?;
            dir.save_ca(&child)?;
            dir.save_ca(&p)?;
            print_json(&json!({
                "name": child.name(),
                "mode": child.mode(),
                "resources": child.inr().to_string(),
                "certificate": dir.repo_dir().join(repo::rc_path(child.name())),
                "certificate_bytes": child.rc().encode().len(),
            }))
        }
        CaCmd::IssueRoa { ca, prefixes, asn, mode } => {
            let mut node = dir.load_ca(&ca)?;
            if let Some(m) = mode {
                if m != node.mode() {
                    bail!("CA {ca:?} is a {} CA, not {m}", node.mode());
                }
            }
            let inr = InrSet::new(prefixes, vec![AsRange::single(asn)]);
            let (roa, stats) = node.issue_roa(inr, Utc::now(), &mut rand::rngs::OsRng)?;
            node.publish_roa(&dir.repo(), &roa)?;
            dir.save_ca(&node)?;
            let path = dir.repo_dir().join(repo::roa_path(&ca, &roa.serial.to_string()));
            print_json(&json!({
                "roa": path,
                "mode": roa.mode(),
                "serial": roa.serial,
                "bytes": roa.encode().len(),
                "sign_ops": stats.sign_ops,
            }))
        }
    }
}

fn validate(dir: &DataDir, args: ValidateArgs) -> Result<ExitCode> {
    let roa = RoaObject::decode(&std::fs::read(&args.roa).with_context(|| format!("reading {}", args.roa.display()))?)?;
    let now = args.at.unwrap_or_else(Utc::now);
    let report: ValidationReport = match args.mode {
        Mode::Standard => {
            let (tal, digest) = state::read_tal(&args.tal.unwrap_or_else(|| dir.tal_path()))?;
            let store = ipkpq_core::rpki::DirRepo::new(args.repo.unwrap_or_else(|| dir.repo_dir()));
            let path = repo::path_of(&tal.uri).expect("checked when read");
            let anchor = store.get(path)?.ok_or_else(|| anyhow!("trust anchor {} not in repository", tal.uri))?;
            validate_standard(&roa, &store, &anchor, &digest, now)?
        }
        Mode::Ipkpq => {
            let path = args
                .registrations
                .unwrap_or_else(|| dir.published_dir().join(REGISTRATIONS_FILE));
            let table = RegistrationTable::read(&path).with_context(|| format!("reading {}", path.display()))?;
            validate_ipkpq(&roa, resolver(dir, &args.source)?.as_ref(), &table, now)?
        }
    };
    print_json(&serde_json::to_value(&report)?)?;
    Ok(if report.verdict.is_valid() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let modes: &[Mode] = match args.mode {
        ModeSel::Both => &[Mode::Standard, Mode::Ipkpq],
        ModeSel::Standard => &[Mode::Standard],
        ModeSel::Ipkpq => &[Mode::Ipkpq],
    };
    let mut scenarios = Vec::new();
    for &level in &args.level {
        for depth in args.depth.0..=args.depth.1 {
            for &mode in modes {
                scenarios.push(Scenario {
                    fanout: args.fanout,
                    rounds: args.rounds,
                    roa_count: args.roas,
                    seed: args.seed,
                    ..Scenario::new(level, mode, depth)
                });
            }
        }
    }
    let run = |group: &[Scenario]| -> Result<Vec<BenchRow>, bench::BenchError> {
        match args.kind {
            BenchKind::Gen => bench::run_generation_bench(group),
            BenchKind::Verify => bench::run_verification_bench(group),
            BenchKind::Overhead => {
                let mut rows = Vec::new();
                for s in group {
                    rows.extend(bench::run_overhead_accounting(s)?);
                }
                Ok(rows)
            }
        }
    };
    let rows = if args.jobs <= 1 {
        run(&scenarios)?
    } else {
        // Each thread gets the scenarios of one or more depths, both
        // modes together, so pairs stay interleaved.
        let per = scenarios.len().div_ceil(args.jobs).next_multiple_of(modes.len());
        std::thread::scope(|s| {
            let handles: Vec<_> = scenarios.chunks(per).map(|g| s.spawn(move || run(g))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("bench thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };
    match &args.out {
        Some(path) => {
            bench::write_csv(&rows, std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
            print!("{}", bench::summary(&rows));
        }
        None => {
            bench::write_csv(&rows, std::io::stdout().lock())?;
            eprint!("{}", bench::summary(&rows));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let dir = DataDir::new(&cli.dir);
    match cli.command {
        Command::Center(c) => center(&dir, c)?,
        Command::Filepk(c) => filepk(c)?,
        Command::Resolve(a) => return resolve(&dir, a),
        Command::Serve(a) => serve(&dir, a)?,
        Command::Ca(c) => ca(&dir, c)?,
        Command::Validate(a) => return validate(&dir, a),
        Command::Bench(a) => bench_cmd(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_ranges() {
        assert!(matches!(parse_depths("3..8"), Ok(DepthRange(3, 8))));
        assert!(matches!(parse_depths("3..=8"), Ok(DepthRange(3, 8))));
        assert!(matches!(parse_depths("5"), Ok(DepthRange(5, 5))));
        assert!(parse_depths("8..3").is_err());
        assert!(parse_depths("x").is_err());
    }

    #[test]
    fn levels_and_seeds() {
        assert_eq!(parse_level("65"), Ok(Level::MlDsa65));
        assert_eq!(parse_level("ML-DSA-87"), Ok(Level::MlDsa87));
        assert!(parse_level("42").is_err());
        assert_eq!(parse_seed(&"ab".repeat(32)), Ok([0xab; 32]));
        assert!(parse_seed("abcd").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
