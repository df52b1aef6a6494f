use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use softsearch::geometry::{max_area, search_time};
use softsearch::sim::{self, AggregateRow, MetricsRow, RunConfig, SimError, WorldConfig, SCHEMA_VERSION};
use softsearch::strategies::StrategyKind;
use softsearch::world::{generate_random, ObstacleSpec};

#[derive(Parser)]
#[command(name = "softsearch", version, about = "Multi-robot search simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random environment file.
    GenEnv {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 480)]
        width: i32,
        #[arg(long, default_value_t = 600)]
        height: i32,
        /// `sparse`, `none`, or counts and sizes like `rects=2-4:10-30,circles=0-2:4-10`
        #[arg(long, default_value = "sparse")]
        obstacles: String,
        #[arg(long, default_value = "world.txt")]
        out: PathBuf,
    },
    /// Run one simulation.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, dotted keys reach into sections (`world.seed=3`).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run strategies x worlds x replications and aggregate.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "batch_out")]
        out: PathBuf,
    },
    /// Search time and area per robot for the standard team sizes.
    Table1 {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Problems with what the user handed us, as opposed to failures while running.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::GenEnv {
            seed,
            width,
            height,
            obstacles,
            out,
        } => cmd_gen_env(seed, width, height, &obstacles, &out),
        Cmd::Run { config, overrides, out } => cmd_run(&config, &overrides, &out),
        Cmd::Batch { config, jobs, out } => cmd_batch(&config, jobs, &out),
        Cmd::Table1 { out } => cmd_table1(&out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let input = e.chain().any(|c| {
                c.is::<InputError>()
                    || c.is::<toml::de::Error>()
                    || matches!(c.downcast_ref::<SimError>(), Some(SimError::Config(_) | SimError::World(_)))
            });
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}

/// Writes through a sibling temp file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_toml(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parses `a.b=v`; `v` is read as a TOML value, or taken as a bare string.
fn apply_override(table: &mut toml::Table, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| InputError(format!("override `{kv}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| InputError(format!("override `{kv}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn cmd_gen_env(seed: u64, width: i32, height: i32, obstacles: &str, out: &Path) -> Result<()> {
    let spec: ObstacleSpec = obstacles.parse().map_err(|e| InputError(format!("{e}")))?;
    let world = generate_random(seed, width, height, &spec).map_err(|e| InputError(format!("{e}")))?;
    write_atomic(out, world.to_text().as_bytes())?;
    println!(
        "{}: {}x{} free={} obstacles={}",
        out.display(),
        world.width(),
        world.height(),
        world.free_count(),
        world.area() - world.free_count()
    );
    Ok(())
}

fn cmd_run(config: &Path, overrides: &[String], out: &Path) -> Result<()> {
    let mut table = read_toml(config)?;
    for kv in overrides {
        apply_override(&mut table, kv)?;
    }
    let mut cfg: RunConfig = table.try_into().context("invalid run config")?;
    // relative world paths are taken from the config's directory
    if let Some(f) = &cfg.world.file {
        if f.is_relative() {
            if let Some(dir) = config.parent() {
                cfg.world.file = Some(dir.join(f));
            }
        }
    }
    cfg.validate()?;
    let world = cfg.world.load()?;
    let mut resolved = cfg.resolved(&world)?;
    if let Some(f) = &resolved.world.file {
        resolved.world.file = Some(fs::canonicalize(f)?);
    }
    eprintln!(
        "running {} N={} tau={} on {}",
        resolved.strategy,
        resolved.robots,
        resolved.tau.unwrap_or_default(),
        resolved.world.label()
    );
    let result = sim::Simulation::new(&resolved, &world, true)?.run()?;

    write_atomic(&out.join("resolved_config.toml"), toml::to_string(&resolved)?.as_bytes())?;
    write_atomic(&out.join("trace.txt"), result.trace.as_bytes())?;
    let rows = sim::metrics_rows(&resolved, &result);
    write_atomic(&out.join("metrics.csv"), &csv_bytes(&rows)?)?;
    for r in &result.robots {
        println!(
            "robot={} coverage_cells={} coverage_norm={:.4} overlap_cells={} interrupt_ticks={} final=({},{})",
            r.id, r.coverage_cells, r.coverage_norm, r.overlap_cells, r.interrupt_ticks, r.final_pos.x, r.final_pos.y
        );
    }
    Ok(())
}

fn default_replications() -> usize {
    1
}

/// Batch description. Every key of `base` is a run-config key shared by all runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchConfig {
    #[serde(default = "sim_schema")]
    schema_version: u32,
    strategies: Vec<StrategyKind>,
    robots: Vec<usize>,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default)]
    master_seed: u64,
    worlds: Vec<WorldConfig>,
    #[serde(default)]
    base: toml::Table,
}

fn sim_schema() -> u32 {
    SCHEMA_VERSION
}

struct Job {
    cfg: RunConfig,
    file: PathBuf,
}

impl BatchConfig {
    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(InputError(format!("schema_version {} is not supported", self.schema_version)));
        }
        for key in ["strategy", "robots", "seed", "world"] {
            if self.base.contains_key(key) {
                bail!(InputError(format!("`base.{key}` is set per run and cannot appear in base")));
            }
        }
        if self.strategies.is_empty() || self.robots.is_empty() || self.worlds.is_empty() || self.replications == 0 {
            bail!(InputError("batch needs at least one strategy, team size, world and replication".into()));
        }
        let labels: BTreeSet<String> = self.worlds.iter().map(WorldConfig::label).collect();
        if labels.len() != self.worlds.len() {
            bail!(InputError("world labels must be distinct".into()));
        }
        Ok(())
    }

    /// The shared run settings with all defaults filled in.
    fn resolved_base(&self) -> Result<toml::Table> {
        let mut t = toml::Table::try_from(RunConfig::new(StrategyKind::Sos, 1))?;
        for (k, v) in &self.base {
            t.insert(k.clone(), v.clone());
        }
        for key in ["strategy", "robots", "seed", "world"] {
            t.remove(key);
        }
        Ok(t)
    }

    fn jobs(&self, runs_dir: &Path) -> Result<Vec<Job>> {
        let base = self.resolved_base()?;
        let seeds = sim::replication_seeds(self.master_seed, self.replications);
        let mut out = Vec::new();
        for &s in &self.strategies {
            for &n in &self.robots {
                for w in &self.worlds {
                    for (i, &seed) in seeds.iter().enumerate() {
                        let mut t = base.clone();
                        t.insert("strategy".into(), toml::Value::String(s.name().into()));
                        t.insert("robots".into(), toml::Value::Integer(n as i64));
                        t.insert("world".into(), toml::Value::Table(toml::Table::try_from(w)?));
                        let mut cfg: RunConfig = t.try_into().context("invalid batch base")?;
                        cfg.seed = seed;
                        cfg.validate()?;
                        let file = runs_dir.join(format!("{}_N{}_{}_r{:04}.csv", s.name(), n, w.label(), i));
                        out.push(Job { cfg, file });
                    }
                }
            }
        }
        Ok(out)
    }
}

fn cmd_batch(config: &Path, jobs: usize, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).map_err(|e| InputError(format!("cannot read config {}: {e}", config.display())))?;
    let mut batch: BatchConfig = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    for w in &mut batch.worlds {
        if let Some(f) = &w.file {
            if f.is_relative() {
                if let Some(dir) = config.parent() {
                    w.file = Some(dir.join(f));
                }
            }
        }
    }
    batch.validate()?;
    if jobs == 0 {
        bail!(InputError("--jobs must be at least 1".into()));
    }
    // fail on unreadable worlds before any work starts
    for w in &batch.worlds {
        w.load()?;
    }

    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    let mut echoed = batch.clone();
    echoed.base = batch.resolved_base()?;
    write_atomic(&out.join("resolved_config.toml"), toml::to_string(&echoed)?.as_bytes())?;

    let all = batch.jobs(&runs_dir)?;
    let pending: Vec<&Job> = all.iter().filter(|j| !j.file.exists()).collect();
    eprintln!("{} runs, {} already done, {} to go", all.len(), all.len() - pending.len(), pending.len());
    let total = pending.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| {
        pending.par_iter().try_for_each(|job| -> Result<()> {
            let res = sim::run(&job.cfg, false)?;
            let rows = sim::metrics_rows(&job.cfg, &res);
            write_atomic(&job.file, &csv_bytes(&rows)?)?;
            let k = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
            eprintln!(
                "[{k}/{total}] {} N={} {} seed={} mean={:.4}",
                job.cfg.strategy,
                job.cfg.robots,
                job.cfg.world.label(),
                job.cfg.seed,
                res.mean_coverage()
            );
            Ok(())
        })
    })?;

    let mut rows: Vec<MetricsRow> = Vec::new();
    for job in &all {
        rows.extend(read_csv::<MetricsRow>(&job.file)?);
    }
    write_atomic(&out.join("all_runs.csv"), &csv_bytes(&rows)?)?;
    let agg: Vec<AggregateRow> = sim::aggregate(&rows);
    write_atomic(&out.join("aggregate.csv"), &csv_bytes(&agg)?)?;
    for a in agg.iter().filter(|a| a.world == "all") {
        println!(
            "{} N={} runs={} coverage={:.4}±{:.4} overlap={:.1} interrupt={:.1}",
            a.strategy, a.n, a.runs, a.mean_coverage_norm, a.std_coverage_norm, a.mean_overlap_cells, a.mean_interrupt_ticks
        );
    }
    Ok(())
}

/// Team sizes of the standard experiment table.
const TABLE1_TEAMS: [usize; 6] = [2, 3, 4, 7, 8, 10];

#[derive(Debug, Serialize)]
struct Table1Row {
    #[serde(rename = "N")]
    n: usize,
    tau: u64,
    area: u64,
}

fn table1_rows() -> Result<Vec<Table1Row>> {
    let (w, h, r, gamma, k) = (480, 600, 20.0, 1.0, 0.6);
    TABLE1_TEAMS
        .iter()
        .map(|&n| {
            let tau = search_time(w, h, r, gamma, n, k)?;
            Ok(Table1Row {
                n,
                tau,
                area: max_area(tau as f64, r, gamma),
            })
        })
        .collect()
}

fn cmd_table1(out: &Path) -> Result<()> {
    let rows = table1_rows()?;
    println!("{:>4} {:>6} {:>8}", "N", "tau", "A");
    for r in &rows {
        println!("{:>4} {:>6} {:>8}", r.n, r.tau, r.area);
    }
    write_atomic(&out.join("table1.csv"), &csv_bytes(&rows)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_into_sections() {
        let mut t: toml::Table = toml::from_str("strategy = \"sos\"\n[world]\nseed = 1\n").unwrap();
        apply_override(&mut t, "world.seed=7").unwrap();
        apply_override(&mut t, "strategy=ars").unwrap();
        apply_override(&mut t, "start.center=[10, 20]").unwrap();
        assert_eq!(t["world"]["seed"].as_integer(), Some(7));
        assert_eq!(t["strategy"].as_str(), Some("ars"));
        assert_eq!(t["start"]["center"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "strategy.x=1").is_err());
    }

    #[test]
    fn table_rows_match_the_standard_setup() {
        let got: Vec<(usize, u64, u64)> = table1_rows().unwrap().iter().map(|r| (r.n, r.tau, r.area)).collect();
        assert_eq!(
            got,
            vec![
                (2, 2141, 86896),
                (3, 1421, 58096),
                (4, 1061, 43696),
                (7, 598, 25176),
                (8, 521, 22096),
                (10, 413, 17776)
            ]
        );
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
