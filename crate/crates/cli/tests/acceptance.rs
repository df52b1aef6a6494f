//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softsearch::coordination::{assignment_cost, hungarian};
use softsearch::geometry::{margin_time, SearchBudget};
use softsearch::navigation::{plan, BugConfig, BugKind, NavError};
use softsearch::sim::{replication_seeds, run, RunConfig, RunResult, Simulation};
use softsearch::strategies::{Assignment, StrategyKind};
use softsearch::world::{generate_random, Cell, GridWorld, ObstacleSpec, Span};

const BIN: &str = env!("CARGO_BIN_EXE_softsearch");

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    let took = t0.elapsed();
    let pass = o.pass && took <= limit;
    println!(
        "{} {name}: {} ({:.2}s, limit {:.0}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs_f64()
    );
    pass
}

fn table1() -> Outcome {
    let want: [(usize, u64, u64); 6] = [
        (2, 2141, 86896),
        (3, 1421, 58096),
        (4, 1061, 43696),
        (7, 598, 25176),
        (8, 521, 22096),
        (10, 413, 17776),
    ];
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN).args(["table1", "--out"]).arg(dir.path()).output().unwrap();
    let printed: Vec<(usize, u64, u64)> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<u64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            (v[0] as usize, v[1], v[2])
        })
        .collect();
    let csv = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap_or_default();
    let from_csv: Vec<(usize, u64, u64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<u64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0] as usize, v[1], v[2])
        })
        .collect();
    Outcome {
        pass: out.status.success() && printed == want && from_csv == want,
        detail: format!("printed {printed:?}"),
    }
}

fn margin_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = rng.gen_range(1.0..50.0);
        let gamma = rng.gen_range(1..=4) as f64;
        let tau = rng.gen_range(10.0..5000.0);
        let t = rng.gen_range(0.0..tau);
        let m = rng.gen_range(2.0 * r..6.0 * r);
        let b = SearchBudget::new(tau, r, gamma).at(t, 0.0);
        let tau0 = margin_time(m, &b).unwrap();
        // side of the square holding what can still be scanned
        let s = (std::f64::consts::PI * r * r + 2.0 * gamma * r * (tau - t)).sqrt();
        let rhs = 4.0 * (m * m + m * s);
        worst = worst.max((2.0 * gamma * r * tau0 - rhs).abs() / rhs);
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max relative error {worst:.2e} over 1000 draws"),
    }
}

fn bfs_reachable(w: &GridWorld, s: Cell, g: Cell) -> bool {
    let mut seen = vec![false; w.area()];
    let idx = |c: Cell| (c.y * w.width() + c.x) as usize;
    let mut q = VecDeque::from([s]);
    seen[idx(s)] = true;
    while let Some(c) = q.pop_front() {
        if c == g {
            return true;
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                let n = c.offset(dx, dy);
                if w.is_accessible(n) && !seen[idx(n)] {
                    seen[idx(n)] = true;
                    q.push_back(n);
                }
            }
        }
    }
    false
}

fn free_cell(w: &GridWorld, rng: &mut ChaCha8Rng) -> Cell {
    loop {
        let c = Cell::new(rng.gen_range(0..w.width()), rng.gen_range(0..w.height()));
        if w.is_accessible(c) {
            return c;
        }
    }
}

fn bug_bounds() -> Outcome {
    let spec = ObstacleSpec {
        rect_count: Span::new(1, 5),
        rect_size: Span::new(4, 18),
        circle_count: Span::new(0, 3),
        circle_radius: Span::new(2, 6),
    };
    let kinds = [BugKind::Bug1, BugKind::Bug2, BugKind::DistBug];
    let mut totals = [0usize; 3];
    let mut counted = 0usize;
    let mut problems = Vec::new();
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let side = rng.gen_range(30..=100);
        let Some(w) = (0..50).find_map(|k| generate_random(seed * 64 + k, side, side, &spec).ok()) else {
            problems.push(format!("seed {seed}: no world"));
            continue;
        };
        let (s, g) = (free_cell(&w, &mut rng), free_cell(&w, &mut rng));
        let reachable = bfs_reachable(&w, s, g);
        let mut lens = [0usize; 3];
        for (k, kind) in kinds.into_iter().enumerate() {
            match plan(&w, s, g, &BugConfig::new(kind)) {
                Ok((path, cert)) => {
                    let legal = path.iter().all(|&c| w.is_accessible(c))
                        && path.last().copied().unwrap_or(s) == g
                        && std::iter::once(s).chain(path.iter().copied()).zip(&path).all(|(a, &b)| a.is_8_adjacent(b));
                    if !legal {
                        problems.push(format!("seed {seed} {kind:?}: illegal path"));
                    }
                    // the certificate's bound already carries the 4k slack
                    if !cert.within_bound(kind) {
                        problems.push(format!("seed {seed} {kind:?}: {} > {:.1}", path.len(), cert.bound(kind)));
                    }
                    lens[k] = path.len();
                }
                Err(NavError::Unreachable { .. }) if !reachable => {}
                Err(e) => problems.push(format!("seed {seed} {kind:?}: {e}")),
            }
        }
        if reachable {
            counted += 1;
            for k in 0..3 {
                totals[k] += lens[k];
            }
        }
    }
    let mean = totals.map(|t| t as f64 / counted.max(1) as f64);
    let ordered = mean[2] <= mean[1] && mean[1] <= mean[0];
    Outcome {
        pass: problems.is_empty() && ordered,
        detail: format!(
            "{counted} reachable pairs, mean steps bug1 {:.1} bug2 {:.1} distbug {:.1}, problems {problems:?}",
            mean[0], mean[1], mean[2]
        ),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian_optimal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=7);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0..100) as f64 + rng.gen_range(0.0..1.0)).collect())
            .collect();
        let got = assignment_cost(&cost, &hungarian(&cost));
        let best = permutations(n)
            .iter()
            .map(|p| (0..n).map(|i| cost[i][p[i]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if (got - best).abs() > 1e-9 {
            bad += 1;
        }
    }
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} of 500 matrices off the brute-force minimum"),
    }
}

fn sos_disjoint(ledger_problems: &mut Vec<String>) -> Outcome {
    let mut problems = Vec::new();
    let mut meetings = 0;
    for i in 0..20u64 {
        let mut cfg = RunConfig::new(StrategyKind::Sos, 2 + (i % 3) as usize);
        cfg.seed = 100 + i;
        cfg.world.seed = 1 + i % 4;
        let m = 2 * cfg.r;
        let world = cfg.world.load().unwrap();
        let mut sim = Simulation::new(&cfg, &world, false).unwrap();
        let mut seen = 0;
        while !sim.is_finished() {
            sim.step().unwrap();
            for rec in &sim.encounters()[seen..] {
                meetings += 1;
                let regions: Vec<_> = rec
                    .assignments
                    .iter()
                    .filter_map(|(id, a)| match a {
                        Assignment::Region(r) => Some((*id, *r)),
                        Assignment::Sector { .. } => None,
                    })
                    .collect();
                for (x, &(a, ra)) in regions.iter().enumerate() {
                    for &(b, rb) in &regions[x + 1..] {
                        if ra.intersects(&rb) || ra.separation(&rb) < m {
                            problems.push(format!("run {i} t={}: robots {a},{b} gap {}", rec.tick, ra.separation(&rb)));
                        }
                    }
                    for z in &sim.robots()[a].interference.0 {
                        if z.intersects(&ra) {
                            problems.push(format!("run {i} t={}: robot {a} region meets its interference set", rec.tick));
                        }
                    }
                }
            }
            seen = sim.encounters().len();
        }
        let res = sim.finish().unwrap();
        conservation(&format!("sos run {i}"), &res, ledger_problems);
    }
    Outcome {
        pass: problems.is_empty() && meetings > 0,
        detail: format!("20 runs, {meetings} meetings, problems {problems:?}"),
    }
}

fn conservation(label: &str, res: &RunResult, problems: &mut Vec<String>) {
    for r in &res.robots {
        let sum = r.explore_ticks + r.protocol_ticks + r.interrupt_ticks;
        if sum != res.tau {
            problems.push(format!("{label} robot {}: {sum} != {}", r.id, res.tau));
        }
    }
}

fn fig9(ledger_problems: &mut Vec<String>) -> Outcome {
    let seeds = replication_seeds(0, 30);
    let mut stats = Vec::new();
    for s in StrategyKind::ALL {
        let mut cov = Vec::new();
        for w in 1..=3u64 {
            for &seed in &seeds {
                let mut cfg = RunConfig::new(s, 8);
                cfg.world.seed = w;
                cfg.seed = seed;
                let res = run(&cfg, false).unwrap();
                conservation(&format!("{s} w{w} seed {seed}"), &res, ledger_problems);
                cov.extend(res.robots.iter().map(|r| r.coverage_norm * 100.0));
            }
        }
        let n = cov.len() as f64;
        let mean = cov.iter().sum::<f64>() / n;
        let std = (cov.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
        stats.push((s, mean, std));
    }
    let (sos, ars, prs) = (stats[0], stats[1], stats[2]);
    let means = sos.1 - ars.1 >= 5.0 && ars.1 - prs.1 >= 5.0;
    let stds = prs.2 < sos.2 && sos.2 < ars.2;
    Outcome {
        pass: means && stds,
        detail: format!(
            "sos {:.2}±{:.2}, ars {:.2}±{:.2}, prs {:.2}±{:.2} (means ordered with 5-point gaps: {means}, spreads prs<sos<ars: {stds})",
            sos.1, sos.2, ars.1, ars.2, prs.1, prs.2
        ),
    }
}

fn prs_interrupt(ledger_problems: &mut Vec<String>) -> Outcome {
    let mut cfg = RunConfig::new(StrategyKind::Prs, 2);
    cfg.world.seed = 1;
    let res = run(&cfg, false).unwrap();
    conservation("prs two-robot", &res, ledger_problems);
    let fr: Vec<f64> = res.robots.iter().map(|r| r.interrupt_ticks as f64 / res.tau as f64).collect();
    let in_band = fr.iter().all(|f| (0.30..=0.60).contains(f));
    Outcome {
        pass: res.tau == 2141 && in_band,
        detail: format!("tau {} interruptibility {fr:.3?}", res.tau),
    }
}

fn run_bin(config: &Path, out: &Path) -> bool {
    Command::new(BIN)
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "strategy = \"sos\"\nrobots = 4\nseed = 3\n[world]\nseed = 2\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ran = run_bin(&cfg, &a) && run_bin(&cfg, &b);
    let same = |f: &str| {
        let x = std::fs::read(a.join(f)).ok();
        x.is_some() && x == std::fs::read(b.join(f)).ok()
    };
    let ok = ran && same("trace.txt") && same("metrics.csv");
    Outcome {
        pass: ok,
        detail: format!("two runs, trace and metrics identical: {ok}"),
    }
}

fn main() {
    let mut ledger = Vec::new();
    let results = [
        check("table-one", Duration::from_secs(1), table1),
        check("margin-time-identity", Duration::from_secs(1), margin_identity),
        check("bug-bounds", Duration::from_secs(30), bug_bounds),
        check("hungarian-optimal", Duration::from_secs(10), hungarian_optimal),
        check("sos-disjoint-regions", Duration::from_secs(120), || sos_disjoint(&mut ledger)),
        check("strategy-ordering", Duration::from_secs(1200), || fig9(&mut ledger)),
        check("prs-interruptibility", Duration::from_secs(60), || {
            let o = prs_interrupt(&mut ledger);
            let closed = ledger.is_empty();
            Outcome {
                pass: o.pass && closed,
                detail: format!("{}; time ledger closes in every run: {closed} {ledger:?}", o.detail),
            }
        }),
        check("determinism", Duration::from_secs(60), determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
