//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use parlens_core::graph::Digraph;
use parlens_core::sim::{compare_policies, random_instance, simulate, CapacityRegime, Policy};
use parlens_core::spec::{read_json, LearnSpec};
use parlens_core::specialization::{jsd, si, ActionDistribution};
use parlens_core::stats::{logistic_fit, logistic_predict, metrics, pearson_r, spearman, LogisticConfig};
use parlens_core::sweep::{run_learn, run_sweep, SweepSpec};
use parlens_core::task::{amdahl_classic, parallelizability, Capacity, TaskGraph};
use parlens_core::TaskSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Per configuration: S, N and best-seed SI.
type Grid = (Vec<f64>, Vec<f64>, Vec<f64>);

use common::{data, parlens, run_all};

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn analyze_s(task: &str, n: usize) -> Result<f64, String> {
    let out = parlens(&["analyze", "--task", data(task).to_str().unwrap(), "--agents", &n.to_string()], "0");
    ensure(out.status.success(), format!("analyze {task} exited with {:?}", out.status.code()))?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    v["S"].as_f64().ok_or_else(|| "no S in report".to_string())
}

fn analytic_endpoints() -> Outcome {
    let start = Instant::now();
    for n in 2..=6usize {
        for name in ["smac_m2", "smac_m3"] {
            let task = format!("tasks/{name}.json");
            let spec: TaskSpec = read_json(&data(&task)).map_err(|e| e.to_string())?;
            let s = parallelizability(&spec.to_task_graph(None).unwrap(), n).unwrap().s;
            ensure(s == n as f64, format!("{name} N={n}: S={s}"))?;
            let cli = analyze_s(&task, n)?;
            ensure(cli == n as f64, format!("parlens analyze {name} N={n}: S={cli}"))?;
        }
        let task = format!("tasks/mpe_{n}.json");
        let spec: TaskSpec = read_json(&data(&task)).map_err(|e| e.to_string())?;
        let s = parallelizability(&spec.to_task_graph(None).unwrap(), n).unwrap().s;
        ensure(s == 1.0, format!("mpe N={n}: S={s}"))?;
        let cli = analyze_s(&task, n)?;
        ensure(cli == 1.0, format!("parlens analyze mpe N={n}: S={cli}"))?;
    }
    let per_call = start.elapsed() / 15;
    within(per_call, Duration::from_secs(1))?;
    Ok(format!("SMAC S=N and MPE S=1 for N in 2..=6, {per_call:.1?} per analyze"))
}

fn random_task(rng: &mut ChaCha8Rng) -> TaskGraph {
    let m = rng.gen_range(1..=6);
    let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let caps: Vec<Capacity> = (0..m)
        .map(|_| {
            if rng.gen_bool(0.3) {
                Capacity::Unbounded
            } else {
                Capacity::Finite(rng.gen_range(1..=8))
            }
        })
        .collect();
    let fractions: Vec<f64> = weights.iter().map(|w| w / total).collect();
    TaskGraph::from_fractions(&fractions, &caps).unwrap()
}

fn monotonicity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    for _ in 0..1000 {
        let task = random_task(&mut rng);
        let n = rng.gen_range(1..=10);
        let s = parallelizability(&task, n).unwrap().s;
        if parallelizability(&task, n + 1).unwrap().s < s {
            violations += 1;
        }
        let i = rng.gen_range(0..task.len());
        let raised = task.with_capacity(i, task.subtasks()[i].capacity().saturating_add(rng.gen_range(1..=3)));
        if parallelizability(&raised, n).unwrap().s < s {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok("1000 trials, 0 violations".into())
}

fn full_concurrency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for k in 0..50 {
        let inst = random_instance(&mut rng, CapacityRegime::Full);
        let r = simulate(&inst.config(Policy::Generalist)).map_err(|e| e.to_string())?;
        let floor = inst.agents as f64 - inst.task.len() as f64 / inst.jobs as f64;
        ensure(r.speedup >= floor, format!("instance {k}: speedup {} < {floor}", r.speedup))?;
        ensure(r.si == 0.0, format!("instance {k}: SI {}", r.si))?;
        worst = worst.min(r.speedup - floor);
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("50 instances, min margin {worst:.3}, SI = 0"))
}

fn bottlenecked() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 50 {
        let inst = random_instance(&mut rng, CapacityRegime::Bottlenecked);
        let s = parallelizability(&inst.task, inst.agents).unwrap().s;
        if s >= inst.agents as f64 {
            continue;
        }
        let c = compare_policies(&inst.config(Policy::Generalist)).map_err(|e| e.to_string())?;
        ensure(c.generalist.idle_fraction > 0.0, format!("instance {checked}: generalist never idle"))?;
        ensure(
            c.best_specialist().throughput >= c.generalist.throughput,
            format!(
                "instance {checked}: specialist {} < generalist {}",
                c.best_specialist().throughput,
                c.generalist.throughput
            ),
        )?;
        checked += 1;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok("50 instances with S < N".into())
}

fn bound_validity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..500 {
        let inst = random_instance(&mut rng, CapacityRegime::Any);
        let s = parallelizability(&inst.task, inst.agents).unwrap().s;
        let r = simulate(&inst.config(Policy::Generalist)).map_err(|e| e.to_string())?;
        if r.speedup > s + inst.task.len() as f64 / inst.jobs as f64 {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok("500 instances, 0 violations".into())
}

fn kl_jsd(probs: &[Vec<f64>]) -> f64 {
    let n = probs.len() as f64;
    let k = probs[0].len();
    let m: Vec<f64> = (0..k).map(|a| probs.iter().map(|p| p[a]).sum::<f64>() / n).collect();
    probs
        .iter()
        .map(|p| {
            (0..k)
                .filter(|&a| p[a] > 0.0)
                .map(|a| p[a] * (p[a] / m[a]).ln())
                .sum::<f64>()
                / std::f64::consts::LN_2
        })
        .sum::<f64>()
        / n
}

fn si_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let k = rng.gen_range(2..=8);
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut w: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen() }).collect();
                if w.iter().all(|&x| x == 0.0) {
                    w[0] = 1.0;
                }
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        let dists: Vec<ActionDistribution> =
            probs.iter().map(|p| ActionDistribution::from_probs(p.clone()).unwrap()).collect();
        let want = kl_jsd(&probs);
        worst = worst.max((jsd(&dists).unwrap() - want).abs());
        worst = worst.max((si(&dists).unwrap() - want / (n as f64).log2()).abs());
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    let p = |v: Vec<f64>| ActionDistribution::from_probs(v).unwrap();
    ensure(si(&[p(vec![0.3, 0.7]), p(vec![0.3, 0.7])]).unwrap() == 0.0, "identical != 0")?;
    ensure(si(&[p(vec![1.0, 0.0]), p(vec![0.0, 1.0])]).unwrap() == 1.0, "disjoint != 1")?;
    let masses = [p(vec![1.0, 0.0, 0.0]), p(vec![0.0, 1.0, 0.0]), p(vec![0.0, 0.0, 1.0])];
    ensure(si(&masses).unwrap() == 1.0, "three point masses != 1")?;
    Ok(format!("1000 tuples, max deviation {worst:.1e}; endpoints exact"))
}

fn brute_betweenness(g: &Digraph) -> BTreeMap<(usize, usize), f64> {
    let n = g.node_count();
    let mut out: BTreeMap<(usize, usize), f64> = g.edges().map(|e| (e, 0.0)).collect();
    for s in 0..n {
        let dist = g.bfs_distances(s);
        for t in (0..n).filter(|&t| t != s) {
            let Some(d) = dist[t] else { continue };
            let mut paths = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(path) = stack.pop() {
                if path.len() == d + 1 {
                    if path[d] == t {
                        paths.push(path);
                    }
                    continue;
                }
                for &w in g.successors(*path.last().unwrap()) {
                    let mut next = path.clone();
                    next.push(w);
                    stack.push(next);
                }
            }
            for path in &paths {
                for w in path.windows(2) {
                    *out.get_mut(&(w[0], w[1])).unwrap() += 1.0 / paths.len() as f64;
                }
            }
        }
    }
    out
}

fn betweenness_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let density = rng.gen_range(0.1..0.7);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v)
            .filter(|_| rng.gen_bool(density))
            .collect();
        let g = Digraph::from_edges(n, edges);
        let oracle = brute_betweenness(&g);
        for (e, b) in g.edges().zip(g.edge_betweenness()) {
            worst = worst.max((b - oracle[&e]).abs());
        }
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("200 graphs, max deviation {worst:.1e}"))
}

fn learner_grid() -> Result<Grid, String> {
    let (spec, base) = LearnSpec::load(&data("sweeps/learn_grid.json")).map_err(|e| e.to_string())?;
    let rows = run_learn(&spec, &base).map_err(|e| e.to_string())?;
    let rows: Vec<_> = rows.into_iter().filter(|r| r.si.is_some()).collect();
    Ok((
        rows.iter().map(|r| r.s).collect(),
        rows.iter().map(|r| r.n as f64).collect(),
        rows.iter().map(|r| r.si.unwrap()).collect(),
    ))
}

fn correlation(grid: &Grid, elapsed: Duration) -> Outcome {
    let (s, n, si) = grid;
    ensure(s.len() >= 20, format!("only {} usable configurations", s.len()))?;
    let ratio: Vec<f64> = s.iter().zip(n).map(|(s, n)| s / n).collect();
    let lo = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure(lo <= 0.2 + 1e-9 && hi >= 1.0 - 1e-9, format!("S/N spans only [{lo:.2}, {hi:.2}]"))?;
    let r = pearson_r(s, si).map_err(|e| e.to_string())?;
    ensure(r <= -0.5, format!("r(S, SI) = {r:.3}"))?;
    within(elapsed, Duration::from_secs(20 * 60))?;
    Ok(format!("{} configs, r(S, SI) = {r:.3} in {elapsed:.1?}", s.len()))
}

fn accuracy(features: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<f64, String> {
    let names = ["S".to_string(), "N".to_string()];
    let model = logistic_fit(&features, &labels, true, &names, &LogisticConfig::default()).map_err(|e| e.to_string())?;
    let pred = logistic_predict(&model, &features).map_err(|e| e.to_string())?;
    Ok(metrics(&pred.labels, &labels).map_err(|e| e.to_string())?.accuracy)
}

fn classification(grid: &Grid) -> Outcome {
    let (spec, base) = SweepSpec::load(&data("sweeps/edge_cases.json")).map_err(|e| e.to_string())?;
    let outcome = run_sweep(&spec, &base, 0, &Default::default());
    ensure(outcome.failures.is_empty(), format!("{:?}", outcome.failures))?;
    let features = outcome.rows.iter().map(|r| vec![r.s, r.n as f64]).collect();
    let labels = outcome.rows.iter().map(|r| r.si.unwrap() >= 0.5).collect();
    let edge = accuracy(features, labels)?;
    ensure(edge == 1.0, format!("edge-case accuracy {edge:.3}"))?;
    let (s, n, si) = grid;
    let features = s.iter().zip(n).map(|(&s, &n)| vec![s, n]).collect();
    let labels = si.iter().map(|&v| v >= 0.5).collect();
    let mixed = accuracy(features, labels)?;
    ensure(mixed >= 0.75, format!("learner-sweep accuracy {mixed:.3}"))?;
    Ok(format!("edge cases {edge:.3}, learner sweep {mixed:.3}"))
}

fn state_size() -> Outcome {
    let start = Instant::now();
    let (spec, base) = LearnSpec::load(&data("sweeps/state_size.json")).map_err(|e| e.to_string())?;
    ensure(spec.paddings.len() == 7 && spec.seeds.list().len() == 10, "spec must have 7 paddings and 10 seeds")?;
    let rows = run_learn(&spec, &base).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    for &recipe in &spec.recipes {
        let mut levels = Vec::new();
        let mut means = Vec::new();
        for &padding in &spec.paddings {
            let sis: Vec<f64> = rows
                .iter()
                .filter(|r| r.recipe == recipe && r.padding == padding)
                .filter_map(|r| r.si)
                .collect();
            ensure(!sis.is_empty(), format!("recipe {recipe}, padding {padding}: no SI"))?;
            levels.push(padding as f64);
            means.push(sis.iter().sum::<f64>() / sis.len() as f64);
        }
        let r = pearson_r(&levels, &means).map_err(|e| e.to_string())?;
        let rho = spearman(&levels, &means, 0).map_err(|e| e.to_string())?.r;
        ensure(r > 0.0 && rho > 0.0, format!("recipe {recipe}: r = {r:.3}, rho = {rho:.3}"))?;
        report.push(format!("recipe {recipe}: r = {r:.3}, rho = {rho:.3}"));
    }
    within(start.elapsed(), Duration::from_secs(15 * 60))?;
    Ok(format!("{} in {:.1?}", report.join("; "), start.elapsed()))
}

fn amdahl_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f: f64 = rng.gen_range(0.0..1.0);
        let s = rng.gen_range(1..=64usize);
        let task = TaskGraph::from_fractions(&[1.0 - f, f], &[Capacity::Finite(1), Capacity::Unbounded]).unwrap();
        let got = parallelizability(&task, s).unwrap().s;
        worst = worst.max((got - amdahl_classic(f, s as f64).unwrap()).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("100 (f, s) pairs, max deviation {worst:.1e}"))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir(), tempfile::tempdir()];
    let [Ok(a), Ok(b)] = &dirs else { return Err("cannot create temp dirs".into()) };
    let first = run_all(a.path(), "42")?;
    let second = run_all(b.path(), "42")?;
    let mut names = Vec::new();
    for ((name, out1, files1), (_, out2, files2)) in first.iter().zip(&second) {
        ensure(out1 == out2, format!("{name}: stdout differs"))?;
        ensure(files1 == files2, format!("{name}: output files differ"))?;
        names.push(*name);
    }
    Ok(format!("byte-identical: {}", names.join(", ")))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "analytic regime endpoints", analytic_endpoints()),
        (2, "bound monotonicity", monotonicity()),
        (3, "generalists under full concurrency", full_concurrency()),
        (4, "specialists under bottlenecks", bottlenecked()),
        (5, "simulated speedup within bound", bound_validity()),
        (6, "SI oracle equivalence", si_oracle()),
        (7, "betweenness oracle equivalence", betweenness_oracle()),
    ];
    let start = Instant::now();
    let grid = learner_grid();
    let elapsed = start.elapsed();
    match &grid {
        Ok(g) => {
            results.push((8, "learner S vs SI correlation", correlation(g, elapsed)));
            results.push((9, "regime classification", classification(g)));
        }
        Err(e) => {
            results.push((8, "learner S vs SI correlation", Err(e.clone())));
            results.push((9, "regime classification", Err(e.clone())));
        }
    }
    results.push((10, "state-size bias sign", state_size()));
    results.push((11, "classic Amdahl reduction", amdahl_reduction()));
    results.push((12, "CLI determinism", determinism()));

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
