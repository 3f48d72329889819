//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints its own PASS/FAIL line in the normal `cargo test` output.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fieldrecon::domain::distance;
use fieldrecon::hpo::{self, BoBudget, ParamSpec, SearchSpace};
use fieldrecon::idw::{IdwModel, IdwParams};
use fieldrecon::inr::{GaborNet, NetworkShape};
use fieldrecon::kriging::{self, FittedVariogram, OrdinaryKriging, ScaledCloud, VariogramFamily};
use fieldrecon::methods::Method;
use fieldrecon::metrics::{self, EvalPair};
use fieldrecon::spatial::KdIndex;
use fieldrecon::stats::{self, MetricSamples};
use fieldrecon::{ClimatePointCloud, CoordinateSystem, QueryPoint, Reconstructor};
use fieldrecon_cli::pipeline;
use fieldrecon_cli::ExperimentConfig;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> ClimatePointCloud {
    let mut triples: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    while triples.len() < n {
        let lat = rng.random_range(-60.0..60.0);
        let lon = rng.random_range(-170.0..170.0);
        if triples.iter().all(|t| (t.0 - lat).abs() + (t.1 - lon).abs() > 1e-3) {
            triples.push((lat, lon, rng.random_range(-20.0..35.0)));
        }
    }
    ClimatePointCloud::from_triples(&triples).unwrap()
}

fn random_variogram(rng: &mut ChaCha8Rng, nugget: f64) -> FittedVariogram {
    let family = VariogramFamily::ALL[rng.random_range(0..VariogramFamily::ALL.len())];
    let shape = match family {
        VariogramFamily::Power => rng.random_range(0.2..1.9),
        _ => rng.random_range(0.3..3.0),
    };
    FittedVariogram::from_parts(family, nugget, rng.random_range(0.5..2.0), shape)
}

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn effect_sizes() -> Outcome {
    let a = stats::eta_squared(70.67, 3, 100);
    let b = stats::eta_squared(169.66, 3, 100);
    check(format!("{a:.2}") == "0.23", || format!("eta^2(70.67) = {a}"))?;
    check(format!("{b:.2}") == "0.56", || format!("eta^2(169.66) = {b}"))?;
    Ok(format!("eta^2 = {a:.4}, {b:.4}"))
}

fn kriging_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let coords: Vec<[f64; 2]> = (0..5).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let values: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let nugget = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
        let vg = random_variogram(&mut rng, nugget);
        let target = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let system = OrdinaryKriging::new(&ScaledCloud { coords: coords.clone(), values }, vg, CoordinateSystem::Euclidean, 1.0)
            .map_err(|e| format!("case {case}: {e}"))?;
        let got = system.weights(target).map_err(|e| format!("case {case}: {e}"))?;

        let h = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let mut a = vec![vec![1.0; 6]; 6];
        a[5][5] = 0.0;
        let mut b = vec![1.0; 6];
        for i in 0..5 {
            for j in 0..5 {
                a[i][j] = vg.gamma(h(&coords[i], &coords[j]));
            }
            b[i] = vg.gamma(h(&coords[i], &target));
        }
        let want = dense_solve(a, b);
        for (g, w) in got.weights.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        check((got.lagrange - want[5]).abs() < 1e-8, || format!("case {case}: lagrange {} vs {}", got.lagrange, want[5]))?;
        let sum: f64 = got.weights.iter().sum();
        check((sum - 1.0).abs() < 1e-8, || format!("case {case}: weights sum to {sum}"))?;
    }
    check(worst < 1e-8, || format!("max weight error {worst:e}"))?;
    Ok(format!("max weight error {worst:.1e}"))
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(3..=50);
        let pc = random_cloud(&mut rng, n);
        let nodes = pc.locations();
        let values = pc.values();
        for cs in CoordinateSystem::ALL {
            let idw = IdwModel::new(pc.clone(), IdwParams::new(rng.random_range(1..=n), rng.random_range(0.5..4.0)).unwrap(), cs);
            let (scaled, std) = kriging::preprocess_ok(&pc, cs).unwrap();
            let range = if cs == CoordinateSystem::Geographic { 3000.0 } else { 1.0 };
            let family = [VariogramFamily::Exponential, VariogramFamily::Spherical, VariogramFamily::Linear][case % 3];
            let vg = FittedVariogram::from_parts(family, 0.0, 1.0, range);
            let ok = kriging::ok_reconstruct(&scaled, &std, vg, &nodes, cs, 1.0).map_err(|e| format!("case {case}: {e}"))?;
            let id = idw.reconstruct(&nodes).map_err(|e| e.to_string())?;
            for i in 0..n {
                worst = worst.max((id[i] - values[i]).abs()).max((ok[i] - values[i]).abs());
            }
        }
    }
    check(worst <= 1e-6, || format!("max node error {worst:e}"))?;
    Ok(format!("max node error {worst:.1e}"))
}

fn kd_tree() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let pc = random_cloud(&mut rng, n);
        let idx = KdIndex::build(&pc);
        let nodes = pc.locations();
        for _ in 0..10 {
            let q = QueryPoint::new(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0)).unwrap();
            for cs in CoordinateSystem::ALL {
                let mut brute: Vec<(f64, usize)> = nodes.iter().enumerate().map(|(i, &p)| (distance(q, p, cs), i)).collect();
                brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for k in [1, 5, n] {
                    let got = idx.knn(q, k, cs);
                    let want = &brute[..k.min(n)];
                    check(got.len() == want.len(), || format!("case {case}: {} neighbours for k={k}", got.len()))?;
                    for (g, w) in got.iter().zip(want) {
                        check(g.index == w.1 && (g.distance - w.0).abs() <= 1e-12 * w.0.max(1.0), || {
                            format!("case {case} k={k} {cs:?}: ({}, {}) vs ({}, {})", g.index, g.distance, w.1, w.0)
                        })?;
                    }
                    queries += 1;
                }
            }
        }
    }
    Ok(format!("{queries} queries agree"))
}

fn inr_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = GaborNet::init(NetworkShape { hidden: 3, latent: 3, layers: 2 }, 3.0, 2.0, &mut rng);
    let xs: Vec<[f64; 2]> = (0..5).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let ts: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l2 = 1e-2;
    let (_, grad) = net.loss_and_grad(&xs, &ts, l2);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + step;
        let up = net.loss(&xs, &ts, l2);
        net.params_mut()[i] = orig - step;
        let down = net.loss(&xs, &ts, l2);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    check(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("{} parameters, max relative error {worst:.1e}", net.params().len()))
}

fn statistics() -> Outcome {
    let ms = MetricSamples::from_groups(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    let h = stats::kruskal_wallis(&ms).map_err(|e| e.to_string())?.h;
    check((h - 7.2).abs() < 1e-12, || format!("H = {h}"))?;
    let adj = stats::holm_adjust(&[0.01, 0.03, 0.04]);
    for (a, w) in adj.iter().zip([0.03, 0.06, 0.06]) {
        check((a - w).abs() < 1e-12, || format!("Holm {adj:?}"))?;
    }
    let lo = stats::rank_biserial(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
    let hi = stats::rank_biserial(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]);
    let zero = stats::rank_biserial(&[1.0, 4.0], &[2.0, 3.0]).abs() + stats::rank_biserial(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).abs();
    check(lo == -1.0 && hi == 1.0 && zero.abs() < 1e-15, || format!("rank-biserial {lo} {hi} {zero}"))?;
    Ok(format!("H = {h}, Holm = {adj:?}"))
}

fn hpo_quadratic() -> Outcome {
    let space = SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0).unwrap()]).unwrap();
    let res = hpo::tune(&space, BoBudget::new(50, 100).unwrap(), 0, |a| Ok((a.real("x")? - 0.3).powi(2)));
    let x = res.best.assignment.real("x").map_err(|e| e.to_string())?;
    check((x - 0.3).abs() <= 0.05, || format!("x* = {x}"))?;
    let trace = res.best_so_far();
    check(trace.len() == 150, || format!("{} trials", trace.len()))?;
    check(trace.windows(2).all(|w| w[1] <= w[0]), || "best-so-far increases".into())?;
    Ok(format!("x* = {x:.5}"))
}

fn metric_inequalities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..10_000 {
        let n = rng.random_range(2..=40);
        let obs: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..40.0)).collect();
        let exact = case % 10 == 0;
        let pred: Vec<f64> = if exact {
            obs.clone()
        } else {
            let scale = 10f64.powf(rng.random_range(-6.0..1.0));
            obs.iter().map(|o| o + scale * rng.random_range(-1.0..1.0)).collect()
        };
        let zero_residuals = obs == pred;
        let e = EvalPair::new(obs, pred).map_err(|e| e.to_string())?;
        let (mae, rmse, dmax) = (metrics::mae(&e), metrics::rmse(&e), metrics::delta_max(&e));
        let tol = 1e-12 * dmax.max(1e-300);
        check(mae <= rmse + tol && rmse <= dmax + tol, || format!("case {case}: {mae} {rmse} {dmax}"))?;
        let r2 = metrics::r2(&e).map_err(|e| e.to_string())?;
        check((r2 == 1.0) == zero_residuals, || format!("case {case}: R2 = {r2}, zero residuals = {zero_residuals}"))?;
    }
    Ok("10000 pairs".into())
}

struct EndToEnd {
    hashes_equal: Result<String, String>,
    tuned_vs_random: Result<String, String>,
    ordering: Result<String, String>,
    bench_elapsed: Duration,
}

fn end_to_end() -> EndToEnd {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic_5x600.csv");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = ExperimentConfig {
            data: Some(data.clone()),
            out: dir.path().join(name),
            seed: 0,
            methods: vec![Method::Idw, Method::Ok],
            n_dates: 5,
            n_initial: Some(10),
            n_iterations: Some(20),
            sizes: Some(vec![10, 100, 500, 1000]),
            repetitions: 3,
            ..Default::default()
        };
        cfg.validate().unwrap();
        pipeline::cmd_ingest(&cfg).unwrap();
        let cells = pipeline::cmd_tune(&cfg).unwrap();
        pipeline::cmd_evaluate(&cfg).unwrap();
        pipeline::cmd_compare(&cfg).unwrap();
        let t0 = Instant::now();
        let bench = pipeline::cmd_bench(&cfg).unwrap();
        let bench_elapsed = t0.elapsed();
        pipeline::cmd_report(&cfg).unwrap();
        // Timings are measurements, not results.
        let hashes = pipeline::digest_tree(&cfg.out, &["bench/", "report.md"]).unwrap();
        (cells, bench, hashes, bench_elapsed)
    };
    let (cells, bench, first, bench_elapsed) = run("a");
    let (_, _, second, _) = run("b");

    let hashes_equal = check(first == second, || {
        let diff: Vec<_> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
        format!("outputs differ: {diff:?}")
    })
    .map(|_| format!("{} files hashed identically", first.len()));

    let idw: Vec<_> = cells.iter().filter(|c| c.method == Method::Idw).collect();
    let tuned_vs_random = (|| {
        check(idw.len() == 5, || format!("{} IDW dates", idw.len()))?;
        for c in &idw {
            check(c.best_objective <= c.median_initial, || {
                format!("{}: tuned {} > median random {}", c.date, c.best_objective, c.median_initial)
            })?;
        }
        Ok(idw.iter().map(|c| format!("{:.3}<={:.3}", c.best_objective, c.median_initial)).collect::<Vec<_>>().join(" "))
    })();

    let median = |m: &str| bench.summary.iter().find(|s| s.method == m && s.m == 1000).map(|s| s.time_median);
    let ordering = match (median("ok"), median("idw")) {
        (Some(ok), Some(idw)) => check(ok > idw, || format!("OK {ok:e} s <= IDW {idw:e} s"))
            .map(|_| format!("OK {ok:.2e} s > IDW {idw:.2e} s")),
        _ => Err("no M = 1000 timings".into()),
    };
    EndToEnd { hashes_equal, tuned_vs_random, ordering, bench_elapsed }
}

fn timed<T>(f: impl FnOnce() -> T) -> (Result<T, String>, Duration) {
    let t0 = Instant::now();
    let out = panic::catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    });
    (out, t0.elapsed())
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Duration, outcome: Result<String, String>, elapsed: Duration| {
        let outcome = outcome.and_then(|d| {
            if elapsed <= limit {
                Ok(d)
            } else {
                Err(format!("{d}; took {elapsed:.1?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(d) => println!("PASS criterion {id:>2} {name}: {d} [{elapsed:.2?}]"),
            Err(d) => {
                failures += 1;
                println!("FAIL criterion {id:>2} {name}: {d} [{elapsed:.2?}]");
            }
        }
    };

    let secs = Duration::from_secs;
    let simple: [Criterion; 8] = [
        (1, "effect sizes", secs(1), effect_sizes),
        (2, "kriging weights vs dense solve", secs(10), kriging_oracle),
        (3, "interpolation exactness", secs(10), exactness),
        (4, "kd-tree vs brute force", secs(30), kd_tree),
        (5, "network gradient check", secs(5), inr_gradient),
        (6, "statistics fixtures", secs(1), statistics),
        (7, "optimizer on a quadratic", secs(30), hpo_quadratic),
        (10, "metric inequalities", secs(5), metric_inequalities),
    ];
    for (id, name, limit, f) in simple {
        let (out, elapsed) = timed(f);
        report(id, name, limit, out.and_then(|r| r), elapsed);
    }

    let (e2e, elapsed) = timed(end_to_end);
    match e2e {
        Ok(r) => {
            let tuned = r.hashes_equal.and_then(|h| r.tuned_vs_random.map(|t| format!("{h}; {t}")));
            report(8, "end-to-end desk run", secs(15 * 60), tuned, elapsed);
            report(9, "OK slower than IDW at M = 1000", secs(5 * 60), r.ordering, r.bench_elapsed);
        }
        Err(e) => {
            report(8, "end-to-end desk run", secs(15 * 60), Err(e.clone()), elapsed);
            report(9, "OK slower than IDW at M = 1000", secs(5 * 60), Err(e), elapsed);
        }
    }

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
