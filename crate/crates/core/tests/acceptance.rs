//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use covmatch::covariates::seed_block_rows;
use covmatch::glm::Observation;
use covmatch::graph::permute_matrix;
use covmatch::matchers::{cov_qap, neighborhood_assignment, MatchConfig, Method};
use covmatch::simulate::{
    correlated_er, gen_er, generate_instance, rep_rng, run_experiment, run_experiment_sequential,
    shuffle_nonseeds, write_tidy_csv, Setup, SimConfig,
};
use covmatch::{
    brute_force_lap, brute_force_qap, fit_glm, glm_gradient_hessian, glm_loss, matching_error,
    predict_prob_matrix, seeded_faq, solve_lap, CostMatrix, CovariateBundle, DesignRow, FaqOptions,
    FitOptions, Graph, LinkKind, Permutation, SeedSet, Sense,
};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of QAP instances where FAQ reached the brute-force optimum in the
/// calibration run (seed 2024, 200 instances).
const QAP_EQUALITY_FRACTION: f64 = 0.89;
const QAP_EQUALITY_BAND: f64 = 0.05;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Graph {
    gen_er(n, p, rng).unwrap()
}

fn lap_vs_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut mismatches = 0;
    for k in 0..500 {
        let m = rng.random_range(1..=8);
        let sense = if k % 2 == 0 { Sense::Min } else { Sense::Max };
        // half integer costs (exact ties), half continuous
        let integer = k % 4 < 2;
        let data = DMatrix::from_fn(m, m, |_, _| {
            if integer {
                f64::from(rng.random_range(-5..=5))
            } else {
                rng.random_range(-10.0..10.0)
            }
        });
        let c = CostMatrix::new(data, sense).unwrap();
        let (_, fast) = solve_lap(&c);
        let (_, exact) = brute_force_lap(&c).unwrap();
        let ok = if integer {
            fast == exact
        } else {
            (fast - exact).abs() <= 1e-9 * (1.0 + exact.abs())
        };
        if !ok {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(5),
        format!("{mismatches} mismatches / 500, {:.2}s", t.as_secs_f64()),
    )
}

fn qap_vs_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let (n, s) = (7, 2);
    let seeds = SeedSet::first(n, s).unwrap();
    let mut invalid = 0;
    let mut equal = 0;
    for _ in 0..200 {
        let p = random_graph(&mut rng, n, 0.5).to_matrix();
        let b = random_graph(&mut rng, n, 0.5).to_matrix();
        let faq = seeded_faq(&p, &b, &seeds, &FaqOptions::default()).unwrap();
        let (_, opt) = brute_force_qap(&p, &b, &seeds).unwrap();
        if faq.objective < opt - 1e-9 || !faq.permutation.fixes_seeds(&seeds) {
            invalid += 1;
        }
        if (faq.objective - opt).abs() <= 1e-9 {
            equal += 1;
        }
    }
    let t = start.elapsed();
    let frac = f64::from(equal) / 200.0;
    outcome(
        invalid == 0
            && (frac - QAP_EQUALITY_FRACTION).abs() <= QAP_EQUALITY_BAND
            && t < Duration::from_secs(60),
        format!(
            "{invalid} invalid, optimum reached on {frac:.3} (pinned {QAP_EQUALITY_FRACTION:.3} ± {QAP_EQUALITY_BAND}), {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn random_rows<R: Rng>(rng: &mut R, d: usize, m: usize, binary: bool) -> Vec<Observation> {
    (0..m)
        .map(|_| {
            let mut x = vec![1.0];
            x.extend((1..d).map(|_| rng.random_range(-1.0..1.0)));
            let y = if binary {
                f64::from(rng.random_bool(0.4))
            } else {
                rng.random_range(0.0..1.0)
            };
            (DesignRow(x), y)
        })
        .collect()
}

fn glm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let link = if k % 2 == 0 {
            LinkKind::Logit
        } else {
            LinkKind::Identity
        };
        let d = rng.random_range(2..=5);
        let rows = random_rows(&mut rng, d, 40, link == LinkKind::Logit);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (g, h) = glm_gradient_hessian(&theta, &rows, link).unwrap();
        let eps = 1e-5;
        for a in 0..d {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[a] += eps;
            dn[a] -= eps;
            let fd = (glm_loss(&up, &rows, link).unwrap() - glm_loss(&dn, &rows, link).unwrap())
                / (2.0 * eps);
            worst = worst.max((fd - g[a]).abs() / g[a].abs().max(1.0));
            let (gu, _) = glm_gradient_hessian(&up, &rows, link).unwrap();
            let (gd, _) = glm_gradient_hessian(&dn, &rows, link).unwrap();
            for b in 0..d {
                let fd = (gu[b] - gd[b]) / (2.0 * eps);
                worst = worst.max((fd - h[(a, b)]).abs() / h[(a, b)].abs().max(1.0));
            }
        }
    }

    // noiseless identity-link data
    let mut recovery = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(2..=5);
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<Observation> = random_rows(&mut rng, d, 30, false)
            .into_iter()
            .map(|(x, _)| {
                let y = x.dot(&truth);
                (x, y)
            })
            .collect();
        let fit = fit_glm(&rows, LinkKind::Identity, &FitOptions::default()).unwrap();
        for (a, b) in fit.theta.iter().zip(&truth) {
            recovery = recovery.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-5 && recovery <= 1e-8,
        format!("max finite-difference rel. error {worst:.2e}, max |θ̂-θ*| {recovery:.2e}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn estimation_error_trend() -> Outcome {
    let start = Instant::now();
    let mut med = Vec::new();
    for s in [100, 400] {
        let mut cfg = SimConfig::desk(Setup::Easy, 0.55, 0.45);
        cfg.n = 500;
        cfg.n_seeds = s;
        let errs: Vec<f64> = (0..20)
            .map(|rep| {
                let mut rng = rep_rng(44, rep);
                let inst = generate_instance(&cfg, &mut rng).unwrap();
                let c = inst.covariates();
                let rows = seed_block_rows(&inst.a, &inst.b_tilde, &c, &inst.seeds).unwrap();
                let fit = fit_glm(&rows, LinkKind::Identity, &FitOptions::default()).unwrap();
                let p_hat = predict_prob_matrix(&fit, &inst.a, &c).unwrap();
                (p_hat.matrix() - inst.p.matrix()).amax()
            })
            .collect();
        med.push(median(errs));
    }
    let t = start.elapsed();
    let ratio = med[1] / med[0];
    outcome(
        med[1] < med[0] && ratio <= 0.6 && t < Duration::from_secs(120),
        format!(
            "median max|P̂-P|: s=100 {:.4}, s=400 {:.4}, ratio {ratio:.3}, {:.1}s",
            med[0],
            med[1],
            t.as_secs_f64()
        ),
    )
}

fn correlated_exact_recovery() -> Outcome {
    let start = Instant::now();
    let (n, s) = (100, 20);
    let cfg = MatchConfig::new(LinkKind::Identity);
    let mut exact = 0;
    for rep in 0..20 {
        let mut rng = rep_rng(55, rep);
        let (a, b) = correlated_er(n, 0.3, 0.9, &mut rng).unwrap();
        let seeds = covmatch::simulate::random_seeds(n, s, &mut rng).unwrap();
        let (b_tilde, q_star) = shuffle_nonseeds(&b, &seeds, &mut rng).unwrap();
        let r = cov_qap(&a, &b_tilde, &CovariateBundle::none(n), &seeds, &cfg).unwrap();
        if matching_error(&r.permutation, &q_star, &seeds).unwrap() == 0.0 {
            exact += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        exact >= 18 && t < Duration::from_secs(300),
        format!("exact recovery in {exact}/20 reps, {:.1}s", t.as_secs_f64()),
    )
}

fn easy_setup_trend() -> Outcome {
    let mut errs = Vec::new();
    for alpha in [0.1, 0.35, 0.55] {
        let cfg = SimConfig::desk(Setup::Easy, alpha, 0.45);
        let sum = run_experiment(&cfg, &[Method::CovQap]).unwrap();
        errs.push(sum.method(Method::CovQap).unwrap().mean_error);
    }
    let inversions: Vec<f64> = errs
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    let trend_ok = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.05);
    outcome(
        errs[2] <= 0.05 && trend_ok,
        format!(
            "CovQAP mean error at α = 0.1, 0.35, 0.55: {:.3}, {:.3}, {:.3}",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn difficult_setup_separation() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::desk(Setup::Difficult, 0.55, 0.45);
    let sum = run_experiment(&cfg, &[Method::CovQap, Method::NoCovQap]).unwrap();
    let cov = sum.method(Method::CovQap).unwrap().mean_error;
    let nocov = sum.method(Method::NoCovQap).unwrap().mean_error;
    let t = start.elapsed();
    outcome(
        nocov - cov >= 0.3 && nocov >= 0.8 && t < Duration::from_secs(600),
        format!(
            "CovQAP {cov:.3}, NoCovQAP {nocov:.3}, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn distinct_rows(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> bool {
    rows.iter().enumerate().all(|(k, &i)| {
        rows[..k]
            .iter()
            .all(|&j| cols.iter().any(|&t| m[(i, t)] != m[(j, t)]))
    })
}

fn neighborhood_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..100 {
        let free_count = rng.random_range(2..=7);
        let s = rng.random_range(1..=5);
        let n = s + free_count;
        let mut seed_ids: Vec<usize> = (0..n).collect();
        seed_ids.shuffle(&mut rng);
        seed_ids.truncate(s);
        let seeds = SeedSet::new(n, seed_ids).unwrap();
        let free = seeds.complement();
        let p = loop {
            let mut p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
            p = (&p + p.transpose()) * 0.5;
            p.fill_diagonal(0.0);
            if distinct_rows(&p, &free, seeds.ids()) {
                break p;
            }
        };
        let mut img = free.clone();
        img.shuffle(&mut rng);
        let mut map: Vec<usize> = (0..n).collect();
        for (f, g) in free.iter().zip(img) {
            map[*f] = g;
        }
        let q_star = Permutation::new(map).unwrap();
        let expected_b = permute_matrix(&p, &q_star).unwrap();

        let (q_hat, _) = neighborhood_assignment(&p, &expected_b, &seeds).unwrap();

        // independent check: the brute-force LAP optimum is unique and equals q*
        let s_ids = seeds.ids();
        let score = DMatrix::from_fn(free.len(), free.len(), |i, k| {
            s_ids
                .iter()
                .map(|&t| expected_b[(free[i], t)] * p[(free[k], t)])
                .sum::<f64>()
        });
        let c = CostMatrix::new(score, Sense::Max).unwrap();
        let (bf, best) = brute_force_lap(&c).unwrap();
        let mut bf_map: Vec<usize> = (0..n).collect();
        for (i, &k) in bf.as_slice().iter().enumerate() {
            bf_map[free[i]] = free[k];
        }
        let runner_up = itertools::Itertools::permutations(0..free.len(), free.len())
            .map(|perm| {
                perm.iter()
                    .enumerate()
                    .map(|(i, &k)| c.matrix()[(i, k)])
                    .sum::<f64>()
            })
            .filter(|v| (best - v).abs() > 1e-12)
            .fold(f64::NEG_INFINITY, f64::max);
        let unique = itertools::Itertools::permutations(0..free.len(), free.len())
            .filter(|perm| {
                let v: f64 = perm
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| c.matrix()[(i, k)])
                    .sum();
                (best - v).abs() <= 1e-12
            })
            .count()
            == 1;
        if q_hat != q_star || bf_map.as_slice() != q_star.as_slice() || !unique || runner_up >= best
        {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} failures / 100"))
}

fn simulate_csv_determinism() -> Outcome {
    let mut cfg = SimConfig::desk(Setup::Easy, 0.35, 0.45);
    cfg.n = 60;
    cfg.n_seeds = 20;
    cfg.n_reps = 4;
    cfg.base_rng_seed = 99;
    let render = || {
        let sum = run_experiment(&cfg, &Method::ALL).unwrap();
        let mut buf = Vec::new();
        write_tidy_csv(&[sum], &mut buf).unwrap();
        buf
    };
    let first = render();
    let second = render();
    outcome(
        first == second && !first.is_empty(),
        format!("{} bytes, identical: {}", first.len(), first == second),
    )
}

fn runtime_ordering() -> Outcome {
    let mut cfg = SimConfig::desk(Setup::Easy, 0.55, 0.45);
    cfg.n = 300;
    cfg.n_seeds = 100;
    cfg.n_reps = 5;
    cfg.base_rng_seed = 10;
    let sum = run_experiment_sequential(&cfg, &[Method::CovQap, Method::CovNeigh]).unwrap();
    let mut faster = 0;
    for rep in 0..cfg.n_reps {
        let t = |m| {
            sum.records
                .iter()
                .find(|r| r.rep == rep && r.method == m)
                .unwrap()
                .wall_time
        };
        if t(Method::CovNeigh) < t(Method::CovQap) {
            faster += 1;
        }
    }
    let mean = |m| sum.method(m).unwrap().mean_wall_time;
    outcome(
        faster == cfg.n_reps,
        format!(
            "CovNeigh faster in {faster}/{} reps (mean {:.4}s vs {:.4}s)",
            cfg.n_reps,
            mean(Method::CovNeigh),
            mean(Method::CovQap)
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 lap-oracle", lap_vs_brute_force),
        ("2 qap-oracle", qap_vs_brute_force),
        ("3 glm-correctness", glm_correctness),
        ("4 estimation-trend", estimation_error_trend),
        ("5 correlated-exact-recovery", correlated_exact_recovery),
        ("6 easy-setup-trend", easy_setup_trend),
        ("7 difficult-setup-separation", difficult_setup_separation),
        ("8 neighborhood-recovery", neighborhood_recovery),
        ("9 csv-determinism", simulate_csv_determinism),
        ("10 runtime-ordering", runtime_ordering),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let r = run();
        println!(
            "{} {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
