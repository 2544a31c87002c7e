//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to see them.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use passivity_opt::dynamics::{
    alg1_rhs, alg2_rhs, alg2_rhs_explicit, check_nonsingular, conserved_directions, linearized_system_matrix,
    reduced_spectral_abscissa, spectral_abscissa, Network, NetworkState,
};
use passivity_opt::gains::max_consensus;
use passivity_opt::graph::Digraph;
use passivity_opt::objective::{gradient_vec, make_example1, make_example2, SharedObjective};
use passivity_opt::passivity::{ifp_index_minimax, AgentDesign, AgentParams, DEFAULT_ETA_GRID};
use passivity_opt_cli::builtins;
use passivity_opt_cli::experiment::RunOutcome;
use passivity_opt_cli::{Experiment, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXAMPLE2_X_STAR: f64 = 2.857;
const EXAMPLE1_X_STAR: f64 = 0.1601;
const EXAMPLE2_NU: [f64; 4] = [-89.96, -37.77, -20.00, -12.00];
const EXAMPLE1_NU: [f64; 4] = [-0.31, -0.49, -1.0, -0.68];

fn builtin(name: &str) -> Experiment {
    builtin_with(name, Overrides::default())
}

fn builtin_with(name: &str, overrides: Overrides) -> Experiment {
    Experiment::from_toml(builtins::find(name).expect("builtin exists").source, overrides).expect("builtin builds")
}

fn timed_run(exp: &Experiment) -> (RunOutcome, Duration) {
    let start = Instant::now();
    let out = exp.run().expect("run completes");
    (out, start.elapsed())
}

/// Largest distance of any agent from `target` at the end of the run.
fn final_distance(out: &RunOutcome, target: f64) -> f64 {
    out.trajectory.final_state().x.iter().map(|x| (x - target).abs()).fold(0.0, f64::max)
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn criterion1() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["example2-alg1-sigma0.005", "example2-alg2-sigma0.005"] {
        let exp = builtin(name);
        let (out, took) = timed_run(&exp);
        let err = final_distance(&out, EXAMPLE2_X_STAR);
        let t = out.trajectory.final_state().t;
        ok &= err <= 1e-3 && (t - 200.0).abs() < 1e-9 && exp.sim.dt == 1e-3 && took.as_secs_f64() <= 30.0;
        parts.push(format!("{name}: max|x_i - 2.857| = {err:.3e} at t = {t}, {:.1} s", took.as_secs_f64()));
    }
    verdict(ok, parts.join("; "))
}

fn criterion2() -> Verdict {
    let start = Instant::now();
    let design = AgentDesign::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let mut ok = true;
    let mut got = Vec::new();
    for (i, want) in EXAMPLE2_NU.iter().enumerate() {
        let f = make_example2(i + 1).unwrap();
        let est = ifp_index_minimax(&design, f.as_ref(), design.default_eta_range(f.mu()), DEFAULT_ETA_GRID).unwrap();
        ok &= (est.nu - want).abs() <= 0.05;
        got.push(format!("{:.4}", est.nu));
    }
    let took = start.elapsed().as_secs_f64();
    ok &= took < 1.0;
    verdict(ok, format!("nu = ({}) vs ({:?}) +-0.05, {took:.3} s", got.join(", "), EXAMPLE2_NU))
}

fn criterion3() -> Verdict {
    let report = builtin("example2").analyze();
    let s = report.sigma_deg.unwrap_or(f64::NAN);
    verdict((s - 0.0056).abs() <= 1e-4, format!("sigma_deg = {s:.6} vs 0.0056 +-0.0001"))
}

fn criterion4() -> Verdict {
    let exp = builtin("example2-alg1-sigma0.005");
    let ring = Digraph::directed_ring(4);
    let w = conserved_directions(&exp.network);
    let mut ok = true;
    let mut parts = Vec::new();
    for (sigma, unstable) in [(0.005, false), (0.10, true), (0.12, true), (0.14, true)] {
        let a = linearized_system_matrix(&exp.network, &ring, sigma).unwrap();
        let reduced = reduced_spectral_abscissa(&a, &w);
        ok &= if unstable { reduced > 0.0 } else { reduced < 0.0 };
        parts.push(format!("sigma {sigma}: abscissa {reduced:+.3e} (full {:+.1e})", spectral_abscissa(&a)));
    }
    let (alg1, took1) = timed_run(&builtin("example2-alg1-sigma0.1"));
    ok &= alg1.summary.diverged;
    parts.push(format!(
        "alg1 sigma 0.1 diverged = {} at t = {:?} ({:.1} s)",
        alg1.summary.diverged,
        alg1.summary.divergence.as_ref().map(|d| d.t),
        took1.as_secs_f64()
    ));
    let (alg2, _) = timed_run(&builtin("example2-alg2-sigma0.1"));
    let err = final_distance(&alg2, EXAMPLE2_X_STAR);
    ok &= !alg2.summary.diverged && err <= 1e-3;
    parts.push(format!("alg2 sigma 0.1: max|x_i - 2.857| = {err:.3e}"));
    verdict(ok, parts.join("; "))
}

/// Convergence to the target 0.1601, with the distance to the optimum of the
/// catalog objectives reported alongside.
fn example1_run(name: &str) -> (RunOutcome, f64, f64) {
    let exp = builtin(name);
    let (out, _) = timed_run(&exp);
    let target = final_distance(&out, EXAMPLE1_X_STAR);
    let computed = final_distance(&out, exp.optimum.x_star[0]);
    (out, target, computed)
}

fn criterion5() -> Verdict {
    let report = builtin("example1-case1").analyze();
    let s = report.sigma_deg.unwrap_or(f64::NAN);
    let (out, target, computed) = example1_run("example1-case1");
    let t = out.trajectory.final_state().t;
    let ok = s == 0.5 && target <= 1e-3 && t <= 100.0 + 1e-9;
    verdict(
        ok,
        format!(
            "sigma_e = {s}; max|x_i - 0.1601| = {target:.3e} at t = {t} (distance to the optimum of the catalog \
             objectives {:.7}: {computed:.1e})",
            out.summary.x_star[0]
        ),
    )
}

fn criterion6() -> Verdict {
    let (out, target, computed) = example1_run("example1-case2");
    let inv = out.summary.max_multiplier_invariant;
    let ok = target <= 1e-3 && inv <= 1e-8;
    verdict(
        ok,
        format!(
            "max|x_i - 0.1601| = {target:.3e}; max invariant {inv:.1e} (distance to the optimum of the catalog \
             objectives {:.7}: {computed:.1e})",
            out.summary.x_star[0]
        ),
    )
}

const ADMISSIBLE: [&str; 5] = [
    "example1-case1",
    "example1-case2",
    "example2-alg1-sigma0.005",
    "example2-alg2-sigma0.005",
    "example2-alg2-sigma0.1",
];

fn unit_network(fs: Vec<SharedObjective>, nus: &[f64]) -> Network {
    let agents = fs
        .iter()
        .zip(nus)
        .map(|(f, &nu)| {
            let d = AgentDesign::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
            let eta = 2.0 * d.eta_bound(f.mu());
            AgentParams::new(d, nu, eta, f.mu()).unwrap()
        })
        .collect();
    Network::new(agents, fs).unwrap()
}

fn example1_objectives() -> Vec<SharedObjective> {
    (1..=4).map(|i| make_example1(i).unwrap()).collect()
}

/// A Hamiltonian cycle in random order plus random extra edges.
fn random_strongly_connected(rng: &mut ChaCha8Rng, n: usize) -> Digraph {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.gen_range(0..=k));
    }
    let mut w = vec![0.0; n * n];
    if n > 1 {
        for k in 0..n {
            w[order[k] * n + order[(k + 1) % n]] = 1.0;
        }
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            w[i * n + j] += rng.gen_range(0.1..2.0);
        }
    }
    Digraph::from_row_major(n, &w).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion7() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut check = |label: &str, pass: bool, detail: String| {
        ok &= pass;
        parts.push(format!("({label}) {} {detail}", if pass { "ok" } else { "FAILED" }));
    };

    // (a) and (b) on every admissible builtin.
    let mut audit_violations = 0;
    let mut lyap_violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for name in ADMISSIBLE {
        let (out, _) = timed_run(&builtin(name));
        let audit = out.summary.passivity.clone().expect("audit enabled");
        audit_violations += audit.violations;
        worst_excess = worst_excess.max(audit.max_excess);
        lyap_violations += out.summary.lyapunov.violations;
    }
    check("a", audit_violations == 0, format!("{audit_violations} storage violations, max excess {worst_excess:.1e}"));
    check("b", lyap_violations == 0, format!("{lyap_violations} Lyapunov violations"));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ring = Digraph::directed_ring(4);
    let random_state = |rng: &mut ChaCha8Rng| {
        NetworkState::new(
            0.0,
            (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
    };

    // (c)
    let zero = unit_network(example1_objectives(), &[0.0; 4]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let st = random_state(&mut rng);
        let sigma: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..2.0)).collect();
        let a = alg1_rhs(&zero, &st, &ring, &sigma).unwrap();
        let b = alg2_rhs(&zero, &st, &ring, &sigma).unwrap();
        worst = worst.max(max_abs_diff(&a.dx, &b.dx)).max(max_abs_diff(&a.dlam, &b.dlam));
    }
    check("c", worst <= 1e-12, format!("max |alg2 - alg1| at nu = 0: {worst:.1e}"));

    // (d)
    let net = unit_network(example1_objectives(), &EXAMPLE1_NU);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let st = random_state(&mut rng);
        let sigma = vec![rng.gen_range(0.01..2.0); 4];
        let a = alg2_rhs(&net, &st, &ring, &sigma).unwrap();
        let b = alg2_rhs_explicit(&net, &st, &ring, &sigma).unwrap();
        worst = worst.max(max_abs_diff(&a.dx, &b.dx)).max(max_abs_diff(&a.dlam, &b.dlam));
    }
    check("d", worst <= 1e-12, format!("max |implicit - explicit|: {worst:.1e}"));

    // (e)
    let j_blocks = vec![DMatrix::from_element(1, 1, 1.0); 4];
    let mut worst_cond = 0.0f64;
    let mut singular = 0;
    for k in 0..=60 {
        let sigma = 10f64.powf(-3.0 + 6.0 * k as f64 / 60.0);
        let d = check_nonsingular(&ring, sigma, &EXAMPLE2_NU, &j_blocks);
        singular += usize::from(!d.nonsingular);
        worst_cond = worst_cond.max(d.condition_number);
    }
    check(
        "e",
        singular == 0,
        format!("{singular} singular loop matrices over sigma in [1e-3, 1e3], worst condition {worst_cond:.1e}"),
    );

    // (f)
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let g = random_strongly_connected(&mut rng, n);
        let local: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let central = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_consensus(&g, &local, n).iter().any(|&v| v != central) {
            mismatches += 1;
        }
    }
    check("f", mismatches == 0, format!("{mismatches} of 100 random strongly connected graphs disagree"));

    // (g)
    let catalog: Vec<SharedObjective> =
        (1..=4).map(|i| make_example1(i).unwrap()).chain((1..=4).map(|i| make_example2(i).unwrap())).collect();
    let h = 1e-5;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for f in &catalog {
        for _ in 0..100 {
            let x = rng.gen_range(-20.0..20.0);
            let g = gradient_vec(f.as_ref(), &[x])[0];
            let fd = (f.value(&[x + h]) - f.value(&[x - h])) / (2.0 * h);
            worst_g = worst_g.max((fd - g).abs() / g.abs().max(1.0));
            let hess = f.hessian(&[x])[(0, 0)];
            let fdh = (gradient_vec(f.as_ref(), &[x + h])[0] - gradient_vec(f.as_ref(), &[x - h])[0]) / (2.0 * h);
            worst_h = worst_h.max((fdh - hess).abs() / hess.abs().max(1.0));
        }
    }
    check(
        "g",
        worst_g <= 1e-5 && worst_h <= 1e-4,
        format!("gradient rel err {worst_g:.1e}, Hessian rel err {worst_h:.1e}"),
    );

    // (h) Example 2, IFP flow, sigma = 0.005 over [0, 1].
    let finals: Vec<Vec<f64>> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let o = Overrides { dt: Some(dt), t_end: Some(1.0), ..Overrides::default() };
            let out = builtin_with("example2-alg1-sigma0.005", o).run().unwrap();
            let s = out.trajectory.final_state();
            s.x.iter().chain(&s.lam).copied().collect()
        })
        .collect();
    let d1 = max_abs_diff(&finals[0], &finals[1]);
    let d2 = max_abs_diff(&finals[1], &finals[2]);
    let ratio = d1 / d2;
    check("h", (12.0..=20.0).contains(&ratio), format!("step-halving change ratio {ratio:.2} (order 4 gives 16)"));

    verdict(ok, parts.join("; "))
}

fn criterion8() -> Verdict {
    let report = builtin("example1").analyze();
    let pinned: Vec<Option<f64>> = report.agents.iter().map(|a| a.nu_pinned).collect();
    let computed: Vec<f64> = report.agents.iter().map(|a| a.nu_minimax).collect();
    let pinned_ok = pinned.iter().zip(EXAMPLE1_NU).all(|(p, want)| *p == Some(want));
    let nu1_ok = (computed[0] + 0.3125).abs() <= 1e-3;
    verdict(
        pinned_ok && nu1_ok,
        format!("pinned {:?}, computed minimax {:?}", pinned.iter().flatten().collect::<Vec<_>>(), computed),
    )
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 8] = [
        ("1 quadratic example converges to 2.857 with both flows at sigma 0.005", criterion1),
        ("2 quadratic example IFP indices", criterion2),
        ("3 quadratic example degree threshold", criterion3),
        ("4 quadratic example instability at large gain", criterion4),
        ("5 nonlinear example on a fixed ring", criterion5),
        ("6 nonlinear example on switching graphs", criterion6),
        ("7 property suites", criterion7),
        ("8 nonlinear example index report", criterion8),
    ];
    println!();
    let mut failed = Vec::new();
    for (label, run) in criteria {
        let v = run();
        println!("{} criterion {label}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        if !v.passed {
            failed.push(label);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
