//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracneumann::experiments::{
    run_identity_suite, run_moser_check, run_scaling_sweep, solution_file_name,
    write_identity_report, write_moser_outputs, write_sweep_outputs, SweepOutcome,
};
use fracneumann::mesh::build_interval_mesh;
use fracneumann::moser::{
    big_g_trunc, check_g_inequality, check_g_lower_bound, gamma_closed_forms, gamma_partial_sums,
    norm_ladder,
};
use fracneumann::testfn::{half_mass_ratio, k_q, phi_eps, solve_sigma};
use fracneumann::{assemble, GridFunction, ProblemSpec, RunConfig};

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn identities() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["reference.conf", "box2d.conf"] {
        let cfg = config(name)
            .with_override("identities.samples", "100")
            .unwrap();
        let rep = run_identity_suite(&cfg).unwrap();
        let worst = |n: &str| rep.entries.iter().find(|e| e.name == n).unwrap().residual;
        ok &= ["gauss", "green", "constants"]
            .iter()
            .all(|n| rep.entries.iter().find(|e| e.name == *n).unwrap().passed);
        ok &= worst("constants") == 0.0;
        lines.push(format!(
            "{}D gauss {:.1e} green {:.1e} constants {:e}",
            cfg.dim(),
            worst("gauss"),
            worst("green"),
            worst("constants")
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && secs < 10.0,
        format!("{}; {secs:.1} s", lines.join("; ")),
    )
}

fn gaussian_error(h: f64, exact: f64) -> f64 {
    let op = assemble(build_interval_mesh(-1.0, 1.0, h, 10.0).unwrap(), 0.25, 1.0).unwrap();
    let mesh = op.mesh();
    let centre = (0..mesh.n_interior())
        .min_by(|&i, &j| mesh.point(i)[0].abs().total_cmp(&mesh.point(j)[0].abs()))
        .unwrap();
    let c = mesh.point(centre)[0];
    let u = GridFunction::from_fn(mesh, |x| (-(x[0] - c) * (x[0] - c)).exp());
    let val = op.frac_laplacian_far_field(&u, 0.0).unwrap()[centre];
    (val - exact).abs() / exact
}

fn operator_accuracy() -> Outcome {
    let exact = common::gaussian_frac_laplacian_at_zero(0.25);
    let (e1, e2) = (gaussian_error(0.01, exact), gaussian_error(0.005, exact));
    outcome(
        e1 <= 0.02 && e2 < e1,
        format!("oracle {exact:.10}; rel err h=0.01 {e1:.2e}, h=0.005 {e2:.2e}"),
    )
}

fn analytic_constants() -> Outcome {
    let start = Instant::now();
    let k1 = k_q(1, 2.0).unwrap();
    let k2 = k_q(2, 2.0).unwrap();
    let sigma = solve_sigma(1).unwrap();
    let mut ok = (k1 - 2.0 / 3.0).abs() <= 1e-12
        && (k2 - std::f64::consts::PI / 6.0).abs() <= 1e-12
        && (sigma - 2f64.powf(-1.0 / 3.0)).abs() <= 1e-10;
    let h = 0.005;
    let mesh = build_interval_mesh(-1.0, 1.0, h, 2.0).unwrap();
    let mut worst = 0.0_f64;
    for eps in [0.4, 0.2, 0.1, 0.05] {
        let phi = phi_eps(&mesh, eps).unwrap();
        worst = worst.max((half_mass_ratio(&mesh, &phi, eps, sigma) / 0.5 - 1.0).abs());
    }
    ok &= worst <= 5.0 * h;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && secs < 1.0,
        format!("K2(1) {k1:.15}, K2(2) {k2:.15}, sigma {sigma:.12}, half-mass dev {worst:.2e}; {secs:.2} s"),
    )
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0_f64;
    for name in ["reference.conf", "box2d.conf"] {
        let cfg = config(name);
        let op = assemble(cfg.build_mesh().unwrap(), cfg.s, cfg.eps_list[0]).unwrap();
        let spec = ProblemSpec::new(op, cfg.nonlinearity_spec().unwrap()).unwrap();
        let vol = spec.mesh().volumes().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let u = GridFunction::from_fn(spec.mesh(), |_| rng.gen_range(0.0..1.5));
            let v = GridFunction::from_fn(spec.mesh(), |_| rng.gen_range(-1.0..1.0));
            let t = 1e-4;
            let fd = (spec.energy(&u.axpy(t, &v)).unwrap() - spec.energy(&u.axpy(-t, &v)).unwrap())
                / (2.0 * t);
            let g = spec.energy_gradient(&u).unwrap();
            let an: f64 = g
                .values()
                .iter()
                .zip(v.values())
                .zip(&vol)
                .map(|((a, b), w)| a * b * w)
                .sum();
            worst = worst.max((fd - an).abs() / an.abs());
        }
    }
    outcome(
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} over 2 x 50 pairs"),
    )
}

fn energy_scaling(sweep: &SweepOutcome, secs: f64) -> Outcome {
    let s = &sweep.summary;
    let smallest = sweep
        .entries
        .iter()
        .min_by(|a, b| a.row.eps.total_cmp(&b.row.eps))
        .unwrap();
    let a = s.all_converged
        && sweep
            .entries
            .iter()
            .all(|e| e.geometry.delta > 0.0 && e.row.level >= e.geometry.delta);
    let b = s.level_spread <= 4.0;
    let c = smallest.row.eps == 0.05 && smallest.row.level < 1.0 / 3.0;
    let d = sweep
        .entries
        .iter()
        .all(|e| e.report.min_u >= -1e-8 * e.report.max_u);
    let e = smallest.report.nonconstancy > 1e-3;
    let dofs = sweep.entries[0].report.u.n_interior();
    let levels: Vec<String> = sweep
        .entries
        .iter()
        .map(|e| format!("{}:{:.5}", e.row.eps, e.row.level))
        .collect();
    outcome(
        a && b && c && d && e && secs < 300.0 && dofs <= 2000,
        format!(
            "(a){a} (b){b} spread {:.3} (c){c} (d){d} (e){e} std/mean {:.3}; levels {}; {dofs} DOFs; {secs:.1} s",
            s.level_spread,
            smallest.report.nonconstancy,
            levels.join(" ")
        ),
    )
}

fn norm_bound(sweep: &SweepOutcome) -> Outcome {
    let identities = sweep.entries.iter().all(|e| e.norm_certificate.passed);
    let worst = sweep
        .entries
        .iter()
        .map(|e| e.norm_certificate.identity_residual / e.norm_certificate.tolerance)
        .fold(0.0, f64::max);
    let fit = sweep.summary.norm_fit.unwrap();
    outcome(
        identities && fit.spread <= 4.0,
        format!(
            "identity residual/tolerance <= {worst:.2e}; ||u||^2/eps^N spread {:.3}",
            fit.spread
        ),
    )
}

fn moser(cfg: &RunConfig, dir: &Path, sweep: &SweepOutcome) -> Outcome {
    let start = Instant::now();
    let a = check_g_inequality(100_000, 11);
    let b = check_g_lower_bound(100_000, 12);
    let mut g_err = 0.0_f64;
    for &(alpha, m) in &[(2.0, 1.0), (3.0, 0.5), (5.0, 2.0), (1.5, f64::INFINITY)] {
        for t in [0.3, 1.0, 2.7, 6.0] {
            let dg = |x: f64| {
                if x < m {
                    alpha * x.powf(alpha - 1.0)
                } else {
                    m.powf(alpha - 1.0)
                }
            };
            let kink = m.min(t);
            let mut q = common::integrate(|x| dg(x).sqrt(), 0.0, kink, 1e-14);
            if t > kink {
                q += common::integrate(|x| dg(x).sqrt(), kink, t, 1e-14);
            }
            g_err = g_err.max((big_g_trunc(alpha, m, t).unwrap() - q).abs());
        }
    }
    let mut sum_err = 0.0_f64;
    for two_star in [4.0, 8.0 / 3.0] {
        for n in [1, 6, 12, 25] {
            let (p1, p2) = gamma_partial_sums(two_star, n);
            let (c1, c2) = gamma_closed_forms(two_star, n);
            sum_err = sum_err.max((p1 - c1).abs()).max((p2 - c2).abs());
        }
    }
    let mut certified = true;
    let mut ratio = f64::INFINITY;
    for e in &sweep.entries {
        let m = run_moser_check(cfg, &dir.join(solution_file_name(e.row.eps))).unwrap();
        certified &= m.ladder.certified();
        ratio = ratio.min(m.ladder.sup_estimate / m.ladder.actual_max);
        write_moser_outputs(&dir.join(format!("moser_{}", e.row.eps)), cfg, &m).unwrap();
    }
    let spec = ProblemSpec::new(
        assemble(cfg.build_mesh().unwrap(), cfg.s, 0.1).unwrap(),
        cfg.nonlinearity_spec().unwrap(),
    )
    .unwrap();
    let one = GridFunction::constant(spec.mesh(), 1.0);
    let constant = norm_ladder(&spec, &one, cfg.moser_n_max).unwrap();
    certified &= constant.certified();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        a.passed && b.passed && g_err <= 1e-10 && sum_err <= 1e-12 && certified && secs < 30.0,
        format!(
            "inequalities {}/{}; G err {g_err:.1e}; sum err {sum_err:.1e}; min sup_estimate/max {ratio:.3}; {secs:.1} s",
            a.passed, b.passed
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn full_run(cfg: &RunConfig, dir: &Path) -> SweepOutcome {
    let ids = run_identity_suite(cfg).unwrap();
    write_identity_report(dir, cfg, &ids).unwrap();
    let sweep = run_scaling_sweep(cfg).unwrap();
    write_sweep_outputs(dir, cfg, &sweep).unwrap();
    sweep
}

fn determinism(first: &Path, cfg: &RunConfig) -> Outcome {
    let second = tempfile::tempdir().unwrap();
    full_run(cfg, second.path());
    let m = run_moser_check(cfg, &second.path().join(solution_file_name(0.05))).unwrap();
    write_moser_outputs(&second.path().join("moser_0.05"), cfg, &m).unwrap();
    let a: Vec<_> = read_tree(first)
        .into_iter()
        .filter(|(p, _)| {
            !p.starts_with("moser_0.4")
                && !p.starts_with("moser_0.2")
                && !p.starts_with("moser_0.1")
        })
        .collect();
    let b = read_tree(second.path());
    let names: Vec<_> = a.iter().map(|(p, _)| p.clone()).collect();
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    outcome(
        a.len() == b.len() && differing.is_empty(),
        format!(
            "{} files compared, {} differ {:?}",
            names.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    // Run as `cargo test --test acceptance`; libtest flags are ignored.
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "identity suite", identities()),
        (2, "operator accuracy", operator_accuracy()),
        (3, "analytic constants", analytic_constants()),
        (4, "gradient correctness", gradient_correctness()),
    ];

    let cfg = config("reference.conf");
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let sweep = full_run(&cfg, dir.path());
    let secs = start.elapsed().as_secs_f64();
    results.push((5, "energy scaling", energy_scaling(&sweep, secs)));
    results.push((6, "norm bound", norm_bound(&sweep)));
    results.push((7, "moser machinery", moser(&cfg, dir.path(), &sweep)));
    results.push((8, "determinism", determinism(dir.path(), &cfg)));

    let mut all = true;
    for (n, name, o) in &results {
        all &= o.passed;
        println!(
            "criterion {n} {name}: {} ({})",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
