//! Reproducible runs: identity suite, ε sweep and Moser check.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::io::{self, num, Manifest};
use crate::linalg;
use crate::moser::{self, CaccioppoliReport, MoserLadder};
use crate::mountain_pass::{
    self, apriori_norm_certificate, fit_norm_bound, nonnegativity_certificate, pass_geometry,
    NormBoundFit, NormCertificate, PassGeometry, SolveReport,
};
use crate::nonlocal::{assemble_with, verify_scaling_identity, AssemblyOptions, FormOperator};
use crate::problem::{check_hypotheses, ProblemSpec, ReducedProblem};
use crate::sobolev::{estimate_sobolev_constant, SobolevEstimate, SobolevOptions};
use crate::testfn::{phi_eps, Thresholds};

const IDENTITY_TOL: f64 = 1e-12;

pub fn manifest(cfg: &RunConfig) -> Manifest {
    Manifest::new(cfg.config_hash(), cfg.seed)
}

fn assemble_cfg(cfg: &RunConfig, eps: f64) -> Result<FormOperator> {
    let mesh = cfg.build_mesh()?;
    assemble_with(
        mesh,
        cfg.s,
        eps,
        AssemblyOptions {
            c_ns: cfg.c_ns,
            ..AssemblyOptions::default()
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityEntry {
    pub name: &'static str,
    /// Worst relative residual over all samples.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub nodes: usize,
    pub interior_nodes: usize,
    pub samples: usize,
    pub entries: Vec<IdentityEntry>,
    pub passed: bool,
}

impl IdentityReport {
    pub fn failed(&self) -> Vec<&'static str> {
        self.entries
            .iter()
            .filter(|e| !e.passed)
            .map(|e| e.name)
            .collect()
    }
}

/// Gauss, Green, constant annihilation, extension consistency and the
/// dilation identity on the configured mesh.
pub fn run_identity_suite(cfg: &RunConfig) -> Result<IdentityReport> {
    let eps = cfg.eps_list[0];
    let mut op = assemble_cfg(cfg, eps)?;
    if let Some(factor) = cfg.inject_fault {
        op.inject_asymmetry(factor);
    }
    let mesh = op.mesh_arc();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut random = || GridFunction::from_fn(&mesh, |_| rng.gen_range(-1.0..1.0));

    let samples = cfg.identity_samples.max(1);
    let mut gauss = 0.0_f64;
    let mut green = 0.0_f64;
    let mut extension = 0.0_f64;
    for _ in 0..samples {
        let u = random();
        let v = random();
        gauss = gauss.max(op.check_divergence(&u)?.relative());
        green = green.max(op.check_integration_by_parts(&u, &v)?.relative());
        let ext = op.exterior_extension(u.interior())?;
        let neu = op.neumann_derivative(&ext)?;
        let scale = linalg::max_abs(u.interior()) * op.c_ns();
        let (lo, hi) = (ext.interior_min(), ext.interior_max());
        let outside = ext
            .exterior()
            .iter()
            .map(|&x| (lo - x).max(x - hi).max(0.0))
            .fold(0.0, f64::max);
        extension = extension.max(linalg::max_abs(&neu) / scale).max(outside);
    }

    let c = GridFunction::constant(&mesh, 1.7);
    let constants = linalg::max_abs(&op.frac_laplacian(&c)?)
        .max(linalg::max_abs(&op.neumann_derivative(&c)?))
        .max(op.seminorm(&c, &c)?.abs());

    let profile = |x: &[f64]| {
        x.iter()
            .map(|t| (std::f64::consts::PI * t).cos())
            .product::<f64>()
    };
    let scaling = verify_scaling_identity(&mesh, cfg.s, eps, profile, op.exec())?;

    let entry = |name, residual: f64, tolerance| IdentityEntry {
        name,
        residual,
        tolerance,
        passed: residual <= tolerance,
    };
    let entries = vec![
        entry("gauss", gauss, IDENTITY_TOL),
        entry("green", green, IDENTITY_TOL),
        entry("constants", constants, 0.0),
        entry("extension", extension, IDENTITY_TOL),
        entry("scaling", scaling.relative_residual, 5.0 * cfg.h),
    ];
    let passed = entries.iter().all(|e| e.passed);
    Ok(IdentityReport {
        nodes: mesh.n_total(),
        interior_nodes: mesh.n_interior(),
        samples,
        entries,
        passed,
    })
}

pub fn write_identity_report(
    dir: &Path,
    cfg: &RunConfig,
    report: &IdentityReport,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("identities.json");
    io::write_json(&path, &manifest(cfg), report)?;
    Ok(path)
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub level: f64,
    pub level_over_eps_n: f64,
    pub residual: f64,
    pub min_u: f64,
    pub norm_sq: f64,
    pub norm_over_eps_n: f64,
    /// `c_ε / I_ε(μ)`, μ the cheapest constant solution.
    pub nonconstancy_ratio: f64,
    pub converged: bool,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "eps",
    "level",
    "level_over_epsN",
    "residual",
    "min_u",
    "norm_sq",
    "norm_over_epsN",
    "nonconstancy_ratio",
    "converged",
];

pub const SCALING_COLUMNS: [&str; 6] = ["eps", "C_est", "t1", "t2", "g_max", "bound"];

/// Certificates attached to one ε.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub row: SweepRow,
    pub thresholds: Thresholds,
    pub geometry: PassGeometry,
    pub neg_energy: f64,
    pub norm_certificate: NormCertificate,
    #[serde(skip)]
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub dim: usize,
    pub eps: Vec<f64>,
    pub level_over_eps_n_max: f64,
    pub level_over_eps_n_min: f64,
    pub level_spread: f64,
    /// `min_{μ ∈ Fix f} I_ε(μ)`.
    pub constant_level: f64,
    pub smallest_eps_level: f64,
    pub smallest_eps_below_constant: bool,
    pub smallest_eps_nonconstancy: f64,
    pub c_est_spread: f64,
    pub norm_fit: Option<NormBoundFit>,
    pub sobolev: SobolevEstimate,
    pub all_converged: bool,
    pub levels_above_delta: bool,
    pub nonnegative: bool,
    pub norm_identities: bool,
    pub no_constant_capture: bool,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    pub summary: SweepSummary,
}

/// JSON form of a single solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub eps: f64,
    pub level: f64,
    pub residual: f64,
    pub min_u: f64,
    pub norm_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            eps: r.eps,
            level: r.level,
            residual: r.residual,
            min_u: r.min_u,
            norm_sq: r.norm_sq,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

/// Mountain-pass solve and certificates for every ε of the configuration.
/// The kernel weights, reduced stiffness and Sobolev estimate do not depend
/// on ε and are computed once.
pub fn run_scaling_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let nl = cfg.nonlinearity_spec()?;
    let base = assemble_cfg(cfg, cfg.eps_list[0])?;
    let two_star = base.two_star();
    check_hypotheses(&nl, two_star).ensure()?;
    let stiffness = Arc::new(base.reduced_stiffness());
    let sobolev = estimate_sobolev_constant(&base, SobolevOptions::default());
    let dim = base.dim();

    let mut entries = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let op = base.with_eps(eps)?;
        let spec = ProblemSpec::new(op, nl.clone())?;
        let phi = phi_eps(spec.mesh(), eps)?;
        let (e, thresholds) = mountain_pass::endpoint(&spec, &phi)?;
        let red = ReducedProblem::with_stiffness(spec.clone(), Arc::clone(&stiffness))?;
        let report = mountain_pass::mountain_pass_solve_reduced(&red, &e, &cfg.solver)?;
        let geometry = pass_geometry(&spec, &sobolev)?;
        let (_, neg_energy) = nonnegativity_certificate(&spec, &report.u)?;
        let norm_certificate = apriori_norm_certificate(&spec, &report)?;
        let eps_n = eps.powi(dim as i32);
        let row = SweepRow {
            eps,
            level: report.level,
            level_over_eps_n: report.level / eps_n,
            residual: report.residual,
            min_u: report.min_u,
            norm_sq: report.norm_sq,
            norm_over_eps_n: report.norm_sq / eps_n,
            nonconstancy_ratio: report.energy_vs_constant,
            converged: report.converged,
        };
        entries.push(SweepEntry {
            row,
            thresholds,
            geometry,
            neg_energy,
            norm_certificate,
            report,
        });
    }

    let ratios: Vec<f64> = entries.iter().map(|e| e.row.level_over_eps_n).collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c_est: Vec<f64> = entries.iter().map(|e| e.thresholds.c_est).collect();
    let c_spread = c_est.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / c_est.iter().copied().fold(f64::INFINITY, f64::min);
    let smallest = entries
        .iter()
        .min_by(|a, b| a.row.eps.total_cmp(&b.row.eps))
        .expect("eps_list is nonempty");
    let constant_level = smallest.row.level / smallest.row.nonconstancy_ratio;
    let reports: Vec<SolveReport> = entries.iter().map(|e| e.report.clone()).collect();
    let norm_fit = fit_norm_bound(&reports, dim, nl.theta);

    let all_converged = entries.iter().all(|e| e.row.converged);
    let levels_above_delta = entries
        .iter()
        .all(|e| e.geometry.delta > 0.0 && e.row.level >= e.geometry.delta);
    let nonnegative = entries
        .iter()
        .all(|e| e.report.min_u >= -1e-8 * e.report.max_u);
    let norm_identities = entries.iter().all(|e| e.norm_certificate.passed);
    let no_constant_capture = entries.iter().all(|e| !e.report.constant_capture);
    let smallest_eps_below_constant = smallest.row.level < constant_level;
    let passed = all_converged
        && levels_above_delta
        && nonnegative
        && norm_identities
        && no_constant_capture
        && smallest_eps_below_constant;

    let summary = SweepSummary {
        dim,
        eps: cfg.eps_list.clone(),
        level_over_eps_n_max: hi,
        level_over_eps_n_min: lo,
        level_spread: hi / lo,
        constant_level,
        smallest_eps_level: smallest.row.level,
        smallest_eps_below_constant,
        smallest_eps_nonconstancy: smallest.report.nonconstancy,
        c_est_spread: c_spread,
        norm_fit,
        sobolev,
        all_converged,
        levels_above_delta,
        nonnegative,
        norm_identities,
        no_constant_capture,
        passed,
    };
    Ok(SweepOutcome { entries, summary })
}

pub fn solution_file_name(eps: f64) -> String {
    format!("solution_eps_{eps}.txt")
}

/// Writes `sweep.csv`, `scaling.csv`, `sweep_summary.json`, one report JSON
/// and one solution file per ε, and `plot.gp`.
pub fn write_sweep_outputs(dir: &Path, cfg: &RunConfig, outcome: &SweepOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let man = manifest(cfg);
    let rows: Vec<Vec<String>> = outcome
        .entries
        .iter()
        .map(|e| {
            let r = &e.row;
            vec![
                num(r.eps),
                num(r.level),
                num(r.level_over_eps_n),
                num(r.residual),
                num(r.min_u),
                num(r.norm_sq),
                num(r.norm_over_eps_n),
                num(r.nonconstancy_ratio),
                r.converged.to_string(),
            ]
        })
        .collect();
    io::write_csv(&dir.join("sweep.csv"), &man, &SWEEP_COLUMNS, &rows)?;

    let rows: Vec<Vec<String>> = outcome
        .entries
        .iter()
        .map(|e| {
            let t = &e.thresholds;
            vec![
                num(t.eps),
                num(t.c_est),
                num(t.t1),
                num(t.t2),
                num(t.g_max),
                num(t.bound),
            ]
        })
        .collect();
    io::write_csv(&dir.join("scaling.csv"), &man, &SCALING_COLUMNS, &rows)?;

    #[derive(Serialize)]
    struct Full<'a> {
        summary: &'a SweepSummary,
        entries: &'a [SweepEntry],
    }
    io::write_json(
        &dir.join("sweep_summary.json"),
        &man,
        &Full {
            summary: &outcome.summary,
            entries: &outcome.entries,
        },
    )?;

    let mesh = cfg.build_mesh()?;
    let mut files = Vec::new();
    for e in &outcome.entries {
        let eps = e.row.eps;
        io::write_json(
            &dir.join(format!("report_eps_{eps}.json")),
            &man,
            &SolveSummary::from(&e.report),
        )?;
        let name = solution_file_name(eps);
        io::write_solution(&dir.join(&name), &mesh, &e.report.u, eps, cfg.s)?;
        files.push((eps, name));
    }
    std::fs::write(dir.join("plot.gp"), io::plot_script(&files))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserOutcome {
    pub eps: f64,
    pub ladder: MoserLadder,
    pub weak_residual: f64,
    pub grad_tol: f64,
    pub s_emb: f64,
    pub caccioppoli: Vec<CaccioppoliReport>,
    /// Tested-equation residuals within `10·grad_tol·scale`.
    pub identity_ok: bool,
    pub chain_ok: bool,
    pub passed: bool,
}

/// Ladder and truncation checks on a stored solution. The mesh comes from
/// the configuration and must match the file node by node; ε and `s` come
/// from the file.
pub fn run_moser_check(cfg: &RunConfig, solution: &Path) -> Result<MoserOutcome> {
    let stored = io::read_solution(solution)?;
    if (stored.s - cfg.s).abs() > 1e-15 {
        return Err(Error::Config(format!(
            "solution was computed with s = {}, configuration has s = {}",
            stored.s, cfg.s
        )));
    }
    let op = assemble_cfg(cfg, stored.eps)?;
    let u = stored.on_mesh(op.mesh())?;
    let spec = ProblemSpec::new(op, cfg.nonlinearity_spec()?)?;

    let grad_tol = match cfg.solver.grad_tol_abs {
        Some(t) => t,
        None => {
            let phi = phi_eps(spec.mesh(), stored.eps)?;
            let (e, _) = mountain_pass::endpoint(&spec, &phi)?;
            cfg.solver.grad_tol_rel * spec.weak_residual(&e)?
        }
    };
    let weak_residual = spec.weak_residual(&u)?;
    let sobolev = estimate_sobolev_constant(spec.op(), SobolevOptions::default());
    let s_emb = sobolev.embedding_constant(stored.eps, cfg.s);
    let ladder = moser::norm_ladder(&spec, &u, cfg.moser_n_max)?;

    let max_u = u.interior_max().max(0.0);
    let mut caccioppoli = Vec::new();
    if max_u > 0.0 {
        for alpha in [2.0, 3.0, 5.0] {
            for m in [max_u, 10.0 * max_u] {
                caccioppoli.push(moser::verify_caccioppoli_step(&spec, &u, alpha, m, s_emb)?);
            }
        }
    }
    let identity_ok = caccioppoli
        .iter()
        .all(|c| c.residual <= 10.0 * grad_tol * c.scale);
    let chain_ok = caccioppoli.iter().all(|c| c.chain_holds);
    let passed = ladder.certified() && identity_ok && chain_ok;
    Ok(MoserOutcome {
        eps: stored.eps,
        ladder,
        weak_residual,
        grad_tol,
        s_emb,
        caccioppoli,
        identity_ok,
        chain_ok,
        passed,
    })
}

pub const LADDER_COLUMNS: [&str; 5] = ["n", "beta_n", "q", "norm_q", "bound_rhs"];

pub fn write_moser_outputs(dir: &Path, cfg: &RunConfig, outcome: &MoserOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let man = manifest(cfg);
    let rows: Vec<Vec<String>> = outcome
        .ladder
        .rungs
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.beta),
                num(r.q),
                num(r.norm_q),
                num(r.bound_rhs),
            ]
        })
        .collect();
    io::write_csv(&dir.join("ladder.csv"), &man, &LADDER_COLUMNS, &rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        #[serde(rename = "K")]
        k: f64,
        gamma1: f64,
        gamma2: f64,
        sup_estimate: f64,
        actual_max: f64,
        warning: &'a Option<String>,
        detail: &'a MoserOutcome,
    }
    let l = &outcome.ladder;
    io::write_json(
        &dir.join("moser_summary.json"),
        &man,
        &Summary {
            k: l.k,
            gamma1: l.gamma1,
            gamma2: l.gamma2,
            sup_estimate: l.sup_estimate,
            actual_max: l.actual_max,
            warning: &l.warning,
            detail: outcome,
        },
    )
}

/// `(N, q, K_q)` rows for the `constants` command.
pub fn k_q_table(dims: &[usize], qs: &[f64]) -> Result<Vec<(usize, f64, f64)>> {
    let mut out = Vec::new();
    for &n in dims {
        for &q in qs {
            out.push((n, q, crate::testfn::k_q(n, q)?));
        }
    }
    Ok(out)
}
