//! Truncated power test functions and the `L^q` ladder behind the `L^∞` bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::problem::ProblemSpec;
use crate::sobolev::lq_norm;

fn check_truncation(alpha: f64, m: f64, t: f64) -> Result<()> {
    if !(alpha > 1.0) {
        return Err(Error::Parameter(format!(
            "truncation exponent α = {alpha} must exceed 1"
        )));
    }
    if !(m > 0.0) {
        return Err(Error::Parameter(format!(
            "truncation level M = {m} must be positive"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::Parameter(format!(
            "truncation argument t = {t} must be nonnegative"
        )));
    }
    Ok(())
}

/// `g_{α,M}(t) = t·min(t, M)^{α−1}`; `M = ∞` is allowed.
pub fn g_trunc(alpha: f64, m: f64, t: f64) -> Result<f64> {
    check_truncation(alpha, m, t)?;
    Ok(t * t.min(m).powf(alpha - 1.0))
}

/// `G_{α,M}(t) = ∫₀ᵗ g'_{α,M}(τ)^{1/2} dτ` in closed form.
pub fn big_g_trunc(alpha: f64, m: f64, t: f64) -> Result<f64> {
    check_truncation(alpha, m, t)?;
    let c = 2.0 * alpha.sqrt() / (alpha + 1.0);
    if t <= m {
        Ok(c * t.powf(0.5 * (alpha + 1.0)))
    } else {
        Ok(c * m.powf(0.5 * (alpha + 1.0)) + m.powf(0.5 * (alpha - 1.0)) * (t - m))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub samples: usize,
    pub passed: bool,
    /// `(α, M, a, b)` of the first violation.
    pub counterexample: Option<[f64; 4]>,
    /// Largest `lhs/rhs` seen.
    pub worst_ratio: f64,
}

fn sample_params(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let alpha = rng.gen_range(1.0..10.0_f64).max(1.0 + 1e-9);
    let m = if rng.gen_bool(0.1) {
        f64::INFINITY
    } else {
        rng.gen_range(0.05..10.0)
    };
    (alpha, m)
}

/// Samples `|G(a) − G(b)|² ≤ (g(a) − g(b))(a − b)` for `a, b ≥ 0`.
pub fn check_g_inequality(samples: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (alpha, m) = sample_params(&mut rng);
        let a = rng.gen_range(0.0..20.0);
        let b = if rng.gen_bool(0.05) {
            a
        } else {
            rng.gen_range(0.0..20.0)
        };
        let (ga, gb) = (g_trunc(alpha, m, a).unwrap(), g_trunc(alpha, m, b).unwrap());
        let (big_a, big_b) = (
            big_g_trunc(alpha, m, a).unwrap(),
            big_g_trunc(alpha, m, b).unwrap(),
        );
        let lhs = (big_a - big_b).powi(2);
        let rhs = (ga - gb) * (a - b);
        let slack = 1e-12 * (big_a * big_a + big_b * big_b);
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
        if lhs > rhs + slack {
            return InequalityReport {
                samples,
                passed: false,
                counterexample: Some([alpha, m, a, b]),
                worst_ratio: worst,
            };
        }
    }
    InequalityReport {
        samples,
        passed: true,
        counterexample: None,
        worst_ratio: worst,
    }
}

/// Samples `G(t) ≥ (2/(α+1))·t·min(t, M)^{(α−1)/2}`.
pub fn check_g_lower_bound(samples: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let (alpha, m) = sample_params(&mut rng);
        let t = rng.gen_range(0.0..20.0);
        let big = big_g_trunc(alpha, m, t).unwrap();
        let lower = 2.0 / (alpha + 1.0) * t * t.min(m).powf(0.5 * (alpha - 1.0));
        if big > 0.0 {
            worst = worst.max(lower / big);
        }
        if lower > big * (1.0 + 1e-12) {
            return InequalityReport {
                samples,
                passed: false,
                counterexample: Some([alpha, m, t, t]),
                worst_ratio: worst,
            };
        }
    }
    InequalityReport {
        samples,
        passed: true,
        counterexample: None,
        worst_ratio: worst,
    }
}

/// `β₁ = 1`, `β_{n+1} = (2*/2)β_n`.
pub fn beta_sequence(two_star: f64, n_max: usize) -> Vec<f64> {
    let r = 0.5 * two_star;
    let mut out = Vec::with_capacity(n_max);
    let mut b = 1.0;
    for _ in 0..n_max {
        out.push(b);
        b *= r;
    }
    out
}

/// Partial sums `(Σ 1/β_n, Σ 1/√β_n)` over `n ≤ n_max`.
pub fn gamma_partial_sums(two_star: f64, n_max: usize) -> (f64, f64) {
    beta_sequence(two_star, n_max)
        .iter()
        .fold((0.0, 0.0), |(g1, g2), b| {
            (g1 + 1.0 / b, g2 + 1.0 / b.sqrt())
        })
}

/// Geometric closed forms of [`gamma_partial_sums`].
pub fn gamma_closed_forms(two_star: f64, n_max: usize) -> (f64, f64) {
    let r = 0.5 * two_star;
    let n = n_max as f64;
    let g1 = (1.0 - r.powf(-n)) / (1.0 - 1.0 / r);
    let g2 = (1.0 - r.powf(-0.5 * n)) / (1.0 - r.powf(-0.5));
    (g1, g2)
}

/// Limits of the partial sums as `n_max → ∞`.
pub fn gamma_limits(two_star: f64) -> (f64, f64) {
    let r = 0.5 * two_star;
    (r / (r - 1.0), 1.0 / (1.0 - r.powf(-0.5)))
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRung {
    pub n: usize,
    pub beta: f64,
    /// `2*β_n`.
    pub q: f64,
    /// `‖u‖_{2*β_n}`.
    pub norm_q: f64,
    /// `‖u‖_{2β_n}`.
    pub norm_low: f64,
    /// `K^{1/β_n} e^{1/√β_n} ‖u‖_{2β_n}`.
    pub bound_rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserLadder {
    pub two_star: f64,
    pub rungs: Vec<LadderRung>,
    #[serde(rename = "K")]
    pub k: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub l2_norm: f64,
    pub sup_estimate: f64,
    pub actual_max: f64,
    pub n_requested: usize,
    pub warning: Option<String>,
}

impl MoserLadder {
    pub fn certified(&self) -> bool {
        self.sup_estimate.is_finite() && self.sup_estimate >= self.actual_max
    }
}

/// Runs the ladder `‖u‖_{2*β_n} ≤ K^{1/β_n} e^{1/√β_n} ‖u‖_{2β_n}` on Ω with
/// the smallest valid `K ≥ 1`, and chains it into
/// `sup_estimate = K^{γ₁} e^{γ₂} ‖u‖₂`.
pub fn norm_ladder(spec: &ProblemSpec, u: &GridFunction, n_max: usize) -> Result<MoserLadder> {
    u.check(spec.mesh())?;
    if n_max == 0 {
        return Err(Error::Parameter("moser.n_max must be at least 1".into()));
    }
    let two_star = spec.two_star();
    let vol = spec.mesh().interior_volumes();
    let vals = u.interior();
    let betas = beta_sequence(two_star, n_max);

    let mut rungs = Vec::with_capacity(n_max);
    let mut warning = None;
    for (i, &beta) in betas.iter().enumerate() {
        let (ql, qh) = (2.0 * beta, two_star * beta);
        let (low, high) = (lq_norm(vol, vals, ql), lq_norm(vol, vals, qh));
        if !(qh.is_finite() && low.is_finite() && high.is_finite()) {
            warning = Some(format!(
                "ladder capped at n = {} of {n_max}: q = {qh:e} leaves the floating range",
                i
            ));
            break;
        }
        rungs.push(LadderRung {
            n: i + 1,
            beta,
            q: qh,
            norm_q: high,
            norm_low: low,
            bound_rhs: 0.0,
        });
    }
    if rungs.is_empty() {
        return Err(Error::Parameter("no ladder level is representable".into()));
    }

    // log K = max(0, max_n β(ln(‖u‖_{2*β}/‖u‖_{2β}) − 1/√β)).
    let log_k = rungs
        .iter()
        .filter(|r| r.norm_low > 0.0)
        .map(|r| r.beta * ((r.norm_q / r.norm_low).ln() - 1.0 / r.beta.sqrt()))
        .fold(0.0_f64, f64::max);
    for r in &mut rungs {
        r.bound_rhs = (log_k / r.beta + 1.0 / r.beta.sqrt()).exp() * r.norm_low;
    }
    let (gamma1, gamma2) = rungs.iter().fold((0.0, 0.0), |(g1, g2), r| {
        (g1 + 1.0 / r.beta, g2 + 1.0 / r.beta.sqrt())
    });
    let l2_norm = lq_norm(vol, vals, 2.0);
    let sup_estimate = (gamma1 * log_k + gamma2).exp() * l2_norm;
    let actual_max = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    Ok(MoserLadder {
        two_star,
        rungs,
        k: log_k.exp(),
        gamma1,
        gamma2,
        l2_norm,
        sup_estimate,
        actual_max,
        n_requested: n_max,
        warning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    pub alpha: f64,
    pub m: f64,
    /// `⟨u, g(u)⟩_{ε,s}`.
    pub form_side: f64,
    /// `Σ vol·f(u)g(u)`.
    pub nonlinear_side: f64,
    pub residual: f64,
    /// `Σ vol·|g(u)|` over all nodes; `|I'(u)·g(u)| ≤ weak_residual·scale`.
    pub scale: f64,
    pub chain_lhs: f64,
    pub chain_rhs: f64,
    pub chain_holds: bool,
}

/// Tests the equation against `g_{α,M}(u₊)` and checks
/// `S⁻²ε^{2s}(2/(α+1))²‖u·u_M^{(α−1)/2}‖²_{2*} ≤ Σ vol·f(u)u·u_M^{α−1}`
/// with `S = s_emb`, the embedding constant of the full form.
pub fn verify_caccioppoli_step(
    spec: &ProblemSpec,
    u: &GridFunction,
    alpha: f64,
    m: f64,
    s_emb: f64,
) -> Result<CaccioppoliReport> {
    u.check(spec.mesh())?;
    check_truncation(alpha, m, 0.0)?;
    let gu = GridFunction::new(
        spec.mesh(),
        u.values()
            .iter()
            .map(|&v| g_trunc(alpha, m, v.max(0.0)))
            .collect::<Result<Vec<f64>>>()?,
    )?;
    let form_side = spec.op().bilinear_form(u, &gu)?;
    let vol = spec.mesh().interior_volumes();
    let nonlinear_side: f64 = vol
        .iter()
        .zip(u.interior())
        .zip(gu.interior())
        .map(|((w, &a), b)| w * spec.f(a) * b)
        .sum();
    let scale: f64 = spec
        .mesh()
        .volumes()
        .iter()
        .zip(gu.values())
        .map(|(w, g)| w * g.abs())
        .sum();

    let weighted: Vec<f64> = u
        .interior()
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            v * v.min(m).powf(0.5 * (alpha - 1.0))
        })
        .collect();
    let crit = lq_norm(vol, &weighted, spec.two_star());
    let chain_lhs =
        spec.op().eps_factor() / (s_emb * s_emb) * (2.0 / (alpha + 1.0)).powi(2) * crit * crit;
    // Right side equals ⟨u, g(u)⟩ up to the residual of the tested equation.
    let residual = (form_side - nonlinear_side).abs();
    let chain_rhs = nonlinear_side;
    Ok(CaccioppoliReport {
        alpha,
        m,
        form_side,
        nonlinear_side,
        residual,
        scale,
        chain_lhs,
        chain_rhs,
        chain_holds: chain_lhs <= chain_rhs + residual,
    })
}
