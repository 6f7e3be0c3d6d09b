//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `domain.kind` | `interval`, `box` or `disk` | `interval` |
//! | `domain.bounds` | `a,b` / `x0,x1,y0,y1` / `cx,cy,r` | `-1,1` |
//! | `domain.h` | lattice spacing | `0.01` |
//! | `domain.r_ext` | collar width | `5·diam(Ω)` |
//! | `s` | fractional order in (0,1) | `0.25` |
//! | `eps` / `eps_list` | one ε or a comma list | `0.1` |
//! | `c_ns` | override of `C_{N,s}` | standard value |
//! | `nonlinearity` | `power` or `table` | `power` |
//! | `p` | exponent, `2 < p < 2*_s` | `3` |
//! | `nonlinearity.table` | `t:f` pairs, e.g. `0:0, 1:1, 2:4` | |
//! | `nonlinearity.theta`, `nonlinearity.a3` | table-model constants | `p`, `0` |
//! | `nonlinearity.eta` | η of the growth bound | `0.25` |
//! | `solver.path_points` | path vertices | `33` |
//! | `solver.grad_tol_rel` | tolerance relative to `max‖∇I(e)‖` | `1e-8` |
//! | `solver.grad_tol` | absolute tolerance | unset |
//! | `solver.max_outer` | descent iteration cap | `5000` |
//! | `solver.descent_step` | largest line-search step | `1` |
//! | `solver.newton_switch` | relative residual at which Newton starts | `0.1` |
//! | `solver.max_newton` | Newton iteration cap | `40` |
//! | `solver.perturbation` | seeded path perturbation amplitude | `0` |
//! | `moser.n_max` | ladder length | `12` |
//! | `identities.samples` | random functions per identity | `100` |
//! | `identities.inject_fault` | scale one weight row (test hook) | unset |
//! | `seed` | RNG seed | `0` |
//! | `output_dir` | where reports go | `out` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::{build_box_mesh, build_disk_mesh, build_interval_mesh, DomainMesh, DomainShape};
use crate::mountain_pass::MpaConfig;
use crate::nonlocal::critical_exponent;
use crate::problem::NonlinearitySpec;

const KNOWN_KEYS: &[&str] = &[
    "domain.kind",
    "domain.bounds",
    "domain.h",
    "domain.r_ext",
    "s",
    "eps",
    "eps_list",
    "c_ns",
    "nonlinearity",
    "p",
    "nonlinearity.table",
    "nonlinearity.theta",
    "nonlinearity.a3",
    "nonlinearity.eta",
    "solver.path_points",
    "solver.grad_tol_rel",
    "solver.grad_tol",
    "solver.max_outer",
    "solver.descent_step",
    "solver.newton_switch",
    "solver.max_newton",
    "solver.perturbation",
    "moser.n_max",
    "identities.samples",
    "identities.inject_fault",
    "seed",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityChoice {
    Power {
        p: f64,
    },
    Table {
        points: Vec<(f64, f64)>,
        p: f64,
        theta: f64,
        a3: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub shape: DomainShape,
    pub h: f64,
    pub r_ext: f64,
    pub s: f64,
    pub eps_list: Vec<f64>,
    pub c_ns: Option<f64>,
    pub nonlinearity: NonlinearityChoice,
    pub eta: f64,
    pub solver: MpaConfig,
    pub moser_n_max: usize,
    pub identity_samples: usize,
    pub inject_fault: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    entries: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_entries(BTreeMap::new()).expect("defaults are valid")
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64(key, t))
        .collect()
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: "<config>".into(),
                line: idx + 1,
                msg,
            };
            let Some((k, v)) = line.split_once('=') else {
                return Err(parse_err(format!("expected `key = value`, got {line:?}")));
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(parse_err(format!("unknown key {k:?}")));
            }
            if entries.insert(k.clone(), v).is_some() {
                return Err(parse_err(format!("duplicate key {k:?}")));
            }
        }
        Self::from_entries(entries)
    }

    /// Replaces (or adds) one key and re-validates.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        let mut entries = self.entries.clone();
        entries.insert(key.to_string(), value.to_string());
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| entries.get(k).map(String::as_str);
        let f = |k: &str, default: f64| get(k).map_or(Ok(default), |v| parse_f64(k, v));
        let u = |k: &str, default: usize| get(k).map_or(Ok(default), |v| parse_usize(k, v));

        let kind = get("domain.kind").unwrap_or("interval");
        let shape = match kind {
            "interval" => {
                let b = get("domain.bounds")
                    .map_or(Ok(vec![-1.0, 1.0]), |v| parse_list("domain.bounds", v))?;
                if b.len() != 2 {
                    return Err(Error::Config("domain.bounds: interval needs `a,b`".into()));
                }
                DomainShape::Interval { a: b[0], b: b[1] }
            }
            "box" => {
                let b = get("domain.bounds").map_or(Ok(vec![-0.5, 0.5, -0.5, 0.5]), |v| {
                    parse_list("domain.bounds", v)
                })?;
                if b.len() != 4 {
                    return Err(Error::Config(
                        "domain.bounds: box needs `x0,x1,y0,y1`".into(),
                    ));
                }
                DomainShape::Box {
                    lo: [b[0], b[2]],
                    hi: [b[1], b[3]],
                }
            }
            "disk" => {
                let b = get("domain.bounds")
                    .map_or(Ok(vec![0.0, 0.0, 0.5]), |v| parse_list("domain.bounds", v))?;
                if b.len() != 3 {
                    return Err(Error::Config("domain.bounds: disk needs `cx,cy,r`".into()));
                }
                DomainShape::Disk {
                    center: [b[0], b[1]],
                    radius: b[2],
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "domain.kind: expected interval, box or disk, got {other:?}"
                )))
            }
        };
        let h = f("domain.h", 0.01)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("domain.h = {h} must be positive")));
        }
        let r_ext = f("domain.r_ext", 5.0 * shape.diameter())?;
        if !(r_ext >= shape.extent()) {
            return Err(Error::Config(format!(
                "domain.r_ext = {r_ext} must be at least the domain extent {}",
                shape.extent()
            )));
        }

        let s = f("s", 0.25)?;
        let dim = shape.dim();
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Config(format!("s = {s} must lie in (0, 1)")));
        }
        if !(dim as f64 > 2.0 * s) {
            return Err(Error::Config(format!(
                "need N > 2s, got N = {dim}, s = {s}"
            )));
        }
        let eps_list = match (get("eps"), get("eps_list")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either eps or eps_list, not both".into()))
            }
            (Some(v), None) => vec![parse_f64("eps", v)?],
            (None, Some(v)) => parse_list("eps_list", v)?,
            (None, None) => vec![0.1],
        };
        if eps_list.is_empty() {
            return Err(Error::Config("eps_list is empty".into()));
        }
        let origin = vec![0.0; dim];
        let margin = shape.inner_margin(&origin);
        for &e in &eps_list {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("ε = {e} must be positive")));
            }
            if e > margin {
                return Err(Error::Config(format!(
                    "ε = {e} too large: the ball of radius ε around the origin must lie in Ω (margin {margin})"
                )));
            }
        }
        let c_ns = get("c_ns").map(|v| parse_f64("c_ns", v)).transpose()?;
        if c_ns.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("c_ns must be positive".into()));
        }

        let two_star = critical_exponent(dim, s);
        let p = f("p", 3.0)?;
        if !(p > 2.0 && p < two_star) {
            return Err(Error::Config(format!(
                "p = {p} must lie in (2, 2*_s = {two_star}) for N = {dim}, s = {s}"
            )));
        }
        let nonlinearity = match get("nonlinearity").unwrap_or("power") {
            "power" => NonlinearityChoice::Power { p },
            "table" => {
                let raw = get("nonlinearity.table").ok_or_else(|| {
                    Error::Config("nonlinearity = table needs nonlinearity.table".into())
                })?;
                let points = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|pair| {
                        let (t, v) = pair.split_once(':').ok_or_else(|| {
                            Error::Config(format!("nonlinearity.table: expected t:f, got {pair:?}"))
                        })?;
                        Ok((
                            parse_f64("nonlinearity.table", t)?,
                            parse_f64("nonlinearity.table", v)?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                NonlinearityChoice::Table {
                    points,
                    p,
                    theta: f("nonlinearity.theta", p)?,
                    a3: f("nonlinearity.a3", 0.0)?,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "nonlinearity: expected power or table, got {other:?}"
                )))
            }
        };
        let eta = f("nonlinearity.eta", 0.25)?;
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::Config(format!(
                "nonlinearity.eta = {eta} must lie in (0, 1/2)"
            )));
        }

        let seed = get("seed").map_or(Ok(0), |v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("seed: expected an integer, got {v:?}")))
        })?;
        let defaults = MpaConfig::default();
        let solver = MpaConfig {
            path_points: u("solver.path_points", defaults.path_points)?,
            grad_tol_rel: f("solver.grad_tol_rel", defaults.grad_tol_rel)?,
            grad_tol_abs: get("solver.grad_tol")
                .map(|v| parse_f64("solver.grad_tol", v))
                .transpose()?,
            max_outer: u("solver.max_outer", defaults.max_outer)?,
            descent_step: f("solver.descent_step", defaults.descent_step)?,
            newton_switch: f("solver.newton_switch", defaults.newton_switch)?,
            max_newton: u("solver.max_newton", defaults.max_newton)?,
            perturbation: f("solver.perturbation", defaults.perturbation)?,
            seed,
        };
        solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;

        let moser_n_max = u("moser.n_max", 12)?;
        if moser_n_max == 0 {
            return Err(Error::Config("moser.n_max must be at least 1".into()));
        }
        let identity_samples = u("identities.samples", 100)?;
        let inject_fault = get("identities.inject_fault")
            .map(|v| parse_f64("identities.inject_fault", v))
            .transpose()?;
        let output_dir = PathBuf::from(get("output_dir").unwrap_or("out"));

        let cfg = Self {
            shape,
            h,
            r_ext,
            s,
            eps_list,
            c_ns,
            nonlinearity,
            eta,
            solver,
            moser_n_max,
            identity_samples,
            inject_fault,
            seed,
            output_dir,
            entries,
        };
        cfg.nonlinearity_spec()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn build_mesh(&self) -> Result<DomainMesh> {
        match self.shape {
            DomainShape::Interval { a, b } => build_interval_mesh(a, b, self.h, self.r_ext),
            DomainShape::Box { lo, hi } => build_box_mesh(lo, hi, self.h, self.r_ext),
            DomainShape::Disk { center, radius } => {
                build_disk_mesh(center, radius, self.h, self.r_ext)
            }
        }
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec> {
        let mut nl = match &self.nonlinearity {
            NonlinearityChoice::Power { p } => NonlinearitySpec::power(*p)?,
            NonlinearityChoice::Table {
                points,
                p,
                theta,
                a3,
            } => NonlinearitySpec::table(points, *p, *theta, *a3)?,
        };
        nl.eta = self.eta;
        if matches!(self.nonlinearity, NonlinearityChoice::Table { .. }) {
            let report =
                crate::problem::check_hypotheses(&nl, critical_exponent(self.dim(), self.s));
            nl.c_eta = report.c_eta;
        }
        Ok(nl)
    }

    /// Canonical `key=value` lines, sorted, without `output_dir`.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| k.as_str() != "output_dir")
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
