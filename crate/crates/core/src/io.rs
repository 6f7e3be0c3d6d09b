//! CSV/JSON report writers with a manifest, and the plain-text solution format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mesh::DomainMesh;

pub const CODE_VERSION: &str = concat!("fracneumann ", env!("CARGO_PKG_VERSION"));

/// Provenance stamped on every output file. No timestamp, so reruns are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            code_version: CODE_VERSION.to_string(),
            seed,
        }
    }

    fn comment_line(&self) -> String {
        format!(
            "# config_hash={} code_version={} seed={}",
            self.config_hash, self.code_version, self.seed
        )
    }
}

/// Writes a CSV whose first line is the manifest comment.
pub fn write_csv(
    path: &Path,
    manifest: &Manifest,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = manifest.comment_line();
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::SizeMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Serializes `value` as a pretty JSON object with a `manifest` entry added.
pub fn write_json(path: &Path, manifest: &Manifest, value: &impl Serialize) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("manifest".into(), serde_json::to_value(manifest)?);
        }
        other => {
            let inner = std::mem::take(other);
            *other = serde_json::json!({ "data": inner, "manifest": manifest });
        }
    }
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Float formatting shared by all CSV writers: shortest round-trip form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// A solution as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSolution {
    pub dim: usize,
    pub h: f64,
    pub n_interior: usize,
    pub eps: f64,
    pub s: f64,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl StoredSolution {
    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Checks that the stored nodes coincide with `mesh` and returns the values.
    pub fn on_mesh(&self, mesh: &DomainMesh) -> Result<GridFunction> {
        if self.dim != mesh.dim() || self.n_interior != mesh.n_interior() {
            return Err(Error::Config(format!(
                "stored solution (N = {}, {} interior nodes) does not match the mesh (N = {}, {} interior nodes)",
                self.dim,
                self.n_interior,
                mesh.dim(),
                mesh.n_interior()
            )));
        }
        if (self.h - mesh.h()).abs() > 1e-12 * mesh.h() {
            return Err(Error::Config(format!(
                "stored solution has h = {}, mesh has h = {}",
                self.h,
                mesh.h()
            )));
        }
        if self.node_count() != mesh.n_total() {
            return Err(Error::SizeMismatch {
                expected: mesh.n_total(),
                got: self.node_count(),
            });
        }
        for i in 0..mesh.n_total() {
            let stored = &self.coords[i * self.dim..(i + 1) * self.dim];
            if stored
                .iter()
                .zip(mesh.point(i))
                .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
            {
                return Err(Error::Config(format!(
                    "stored node {i} at {stored:?} differs from mesh node {:?}",
                    mesh.point(i)
                )));
            }
        }
        GridFunction::new(mesh, self.values.clone())
    }
}

/// Header `N h node_count`, `#` metadata lines, then one node per line.
pub fn write_solution(
    path: &Path,
    mesh: &DomainMesh,
    u: &GridFunction,
    eps: f64,
    s: f64,
) -> Result<()> {
    u.check(mesh)?;
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", mesh.dim(), mesh.h(), mesh.n_total());
    let _ = writeln!(out, "# interior_nodes={}", mesh.n_interior());
    let _ = writeln!(out, "# eps={eps}");
    let _ = writeln!(out, "# s={s}");
    for (i, v) in u.values().iter().enumerate() {
        for x in mesh.point(i) {
            let _ = write!(out, "{x} ");
        }
        let _ = writeln!(out, "{v}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_solution(path: &Path) -> Result<StoredSolution> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(err(1, format!("expected `N h node_count`, got {header:?}")));
    }
    let dim: usize = fields[0].parse().map_err(|_| err(1, "bad N".into()))?;
    let h: f64 = fields[1].parse().map_err(|_| err(1, "bad h".into()))?;
    let count: usize = fields[2]
        .parse()
        .map_err(|_| err(1, "bad node count".into()))?;
    if !(1..=3).contains(&dim) {
        return Err(err(1, format!("unsupported dimension {dim}")));
    }

    let (mut n_interior, mut eps, mut s) = (None, None, None);
    let mut coords = Vec::with_capacity(count * dim);
    let mut values = Vec::with_capacity(count);
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                let bad = || err(idx + 1, format!("bad metadata {line:?}"));
                match k.trim() {
                    "interior_nodes" => n_interior = Some(v.trim().parse().map_err(|_| bad())?),
                    "eps" => eps = Some(v.trim().parse().map_err(|_| bad())?),
                    "s" => s = Some(v.trim().parse().map_err(|_| bad())?),
                    _ => {}
                }
            }
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(idx + 1, format!("bad node line {line:?}")))?;
        if nums.len() != dim + 1 {
            return Err(err(
                idx + 1,
                format!("expected {} numbers, got {}", dim + 1, nums.len()),
            ));
        }
        coords.extend_from_slice(&nums[..dim]);
        values.push(nums[dim]);
    }
    if values.len() != count {
        return Err(err(
            1,
            format!("header promises {count} nodes, found {}", values.len()),
        ));
    }
    let missing = |k: &str| err(1, format!("missing `# {k}=` metadata"));
    Ok(StoredSolution {
        dim,
        h,
        n_interior: n_interior.ok_or_else(|| missing("interior_nodes"))?,
        eps: eps.ok_or_else(|| missing("eps"))?,
        s: s.ok_or_else(|| missing("s"))?,
        coords,
        values,
    })
}

/// Gnuplot recipe for the sweep outputs.
pub fn plot_script(solution_files: &[(f64, String)]) -> String {
    let mut out = String::new();
    out.push_str("# gnuplot recipe: gnuplot plot.gp\n");
    out.push_str("set datafile separator ','\n");
    out.push_str("set terminal pngcairo size 900,600\n");
    out.push_str("set output 'level_scaling.png'\n");
    out.push_str("set logscale x\n");
    out.push_str("set xlabel 'eps'\n");
    out.push_str("set ylabel 'c_eps / eps^N'\n");
    out.push_str("plot 'sweep.csv' every ::1 using 1:3 with linespoints title 'level/eps^N'\n");
    if !solution_files.is_empty() {
        out.push_str("set datafile separator whitespace\n");
        out.push_str("unset logscale x\n");
        out.push_str("set output 'solutions.png'\n");
        out.push_str("set xlabel 'x'\n");
        out.push_str("set ylabel 'u'\n");
        out.push_str("set xrange [-1.5:1.5]\n");
        let parts: Vec<String> = solution_files
            .iter()
            .map(|(eps, f)| format!("'{f}' every ::1 using 1:2 with lines title 'eps={eps}'"))
            .collect();
        let _ = writeln!(out, "plot {}", parts.join(", \\\n     "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    #[test]
    fn solution_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = build_interval_mesh(-1.0, 1.0, 0.1, 2.0).unwrap();
        let u = GridFunction::from_fn(&mesh, |x| (3.0 * x[0]).sin() / 7.0);
        let path = dir.path().join("u.txt");
        write_solution(&path, &mesh, &u, 0.1, 0.25).unwrap();
        let back = read_solution(&path).unwrap();
        assert_eq!(back.eps, 0.1);
        assert_eq!(back.on_mesh(&mesh).unwrap(), u);
        let other = build_interval_mesh(-1.0, 1.0, 0.05, 2.0).unwrap();
        assert!(back.on_mesh(&other).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(
            &path,
            "1 0.1 3\n# interior_nodes=1\n# eps=0.1\n# s=0.25\n0 1\n",
        )
        .unwrap();
        assert!(matches!(read_solution(&path), Err(Error::Parse { .. })));
        assert!(matches!(
            read_solution(&dir.path().join("missing.txt")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn manifest_is_embedded() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new("abc".into(), 3);
        let p = dir.path().join("x.json");
        write_json(&p, &m, &serde_json::json!({"k": 1})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["manifest"]["config_hash"], "abc");
        let c = dir.path().join("x.csv");
        write_csv(&c, &m, &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert!(fs::read_to_string(&c)
            .unwrap()
            .starts_with("# config_hash=abc"));
    }
}
