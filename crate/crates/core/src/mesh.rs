//! Cell-centered uniform meshes of Ω together with a truncated exterior collar.
//!
//! Nodes are stored interior-first: indices `0..n_interior` lie in Ω and the
//! remaining indices lie in the collar `{x ∉ Ω̄ : dist(x, Ω) ≤ R_ext}`. Every
//! node carries the volume of its cell, which doubles as its quadrature weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when classifying lattice points against the domain boundary.
const GEOM_TOL: f64 = 1e-12;

/// Geometry of the bounded domain Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainShape {
    Interval { a: f64, b: f64 },
    Box { lo: [f64; 2], hi: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainShape {
    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Lebesgue measure |Ω|.
    pub fn measure(&self) -> f64 {
        match *self {
            DomainShape::Interval { a, b } => b - a,
            DomainShape::Box { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            DomainShape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            DomainShape::Interval { a, b } => b - a,
            DomainShape::Box { lo, hi } => (hi[0] - lo[0]).hypot(hi[1] - lo[1]),
            DomainShape::Disk { radius, .. } => 2.0 * radius,
        }
    }

    /// Largest axis extent; the minimum admissible collar width.
    pub fn extent(&self) -> f64 {
        match *self {
            DomainShape::Interval { a, b } => b - a,
            DomainShape::Box { lo, hi } => (hi[0] - lo[0]).max(hi[1] - lo[1]),
            DomainShape::Disk { radius, .. } => 2.0 * radius,
        }
    }

    /// Euclidean distance from `x` to Ω̄ (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match *self {
            DomainShape::Interval { a, b } => (a - x[0]).max(x[0] - b).max(0.0),
            DomainShape::Box { lo, hi } => {
                let dx = (lo[0] - x[0]).max(x[0] - hi[0]).max(0.0);
                let dy = (lo[1] - x[1]).max(x[1] - hi[1]).max(0.0);
                dx.hypot(dy)
            }
            DomainShape::Disk { center, radius } => {
                ((x[0] - center[0]).hypot(x[1] - center[1]) - radius).max(0.0)
            }
        }
    }

    /// Signed margin: positive strictly inside Ω, equal to the distance to ∂Ω.
    pub fn inner_margin(&self, x: &[f64]) -> f64 {
        match *self {
            DomainShape::Interval { a, b } => (x[0] - a).min(b - x[0]),
            DomainShape::Box { lo, hi } => (x[0] - lo[0])
                .min(hi[0] - x[0])
                .min(x[1] - lo[1])
                .min(hi[1] - x[1]),
            DomainShape::Disk { center, radius } => {
                radius - (x[0] - center[0]).hypot(x[1] - center[1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match *self {
            DomainShape::Interval { a, b } => {
                if !(finite(a) && finite(b) && a < b) {
                    return Err(Error::Mesh(format!("degenerate interval ({a}, {b})")));
                }
            }
            DomainShape::Box { lo, hi } => {
                for axis in 0..2 {
                    if !(finite(lo[axis]) && finite(hi[axis]) && lo[axis] < hi[axis]) {
                        return Err(Error::Mesh(format!(
                            "degenerate bounds on axis {axis}: ({}, {})",
                            lo[axis], hi[axis]
                        )));
                    }
                }
            }
            DomainShape::Disk { center, radius } => {
                if !(finite(center[0]) && finite(center[1]) && finite(radius) && radius > 0.0) {
                    return Err(Error::Mesh(format!("degenerate disk radius {radius}")));
                }
            }
        }
        Ok(())
    }
}

/// Interior nodes of Ω plus the exterior collar, with per-node cell volumes.
#[derive(Debug, Clone)]
pub struct DomainMesh {
    shape: DomainShape,
    dim: usize,
    h: f64,
    r_ext: f64,
    n_interior: usize,
    coords: Vec<f64>,
    volumes: Vec<f64>,
    /// Per-axis half-open range of the lattice covered by interior + collar
    /// cells, used to locate the outer edge of the collar.
    outer_box: Vec<(f64, f64)>,
}

impl DomainMesh {
    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r_ext(&self) -> f64 {
        self.r_ext
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_exterior(&self) -> usize {
        self.volumes.len() - self.n_interior
    }

    pub fn n_total(&self) -> usize {
        self.volumes.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.volumes[i]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn interior_volumes(&self) -> &[f64] {
        &self.volumes[..self.n_interior]
    }

    /// Σ of interior cell volumes, the discrete |Ω|.
    pub fn interior_measure(&self) -> f64 {
        self.interior_volumes().iter().sum()
    }

    pub fn is_interior(&self, i: usize) -> bool {
        i < self.n_interior
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.point(i), self.point(j));
        p.iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Axis-aligned bounding box of all cells (interior and collar).
    pub fn outer_box(&self) -> &[(f64, f64)] {
        &self.outer_box
    }

    /// The same lattice rescaled by `factor`: coordinates, h and R_ext are
    /// multiplied by `factor`, volumes by `factor^N`.
    pub fn scaled(&self, factor: f64) -> Result<DomainMesh> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Parameter(format!(
                "scale factor {factor} must be positive"
            )));
        }
        let shape = match self.shape {
            DomainShape::Interval { a, b } => DomainShape::Interval {
                a: a * factor,
                b: b * factor,
            },
            DomainShape::Box { lo, hi } => DomainShape::Box {
                lo: [lo[0] * factor, lo[1] * factor],
                hi: [hi[0] * factor, hi[1] * factor],
            },
            DomainShape::Disk { center, radius } => DomainShape::Disk {
                center: [center[0] * factor, center[1] * factor],
                radius: radius * factor,
            },
        };
        let vf = factor.powi(self.dim as i32);
        Ok(DomainMesh {
            shape,
            dim: self.dim,
            h: self.h * factor,
            r_ext: self.r_ext * factor,
            n_interior: self.n_interior,
            coords: self.coords.iter().map(|c| c * factor).collect(),
            volumes: self.volumes.iter().map(|v| v * vf).collect(),
            outer_box: self
                .outer_box
                .iter()
                .map(|&(lo, hi)| (lo * factor, hi * factor))
                .collect(),
        })
    }
}

/// Cell-centered lattice along one axis of `[lo, hi]`: returns
/// (first interior center, interior cell count, collar cells per side).
fn axis_lattice(lo: f64, hi: f64, h: f64, r_ext: f64) -> Result<(f64, usize, usize)> {
    let n = ((hi - lo) / h + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::Mesh(format!(
            "h = {h} exceeds the domain extent {}",
            hi - lo
        )));
    }
    let gap = (hi - lo) - n as f64 * h;
    let first = lo + 0.5 * gap + 0.5 * h;
    let m = (r_ext / h + 1e-9).floor() as usize;
    Ok((first, n, m))
}

fn check_common(shape: &DomainShape, h: f64, r_ext: f64) -> Result<()> {
    shape.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Mesh(format!(
            "grid spacing h = {h} must be positive"
        )));
    }
    if !r_ext.is_finite() || r_ext < shape.extent() {
        return Err(Error::Mesh(format!(
            "collar too thin: R_ext = {r_ext} < domain extent {}",
            shape.extent()
        )));
    }
    Ok(())
}

/// Uniform cell-centered mesh of (a, b) with collar (a − R_ext, a] ∪ [b, b + R_ext).
pub fn build_interval_mesh(a: f64, b: f64, h: f64, r_ext: f64) -> Result<DomainMesh> {
    let shape = DomainShape::Interval { a, b };
    check_common(&shape, h, r_ext)?;
    let (first, n, m) = axis_lattice(a, b, h, r_ext)?;

    let mut coords = Vec::with_capacity(n + 2 * m);
    coords.extend((0..n).map(|i| first + i as f64 * h));
    coords.extend((0..m).rev().map(|k| first - (k + 1) as f64 * h));
    coords.extend((0..m).map(|k| first + (n + k) as f64 * h));

    let volumes = vec![h; coords.len()];
    let outer_box = vec![(
        first - (m as f64 + 0.5) * h,
        first + ((n + m) as f64 - 0.5) * h,
    )];
    Ok(DomainMesh {
        shape,
        dim: 1,
        h,
        r_ext,
        n_interior: n,
        coords,
        volumes,
        outer_box,
    })
}

/// Tensor cell-centered mesh of a box in ℝ², with cell volume h².
pub fn build_box_mesh(lo: [f64; 2], hi: [f64; 2], h: f64, r_ext: f64) -> Result<DomainMesh> {
    let shape = DomainShape::Box { lo, hi };
    check_common(&shape, h, r_ext)?;
    let (fx, nx, mx) = axis_lattice(lo[0], hi[0], h, r_ext)?;
    let (fy, ny, my) = axis_lattice(lo[1], hi[1], h, r_ext)?;
    let xs: Vec<f64> = (-(mx as i64)..(nx + mx) as i64)
        .map(|i| fx + i as f64 * h)
        .collect();
    let ys: Vec<f64> = (-(my as i64)..(ny + my) as i64)
        .map(|j| fy + j as f64 * h)
        .collect();
    let outer_box = vec![
        (xs[0] - 0.5 * h, xs[xs.len() - 1] + 0.5 * h),
        (ys[0] - 0.5 * h, ys[ys.len() - 1] + 0.5 * h),
    ];
    lattice_mesh(shape, h, r_ext, &xs, &ys, outer_box)
}

/// Cell-centered mesh of a disk, lattice aligned so the center is a cell corner
/// or center depending on the commensurability of the diameter.
pub fn build_disk_mesh(center: [f64; 2], radius: f64, h: f64, r_ext: f64) -> Result<DomainMesh> {
    let shape = DomainShape::Disk { center, radius };
    check_common(&shape, h, r_ext)?;
    let (fx, n, m) = axis_lattice(center[0] - radius, center[0] + radius, h, r_ext)?;
    let (fy, _, _) = axis_lattice(center[1] - radius, center[1] + radius, h, r_ext)?;
    let range = -(m as i64)..(n + m) as i64;
    let xs: Vec<f64> = range.clone().map(|i| fx + i as f64 * h).collect();
    let ys: Vec<f64> = range.map(|j| fy + j as f64 * h).collect();
    let outer_box = vec![
        (xs[0] - 0.5 * h, xs[xs.len() - 1] + 0.5 * h),
        (ys[0] - 0.5 * h, ys[ys.len() - 1] + 0.5 * h),
    ];
    lattice_mesh(shape, h, r_ext, &xs, &ys, outer_box)
}

fn lattice_mesh(
    shape: DomainShape,
    h: f64,
    r_ext: f64,
    xs: &[f64],
    ys: &[f64],
    outer_box: Vec<(f64, f64)>,
) -> Result<DomainMesh> {
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    for &y in ys {
        for &x in xs {
            let p = [x, y];
            if shape.inner_margin(&p) > GEOM_TOL {
                interior.extend_from_slice(&p);
            } else {
                let d = shape.distance(&p);
                if d > GEOM_TOL && d <= r_ext + GEOM_TOL {
                    exterior.extend_from_slice(&p);
                }
            }
        }
    }
    if interior.is_empty() {
        return Err(Error::Mesh("no interior nodes; refine h".into()));
    }
    let n_interior = interior.len() / 2;
    interior.extend_from_slice(&exterior);
    let volumes = vec![h * h; interior.len() / 2];
    Ok(DomainMesh {
        shape,
        dim: 2,
        h,
        r_ext,
        n_interior,
        coords: interior,
        volumes,
        outer_box,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_partition(mesh: &DomainMesh) {
        for i in 0..mesh.n_total() {
            let p = mesh.point(i);
            if mesh.is_interior(i) {
                assert!(mesh.shape().inner_margin(p) > 0.0, "node {i} not in Ω");
            } else {
                let d = mesh.shape().distance(p);
                assert!(d > 0.0, "collar node {i} touches Ω̄");
                assert!(d <= mesh.r_ext() + 1e-9);
            }
        }
    }

    #[test]
    fn interval_reference_layout() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.5, 10.0).unwrap();
        assert_eq!(mesh.n_interior(), 4);
        assert_eq!(mesh.n_exterior(), 40);
        let xs: Vec<f64> = (0..4).map(|i| mesh.point(i)[0]).collect();
        assert_eq!(xs, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(mesh.interior_measure(), 2.0);
        assert_partition(&mesh);
    }

    #[test]
    fn interval_measure_is_exact_when_commensurate() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.01, 2.0).unwrap();
        assert_eq!(mesh.n_interior(), 200);
        assert_relative_eq!(mesh.interior_measure(), 2.0, epsilon = 1e-12);
        assert_partition(&mesh);
    }

    #[test]
    fn interval_incommensurate_within_one_cell() {
        let mesh = build_interval_mesh(0.0, 1.0, 0.3, 1.0).unwrap();
        assert!((mesh.interior_measure() - 1.0).abs() <= 0.3);
        assert_partition(&mesh);
    }

    #[test]
    fn thin_collar_rejected() {
        assert!(matches!(
            build_interval_mesh(0.0, 1.0, 0.1, 0.05),
            Err(Error::Mesh(_))
        ));
        assert!(build_interval_mesh(0.0, 1.0, 0.0, 2.0).is_err());
        assert!(build_interval_mesh(0.0, 1.0, -0.1, 2.0).is_err());
    }

    #[test]
    fn unit_square() {
        let mesh = build_box_mesh([0.0, 0.0], [1.0, 1.0], 0.25, 1.0).unwrap();
        assert_eq!(mesh.n_interior(), 16);
        assert_relative_eq!(mesh.interior_measure(), 1.0, epsilon = 1e-14);
        assert_partition(&mesh);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(build_box_mesh([0.0, 1.0], [1.0, 1.0], 0.25, 2.0).is_err());
        assert!(build_box_mesh([2.0, 0.0], [1.0, 1.0], 0.25, 2.0).is_err());
    }

    #[test]
    fn refinement_multiplies_nodes() {
        let coarse = build_interval_mesh(-1.0, 1.0, 0.1, 2.0).unwrap();
        let fine = build_interval_mesh(-1.0, 1.0, 0.05, 2.0).unwrap();
        assert_eq!(fine.n_interior(), 2 * coarse.n_interior());
        let coarse = build_box_mesh([0.0, 0.0], [1.0, 1.0], 0.25, 1.0).unwrap();
        let fine = build_box_mesh([0.0, 0.0], [1.0, 1.0], 0.125, 1.0).unwrap();
        assert_eq!(fine.n_interior(), 4 * coarse.n_interior());
    }

    #[test]
    fn disk_measure_converges() {
        let mesh = build_disk_mesh([0.0, 0.0], 1.0, 0.02, 2.0).unwrap();
        let area = std::f64::consts::PI;
        assert!((mesh.interior_measure() - area).abs() / area < 0.01);
        assert_partition(&mesh);
    }

    #[test]
    fn scaled_mesh_maps_nodes() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.1, 2.0).unwrap();
        let big = mesh.scaled(2.0).unwrap();
        assert_eq!(big.n_total(), mesh.n_total());
        assert_relative_eq!(big.point(3)[0], 2.0 * mesh.point(3)[0]);
        assert_relative_eq!(big.interior_measure(), 4.0, epsilon = 1e-12);
    }
}
