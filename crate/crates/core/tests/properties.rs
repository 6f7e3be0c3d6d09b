use std::sync::{Arc, OnceLock};

use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracneumann::mesh::{build_box_mesh, build_disk_mesh, build_interval_mesh};
use fracneumann::moser::norm_ladder;
use fracneumann::problem::NonlinearitySpec;
use fracneumann::sobolev::lq_norm;
use fracneumann::{assemble, DomainMesh, FormOperator, GridFunction, ProblemSpec};

fn op_1d() -> &'static FormOperator {
    static OP: OnceLock<FormOperator> = OnceLock::new();
    OP.get_or_init(|| {
        assemble(
            build_interval_mesh(-1.0, 1.0, 0.02, 2.0).unwrap(),
            0.25,
            0.3,
        )
        .unwrap()
    })
}

fn op_2d() -> &'static FormOperator {
    static OP: OnceLock<FormOperator> = OnceLock::new();
    OP.get_or_init(|| {
        assemble(
            build_box_mesh([-1.0, -1.0], [1.0, 1.0], 0.2, 2.0).unwrap(),
            0.25,
            0.5,
        )
        .unwrap()
    })
}

fn random_fn(mesh: &DomainMesh, seed: u64, lo: f64, hi: f64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::from_fn(mesh, |_| rng.gen_range(lo..hi))
}

fn check_mesh(mesh: &DomainMesh) {
    let n = mesh.n_total();
    for i in 0..n {
        let inside = mesh.shape().distance(mesh.point(i)) == 0.0;
        assert_eq!(
            inside,
            mesh.is_interior(i),
            "node {i} at {:?}",
            mesh.point(i)
        );
        if !mesh.is_interior(i) {
            assert!(mesh.shape().distance(mesh.point(i)) <= mesh.r_ext());
        }
    }
    let mut pts: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            mesh.point(i)
                .iter()
                .map(|x| (x / mesh.h() * 2.0).round() as i64)
                .collect()
        })
        .collect();
    pts.sort();
    pts.dedup();
    assert_eq!(pts.len(), n, "duplicate nodes");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn meshes_are_disjoint_and_contained(h in 0.05f64..0.3, r in 2.0f64..3.0) {
        check_mesh(&build_interval_mesh(-1.0, 1.0, h, r).unwrap());
        check_mesh(&build_box_mesh([-1.0, -0.5], [1.0, 0.5], h.max(0.1), r).unwrap());
        check_mesh(&build_disk_mesh([0.0, 0.0], 1.0, h.max(0.1), r).unwrap());
    }

    #[test]
    fn refinement_doubles_nodes(k in 2usize..20) {
        let h = 1.0 / k as f64;
        let a = build_interval_mesh(-1.0, 1.0, h, 2.0).unwrap();
        let b = build_interval_mesh(-1.0, 1.0, h / 2.0, 2.0).unwrap();
        prop_assert_eq!(b.n_interior(), 2 * a.n_interior());
        let a = build_box_mesh([0.0, 0.0], [1.0, 1.0], h, 1.0).unwrap();
        let b = build_box_mesh([0.0, 0.0], [1.0, 1.0], h / 2.0, 1.0).unwrap();
        prop_assert_eq!(b.n_interior(), 4 * a.n_interior());
    }

    #[test]
    fn gauss_and_green(seed in any::<u64>(), two_d in any::<bool>()) {
        let op = if two_d { op_2d() } else { op_1d() };
        let u = random_fn(op.mesh(), seed, -2.0, 2.0);
        let v = random_fn(op.mesh(), seed ^ 0x9e37, -2.0, 2.0);
        prop_assert!(op.check_divergence(&u).unwrap().relative() <= 1e-12);
        prop_assert!(op.check_integration_by_parts(&u, &v).unwrap().relative() <= 1e-12);
    }

    #[test]
    fn constants_are_exact_zeros(c in -1e3f64..1e3, two_d in any::<bool>()) {
        let op = if two_d { op_2d() } else { op_1d() };
        let u = GridFunction::constant(op.mesh(), c);
        prop_assert!(op.frac_laplacian(&u).unwrap().iter().all(|&x| x == 0.0));
        prop_assert!(op.neumann_derivative(&u).unwrap().iter().all(|&x| x == 0.0));
        prop_assert_eq!(op.seminorm(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn extension_obeys_maximum_principle(seed in any::<u64>()) {
        let op = op_1d();
        let u = random_fn(op.mesh(), seed, -3.0, 5.0);
        let ext = op.exterior_extension(u.interior()).unwrap();
        let (lo, hi) = (u.interior_min(), u.interior_max());
        let slack = 1e-12 * (hi - lo);
        prop_assert!(ext.exterior().iter().all(|&x| x >= lo - slack && x <= hi + slack));
        prop_assert_eq!(ext.interior(), u.interior());
    }

    #[test]
    fn form_symmetric_and_nonnegative(seed in any::<u64>()) {
        let op = op_1d();
        let u = random_fn(op.mesh(), seed, -1.0, 1.0);
        let v = random_fn(op.mesh(), !seed, -1.0, 1.0);
        let (a, b) = (op.seminorm(&u, &v).unwrap(), op.seminorm(&v, &u).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(op.seminorm(&u, &u).unwrap() >= 0.0);
        prop_assert!(op.bilinear_form(&u, &u).unwrap() >= op.seminorm(&u, &u).unwrap() * op.eps_factor());
    }

    #[test]
    fn energy_decomposition_and_euler(seed in any::<u64>(), p in 2.2f64..3.9) {
        let spec = ProblemSpec::new(op_1d().clone(), NonlinearitySpec::power(p).unwrap()).unwrap();
        let u = random_fn(spec.mesh(), seed, 0.0, 2.0);
        let vol = spec.mesh().interior_volumes();
        let big_f: f64 = vol.iter().zip(u.interior()).map(|(w, &x)| w * spec.big_f(x)).sum();
        let norm = spec.op().bilinear_form(&u, &u).unwrap();
        let e = spec.energy(&u).unwrap();
        prop_assert!((e - (0.5 * norm - big_f)).abs() <= 1e-12 * (norm + big_f));
        let euler = spec.derivative(&u, &u).unwrap();
        prop_assert!((euler - (norm - p * big_f)).abs() <= 1e-12 * (norm + p * big_f));
    }

    #[test]
    fn normalized_norms_nondecreasing(seed in any::<u64>()) {
        let mesh = op_1d().mesh();
        let u = random_fn(mesh, seed, -1.0, 3.0);
        let vol = mesh.interior_volumes();
        let total: f64 = vol.iter().sum();
        let mut prev = 0.0;
        for q in [1.0, 2.0, 3.0, 4.5, 8.0, 16.0, 64.0, 512.0] {
            let n = lq_norm(vol, u.interior(), q) / total.powf(1.0 / q);
            prop_assert!(n >= prev * (1.0 - 1e-12));
            prev = n;
        }
    }

    #[test]
    fn sup_estimate_bounds_max(seed in any::<u64>(), spike in 0.0f64..50.0) {
        let spec = ProblemSpec::new(op_1d().clone(), NonlinearitySpec::power(3.0).unwrap()).unwrap();
        let mut u = random_fn(spec.mesh(), seed, 0.0, 1.0).into_values();
        u[(seed % 50) as usize] += spike;
        let u = GridFunction::new(spec.mesh(), u).unwrap();
        let ladder = norm_ladder(&spec, &u, 12).unwrap();
        prop_assert!(ladder.certified(), "{} < {}", ladder.sup_estimate, ladder.actual_max);
    }
}

#[test]
fn seminorm_kernel_is_constants() {
    for op in [op_1d(), op_2d()] {
        let a = op.reduced_stiffness();
        let n = a.dim();
        let m = a.scaled_plus_diag(1.0, &vec![0.0; n]);
        let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let top = eig[n - 1];
        assert!(eig[0].abs() <= 1e-10 * top, "{}", eig[0]);
        assert!(eig[1] > 1e-6 * top, "{}", eig[1]);
    }
}

fn gradient_check(op: &FormOperator, pairs: usize) {
    let spec = ProblemSpec::new(op.clone(), NonlinearitySpec::power(2.5).unwrap()).unwrap();
    let vol = spec.mesh().volumes().to_vec();
    let mut worst = 0.0_f64;
    for k in 0..pairs as u64 {
        let u = random_fn(spec.mesh(), 2 * k, 0.0, 1.5);
        let v = random_fn(spec.mesh(), 2 * k + 1, -1.0, 1.0);
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
        let via_form = spec.derivative(&u, &v).unwrap();
        assert!((an - via_form).abs() <= 1e-10 * an.abs().max(1e-3));
        worst = worst.max((fd - an).abs() / an.abs());
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn gradient_matches_central_differences_1d() {
    gradient_check(op_1d(), 50);
}

#[test]
fn gradient_matches_central_differences_2d() {
    gradient_check(op_2d(), 50);
}

#[test]
fn sequential_and_parallel_agree() {
    use fracneumann::Exec;
    let mesh = Arc::new(build_interval_mesh(-1.0, 1.0, 0.05, 2.0).unwrap());
    let par = fracneumann::assemble_with(
        Arc::clone(&mesh),
        0.25,
        0.2,
        fracneumann::AssemblyOptions {
            exec: Exec::Parallel,
            ..Default::default()
        },
    )
    .unwrap();
    let seq = par.with_exec(Exec::Sequential);
    let u = random_fn(&mesh, 7, -1.0, 1.0);
    assert_eq!(
        par.frac_laplacian(&u).unwrap(),
        seq.frac_laplacian(&u).unwrap()
    );
    assert_eq!(par.reduced_stiffness(), seq.reduced_stiffness());
}
