mod common;

use fracneumann::mesh::build_interval_mesh;
use fracneumann::nonlocal::normalization_constant;
use fracneumann::{assemble, GridFunction};

fn gaussian_at_zero(h: f64) -> f64 {
    let mesh = build_interval_mesh(-1.0, 1.0, h, 10.0).unwrap();
    let op = assemble(mesh, 0.25, 1.0).unwrap();
    // Cell centres sit at ±h/2; centre the bump on the node nearest 0.
    let centre = (0..op.mesh().n_interior())
        .min_by(|&i, &j| {
            op.mesh().point(i)[0]
                .abs()
                .total_cmp(&op.mesh().point(j)[0].abs())
        })
        .unwrap();
    let c = op.mesh().point(centre)[0];
    let u = GridFunction::from_fn(op.mesh(), |x| (-(x[0] - c) * (x[0] - c)).exp());
    op.frac_laplacian_far_field(&u, 0.0).unwrap()[centre]
}

#[test]
fn oracle_agrees_with_closed_form() {
    let s = 0.25;
    let closed = 4f64.powf(s) * common::gamma(0.5 + s) / std::f64::consts::PI.sqrt();
    let oracle = common::gaussian_frac_laplacian_at_zero(s);
    assert!(
        (oracle - closed).abs() < 1e-10 * closed,
        "{oracle} vs {closed}"
    );
    assert!((common::c_1s(s) - normalization_constant(1, s)).abs() < 1e-12);
}

#[test]
fn gaussian_frac_laplacian_converges() {
    let exact = common::gaussian_frac_laplacian_at_zero(0.25);
    let coarse = (gaussian_at_zero(0.01) - exact).abs() / exact;
    let fine = (gaussian_at_zero(0.005) - exact).abs() / exact;
    println!("relative error h=0.01: {coarse:.4e}, h=0.005: {fine:.4e}");
    assert!(coarse < 0.02);
    assert!(fine < coarse);
}
