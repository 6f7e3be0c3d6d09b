//! Reference quadratures written independently of the library.
#![allow(dead_code, clippy::excessive_precision)]

use std::f64::consts::PI;

/// 15-point Gauss-Kronrod nodes on [0,1] (symmetric half) and weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let pair = f(c - r * XGK[j]) + f(c + r * XGK[j]);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * r, ((kron - gauss) * r).abs())
}

/// Adaptive Gauss-Kronrod on [a,b] to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth > 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// `C_{1,s}` from Γ computed by the Lanczos series (g = 7).
pub fn c_1s(s: f64) -> f64 {
    4f64.powf(s) * s * gamma(0.5 + s) / (PI.sqrt() * gamma(1.0 - s))
}

pub fn gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `(−Δ)ˢ e^{−x²}` at 0 in one dimension:
/// `2 C_{1,s} ∫₀^∞ (1 − e^{−y²}) y^{−1−2s} dy`.
pub fn gaussian_frac_laplacian_at_zero(s: f64) -> f64 {
    // y = t² on [0,1] removes the endpoint singularity.
    let near = integrate(
        |t: f64| {
            if t == 0.0 {
                0.0
            } else {
                2.0 * (-(-t.powi(4)).exp_m1()) * t.powf(-1.0 - 4.0 * s)
            }
        },
        0.0,
        1.0,
        1e-14,
    );
    let tail = 1.0 / (2.0 * s)
        - integrate(
            |y: f64| (-y * y).exp() * y.powf(-1.0 - 2.0 * s),
            1.0,
            12.0,
            1e-14,
        );
    2.0 * c_1s(s) * (near + tail)
}

/// `∫_{B_1} (1 − |x|)^q dx` by radial quadrature.
pub fn tent_power_integral(n: usize, q: f64) -> f64 {
    let sphere = match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unimplemented!(),
    };
    sphere
        * integrate(
            |r: f64| (1.0 - r).powf(q) * r.powi(n as i32 - 1),
            0.0,
            1.0,
            1e-15,
        )
}
