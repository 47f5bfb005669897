//! Special functions: spherical and Riccati–Bessel functions, Legendre
//! polynomials, Gauss–Legendre rules and the sine/cosine integrals.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Spherical Bessel functions j_0..=j_lmax at `x >= 0`, written into `out`.
pub fn sph_j_all(lmax: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() > lmax);
    if x == 0.0 {
        out[0] = 1.0;
        for v in out.iter_mut().take(lmax + 1).skip(1) {
            *v = 0.0;
        }
        return;
    }
    if x < 0.5 {
        for (l, v) in out.iter_mut().enumerate().take(lmax + 1) {
            *v = sph_j_series(l, x);
        }
        return;
    }
    let (s, c) = x.sin_cos();
    if x >= lmax as f64 {
        out[0] = s / x;
        if lmax >= 1 {
            out[1] = s / (x * x) - c / x;
        }
        for l in 1..lmax {
            out[l + 1] = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
        }
        return;
    }
    // Miller's downward recurrence, normalized against the larger of j_0, j_1.
    let start = lmax.max(1) + 16 + x.ceil() as usize;
    let mut jp = 0.0;
    let mut j = 1e-300;
    let mut tmp = vec![0.0; lmax.max(1) + 1];
    for l in (1..=start).rev() {
        let jm = (2 * l + 1) as f64 / x * j - jp;
        jp = j;
        j = jm;
        if l - 1 < tmp.len() {
            tmp[l - 1] = j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            for t in tmp.iter_mut() {
                *t *= 1e-250;
            }
        }
    }
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() >= j1.abs() { j0 / tmp[0] } else { j1 / tmp[1] };
    for l in 0..=lmax {
        out[l] = tmp[l] * scale;
    }
}

fn sph_j_series(l: usize, x: f64) -> f64 {
    let mut pref = 1.0;
    for m in 1..=l {
        pref *= x / (2 * m + 1) as f64;
    }
    let y = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..40 {
        term *= y / (m as f64 * (2 * l + 2 * m + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    pref * sum
}

/// Spherical Bessel j_l(x).
pub fn sph_j(l: usize, x: f64) -> f64 {
    let mut out = vec![0.0; l + 1];
    sph_j_all(l, x, &mut out);
    out[l]
}

/// Spherical Neumann functions y_0..=y_lmax at `x > 0` by upward recurrence.
pub fn sph_y_all(lmax: usize, x: f64, out: &mut [f64]) {
    let (s, c) = x.sin_cos();
    out[0] = -c / x;
    if lmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for l in 1..lmax {
        out[l + 1] = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
    }
}

/// Riccati–Bessel pairs (ĵ_l, n̂_l) = (x j_l, x y_l) and their x-derivatives.
#[derive(Clone, Debug)]
pub struct Riccati {
    pub j: Vec<f64>,
    pub n: Vec<f64>,
    pub dj: Vec<f64>,
    pub dn: Vec<f64>,
}

impl Riccati {
    pub fn eval(lmax: usize, x: f64) -> Self {
        let mut j = vec![0.0; lmax + 1];
        let mut n = vec![0.0; lmax + 1];
        sph_j_all(lmax, x, &mut j);
        sph_y_all(lmax, x, &mut n);
        for l in 0..=lmax {
            j[l] *= x;
            n[l] *= x;
        }
        let (s, c) = x.sin_cos();
        let mut dj = vec![0.0; lmax + 1];
        let mut dn = vec![0.0; lmax + 1];
        dj[0] = c;
        dn[0] = s;
        for l in 1..=lmax {
            dj[l] = j[l - 1] - l as f64 * j[l] / x;
            dn[l] = n[l - 1] - l as f64 * n[l] / x;
        }
        Riccati { j, n, dj, dn }
    }
}

/// (ĵ_l(x), n̂_l(x)) for a single order without allocating when x > l.
pub fn riccati_jn(l: usize, x: f64) -> (f64, f64) {
    if x <= l as f64 + 1.0 || x < 0.5 {
        let r = Riccati::eval(l, x);
        return (r.j[l], r.n[l]);
    }
    let (s, c) = x.sin_cos();
    let (mut j0, mut n0) = (s, -c);
    if l == 0 {
        return (j0, n0);
    }
    let (mut j1, mut n1) = (s / x - c, -c / x - s);
    for m in 1..l {
        let f = (2 * m + 1) as f64 / x;
        let j2 = f * j1 - j0;
        let n2 = f * n1 - n0;
        j0 = j1;
        n0 = n1;
        j1 = j2;
        n1 = n2;
    }
    (j1, n1)
}

/// Legendre polynomials P_0..=P_lmax at `x`.
pub fn legendre_all(lmax: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if lmax >= 1 {
        out[1] = x;
    }
    for l in 1..lmax {
        out[l + 1] = ((2 * l + 1) as f64 * x * out[l] - l as f64 * out[l - 1]) / (l + 1) as f64;
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Sine and cosine integrals (Si(x), Ci(x)) for x > 0.
pub fn si_ci(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "si_ci requires x > 0");
    if x <= 2.0 {
        let x2 = x * x;
        let mut si = 0.0;
        let mut ci = 0.0;
        let mut fact = 1.0;
        let mut pw = x;
        let mut sign = 1.0;
        for k in 0..40 {
            let m = 2 * k + 1;
            if k > 0 {
                fact *= (2 * k) as f64 * m as f64;
                pw *= x2;
            }
            si += sign * pw / (m as f64 * fact);
            sign = -sign;
            if pw / fact < 1e-18 {
                break;
            }
        }
        let mut fact = 1.0;
        let mut pw = 1.0;
        let mut sign = -1.0;
        for k in 1..40 {
            fact *= ((2 * k - 1) * (2 * k)) as f64;
            pw *= x2;
            ci += sign * pw / ((2 * k) as f64 * fact);
            sign = -sign;
            if pw / fact < 1e-18 {
                break;
            }
        }
        ci += EULER_GAMMA + x.ln();
        (si, ci)
    } else {
        // Lentz continued fraction for E_1(ix).
        let tiny = 1e-300;
        let mut b = Complex64::new(1.0, x);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = b.inv();
        let mut h = d;
        for i in 2..10_000 {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += 2.0;
            d = (d * a + b).inv();
            c = b + c.inv() * a;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        let (s, co) = x.sin_cos();
        h *= Complex64::new(co, -s);
        (FRAC_PI_2 + h.im, -h.re)
    }
}

/// ∫_R^∞ e^{iκr}/r dr for κ ≠ 0 and R > 0.
pub fn exp_over_r_tail(kappa: f64, r: f64) -> Complex64 {
    let (si, ci) = si_ci(kappa.abs() * r);
    Complex64::new(-ci, kappa.signum() * (FRAC_PI_2 - si))
}

/// C^∞ step rising from 0 at x ≤ 0 to 1 at x ≥ 1.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// Quintic smoothstep 6x⁵ − 15x⁴ + 10x³ clamped to [0, 1]; C² at both ends.
pub fn quintic_step(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_low_orders_closed_form() {
        for &x in &[0.01, 0.3, 0.7, 1.5, 3.0, 7.5, 40.0] {
            let (s, c) = f64::sin_cos(x);
            let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
            let got = sph_j(2, x);
            assert!((got - j2).abs() < 1e-12 * (1.0 + j2.abs()) || x < 0.05, "{x} {got} {j2}");
        }
    }

    #[test]
    fn bessel_branches_agree() {
        // Miller's recurrence (x < lmax) against upward recurrence for low orders.
        let mut a = vec![0.0; 9];
        let mut b = vec![0.0; 9];
        for &x in &[2.5, 5.0, 7.9] {
            sph_j_all(8, x, &mut a);
            sph_j_all(2, x, &mut b);
            for l in 0..=2 {
                assert!((a[l] - b[l]).abs() < 1e-13, "l={l} x={x} {} {}", a[l], b[l]);
            }
        }
        sph_j_all(8, 0.6, &mut a);
        for l in 0..=8 {
            let sr = sph_j_series(l, 0.6);
            assert!((a[l] - sr).abs() < 1e-12 * sr.abs(), "l={l} {} {sr}", a[l]);
        }
    }

    #[test]
    fn single_order_matches_table() {
        for &x in &[0.3, 2.0, 3.5, 9.0, 120.0] {
            let r = Riccati::eval(5, x);
            for l in 0..=5 {
                let (j, n) = riccati_jn(l, x);
                assert!((j - r.j[l]).abs() < 1e-12 * (1.0 + r.j[l].abs()));
                assert!((n - r.n[l]).abs() < 1e-12 * (1.0 + r.n[l].abs()));
            }
        }
    }

    #[test]
    fn riccati_wronskian() {
        for &x in &[0.2, 1.0, 4.0, 30.0] {
            let r = Riccati::eval(4, x);
            for l in 0..=4 {
                let w = r.j[l] * r.dn[l] - r.dj[l] * r.n[l];
                assert!((w - 1.0).abs() < 1e-10, "l={l} x={x} w={w}");
            }
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn sine_integral_known_values() {
        let (si, ci) = si_ci(1.0);
        assert!((si - 0.946_083_070_367_183).abs() < 1e-14);
        assert!((ci - 0.337_403_922_900_968).abs() < 1e-14);
        let (si, ci) = si_ci(10.0);
        assert!((si - 1.658_347_594_218_874).abs() < 1e-13);
        assert!((ci + 0.045_456_433_004_455).abs() < 1e-13);
        let (a, b) = si_ci(2.0);
        let (c, d) = si_ci(2.000_000_1);
        assert!((a - c).abs() < 1e-7 && (b - d).abs() < 1e-7);
    }
}
