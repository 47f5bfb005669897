//! The quadratic NLS i∂ₜu − Δu + Vu = ū², written as ∂ₜu = iHu − iū².
//!
//! The state is the profile f♯ = e^{−itk²}u♯, so the linear half-steps of
//! Strang splitting are exact phase multiplications and only the nonlinear
//! increment crosses the transform.

use crate::error::{Error, Result};
use crate::grids::{lp_norm, multiply_radial_fn, tail_mass_fraction, AxisymmetricField, Grids, SpectralField};
use crate::pseudoproduct::MKernel;
use crate::scattering::ScatteringTable;
use crate::transform::{flat_inverse, forward, inverse, sobolev_norm};
use crate::waveop::Tables;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

/// Default NLS grid: a box wide enough to hold the dispersing datum up to T = 20.
pub const NLS_GRID: (f64, usize, f64, usize, usize) = (240.0, 2400, 8.0, 640, 0);

pub fn nls_grids() -> Result<Arc<Grids>> {
    let (r, nr, k, nk, l) = NLS_GRID;
    Grids::new(r, nr, k, nk, l)
}

/// u₀ = a·e^{−r²/2}.
pub fn default_datum(grids: &Arc<Grids>, amplitude: f64) -> AxisymmetricField {
    AxisymmetricField::radial(grids, |r| amplitude * (-0.5 * r * r).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    pub stride: f64,
    pub nonlinear: bool,
    /// Boundary mass is measured beyond this fraction of r_max.
    pub boundary_fraction: f64,
    pub boundary_tolerance: f64,
    /// Abort once X(t) exceeds this multiple of X(0).
    pub x_norm_limit: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt: 0.005,
            t_final: 20.0,
            stride: 0.1,
            nonlinear: true,
            boundary_fraction: 0.9,
            boundary_tolerance: 1e-6,
            x_norm_limit: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XNormReport {
    /// ‖f‖_{H¹♯}
    pub h1: f64,
    /// ‖|x|Ω*f‖₂
    pub weight: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDiagnostics {
    pub t: f64,
    pub l2: f64,
    pub l4: f64,
    pub l6: f64,
    pub x: XNormReport,
    pub boundary_mass: f64,
    /// ‖f(t) − u₀♯ + iB(t)‖₂/‖u₀‖₂ with B from the step-midpoint rule.
    pub duhamel_residual: f64,
    /// ‖B_trap − B_mid‖₂/(3‖u₀‖₂), the midpoint rule's error estimate.
    pub quadrature_estimate: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<AxisymmetricField>,
    pub profiles: Vec<SpectralField>,
    /// B(t) = ∫₀ᵗ e^{−isk²} (ū(s)²)♯ ds at each snapshot.
    pub duhamel: Vec<SpectralField>,
    pub diagnostics: Vec<SnapshotDiagnostics>,
    pub dt: f64,
    pub nonlinear: bool,
    pub valid: bool,
    pub invalid_reason: Option<String>,
}

impl Trajectory {
    pub fn grids(&self) -> &Arc<Grids> {
        &self.snapshots[0].grids
    }

    pub fn initial_norm(&self) -> f64 {
        self.snapshots[0].norm2()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,L2,L4,L6,X_H1,X_weight,boundary_mass,duhamel_residual")?;
        for d in &self.diagnostics {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
                d.t,
                d.l2,
                d.l4,
                d.l6,
                d.x.h1,
                d.x.weight,
                d.boundary_mass,
                d.duhamel_residual
            )?;
        }
        Ok(())
    }
}

fn phases(grids: &Grids, t: f64) -> Vec<Complex64> {
    grids.momentum.nodes.iter().map(|&k| Complex64::from_polar(1.0, t * k * k)).collect()
}

#[inline]
fn quad(z: Complex64) -> Complex64 {
    let c = z.conj();
    Complex64::new(0.0, -1.0) * c * c
}

/// One RK4 step of z′ = −i z̄² at every collocation point.
fn rk4_collocation(vals: &mut [Complex64], dt: f64, t: f64) -> Result<()> {
    for z in vals.iter_mut() {
        let k1 = quad(*z);
        let k2 = quad(*z + 0.5 * dt * k1);
        let k3 = quad(*z + 0.5 * dt * k2);
        let k4 = quad(*z + dt * k3);
        *z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > 1e100 {
            return Err(Error::Blowup { t, msg: "non-finite value in the nonlinear substep".into() });
        }
    }
    Ok(())
}

/// Pointwise ū² as a field with L_max channels.
fn conj_square(u: &AxisymmetricField) -> AxisymmetricField {
    let vals: Vec<Complex64> = u.to_collocation().iter().map(|z| z.conj() * z.conj()).collect();
    AxisymmetricField::from_collocation(&u.grids, u.grids.l_max(), &vals)
}

struct StepOut {
    /// forward of the nonlinear increment, already pulled back by e^{−isk²}
    increment: SpectralField,
    /// (ū²)♯ at the step midpoint, pulled back
    midpoint_source: SpectralField,
}

/// Nonlinear part of one Strang step for the profile `f` at time t.
fn profile_step(f: &SpectralField, t: f64, dt: f64, table: &ScatteringTable) -> Result<StepOut> {
    let grids = &f.grids;
    let s = t + 0.5 * dt;
    let ph = phases(grids, s);
    let back: Vec<Complex64> = ph.iter().map(|p| p.conj()).collect();
    let v = inverse(&f.multiply(&ph), table)?;
    let start = v.to_collocation();
    let mut end = start.clone();
    rk4_collocation(&mut end, dt, s)?;
    let l_out = grids.l_max();
    let diff: Vec<Complex64> = end.iter().zip(&start).map(|(a, b)| a - b).collect();
    let mid: Vec<Complex64> = end
        .iter()
        .zip(&start)
        .map(|(a, b)| {
            let m = 0.5 * (a + b);
            m.conj() * m.conj()
        })
        .collect();
    let inc = forward(&AxisymmetricField::from_collocation(grids, l_out, &diff), table)?;
    let src = forward(&AxisymmetricField::from_collocation(grids, l_out, &mid), table)?;
    Ok(StepOut { increment: inc.multiply(&back), midpoint_source: src.multiply(&back) })
}

/// e^{i(dt/2)H} ∘ (z′ = −iz̄² for dt) ∘ e^{i(dt/2)H}.
pub fn step_strang(u: &AxisymmetricField, dt: f64, table: &ScatteringTable, nonlinear: bool) -> Result<AxisymmetricField> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut f = forward(u, table)?;
    if nonlinear {
        let out = profile_step(&f, 0.0, dt, table)?;
        f = f.axpy(Complex64::new(1.0, 0.0), &out.increment)?;
    }
    inverse(&f.multiply(&phases(&u.grids, dt)), table)
}

/// f♯ = e^{−itk²}·forward(u).
pub fn profile(u: &AxisymmetricField, t: f64, table: &ScatteringTable) -> Result<SpectralField> {
    let back: Vec<Complex64> = phases(&u.grids, t).into_iter().map(|p| p.conj()).collect();
    Ok(forward(u, table)?.multiply(&back))
}

fn x_norm_of_profile(fs: &SpectralField, tables: &Tables) -> Result<XNormReport> {
    let f = inverse(fs, &tables.distorted)?;
    let h1 = sobolev_norm(&f, 1.0, 2.0, false, &tables.distorted)?;
    let flat = if tables.is_free() { f } else { flat_inverse(fs, &tables.flat)? };
    let weight = multiply_radial_fn(&flat, |r| r)?.norm2();
    Ok(XNormReport { h1, weight, total: h1 + weight })
}

/// X-norm pieces of the profile e^{−itH}u.
pub fn x_norm(u: &AxisymmetricField, t: f64, tables: &Tables) -> Result<XNormReport> {
    x_norm_of_profile(&profile(u, t, &tables.distorted)?, tables)
}

fn snapshot_count(opts: &EvolveOptions) -> Result<(usize, usize)> {
    if !(opts.dt > 0.0) || !(opts.stride > 0.0) || !(opts.t_final > 0.0) {
        return Err(Error::Config("dt, stride and T must be positive".into()));
    }
    let per = opts.stride / opts.dt;
    let n_snap = opts.t_final / opts.stride;
    if (per - per.round()).abs() > 1e-9 * per || per.round() < 1.0 {
        return Err(Error::Config(format!("stride {} is not a multiple of dt {}", opts.stride, opts.dt)));
    }
    if (n_snap - n_snap.round()).abs() > 1e-9 * n_snap || n_snap.round() < 1.0 {
        return Err(Error::Config(format!("T {} is not a multiple of the stride {}", opts.t_final, opts.stride)));
    }
    Ok((per.round() as usize, n_snap.round() as usize))
}

/// Repeated Strang steps with diagnostics at every snapshot.
pub fn evolve(u0: &AxisymmetricField, tables: &Tables, opts: &EvolveOptions) -> Result<Trajectory> {
    let (per, n_snap) = snapshot_count(opts)?;
    let table = &tables.distorted;
    let grids = u0.grids.clone();
    let u0 = u0.with_l(grids.l_max());
    let n0 = u0.norm2();
    let f0 = forward(&u0, table)?;
    let mut f = f0.clone();
    let mut b_mid = SpectralField::zeros(&grids, grids.l_max());
    let mut b_trap = b_mid.clone();
    let one = Complex64::new(1.0, 0.0);
    let src_at = |u: &AxisymmetricField, t: f64| -> Result<SpectralField> {
        let back: Vec<Complex64> = phases(&grids, t).into_iter().map(|p| p.conj()).collect();
        Ok(forward(&conj_square(u), table)?.multiply(&back))
    };
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_snap + 1),
        snapshots: Vec::with_capacity(n_snap + 1),
        profiles: Vec::with_capacity(n_snap + 1),
        duhamel: Vec::with_capacity(n_snap + 1),
        diagnostics: Vec::with_capacity(n_snap + 1),
        dt: opts.dt,
        nonlinear: opts.nonlinear,
        valid: true,
        invalid_reason: None,
    };
    let mut u = u0.clone();
    let mut src = if opts.nonlinear { src_at(&u, 0.0)? } else { SpectralField::zeros(&grids, grids.l_max()) };
    let mut x0 = 0.0;
    for m in 0..=n_snap {
        let t = m as f64 * opts.stride;
        if m > 0 && opts.nonlinear {
            for s in 0..per {
                let tn = ((m - 1) * per + s) as f64 * opts.dt;
                let out = profile_step(&f, tn, opts.dt, table)?;
                f = f.axpy(one, &out.increment)?;
                b_mid = b_mid.axpy(Complex64::new(opts.dt, 0.0), &out.midpoint_source)?;
                let t_next = tn + opts.dt;
                u = inverse(&f.multiply(&phases(&grids, t_next)), table)?;
                let next = src_at(&u, t_next)?;
                b_trap = b_trap.axpy(Complex64::new(0.5 * opts.dt, 0.0), &src.axpy(one, &next)?)?;
                src = next;
            }
        } else if m > 0 {
            u = inverse(&f.multiply(&phases(&grids, t)), table)?;
        }
        let x = x_norm_of_profile(&f, tables)?;
        let resid = f.sub(&f0)?.axpy(Complex64::new(0.0, 1.0), &b_mid)?.norm2();
        let qe = b_trap.sub(&b_mid)?.norm2() / 3.0;
        let scale = if n0 > 0.0 { 1.0 / n0 } else { 0.0 };
        let d = SnapshotDiagnostics {
            t,
            l2: lp_norm(&u, 2.0)?,
            l4: lp_norm(&u, 4.0)?,
            l6: lp_norm(&u, 6.0)?,
            x,
            boundary_mass: tail_mass_fraction(&u, opts.boundary_fraction),
            duhamel_residual: resid * scale,
            quadrature_estimate: qe * scale,
        };
        if m == 0 {
            x0 = x.total;
        }
        traj.times.push(t);
        traj.snapshots.push(u.clone());
        traj.profiles.push(f.clone());
        traj.duhamel.push(b_mid.clone());
        traj.diagnostics.push(d);
        if d.boundary_mass > opts.boundary_tolerance {
            traj.valid = false;
            traj.invalid_reason = Some(format!("boundary mass {:.3e} at t = {t}", d.boundary_mass));
            break;
        }
        if x.total > opts.x_norm_limit * x0 {
            traj.valid = false;
            traj.invalid_reason = Some(format!("X-norm grew to {:.3}×X(0) at t = {t}", x.total / x0));
            break;
        }
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DuhamelReport {
    pub residual: f64,
    pub quadrature_estimate: f64,
    pub inconclusive: bool,
}

/// max_t ‖f(t) − u₀♯ + iB(t)‖₂/‖u₀‖₂; inconclusive when the quadrature
/// self-estimate exceeds `tolerance`.
pub fn duhamel_residual_physical(traj: &Trajectory, tolerance: f64) -> DuhamelReport {
    let residual = traj.diagnostics.iter().fold(0.0f64, |a, d| a.max(d.duhamel_residual));
    let quadrature_estimate = traj.diagnostics.iter().fold(0.0f64, |a, d| a.max(d.quadrature_estimate));
    DuhamelReport { residual, quadrature_estimate, inconclusive: quadrature_estimate > tolerance }
}

/// φ(ξ, η, ζ) = |ξ|² + |η|² + |ζ|².
pub fn phase_symbol(k1: f64, k2: f64, k3: f64) -> f64 {
    k1 * k1 + k2 * k2 + k3 * k3
}

/// Node triple minimising φ on the momentum grid and the minimum value.
pub fn phase_minimum(grids: &Grids) -> ([usize; 3], f64) {
    let k = &grids.momentum.nodes;
    let mut best = ([0; 3], f64::INFINITY);
    for i in 0..k.len() {
        for j in 0..k.len() {
            for m in 0..k.len() {
                let p = phase_symbol(k[i], k[j], k[m]);
                if p < best.1 {
                    best = ([i, j, m], p);
                }
            }
        }
    }
    best
}

/// ∫₀¹ e^{zθ}(1 − θ) dθ and ∫₀¹ e^{zθ} θ dθ.
fn filon_weights(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 1e-3 {
        let w0 = 0.5 + z / 6.0 + z * z / 24.0;
        let w1 = 0.5 + z / 3.0 + z * z / 8.0;
        return (w0, w1);
    }
    let e = z.exp();
    let i0 = (e - 1.0) / z;
    let i1 = (e * (z - 1.0) + 1.0) / (z * z);
    (i0 - i1, i1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralDuhamelReport {
    /// max over snapshot times of ‖B_spec − B_phys‖/‖B_phys‖ on the coarse nodes
    pub max_relative: f64,
    pub per_time: Vec<(f64, f64)>,
}

/// Largest coarse momentum grid the spectral Duhamel route accepts.
pub const SPECTRAL_DUHAMEL_MAX_NK: usize = 96;

/// Default comparison window for the coarse spectral route: beyond it the
/// phase e^{−isφ} turns by more than 2tk_maxΔk ≈ 4 rad between coarse nodes.
pub const SPECTRAL_DUHAMEL_T_MAX: f64 = 4.0;

/// B(f, f)♯(t, k) = ∫₀ᵗ Σ e^{−isφ} conj(M) f̄♯(s,k₂) f̄♯(s,k₃) k₂²k₃² dk₂dk₃ ds / (4π)
/// on the kernel's coarse grid, against the trajectory's physical B.
///
/// The product f̄♯f̄♯ is interpolated linearly between snapshots and the
/// oscillatory factor integrated exactly on each interval. Snapshots after
/// `t_max` are not compared.
pub fn duhamel_residual_spectral(traj: &Trajectory, kernel: &MKernel, t_max: f64) -> Result<SpectralDuhamelReport> {
    let fine = traj.grids();
    let coarse = &kernel.grids;
    let nc = kernel.n_k;
    if nc > SPECTRAL_DUHAMEL_MAX_NK {
        return Err(Error::Memory(format!(
            "spectral Duhamel on n_k = {nc} is too costly; use a coarse grid with n_k ≤ {SPECTRAL_DUHAMEL_MAX_NK}"
        )));
    }
    let ratio = coarse.momentum.dk / fine.momentum.dk;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(Error::Config("coarse Δk must be an integer multiple of the trajectory's Δk".into()));
    }
    let step = ratio.round() as usize;
    if nc * step > fine.momentum.n_k {
        return Err(Error::Config("coarse grid extends past the trajectory's k_max".into()));
    }
    let pick = |s: &SpectralField| -> Vec<Complex64> { (0..nc).map(|j| s.channel(0)[(j + 1) * step - 1]).collect() };
    let mg = &coarse.momentum;
    let w: Vec<f64> = mg.nodes.iter().zip(&mg.weights).map(|(k, v)| k * k * v).collect();
    let kc = &mg.nodes;
    let prod = |fs: &SpectralField| -> Vec<Complex64> {
        let c = pick(fs);
        let mut p = vec![Complex64::new(0.0, 0.0); nc * nc];
        for a in 0..nc {
            for b in 0..nc {
                p[a * nc + b] = c[a].conj() * c[b].conj() * (w[a] * w[b]);
            }
        }
        p
    };
    let inv4pi = 1.0 / (4.0 * PI);
    let mut b = vec![Complex64::new(0.0, 0.0); nc];
    let mut per_time = Vec::new();
    let mut max_relative: f64 = 0.0;
    let mut p_prev = prod(&traj.profiles[0]);
    for m in 1..traj.times.len() {
        let (ta, tb) = (traj.times[m - 1], traj.times[m]);
        if tb > t_max + 1e-12 {
            break;
        }
        let h = tb - ta;
        let p_next = prod(&traj.profiles[m]);
        for (i, bi) in b.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..nc {
                for c in 0..nc {
                    let phi = phase_symbol(kc[i], kc[a], kc[c]);
                    let (w0, w1) = filon_weights(Complex64::new(0.0, -h * phi));
                    let lead = Complex64::from_polar(h, -ta * phi);
                    let idx = a * nc + c;
                    acc += kernel.get(i, a, c).conj() * lead * (w0 * p_prev[idx] + w1 * p_next[idx]);
                }
            }
            *bi += acc * inv4pi;
        }
        p_prev = p_next;
        let phys = pick(&traj.duhamel[m]);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..nc {
            num += (b[j] - phys[j]).norm_sqr() * w[j];
            den += phys[j].norm_sqr() * w[j];
        }
        let rel = if den > 0.0 { (num / den).sqrt() } else if num > 0.0 { f64::INFINITY } else { 0.0 };
        max_relative = max_relative.max(rel);
        per_time.push((tb, rel));
    }
    Ok(SpectralDuhamelReport { max_relative, per_time })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub p: f64,
    pub slope: f64,
    pub target: f64,
    pub r_squared: f64,
    pub decades: f64,
    pub points: usize,
    /// Window spans less than one decade or fewer than 4 points.
    pub low_confidence: bool,
}

/// Least-squares slope of ln‖u(t)‖_p against ln t over `window`.
pub fn decay_fit(traj: &Trajectory, p: f64, window: (f64, f64)) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, u) in traj.times.iter().zip(&traj.snapshots) {
        if *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12 && *t > 0.0 {
            let n = lp_norm(u, p)?;
            if n <= 0.0 {
                return Err(Error::Degenerate("zero L^p norm inside the fit window".into()));
            }
            xs.push(t.ln());
            ys.push(n.ln());
        }
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Range("decay fit window holds fewer than two snapshots".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let decades = (xs[n - 1] - xs[0]) / std::f64::consts::LN_10;
    Ok(DecayFit {
        p,
        slope,
        target: -1.5 * (1.0 - 2.0 / p),
        r_squared,
        decades,
        points: n,
        low_confidence: decades < 1.0 - 1e-9 || n < 4,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatteringReport {
    /// sup over t₁ < t₂ in the tail of ‖f(t₂) − f(t₁)‖₂
    pub sup_defect: f64,
    /// (t, 2t, ‖f(2t) − f(t)‖₂), ascending in t
    pub increments: Vec<(f64, f64, f64)>,
    pub monotone: bool,
    pub final_increment: f64,
    /// ‖Ω*f(T) − Ω*f(T/2)‖₂, the same drift seen through the flat profile
    pub flat_defect: f64,
    /// ‖f(T) − u₀♯‖₂
    pub total_drift: f64,
}

pub fn scattering_defect(traj: &Trajectory, tables: &Tables, tail_start: f64) -> Result<ScatteringReport> {
    let n = traj.times.len();
    if n < 2 {
        return Err(Error::Range("trajectory needs at least two snapshots".into()));
    }
    let tail: Vec<usize> = (0..n).filter(|&m| traj.times[m] >= tail_start - 1e-12).collect();
    let mut sup_defect: f64 = 0.0;
    for (a, &i) in tail.iter().enumerate() {
        for &j in &tail[a + 1..] {
            sup_defect = sup_defect.max(traj.profiles[j].sub(&traj.profiles[i])?.norm2());
        }
    }
    let mut increments = Vec::new();
    let mut hi = n - 1;
    while hi / 2 > 0 && traj.times[hi / 2] >= tail_start - 1e-12 {
        let lo = hi / 2;
        increments.push((traj.times[lo], traj.times[hi], traj.profiles[hi].sub(&traj.profiles[lo])?.norm2()));
        hi = lo;
    }
    increments.reverse();
    let monotone = increments.windows(2).all(|w| w[1].2 < w[0].2);
    let final_increment = increments.last().map(|x| x.2).unwrap_or(0.0);
    let last = &traj.profiles[n - 1];
    let half = &traj.profiles[(n - 1) / 2];
    let diff = last.sub(half)?;
    let flat_defect = if tables.is_free() { diff.norm2() } else { flat_inverse(&diff, &tables.flat)?.norm2() };
    let total_drift = last.sub(&traj.profiles[0])?.norm2();
    Ok(ScatteringReport { sup_defect, increments, monotone, final_increment, flat_defect, total_drift })
}

#[cfg(test)]
mod tests;
