//! The distorted Fourier transform, radial multipliers m(D♯), the
//! Littlewood–Paley ladder and the derived norms and maximal operators.

use crate::error::{Error, Result};
use crate::grids::{lp_norm_collocation, AxisymmetricField, Grids, SpectralField};
use crate::scattering::ScatteringTable;
use crate::special::quintic_step;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

fn check(table: &ScatteringTable, grids: &Arc<Grids>, l: usize) -> Result<()> {
    if !Grids::same(&table.grids, grids) {
        return Err(Error::Shape("field and scattering table use different grids".into()));
    }
    if l > table.l {
        return Err(Error::Shape(format!("field has L = {l} but the table stops at L = {}", table.l)));
    }
    Ok(())
}

#[inline]
fn phase(l: usize, delta: f64, sign: f64) -> Complex64 {
    // (∓i)^l e^{∓iδ}
    let a = sign * (FRAC_PI_2_L * l as f64 + delta);
    Complex64::new(a.cos(), a.sin())
}

const FRAC_PI_2_L: f64 = std::f64::consts::FRAC_PI_2;

/// f♯_l(k) = (−i)ˡ e^{−iδ_l} √(2/π) ∫ (u_l/(kr)) f_l r² dr.
pub fn forward(f: &AxisymmetricField, table: &ScatteringTable) -> Result<SpectralField> {
    check(table, &f.grids, f.l)?;
    let grids = &f.grids;
    let rg = &grids.radial;
    let n_r = rg.n_r;
    let c = (2.0 / PI).sqrt();
    let mut out = SpectralField::zeros(grids, f.l);
    let mut re = vec![0.0; n_r];
    let mut im = vec![0.0; n_r];
    for l in 0..=f.l {
        for (i, v) in f.channel(l).iter().enumerate() {
            let w = rg.nodes[i] * rg.nodes[i] * rg.weights[i];
            re[i] = v.re * w;
            im[i] = v.im * w;
        }
        let ch = out.channel_mut(l);
        for (j, o) in ch.iter_mut().enumerate() {
            let row = table.row(l, j);
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n_r {
                a += row[i] * re[i];
                b += row[i] * im[i];
            }
            *o = phase(l, table.delta(l, j), -1.0) * Complex64::new(a * c, b * c);
        }
    }
    Ok(out)
}

/// f_l(r) = √(2/π) Σ_j (u_l/(kr)) iˡ e^{iδ_l} F_l(k_j) k_j² v_j.
pub fn inverse(fs: &SpectralField, table: &ScatteringTable) -> Result<AxisymmetricField> {
    check(table, &fs.grids, fs.l)?;
    let grids = &fs.grids;
    let mg = &grids.momentum;
    let n_r = grids.radial.n_r;
    let c = (2.0 / PI).sqrt();
    let mut out = AxisymmetricField::zeros(grids, fs.l);
    let mut re = vec![0.0; n_r];
    let mut im = vec![0.0; n_r];
    for l in 0..=fs.l {
        re.iter_mut().for_each(|x| *x = 0.0);
        im.iter_mut().for_each(|x| *x = 0.0);
        for (j, v) in fs.channel(l).iter().enumerate() {
            let w = c * mg.nodes[j] * mg.nodes[j] * mg.weights[j];
            let z = phase(l, table.delta(l, j), 1.0) * v * w;
            if z.re == 0.0 && z.im == 0.0 {
                continue;
            }
            let row = table.row(l, j);
            for i in 0..n_r {
                re[i] += row[i] * z.re;
                im[i] += row[i] * z.im;
            }
        }
        for (o, (a, b)) in out.channel_mut(l).iter_mut().zip(re.iter().zip(&im)) {
            *o = Complex64::new(*a, *b);
        }
    }
    Ok(out)
}

fn require_free(flat: &ScatteringTable) -> Result<()> {
    if flat.free {
        Ok(())
    } else {
        Err(Error::Config("flat transform needs the V = 0 table".into()))
    }
}

/// Euclidean Fourier transform (the V = 0 table).
pub fn flat_forward(f: &AxisymmetricField, flat: &ScatteringTable) -> Result<SpectralField> {
    require_free(flat)?;
    forward(f, flat)
}

pub fn flat_inverse(fs: &SpectralField, flat: &ScatteringTable) -> Result<AxisymmetricField> {
    require_free(flat)?;
    inverse(fs, flat)
}

/// Radial multiplier sampled on the momentum grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSpec {
    pub values: Vec<Complex64>,
}

impl MultiplierSpec {
    pub fn from_fn(grids: &Grids, m: impl Fn(f64) -> Complex64) -> Self {
        MultiplierSpec { values: grids.momentum.nodes.iter().map(|&k| m(k)).collect() }
    }

    pub fn real(grids: &Grids, m: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grids, |k| Complex64::new(m(k), 0.0))
    }

    /// e^{2πi n k/(K N)}·base(k).
    pub fn modulated(grids: &Grids, n: f64, scale: f64, k_mod: f64, base: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grids, |k| Complex64::from_polar(base(k), 2.0 * PI * n * k / (k_mod * scale)))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// m(D♯) f = F♯⁻¹ m F♯ f.
pub fn apply_multiplier(f: &AxisymmetricField, m: &MultiplierSpec, table: &ScatteringTable) -> Result<AxisymmetricField> {
    if !m.is_finite() {
        return Err(Error::Numeric("multiplier has non-finite samples".into()));
    }
    if m.values.len() != f.grids.momentum.n_k {
        return Err(Error::Shape("multiplier length differs from n_k".into()));
    }
    let fs = forward(f, table)?;
    inverse(&fs.multiply(&m.values), table)
}

/// Ψ: 1 on [0, 1], 0 on [2, ∞), quintic (C²) blend in between.
pub fn psi(k: f64) -> f64 {
    1.0 - quintic_step(k - 1.0)
}

/// Φ(k) = Ψ(k) − Ψ(2k), supported in [1/2, 2].
pub fn phi(k: f64) -> f64 {
    psi(k) - psi(2.0 * k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpMode {
    /// P_N with symbol Φ(k/N).
    Band,
    /// P_{<N} = Σ_{M<N} P_M, symbol Ψ(2k/N).
    Low,
}

/// Dyadic scales N = 2^j, |j| ≤ J.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicLadder {
    pub j: i32,
    /// Modulation period factor K in e^{2πi n k/(K N)}.
    pub k_mod: f64,
}

impl Default for DyadicLadder {
    fn default() -> Self {
        DyadicLadder { j: 5, k_mod: 4.0 }
    }
}

impl DyadicLadder {
    pub fn scales(&self) -> Vec<f64> {
        (-self.j..=self.j).map(|e| 2f64.powi(e)).collect()
    }

    pub fn contains(&self, n: f64) -> bool {
        let e = n.log2();
        (e - e.round()).abs() < 1e-12 && e.round().abs() <= self.j as f64
    }

    /// Symbol of the low piece completing the partition: P_{<2^{−J}}.
    pub fn bottom(&self) -> f64 {
        2f64.powi(-self.j)
    }

    /// Σ_N Φ(k/N) + Ψ(2k/2^{−J}) at k.
    pub fn partition_at(&self, k: f64) -> f64 {
        self.scales().iter().map(|n| phi(k / n)).sum::<f64>() + psi(2.0 * k / self.bottom())
    }
}

pub fn lp_symbol(n: f64, mode: LpMode) -> impl Fn(f64) -> f64 {
    move |k| match mode {
        LpMode::Band => phi(k / n),
        LpMode::Low => psi(2.0 * k / n),
    }
}

pub fn littlewood_paley(f: &AxisymmetricField, n: f64, table: &ScatteringTable, mode: LpMode, ladder: &DyadicLadder) -> Result<AxisymmetricField> {
    if !ladder.contains(n) {
        return Err(Error::Range(format!("N = {n} is not a ladder scale 2^j with |j| ≤ {}", ladder.j)));
    }
    apply_multiplier(f, &MultiplierSpec::real(&f.grids, lp_symbol(n, mode)), table)
}

/// ‖|D♯|^s f‖_p or ‖⟨D♯⟩^s f‖_p.
pub fn sobolev_norm(f: &AxisymmetricField, s: f64, p: f64, homogeneous: bool, table: &ScatteringTable) -> Result<f64> {
    if !(p > 1.0 && p < f64::INFINITY) {
        return Err(Error::Domain(format!("sobolev_norm needs p in (1, ∞), got {p}")));
    }
    if s.abs() > 2.0 {
        return Err(Error::Domain(format!("|s| ≤ 2 required, got {s}")));
    }
    if s == 0.0 {
        return crate::grids::lp_norm(f, p);
    }
    let m = if homogeneous {
        MultiplierSpec::real(&f.grids, |k| k.powf(s))
    } else {
        MultiplierSpec::real(&f.grids, |k| (1.0 + k * k).powf(0.5 * s))
    };
    crate::grids::lp_norm(&apply_multiplier(f, &m, table)?, p)
}

/// φ(k) = 1 on k ≤ 1, 1/k on k ≥ 2, cubic blend between.
pub fn lambda_phi(k: f64) -> f64 {
    if k <= 1.0 {
        1.0
    } else if k >= 2.0 {
        1.0 / k
    } else {
        let x = k - 1.0;
        let b = x * x * (3.0 - 2.0 * x);
        (1.0 - b) + b / k
    }
}

/// Λ_t^{−α} = t^{α/2} φ(√t k)^α.
pub fn lambda_inverse(f: &AxisymmetricField, alpha: f64, t: f64, table: &ScatteringTable) -> Result<AxisymmetricField> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("lambda_inverse needs t > 0, got {t}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("lambda_inverse needs α ≥ 0, got {alpha}")));
    }
    let st = t.sqrt();
    let m = MultiplierSpec::real(&f.grids, |k| t.powf(0.5 * alpha) * lambda_phi(st * k).powf(alpha));
    apply_multiplier(f, &m, table)
}

/// Pointwise values on the collocation grid of (Σ_N |P_N f|²)^{1/2}.
pub fn square_function_values(f: &AxisymmetricField, table: &ScatteringTable, ladder: &DyadicLadder) -> Result<Vec<f64>> {
    let fs = forward(f, table)?;
    let mut acc: Option<Vec<f64>> = None;
    for n in ladder.scales() {
        let m = MultiplierSpec::real(&f.grids, lp_symbol(n, LpMode::Band));
        let band = inverse(&fs.multiply(&m.values), table)?.to_collocation();
        let a = acc.get_or_insert_with(|| vec![0.0; band.len()]);
        for (x, v) in a.iter_mut().zip(&band) {
            *x += v.norm_sqr();
        }
    }
    Ok(acc.unwrap_or_default().into_iter().map(f64::sqrt).collect())
}

/// The square function as a field (projected onto the available channels).
pub fn square_function(f: &AxisymmetricField, table: &ScatteringTable, ladder: &DyadicLadder) -> Result<AxisymmetricField> {
    let vals = square_function_values(f, table, ladder)?;
    Ok(project_real(&f.grids, f.l, &vals))
}

/// sup_N |F♯⁻¹ e^{2πi n k/(K N)} Ψ(k/N) F♯ f| on the collocation grid.
pub fn maximal_modulated_values(f: &AxisymmetricField, n: f64, table: &ScatteringTable, ladder: &DyadicLadder) -> Result<Vec<f64>> {
    let fs = forward(f, table)?;
    let mut acc: Option<Vec<f64>> = None;
    for scale in ladder.scales() {
        let m = MultiplierSpec::modulated(&f.grids, n, scale, ladder.k_mod, |k| psi(k / scale));
        let piece = inverse(&fs.multiply(&m.values), table)?.to_collocation();
        let a = acc.get_or_insert_with(|| vec![0.0; piece.len()]);
        for (x, v) in a.iter_mut().zip(&piece) {
            *x = x.max(v.norm());
        }
    }
    Ok(acc.unwrap_or_default())
}

pub fn maximal_modulated(f: &AxisymmetricField, n: f64, table: &ScatteringTable, ladder: &DyadicLadder) -> Result<AxisymmetricField> {
    let vals = maximal_modulated_values(f, n, table, ladder)?;
    Ok(project_real(&f.grids, f.l, &vals))
}

fn project_real(grids: &Arc<Grids>, l: usize, vals: &[f64]) -> AxisymmetricField {
    let c: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    AxisymmetricField::from_collocation(grids, l.min(grids.l_max()), &c)
}

/// L^p norm of collocation samples, re-exported for harnesses.
pub fn collocation_norm(grids: &Grids, vals: &[f64], p: f64) -> Result<f64> {
    lp_norm_collocation(grids, vals, p)
}
