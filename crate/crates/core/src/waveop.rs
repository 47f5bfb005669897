//! Wave operators Ω = F♯⁻¹F and Ω*, the propagator e^{itH}, commutators
//! with radial weights, and the operators 𝓡³ = Ω cosθ Ω* and 𝓔 = [|x|, Ω]Ω*.

use crate::error::{Error, Result};
use crate::grids::{lp_norm, multiply_cos_theta, multiply_radial_fn, AxisymmetricField, Grids};
use crate::scattering::{build_scattering_table, Potential, ScatteringTable};
use crate::transform::{apply_multiplier, flat_forward, flat_inverse, forward, inverse, MultiplierSpec};
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

/// Distorted and flat tables on a shared grid.
#[derive(Clone, Debug)]
pub struct Tables {
    pub distorted: ScatteringTable,
    pub flat: ScatteringTable,
}

impl Tables {
    pub fn new(v: &Potential, grids: &Arc<Grids>, allow_unsafe: bool) -> Result<Self> {
        let flat = build_scattering_table(&Potential::zero(), grids, true)?;
        let distorted = if v.is_zero() { flat.clone() } else { build_scattering_table(v, grids, allow_unsafe)? };
        Ok(Tables { distorted, flat })
    }

    pub fn from_parts(distorted: ScatteringTable, flat: ScatteringTable) -> Result<Self> {
        if !flat.free || !Grids::same(&distorted.grids, &flat.grids) {
            return Err(Error::Shape("tables must share grids and the flat one must be V = 0".into()));
        }
        Ok(Tables { distorted, flat })
    }

    pub fn grids(&self) -> &Arc<Grids> {
        &self.distorted.grids
    }

    pub fn is_free(&self) -> bool {
        self.distorted.free
    }
}

/// Ω f = F♯⁻¹ F f. Exactly the identity when V = 0.
pub fn wave_operator(f: &AxisymmetricField, t: &Tables) -> Result<AxisymmetricField> {
    if t.is_free() {
        return Ok(f.clone());
    }
    inverse(&flat_forward(f, &t.flat)?, &t.distorted)
}

/// Ω* f = F⁻¹ F♯ f.
pub fn wave_operator_adjoint(f: &AxisymmetricField, t: &Tables) -> Result<AxisymmetricField> {
    if t.is_free() {
        return Ok(f.clone());
    }
    flat_inverse(&forward(f, &t.distorted)?, &t.flat)
}

pub fn propagator_symbol(grids: &Grids, t: f64) -> MultiplierSpec {
    MultiplierSpec::from_fn(grids, |k| Complex64::from_polar(1.0, t * k * k))
}

/// e^{itH} f.
pub fn propagator(f: &AxisymmetricField, t: f64, table: &ScatteringTable) -> Result<AxisymmetricField> {
    if t == 0.0 {
        return Ok(f.clone());
    }
    apply_multiplier(f, &propagator_symbol(&f.grids, t), table)
}

/// t^{3(1/2 − 1/p)}‖e^{itH}f‖_p / ‖⟨x⟩Ω*f‖₂; p = 6 gives the t‖·‖₆ ratio.
pub fn dispersive_ratio_p(f: &AxisymmetricField, t: f64, p: f64, tables: &Tables) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("dispersive ratio needs t ≥ 1, got {t}")));
    }
    let den = multiply_radial_fn(&wave_operator_adjoint(f, tables)?, |r| (1.0 + r * r).sqrt())?.norm2();
    if den == 0.0 {
        return Err(Error::Degenerate("‖⟨x⟩Ω*f‖₂ = 0".into()));
    }
    let u = propagator(f, t, &tables.distorted)?;
    Ok(t.powf(3.0 * (0.5 - 1.0 / p)) * lp_norm(&u, p)? / den)
}

pub fn dispersive_ratio(f: &AxisymmetricField, t: f64, tables: &Tables) -> Result<f64> {
    dispersive_ratio_p(f, t, 6.0, tables)
}

/// [a, Ω] f = a Ωf − Ω(a f), and whether |a'| ≤ 1 held on the grid.
pub fn commutator_radial(f: &AxisymmetricField, a: impl Fn(f64) -> f64, tables: &Tables) -> Result<(AxisymmetricField, bool)> {
    let g = &f.grids.radial;
    let vals: Vec<f64> = g.nodes.iter().map(|&r| a(r)).collect();
    let slope_ok = vals.windows(2).all(|w| ((w[1] - w[0]) / g.dr).abs() <= 1.0 + 1e-9);
    if tables.is_free() {
        return Ok((AxisymmetricField::zeros(&f.grids, f.l), slope_ok));
    }
    let omega_f = wave_operator(f, tables)?;
    let af = crate::grids::multiply_radial_weight(f, &vals)?;
    let left = crate::grids::multiply_radial_weight(&omega_f, &vals)?;
    Ok((left.sub(&wave_operator(&af, tables)?)?, slope_ok))
}

/// 𝓡³ f = Ω cosθ Ω* f, with the L² mass lost to the channel cap.
pub fn op_r3(f: &AxisymmetricField, tables: &Tables) -> Result<(AxisymmetricField, f64)> {
    let (c, dropped) = multiply_cos_theta(&wave_operator_adjoint(f, tables)?);
    Ok((wave_operator(&c, tables)?, dropped))
}

/// Ω|x|Ω* f.
pub fn conjugated_radius(f: &AxisymmetricField, tables: &Tables) -> Result<AxisymmetricField> {
    if tables.is_free() {
        return multiply_radial_fn(f, |r| r);
    }
    wave_operator(&multiply_radial_fn(&wave_operator_adjoint(f, tables)?, |r| r)?, tables)
}

/// 𝓔 f = [|x|, Ω](Ω* f) = |x| ΩΩ* f − Ω|x|Ω* f.
pub fn op_e(f: &AxisymmetricField, tables: &Tables) -> Result<AxisymmetricField> {
    Ok(commutator_radial(&wave_operator_adjoint(f, tables)?, |r| r, tables)?.0)
}

/// |x| f − Ω|x|Ω* f, which equals 𝓔 f when ΩΩ* = I.
pub fn op_e_reduced(f: &AxisymmetricField, tables: &Tables) -> Result<AxisymmetricField> {
    if tables.is_free() {
        return Ok(AxisymmetricField::zeros(&f.grids, f.l));
    }
    multiply_radial_fn(f, |r| r)?.sub(&conjugated_radius(f, tables)?)
}

/// [z, Ω] f with z = r cosθ, plus dropped channel mass.
pub fn commutator_z(f: &AxisymmetricField, tables: &Tables) -> Result<(AxisymmetricField, f64)> {
    if tables.is_free() {
        return Ok((AxisymmetricField::zeros(&f.grids, f.l), 0.0));
    }
    let omega_f = wave_operator(f, tables)?;
    let (zo, d1) = multiply_cos_theta(&multiply_radial_fn(&omega_f, |r| r)?);
    let (zf, d2) = multiply_cos_theta(&multiply_radial_fn(f, |r| r)?);
    Ok((zo.sub(&wave_operator(&zf, tables)?)?, d1 + d2))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct HarnessReport {
    pub family: String,
    pub p: f64,
    pub q: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub dropped_mass: f64,
    pub note: String,
}

pub const HARNESS_NOTE: &str = "norm ratios on a fixed sample family probe boundedness; they do not certify operator norms";

impl HarnessReport {
    pub fn new(family: &str, p: f64, q: f64, ratios: Vec<f64>, dropped_mass: f64) -> Self {
        let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        HarnessReport { family: family.into(), p, q, ratios, max_ratio, min_ratio, dropped_mass, note: HARNESS_NOTE.into() }
    }

    /// max/min, or 1 when every ratio vanishes.
    pub fn spread(&self) -> f64 {
        if self.max_ratio == 0.0 {
            1.0
        } else {
            self.max_ratio / self.min_ratio
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DirectionalReport {
    pub radial: HarnessReport,
    pub nonradial: HarnessReport,
}

/// ‖[|x|, Ω]f_λ‖_q/‖f_λ‖_p next to ‖[z, Ω]f_λ‖_q/‖f_λ‖_p.
pub fn directional_contrast(family: &[AxisymmetricField], p: f64, q: f64, tables: &Tables) -> Result<DirectionalReport> {
    let mut rad = Vec::new();
    let mut non = Vec::new();
    let mut dropped: f64 = 0.0;
    for f in family {
        let den = lp_norm(f, p)?;
        let (c, _) = commutator_radial(f, |r| r, tables)?;
        rad.push(lp_norm(&c, q)? / den);
        let (z, d) = commutator_z(f, tables)?;
        dropped = dropped.max(d);
        non.push(lp_norm(&z, q)? / den);
    }
    Ok(DirectionalReport {
        radial: HarnessReport::new("commutator |x|", p, q, rad, 0.0),
        nonradial: HarnessReport::new("commutator z", p, q, non, dropped),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Ωf carries an r⁻⁴ tail and F♯f an e^{−k²/6} tail, so the box is wide and k_max raised.
    fn tables(v: Potential) -> Tables {
        let g = Grids::new(200.0, 4000, 12.0, 768, 1).unwrap();
        Tables::new(&v, &g, false).unwrap()
    }

    fn gauss(g: &Arc<Grids>) -> AxisymmetricField {
        AxisymmetricField::from_channels(g, 1, |l, r| Complex64::new(1.0, 0.3 * l as f64) * (-r * r / 4.5).exp() * r.powi(l as i32))
    }

    #[test]
    fn free_case_is_identity() {
        let t = tables(Potential::zero());
        let f = gauss(t.grids());
        assert_eq!(wave_operator(&f, &t).unwrap().data, f.data);
        assert_eq!(wave_operator_adjoint(&f, &t).unwrap().data, f.data);
        assert_eq!(op_e(&f, &t).unwrap().norm2(), 0.0);
        let (c, _) = commutator_radial(&f, |r| (1.0 + r * r).sqrt(), &t).unwrap();
        assert_eq!(c.norm2(), 0.0);
    }

    #[test]
    fn unitarity_and_intertwining() {
        let t = tables(Potential::gaussian(1.0, 1.0).unwrap());
        let f = gauss(t.grids());
        let wf = wave_operator(&f, &t).unwrap();
        assert!((wf.norm2() - f.norm2()).abs() < 1e-6 * f.norm2());
        let back = wave_operator_adjoint(&wf, &t).unwrap();
        assert!(back.sub(&f).unwrap().norm2() < 1e-6 * f.norm2());
        let a = forward(&wf, &t.distorted).unwrap();
        let b = flat_forward(&f, &t.flat).unwrap();
        assert!(a.sub(&b).unwrap().norm2() < 1e-6 * b.norm2());
    }

    #[test]
    fn two_routes_for_e() {
        let t = tables(Potential::gaussian(1.0, 1.0).unwrap());
        let f = gauss(t.grids());
        let a = op_e(&f, &t).unwrap();
        let b = op_e_reduced(&f, &t).unwrap();
        assert!(a.sub(&b).unwrap().norm2() < 1e-6 * f.norm2(), "{}", a.sub(&b).unwrap().norm2());
    }
}
