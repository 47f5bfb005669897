//! Pseudo-products T(f, g) = Σ a·m₃(D♯)[(m₁(D♯)f)(m₂(D♯)g)] for radial
//! Coifman–Meyer symbols, the trilinear form Λ, the kernel M and the
//! derivative identity for ∂M.

mod mkernel;
mod separation;

pub use mkernel::{build_m_kernel, weak_form_physical, MKernel, MKernelMode, MKernelOptions, M_CONSTANT};
pub use separation::{decay_exponent, separate_symbol, separate_symbol_unchecked, SeparationMethod, SeparationOptions};

use crate::error::{Error, Result};
use crate::grids::{inner_product, lp_norm, triple_integral, AxisymmetricField, Grids, SpectralField};
use crate::scattering::ScatteringTable;
use crate::transform::{forward, inverse, psi, MultiplierSpec};
use crate::waveop::{conjugated_radius, op_e, op_r3, Tables};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

type SymbolCall = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// Real radial symbol m(k₁, k₂, k₃). Two-variable symbols ignore k₃.
#[derive(Clone)]
pub struct SymbolFn {
    pub name: String,
    pub vars: usize,
    /// Decay order δ of the improved class, if declared.
    pub decay: Option<f64>,
    f: Arc<SymbolCall>,
}

impl fmt::Debug for SymbolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymbolFn({}, {} vars)", self.name, self.vars)
    }
}

impl SymbolFn {
    pub fn new(name: &str, vars: usize, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if vars != 2 && vars != 3 {
            return Err(Error::Config(format!("symbols take 2 or 3 variables, got {vars}")));
        }
        Ok(SymbolFn { name: name.into(), vars, decay: None, f: Arc::new(f) })
    }

    pub fn with_decay(mut self, delta: f64) -> Self {
        self.decay = Some(delta);
        self
    }

    #[inline]
    pub fn eval(&self, k1: f64, k2: f64, k3: f64) -> f64 {
        (self.f)(k1, k2, k3)
    }

    pub fn one(vars: usize) -> Result<Self> {
        Self::new("one", vars, |_, _, _| 1.0)
    }

    /// Built-in symbols addressable from configuration files.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "one" => Self::one(3),
            "one2" => Self::one(2),
            "quadratic_ratio" => Self::new(name, 3, |a, b, c| a * a / (a * a + b * b + c * c)),
            "linear_ratio" => Self::new(name, 3, |a, b, c| a / (a + b + c)),
            "bilinear_ratio" => Self::new(name, 2, |a, b, _| a * a / (a * a + b * b)),
            // smooth low-high paraproduct cutoff, homogeneous of degree 0
            "paraproduct" => Self::new(name, 2, |a, b, _| psi(4.0 * b / a)),
            "degree_one" => Self::new(name, 3, |a, _, _| a),
            _ => Err(Error::Config(format!("unknown symbol '{name}'"))),
        }
    }
}

/// Indices of roughly `count` momentum nodes, half log-spaced from k_min and half uniform.
pub(crate) fn sample_indices(n: usize, count: usize) -> Vec<usize> {
    let half = (count / 2).max(2);
    let mut out = BTreeSet::new();
    for s in 0..half {
        let t = s as f64 / (half - 1) as f64;
        out.insert(((n as f64).powf(t).round() as usize).clamp(1, n) - 1);
        out.insert(((t * (n - 1) as f64).round() as usize).min(n - 1));
    }
    out.into_iter().collect()
}

/// max over the sampled grid cube of (k₁+k₂+k₃)^{|α|}|∂^α m|, |α| ≤ order.
pub fn cm_constant(m: &SymbolFn, order: usize, grids: &Grids) -> Result<f64> {
    if order > 2 {
        return Err(Error::Domain(format!("cm_constant supports order ≤ 2, got {order}")));
    }
    let idx = sample_indices(grids.momentum.n_k, 20);
    let ks: Vec<f64> = idx.iter().map(|&j| grids.momentum.nodes[j]).collect();
    let d = m.vars;
    let mut best: f64 = 0.0;
    let n3 = if d == 3 { ks.len() } else { 1 };
    for &a in &ks {
        for &b in &ks {
            for c in 0..n3 {
                let k = [a, b, if d == 3 { ks[c] } else { 0.0 }];
                best = best.max(scaled_derivatives(m, k, order)?);
            }
        }
    }
    Ok(best)
}

fn scaled_derivatives(m: &SymbolFn, k: [f64; 3], order: usize) -> Result<f64> {
    let d = m.vars;
    let s: f64 = k[..d].iter().sum();
    let g = |x: [f64; 3]| -> Result<f64> {
        let v = m.eval(x[0], x[1], x[2]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("symbol {} is not finite at {:?}", m.name, x)))
        }
    };
    let shift = |i: usize, h: f64, x: [f64; 3]| {
        let mut y = x;
        y[i] += h;
        y
    };
    let h: Vec<f64> = (0..d).map(|i| (1e-3 * s).min(0.5 * k[i])).collect();
    let g0 = g(k)?;
    let mut best = g0.abs();
    if order >= 1 {
        for i in 0..d {
            let dv = (g(shift(i, h[i], k))? - g(shift(i, -h[i], k))?) / (2.0 * h[i]);
            best = best.max(s * dv.abs());
        }
    }
    if order >= 2 {
        for i in 0..d {
            let dv = (g(shift(i, h[i], k))? - 2.0 * g0 + g(shift(i, -h[i], k))?) / (h[i] * h[i]);
            best = best.max(s * s * dv.abs());
            for j in i + 1..d {
                let pp = g(shift(j, h[j], shift(i, h[i], k)))?;
                let pm = g(shift(j, -h[j], shift(i, h[i], k)))?;
                let mp = g(shift(j, h[j], shift(i, -h[i], k)))?;
                let mm = g(shift(j, -h[j], shift(i, -h[i], k)))?;
                best = best.max(s * s * ((pp - pm - mp + mm) / (4.0 * h[i] * h[j])).abs());
            }
        }
    }
    Ok(best)
}

/// Block of a dyadic expansion: scale N, largest variable, Fourier modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockMeta {
    pub scale: f64,
    pub largest: usize,
    pub modes: [i32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub a: Complex64,
    /// Indices into the three factor lists.
    pub idx: [usize; 3],
    pub block: Option<BlockMeta>,
}

/// m ≈ Σ a·m₁(k₁)m₂(k₂)m₃(k₃), with factors shared between terms.
#[derive(Clone, Debug)]
pub struct SeparableSymbol {
    pub grids: Arc<Grids>,
    pub vars: usize,
    pub method: SeparationMethod,
    pub factors: [Vec<MultiplierSpec>; 3],
    pub terms: Vec<Term>,
    /// sup |m − Σ| / sup |m| on the validation cube.
    pub reconstruction_error: f64,
    pub decay_exponent: Option<f64>,
}

impl SeparableSymbol {
    /// A single product term m₁(k₁)m₂(k₂)[m₃(k₃)].
    pub fn product(grids: &Arc<Grids>, m1: MultiplierSpec, m2: MultiplierSpec, m3: Option<MultiplierSpec>) -> Self {
        let vars = if m3.is_some() { 3 } else { 2 };
        let one = MultiplierSpec::real(grids, |_| 1.0);
        SeparableSymbol {
            grids: grids.clone(),
            vars,
            method: SeparationMethod::Explicit,
            factors: [vec![m1], vec![m2], vec![m3.unwrap_or(one)]],
            terms: vec![Term { a: Complex64::new(1.0, 0.0), idx: [0, 0, 0], block: None }],
            reconstruction_error: 0.0,
            decay_exponent: None,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Reconstruction on the cube idx^vars, flattened row-major.
    pub fn evaluate(&self, idx: &[usize]) -> Vec<Complex64> {
        let n = idx.len();
        let zero = Complex64::new(0.0, 0.0);
        let vals = |slot: usize| -> Vec<Vec<Complex64>> {
            self.factors[slot].iter().map(|f| idx.iter().map(|&j| f.values[j]).collect()).collect()
        };
        let (v1, v2, v3) = (vals(0), vals(1), vals(2));
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pair_list = Vec::new();
        let term_pair: Vec<usize> = self
            .terms
            .iter()
            .map(|t| {
                *pairs.entry((t.idx[0], t.idx[1])).or_insert_with(|| {
                    pair_list.push((t.idx[0], t.idx[1]));
                    pair_list.len() - 1
                })
            })
            .collect();
        let n3 = if self.vars == 3 { n } else { 1 };
        let mut out = vec![zero; n * n * n3];
        let mut w = vec![zero; pair_list.len()];
        for p3 in 0..n3 {
            w.iter_mut().for_each(|x| *x = zero);
            for (t, &pi) in self.terms.iter().zip(&term_pair) {
                let f3 = if self.vars == 3 { v3[t.idx[2]][p3] } else { Complex64::new(1.0, 0.0) };
                w[pi] += t.a * f3;
            }
            for p1 in 0..n {
                for p2 in 0..n {
                    let mut s = zero;
                    for (&(i1, i2), wv) in pair_list.iter().zip(&w) {
                        s += wv * v1[i1][p1] * v2[i2][p2];
                    }
                    out[(p1 * n + p2) * n3 + p3] = s;
                }
            }
        }
        out
    }

    /// sup |m − Σ| / sup |m| over the cube idx^vars.
    pub fn error_against(&self, m: &SymbolFn, idx: &[usize]) -> f64 {
        let rec = self.evaluate(idx);
        let ks = &self.grids.momentum.nodes;
        let n = idx.len();
        let n3 = if self.vars == 3 { n } else { 1 };
        let (mut err, mut top): (f64, f64) = (0.0, 0.0);
        for p1 in 0..n {
            for p2 in 0..n {
                for p3 in 0..n3 {
                    let k3 = if self.vars == 3 { ks[idx[p3]] } else { 0.0 };
                    let v = m.eval(ks[idx[p1]], ks[idx[p2]], k3);
                    top = top.max(v.abs());
                    err = err.max((rec[(p1 * n + p2) * n3 + p3] - v).norm());
                }
            }
        }
        if top > 0.0 {
            err / top
        } else {
            err
        }
    }

    /// Term list as CSV rows `N,largest,n1,n2,n3,abs_a`.
    pub fn write_terms_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,largest,n1,n2,n3,abs_a")?;
        for t in &self.terms {
            match t.block {
                Some(b) => writeln!(w, "{},{},{},{},{},{:e}", b.scale, b.largest + 1, b.modes[0], b.modes[1], b.modes[2], t.a.norm())?,
                None => writeln!(w, ",,{},{},{},{:e}", t.idx[0], t.idx[1], t.idx[2], t.a.norm())?,
            }
        }
        Ok(())
    }
}

fn check_shared(a: &Arc<Grids>, b: &Arc<Grids>) -> Result<()> {
    if Grids::same(a, b) {
        Ok(())
    } else {
        Err(Error::Shape("fields, symbol and table must share one grid".into()))
    }
}

/// T(f, g) = Σ_terms a·m₃(D♯)[(m₁(D♯)f)(m₂(D♯)g)]; two-variable symbols skip m₃.
pub fn apply_t(f: &AxisymmetricField, g: &AxisymmetricField, sep: &SeparableSymbol, table: &ScatteringTable) -> Result<AxisymmetricField> {
    check_shared(&f.grids, &g.grids)?;
    check_shared(&f.grids, &sep.grids)?;
    check_shared(&f.grids, &table.grids)?;
    let grids = &f.grids;
    let l_out = (f.l + g.l).min(grids.l_max());
    if sep.is_empty() {
        return Ok(AxisymmetricField::zeros(grids, l_out));
    }
    let (fs, gs) = (forward(f, table)?, forward(g, table)?);
    let lift = |s: &SpectralField, slot: usize, used: BTreeSet<usize>| -> Result<HashMap<usize, Vec<Complex64>>> {
        used.into_iter()
            .map(|i| Ok((i, inverse(&s.multiply(&sep.factors[slot][i].values), table)?.to_collocation())))
            .collect()
    };
    let a = lift(&fs, 0, sep.terms.iter().map(|t| t.idx[0]).collect())?;
    let b = lift(&gs, 1, sep.terms.iter().map(|t| t.idx[1]).collect())?;
    let mut groups: BTreeMap<usize, Vec<&Term>> = BTreeMap::new();
    for t in &sep.terms {
        groups.entry(if sep.vars == 3 { t.idx[2] } else { 0 }).or_default().push(t);
    }
    let n = grids.radial.n_r * grids.angular.n_mu();
    let zero = Complex64::new(0.0, 0.0);
    let mut spec = SpectralField::zeros(grids, l_out);
    let mut phys = AxisymmetricField::zeros(grids, l_out);
    let mut q = vec![zero; n];
    for (i3, ts) in groups {
        q.iter_mut().for_each(|x| *x = zero);
        for t in ts {
            let (x, y) = (&a[&t.idx[0]], &b[&t.idx[1]]);
            for ((o, xv), yv) in q.iter_mut().zip(x).zip(y) {
                *o += t.a * xv * yv;
            }
        }
        let p = AxisymmetricField::from_collocation(grids, l_out, &q);
        if sep.vars == 3 {
            spec = spec.axpy(Complex64::new(1.0, 0.0), &forward(&p, table)?.multiply(&sep.factors[2][i3].values))?;
        } else {
            phys = phys.add(&p)?;
        }
    }
    if sep.vars == 3 {
        inverse(&spec, table)
    } else {
        Ok(phys)
    }
}

/// Λ(f, g, h) = ∫ T(f, g)·h dx, a bilinear pairing with no conjugation.
pub fn trilinear_lambda(
    f: &AxisymmetricField,
    g: &AxisymmetricField,
    h: &AxisymmetricField,
    sep: &SeparableSymbol,
    table: &ScatteringTable,
) -> Result<Complex64> {
    inner_product(&apply_t(f, g, sep, table)?, &h.conj())
}

/// The ε in the shifted exponents 1/q̃ = 1/q + ε/2, 1/p̃ = 1/p + ε/2.
pub const HOLDER_EPSILON: f64 = 0.1;

/// ‖T(f,g)‖_{r′} / (‖f‖_q‖g‖_p + ‖f‖_{q̃}‖g‖_{p̃}).
pub fn holder_ratio(
    f: &AxisymmetricField,
    g: &AxisymmetricField,
    sep: &SeparableSymbol,
    exps: (f64, f64, f64),
    table: &ScatteringTable,
) -> Result<f64> {
    let (p, q, rp) = exps;
    if !(p > 1.0 && q > 1.0 && rp >= 1.0) || (1.0 / rp - 1.0 / p - 1.0 / q).abs() > 1e-12 {
        return Err(Error::Config(format!("exponents need 1/r′ = 1/p + 1/q with p, q > 1; got p = {p}, q = {q}, r′ = {rp}")));
    }
    let (pt, qt) = (1.0 / (1.0 / p + 0.5 * HOLDER_EPSILON), 1.0 / (1.0 / q + 0.5 * HOLDER_EPSILON));
    if pt <= 1.0 || qt <= 1.0 {
        return Err(Error::Config("shifted exponents leave (1, ∞)".into()));
    }
    let den = lp_norm(f, q)? * lp_norm(g, p)? + lp_norm(f, qt)? * lp_norm(g, pt)?;
    if den == 0.0 {
        return Err(Error::Degenerate("holder_ratio with a zero input".into()));
    }
    Ok(lp_norm(&apply_t(f, g, sep, table)?, rp)? / den)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct IdentityReport {
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub defect: f64,
    /// L² mass of 𝓡³h lost to the channel cap, relative to ‖h‖₂².
    pub dropped_fraction: f64,
    pub inconclusive: bool,
}

/// |LHS − RHS| / (|LHS| + |RHS|) for
/// LHS = ∫ f g (Ω|x|Ω*)(𝓡³h), RHS = ∫ (Ω|x|Ω*f) g 𝓡³h + ∫ (𝓔f) g 𝓡³h − ∫ f g 𝓔(𝓡³h).
pub fn derivative_identity_defect(
    f: &AxisymmetricField,
    g: &AxisymmetricField,
    h: &AxisymmetricField,
    tables: &Tables,
) -> Result<IdentityReport> {
    if tables.grids().l_max() < 1 {
        return Err(Error::Config("the derivative identity needs L_max ≥ 1 for 𝓡³".into()));
    }
    let (rh, dropped) = op_r3(h, tables)?;
    let h2 = h.norm2().powi(2);
    let dropped_fraction = if h2 > 0.0 { dropped / h2 } else { 0.0 };
    let lhs = triple_integral(f, g, &conjugated_radius(&rh, tables)?)?;
    let rhs = triple_integral(&conjugated_radius(f, tables)?, g, &rh)? + triple_integral(&op_e(f, tables)?, g, &rh)?
        - triple_integral(f, g, &op_e(&rh, tables)?)?;
    let scale = lhs.norm() + rhs.norm();
    let defect = if scale > 0.0 { (lhs - rhs).norm() / scale } else { 0.0 };
    Ok(IdentityReport {
        lhs: [lhs.re, lhs.im],
        rhs: [rhs.re, rhs.im],
        defect,
        dropped_fraction,
        inconclusive: dropped_fraction > 0.01,
    })
}

#[cfg(test)]
mod tests;
