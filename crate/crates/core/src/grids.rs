//! Radial and momentum quadrature grids and the axisymmetric field algebra.
//!
//! A field on ℝ³ is stored as Legendre channels f(x) = Σ_l f_l(r) P_l(cosθ).
//! Pointwise operations go through a Gauss–Legendre collocation in μ = cosθ.

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, legendre_all};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Uniform composite midpoint rule on (0, r_max]: r_i = (i − ½)Δr.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n_r: usize,
    pub dr: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_r: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Config(format!("r_max must be positive, got {r_max}")));
        }
        if n_r < 8 {
            return Err(Error::Config(format!("n_r must be at least 8, got {n_r}")));
        }
        let dr = r_max / n_r as f64;
        let nodes = (0..n_r).map(|i| (i as f64 + 0.5) * dr).collect();
        Ok(RadialGrid { r_max, n_r, dr, nodes, weights: vec![dr; n_r] })
    }

    /// Index of the first node with r ≥ `r`.
    pub fn index_at_or_above(&self, r: f64) -> usize {
        let i = (r / self.dr - 0.5).ceil().max(0.0) as usize;
        i.min(self.n_r)
    }
}

/// Momentum nodes k_j = jΔk, j = 1..n_k, with trapezoid weights on [0, k_max].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumGrid {
    pub k_max: f64,
    pub n_k: usize,
    pub dk: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MomentumGrid {
    pub fn new(k_max: f64, n_k: usize) -> Result<Self> {
        if !(k_max > 0.0) || !k_max.is_finite() {
            return Err(Error::Config(format!("k_max must be positive, got {k_max}")));
        }
        if n_k < 8 {
            return Err(Error::Config(format!("n_k must be at least 8, got {n_k}")));
        }
        let dk = k_max / n_k as f64;
        let nodes = (1..=n_k).map(|j| j as f64 * dk).collect();
        let mut weights = vec![dk; n_k];
        weights[n_k - 1] = 0.5 * dk;
        Ok(MomentumGrid { k_max, n_k, dk, nodes, weights })
    }

    pub fn k_min(&self) -> f64 {
        self.nodes[0]
    }
}

/// Builds the radial and momentum grids.
pub fn make_grids(r_max: f64, n_r: usize, k_max: f64, n_k: usize) -> Result<(RadialGrid, MomentumGrid)> {
    Ok((RadialGrid::new(r_max, n_r)?, MomentumGrid::new(k_max, n_k)?))
}

/// Gauss–Legendre collocation in μ = cosθ with n_μ = 2·L_max + 4 nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Angular {
    pub l_max: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// P_l(μ_a) for l ≤ 2·L_max, stored as `p[a * (2 L_max + 1) + l]`.
    p: Vec<f64>,
}

impl Angular {
    pub fn new(l_max: usize) -> Self {
        let n_mu = 2 * l_max + 4;
        let (nodes, weights) = gauss_legendre(n_mu);
        let lp = 2 * l_max + 1;
        let mut p = vec![0.0; n_mu * lp];
        for (a, &mu) in nodes.iter().enumerate() {
            legendre_all(lp - 1, mu, &mut p[a * lp..(a + 1) * lp]);
        }
        Angular { l_max, nodes, weights, p }
    }

    pub fn n_mu(&self) -> usize {
        self.nodes.len()
    }

    /// P_l(μ_a), valid for l ≤ 2·L_max.
    #[inline]
    pub fn p(&self, a: usize, l: usize) -> f64 {
        self.p[a * (2 * self.l_max + 1) + l]
    }
}

/// Shared grid context for physical and spectral fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Grids {
    pub radial: RadialGrid,
    pub momentum: MomentumGrid,
    pub angular: Angular,
}

impl Grids {
    pub fn new(r_max: f64, n_r: usize, k_max: f64, n_k: usize, l_max: usize) -> Result<Arc<Self>> {
        let (radial, momentum) = make_grids(r_max, n_r, k_max, n_k)?;
        Ok(Arc::new(Grids { radial, momentum, angular: Angular::new(l_max) }))
    }

    pub fn l_max(&self) -> usize {
        self.angular.l_max
    }

    pub fn same(a: &Arc<Grids>, b: &Arc<Grids>) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }
}

fn check_grids(a: &Arc<Grids>, b: &Arc<Grids>) -> Result<()> {
    if Grids::same(a, b) {
        Ok(())
    } else {
        Err(Error::Shape("fields live on different grids".into()))
    }
}

/// Complex field f(x) = Σ_{l ≤ L} f_l(r) P_l(cosθ) sampled on the radial nodes.
#[derive(Clone, Debug)]
pub struct AxisymmetricField {
    pub grids: Arc<Grids>,
    pub l: usize,
    /// Channel-major: `data[l * n_r + i]`.
    pub data: Vec<Complex64>,
}

impl AxisymmetricField {
    pub fn zeros(grids: &Arc<Grids>, l: usize) -> Self {
        let n = grids.radial.n_r * (l + 1);
        AxisymmetricField { grids: grids.clone(), l, data: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Builds a field from per-channel radial profiles `f(l, r)`.
    pub fn from_channels(grids: &Arc<Grids>, l: usize, f: impl Fn(usize, f64) -> Complex64) -> Self {
        let mut out = Self::zeros(grids, l);
        let n_r = grids.radial.n_r;
        for ll in 0..=l {
            for (i, &r) in grids.radial.nodes.iter().enumerate() {
                out.data[ll * n_r + i] = f(ll, r);
            }
        }
        out
    }

    /// Channel-0 field from a real radial profile.
    pub fn radial(grids: &Arc<Grids>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_channels(grids, 0, |_, r| Complex64::new(f(r), 0.0))
    }

    pub fn n_r(&self) -> usize {
        self.grids.radial.n_r
    }

    pub fn channel(&self, l: usize) -> &[Complex64] {
        let n = self.n_r();
        &self.data[l * n..(l + 1) * n]
    }

    pub fn channel_mut(&mut self, l: usize) -> &mut [Complex64] {
        let n = self.n_r();
        &mut self.data[l * n..(l + 1) * n]
    }

    /// Pads with zero channels or truncates to `l` channels.
    pub fn with_l(&self, l: usize) -> Self {
        let n = self.n_r();
        let mut out = Self::zeros(&self.grids, l);
        let m = l.min(self.l) + 1;
        out.data[..m * n].copy_from_slice(&self.data[..m * n]);
        out
    }

    /// L² mass carried by channels above `l`.
    pub fn mass_above(&self, l: usize) -> f64 {
        (l + 1..=self.l).map(|ll| self.channel_mass(ll)).sum()
    }

    pub fn channel_mass(&self, l: usize) -> f64 {
        let g = &self.grids.radial;
        let s: f64 = self
            .channel(l)
            .iter()
            .zip(&g.nodes)
            .zip(&g.weights)
            .map(|((v, r), w)| v.norm_sqr() * r * r * w)
            .sum();
        4.0 * PI / (2 * l + 1) as f64 * s
    }

    pub fn norm2(&self) -> f64 {
        (0..=self.l).map(|l| self.channel_mass(l)).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    /// `self + c·other`, with channel count the larger of the two.
    pub fn axpy(&self, c: Complex64, other: &Self) -> Result<Self> {
        check_grids(&self.grids, &other.grids)?;
        let mut out = self.with_l(self.l.max(other.l));
        let n = other.data.len();
        for (o, v) in out.data[..n].iter_mut().zip(&other.data) {
            *o += c * v;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Values on the (r, μ) collocation grid, `out[i * n_mu + a]`.
    pub fn to_collocation(&self) -> Vec<Complex64> {
        let ang = &self.grids.angular;
        let n_mu = ang.n_mu();
        let n_r = self.n_r();
        let mut out = vec![Complex64::new(0.0, 0.0); n_r * n_mu];
        for l in 0..=self.l {
            let ch = self.channel(l);
            for a in 0..n_mu {
                let p = ang.p(a, l);
                for i in 0..n_r {
                    out[i * n_mu + a] += ch[i] * p;
                }
            }
        }
        out
    }

    /// Projects collocation values onto channels 0..=l (l ≤ 2·L_max).
    pub fn from_collocation(grids: &Arc<Grids>, l: usize, vals: &[Complex64]) -> Self {
        let ang = &grids.angular;
        let n_mu = ang.n_mu();
        let mut out = Self::zeros(grids, l);
        let n_r = grids.radial.n_r;
        for ll in 0..=l {
            let c = 0.5 * (2 * ll + 1) as f64;
            let ch = &mut out.data[ll * n_r..(ll + 1) * n_r];
            for a in 0..n_mu {
                let wp = c * ang.weights[a] * ang.p(a, ll);
                for i in 0..n_r {
                    ch[i] += vals[i * n_mu + a] * wp;
                }
            }
        }
        out
    }

    /// Serializes as `L,n_r,r_max` header, then `l,i,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "L,n_r,r_max")?;
        writeln!(w, "{},{},{}", self.l, self.n_r(), self.grids.radial.r_max)?;
        writeln!(w, "l,i,re,im")?;
        let n = self.n_r();
        for l in 0..=self.l {
            for i in 0..n {
                let v = self.data[l * n + i];
                writeln!(w, "{},{},{},{}", l, i, v.re, v.im)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grids: &Arc<Grids>, r: R) -> Result<Self> {
        let bad = |m: &str| Error::Shape(format!("field csv: {m}"));
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| bad("truncated"))?.map_err(|e| bad(&e.to_string()))
        };
        next()?;
        let head = next()?;
        let parts: Vec<&str> = head.split(',').collect();
        if parts.len() != 3 {
            return Err(bad("header"));
        }
        let l: usize = parts[0].parse().map_err(|_| bad("L"))?;
        let n_r: usize = parts[1].parse().map_err(|_| bad("n_r"))?;
        let r_max: f64 = parts[2].parse().map_err(|_| bad("r_max"))?;
        if n_r != grids.radial.n_r || r_max != grids.radial.r_max {
            return Err(Error::Shape("field csv grid differs from target grid".into()));
        }
        next()?;
        let mut out = Self::zeros(grids, l);
        for _ in 0..(l + 1) * n_r {
            let row = next()?;
            let p: Vec<&str> = row.split(',').collect();
            if p.len() != 4 {
                return Err(bad("row"));
            }
            let ll: usize = p[0].parse().map_err(|_| bad("l"))?;
            let i: usize = p[1].parse().map_err(|_| bad("i"))?;
            let re: f64 = p[2].parse().map_err(|_| bad("re"))?;
            let im: f64 = p[3].parse().map_err(|_| bad("im"))?;
            if ll > l || i >= n_r {
                return Err(bad("index"));
            }
            out.data[ll * n_r + i] = Complex64::new(re, im);
        }
        Ok(out)
    }
}

/// Distorted-frequency representation f♯_l(k_j).
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grids: Arc<Grids>,
    pub l: usize,
    /// Channel-major: `data[l * n_k + j]`.
    pub data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grids: &Arc<Grids>, l: usize) -> Self {
        let n = grids.momentum.n_k * (l + 1);
        SpectralField { grids: grids.clone(), l, data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_channels(grids: &Arc<Grids>, l: usize, f: impl Fn(usize, f64) -> Complex64) -> Self {
        let mut out = Self::zeros(grids, l);
        let n_k = grids.momentum.n_k;
        for ll in 0..=l {
            for (j, &k) in grids.momentum.nodes.iter().enumerate() {
                out.data[ll * n_k + j] = f(ll, k);
            }
        }
        out
    }

    pub fn n_k(&self) -> usize {
        self.grids.momentum.n_k
    }

    pub fn channel(&self, l: usize) -> &[Complex64] {
        let n = self.n_k();
        &self.data[l * n..(l + 1) * n]
    }

    pub fn channel_mut(&mut self, l: usize) -> &mut [Complex64] {
        let n = self.n_k();
        &mut self.data[l * n..(l + 1) * n]
    }

    pub fn with_l(&self, l: usize) -> Self {
        let n = self.n_k();
        let mut out = Self::zeros(&self.grids, l);
        let m = l.min(self.l) + 1;
        out.data[..m * n].copy_from_slice(&self.data[..m * n]);
        out
    }

    /// Multiplies every channel by the radial multiplier values m(k_j).
    pub fn multiply(&self, m: &[Complex64]) -> Self {
        let n = self.n_k();
        let mut out = self.clone();
        for l in 0..=self.l {
            for (v, mv) in out.data[l * n..(l + 1) * n].iter_mut().zip(m) {
                *v *= mv;
            }
        }
        out
    }

    pub fn axpy(&self, c: Complex64, other: &Self) -> Result<Self> {
        check_grids(&self.grids, &other.grids)?;
        let mut out = self.with_l(self.l.max(other.l));
        let n = other.data.len();
        for (o, v) in out.data[..n].iter_mut().zip(&other.data) {
            *o += c * v;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// ⟨F, G⟩ = Σ_l (4π/(2l+1)) ∫ F_l Ḡ_l k² dk.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        check_grids(&self.grids, &other.grids)?;
        let g = &self.grids.momentum;
        let n = self.n_k();
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..=self.l.min(other.l) {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                s += self.data[l * n + j] * other.data[l * n + j].conj() * (g.nodes[j] * g.nodes[j] * g.weights[j]);
            }
            acc += s * (4.0 * PI / (2 * l + 1) as f64);
        }
        Ok(acc)
    }

    pub fn norm2(&self) -> f64 {
        self.inner(self).map(|c| c.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "l,k,re,im")?;
        let n = self.n_k();
        for l in 0..=self.l {
            for j in 0..n {
                let v = self.data[l * n + j];
                writeln!(w, "{},{},{},{}", l, self.grids.momentum.nodes[j], v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// ∫ f ḡ dx = Σ_l (4π/(2l+1)) ∫ f_l ḡ_l r² dr.
pub fn inner_product(f: &AxisymmetricField, g: &AxisymmetricField) -> Result<Complex64> {
    check_grids(&f.grids, &g.grids)?;
    let rg = &f.grids.radial;
    let n = rg.n_r;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..=f.l.min(g.l) {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            s += f.data[l * n + i] * g.data[l * n + i].conj() * (rg.nodes[i] * rg.nodes[i] * rg.weights[i]);
        }
        acc += s * (4.0 * PI / (2 * l + 1) as f64);
    }
    Ok(acc)
}

/// ∫ f g h dx evaluated on the collocation grid (exact for channel polynomials).
pub fn triple_integral(f: &AxisymmetricField, g: &AxisymmetricField, h: &AxisymmetricField) -> Result<Complex64> {
    check_grids(&f.grids, &g.grids)?;
    check_grids(&f.grids, &h.grids)?;
    let (a, b, c) = (f.to_collocation(), g.to_collocation(), h.to_collocation());
    let grids = &f.grids;
    let n_mu = grids.angular.n_mu();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&r, &w)) in grids.radial.nodes.iter().zip(&grids.radial.weights).enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for q in 0..n_mu {
            let idx = i * n_mu + q;
            s += a[idx] * b[idx] * c[idx] * grids.angular.weights[q];
        }
        acc += s * (r * r * w);
    }
    Ok(acc * (2.0 * PI))
}

/// L^p(ℝ³) norm by collocation quadrature; p = ∞ gives the collocation sup.
pub fn lp_norm(f: &AxisymmetricField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("lp_norm requires p ≥ 1, got {p}")));
    }
    let vals: Vec<f64> = f.to_collocation().iter().map(|v| v.norm()).collect();
    lp_norm_collocation(&f.grids, &vals, p)
}

/// L^p norm of nonnegative samples `vals[i * n_mu + a]` on the collocation grid.
pub fn lp_norm_collocation(grids: &Grids, vals: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("lp_norm requires p ≥ 1, got {p}")));
    }
    let n_mu = grids.angular.n_mu();
    if vals.len() != n_mu * grids.radial.n_r {
        return Err(Error::Shape("collocation sample count mismatch".into()));
    }
    if p.is_infinite() {
        return Ok(vals.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let mut acc = 0.0;
    for (i, (&r, &w)) in grids.radial.nodes.iter().zip(&grids.radial.weights).enumerate() {
        let mut s = 0.0;
        for q in 0..n_mu {
            let m = vals[i * n_mu + q].abs();
            let v = if p == 2.0 { m * m } else { m.powf(p) };
            s += v * grids.angular.weights[q];
        }
        acc += s * r * r * w;
    }
    Ok((2.0 * PI * acc).powf(1.0 / p))
}

/// Pointwise product; channels above L_max are dropped.
pub fn multiply_fields(f: &AxisymmetricField, g: &AxisymmetricField) -> Result<AxisymmetricField> {
    multiply_fields_tracked(f, g).map(|(h, _)| h)
}

/// Pointwise product plus the L² mass of the truncated channels.
pub fn multiply_fields_tracked(f: &AxisymmetricField, g: &AxisymmetricField) -> Result<(AxisymmetricField, f64)> {
    check_grids(&f.grids, &g.grids)?;
    let grids = &f.grids;
    let l_full = (f.l + g.l).min(2 * grids.l_max());
    let l_out = l_full.min(grids.l_max());
    if f.l == 0 && g.l == 0 {
        let mut out = AxisymmetricField::zeros(grids, 0);
        for ((o, a), b) in out.data.iter_mut().zip(&f.data).zip(&g.data) {
            *o = a * b;
        }
        return Ok((out, 0.0));
    }
    let a = f.to_collocation();
    let b = g.to_collocation();
    let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let full = AxisymmetricField::from_collocation(grids, l_full, &prod);
    let dropped = full.mass_above(l_out);
    Ok((full.with_l(l_out), dropped))
}

/// Scales each channel pointwise by w(r_i).
pub fn multiply_radial_weight(f: &AxisymmetricField, w: &[f64]) -> Result<AxisymmetricField> {
    if w.len() != f.n_r() {
        return Err(Error::Shape(format!("weight has {} samples, grid has {}", w.len(), f.n_r())));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite radial weight".into()));
    }
    let n = f.n_r();
    let mut out = f.clone();
    for l in 0..=f.l {
        for (v, wv) in out.data[l * n..(l + 1) * n].iter_mut().zip(w) {
            *v *= wv;
        }
    }
    Ok(out)
}

/// Scales by a radial function evaluated on the nodes.
pub fn multiply_radial_fn(f: &AxisymmetricField, w: impl Fn(f64) -> f64) -> Result<AxisymmetricField> {
    let vals: Vec<f64> = f.grids.radial.nodes.iter().map(|&r| w(r)).collect();
    multiply_radial_weight(f, &vals)
}

/// Multiplication by cosθ through the Legendre recurrence, capped at L_max.
/// Returns the field and the dropped L² mass.
pub fn multiply_cos_theta(f: &AxisymmetricField) -> (AxisymmetricField, f64) {
    let n = f.n_r();
    let l_full = f.l + 1;
    let mut full = AxisymmetricField::zeros(&f.grids, l_full);
    for l in 0..=f.l {
        let up = (l + 1) as f64 / (2 * l + 1) as f64;
        let down = l as f64 / (2 * l + 1) as f64;
        for i in 0..n {
            let v = f.data[l * n + i];
            full.data[(l + 1) * n + i] += v * up;
            if l > 0 {
                full.data[(l - 1) * n + i] += v * down;
            }
        }
    }
    let cap = f.grids.l_max();
    if l_full <= cap {
        (full, 0.0)
    } else {
        let dropped = full.mass_above(cap);
        (full.with_l(cap), dropped)
    }
}

/// Fraction of L² mass carried by r > `frac`·r_max.
pub fn tail_mass_fraction(f: &AxisymmetricField, frac: f64) -> f64 {
    let g = &f.grids.radial;
    let n = g.n_r;
    let cut = frac * g.r_max;
    let mut tail = 0.0;
    let mut total = 0.0;
    for l in 0..=f.l {
        let c = 4.0 * PI / (2 * l + 1) as f64;
        for i in 0..n {
            let m = c * f.data[l * n + i].norm_sqr() * g.nodes[i] * g.nodes[i] * g.weights[i];
            total += m;
            if g.nodes[i] > cut {
                tail += m;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}
