//! Partial-wave scattering for radial potentials: regular solutions, phase
//! shifts, distorted plane waves and the zero-energy spectral checker.

use crate::error::{Error, Result};
use crate::grids::{AxisymmetricField, Grids, RadialGrid};
use crate::special::{riccati_jn, Riccati};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex};

/// Potential magnitude below which V is treated as exactly zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;
/// resonance_score below this flags a (near) zero-energy resonance.
pub const RESONANCE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PotentialForm {
    Zero,
    /// V₀ e^{−r²/a²}
    Gaussian { v0: f64, a: f64 },
    /// V₀ on r < a, 0 beyond.
    SphericalWell { v0: f64, a: f64 },
    /// V₀ e^{−r/a}
    Exponential { v0: f64, a: f64 },
    /// Piecewise-linear samples, zero past the last node.
    Table { r: Vec<f64>, v: Vec<f64> },
}

/// Radial real potential with cached spectral checks.
#[derive(Debug, Serialize, Deserialize)]
pub struct Potential {
    pub form: PotentialForm,
    #[serde(skip)]
    cache: Mutex<Option<(Vec<u64>, SpectralReport)>>,
}

impl Clone for Potential {
    fn clone(&self) -> Self {
        let cache = self.cache.lock().map(|c| c.clone()).unwrap_or(None);
        Potential { form: self.form.clone(), cache: Mutex::new(cache) }
    }
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        self.form == other.form
    }
}

impl Potential {
    pub fn new(form: PotentialForm) -> Result<Self> {
        match &form {
            PotentialForm::Zero => {}
            PotentialForm::Gaussian { v0, a } | PotentialForm::SphericalWell { v0, a } | PotentialForm::Exponential { v0, a } => {
                if !v0.is_finite() || !(*a > 0.0) || !a.is_finite() {
                    return Err(Error::Config(format!("invalid potential parameters v0={v0}, a={a}")));
                }
            }
            PotentialForm::Table { r, v } => {
                if r.len() != v.len() || r.len() < 2 {
                    return Err(Error::Config("potential table needs ≥ 2 matching samples".into()));
                }
                if r[0] < 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("potential table radii must increase from r ≥ 0".into()));
                }
                if v.iter().chain(r).any(|x| !x.is_finite()) {
                    return Err(Error::Config("non-finite potential table entry".into()));
                }
            }
        }
        Ok(Potential { form, cache: Mutex::new(None) })
    }

    pub fn zero() -> Self {
        Potential { form: PotentialForm::Zero, cache: Mutex::new(None) }
    }

    pub fn gaussian(v0: f64, a: f64) -> Result<Self> {
        Self::new(PotentialForm::Gaussian { v0, a })
    }

    pub fn well(v0: f64, a: f64) -> Result<Self> {
        Self::new(PotentialForm::SphericalWell { v0, a })
    }

    pub fn exponential(v0: f64, a: f64) -> Result<Self> {
        Self::new(PotentialForm::Exponential { v0, a })
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            PotentialForm::Zero => true,
            PotentialForm::Gaussian { v0, .. } | PotentialForm::SphericalWell { v0, .. } | PotentialForm::Exponential { v0, .. } => *v0 == 0.0,
            PotentialForm::Table { v, .. } => v.iter().all(|x| *x == 0.0),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.form {
            PotentialForm::Zero => 0.0,
            PotentialForm::Gaussian { v0, a } => v0 * (-(r / a).powi(2)).exp(),
            PotentialForm::SphericalWell { v0, a } => {
                if r < *a {
                    *v0
                } else {
                    0.0
                }
            }
            PotentialForm::Exponential { v0, a } => v0 * (-r / a).exp(),
            PotentialForm::Table { r: rs, v } => {
                let n = rs.len();
                if r <= rs[0] {
                    return v[0];
                }
                if r > rs[n - 1] {
                    return 0.0;
                }
                let j = rs.partition_point(|&x| x < r).clamp(1, n - 1);
                let t = (r - rs[j - 1]) / (rs[j] - rs[j - 1]);
                v[j - 1] + t * (v[j] - v[j - 1])
            }
        }
    }

    /// max |V|.
    pub fn amplitude(&self) -> f64 {
        match &self.form {
            PotentialForm::Zero => 0.0,
            PotentialForm::Gaussian { v0, .. } | PotentialForm::SphericalWell { v0, .. } | PotentialForm::Exponential { v0, .. } => v0.abs(),
            PotentialForm::Table { v, .. } => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Radius beyond which |V| < 10⁻¹⁴.
    pub fn support_radius(&self) -> f64 {
        let amp = self.amplitude();
        if amp < SUPPORT_THRESHOLD {
            return 0.0;
        }
        match &self.form {
            PotentialForm::Zero => 0.0,
            PotentialForm::Gaussian { a, .. } => a * (amp / SUPPORT_THRESHOLD).ln().sqrt(),
            PotentialForm::SphericalWell { a, .. } => *a,
            PotentialForm::Exponential { a, .. } => a * (amp / SUPPORT_THRESHOLD).ln(),
            PotentialForm::Table { r, v } => {
                let last = v.iter().rposition(|x| x.abs() >= SUPPORT_THRESHOLD).unwrap_or(0);
                r[(last + 1).min(r.len() - 1)]
            }
        }
    }

    /// Taylor coefficients (V(0), V'(0), V''(0)/2).
    fn taylor(&self) -> [f64; 3] {
        match &self.form {
            PotentialForm::Zero => [0.0; 3],
            PotentialForm::Gaussian { v0, a } => [*v0, 0.0, -v0 / (a * a)],
            PotentialForm::SphericalWell { v0, .. } => [*v0, 0.0, 0.0],
            PotentialForm::Exponential { v0, a } => [*v0, -v0 / a, v0 / (2.0 * a * a)],
            PotentialForm::Table { r, v } => {
                let s = (v[1] - v[0]) / (r[1] - r[0]);
                [v[0] - s * r[0], s, 0.0]
            }
        }
    }

    /// Radii where V jumps.
    fn discontinuities(&self) -> Vec<f64> {
        match &self.form {
            PotentialForm::SphericalWell { a, .. } => vec![*a],
            PotentialForm::Table { r, .. } => vec![*r.last().unwrap()],
            _ => Vec::new(),
        }
    }

    pub fn values(&self, grid: &RadialGrid) -> Vec<f64> {
        grid.nodes.iter().map(|&r| self.eval(r)).collect()
    }

    /// max_i |V(r_i)|·⟨r_i⟩⁶, the decay proxy constant.
    pub fn decay_constant(&self, grid: &RadialGrid) -> f64 {
        grid.nodes.iter().map(|&r| self.eval(r).abs() * (1.0 + r * r).powi(3)).fold(0.0, f64::max)
    }

    /// Whether V ≥ −1/(4r²) holds on the grid nodes.
    pub fn hardy_bounded(&self, grid: &RadialGrid) -> bool {
        grid.nodes.iter().all(|&r| self.eval(r) >= -0.25 / (r * r))
    }

    /// check_spectrum with the result cached per grid.
    pub fn checked(&self, grid: &RadialGrid, l_max: usize) -> SpectralReport {
        let key = vec![grid.r_max.to_bits(), grid.n_r as u64, l_max as u64];
        if let Ok(c) = self.cache.lock() {
            if let Some((k, rep)) = c.as_ref() {
                if *k == key {
                    return rep.clone();
                }
            }
        }
        let rep = check_spectrum(self, grid, l_max);
        if let Ok(mut c) = self.cache.lock() {
            *c = Some((key, rep.clone()));
        }
        rep
    }
}

/// Regular solution data for one (l, k).
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSolution {
    /// u on the radial nodes, normalized to cos δ ĵ_l(kr) − sin δ n̂_l(kr) past R_V.
    pub u: Vec<f64>,
    /// Phase shift folded into (−π/2, π/2].
    pub delta: f64,
    /// Relative disagreement of the matched asymptotic form between the two radii.
    pub wronskian_defect: f64,
}

struct Integrator<'a> {
    v: &'a Potential,
    l: usize,
    k2: f64,
    base_sub: usize,
    jumps: Vec<f64>,
}

impl Integrator<'_> {
    #[inline]
    fn rhs(&self, r: f64, vr: f64, u: f64) -> f64 {
        let ll = (self.l * (self.l + 1)) as f64;
        (ll / (r * r) + vr - self.k2) * u
    }

    fn rk4(&self, r0: f64, r1: f64, y: (f64, f64), nsub: usize, vmax: f64) -> (f64, f64) {
        let h = (r1 - r0) / nsub as f64;
        let (mut u, mut p) = y;
        let v = |r: f64| self.v.eval(r.min(vmax));
        for s in 0..nsub {
            let r = r0 + s as f64 * h;
            let rm = r + 0.5 * h;
            let re = if s + 1 == nsub { r1 } else { r + h };
            let (va, vm, ve) = (v(r), v(rm), v(re));
            let k1u = p;
            let k1p = self.rhs(r, va, u);
            let k2u = p + 0.5 * h * k1p;
            let k2p = self.rhs(rm, vm, u + 0.5 * h * k1u);
            let k3u = p + 0.5 * h * k2p;
            let k3p = self.rhs(rm, vm, u + 0.5 * h * k2u);
            let k4u = p + h * k3p;
            let k4p = self.rhs(re, ve, u + h * k3u);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        }
        (u, p)
    }

    /// Advances (u, u') from r0 to r1, splitting at jumps of V.
    fn cell(&self, r0: f64, r1: f64, mut y: (f64, f64)) -> (f64, f64) {
        let ll = ((self.l * (self.l + 1)) as f64).sqrt();
        let stiff = (10.0 * ll * (r1 - r0) / r0).ceil() as usize;
        let nsub = self.base_sub.max(stiff);
        let mut lo = r0;
        for &d in self.jumps.iter().filter(|&&d| d > r0 && d < r1) {
            let n = ((nsub as f64 * (d - lo) / (r1 - r0)).ceil() as usize).max(2);
            y = self.rk4(lo, d, y, n, d.next_down());
            lo = d;
        }
        let n = ((nsub as f64 * (r1 - lo) / (r1 - r0)).ceil() as usize).max(2);
        self.rk4(lo, r1, y, n, f64::INFINITY)
    }
}

/// Frobenius start u = r^{l+1} Σ c_n rⁿ and its derivative.
fn series_start(v: &Potential, l: usize, k2: f64, r: f64) -> (f64, f64) {
    let t = v.taylor();
    let mut c = [0.0f64; 12];
    c[0] = 1.0;
    for n in 2..c.len() {
        let mut s = -k2 * c[n - 2];
        for (m, tm) in t.iter().enumerate() {
            if n >= 2 + m {
                s += tm * c[n - 2 - m];
            }
        }
        c[n] = s / (n * (2 * l + n + 1)) as f64;
    }
    let lf = l as f64;
    let mut u = 0.0;
    let mut du = 0.0;
    for (n, cn) in c.iter().enumerate().rev() {
        let p = r.powi(n as i32);
        u += cn * p;
        du += cn * (n as f64 + lf + 1.0) * p;
    }
    let rl = r.powi(l as i32);
    (u * rl * r, du * rl)
}

/// Matching nodes (i₁, i₂) at R_V + 2 and R_V + 4.
pub fn matching_indices(v: &Potential, grid: &RadialGrid) -> Result<(usize, usize)> {
    let rv = v.support_radius();
    let i1 = grid.index_at_or_above(rv + 2.0);
    let i2 = grid.index_at_or_above(rv + 4.0);
    if i2 >= grid.n_r {
        return Err(Error::Config(format!(
            "matching radius {:.3} lies beyond r_max = {}; enlarge the radial grid",
            rv + 4.0,
            grid.r_max
        )));
    }
    Ok((i1, i2))
}

/// Integrates the regular solution outward and extracts δ_l(k).
pub fn solve_radial(v: &Potential, k: f64, l: usize, grid: &RadialGrid) -> Result<RadialSolution> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("solve_radial requires k > 0, got {k}")));
    }
    if v.is_zero() {
        return Ok(free_solution(k, l, grid));
    }
    let (i1, i2) = matching_indices(v, grid)?;
    let integ = Integrator {
        v,
        l,
        k2: k * k,
        base_sub: 8usize.max((k * grid.dr / 0.02).ceil() as usize),
        jumps: v.discontinuities(),
    };
    let nodes = &grid.nodes;
    let mut raw = vec![0.0; i2 + 1];
    let mut y = series_start(v, l, k * k, nodes[0]);
    raw[0] = y.0;
    let mut y1 = y;
    for i in 1..=i2 {
        y = integ.cell(nodes[i - 1], nodes[i], y);
        // Rescale to stay in range for the growing regular solution.
        let s = y.0.abs().max(y.1.abs() / k);
        if s > 1e200 {
            for x in raw[..i].iter_mut() {
                *x /= s;
            }
            y1.0 /= s;
            y1.1 /= s;
            y.0 /= s;
            y.1 /= s;
        }
        raw[i] = y.0;
        if i == i1 {
            y1 = y;
        }
    }
    let ab = |r: f64, (u, p): (f64, f64)| {
        let rb = Riccati::eval(l, k * r);
        let a = (u * k * rb.dn[l] - p * rb.n[l]) / k;
        let b = -(u * k * rb.dj[l] - p * rb.j[l]) / k;
        (a, b)
    };
    let (a1, b1) = ab(nodes[i1], y1);
    let (a2, b2) = ab(nodes[i2], y);
    let amp1 = a1.hypot(b1);
    let amp2 = a2.hypot(b2);
    if !(amp1 > 0.0) || !(amp2 > 0.0) || !amp1.is_finite() || !amp2.is_finite() {
        return Err(Error::Numeric(format!(
            "degenerate phase match at l={l}, k={k}; refine dr = {} or shift k_max",
            grid.dr
        )));
    }
    let (a, b) = (0.5 * (a1 + a2), 0.5 * (b1 + b2));
    let amp = a.hypot(b);
    let wronskian_defect = (a1 - a2).hypot(b1 - b2) / amp;
    let mut delta = (-b).atan2(a);
    let mut sign = 1.0;
    if delta > FRAC_PI_2 {
        delta -= PI;
        sign = -1.0;
    } else if delta <= -FRAC_PI_2 {
        delta += PI;
        sign = -1.0;
    }
    let scale = sign / amp;
    let (cd, sd) = (delta.cos(), delta.sin());
    let mut u = vec![0.0; grid.n_r];
    for (i, &r) in nodes.iter().enumerate() {
        if i <= i1 {
            u[i] = raw[i] * scale;
        } else {
            let (j, n) = riccati_jn(l, k * r);
            u[i] = cd * j - sd * n;
        }
    }
    Ok(RadialSolution { u, delta, wronskian_defect })
}

fn free_solution(k: f64, l: usize, grid: &RadialGrid) -> RadialSolution {
    let u = grid.nodes.iter().map(|&r| riccati_jn(l, k * r).0).collect();
    RadialSolution { u, delta: 0.0, wronskian_defect: 0.0 }
}

/// Per (l, k) regular solutions and phase shifts on the momentum grid.
#[derive(Clone, Debug)]
pub struct ScatteringTable {
    pub grids: Arc<Grids>,
    pub potential: Potential,
    pub l: usize,
    /// u_l(k_j, r_i)/(k_j r_i), stored `[(l n_k + j) n_r + i]`.
    pub uk: Vec<f64>,
    /// Folded phase shifts, `[l n_k + j]`.
    pub delta: Vec<f64>,
    /// Continuity-tracked phase shifts, anchored at k_max.
    pub delta_unwrapped: Vec<f64>,
    /// max Wronskian defect over the table.
    pub wronskian_defect: f64,
    pub free: bool,
}

impl ScatteringTable {
    pub fn n_k(&self) -> usize {
        self.grids.momentum.n_k
    }

    pub fn n_r(&self) -> usize {
        self.grids.radial.n_r
    }

    #[inline]
    pub fn row(&self, l: usize, j: usize) -> &[f64] {
        let (n_k, n_r) = (self.n_k(), self.n_r());
        let o = (l * n_k + j) * n_r;
        &self.uk[o..o + n_r]
    }

    #[inline]
    pub fn delta(&self, l: usize, j: usize) -> f64 {
        self.delta[l * self.n_k() + j]
    }

    pub fn delta_unwrapped(&self, l: usize, j: usize) -> f64 {
        self.delta_unwrapped[l * self.n_k() + j]
    }

    /// Max jump of the unwrapped phase between adjacent nodes.
    pub fn max_phase_jump(&self) -> f64 {
        let n = self.n_k();
        (0..=self.l)
            .flat_map(|l| (1..n).map(move |j| (l, j)))
            .map(|(l, j)| (self.delta_unwrapped(l, j) - self.delta_unwrapped(l, j - 1)).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `l,k,delta,delta_unwrapped` rows.
    pub fn write_delta_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "l,k,delta,delta_unwrapped")?;
        for l in 0..=self.l {
            for (j, k) in self.grids.momentum.nodes.iter().enumerate() {
                writeln!(w, "{},{},{},{}", l, k, self.delta(l, j), self.delta_unwrapped(l, j))?;
            }
        }
        Ok(())
    }

    /// Raw little-endian dump of (uk, delta, delta_unwrapped) for caching.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.uk.len() + 2 * self.delta.len() + 4));
        for x in [self.l as f64, self.uk.len() as f64, self.delta.len() as f64, self.wronskian_defect] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in self.uk.iter().chain(&self.delta).chain(&self.delta_unwrapped) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(grids: &Arc<Grids>, potential: &Potential, bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Shape("corrupt scattering-table cache".into());
        if bytes.len() % 8 != 0 || bytes.len() < 32 {
            return Err(bad());
        }
        let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let l = vals[0] as usize;
        let nu = vals[1] as usize;
        let nd = vals[2] as usize;
        if vals.len() != 4 + nu + 2 * nd || nu != (l + 1) * grids.momentum.n_k * grids.radial.n_r || nd != (l + 1) * grids.momentum.n_k {
            return Err(bad());
        }
        Ok(ScatteringTable {
            grids: grids.clone(),
            potential: potential.clone(),
            l,
            uk: vals[4..4 + nu].to_vec(),
            delta: vals[4 + nu..4 + nu + nd].to_vec(),
            delta_unwrapped: vals[4 + nu + nd..].to_vec(),
            wronskian_defect: vals[3],
            free: potential.is_zero(),
        })
    }
}

/// Solves every (l ≤ L_max, k_j). Refuses potentials failing H2/generic checks unless `allow_unsafe`.
pub fn build_scattering_table(v: &Potential, grids: &Arc<Grids>, allow_unsafe: bool) -> Result<ScatteringTable> {
    let l_max = grids.l_max();
    if !allow_unsafe && !v.is_zero() {
        let rep = v.checked(&grids.radial, l_max);
        if !rep.h2_ok || !rep.generic_ok {
            return Err(Error::Config(format!(
                "potential fails spectral checks (bound states {:?}, resonance score {:.3e}); pass the unsafe override to proceed",
                rep.bound_state_count_per_l, rep.resonance_score
            )));
        }
    }
    let (n_k, n_r) = (grids.momentum.n_k, grids.radial.n_r);
    let mut uk = vec![0.0; (l_max + 1) * n_k * n_r];
    let mut delta = vec![0.0; (l_max + 1) * n_k];
    let mut wdef: f64 = 0.0;
    for l in 0..=l_max {
        for (j, &k) in grids.momentum.nodes.iter().enumerate() {
            let sol = solve_radial(v, k, l, &grids.radial).map_err(|e| Error::Channel { l, k, source: Box::new(e) })?;
            let o = (l * n_k + j) * n_r;
            for (i, (&u, &r)) in sol.u.iter().zip(&grids.radial.nodes).enumerate() {
                uk[o + i] = u / (k * r);
            }
            delta[l * n_k + j] = sol.delta;
            wdef = wdef.max(sol.wronskian_defect);
        }
    }
    let delta_unwrapped = unwrap_phases(&delta, l_max, n_k);
    Ok(ScatteringTable {
        grids: grids.clone(),
        potential: v.clone(),
        l: l_max,
        uk,
        delta,
        delta_unwrapped,
        wronskian_defect: wdef,
        free: v.is_zero(),
    })
}

/// Removes π ambiguities, walking downward from k_max.
fn unwrap_phases(delta: &[f64], l_max: usize, n_k: usize) -> Vec<f64> {
    let mut out = delta.to_vec();
    for l in 0..=l_max {
        let ch = &mut out[l * n_k..(l + 1) * n_k];
        for j in (0..n_k - 1).rev() {
            let prev = ch[j + 1];
            let m = ((prev - ch[j]) / PI).round();
            ch[j] += m * PI;
        }
    }
    out
}

/// The distorted plane wave e(x; k ẑ) = Σ_l (2l+1) iˡ e^{iδ_l} u_l/(kr) P_l(cosθ).
pub fn distorted_plane_wave(v: &Potential, k: f64, grids: &Arc<Grids>, l: usize) -> Result<AxisymmetricField> {
    let mg = &grids.momentum;
    if !(k >= mg.k_min() && k <= mg.k_max) {
        return Err(Error::Range(format!("k = {k} outside [{}, {}]", mg.k_min(), mg.k_max)));
    }
    let mut out = AxisymmetricField::zeros(grids, l);
    let n_r = grids.radial.n_r;
    for ll in 0..=l {
        let sol = solve_radial(v, k, ll, &grids.radial)?;
        let c = Complex64::new(0.0, 1.0).powu(ll as u32) * Complex64::from_polar((2 * ll + 1) as f64, sol.delta);
        for i in 0..n_r {
            out.data[ll * n_r + i] = c * (sol.u[i] / (k * grids.radial.nodes[i]));
        }
    }
    Ok(out)
}

/// (−Δ + V) f by a fourth-order stencil on g = r f_l with parity ghosts at the origin.
pub fn apply_hamiltonian(f: &AxisymmetricField, v: &Potential) -> AxisymmetricField {
    let g = &f.grids.radial;
    let n = g.n_r;
    let h2 = 12.0 * g.dr * g.dr;
    let vv = v.values(g);
    let mut out = AxisymmetricField::zeros(&f.grids, f.l);
    for l in 0..=f.l {
        let ch = f.channel(l);
        let parity = if l % 2 == 0 { -1.0 } else { 1.0 };
        let gv = |i: isize| -> Complex64 {
            if i < 0 {
                let m = (-i - 1) as usize;
                ch[m] * (g.nodes[m] * parity)
            } else if (i as usize) < n {
                ch[i as usize] * g.nodes[i as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        let ll = (l * (l + 1)) as f64;
        let o = out.channel_mut(l);
        for i in 0..n {
            let ii = i as isize;
            let d2 = (-gv(ii - 2) + gv(ii - 1) * 16.0 - gv(ii) * 30.0 + gv(ii + 1) * 16.0 - gv(ii + 2)) / h2;
            let r = g.nodes[i];
            o[i] = -d2 / r + ch[i] * (ll / (r * r) + vv[i]);
        }
    }
    out
}

/// Zero-energy spectral diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub bound_state_count_per_l: Vec<usize>,
    pub resonance_score: f64,
    pub h2_ok: bool,
    pub generic_ok: bool,
    pub hardy_bounded: bool,
    pub decay_constant: f64,
}

/// Zero-energy solution (u, u') at nodes up to R_V + 2, node count included.
fn zero_energy(v: &Potential, l: usize, grid: &RadialGrid) -> (usize, f64, (f64, f64)) {
    let rv = v.support_radius();
    let iend = grid.index_at_or_above(rv + 2.0).min(grid.n_r - 1);
    let integ = Integrator { v, l, k2: 0.0, base_sub: 8, jumps: v.discontinuities() };
    let mut y = series_start(v, l, 0.0, grid.nodes[0]);
    let mut nodes = 0;
    for i in 1..=iend {
        let prev = y.0;
        y = integ.cell(grid.nodes[i - 1], grid.nodes[i], y);
        if prev != 0.0 && (y.0 == 0.0 || (y.0 > 0.0) != (prev > 0.0)) {
            nodes += 1;
        }
        let s = y.0.abs().max(y.1.abs());
        if s > 1e200 {
            y.0 /= s;
            y.1 /= s;
        }
    }
    (nodes, grid.nodes[iend], y)
}

/// Sturm node counts per channel and the l = 0 zero-resonance score.
pub fn check_spectrum(v: &Potential, grid: &RadialGrid, l_max: usize) -> SpectralReport {
    let mut counts = Vec::with_capacity(l_max + 1);
    let mut score = f64::INFINITY;
    for l in 0..=l_max {
        let (mut n, r, (u, p)) = zero_energy(v, l, grid);
        // Exterior: u = A r^{l+1} + B r^{−l}; an extra node sits past R iff −B/A > R^{2l+1}.
        let lf = l as f64;
        let a = (lf * u + r * p) / ((2.0 * lf + 1.0) * r.powi(l as i32 + 1));
        let b = ((lf + 1.0) * u - r * p) * r.powi(l as i32) / (2.0 * lf + 1.0);
        if a != 0.0 && -b / a > r.powi(2 * l as i32 + 1) {
            n += 1;
        }
        if l == 0 {
            score = if u == 0.0 { f64::INFINITY } else { (r * p / u).abs() };
        }
        counts.push(n);
    }
    let total: usize = counts.iter().sum();
    SpectralReport {
        bound_state_count_per_l: counts,
        resonance_score: score,
        h2_ok: total == 0,
        generic_ok: score >= RESONANCE_THRESHOLD,
        hardy_bounded: v.hardy_bounded(grid),
        decay_constant: v.decay_constant(grid),
    }
}

/// sup over a fixed smooth family of the relative Plancherel defect.
pub fn completeness_defect(table: &ScatteringTable) -> Result<f64> {
    let grids = &table.grids;
    let mut worst: f64 = 0.0;
    let family: [&dyn Fn(f64) -> f64; 4] = [
        &|r: f64| (-r * r / 2.0).exp(),
        &|r: f64| (-r * r).exp(),
        &|r: f64| (-r * r / 4.5).exp(),
        &|r: f64| r * r * (-r * r / 2.0).exp(),
    ];
    for f in family {
        let field = AxisymmetricField::radial(grids, f);
        let fs = crate::transform::forward(&field, table)?;
        let a = field.norm2().powi(2);
        let b = fs.norm2().powi(2);
        worst = worst.max((a - b).abs() / a);
    }
    Ok(worst)
}
