//! Symbol separation: dyadic blocks expanded in finite Fourier series, and a
//! global Tucker factorization of log-sampled symbol values.

use super::{sample_indices, BlockMeta, SeparableSymbol, SymbolFn, Term};
use crate::error::{Error, Result};
use crate::grids::Grids;
use crate::special::smooth_step;
use crate::transform::{phi, psi, MultiplierSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMethod {
    Dyadic,
    Global,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationOptions {
    /// Period K of the block Fourier series.
    pub period: f64,
    /// Fourier modes kept per variable, |n_i| ≤ n_max.
    pub n_max: i32,
    pub budget: usize,
    /// DFT samples per period.
    pub samples: usize,
    /// Momentum nodes per axis of the validation cube.
    pub validation: usize,
    /// Log-spaced sample nodes per axis for the global factorization.
    pub tucker_nodes: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions { period: 5.0, n_max: 6, budget: 10_000, samples: 64, validation: 24, tucker_nodes: 40 }
    }
}

/// Separates m and fails with the best achieved error when tol is out of reach.
pub fn separate_symbol(m: &SymbolFn, method: SeparationMethod, tol: f64, grids: &Arc<Grids>, opts: &SeparationOptions) -> Result<SeparableSymbol> {
    let s = separate_symbol_unchecked(m, method, tol, grids, opts)?;
    if s.reconstruction_error > tol {
        return Err(Error::BudgetExceeded { budget: opts.budget, best_error: s.reconstruction_error });
    }
    Ok(s)
}

/// Separates m within the budget without enforcing tol.
pub fn separate_symbol_unchecked(
    m: &SymbolFn,
    method: SeparationMethod,
    tol: f64,
    grids: &Arc<Grids>,
    opts: &SeparationOptions,
) -> Result<SeparableSymbol> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut s = match method {
        SeparationMethod::Dyadic => dyadic(m, tol, grids, opts)?,
        SeparationMethod::Global => global(m, tol, grids, opts)?,
        SeparationMethod::Explicit => return Err(Error::Config("explicit symbols are built with SeparableSymbol::product".into())),
    };
    s.reconstruction_error = s.error_against(m, &sample_indices(grids.momentum.n_k, opts.validation));
    Ok(s)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Cutoff {
    /// Φ(k/N)
    Band,
    /// Ψ(2k/N) = P_{<N}
    Below,
    /// Ψ(k/N) = P_{≤N}
    UpTo,
}

impl Cutoff {
    fn eval(self, s: f64) -> f64 {
        match self {
            Cutoff::Band => phi(s),
            Cutoff::Below => psi(2.0 * s),
            Cutoff::UpTo => psi(s),
        }
    }

    fn support_end(self) -> f64 {
        match self {
            Cutoff::Below => 1.0,
            _ => 2.0,
        }
    }
}

/// ∫₀ˣ smooth_step, x ∈ [0, 1].
fn step_integral(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 {
        return 0.0;
    }
    let n = 256;
    let h = x / n as f64;
    let mut s = smooth_step(0.0) + smooth_step(x);
    for i in 1..n {
        s += smooth_step(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Identity on the cutoff support, flattened smoothly to plateaus so the even
/// K-periodic extension of m(N·fold) is smooth away from the minor-variable origin.
fn fold(c: Cutoff, sigma: f64, half: f64) -> f64 {
    let b = c.support_end();
    let w = half - b;
    if sigma > b {
        return b + w * ((sigma - b) / w - step_integral((sigma - b) / w));
    }
    if c == Cutoff::Band && sigma < 0.5 {
        // σ ≤ 1/4 sits on the plateau 3/8
        return 0.5 - 0.25 * (0.5 - step_integral((sigma - 0.25) / 0.25));
    }
    sigma
}

fn block_cutoffs(vars: usize, largest: usize) -> [Cutoff; 3] {
    let mut c = [Cutoff::UpTo; 3];
    for (i, ci) in c.iter_mut().enumerate().take(vars) {
        *ci = match i.cmp(&largest) {
            std::cmp::Ordering::Less => Cutoff::Below,
            std::cmp::Ordering::Equal => Cutoff::Band,
            std::cmp::Ordering::Greater => Cutoff::UpTo,
        };
    }
    c
}

/// Fourier coefficients a(n), |n_i| ≤ n_max, of G(t) = m(N fold(|t|)) on the period cell.
fn block_coefficients(m: &SymbolFn, scale: f64, cut: [Cutoff; 3], opts: &SeparationOptions) -> Vec<Complex64> {
    let d = m.vars;
    let mm = opts.samples;
    let k = opts.period;
    let nd = (2 * opts.n_max + 1) as usize;
    let len3 = if d == 3 { mm } else { 1 };
    let axis = |c: Cutoff| -> Vec<f64> {
        (0..mm)
            .map(|j| {
                let t = j as f64 * k / mm as f64;
                scale * fold(c, t.min(k - t), 0.5 * k)
            })
            .collect()
    };
    let (x1, x2) = (axis(cut[0]), axis(cut[1]));
    let x3 = if d == 3 { axis(cut[2]) } else { vec![0.0] };
    let e = |len: usize| -> Vec<Vec<Complex64>> {
        (0..nd)
            .map(|ni| {
                let n = ni as f64 - opts.n_max as f64;
                (0..len).map(|j| Complex64::from_polar(1.0 / len as f64, -2.0 * PI * n * j as f64 / len as f64)).collect()
            })
            .collect()
    };
    let (e12, e3) = (e(mm), e(len3));
    let n3 = if d == 3 { nd } else { 1 };
    let off3 = if d == 3 { 0 } else { opts.n_max as usize };
    let zero = Complex64::new(0.0, 0.0);
    // a1[j1][j2][n3]
    let mut a1 = vec![zero; mm * mm * n3];
    let mut g = vec![0.0; len3];
    for j1 in 0..mm {
        for j2 in 0..mm {
            for (j3, gv) in g.iter_mut().enumerate() {
                *gv = m.eval(x1[j1], x2[j2], x3[j3]);
            }
            for q in 0..n3 {
                let row = &e3[q + off3];
                a1[(j1 * mm + j2) * n3 + q] = g.iter().zip(row).map(|(a, b)| b * a).sum();
            }
        }
    }
    let mut a2 = vec![zero; mm * nd * n3];
    for j1 in 0..mm {
        for p in 0..nd {
            for q in 0..n3 {
                let mut s = zero;
                for j2 in 0..mm {
                    s += a1[(j1 * mm + j2) * n3 + q] * e12[p][j2];
                }
                a2[(j1 * nd + p) * n3 + q] = s;
            }
        }
    }
    let mut out = vec![zero; nd * nd * n3];
    for o in 0..nd {
        for p in 0..nd {
            for q in 0..n3 {
                let mut s = zero;
                for j1 in 0..mm {
                    s += a2[(j1 * nd + p) * n3 + q] * e12[o][j1];
                }
                out[(o * nd + p) * n3 + q] = s;
            }
        }
    }
    out
}

/// Least-squares slope of ln max|a| over ℓ¹ shells against ln(1 + s), s ≥ 1.
pub fn decay_exponent(coeffs: &[([i32; 3], f64)]) -> Option<f64> {
    let mut shells: BTreeMap<i32, f64> = BTreeMap::new();
    for (n, a) in coeffs {
        let s = n.iter().map(|v| v.abs()).sum::<i32>();
        let e = shells.entry(s).or_insert(0.0);
        *e = e.max(*a);
    }
    let top = shells.get(&0).copied().unwrap_or(0.0).max(shells.values().cloned().fold(0.0, f64::max));
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .filter(|(s, a)| **s >= 1 && **a > 1e-14 * top)
        .map(|(s, a)| ((1.0 + *s as f64).ln(), a.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn dyadic(m: &SymbolFn, tol: f64, grids: &Arc<Grids>, opts: &SeparationOptions) -> Result<SeparableSymbol> {
    if opts.period <= 4.0 {
        return Err(Error::Config(format!("period K = {} must exceed 4 to hold the cutoff supports", opts.period)));
    }
    let d = m.vars;
    let mg = &grids.momentum;
    // Σ_N over [N_lo, N_hi] telescopes to Ψ(k/N_hi)·… − Ψ(2k/N_lo)·… = 1 on the grid.
    let j_lo = mg.k_min().log2().floor() as i32;
    let j_hi = mg.k_max.log2().ceil() as i32;
    let nd = (2 * opts.n_max + 1) as i32;
    struct Cand {
        a: Complex64,
        block: BlockMeta,
        cut: [Cutoff; 3],
        j: i32,
    }
    let mut cands = Vec::new();
    let mut all = Vec::new();
    for j in j_lo..=j_hi {
        let scale = 2f64.powi(j);
        for largest in 0..d {
            let cut = block_cutoffs(d, largest);
            let coef = block_coefficients(m, scale, cut, opts);
            let n3 = if d == 3 { nd } else { 1 };
            for (idx, a) in coef.into_iter().enumerate() {
                let idx = idx as i32;
                let modes = [
                    idx / (nd * n3) - opts.n_max,
                    (idx / n3) % nd - opts.n_max,
                    if d == 3 { idx % n3 - opts.n_max } else { 0 },
                ];
                all.push((modes, a.norm()));
                if a.norm() >= 1e-3 * tol {
                    cands.push(Cand { a, block: BlockMeta { scale, largest, modes }, cut, j });
                }
            }
        }
    }
    cands.sort_by(|x, y| y.a.norm().total_cmp(&x.a.norm()));
    cands.truncate(opts.budget);
    let mut factors: [Vec<MultiplierSpec>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut keys: HashMap<(usize, i32, Cutoff, i32), usize> = HashMap::new();
    let mut terms = Vec::with_capacity(cands.len());
    for c in &cands {
        let mut idx = [0usize; 3];
        for slot in 0..3 {
            if slot >= d {
                if factors[slot].is_empty() {
                    factors[slot].push(MultiplierSpec::real(grids, |_| 1.0));
                }
                continue;
            }
            let key = (slot, c.j, c.cut[slot], c.block.modes[slot]);
            idx[slot] = *keys.entry(key).or_insert_with(|| {
                let (cut, n, scale) = (c.cut[slot], c.block.modes[slot] as f64, c.block.scale);
                factors[slot].push(MultiplierSpec::from_fn(grids, |k| {
                    Complex64::from_polar(cut.eval(k / scale), 2.0 * PI * n * k / (opts.period * scale))
                }));
                factors[slot].len() - 1
            });
        }
        terms.push(Term { a: c.a, idx, block: Some(c.block) });
    }
    Ok(SeparableSymbol {
        grids: grids.clone(),
        vars: d,
        method: SeparationMethod::Dyadic,
        factors,
        terms,
        reconstruction_error: f64::NAN,
        decay_exponent: decay_exponent(&all),
    })
}

/// T ×_mode A for a flat 3-tensor with dims `dims`; A is (rows × dims[mode]).
fn mode_product(t: &[f64], dims: [usize; 3], mode: usize, a: &DMatrix<f64>) -> (Vec<f64>, [usize; 3]) {
    let mut nd = dims;
    nd[mode] = a.nrows();
    let mut out = vec![0.0; nd[0] * nd[1] * nd[2]];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = t[(i * dims[1] + j) * dims[2] + k];
                if v == 0.0 {
                    continue;
                }
                let src = [i, j, k][mode];
                for r in 0..nd[mode] {
                    let mut o = [i, j, k];
                    o[mode] = r;
                    out[(o[0] * nd[1] + o[1]) * nd[2] + o[2]] += a[(r, src)] * v;
                }
            }
        }
    }
    (out, nd)
}

/// Mode-`mode` unfolding: rows index that mode, columns the rest in flat order.
fn unfold(t: &[f64], dims: [usize; 3], mode: usize) -> DMatrix<f64> {
    let rest = dims[0] * dims[1] * dims[2] / dims[mode];
    let mut out = DMatrix::zeros(dims[mode], rest);
    let mut col = vec![0usize; dims[mode]];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let r = [i, j, k][mode];
                out[(r, col[r])] = t[(i * dims[1] + j) * dims[2] + k];
                col[r] += 1;
            }
        }
    }
    out
}

fn global(m: &SymbolFn, tol: f64, grids: &Arc<Grids>, opts: &SeparationOptions) -> Result<SeparableSymbol> {
    let d = m.vars;
    let mg = &grids.momentum;
    let ns = opts.tucker_nodes.max(2);
    let (lo, hi) = (mg.k_min(), mg.k_max);
    let s: Vec<f64> = (0..ns).map(|j| lo * (hi / lo).powf(j as f64 / (ns - 1) as f64)).collect();
    let dims = [ns, ns, if d == 3 { ns } else { 1 }];
    let s3 = if d == 3 { s.clone() } else { vec![0.0] };
    let mut t = vec![0.0; dims[0] * dims[1] * dims[2]];
    for a in 0..dims[0] {
        for b in 0..dims[1] {
            for c in 0..dims[2] {
                let v = m.eval(s[a], s[b], s3[c]);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("symbol {} is not finite at ({}, {}, {})", m.name, s[a], s[b], s3[c])));
                }
                t[(a * dims[1] + b) * dims[2] + c] = v;
            }
        }
    }
    let cap = ((opts.budget as f64).powf(1.0 / d as f64) + 1e-9).floor().max(1.0) as usize;
    let mut us: Vec<DMatrix<f64>> = Vec::new();
    for mode in 0..3 {
        if dims[mode] == 1 {
            us.push(DMatrix::from_element(1, 1, 1.0));
            continue;
        }
        let x = unfold(&t, dims, mode);
        let eig = SymmetricEigen::new(&x * x.transpose());
        let mut order: Vec<usize> = (0..dims[mode]).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = lam.iter().sum();
        let mut r = 1;
        while r < cap.min(dims[mode]) && (lam[r..].iter().sum::<f64>() / total).sqrt() > 0.05 * tol {
            r += 1;
        }
        let mut u = DMatrix::zeros(dims[mode], r);
        for (c, &i) in order.iter().take(r).enumerate() {
            u.set_column(c, &eig.eigenvectors.column(i));
        }
        us.push(u);
    }
    let mut core = t.clone();
    let mut cd = dims;
    for mode in 0..3 {
        let (c, nd) = mode_product(&core, cd, mode, &us[mode].transpose());
        core = c;
        cd = nd;
    }
    // Nyström extension of each factor to every momentum node.
    let mut factors: [Vec<MultiplierSpec>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for mode in 0..3 {
        if dims[mode] == 1 {
            factors[mode].push(MultiplierSpec::real(grids, |_| 1.0));
            continue;
        }
        let pinv = unfold(&core, cd, mode)
            .transpose()
            .pseudo_inverse(1e-13 * core.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .map_err(|e| Error::Numeric(e.into()))?;
        let mut vals = vec![vec![Complex64::new(0.0, 0.0); mg.n_k]; cd[mode]];
        let mut sd = dims;
        sd[mode] = 1;
        for (j, &k) in mg.nodes.iter().enumerate() {
            let mut slice = vec![0.0; sd[0] * sd[1] * sd[2]];
            for a in 0..sd[0] {
                for b in 0..sd[1] {
                    for c in 0..sd[2] {
                        let mut x = [s[a], s[b], s3[c]];
                        x[mode] = k;
                        slice[(a * sd[1] + b) * sd[2] + c] = m.eval(x[0], x[1], x[2]);
                    }
                }
            }
            let mut y = slice;
            let mut yd = sd;
            for other in (0..3).filter(|&o| o != mode) {
                let (v, nd) = mode_product(&y, yd, other, &us[other].transpose());
                y = v;
                yd = nd;
            }
            let xv = &pinv * DMatrix::from_column_slice(y.len(), 1, &y);
            for (a, row) in vals.iter_mut().enumerate() {
                row[j] = Complex64::new(xv[(a, 0)], 0.0);
            }
        }
        factors[mode] = vals.into_iter().map(|values| MultiplierSpec { values }).collect();
    }
    let cmax = core.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut terms = Vec::new();
    for a in 0..cd[0] {
        for b in 0..cd[1] {
            for c in 0..cd[2] {
                let v = core[(a * cd[1] + b) * cd[2] + c];
                if v.abs() > 1e-15 * cmax {
                    terms.push(Term { a: Complex64::new(v, 0.0), idx: [a, b, c], block: None });
                }
            }
        }
    }
    Ok(SeparableSymbol {
        grids: grids.clone(),
        vars: d,
        method: SeparationMethod::Global,
        factors,
        terms,
        reconstruction_error: f64::NAN,
        decay_exponent: None,
    })
}
