//! The channel-0 kernel M(k₁, k₂, k₃) = c ∫₀^∞ E₀(k₁,r)E₀(k₂,r)E₀(k₃,r) r² dr,
//! E₀ = e^{iδ₀}u₀/(kr), with c fixed so that ∫fgh dx = ∫∫∫ M f♯g♯h♯ Π k_i² dk_i.

use crate::error::{Error, Result};
use crate::grids::{triple_integral, Grids, SpectralField};
use crate::scattering::{matching_indices, ScatteringTable};
use crate::special::exp_over_r_tail;
use crate::transform::inverse;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// c = 4π (2/π)^{3/2}: the angular average of e(x, ξ) times three synthesis constants.
pub const M_CONSTANT: f64 = 4.0 * PI * 0.507_949_087_473_927_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MKernelMode {
    /// r-quadrature on the radial grid only.
    Truncated,
    /// Quadrature up to the support edge plus the exact sine-integral tail.
    Asymptotic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MKernelOptions {
    pub mode: MKernelMode,
    pub memory_budget_bytes: usize,
}

impl Default for MKernelOptions {
    fn default() -> Self {
        MKernelOptions { mode: MKernelMode::Asymptotic, memory_budget_bytes: 64 << 20 }
    }
}

#[derive(Clone, Debug)]
pub struct MKernel {
    pub grids: Arc<Grids>,
    pub n_k: usize,
    pub constant: f64,
    pub mode: MKernelMode,
    /// Radius where the quadrature hands over to the analytic tail.
    pub split_radius: f64,
    /// `data[(i n_k + j) n_k + m]`
    pub data: Vec<Complex64>,
}

impl MKernel {
    #[inline]
    pub fn get(&self, i: usize, j: usize, m: usize) -> Complex64 {
        self.data[(i * self.n_k + j) * self.n_k + m]
    }

    /// max |M(i,j,m) − M(σ(i,j,m))| over all permutations σ.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n_k;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let v = self.get(i, j, m);
                    for w in [self.get(j, i, m), self.get(i, m, j), self.get(m, j, i), self.get(j, m, i), self.get(m, i, j)] {
                        worst = worst.max((v - w).norm());
                    }
                }
            }
        }
        worst
    }

    /// Σ a(k₁)b(k₂)c(k₃) M Π k_i² w_i.
    pub fn contract(&self, a: &[Complex64], b: &[Complex64], c: &[Complex64]) -> Result<Complex64> {
        let n = self.n_k;
        if a.len() != n || b.len() != n || c.len() != n {
            return Err(Error::Shape("contraction vectors must have n_k entries".into()));
        }
        let mg = &self.grids.momentum;
        let w: Vec<f64> = mg.nodes.iter().zip(&mg.weights).map(|(k, v)| k * k * v).collect();
        let cw: Vec<Complex64> = c.iter().zip(&w).map(|(x, y)| x * y).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let ai = a[i] * w[i];
            for j in 0..n {
                let abij = ai * b[j] * w[j];
                let row = &self.data[(i * n + j) * n..(i * n + j + 1) * n];
                let s: Complex64 = row.iter().zip(&cw).map(|(x, y)| x * y).sum();
                acc += abij * s;
            }
        }
        Ok(acc)
    }

    /// Little-endian f64 stream: n_k, mode, split radius, constant, then (re, im) pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mode = if self.mode == MKernelMode::Asymptotic { 1.0 } else { 0.0 };
        let mut out = Vec::with_capacity(16 * self.data.len() + 32);
        for x in [self.n_k as f64, mode, self.split_radius, self.constant] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(grids: &Arc<Grids>, bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Shape("corrupt M-kernel cache".into());
        if bytes.len() % 8 != 0 || bytes.len() < 32 {
            return Err(bad());
        }
        let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let n = v[0] as usize;
        if n != grids.momentum.n_k || v.len() != 4 + 2 * n * n * n {
            return Err(bad());
        }
        Ok(MKernel {
            grids: grids.clone(),
            n_k: n,
            constant: v[3],
            mode: if v[1] == 1.0 { MKernelMode::Asymptotic } else { MKernelMode::Truncated },
            split_radius: v[2],
            data: v[4..].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        })
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// ∫_R^∞ sin(κr + φ)/r dr. On a node with κ = 0 exactly the −sin φ·ln|κR|
/// singularity is replaced by its average over the cell |κ| < Δk/2.
fn sine_tail(kappa: f64, phase: f64, r: f64, on_plane: bool, dk: f64) -> f64 {
    if on_plane {
        return -phase.sin() * (EULER_GAMMA + (0.5 * r * dk).ln() - 1.0);
    }
    (Complex64::from_polar(1.0, phase) * exp_over_r_tail(kappa, r)).im
}

pub fn build_m_kernel(table: &ScatteringTable, opts: &MKernelOptions) -> Result<MKernel> {
    let grids = &table.grids;
    let (n, n_r) = (grids.momentum.n_k, grids.radial.n_r);
    let bytes = 16usize.saturating_mul(n.saturating_pow(3));
    if bytes > opts.memory_budget_bytes {
        let fit = ((opts.memory_budget_bytes / 16) as f64).cbrt().floor();
        return Err(Error::Memory(format!(
            "M kernel on n_k = {n} needs {} MiB, budget {} MiB; use a coarser momentum grid (n_k ≤ {fit})",
            bytes >> 20,
            opts.memory_budget_bytes >> 20
        )));
    }
    let rg = &grids.radial;
    let split = match opts.mode {
        MKernelMode::Truncated => n_r,
        MKernelMode::Asymptotic => matching_indices(&table.potential, rg)?.0,
    };
    let split_radius = split as f64 * rg.dr;
    let mg = &grids.momentum;
    let dk = mg.dk;
    // real radial parts u₀/(kr) on the quadrature nodes, with r²w folded into the last factor
    let rows: Vec<&[f64]> = (0..n).map(|j| &table.row(0, j)[..split]).collect();
    let rw: Vec<f64> = (0..split).map(|i| rg.nodes[i] * rg.nodes[i] * rg.weights[i]).collect();
    let u3: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&rw).map(|(a, b)| a * b).collect()).collect();
    let delta: Vec<f64> = (0..n).map(|j| table.delta(0, j)).collect();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n * n];
    let mut p = vec![0.0; split];
    for i in 0..n {
        for j in 0..n {
            for ((pv, a), b) in p.iter_mut().zip(rows[i]).zip(rows[j]) {
                *pv = a * b;
            }
            for m in 0..n {
                let mut s: f64 = p.iter().zip(&u3[m]).map(|(a, b)| a * b).sum();
                if opts.mode == MKernelMode::Asymptotic {
                    let (k1, k2, k3) = (mg.nodes[i], mg.nodes[j], mg.nodes[m]);
                    let (d1, d2, d3) = (delta[i], delta[j], delta[m]);
                    let (a, b, c) = (i as i64 + 1, j as i64 + 1, m as i64 + 1);
                    let r = split_radius;
                    // sin A sin B sin C = ¼[sin(A+B−C) + sin(A−B+C) + sin(−A+B+C) − sin(A+B+C)]
                    let t = sine_tail(k1 + k2 - k3, d1 + d2 - d3, r, a + b == c, dk)
                        + sine_tail(k1 - k2 + k3, d1 - d2 + d3, r, a + c == b, dk)
                        + sine_tail(-k1 + k2 + k3, -d1 + d2 + d3, r, b + c == a, dk)
                        - sine_tail(k1 + k2 + k3, d1 + d2 + d3, r, false, dk);
                    s += 0.25 * t / (k1 * k2 * k3);
                }
                data[(i * n + j) * n + m] = Complex64::from_polar(M_CONSTANT * s, delta[i] + delta[j] + delta[m]);
            }
        }
    }
    Ok(MKernel { grids: grids.clone(), n_k: n, constant: M_CONSTANT, mode: opts.mode, split_radius, data })
}

/// ∫ (F♯⁻¹φ₁)(F♯⁻¹φ₂)(F♯⁻¹φ₃) dx on the radial grid, for channel-0 spectra.
pub fn weak_form_physical(phi: [&SpectralField; 3], table: &ScatteringTable) -> Result<Complex64> {
    let f: Vec<_> = phi.iter().map(|p| inverse(&p.with_l(0), table)).collect::<Result<_>>()?;
    triple_integral(&f[0], &f[1], &f[2])
}
