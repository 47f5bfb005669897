use super::*;
use crate::grids::multiply_fields;
use crate::scattering::{build_scattering_table, Potential};
use crate::transform::{apply_multiplier, phi};
use std::f64::consts::PI;

fn setup(v: Potential, l_max: usize) -> (Arc<Grids>, ScatteringTable) {
    let g = Grids::new(40.0, 800, 8.0, 128, l_max).unwrap();
    let t = build_scattering_table(&v, &g, false).unwrap();
    (g, t)
}

fn gauss(g: &Arc<Grids>, s: f64, c: f64) -> AxisymmetricField {
    AxisymmetricField::radial(g, |r| c * (-r * r / (2.0 * s * s)).exp())
}

fn rel(a: &AxisymmetricField, b: &AxisymmetricField) -> f64 {
    a.sub(b).unwrap().norm2() / b.norm2()
}

#[test]
fn cm_constant_of_one_and_linear_ratio() {
    let g = Grids::new(40.0, 200, 8.0, 64, 0).unwrap();
    let one = SymbolFn::one(3).unwrap();
    assert!((cm_constant(&one, 2, &g).unwrap() - 1.0).abs() < 1e-12);
    let m = SymbolFn::named("linear_ratio").unwrap();
    let c = cm_constant(&m, 1, &g).unwrap();
    // analytic: s ∂₁m = (k₂+k₃)/s, s ∂₂m = −k₁/s, both below 1
    let idx = sample_indices(64, 20);
    let ks: Vec<f64> = idx.iter().map(|&j| g.momentum.nodes[j]).collect();
    let mut oracle: f64 = 0.0;
    for &a in &ks {
        for &b in &ks {
            for &cc in &ks {
                let s = a + b + cc;
                oracle = oracle.max(a / s).max((b + cc) / s).max(a / s);
            }
        }
    }
    assert!((c - oracle).abs() < 1e-5, "{c} vs {oracle}");
    let wide = Grids::new(40.0, 200, 16.0, 64, 0).unwrap();
    assert!((cm_constant(&m, 2, &wide).unwrap() - cm_constant(&m, 2, &g).unwrap()).abs() < 1e-4);
    let lin = SymbolFn::named("degree_one").unwrap();
    let r = cm_constant(&lin, 1, &wide).unwrap() / cm_constant(&lin, 1, &g).unwrap();
    assert!((r - 2.0).abs() < 1e-6, "{r}");
}

#[test]
fn separable_symbol_is_one_term() {
    let g = Grids::new(40.0, 200, 8.0, 64, 0).unwrap();
    let m = SymbolFn::new("sep", 3, |a, b, _| phi(a) * (-b * b).exp()).unwrap();
    let s = separate_symbol(&m, SeparationMethod::Global, 1e-10, &g, &SeparationOptions::default()).unwrap();
    assert_eq!(s.len(), 1);
    assert!(s.reconstruction_error <= 1e-12, "{}", s.reconstruction_error);
}

#[test]
fn dyadic_one_telescopes() {
    let g = Grids::new(40.0, 200, 8.0, 64, 0).unwrap();
    let s = separate_symbol(&SymbolFn::one(3).unwrap(), SeparationMethod::Dyadic, 1e-10, &g, &SeparationOptions::default()).unwrap();
    assert!(s.terms.iter().all(|t| t.block.unwrap().modes == [0, 0, 0]));
    let blocks: BTreeSet<(i64, usize)> = s.terms.iter().map(|t| ((t.block.unwrap().scale.log2()) as i64, t.block.unwrap().largest)).collect();
    assert_eq!(blocks.len(), s.len());
    assert!(s.reconstruction_error <= 1e-12, "{}", s.reconstruction_error);
}

#[test]
fn product_identity_and_bilinearity() {
    let (g, t) = setup(Potential::gaussian(1.0, 1.0).unwrap(), 0);
    let f = gauss(&g, 1.5, 1.0);
    let h = AxisymmetricField::radial(&g, |r| (1.0 + 0.5 * r * r) * (-r * r / 4.0).exp());
    let fg = multiply_fields(&f, &h).unwrap();
    let one = SymbolFn::one(3).unwrap();
    for method in [SeparationMethod::Dyadic, SeparationMethod::Global] {
        let s = separate_symbol(&one, method, 1e-10, &g, &SeparationOptions::default()).unwrap();
        let e = rel(&apply_t(&f, &h, &s, &t).unwrap(), &fg);
        assert!(e < 1e-6, "{method:?}: {e}");
    }
    let m = SymbolFn::named("quadratic_ratio").unwrap();
    let s = separate_symbol_unchecked(&m, SeparationMethod::Global, 1e-4, &g, &SeparationOptions::default()).unwrap();
    let f2 = gauss(&g, 0.8, 2.0);
    let al = Complex64::new(0.3, -1.2);
    let lhs = apply_t(&f.scale(al).add(&f2).unwrap(), &h, &s, &t).unwrap();
    let rhs = apply_t(&f, &h, &s, &t).unwrap().scale(al).add(&apply_t(&f2, &h, &s, &t).unwrap()).unwrap();
    assert!(rel(&lhs, &rhs) < 1e-10);
}

#[test]
fn free_separable_product_is_exact() {
    let (g, t) = setup(Potential::zero(), 1);
    let f = AxisymmetricField::from_channels(&g, 1, |l, r| Complex64::new(1.0, 0.2) * (-r * r / 2.0).exp() * r.powi(l as i32));
    let h = gauss(&g, 1.2, 1.0);
    let m1 = MultiplierSpec::real(&g, |k| (-k * k / 4.0).exp());
    let m2 = MultiplierSpec::real(&g, |k| 1.0 / (1.0 + k * k));
    let s = SeparableSymbol::product(&g, m1.clone(), m2.clone(), None);
    let a = apply_t(&f, &h, &s, &t).unwrap();
    let b = multiply_fields(&apply_multiplier(&f, &m1, &t).unwrap(), &apply_multiplier(&h, &m2, &t).unwrap()).unwrap();
    assert!(rel(&a, &b) < 1e-13);
}

#[test]
fn lambda_pairings() {
    let (g, t) = setup(Potential::gaussian(1.0, 1.0).unwrap(), 0);
    let (f, h, k) = (gauss(&g, 1.5, 1.0), gauss(&g, 1.1, 0.7), gauss(&g, 2.0, 1.3));
    let one = separate_symbol(&SymbolFn::one(3).unwrap(), SeparationMethod::Dyadic, 1e-10, &g, &SeparationOptions::default()).unwrap();
    let lam = trilinear_lambda(&f, &h, &k, &one, &t).unwrap();
    let direct = triple_integral(&f, &h, &k).unwrap();
    assert!((lam - direct).norm() < 1e-6 * direct.norm());
    let sym = SymbolFn::new("sym", 2, |a, b, _| a * b / (a * a + b * b)).unwrap();
    let s = separate_symbol(&sym, SeparationMethod::Global, 1e-9, &g, &SeparationOptions::default()).unwrap();
    let x = trilinear_lambda(&f, &h, &k, &s, &t).unwrap();
    let y = trilinear_lambda(&h, &f, &k, &s, &t).unwrap();
    assert!((x - y).norm() < 1e-8 * x.norm(), "{}", (x - y).norm() / x.norm());
    let r = holder_ratio(&f, &h, &separate_symbol(&SymbolFn::one(2).unwrap(), SeparationMethod::Global, 1e-10, &g, &SeparationOptions::default()).unwrap(), (4.0, 4.0, 2.0), &t).unwrap();
    assert!(r <= 1.0 + 1e-6, "{r}");
    assert!(matches!(holder_ratio(&f, &h, &s, (4.0, 4.0, 3.0), &t), Err(Error::Config(_))));
}

#[test]
fn free_kernel_matches_triangle() {
    let g = Grids::new(40.0, 800, 8.0, 48, 0).unwrap();
    let t = build_scattering_table(&Potential::zero(), &g, false).unwrap();
    let mk = build_m_kernel(&t, &MKernelOptions::default()).unwrap();
    assert!(mk.symmetry_defect() < 1e-10 * mk.data.iter().fold(0.0f64, |a, v| a.max(v.norm())));
    let inside = M_CONSTANT * PI / 4.0;
    let mut worst: f64 = 0.0;
    for i in 0..48 {
        for j in 0..48 {
            for m in 0..48 {
                let (a, b, c) = (i as i64 + 1, j as i64 + 1, m as i64 + 1);
                let gap = (a + b - c).min(a + c - b).min(b + c - a);
                let ks = g.momentum.nodes[i] * g.momentum.nodes[j] * g.momentum.nodes[m];
                let v = mk.get(i, j, m) * ks;
                if gap >= 2 {
                    worst = worst.max((v.re - inside).abs() / inside);
                } else if gap <= -2 {
                    worst = worst.max(v.re.abs() / inside);
                }
            }
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn kernel_weak_form_and_lambda() {
    // 2π/Δk must exceed r_max so the discrete synthesis has no alias inside the box
    let g = Grids::new(40.0, 800, 4.0, 128, 0).unwrap();
    let t = build_scattering_table(&Potential::gaussian(1.0, 1.0).unwrap(), &g, false).unwrap();
    let mk = build_m_kernel(&t, &MKernelOptions::default()).unwrap();
    let sp = |w: f64, c: f64| crate::grids::SpectralField::from_channels(&g, 0, |_, k| Complex64::new(c, 0.3) * (-k * k / w).exp());
    let (a, b, c) = (sp(1.0, 1.0), sp(1.2, 0.5), sp(0.8, -0.7));
    let tensor = mk.contract(a.channel(0), b.channel(0), c.channel(0)).unwrap();
    let phys = weak_form_physical([&a, &b, &c], &t).unwrap();
    assert!((tensor - phys).norm() < 1e-4 * phys.norm(), "{}", (tensor - phys).norm() / phys.norm());

    let (f, h, k) = (gauss(&g, 1.5, 1.0), gauss(&g, 1.6, 0.7), gauss(&g, 2.0, 1.3));
    let one = separate_symbol(&SymbolFn::one(3).unwrap(), SeparationMethod::Dyadic, 1e-10, &g, &SeparationOptions::default()).unwrap();
    let lam = trilinear_lambda(&f, &h, &k, &one, &t).unwrap();
    let (fs, hs, ks) = (forward(&f, &t).unwrap(), forward(&h, &t).unwrap(), forward(&k, &t).unwrap());
    let direct = mk.contract(fs.channel(0), hs.channel(0), ks.channel(0)).unwrap();
    assert!((lam - direct).norm() < 1e-4 * direct.norm(), "{}", (lam - direct).norm() / direct.norm());
}

#[test]
fn kernel_memory_budget() {
    let g = Grids::new(40.0, 200, 8.0, 256, 0).unwrap();
    let t = build_scattering_table(&Potential::zero(), &g, false).unwrap();
    assert!(matches!(build_m_kernel(&t, &MKernelOptions::default()), Err(Error::Memory(_))));
}

#[test]
fn identity_is_exact_without_potential() {
    let g = Grids::new(40.0, 800, 8.0, 128, 1).unwrap();
    let tables = Tables::new(&Potential::zero(), &g, false).unwrap();
    let f = AxisymmetricField::from_channels(&g, 1, |l, r| Complex64::new((-r * r / 2.0).exp() * (1.0 + r.powi(l as i32)), 0.0));
    let (h, k) = (gauss(&g, 1.2, 1.0), gauss(&g, 1.6, 0.8));
    let rep = derivative_identity_defect(&f, &h, &k, &tables).unwrap();
    assert!(rep.defect <= 1e-10, "{}", rep.defect);
    assert!(rep.lhs[0].abs() + rep.lhs[1].abs() > 0.0);
}

