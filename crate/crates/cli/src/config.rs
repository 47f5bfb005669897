//! Experiment configuration: one JSON document, validated before any compute.

use clap::ValueEnum;
use distorted::nls::{EvolveOptions, NLS_GRID};
use distorted::pseudoproduct::{MKernelOptions, SeparationOptions};
use distorted::scattering::PotentialForm;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("{field} = {value} is outside the safe range [{lo}, {hi}]; pass --unsafe to allow it")]
    Range { field: String, value: f64, lo: f64, hi: f64 },
    #[error("invalid exponent triple (p, q, r) = ({p}, {q}, {r}): need p, q, r ≥ 1 and 1/r = 1/p + 1/q")]
    Exponent { p: f64, q: f64, r: f64 },
    #[error("config experiment `{config}` does not match subcommand `{cli}`")]
    Experiment { config: String, cli: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectra,
    TransformCheck,
    Dispersive,
    Estimates,
    Identity,
    Mkernel,
    Nls,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectra => "spectra",
            Experiment::TransformCheck => "transform-check",
            Experiment::Dispersive => "dispersive",
            Experiment::Estimates => "estimates",
            Experiment::Identity => "identity",
            Experiment::Mkernel => "mkernel",
            Experiment::Nls => "nls",
        }
    }

    /// Grid each pipeline runs on unless the config overrides it.
    pub fn default_grid(self) -> GridSpec {
        match self {
            Experiment::Dispersive => GridSpec::new(200.0, 2000, 8.0, 512, 0),
            Experiment::Mkernel => GridSpec::new(40.0, 800, 8.0, 48, 0),
            Experiment::Estimates => GridSpec::new(40.0, 2000, 8.0, 256, 0),
            Experiment::Nls => {
                let (r_max, n_r, k_max, n_k, l_max) = NLS_GRID;
                GridSpec::new(r_max, n_r, k_max, n_k, l_max)
            }
            _ => GridSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub n_r: usize,
    pub k_max: f64,
    pub n_k: usize,
    pub l_max: usize,
}

impl GridSpec {
    pub const fn new(r_max: f64, n_r: usize, k_max: f64, n_k: usize, l_max: usize) -> Self {
        GridSpec { r_max, n_r, k_max, n_k, l_max }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(40.0, 2000, 8.0, 256, 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSpec {
    pub j: i32,
    pub k_mod: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec { j: 5, k_mod: 4.0 }
    }
}

/// Thresholds for every named check; defaults are the acceptance values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub plancherel: f64,
    pub inversion: f64,
    pub transform_seconds: f64,
    pub diagonalization: f64,
    pub phase_shift_well: f64,
    pub born: f64,
    pub unitarity: f64,
    pub intertwining: f64,
    pub dispersive_spread: f64,
    pub product_identity: f64,
    pub decay_exponent: f64,
    pub triangle: f64,
    pub kernel_symmetry: f64,
    pub weak_form: f64,
    pub holder_spread: f64,
    pub commutator_spread: f64,
    pub commutator_zero: f64,
    pub identity: f64,
    pub identity_gain: f64,
    pub strang_order: [f64; 2],
    pub duhamel: f64,
    pub duhamel_spectral: f64,
    pub slope_p6: f64,
    pub slope_p4: f64,
    pub slope_p2: f64,
    pub scattering: f64,
    pub x_norm: f64,
    pub nls_seconds: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            plancherel: 1e-6,
            inversion: 1e-6,
            transform_seconds: 60.0,
            diagonalization: 1e-4,
            phase_shift_well: 1e-6,
            born: 0.05,
            unitarity: 1e-6,
            intertwining: 1e-5,
            dispersive_spread: 3.0,
            product_identity: 1e-6,
            decay_exponent: -8.0,
            triangle: 1e-3,
            kernel_symmetry: 1e-10,
            weak_form: 1e-4,
            holder_spread: 10.0,
            commutator_spread: 5.0,
            commutator_zero: 1e-10,
            identity: 1e-3,
            identity_gain: 2.0,
            strang_order: [1.8, 2.2],
            duhamel: 1e-4,
            duhamel_spectral: 1e-2,
            slope_p6: 0.15,
            slope_p4: 0.15,
            slope_p2: 0.1,
            scattering: 1e-3,
            x_norm: 2.0,
            nls_seconds: 900.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersiveSpec {
    pub widths: Vec<f64>,
    pub modulations: Vec<f64>,
    /// Extra seeded random Gaussian mixtures added to the family.
    pub random_members: usize,
    pub times: Vec<f64>,
    pub intertwining_times: Vec<f64>,
    pub wave_grid: GridSpec,
}

impl Default for DispersiveSpec {
    fn default() -> Self {
        DispersiveSpec {
            widths: vec![0.75, 1.0, 1.5],
            modulations: vec![1.0, 2.0],
            random_members: 2,
            times: vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 14.0, 20.0],
            intertwining_times: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            wave_grid: GridSpec::new(200.0, 4000, 12.0, 768, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesSpec {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub symbols: Vec<String>,
    /// Dilations λ = 2^j for j in the range.
    pub holder_dilations: [i32; 2],
    pub commutator_dilations: [i32; 2],
    pub holder_grid: GridSpec,
    pub commutator_grid: GridSpec,
    pub commutator_exponent: f64,
    pub separation_tolerance: f64,
    pub holder_tolerance: f64,
}

impl Default for EstimatesSpec {
    fn default() -> Self {
        EstimatesSpec {
            p: 4.0,
            q: 4.0,
            r: 2.0,
            symbols: vec!["quadratic_ratio".into(), "bilinear_ratio".into(), "paraproduct".into()],
            holder_dilations: [-3, 3],
            commutator_dilations: [-2, 2],
            holder_grid: GridSpec::new(42.0, 1400, 42.0, 640, 0),
            commutator_grid: GridSpec::new(200.0, 4000, 12.0, 768, 1),
            commutator_exponent: 2.2,
            separation_tolerance: 1e-4,
            holder_tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub options: MKernelOptions,
    /// Needs 2π/Δk > r_max, so it differs from the triangle grid.
    pub weak_form_grid: GridSpec,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { options: MKernelOptions::default(), weak_form_grid: GridSpec::new(40.0, 800, 4.0, 128, 0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlsSpec {
    pub amplitude: f64,
    pub evolve: EvolveOptions,
    pub decay_window: [f64; 2],
    pub tail_start: f64,
    pub order_t_final: f64,
    pub order_dt: f64,
    /// Coarse momentum grid (k_max, n_k) for the spectral Duhamel route.
    pub spectral_k_max: f64,
    pub spectral_n_k: usize,
}

impl Default for NlsSpec {
    fn default() -> Self {
        NlsSpec {
            amplitude: 0.05,
            evolve: EvolveOptions::default(),
            decay_window: [2.0, 20.0],
            tail_start: 1.0,
            order_t_final: 1.0,
            order_dt: 0.01,
            spectral_k_max: 4.0,
            spectral_n_k: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub potential: PotentialForm,
    pub grid: Option<GridSpec>,
    pub ladder: LadderSpec,
    pub tolerances: Tolerances,
    pub output_dir: Option<String>,
    pub seed: u64,
    #[serde(rename = "unsafe")]
    pub allow_unsafe: bool,
    pub separation: SeparationOptions,
    pub mkernel: KernelSpec,
    pub dispersive: DispersiveSpec,
    pub estimates: EstimatesSpec,
    pub nls: NlsSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            potential: PotentialForm::Gaussian { v0: 1.0, a: 1.0 },
            grid: None,
            ladder: LadderSpec::default(),
            tolerances: Tolerances::default(),
            output_dir: None,
            seed: 0,
            allow_unsafe: false,
            separation: SeparationOptions::default(),
            mkernel: KernelSpec::default(),
            dispersive: DispersiveSpec::default(),
            estimates: EstimatesSpec::default(),
            nls: NlsSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
    }

    pub fn grid_for(&self, e: Experiment) -> GridSpec {
        self.grid.unwrap_or_else(|| e.default_grid())
    }

    /// Pins the experiment tag, then checks every numeric field.
    pub fn resolve(&mut self, e: Experiment) -> Result<(), ConfigError> {
        if let Some(c) = self.experiment {
            if c != e {
                return Err(ConfigError::Experiment { config: c.name().into(), cli: e.name().into() });
            }
        }
        self.experiment = Some(e);
        if self.grid.is_none() {
            self.grid = Some(e.default_grid());
        }
        self.validate(e)
    }

    pub fn validate(&self, e: Experiment) -> Result<(), ConfigError> {
        let es = &self.estimates;
        let exp_ok = [es.p, es.q, es.r].iter().all(|x| x.is_finite() && *x >= 1.0) && (1.0 / es.r - 1.0 / es.p - 1.0 / es.q).abs() < 1e-12;
        if !exp_ok {
            return Err(ConfigError::Exponent { p: es.p, q: es.q, r: es.r });
        }
        let mut v = Validator { ok_unsafe: self.allow_unsafe, first: None };
        v.grid("grid", &self.grid_for(e), &e.default_grid());
        let d = ExperimentConfig::default();
        match &self.potential {
            PotentialForm::Gaussian { v0, a } | PotentialForm::SphericalWell { v0, a } | PotentialForm::Exponential { v0, a } => {
                v.abs_upto("potential.v0", *v0, 10.0);
                v.within("potential.a", *a, 1.0);
            }
            PotentialForm::Zero | PotentialForm::Table { .. } => {}
        }
        v.within_int("ladder.j", self.ladder.j as f64, d.ladder.j as f64);
        v.within("ladder.k_mod", self.ladder.k_mod, d.ladder.k_mod);
        let (t, dt) = (&self.tolerances, &d.tolerances);
        for (name, a, b) in [
            ("plancherel", t.plancherel, dt.plancherel),
            ("inversion", t.inversion, dt.inversion),
            ("transform_seconds", t.transform_seconds, dt.transform_seconds),
            ("diagonalization", t.diagonalization, dt.diagonalization),
            ("phase_shift_well", t.phase_shift_well, dt.phase_shift_well),
            ("born", t.born, dt.born),
            ("unitarity", t.unitarity, dt.unitarity),
            ("intertwining", t.intertwining, dt.intertwining),
            ("dispersive_spread", t.dispersive_spread, dt.dispersive_spread),
            ("product_identity", t.product_identity, dt.product_identity),
            ("decay_exponent", -t.decay_exponent, -dt.decay_exponent),
            ("triangle", t.triangle, dt.triangle),
            ("kernel_symmetry", t.kernel_symmetry, dt.kernel_symmetry),
            ("weak_form", t.weak_form, dt.weak_form),
            ("holder_spread", t.holder_spread, dt.holder_spread),
            ("commutator_spread", t.commutator_spread, dt.commutator_spread),
            ("commutator_zero", t.commutator_zero, dt.commutator_zero),
            ("identity", t.identity, dt.identity),
            ("identity_gain", t.identity_gain, dt.identity_gain),
            ("strang_order.lo", t.strang_order[0], dt.strang_order[0]),
            ("strang_order.hi", t.strang_order[1], dt.strang_order[1]),
            ("duhamel", t.duhamel, dt.duhamel),
            ("duhamel_spectral", t.duhamel_spectral, dt.duhamel_spectral),
            ("slope_p6", t.slope_p6, dt.slope_p6),
            ("slope_p4", t.slope_p4, dt.slope_p4),
            ("slope_p2", t.slope_p2, dt.slope_p2),
            ("scattering", t.scattering, dt.scattering),
            ("x_norm", t.x_norm, dt.x_norm),
            ("nls_seconds", t.nls_seconds, dt.nls_seconds),
        ] {
            v.within(&format!("tolerances.{name}"), a, b);
        }
        let (s, ds) = (&self.separation, &d.separation);
        v.within("separation.period", s.period, ds.period);
        v.within_int("separation.n_max", s.n_max as f64, ds.n_max as f64);
        v.within_int("separation.budget", s.budget as f64, ds.budget as f64);
        v.within("separation.samples", s.samples as f64, ds.samples as f64);
        v.within("separation.validation", s.validation as f64, ds.validation as f64);
        v.within("separation.tucker_nodes", s.tucker_nodes as f64, ds.tucker_nodes as f64);
        let (p, dp) = (&self.dispersive, &d.dispersive);
        for w in &p.widths {
            v.within("dispersive.widths", *w, 1.0);
        }
        for k in &p.modulations {
            v.abs_upto("dispersive.modulations", *k, 10.0);
        }
        v.within_int("dispersive.random_members", p.random_members as f64, dp.random_members as f64);
        for t in p.times.iter().chain(&p.intertwining_times) {
            v.abs_upto("dispersive.times", *t, 200.0);
        }
        v.grid("dispersive.wave_grid", &p.wave_grid, &dp.wave_grid);
        let de = &d.estimates;
        v.grid("estimates.holder_grid", &es.holder_grid, &de.holder_grid);
        v.grid("estimates.commutator_grid", &es.commutator_grid, &de.commutator_grid);
        v.within("estimates.commutator_exponent", es.commutator_exponent, de.commutator_exponent);
        v.within("estimates.separation_tolerance", es.separation_tolerance, de.separation_tolerance);
        v.within("estimates.holder_tolerance", es.holder_tolerance, de.holder_tolerance);
        for (name, [a, b]) in [("estimates.holder_dilations", es.holder_dilations), ("estimates.commutator_dilations", es.commutator_dilations)] {
            if a > b {
                v.fail(name, a as f64, -30.0, b as f64);
            }
            v.abs_upto(name, a as f64, 30.0);
            v.abs_upto(name, b as f64, 30.0);
        }
        v.grid("mkernel.weak_form_grid", &self.mkernel.weak_form_grid, &d.mkernel.weak_form_grid);
        let (n, dn) = (&self.nls, &d.nls);
        v.within("nls.amplitude", n.amplitude, dn.amplitude);
        v.within("nls.evolve.dt", n.evolve.dt, dn.evolve.dt);
        v.within("nls.evolve.t_final", n.evolve.t_final, dn.evolve.t_final);
        v.within("nls.evolve.stride", n.evolve.stride, dn.evolve.stride);
        v.within("nls.evolve.boundary_tolerance", n.evolve.boundary_tolerance, dn.evolve.boundary_tolerance);
        v.within("nls.evolve.x_norm_limit", n.evolve.x_norm_limit, dn.evolve.x_norm_limit);
        v.within("nls.order_t_final", n.order_t_final, dn.order_t_final);
        v.within("nls.order_dt", n.order_dt, dn.order_dt);
        v.within("nls.tail_start", n.tail_start, dn.tail_start);
        v.within("nls.spectral_k_max", n.spectral_k_max, dn.spectral_k_max);
        v.within("nls.spectral_n_k", n.spectral_n_k as f64, dn.spectral_n_k as f64);
        if !(n.evolve.boundary_fraction > 0.0 && n.evolve.boundary_fraction < 1.0) {
            v.fail("nls.evolve.boundary_fraction", n.evolve.boundary_fraction, 0.0, 1.0);
        }
        if !(n.decay_window[0] > 0.0 && n.decay_window[1] > n.decay_window[0]) {
            v.fail("nls.decay_window", n.decay_window[0], 0.0, n.decay_window[1]);
        }
        match v.first {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

struct Validator {
    ok_unsafe: bool,
    first: Option<ConfigError>,
}

impl Validator {
    fn fail(&mut self, field: &str, value: f64, lo: f64, hi: f64) {
        // non-finite values are rejected even in unsafe mode
        if (self.ok_unsafe && value.is_finite()) || self.first.is_some() {
            return;
        }
        self.first = Some(ConfigError::Range { field: field.into(), value, lo, hi });
    }

    /// Within a factor 10 of a positive default.
    fn within(&mut self, field: &str, value: f64, default: f64) {
        let (lo, hi) = (default / 10.0, default * 10.0);
        if !(value >= lo && value <= hi) {
            self.fail(field, value, lo, hi);
        }
    }

    /// Integer fields: 0 ≤ value ≤ 10·max(default, 1).
    fn within_int(&mut self, field: &str, value: f64, default: f64) {
        let hi = 10.0 * default.max(1.0);
        if !(value >= 0.0 && value <= hi) {
            self.fail(field, value, 0.0, hi);
        }
    }

    fn abs_upto(&mut self, field: &str, value: f64, hi: f64) {
        if !(value.abs() <= hi) {
            self.fail(field, value, -hi, hi);
        }
    }

    fn grid(&mut self, name: &str, g: &GridSpec, d: &GridSpec) {
        self.within(&format!("{name}.r_max"), g.r_max, d.r_max);
        self.within(&format!("{name}.n_r"), g.n_r as f64, d.n_r as f64);
        self.within(&format!("{name}.k_max"), g.k_max, d.k_max);
        self.within(&format!("{name}.n_k"), g.n_k as f64, d.n_k as f64);
        self.within_int(&format!("{name}.l_max"), g.l_max as f64, d.l_max as f64);
    }
}
