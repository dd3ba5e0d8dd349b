//! The viscous fixed-point scheme for the time-reversed Euler problem.
//!
//! The state is held spectrally: a shared data spectrum `h^` and, per time
//! node, the spectra of the increments `dv = v - h * G_nu`. Velocities and
//! their derivatives are materialised on demand. Step `k = 0` uses the
//! first-step forms of the nonlinear terms, which never touch the
//! derivatives `v_{2,1}`, `v_{3,1}`; later steps use the rewritten forms.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convolution::{graded_times, Convolver, SLAB_TOLERANCE};
use crate::data_fields::{eval_data, Params};
use crate::error::{Error, Result};
use crate::grid::{sup_abs, GridSpec, ScalarField, TimeSlab, VectorField};
use crate::holder::PairSet;
use crate::spectral::{Spectral, Spectrum};

/// Which increment norm drives the contraction measurement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// `sup + sup |grad| + [grad]_delta`, the sampled `C^{1,delta}` surrogate.
    #[default]
    SupC1Delta,
    /// Spectral `H^2` norm.
    GridH2,
    /// Sum of the two.
    Both,
}

/// Form of the nonlinear terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// Mollified integration-by-parts split that avoids `v_{2,1}`, `v_{3,1}`.
    FirstStep,
    /// Direct mollified products.
    Rewritten,
}

/// Normalisation of the pressure term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LerayForm {
    /// `-dK/dx_i * sum_{m,j} v_{m,j} v_{j,m}`, consistent with the pressure
    /// Poisson equation of the reversed Euler system.
    #[default]
    Consistent,
    /// `+dK/dx_i * 2 (sum of squares and cross products)` as printed.
    Displayed,
}

/// Velocity multiplying `v_{1,3,1}` in the first-step pressure term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThirdProductFactor {
    /// `v_3`, matching the preceding `v_{1,2,1} v_2` term.
    #[default]
    V3,
    /// `v_2`, the literal printed variant.
    V2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationConfig {
    pub params: Params,
    pub half_width: f64,
    pub grid_n: usize,
    pub nu: f64,
    pub eps: f64,
    /// Candidate horizon `T`.
    pub horizon: f64,
    /// Number of geometric time intervals on `[0, T]`.
    pub nsteps_time: usize,
    pub time_ratio: f64,
    pub kmax: usize,
    pub norm_kind: NormKind,
    /// Apply the two-thirds rule to velocities and products.
    pub dealias: bool,
    pub compat_eq19: ThirdProductFactor,
    pub leray_form: LerayForm,
    /// Replace the data by zero.
    pub zero_data: bool,
    pub seed: u64,
    /// Straddling and random pairs each, for the Hölder surrogate.
    pub holder_pairs: usize,
    /// Richardson disagreement above which a step is rejected.
    pub slab_tolerance: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            params: Params::default(),
            half_width: 8.0,
            grid_n: 64,
            nu: 1e-2,
            eps: 1e-2,
            horizon: 0.05,
            nsteps_time: 16,
            time_ratio: 1.2,
            kmax: 4,
            norm_kind: NormKind::SupC1Delta,
            dealias: true,
            compat_eq19: ThirdProductFactor::V3,
            leray_form: LerayForm::Consistent,
            zero_data: false,
            seed: 0,
            holder_pairs: crate::holder::DEFAULT_PAIRS,
            slab_tolerance: SLAB_TOLERANCE,
        }
    }
}

impl IterationConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.half_width, self.grid_n)
    }

    pub fn times(&self) -> Vec<f64> {
        graded_times(self.horizon, self.nsteps_time, self.time_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be non-negative");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.kmax < 2 {
            return bad("kmax must be at least 2");
        }
        if self.nsteps_time < 2 || !self.nsteps_time.is_multiple_of(2) {
            return bad("nsteps_time must be even and at least 2");
        }
        if !(self.time_ratio >= 1.0) {
            return bad("time_ratio must be >= 1");
        }
        if !(self.slab_tolerance > 0.0) {
            return bad("slab_tolerance must be positive");
        }
        Ok(())
    }
}

/// Norms of the increments after one step. Each value is the maximum over
/// components and time nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub k: usize,
    pub sup_incr: f64,
    pub holder_c1delta_incr: f64,
    pub grid_h2_incr: f64,
    /// Norm of `dv^(k) - dv^(k-1)` in the configured norm.
    pub diff_norm: f64,
    /// `diff_norm(k) / diff_norm(k-1)`.
    pub contraction_ratio: Option<f64>,
    /// Two-level Richardson disagreement of the Duhamel integral.
    pub slab_disagreement: f64,
}

/// Per-mode symbols shared by every node of a run.
struct Symbols {
    k2: Vec<f64>,
    /// Nyquist-safe `i xi_j` imaginary parts.
    ik: [Vec<f64>; 3],
    resolved: Vec<bool>,
}

impl Symbols {
    fn new(s: &Spectral) -> Self {
        let len = s.spectrum_len();
        let mut k2 = Vec::with_capacity(len);
        let mut ik: [Vec<f64>; 3] = Default::default();
        let mut resolved = Vec::with_capacity(len);
        for idx in 0..len {
            let md = s.mode(idx);
            k2.push(md.norm_sq());
            for j in 0..3 {
                ik[j].push(md.ik(j).im);
            }
            resolved.push(md.resolved);
        }
        Self { k2, ik, resolved }
    }
}

/// Bound engine: FFT plans, mode tables and Hölder pairs for one grid.
pub struct Engine {
    pub convolver: Convolver,
    symbols: Symbols,
    pairs: PairSet,
}

impl Engine {
    pub fn new(grid: GridSpec, seed: u64, holder_pairs: usize) -> Self {
        let convolver = Convolver::new(grid);
        let symbols = Symbols::new(&convolver.spectral);
        let region = crate::holder::Region::whole(&grid);
        let pairs = PairSet::generate(grid, &region, holder_pairs, holder_pairs, seed);
        Self { convolver, symbols, pairs }
    }

    pub fn for_config(cfg: &IterationConfig) -> Result<Self> {
        Ok(Self::new(cfg.grid()?, cfg.seed, cfg.holder_pairs))
    }

    pub fn spectral(&self) -> &Spectral {
        &self.convolver.spectral
    }

    pub fn grid(&self) -> GridSpec {
        self.convolver.grid()
    }

    fn d(&self, s: &[Complex64], j: usize) -> Spectrum {
        let ik = &self.symbols.ik[j];
        s.iter().zip(ik).map(|(c, k)| Complex64::new(-c.im * k, c.re * k)).collect()
    }

    fn dealias(&self, s: &mut [Complex64]) {
        for (c, r) in s.iter_mut().zip(&self.symbols.resolved) {
            if !r {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `sup`, sampled `C^{1,delta}` and `H^2` norms of one spectrum.
    fn scalar_norms(&self, s: &[Complex64], delta: f64) -> (f64, f64, f64) {
        let sp = self.spectral();
        let sup = sup_abs(&sp.inverse(s));
        let mut grad_sup = 0.0f64;
        let mut seminorm = 0.0f64;
        for j in 0..3 {
            let g = sp.inverse(&self.d(s, j));
            grad_sup = grad_sup.max(sup_abs(&g));
            seminorm = seminorm.max(self.pairs.seminorm(&g, delta));
        }
        let h2 = sp
            .weighted_energy(s, |md| {
                let k2 = md.norm_sq();
                1.0 + k2 + k2 * k2
            })
            .sqrt();
        (sup, sup + grad_sup + seminorm, h2)
    }

    /// Norms of a set of per-node, per-component spectra (max over both).
    fn norms(&self, nodes: &[[Spectrum; 3]], delta: f64) -> (f64, f64, f64) {
        let mut out = (0.0f64, 0.0f64, 0.0f64);
        for comps in nodes {
            for s in comps {
                if s.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                    continue;
                }
                let (a, b, c) = self.scalar_norms(s, delta);
                out = (out.0.max(a), out.1.max(b), out.2.max(c));
            }
        }
        out
    }
}

fn pick(kind: NormKind, (_, c1, h2): (f64, f64, f64)) -> f64 {
    match kind {
        NormKind::SupC1Delta => c1,
        NormKind::GridH2 => h2,
        NormKind::Both => c1 + h2,
    }
}

/// Physical fields at one node. Derivatives not needed by the form are
/// never computed, so reading them is an error rather than a silent use.
pub struct NodeFields {
    pub form: Form,
    pub v: [Vec<f64>; 3],
    dv: [[Option<Vec<f64>>; 3]; 3],
    /// `v_{1,2,1}` and `v_{1,3,1}`, first-step form only.
    mixed: [Option<Vec<f64>>; 2],
}

impl NodeFields {
    /// `dv_i/dx_j`, zero-based.
    pub fn grad(&self, i: usize, j: usize) -> Result<&[f64]> {
        self.dv[i][j].as_deref().ok_or(Error::MissingDerivative { i: i + 1, j: j + 1 })
    }

    fn mixed(&self, which: usize) -> Result<&[f64]> {
        self.mixed[which]
            .as_deref()
            .ok_or(Error::MissingDerivative { i: 1, j: which + 2 })
    }
}

/// Entries `(i, j)` (zero-based) the first-step form must not read.
pub fn is_avoided(i: usize, j: usize) -> bool {
    j == 0 && i > 0
}

#[derive(Clone)]
pub struct IterationState {
    pub k: usize,
    pub nu: f64,
    pub times: Vec<f64>,
    grid: GridSpec,
    baseline: Arc<[Spectrum; 3]>,
    incr: Vec<[Spectrum; 3]>,
    pub norm_history: Vec<NormRecord>,
}

impl IterationState {
    /// State with data spectra `baseline` and increments `incr`.
    pub fn from_spectra(
        grid: GridSpec,
        nu: f64,
        times: Vec<f64>,
        baseline: [Spectrum; 3],
        incr: Vec<[Spectrum; 3]>,
        k: usize,
    ) -> Result<Self> {
        TimeSlab::new(times.clone(), vec![(); times.len()])?;
        if incr.len() != times.len() {
            return Err(Error::InvalidGrid("one increment per time node required".into()));
        }
        Ok(Self { k, nu, times, grid, baseline: Arc::new(baseline), incr, norm_history: vec![] })
    }

    /// State with zero data whose velocity at every node is the given field.
    pub fn from_velocity(engine: &Engine, nu: f64, slab: &TimeSlab<VectorField>, k: usize) -> Result<Self> {
        let sp = engine.spectral();
        let incr = slab
            .fields
            .iter()
            .map(|v| std::array::from_fn(|i| sp.forward(&v.components[i].values)))
            .collect();
        let zero = std::array::from_fn(|_| sp.zeros());
        Self::from_spectra(engine.grid(), nu, slab.times.clone(), zero, incr, k)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    fn baseline_spectrum(&self, engine: &Engine, node: usize, i: usize) -> Spectrum {
        let a = self.nu * self.times[node];
        self.baseline[i]
            .iter()
            .zip(&engine.symbols.k2)
            .map(|(c, k2)| c * (-a * k2).exp())
            .collect()
    }

    fn velocity_spectrum(&self, engine: &Engine, node: usize, i: usize) -> Spectrum {
        let mut s = self.baseline_spectrum(engine, node, i);
        for (a, b) in s.iter_mut().zip(&self.incr[node][i]) {
            *a += b;
        }
        s
    }

    fn to_vector(&self, engine: &Engine, specs: [Spectrum; 3]) -> VectorField {
        let sp = engine.spectral();
        let comps = specs.map(|s| ScalarField { grid: self.grid, values: sp.inverse(&s) });
        VectorField::new(comps).expect("shared grid")
    }

    /// `h * G_nu(t_node)`.
    pub fn baseline(&self, engine: &Engine, node: usize) -> VectorField {
        self.to_vector(engine, std::array::from_fn(|i| self.baseline_spectrum(engine, node, i)))
    }

    /// `v^(k)(t_node)`.
    pub fn velocity(&self, engine: &Engine, node: usize) -> VectorField {
        self.to_vector(engine, std::array::from_fn(|i| self.velocity_spectrum(engine, node, i)))
    }

    /// `dv^(k)(t_node)`.
    pub fn increment(&self, engine: &Engine, node: usize) -> VectorField {
        self.to_vector(engine, self.incr[node].clone())
    }

    pub fn increment_spectra(&self) -> &[[Spectrum; 3]] {
        &self.incr
    }

    /// `d v_i / d x_j` at a node (zero-based indices). The avoided entries
    /// are available here for diagnostics; the scheme itself never reads
    /// them in first-step form.
    pub fn derivative(&self, engine: &Engine, node: usize, i: usize, j: usize) -> ScalarField {
        let s = engine.d(&self.velocity_spectrum(engine, node, i), j);
        ScalarField { grid: self.grid, values: engine.spectral().inverse(&s) }
    }

    /// `d dv_i / d x_j` of the increment at a node.
    pub fn increment_derivative(&self, engine: &Engine, node: usize, i: usize, j: usize) -> ScalarField {
        let s = engine.d(&self.incr[node][i], j);
        ScalarField { grid: self.grid, values: engine.spectral().inverse(&s) }
    }

    /// `v_{1,j,1}` for `j` in `{2, 3}` (one-based).
    pub fn mixed_derivative(&self, engine: &Engine, node: usize, j: usize) -> ScalarField {
        let s = engine.d(&engine.d(&self.velocity_spectrum(engine, node, 0), j - 1), 0);
        ScalarField { grid: self.grid, values: engine.spectral().inverse(&s) }
    }

    pub fn velocity_slab(&self, engine: &Engine) -> TimeSlab<VectorField> {
        let fields = (0..self.nodes()).map(|n| self.velocity(engine, n)).collect();
        TimeSlab { times: self.times.clone(), fields }
    }

    pub fn increment_slab(&self, engine: &Engine) -> TimeSlab<VectorField> {
        let fields = (0..self.nodes()).map(|n| self.increment(engine, n)).collect();
        TimeSlab { times: self.times.clone(), fields }
    }

    /// `max |incr + baseline - v|` over nodes and components, each side
    /// materialised independently.
    pub fn increment_identity_error(&self, engine: &Engine) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.nodes() {
            let (v, b, d) = (self.velocity(engine, n), self.baseline(engine, n), self.increment(engine, n));
            for i in 0..3 {
                for p in 0..self.grid.len() {
                    let e = (d.components[i].values[p] + b.components[i].values[p] - v.components[i].values[p]).abs();
                    worst = worst.max(e);
                }
            }
        }
        worst
    }

    /// Maximum spectral divergence of `v^(k)` over nodes.
    pub fn max_divergence(&self, engine: &Engine) -> f64 {
        let sp = engine.spectral();
        (0..self.nodes())
            .map(|n| {
                let mut div = sp.zeros();
                for i in 0..3 {
                    for (a, b) in div.iter_mut().zip(engine.d(&self.velocity_spectrum(engine, n, i), i)) {
                        *a += b;
                    }
                }
                sup_abs(&sp.inverse(&div))
            })
            .fold(0.0, f64::max)
    }

    /// Physical fields needed by `form` at one node.
    pub fn node_fields(&self, engine: &Engine, node: usize, form: Form, dealias: bool) -> NodeFields {
        let sp = engine.spectral();
        let mut v: [Vec<f64>; 3] = Default::default();
        let mut dv: [[Option<Vec<f64>>; 3]; 3] = Default::default();
        let mut mixed: [Option<Vec<f64>>; 2] = Default::default();
        for i in 0..3 {
            let mut s = self.velocity_spectrum(engine, node, i);
            if dealias {
                engine.dealias(&mut s);
            }
            v[i] = sp.inverse(&s);
            for j in 0..3 {
                if form == Form::FirstStep && is_avoided(i, j) {
                    continue;
                }
                dv[i][j] = Some(sp.inverse(&engine.d(&s, j)));
            }
            if form == Form::FirstStep && i == 0 {
                for (w, j) in [1, 2].into_iter().enumerate() {
                    mixed[w] = Some(sp.inverse(&engine.d(&engine.d(&s, j), 0)));
                }
            }
        }
        NodeFields { form, v, dv, mixed }
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn add_mul(acc: &mut [f64], a: &[f64], b: &[f64]) {
    for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
        *s += x * y;
    }
}

/// Nonlinear term options that do not depend on the state.
#[derive(Clone, Copy, Debug)]
pub struct TermOptions {
    pub eps: f64,
    pub dealias: bool,
    pub leray_form: LerayForm,
    pub compat: ThirdProductFactor,
}

impl TermOptions {
    pub fn from_config(cfg: &IterationConfig) -> Self {
        Self { eps: cfg.eps, dealias: cfg.dealias, leray_form: cfg.leray_form, compat: cfg.compat_eq19 }
    }
}

impl Engine {
    fn mollifier(&self, eps: f64) -> Vec<f64> {
        self.symbols.k2.iter().map(|k2| (-eps * k2).exp()).collect()
    }

    fn finish(&self, mut s: Spectrum, dealias: bool) -> Spectrum {
        if dealias {
            self.dealias(&mut s);
        }
        s
    }

    /// Spectra of the Burgers term `B_i` at one node.
    pub fn burgers_spectra(&self, f: &NodeFields, opts: &TermOptions) -> Result<[Spectrum; 3]> {
        let sp = self.spectral();
        let mol = self.mollifier(opts.eps);
        let v = &f.v;
        let mut b1 = mul(&v[0], f.grad(0, 0)?);
        add_mul(&mut b1, &v[1], f.grad(0, 1)?);
        add_mul(&mut b1, &v[2], f.grad(0, 2)?);
        let mut out = [self.finish(sp.forward(&b1), opts.dealias), sp.zeros(), sp.zeros()];
        for i in 1..3 {
            let mut local = mul(&v[1], f.grad(i, 1)?);
            add_mul(&mut local, &v[2], f.grad(i, 2)?);
            let mut s = sp.forward(&local);
            match f.form {
                Form::FirstStep => {
                    let a = self.d(&sp.forward(&mul(&v[0], &v[i])), 0);
                    let b = sp.forward(&mul(f.grad(0, 0)?, &v[i]));
                    for (((c, a), b), m) in s.iter_mut().zip(&a).zip(&b).zip(&mol) {
                        *c += (a - b) * m;
                    }
                }
                Form::Rewritten => {
                    let a = sp.forward(&mul(&v[0], f.grad(i, 0)?));
                    for ((c, a), m) in s.iter_mut().zip(&a).zip(&mol) {
                        *c += a * m;
                    }
                }
            }
            out[i] = self.finish(s, opts.dealias);
        }
        Ok(out)
    }

    /// Spectrum of the pressure source `Q`, the contraction
    /// `sum v_{m,j} v_{j,m}` with the two `x1`-cross products mollified.
    pub fn pressure_source(&self, f: &NodeFields, opts: &TermOptions) -> Result<Spectrum> {
        let sp = self.spectral();
        let mol = self.mollifier(opts.eps);
        let mut local = mul(f.grad(0, 0)?, f.grad(0, 0)?);
        add_mul(&mut local, f.grad(1, 1)?, f.grad(1, 1)?);
        add_mul(&mut local, f.grad(2, 2)?, f.grad(2, 2)?);
        let (diag_scale, cross) = match opts.leray_form {
            LerayForm::Consistent => (1.0, 2.0),
            LerayForm::Displayed => (2.0, 2.0),
        };
        for s in local.iter_mut() {
            *s *= diag_scale;
        }
        let c23 = mul(f.grad(1, 2)?, f.grad(2, 1)?);
        for (s, c) in local.iter_mut().zip(&c23) {
            *s += cross * c;
        }
        let mut q = sp.forward(&local);
        match f.form {
            Form::FirstStep => {
                // (v_{1,2} v_2 + v_{1,3} v_3)_{,1} - (v_{1,2,1} v_2 + v_{1,3,1} v_c)
                let mut m1 = mul(f.grad(0, 1)?, &f.v[1]);
                add_mul(&mut m1, f.grad(0, 2)?, &f.v[2]);
                let third = match opts.compat {
                    ThirdProductFactor::V3 => &f.v[2],
                    ThirdProductFactor::V2 => &f.v[1],
                };
                let mut m2 = mul(f.mixed(0)?, &f.v[1]);
                add_mul(&mut m2, f.mixed(1)?, third);
                let a = self.d(&sp.forward(&m1), 0);
                let b = sp.forward(&m2);
                for (((c, a), b), m) in q.iter_mut().zip(&a).zip(&b).zip(&mol) {
                    *c += cross * (a - b) * m;
                }
            }
            Form::Rewritten => {
                let mut m = mul(f.grad(0, 1)?, f.grad(1, 0)?);
                add_mul(&mut m, f.grad(0, 2)?, f.grad(2, 0)?);
                let a = sp.forward(&m);
                for ((c, a), m) in q.iter_mut().zip(&a).zip(&mol) {
                    *c += cross * a * m;
                }
            }
        }
        Ok(self.finish(q, opts.dealias))
    }

    /// Spectra of the pressure term `L_i` at one node.
    pub fn leray_spectra(&self, f: &NodeFields, opts: &TermOptions) -> Result<[Spectrum; 3]> {
        let q = self.pressure_source(f, opts)?;
        let sign = match opts.leray_form {
            LerayForm::Consistent => -1.0,
            LerayForm::Displayed => 1.0,
        };
        Ok(std::array::from_fn(|i| {
            q.iter()
                .enumerate()
                .map(|(idx, c)| {
                    let k2 = self.symbols.k2[idx];
                    if k2 == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        // d_i Laplace^-1 has symbol -i xi_i / |xi|^2.
                        let ik = Complex64::new(0.0, self.symbols.ik[i][idx]);
                        sign * c * (-ik / k2)
                    }
                })
                .collect()
        }))
    }
}

fn slab_of(engine: &Engine, state: &IterationState, per_node: impl Fn(usize) -> Result<Spectrum>) -> Result<TimeSlab<ScalarField>> {
    let grid = state.grid();
    let fields = (0..state.nodes())
        .map(|n| Ok(ScalarField { grid, values: engine.spectral().inverse(&per_node(n)?) }))
        .collect::<Result<Vec<_>>>()?;
    TimeSlab::new(state.times.clone(), fields)
}

/// `B_i` (zero-based `i`) at every node of the state.
pub fn burgers_term(engine: &Engine, state: &IterationState, i: usize, form: Form, opts: &TermOptions) -> Result<TimeSlab<ScalarField>> {
    slab_of(engine, state, |n| {
        let f = state.node_fields(engine, n, form, opts.dealias);
        Ok(engine.burgers_spectra(&f, opts)?[i].clone())
    })
}

/// `L_i` (zero-based `i`) at every node of the state.
pub fn leray_term(engine: &Engine, state: &IterationState, i: usize, form: Form, opts: &TermOptions) -> Result<TimeSlab<ScalarField>> {
    slab_of(engine, state, |n| {
        let f = state.node_fields(engine, n, form, opts.dealias);
        Ok(engine.leray_spectra(&f, opts)?[i].clone())
    })
}

/// Form used when stepping from iterate `k`.
pub fn form_for(k: usize) -> Form {
    if k == 0 {
        Form::FirstStep
    } else {
        Form::Rewritten
    }
}

/// `v^(0) = h * G_nu` on the configured time grid.
pub fn init_step0(engine: &Engine, cfg: &IterationConfig) -> Result<IterationState> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    assert_eq!(grid, engine.grid(), "engine grid does not match config");
    let sp = engine.spectral();
    let baseline: [Spectrum; 3] = if cfg.zero_data {
        std::array::from_fn(|_| sp.zeros())
    } else {
        let h = VectorField::sample(grid, |x| eval_data(x, &cfg.params));
        std::array::from_fn(|i| sp.forward(&h.components[i].values))
    };
    let times = cfg.times();
    let incr = times.iter().map(|_| std::array::from_fn(|_| sp.zeros())).collect();
    let mut state = IterationState::from_spectra(grid, cfg.nu, times, baseline, incr, 0)?;
    state.norm_history.push(NormRecord {
        k: 0,
        sup_incr: 0.0,
        holder_c1delta_incr: 0.0,
        grid_h2_incr: 0.0,
        diff_norm: 0.0,
        contraction_ratio: None,
        slab_disagreement: 0.0,
    });
    Ok(state)
}

/// One fixed-point step `v^(k) -> v^(k+1)`: the data term plus the Duhamel
/// integral of `B^(k) + L^(k)`.
pub fn step(engine: &Engine, state: &IterationState, cfg: &IterationConfig) -> Result<IterationState> {
    let sp = engine.spectral();
    let form = form_for(state.k);
    let opts = TermOptions::from_config(cfg);
    let times = &state.times;
    let mut fine: [_; 3] = std::array::from_fn(|_| crate::convolution::Duhamel::new(sp, state.nu));
    let mut coarse: [_; 3] = std::array::from_fn(|_| crate::convolution::Duhamel::new(sp, state.nu));
    let mut incr = Vec::with_capacity(times.len());
    let mut coarse_last = None;
    for (n, &t) in times.iter().enumerate() {
        let f = state.node_fields(engine, n, form, opts.dealias);
        let b = engine.burgers_spectra(&f, &opts)?;
        let l = engine.leray_spectra(&f, &opts)?;
        drop(f);
        let forcing: [Spectrum; 3] = std::array::from_fn(|i| b[i].iter().zip(&l[i]).map(|(x, y)| x + y).collect());
        let u: [Spectrum; 3] = std::array::from_fn(|i| fine[i].push(&forcing[i], t));
        if n % 2 == 0 {
            let c: [Spectrum; 3] = std::array::from_fn(|i| coarse[i].push(&forcing[i], t));
            if n + 1 == times.len() {
                coarse_last = Some(c);
            }
        }
        if u.iter().any(|s| s.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())) {
            return Err(Error::NonFiniteField { k: state.k + 1, node: n });
        }
        incr.push(u);
    }
    let disagreement = match coarse_last {
        Some(c) => {
            let last = incr.last().unwrap();
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for i in 0..3 {
                err = err.max(sup_abs(&sp.inverse(&sub(&last[i], &c[i]))));
                scale = scale.max(sup_abs(&sp.inverse(&last[i])));
            }
            if scale > 0.0 {
                err / scale / 3.0
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    let delta = cfg.params.holder_delta();
    let norms = engine.norms(&incr, delta);
    let diffs: Vec<[Spectrum; 3]> = incr
        .iter()
        .zip(&state.incr)
        .map(|(a, b)| std::array::from_fn(|i| sub(&a[i], &b[i])))
        .collect();
    let diff_norm = pick(cfg.norm_kind, engine.norms(&diffs, delta));
    let prev = state.norm_history.last().map(|r| r.diff_norm).unwrap_or(0.0);
    let contraction_ratio = (state.k >= 1 && prev > 0.0).then(|| diff_norm / prev);
    let mut next = IterationState {
        k: state.k + 1,
        nu: state.nu,
        times: state.times.clone(),
        grid: state.grid,
        baseline: state.baseline.clone(),
        incr,
        norm_history: state.norm_history.clone(),
    };
    let record = NormRecord {
        k: next.k,
        sup_incr: norms.0,
        holder_c1delta_incr: norms.1,
        grid_h2_incr: norms.2,
        diff_norm,
        contraction_ratio,
        slab_disagreement: disagreement,
    };
    log::info!(
        "k={} sup={:.4e} c1d={:.4e} h2={:.4e} diff={:.4e} ratio={:?} slab={:.2e}",
        record.k,
        record.sup_incr,
        record.holder_c1delta_incr,
        record.grid_h2_incr,
        record.diff_norm,
        record.contraction_ratio,
        record.slab_disagreement
    );
    next.norm_history.push(record);
    Ok(next)
}

fn sub(a: &[Complex64], b: &[Complex64]) -> Spectrum {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Runs `kmax` steps from `v^(0)`; returns the final state.
pub fn run(engine: &Engine, cfg: &IterationConfig) -> Result<IterationState> {
    run_with(engine, cfg, |_| Ok(()))
}

/// [`run`], handing every iterate (including `v^(0)`) to `visit`.
pub fn run_with(
    engine: &Engine,
    cfg: &IterationConfig,
    mut visit: impl FnMut(&IterationState) -> Result<()>,
) -> Result<IterationState> {
    let mut state = init_step0(engine, cfg)?;
    visit(&state)?;
    for _ in 0..cfg.kmax {
        state = step(engine, &state, cfg)?;
        visit(&state)?;
    }
    // Quadrature sufficiency is judged on the final iterate.
    let disagreement = state.norm_history.last().map_or(0.0, |r| r.slab_disagreement);
    if disagreement > cfg.slab_tolerance {
        return Err(Error::InsufficientSlab { disagreement });
    }
    Ok(state)
}

/// Largest ratio of a run, or `None` when every increment vanished.
pub fn max_ratio(records: &[NormRecord]) -> Option<f64> {
    records.iter().filter_map(|r| r.contraction_ratio).reduce(f64::max)
}

fn trivially_contracting(records: &[NormRecord]) -> bool {
    records.iter().all(|r| r.diff_norm == 0.0)
}

/// Threshold on successive-difference ratios.
pub const CONTRACTION_FACTOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonTrial {
    pub horizon: f64,
    pub max_ratio: Option<f64>,
    pub contracting: bool,
    /// Why the run at this horizon was rejected before a ratio was measured.
    pub rejected: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionResult {
    pub t_measured: f64,
    pub records: Vec<NormRecord>,
    pub trials: Vec<HorizonTrial>,
    /// Every increment vanished, so no ratio was defined.
    pub trivial: bool,
}

/// Maximum expansions, halvings and bisection rounds of the horizon search.
const EXPANSIONS: usize = 3;
const HALVINGS: usize = 6;
const BISECTIONS: usize = 3;

/// Searches the largest horizon at which every measured ratio is at most
/// one half: expand or halve from `cfg.horizon`, then bisect geometrically.
pub fn run_contraction(engine: &Engine, cfg: &IterationConfig) -> Result<ContractionResult> {
    if cfg.kmax < 3 {
        return Err(Error::InvalidConfig("contraction needs kmax >= 3".into()));
    }
    let mut trials = Vec::new();
    let eval = |t: f64, trials: &mut Vec<HorizonTrial>| -> Result<(bool, Vec<NormRecord>)> {
        let c = IterationConfig { horizon: t, ..cfg.clone() };
        let outcome = run(engine, &c);
        let (ok, records, ratio, rejected) = match outcome {
            Ok(s) => {
                let r = max_ratio(&s.norm_history);
                let ok = trivially_contracting(&s.norm_history) || r.is_some_and(|r| r <= CONTRACTION_FACTOR);
                (ok, s.norm_history, r, None)
            }
            Err(e @ (Error::NonFiniteField { .. } | Error::InsufficientSlab { .. })) => (false, vec![], None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        log::info!("horizon {t:.4e}: max ratio {ratio:?}, contracting {ok}");
        trials.push(HorizonTrial { horizon: t, max_ratio: ratio, contracting: ok, rejected });
        Ok((ok, records))
    };

    let t0 = cfg.horizon;
    let (ok0, rec0) = eval(t0, &mut trials)?;
    if ok0 && trivially_contracting(&rec0) {
        return Ok(ContractionResult { t_measured: t0, records: rec0, trials, trivial: true });
    }
    let (mut good, mut good_rec, bad) = if ok0 {
        let (mut good, mut good_rec, mut bad) = (t0, rec0, None);
        for _ in 0..EXPANSIONS {
            let t = 2.0 * good;
            let (ok, rec) = eval(t, &mut trials)?;
            if ok {
                good = t;
                good_rec = rec;
            } else {
                bad = Some(t);
                break;
            }
        }
        (good, good_rec, bad)
    } else {
        let mut found = None;
        let mut t = t0;
        for _ in 0..HALVINGS {
            let hi = t;
            t *= 0.5;
            let (ok, rec) = eval(t, &mut trials)?;
            if ok {
                found = Some((t, rec, Some(hi)));
                break;
            }
        }
        found.ok_or(Error::NoContraction { horizon: t })?
    };
    if let Some(mut hi) = bad {
        for _ in 0..BISECTIONS {
            let mid = (good * hi).sqrt();
            let (ok, rec) = eval(mid, &mut trials)?;
            if ok {
                good = mid;
                good_rec = rec;
            } else {
                hi = mid;
            }
        }
    }
    Ok(ContractionResult { t_measured: good, records: good_rec, trials, trivial: false })
}

/// Verdict on the successive differences of a limit drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CauchyVerdict {
    Cauchy,
    NotCauchy,
    /// Fewer than two differences.
    NoVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub nu: f64,
    pub eps: f64,
    pub horizon: f64,
    /// Time intervals after slab refinement.
    pub nsteps_time: usize,
    pub sup_incr: f64,
    pub holder_c1delta_incr: f64,
    pub grid_h2_incr: f64,
    pub max_ratio: Option<f64>,
    pub contracting: bool,
    /// `sup |dv(T; previous pair) - dv(T; this pair)|`.
    pub cauchy_diff: Option<f64>,
}

pub struct LimitResult {
    pub rows: Vec<LimitRow>,
    pub verdict: CauchyVerdict,
    /// Increment at `T` per pair.
    pub increments: Vec<VectorField>,
    /// Final state of the last pair, the limit candidate.
    pub candidate: IterationState,
}

impl LimitResult {
    pub fn limit(&self, engine: &Engine) -> VectorField {
        self.candidate.velocity(engine, self.candidate.nodes() - 1)
    }
}

/// Strictly decreasing check for the Cauchy column.
pub fn cauchy_verdict(diffs: &[f64]) -> CauchyVerdict {
    if diffs.len() < 2 {
        CauchyVerdict::NoVerdict
    } else if diffs.windows(2).all(|w| w[1] < w[0]) {
        CauchyVerdict::Cauchy
    } else {
        CauchyVerdict::NotCauchy
    }
}

/// Slab refinements [`run_refined`] attempts before giving up.
pub const SLAB_REFINEMENTS: usize = 2;

/// [`run`], doubling the time intervals (with the square root of the grading
/// ratio, so the first-to-last interval ratio is kept) while the final
/// iterate fails the slab check.
pub fn run_refined(engine: &Engine, cfg: &IterationConfig) -> Result<(IterationConfig, IterationState)> {
    let mut cfg = cfg.clone();
    for attempt in 0..=SLAB_REFINEMENTS {
        match run(engine, &cfg) {
            Err(Error::InsufficientSlab { disagreement }) if attempt < SLAB_REFINEMENTS => {
                log::info!("slab disagreement {disagreement:.3e} at {} intervals, refining", cfg.nsteps_time);
                cfg.nsteps_time *= 2;
                cfg.time_ratio = cfg.time_ratio.sqrt();
            }
            other => return other.map(|s| (cfg, s)),
        }
    }
    unreachable!("the last attempt returns")
}

/// Runs `kmax` steps for each `(nu, eps)` pair at the template horizon and
/// tabulates successive differences of the increments at `T`.
pub fn viscosity_limit_drive(engine: &Engine, template: &IterationConfig, nus: &[f64], epss: &[f64]) -> Result<LimitResult> {
    if nus.is_empty() || nus.len() != epss.len() {
        return Err(Error::InvalidConfig("nu and eps schedules must be non-empty and of equal length".into()));
    }
    if nus.windows(2).any(|w| w[1] >= w[0]) || epss.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidConfig("schedules must descend".into()));
    }
    // Pairs are independent; only the Cauchy column compares neighbours.
    let pairs: Vec<(f64, f64)> = nus.iter().copied().zip(epss.iter().copied()).collect();
    let runs = crate::par_map(&pairs, |&(nu, eps)| run_refined(engine, &IterationConfig { nu, eps, ..template.clone() }));
    let mut rows: Vec<LimitRow> = Vec::new();
    let mut increments: Vec<VectorField> = Vec::new();
    let mut candidate = None;
    for (&(nu, eps), outcome) in pairs.iter().zip(runs) {
        let (cfg, state) = outcome?;
        let last = state.increment(engine, state.nodes() - 1);
        let cauchy_diff = increments.last().map(|prev| {
            (0..3)
                .flat_map(|i| {
                    prev.components[i].values.iter().zip(&last.components[i].values).map(|(a, b)| (a - b).abs())
                })
                .fold(0.0, f64::max)
        });
        let rec = state.norm_history.last().unwrap();
        let ratio = max_ratio(&state.norm_history);
        rows.push(LimitRow {
            nu,
            eps,
            horizon: cfg.horizon,
            nsteps_time: cfg.nsteps_time,
            sup_incr: rec.sup_incr,
            holder_c1delta_incr: rec.holder_c1delta_incr,
            grid_h2_incr: rec.grid_h2_incr,
            max_ratio: ratio,
            contracting: trivially_contracting(&state.norm_history) || ratio.is_some_and(|r| r <= CONTRACTION_FACTOR),
            cauchy_diff,
        });
        increments.push(last);
        candidate = Some(state);
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.cauchy_diff).collect();
    Ok(LimitResult { verdict: cauchy_verdict(&diffs), rows, increments, candidate: candidate.unwrap() })
}

/// Weight of the first-increment derivative bound,
/// `(1 + |x1|^(2 beta0 - 3)) prod_i (1 + x_i^2)^-2`.
pub fn item_i_weight(x: crate::data_fields::Point3, params: &Params) -> f64 {
    let decay: f64 = x.to_array().iter().map(|c| (1.0 + c * c).powi(-2)).product();
    (1.0 + x.x1.abs().powf(2.0 * params.beta0 - 3.0)) * decay
}

/// Smallest `C` with `|d_j dv_i(t, x)| <= C * item_i_weight(x)` over all
/// nodes `t > 0` and grid points inside `region`.
pub fn item_i_constant(engine: &Engine, state: &IterationState, params: &Params, region: &crate::holder::Region) -> f64 {
    let g = state.grid();
    let inside: Vec<(usize, f64)> = (0..g.len())
        .filter(|&p| region.contains(g.point(p)))
        .map(|p| (p, item_i_weight(g.point(p), params)))
        .collect();
    let mut c = 0.0f64;
    for node in 1..state.nodes() {
        for i in 0..3 {
            for j in 0..3 {
                let d = state.increment_derivative(engine, node, i, j);
                for &(p, w) in &inside {
                    c = c.max(d.values[p].abs() / w);
                }
            }
        }
    }
    c
}

/// `f = -nu Laplace v`, the force that turns a solution of the inviscid
/// problem into one of the viscous problem.
pub fn navier_force_term(v: &VectorField, nu: f64) -> VectorField {
    let c = Convolver::new(v.grid());
    let comps = std::array::from_fn(|i| c.negative_viscous_laplacian(&v.components[i], nu));
    VectorField::new(comps).expect("shared grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> IterationConfig {
        IterationConfig { grid_n: 16, half_width: 4.0, kmax: 3, holder_pairs: 500, nsteps_time: 4, ..Default::default() }
    }

    #[test]
    fn default_config_validates() {
        IterationConfig::default().validate().unwrap();
        let bad = IterationConfig { kmax: 1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let cfg = IterationConfig { zero_data: true, ..small_cfg() };
        let e = Engine::for_config(&cfg).unwrap();
        let s = run(&e, &cfg).unwrap();
        assert_eq!(s.k, 3);
        for n in 0..s.nodes() {
            assert_eq!(s.velocity(&e, n).sup(), 0.0);
        }
        assert!(s.norm_history.iter().all(|r| r.sup_incr == 0.0 && r.contraction_ratio.is_none()));
    }

    #[test]
    fn first_node_is_sampled_data() {
        let cfg = small_cfg();
        let e = Engine::for_config(&cfg).unwrap();
        let s = init_step0(&e, &cfg).unwrap();
        let v = s.velocity(&e, 0);
        let h = VectorField::sample(cfg.grid().unwrap(), |x| eval_data(x, &cfg.params));
        for i in 0..3 {
            for (a, b) in v.components[i].values.iter().zip(&h.components[i].values) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn first_step_never_reads_avoided_entries() {
        let cfg = small_cfg();
        let e = Engine::for_config(&cfg).unwrap();
        let s = init_step0(&e, &cfg).unwrap();
        let f = s.node_fields(&e, 1, Form::FirstStep, true);
        assert!(matches!(f.grad(1, 0), Err(Error::MissingDerivative { i: 2, j: 1 })));
        assert!(matches!(f.grad(2, 0), Err(Error::MissingDerivative { i: 3, j: 1 })));
        let opts = TermOptions::from_config(&cfg);
        e.burgers_spectra(&f, &opts).unwrap();
        e.leray_spectra(&f, &opts).unwrap();
        // The rewritten form does need them.
        let mut partial = s.node_fields(&e, 1, Form::FirstStep, true);
        partial.form = Form::Rewritten;
        assert!(matches!(e.burgers_spectra(&partial, &opts), Err(Error::MissingDerivative { .. })));
    }

    #[test]
    fn burgers_first_component_is_local_transport() {
        let cfg = small_cfg();
        let e = Engine::for_config(&cfg).unwrap();
        let g = cfg.grid().unwrap();
        let field = |x: crate::Point3| {
            let b = (-(x.x1 * x.x1 + x.x2 * x.x2 + x.x3 * x.x3) / 2.0).exp();
            [b * x.x2, b * x.x3, b]
        };
        let slab = TimeSlab::new(vec![0.0], vec![VectorField::sample(g, field)]).unwrap();
        let s = IterationState::from_velocity(&e, 0.1, &slab, 1).unwrap();
        let opts = TermOptions { eps: 0.3, dealias: false, ..TermOptions::from_config(&cfg) };
        let b1 = burgers_term(&e, &s, 0, Form::Rewritten, &opts).unwrap();
        let f = s.node_fields(&e, 0, Form::Rewritten, false);
        for p in 0..g.len() {
            let want: f64 = (0..3).map(|j| f.v[j][p] * f.grad(0, j).unwrap()[p]).sum();
            assert!((b1.fields[0].values[p] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn navier_force_of_a_mode() {
        let g = GridSpec::new(std::f64::consts::PI, 16).unwrap();
        let v = VectorField::sample(g, |x| [(2.0 * x.x1).sin(), 1.0, (x.x2 + x.x3).cos()]);
        let f = navier_force_term(&v, 0.3);
        for p in 0..g.len() {
            let x = g.point(p);
            assert!((f.components[0].values[p] - 0.3 * 4.0 * (2.0 * x.x1).sin()).abs() < 1e-10);
            assert!(f.components[1].values[p].abs() < 1e-12);
            assert!((f.components[2].values[p] - 0.3 * 2.0 * (x.x2 + x.x3).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn cauchy_verdicts() {
        assert_eq!(cauchy_verdict(&[]), CauchyVerdict::NoVerdict);
        assert_eq!(cauchy_verdict(&[1.0]), CauchyVerdict::NoVerdict);
        assert_eq!(cauchy_verdict(&[1.0, 0.5]), CauchyVerdict::Cauchy);
        assert_eq!(cauchy_verdict(&[1.0, 1.0]), CauchyVerdict::NotCauchy);
    }
}
