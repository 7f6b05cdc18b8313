//! Euler-Maruyama simulation of the mean-field particle system coupled to
//! i.i.d. copies of the nonlinear (McKean-Vlasov) process.
//!
//! For each particle `i`, with `E = X̄ − X`, `e = E/‖E‖` (`e = 0` at
//! `E = 0`) and mixing weights `(φ_r, φ_s)` of `E`:
//!
//! ```text
//! X̄ ← X̄ − h[∇V(X̄) + ∇W∗μ̄(X̄)]        + √(2h)[φ_r G + φ_s G̃]
//! X ← X − h[∇V(X) + (1/N)Σ_j ∇W(X−X_j)] + √(2h)[φ_r (I − 2eeᵀ)G + φ_s G̃]
//! ```
//!
//! `G`, `G̃` are standard Gaussians drawn from counter-based streams indexed
//! by `(seed, channel, step, particle)`. The law `μ̄_t` is either an exact
//! Gaussian closure (quadratic `V` and `W`) or an `M`-particle reference
//! ensemble advanced with its own streams.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{dist, dot, exp, norm, powf, round, sqrt};
use crate::model::PotentialModel;
use crate::points::Points;
use crate::rates::RateProfile;
use crate::rng::{Channel, NoiseStream};

/// Lipschitz weights `φ_r, φ_s` with `φ_r² + φ_s² = 1`, `φ_r = 1` for
/// `‖x‖ ≥ δ` and `φ_r = 0` for `‖x‖ ≤ δ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingFunctions {
    delta: f64,
}

impl MixingFunctions {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta", format!("must be > 0, got {delta}")));
        }
        Ok(MixingFunctions { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `φ_r` as a function of `‖x‖`: `clamp(2‖x‖/δ − 1, 0, 1)`.
    #[inline]
    pub fn reflection_weight(&self, r: f64) -> f64 {
        (2.0 * r / self.delta - 1.0).clamp(0.0, 1.0)
    }

    /// `(φ_r, φ_s)` at a point with norm `r`.
    #[inline]
    pub fn weights(&self, r: f64) -> (f64, f64) {
        let pr = self.reflection_weight(r);
        (pr, sqrt((1.0 - pr * pr).max(0.0)))
    }

    pub fn phi_r(&self, x: &[f64]) -> f64 {
        self.reflection_weight(norm(x))
    }

    pub fn phi_s(&self, x: &[f64]) -> f64 {
        self.weights(norm(x)).1
    }
}

/// Unit vector `x/‖x‖`, with `n(0) = 0`.
pub fn unit_or_zero(x: &[f64], out: &mut [f64]) {
    let r = norm(x);
    if r > 0.0 {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi / r;
        }
    } else {
        out.fill(0.0);
    }
}

/// Noise increments (before the `√(2h)` factor) for one particle pair:
/// `nonlinear = φ_r G + φ_s G̃`, `particle = φ_r (I − 2eeᵀ) G + φ_s G̃`.
pub fn coupled_noise(
    e: &[f64],
    weights: (f64, f64),
    g: &[f64],
    g_sync: &[f64],
    nonlinear: &mut [f64],
    particle: &mut [f64],
) {
    let (pr, ps) = weights;
    let proj = dot(e, g);
    for k in 0..g.len() {
        nonlinear[k] = pr * g[k] + ps * g_sync[k];
        particle[k] = pr * (g[k] - 2.0 * e[k] * proj) + ps * g_sync[k];
    }
}

/// Initial distributions with finite fourth moment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InitialLaw {
    PointMass(Vec<f64>),
    /// Isotropic Gaussian.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Uniform on a closed ball.
    UniformBall { center: Vec<f64>, radius: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::PointMass(x) => x.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::UniformBall { center, .. } => center.len(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            InitialLaw::PointMass(x) => x,
            InitialLaw::Gaussian { mean, .. } => mean,
            InitialLaw::UniformBall { center, .. } => center,
        }
    }

    /// Per-coordinate variance.
    pub fn variance(&self) -> f64 {
        match self {
            InitialLaw::PointMass(_) => 0.0,
            InitialLaw::Gaussian { std, .. } => std * std,
            InitialLaw::UniformBall { center, radius } => radius * radius / (center.len() as f64 + 2.0),
        }
    }

    /// `E‖X‖²`.
    pub fn second_moment(&self) -> f64 {
        dot(self.mean(), self.mean()) + self.dim() as f64 * self.variance()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Shape(format!("initial law has dimension {}, expected {dim}", self.dim())));
        }
        let ok = match self {
            InitialLaw::PointMass(x) => x.iter().all(|v| v.is_finite()),
            InitialLaw::Gaussian { mean, std } => mean.iter().all(|v| v.is_finite()) && *std >= 0.0,
            InitialLaw::UniformBall { center, radius } => center.iter().all(|v| v.is_finite()) && *radius >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("initial law", format!("{self:?}")))
        }
    }

    /// Writes one sample into `out`, consuming standard draws from `stream`.
    /// Two laws fed the same stream yield a synchronous coupling.
    pub fn sample(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        match self {
            InitialLaw::PointMass(x) => out.copy_from_slice(x),
            InitialLaw::Gaussian { mean, std } => {
                stream.fill_gaussian(out);
                for (o, m) in out.iter_mut().zip(mean) {
                    *o = m + std * *o;
                }
            }
            InitialLaw::UniformBall { center, radius } => {
                stream.fill_gaussian(out);
                let u = stream.uniform();
                let n = norm(out);
                let scale = if n > 0.0 { radius * powf(u, 1.0 / out.len() as f64) / n } else { 0.0 };
                for (o, c) in out.iter_mut().zip(center) {
                    *o = c + scale * *o;
                }
            }
        }
    }
}

/// How the initial pairs `(X̄₀^i, X₀^i)` are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitialCoupling {
    /// Both components are built from the same standard draws.
    Synchronous,
    /// Independent product.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MeanFieldMode {
    /// Gaussian closure when both `∇V` and `∇W` are linear, otherwise a
    /// reference ensemble.
    Auto,
    Reference,
    Closure,
}

/// Parameters of one coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    /// Size of the reference ensemble.
    pub m: usize,
    pub dim: usize,
    pub h: f64,
    pub t_end: f64,
    pub delta: f64,
    pub seed: u64,
    /// Law of the nonlinear copies `X̄₀`.
    pub nu: InitialLaw,
    /// Law of the particles `X₀`.
    pub mu: InitialLaw,
    pub coupling: InitialCoupling,
    pub mean_field: MeanFieldMode,
    /// Times at which summaries are recorded (rounded to the step grid).
    pub output_times: Vec<f64>,
}

impl SimConfig {
    /// `δ = 10√h`.
    pub fn default_delta(h: f64) -> f64 {
        10.0 * sqrt(h)
    }

    /// `M = max(4096, 16N)`.
    pub fn default_reference_size(n: usize) -> usize {
        (16 * n).max(4096)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("N", format!("need N ≥ 2, got {}", self.n)));
        }
        if self.m < self.n {
            return Err(Error::invalid("M", format!("need M ≥ N = {}, got {}", self.n, self.m)));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::invalid("h", format!("must be > 0, got {}", self.h)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be > 0, got {}", self.delta)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::invalid("t_end", format!("must be ≥ 0, got {}", self.t_end)));
        }
        if self.t_end / self.h > f64::from(u32::MAX) {
            return Err(Error::invalid("h", "too many steps for the noise counter"));
        }
        if let Some(t) = self.output_times.iter().find(|&&t| !(t >= 0.0 && t <= self.t_end * (1.0 + 1e-12))) {
            return Err(Error::invalid("output_times", format!("{t} outside [0, t_end]")));
        }
        self.nu.validate(self.dim)?;
        self.mu.validate(self.dim)
    }

    pub fn total_steps(&self) -> u64 {
        round(self.t_end / self.h) as u64
    }

    /// Output step indices, sorted and deduplicated.
    pub fn output_steps(&self) -> Vec<u64> {
        let mut steps: Vec<u64> = self.output_times.iter().map(|t| round(t / self.h) as u64).collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Exact law of the nonlinear process when `∇V = ρx` and `∇W = kx`: the
/// mean decays as `e^{−ρt}` and each coordinate's variance solves
/// `v' = 2 − 2(ρ + k)v`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClosure {
    pub rho: f64,
    pub k: f64,
    pub mean: Vec<f64>,
    /// Per-coordinate variance.
    pub variance: f64,
}

impl GaussianClosure {
    pub fn new(rho: f64, k: f64, law: &InitialLaw) -> Self {
        GaussianClosure {
            rho,
            k,
            mean: law.mean().to_vec(),
            variance: law.variance(),
        }
    }

    pub fn advance(&mut self, h: f64) {
        let decay = exp(-self.rho * h);
        self.mean.iter_mut().for_each(|m| *m *= decay);
        let a = self.rho + self.k;
        if a == 0.0 {
            self.variance += 2.0 * h;
        } else {
            let stationary = 1.0 / a;
            self.variance = stationary + (self.variance - stationary) * exp(-2.0 * a * h);
        }
    }

    pub fn second_moment(&self) -> f64 {
        dot(&self.mean, &self.mean) + self.mean.len() as f64 * self.variance
    }
}

/// Approximation of `μ̄_t` used for the nonlinear drift.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldApprox {
    Reference(Points),
    Closure(GaussianClosure),
}

/// An interaction drift `∇W ∗ ρ(x)` against a measure `ρ`.
pub enum Field<'a> {
    /// `k(x − mean)`.
    Linear { k: f64, mean: Vec<f64> },
    /// Empirical measure of the given points.
    Empirical(&'a Points),
}

impl<'a> Field<'a> {
    /// The field of an empirical measure, collapsed to its mean when `∇W`
    /// is linear.
    pub fn of_points(model: &PotentialModel, points: &'a Points) -> Self {
        match model.linear_interaction() {
            Some(k) => Field::Linear { k, mean: points.mean() },
            None => Field::Empirical(points),
        }
    }

    pub fn of_mean_field(model: &PotentialModel, approx: &'a MeanFieldApprox) -> Self {
        match approx {
            MeanFieldApprox::Reference(points) => Field::of_points(model, points),
            MeanFieldApprox::Closure(c) => Field::Linear {
                k: c.k,
                mean: c.mean.clone(),
            },
        }
    }

    /// Writes `∇W ∗ ρ(x)` into `out`; `scratch` has length `2d`.
    pub fn drift(&self, model: &PotentialModel, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match self {
            Field::Linear { k, mean } => {
                for ((o, xi), m) in out.iter_mut().zip(x).zip(mean) {
                    *o = k * (xi - m);
                }
            }
            Field::Empirical(points) => {
                out.fill(0.0);
                let (diff, grad) = scratch.split_at_mut(x.len());
                for y in points.rows() {
                    for ((dk, xi), yi) in diff.iter_mut().zip(x).zip(y) {
                        *dk = xi - yi;
                    }
                    model.grad_w(diff, grad);
                    for (o, s) in out.iter_mut().zip(grad.iter()) {
                        *o += s;
                    }
                }
                let n = points.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
    }
}

/// Per-block work buffers, so kernels do not allocate per particle.
struct Scratch {
    gv: Vec<f64>,
    gw: Vec<f64>,
    field: Vec<f64>,
    g: Vec<f64>,
    g_sync: Vec<f64>,
    e: Vec<f64>,
    noise_bar: Vec<f64>,
    noise_x: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            gv: vec![0.0; d],
            gw: vec![0.0; d],
            field: vec![0.0; 2 * d],
            g: vec![0.0; d],
            g_sync: vec![0.0; d],
            e: vec![0.0; d],
            noise_bar: vec![0.0; d],
            noise_x: vec![0.0; d],
        }
    }
}

/// `x − h[∇V(x) + field(x)] + scale·noise` into `out`.
#[allow(clippy::too_many_arguments)]
fn euler_row(
    model: &PotentialModel,
    field: &Field<'_>,
    h: f64,
    scale: f64,
    x: &[f64],
    noise: &[f64],
    out: &mut [f64],
    s: &mut Scratch,
) {
    model.grad_v(x, &mut s.gv);
    field.drift(model, x, &mut s.gw, &mut s.field);
    for k in 0..x.len() {
        out[k] = x[k] - h * (s.gv[k] + s.gw[k]) + scale * noise[k];
    }
}

fn self_interacting_step(
    state: &Points,
    model: &PotentialModel,
    h: f64,
    noise: &Points,
    exec: &dyn Executor,
) -> Result<Points> {
    state.same_shape(noise)?;
    if state.dim() != model.dim() {
        return Err(Error::Shape(format!("state dimension {} vs model {}", state.dim(), model.dim())));
    }
    let d = state.dim();
    let field = Field::of_points(model, state);
    let scale = sqrt(2.0 * h);
    let mut next = Points::zeros(state.len(), d);
    exec.for_each_block(next.as_mut_slice(), d, &|first, block| {
        let mut s = Scratch::new(d);
        for (j, out) in block.chunks_exact_mut(d).enumerate() {
            let i = first + j;
            euler_row(model, &field, h, scale, state.row(i), noise.row(i), out, &mut s);
        }
    });
    if !next.all_finite() {
        return Err(Error::Numerical(format!("non-finite particle state after a step of size {h}")));
    }
    Ok(next)
}

/// One Euler-Maruyama step of the `N`-particle system with given standard
/// Gaussian noise. Linear interactions use the mean closure, `O(N)`;
/// otherwise the pairwise sum is `O(N²)`.
pub fn step_particles(state: &Points, model: &PotentialModel, h: f64, noise: &Points) -> Result<Points> {
    self_interacting_step(state, model, h, noise, &crate::exec::Sequential)
}

/// One step of the `M`-particle reference ensemble standing in for `μ̄_t`.
pub fn advance_reference(reference: &Points, model: &PotentialModel, h: f64, noise: &Points) -> Result<Points> {
    if reference.len() < 2 {
        return Err(Error::invalid("M", "reference ensemble needs at least 2 points"));
    }
    self_interacting_step(reference, model, h, noise, &crate::exec::Sequential)
}

/// State of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    pub t: f64,
    pub step: u64,
    pub h: f64,
    pub seed: u64,
    /// `X̄^i`, i.i.d. copies of the nonlinear process.
    pub nonlinear: Points,
    /// `X^{i,N}`.
    pub particles: Points,
    /// `E^i = X̄^i − X^{i,N}`.
    pub difference: Points,
    pub mean_field: MeanFieldApprox,
}

fn difference_of(a: &Points, b: &Points) -> Points {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    Points::from_vec(a.dim(), data).expect("same shape")
}

impl CoupledEnsemble {
    /// Draws the initial pairs and the mean-field approximation.
    pub fn initialize(config: &SimConfig, model: &PotentialModel) -> Result<Self> {
        config.validate()?;
        if config.dim != model.dim() {
            return Err(Error::Shape(format!("config dimension {} vs model {}", config.dim, model.dim())));
        }
        let d = config.dim;
        let mut nonlinear = Points::zeros(config.n, d);
        let mut particles = Points::zeros(config.n, d);
        for i in 0..config.n {
            let i64 = i as u64;
            match config.coupling {
                InitialCoupling::Synchronous => {
                    let mut s = NoiseStream::new(config.seed, Channel::InitShared, 0, i64);
                    config.nu.sample(&mut s.clone(), nonlinear.row_mut(i));
                    config.mu.sample(&mut s, particles.row_mut(i));
                }
                InitialCoupling::Independent => {
                    let mut a = NoiseStream::new(config.seed, Channel::InitNonlinear, 0, i64);
                    let mut b = NoiseStream::new(config.seed, Channel::InitParticles, 0, i64);
                    config.nu.sample(&mut a, nonlinear.row_mut(i));
                    config.mu.sample(&mut b, particles.row_mut(i));
                }
            }
        }
        let closure = match (model.linear_confinement(), model.linear_interaction()) {
            (Some(rho), Some(k)) => Some(GaussianClosure::new(rho, k, &config.nu)),
            _ => None,
        };
        let mean_field = match (config.mean_field, closure) {
            (MeanFieldMode::Closure, None) => {
                return Err(Error::invalid(
                    "mean_field",
                    "Gaussian closure needs linear ∇V and ∇W",
                ))
            }
            (MeanFieldMode::Closure | MeanFieldMode::Auto, Some(c)) => MeanFieldApprox::Closure(c),
            _ => {
                let mut reference = Points::zeros(config.m, d);
                for k in 0..config.m {
                    let mut s = NoiseStream::new(config.seed, Channel::InitReference, 0, k as u64);
                    config.nu.sample(&mut s, reference.row_mut(k));
                }
                MeanFieldApprox::Reference(reference)
            }
        };
        let difference = difference_of(&nonlinear, &particles);
        Ok(CoupledEnsemble {
            t: 0.0,
            step: 0,
            h: config.h,
            seed: config.seed,
            nonlinear,
            particles,
            difference,
            mean_field,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.dim()
    }
}

/// One Euler-Maruyama step of the full coupled system, in place.
pub fn step_coupled(
    ens: &mut CoupledEnsemble,
    model: &PotentialModel,
    mix: &MixingFunctions,
    exec: &dyn Executor,
) -> Result<()> {
    let d = ens.dim();
    let n = ens.len();
    let h = ens.h;
    let scale = sqrt(2.0 * h);
    let step = ens.step;
    let seed = ens.seed;
    let mut next = vec![0.0; n * 2 * d];
    {
        let nonlinear = &ens.nonlinear;
        let particles = &ens.particles;
        let difference = &ens.difference;
        let bar_field = Field::of_mean_field(model, &ens.mean_field);
        let particle_field = Field::of_points(model, particles);
        exec.for_each_block(&mut next, 2 * d, &|first, block| {
            let mut s = Scratch::new(d);
            for (j, out) in block.chunks_exact_mut(2 * d).enumerate() {
                let i = first + j;
                NoiseStream::new(seed, Channel::Reflected, step, i as u64).fill_gaussian(&mut s.g);
                NoiseStream::new(seed, Channel::Synchronous, step, i as u64).fill_gaussian(&mut s.g_sync);
                let diff = difference.row(i);
                unit_or_zero(diff, &mut s.e);
                let weights = mix.weights(norm(diff));
                coupled_noise(&s.e, weights, &s.g, &s.g_sync, &mut s.noise_bar, &mut s.noise_x);
                let noise_bar = core::mem::take(&mut s.noise_bar);
                let noise_x = core::mem::take(&mut s.noise_x);
                let (out_bar, out_x) = out.split_at_mut(d);
                euler_row(model, &bar_field, h, scale, nonlinear.row(i), &noise_bar, out_bar, &mut s);
                euler_row(model, &particle_field, h, scale, particles.row(i), &noise_x, out_x, &mut s);
                s.noise_bar = noise_bar;
                s.noise_x = noise_x;
            }
        });
    }
    for (i, row) in next.chunks_exact(2 * d).enumerate() {
        ens.nonlinear.row_mut(i).copy_from_slice(&row[..d]);
        ens.particles.row_mut(i).copy_from_slice(&row[d..]);
    }

    match &mut ens.mean_field {
        MeanFieldApprox::Closure(c) => c.advance(h),
        MeanFieldApprox::Reference(reference) => {
            let field = Field::of_points(model, reference);
            let mut next_ref = Points::zeros(reference.len(), d);
            let current = &*reference;
            exec.for_each_block(next_ref.as_mut_slice(), d, &|first, block| {
                let mut s = Scratch::new(d);
                let mut noise = vec![0.0; d];
                for (j, out) in block.chunks_exact_mut(d).enumerate() {
                    let k = first + j;
                    NoiseStream::new(seed, Channel::Reference, step, k as u64).fill_gaussian(&mut noise);
                    euler_row(model, &field, h, scale, current.row(k), &noise, out, &mut s);
                }
            });
            if !next_ref.all_finite() {
                return Err(Error::Numerical(format!(
                    "reference ensemble diverged at t = {}",
                    ens.t + h
                )));
            }
            *reference = next_ref;
        }
    }

    ens.step += 1;
    ens.t = ens.step as f64 * h;
    ens.difference = difference_of(&ens.nonlinear, &ens.particles);
    if !ens.nonlinear.all_finite() || !ens.particles.all_finite() {
        return Err(Error::Numerical(format!(
            "coupled ensemble diverged at t = {} (h = {h})",
            ens.t
        )));
    }
    Ok(())
}

/// One row of a coupled trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRecord {
    pub t: f64,
    /// `(1/N) Σ f(‖E^i‖)`.
    pub mean_f_distance: f64,
    /// `(1/N) Σ ‖E^i‖`.
    pub mean_euclid_distance: f64,
    pub second_moment_particles: f64,
    pub second_moment_nonlinear: f64,
    /// `(1/N) Σ_i ‖∇W∗μ̄(X̄^i) − (1/N) Σ_j ∇W(X̄^i − X̄^j)‖`.
    pub upsilon_estimate: f64,
}

/// Mean discrepancy between the mean-field drift and the drift the
/// nonlinear copies exert on each other.
pub fn upsilon_estimate(ens: &CoupledEnsemble, model: &PotentialModel) -> f64 {
    let d = ens.dim();
    let bar_field = Field::of_mean_field(model, &ens.mean_field);
    let own_field = Field::of_points(model, &ens.nonlinear);
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut scratch = vec![0.0; 2 * d];
    let mut total = 0.0;
    for x in ens.nonlinear.rows() {
        bar_field.drift(model, x, &mut a, &mut scratch);
        own_field.drift(model, x, &mut b, &mut scratch);
        total += dist(&a, &b);
    }
    total / ens.len() as f64
}

pub fn summarize(ens: &CoupledEnsemble, model: &PotentialModel, profile: &RateProfile) -> SummaryRecord {
    let n = ens.len() as f64;
    let (mut fsum, mut esum) = (0.0, 0.0);
    for e in ens.difference.rows() {
        let r = norm(e);
        fsum += profile.f(r);
        esum += r;
    }
    SummaryRecord {
        t: ens.t,
        mean_f_distance: fsum / n,
        mean_euclid_distance: esum / n,
        second_moment_particles: crate::metrics::second_moment(&ens.particles),
        second_moment_nonlinear: crate::metrics::second_moment(&ens.nonlinear),
        upsilon_estimate: upsilon_estimate(ens, model),
    }
}

/// Iterates [`step_coupled`] to `t_end`, recording a [`SummaryRecord`] at
/// each output time.
pub fn run_coupled(
    config: &SimConfig,
    model: &PotentialModel,
    profile: &RateProfile,
    exec: &dyn Executor,
) -> Result<Vec<SummaryRecord>> {
    let mix = MixingFunctions::new(config.delta)?;
    let mut ens = CoupledEnsemble::initialize(config, model)?;
    let outputs = config.output_steps();
    let total = config.total_steps();
    let mut records = Vec::with_capacity(outputs.len());
    let mut next_output = outputs.iter().peekable();
    loop {
        if next_output.peek().is_some_and(|&&s| s == ens.step) {
            records.push(summarize(&ens, model, profile));
            next_output.next();
        }
        if ens.step >= total || next_output.peek().is_none() {
            break;
        }
        step_coupled(&mut ens, model, &mix, exec)?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::model::{builtin_double_well, builtin_quadratic, InteractionSign};
    use crate::rates::{tabulate_profile, ProfileOptions};

    #[test]
    fn mixing_boundaries() {
        let mix = MixingFunctions::new(0.4).unwrap();
        assert_eq!(mix.weights(0.4), (1.0, 0.0));
        assert_eq!(mix.weights(0.2), (0.0, 1.0));
        let (pr, ps) = mix.weights(0.3);
        assert!((pr - 0.5).abs() < 1e-15);
        assert!((ps - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(MixingFunctions::new(0.0).is_err());
        assert!(MixingFunctions::new(-1.0).is_err());
    }

    #[test]
    fn step_particles_examples() {
        let zero = builtin_quadratic(1, 1.0, 0.0).unwrap();
        let state = Points::from_scalars(&[1.0]);
        let noise = Points::from_scalars(&[0.0]);
        let next = step_particles(&state, &zero, 0.1, &noise).unwrap();
        assert!((next.row(0)[0] - 0.9).abs() < 1e-15);

        // drift on particle 1 at (1, 0): −(4 − 2)·1 − ½·(2·0.5·(1 − 0)) = −2.5
        let dw = builtin_double_well(1, 1.0, 0.5, InteractionSign::Attractive).unwrap();
        let state = Points::from_scalars(&[1.0, 0.0]);
        let noise = Points::from_scalars(&[0.0, 0.0]);
        let h = 1e-3;
        let next = step_particles(&state, &dw, h, &noise).unwrap();
        assert!(((next.row(0)[0] - 1.0) / h + 2.5).abs() < 1e-9);
    }

    #[test]
    fn pairwise_and_mean_closure_agree() {
        use crate::model::{KappaTail, PotentialModel, Potentials};
        struct Opaque(f64);
        impl Potentials for Opaque {
            fn confinement_gradient(&self, x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(x);
            }
            fn interaction_gradient(&self, x: &[f64], out: &mut [f64]) {
                out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.0 * xi);
            }
            fn kappa(&self, _r: f64) -> f64 {
                1.0
            }
        }
        let tail = KappaTail { radius: 0.0, floor: 1.0, nondecreasing: true };
        let opaque = PotentialModel::new("opaque", 2, alloc::sync::Arc::new(Opaque(0.3)), tail, 0.3).unwrap();
        let linear = builtin_quadratic(2, 1.0, 0.15).unwrap();
        let state = Points::from_vec(2, vec![0.1, 0.2, -1.0, 0.5, 2.0, -0.3]).unwrap();
        let noise = Points::from_vec(2, vec![0.3, -0.1, 0.0, 1.0, -2.0, 0.2]).unwrap();
        let a = step_particles(&state, &opaque, 0.01, &noise).unwrap();
        let b = step_particles(&state, &linear, 0.01, &noise).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn step_flags_blowup() {
        let dw = builtin_double_well(1, 1.0, 0.0, InteractionSign::Attractive).unwrap();
        let state = Points::from_scalars(&[1e120, 0.0]);
        let noise = Points::from_scalars(&[0.0, 0.0]);
        assert!(matches!(step_particles(&state, &dw, 0.1, &noise), Err(Error::Numerical(_))));
    }

    #[test]
    fn closure_variance_matches_ou() {
        let law = InitialLaw::PointMass(vec![0.0]);
        let mut c = GaussianClosure::new(1.0, 0.0, &law);
        for _ in 0..1000 {
            c.advance(1e-3);
        }
        assert!((c.variance - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        let mut free = GaussianClosure::new(0.0, 0.0, &law);
        free.advance(0.5);
        free.advance(0.25);
        assert!((free.variance - 1.5).abs() < 1e-15);
    }

    #[test]
    fn reflection_in_one_dimension() {
        let mut nb = [0.0];
        let mut nx = [0.0];
        coupled_noise(&[1.0], (1.0, 0.0), &[0.7], &[5.0], &mut nb, &mut nx);
        assert_eq!((nb[0], nx[0]), (0.7, -0.7));
        coupled_noise(&[0.0], (0.0, 1.0), &[0.7], &[5.0], &mut nb, &mut nx);
        assert_eq!((nb[0], nx[0]), (5.0, 5.0));
    }

    fn ou_config(n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            m: 4096,
            dim: 1,
            h: 0.01,
            t_end: 1.0,
            delta: SimConfig::default_delta(0.01),
            seed,
            nu: InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 },
            mu: InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 },
            coupling: InitialCoupling::Synchronous,
            mean_field: MeanFieldMode::Auto,
            output_times: vec![0.0, 0.5, 1.0],
        }
    }

    #[test]
    fn identical_components_stay_identical() {
        let m = builtin_quadratic(1, 1.0, 0.0).unwrap();
        let p = tabulate_profile(&m, 0.0, &ProfileOptions::default()).unwrap();
        let records = run_coupled(&ou_config(8, 1), &m, &p, &Sequential).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            assert_eq!(r.mean_f_distance, 0.0);
            assert_eq!(r.mean_euclid_distance, 0.0);
        }
    }

    #[test]
    fn difference_is_exact_after_steps() {
        let m = builtin_double_well(2, 0.5, 0.01, InteractionSign::Attractive).unwrap();
        let mut cfg = ou_config(16, 3);
        cfg.dim = 2;
        cfg.m = 64;
        cfg.nu = InitialLaw::Gaussian { mean: vec![0.0, 0.0], std: 0.5 };
        cfg.mu = InitialLaw::UniformBall { center: vec![1.0, 0.0], radius: 0.5 };
        let mut ens = CoupledEnsemble::initialize(&cfg, &m).unwrap();
        let mix = MixingFunctions::new(cfg.delta).unwrap();
        for _ in 0..20 {
            step_coupled(&mut ens, &m, &mix, &Sequential).unwrap();
            for i in 0..ens.len() {
                for k in 0..2 {
                    assert_eq!(ens.difference.row(i)[k], ens.nonlinear.row(i)[k] - ens.particles.row(i)[k]);
                }
            }
        }
        assert_eq!(ens.step, 20);
        assert!(matches!(ens.mean_field, MeanFieldApprox::Reference(_)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ou_config(1, 0);
        assert!(cfg.validate().is_err());
        cfg.n = 4;
        cfg.m = 2;
        assert!(cfg.validate().is_err());
        cfg.m = 4;
        cfg.h = 0.0;
        assert!(cfg.validate().is_err());
        cfg.h = 0.01;
        cfg.output_times = vec![2.0];
        assert!(cfg.validate().is_err());
    }
}
