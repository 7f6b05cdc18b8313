//! Confinement/interaction potential pairs.
//!
//! A model is described through gradients only: `∇V`, `∇W`, and a curvature
//! profile κ with
//!
//! ```text
//! ⟨∇V(x) − ∇V(y), x − y⟩ ≥ κ(‖x − y‖)·‖x − y‖²
//! ```
//!
//! plus a user-asserted tail certificate `κ(r) ≥ κ_∞ > 0` for `r ≥ r*`.
//! [`validate_assumptions`] checks all of this by random sampling.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, norm, sqrt};
use crate::rates::RateProfile;
use crate::rng::{Channel, NoiseStream};

/// Number of cells of the grid used for κ tail and continuity checks.
pub const VALIDATION_GRID_CELLS: usize = 10_000;

/// Gradients of the potentials and the curvature profile.
pub trait Potentials: Send + Sync {
    /// Writes `∇V(x)` into `out`.
    fn confinement_gradient(&self, x: &[f64], out: &mut [f64]);
    /// Writes `∇W(x)` into `out`.
    fn interaction_gradient(&self, x: &[f64], out: &mut [f64]);
    fn kappa(&self, r: f64) -> f64;

    /// `Some(ρ)` when `∇V(x) = ρx`.
    fn linear_confinement(&self) -> Option<f64> {
        None
    }

    /// `Some(k)` when `∇W(x) = kx`; interaction drifts then only need the
    /// mean of the measure.
    fn linear_interaction(&self) -> Option<f64> {
        None
    }
}

/// Asserted behaviour of κ at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaTail {
    /// `r*`: κ(r) ≥ `floor` for all r ≥ `radius`.
    pub radius: f64,
    /// `κ_∞ > 0`.
    pub floor: f64,
    /// κ is nondecreasing on `[radius, ∞)`, so `inf_{r≥s} κ(r)` can be read
    /// off a finite window.
    pub nondecreasing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InteractionSign {
    /// `W(x) = +λ‖x‖²`.
    Attractive,
    /// `W(x) = −λ‖x‖²`.
    Repulsive,
}

impl InteractionSign {
    pub fn factor(self) -> f64 {
        match self {
            InteractionSign::Attractive => 1.0,
            InteractionSign::Repulsive => -1.0,
        }
    }
}

/// `V(x) = ‖x‖⁴ − a‖x‖²`, `W(x) = ±λ‖x‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWell {
    pub a: f64,
    /// `∇W(x) = coupling·x`.
    pub coupling: f64,
}

impl Potentials for DoubleWell {
    fn confinement_gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = 4.0 * dot(x, x) - 2.0 * self.a;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }

    fn interaction_gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.coupling * xi;
        }
    }

    fn kappa(&self, r: f64) -> f64 {
        r * r - 2.0 * self.a
    }

    fn linear_interaction(&self) -> Option<f64> {
        Some(self.coupling)
    }
}

/// `V(x) = ρ‖x‖²/2`, `W(x) = λ‖x‖²`: an Ornstein-Uhlenbeck reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub rho: f64,
    pub coupling: f64,
}

impl Potentials for Quadratic {
    fn confinement_gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.rho * xi;
        }
    }

    fn interaction_gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.coupling * xi;
        }
    }

    fn kappa(&self, _r: f64) -> f64 {
        self.rho
    }

    fn linear_confinement(&self) -> Option<f64> {
        Some(self.rho)
    }

    fn linear_interaction(&self) -> Option<f64> {
        Some(self.coupling)
    }
}

/// A potential pair together with the constants the bounds consume.
///
/// Immutable once built; cloning shares the potentials.
#[derive(Clone)]
pub struct PotentialModel {
    name: String,
    dim: usize,
    potentials: Arc<dyn Potentials>,
    tail: KappaTail,
    lip_w: f64,
    m_v: f64,
    big_m_v: f64,
    m_w: Option<f64>,
    kappa_jump_bound: f64,
}

impl core::fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PotentialModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("tail", &self.tail)
            .field("lip_w", &self.lip_w)
            .field("m_v", &self.m_v)
            .field("big_m_v", &self.big_m_v)
            .field("m_w", &self.m_w)
            .finish()
    }
}

impl PotentialModel {
    /// Builds a model and derives `m_V = κ_∞/2` and
    /// `M_V = sup_{r ≤ 2r*} (m_V − κ(r))·r²` from the curvature profile.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        potentials: Arc<dyn Potentials>,
        tail: KappaTail,
        lip_w: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if !(tail.floor > 0.0) || !(tail.radius >= 0.0) || !tail.radius.is_finite() {
            return Err(Error::invalid(
                "kappa_tail",
                format!("need κ_∞ > 0 and finite r* ≥ 0, got {tail:?}"),
            ));
        }
        if !(lip_w >= 0.0) || !lip_w.is_finite() {
            return Err(Error::invalid("lip_w", format!("must be finite and ≥ 0, got {lip_w}")));
        }
        let mut model = PotentialModel {
            name: name.into(),
            dim,
            potentials,
            tail,
            lip_w,
            m_v: 0.0,
            big_m_v: 0.0,
            m_w: None,
            kappa_jump_bound: f64::INFINITY,
        };
        model.m_v = tail.floor / 2.0;
        let end = 2.0 * tail.radius;
        let cells = VALIDATION_GRID_CELLS;
        let mut sup: f64 = 0.0;
        for k in 0..=cells {
            let r = end * k as f64 / cells as f64;
            sup = sup.max((model.m_v - model.kappa(r)) * r * r);
        }
        model.big_m_v = sup;
        Ok(model)
    }

    /// Overrides the derived constants of `⟨∇V(x)−∇V(y),x−y⟩ ≥ m_V‖x−y‖² − M_V`.
    pub fn with_convexity_at_infinity(mut self, m_v: f64, big_m_v: f64) -> Result<Self> {
        if !(m_v > 0.0) || !(big_m_v >= 0.0) {
            return Err(Error::invalid(
                "m_V/M_V",
                format!("need m_V > 0 and M_V ≥ 0, got {m_v}, {big_m_v}"),
            ));
        }
        self.m_v = m_v;
        self.big_m_v = big_m_v;
        Ok(self)
    }

    /// Declares `⟨∇W(x) − ∇W(y), x − y⟩ ≥ −M_W`.
    pub fn with_interaction_floor(mut self, m_w: f64) -> Result<Self> {
        if !(m_w >= 0.0) || !m_w.is_finite() {
            return Err(Error::invalid("M_W", format!("must be finite and ≥ 0, got {m_w}")));
        }
        self.m_w = Some(m_w);
        Ok(self)
    }

    /// Largest admissible `|κ(r) − κ(s)|` between neighbours of the
    /// validation grid.
    pub fn with_kappa_jump_bound(mut self, bound: f64) -> Self {
        self.kappa_jump_bound = bound;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail(&self) -> KappaTail {
        self.tail
    }

    /// Lipschitz constant `L` of `∇W`.
    pub fn lip_w(&self) -> f64 {
        self.lip_w
    }

    pub fn m_v(&self) -> f64 {
        self.m_v
    }

    pub fn big_m_v(&self) -> f64 {
        self.big_m_v
    }

    pub fn m_w(&self) -> Option<f64> {
        self.m_w
    }

    pub fn potentials(&self) -> &dyn Potentials {
        &*self.potentials
    }

    #[inline]
    pub fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        self.potentials.confinement_gradient(x, out)
    }

    #[inline]
    pub fn grad_w(&self, x: &[f64], out: &mut [f64]) {
        self.potentials.interaction_gradient(x, out)
    }

    #[inline]
    pub fn kappa(&self, r: f64) -> f64 {
        self.potentials.kappa(r)
    }

    /// `κ_−(r) = max(0, −κ(r))`.
    #[inline]
    pub fn kappa_minus(&self, r: f64) -> f64 {
        (-self.kappa(r)).max(0.0)
    }

    pub fn linear_confinement(&self) -> Option<f64> {
        self.potentials.linear_confinement()
    }

    pub fn linear_interaction(&self) -> Option<f64> {
        self.potentials.linear_interaction()
    }

    /// `‖∇V(0)‖`.
    pub fn grad_v_at_origin(&self) -> f64 {
        let zero = vec![0.0; self.dim];
        let mut out = vec![0.0; self.dim];
        self.grad_v(&zero, &mut out);
        norm(&out)
    }

    /// Upper end of the grid used for tail and continuity checks.
    pub fn validation_range(&self) -> f64 {
        2.0 * self.tail.radius.max(1.0)
    }
}

/// `V(x) = ‖x‖⁴ − a‖x‖²`, `W(x) = sign·λ‖x‖²` with `κ(r) = r² − 2a`.
pub fn builtin_double_well(dim: usize, a: f64, lambda: f64, sign: InteractionSign) -> Result<PotentialModel> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("must be > 0, got {a}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("must be ≥ 0, got {lambda}")));
    }
    let potentials = DoubleWell {
        a,
        coupling: 2.0 * sign.factor() * lambda,
    };
    // κ(r) = r² − 2a ≥ 2a once r ≥ 2√a.
    let tail = KappaTail {
        radius: 2.0 * sqrt(a),
        floor: 2.0 * a,
        nondecreasing: true,
    };
    let model = PotentialModel::new("double_well", dim, Arc::new(potentials), tail, 2.0 * lambda)?;
    let range = model.validation_range();
    // |κ'(r)| = 2r ≤ 2·range on the validation grid.
    let jump = 2.0 * range * range / VALIDATION_GRID_CELLS as f64 * (1.0 + 1e-9);
    let model = model.with_kappa_jump_bound(jump);
    match sign {
        InteractionSign::Attractive => model.with_interaction_floor(0.0),
        InteractionSign::Repulsive => Ok(model),
    }
}

/// `V(x) = ρ‖x‖²/2`, `W(x) = λ‖x‖²`; κ ≡ ρ, `m_V = ρ`, `M_V = 0`.
pub fn builtin_quadratic(dim: usize, rho: f64, lambda: f64) -> Result<PotentialModel> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid("rho", format!("must be > 0, got {rho}")));
    }
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite"));
    }
    let potentials = Quadratic {
        rho,
        coupling: 2.0 * lambda,
    };
    let tail = KappaTail {
        radius: 0.0,
        floor: rho,
        nondecreasing: true,
    };
    let model = PotentialModel::new("quadratic", dim, Arc::new(potentials), tail, 2.0 * lambda.abs())?
        .with_convexity_at_infinity(rho, 0.0)?
        .with_kappa_jump_bound(1e-12);
    if lambda >= 0.0 {
        model.with_interaction_floor(0.0)
    } else {
        Ok(model)
    }
}

/// Outcome of one sampled check. `worst_slack ≥ 0` means satisfied.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub worst_slack: f64,
    /// The sample pair (or grid point, as a 1-vector) achieving `worst_slack`.
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    pub eta: f64,
    pub c: f64,
    /// `η < c`: the contraction hypothesis.
    pub eta_below_c: bool,
    /// `η < m_V/2`: the alternative to an interaction floor `M_W`.
    pub eta_below_half_m_v: bool,
    /// The moment bound has one of its two hypotheses.
    pub moment_bound_applicable: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.eta_below_c
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    samples: usize,
    worst: f64,
    pair: Option<(Vec<f64>, Vec<f64>)>,
    failed: bool,
    tolerance: f64,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tracker {
            name,
            samples: 0,
            worst: f64::INFINITY,
            pair: None,
            failed: false,
            tolerance,
        }
    }

    /// `slack` must be ≥ −tolerance·scale; NaN always fails.
    fn record(&mut self, slack: f64, scale: f64, x: &[f64], y: &[f64]) {
        self.samples += 1;
        let bad = !slack.is_finite() || slack < -self.tolerance * scale.max(1.0);
        if bad && !self.failed {
            // First failure is kept; NaN pairs are the most useful to report.
            self.failed = true;
            self.worst = slack;
            self.pair = Some((x.to_vec(), y.to_vec()));
            return;
        }
        if !self.failed && slack < self.worst {
            self.worst = slack;
            self.pair = Some((x.to_vec(), y.to_vec()));
        }
    }

    fn finish(self, detail: String) -> CheckOutcome {
        CheckOutcome {
            name: self.name,
            passed: !self.failed,
            samples: self.samples,
            worst_slack: self.worst,
            worst_pair: self.pair,
            detail,
        }
    }
}

/// Sampled check of the standing assumptions against a tabulated profile.
///
/// Checks, by `samples` random pairs (x, y) at several length scales:
///
/// * `kappa_lower_bound`: `⟨∇V(x)−∇V(y),x−y⟩ ≥ κ(‖x−y‖)‖x−y‖²`;
/// * `convexity_at_infinity`: `⟨∇V(x)−∇V(y),x−y⟩ ≥ m_V‖x−y‖² − M_V`;
/// * `interaction_symmetry`: `∇W(0) = 0` and `∇W(−x) = −∇W(x)`;
/// * `interaction_f_lipschitz`: `‖∇W(x)−∇W(y)‖ ≤ η f(‖x−y‖)`;
/// * `interaction_linear_growth`: `‖∇W(x)‖ ≤ η‖x‖`;
/// * `interaction_floor` (when `M_W` is set):
///   `⟨∇W(x)−∇W(y),x−y⟩ ≥ −M_W`;
///
/// and on a radial grid: `kappa_tail` (`κ ≥ κ_∞` beyond `r*`) and
/// `kappa_continuity`.
///
/// `eta` is checked against the profile's `c` but need not be admissible,
/// so that `η ≥ c` can be reported rather than rejected.
pub fn validate_assumptions(
    model: &PotentialModel,
    profile: &RateProfile,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if samples < 1000 {
        return Err(Error::invalid("samples", format!("need at least 10³, got {samples}")));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid("eta", format!("must be finite and ≥ 0, got {eta}")));
    }
    let d = model.dim();
    let scales = [0.05, 0.3, 1.0, 3.0];

    let mut kappa_check = Tracker::new("kappa_lower_bound", 1e-9);
    let mut convex_check = Tracker::new("convexity_at_infinity", 1e-9);
    let mut sym_check = Tracker::new("interaction_symmetry", 1e-12);
    let mut lip_check = Tracker::new("interaction_f_lipschitz", 1e-9);
    let mut growth_check = Tracker::new("interaction_linear_growth", 1e-9);
    let mut floor_check = model.m_w().map(|_| Tracker::new("interaction_floor", 1e-9));

    let zero = vec![0.0; d];
    let mut buf = vec![0.0; d];
    model.grad_w(&zero, &mut buf);
    sym_check.record(-norm(&buf), 1.0, &zero, &zero);

    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut neg = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut diff = vec![0.0; d];
    for j in 0..samples {
        let mut stream = NoiseStream::new(seed, Channel::Validation, 0, j as u64);
        let sx = scales[j % scales.len()];
        let sy = scales[(j / scales.len()) % scales.len()];
        stream.fill_gaussian(&mut x);
        stream.fill_gaussian(&mut y);
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            *xi *= sx;
            *yi = *xi + sy * *yi;
        }
        for (di, (xi, yi)) in diff.iter_mut().zip(x.iter().zip(&y)) {
            *di = xi - yi;
        }
        let r = norm(&diff);

        model.grad_v(&x, &mut gx);
        model.grad_v(&y, &mut gy);
        let inner: f64 = gx.iter().zip(&gy).zip(&diff).map(|((a, b), e)| (a - b) * e).sum();
        if r > 0.0 {
            let ratio = inner / (r * r);
            let kappa = model.kappa(r);
            kappa_check.record(ratio - kappa, ratio.abs() + kappa.abs(), &x, &y);
        }
        let rhs = model.m_v() * r * r - model.big_m_v();
        convex_check.record(inner - rhs, inner.abs() + rhs.abs(), &x, &y);

        model.grad_w(&x, &mut gx);
        model.grad_w(&y, &mut gy);
        for (n, xi) in neg.iter_mut().zip(&x) {
            *n = -xi;
        }
        model.grad_w(&neg, &mut buf);
        let asym = norm(&gx.iter().zip(&buf).map(|(a, b)| a + b).collect::<Vec<_>>());
        sym_check.record(-asym, norm(&gx), &x, &neg);

        let dw = norm(&gx.iter().zip(&gy).map(|(a, b)| a - b).collect::<Vec<_>>());
        let allowed = eta * profile.f(r);
        lip_check.record(allowed - dw, allowed + dw, &x, &y);

        let nx = norm(&x);
        let gnorm = norm(&gx);
        growth_check.record(eta * nx - gnorm, eta * nx + gnorm, &x, &zero);

        if let (Some(tracker), Some(m_w)) = (floor_check.as_mut(), model.m_w()) {
            let winner: f64 = gx.iter().zip(&gy).zip(&diff).map(|((a, b), e)| (a - b) * e).sum();
            tracker.record(winner + m_w, winner.abs() + m_w, &x, &y);
        }
    }

    let tail = model.tail();
    let mut tail_check = Tracker::new("kappa_tail", 1e-12);
    let mut cont_check = Tracker::new("kappa_continuity", 1e-12);
    let range = model.validation_range();
    let tail_end = 2.0 * tail.radius + 1.0;
    let cells = VALIDATION_GRID_CELLS;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=cells {
        let r = range * k as f64 / cells as f64;
        let kr = model.kappa(r);
        if let Some((rp, kp)) = prev {
            let jump = (kr - kp).abs();
            cont_check.record(model.kappa_jump_bound - jump, 1.0, &[rp], &[r]);
        }
        prev = Some((r, kr));
        let rt = tail.radius + (tail_end - tail.radius) * k as f64 / cells as f64;
        tail_check.record(model.kappa(rt) - tail.floor, tail.floor, &[rt], &[rt]);
    }

    let mut checks = vec![
        kappa_check.finish(String::from("κ-inequality on random pairs")),
        convex_check.finish(format!("m_V = {}, M_V = {}", model.m_v(), model.big_m_v())),
        tail_check.finish(format!("κ ≥ {} on [{}, {}]", tail.floor, tail.radius, tail_end)),
        cont_check.finish(format!("|Δκ| ≤ {} per cell on [0, {range}]", model.kappa_jump_bound)),
        sym_check.finish(String::from("∇W(0) = 0 and ∇W odd")),
        lip_check.finish(format!("‖∇W(x)−∇W(y)‖ ≤ η f(‖x−y‖), η = {eta}")),
        growth_check.finish(format!("‖∇W(x)‖ ≤ η‖x‖, η = {eta}")),
    ];
    if let Some(tracker) = floor_check {
        let m_w = model.m_w().unwrap_or(0.0);
        checks.push(tracker.finish(format!("⟨∇W(x)−∇W(y),x−y⟩ ≥ −{m_w}")));
    }

    let c = profile.c();
    let eta_below_half_m_v = eta < model.m_v() / 2.0;
    Ok(ValidationReport {
        checks,
        eta,
        c,
        eta_below_c: eta < c,
        eta_below_half_m_v,
        moment_bound_applicable: eta_below_half_m_v || model.m_w().is_some(),
    })
}

/// Uniform-in-time bound on `E‖X̄_t‖²` for the nonlinear process.
///
/// The second moment `u` obeys `u' ≤ A + 2‖∇V(0)‖√u − 2m·u` with either
/// `A = 2M_V + M_W + 2d, m = m_V` (interaction floor `M_W` available) or
/// `A = 2M_V + 2d, m = m_V − η` (when `η < m_V/2`). The bound is the larger
/// of the positive fixed point and `second_moment_0`; when both hypotheses
/// hold the smaller fixed point is used.
pub fn gronwall_moment_bound(model: &PotentialModel, eta: f64, second_moment_0: f64) -> Result<f64> {
    if !(second_moment_0 >= 0.0) || !(eta >= 0.0) {
        return Err(Error::invalid(
            "eta/second_moment_0",
            format!("need η ≥ 0 and E‖X̄₀‖² ≥ 0, got {eta}, {second_moment_0}"),
        ));
    }
    let d = model.dim() as f64;
    let g = model.grad_v_at_origin();
    let fixed_point = |a: f64, m: f64| {
        let root = (g + sqrt(g * g + 2.0 * m * a)) / (2.0 * m);
        root * root
    };
    let mut best: Option<f64> = None;
    if let Some(m_w) = model.m_w() {
        best = Some(fixed_point(2.0 * model.big_m_v() + m_w + 2.0 * d, model.m_v()));
    }
    if eta < model.m_v() / 2.0 {
        let u = fixed_point(2.0 * model.big_m_v() + 2.0 * d, model.m_v() - eta);
        best = Some(best.map_or(u, |b| b.min(u)));
    }
    match best {
        Some(u) => Ok(u.max(second_moment_0)),
        None => Err(Error::Inadmissible(format!(
            "moment bound needs η < m_V/2 (η = {eta}, m_V = {}) or an interaction floor M_W",
            model.m_v()
        ))),
    }
}
