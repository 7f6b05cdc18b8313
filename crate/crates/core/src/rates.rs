//! Coupling geometry: the radii R₀, R₁, the concave distance `f` and the
//! contraction rate `c`.
//!
//! With `κ_− = max(0, −κ)`:
//!
//! ```text
//! R₀ = inf{s ≥ 0 : κ(r) ≥ 0 for all r ≥ s}
//! R₁ = inf{s ≥ R₀ : s(s − R₀)·κ(r) ≥ 8 for all r ≥ s}
//! φ(r) = exp(−¼ ∫₀ʳ s κ_−(s) ds)       Φ(r) = ∫₀ʳ φ
//! Ψ(r) = ∫₀^{r∧R₁} Φ/φ                  c = 1/Ψ(R₁)
//! g(r) = 1 − c Ψ(r)/2                   f(r) = ∫₀ʳ φ g
//! ```
//!
//! All integrals are cumulative adaptive Simpson on a shared grid with R₀
//! and R₁ inserted as nodes. Between nodes the tables are interpolated
//! linearly; beyond R₁, `f` is linear with slope φ(R₀)/2.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, sqrt};
use crate::model::PotentialModel;
use crate::numerics::{adaptive_simpson, bisect_threshold, golden_section_max};

const ROOT_TOL: f64 = 1e-12;
const SCAN_CELLS: usize = 10_000;
const R1_LIMIT: f64 = 1e6;

/// `inf{s ≥ 0 : κ(r) ≥ 0 ∀ r ≥ s}`.
///
/// κ is scanned on `[0, r*]` for the last negative sample, then the sign
/// change is bisected. Fails if κ is negative beyond the certified radius.
pub fn compute_r0(model: &PotentialModel) -> Result<f64> {
    let tail = model.tail();
    let tail_end = 2.0 * tail.radius + 1.0;
    for k in 0..=SCAN_CELLS {
        let r = tail.radius + (tail_end - tail.radius) * k as f64 / SCAN_CELLS as f64;
        let kr = model.kappa(r);
        if !(kr >= 0.0) {
            return Err(Error::Inadmissible(format!(
                "κ({r}) = {kr} < 0 beyond the certified tail radius r* = {}",
                tail.radius
            )));
        }
    }
    if tail.radius == 0.0 {
        return Ok(0.0);
    }
    let node = |k: usize| tail.radius * k as f64 / SCAN_CELLS as f64;
    let last_negative = (0..SCAN_CELLS).rev().find(|&k| {
        let kr = model.kappa(node(k));
        !(kr >= 0.0)
    });
    match last_negative {
        None => Ok(0.0),
        Some(k) => {
            if model.kappa(node(k)).is_nan() {
                return Err(Error::Numerical(format!("κ({}) is NaN", node(k))));
            }
            Ok(bisect_threshold(|r| model.kappa(r) >= 0.0, node(k), node(k + 1), ROOT_TOL))
        }
    }
}

/// `inf_{r ≥ s} κ(r)`, using the tail certificate beyond a finite window.
fn kappa_infimum_from(model: &PotentialModel, s: f64) -> f64 {
    const WINDOW_POINTS: usize = 1000;
    let tail = model.tail();
    let (end, beyond) = if tail.nondecreasing {
        let end = s.max(tail.radius);
        (end, model.kappa(end))
    } else {
        (4.0 * s.max(tail.radius) + 10.0, tail.floor)
    };
    let mut inf = beyond;
    if end > s {
        for k in 0..=WINDOW_POINTS {
            let r = s + (end - s) * k as f64 / WINDOW_POINTS as f64;
            inf = inf.min(model.kappa(r));
        }
    } else {
        inf = inf.min(model.kappa(s));
    }
    inf
}

/// `inf{s ≥ R₀ : s(s − R₀)·inf_{r≥s} κ(r) ≥ 8}`.
///
/// The condition is monotone in `s` (both factors are nondecreasing on
/// `[R₀, ∞)`), so a doubling scan followed by bisection finds it.
pub fn compute_r1(model: &PotentialModel, r0: f64) -> Result<f64> {
    if !(r0 >= 0.0) {
        return Err(Error::invalid("r0", format!("must be ≥ 0, got {r0}")));
    }
    let holds = |s: f64| s * (s - r0) * kappa_infimum_from(model, s) >= 8.0;
    let mut lo = r0;
    let mut step = 1.0;
    loop {
        let hi = r0 + step;
        if hi > R1_LIMIT {
            return Err(Error::Inadmissible(format!(
                "no R₁ ≤ {R1_LIMIT}: κ tail too weak (κ_∞ = {})",
                model.tail().floor
            )));
        }
        if holds(hi) {
            return Ok(bisect_threshold(holds, lo, hi, ROOT_TOL));
        }
        lo = hi;
        step *= 2.0;
    }
}

/// Grid and quadrature settings for [`tabulate_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    /// Upper end of the grid; defaults to `max(2R₁, 10R₀ + 10)`.
    pub r_max: Option<f64>,
    /// Number of uniform cells before R₀ and R₁ are inserted.
    pub cells: usize,
    /// Absolute tolerance of every cumulative integral.
    pub tol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            r_max: None,
            cells: 4000,
            tol: 1e-10,
        }
    }
}

/// Tabulated coupling geometry for one model and interaction strength `η`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateProfile {
    r0: f64,
    r1: f64,
    c: f64,
    eta: f64,
    decay_rate: f64,
    phi_r0: f64,
    quadrature_tol: f64,
    grid: Vec<f64>,
    /// `∫₀ʳ s κ_−(s) ds`.
    kappa_integral: Vec<f64>,
    phi: Vec<f64>,
    big_phi: Vec<f64>,
    /// `∫₀^{r∧R₁} Φ/φ`.
    psi: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
}

/// Builds the profile for `model` and checks `η < c`.
pub fn tabulate_profile(model: &PotentialModel, eta: f64, options: &ProfileOptions) -> Result<RateProfile> {
    tabulate_geometry(model, options)?.with_eta(eta)
}

/// Builds the η-independent part of the profile (`eta` is set to 0).
pub fn tabulate_geometry(model: &PotentialModel, options: &ProfileOptions) -> Result<RateProfile> {
    let r0 = compute_r0(model)?;
    let r1 = compute_r1(model, r0)?;
    let r_max = options.r_max.unwrap_or_else(|| (2.0 * r1).max(10.0 * r0 + 10.0));
    if !(r_max >= 2.0 * r1) {
        return Err(Error::invalid("r_max", format!("must be ≥ 2R₁ = {}, got {r_max}", 2.0 * r1)));
    }
    if options.cells < 1000 {
        return Err(Error::invalid("cells", format!("need at least 10³, got {}", options.cells)));
    }
    if !(options.tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let grid = build_grid(r_max, options.cells, &[r0, r1]);
    let mut tables = Cumulative::new(model, &grid, r0, r1, options.tol);
    tables.fill()?;
    let Cumulative {
        kappa_integral,
        big_phi,
        psi,
        f,
        c,
        ..
    } = tables;
    let phi: Vec<f64> = kappa_integral.iter().map(|i| exp(-i / 4.0)).collect();
    let r0_index = grid.iter().position(|&r| r == r0).expect("R₀ is a grid node");
    let phi_r0 = phi[r0_index];
    let g = grid
        .iter()
        .zip(&psi)
        .map(|(&r, &p)| if r >= r1 { 0.5 } else { 1.0 - 0.5 * c * p })
        .collect();
    let all_finite = [&phi, &big_phi, &psi, &f].iter().all(|t| t.iter().all(|x| x.is_finite()));
    if !all_finite || !c.is_finite() || !(c > 0.0) {
        return Err(Error::Numerical(format!("non-finite rate profile (c = {c})")));
    }
    Ok(RateProfile {
        r0,
        r1,
        c,
        eta: 0.0,
        decay_rate: 2.0 * c,
        phi_r0,
        quadrature_tol: options.tol,
        grid,
        kappa_integral,
        phi,
        big_phi,
        psi,
        g,
        f,
    })
}

fn build_grid(r_max: f64, cells: usize, special: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=cells).map(|k| r_max * k as f64 / cells as f64).collect();
    for &v in special {
        let snap = 1e-12 * v.max(1.0);
        match grid.iter_mut().find(|r| (**r - v).abs() <= snap) {
            Some(node) => *node = v,
            None => grid.push(v),
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    grid
}

/// Cumulative integrals on a grid, with exact local evaluation inside cells.
struct Cumulative<'a> {
    model: &'a PotentialModel,
    grid: &'a [f64],
    r0: f64,
    r1: f64,
    /// Tolerance per unit length.
    tol_density: f64,
    kappa_integral: Vec<f64>,
    big_phi: Vec<f64>,
    psi: Vec<f64>,
    f: Vec<f64>,
    c: f64,
}

impl<'a> Cumulative<'a> {
    fn new(model: &'a PotentialModel, grid: &'a [f64], r0: f64, r1: f64, tol: f64) -> Self {
        let r_max = *grid.last().expect("nonempty grid");
        Cumulative {
            model,
            grid,
            r0,
            r1,
            tol_density: tol / r_max,
            kappa_integral: Vec::with_capacity(grid.len()),
            big_phi: Vec::with_capacity(grid.len()),
            psi: Vec::with_capacity(grid.len()),
            f: Vec::with_capacity(grid.len()),
            c: f64::NAN,
        }
    }

    fn from_profile(model: &'a PotentialModel, profile: &'a RateProfile) -> Self {
        let r_max = *profile.grid.last().expect("nonempty grid");
        Cumulative {
            model,
            grid: &profile.grid,
            r0: profile.r0,
            r1: profile.r1,
            tol_density: profile.quadrature_tol / r_max,
            kappa_integral: profile.kappa_integral.clone(),
            big_phi: profile.big_phi.clone(),
            psi: profile.psi.clone(),
            f: profile.f.clone(),
            c: profile.c,
        }
    }

    fn tol(&self, a: f64, b: f64) -> f64 {
        self.tol_density * (b - a).abs()
    }

    fn quad<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        adaptive_simpson(f, a, b, self.tol(a, b))
    }

    fn kappa_integral_at(&self, k: usize, s: f64) -> Result<f64> {
        let a = self.grid[k];
        if a >= self.r0 {
            return Ok(self.kappa_integral[k]);
        }
        let model = self.model;
        Ok(self.kappa_integral[k] + self.quad(|u| u * model.kappa_minus(u), a, s)?)
    }

    fn phi_at(&self, k: usize, s: f64) -> Result<f64> {
        Ok(exp(-self.kappa_integral_at(k, s)? / 4.0))
    }

    fn big_phi_at(&self, k: usize, s: f64) -> Result<f64> {
        let a = self.grid[k];
        if a >= self.r0 {
            return Ok(self.big_phi[k] + self.phi_at(k, a)? * (s - a));
        }
        let inner = self.quad(|u| self.phi_at(k, u).unwrap_or(f64::NAN), a, s)?;
        Ok(self.big_phi[k] + inner)
    }

    fn psi_integrand(&self, k: usize, u: f64) -> f64 {
        match (self.big_phi_at(k, u), self.phi_at(k, u)) {
            (Ok(p), Ok(q)) => p / q,
            _ => f64::NAN,
        }
    }

    fn psi_at(&self, k: usize, s: f64) -> Result<f64> {
        let a = self.grid[k];
        let s = s.min(self.r1);
        if a >= self.r1 {
            return Ok(self.psi[k]);
        }
        Ok(self.psi[k] + self.quad(|u| self.psi_integrand(k, u), a, s)?)
    }

    fn g_at(&self, k: usize, s: f64) -> Result<f64> {
        if s >= self.r1 {
            return Ok(0.5);
        }
        Ok(1.0 - 0.5 * self.c * self.psi_at(k, s)?)
    }

    fn f_at(&self, k: usize, s: f64) -> Result<f64> {
        let a = self.grid[k];
        if a >= self.r1 {
            let phi_r0 = exp(-self.kappa_integral[k] / 4.0);
            return Ok(self.f[k] + 0.5 * phi_r0 * (s - a));
        }
        let inner = self.quad(
            |u| match (self.phi_at(k, u), self.g_at(k, u)) {
                (Ok(p), Ok(g)) => p * g,
                _ => f64::NAN,
            },
            a,
            s,
        )?;
        Ok(self.f[k] + inner)
    }

    fn fill(&mut self) -> Result<()> {
        let n = self.grid.len();
        self.kappa_integral.push(0.0);
        self.big_phi.push(0.0);
        self.psi.push(0.0);
        for k in 0..n - 1 {
            let b = self.grid[k + 1];
            let i = self.kappa_integral_at(k, b)?;
            let p = self.big_phi_at(k, b)?;
            let q = self.psi_at(k, b)?;
            self.kappa_integral.push(i);
            self.big_phi.push(p);
            self.psi.push(q);
        }
        let r1_index = self.grid.iter().position(|&r| r == self.r1).expect("R₁ is a grid node");
        self.c = 1.0 / self.psi[r1_index];
        self.f.push(0.0);
        for k in 0..n - 1 {
            let v = self.f_at(k, self.grid[k + 1])?;
            self.f.push(v);
        }
        Ok(())
    }
}

fn interpolate(grid: &[f64], table: &[f64], r: f64) -> f64 {
    let j = grid.partition_point(|&x| x <= r);
    if j == 0 {
        return table[0];
    }
    if j >= grid.len() {
        return table[grid.len() - 1];
    }
    let (a, b) = (grid[j - 1], grid[j]);
    let w = (r - a) / (b - a);
    table[j - 1] + w * (table[j] - table[j - 1])
}

impl RateProfile {
    /// The same geometry with interaction strength `eta`; rejects `η ≥ c`.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid("eta", format!("must be finite and ≥ 0, got {eta}")));
        }
        if eta >= self.c {
            return Err(Error::Inadmissible(format!(
                "η = {eta} must be below the contraction rate c = {}",
                self.c
            )));
        }
        self.eta = eta;
        self.decay_rate = 2.0 * (self.c - eta);
        Ok(self)
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `2(c − η)`.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn phi_r0(&self) -> f64 {
        self.phi_r0
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    pub fn r_max(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn phi_table(&self) -> &[f64] {
        &self.phi
    }

    pub fn big_phi_table(&self) -> &[f64] {
        &self.big_phi
    }

    pub fn g_table(&self) -> &[f64] {
        &self.g
    }

    pub fn f_table(&self) -> &[f64] {
        &self.f
    }

    pub fn psi_table(&self) -> &[f64] {
        &self.psi
    }

    /// The concave distance `f(r)`.
    pub fn f(&self, r: f64) -> f64 {
        let r_max = self.r_max();
        if r > r_max {
            return self.f[self.f.len() - 1] + 0.5 * self.phi_r0 * (r - r_max);
        }
        interpolate(&self.grid, &self.f, r.max(0.0))
    }

    pub fn phi(&self, r: f64) -> f64 {
        if r >= self.r0 {
            return self.phi_r0;
        }
        interpolate(&self.grid, &self.phi, r.max(0.0))
    }

    pub fn big_phi(&self, r: f64) -> f64 {
        let r_max = self.r_max();
        if r > r_max {
            return self.big_phi[self.big_phi.len() - 1] + self.phi_r0 * (r - r_max);
        }
        interpolate(&self.grid, &self.big_phi, r.max(0.0))
    }

    pub fn g(&self, r: f64) -> f64 {
        if r >= self.r1 {
            return 0.5;
        }
        interpolate(&self.grid, &self.g, r.max(0.0))
    }

    /// Converts a `W_f` value to a `W₁` bound, `2 φ(R₀)⁻¹ · value`.
    pub fn w1_from_wf(&self, value: f64) -> f64 {
        2.0 * value / self.phi_r0
    }
}

/// Result of checking `f'' − r κ f'/4 ≤ −c f/2` at grid midpoints.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FInequalityReport {
    pub checked: usize,
    pub excluded: usize,
    /// Largest `f'' − r κ f'/4 + c f/2` over checked midpoints.
    pub max_slack: f64,
    pub argmax: f64,
    pub tolerance: f64,
    /// `(r, slack)` for failing midpoints, at most 32.
    pub failures: Vec<(f64, f64)>,
}

impl FInequalityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

pub const F_INEQUALITY_TOL: f64 = 1e-8;

/// Checks the differential inequality for `f` at every grid midpoint except
/// those within one cell of R₁, where `f''` jumps.
///
/// Values at midpoints are integrated from the left node (not
/// interpolated); `f' = φg` and `f'' = φ'g + φg'` below R₁, `f' = φ(R₀)/2`
/// and `f'' = 0` above.
pub fn verify_f_inequality(profile: &RateProfile, model: &PotentialModel) -> Result<FInequalityReport> {
    let eval = Cumulative::from_profile(model, profile);
    let grid = &profile.grid;
    let r1 = profile.r1;
    let c = profile.c;
    let r1_index = grid.iter().position(|&r| r == r1).expect("R₁ is a grid node");
    let left = if r1_index > 0 { r1 - grid[r1_index - 1] } else { 0.0 };
    let right = if r1_index + 1 < grid.len() { grid[r1_index + 1] - r1 } else { 0.0 };
    let exclusion = left.max(right);

    let mut report = FInequalityReport {
        checked: 0,
        excluded: 0,
        max_slack: f64::NEG_INFINITY,
        argmax: f64::NAN,
        tolerance: F_INEQUALITY_TOL,
        failures: Vec::new(),
    };
    for k in 0..grid.len() - 1 {
        let m = 0.5 * (grid[k] + grid[k + 1]);
        if (m - r1).abs() < exclusion {
            report.excluded += 1;
            continue;
        }
        let kappa = model.kappa(m);
        let (f, f1, f2) = if m < r1 {
            let phi = eval.phi_at(k, m)?;
            let big_phi = eval.big_phi_at(k, m)?;
            let g = eval.g_at(k, m)?;
            let f = eval.f_at(k, m)?;
            let phi1 = -0.25 * m * model.kappa_minus(m) * phi;
            let g1 = -0.5 * c * big_phi / phi;
            (f, phi * g, phi1 * g + phi * g1)
        } else {
            (eval.f_at(k, m)?, 0.5 * profile.phi_r0, 0.0)
        };
        let slack = f2 - m * kappa * f1 / 4.0 + c * f / 2.0;
        if !slack.is_finite() {
            return Err(Error::Numerical(format!("non-finite f-inequality slack at r = {m}")));
        }
        report.checked += 1;
        if slack > report.max_slack {
            report.max_slack = slack;
            report.argmax = m;
        }
        if slack > F_INEQUALITY_TOL && report.failures.len() < 32 {
            report.failures.push((m, slack));
        }
    }
    Ok(report)
}

/// `ω(δ) = sup_{s ∈ [0, δ]} s κ(s)⁻`, by a 10³-point scan refined with
/// golden-section search around the best sample.
pub fn omega(model: &PotentialModel, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta", format!("must be finite and ≥ 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    const POINTS: usize = 1000;
    let h = |s: f64| s * model.kappa_minus(s);
    let node = |k: usize| delta * k as f64 / POINTS as f64;
    let (mut best_k, mut best) = (0, 0.0);
    for k in 0..=POINTS {
        let v = h(node(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if best_k > 0 && best_k < POINTS {
        let (_, refined) = golden_section_max(h, node(best_k - 1), node(best_k + 1), 1e-14 * delta.max(1.0));
        best = best.max(refined);
    }
    Ok(best)
}

/// Interaction strength `2L/φ(R₀)` implied by an `L`-Lipschitz `∇W`, via
/// `f(r) ≥ φ(R₀)r/2`. It lies below `c` only when `L < c·φ(R₀)/2`.
pub fn sufficient_eta(model: &PotentialModel, profile: &RateProfile) -> f64 {
    2.0 * model.lip_w() / profile.phi_r0
}

/// `(1 + √2)·√C_moment`: a uniform-in-N constant bounding
/// `η(1/√(N−1) + √2/N)·(E‖X̄‖²)^{1/2} ≤ C η N^{−1/2}` for `N ≥ 2`.
pub fn upsilon_constant(c_moment: f64) -> f64 {
    (1.0 + sqrt(2.0)) * sqrt(c_moment)
}

/// `e^{−2(c−η)t}·W_f(0) + (2(c−η))^{−1}·C·η·N^{−1/2}` with `C` from
/// [`upsilon_constant`].
pub fn theorem_bound(profile: &RateProfile, w_f_initial: f64, c_moment: f64, n: usize, t: f64) -> Result<f64> {
    let rate = profile.decay_rate;
    if !(rate > 0.0) {
        return Err(Error::Inadmissible(format!("decay rate 2(c − η) = {rate} is not positive")));
    }
    if n < 2 {
        return Err(Error::invalid("N", format!("need N ≥ 2, got {n}")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("must be ≥ 0, got {t}")));
    }
    let chaos = upsilon_constant(c_moment) * profile.eta / (rate * sqrt(n as f64));
    Ok(exp(-rate * t) * w_f_initial + chaos)
}

/// `(ω(δ) + 2c f(δ)) / (2(c − η))`: the additive error of a coupling with
/// mixing radius δ.
pub fn discretization_allowance(profile: &RateProfile, model: &PotentialModel, delta: f64) -> Result<f64> {
    let w = omega(model, delta)?;
    Ok((w + 2.0 * profile.c * profile.f(delta)) / profile.decay_rate)
}
