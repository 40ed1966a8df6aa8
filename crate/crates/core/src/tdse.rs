//! Finite-difference quantum check of the invariant.
//!
//! H(t) and I(t) are discretised on a Dirichlet grid as tridiagonal Hermitian
//! matrices, wavefunctions are advanced with Crank–Nicolson, and invariance is
//! measured both as constancy of ⟨I(t)⟩ and as the operator residual
//! İ − i[I, H] applied to a test state. ℏ = 1 throughout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::invariant::{CoefficientTrajectory, Coefficients, ExponentialScenario};
use crate::profiles::MassProfile;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest boundary-adjacent amplitude for a state to count as valid.
pub const BOUNDARY_LIMIT: f64 = 1e-8;

/// Imaginary part of ⟨I⟩ above which the operator is reported non-Hermitian.
pub const HERMITICITY_LIMIT: f64 = 1e-8;

/// Interior points of a uniform grid on [xmin, xmax] with ψ = 0 at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    xmin: f64,
    xmax: f64,
    n: usize,
    h: f64,
}

impl SpatialGrid {
    pub fn new(xmin: f64, xmax: f64, n: usize) -> Result<Self> {
        if !(xmax > xmin) || !xmin.is_finite() || !xmax.is_finite() {
            return Err(invalid("xmax", "need finite xmin < xmax"));
        }
        if n < 16 {
            return Err(invalid(
                "n",
                format!("need at least 16 interior points, got {n}"),
            ));
        }
        Ok(Self {
            xmin,
            xmax,
            n,
            h: (xmax - xmin) / (n + 1) as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn bounds(&self) -> (f64, f64) {
        (self.xmin, self.xmax)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.xmin + (j + 1) as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Hamiltonian,
    Invariant,
    Other,
}

/// Tridiagonal complex matrix. `upper[j]` is M[j][j+1], `lower[j]` is M[j+1][j].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub diag: Vec<Complex64>,
    pub upper: Vec<Complex64>,
    pub lower: Vec<Complex64>,
    pub kind: OperatorKind,
}

impl OperatorMatrix {
    pub fn zeros(n: usize, kind: OperatorKind) -> Self {
        Self {
            diag: vec![Complex64::default(); n],
            upper: vec![Complex64::default(); n - 1],
            lower: vec![Complex64::default(); n - 1],
            kind,
        }
    }

    pub fn identity(grid: &SpatialGrid) -> Self {
        let mut m = Self::zeros(grid.n(), OperatorKind::Other);
        m.diag.fill(Complex64::new(1.0, 0.0));
        m
    }

    /// Multiplication by x.
    pub fn position(grid: &SpatialGrid) -> Self {
        let mut m = Self::zeros(grid.n(), OperatorKind::Other);
        for (j, d) in m.diag.iter_mut().enumerate() {
            *d = grid.x(j).into();
        }
        m
    }

    /// p = −i·d/dx by central differences.
    pub fn momentum(grid: &SpatialGrid) -> Self {
        let mut m = Self::zeros(grid.n(), OperatorKind::Other);
        let c = -I / (2.0 * grid.h());
        m.upper.fill(c);
        m.lower.fill(-c);
        m
    }

    /// p² = −d²/dx² by the 3-point second difference.
    pub fn momentum_sq(grid: &SpatialGrid) -> Self {
        let mut m = Self::zeros(grid.n(), OperatorKind::Other);
        let h2 = grid.h() * grid.h();
        m.diag.fill(Complex64::new(2.0 / h2, 0.0));
        m.upper.fill(Complex64::new(-1.0 / h2, 0.0));
        m.lower.fill(Complex64::new(-1.0 / h2, 0.0));
        m
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = self.diag[j] * v[j];
            if j > 0 {
                acc += self.lower[j - 1] * v[j - 1];
            }
            if j + 1 < n {
                acc += self.upper[j] * v[j + 1];
            }
            out.push(acc);
        }
        out
    }

    /// Largest entrywise deviation of M from M†.
    pub fn hermiticity_defect(&self) -> f64 {
        let diag = self.diag.iter().map(|d| d.im.abs());
        let off = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| (u - l.conj()).norm());
        diag.chain(off).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// self += a·other
    pub fn add_scaled(&mut self, a: Complex64, other: &Self) {
        for (x, y) in self.diag.iter_mut().zip(&other.diag) {
            *x += a * y;
        }
        for (x, y) in self.upper.iter_mut().zip(&other.upper) {
            *x += a * y;
        }
        for (x, y) in self.lower.iter_mut().zip(&other.lower) {
            *x += a * y;
        }
    }
}

/// H = p²/(2m) + ½mω²x² + xE with m and E already evaluated at the time of interest.
pub fn hamiltonian_from_values(
    grid: &SpatialGrid,
    m: f64,
    omega: f64,
    efield: f64,
) -> OperatorMatrix {
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let mut op = OperatorMatrix::zeros(n, OperatorKind::Hamiltonian);
    let kinetic_off = Complex64::new(-1.0 / (2.0 * m * h2), 0.0);
    op.upper.fill(kinetic_off);
    op.lower.fill(kinetic_off);
    for (j, d) in op.diag.iter_mut().enumerate() {
        let x = grid.x(j);
        *d = Complex64::new(
            1.0 / (m * h2) + 0.5 * m * omega * omega * x * x + x * efield,
            0.0,
        );
    }
    op
}

/// H(t) = p²/(2m(t)) + ½m(t)ω²x² + x·E.
pub fn build_hamiltonian(
    grid: &SpatialGrid,
    mass: &MassProfile,
    omega: f64,
    efield: f64,
    t: f64,
) -> Result<OperatorMatrix> {
    Ok(hamiltonian_from_values(
        grid,
        mass.mass_at(t)?,
        omega,
        efield,
    ))
}

/// I = ½[αp² + γx + δ(XP + PX) + εx²].
pub fn build_invariant(grid: &SpatialGrid, c: &Coefficients) -> OperatorMatrix {
    let n = grid.n();
    let h = grid.h();
    let h2 = h * h;
    let mut op = OperatorMatrix::zeros(n, OperatorKind::Invariant);
    for j in 0..n {
        let x = grid.x(j);
        op.diag[j] = Complex64::new(
            0.5 * (2.0 * c.alpha / h2 + c.gamma * x + c.epsilon * x * x),
            0.0,
        );
        if j + 1 < n {
            let kinetic = -0.5 * c.alpha / h2;
            // (XP + PX)[j][j+1] = −i(x_j + x_{j+1})/(2h).
            let sym = 0.5 * c.delta * (x + grid.x(j + 1)) / (2.0 * h);
            op.upper[j] = Complex64::new(kinetic, -sym);
            op.lower[j] = Complex64::new(kinetic, sym);
        }
    }
    op
}

/// Complex amplitudes on the interior grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl WaveState {
    /// Normalised Gaussian ∝ exp(−(x−x0)²/(2w²) + i·k·x).
    pub fn gaussian(grid: &SpatialGrid, center: f64, width: f64, momentum: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "must be > 0"));
        }
        let psi = grid
            .points()
            .into_iter()
            .map(|x| {
                let r = (x - center) / width;
                Complex64::from_polar((-0.5 * r * r).exp(), momentum * x)
            })
            .collect();
        let mut s = Self { psi, t: 0.0 };
        s.normalize(grid)?;
        Ok(s)
    }

    /// h·Σ|ψ_j|².
    pub fn norm(&self, grid: &SpatialGrid) -> f64 {
        grid.h() * self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn normalize(&mut self, grid: &SpatialGrid) -> Result<()> {
        let norm = self.norm(grid);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("cannot normalise a zero state".into()));
        }
        let s = 1.0 / norm.sqrt();
        self.psi.iter_mut().for_each(|c| *c *= s);
        Ok(())
    }

    /// max(|ψ_1|, |ψ_n|).
    pub fn boundary_amplitude(&self) -> f64 {
        let first = self.psi.first().map_or(0.0, |c| c.norm());
        let last = self.psi.last().map_or(0.0, |c| c.norm());
        first.max(last)
    }

    pub fn is_valid(&self) -> bool {
        self.boundary_amplitude() < BOUNDARY_LIMIT
    }

    /// |ψ_j|² at every grid point.
    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Thomas algorithm for a tridiagonal system; `lower[j]` is A[j+1][j].
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    if rhs.len() != n || lower.len() + 1 != n || upper.len() + 1 != n {
        return Err(Error::LengthMismatch("tridiagonal system shape".into()));
    }
    let mut c = vec![Complex64::default(); n];
    let mut d = vec![Complex64::default(); n];
    let mut pivot = diag[0];
    if pivot.norm() == 0.0 {
        return Err(Error::SingularPivot { row: 0 });
    }
    if n > 1 {
        c[0] = upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for j in 1..n {
        pivot = diag[j] - lower[j - 1] * c[j - 1];
        if pivot.norm() == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularPivot { row: j });
        }
        if j + 1 < n {
            c[j] = upper[j] / pivot;
        }
        d[j] = (rhs[j] - lower[j - 1] * d[j - 1]) / pivot;
    }
    for j in (0..n - 1).rev() {
        let next = d[j + 1];
        d[j] -= c[j] * next;
    }
    Ok(d)
}

/// One Crank–Nicolson step (1 + i·dt/2·H)ψ' = (1 − i·dt/2·H)ψ.
pub fn crank_nicolson_step(
    psi: &[Complex64],
    hamiltonian: &OperatorMatrix,
    dt: f64,
) -> Result<Vec<Complex64>> {
    let half = I * (0.5 * dt);
    let h_psi = hamiltonian.apply(psi);
    let rhs: Vec<Complex64> = psi
        .iter()
        .zip(&h_psi)
        .map(|(p, hp)| p - half * hp)
        .collect();
    let diag: Vec<Complex64> = hamiltonian.diag.iter().map(|d| 1.0 + half * d).collect();
    let upper: Vec<Complex64> = hamiltonian.upper.iter().map(|u| half * u).collect();
    let lower: Vec<Complex64> = hamiltonian.lower.iter().map(|l| half * l).collect();
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

/// Advances `state` by `steps` Crank–Nicolson steps with H sampled at each
/// step's midpoint, calling `observe` after every step.
pub fn evolve_crank_nicolson_with<F, O>(
    state: &WaveState,
    mut hamiltonian_at: F,
    grid: &SpatialGrid,
    dt: f64,
    steps: usize,
    mut observe: O,
) -> Result<WaveState>
where
    F: FnMut(f64) -> Result<OperatorMatrix>,
    O: FnMut(usize, &WaveState) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be > 0"));
    }
    if state.psi.len() != grid.n() {
        return Err(Error::LengthMismatch(format!(
            "state has {} amplitudes on a grid of {}",
            state.psi.len(),
            grid.n()
        )));
    }
    let t0 = state.t;
    let mut current = state.clone();
    for k in 0..steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let h = hamiltonian_at(t_mid)?;
        current.psi = crank_nicolson_step(&current.psi, &h, dt)?;
        current.t = t0 + (k + 1) as f64 * dt;
        observe(k + 1, &current)?;
    }
    Ok(current)
}

pub fn evolve_crank_nicolson<F>(
    state: &WaveState,
    hamiltonian_at: F,
    grid: &SpatialGrid,
    dt: f64,
    steps: usize,
) -> Result<WaveState>
where
    F: FnMut(f64) -> Result<OperatorMatrix>,
{
    evolve_crank_nicolson_with(state, hamiltonian_at, grid, dt, steps, |_, _| Ok(()))
}

/// h·ψ†Iψ for a normalised state.
pub fn invariant_expectation(
    state: &WaveState,
    invariant: &OperatorMatrix,
    grid: &SpatialGrid,
) -> Result<f64> {
    let v = invariant.apply(&state.psi);
    let e: Complex64 = state
        .psi
        .iter()
        .zip(&v)
        .map(|(p, iv)| p.conj() * iv)
        .sum::<Complex64>()
        * grid.h();
    if e.im.abs() > HERMITICITY_LIMIT {
        return Err(Error::HermiticityViolation { imag: e.im });
    }
    Ok(e.re)
}

/// ‖Rψ‖/‖ψ‖ with R = İ − i[I, H], İ assembled from the coefficient rates.
pub fn invariance_residual_with(
    coefficients: &Coefficients,
    rates: &Coefficients,
    m: f64,
    omega: f64,
    efield: f64,
    state: &WaveState,
    grid: &SpatialGrid,
) -> Result<f64> {
    let amplitude = state.boundary_amplitude();
    if amplitude > BOUNDARY_LIMIT {
        return Err(Error::BoundaryAmplitude {
            amplitude,
            limit: BOUNDARY_LIMIT,
        });
    }
    let inv = build_invariant(grid, coefficients);
    let inv_dot = build_invariant(grid, rates);
    let ham = hamiltonian_from_values(grid, m, omega, efield);
    let psi = &state.psi;
    let ih = inv.apply(&ham.apply(psi));
    let hi = ham.apply(&inv.apply(psi));
    let d = inv_dot.apply(psi);
    let num: f64 = (0..psi.len())
        .map(|j| (d[j] - I * (ih[j] - hi[j])).norm_sqr())
        .sum();
    let den: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    Ok((num / den).sqrt())
}

/// Invariance residual at a sample time of `coeffs`, with coefficient rates
/// from 5-point differences along the trajectory.
pub fn invariance_residual(
    coeffs: &CoefficientTrajectory,
    mass: &MassProfile,
    omega: f64,
    state: &WaveState,
    grid: &SpatialGrid,
    t: f64,
) -> Result<f64> {
    let j = coeffs.index_of(t)?;
    invariance_residual_with(
        &coeffs.at(j),
        &coeffs.rates_at(j)?,
        mass.mass_at(coeffs.t[j])?,
        omega,
        coeffs.efield[j],
        state,
        grid,
    )
}

/// A driven oscillator together with a candidate invariant for it.
pub trait InvariantProtocol {
    /// Time at which evolution starts.
    fn start(&self) -> f64 {
        0.0
    }
    fn omega(&self) -> f64;
    fn mass(&self, t: f64) -> Result<f64>;
    fn efield(&self, t: f64) -> Result<f64>;
    fn coefficients(&self, t: f64) -> Result<Coefficients>;
    fn coefficient_rates(&self, t: f64) -> Result<Coefficients>;
}

impl InvariantProtocol for ExponentialScenario {
    fn omega(&self) -> f64 {
        self.omega
    }
    fn mass(&self, t: f64) -> Result<f64> {
        Ok(ExponentialScenario::mass(self, t))
    }
    fn efield(&self, t: f64) -> Result<f64> {
        Ok(ExponentialScenario::efield(self, t))
    }
    fn coefficients(&self, t: f64) -> Result<Coefficients> {
        Ok(ExponentialScenario::coefficients(self, t))
    }
    fn coefficient_rates(&self, t: f64) -> Result<Coefficients> {
        Ok(ExponentialScenario::coefficient_rates(self, t))
    }
}

/// Protocol backed by a sampled coefficient trajectory; queries must hit
/// sample times. `delta_scale` multiplies δ in I (but not the dynamics), for
/// sensitivity studies.
#[derive(Debug, Clone)]
pub struct SampledProtocol {
    pub mass: MassProfile,
    pub omega: f64,
    pub coeffs: CoefficientTrajectory,
    pub delta_scale: f64,
}

impl InvariantProtocol for SampledProtocol {
    fn start(&self) -> f64 {
        self.coeffs.t.first().copied().unwrap_or(0.0)
    }
    fn omega(&self) -> f64 {
        self.omega
    }
    fn mass(&self, t: f64) -> Result<f64> {
        self.mass.mass_at(t)
    }
    fn efield(&self, t: f64) -> Result<f64> {
        Ok(self.coeffs.efield[self.coeffs.index_of(t)?])
    }
    fn coefficients(&self, t: f64) -> Result<Coefficients> {
        let mut c = self.coeffs.at(self.coeffs.index_of(t)?);
        c.delta *= self.delta_scale;
        Ok(c)
    }
    fn coefficient_rates(&self, t: f64) -> Result<Coefficients> {
        let mut r = self.coeffs.rates_at(self.coeffs.index_of(t)?)?;
        r.delta *= self.delta_scale;
        Ok(r)
    }
}

fn default_record_every() -> usize {
    10
}
fn default_levels() -> usize {
    3
}
fn default_width() -> f64 {
    1.0
}

/// Spatial grid, time step and test state for the quantum verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSettings {
    pub xmin: f64,
    pub xmax: f64,
    /// Interior points of the finest grid.
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Number of grids, each halving h; n + 1 must be divisible by 2^(levels−1).
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
    /// Times at which |ψ|² snapshots of the finest run are kept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
}

impl EvolutionSettings {
    pub fn new(xmin: f64, xmax: f64, n: usize, dt: f64, t_max: f64) -> Result<Self> {
        let s = Self {
            xmin,
            xmax,
            n,
            dt,
            t_max,
            record_every: default_record_every(),
            levels: default_levels(),
            center: 0.0,
            width: default_width(),
            momentum: 0.0,
            snapshots: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        SpatialGrid::new(self.xmin, self.xmax, self.n)?;
        if !(self.dt > 0.0) || !(self.t_max > 0.0) {
            return Err(invalid("tdse.dt", "dt and t_max must be > 0"));
        }
        if self.record_every == 0 {
            return Err(invalid("tdse.record_every", "must be >= 1"));
        }
        if self.levels == 0 || self.levels > 8 {
            return Err(invalid("tdse.levels", "must be between 1 and 8"));
        }
        let divisor = 1usize << (self.levels - 1);
        if !(self.n + 1).is_multiple_of(divisor) || (self.n + 1) / divisor < 17 {
            return Err(invalid(
                "tdse.n",
                format!("n + 1 must be divisible by {divisor} with at least 16 points on the coarsest grid"),
            ));
        }
        if !(self.width > 0.0) {
            return Err(invalid("tdse.width", "must be > 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Interior point counts from coarsest to finest.
    pub fn level_sizes(&self) -> Vec<usize> {
        (0..self.levels)
            .rev()
            .map(|k| (self.n + 1) / (1 << k) - 1)
            .collect()
    }
}

/// Time series of one evolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DriftSeries {
    pub t: Vec<f64>,
    pub expectation: Vec<f64>,
    pub norm: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub density: Vec<f64>,
}

/// Result of evolving the test state on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub n: usize,
    pub h: f64,
    pub expectation0: f64,
    /// max_t |⟨I(t)⟩ − ⟨I(0)⟩| / |⟨I(0)⟩| over recorded times.
    pub max_drift: f64,
    pub max_norm_error: f64,
    pub max_boundary_amplitude: f64,
    /// Invariance residual of the initial state.
    pub residual0: f64,
    pub valid: bool,
    #[serde(skip)]
    pub series: DriftSeries,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

/// Drift and residual measurements across refinement levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub levels: Vec<LevelResult>,
    /// log2 of successive drift ratios, coarse to fine.
    pub drift_orders: Vec<f64>,
    /// log2 of successive initial-residual ratios.
    pub residual_orders: Vec<f64>,
}

impl InvarianceReport {
    pub fn finest(&self) -> &LevelResult {
        &self.levels[self.levels.len() - 1]
    }
}

fn log2_ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Evolves the Gaussian test state under the protocol's H(t) on a single grid.
pub fn run_level<P: InvariantProtocol + ?Sized>(
    protocol: &P,
    settings: &EvolutionSettings,
    n: usize,
    keep_snapshots: bool,
) -> Result<LevelResult> {
    let grid = SpatialGrid::new(settings.xmin, settings.xmax, n)?;
    let omega = protocol.omega();
    let mut state0 =
        WaveState::gaussian(&grid, settings.center, settings.width, settings.momentum)?;
    state0.t = protocol.start();
    let record = |state: &WaveState, series: &mut DriftSeries| -> Result<f64> {
        let t = state.t;
        let c = protocol.coefficients(t)?;
        let value = invariant_expectation(state, &build_invariant(&grid, &c), &grid)?;
        let residual = if state.is_valid() {
            invariance_residual_with(
                &c,
                &protocol.coefficient_rates(t)?,
                protocol.mass(t)?,
                omega,
                protocol.efield(t)?,
                state,
                &grid,
            )?
        } else {
            f64::NAN
        };
        series.t.push(t);
        series.expectation.push(value);
        series.norm.push(state.norm(&grid));
        series.residual.push(residual);
        Ok(value)
    };

    let mut series = DriftSeries::default();
    let expectation0 = record(&state0, &mut series)?;
    let residual0 = series.residual[0];
    let mut max_boundary = state0.boundary_amplitude();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = if keep_snapshots {
        settings.snapshots.clone()
    } else {
        Vec::new()
    };
    pending.sort_by(f64::total_cmp);
    let dt = settings.dt;
    let steps = settings.steps();
    evolve_crank_nicolson_with(
        &state0,
        |t| {
            Ok(hamiltonian_from_values(
                &grid,
                protocol.mass(t)?,
                omega,
                protocol.efield(t)?,
            ))
        },
        &grid,
        dt,
        steps,
        |k, state| {
            max_boundary = max_boundary.max(state.boundary_amplitude());
            if k % settings.record_every == 0 || k == steps {
                record(state, &mut series)?;
            }
            while let Some(&ts) = pending.first() {
                if ts > state.t + 0.5 * dt {
                    break;
                }
                snapshots.push(Snapshot {
                    t: state.t,
                    density: state.density(),
                });
                pending.remove(0);
            }
            Ok(())
        },
    )?;

    let max_drift = series
        .expectation
        .iter()
        .map(|v| (v - expectation0).abs() / expectation0.abs())
        .fold(0.0, f64::max);
    let max_norm_error = series
        .norm
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(LevelResult {
        n,
        h: grid.h(),
        expectation0,
        max_drift,
        max_norm_error,
        max_boundary_amplitude: max_boundary,
        residual0,
        valid: max_boundary < BOUNDARY_LIMIT,
        series,
        snapshots,
    })
}

/// Runs every refinement level of `settings` and estimates convergence orders.
pub fn verify_invariance<P: InvariantProtocol + ?Sized>(
    protocol: &P,
    settings: &EvolutionSettings,
) -> Result<InvarianceReport> {
    settings.validate()?;
    let sizes = settings.level_sizes();
    let last = sizes.len() - 1;
    let levels = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| run_level(protocol, settings, n, i == last))
        .collect::<Result<Vec<_>>>()?;
    let drifts: Vec<f64> = levels.iter().map(|l| l.max_drift).collect();
    let residuals: Vec<f64> = levels.iter().map(|l| l.residual0).collect();
    Ok(InvarianceReport {
        drift_orders: log2_ratios(&drifts),
        residual_orders: log2_ratios(&residuals),
        levels,
    })
}
