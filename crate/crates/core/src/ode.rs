//! Explicit Runge–Kutta integrators for small fixed-size systems.
//!
//! Two schemes: classical RK4 on a uniform grid, and Dormand–Prince 5(4)
//! with step-size control and fourth-order dense output at requested times.
//! Both take a fallible right-hand side and a guard that validates each
//! accepted state; a guard failure aborts the integration.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::profiles::{SolverKind, TimeGrid};

pub type State<const N: usize> = [f64; N];

/// Samples produced by an integration run.
#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<State<N>>,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

/// Smallest admissible adaptive step, relative to the integration span.
pub const MIN_STEP_FRACTION: f64 = 1e-14;

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Classical RK4 over the given sample times (one step per interval).
pub fn rk4<const N: usize, F, G>(
    mut rhs: F,
    mut guard: G,
    times: &[f64],
    y0: State<N>,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
    G: FnMut(f64, &State<N>, f64, &State<N>) -> Result<()>,
{
    let mut y = y0;
    let mut out_y = Vec::with_capacity(times.len());
    out_y.push(y);
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs(t, &y)?;
        let k2 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k1)]))?;
        let k3 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k2)]))?;
        let k4 = rhs(t + h, &axpy(&y, h, &[(1.0, &k3)]))?;
        let next = axpy(
            &y,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        );
        guard(t, &y, w[1], &next)?;
        y = next;
        out_y.push(y);
    }
    Ok(Solution {
        t: times.to_vec(),
        y: out_y,
        accepted: times.len() - 1,
        rejected: 0,
    })
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Dense<const N: usize> {
    t: f64,
    h: f64,
    r: [State<N>; 5],
}

impl<const N: usize> Dense<N> {
    fn eval(&self, t: f64) -> State<N> {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let mut out = [0.0; N];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.r;
            *o = r[0][i]
                + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        out
    }
}

/// Where the adaptive integrator reports samples.
pub enum Output<'a> {
    /// Every accepted step.
    Steps,
    /// Dense output at these (sorted, within-span) times.
    At(&'a [f64]),
}

/// Dormand–Prince 5(4) from `t0` to `t1`.
///
/// Error is measured in the scaled max norm, so components that stay
/// identically zero never influence the step sequence.
pub fn dopri5<const N: usize, F, G>(
    mut rhs: F,
    mut guard: G,
    t0: f64,
    t1: f64,
    y0: State<N>,
    tol: Tolerances,
    output: Output<'_>,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
    G: FnMut(f64, &State<N>, f64, &State<N>) -> Result<()>,
{
    let span = t1 - t0;
    let h_min = MIN_STEP_FRACTION * span;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y)?;

    let mut out_t = Vec::new();
    let mut out_y = Vec::new();
    let targets: &[f64] = match output {
        Output::At(ts) => ts,
        Output::Steps => &[],
    };
    let dense_mode = matches!(output, Output::At(_));
    let mut next_target = 0;
    if dense_mode {
        while next_target < targets.len() && targets[next_target] <= t0 {
            out_t.push(targets[next_target]);
            out_y.push(y0);
            next_target += 1;
        }
    } else {
        out_t.push(t0);
        out_y.push(y0);
    }

    let mut h = initial_step(&mut rhs, t0, &y0, &k1, tol, span)?;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_failure: Option<Error> = None;

    while t < t1 {
        if h < h_min {
            return Err(match last_failure {
                Some(e @ Error::Singularity { .. }) => e,
                _ => Error::StepUnderflow { t, h },
            });
        }
        let last = t + h >= t1 - 1e-15 * span.abs();
        if last {
            h = t1 - t;
        }
        let attempt = (|| -> Result<_> {
            let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = rhs(
                t + C4 * h,
                &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = rhs(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = rhs(
                t + h,
                &axpy(
                    &y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y_new = axpy(
                &y,
                h,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let k7 = rhs(t + h, &y_new)?;
            Ok((k2, k3, k4, k5, k6, k7, y_new))
        })();

        let (_k2, k3, k4, k5, k6, k7, y_new) = match attempt {
            Ok(v) => v,
            Err(e @ (Error::Singularity { .. } | Error::Degenerate(_))) => {
                // A stage left the admissible region: retry with a smaller step.
                last_failure = Some(e);
                rejected += 1;
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };

        let mut err = 0.0_f64;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            rejected += 1;
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            let t_new = if last { t1 } else { t + h };
            guard(t, &y, t_new, &y_new)?;
            if dense_mode {
                if next_target < targets.len() && targets[next_target] <= t_new {
                    let mut r = [[0.0; N]; 5];
                    for i in 0..N {
                        let ydiff = y_new[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        r[0][i] = y[i];
                        r[1][i] = ydiff;
                        r[2][i] = bspl;
                        r[3][i] = ydiff - h * k7[i] - bspl;
                        r[4][i] = h
                            * (D1 * k1[i]
                                + D3 * k3[i]
                                + D4 * k4[i]
                                + D5 * k5[i]
                                + D6 * k6[i]
                                + D7 * k7[i]);
                    }
                    let dense = Dense { t, h, r };
                    while next_target < targets.len() && targets[next_target] <= t_new {
                        let tt = targets[next_target];
                        out_t.push(tt);
                        out_y.push(if tt == t_new { y_new } else { dense.eval(tt) });
                        next_target += 1;
                    }
                }
            } else {
                out_t.push(t_new);
                out_y.push(y_new);
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            accepted += 1;
            last_failure = None;
            let fac = if err == 0.0 {
                5.0
            } else {
                0.9 * err.powf(-0.2)
            };
            h *= fac.clamp(0.2, 5.0);
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }

    Ok(Solution {
        t: out_t,
        y: out_y,
        accepted,
        rejected,
    })
}

fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t0: f64,
    y0: &State<N>,
    f0: &State<N>,
    tol: Tolerances,
    span: f64,
) -> Result<f64>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
{
    let norm = |v: &State<N>| {
        v.iter()
            .zip(y0)
            .map(|(a, y)| (a / (tol.abs + tol.rel * y.abs())).abs())
            .fold(0.0, f64::max)
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let h1 = match rhs(t0 + h0, &y1) {
        Ok(f1) => {
            let mut diff = [0.0; N];
            for i in 0..N {
                diff[i] = f1[i] - f0[i];
            }
            let d2 = norm(&diff) / h0;
            if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            }
        }
        Err(_) => h0 * 1e-2,
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Solver bookkeeping attached to every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub solver: SolverKind,
    pub dt: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Integrates over `grid` with the requested scheme. Fixed-step RK4 uses the
/// uniform grid; the adaptive scheme reports dense output on that grid when
/// `dt` is set and its own accepted steps otherwise.
pub fn integrate_on_grid<const N: usize, F, G>(
    rhs: F,
    guard: G,
    y0: State<N>,
    grid: &TimeGrid,
    solver: SolverKind,
) -> Result<(Solution<N>, TrajectoryMeta)>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
    G: FnMut(f64, &State<N>, f64, &State<N>) -> Result<()>,
{
    grid.validate()?;
    let times = grid.uniform_times();
    let sol = match solver {
        SolverKind::Rk4Fixed => {
            let times = times.ok_or_else(|| invalid("grid.dt", "required by rk4_fixed"))?;
            rk4(rhs, guard, &times, y0)?
        }
        SolverKind::Rk45Adaptive => {
            let tol = match (grid.abs_tol, grid.rel_tol) {
                (Some(abs), Some(rel)) => Tolerances { abs, rel },
                _ => return Err(invalid("grid", "rk45_adaptive needs abs_tol and rel_tol")),
            };
            let output = match &times {
                Some(ts) => Output::At(ts),
                None => Output::Steps,
            };
            dopri5(rhs, guard, grid.t0, grid.t1, y0, tol, output)?
        }
    };
    let meta = TrajectoryMeta {
        solver,
        dt: grid.dt,
        abs_tol: grid.abs_tol,
        rel_tol: grid.rel_tol,
        accepted_steps: sol.accepted,
        rejected_steps: sol.rejected,
    };
    Ok((sol, meta))
}
