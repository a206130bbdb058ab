//! Adaptive embedded Runge-Kutta 5(4) propagation of the full equations of
//! motion (Tsitouras coefficients, FSAL).
//!
//! Requested sample times are hit exactly by clamping the step, so sampled
//! states carry the full integration accuracy rather than interpolant error.

use nalgebra::Vector6;

use crate::dynamics::{self, State, SystemParams};
use crate::{Error, Real, Result};

/// Tolerances and limits for one propagation.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_step: Option<T>,
    pub max_steps: usize,
    /// Record every accepted step in addition to the requested samples.
    pub dense_output: bool,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::c(1e-13),
            rel_tol: T::c(1e-13),
            max_step: None,
            max_steps: 10_000_000,
            dense_output: false,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_tolerance(tol: T) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    fn validated(&self) -> Result<(T, T)> {
        if !(self.abs_tol > T::zero() && self.rel_tol > T::zero()) {
            return Err(Error::InvalidParameter(
                "integrator tolerances must be positive".into(),
            ));
        }
        // Demands below round-off cannot be met; floor the tolerances at a
        // small multiple of machine epsilon (1e-14 for f64).
        let floor = T::c(50.0) * T::default_epsilon();
        Ok((self.abs_tol.max(floor), self.rel_tol.max(floor)))
    }
}

/// Propagated trajectory: sampled times, states and step statistics.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vector6<T>>,
    pub stats: StepStats,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted steps whose local error estimate was within tolerance.
    pub within_tolerance: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn last_state(&self) -> Vector6<T> {
        *self.states.last().expect("trajectory is never empty")
    }
}

// Tsitouras 5(4) tableau (FSAL; the last row of `A` equals the 5th-order
// weights, and the 7th stage is the derivative at the accepted point).
const C: [f64; 7] = [0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.161, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.008480655492356989, 0.335480655492357, 0.0, 0.0, 0.0, 0.0],
    [2.8971530571054935, -6.359448489975075, 4.3622954328695815, 0.0, 0.0, 0.0],
    [
        5.325864828439257,
        -11.748883564062828,
        7.4955393428898365,
        -0.09249506636175525,
        0.0,
        0.0,
    ],
    [
        5.86145544294642,
        -12.92096931784711,
        8.159367898576159,
        -0.071584973281401,
        -0.028269050394068383,
        0.0,
    ],
    [
        0.09646076681806523,
        0.01,
        0.4798896504144996,
        1.379008574103742,
        -3.290069515436081,
        2.324710524099774,
    ],
];
/// Difference between the 5th- and embedded 4th-order weights.
const BTILDE: [f64; 7] = [
    -0.00178001105222577714,
    -0.0008164344596567469,
    0.007880878010261995,
    -0.1447110071732629,
    0.5823571654525552,
    -0.45808210592918697,
    0.015151515151515152,
];

/// Integrate a generic first-order field from `t0` to `t_end`, recording the
/// state at every requested sample time (exactly) and, optionally, at every
/// accepted step. Sample times must be sorted in the direction of
/// integration and lie within the span; the endpoint is always recorded.
pub fn integrate_field<T, F>(
    field: &F,
    t0: T,
    y0: Vector6<T>,
    t_end: T,
    sample_times: &[T],
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>>
where
    T: Real,
    F: Fn(T, &Vector6<T>) -> Result<Vector6<T>>,
{
    let (abs_tol, rel_tol) = config.validated()?;
    if t_end == t0 {
        return Ok(Trajectory {
            times: vec![t0],
            states: vec![y0],
            stats: StepStats::default(),
        });
    }
    let direction = if t_end > t0 { T::one() } else { -T::one() };
    for pair in sample_times.windows(2) {
        if (pair[1] - pair[0]) * direction <= T::zero() {
            return Err(Error::InvalidParameter(
                "sample times must be strictly ordered along the integration direction".into(),
            ));
        }
    }
    if let (Some(first), Some(last)) = (sample_times.first(), sample_times.last()) {
        if (*first - t0) * direction < T::zero() || (t_end - *last) * direction < T::zero() {
            return Err(Error::InvalidParameter(
                "sample times outside the integration span".into(),
            ));
        }
    }

    let a: [[T; 6]; 7] = A.map(|row| row.map(T::c));
    let c: [T; 7] = C.map(T::c);
    let btilde: [T; 7] = BTILDE.map(T::c);

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut stats = StepStats::default();
    let record = |t: T, y: &Vector6<T>, times: &mut Vec<T>, states: &mut Vec<Vector6<T>>| {
        if times.last().map(|last| *last == t) != Some(true) {
            times.push(t);
            states.push(*y);
        }
    };

    let mut t = t0;
    let mut y = y0;
    let mut sample_idx = 0;
    while sample_idx < sample_times.len() && sample_times[sample_idx] == t {
        record(t, &y, &mut times, &mut states);
        sample_idx += 1;
    }
    if config.dense_output {
        record(t, &y, &mut times, &mut states);
    }

    let mut k1 = field(t, &y)?;
    let span = (t_end - t0).abs();
    let mut h = initial_step(&y, &k1, span, abs_tol, rel_tol) * direction;
    if let Some(max_h) = config.max_step {
        if h.abs() > max_h {
            h = max_h * direction;
        }
    }

    let mut steps = 0;
    while (t_end - t) * direction > T::zero() {
        steps += 1;
        if steps > config.max_steps {
            return Err(Error::MaxStepsExceeded);
        }
        // Clamp the step onto the next sample time or the endpoint.
        let mut target: Option<T> = None;
        let limit = if sample_idx < sample_times.len() {
            sample_times[sample_idx]
        } else {
            t_end
        };
        if (t + h - limit) * direction >= T::zero() {
            h = limit - t;
            target = Some(limit);
        }
        if h.abs() < T::c(16.0) * T::default_epsilon() * t.abs().max(T::one()) {
            return Err(Error::StepSizeUnderflow(t.as_f64()));
        }

        // Stages (k1 is carried over from the previous step, FSAL).
        let mut k = [Vector6::zeros(); 7];
        k[0] = k1;
        for stage in 1..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                yi += kj * (a[stage][j] * h);
            }
            k[stage] = field(t + c[stage] * h, &yi)?;
        }
        let mut y_next = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            y_next += kj * (a[6][j] * h);
        }
        let k7 = field(t + h, &y_next)?;
        k[6] = k7;

        // Embedded error estimate, RMS-scaled per component.
        let mut err_sq = T::zero();
        for comp in 0..6 {
            let mut e = T::zero();
            for (j, kj) in k.iter().enumerate() {
                e += kj[comp] * btilde[j];
            }
            e *= h;
            let scale = abs_tol + rel_tol * y[comp].abs().max(y_next[comp].abs());
            let ratio = e / scale;
            err_sq += ratio * ratio;
        }
        let err_norm = (err_sq / T::c(6.0)).sqrt();

        if err_norm <= T::one() {
            stats.accepted += 1;
            stats.within_tolerance += 1;
            t = target.unwrap_or(t + h);
            y = y_next;
            k1 = k7;
            while sample_idx < sample_times.len() && sample_times[sample_idx] == t {
                record(t, &y, &mut times, &mut states);
                sample_idx += 1;
            }
            if config.dense_output {
                record(t, &y, &mut times, &mut states);
            }
        } else {
            stats.rejected += 1;
        }

        // Standard controller with safety factor and growth clamps.
        let exponent = -T::c(0.2);
        let factor = if err_norm == T::zero() {
            T::c(5.0)
        } else {
            (T::c(0.9) * err_norm.powf(exponent)).clamp(T::c(0.2), T::c(5.0))
        };
        h = h * factor;
        if let Some(max_h) = config.max_step {
            if h.abs() > max_h {
                h = max_h * direction;
            }
        }
    }
    record(t, &y, &mut times, &mut states);
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

fn initial_step<T: Real>(y: &Vector6<T>, f: &Vector6<T>, span: T, abs_tol: T, rel_tol: T) -> T {
    let scale = abs_tol + rel_tol * y.abs().max();
    let d0 = y.norm() / scale;
    let d1 = f.norm() / scale;
    let guess = if d0 < T::c(1e-5) || d1 < T::c(1e-5) {
        T::c(1e-6)
    } else {
        T::c(0.01) * d0 / d1
    };
    guess.min(span)
}

/// Propagate the CR3BP+SRP equations of motion over `t_span`.
pub fn propagate<T: Real>(
    state0: &State<T>,
    params: &SystemParams<T>,
    t_span: (T, T),
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    let field = |t: T, y: &Vector6<T>| -> Result<Vector6<T>> {
        let _ = t;
        dynamics::eom_rhs(&State::from_vector(y), params)
    };
    integrate_field(&field, t_span.0, state0.to_vector(), t_span.1, &[], config)
}

/// Propagate and return only the final state.
pub fn propagate_to<T: Real>(
    state0: &State<T>,
    params: &SystemParams<T>,
    t_span: (T, T),
    config: &IntegratorConfig<T>,
) -> Result<State<T>> {
    let traj = propagate(state0, params, t_span, config)?;
    Ok(State::from_vector(&traj.last_state()))
}
