//! Turn a series solution into concrete state-space arcs: periodic orbits,
//! manifold branches, transit and non-transit trajectories.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::lindstedt::SeriesSolution;
use crate::{Error, Real, Result};

/// Amplitudes below this are treated as exactly zero when classifying.
pub const AMPLITUDE_ZERO: f64 = 1e-15;

/// Qualitative motion class selected by the hyperbolic amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    /// All four amplitudes zero: the equilibrium itself.
    Equilibrium,
    /// Growing mode only: departs along the unstable manifold.
    Unstable,
    /// Decaying mode only: approaches along the stable manifold.
    Stable,
    /// Both hyperbolic modes, opposite signs: crosses the equilibrium region.
    Transit,
    /// Both hyperbolic modes, equal signs: bounces back.
    NonTransit,
    /// No hyperbolic content, at least one oscillation: a periodic or
    /// quasi-periodic orbit.
    Periodic,
}

/// Classify a set of amplitudes. Pure function of signs and zeros only.
pub fn classify<T: Real>(amps: &[T; 4]) -> OrbitClass {
    let zero = T::c(AMPLITUDE_ZERO);
    let a1 = amps[0].abs() >= zero;
    let a2 = amps[1].abs() >= zero;
    match (a1, a2) {
        (true, false) => OrbitClass::Unstable,
        (false, true) => OrbitClass::Stable,
        (true, true) => {
            if (amps[0] > T::zero()) == (amps[1] > T::zero()) {
                OrbitClass::NonTransit
            } else {
                OrbitClass::Transit
            }
        }
        (false, false) => {
            if amps[2].abs() >= zero || amps[3].abs() >= zero {
                OrbitClass::Periodic
            } else {
                OrbitClass::Equilibrium
            }
        }
    }
}

/// Output frame for sampled trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Equilibrium-relative, scaled by the local length (raw series values).
    AepRelative,
    /// Rotating barycentric coordinates.
    Barycentric,
}

/// What to sample: amplitudes, phases, time span and resolution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct TrajectoryRequest<T: Real> {
    pub amplitudes: [T; 4],
    pub phi1: T,
    pub phi2: T,
    pub t_start: T,
    pub t_end: T,
    pub samples: usize,
    pub frame: Frame,
}

impl<T: Real> TrajectoryRequest<T> {
    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidParameter(
                "at least two samples are required".into(),
            ));
        }
        if !(self.t_end - self.t_start).is_finite() {
            return Err(Error::InvalidParameter("time span must be finite".into()));
        }
        Ok(())
    }
}

/// Evaluate the series solution over an even time grid.
pub fn sample<T: Real>(
    solution: &SeriesSolution<T>,
    request: &TrajectoryRequest<T>,
) -> Result<Vec<(T, State<T>)>> {
    request.validate()?;
    let gn = solution.aep.gamma_norm();
    let step = (request.t_end - request.t_start) / T::of_usize(request.samples - 1);
    let mut out = Vec::with_capacity(request.samples);
    for i in 0..request.samples {
        let t = request.t_start + step * T::of_usize(i);
        let local_pos = solution.local_position(request.amplitudes, request.phi1, request.phi2, t);
        let local_vel = solution.local_velocity(request.amplitudes, request.phi1, request.phi2, t);
        let state = match request.frame {
            Frame::AepRelative => State::new(local_pos, local_vel),
            Frame::Barycentric => State::new(
                solution.aep.position + local_pos * gn,
                local_vel * gn,
            ),
        };
        out.push((t, state));
    }
    Ok(out)
}

/// Period of the in-plane oscillation at the given amplitudes.
pub fn period_estimate<T: Real>(solution: &SeriesSolution<T>, amps: [T; 4]) -> T {
    T::two_pi() / solution.freqs.omega.evaluate(amps)
}

/// The four manifold arcs attached to one periodic orbit: the stable pair
/// (sampled over negative time, approaching the orbit) and the unstable pair
/// (positive time, departing).
#[derive(Clone, Debug)]
pub struct ManifoldFamily<T: Real> {
    pub stable_plus: Vec<(T, State<T>)>,
    pub stable_minus: Vec<(T, State<T>)>,
    pub unstable_plus: Vec<(T, State<T>)>,
    pub unstable_minus: Vec<(T, State<T>)>,
}

impl<T: Real> ManifoldFamily<T> {
    pub fn arcs(&self) -> [(&'static str, &Vec<(T, State<T>)>); 4] {
        [
            ("stable_plus", &self.stable_plus),
            ("stable_minus", &self.stable_minus),
            ("unstable_plus", &self.unstable_plus),
            ("unstable_minus", &self.unstable_minus),
        ]
    }
}

/// Build the four manifold arcs of the periodic orbit at `(a3, a4)` with
/// hyperbolic seeding amplitude `epsilon`.
pub fn manifold_family<T: Real>(
    solution: &SeriesSolution<T>,
    a3: T,
    a4: T,
    epsilon: T,
    span: T,
    samples: usize,
    frame: Frame,
) -> Result<ManifoldFamily<T>> {
    if epsilon < T::zero() {
        return Err(Error::InvalidParameter(
            "seeding amplitude must be nonnegative".into(),
        ));
    }
    let make = |a1: T, a2: T, t_start: T, t_end: T| -> Result<Vec<(T, State<T>)>> {
        sample(
            solution,
            &TrajectoryRequest {
                amplitudes: [a1, a2, a3, a4],
                phi1: T::zero(),
                phi2: T::zero(),
                t_start,
                t_end,
                samples,
                frame,
            },
        )
    };
    Ok(ManifoldFamily {
        stable_plus: make(T::zero(), epsilon, -span, T::zero())?,
        stable_minus: make(T::zero(), -epsilon, -span, T::zero())?,
        unstable_plus: make(epsilon, T::zero(), T::zero(), span)?,
        unstable_minus: make(-epsilon, T::zero(), T::zero(), span)?,
    })
}

/// Write a sampled trajectory as CSV with `# key = value` metadata lines.
pub fn write_trajectory_csv<T: Real, W: Write>(
    solution: &SeriesSolution<T>,
    request: &TrajectoryRequest<T>,
    points: &[(T, State<T>)],
    out: &mut W,
) -> Result<()> {
    let p = &solution.aep.params;
    writeln!(out, "# mu = {}", p.mu().as_f64())?;
    writeln!(out, "# beta = {}", p.beta().as_f64())?;
    writeln!(out, "# alpha_rad = {}", p.alpha().as_f64())?;
    writeln!(out, "# gamma_rad = {}", p.gamma().as_f64())?;
    writeln!(
        out,
        "# aep = {} {} {}",
        solution.aep.position.x.as_f64(),
        solution.aep.position.y.as_f64(),
        solution.aep.position.z.as_f64()
    )?;
    writeln!(out, "# order = {}", solution.order)?;
    writeln!(
        out,
        "# amplitudes = {} {} {} {}",
        request.amplitudes[0].as_f64(),
        request.amplitudes[1].as_f64(),
        request.amplitudes[2].as_f64(),
        request.amplitudes[3].as_f64()
    )?;
    writeln!(
        out,
        "# phases = {} {}",
        request.phi1.as_f64(),
        request.phi2.as_f64()
    )?;
    writeln!(
        out,
        "# frame = {}",
        match request.frame {
            Frame::AepRelative => "aep_relative",
            Frame::Barycentric => "barycentric",
        }
    )?;
    writeln!(out, "t,x,y,z,vx,vy,vz")?;
    for (t, state) in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.as_f64(),
            state.position.x.as_f64(),
            state.position.y.as_f64(),
            state.position.z.as_f64(),
            state.velocity.x.as_f64(),
            state.velocity.y.as_f64(),
            state.velocity.z.as_f64()
        )?;
    }
    Ok(())
}

/// Parse a trajectory CSV produced by [`write_trajectory_csv`].
pub fn read_trajectory_csv(text: &str) -> Result<Vec<(f64, State<f64>)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with('t') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!("bad CSV row: {line}")));
        }
        let mut values = [0.0; 7];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|e| Error::Format(format!("bad number {field}: {e}")))?;
        }
        out.push((
            values[0],
            State::new(
                Vector3::new(values[1], values[2], values[3]),
                Vector3::new(values[4], values[5], values[6]),
            ),
        ));
    }
    Ok(out)
}
