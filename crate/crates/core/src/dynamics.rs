//! Exact CR3BP + solar-radiation-pressure vector field in barycentric
//! rotating coordinates. Ground truth for everything downstream.
//!
//! The larger primary (mass `1-mu`) sits at `(-mu, 0, 0)`, the smaller (mass
//! `mu`) at `(1-mu, 0, 0)`. All quantities are nondimensional: unit primary
//! separation, unit rotation rate.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Mass ratio, sail lightness number and sail attitude angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams<T>", bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SystemParams<T: Real> {
    mu: T,
    beta: T,
    alpha: T,
    gamma: T,
}

#[derive(Deserialize)]
struct RawParams<T> {
    mu: T,
    beta: T,
    alpha: T,
    gamma: T,
}

impl<T: Real> TryFrom<RawParams<T>> for SystemParams<T> {
    type Error = Error;

    fn try_from(raw: RawParams<T>) -> Result<Self> {
        Self::new(raw.mu, raw.beta, raw.alpha, raw.gamma)
    }
}

impl<T: Real> SystemParams<T> {
    /// Validated constructor. `mu` in `(0, 0.5]`, `beta` in `[0, 1)`,
    /// cone angle in `[-pi/2, pi/2]`, clock angle in `[0, pi]` (radians).
    pub fn new(mu: T, beta: T, alpha: T, gamma: T) -> Result<Self> {
        if !(mu > T::zero() && mu <= T::c(0.5)) {
            return Err(Error::InvalidParameter(format!(
                "mass ratio mu = {} outside (0, 0.5]",
                mu.as_f64()
            )));
        }
        if !(beta >= T::zero() && beta < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "lightness number beta = {} outside [0, 1)",
                beta.as_f64()
            )));
        }
        if !(alpha >= -T::frac_pi_2() && alpha <= T::frac_pi_2()) {
            return Err(Error::InvalidParameter(format!(
                "cone angle alpha = {} outside [-pi/2, pi/2]",
                alpha.as_f64()
            )));
        }
        if !(gamma >= T::zero() && gamma <= T::pi()) {
            return Err(Error::InvalidParameter(format!(
                "clock angle gamma = {} outside [0, pi]",
                gamma.as_f64()
            )));
        }
        Ok(Self {
            mu,
            beta,
            alpha,
            gamma,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Same system with the sail force switched off.
    pub fn without_srp(&self) -> Self {
        Self {
            beta: T::zero(),
            ..*self
        }
    }

    /// Edge-on attitudes and `beta = 0` null the SRP force identically.
    pub fn srp_is_null(&self) -> bool {
        self.beta == T::zero() || self.alpha.abs() == T::frac_pi_2()
    }

    /// `beta (1 - mu) cos^2(alpha)`, the scale of the SRP force.
    pub fn srp_factor(&self) -> T {
        if self.srp_is_null() {
            T::zero()
        } else {
            let ca = self.alpha.cos();
            self.beta * (T::one() - self.mu) * ca * ca
        }
    }
}

/// Position and velocity in the rotating barycentric frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

impl<T: Real> State<T> {
    pub fn new(position: Vector3<T>, velocity: Vector3<T>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vector3<T>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self {
            position: Vector3::new(v[0], v[1], v[2]),
            velocity: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

/// Vector from the larger primary to the spacecraft.
#[inline]
pub fn sun_relative<T: Real>(position: &Vector3<T>, mu: T) -> Vector3<T> {
    Vector3::new(position.x + mu, position.y, position.z)
}

fn secondary_relative<T: Real>(position: &Vector3<T>, mu: T) -> Vector3<T> {
    Vector3::new(position.x - (T::one() - mu), position.y, position.z)
}

/// Sail normal direction for the given attitude angles.
///
/// The normal is tilted away from the Sun line by the cone angle and rotated
/// about it by the clock angle. On the z-axis through the Sun the tangential
/// directions are undefined, so a nonzero cone angle is rejected there.
pub fn sail_normal<T: Real>(position: &Vector3<T>, params: &SystemParams<T>) -> Result<Vector3<T>> {
    let r1v = sun_relative(position, params.mu());
    let r1 = r1v.norm();
    if r1 == T::zero() {
        return Err(Error::DegenerateGeometry(
            "position coincides with the larger primary".into(),
        ));
    }
    let rhat = r1v / r1;
    let sin_a = params.alpha().sin();
    if sin_a == T::zero() {
        return Ok(rhat);
    }
    let rxy = (r1v.x * r1v.x + r1v.y * r1v.y).sqrt();
    if rxy == T::zero() {
        return Err(Error::DegenerateGeometry(
            "sail frame undefined on the z-axis through the Sun".into(),
        ));
    }
    let cos_a = params.alpha().cos();
    let sin_g = params.gamma().sin();
    let cos_g = params.gamma().cos();
    // rhat x zhat and (rhat x zhat) x rhat, both normalized.
    let t1 = Vector3::new(r1v.y, -r1v.x, T::zero()) / rxy;
    let t2 = Vector3::new(-r1v.x * r1v.z, -r1v.y * r1v.z, rxy * rxy) / (r1 * rxy);
    Ok(rhat * cos_a + t1 * (sin_a * sin_g) + t2 * (sin_a * cos_g))
}

/// SRP acceleration from the projected-area law (vector formulation).
pub fn srp_accel<T: Real>(position: &Vector3<T>, params: &SystemParams<T>) -> Result<Vector3<T>> {
    if params.srp_is_null() {
        return Ok(Vector3::zeros());
    }
    let r1v = sun_relative(position, params.mu());
    let r1sq = r1v.norm_squared();
    let rhat = r1v / r1sq.sqrt();
    let normal = sail_normal(position, params)?;
    let projection = rhat.dot(&normal);
    let magnitude = params.beta() * (T::one() - params.mu()) / r1sq * projection * projection;
    Ok(normal * magnitude)
}

/// SRP acceleration written out per component.
///
/// Algebraically identical to [`srp_accel`]; kept as an independent route for
/// cross-validation and as the form mirrored by the series expansions.
pub fn srp_accel_components<T: Real>(
    position: &Vector3<T>,
    params: &SystemParams<T>,
) -> Result<Vector3<T>> {
    if params.srp_is_null() {
        return Ok(Vector3::zeros());
    }
    let f = params.srp_factor();
    let r1v = sun_relative(position, params.mu());
    let r1 = r1v.norm();
    if r1 == T::zero() {
        return Err(Error::DegenerateGeometry(
            "position coincides with the larger primary".into(),
        ));
    }
    let rxy = (r1v.x * r1v.x + r1v.y * r1v.y).sqrt();
    let sin_a = params.alpha().sin();
    if rxy == T::zero() && sin_a != T::zero() {
        return Err(Error::DegenerateGeometry(
            "sail frame undefined on the z-axis through the Sun".into(),
        ));
    }
    let cos_a = params.alpha().cos();
    let ss = sin_a * params.gamma().sin();
    let cs = sin_a * params.gamma().cos();
    let (u, v, w) = (r1v.x, r1v.y, r1v.z);
    let r1sq = r1 * r1;
    if sin_a == T::zero() {
        let scale = f / (r1sq * r1);
        return Ok(Vector3::new(u * scale, v * scale, w * scale));
    }
    let ax = f / r1sq * (u * cos_a / r1 + v * ss / rxy - w * u * cs / (r1 * rxy));
    let ay = f / r1sq * (v * cos_a / r1 - u * ss / rxy - v * w * cs / (r1 * rxy));
    let az = f / (r1sq * r1) * (w * cos_a + (u * u + v * v) * cs / rxy);
    Ok(Vector3::new(ax, ay, az))
}

/// Partial derivatives of the SRP acceleration with respect to position.
pub fn srp_accel_jacobian<T: Real>(
    position: &Vector3<T>,
    params: &SystemParams<T>,
) -> Result<Matrix3<T>> {
    if params.srp_is_null() {
        return Ok(Matrix3::zeros());
    }
    let f = params.srp_factor();
    let r1v = sun_relative(position, params.mu());
    let r1 = r1v.norm();
    let rxy = (r1v.x * r1v.x + r1v.y * r1v.y).sqrt();
    let sin_a = params.alpha().sin();
    if rxy == T::zero() && sin_a != T::zero() {
        return Err(Error::DegenerateGeometry(
            "sail frame undefined on the z-axis through the Sun".into(),
        ));
    }
    let cos_a = params.alpha().cos();
    let ss = sin_a * params.gamma().sin();
    let cs = sin_a * params.gamma().cos();
    let (u, v, w) = (r1v.x, r1v.y, r1v.z);

    let r3 = r1.powi(3);
    let r5 = r1.powi(5);
    let two = T::c(2.0);
    let three = T::c(3.0);

    // Radial part: d/dq_j of (q_i r^-3).
    let coords = [u, v, w];
    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { T::one() } else { T::zero() };
            jac[(i, j)] = cos_a * (delta / r3 - three * coords[i] * coords[j] / r5);
        }
    }

    if sin_a != T::zero() {
        let rxy3 = rxy.powi(3);
        let r2 = r1 * r1;
        let r4 = r2 * r2;
        // d/dq of (v r^-2 rxy^-1) and (u r^-2 rxy^-1).
        let mix = two / (r4 * rxy) + T::one() / (r2 * rxy3);
        let dv_du = -u * v * mix;
        let dv_dv = T::one() / (r2 * rxy) - v * v * mix;
        let dv_dw = -two * v * w / (r4 * rxy);
        let du_du = T::one() / (r2 * rxy) - u * u * mix;
        let du_dv = -u * v * mix;
        let du_dw = -two * u * w / (r4 * rxy);
        // d/dq of (u w r^-3 rxy^-1) and (v w r^-3 rxy^-1).
        let mix3 = three / (r5 * rxy) + T::one() / (r3 * rxy3);
        let duw_du = w / (r3 * rxy) - u * u * w * mix3;
        let duw_dv = -u * v * w * mix3;
        let duw_dw = u / (r3 * rxy) - three * u * w * w / (r5 * rxy);
        let dvw_du = -u * v * w * mix3;
        let dvw_dv = w / (r3 * rxy) - v * v * w * mix3;
        let dvw_dw = v / (r3 * rxy) - three * v * w * w / (r5 * rxy);
        // d/dq of (rxy r^-3) and radial z handled above.
        let drw_du = u / (rxy * r3) - three * u * rxy / r5;
        let drw_dv = v / (rxy * r3) - three * v * rxy / r5;
        let drw_dw = -three * w * rxy / r5;

        jac[(0, 0)] += ss * dv_du - cs * duw_du;
        jac[(0, 1)] += ss * dv_dv - cs * duw_dv;
        jac[(0, 2)] += ss * dv_dw - cs * duw_dw;
        jac[(1, 0)] += -ss * du_du - cs * dvw_du;
        jac[(1, 1)] += -ss * du_dv - cs * dvw_dv;
        jac[(1, 2)] += -ss * du_dw - cs * dvw_dw;
        jac[(2, 0)] += cs * drw_du;
        jac[(2, 1)] += cs * drw_dv;
        jac[(2, 2)] += cs * drw_dw;
    }

    Ok(jac * f)
}

/// Gradient of the rotating-frame effective potential (centrifugal plus the
/// two gravitational terms).
pub fn potential_gradient<T: Real>(position: &Vector3<T>, mu: T) -> Vector3<T> {
    let r1v = sun_relative(position, mu);
    let r2v = secondary_relative(position, mu);
    let r1_3 = r1v.norm().powi(3);
    let r2_3 = r2v.norm().powi(3);
    let one_minus_mu = T::one() - mu;
    Vector3::new(
        position.x - one_minus_mu * r1v.x / r1_3 - mu * r2v.x / r2_3,
        position.y - one_minus_mu * r1v.y / r1_3 - mu * r2v.y / r2_3,
        -one_minus_mu * r1v.z / r1_3 - mu * r2v.z / r2_3,
    )
}

/// Hessian of the effective potential.
pub fn potential_hessian<T: Real>(position: &Vector3<T>, mu: T) -> Matrix3<T> {
    let r1v = sun_relative(position, mu);
    let r2v = secondary_relative(position, mu);
    let three = T::c(3.0);
    let mut h = Matrix3::zeros();
    for (body, weight) in [(r1v, T::one() - mu), (r2v, mu)] {
        let r = body.norm();
        let r3 = r.powi(3);
        let r5 = r.powi(5);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { T::one() } else { T::zero() };
                h[(i, j)] += weight * (three * body[i] * body[j] / r5 - delta / r3);
            }
        }
    }
    h[(0, 0)] += T::one();
    h[(1, 1)] += T::one();
    h
}

/// Net acceleration at rest: gravity + centrifugal + SRP. Zero at an
/// equilibrium point.
pub fn net_force<T: Real>(position: &Vector3<T>, params: &SystemParams<T>) -> Result<Vector3<T>> {
    Ok(potential_gradient(position, params.mu()) + srp_accel(position, params)?)
}

/// Right-hand side of the equations of motion: `(velocity, acceleration)`.
pub fn eom_rhs<T: Real>(state: &State<T>, params: &SystemParams<T>) -> Result<Vector6<T>> {
    let force = net_force(&state.position, params)?;
    let two = T::c(2.0);
    Ok(Vector6::new(
        state.velocity.x,
        state.velocity.y,
        state.velocity.z,
        two * state.velocity.y + force.x,
        -two * state.velocity.x + force.y,
        force.z,
    ))
}

/// Effective potential of the classical rotating frame.
pub fn potential<T: Real>(position: &Vector3<T>, mu: T) -> T {
    let r1 = sun_relative(position, mu).norm();
    let r2 = secondary_relative(position, mu).norm();
    let half = T::c(0.5);
    half * (position.x * position.x + position.y * position.y)
        + (T::one() - mu) / r1
        + mu / r2
}

/// Effective potential augmented with the SRP work term.
pub fn augmented_potential<T: Real>(position: &Vector3<T>, params: &SystemParams<T>) -> Result<T> {
    let base = potential(position, params.mu());
    let srp = srp_accel(position, params)?;
    Ok(base + srp.dot(position))
}

/// Jacobi constant `C = 2 Omega - v^2`. Only defined without SRP.
pub fn jacobi_constant<T: Real>(state: &State<T>, params: &SystemParams<T>) -> Result<T> {
    if params.beta() > T::zero() {
        return Err(Error::NotConserved);
    }
    let two = T::c(2.0);
    Ok(two * potential(&state.position, params.mu()) - state.velocity.norm_squared())
}
