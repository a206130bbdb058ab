//! Artificial equilibrium points: Newton solves of the zero-acceleration
//! condition and attitude-angle sweeps seeded by continuation.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, SystemParams};
use crate::{Error, Real, Result};

/// An artificial equilibrium point together with its generating parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Aep<T: Real> {
    pub position: Vector3<T>,
    pub params: SystemParams<T>,
    /// Norm of the force residual at the converged position.
    pub residual_norm: T,
}

impl<T: Real> Aep<T> {
    /// Vector from the equilibrium to the smaller primary.
    pub fn gamma_vec(&self) -> Vector3<T> {
        Vector3::new(
            T::one() - self.position.x - self.params.mu(),
            -self.position.y,
            -self.position.z,
        )
    }

    /// Distance to the smaller primary; the length scale of the local frame.
    pub fn gamma_norm(&self) -> T {
        self.gamma_vec().norm()
    }

    /// Distance to the larger primary.
    pub fn r_l(&self) -> T {
        dynamics::sun_relative(&self.position, self.params.mu()).norm()
    }
}

/// Newton settings for the equilibrium solve.
#[derive(Clone, Copy, Debug)]
pub struct NewtonSettings<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self {
            tolerance: T::c(1e-12),
            max_iterations: 50,
        }
    }
}

/// Classical Lagrange point of the unperturbed problem, used to seed Newton.
///
/// Collinear points are found by a safeguarded Newton iteration on the
/// on-axis force balance; the triangular points are analytic.
pub fn classical_lagrange_point<T: Real>(mu: T, index: usize) -> Result<Vector3<T>> {
    if !(mu > T::zero() && mu <= T::c(0.5)) {
        return Err(Error::InvalidParameter(format!(
            "mass ratio mu = {} outside (0, 0.5]",
            mu.as_f64()
        )));
    }
    let half = T::c(0.5);
    let one = T::one();
    match index {
        1 | 2 | 3 => {
            let gamma_seed = (mu / T::c(3.0)).powf(T::c(1.0 / 3.0));
            let (lo, hi, seed) = match index {
                1 => (-mu + T::c(1e-9), one - mu - T::c(1e-9), one - mu - gamma_seed),
                2 => (one - mu + T::c(1e-9), T::c(2.0), one - mu + gamma_seed),
                _ => (-T::c(2.0), -mu - T::c(1e-9), -one - T::c(5.0 / 12.0) * mu),
            };
            let x = collinear_root(mu, seed, lo, hi)?;
            Ok(Vector3::new(x, T::zero(), T::zero()))
        }
        4 => Ok(Vector3::new(half - mu, T::c(0.75).sqrt(), T::zero())),
        5 => Ok(Vector3::new(half - mu, -T::c(0.75).sqrt(), T::zero())),
        _ => Err(Error::InvalidParameter(format!(
            "Lagrange point index {index} not in 1..=5"
        ))),
    }
}

/// On-axis force balance `x - (1-mu)(x+mu)/|x+mu|^3 - mu(x-1+mu)/|x-1+mu|^3`.
fn collinear_force<T: Real>(mu: T, x: T) -> T {
    let one = T::one();
    let d1 = x + mu;
    let d2 = x - one + mu;
    x - (one - mu) * d1 / d1.abs().powi(3) - mu * d2 / d2.abs().powi(3)
}

fn collinear_force_slope<T: Real>(mu: T, x: T) -> T {
    let one = T::one();
    let two = T::c(2.0);
    let d1 = x + mu;
    let d2 = x - one + mu;
    one + two * (one - mu) / d1.abs().powi(3) + two * mu / d2.abs().powi(3)
}

fn collinear_root<T: Real>(mu: T, seed: T, lo: T, hi: T) -> Result<T> {
    let tol = T::c(1e-14);
    let mut x = seed;
    for _ in 0..200 {
        let f = collinear_force(mu, x);
        if f.abs() <= tol {
            return Ok(x);
        }
        let slope = collinear_force_slope(mu, x);
        let mut next = x - f / slope;
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::c(0.5);
        }
        if (next - x).abs() <= T::c(1e-17) * x.abs().max(T::one()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        iterations: 200,
        residual: collinear_force(mu, x).abs().as_f64(),
    })
}

/// Force Jacobian of the zero-velocity condition: effective-potential Hessian
/// plus the SRP derivative.
pub fn force_jacobian<T: Real>(
    position: &Vector3<T>,
    params: &SystemParams<T>,
) -> Result<Matrix3<T>> {
    Ok(dynamics::potential_hessian(position, params.mu())
        + dynamics::srp_accel_jacobian(position, params)?)
}

/// Newton iteration on the zero-acceleration condition with step halving when
/// the residual grows.
pub fn find_aep<T: Real>(
    params: &SystemParams<T>,
    guess: Vector3<T>,
    settings: &NewtonSettings<T>,
) -> Result<Aep<T>> {
    let mut position = guess;
    let mut residual = dynamics::net_force(&position, params)?;
    let mut res_norm = residual.norm();
    for iteration in 0..settings.max_iterations {
        if res_norm <= settings.tolerance {
            return Ok(Aep {
                position,
                params: *params,
                residual_norm: res_norm,
            });
        }
        let jac = force_jacobian(&position, params)?;
        let step = jac
            .lu()
            .solve(&(-residual))
            .ok_or(Error::SingularJacobian)?;
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = position + step * scale;
            let cand_res = dynamics::net_force(&candidate, params)?;
            let cand_norm = cand_res.norm();
            if cand_norm < res_norm {
                position = candidate;
                residual = cand_res;
                res_norm = cand_norm;
                accepted = true;
                break;
            }
            scale *= T::c(0.5);
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual: res_norm.as_f64(),
            });
        }
    }
    if res_norm <= settings.tolerance {
        return Ok(Aep {
            position,
            params: *params,
            residual_norm: res_norm,
        });
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iterations,
        residual: res_norm.as_f64(),
    })
}

/// One cell of an attitude-angle sweep.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Real + Serialize")]
pub struct SweepCell<T: Real> {
    pub alpha: T,
    pub gamma: T,
    pub position: Option<Vector3<T>>,
    pub residual: Option<T>,
    pub converged: bool,
}

/// Sweep the attitude-angle grid row by row (fixed clock angle, cone angle
/// ascending). Within each row the solve walks outward from the cone angle
/// closest to zero, seeding every cell from its converged neighbor; failures
/// are recorded per cell.
pub fn sweep_aep<T: Real>(
    mu: T,
    beta: T,
    alpha_grid: &[T],
    gamma_grid: &[T],
    seed_index: usize,
    settings: &NewtonSettings<T>,
) -> Result<Vec<SweepCell<T>>> {
    if alpha_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    if alpha_grid.windows(2).any(|w| w[0] >= w[1]) || gamma_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "sweep grids must be strictly increasing".into(),
        ));
    }
    let classical = classical_lagrange_point(mu, seed_index)?;
    let mut cells = Vec::with_capacity(alpha_grid.len() * gamma_grid.len());
    // Start each row at the cone angle nearest zero.
    let start = alpha_grid
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.abs()
                .partial_cmp(&b.abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(idx, _)| idx)
        .unwrap_or(0);
    for &gamma in gamma_grid {
        let mut row: Vec<Option<SweepCell<T>>> = vec![None; alpha_grid.len()];
        let solve = |alpha: T, seed: Vector3<T>| -> SweepCell<T> {
            match SystemParams::new(mu, beta, alpha, gamma)
                .and_then(|p| find_aep(&p, seed, settings))
            {
                Ok(aep) => SweepCell {
                    alpha,
                    gamma,
                    position: Some(aep.position),
                    residual: Some(aep.residual_norm),
                    converged: true,
                },
                Err(_) => SweepCell {
                    alpha,
                    gamma,
                    position: None,
                    residual: None,
                    converged: false,
                },
            }
        };
        row[start] = Some(solve(alpha_grid[start], classical));
        let row_seed = row[start]
            .as_ref()
            .and_then(|c| c.position)
            .unwrap_or(classical);
        let mut seed_right = row_seed;
        for idx in start + 1..alpha_grid.len() {
            let cell = solve(alpha_grid[idx], seed_right);
            if let Some(pos) = cell.position {
                seed_right = pos;
            }
            row[idx] = Some(cell);
        }
        let mut seed_left = row_seed;
        for idx in (0..start).rev() {
            let cell = solve(alpha_grid[idx], seed_left);
            if let Some(pos) = cell.position {
                seed_left = pos;
            }
            row[idx] = Some(cell);
        }
        cells.extend(row.into_iter().map(|c| c.expect("row filled")));
    }
    Ok(cells)
}

/// Write a sweep as CSV: `alpha_deg,gamma_deg,Hx,Hy,Hz,residual,converged`.
pub fn write_sweep_csv<T: Real, W: Write>(cells: &[SweepCell<T>], out: &mut W) -> Result<()> {
    writeln!(out, "alpha_deg,gamma_deg,Hx,Hy,Hz,residual,converged")?;
    let rad_to_deg = 180.0 / std::f64::consts::PI;
    for cell in cells {
        let (hx, hy, hz) = match cell.position {
            Some(p) => (p.x.as_f64(), p.y.as_f64(), p.z.as_f64()),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell.alpha.as_f64() * rad_to_deg,
            cell.gamma.as_f64() * rad_to_deg,
            hx,
            hy,
            hz,
            cell.residual.map(|r| r.as_f64()).unwrap_or(f64::NAN),
            cell.converged
        )?;
    }
    Ok(())
}
