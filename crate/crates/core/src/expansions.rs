//! Legendre-recurrence expansions of the gravitational and SRP right-hand
//! sides about an equilibrium point, in both numeric mode (validation) and
//! series mode (the order-n solver).
//!
//! Everything here works in the local frame: coordinates are relative to the
//! equilibrium and scaled by the distance to the smaller primary.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::equilibria::Aep;
use crate::series::{TermIndex, TrigSeries};
use crate::{Error, Real, Result};

/// Scaled geometry of an equilibrium point.
///
/// `a1, b, c` are the components of the direction to the larger primary,
/// `a2` the offset to the smaller one, each divided by the local length
/// scale `gamma_norm`; `d1`, `d2` and `dxy` are the corresponding distances
/// (`d2 = 1` by construction).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ExpansionConstants<T: Real> {
    pub a1: T,
    pub a2: T,
    pub b: T,
    pub c: T,
    pub d1: T,
    pub d2: T,
    pub dxy: T,
    pub gamma_norm: T,
    /// `beta (1-mu) cos^2(alpha)`.
    pub srp_factor: T,
    pub mu: T,
    pub cos_alpha: T,
    pub sin_sin: T,
    pub sin_cos: T,
}

impl<T: Real> ExpansionConstants<T> {
    pub fn new(aep: &Aep<T>) -> Result<Self> {
        let mu = aep.params.mu();
        let gamma_norm = aep.gamma_norm();
        if gamma_norm == T::zero() {
            return Err(Error::DegenerateGeometry(
                "equilibrium coincides with the smaller primary".into(),
            ));
        }
        let a1 = -(aep.position.x + mu) / gamma_norm;
        let a2 = (T::one() - aep.position.x - mu) / gamma_norm;
        let b = -aep.position.y / gamma_norm;
        let c = -aep.position.z / gamma_norm;
        let d1 = (a1 * a1 + b * b + c * c).sqrt();
        let d2 = (a2 * a2 + b * b + c * c).sqrt();
        let dxy = (a1 * a1 + b * b).sqrt();
        if dxy == T::zero() && !aep.params.srp_is_null() {
            return Err(Error::DegenerateGeometry(
                "equilibrium on the z-axis through the Sun".into(),
            ));
        }
        let sin_a = aep.params.alpha().sin();
        Ok(Self {
            a1,
            a2,
            b,
            c,
            d1,
            d2,
            dxy,
            gamma_norm,
            srp_factor: aep.params.srp_factor(),
            mu,
            cos_alpha: aep.params.alpha().cos(),
            sin_sin: sin_a * aep.params.gamma().sin(),
            sin_cos: sin_a * aep.params.gamma().cos(),
        })
    }
}

// --- numeric recurrences ---------------------------------------------------

/// Numeric inverse-distance expansion terms `T_0..=n_max` about the center
/// `(A, B, C)` with `D^2 = A^2 + B^2 + C^2`.
pub fn legendre_t_numeric<T: Real>(
    n_max: usize,
    point: &Vector3<T>,
    a: T,
    b: T,
    c: T,
    d: T,
) -> Result<Vec<T>> {
    let rho = point.norm();
    if rho / d >= T::one() {
        return Err(Error::ConvergenceDomain((rho / d).as_f64()));
    }
    let w = (a * point.x + b * point.y + c * point.z) / (d * d);
    let s2 = (rho / d) * (rho / d);
    let mut t = Vec::with_capacity(n_max + 1);
    t.push(T::one());
    if n_max >= 1 {
        t.push(w);
    }
    for n in 2..=n_max {
        let nf = T::of_usize(n);
        let t_n = (T::c(2.0) * nf - T::one()) / nf * w * t[n - 1]
            - (nf - T::one()) / nf * s2 * t[n - 2];
        t.push(t_n);
    }
    Ok(t)
}

/// Numeric derivative terms `R_n = dT_n/dq` for one coordinate axis.
/// `r[0]` is zero by convention; valid entries start at `n = 1`.
pub fn legendre_r_numeric<T: Real>(
    n_max: usize,
    axis: usize,
    point: &Vector3<T>,
    a: T,
    b: T,
    c: T,
    d: T,
) -> Result<Vec<T>> {
    let t = legendre_t_numeric(n_max, point, a, b, c, d)?;
    let q_const = [a, b, c][axis];
    let q_coord = point[axis];
    let d2 = d * d;
    let w = (a * point.x + b * point.y + c * point.z) / d2;
    let s2 = point.norm_squared() / d2;
    let mut r = Vec::with_capacity(n_max + 1);
    r.push(T::zero());
    if n_max >= 1 {
        r.push(q_const / d2);
    }
    if n_max >= 2 {
        r.push(T::c(3.0) * q_const / d2 * w - q_coord / d2);
    }
    for n in 3..=n_max {
        let nf = T::of_usize(n);
        let r_n = (T::c(2.0) * nf - T::one()) / nf * (q_const / d2 * t[n - 1] + w * r[n - 1])
            - (nf - T::one()) / nf * (T::c(2.0) * q_coord / d2 * t[n - 2] + s2 * r[n - 2]);
        r.push(r_n);
    }
    Ok(r)
}

// --- series recurrences ------------------------------------------------------

/// Shared pieces of the series recurrences about one expansion center.
struct SeriesCenter<'a, T: Real> {
    coords: [&'a TrigSeries<T>; 3],
    q_consts: [T; 3],
    d2: T,
    /// `(A x + B y + C z) / D^2`.
    w: TrigSeries<T>,
    /// `rho^2 / D^2` over the participating coordinates.
    s2: TrigSeries<T>,
}

impl<'a, T: Real> SeriesCenter<'a, T> {
    /// `planar` drops the z coordinate from both the projection and rho^2.
    fn new(
        coords: [&'a TrigSeries<T>; 3],
        a: T,
        b: T,
        c: T,
        d: T,
        planar: bool,
    ) -> Result<Self> {
        let d2 = d * d;
        let mut w = coords[0].scale(a / d2).add(&coords[1].scale(b / d2))?;
        if !planar {
            w = w.add(&coords[2].scale(c / d2))?;
        }
        let mut s2 = coords[0]
            .mul(coords[0])?
            .add(&coords[1].mul(coords[1])?)?;
        if !planar {
            s2 = s2.add(&coords[2].mul(coords[2])?)?;
        }
        s2 = s2.scale(T::one() / d2);
        Ok(Self {
            coords,
            q_consts: [a, b, c],
            d2,
            w,
            s2,
        })
    }

    fn t_pyramid(&self, n_max: usize) -> Result<Vec<TrigSeries<T>>> {
        let order = self.w.max_order();
        let mut t = Vec::with_capacity(n_max + 1);
        t.push(TrigSeries::constant(order, T::one()));
        if n_max >= 1 {
            t.push(self.w.clone());
        }
        for n in 2..=n_max {
            let nf = T::of_usize(n);
            let lead = self.w.mul(&t[n - 1])?.scale((T::c(2.0) * nf - T::one()) / nf);
            let lag = self.s2.mul(&t[n - 2])?.scale((nf - T::one()) / nf);
            t.push(lead.sub(&lag)?);
        }
        Ok(t)
    }

    fn r_pyramid(
        &self,
        t: &[TrigSeries<T>],
        axis: usize,
        n_max: usize,
    ) -> Result<Vec<TrigSeries<T>>> {
        let order = self.w.max_order();
        let q_const = self.q_consts[axis];
        let q_series = self.coords[axis];
        let mut r = Vec::with_capacity(n_max + 1);
        r.push(TrigSeries::zero(order));
        if n_max >= 1 {
            r.push(TrigSeries::constant(order, q_const / self.d2));
        }
        if n_max >= 2 {
            let r2 = self
                .w
                .scale(T::c(3.0) * q_const / self.d2)
                .sub(&q_series.scale(T::one() / self.d2))?;
            r.push(r2);
        }
        for n in 3..=n_max {
            let nf = T::of_usize(n);
            let lead = t[n - 1]
                .scale(q_const / self.d2)
                .add(&self.w.mul(&r[n - 1])?)?
                .scale((T::c(2.0) * nf - T::one()) / nf);
            let lag = t[n - 2]
                .scale(T::c(2.0) / self.d2)
                .mul(q_series)?
                .add(&self.s2.mul(&r[n - 2])?)?
                .scale((nf - T::one()) / nf);
            r.push(lead.sub(&lag)?);
        }
        Ok(r)
    }
}

/// Series-mode inverse-distance terms about `(A, B, C)`.
pub fn legendre_t_series<T: Real>(
    n_max: usize,
    coords: [&TrigSeries<T>; 3],
    a: T,
    b: T,
    c: T,
    d: T,
) -> Result<Vec<TrigSeries<T>>> {
    SeriesCenter::new(coords, a, b, c, d, false)?.t_pyramid(n_max)
}

/// Series-mode derivative terms for one axis.
pub fn legendre_r_series<T: Real>(
    n_max: usize,
    axis: usize,
    coords: [&TrigSeries<T>; 3],
    a: T,
    b: T,
    c: T,
    d: T,
) -> Result<Vec<TrigSeries<T>>> {
    let center = SeriesCenter::new(coords, a, b, c, d, false)?;
    let t = center.t_pyramid(n_max)?;
    center.r_pyramid(&t, axis, n_max)
}

/// Higher-order gravitational right-hand side in equation units: the
/// derivative sums from `n = 3` through `truncation + 1` for both primaries,
/// weighted by the scaled masses and divided by `gamma_norm^3`. (The `n = 2`
/// terms are linear and live in the second-order matrix instead.)
pub fn grav_rhs_series<T: Real>(
    coords: [&TrigSeries<T>; 3],
    consts: &ExpansionConstants<T>,
) -> Result<[TrigSeries<T>; 3]> {
    let order = coords[0].max_order();
    let n_max = order as usize + 1;
    let gn3 = consts.gamma_norm.powi(3);
    let mut out = [
        TrigSeries::zero(order),
        TrigSeries::zero(order),
        TrigSeries::zero(order),
    ];
    for (a_center, d_center, weight) in [
        (
            consts.a1,
            consts.d1,
            (T::one() - consts.mu) / (consts.d1 * gn3),
        ),
        (consts.a2, consts.d2, consts.mu / (consts.d2 * gn3)),
    ] {
        let center = SeriesCenter::new(coords, a_center, consts.b, consts.c, d_center, false)?;
        let t = center.t_pyramid(n_max)?;
        for axis in 0..3 {
            let r = center.r_pyramid(&t, axis, n_max)?;
            for r_n in r.iter().take(n_max + 1).skip(3) {
                out[axis] = out[axis].add(&r_n.scale(weight))?;
            }
        }
    }
    Ok(out)
}

/// Full composed SRP series and its constant part, both in equation units
/// (divided by `gamma_norm^3`, like [`grav_rhs_series`]).
///
/// The inverse distances in the per-component force are replaced by the
/// expansion sums `S = sum T_n` (spatial) and `S_xy = sum T_xy,n` (planar),
/// each carried to `truncation + 1`. Scaling into equation units before the
/// series products keeps the coefficients well above the pruning floor.
pub fn srp_rhs_series<T: Real>(
    coords: [&TrigSeries<T>; 3],
    consts: &ExpansionConstants<T>,
) -> Result<([TrigSeries<T>; 3], Vector3<T>)> {
    let order = coords[0].max_order();
    if consts.srp_factor == T::zero() {
        return Ok((
            [
                TrigSeries::zero(order),
                TrigSeries::zero(order),
                TrigSeries::zero(order),
            ],
            Vector3::zeros(),
        ));
    }
    let n_max = order as usize + 1;
    let f = consts.srp_factor / consts.gamma_norm.powi(3);
    let (ca, ss, cs) = (consts.cos_alpha, consts.sin_sin, consts.sin_cos);
    let (d1, dxy) = (consts.d1, consts.dxy);

    let spatial = SeriesCenter::new(coords, consts.a1, consts.b, consts.c, d1, false)?;
    let planar = SeriesCenter::new(coords, consts.a1, consts.b, T::zero(), dxy, true)?;
    let sum_series = |pyramid: Vec<TrigSeries<T>>| -> Result<TrigSeries<T>> {
        let mut total = TrigSeries::zero(order);
        for term in &pyramid {
            total = total.add(term)?;
        }
        Ok(total)
    };
    let s = sum_series(spatial.t_pyramid(n_max)?)?;
    let sxy = sum_series(planar.t_pyramid(n_max)?)?;
    let s2 = s.mul(&s)?;
    let s3 = s2.mul(&s)?;
    let s3_sxy = s3.mul(&sxy)?;
    let s2_sxy = s2.mul(&sxy)?;

    let xa = coords[0].sub(&TrigSeries::constant(order, consts.a1))?;
    let yb = coords[1].sub(&TrigSeries::constant(order, consts.b))?;
    let zc = coords[2].sub(&TrigSeries::constant(order, consts.c))?;

    let d1_2 = d1 * d1;
    let d1_3 = d1_2 * d1;
    let radial = ca / d1_3;
    let swirl = ss / (d1_2 * dxy);
    let tilt = cs / (d1_3 * dxy);

    let ax = xa
        .mul(&s3)?
        .scale(radial)
        .add(&yb.mul(&s2_sxy)?.scale(swirl))?
        .sub(&zc.mul(&xa.mul(&s3_sxy)?)?.scale(tilt))?
        .scale(f);
    let ay = yb
        .mul(&s3)?
        .scale(radial)
        .sub(&xa.mul(&s2_sxy)?.scale(swirl))?
        .sub(&yb.mul(&zc.mul(&s3_sxy)?)?.scale(tilt))?
        .scale(f);
    let planar_sq = xa.mul(&xa)?.add(&yb.mul(&yb)?)?;
    let az = zc
        .mul(&s3)?
        .scale(ca / d1_3)
        .add(&planar_sq.mul(&s3_sxy)?.scale(cs / (d1_3 * dxy)))?
        .scale(f);

    let const0 = srp_order0(consts) / consts.gamma_norm.powi(3);
    Ok(([ax, ay, az], const0))
}

/// Constant (zeroth-order) part of the scaled SRP series, in closed form.
pub fn srp_order0<T: Real>(consts: &ExpansionConstants<T>) -> Vector3<T> {
    if consts.srp_factor == T::zero() {
        return Vector3::zeros();
    }
    let f = consts.srp_factor;
    let (ca, ss, cs) = (consts.cos_alpha, consts.sin_sin, consts.sin_cos);
    let (a1, b, c) = (consts.a1, consts.b, consts.c);
    let (d1, dxy) = (consts.d1, consts.dxy);
    let d1_2 = d1 * d1;
    Vector3::new(
        f / d1_2 * (-a1 * ca / d1 - b * ss / dxy - a1 * c * cs / (d1 * dxy)),
        f / d1_2 * (-b * ca / d1 + a1 * ss / dxy - b * c * cs / (d1 * dxy)),
        f / (d1_2 * d1) * (-c * ca + (a1 * a1 + b * b) * cs / dxy),
    )
}

/// Linear part of the SRP series in equation units, extracted by running the
/// series pipeline on unit first-order seeds. Numerically this equals the
/// physical SRP force Jacobian at the equilibrium (the derivative is
/// invariant under the local translation and scaling).
pub fn srp_jacobian_local<T: Real>(consts: &ExpansionConstants<T>) -> Result<Matrix3<T>> {
    if consts.srp_factor == T::zero() {
        return Ok(Matrix3::zeros());
    }
    let seeds = unit_seeds(1);
    let (series, _) = srp_rhs_series([&seeds[0], &seeds[1], &seeds[2]], consts)?;
    let mut jac = Matrix3::zeros();
    let seed_indices = [
        TermIndex::new([1, 0, 0, 0], 0, 0),
        TermIndex::new([0, 1, 0, 0], 0, 0),
        TermIndex::new([0, 0, 1, 0], 0, 0),
    ];
    for (row, component) in series.iter().enumerate() {
        for (col, idx) in seed_indices.iter().enumerate() {
            jac[(row, col)] = component.coeff(*idx).cos;
        }
    }
    Ok(jac)
}

/// Unit first-order series seeds `(x, y, z)` mapped onto the first three
/// amplitude slots; used to run the series machinery as a Taylor engine.
pub fn unit_seeds<T: Real>(order: u32) -> [TrigSeries<T>; 3] {
    [
        TrigSeries::term(order, TermIndex::new([1, 0, 0, 0], 0, 0), T::one(), T::zero()),
        TrigSeries::term(order, TermIndex::new([0, 1, 0, 0], 0, 0), T::one(), T::zero()),
        TrigSeries::term(order, TermIndex::new([0, 0, 1, 0], 0, 0), T::one(), T::zero()),
    ]
}

/// Gradient of the linear sail term in the translated problem: the SRP
/// acceleration frozen at the equilibrium, with a leading minus sign
/// (unscaled barycentric units).
pub fn g_gradient<T: Real>(aep: &Aep<T>) -> Vector3<T> {
    let params = &aep.params;
    if params.srp_is_null() {
        return Vector3::zeros();
    }
    let f = params.srp_factor();
    let mu = params.mu();
    let hx_mu = aep.position.x + mu;
    let (hy, hz) = (aep.position.y, aep.position.z);
    let r_l = aep.r_l();
    let p = (hy * hy + hx_mu * hx_mu).sqrt();
    let ca = params.alpha().cos();
    let sin_a = params.alpha().sin();
    let ss = sin_a * params.gamma().sin();
    let cs = sin_a * params.gamma().cos();
    let rl2 = r_l * r_l;
    Vector3::new(
        -f / rl2 * (hx_mu * ca / r_l - hz * hx_mu * cs / (r_l * p) + hy * ss / p),
        -f / rl2 * (hy * ca / r_l - hy * hz * cs / (r_l * p) - hx_mu * ss / p),
        -f / (rl2 * r_l) * (hz * ca + p * cs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::{params, SUN_EARTH_MU};
    use crate::dynamics::{sail_normal, srp_accel, sun_relative};
    use crate::equilibria::{classical_lagrange_point, find_aep, NewtonSettings};
    use crate::series::{Frequencies, TrigSeries};
    use approx::assert_abs_diff_eq;

    fn reference_aep(alpha_deg: f64, gamma_deg: f64) -> Aep<f64> {
        let p = params(0.002, alpha_deg, gamma_deg);
        let seed = classical_lagrange_point(p.mu(), 2).unwrap();
        find_aep(&p, seed, &NewtonSettings::default()).unwrap()
    }

    /// Evaluate a formal polynomial series (built on unit seeds) at a point.
    fn eval_formal(series: &TrigSeries<f64>, point: &Vector3<f64>) -> f64 {
        let freqs = Frequencies::constant(series.max_order(), 1.0, 1.0, 1.0);
        series.evaluate(&freqs, [point.x, point.y, point.z, 0.0], 0.0, 0.0, 0.0)
    }

    #[test]
    fn constants_satisfy_geometry() {
        let aep = reference_aep(80.0, 40.0);
        let k = ExpansionConstants::new(&aep).unwrap();
        // The offset to the smaller primary has unit scaled length.
        assert_abs_diff_eq!(k.d2, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            k.d1,
            aep.r_l() / aep.gamma_norm(),
            epsilon = 1e-12 * k.d1
        );
        assert_abs_diff_eq!(k.dxy * k.dxy, k.a1 * k.a1 + k.b * k.b, epsilon = 1e-12);
    }

    #[test]
    fn t_zero_is_one_anywhere() {
        let t = legendre_t_numeric(5, &Vector3::new(0.3, -0.8, 0.1), 3.0, 1.0, -2.0, 5.0).unwrap();
        assert_eq!(t[0], 1.0);
    }

    #[test]
    fn partial_sums_reconstruct_inverse_distance() {
        // sum_n T_n / D -> 1/|rho - center| within the geometric tail bound.
        let mut rng = crate::series::tests::Rng::new(99);
        let (a, b, c) = (2.0, -1.0, 0.5);
        let d = f64::sqrt(a * a + b * b + c * c);
        let n = 12;
        for _ in 0..100 {
            let rho = Vector3::new(rng.sym(), rng.sym(), rng.sym()) * (0.45 * d / 3.0f64.sqrt());
            let t = legendre_t_numeric(n, &rho, a, b, c, d).unwrap();
            let partial: f64 = t.iter().sum::<f64>() / d;
            let exact = 1.0 / (rho - Vector3::new(a, b, c)).norm();
            let ratio = rho.norm() / d;
            let tail = ratio.powi(n as i32 + 1) / (d * (1.0 - ratio));
            assert!(
                (partial - exact).abs() <= tail + 1e-15,
                "err {} tail {}",
                (partial - exact).abs(),
                tail
            );
        }
    }

    #[test]
    fn on_axis_terms_follow_power_law() {
        let (a, b, c) = (1.0, 2.0, -2.0);
        let d = 3.0;
        let rho = Vector3::new(a, b, c) * 0.1; // aligned with the center
        let t = legendre_t_numeric(6, &rho, a, b, c, d).unwrap();
        let ratio: f64 = rho.norm() / d;
        for (n, t_n) in t.iter().enumerate() {
            assert_abs_diff_eq!(*t_n, ratio.powi(n as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let err = legendre_t_numeric(3, &Vector3::new(5.0, 0.0, 0.0), 1.0, 0.0, 0.0, 1.0);
        assert!(matches!(err, Err(Error::ConvergenceDomain(_))));
    }

    #[test]
    fn first_derivative_terms_match_closed_form() {
        let (a, b, c) = (2.0, -1.0, 0.5);
        let d = f64::sqrt(a * a + b * b + c * c);
        let point = Vector3::new(0.2, 0.1, -0.3);
        let rx = legendre_r_numeric(2, 0, &point, a, b, c, d).unwrap();
        assert_abs_diff_eq!(rx[1], a / (d * d), epsilon = 1e-16);
        // At the origin the second derivative term vanishes.
        let r0 = legendre_r_numeric(2, 0, &Vector3::zeros(), a, b, c, d).unwrap();
        assert_abs_diff_eq!(r0[2], 0.0, epsilon = 1e-16);
    }

    #[test]
    fn derivative_terms_match_finite_differences() {
        let (a, b, c) = (2.0, -1.0, 0.5);
        let d = f64::sqrt(a * a + b * b + c * c);
        let mut rng = crate::series::tests::Rng::new(7);
        let h = 1e-6;
        for _ in 0..10 {
            let point = Vector3::new(0.4 * rng.sym(), 0.4 * rng.sym(), 0.4 * rng.sym());
            for axis in 0..3 {
                let r = legendre_r_numeric(8, axis, &point, a, b, c, d).unwrap();
                let mut plus = point;
                let mut minus = point;
                plus[axis] += h;
                minus[axis] -= h;
                let tp = legendre_t_numeric(8, &plus, a, b, c, d).unwrap();
                let tm = legendre_t_numeric(8, &minus, a, b, c, d).unwrap();
                for n in 1..=8 {
                    let fd = (tp[n] - tm[n]) / (2.0 * h);
                    let scale = fd.abs().max(1e-6);
                    assert!(
                        (r[n] - fd).abs() <= 1e-6 * scale,
                        "n {n} axis {axis}: {} vs {}",
                        r[n],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn series_terms_agree_with_numeric_terms() {
        // Unit seeds make the series terms formal polynomials; evaluating
        // them pointwise must reproduce the numeric recurrence.
        let (a, b, c) = (1.5, -0.7, 0.4);
        let d = f64::sqrt(a * a + b * b + c * c);
        let seeds = unit_seeds::<f64>(8);
        let t_series = legendre_t_series(8, [&seeds[0], &seeds[1], &seeds[2]], a, b, c, d).unwrap();
        let r_series = legendre_r_series(8, 1, [&seeds[0], &seeds[1], &seeds[2]], a, b, c, d).unwrap();
        let mut rng = crate::series::tests::Rng::new(31);
        for _ in 0..6 {
            let point = Vector3::new(0.3 * rng.sym(), 0.3 * rng.sym(), 0.3 * rng.sym());
            let t_num = legendre_t_numeric(8, &point, a, b, c, d).unwrap();
            let r_num = legendre_r_numeric(8, 1, &point, a, b, c, d).unwrap();
            for n in 0..=8 {
                assert_abs_diff_eq!(eval_formal(&t_series[n], &point), t_num[n], epsilon = 1e-11);
                assert_abs_diff_eq!(eval_formal(&r_series[n], &point), r_num[n], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn grav_rhs_of_zero_series_is_zero() {
        let aep = reference_aep(80.0, 0.0);
        let consts = ExpansionConstants::new(&aep).unwrap();
        let zero = TrigSeries::zero(4);
        let out = grav_rhs_series([&zero, &zero, &zero], &consts).unwrap();
        assert!(out.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn grav_rhs_matches_numeric_sum_on_first_order_input() {
        let aep = reference_aep(0.0, 0.0);
        let consts = ExpansionConstants::new(&aep).unwrap();
        let seeds = unit_seeds::<f64>(6);
        let series = grav_rhs_series([&seeds[0], &seeds[1], &seeds[2]], &consts).unwrap();
        let mut rng = crate::series::tests::Rng::new(5);
        for _ in 0..5 {
            let point = Vector3::new(0.05 * rng.sym(), 0.05 * rng.sym(), 0.05 * rng.sym());
            for axis in 0..3 {
                let mut direct = 0.0;
                let gn3 = consts.gamma_norm.powi(3);
                for (a, dd, weight) in [
                    (consts.a1, consts.d1, (1.0 - consts.mu) / (consts.d1 * gn3)),
                    (consts.a2, consts.d2, consts.mu / (consts.d2 * gn3)),
                ] {
                    let r = legendre_r_numeric(7, axis, &point, a, consts.b, consts.c, dd).unwrap();
                    direct += weight * r[3..=7].iter().sum::<f64>();
                }
                let from_series = eval_formal(&series[axis], &point);
                assert_abs_diff_eq!(from_series, direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn grav_rhs_has_y_parity_at_collinear_point() {
        let aep = reference_aep(0.0, 40.0); // collinear equilibrium
        let consts = ExpansionConstants::new(&aep).unwrap();
        let seeds = unit_seeds::<f64>(5);
        let series = grav_rhs_series([&seeds[0], &seeds[1], &seeds[2]], &consts).unwrap();
        let mut rng = crate::series::tests::Rng::new(50);
        for _ in 0..5 {
            let point = Vector3::new(0.04 * rng.sym(), 0.04 * rng.sym(), 0.04 * rng.sym());
            let mirrored = Vector3::new(point.x, -point.y, point.z);
            assert_abs_diff_eq!(
                eval_formal(&series[1], &point),
                -eval_formal(&series[1], &mirrored),
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                eval_formal(&series[0], &point),
                eval_formal(&series[0], &mirrored),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn srp_series_vanishes_when_nulled() {
        let p = crate::dynamics::SystemParams::new(
            SUN_EARTH_MU,
            0.002,
            std::f64::consts::FRAC_PI_2,
            0.3,
        )
        .unwrap();
        let seed = classical_lagrange_point(p.mu(), 2).unwrap();
        let aep = find_aep(&p, seed, &NewtonSettings::default()).unwrap();
        let consts = ExpansionConstants::new(&aep).unwrap();
        let seeds = unit_seeds::<f64>(4);
        let (series, const0) = srp_rhs_series([&seeds[0], &seeds[1], &seeds[2]], &consts).unwrap();
        assert!(series.iter().all(|s| s.is_empty()));
        assert_eq!(const0, Vector3::zeros());
        assert_eq!(srp_jacobian_local(&consts).unwrap(), Matrix3::zeros());
    }

    #[test]
    fn srp_constant_term_matches_frozen_physical_force() {
        // The zeroth-order series constants are the physical SRP at the
        // equilibrium, scaled by gamma_norm^2.
        for (alpha_deg, gamma_deg) in [(80.0, 0.0), (0.0, 40.0), (80.0, 40.0)] {
            let aep = reference_aep(alpha_deg, gamma_deg);
            let consts = ExpansionConstants::new(&aep).unwrap();
            let c0 = srp_order0(&consts);
            let physical = srp_accel(&aep.position, &aep.params).unwrap();
            let scaled = physical * consts.gamma_norm * consts.gamma_norm;
            assert_abs_diff_eq!((c0 - scaled).norm(), 0.0, epsilon = 1e-15 * scaled.norm());
            // And the series constant term agrees with the closed form after
            // the equation scaling.
            let seeds = unit_seeds::<f64>(2);
            let (series, const0) =
                srp_rhs_series([&seeds[0], &seeds[1], &seeds[2]], &consts).unwrap();
            let gn3 = consts.gamma_norm.powi(3);
            for axis in 0..3 {
                let from_series = series[axis].coeff(TermIndex::new([0, 0, 0, 0], 0, 0)).cos;
                assert_abs_diff_eq!(from_series, c0[axis] / gn3, epsilon = 1e-12 * const0.norm());
                assert_abs_diff_eq!(const0[axis], c0[axis] / gn3, epsilon = 1e-24);
            }
        }
    }

    #[test]
    fn srp_series_converges_to_physical_force() {
        // Evaluating the composed series at local offsets reproduces the
        // physical force at the matching barycentric point. The expansion
        // radius is the scaled Sun distance (about 100), so truncation-order
        // scaling only becomes visible at large offsets; small offsets are
        // exact to roundoff.
        let aep = reference_aep(80.0, 40.0);
        let consts = ExpansionConstants::new(&aep).unwrap();
        let order = 5u32;
        let seeds = unit_seeds::<f64>(order);
        let (series, _) = srp_rhs_series([&seeds[0], &seeds[1], &seeds[2]], &consts).unwrap();
        let gn = consts.gamma_norm;
        let direction = Vector3::new(0.6, -0.5, 0.4).normalize();
        let series_at = |scale: f64| -> (Vector3<f64>, Vector3<f64>) {
            let local = direction * scale;
            let barycentric = aep.position + local * gn;
            let physical = srp_accel(&barycentric, &aep.params).unwrap();
            let expected = physical / gn;
            let got = Vector3::new(
                eval_formal(&series[0], &local),
                eval_formal(&series[1], &local),
                eval_formal(&series[2], &local),
            );
            (got, expected)
        };
        // Physically relevant offsets: exact to roundoff.
        for scale in [0.05, 0.1, 0.2] {
            let (got, expected) = series_at(scale);
            assert!(
                (got - expected).norm() <= 1e-11 * expected.norm(),
                "scale {scale}: rel err {}",
                (got - expected).norm() / expected.norm()
            );
        }
        // Large offsets: the error halves like 2^(order+1) per halving.
        let mut errors = Vec::new();
        for scale in [48.0, 24.0, 12.0] {
            let (got, expected) = series_at(scale);
            errors.push((got - expected).norm());
        }
        let expected_rate = 2.0f64.powi(order as i32 + 1);
        let rate1 = errors[0] / errors[1];
        let rate2 = errors[1] / errors[2];
        assert!(
            rate1 > expected_rate * 0.5 && rate2 > expected_rate * 0.5,
            "rates {rate1} {rate2} vs {expected_rate}"
        );
    }

    #[test]
    fn linear_term_gradient_cases() {
        // No sail force: zero gradient.
        let aep0 = {
            let p = params(0.0, 0.0, 0.0);
            let seed = classical_lagrange_point(p.mu(), 2).unwrap();
            find_aep(&p, seed, &NewtonSettings::default()).unwrap()
        };
        assert_eq!(g_gradient(&aep0), Vector3::zeros());

        // Edge-on: zero gradient.
        let p_edge = crate::dynamics::SystemParams::new(
            SUN_EARTH_MU,
            0.002,
            std::f64::consts::FRAC_PI_2,
            0.4,
        )
        .unwrap();
        let seed = classical_lagrange_point(p_edge.mu(), 2).unwrap();
        let aep_edge = find_aep(&p_edge, seed, &NewtonSettings::default()).unwrap();
        assert_eq!(g_gradient(&aep_edge), Vector3::zeros());
    }

    #[test]
    fn linear_term_gradient_matches_finite_differences() {
        // G(rho) = f (n(r_L) . rho) / r_L^2 with the direction frozen at the
        // equilibrium; its gradient is the negated closed form.
        let aep = reference_aep(80.0, 40.0);
        let normal = sail_normal(&aep.position, &aep.params).unwrap();
        let r_l = aep.r_l();
        let f = aep.params.srp_factor();
        let g = |rho: &Vector3<f64>| -> f64 { f * normal.dot(rho) / (r_l * r_l) };
        let grad = g_gradient(&aep);
        let h = 1e-6;
        for axis in 0..3 {
            let mut plus = Vector3::zeros();
            let mut minus = Vector3::zeros();
            plus[axis] += h;
            minus[axis] -= h;
            let fd = (g(&plus) - g(&minus)) / (2.0 * h);
            assert_abs_diff_eq!(grad[axis], -fd, epsilon = 1e-8 * fd.abs().max(1e-10));
        }
        // The gradient is exactly the negated frozen SRP force.
        let physical = srp_accel(&aep.position, &aep.params).unwrap();
        assert_abs_diff_eq!((grad + physical).norm(), 0.0, epsilon = 1e-15 * physical.norm());
    }

    #[test]
    fn bracketed_expansion_reconstructs_shifted_potential() {
        // 1/D + sum_{n>=2} T_n/D equals 1/|rho - center| minus the linear
        // pull, within the truncation tail.
        let aep = reference_aep(80.0, 0.0);
        let k = ExpansionConstants::new(&aep).unwrap();
        let center = Vector3::new(k.a1, k.b, k.c);
        let mut rng = crate::series::tests::Rng::new(12);
        let n = 10;
        for _ in 0..20 {
            let rho = Vector3::new(rng.sym(), rng.sym(), rng.sym()) * 0.3;
            let t = legendre_t_numeric(n, &rho, k.a1, k.b, k.c, k.d1).unwrap();
            let bracket = (1.0 + t[2..].iter().sum::<f64>()) / k.d1;
            let direct = 1.0 / (rho - center).norm() - center.dot(&rho) / k.d1.powi(3);
            let ratio = rho.norm() / k.d1;
            let tail = ratio.powi(n as i32 + 1) / (k.d1 * (1.0 - ratio));
            assert!((bracket - direct).abs() <= tail + 1e-14);
        }
    }

    #[test]
    fn srp_jacobian_matches_dynamics_route() {
        for (alpha_deg, gamma_deg) in [(80.0, 0.0), (0.0, 40.0), (80.0, 40.0)] {
            let aep = reference_aep(alpha_deg, gamma_deg);
            let consts = ExpansionConstants::new(&aep).unwrap();
            let from_series = srp_jacobian_local(&consts).unwrap();
            let analytic =
                crate::dynamics::srp_accel_jacobian(&aep.position, &aep.params).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let scale = analytic[(i, j)].abs().max(1e-12);
                    assert!(
                        (from_series[(i, j)] - analytic[(i, j)]).abs() <= 1e-9 * scale,
                        "entry ({i},{j}): {} vs {}",
                        from_series[(i, j)],
                        analytic[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn sun_relative_matches_constants() {
        let aep = reference_aep(80.0, 40.0);
        let k = ExpansionConstants::new(&aep).unwrap();
        let r1 = sun_relative(&aep.position, aep.params.mu());
        assert_abs_diff_eq!(k.a1, -r1.x / k.gamma_norm, epsilon = 1e-15);
        assert_abs_diff_eq!(k.b, -r1.y / k.gamma_norm, epsilon = 1e-15);
        assert_abs_diff_eq!(k.c, -r1.z / k.gamma_norm, epsilon = 1e-15);
    }
}
