//! Linear model at an equilibrium point: second-derivative matrix, constant
//! forcing, eigenstructure and the closed-form solution of the linearized
//! equations.
//!
//! The linearized equations in the local frame read
//!
//! ```text
//! x'' - 2y' = W11 x + W12 y + W13 z + f1
//! y'' + 2x' = W21 x + W22 y + W23 z + f2
//! z''       = W31 x + W32 y + W33 z + f3
//! ```
//!
//! with `W` generally nonsymmetric for a tilted sail. The six characteristic
//! roots split into one real pair and two complex-conjugate pairs; the small
//! real parts of the oscillatory pairs are recorded and then set to zero, so
//! the closed-form solution is built from pure frequencies.

use nalgebra::{ComplexField, Matrix3, Matrix6, Vector3};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::equilibria::Aep;
use crate::expansions::{self, ExpansionConstants};
use crate::{Error, Real, Result};

/// Tolerances for classifying the characteristic roots.
const REAL_AXIS_TOL: f64 = 1e-9;
/// Oscillatory real parts beyond this are treated as a structure violation.
const REAL_PART_GATE: f64 = 1e-3;

/// Coriolis coupling matrix of the rotating frame.
pub fn coriolis<T: Real>() -> Matrix3<T> {
    let two = T::c(2.0);
    let mut c = Matrix3::zeros();
    c[(0, 1)] = -two;
    c[(1, 0)] = two;
    c
}

/// Linearized model at an equilibrium point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct LinearModel<T: Real> {
    /// Second-derivative matrix of the translated right-hand side.
    pub omega_star: Matrix3<T>,
    /// Constant forcing of the linearized equations (equation units).
    pub forcing: Vector3<T>,
    /// Hyperbolic rate (positive member of the real pair).
    pub lambda_r: T,
    /// In-plane oscillation frequency.
    pub omega_0: T,
    /// Out-of-plane oscillation frequency.
    pub nu_0: T,
    /// Recorded real part of the in-plane pair, set to zero downstream.
    pub omega_real: T,
    /// Recorded real part of the out-of-plane pair, set to zero downstream.
    pub nu_real: T,
    /// Solution coefficients `k1..k17` (index 0 holds k1).
    pub k: [T; 17],
    /// Eigenvector of the growing real mode, scaled to unit x.
    pub unstable_vec: Vector3<T>,
    /// Eigenvector of the decaying real mode, scaled to unit x.
    pub stable_vec: Vector3<T>,
    /// Mode shape at `i omega_0`, scaled to unit real x.
    pub inplane_vec: Vector3<Complex<T>>,
    /// Mode shape at `i nu_0`, scaled to unit real z.
    pub outplane_vec: Vector3<Complex<T>>,
}

impl<T: Real> LinearModel<T> {
    /// Assemble the full model at an equilibrium point.
    pub fn build(aep: &Aep<T>) -> Result<Self> {
        let consts = ExpansionConstants::new(aep)?;
        let omega_star = omega_star_matrix(aep, &consts)?;
        let forcing = constant_forcing(aep, &consts);
        let eigen = eigenstructure(&omega_star)?;
        k_coefficients(&omega_star, &forcing, eigen)
    }

    /// One-based accessor for the solution coefficients.
    pub fn k(&self, index: usize) -> T {
        self.k[index - 1]
    }
}

/// Second-derivative matrix assembled from the order-one expansion terms:
/// gravitational derivative terms at `n = 2` for both primaries, the linear
/// part of the SRP series, and the centrifugal diagonal.
pub fn omega_star_matrix<T: Real>(
    aep: &Aep<T>,
    consts: &ExpansionConstants<T>,
) -> Result<Matrix3<T>> {
    let gn3 = consts.gamma_norm.powi(3);
    let mut w = Matrix3::zeros();
    for (a_center, d_center, mass) in [
        (consts.a1, consts.d1, T::one() - consts.mu),
        (consts.a2, consts.d2, consts.mu),
    ] {
        let q = [a_center, consts.b, consts.c];
        let d2 = d_center * d_center;
        let weight = mass / (d_center * gn3);
        // Linear coefficients of the n = 2 derivative terms:
        // d/dq_j [3 Q_i (A x + B y + C z)/D^4 - q_i/D^2].
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { T::one() } else { T::zero() };
                w[(i, j)] += weight * (T::c(3.0) * q[i] * q[j] / (d2 * d2) - delta / d2);
            }
        }
    }
    w += expansions::srp_jacobian_local(consts)?;
    w[(0, 0)] += T::one();
    w[(1, 1)] += T::one();
    let _ = aep;
    Ok(w)
}

/// Constant forcing of the linearized equations: the frozen sail-term
/// gradient plus the constant of the SRP series, in equation units. At an
/// exactly converged equilibrium the two cancel to roundoff; the static
/// offsets they drive are then negligible, but the solve is kept for
/// consistency.
pub fn constant_forcing<T: Real>(aep: &Aep<T>, consts: &ExpansionConstants<T>) -> Vector3<T> {
    let g = expansions::g_gradient(aep) / consts.gamma_norm;
    let srp0 = expansions::srp_order0(consts) / consts.gamma_norm.powi(3);
    g + srp0
}

/// Quadratic eigenvalue pencil `L^2 I + L C - W` at a complex rate.
pub fn pencil<T: Real>(omega_star: &Matrix3<T>, lambda: Complex<T>) -> Matrix3<Complex<T>> {
    let l2 = lambda * lambda;
    let cor = coriolis::<T>();
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut entry = Complex::new(-omega_star[(i, j)], T::zero());
            entry += lambda * Complex::new(cor[(i, j)], T::zero());
            if i == j {
                entry += l2;
            }
            m[(i, j)] = entry;
        }
    }
    m
}

/// Real-rate version of [`pencil`].
pub fn pencil_real<T: Real>(omega_star: &Matrix3<T>, lambda: T) -> Matrix3<T> {
    let cor = coriolis::<T>();
    let mut m = -omega_star + cor * lambda;
    for i in 0..3 {
        m[(i, i)] += lambda * lambda;
    }
    m
}

/// Coefficients of the degree-6 characteristic polynomial, constant term
/// first, computed by expanding the pencil determinant symbolically.
pub fn characteristic_polynomial<T: Real>(omega_star: &Matrix3<T>) -> [T; 7] {
    let w = omega_star;
    let two = T::c(2.0);
    // Entries of the pencil as polynomials in the rate (constant, linear,
    // quadratic coefficients).
    let entry = |i: usize, j: usize| -> [T; 3] {
        let cor = if (i, j) == (0, 1) {
            -two
        } else if (i, j) == (1, 0) {
            two
        } else {
            T::zero()
        };
        let quad = if i == j { T::one() } else { T::zero() };
        [-w[(i, j)], cor, quad]
    };
    fn mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); a.len() + b.len() - 1];
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                out[i + j] += ai * bj;
            }
        }
        out
    }
    fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); a.len().max(b.len())];
        for (i, &ai) in a.iter().enumerate() {
            out[i] += ai;
        }
        for (i, &bi) in b.iter().enumerate() {
            out[i] -= bi;
        }
        out
    }
    let minor = |r0: usize, c0: usize, r1: usize, c1: usize| -> Vec<T> {
        sub(
            &mul(&entry(r0, c0), &entry(r1, c1)),
            &mul(&entry(r0, c1), &entry(r1, c0)),
        )
    };
    let det = sub(
        &sub(
            &mul(&entry(0, 0), &minor(1, 1, 2, 2)),
            &mul(&entry(0, 1), &minor(1, 0, 2, 2)),
        ),
        &mul(&entry(0, 2), &{
            let m = minor(1, 1, 2, 0);
            m.iter().map(|v| -*v).collect::<Vec<_>>()
        }),
    );
    // det = e00*(e11 e22 - e12 e21) - e01*(e10 e22 - e12 e20) + e02*(e10 e21 - e11 e20)
    let mut coeffs = [T::zero(); 7];
    for (i, v) in det.iter().take(7).enumerate() {
        coeffs[i] = *v;
    }
    coeffs
}

/// Evaluate the characteristic polynomial at a complex rate.
pub fn characteristic_value<T: Real>(coeffs: &[T; 7], lambda: Complex<T>) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for &c in coeffs.iter().rev() {
        acc = acc * lambda + Complex::new(c, T::zero());
    }
    acc
}

/// Raw eigenstructure: rates and mode shapes before coefficient extraction.
#[derive(Clone, Debug)]
pub struct EigenStructure<T: Real> {
    pub lambda_r: T,
    pub omega_0: T,
    pub nu_0: T,
    pub omega_real: T,
    pub nu_real: T,
    pub inplane_vec: Vector3<Complex<T>>,
    pub outplane_vec: Vector3<Complex<T>>,
}

/// Solve the 6x6 first-order eigenproblem and classify the roots into the
/// real pair and the two oscillatory pairs. Mode assignment follows the
/// dominant content of the mode shape (in-plane against out-of-plane), with
/// the larger imaginary part winning the in-plane slot when content is
/// ambiguous.
pub fn eigenstructure<T: Real>(omega_star: &Matrix3<T>) -> Result<EigenStructure<T>> {
    let mut system = Matrix6::zeros();
    for i in 0..3 {
        system[(i, i + 3)] = T::one();
    }
    let cor = coriolis::<T>();
    for i in 0..3 {
        for j in 0..3 {
            system[(i + 3, j)] = omega_star[(i, j)];
            system[(i + 3, j + 3)] = -cor[(i, j)];
        }
    }
    let roots = system.complex_eigenvalues();
    let scale = roots
        .iter()
        .map(|r| r.modulus())
        .fold(T::zero(), |acc, v| acc.max(v));
    let tol = T::c(REAL_AXIS_TOL) * scale.max(T::one());

    let mut real_roots: Vec<T> = Vec::new();
    let mut upper: Vec<Complex<T>> = Vec::new();
    let mut lower: Vec<Complex<T>> = Vec::new();
    for root in roots.iter() {
        if root.im.abs() <= tol {
            real_roots.push(root.re);
        } else if root.im > T::zero() {
            upper.push(*root);
        } else {
            lower.push(*root);
        }
    }
    if real_roots.len() != 2 || upper.len() != 2 || lower.len() != 2 {
        return Err(Error::StructureViolation(format!(
            "expected one real pair and two conjugate pairs, found {} real / {} complex roots",
            real_roots.len(),
            upper.len() + lower.len()
        )));
    }
    if (real_roots[0] + real_roots[1]).abs() > tol * T::c(10.0) {
        return Err(Error::StructureViolation(
            "real roots are not an opposite-sign pair".into(),
        ));
    }
    for u in &upper {
        if !lower.iter().any(|l| (l.conj() - u).modulus() <= tol * T::c(10.0)) {
            return Err(Error::StructureViolation(
                "complex roots do not form conjugate pairs".into(),
            ));
        }
    }
    let lambda_r = real_roots[0].max(real_roots[1]);

    // Mode shapes at the reduced (purely imaginary) rates.
    let shape_a = null_vector_complex(&pencil(
        omega_star,
        Complex::new(T::zero(), upper[0].im),
    ))?;
    let shape_b = null_vector_complex(&pencil(
        omega_star,
        Complex::new(T::zero(), upper[1].im),
    ))?;
    let z_frac = |v: &Vector3<Complex<T>>| -> T {
        let total = v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr();
        v[2].norm_sqr() / total
    };
    let (za, zb) = (z_frac(&shape_a), z_frac(&shape_b));
    let a_is_inplane = if (za - zb).abs() < T::c(0.1) {
        upper[0].im > upper[1].im
    } else {
        za < zb
    };
    let (inplane, outplane, inplane_vec, outplane_vec) = if a_is_inplane {
        (upper[0], upper[1], shape_a, shape_b)
    } else {
        (upper[1], upper[0], shape_b, shape_a)
    };
    if inplane.re.abs() > T::c(REAL_PART_GATE) || outplane.re.abs() > T::c(REAL_PART_GATE) {
        return Err(Error::StructureViolation(format!(
            "oscillatory real parts too large: {:.3e}, {:.3e}",
            inplane.re.as_f64(),
            outplane.re.as_f64()
        )));
    }
    Ok(EigenStructure {
        lambda_r,
        omega_0: inplane.im,
        nu_0: outplane.im,
        omega_real: inplane.re,
        nu_real: outplane.re,
        inplane_vec,
        outplane_vec,
    })
}

fn null_vector_complex<T: Real>(
    m: &Matrix3<Complex<T>>,
) -> Result<Vector3<Complex<T>>> {
    let svd = m.svd(true, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::StructureViolation("SVD did not produce V".into()))?;
    let mut idx = 0;
    for i in 1..3 {
        if svd.singular_values[i] < svd.singular_values[idx] {
            idx = i;
        }
    }
    let row = v_t.row(idx);
    Ok(Vector3::new(row[0].conj(), row[1].conj(), row[2].conj()))
}

fn null_vector_real<T: Real>(m: &Matrix3<T>) -> Result<Vector3<T>> {
    let svd = m.svd(true, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::StructureViolation("SVD did not produce V".into()))?;
    let mut idx = 0;
    for i in 1..3 {
        if svd.singular_values[i] < svd.singular_values[idx] {
            idx = i;
        }
    }
    Ok(v_t.row(idx).transpose())
}

/// Extract the seventeen solution coefficients from the eigenstructure.
///
/// Normalization follows the first-order series seeding: the real modes and
/// the in-plane mode are scaled to unit x, the out-of-plane mode to unit z.
/// Fixing the mode phases (zero imaginary part in the normalized component)
/// absorbs the free phase into the solution's phase angles, so `k13` and
/// `k14` come out as zeros.
pub fn k_coefficients<T: Real>(
    omega_star: &Matrix3<T>,
    forcing: &Vector3<T>,
    eigen: EigenStructure<T>,
) -> Result<LinearModel<T>> {
    let norm_floor = T::c(1e-9);

    let unstable_raw = null_vector_real(&pencil_real(omega_star, eigen.lambda_r))?;
    if unstable_raw.x.abs() < norm_floor * unstable_raw.norm() {
        return Err(Error::ZeroNormalizationComponent("unstable mode x"));
    }
    let unstable = unstable_raw / unstable_raw.x;

    let stable_raw = null_vector_real(&pencil_real(omega_star, -eigen.lambda_r))?;
    if stable_raw.x.abs() < norm_floor * stable_raw.norm() {
        return Err(Error::ZeroNormalizationComponent("stable mode x"));
    }
    let stable = stable_raw / stable_raw.x;

    let ip_raw = eigen.inplane_vec;
    let ip_scale = ip_raw[0];
    if ip_scale.modulus() < norm_floor * ip_raw.norm() {
        return Err(Error::ZeroNormalizationComponent("in-plane mode x"));
    }
    let inplane = ip_raw.map(|c| c / ip_scale);

    let op_raw = eigen.outplane_vec;
    let op_scale = op_raw[2];
    if op_scale.modulus() < norm_floor * op_raw.norm() {
        return Err(Error::ZeroNormalizationComponent("out-of-plane mode z"));
    }
    let outplane = op_raw.map(|c| c / op_scale);

    let statics = omega_star
        .lu()
        .solve(&(-forcing))
        .ok_or(Error::SingularOmegaStar)?;

    let mut k = [T::zero(); 17];
    k[0] = unstable.y; // k1
    k[1] = stable.y; // k2
    k[2] = unstable.z; // k3
    k[3] = stable.z; // k4
    k[4] = outplane[0].re; // k5
    k[5] = -outplane[0].im; // k6
    k[6] = inplane[1].re; // k7
    k[7] = -inplane[1].im; // k8
    k[8] = outplane[1].re; // k9
    k[9] = -outplane[1].im; // k10
    k[10] = inplane[2].re; // k11
    k[11] = -inplane[2].im; // k12
    k[12] = -outplane[2].im; // k13 (zero by normalization)
    k[13] = -inplane[0].im; // k14 (zero by normalization)
    k[14] = statics.x; // k15
    k[15] = statics.y; // k16
    k[16] = statics.z; // k17

    Ok(LinearModel {
        omega_star: *omega_star,
        forcing: *forcing,
        lambda_r: eigen.lambda_r,
        omega_0: eigen.omega_0,
        nu_0: eigen.nu_0,
        omega_real: eigen.omega_real,
        nu_real: eigen.nu_real,
        k,
        unstable_vec: unstable,
        stable_vec: stable,
        inplane_vec: inplane,
        outplane_vec: outplane,
    })
}

/// Closed-form solution of the linearized equations with the real-part
/// reduction applied (pure exponential-plus-oscillation form).
pub fn linear_solution<T: Real>(
    model: &LinearModel<T>,
    t: T,
    amps: [T; 4],
    phi1: T,
    phi2: T,
) -> Vector3<T> {
    let k = |i: usize| model.k(i);
    let e_plus = (model.lambda_r * t).exp();
    let e_minus = (-model.lambda_r * t).exp();
    let theta1 = model.omega_0 * t + phi1;
    let theta2 = model.nu_0 * t + phi2;
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    let (a1, a2, a3, a4) = (amps[0], amps[1], amps[2], amps[3]);
    Vector3::new(
        a1 * e_plus + a2 * e_minus + a3 * (c1 + k(14) * s1) + a4 * (k(5) * c2 + k(6) * s2) + k(15),
        k(1) * a1 * e_plus
            + k(2) * a2 * e_minus
            + a3 * (k(7) * c1 + k(8) * s1)
            + a4 * (k(9) * c2 + k(10) * s2)
            + k(16),
        k(3) * a1 * e_plus
            + k(4) * a2 * e_minus
            + a3 * (k(11) * c1 + k(12) * s1)
            + a4 * (c2 + k(13) * s2)
            + k(17),
    )
}
