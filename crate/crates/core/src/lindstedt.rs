//! Order-n semi-analytical solver.
//!
//! Starting from the linearized solution, each order substitutes the current
//! series into the translated equations of motion, collects the order-n
//! forcing per harmonic group, and solves a small linear system for the new
//! coefficients. At resonant index patterns the system is singular and a
//! rate correction joins the unknowns; the augmented system is solved by a
//! minimum-norm least-squares pseudoinverse.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemParams;
use crate::equilibria::Aep;
use crate::expansions::{self, ExpansionConstants};
use crate::linearization::LinearModel;
use crate::series::{
    Frequencies, FrequencyRecord, FrequencySeries, SeriesRecord, TermIndex, TrigSeries,
};
use crate::{Error, Real, Result};

/// Solver tolerances.
#[derive(Clone, Copy, Debug)]
pub struct BuildSettings<T> {
    /// Largest acceptable least-squares residual in any group solve.
    pub residual_tolerance: T,
    /// Condition numbers beyond this are recorded as warnings.
    pub condition_warning: T,
    /// Singular values below this fraction of the largest are treated as
    /// zero in the pseudoinverse.
    pub svd_cutoff: T,
}

impl<T: Real> Default for BuildSettings<T> {
    fn default() -> Self {
        Self {
            residual_tolerance: T::c(1e-9),
            condition_warning: T::c(1e12),
            svd_cutoff: T::c(1e-12),
        }
    }
}

/// Per-order solve diagnostics (plain floats so they serialize uniformly).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OrderDiagnostics {
    pub order: u32,
    pub groups: usize,
    pub frequency_corrections: usize,
    /// Groups where the augmented solve did not beat the plain one.
    pub fallbacks: usize,
    pub max_residual: f64,
    pub max_condition: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub orders: Vec<OrderDiagnostics>,
    pub warnings: Vec<String>,
}

/// Coordinate series, velocity series and rate polynomials of one solution.
#[derive(Clone, Debug)]
pub struct SeriesSolution<T: Real> {
    pub order: u32,
    pub aep: Aep<T>,
    pub x: TrigSeries<T>,
    pub y: TrigSeries<T>,
    pub z: TrigSeries<T>,
    pub vx: TrigSeries<T>,
    pub vy: TrigSeries<T>,
    pub vz: TrigSeries<T>,
    pub freqs: Frequencies<T>,
    pub diagnostics: BuildDiagnostics,
}

impl<T: Real> SeriesSolution<T> {
    /// Position in the local (equilibrium-relative, scaled) frame.
    pub fn local_position(&self, amps: [T; 4], phi1: T, phi2: T, t: T) -> Vector3<T> {
        Vector3::new(
            self.x.evaluate(&self.freqs, amps, phi1, phi2, t),
            self.y.evaluate(&self.freqs, amps, phi1, phi2, t),
            self.z.evaluate(&self.freqs, amps, phi1, phi2, t),
        )
    }

    /// Velocity in the local frame.
    pub fn local_velocity(&self, amps: [T; 4], phi1: T, phi2: T, t: T) -> Vector3<T> {
        Vector3::new(
            self.vx.evaluate(&self.freqs, amps, phi1, phi2, t),
            self.vy.evaluate(&self.freqs, amps, phi1, phi2, t),
            self.vz.evaluate(&self.freqs, amps, phi1, phi2, t),
        )
    }

    /// Acceleration in the local frame (second derivative series).
    pub fn local_acceleration(&self, amps: [T; 4], phi1: T, phi2: T, t: T) -> Vector3<T> {
        Vector3::new(
            self.vx.ddt(&self.freqs).evaluate(&self.freqs, amps, phi1, phi2, t),
            self.vy.ddt(&self.freqs).evaluate(&self.freqs, amps, phi1, phi2, t),
            self.vz.ddt(&self.freqs).evaluate(&self.freqs, amps, phi1, phi2, t),
        )
    }

    /// Same solution truncated to a lower order, with velocities rebuilt.
    pub fn truncated(&self, order: u32) -> Self {
        assert!(order >= 1 && order <= self.order);
        let freqs = self.freqs.truncated(order);
        let x = self.x.truncated(order);
        let y = self.y.truncated(order);
        let z = self.z.truncated(order);
        let (vx, vy, vz) = (x.ddt(&freqs), y.ddt(&freqs), z.ddt(&freqs));
        let mut diagnostics = self.diagnostics.clone();
        diagnostics.orders.retain(|o| o.order <= order);
        Self {
            order,
            aep: self.aep,
            x,
            y,
            z,
            vx,
            vy,
            vz,
            freqs,
            diagnostics,
        }
    }
}

/// Seed the series with the closed-form linear solution: twenty-one
/// coordinate coefficients and the three zeroth-order rates.
pub fn initialize<T: Real>(linear: &LinearModel<T>, aep: &Aep<T>, order: u32) -> SeriesSolution<T> {
    let k = |i: usize| linear.k(i);
    let one = T::one();
    let zero = T::zero();
    let mut x = TrigSeries::zero(order);
    let mut y = TrigSeries::zero(order);
    let mut z = TrigSeries::zero(order);

    let growing = TermIndex::new([1, 0, 0, 0], 0, 0);
    let decaying = TermIndex::new([0, 1, 0, 0], 0, 0);
    let inplane = TermIndex::new([0, 0, 1, 0], 1, 0);
    let outplane = TermIndex::new([0, 0, 0, 1], 0, 1);
    let constant = TermIndex::new([0, 0, 0, 0], 0, 0);

    x.set_term(growing, one, zero);
    x.set_term(decaying, one, zero);
    x.set_term(inplane, one, k(14));
    x.set_term(outplane, k(5), k(6));
    x.set_term(constant, k(15), zero);

    y.set_term(growing, k(1), zero);
    y.set_term(decaying, k(2), zero);
    y.set_term(inplane, k(7), k(8));
    y.set_term(outplane, k(9), k(10));
    y.set_term(constant, k(16), zero);

    z.set_term(growing, k(3), zero);
    z.set_term(decaying, k(4), zero);
    z.set_term(inplane, k(11), k(12));
    z.set_term(outplane, one, k(13));
    z.set_term(constant, k(17), zero);

    let freqs = Frequencies::constant(order, linear.omega_0, linear.nu_0, linear.lambda_r);
    let (vx, vy, vz) = (x.ddt(&freqs), y.ddt(&freqs), z.ddt(&freqs));
    SeriesSolution {
        order,
        aep: *aep,
        x,
        y,
        z,
        vx,
        vy,
        vz,
        freqs,
        diagnostics: BuildDiagnostics::default(),
    }
}

/// The 6x6 group matrix for one index set: rows are the cosine and sine
/// components of the three equations, columns the cosine and sine
/// coefficients of the three coordinates.
pub fn assemble_m<T: Real>(
    index: &TermIndex,
    omega_star: &Matrix3<T>,
    lambda0: T,
    omega0: T,
    nu0: T,
) -> Matrix6<T> {
    let two = T::c(2.0);
    let zeta = T::c(index.hyperbolic_exponent() as f64) * lambda0;
    let psi = T::of_usize(index.p as usize) * omega0 + T::c(f64::from(index.q)) * nu0;
    let xi = zeta * zeta - psi * psi;
    let w = omega_star;
    let mut m = Matrix6::zeros();
    // Diagonal blocks: second derivative and the linear restoring terms.
    for coord in 0..3 {
        for (axis, col) in [(0usize, 0usize), (1, 2), (2, 4)] {
            m[(2 * coord, col)] -= w[(coord, axis)];
            m[(2 * coord + 1, col + 1)] -= w[(coord, axis)];
        }
        m[(2 * coord, 2 * coord)] += xi;
        m[(2 * coord + 1, 2 * coord + 1)] += xi;
        m[(2 * coord, 2 * coord + 1)] += two * zeta * psi;
        m[(2 * coord + 1, 2 * coord)] -= two * zeta * psi;
    }
    // Rotating-frame coupling between the first two equations.
    m[(0, 2)] -= two * zeta;
    m[(0, 3)] -= two * psi;
    m[(1, 2)] += two * psi;
    m[(1, 3)] -= two * zeta;
    m[(2, 0)] += two * zeta;
    m[(2, 1)] += two * psi;
    m[(3, 0)] -= two * psi;
    m[(3, 1)] += two * zeta;
    m
}

/// Which rate correction a group of indices calls for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupCase {
    /// Secular resonance of the growing mode: corrects the hyperbolic rate.
    HyperbolicGrowing,
    /// Secular resonance of the decaying mode: corrects the hyperbolic rate.
    HyperbolicDecaying,
    /// First harmonic of the in-plane angle: corrects the in-plane rate.
    InPlane,
    /// First harmonic of the out-of-plane angle: corrects the out-of-plane
    /// rate.
    OutOfPlane,
    /// Regular group: the plain system is invertible.
    Plain,
}

/// Classify a group and name the rate-coefficient index it would correct.
pub fn classify_group(index: &TermIndex) -> (GroupCase, Option<[u32; 4]>) {
    let [i, j, km, m] = [index.amp[0], index.amp[1], index.amp[2], index.amp[3]];
    if index.p == 0 && index.q == 0 {
        if i == j + 1 {
            return (GroupCase::HyperbolicGrowing, Some([i - 1, j, km, m]));
        }
        if j == i + 1 {
            return (GroupCase::HyperbolicDecaying, Some([i, j - 1, km, m]));
        }
    }
    if index.p == 1 && index.q == 0 && i == j && km >= 1 {
        return (GroupCase::InPlane, Some([i, j, km - 1, m]));
    }
    if index.p == 0 && index.q == 1 && i == j && m >= 1 {
        return (GroupCase::OutOfPlane, Some([i, j, km, m - 1]));
    }
    (GroupCase::Plain, None)
}

/// Sensitivity of the group equations to the case's rate correction: the
/// correction multiplies the first-order mode terms through the time
/// derivatives.
pub fn correction_column<T: Real>(case: GroupCase, linear: &LinearModel<T>) -> Vector6<T> {
    let two = T::c(2.0);
    let k = |i: usize| linear.k(i);
    let l0 = linear.lambda_r;
    let w0 = linear.omega_0;
    let n0 = linear.nu_0;
    match case {
        GroupCase::HyperbolicGrowing => Vector6::new(
            two * (l0 - k(1)),
            T::zero(),
            two * (k(1) * l0 + T::one()),
            T::zero(),
            two * k(3) * l0,
            T::zero(),
        ),
        GroupCase::HyperbolicDecaying => Vector6::new(
            two * (l0 + k(2)),
            T::zero(),
            two * (k(2) * l0 - T::one()),
            T::zero(),
            two * k(4) * l0,
            T::zero(),
        ),
        GroupCase::InPlane => Vector6::new(
            -two * (k(8) + w0),
            two * (k(7) - k(14) * w0),
            two * (k(14) - k(7) * w0),
            -two * (k(8) * w0 + T::one()),
            -two * k(11) * w0,
            -two * k(12) * w0,
        ),
        GroupCase::OutOfPlane => Vector6::new(
            -two * (k(5) * n0 + k(10)),
            -two * (k(6) * n0 - k(9)),
            -two * (k(9) * n0 - k(6)),
            -two * (k(10) * n0 + k(5)),
            -two * n0,
            -two * k(13) * n0,
        ),
        GroupCase::Plain => Vector6::zeros(),
    }
}

/// Incremental builder: holds the linear model and the partially solved
/// series so each order (and its internals) can be driven and inspected.
pub struct Builder<T: Real> {
    linear: LinearModel<T>,
    consts: ExpansionConstants<T>,
    jac_local: Matrix3<T>,
    settings: BuildSettings<T>,
    solution: SeriesSolution<T>,
    /// Rate-coefficient indices already written, per channel (0 = in-plane,
    /// 1 = out-of-plane, 2 = hyperbolic).
    written: BTreeSet<(u8, [u32; 4])>,
}

impl<T: Real> Builder<T> {
    pub fn new(aep: &Aep<T>, order: u32, settings: BuildSettings<T>) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidParameter(
                "series order must be at least 1".into(),
            ));
        }
        let linear = LinearModel::build(aep)?;
        let consts = ExpansionConstants::new(aep)?;
        let jac_local = expansions::srp_jacobian_local(&consts)?;
        let solution = initialize(&linear, aep, order);
        Ok(Self {
            linear,
            consts,
            jac_local,
            settings,
            solution,
            written: BTreeSet::new(),
        })
    }

    pub fn linear(&self) -> &LinearModel<T> {
        &self.linear
    }

    pub fn solution(&self) -> &SeriesSolution<T> {
        &self.solution
    }

    /// Left-hand side of the equations applied to the current series,
    /// truncated at `trunc`.
    fn lhs_series(&self, trunc: u32) -> Result<[TrigSeries<T>; 3]> {
        let freqs = self.solution.freqs.truncated(trunc);
        let x = self.solution.x.truncated(trunc);
        let y = self.solution.y.truncated(trunc);
        let z = self.solution.z.truncated(trunc);
        let dx = x.ddt(&freqs);
        let dy = y.ddt(&freqs);
        let two = T::c(2.0);
        let w = &self.linear.omega_star;
        let row = |axis: usize| -> Result<TrigSeries<T>> {
            x.scale(w[(axis, 0)])
                .add(&y.scale(w[(axis, 1)]))?
                .add(&z.scale(w[(axis, 2)]))
        };
        let lx = dx.ddt(&freqs).sub(&dy.scale(two))?.sub(&row(0)?)?;
        let ly = y
            .ddt(&freqs)
            .ddt(&freqs)
            .add(&dx.scale(two))?
            .sub(&row(1)?)?;
        let lz = z.ddt(&freqs).ddt(&freqs).sub(&row(2)?)?;
        Ok([lx, ly, lz])
    }

    /// Nonlinear remainder of the right-hand side for the current series,
    /// truncated at `trunc`.
    fn rhs_series(&self, trunc: u32) -> Result<[TrigSeries<T>; 3]> {
        let x = self.solution.x.truncated(trunc);
        let y = self.solution.y.truncated(trunc);
        let z = self.solution.z.truncated(trunc);
        let coords = [&x, &y, &z];
        let grav = expansions::grav_rhs_series(coords, &self.consts)?;
        let (srp, srp_const) = expansions::srp_rhs_series(coords, &self.consts)?;
        let mut out = [
            TrigSeries::zero(trunc),
            TrigSeries::zero(trunc),
            TrigSeries::zero(trunc),
        ];
        for axis in 0..3 {
            let linear_part = x
                .scale(self.jac_local[(axis, 0)])
                .add(&y.scale(self.jac_local[(axis, 1)]))?
                .add(&z.scale(self.jac_local[(axis, 2)]))?;
            out[axis] = grav[axis]
                .add(&srp[axis])?
                .sub(&TrigSeries::constant(trunc, srp_const[axis]))?
                .sub(&linear_part)?;
        }
        Ok(out)
    }

    /// Order-n forcing per harmonic group: the right-hand side minus the
    /// linear operator applied to everything already known.
    pub fn known_terms(&self, n: u32) -> Result<BTreeMap<TermIndex, Vector6<T>>> {
        let lhs = self.lhs_series(n)?;
        let rhs = self.rhs_series(n)?;
        let mut groups: BTreeMap<TermIndex, Vector6<T>> = BTreeMap::new();
        for (coord, (r, l)) in rhs.iter().zip(lhs.iter()).enumerate() {
            let b = r.sub(l)?;
            for (idx, cs) in b.order_slice(n) {
                let entry = groups.entry(*idx).or_insert_with(Vector6::zeros);
                entry[2 * coord] += cs.cos;
                entry[2 * coord + 1] += cs.sin;
            }
        }
        Ok(groups)
    }

    /// Solve every order-n group and write the results into the series.
    pub fn solve_order(&mut self, n: u32) -> Result<OrderDiagnostics> {
        let groups = self.known_terms(n)?;
        let mut diag = OrderDiagnostics {
            order: n,
            groups: groups.len(),
            ..OrderDiagnostics::default()
        };
        for (index, b) in groups {
            let (case, target) = classify_group(&index);
            let solved = self.solve_group(&index, &b, case, target)?;
            diag.max_residual = diag.max_residual.max(solved.residual.as_f64());
            diag.max_condition = diag.max_condition.max(solved.condition.as_f64());
            if solved.residual > self.settings.residual_tolerance {
                return Err(Error::ResidualTooLarge {
                    order: n,
                    group: index.to_string(),
                    residual: solved.residual.as_f64(),
                    tolerance: self.settings.residual_tolerance.as_f64(),
                });
            }
            if solved.condition > self.settings.condition_warning {
                self.solution.diagnostics.warnings.push(format!(
                    "order {n} group {index}: condition {:.3e}",
                    solved.condition.as_f64()
                ));
            }
            if solved.fell_back {
                diag.fallbacks += 1;
            }
            if let Some(value) = solved.correction {
                diag.frequency_corrections += 1;
                let target = target.expect("correction implies a target index");
                match case {
                    GroupCase::InPlane => self.solution.freqs.omega.set(target, value),
                    GroupCase::OutOfPlane => self.solution.freqs.nu.set(target, value),
                    _ => self.solution.freqs.lambda.set(target, value),
                }
                self.written.insert((channel_of(case), target));
            }
            self.solution.x.set_term(index, solved.x[0], solved.x[1]);
            self.solution.y.set_term(index, solved.x[2], solved.x[3]);
            self.solution.z.set_term(index, solved.x[4], solved.x[5]);
        }
        self.solution.diagnostics.orders.push(diag.clone());
        Ok(diag)
    }

    fn solve_group(
        &self,
        index: &TermIndex,
        b: &Vector6<T>,
        case: GroupCase,
        target: Option<[u32; 4]>,
    ) -> Result<GroupSolution<T>> {
        let m6 = assemble_m(
            index,
            &self.linear.omega_star,
            self.linear.lambda_r,
            self.linear.omega_0,
            self.linear.nu_0,
        );
        let planar = index.p == 0 && index.q == 0;
        let (rows, cols): (Vec<usize>, Vec<usize>) = if planar {
            // Constant-harmonic groups have no sine content.
            (vec![0, 2, 4], vec![0, 2, 4])
        } else {
            ((0..6).collect(), (0..6).collect())
        };
        let dim = rows.len();
        let mut m = DMatrix::zeros(dim, dim);
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                m[(ri, ci)] = m6[(r, c)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        for (ri, &r) in rows.iter().enumerate() {
            rhs[ri] = b[r];
        }

        // A correction already fixed by an earlier group becomes a known
        // term of this one.
        let mut case_here = case;
        if let (Some(t), false) = (target, case == GroupCase::Plain) {
            if self.written.contains(&(channel_of(case), t)) {
                let known = match case {
                    GroupCase::InPlane => self.solution.freqs.omega.coeff(t),
                    GroupCase::OutOfPlane => self.solution.freqs.nu.coeff(t),
                    _ => self.solution.freqs.lambda.coeff(t),
                };
                let delta = correction_column(case, &self.linear);
                for (ri, &r) in rows.iter().enumerate() {
                    rhs[ri] -= delta[r] * known;
                }
                case_here = GroupCase::Plain;
            }
        }

        let cutoff = self.settings.svd_cutoff;
        let plain = lstsq(&m, &rhs, cutoff)?;
        let chosen = if case_here == GroupCase::Plain {
            plain
        } else {
            let delta6 = correction_column(case_here, &self.linear);
            let mut augmented = DMatrix::zeros(dim, dim + 1);
            augmented.view_mut((0, 0), (dim, dim)).copy_from(&m);
            for (ri, &r) in rows.iter().enumerate() {
                augmented[(ri, dim)] = delta6[r];
            }
            let aug = lstsq(&augmented, &rhs, cutoff)?;
            // Keep the augmented solve only when the correction actually
            // improves consistency.
            if aug.residual < plain.residual {
                aug
            } else {
                LstsqOutcome {
                    fell_back: true,
                    ..plain
                }
            }
        };

        // Scatter back into the six-slot layout.
        let mut x6 = Vector6::zeros();
        for (ci, &c) in cols.iter().enumerate() {
            x6[c] = chosen.solution[ci];
        }
        Ok(GroupSolution {
            x: x6,
            correction: if chosen.solution.len() > dim {
                Some(chosen.solution[dim])
            } else {
                None
            },
            residual: chosen.residual,
            condition: chosen.condition,
            fell_back: chosen.fell_back,
        })
    }

    /// Rebuild velocities and hand out the finished solution.
    pub fn finish(mut self) -> SeriesSolution<T> {
        self.solution.vx = self.solution.x.ddt(&self.solution.freqs);
        self.solution.vy = self.solution.y.ddt(&self.solution.freqs);
        self.solution.vz = self.solution.z.ddt(&self.solution.freqs);
        self.solution
    }
}

fn channel_of(case: GroupCase) -> u8 {
    match case {
        GroupCase::InPlane => 0,
        GroupCase::OutOfPlane => 1,
        _ => 2,
    }
}

#[derive(Clone, Debug)]
struct GroupSolution<T: Real> {
    x: Vector6<T>,
    correction: Option<T>,
    residual: T,
    condition: T,
    fell_back: bool,
}

#[derive(Clone, Debug)]
struct LstsqOutcome<T: Real> {
    solution: DVector<T>,
    residual: T,
    condition: T,
    fell_back: bool,
}

fn lstsq<T: Real>(m: &DMatrix<T>, b: &DVector<T>, rel_cutoff: T) -> Result<LstsqOutcome<T>> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd
        .singular_values
        .iter()
        .fold(T::zero(), |acc, s| acc.max(*s));
    let eps = rel_cutoff * sigma_max.max(T::default_epsilon());
    let solution = svd
        .solve(b, eps)
        .map_err(|e| Error::Format(format!("least-squares solve failed: {e}")))?;
    let residual = (m * &solution - b).norm();
    let sigma_used = svd
        .singular_values
        .iter()
        .copied()
        .filter(|s| *s > eps)
        .fold(sigma_max, |acc, s| acc.min(s));
    let condition = if sigma_used > T::zero() {
        sigma_max / sigma_used
    } else {
        T::c(f64::INFINITY)
    };
    Ok(LstsqOutcome {
        solution,
        residual,
        condition,
        fell_back: false,
    })
}

/// Build an order-n solution at an equilibrium point.
pub fn build<T: Real>(
    aep: &Aep<T>,
    order: u32,
    settings: &BuildSettings<T>,
) -> Result<SeriesSolution<T>> {
    let mut builder = Builder::new(aep, order, *settings)?;
    for n in 2..=order {
        builder.solve_order(n)?;
    }
    Ok(builder.finish())
}

// --- coefficient file -------------------------------------------------------

/// Serialized solution document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SolutionFile<T: Real> {
    pub metadata: FileMetadata<T>,
    pub x: SeriesRecord<T>,
    pub y: SeriesRecord<T>,
    pub z: SeriesRecord<T>,
    pub vx: SeriesRecord<T>,
    pub vy: SeriesRecord<T>,
    pub vz: SeriesRecord<T>,
    pub omega: FrequencyRecord<T>,
    pub nu: FrequencyRecord<T>,
    pub lambda: FrequencyRecord<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct FileMetadata<T: Real> {
    pub params: SystemParams<T>,
    pub aep_position: [T; 3],
    pub aep_residual: T,
    pub order: u32,
    pub diagnostics: BuildDiagnostics,
}

impl<T: Real + Serialize + serde::de::DeserializeOwned> SeriesSolution<T> {
    pub fn to_file(&self) -> SolutionFile<T> {
        SolutionFile {
            metadata: FileMetadata {
                params: self.aep.params,
                aep_position: [
                    self.aep.position.x,
                    self.aep.position.y,
                    self.aep.position.z,
                ],
                aep_residual: self.aep.residual_norm,
                order: self.order,
                diagnostics: self.diagnostics.clone(),
            },
            x: self.x.to_record(),
            y: self.y.to_record(),
            z: self.z.to_record(),
            vx: self.vx.to_record(),
            vy: self.vy.to_record(),
            vz: self.vz.to_record(),
            omega: self.freqs.omega.to_record(),
            nu: self.freqs.nu.to_record(),
            lambda: self.freqs.lambda.to_record(),
        }
    }

    pub fn from_file(file: &SolutionFile<T>) -> Result<Self> {
        let meta = &file.metadata;
        let aep = Aep {
            position: Vector3::new(
                meta.aep_position[0],
                meta.aep_position[1],
                meta.aep_position[2],
            ),
            params: meta.params,
            residual_norm: meta.aep_residual,
        };
        Ok(Self {
            order: meta.order,
            aep,
            x: TrigSeries::from_record(&file.x)?,
            y: TrigSeries::from_record(&file.y)?,
            z: TrigSeries::from_record(&file.z)?,
            vx: TrigSeries::from_record(&file.vx)?,
            vy: TrigSeries::from_record(&file.vy)?,
            vz: TrigSeries::from_record(&file.vz)?,
            freqs: Frequencies {
                omega: FrequencySeries::from_record(&file.omega)?,
                nu: FrequencySeries::from_record(&file.nu)?,
                lambda: FrequencySeries::from_record(&file.lambda)?,
            },
            diagnostics: meta.diagnostics.clone(),
        })
    }

    /// Serialize to pretty JSON (deterministic for identical inputs).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::params;
    use crate::dynamics::net_force;
    use crate::equilibria::{classical_lagrange_point, find_aep, NewtonSettings};
    use crate::linearization::linear_solution;
    use approx::assert_abs_diff_eq;

    fn reference_aep(beta: f64, alpha_deg: f64, gamma_deg: f64) -> Aep<f64> {
        let p = params(beta, alpha_deg, gamma_deg);
        let seed = classical_lagrange_point(p.mu(), 2).unwrap();
        find_aep(&p, seed, &NewtonSettings::default()).unwrap()
    }

    #[test]
    fn initialization_matches_seed_table() {
        let aep = reference_aep(0.002, 80.0, 40.0);
        let linear = LinearModel::build(&aep).unwrap();
        let sol = initialize(&linear, &aep, 3);
        let k = |i| linear.k(i);
        let at = |s: &TrigSeries<f64>, amp: [u32; 4], p: u32, q: i32| {
            s.coeff(TermIndex::new(amp, p, q))
        };
        assert_eq!(at(&sol.x, [1, 0, 0, 0], 0, 0).cos, 1.0);
        assert_eq!(at(&sol.x, [0, 1, 0, 0], 0, 0).cos, 1.0);
        assert_eq!(at(&sol.x, [0, 0, 1, 0], 1, 0).cos, 1.0);
        assert_eq!(at(&sol.x, [0, 0, 1, 0], 1, 0).sin, k(14));
        assert_eq!(at(&sol.x, [0, 0, 0, 1], 0, 1).cos, k(5));
        assert_eq!(at(&sol.x, [0, 0, 0, 1], 0, 1).sin, k(6));
        assert_eq!(at(&sol.y, [1, 0, 0, 0], 0, 0).cos, k(1));
        assert_eq!(at(&sol.y, [0, 0, 1, 0], 1, 0).cos, k(7));
        assert_eq!(at(&sol.y, [0, 0, 1, 0], 1, 0).sin, k(8));
        assert_eq!(at(&sol.z, [0, 1, 0, 0], 0, 0).cos, k(4));
        assert_eq!(at(&sol.z, [0, 0, 0, 1], 0, 1).cos, 1.0);
        assert_eq!(at(&sol.z, [0, 0, 1, 0], 1, 0).sin, k(12));
        // Constants may prune to zero when the forcing cancels exactly.
        assert!((at(&sol.x, [0, 0, 0, 0], 0, 0).cos - k(15)).abs() <= 1e-18);
        assert_eq!(sol.freqs.omega.zeroth(), linear.omega_0);
        assert_eq!(sol.freqs.nu.zeroth(), linear.nu_0);
        assert_eq!(sol.freqs.lambda.zeroth(), linear.lambda_r);
        // Exactly the seeded terms, nothing else.
        assert!(sol.x.len() <= 5 && sol.x.len() >= 4);
        assert!(sol.y.len() <= 5);
        assert!(sol.z.len() <= 5);
    }

    #[test]
    fn initialized_series_equals_linear_solution() {
        let aep = reference_aep(0.002, 80.0, 40.0);
        let linear = LinearModel::build(&aep).unwrap();
        let sol = initialize(&linear, &aep, 2);
        let mut rng = crate::series::tests::Rng::new(123);
        for _ in 0..20 {
            let amps = [
                0.01 * rng.sym(),
                0.01 * rng.sym(),
                0.1 * rng.sym(),
                0.1 * rng.sym(),
            ];
            let (phi1, phi2, t) = (rng.sym(), rng.sym(), rng.sym());
            let series_val = sol.local_position(amps, phi1, phi2, t);
            let closed = linear_solution(&linear, t, amps, phi1, phi2);
            assert_abs_diff_eq!((series_val - closed).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn group_matrix_static_and_coriolis_patterns() {
        let aep = reference_aep(0.002, 80.0, 0.0);
        let linear = LinearModel::build(&aep).unwrap();
        let w = linear.omega_star;
        // p = q = 0 with equal hyperbolic exponents: a pure static block.
        let idx = TermIndex::new([1, 1, 0, 0], 0, 0);
        let m = assemble_m(&idx, &w, linear.lambda_r, linear.omega_0, linear.nu_0);
        for coord in 0..3 {
            for (axis, col) in [(0usize, 0usize), (1, 2), (2, 4)] {
                assert_eq!(m[(2 * coord, col)], -w[(coord, axis)]);
            }
        }
        assert_eq!(m[(0, 3)], 0.0);
        assert_eq!(m[(2, 1)], 0.0);

        // Zero restoring matrix and zero hyperbolic rate: only the skewed
        // rotating-frame coupling at the group frequency survives.
        let idx2 = TermIndex::new([0, 0, 1, 0], 1, 0);
        let m2 = assemble_m(&idx2, &Matrix3::zeros(), 0.0, linear.omega_0, linear.nu_0);
        let psi = linear.omega_0;
        assert_eq!(m2[(0, 0)], -psi * psi);
        assert_eq!(m2[(0, 3)], -2.0 * psi);
        assert_eq!(m2[(1, 2)], 2.0 * psi);
        assert_eq!(m2[(2, 1)], 2.0 * psi);
        assert_eq!(m2[(3, 0)], -2.0 * psi);
        assert_eq!(m2[(4, 5)], 0.0);
    }

    #[test]
    fn group_matrix_matches_operator_on_single_term() {
        // Inserting a lone order-n term into the left-hand operator and
        // collecting its group coefficients reproduces M X.
        let aep = reference_aep(0.002, 80.0, 40.0);
        let order = 3;
        let mut builder = Builder::new(&aep, order, BuildSettings::default()).unwrap();
        let linear = builder.linear().clone();
        let probe = TermIndex::new([0, 1, 1, 1], 1, -1);
        let xv = [0.37, -0.81, 0.22, 0.55, -0.44, 0.91];
        // Zero the seeded series and insert only the probe term.
        builder.solution.x = TrigSeries::zero(order);
        builder.solution.y = TrigSeries::zero(order);
        builder.solution.z = TrigSeries::zero(order);
        builder.solution.x.set_term(probe, xv[0], xv[1]);
        builder.solution.y.set_term(probe, xv[2], xv[3]);
        builder.solution.z.set_term(probe, xv[4], xv[5]);
        let lhs = builder.lhs_series(order).unwrap();
        let m = assemble_m(
            &probe,
            &linear.omega_star,
            linear.lambda_r,
            linear.omega_0,
            linear.nu_0,
        );
        let expected = m * Vector6::from_column_slice(&xv);
        for coord in 0..3 {
            let cs = lhs[coord].coeff(probe);
            assert_abs_diff_eq!(cs.cos, expected[2 * coord], epsilon = 1e-12);
            assert_abs_diff_eq!(cs.sin, expected[2 * coord + 1], epsilon = 1e-12);
        }
    }

    #[test]
    fn correction_columns_match_probe_differences() {
        // The analytic correction columns equal the change of the order-n
        // operator output under a unit rate coefficient at the target index.
        let aep = reference_aep(0.002, 80.0, 40.0);
        let order = 2;
        let builder = Builder::new(&aep, order, BuildSettings::default()).unwrap();
        let base = builder.lhs_series(order).unwrap();

        struct Probe {
            group: TermIndex,
            case: GroupCase,
            target: [u32; 4],
        }
        let probes = [
            Probe {
                group: TermIndex::new([1, 0, 1, 0], 0, 0),
                case: GroupCase::HyperbolicGrowing,
                target: [0, 0, 1, 0],
            },
            Probe {
                group: TermIndex::new([0, 0, 1, 1], 1, 0),
                case: GroupCase::InPlane,
                target: [0, 0, 0, 1],
            },
            Probe {
                group: TermIndex::new([0, 0, 1, 1], 0, 1),
                case: GroupCase::OutOfPlane,
                target: [0, 0, 1, 0],
            },
        ];
        for probe in probes {
            let mut perturbed = Builder::new(&aep, order, BuildSettings::default()).unwrap();
            match probe.case {
                GroupCase::InPlane => perturbed.solution.freqs.omega.set(probe.target, 1.0),
                GroupCase::OutOfPlane => perturbed.solution.freqs.nu.set(probe.target, 1.0),
                _ => perturbed.solution.freqs.lambda.set(probe.target, 1.0),
            }
            let shifted = perturbed.lhs_series(order).unwrap();
            let delta = correction_column(probe.case, builder.linear());
            let (case, target) = classify_group(&probe.group);
            assert_eq!(case, probe.case);
            assert_eq!(target.unwrap(), probe.target);
            for coord in 0..3 {
                let changed = shifted[coord].coeff(probe.group);
                let was = base[coord].coeff(probe.group);
                assert_abs_diff_eq!(changed.cos - was.cos, delta[2 * coord], epsilon = 1e-11);
                assert_abs_diff_eq!(
                    changed.sin - was.sin,
                    delta[2 * coord + 1],
                    epsilon = 1e-11
                );
            }
        }
    }

    #[test]
    fn known_terms_quadratic_oracle() {
        // With only the in-plane mode seeded, the order-2 forcing must equal
        // the quadratic form of the translated field on the mode shape,
        // computed here by finite differences of the raw force field.
        let aep = reference_aep(0.0, 0.0, 0.0);
        let mut builder = Builder::new(&aep, 2, BuildSettings::default()).unwrap();
        let linear = builder.linear().clone();
        let keep = TermIndex::new([0, 0, 1, 0], 1, 0);
        let (kx, ky, kz) = (
            builder.solution.x.coeff(keep),
            builder.solution.y.coeff(keep),
            builder.solution.z.coeff(keep),
        );
        builder.solution.x = TrigSeries::term(2, keep, kx.cos, kx.sin);
        builder.solution.y = TrigSeries::term(2, keep, ky.cos, ky.sin);
        builder.solution.z = TrigSeries::term(2, keep, kz.cos, kz.sin);
        let groups = builder.known_terms(2).unwrap();
        // Only the doubled-harmonic and rectified groups appear.
        for idx in groups.keys() {
            assert_eq!(idx.amp, [0, 0, 2, 0]);
            assert!(idx.p == 0 || idx.p == 2, "unexpected harmonic {idx}");
            assert_eq!(idx.q, 0);
        }

        // Quadratic form of the local field by central differences.
        let gn = aep.gamma_norm();
        let field = |rho: Vector3<f64>| -> Vector3<f64> {
            net_force(&(aep.position + rho * gn), &aep.params).unwrap() / gn
        };
        let h = 1e-4;
        let quad = |u: Vector3<f64>, v: Vector3<f64>| -> Vector3<f64> {
            (field((u + v) * h) - field((u - v) * h) - field((v - u) * h) + field(-(u + v) * h))
                / (4.0 * h * h)
        };
        let a_vec = Vector3::new(kx.cos, ky.cos, kz.cos);
        let b_vec = Vector3::new(kx.sin, ky.sin, kz.sin);
        let faa = quad(a_vec, a_vec);
        let fbb = quad(b_vec, b_vec);
        let fab = quad(a_vec, b_vec);
        let constant = (faa + fbb) * 0.25;
        let double_cos = (faa - fbb) * 0.25;
        let double_sin = fab * 0.5;
        let b0 = groups[&TermIndex::new([0, 0, 2, 0], 0, 0)];
        let b2 = groups[&TermIndex::new([0, 0, 2, 0], 2, 0)];
        for coord in 0..3 {
            assert_abs_diff_eq!(b0[2 * coord], constant[coord], epsilon = 2e-5);
            assert_abs_diff_eq!(b2[2 * coord], double_cos[coord], epsilon = 2e-5);
            assert_abs_diff_eq!(b2[2 * coord + 1], double_sin[coord], epsilon = 2e-5);
        }
        let _ = linear;
    }

    #[test]
    fn known_terms_of_empty_series_vanish() {
        let aep = reference_aep(0.002, 80.0, 0.0);
        let mut builder = Builder::new(&aep, 3, BuildSettings::default()).unwrap();
        builder.solution.x = TrigSeries::zero(3);
        builder.solution.y = TrigSeries::zero(3);
        builder.solution.z = TrigSeries::zero(3);
        for n in 2..=3 {
            assert!(builder.known_terms(n).unwrap().is_empty());
        }
    }

    #[test]
    fn plain_solver_inverts_its_matrix() {
        let aep = reference_aep(0.002, 80.0, 40.0);
        let builder = Builder::new(&aep, 2, BuildSettings::default()).unwrap();
        let linear = builder.linear();
        let idx = TermIndex::new([0, 0, 1, 1], 1, 1); // nonresonant
        let m6 = assemble_m(
            &idx,
            &linear.omega_star,
            linear.lambda_r,
            linear.omega_0,
            linear.nu_0,
        );
        let mut rng = crate::series::tests::Rng::new(77);
        let v = Vector6::from_fn(|_, _| rng.sym());
        let b = m6 * v;
        let solved = builder
            .solve_group(&idx, &b, GroupCase::Plain, None)
            .unwrap();
        assert_abs_diff_eq!((solved.x - v).norm(), 0.0, epsilon = 1e-10);
        assert!(solved.correction.is_none());
    }

    #[test]
    fn order_two_solve_keeps_lower_orders_and_structure() {
        let aep = reference_aep(0.002, 80.0, 0.0);
        let mut builder = Builder::new(&aep, 2, BuildSettings::default()).unwrap();
        let before = builder.solution.clone();
        let diag = builder.solve_order(2).unwrap();
        assert!(diag.groups > 0);
        assert!(diag.max_residual <= 1e-9);
        let after = builder.finish();
        // Order-1 and order-0 coefficients unchanged.
        for (series_before, series_after) in [
            (&before.x, &after.x),
            (&before.y, &after.y),
            (&before.z, &after.z),
        ] {
            for (idx, cs) in series_before.terms() {
                if idx.order() <= 1 {
                    let now = series_after.coeff(*idx);
                    assert_eq!(cs.cos, now.cos);
                    assert_eq!(cs.sin, now.sin);
                }
            }
        }
        // New terms satisfy the harmonic/exponent structure rules.
        for series in [&after.x, &after.y, &after.z] {
            for (idx, _) in series.terms() {
                assert!(idx.p <= idx.amp[2], "p bound violated at {idx}");
                assert_eq!(idx.p % 2, idx.amp[2] % 2, "p parity violated at {idx}");
                assert!(idx.q.unsigned_abs() <= idx.amp[3], "q bound violated at {idx}");
                assert_eq!(
                    idx.q.rem_euclid(2) as u32,
                    idx.amp[3] % 2,
                    "q parity violated at {idx}"
                );
            }
        }
    }

    #[test]
    fn build_order_one_is_initialization() {
        let aep = reference_aep(0.002, 0.0, 40.0);
        let sol = build(&aep, 1, &BuildSettings::default()).unwrap();
        let linear = LinearModel::build(&aep).unwrap();
        let expected = initialize(&linear, &aep, 1);
        assert_eq!(sol.x, expected.x);
        assert_eq!(sol.y, expected.y);
        assert_eq!(sol.z, expected.z);
        assert_eq!(sol.freqs, expected.freqs);
    }

    #[test]
    fn third_order_accuracy_scales_like_fourth_power() {
        // Periodic-family series against direct integration: the defect at a
        // fixed time shrinks like the fourth power of the amplitude for an
        // order-3 build.
        let aep = reference_aep(0.002, 0.0, 0.0);
        let sol = build(&aep, 3, &BuildSettings::default()).unwrap();
        let gn = aep.gamma_norm();
        let config = crate::integrator::IntegratorConfig::default();
        let error_at = |a3: f64| -> f64 {
            let amps = [0.0, 0.0, a3, 0.0];
            let pos0 = aep.position + sol.local_position(amps, 0.0, 0.0, 0.0) * gn;
            let vel0 = sol.local_velocity(amps, 0.0, 0.0, 0.0) * gn;
            let state0 = crate::dynamics::State::new(pos0, vel0);
            let t_end = std::f64::consts::FRAC_PI_2;
            let end = crate::integrator::propagate_to(&state0, &aep.params, (0.0, t_end), &config)
                .unwrap();
            let pos_series = aep.position + sol.local_position(amps, 0.0, 0.0, t_end) * gn;
            (end.position - pos_series).norm()
        };
        let e1 = error_at(0.02);
        let e2 = error_at(0.04);
        let rate = e2 / e1;
        assert!(
            (8.0..40.0).contains(&rate),
            "expected ~2^4 scaling, got rate {rate} (errors {e1:.3e}, {e2:.3e})"
        );
    }

    #[test]
    fn truncation_is_a_prefix_of_higher_orders() {
        let aep = reference_aep(0.002, 80.0, 0.0);
        let sol4 = build(&aep, 4, &BuildSettings::default()).unwrap();
        let sol3 = build(&aep, 3, &BuildSettings::default()).unwrap();
        let truncated = sol4.truncated(3);
        assert_eq!(truncated.x, sol3.x);
        assert_eq!(truncated.y, sol3.y);
        assert_eq!(truncated.z, sol3.z);
        assert_eq!(truncated.freqs, sol3.freqs);
    }

    #[test]
    fn solution_file_round_trip_is_bit_exact() {
        let aep = reference_aep(0.002, 80.0, 40.0);
        let sol = build(&aep, 3, &BuildSettings::default()).unwrap();
        let json = sol.to_json().unwrap();
        let restored = SeriesSolution::<f64>::from_json(&json).unwrap();
        assert_eq!(sol.x, restored.x);
        assert_eq!(sol.y, restored.y);
        assert_eq!(sol.z, restored.z);
        assert_eq!(sol.vx, restored.vx);
        assert_eq!(sol.freqs, restored.freqs);
        assert_eq!(sol.aep.position, restored.aep.position);
        // Second serialization identical byte for byte.
        assert_eq!(json, restored.to_json().unwrap());
        // And evaluation agrees bit for bit.
        let amps = [1e-4, -2e-4, 0.07, 0.05];
        let a = sol.local_position(amps, 0.3, -0.2, 1.1);
        let b = restored.local_position(amps, 0.3, -0.2, 1.1);
        assert_eq!(a, b);
    }

    #[test]
    fn rebuild_is_deterministic() {
        let aep = reference_aep(0.002, 80.0, 40.0);
        let a = build(&aep, 3, &BuildSettings::default()).unwrap();
        let b = build(&aep, 3, &BuildSettings::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
