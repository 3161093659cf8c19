//! Time integration along a geodesic: EPDiff, the image and deformation
//! states, their tangents, and the backward adjoint Jacobi sweeps.
//!
//! All band-limited ODEs use the classical four-stage Runge-Kutta scheme.
//! Besides the velocity at every node, the forward pass keeps the three
//! interior stage arguments of each step. The backward sweeps evaluate their
//! stages at those arguments in reverse order, which makes the backward RK4
//! step the exact transpose (in the `<L., .>` metric) of the forward tangent
//! step rather than a fourth-order approximation of it.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::{ScalarImage, SpatialVectorField};
use crate::image::{displaced_position, Interpolator};
use crate::lie::{
    ad_prepared, adjoint_jacobi_rhs_prepared, epdiff_rhs_prepared, incremental_adjoint_jacobi_rhs_prepared,
    incremental_epdiff_rhs_prepared, Accumulator, JacobiCostate, Lifted, PreparedVelocity,
};
use crate::spectral::{BandLimitedField, FrequencyBand, SpectralOperators};

/// Uniform grid `t_k = k / nt` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeGrid {
    nt: usize,
}

impl TimeGrid {
    pub fn new(nt: usize) -> Result<Self> {
        if nt == 0 {
            return invalid("time grid needs at least one interval");
        }
        Ok(Self { nt })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.nt as f64
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { nt: 10 }
    }
}

/// Band-limited fields along one RK4 trajectory: the value at every node and,
/// per interval, the arguments of stages two to four.
#[derive(Clone, Debug)]
pub struct VelocityTrajectory {
    nodes: Vec<BandLimitedField>,
    stages: Vec<[BandLimitedField; 3]>,
}

impl VelocityTrajectory {
    pub fn nodes(&self) -> &[BandLimitedField] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &BandLimitedField {
        &self.nodes[k]
    }

    pub fn last(&self) -> &BandLimitedField {
        self.nodes.last().expect("trajectory has nodes")
    }

    /// Argument of stage `s` (0..4) of interval `k`; stage 0 is node `k`.
    pub fn stage(&self, k: usize, s: usize) -> &BandLimitedField {
        if s == 0 {
            &self.nodes[k]
        } else {
            &self.stages[k][s - 1]
        }
    }

    pub fn band(&self) -> &Arc<FrequencyBand> {
        self.nodes[0].band()
    }

    pub fn intervals(&self) -> usize {
        self.stages.len()
    }

    /// Number of stored band-limited vector fields.
    pub fn field_count(&self) -> usize {
        self.nodes.len() + 3 * self.stages.len()
    }

    /// Stored complex coefficients over all fields and components.
    pub fn coefficient_count(&self) -> usize {
        let band = self.band();
        self.field_count() * band.dims() * band.len()
    }
}

/// State carried along the geodesic by either problem variant.
#[derive(Clone, Debug)]
pub enum StateTrajectory {
    /// Advected image `m(t_k)`.
    Image(Vec<ScalarImage>),
    /// Band-limited displacement `u(t_k)` of `phi = id + iota(u)`.
    Deformation(Vec<BandLimitedField>),
}

#[derive(Clone, Debug)]
pub struct GeodesicTrajectory {
    pub time: TimeGrid,
    pub velocity: VelocityTrajectory,
    pub state: StateTrajectory,
}

fn blowup(stage: &'static str, node: usize) -> Error {
    Error::NumericalBlowup { stage, node }
}

fn rk4_combine(y: &BandLimitedField, h: f64, k: [&BandLimitedField; 4]) -> BandLimitedField {
    let mut out = y.plus(h / 6.0, k[0]);
    out.axpy(h / 3.0, k[1]);
    out.axpy(h / 3.0, k[2]);
    out.axpy(h / 6.0, k[3]);
    out
}

/// Integrates `dv/dt = -ad_dagger(v, v)` from `v0` over `[0, 1]`.
pub fn integrate_epdiff(v0: &BandLimitedField, time: TimeGrid, ops: &SpectralOperators) -> Result<VelocityTrajectory> {
    ops.check(v0, "integrate_epdiff")?;
    if !v0.is_finite() {
        return Err(blowup("epdiff", 0));
    }
    let h = time.dt();
    let mut nodes = vec![v0.clone()];
    let mut stages = Vec::with_capacity(time.nt());
    for k in 0..time.nt() {
        let y = &nodes[k];
        let k1 = epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, y));
        let y2 = y.plus(0.5 * h, &k1);
        let k2 = epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, &y2));
        let y3 = y.plus(0.5 * h, &k2);
        let k3 = epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, &y3));
        let y4 = y.plus(h, &k3);
        let k4 = epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, &y4));
        let next = rk4_combine(y, h, [&k1, &k2, &k3, &k4]);
        if !next.is_finite() {
            return Err(blowup("epdiff", k + 1));
        }
        stages.push([y2, y3, y4]);
        nodes.push(next);
    }
    Ok(VelocityTrajectory { nodes, stages })
}

fn check_image_grid(image: &ScalarImage, ops: &SpectralOperators, what: &str) -> Result<()> {
    image.ensure_same_grid(ops.band().grid_sizes(), what)
}

/// Semi-Lagrangian transport of `source` along the node velocities:
/// `m_{k+1}(x) = m_k(x - dt iota(v_k)(x))`.
pub fn solve_state(
    source: &ScalarImage,
    velocity: &VelocityTrajectory,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<Vec<ScalarImage>> {
    check_image_grid(source, ops, "solve_state")?;
    ops.check(velocity.node(0), "solve_state")?;
    let mut out = vec![source.clone()];
    for k in 0..time.nt() {
        let disp = departure_offsets(velocity.node(k), time.dt(), ops)?;
        let m = &out[k];
        let interp = Interpolator::new(m);
        let values = (0..m.len())
            .map(|n| interp.value(&position(m, &disp, n)))
            .collect::<Vec<_>>();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(blowup("state", k + 1));
        }
        out.push(ScalarImage::new(m.sizes(), values)?.with_spacing(m.spacing().to_vec())?);
    }
    Ok(out)
}

/// Displacement `w` of the inverse flow map `id + w` on the image grid,
/// transported with the same semi-Lagrangian steps as the state:
/// `w_{k+1}(x) = -dt iota(v_k)(x) + w_k(x - dt iota(v_k)(x))`.
pub fn solve_map_displacement(
    velocity: &VelocityTrajectory,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<SpatialVectorField> {
    ops.check(velocity.node(0), "solve_map_displacement")?;
    check_length(velocity, time)?;
    let sizes = ops.band().grid_sizes();
    let d = sizes.len();
    let mut w = SpatialVectorField::zeros(sizes)?;
    for k in 0..time.nt() {
        let disp = departure_offsets(velocity.node(k), time.dt(), ops)?;
        let comps: Vec<ScalarImage> = w
            .components()
            .iter()
            .map(|c| ScalarImage::new(sizes, c.clone()))
            .collect::<Result<_>>()?;
        let mut next = vec![vec![0.0; comps[0].len()]; d];
        for (c, img) in comps.iter().enumerate() {
            let interp = Interpolator::new(img);
            for (n, out) in next[c].iter_mut().enumerate() {
                *out = disp.component(c)[n] + interp.value(&position(img, &disp, n));
            }
        }
        if next.iter().flatten().any(|x| !x.is_finite()) {
            return Err(blowup("map displacement", k + 1));
        }
        w = SpatialVectorField::new(sizes, next)?;
    }
    Ok(w)
}

/// `-dt iota(v)` on the image grid.
fn departure_offsets(v: &BandLimitedField, dt: f64, ops: &SpectralOperators) -> Result<SpatialVectorField> {
    let iv = ops.include(v)?;
    let comps = iv
        .into_components()
        .into_iter()
        .map(|c| c.into_iter().map(|x| -dt * x).collect())
        .collect();
    SpatialVectorField::new(ops.band().grid_sizes(), comps)
}

#[inline]
fn position(image: &ScalarImage, disp: &SpatialVectorField, n: usize) -> [f64; 3] {
    let mut d = [0.0; 3];
    for (j, dj) in d.iter_mut().enumerate().take(image.dims()) {
        *dj = disp.component(j)[n];
    }
    displaced_position(n, image.sizes(), image.spacing(), &d[..image.dims()])
}

/// `-v - Du * v` with `v` prepared.
fn deformation_rhs(ops: &SpectralOperators, v: &PreparedVelocity, vf: &BandLimitedField, u: &BandLimitedField) -> BandLimitedField {
    let mut acc = Accumulator::new(ops);
    acc.add_convect(-1.0, &Lifted::new(ops, u), v.lifted());
    let mut out = acc.lower(ops);
    out.axpy(-1.0, vf);
    out
}

/// Stage arguments `(U1..U4)` and the next node of the deformation state for
/// interval `k`, driven by the stored velocity stages.
fn deformation_step(
    ops: &SpectralOperators,
    velocity: &VelocityTrajectory,
    k: usize,
    u: &BandLimitedField,
    h: f64,
) -> ([BandLimitedField; 4], BandLimitedField) {
    let rhs = |s: usize, arg: &BandLimitedField| {
        let vs = velocity.stage(k, s);
        deformation_rhs(ops, &PreparedVelocity::new(ops, vs), vs, arg)
    };
    let k1 = rhs(0, u);
    let u2 = u.plus(0.5 * h, &k1);
    let k2 = rhs(1, &u2);
    let u3 = u.plus(0.5 * h, &k2);
    let k3 = rhs(2, &u3);
    let u4 = u.plus(h, &k3);
    let k4 = rhs(3, &u4);
    let next = rk4_combine(u, h, [&k1, &k2, &k3, &k4]);
    ([u.clone(), u2, u3, u4], next)
}

/// Integrates `du/dt = -v - Du * v` from `u(0) = 0`, the band-limited form of
/// `d phi/dt + D phi * v = 0` with `phi = id + u`.
pub fn solve_deformation_state(
    velocity: &VelocityTrajectory,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<Vec<BandLimitedField>> {
    ops.check(velocity.node(0), "solve_deformation_state")?;
    let mut out = vec![BandLimitedField::zeros(ops.band())];
    for k in 0..time.nt() {
        let (_, next) = deformation_step(ops, velocity, k, &out[k], time.dt());
        if !next.is_finite() {
            return Err(blowup("deformation state", k + 1));
        }
        out.push(next);
    }
    Ok(out)
}

/// `source o (id + iota(u))` on the source grid.
pub fn compose_with_displacement(
    source: &ScalarImage,
    u: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<ScalarImage> {
    check_image_grid(source, ops, "compose_with_displacement")?;
    crate::image::warp(source, &ops.include(u)?)
}

/// `(grad_B source) o (id + iota(u))`, the gradient of the multilinear
/// interpolant of `source` sampled at the displaced nodes.
pub fn composed_gradient(source: &ScalarImage, u: &BandLimitedField, ops: &SpectralOperators) -> Result<SpatialVectorField> {
    check_image_grid(source, ops, "composed_gradient")?;
    let disp = ops.include(u)?;
    let interp = Interpolator::new(source);
    let d = source.dims();
    let mut comps = vec![vec![0.0; source.len()]; d];
    for n in 0..source.len() {
        let (_, g) = interp.value_and_gradient(&position(source, &disp, n));
        for j in 0..d {
            comps[j][n] = g[j];
        }
    }
    SpatialVectorField::new(source.sizes(), comps)
}

/// Forward pass of either variant: EPDiff plus the matching state.
pub fn shoot(
    v0: &BandLimitedField,
    source: &ScalarImage,
    deformation: bool,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<GeodesicTrajectory> {
    let velocity = integrate_epdiff(v0, time, ops)?;
    let state = if deformation {
        StateTrajectory::Deformation(solve_deformation_state(&velocity, time, ops)?)
    } else {
        StateTrajectory::Image(solve_state(source, &velocity, time, ops)?)
    };
    Ok(GeodesicTrajectory { time, velocity, state })
}

/// Backward RK4 sweep of the adjoint Jacobi system from `(U(1), delta_v(1) =
/// 0)`; returns every node state, index `k` holding time `t_k`.
fn adjoint_sweep(u1: &BandLimitedField, velocity: &VelocityTrajectory, time: TimeGrid, ops: &SpectralOperators) -> Result<Vec<JacobiCostate>> {
    let h = time.dt();
    let nt = time.nt();
    let mut states = vec![JacobiCostate::zeros(ops.band()); nt + 1];
    states[nt] = JacobiCostate::new(u1.clone(), BandLimitedField::zeros(ops.band()))?;
    for k in (0..nt).rev() {
        let a = states[k + 1].clone();
        let rhs = |s: usize, arg: &JacobiCostate| {
            adjoint_jacobi_rhs_prepared(ops, &PreparedVelocity::new(ops, velocity.stage(k, s)), arg)
        };
        let k1 = rhs(3, &a);
        let k2 = rhs(2, &a.plus(-0.5 * h, &k1));
        let k3 = rhs(1, &a.plus(-0.5 * h, &k2));
        let k4 = rhs(0, &a.plus(-h, &k3));
        let next = JacobiCostate {
            u: rk4_combine(&a.u, -h, [&k1.u, &k2.u, &k3.u, &k4.u]),
            delta_v: rk4_combine(&a.delta_v, -h, [&k1.delta_v, &k2.delta_v, &k3.delta_v, &k4.delta_v]),
        };
        if !next.is_finite() {
            return Err(blowup("adjoint Jacobi", k));
        }
        states[k] = next;
    }
    Ok(states)
}

/// Integrates `dU/dt = -ad_dagger(v, U)`,
/// `d delta_v/dt = -U + ad(v, delta_v) - ad_dagger(delta_v, v)` backward from
/// `U(1) = u1`, `delta_v(1) = 0` and returns `delta_v(0)`.
pub fn solve_adjoint_jacobi_backward(
    u1: &BandLimitedField,
    velocity: &VelocityTrajectory,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<BandLimitedField> {
    ops.check(u1, "solve_adjoint_jacobi_backward")?;
    ops.check(velocity.node(0), "solve_adjoint_jacobi_backward")?;
    check_length(velocity, time)?;
    Ok(adjoint_sweep(u1, velocity, time, ops)?.swap_remove(0).delta_v)
}

fn check_length(velocity: &VelocityTrajectory, time: TimeGrid) -> Result<()> {
    if velocity.intervals() != time.nt() {
        return invalid(format!(
            "trajectory has {} intervals but the time grid has {}",
            velocity.intervals(),
            time.nt()
        ));
    }
    Ok(())
}

/// Final-time perturbation of the state.
#[derive(Clone, Debug)]
pub enum StatePerturbation {
    Image(ScalarImage),
    Deformation(BandLimitedField),
}

/// Tangent of a geodesic along a perturbation `delta_v0` of its initial
/// velocity.
#[derive(Clone, Debug)]
pub struct IncrementalTrajectory {
    pub delta_v: VelocityTrajectory,
    /// Jacobi field `J(1)` with `dJ/dt = delta_v + ad_v J`, `J(0) = 0`. The
    /// perturbed inverse map is `-D phi J`, so the image moves by
    /// `-grad m . iota(J)`.
    pub jacobi: BandLimitedField,
    pub state: Option<StatePerturbation>,
}

/// Tangent of EPDiff together with the Jacobi field, integrated with the
/// stage arguments of the base trajectory so that the result is the exact
/// derivative of the discrete forward pass.
pub fn solve_jacobi_forward(
    velocity: &VelocityTrajectory,
    delta_v0: &BandLimitedField,
    time: TimeGrid,
    ops: &SpectralOperators,
) -> Result<IncrementalTrajectory> {
    ops.check(delta_v0, "solve_jacobi_forward")?;
    ops.check(velocity.node(0), "solve_jacobi_forward")?;
    check_length(velocity, time)?;
    let h = time.dt();
    let mut nodes = vec![delta_v0.clone()];
    let mut stages = Vec::with_capacity(time.nt());
    let mut jac = BandLimitedField::zeros(ops.band());
    for k in 0..time.nt() {
        let preps: Vec<PreparedVelocity> = (0..4).map(|s| PreparedVelocity::new(ops, velocity.stage(k, s))).collect();
        let y = &nodes[k];
        let z1 = incremental_epdiff_rhs_prepared(ops, &preps[0], y);
        let y2 = y.plus(0.5 * h, &z1);
        let z2 = incremental_epdiff_rhs_prepared(ops, &preps[1], &y2);
        let y3 = y.plus(0.5 * h, &z2);
        let z3 = incremental_epdiff_rhs_prepared(ops, &preps[2], &y3);
        let y4 = y.plus(h, &z3);
        let z4 = incremental_epdiff_rhs_prepared(ops, &preps[3], &y4);
        let next = rk4_combine(y, h, [&z1, &z2, &z3, &z4]);

        let jrhs = |s: usize, dv: &BandLimitedField, j: &BandLimitedField| ad_prepared(ops, &preps[s], j).plus(1.0, dv);
        let j1 = jrhs(0, y, &jac);
        let j2 = jrhs(1, &y2, &jac.plus(0.5 * h, &j1));
        let j3 = jrhs(2, &y3, &jac.plus(0.5 * h, &j2));
        let j4 = jrhs(3, &y4, &jac.plus(h, &j3));
        jac = rk4_combine(&jac, h, [&j1, &j2, &j3, &j4]);
        if !next.is_finite() || !jac.is_finite() {
            return Err(blowup("incremental EPDiff", k + 1));
        }
        stages.push([y2, y3, y4]);
        nodes.push(next);
    }
    Ok(IncrementalTrajectory {
        delta_v: VelocityTrajectory { nodes, stages },
        jacobi: jac,
        state: None,
    })
}

/// Full incremental forward model: the EPDiff tangent and Jacobi field plus
/// the linearized state. For images the semi-Lagrangian step is
/// differentiated exactly, `dm_{k+1}(x) = dm_k(y) - dt grad m_k(y) .
/// iota(dv_k)(x)` with `y` the departure point; the deformation tangent
/// `d(du)/dt = -dv - D du * v - Du * dv` is co-integrated with RK4.
pub fn solve_incremental_forward(
    trajectory: &GeodesicTrajectory,
    delta_v0: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<IncrementalTrajectory> {
    let time = trajectory.time;
    let mut inc = solve_jacobi_forward(&trajectory.velocity, delta_v0, time, ops)?;
    let h = time.dt();
    let state = match &trajectory.state {
        StateTrajectory::Image(images) => {
            let mut dm = ScalarImage::zeros(images[0].sizes())?.with_spacing(images[0].spacing().to_vec())?;
            for k in 0..time.nt() {
                let disp = departure_offsets(trajectory.velocity.node(k), h, ops)?;
                let idv = ops.include(inc.delta_v.node(k))?;
                let base = Interpolator::new(&images[k]);
                let pert = Interpolator::new(&dm);
                let d = dm.dims();
                let values: Vec<f64> = (0..dm.len())
                    .map(|n| {
                        let p = position(&dm, &disp, n);
                        let (_, g) = base.value_and_gradient(&p);
                        let src: f64 = (0..d).map(|j| g[j] * idv.component(j)[n]).sum();
                        pert.value(&p) - h * src
                    })
                    .collect();
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(blowup("incremental state", k + 1));
                }
                dm = ScalarImage::new(dm.sizes(), values)?.with_spacing(dm.spacing().to_vec())?;
            }
            StatePerturbation::Image(dm)
        }
        StateTrajectory::Deformation(us) => {
            let mut du = BandLimitedField::zeros(ops.band());
            for k in 0..time.nt() {
                let (ustages, _) = deformation_step(ops, &trajectory.velocity, k, &us[k], h);
                let rhs = |s: usize, arg: &BandLimitedField| {
                    let v = PreparedVelocity::new(ops, trajectory.velocity.stage(k, s));
                    let dv = inc.delta_v.stage(k, s);
                    let mut acc = Accumulator::new(ops);
                    acc.add_convect(-1.0, &Lifted::new(ops, arg), v.lifted());
                    acc.add_convect(-1.0, &Lifted::new(ops, &ustages[s]), &Lifted::values(ops, dv));
                    acc.lower(ops).plus(-1.0, dv)
                };
                let k1 = rhs(0, &du);
                let k2 = rhs(1, &du.plus(0.5 * h, &k1));
                let k3 = rhs(2, &du.plus(0.5 * h, &k2));
                let k4 = rhs(3, &du.plus(h, &k3));
                du = rk4_combine(&du, h, [&k1, &k2, &k3, &k4]);
                if !du.is_finite() {
                    return Err(blowup("incremental deformation state", k + 1));
                }
            }
            StatePerturbation::Deformation(du)
        }
    };
    inc.state = Some(state);
    Ok(inc)
}

/// Treatment of the terms of the incremental adjoint Jacobi system that carry
/// the gradient-pass costates `U` and `w`.
#[derive(Clone, Copy, Debug)]
pub enum Companions<'a> {
    /// Gauss-Newton: those terms are dropped, leaving the plain adjoint Jacobi
    /// system for `(delta_U, delta_w)`.
    GaussNewton,
    /// Full linearization: `(U, w)` are re-integrated from `U(1) = u1`,
    /// `w(1) = 0` alongside the increments.
    Full { u1: &'a BandLimitedField },
}

/// Integrates the incremental adjoint Jacobi system backward from
/// `delta_U(1) = delta_u1`, `delta_w(1) = 0` and returns `delta_w(0)`.
pub fn solve_incremental_adjoint_jacobi_backward(
    delta_u1: &BandLimitedField,
    velocity: &VelocityTrajectory,
    delta_velocity: &VelocityTrajectory,
    time: TimeGrid,
    ops: &SpectralOperators,
    companions: Companions<'_>,
) -> Result<BandLimitedField> {
    ops.check(delta_u1, "solve_incremental_adjoint_jacobi_backward")?;
    ops.check(delta_velocity.node(0), "solve_incremental_adjoint_jacobi_backward")?;
    check_length(velocity, time)?;
    check_length(delta_velocity, time)?;
    let u1 = match companions {
        Companions::GaussNewton => return solve_adjoint_jacobi_backward(delta_u1, velocity, time, ops),
        Companions::Full { u1 } => u1,
    };
    ops.check(u1, "solve_incremental_adjoint_jacobi_backward")?;
    let h = time.dt();
    let zero = BandLimitedField::zeros(ops.band());
    let mut base = JacobiCostate::new(u1.clone(), zero.clone())?;
    let mut incr = JacobiCostate::new(delta_u1.clone(), zero)?;
    for k in (0..time.nt()).rev() {
        let rhs = |s: usize, b: &JacobiCostate, i: &JacobiCostate| {
            let v = PreparedVelocity::new(ops, velocity.stage(k, s));
            let dv = PreparedVelocity::new(ops, delta_velocity.stage(k, s));
            (
                adjoint_jacobi_rhs_prepared(ops, &v, b),
                incremental_adjoint_jacobi_rhs_prepared(ops, &v, &dv, b, i),
            )
        };
        let (b1, i1) = rhs(3, &base, &incr);
        let (b2, i2) = rhs(2, &base.plus(-0.5 * h, &b1), &incr.plus(-0.5 * h, &i1));
        let (b3, i3) = rhs(1, &base.plus(-0.5 * h, &b2), &incr.plus(-0.5 * h, &i2));
        let (b4, i4) = rhs(0, &base.plus(-h, &b3), &incr.plus(-h, &i3));
        let combine = |a: &JacobiCostate, k: [&JacobiCostate; 4]| JacobiCostate {
            u: rk4_combine(&a.u, -h, [&k[0].u, &k[1].u, &k[2].u, &k[3].u]),
            delta_v: rk4_combine(&a.delta_v, -h, [&k[0].delta_v, &k[1].delta_v, &k[2].delta_v, &k[3].delta_v]),
        };
        base = combine(&base, [&b1, &b2, &b3, &b4]);
        incr = combine(&incr, [&i1, &i2, &i3, &i4]);
        if !base.is_finite() || !incr.is_finite() {
            return Err(blowup("incremental adjoint Jacobi", k));
        }
    }
    Ok(incr.delta_v)
}
