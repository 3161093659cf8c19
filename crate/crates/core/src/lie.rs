//! Lie-algebra operators on band-limited velocity fields and the right-hand
//! sides of EPDiff and the (incremental) adjoint Jacobi equations.
//!
//! With `D` the spectral Jacobian and `*` the truncated convolution:
//!
//! * `ad_v w = Dv * w - Dw * v`
//! * `ad_dagger(v, w) = K [ (Dv)^T * Lw + D(Lw) * v + Lw * div(v) ]`
//!
//! `ad_dagger(v, .)` is the adjoint of `ad_v` in the metric `<L., .>_{l2}`.
//! Every sum of truncated convolutions is evaluated by lifting each factor to
//! the zero-padded product grid once, accumulating the pointwise products and
//! lowering the sum back to the band.

use crate::error::Result;
use crate::spectral::{BandLimitedField, SpectralOperators};

/// Samples of a field and of its Jacobian on the padded product grid.
pub(crate) struct Lifted {
    f: Vec<Vec<f64>>,
    // df[i * d + j] = d_j f_i
    df: Vec<Vec<f64>>,
    div: Vec<f64>,
}

impl Lifted {
    pub(crate) fn new(ops: &SpectralOperators, field: &BandLimitedField) -> Self {
        let d = ops.dims();
        let f: Vec<Vec<f64>> = field.components().iter().map(|c| ops.lift(c)).collect();
        let mut df = Vec::with_capacity(d * d);
        for comp in field.components() {
            for j in 0..d {
                df.push(ops.lift_derivative(comp, j));
            }
        }
        let mut div = df[0].clone();
        for i in 1..d {
            for (a, b) in div.iter_mut().zip(&df[i * d + i]) {
                *a += b;
            }
        }
        Self { f, df, div }
    }

    /// Samples only; the Jacobian slots stay empty, so the result may only
    /// appear as a non-differentiated operand.
    pub(crate) fn values(ops: &SpectralOperators, field: &BandLimitedField) -> Self {
        Self {
            f: field.components().iter().map(|c| ops.lift(c)).collect(),
            df: Vec::new(),
            div: Vec::new(),
        }
    }
}

/// A velocity lifted together with its momentum `L v`; the operand shared by
/// all right-hand sides evaluated at one time point.
pub(crate) struct PreparedVelocity {
    v: Lifted,
    lv: Lifted,
}

impl PreparedVelocity {
    pub(crate) fn new(ops: &SpectralOperators, v: &BandLimitedField) -> Self {
        let momentum = ops.apply_l(v).expect("band checked by caller");
        Self {
            v: Lifted::new(ops, v),
            lv: Lifted::new(ops, &momentum),
        }
    }
}

pub(crate) struct Accumulator {
    comps: Vec<Vec<f64>>,
}

impl Accumulator {
    pub(crate) fn new(ops: &SpectralOperators) -> Self {
        let len: usize = ops.padded_sizes().iter().product();
        Self {
            comps: vec![vec![0.0; len]; ops.dims()],
        }
    }

    /// `+= coef * (Dv w - Dw v)` in sample space.
    fn add_ad(&mut self, coef: f64, v: &Lifted, w: &Lifted) {
        let d = self.comps.len();
        for (i, acc) in self.comps.iter_mut().enumerate() {
            for j in 0..d {
                let (dv, wj, dw, vj) = (&v.df[i * d + j], &w.f[j], &w.df[i * d + j], &v.f[j]);
                for (n, a) in acc.iter_mut().enumerate() {
                    *a += coef * (dv[n] * wj[n] - dw[n] * vj[n]);
                }
            }
        }
    }

    /// `+= coef * ((Dv)^T m + Dm v + m div v)`, the bracket inside `ad_dagger`
    /// with `m = L w` already lifted.
    fn add_coad(&mut self, coef: f64, v: &Lifted, m: &Lifted) {
        let d = self.comps.len();
        for (i, acc) in self.comps.iter_mut().enumerate() {
            let mi = &m.f[i];
            for (n, a) in acc.iter_mut().enumerate() {
                *a += coef * mi[n] * v.div[n];
            }
            for j in 0..d {
                let (dvt, mj, dm, vj) = (&v.df[j * d + i], &m.f[j], &m.df[i * d + j], &v.f[j]);
                for (n, a) in acc.iter_mut().enumerate() {
                    *a += coef * (dvt[n] * mj[n] + dm[n] * vj[n]);
                }
            }
        }
    }

    /// `+= coef * Da b`, i.e. `sum_j d_j a_i b_j`.
    pub(crate) fn add_convect(&mut self, coef: f64, a: &Lifted, b: &Lifted) {
        let d = self.comps.len();
        for (i, acc) in self.comps.iter_mut().enumerate() {
            for j in 0..d {
                let (da, bj) = (&a.df[i * d + j], &b.f[j]);
                for (n, x) in acc.iter_mut().enumerate() {
                    *x += coef * da[n] * bj[n];
                }
            }
        }
    }

    /// `+= coef * (Da)^T b`, i.e. `sum_j d_i a_j b_j`.
    pub(crate) fn add_convect_transpose(&mut self, coef: f64, a: &Lifted, b: &Lifted) {
        let d = self.comps.len();
        for (i, acc) in self.comps.iter_mut().enumerate() {
            for j in 0..d {
                let (da, bj) = (&a.df[j * d + i], &b.f[j]);
                for (n, x) in acc.iter_mut().enumerate() {
                    *x += coef * da[n] * bj[n];
                }
            }
        }
    }

    pub(crate) fn lower(self, ops: &SpectralOperators) -> BandLimitedField {
        let comps = self.comps.iter().map(|c| ops.lower(c)).collect();
        BandLimitedField::from_components(comps).expect("components share the band")
    }

    pub(crate) fn lower_k(self, ops: &SpectralOperators) -> BandLimitedField {
        ops.apply_k(&self.lower(ops)).expect("band checked")
    }
}

fn lift_momentum(ops: &SpectralOperators, w: &BandLimitedField) -> Lifted {
    Lifted::new(ops, &ops.apply_l(w).expect("band checked by caller"))
}

impl PreparedVelocity {
    pub(crate) fn lifted(&self) -> &Lifted {
        &self.v
    }
}

pub(crate) fn ad_prepared(ops: &SpectralOperators, v: &PreparedVelocity, w: &BandLimitedField) -> BandLimitedField {
    let mut acc = Accumulator::new(ops);
    acc.add_ad(1.0, &v.v, &Lifted::new(ops, w));
    acc.lower(ops)
}

/// Truncated Jacobian action `Da * b` (`sum_j d_j a_i * b_j`).
pub fn jacobian_product(a: &BandLimitedField, b: &BandLimitedField, ops: &SpectralOperators) -> Result<BandLimitedField> {
    ops.check(a, "jacobian_product")?;
    ops.check(b, "jacobian_product")?;
    let mut acc = Accumulator::new(ops);
    acc.add_convect(1.0, &Lifted::new(ops, a), &Lifted::values(ops, b));
    Ok(acc.lower(ops))
}

/// Transposed truncated Jacobian action `(Da)^T * b` (`sum_j d_i a_j * b_j`),
/// the l2-adjoint of `b -> Da * b`.
pub fn jacobian_transpose_product(
    a: &BandLimitedField,
    b: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<BandLimitedField> {
    ops.check(a, "jacobian_transpose_product")?;
    ops.check(b, "jacobian_transpose_product")?;
    let mut acc = Accumulator::new(ops);
    acc.add_convect_transpose(1.0, &Lifted::new(ops, a), &Lifted::values(ops, b));
    Ok(acc.lower(ops))
}

/// Adjoint representation `ad_v w = Dv * w - Dw * v`.
pub fn ad(v: &BandLimitedField, w: &BandLimitedField, ops: &SpectralOperators) -> Result<BandLimitedField> {
    ops.check(v, "ad")?;
    ops.check(w, "ad")?;
    let mut acc = Accumulator::new(ops);
    acc.add_ad(1.0, &Lifted::new(ops, v), &Lifted::new(ops, w));
    Ok(acc.lower(ops))
}

/// Metric adjoint of `ad_v` applied to `w`.
pub fn ad_dagger(
    v: &BandLimitedField,
    w: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<BandLimitedField> {
    ops.check(v, "ad_dagger")?;
    ops.check(w, "ad_dagger")?;
    let mut acc = Accumulator::new(ops);
    acc.add_coad(1.0, &Lifted::new(ops, v), &lift_momentum(ops, w));
    Ok(acc.lower_k(ops))
}

/// EPDiff velocity tendency `-ad_dagger(v, v)`.
pub fn epdiff_rhs(v: &BandLimitedField, ops: &SpectralOperators) -> Result<BandLimitedField> {
    ops.check(v, "epdiff_rhs")?;
    Ok(epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, v)))
}

pub(crate) fn epdiff_rhs_prepared(ops: &SpectralOperators, v: &PreparedVelocity) -> BandLimitedField {
    let mut acc = Accumulator::new(ops);
    acc.add_coad(-1.0, &v.v, &v.lv);
    acc.lower_k(ops)
}

/// State of the reduced adjoint Jacobi system: the costate `U` and the
/// transported gradient `delta_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiCostate {
    pub u: BandLimitedField,
    pub delta_v: BandLimitedField,
}

impl JacobiCostate {
    pub fn new(u: BandLimitedField, delta_v: BandLimitedField) -> Result<Self> {
        if u.band() != delta_v.band() {
            return crate::error::invalid("JacobiCostate: U and delta_v live on different bands");
        }
        Ok(Self { u, delta_v })
    }

    pub fn zeros(band: &std::sync::Arc<crate::spectral::FrequencyBand>) -> Self {
        Self {
            u: BandLimitedField::zeros(band),
            delta_v: BandLimitedField::zeros(band),
        }
    }

    pub(crate) fn plus(&self, a: f64, other: &JacobiCostate) -> Self {
        Self {
            u: self.u.plus(a, &other.u),
            delta_v: self.delta_v.plus(a, &other.delta_v),
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.u.is_finite() && self.delta_v.is_finite()
    }
}

/// Time derivatives of the adjoint Jacobi system:
/// `dU = -ad_dagger(v, U)` and `d delta_v = -U + ad(v, delta_v) - ad_dagger(delta_v, v)`.
pub fn adjoint_jacobi_rhs(
    v: &BandLimitedField,
    u: &BandLimitedField,
    delta_v: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<(BandLimitedField, BandLimitedField)> {
    for f in [v, u, delta_v] {
        ops.check(f, "adjoint_jacobi_rhs")?;
    }
    let out = adjoint_jacobi_rhs_prepared(
        ops,
        &PreparedVelocity::new(ops, v),
        &JacobiCostate {
            u: u.clone(),
            delta_v: delta_v.clone(),
        },
    );
    Ok((out.u, out.delta_v))
}

pub(crate) fn adjoint_jacobi_rhs_prepared(
    ops: &SpectralOperators,
    v: &PreparedVelocity,
    state: &JacobiCostate,
) -> JacobiCostate {
    let lu = lift_momentum(ops, &state.u);
    let ldv = Lifted::new(ops, &state.delta_v);

    let mut coad = Accumulator::new(ops);
    coad.add_coad(-1.0, &v.v, &lu);
    let du = coad.lower_k(ops);

    let mut plain = Accumulator::new(ops);
    plain.add_ad(1.0, &v.v, &ldv);
    let mut coad = Accumulator::new(ops);
    coad.add_coad(-1.0, &ldv, &v.lv);
    let mut ddv = plain.lower(ops);
    ddv.axpy(1.0, &coad.lower_k(ops));
    ddv.axpy(-1.0, &state.u);
    JacobiCostate { u: du, delta_v: ddv }
}

/// Linearized EPDiff: `-ad_dagger(delta_v, v) - ad_dagger(v, delta_v)`.
pub fn incremental_epdiff_rhs(
    v: &BandLimitedField,
    delta_v: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<BandLimitedField> {
    ops.check(v, "incremental_epdiff_rhs")?;
    ops.check(delta_v, "incremental_epdiff_rhs")?;
    Ok(incremental_epdiff_rhs_prepared(ops, &PreparedVelocity::new(ops, v), delta_v))
}

pub(crate) fn incremental_epdiff_rhs_prepared(
    ops: &SpectralOperators,
    v: &PreparedVelocity,
    delta_v: &BandLimitedField,
) -> BandLimitedField {
    let ldv = Lifted::new(ops, delta_v);
    let lmdv = lift_momentum(ops, delta_v);
    let mut acc = Accumulator::new(ops);
    acc.add_coad(-1.0, &ldv, &v.lv);
    acc.add_coad(-1.0, &v.v, &lmdv);
    acc.lower_k(ops)
}

/// Time derivatives of the incremental adjoint Jacobi system, the
/// linearization of [`adjoint_jacobi_rhs`] along a perturbation `delta_v` of
/// the velocity trajectory. Here `w` is the transported gradient of the
/// unperturbed system and `(delta_u, delta_w)` the increments.
#[allow(clippy::too_many_arguments)]
pub fn incremental_adjoint_jacobi_rhs(
    v: &BandLimitedField,
    delta_v: &BandLimitedField,
    w: &BandLimitedField,
    u: &BandLimitedField,
    delta_u: &BandLimitedField,
    delta_w: &BandLimitedField,
    ops: &SpectralOperators,
) -> Result<(BandLimitedField, BandLimitedField)> {
    for f in [v, delta_v, w, u, delta_u, delta_w] {
        ops.check(f, "incremental_adjoint_jacobi_rhs")?;
    }
    let out = incremental_adjoint_jacobi_rhs_prepared(
        ops,
        &PreparedVelocity::new(ops, v),
        &PreparedVelocity::new(ops, delta_v),
        &JacobiCostate {
            u: u.clone(),
            delta_v: w.clone(),
        },
        &JacobiCostate {
            u: delta_u.clone(),
            delta_v: delta_w.clone(),
        },
    );
    Ok((out.u, out.delta_v))
}

pub(crate) fn incremental_adjoint_jacobi_rhs_prepared(
    ops: &SpectralOperators,
    v: &PreparedVelocity,
    dv: &PreparedVelocity,
    base: &JacobiCostate,
    incr: &JacobiCostate,
) -> JacobiCostate {
    let lu = lift_momentum(ops, &base.u);
    let ldu = lift_momentum(ops, &incr.u);
    let lw = Lifted::new(ops, &base.delta_v);
    let ldw = Lifted::new(ops, &incr.delta_v);

    // d delta_U = -ad_dagger(delta_v, U) - ad_dagger(v, delta_U)
    let mut coad = Accumulator::new(ops);
    coad.add_coad(-1.0, &dv.v, &lu);
    coad.add_coad(-1.0, &v.v, &ldu);
    let ddu = coad.lower_k(ops);

    // d delta_w = -delta_U + ad(delta_v, w) + ad(v, delta_w)
    //             - ad_dagger(delta_w, v) - ad_dagger(w, delta_v)
    let mut plain = Accumulator::new(ops);
    plain.add_ad(1.0, &dv.v, &lw);
    plain.add_ad(1.0, &v.v, &ldw);
    let mut coad = Accumulator::new(ops);
    coad.add_coad(-1.0, &ldw, &v.lv);
    coad.add_coad(-1.0, &lw, &dv.lv);
    let mut ddw = plain.lower(ops);
    ddw.axpy(1.0, &coad.lower_k(ops));
    ddw.axpy(-1.0, &incr.u);
    JacobiCostate { u: ddu, delta_v: ddw }
}
