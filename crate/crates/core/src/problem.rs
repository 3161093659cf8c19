//! The two registration objectives, their gradients and Gauss-Newton
//! Hessian-vector products.
//!
//! `E(v0) = 1/2 <v0, v0>_V + 1/sigma^2 mean((m(1) - I1)^2)`. Gradients and
//! Hessian actions are returned in the `<L., .>` metric, so the gradient is
//! `v0 + delta_v(0)` and the Gauss-Newton operator is identity plus a positive
//! semi-definite data term.
//!
//! Both the gradient and the Gauss-Newton operator linearize the final state
//! through the Jacobi field `J(1)`: the image moves by `-grad m(1) . iota(J)`
//! and the displacement by `-(Id + Du(1)) * J`. The Gauss-Newton operator is
//! therefore exactly `I + G^T W G` for the same `G` whose transpose produces
//! the gradient.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::{ScalarImage, SpatialVectorField};
use crate::image::{jacobian_determinant, mse, spatial_gradient};
use crate::lie::{jacobian_product, jacobian_transpose_product};
use crate::spectral::{BandLimitedField, SpectralOperators};
use crate::transport::{
    composed_gradient, compose_with_displacement, shoot, solve_adjoint_jacobi_backward, solve_deformation_state, solve_jacobi_forward, solve_map_displacement,
    GeodesicTrajectory, StateTrajectory, TimeGrid,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// The image is transported by the state equation.
    State,
    /// The inverse map is transported and the source is composed with it.
    Deformation,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::State => "state",
            Self::Deformation => "deformation",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Self::State),
            "deformation" => Ok(Self::Deformation),
            _ => invalid(format!("unknown variant '{s}', expected 'state' or 'deformation'")),
        }
    }
}

pub struct RegistrationProblem {
    variant: Variant,
    source: ScalarImage,
    target: ScalarImage,
    ops: SpectralOperators,
    sigma: f64,
    time: TimeGrid,
    baseline_mse: f64,
}

/// Final-time quantities of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub trajectory: GeodesicTrajectory,
    /// Deformed source `m(1)`.
    pub warped: ScalarImage,
    /// Image gradient used in the final conditions: centered differences of
    /// `m(1)` for the state variant, the interpolant gradient of the source
    /// at `phi(1)` for the deformation variant.
    pub state_gradient: SpatialVectorField,
    /// `u(1)` for the deformation variant.
    pub displacement: Option<BandLimitedField>,
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub energy: f64,
    pub regularizer: f64,
    pub image_term: f64,
    /// `None` for reports produced by [`RegistrationProblem::evaluate`].
    pub gradient: Option<BandLimitedField>,
    pub v0: BandLimitedField,
    pub forward: ForwardSolution,
    /// `lambda(1) = -2/sigma^2 (m(1) - I1)`.
    pub lambda: Option<ScalarImage>,
    /// `U(1)`, the final costate driving the adjoint Jacobi sweep.
    pub costate: Option<BandLimitedField>,
}

/// Values held in memory at the peak of one Gauss-Newton product, which keeps
/// the forward trajectories, the tangent trajectory and the costates alive at
/// once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageCounts {
    /// Complex coefficients of the stored velocity trajectory.
    pub velocity_coefficients: usize,
    /// Complex coefficients of the stored displacement trajectory.
    pub state_coefficients: usize,
    /// Complex coefficients of the tangent velocity trajectory.
    pub tangent_coefficients: usize,
    /// Complex coefficients of the adjoint Jacobi costates `(U, delta_v)`.
    pub costate_coefficients: usize,
    /// Real scalars on the full image grid.
    pub grid_scalars: usize,
}

impl StorageCounts {
    pub fn coefficients(&self) -> usize {
        self.velocity_coefficients + self.state_coefficients + self.tangent_coefficients + self.costate_coefficients
    }
}

impl RegistrationProblem {
    pub fn new(
        variant: Variant,
        source: ScalarImage,
        target: ScalarImage,
        ops: SpectralOperators,
        sigma: f64,
        time: TimeGrid,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        let grid = ops.band().grid_sizes();
        source.ensure_same_grid(grid, "registration source")?;
        target.ensure_same_grid(grid, "registration target")?;
        let baseline_mse = mse(&source, &target)?;
        Ok(Self {
            variant,
            source,
            target,
            ops,
            sigma,
            time,
            baseline_mse,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn source(&self) -> &ScalarImage {
        &self.source
    }

    pub fn target(&self) -> &ScalarImage {
        &self.target
    }

    pub fn ops(&self) -> &SpectralOperators {
        &self.ops
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    /// `mean((I0 - I1)^2)`, the denominator of the relative mismatch.
    pub fn baseline_mse(&self) -> f64 {
        self.baseline_mse
    }

    /// `100 mean((m - I1)^2) / mean((I0 - I1)^2)`, with `0/0 = 0`.
    pub fn mse_rel(&self, warped: &ScalarImage) -> Result<f64> {
        let num = mse(warped, &self.target)?;
        if self.baseline_mse == 0.0 {
            return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok(100.0 * num / self.baseline_mse)
    }

    pub fn forward(&self, v0: &BandLimitedField) -> Result<ForwardSolution> {
        self.ops.check(v0, "registration velocity")?;
        let deformation = self.variant == Variant::Deformation;
        let trajectory = shoot(v0, &self.source, deformation, self.time, &self.ops)?;
        let (warped, state_gradient, displacement) = match &trajectory.state {
            StateTrajectory::Image(ms) => {
                let m1 = ms.last().expect("state has nodes").clone();
                let g = spatial_gradient(&m1);
                (m1, g, None)
            }
            StateTrajectory::Deformation(us) => {
                let u1 = us.last().expect("state has nodes").clone();
                let m1 = compose_with_displacement(&self.source, &u1, &self.ops)?;
                let g = composed_gradient(&self.source, &u1, &self.ops)?;
                (m1, g, Some(u1))
            }
        };
        Ok(ForwardSolution {
            trajectory,
            warped,
            state_gradient,
            displacement,
        })
    }

    /// Energy and its two terms, without a gradient.
    pub fn evaluate(&self, v0: &BandLimitedField) -> Result<GradientReport> {
        let forward = self.forward(v0)?;
        let regularizer = 0.5 * self.ops.inner_product_v(v0, v0)?;
        let image_term = mse(&forward.warped, &self.target)? / (self.sigma * self.sigma);
        Ok(GradientReport {
            energy: regularizer + image_term,
            regularizer,
            image_term,
            gradient: None,
            v0: v0.clone(),
            forward,
            lambda: None,
            costate: None,
        })
    }

    /// Energy and `<L., .>`-metric gradient `v0 + delta_v(0)`.
    pub fn gradient(&self, v0: &BandLimitedField) -> Result<GradientReport> {
        let mut report = self.evaluate(v0)?;
        let fwd = &report.forward;
        let scale = -2.0 / (self.sigma * self.sigma);
        let lambda_values = fwd
            .warped
            .values()
            .iter()
            .zip(self.target.values())
            .map(|(m, t)| scale * (m - t))
            .collect();
        let lambda = ScalarImage::new(self.target.sizes(), lambda_values)?;
        let u1 = self.final_costate(fwd, &lambda)?;
        let transported = solve_adjoint_jacobi_backward(&u1, &fwd.trajectory.velocity, self.time, &self.ops)?;
        report.gradient = Some(v0.plus(1.0, &transported));
        report.lambda = Some(lambda);
        report.costate = Some(u1);
        Ok(report)
    }

    /// `U(1)` from a final-time image weight `w`: `K pi(w grad m(1))` for the
    /// state variant, `K (rho + (Du(1))^T * rho)` with `rho = pi(w grad_B I0 o
    /// phi(1))` for the deformation variant.
    fn final_costate(&self, fwd: &ForwardSolution, weight: &ScalarImage) -> Result<BandLimitedField> {
        let rho = self.ops.project(&fwd.state_gradient.scaled_by(weight)?)?;
        let momentum = match &fwd.displacement {
            None => rho,
            Some(u1) => rho.plus(1.0, &jacobian_transpose_product(u1, &rho, &self.ops)?),
        };
        self.ops.apply_k(&momentum)
    }

    /// Final image perturbation induced by a Jacobi field `J(1)`.
    fn image_perturbation(&self, fwd: &ForwardSolution, jacobi: &BandLimitedField) -> Result<ScalarImage> {
        let displacement = match &fwd.displacement {
            None => jacobi.scaled(-1.0),
            Some(u1) => jacobi.plus(1.0, &jacobian_product(u1, jacobi, &self.ops)?).scaled(-1.0),
        };
        // State variant: dm = -grad m . iota(J). Deformation variant:
        // dm = grad_B I0(phi) . iota(du) with du = -(Id + Du) * J.
        fwd.state_gradient.dot(&self.ops.include(&displacement)?)
    }

    /// Gauss-Newton action `delta + G^T W G delta` in the `<L., .>` metric.
    /// Requires a report produced by [`RegistrationProblem::gradient`].
    pub fn gauss_newton_hvp(&self, report: &GradientReport, delta_v0: &BandLimitedField) -> Result<BandLimitedField> {
        if report.gradient.is_none() {
            return Err(Error::InvalidState(
                "Gauss-Newton product needs a report produced by gradient()".into(),
            ));
        }
        self.ops.check(delta_v0, "gauss_newton_hvp")?;
        let fwd = &report.forward;
        let inc = solve_jacobi_forward(&fwd.trajectory.velocity, delta_v0, self.time, &self.ops)?;
        let dm = self.image_perturbation(fwd, &inc.jacobi)?;
        let scale = -2.0 / (self.sigma * self.sigma);
        let dlambda = ScalarImage::new(dm.sizes(), dm.values().iter().map(|x| scale * x).collect())?;
        let du1 = self.final_costate(fwd, &dlambda)?;
        let transported = solve_adjoint_jacobi_backward(&du1, &fwd.trajectory.velocity, self.time, &self.ops)?;
        Ok(delta_v0.plus(1.0, &transported))
    }

    /// Counts the coefficients and grid scalars behind `report`.
    pub fn storage(&self, report: &GradientReport) -> StorageCounts {
        let band = self.ops.band();
        let field = band.dims() * band.len();
        let fwd = &report.forward;
        let (state_coefficients, image_states) = match &fwd.trajectory.state {
            StateTrajectory::Image(ms) => (0, ms.iter().map(ScalarImage::len).sum()),
            StateTrajectory::Deformation(us) => (us.len() * field, 0),
        };
        let velocity = fwd.trajectory.velocity.coefficient_count();
        let voxels = self.target.len();
        let lambda = report.lambda.as_ref().map_or(0, ScalarImage::len);
        StorageCounts {
            velocity_coefficients: velocity,
            state_coefficients,
            tangent_coefficients: velocity,
            costate_coefficients: 2 * (self.time.nt() + 1) * field,
            grid_scalars: self.source.len()
                + voxels
                + image_states
                + fwd.warped.len()
                + fwd.state_gradient.dims() * voxels
                + lambda
                // dm and dlambda of the product itself
                + 2 * voxels,
        }
    }

    /// Band-limited `u(1)` with `phi(1) ~ id + iota(u(1))`. The state variant
    /// integrates it from the stored velocity trajectory on demand.
    pub fn map_displacement(&self, fwd: &ForwardSolution) -> Result<BandLimitedField> {
        match &fwd.displacement {
            Some(u) => Ok(u.clone()),
            None => Ok(solve_deformation_state(&fwd.trajectory.velocity, self.time, &self.ops)?
                .pop()
                .expect("state has nodes")),
        }
    }

    /// Full-resolution displacement of the inverse flow map of the stored
    /// velocity trajectory.
    pub fn flow_displacement(&self, fwd: &ForwardSolution) -> Result<SpatialVectorField> {
        solve_map_displacement(&fwd.trajectory.velocity, self.time, &self.ops)
    }

    /// Pointwise `det(Id + D iota(u))` on the image grid, with `D` the
    /// spectral derivative.
    pub fn displacement_jacobian_determinant(&self, u: &BandLimitedField) -> Result<ScalarImage> {
        let jac = self.ops.spectral_jacobian(u)?;
        let d = jac.dims();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(self.ops.include_scalar(jac.entry(i, j))?.into_values());
            }
        }
        let sizes = self.target.sizes();
        ScalarImage::new(sizes, jacobian_determinant(sizes, &entries))
    }

    /// Final image perturbation of the Gauss-Newton model for `delta_v0`.
    pub fn linearized_image_perturbation(&self, report: &GradientReport, delta_v0: &BandLimitedField) -> Result<ScalarImage> {
        let inc = solve_jacobi_forward(&report.forward.trajectory.velocity, delta_v0, self.time, &self.ops)?;
        self.image_perturbation(&report.forward, &inc.jacobi)
    }
}
