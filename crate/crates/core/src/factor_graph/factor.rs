use super::{GraphError, VariableId, VariableKind, Values};
use crate::se2::{Point2, Pose2};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};

/// Zero-mean Gaussian noise, stored with its square-root information `L⁻¹`
/// where `L Lᵀ = Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNoise {
    covariance: DMatrix<f64>,
    sqrt_information: DMatrix<f64>,
}

impl GaussianNoise {
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self, GraphError> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(GraphError::NotPositiveDefinite(format!(
                "shape {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        if (&covariance - covariance.transpose()).amax() > 1e-9 * scale {
            return Err(GraphError::NotPositiveDefinite("not symmetric".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| GraphError::NotPositiveDefinite(format!("{covariance}")))?;
        let l = chol.l();
        let n = l.nrows();
        let sqrt_information = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| GraphError::NotPositiveDefinite("singular factor".into()))?;
        Ok(Self {
            covariance,
            sqrt_information,
        })
    }

    /// Diagonal noise from per-axis standard deviations.
    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self, GraphError> {
        if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(GraphError::NotPositiveDefinite(format!(
                "sigmas must be positive: {sigmas:?}"
            )));
        }
        let variances: Vec<f64> = sigmas.iter().map(|s| s * s).collect();
        Self::from_covariance(DMatrix::from_diagonal(&DVector::from_vec(variances)))
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self, GraphError> {
        Self::from_sigmas(&vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sqrt_information(&self) -> &DMatrix<f64> {
        &self.sqrt_information
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FactorKind {
    PriorPose { measured: Pose2 },
    PriorPoint { measured: Point2 },
    /// `between(from, to) - measured`.
    BetweenPose { measured: Pose2 },
    /// `transform_to(pose, point) - measured`.
    PoseToPoint { measured: Point2 },
    /// `a - b`.
    PointEquality,
}

/// Whitened residual and Jacobian blocks, one block per connected variable.
#[derive(Clone, Debug)]
pub struct Linearized {
    pub residual: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFactor {
    kind: FactorKind,
    connected: Vec<VariableId>,
    noise: GaussianNoise,
}

fn expect_kind(id: VariableId, kind: VariableKind) -> Result<(), GraphError> {
    if id.kind() != kind {
        return Err(GraphError::KindMismatch {
            id,
            expected: kind,
            actual: id.kind(),
        });
    }
    Ok(())
}

fn dmatrix3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn dmatrix2(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, m.as_slice())
}

impl GaussianFactor {
    fn new(
        kind: FactorKind,
        connected: Vec<VariableId>,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        let factor = Self {
            kind,
            connected,
            noise,
        };
        let expected = factor.residual_dim();
        if factor.noise.dim() != expected {
            return Err(GraphError::DimensionMismatch {
                expected,
                actual: factor.noise.dim(),
            });
        }
        if factor.connected.len() == 2 && factor.connected[0] == factor.connected[1] {
            return Err(GraphError::DuplicateVariable(factor.connected[0]));
        }
        Ok(factor)
    }

    pub fn prior_pose(
        id: VariableId,
        measured: Pose2,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        expect_kind(id, VariableKind::Pose)?;
        Self::new(FactorKind::PriorPose { measured }, vec![id], noise)
    }

    pub fn prior_point(
        id: VariableId,
        measured: Point2,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        expect_kind(id, VariableKind::Point)?;
        Self::new(FactorKind::PriorPoint { measured }, vec![id], noise)
    }

    pub fn between_pose(
        from: VariableId,
        to: VariableId,
        measured: Pose2,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        expect_kind(from, VariableKind::Pose)?;
        expect_kind(to, VariableKind::Pose)?;
        Self::new(FactorKind::BetweenPose { measured }, vec![from, to], noise)
    }

    pub fn pose_to_point(
        pose: VariableId,
        point: VariableId,
        measured: Point2,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        expect_kind(pose, VariableKind::Pose)?;
        expect_kind(point, VariableKind::Point)?;
        Self::new(FactorKind::PoseToPoint { measured }, vec![pose, point], noise)
    }

    pub fn point_equality(
        a: VariableId,
        b: VariableId,
        noise: GaussianNoise,
    ) -> Result<Self, GraphError> {
        expect_kind(a, VariableKind::Point)?;
        expect_kind(b, VariableKind::Point)?;
        Self::new(FactorKind::PointEquality, vec![a, b], noise)
    }

    pub fn kind(&self) -> &FactorKind {
        &self.kind
    }

    pub fn keys(&self) -> &[VariableId] {
        &self.connected
    }

    pub fn noise(&self) -> &GaussianNoise {
        &self.noise
    }

    pub fn is_prior(&self) -> bool {
        matches!(
            self.kind,
            FactorKind::PriorPose { .. } | FactorKind::PriorPoint { .. }
        )
    }

    pub fn residual_dim(&self) -> usize {
        match self.kind {
            FactorKind::PriorPose { .. } | FactorKind::BetweenPose { .. } => 3,
            _ => 2,
        }
    }

    /// Unwhitened `h(X) - z` with angles wrapped.
    pub fn error_vector(&self, values: &Values) -> Result<DVector<f64>, GraphError> {
        let k = &self.connected;
        Ok(match &self.kind {
            FactorKind::PriorPose { measured } => {
                let e = values.pose(&k[0])?.vector_difference(measured);
                DVector::from_column_slice(e.as_slice())
            }
            FactorKind::PriorPoint { measured } => {
                let p = values.point(&k[0])?;
                DVector::from_column_slice(&[p.x - measured.x, p.y - measured.y])
            }
            FactorKind::BetweenPose { measured } => {
                let a = values.pose(&k[0])?;
                let b = values.pose(&k[1])?;
                let e = a.between(&b).vector_difference(measured);
                DVector::from_column_slice(e.as_slice())
            }
            FactorKind::PoseToPoint { measured } => {
                let q = values.pose(&k[0])?.transform_to(&values.point(&k[1])?);
                DVector::from_column_slice(&[q.x - measured.x, q.y - measured.y])
            }
            FactorKind::PointEquality => {
                let a = values.point(&k[0])?;
                let b = values.point(&k[1])?;
                DVector::from_column_slice(&[a.x - b.x, a.y - b.y])
            }
        })
    }

    pub fn whitened_error(&self, values: &Values) -> Result<DVector<f64>, GraphError> {
        Ok(self.noise.sqrt_information() * self.error_vector(values)?)
    }

    /// Whitened residual and Jacobians w.r.t. the local coordinates of each
    /// connected variable.
    pub fn linearize(&self, values: &Values) -> Result<Linearized, GraphError> {
        let k = &self.connected;
        let raw: Vec<DMatrix<f64>> = match &self.kind {
            FactorKind::PriorPose { .. } => {
                let x = values.pose(&k[0])?;
                let (_, j) = Pose2::compose_jacobians(&x, &Pose2::identity());
                vec![dmatrix3(&j)]
            }
            FactorKind::PriorPoint { .. } => vec![DMatrix::identity(2, 2)],
            FactorKind::BetweenPose { .. } => {
                let (ja, jb) = Pose2::between_jacobians(&values.pose(&k[0])?, &values.pose(&k[1])?);
                vec![dmatrix3(&ja), dmatrix3(&jb)]
            }
            FactorKind::PoseToPoint { .. } => {
                let (jf, jp) =
                    Pose2::transform_to_jacobians(&values.pose(&k[0])?, &values.point(&k[1])?);
                vec![DMatrix::from_column_slice(2, 3, jf.as_slice()), dmatrix2(&jp)]
            }
            FactorKind::PointEquality => {
                vec![DMatrix::identity(2, 2), -DMatrix::identity(2, 2)]
            }
        };
        let w = self.noise.sqrt_information();
        Ok(Linearized {
            residual: w * self.error_vector(values)?,
            jacobians: raw.iter().map(|j| w * j).collect(),
        })
    }

    pub(crate) fn describe(&self) -> String {
        let keys: Vec<String> = self.connected.iter().map(ToString::to_string).collect();
        let (name, measured) = match &self.kind {
            FactorKind::PriorPose { measured } => ("prior_pose", fmt_pose(measured)),
            FactorKind::PriorPoint { measured } => ("prior_point", fmt_point(measured)),
            FactorKind::BetweenPose { measured } => ("between_pose", fmt_pose(measured)),
            FactorKind::PoseToPoint { measured } => ("pose_to_point", fmt_point(measured)),
            FactorKind::PointEquality => ("point_equality", "0.000000 0.000000".to_string()),
        };
        let cov: Vec<String> = self
            .noise
            .covariance()
            .transpose()
            .iter()
            .map(|v| format!("{v:.6e}"))
            .collect();
        format!(
            "{name} {} measured {measured} covariance {}",
            keys.join(" "),
            cov.join(" ")
        )
    }
}

fn fmt_pose(p: &Pose2) -> String {
    format!("{:.6} {:.6} {:.6}", p.x(), p.y(), p.theta())
}

fn fmt_point(p: &Point2) -> String {
    format!("{:.6} {:.6}", p.x, p.y)
}
