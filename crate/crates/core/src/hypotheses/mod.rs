//! Function families searched by the estimators, and sup-norm covers of them.

mod cover;
mod ellipsoid;

pub use cover::{certify, certify_linear, cover_linear, grid_net, sample_ball, CertificationReport, CoverCertificate, DEFAULT_NET_CAP};
pub use ellipsoid::{
    certify_ellipsoid, ellipsoid_cover, ellipsoid_cover_with_m, ellipsoid_hyper_constant, ellipsoid_m_eps,
    norm_precondition_warning, sample_ellipsoid_member, Basis, EllipsoidSpec,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{LinkFn, ProcessSpec};

/// Slack allowed when checking ball membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSpec {
    /// {x ↦ Ax : ‖A‖_F ≤ B}, A of shape d_y × d_x.
    LinearBall {
        #[serde(rename = "B")]
        b: f64,
        d_x: usize,
        d_y: usize,
    },
    /// {x ↦ σ(Ax) : ‖A‖_F ≤ B}, A square.
    GlmBall {
        #[serde(rename = "B")]
        b: f64,
        link: LinkFn,
        d_x: usize,
    },
    /// Finitely many functions on the atoms of a chain, one value per state.
    FiniteTable { functions: Vec<Vec<Vec<f64>>> },
    Ellipsoid(EllipsoidSpec),
}

/// A single function from one of the families.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Member {
    Linear(DMatrix<f64>),
    Glm { a: DMatrix<f64>, link: LinkFn },
    /// Table values per state, with the atoms used to resolve vector inputs.
    Table { index: usize, values: Vec<DVector<f64>>, atoms: Vec<DVector<f64>> },
    Ellipsoid { theta: DVector<f64>, basis: Basis },
}

impl Member {
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Member::Linear(a) => {
                if a.ncols() != x.len() {
                    return Err(Error::invalid("state dimension does not match the parameter"));
                }
                Ok(a * x)
            }
            Member::Glm { a, link } => {
                if a.ncols() != x.len() {
                    return Err(Error::invalid("state dimension does not match the parameter"));
                }
                Ok((a * x).map(|v| link.apply(v)))
            }
            Member::Table { values, atoms, .. } => {
                let k = atoms
                    .iter()
                    .position(|a| a.len() == x.len() && (a - x).amax() <= 1e-12)
                    .ok_or_else(|| Error::invalid("table lookup on a state that is not an atom"))?;
                Ok(values[k].clone())
            }
            Member::Ellipsoid { theta, basis } => {
                if x.len() != 1 {
                    return Err(Error::invalid("ellipsoid members act on scalar states"));
                }
                let v = theta
                    .iter()
                    .enumerate()
                    .map(|(j, th)| th * basis.eval(j + 1, x[0]))
                    .sum::<f64>();
                Ok(DVector::from_element(1, v))
            }
        }
    }

    /// Value at a chain state index (tables only need the index).
    pub fn eval_state(&self, state: usize, atom: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Member::Table { values, .. } => values
                .get(state)
                .cloned()
                .ok_or_else(|| Error::invalid("state index outside the table")),
            _ => self.eval(atom),
        }
    }

    /// The member x ↦ s·f(x). Every family here is positively homogeneous, so for
    /// s > 0 this is a reparametrization (GLM links commute with positive scaling).
    pub fn scaled(&self, s: f64) -> Member {
        match self {
            Member::Linear(a) => Member::Linear(a * s),
            Member::Glm { a, link } => Member::Glm { a: a * s, link: *link },
            Member::Table { index, values, atoms } => Member::Table {
                index: *index,
                values: values.iter().map(|v| v * s).collect(),
                atoms: atoms.clone(),
            },
            Member::Ellipsoid { theta, basis } => Member::Ellipsoid { theta: theta * s, basis: *basis },
        }
    }

    /// Parameter matrix for linear and GLM members.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            Member::Linear(a) | Member::Glm { a, .. } => Some(a),
            _ => None,
        }
    }
}

impl HypothesisSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            HypothesisSpec::LinearBall { b, d_x, d_y } => {
                if !(*b > 0.0 && b.is_finite()) || *d_x == 0 || *d_y == 0 {
                    return Err(Error::invalid("linear ball needs B > 0 and positive dimensions"));
                }
            }
            HypothesisSpec::GlmBall { b, link, d_x } => {
                if !(*b > 0.0 && b.is_finite()) || *d_x == 0 {
                    return Err(Error::invalid("GLM ball needs B > 0 and d_x > 0"));
                }
                link.probe()?;
            }
            HypothesisSpec::FiniteTable { functions } => {
                let k = functions.first().map(|f| f.len()).unwrap_or(0);
                let d = functions.first().and_then(|f| f.first()).map(|v| v.len()).unwrap_or(0);
                if k == 0 || d == 0 {
                    return Err(Error::invalid("finite table needs at least one nonempty function"));
                }
                if functions.iter().any(|f| f.len() != k || f.iter().any(|v| v.len() != d)) {
                    return Err(Error::invalid("finite table functions must share shape"));
                }
            }
            HypothesisSpec::Ellipsoid(e) => e.validate()?,
        }
        Ok(())
    }

    /// Frobenius radius for ball families.
    pub fn radius(&self) -> Option<f64> {
        match self {
            HypothesisSpec::LinearBall { b, .. } | HypothesisSpec::GlmBall { b, .. } => Some(*b),
            _ => None,
        }
    }

    pub fn contains(&self, m: &Member) -> bool {
        match (self, m) {
            (HypothesisSpec::LinearBall { b, d_x, d_y }, Member::Linear(a)) => {
                a.shape() == (*d_y, *d_x) && a.norm() <= b + MEMBERSHIP_TOL
            }
            (HypothesisSpec::GlmBall { b, link, d_x }, Member::Glm { a, link: l }) => {
                l == link && a.shape() == (*d_x, *d_x) && a.norm() <= b + MEMBERSHIP_TOL
            }
            (HypothesisSpec::FiniteTable { functions }, Member::Table { index, values, .. }) => functions
                .get(*index)
                .is_some_and(|f| f.iter().zip(values).all(|(u, v)| v.as_slice() == u.as_slice())),
            (HypothesisSpec::Ellipsoid(e), Member::Ellipsoid { theta, .. }) => e.weighted_norm(theta)
                .is_some_and(|n| n <= 1.0 + MEMBERSHIP_TOL),
            _ => false,
        }
    }

    /// i-th table function as a member resolving states against `atoms`.
    pub fn table_member(&self, index: usize, atoms: &[DVector<f64>]) -> Result<Member> {
        match self {
            HypothesisSpec::FiniteTable { functions } => {
                let f = functions
                    .get(index)
                    .ok_or_else(|| Error::invalid("table index out of range"))?;
                if f.len() != atoms.len() {
                    return Err(Error::invalid("table has a different number of states than the chain"));
                }
                Ok(Member::Table {
                    index,
                    values: f.iter().map(|v| DVector::from_column_slice(v)).collect(),
                    atoms: atoms.to_vec(),
                })
            }
            _ => Err(Error::invalid("not a finite table family")),
        }
    }

    /// The member representing f⋆ of `process`, checked for membership.
    pub fn truth(&self, process: &ProcessSpec) -> Result<Member> {
        let m = match (self, process) {
            (HypothesisSpec::LinearBall { .. }, ProcessSpec::Lds(s)) => Member::Linear(s.a_star().clone()),
            (HypothesisSpec::LinearBall { .. }, ProcessSpec::Glm(s)) if s.link().is_identity() => {
                Member::Linear(s.a_star().clone())
            }
            (HypothesisSpec::GlmBall { link, .. }, ProcessSpec::Glm(s)) if *link == s.link() => {
                Member::Glm { a: s.a_star().clone(), link: s.link() }
            }
            (HypothesisSpec::GlmBall { link, .. }, ProcessSpec::Lds(s)) if link.is_identity() => {
                Member::Glm { a: s.a_star().clone(), link: *link }
            }
            (HypothesisSpec::FiniteTable { functions }, ProcessSpec::FiniteChain(c)) => {
                let truth: Vec<Vec<f64>> = c.target_fn().iter().map(|v| v.as_slice().to_vec()).collect();
                let index = functions.iter().position(|f| *f == truth).ok_or_else(|| {
                    Error::invalid("realizability: the chain's target_fn is not in the table")
                })?;
                self.table_member(index, c.atoms())?
            }
            _ => {
                return Err(Error::invalid(format!(
                    "family cannot represent the regression function of a {} process",
                    process.kind()
                )))
            }
        };
        if !self.contains(&m) {
            return Err(Error::invalid("realizability: the true parameter lies outside the ball"));
        }
        Ok(m)
    }

    /// Wraps a parameter matrix as a member of this (ball) family.
    pub fn member_from_matrix(&self, a: DMatrix<f64>) -> Result<Member> {
        match self {
            HypothesisSpec::LinearBall { .. } => Ok(Member::Linear(a)),
            HypothesisSpec::GlmBall { link, .. } => Ok(Member::Glm { a, link: *link }),
            _ => Err(Error::invalid("family is not parametrized by a matrix")),
        }
    }
}
