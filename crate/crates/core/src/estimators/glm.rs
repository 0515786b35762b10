use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{lse_linear, FitResult, OptimizerTrace};
use crate::error::{Error, Result};
use crate::hypotheses::Member;
use crate::linalg::{project_frobenius, sym_eigenvalues, unflatten_rows};
use crate::processes::{LinkFn, TrajectoryBatch};
use crate::seeds::{derive_seed, rng_from_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOpts {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Seed for the random restarts.
    pub seed: u64,
}

impl Default for OptimizerOpts {
    fn default() -> Self {
        OptimizerOpts { restarts: 5, max_iters: 10_000, grad_tol: 1e-8, armijo_c: 1e-4, shrink: 0.5, seed: 0 }
    }
}

/// Iterations without relative progress before a run is declared stalled.
/// Needed at the kink of leaky ReLU where the gradient never vanishes.
const STALL_WINDOW: usize = 25;

pub(crate) struct Descent {
    pub a: DMatrix<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Projected gradient descent with Armijo backtracking over the Frobenius ball.
pub(crate) fn minimize_projected<F>(
    objective: F,
    start: &DMatrix<f64>,
    b: f64,
    step0: f64,
    opts: &OptimizerOpts,
    label: &str,
) -> Result<Descent>
where
    F: Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
{
    let proj = |m: &DMatrix<f64>| project_frobenius(m, b).0;
    let mut a = proj(start);
    let (mut value, mut grad) = objective(&a);
    if !value.is_finite() {
        return Err(Error::numeric(format!("{label}: non-finite loss at the initial iterate {a:?}")));
    }
    let mut step = step0;
    let mut stall = 0;
    let mut grad_norm = (&a - proj(&(&a - &grad))).norm();
    for it in 0..opts.max_iters {
        if grad_norm <= opts.grad_tol {
            return Ok(Descent { a, value, iterations: it, grad_norm });
        }
        let mut alpha = step;
        let (cand, cv, cg) = loop {
            let cand = proj(&(&a - &grad * alpha));
            let (cv, cg) = objective(&cand);
            if !cv.is_finite() {
                return Err(Error::numeric(format!(
                    "{label}: non-finite loss at iteration {it}, iterate {cand:?}"
                )));
            }
            let decrease = grad.dot(&(&a - &cand));
            if cv <= value - opts.armijo_c * decrease {
                break (cand, cv, cg);
            }
            alpha *= opts.shrink;
            if alpha < 1e-300 {
                return Ok(Descent { a, value, iterations: it, grad_norm });
            }
        };
        if value - cv <= 1e-15 * value.abs().max(1e-300) {
            stall += 1;
        } else {
            stall = 0;
        }
        a = cand;
        value = cv;
        grad = cg;
        grad_norm = (&a - proj(&(&a - &grad))).norm();
        step = alpha * 2.0;
        if stall >= STALL_WINDOW {
            return Ok(Descent { a, value, iterations: it + 1, grad_norm });
        }
    }
    Ok(Descent { a, value, iterations: opts.max_iters, grad_norm })
}

/// Stacks a batch column-wise: X is d_x × T, Y is d_y × T.
pub(crate) fn stack(batch: &TrajectoryBatch) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = DMatrix::from_columns(&batch.xs);
    let y = DMatrix::from_columns(&batch.ys);
    (x, y)
}

/// Square loss and gradient of A ↦ (1/T)‖Y − σ(AX)‖².
pub(crate) fn glm_loss(a: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, link: LinkFn) -> (f64, DMatrix<f64>) {
    let t = x.ncols() as f64;
    let z = a * x;
    let mut r = y.clone();
    let mut w = DMatrix::zeros(z.nrows(), z.ncols());
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            let zi = z[(i, j)];
            let res = y[(i, j)] - link.apply(zi);
            r[(i, j)] = res;
            w[(i, j)] = res * link.derivative(zi);
        }
    }
    let loss = r.norm_squared() / t;
    let grad = (w * x.transpose()) * (-2.0 / t);
    (loss, grad)
}

/// ERM over {x ↦ σ(Ax) : ‖A‖_F ≤ B} by projected gradient with restarts.
///
/// Restart 0 starts from the linear least-squares solution, the others from
/// uniform draws in the ball. The best final loss wins.
pub fn erm_glm(batch: &TrajectoryBatch, b: f64, link: LinkFn, opts: &OptimizerOpts) -> Result<FitResult> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.d_x() != batch.d_y() {
        return Err(Error::invalid("GLM family needs d_y = d_x"));
    }
    let (x, y) = stack(batch);
    let d = batch.d_x();
    let lmax = sym_eigenvalues(&(&x * x.transpose()))[d - 1] / x.ncols() as f64;
    let step0 = if lmax > 0.0 { 1.0 / (2.0 * lmax) } else { 1.0 };
    let first = match lse_linear(batch, b)?.parameter {
        Member::Linear(a) => a,
        _ => unreachable!(),
    };
    let mut best: Option<(Descent, usize)> = None;
    let restarts = opts.restarts.max(1);
    for r in 0..restarts {
        let start = if r == 0 {
            first.clone()
        } else {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[stream::RESTART, r as u64]));
            let v = crate::hypotheses::sample_ball(&mut rng, d * d, b);
            unflatten_rows(&v, d, d)
        };
        let run = minimize_projected(|a| glm_loss(a, &x, &y, link), &start, b, step0, opts, &format!("erm_glm restart {r}"))?;
        if best.as_ref().is_none_or(|(bd, _)| run.value < bd.value) {
            best = Some((run, r));
        }
    }
    let (run, _) = best.expect("at least one restart");
    let projection_active = run.a.norm() >= b * (1.0 - 1e-12);
    Ok(FitResult {
        parameter: Member::Glm { a: run.a, link },
        empirical_risk: run.value,
        optimizer_trace: OptimizerTrace {
            iterations: run.iterations,
            final_grad_norm: run.grad_norm,
            restarts_used: restarts,
            projection_active,
        },
    })
}
