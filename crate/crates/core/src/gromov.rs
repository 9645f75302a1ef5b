//! Entropic masked Gromov-Wasserstein.
//!
//! The quadratic objective `sum_ijkl L(Cx_ik, Cy_jl) P_ij P_kl` is linearised
//! around the current plan into a pseudo-cost `L ⊗ P`, which is then handed to
//! the masked Sinkhorn solver. For losses of the form
//! `L(x, y) = f1(x) + f2(y) - h1(x) h2(y)` the contraction factors into
//! matrix products, so each linearisation costs `O(n²m + nm²)` instead of
//! `O(n²m²)`.
//!
//! The problem is nonconvex. [`solve_mgwd`] returns the objective at a
//! stationary plan of the alternation, not a certified global minimum.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sinkhorn::{solve_mwd, solve_mwd_warm};
use crate::types::{
    validate_feasibility_inputs, CostMatrix, MaskMatrix, ProbVec, SolveReport, SolverConfig, TransportPlan,
};

/// Marginal residual a plan may carry before [`pseudo_cost`] rejects it.
pub const PLAN_RESIDUAL_TOL: f64 = 1e-6;
/// Slack allowed before an outer iteration counts as an ascent step.
pub const DESCENT_SLACK: f64 = 1e-8;
pub const DEFAULT_OUTER_ITERS: usize = 50;

/// Loss functions with a separable decomposition
/// `L(x, y) = f1(x) + f2(y) - h1(x) h2(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GwLossDecomposition {
    /// `(x - y)²`: `f1 = x²`, `f2 = y²`, `h1 = 2x`, `h2 = y`.
    #[default]
    SquaredLoss,
}

impl GwLossDecomposition {
    pub fn loss(self, x: f64, y: f64) -> f64 {
        match self {
            Self::SquaredLoss => (x - y) * (x - y),
        }
    }

    pub fn f1(self, x: f64) -> f64 {
        match self {
            Self::SquaredLoss => x * x,
        }
    }

    pub fn f2(self, y: f64) -> f64 {
        match self {
            Self::SquaredLoss => y * y,
        }
    }

    pub fn h1(self, x: f64) -> f64 {
        match self {
            Self::SquaredLoss => 2.0 * x,
        }
    }

    pub fn h2(self, y: f64) -> f64 {
        match self {
            Self::SquaredLoss => y,
        }
    }

    /// `∂L/∂x`.
    pub fn dloss_dx(self, x: f64, y: f64) -> f64 {
        match self {
            Self::SquaredLoss => 2.0 * (x - y),
        }
    }

    /// `∂L/∂y`.
    pub fn dloss_dy(self, x: f64, y: f64) -> f64 {
        match self {
            Self::SquaredLoss => 2.0 * (y - x),
        }
    }
}

/// Output of a masked Gromov-Wasserstein solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MgwdSolution {
    pub plan: TransportPlan,
    /// Quadratic objective at `plan`, entropy excluded.
    pub distance: f64,
    /// `distance - 2ε H(P)`: the value whose partial derivatives in the
    /// intra-domain costs are exact at a fixed point of the alternation.
    pub regularized_value: f64,
    pub epsilon: f64,
    pub report: SolveReport,
    pub outer_iterations: usize,
    /// Quadratic-plus-entropy objective after each outer step, starting
    /// with the initial plan.
    pub objective_trace: Vec<f64>,
    /// `false` if any outer step increased the traced objective by more than
    /// [`DESCENT_SLACK`]. Diagnostic only.
    pub monotone_descent: bool,
}

/// `f1(Cx) r 1ᵀ + 1 sᵀ f2(Cy)ᵀ - h1(Cx) P h2(Cy)ᵀ` for arbitrary row/column
/// weights `r`, `s`.
fn factored(cx: &Array2<f64>, cy: &Array2<f64>, p: &Array2<f64>, r: &Array1<f64>, s: &Array1<f64>, loss: GwLossDecomposition) -> Array2<f64> {
    let f1 = cx.mapv(|x| loss.f1(x)).dot(r);
    let f2 = cy.mapv(|y| loss.f2(y)).dot(s);
    let cross = cx.mapv(|x| loss.h1(x)).dot(p).dot(&cy.mapv(|y| loss.h2(y)).t());
    let (n, m) = p.dim();
    Array2::from_shape_fn((n, m), |(i, j)| f1[i] + f2[j] - cross[[i, j]])
}

/// `L(Cx, Cy) ⊗ P` for any nonnegative `P`, using the plan's own marginals.
fn contract(cx: &Array2<f64>, cy: &Array2<f64>, p: &Array2<f64>, loss: GwLossDecomposition) -> Array2<f64> {
    let r: Array1<f64> = p.rows().into_iter().map(|row| row.sum()).collect();
    let s: Array1<f64> = p.columns().into_iter().map(|col| col.sum()).collect();
    factored(cx, cy, p, &r, &s, loss)
}

fn check_intra(cx: &CostMatrix, cy: &CostMatrix, mask: &MaskMatrix) -> Result<()> {
    let (n, m) = mask.dim();
    if cx.dim() != (n, n) || cy.dim() != (m, m) {
        return Err(Error::ShapeMismatch(format!(
            "intra-domain costs {:?} and {:?} do not fit a {n}x{m} plan",
            cx.dim(),
            cy.dim()
        )));
    }
    Ok(())
}

/// Pseudo-cost `L(Cx, Cy) ⊗ (M∘P)` via the factored form
/// `f1(Cx) a 1ᵀ + 1 bᵀ f2(Cy)ᵀ - h1(Cx) (M∘P) h2(Cy)ᵀ`.
///
/// The factorisation only holds when `P` has marginals `a` and `b`, so plans
/// off by more than [`PLAN_RESIDUAL_TOL`] are rejected.
pub fn pseudo_cost(
    cx: &CostMatrix,
    cy: &CostMatrix,
    plan: &TransportPlan,
    a: &ProbVec,
    b: &ProbVec,
    loss: GwLossDecomposition,
) -> Result<CostMatrix> {
    check_intra(cx, cy, plan.mask())?;
    validate_feasibility_inputs(plan.mask(), a, b)?;
    let (r, c) = plan.marginal_residuals(a, b);
    if r.max(c) > PLAN_RESIDUAL_TOL {
        return Err(Error::InfeasiblePlan(r.max(c)));
    }
    CostMatrix::new(factored(
        cx.values(),
        cy.values(),
        plan.values(),
        &a.view().to_owned(),
        &b.view().to_owned(),
        loss,
    ))
}

/// Quadratic objective `sum_ijkl L(Cx_ik, Cy_jl) P_ij P_kl` in factored form.
pub fn gw_objective(cx: &CostMatrix, cy: &CostMatrix, plan: &TransportPlan, loss: GwLossDecomposition) -> Result<f64> {
    check_intra(cx, cy, plan.mask())?;
    let p = plan.values();
    let pseudo = contract(cx.values(), cy.values(), p, loss);
    Ok(pseudo.iter().zip(p.iter()).map(|(c, p)| c * p).sum())
}

/// Entropic masked Gromov-Wasserstein by alternating linearisation and
/// masked Sinkhorn projection.
///
/// The initial plan is the masked Sinkhorn solution for a zero cost. Each
/// outer step solves the inner problem to convergence (per `cfg`) on the
/// pseudo-cost of the current plan, stopping after `outer_iters` steps or when
/// the plan moves by less than `cfg.tau` in L1.
#[allow(clippy::too_many_arguments)]
pub fn solve_mgwd(
    cx: &CostMatrix,
    cy: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    cfg: &SolverConfig,
    outer_iters: usize,
    loss: GwLossDecomposition,
) -> Result<MgwdSolution> {
    cfg.validate()?;
    validate_feasibility_inputs(mask, a, b)?;
    check_intra(cx, cy, mask)?;
    if !cx.is_symmetric(1e-12) || !cy.is_symmetric(1e-12) {
        return Err(Error::InvalidInput("intra-domain costs must be symmetric".into()));
    }
    let (n, m) = mask.dim();
    let eps = cfg.epsilon;
    let inner_cfg = SolverConfig { record_dual_trace: false, ..*cfg };

    let init = solve_mwd(&CostMatrix::zeros(n, m), mask, a, b, &inner_cfg)?;
    let mut plan = init.plan;
    let mut potentials = init.potentials;
    let mut inner_iterations = init.report.iterations;
    let mut inner_converged = init.report.converged;

    let objective = |p: &TransportPlan| -> f64 {
        let pseudo = contract(cx.values(), cy.values(), p.values(), loss);
        let quad: f64 = pseudo.iter().zip(p.values().iter()).map(|(c, p)| c * p).sum();
        quad - eps * p.entropy()
    };
    let mut trace = vec![objective(&plan)];
    let mut outer = 0;
    let mut converged = false;
    while outer < outer_iters {
        let pseudo = CostMatrix::new(contract(cx.values(), cy.values(), plan.values(), loss))?;
        let next = solve_mwd_warm(&pseudo, mask, a, b, &inner_cfg, &potentials)?;
        potentials = next.potentials;
        inner_iterations += next.report.iterations;
        inner_converged = next.report.converged;
        let change: f64 =
            next.plan.values().iter().zip(plan.values().iter()).map(|(p, q)| (p - q).abs()).sum();
        plan = next.plan;
        outer += 1;
        trace.push(objective(&plan));
        if change < cfg.tau {
            converged = true;
            break;
        }
    }

    let monotone_descent = trace.windows(2).all(|w| w[1] <= w[0] + DESCENT_SLACK);
    let distance = gw_objective(cx, cy, &plan, loss)?;
    let (r, c) = plan.marginal_residuals(a, b);
    let report = SolveReport {
        iterations: inner_iterations,
        converged: converged && inner_converged,
        marginal_residual_row: r,
        marginal_residual_col: c,
        dual_trace: None,
    };
    let regularized_value = distance - 2.0 * eps * plan.entropy();
    Ok(MgwdSolution {
        plan,
        distance,
        regularized_value,
        epsilon: eps,
        report,
        outer_iterations: outer,
        objective_trace: trace,
        monotone_descent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn squared_loss_decomposes() {
        let l = GwLossDecomposition::SquaredLoss;
        for &(x, y) in &[(0.0, 0.0), (1.5, -0.3), (-2.0, 4.0), (0.25, 0.75)] {
            let lhs = l.loss(x, y);
            let rhs = l.f1(x) + l.f2(y) - l.h1(x) * l.h2(y);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_plans_off_the_marginals() {
        let cx = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let zero = TransportPlan::new(Array2::zeros((2, 2)), MaskMatrix::ones(2, 2)).unwrap();
        let half = ProbVec::uniform(2);
        let err = pseudo_cost(&cx, &cx, &zero, &half, &half, GwLossDecomposition::SquaredLoss).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlan(r) if (r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_costs_give_zero_pseudo_cost() {
        let plan = TransportPlan::new(array![[0.3, 0.2], [0.0, 0.5]], MaskMatrix::ones(2, 2)).unwrap();
        let a = ProbVec::new(vec![0.5, 0.5]).unwrap();
        let b = ProbVec::new(vec![0.3, 0.7]).unwrap();
        let z = CostMatrix::zeros(2, 2);
        let c = pseudo_cost(&z, &z, &plan, &a, &b, GwLossDecomposition::SquaredLoss).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_geometries_have_near_zero_distance() {
        let c = CostMatrix::new(array![[0.0, 0.4, 1.0], [0.4, 0.0, 0.7], [1.0, 0.7, 0.0]]).unwrap();
        let u = ProbVec::uniform(3);
        for eps in [0.1, 0.01] {
            let cfg = SolverConfig::with_epsilon(eps);
            let sol = solve_mgwd(&c, &c, &MaskMatrix::ones(3, 3), &u, &u, &cfg, 50, Default::default()).unwrap();
            assert!(sol.distance <= 5.0 * eps * 3f64.ln(), "eps {eps}: {}", sol.distance);
        }
    }

    #[test]
    fn rejects_asymmetric_costs() {
        let cx = CostMatrix::new(array![[0.0, 1.0], [0.5, 0.0]]).unwrap();
        let u = ProbVec::uniform(2);
        let r = solve_mgwd(&cx, &cx, &MaskMatrix::ones(2, 2), &u, &u, &SolverConfig::default(), 5, Default::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
