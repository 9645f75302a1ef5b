//! Entropic masked optimal transport.
//!
//! Two solvers share one contract:
//!
//! * [`solve_mwd`] runs block-coordinate ascent on the dual potentials
//!   `(f, g)` in the log domain. Each half-step is a masked log-sum-exp over
//!   the unmasked entries of a row (or column), so masked positions never
//!   enter an `exp` and no `-inf` sentinel is ever subtracted from another.
//! * [`solve_mwd_vanilla`] runs the multiplicative scaling iterations
//!   `u = a / (M∘K) v`, `v = b / (M∘K)ᵀ u` and exists to cross-check the
//!   log-domain path when `K = exp(-C/ε)` does not underflow.
//!
//! Both recover `P_ij = M_ij exp((f_i + g_j - C_ij) / ε)`, so the returned plan
//! is bitwise zero wherever the mask is zero.
//!
//! Marginal entries equal to zero pin the matching potential to `-inf`
//! (`u_i = 0`); those rows/columns are dropped from every sum. A row with
//! positive mass whose unmasked columns all carry zero mass cannot be served
//! and is reported as [`Error::Infeasible`] up front. A solve that runs out
//! of iterations is checked with an exact max-flow test, so
//! [`Error::Infeasible`] always certifies an empty masked polytope while slow
//! but feasible problems come back with `converged = false`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::lse::logsumexp;
use crate::feasibility::{transport_deficit, INFEASIBLE_DEFICIT};
use crate::types::{
    validate_feasibility_inputs, CostMatrix, MaskMatrix, ProbVec, SolveReport,
    SolverConfig, TransportPlan,
};

/// Log-domain dual variables; `u = exp(f/ε)`, `v = exp(g/ε)`.
///
/// Entries paired with a zero marginal are `-inf`; all others are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

/// Output of a masked Wasserstein solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MwdSolution {
    pub plan: TransportPlan,
    /// `<P, C>`, entropy excluded.
    pub distance: f64,
    /// `<P, C> - ε H(P)`: the entropic optimum, whose gradient in `C` is `P`.
    pub regularized_value: f64,
    pub potentials: DualPotentials,
    pub epsilon: f64,
    pub report: SolveReport,
}

/// Unmasked entries of one row or column with a positive counterpart mass,
/// paired with `C / ε`.
type Support = Vec<Vec<(usize, f64)>>;

struct Prepared {
    row_terms: Support,
    col_terms: Support,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
}

fn prepare(cost: &CostMatrix, mask: &MaskMatrix, a: &ProbVec, b: &ProbVec, eps: f64) -> Result<Prepared> {
    validate_feasibility_inputs(mask, a, b)?;
    if cost.dim() != mask.dim() {
        return Err(Error::ShapeMismatch(format!(
            "cost is {:?} but mask is {:?}",
            cost.dim(),
            mask.dim()
        )));
    }
    let (n, m) = mask.dim();
    let c = cost.values();
    let (av, bv) = (a.as_slice(), b.as_slice());

    let mut row_terms = Vec::with_capacity(n);
    for (i, &ai) in av.iter().enumerate() {
        let terms: Vec<_> = if ai > 0.0 {
            mask.row_support(i).iter().filter(|&&j| bv[j] > 0.0).map(|&j| (j, c[[i, j]] / eps)).collect()
        } else {
            Vec::new()
        };
        if ai > 0.0 && terms.is_empty() {
            return Err(Error::Infeasible(format!(
                "row {i} carries mass {ai} but every unmasked column has zero mass"
            )));
        }
        row_terms.push(terms);
    }
    let mut col_terms = Vec::with_capacity(m);
    for (j, &bj) in bv.iter().enumerate() {
        let terms: Vec<_> = if bj > 0.0 {
            mask.col_support(j).iter().filter(|&&i| av[i] > 0.0).map(|&i| (i, c[[i, j]] / eps)).collect()
        } else {
            Vec::new()
        };
        if bj > 0.0 && terms.is_empty() {
            return Err(Error::Infeasible(format!(
                "column {j} demands mass {bj} but every unmasked row has zero mass"
            )));
        }
        col_terms.push(terms);
    }
    let ln = |x: &f64| if *x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
    Ok(Prepared {
        row_terms,
        col_terms,
        log_a: av.iter().map(ln).collect(),
        log_b: bv.iter().map(ln).collect(),
    })
}

/// One half-step: `out_i = log(mass_i) - LSE_j (other_j - C_ij/ε)`.
fn half_step(terms: &Support, log_mass: &[f64], other: &[f64], out: &mut [f64]) {
    for ((o, t), &lm) in out.iter_mut().zip(terms).zip(log_mass) {
        *o = if t.is_empty() {
            f64::NEG_INFINITY
        } else {
            let lse = logsumexp(t.iter().map(|&(k, c)| other[k] - c)).expect("non-empty support");
            lm - lse
        };
    }
}

/// Plan from scaled potentials `phi = f/ε`, `psi = g/ε`.
fn recover_plan(cost: &CostMatrix, mask: &MaskMatrix, eps: f64, phi: &[f64], psi: &[f64]) -> Array2<f64> {
    let (n, m) = mask.dim();
    let c = cost.values();
    let mut p = Array2::zeros((n, m));
    for i in 0..n {
        if phi[i] == f64::NEG_INFINITY {
            continue;
        }
        for &j in mask.row_support(i) {
            if psi[j] != f64::NEG_INFINITY {
                p[[i, j]] = (phi[i] + psi[j] - c[[i, j]] / eps).exp();
            }
        }
    }
    p
}

fn scaled_dual(prep: &Prepared, a: &[f64], b: &[f64], phi: &[f64], psi: &[f64]) -> f64 {
    let linear: f64 = a.iter().zip(phi).filter(|(&w, _)| w > 0.0).map(|(w, p)| w * p).sum::<f64>()
        + b.iter().zip(psi).filter(|(&w, _)| w > 0.0).map(|(w, p)| w * p).sum::<f64>();
    let kernel = logsumexp(
        prep.row_terms
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.iter().map(move |&(j, c)| phi[i] + psi[j] - c)),
    )
    .map_or(0.0, f64::exp);
    linear - kernel
}

/// Dual objective `<f, a> + <g, b> - ε <exp(f/ε), (M∘K) exp(g/ε)>`.
///
/// The kernel term is accumulated as one log-sum-exp over unmasked entries.
/// Terms with a zero marginal weight are skipped, so `-inf` potentials paired
/// with zero mass contribute nothing.
pub fn dual_objective(
    f: ArrayView1<'_, f64>,
    g: ArrayView1<'_, f64>,
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    epsilon: f64,
) -> Result<f64> {
    let (n, m) = mask.dim();
    if cost.dim() != (n, m) || f.len() != n || g.len() != m || a.len() != n || b.len() != m {
        return Err(Error::ShapeMismatch("dual objective operands".into()));
    }
    let linear = |w: &[f64], p: ArrayView1<'_, f64>| -> f64 {
        w.iter().zip(p.iter()).filter(|(&w, _)| w > 0.0).map(|(w, p)| w * p).sum()
    };
    let c = cost.values();
    let lse = logsumexp((0..n).flat_map(|i| {
        mask.row_support(i)
            .iter()
            .filter(move |&&j| f[i] != f64::NEG_INFINITY && g[j] != f64::NEG_INFINITY)
            .map(move |&j| (f[i] + g[j] - c[[i, j]]) / epsilon)
    }));
    let kernel = lse.map_or(0.0, f64::exp);
    Ok(linear(a.as_slice(), f) + linear(b.as_slice(), g) - epsilon * kernel)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    eps: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    mut report: SolveReport,
) -> Result<MwdSolution> {
    let p = recover_plan(cost, mask, eps, &phi, &psi);
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("transport plan"));
    }
    let plan = TransportPlan::new(p, mask.clone())?;
    let (r, c) = plan.marginal_residuals(a, b);
    report.marginal_residual_row = r;
    report.marginal_residual_col = c;
    let distance = plan.cost(cost);
    let regularized_value = distance - eps * plan.entropy();
    let scale = |v: Vec<f64>| Array1::from(v).mapv(|x| x * eps);
    Ok(MwdSolution {
        plan,
        distance,
        regularized_value,
        potentials: DualPotentials { f: scale(phi), g: scale(psi) },
        epsilon: eps,
        report,
    })
}

/// Called when a solve stops without converging: separates slow problems
/// from ones whose masked polytope is empty.
fn certify_feasible(mask: &MaskMatrix, a: &ProbVec, b: &ProbVec, iterations: usize) -> Result<()> {
    let deficit = transport_deficit(mask, a, b);
    if deficit > INFEASIBLE_DEFICIT {
        return Err(Error::Infeasible(format!(
            "no plan on the mask meets the marginals: {deficit:e} of the mass cannot be routed (stopped after {iterations} iterations)"
        )));
    }
    Ok(())
}

/// Log-domain masked Sinkhorn.
///
/// Starts from `f = g = 0` and alternates the `f` then `g` updates until
/// `‖f_prev - f‖₁ < ε τ` or `max_iter` iterations have run.
pub fn solve_mwd(
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    cfg: &SolverConfig,
) -> Result<MwdSolution> {
    run(cost, mask, a, b, cfg, None)
}

/// [`solve_mwd`] starting from the column potential `init.g` instead of
/// zero. Entries that are not finite are restarted at zero.
pub fn solve_mwd_warm(
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    cfg: &SolverConfig,
    init: &DualPotentials,
) -> Result<MwdSolution> {
    if init.g.len() != mask.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "warm start has {} column potentials for {} columns",
            init.g.len(),
            mask.ncols()
        )));
    }
    run(cost, mask, a, b, cfg, Some(init))
}

fn run(
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    cfg: &SolverConfig,
    init: Option<&DualPotentials>,
) -> Result<MwdSolution> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let prep = prepare(cost, mask, a, b, eps)?;
    let (n, m) = mask.dim();
    let (av, bv) = (a.as_slice(), b.as_slice());

    let mut phi = vec![0.0; n];
    let mut psi = match init {
        Some(p) => p.g.iter().map(|&g| if g.is_finite() { g / eps } else { 0.0 }).collect(),
        None => vec![0.0; m],
    };
    // zero-mass entries sit at -inf from the start
    for (p, &w) in phi.iter_mut().zip(av) {
        if w == 0.0 {
            *p = f64::NEG_INFINITY;
        }
    }
    for (p, &w) in psi.iter_mut().zip(bv) {
        if w == 0.0 {
            *p = f64::NEG_INFINITY;
        }
    }
    let mut prev = phi.clone();
    let mut trace = cfg.record_dual_trace.then(|| vec![eps * scaled_dual(&prep, av, bv, &phi, &psi)]);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        prev.copy_from_slice(&phi);
        half_step(&prep.row_terms, &prep.log_a, &psi, &mut phi);
        half_step(&prep.col_terms, &prep.log_b, &phi, &mut psi);
        iterations += 1;

        if phi.iter().chain(&psi).any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::NonFinite("dual potentials"));
        }
        if let Some(t) = trace.as_mut() {
            t.push(eps * scaled_dual(&prep, av, bv, &phi, &psi));
        }
        let change: f64 = phi
            .iter()
            .zip(&prev)
            .filter(|(x, _)| x.is_finite())
            .map(|(x, y)| (x - y).abs())
            .sum();
        if change < cfg.tau {
            converged = true;
            break;
        }
    }

    if !converged {
        certify_feasible(mask, a, b, iterations)?;
    }
    let report = SolveReport { iterations, converged, dual_trace: trace, ..Default::default() };
    finish(cost, mask, a, b, eps, phi, psi, report)
}

/// Multiplicative masked Sinkhorn scaling, `v` initialised to ones.
///
/// Stops when `‖u_prev - u‖₁ < τ`. Fails with
/// [`Error::NumericalUnderflow`] as soon as a needed denominator vanishes.
pub fn solve_mwd_vanilla(
    cost: &CostMatrix,
    mask: &MaskMatrix,
    a: &ProbVec,
    b: &ProbVec,
    cfg: &SolverConfig,
) -> Result<MwdSolution> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let prep = prepare(cost, mask, a, b, eps)?;
    let n = mask.nrows();
    let (av, bv) = (a.as_slice(), b.as_slice());
    let row_k: Vec<Vec<(usize, f64)>> =
        prep.row_terms.iter().map(|t| t.iter().map(|&(j, c)| (j, (-c).exp())).collect()).collect();
    let col_k: Vec<Vec<(usize, f64)>> =
        prep.col_terms.iter().map(|t| t.iter().map(|&(i, c)| (i, (-c).exp())).collect()).collect();

    let mut u = vec![0.0; n];
    let mut v: Vec<f64> = bv.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut prev = u.clone();
    let logs = |u: &[f64], v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let ln = |x: &f64| if *x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
        (u.iter().map(ln).collect(), v.iter().map(ln).collect())
    };
    let mut trace = cfg.record_dual_trace.then(Vec::new);

    let scale = |k: &[Vec<(usize, f64)>], mass: &[f64], other: &[f64], out: &mut [f64], axis: &str| {
        for (idx, ((o, t), &w)) in out.iter_mut().zip(k).zip(mass).enumerate() {
            if w == 0.0 {
                *o = 0.0;
                continue;
            }
            let denom: f64 = t.iter().map(|&(j, kij)| kij * other[j]).sum();
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::NumericalUnderflow(format!(
                    "masked kernel product vanished for {axis} {idx}; use the log-domain solver"
                )));
            }
            *o = w / denom;
        }
        Ok(())
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        prev.copy_from_slice(&u);
        let step = scale(&row_k, av, &v, &mut u, "row").and_then(|_| scale(&col_k, bv, &u, &mut v, "column"));
        if let Err(e) = step {
            certify_feasible(mask, a, b, iterations)?;
            return Err(e);
        }
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            let (phi, psi) = logs(&u, &v);
            t.push(eps * scaled_dual(&prep, av, bv, &phi, &psi));
        }
        let change: f64 = u.iter().zip(&prev).map(|(x, y)| (x - y).abs()).sum();
        if change < cfg.tau {
            converged = true;
            break;
        }
    }
    let (phi, psi) = logs(&u, &v);
    if !converged {
        certify_feasible(mask, a, b, iterations)?;
    }
    let report = SolveReport { iterations, converged, dual_trace: trace, ..Default::default() };
    finish(cost, mask, a, b, eps, phi, psi, report)
}

/// Gradient of the entropic optimum with respect to the cost: the plan itself.
pub fn mwd_gradient_wrt_cost(solution: &MwdSolution) -> Result<Array2<f64>> {
    if !solution.report.converged {
        return Err(Error::NotConverged);
    }
    Ok(solution.plan.values().clone())
}

/// `<P, C>` recomputed from a plan view, used by callers that keep raw arrays.
pub fn plan_cost(plan: ArrayView2<'_, f64>, cost: ArrayView2<'_, f64>) -> f64 {
    plan.iter().zip(cost.iter()).map(|(p, c)| p * c).sum()
}
