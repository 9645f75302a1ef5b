use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mpnn::ToyMpnn;
use super::ToyGraphSample;
use crate::cost::{cosine_cost, cosine_cost_backward, normalize_cost, normalize_cost_backward};
use crate::error::{Error, Result};
use crate::graph::{GraphTopology, MaskSpec};
use crate::gromov::DEFAULT_OUTER_ITERS;
use crate::gtot::{gtot_regularizer, mgwd_regularizer, symmetrize};
use crate::lse::logsumexp;
use crate::types::SolverConfig;

/// Entropic strength used by the demonstration's regularizers.
pub const DEMO_EPSILON: f64 = 0.2;
/// Central-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;
/// Solver tolerance forced during [`gradient_check`] so that re-solved
/// values are accurate well below the finite-difference resolution.
pub const GRADCHECK_TAU: f64 = 1e-12;
/// Inner iteration cap during [`gradient_check`].
pub const GRADCHECK_MAX_ITER: usize = 100_000;
/// Gradients smaller than this are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

/// Fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Index into the per-layer embeddings (0-based) read by the regularizers.
    pub layer: usize,
    pub mask: MaskSpec,
    pub normalize: bool,
    pub outer_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            beta: 0.0,
            learning_rate: 0.01,
            epochs: 100,
            seed: 7,
            solver: SolverConfig::with_epsilon(DEMO_EPSILON),
            layer: usize::MAX,
            mask: MaskSpec::Adjacency,
            normalize: true,
            outer_iters: DEFAULT_OUTER_ITERS,
        }
    }
}

impl TrainConfig {
    /// Layer index with `usize::MAX` resolved to the last layer.
    pub fn resolved_layer(&self, model: &ToyMpnn) -> Result<usize> {
        let k = model.layers();
        let layer = if self.layer == usize::MAX { k.saturating_sub(1) } else { self.layer };
        if layer >= k {
            return Err(Error::InvalidConfig(format!("layer {layer} out of range for {k} layers")));
        }
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0 && self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig("lambda and beta must be finite and nonnegative".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub mwd_value: f64,
    /// Empty when the edge-level term is disabled.
    pub mgwd_value: Option<f64>,
    pub objective: f64,
    pub weight_distance: f64,
}

/// Per-epoch diagnostics. Row `e` describes the parameters after `e`
/// gradient steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Regularizer values for one graph and their gradient with respect to the
/// target embeddings, plans held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerTerms {
    /// `⟨P, C⟩` of the node-level problem.
    pub mwd_value: f64,
    /// Entropic optimum of the node-level problem.
    pub mwd_regularized: f64,
    /// Only computed when `β > 0`.
    pub mgwd_value: Option<f64>,
    pub mgwd_regularized: f64,
    /// Gradient of `λ·mwd_regularized + β·mgwd_regularized`.
    pub grad: Array2<f64>,
}

/// Evaluates the regularizers between `xs` (frozen) and `xt`. The node-level
/// value is always reported; the edge-level problem is solved only when
/// `β > 0`.
pub fn regularizer_terms(
    topology: &GraphTopology,
    xs: ArrayView2<'_, f64>,
    xt: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<RegularizerTerms> {
    let mut grad = Array2::zeros(xt.dim());

    let node = gtot_regularizer(topology, xs, xt, &cfg.mask, &cfg.solver, cfg.normalize)?;
    if cfg.lambda > 0.0 {
        let w = topology.weight_matrix();
        let mut g = node.plan.values() * &w;
        if cfg.normalize {
            g = normalize_cost_backward(&cosine_cost(xs, xt)?, g.view())?;
        }
        let (_, dxt) = cosine_cost_backward(xs, xt, g.view())?;
        grad.scaled_add(cfg.lambda, &dxt);
    }

    let mut mgwd_value = None;
    let mut mgwd_regularized = 0.0;
    if cfg.beta > 0.0 {
        let edge = mgwd_regularizer(topology, xs, xt, &cfg.mask, &cfg.solver, cfg.outer_iters, cfg.normalize)?;
        let mut raw_x = cosine_cost(xs, xs)?;
        let mut raw_y = cosine_cost(xt, xt)?;
        symmetrize(&mut raw_x);
        symmetrize(&mut raw_y);
        let (cx, cy) = if cfg.normalize {
            (normalize_cost(&raw_x)?, normalize_cost(&raw_y)?)
        } else {
            (raw_x, raw_y.clone())
        };
        let p = edge.plan.values();
        let s = edge.plan.col_sums();
        let cross = p.t().dot(cx.values()).dot(p);
        let n = cy.dim().0;
        let mut g = Array2::from_shape_fn((n, n), |(j, l)| 2.0 * cy.values()[[j, l]] * s[j] * s[l] - 2.0 * cross[[j, l]]);
        if cfg.normalize {
            g = normalize_cost_backward(&raw_y, g.view())?;
        }
        let sym = Array2::from_shape_fn((n, n), |(j, l)| if j == l { 0.0 } else { 0.5 * (g[[j, l]] + g[[l, j]]) });
        let (da, db) = cosine_cost_backward(xt, xt, sym.view())?;
        grad.scaled_add(cfg.beta, &(da + db));
        mgwd_value = Some(edge.value);
        mgwd_regularized = edge.regularized_value;
    }

    Ok(RegularizerTerms {
        mwd_value: node.value,
        mwd_regularized: node.regularized_value,
        mgwd_value,
        mgwd_regularized,
        grad,
    })
}

/// Cross-entropy of `softmax(logits)` at `label` and its logit gradient.
pub fn cross_entropy(logits: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let lse = logsumexp(logits.iter().copied()).expect("at least one class");
    let grad = Array1::from_shape_fn(logits.len(), |c| (logits[c] - lse).exp() - if c == label { 1.0 } else { 0.0 });
    (lse - logits[label], grad)
}

/// Dataset-averaged objective and diagnostics at one parameter setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub task_loss: f64,
    pub mwd_value: f64,
    pub mgwd_value: Option<f64>,
    /// `task_loss + λ·(entropic MWD) + β·(entropic MGWD)`, the quantity
    /// gradient descent minimises.
    pub objective: f64,
    pub grad: Option<ToyMpnn>,
}

/// Evaluates the training objective of `model` against frozen source
/// embeddings (one matrix per sample, at the regularized layer).
pub fn evaluate(
    model: &ToyMpnn,
    source_embeddings: &[Array2<f64>],
    dataset: &[ToyGraphSample],
    cfg: &TrainConfig,
    with_grad: bool,
) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if source_embeddings.len() != dataset.len() {
        return Err(Error::DimensionMismatch("one source embedding per sample expected".into()));
    }
    let layer = cfg.resolved_layer(model)?;
    let scale = 1.0 / dataset.len() as f64;
    let regularize = cfg.lambda > 0.0 || cfg.beta > 0.0 || !with_grad;
    let mut out = Evaluation {
        task_loss: 0.0,
        mwd_value: 0.0,
        mgwd_value: (cfg.beta > 0.0).then_some(0.0),
        objective: 0.0,
        grad: None,
    };
    let mut grad = with_grad.then(|| ToyMpnn::zeros(model.layers(), model.width(), model.classes()));
    for (sample, xs) in dataset.iter().zip(source_embeddings) {
        let trace = model.trace(sample)?;
        let (loss, dlogits) = cross_entropy(&trace.logits, sample.label);
        out.task_loss += scale * loss;
        out.objective += scale * loss;
        let mut extra = Vec::new();
        if regularize {
            let terms = regularizer_terms(&sample.topology, xs.view(), trace.hidden[layer + 1].view(), cfg)?;
            out.mwd_value += scale * terms.mwd_value;
            if let (Some(total), Some(v)) = (out.mgwd_value.as_mut(), terms.mgwd_value) {
                *total += scale * v;
            }
            out.objective += scale * (cfg.lambda * terms.mwd_regularized + cfg.beta * terms.mgwd_regularized);
            extra.push((layer, terms.grad));
        }
        if let Some(g) = grad.as_mut() {
            g.scaled_add(scale, &model.backward(&trace, &dlogits, &extra));
        }
    }
    out.grad = grad;
    Ok(out)
}

/// Embeddings of `model` at `layer` for every sample.
pub fn layer_embeddings(model: &ToyMpnn, dataset: &[ToyGraphSample], layer: usize) -> Result<Vec<Array2<f64>>> {
    dataset.iter().map(|s| Ok(model.forward(s)?.embeddings.swap_remove(layer))).collect()
}

/// Fine-tunes a copy of `source_model` on `dataset` by full-batch gradient
/// descent on the regularized objective, with transport plans held fixed
/// when differentiating.
pub fn gtot_finetune(source_model: &ToyMpnn, dataset: &[ToyGraphSample], cfg: &TrainConfig) -> Result<(ToyMpnn, History)> {
    cfg.validate()?;
    let layer = cfg.resolved_layer(source_model)?;
    let source = layer_embeddings(source_model, dataset, layer)?;
    let mut model = source_model.clone();
    let mut history = History::default();
    for epoch in 0..=cfg.epochs {
        let last = epoch == cfg.epochs;
        let eval = evaluate(&model, &source, dataset, cfg, !last)?;
        history.records.push(EpochRecord {
            epoch,
            task_loss: eval.task_loss,
            mwd_value: eval.mwd_value,
            mgwd_value: eval.mgwd_value,
            objective: eval.objective,
            weight_distance: model.distance(source_model),
        });
        if let Some(g) = eval.grad {
            model.scaled_add(-cfg.learning_rate, &g);
        }
    }
    Ok((model, history))
}

/// Cross-entropy training from a seeded random initialisation.
pub fn pretrain(
    dataset: &[ToyGraphSample],
    layers: usize,
    classes: usize,
    seed: u64,
    epochs: usize,
    learning_rate: f64,
) -> Result<ToyMpnn> {
    let width = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?
        .node_features
        .ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ToyMpnn::random(layers, width, classes, &mut rng);
    let cfg = TrainConfig { lambda: 0.0, beta: 0.0, learning_rate, layer: 0, ..TrainConfig::default() };
    let placeholder = vec![Array2::zeros((0, 0)); dataset.len()];
    for _ in 0..epochs {
        let g = evaluate(&model, &placeholder, dataset, &cfg, true)?.grad.expect("requested");
        model.scaled_add(-learning_rate, &g);
    }
    Ok(model)
}

/// Largest relative discrepancy between the analytic gradient of the
/// single-sample objective at `model` and central differences, with
/// `source_model` providing the frozen reference embeddings. Solves are
/// repeated at every perturbed point; the solver tolerance is tightened to
/// [`GRADCHECK_TAU`].
pub fn gradient_check(model: &ToyMpnn, source_model: &ToyMpnn, sample: &ToyGraphSample, cfg: &TrainConfig) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.solver.tau = cfg.solver.tau.min(GRADCHECK_TAU);
    cfg.solver.max_iter = cfg.solver.max_iter.max(GRADCHECK_MAX_ITER);
    cfg.validate()?;
    let layer = cfg.resolved_layer(model)?;
    let dataset = std::slice::from_ref(sample);
    let source = layer_embeddings(source_model, dataset, layer)?;
    let analytic = evaluate(model, &source, dataset, &cfg, true)?.grad.expect("requested").to_flat();
    let flat = model.to_flat();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let at = |delta: f64| -> Result<f64> {
            let mut p = flat.clone();
            p[i] += delta;
            Ok(evaluate(&model.with_flat(&p)?, &source, dataset, &cfg, false)?.objective)
        };
        let numeric = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Everything needed to reproduce one demonstration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub n_graphs: usize,
    pub n_vertices: (usize, usize),
    pub width: usize,
    pub classes: usize,
    pub layers: usize,
    pub domain_shift: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub train: TrainConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_graphs: 16,
            n_vertices: (4, 8),
            width: 4,
            classes: 2,
            layers: 2,
            domain_shift: 0.5,
            pretrain_epochs: 100,
            pretrain_lr: 0.05,
            train: TrainConfig::default(),
        }
    }
}

/// Result of [`run_demo`].
#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub source_model: ToyMpnn,
    pub target_model: ToyMpnn,
    pub target_set: Vec<ToyGraphSample>,
    pub history: History,
}

/// Generates the transfer task, pretrains on the source set and fine-tunes
/// on the target set.
pub fn run_demo(cfg: &DemoConfig) -> Result<DemoOutcome> {
    let (source_set, target_set) = super::make_synthetic_transfer(
        cfg.seed,
        cfg.n_graphs,
        cfg.n_vertices,
        cfg.width,
        cfg.classes,
        cfg.domain_shift,
    )?;
    let source_model = pretrain(&source_set, cfg.layers, cfg.classes, cfg.seed, cfg.pretrain_epochs, cfg.pretrain_lr)?;
    let (target_model, history) = gtot_finetune(&source_model, &target_set, &cfg.train)?;
    Ok(DemoOutcome { source_model, target_model, target_set, history })
}

/// Small seeded instance for [`gradient_check`]: a briefly pretrained
/// source model, a randomly perturbed copy of it and the first target graph
/// that is not complete.
pub fn gradcheck_instance(cfg: &DemoConfig, seed: u64) -> Result<(ToyMpnn, ToyMpnn, ToyGraphSample)> {
    let (source_set, target_set) =
        super::make_synthetic_transfer(seed, 8, cfg.n_vertices, cfg.width, cfg.classes, cfg.domain_shift)?;
    let source = pretrain(&source_set, cfg.layers, cfg.classes, seed, 20, cfg.pretrain_lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut model = source.clone();
    model.scaled_add(0.1, &ToyMpnn::random(cfg.layers, cfg.width, cfg.classes, &mut rng));
    // on a complete graph mean aggregation makes every embedding row equal,
    // where the normalized intra-domain cost is not differentiable
    let sample = target_set
        .into_iter()
        .find(|s| 2 * s.topology.edges.len() < s.topology.n * (s.topology.n - 1))
        .ok_or_else(|| Error::InvalidInput("no incomplete graph among the drawn samples".into()))?;
    Ok((source, model, sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finetune::make_synthetic_transfer;

    fn small_task(seed: u64) -> (ToyMpnn, ToyMpnn, Vec<ToyGraphSample>) {
        let (src, tgt) = make_synthetic_transfer(seed, 4, (3, 6), 3, 2, 0.5).unwrap();
        let source = pretrain(&src, 2, 2, seed, 20, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut model = source.clone();
        model.scaled_add(0.1, &ToyMpnn::random(2, 3, 2, &mut rng));
        (source, model, tgt)
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (l, g) = cross_entropy(&Array1::zeros(4), 2);
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((g.sum()).abs() < 1e-15);
        assert!((g[2] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn gradient_check_grid() {
        let (source, model, sample) = gradcheck_instance(&DemoConfig::default(), 4).unwrap();
        for (lambda, beta) in [(0.0, 0.0), (1.0, 0.0), (0.1, 0.1), (0.0, 0.1)] {
            let cfg = TrainConfig { lambda, beta, ..TrainConfig::default() };
            let err = gradient_check(&model, &source, &sample, &cfg).unwrap();
            let limit = if lambda == 0.0 && beta == 0.0 { 1e-5 } else { 1e-3 };
            assert!(err <= limit, "lambda {lambda} beta {beta}: {err}");
        }
    }

    #[test]
    fn constant_features_give_flat_regularizer() {
        let (source, model, _) = small_task(2);
        let g = GraphTopology::path(4);
        let sample = ToyGraphSample { topology: g.clone(), node_features: Array2::from_elem((4, 3), 0.7), label: 0 };
        let xs = source.forward(&sample).unwrap().embeddings.swap_remove(1);
        let xt = model.forward(&sample).unwrap().embeddings.swap_remove(1);
        let cost = cosine_cost(xs.view(), xt.view()).unwrap();
        let c0 = cost.values()[[0, 0]];
        assert!(cost.values().iter().all(|c| (c - c0).abs() < 1e-12));
        let cfg = TrainConfig { lambda: 1.0, normalize: false, ..TrainConfig::default() };
        let terms = regularizer_terms(&g, xs.view(), xt.view(), &cfg).unwrap();
        let col = terms.grad.row(0).to_owned();
        assert!(terms.grad.rows().into_iter().all(|r| (&r - &col).iter().all(|x| x.abs() < 1e-12)));
        let same = regularizer_terms(&g, xs.view(), xs.view(), &cfg).unwrap();
        assert!(same.grad.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn first_step_decreases_objective() {
        let (source, model, tgt) = small_task(3);
        let data = &tgt[..1];
        let cfg = TrainConfig { lambda: 0.5, beta: 0.1, ..TrainConfig::default() };
        let src = layer_embeddings(&source, data, 1).unwrap();
        let e0 = evaluate(&model, &src, data, &cfg, true).unwrap();
        let g = e0.grad.clone().unwrap();
        let g2: f64 = g.to_flat().iter().map(|x| x * x).sum();
        let lr = 1e-4;
        let mut next = model.clone();
        next.scaled_add(-lr, &g);
        let e1 = evaluate(&next, &src, data, &cfg, false).unwrap();
        assert!(e1.objective < e0.objective);
        let predicted = e0.objective - lr * g2;
        assert!((e1.objective - predicted).abs() < 0.05 * lr * g2);
    }

    #[test]
    fn plain_training_reduces_task_loss() {
        let (_, tgt) = make_synthetic_transfer(5, 12, (4, 8), 3, 2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = ToyMpnn::random(2, 3, 2, &mut rng);
        let cfg = TrainConfig { lambda: 0.0, beta: 0.0, learning_rate: 0.1, epochs: 50, ..TrainConfig::default() };
        let (_, h) = gtot_finetune(&start, &tgt, &cfg).unwrap();
        assert!(h.last().unwrap().task_loss < h.first().unwrap().task_loss);
        assert_eq!(h.records.len(), 51);
        assert_eq!(h.first().unwrap().weight_distance, 0.0);
    }

    #[test]
    fn large_lambda_keeps_embeddings_pinned() {
        let (src, tgt) = make_synthetic_transfer(6, 6, (4, 6), 3, 2, 0.5).unwrap();
        let source = pretrain(&src, 2, 2, 6, 30, 0.1).unwrap();
        let cfg = TrainConfig { lambda: 1e4, learning_rate: 1e-7, epochs: 20, ..TrainConfig::default() };
        let (_, h) = gtot_finetune(&source, &tgt, &cfg).unwrap();
        let v0 = h.first().unwrap().mwd_value;
        assert!(h.records.iter().all(|r| r.mwd_value <= 2.0 * v0), "{:?}", h.records);
    }

    #[test]
    fn initial_regularizer_is_near_null() {
        let (src, tgt) = make_synthetic_transfer(8, 6, (4, 8), 3, 2, 0.5).unwrap();
        let source = pretrain(&src, 2, 2, 8, 10, 0.1).unwrap();
        let cfg = TrainConfig::default();
        for s in &tgt {
            let x = source.forward(s).unwrap().embeddings.swap_remove(1);
            let t = regularizer_terms(&s.topology, x.view(), x.view(), &cfg).unwrap();
            let n = s.topology.n as f64;
            assert!(t.mwd_value <= cfg.solver.epsilon * (1.0 + n.ln()));
        }
    }

    #[test]
    fn history_csv_is_deterministic() {
        let cfg = DemoConfig { n_graphs: 4, pretrain_epochs: 5, train: TrainConfig { epochs: 3, ..TrainConfig::default() }, ..DemoConfig::default() };
        let a = run_demo(&cfg).unwrap().history.to_csv();
        let b = run_demo(&cfg).unwrap().history.to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("epoch,task_loss,mwd_value,mgwd_value,objective,weight_distance\n"));
        assert_eq!(a.lines().count(), 5);
    }
}
