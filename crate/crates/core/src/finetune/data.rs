use std::collections::HashSet;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::ToyGraphSample;
use crate::error::{Error, Result};
use crate::graph::GraphTopology;

/// Distance scale of the class means.
pub const CLASS_SEPARATION: f64 = 0.5;
/// Per-node feature noise.
pub const FEATURE_NOISE: f64 = 1.0;
/// Probability of each non-tree edge.
pub const EXTRA_EDGE_PROB: f64 = 0.2;

/// Random connected graph: a random recursive tree plus independent extra
/// edges.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GraphTopology {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    let tree: HashSet<(usize, usize)> = edges.iter().copied().collect();
    for u in 0..n {
        for v in u + 1..n {
            if !tree.contains(&(u, v)) && rng.random_bool(EXTRA_EDGE_PROB) {
                edges.push((u, v));
            }
        }
    }
    GraphTopology::new(n, edges).expect("generated edges are valid")
}

fn gaussian_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array1<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn draw_sample<R: Rng + ?Sized>(
    means: &[Array1<f64>],
    range: (usize, usize),
    rng: &mut R,
) -> ToyGraphSample {
    let n = rng.random_range(range.0..=range.1);
    let label = rng.random_range(0..means.len());
    let topology = random_connected_graph(n, rng);
    let noise = Normal::new(0.0, FEATURE_NOISE).expect("valid std");
    let d = means[label].len();
    let node_features = Array2::from_shape_fn((n, d), |(_, j)| means[label][j])
        + Array2::from_shape_simple_fn((n, d), || noise.sample(rng));
    ToyGraphSample { topology, node_features, label }
}

/// Source and target sets of graph classification samples.
///
/// Both sets are drawn independently from the same class-conditional
/// Gaussian model; the target features are then rotated by `domain_shift`
/// radians in the plane of the first two coordinates and translated by a
/// vector of length `domain_shift` along a random unit direction.
pub fn make_synthetic_transfer(
    seed: u64,
    n_graphs: usize,
    n_vertices_range: (usize, usize),
    d: usize,
    classes: usize,
    domain_shift: f64,
) -> Result<(Vec<ToyGraphSample>, Vec<ToyGraphSample>)> {
    let (lo, hi) = n_vertices_range;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidConfig(format!("vertex range [{lo}, {hi}] is empty")));
    }
    if d == 0 || classes == 0 {
        return Err(Error::InvalidConfig("feature width and class count must be positive".into()));
    }
    if !(domain_shift.is_finite() && domain_shift >= 0.0) {
        return Err(Error::InvalidConfig(format!("domain shift {domain_shift} must be finite and nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Array1<f64>> = (0..classes).map(|_| gaussian_vec(d, &mut rng) * CLASS_SEPARATION).collect();
    let mut direction = gaussian_vec(d, &mut rng);
    let norm = direction.dot(&direction).sqrt();
    direction /= norm;
    let source = (0..n_graphs).map(|_| draw_sample(&means, (lo, hi), &mut rng)).collect();
    let mut target: Vec<ToyGraphSample> = (0..n_graphs).map(|_| draw_sample(&means, (lo, hi), &mut rng)).collect();
    if domain_shift > 0.0 {
        let rotation = rotation(d, domain_shift);
        let shift = direction * domain_shift;
        for s in &mut target {
            s.node_features = s.node_features.dot(&rotation.t()) + &shift;
        }
    }
    Ok((source, target))
}

fn rotation(d: usize, angle: f64) -> Array2<f64> {
    let mut r = Array2::eye(d);
    if d >= 2 {
        let (s, c) = angle.sin_cos();
        r[[0, 0]] = c;
        r[[0, 1]] = -s;
        r[[1, 0]] = s;
        r[[1, 1]] = c;
    }
    r
}
