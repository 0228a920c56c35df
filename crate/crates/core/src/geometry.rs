//! Wormhole geometry: metrics, mollifiers, vicinity functions, vector
//! fields, and the networks connecting known modes.
//!
//! A wormhole is a tube around the straight segment between two modes. Inside
//! the tube the metric contracts distances along the segment direction by
//! `√ε`, and an external vector field pushes trajectories along it. Two
//! network constructions are provided: a minimum spanning tree over the modes
//! in the original space, and a bipartite "mirror world" network through an
//! auxiliary dimension at `±h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::is_spd;
use crate::targets::GaussianMixtureTarget;

/// A mode of the target: location, observed Fisher information (Hessian of
/// `-log π` at the mode), and a relative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub location: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub weight: f64,
}

impl Mode {
    pub fn new(location: DVector<f64>, hessian: DMatrix<f64>, weight: f64) -> Result<Self> {
        if hessian.nrows() != location.len() || hessian.ncols() != location.len() {
            return Err(Error::DimensionMismatch {
                expected: location.len(),
                got: hessian.nrows(),
            });
        }
        if !is_spd(&hessian) {
            return Err(Error::NotPositiveDefinite {
                context: "mode hessian",
            });
        }
        if weight < 0.0 {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: "must be nonnegative".into(),
            });
        }
        Ok(Self {
            location,
            hessian,
            weight,
        })
    }
}

/// Immutable collection of known modes plus how often each has been visited.
///
/// Adaptation steps build a new library rather than mutating a shared one
/// mid-chain; visit counters are owned by a single chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeLibrary {
    modes: Vec<Mode>,
    visit_counts: Vec<u64>,
}

impl ModeLibrary {
    pub fn new(modes: Vec<Mode>) -> Self {
        let visit_counts = vec![0; modes.len()];
        Self {
            modes,
            visit_counts,
        }
    }

    /// Library with the mixture's own components as modes: the Hessian of
    /// `-log π` at a well-separated component mean is that component's
    /// precision matrix.
    pub fn from_gmm(target: &GaussianMixtureTarget) -> Self {
        let modes = (0..target.n_components())
            .map(|k| Mode {
                location: target.means()[k].clone(),
                hessian: target.precisions()[k].clone(),
                weight: target.weights()[k],
            })
            .collect();
        Self::new(modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    pub fn record_visit(&mut self, index: usize) {
        self.visit_counts[index] += 1;
    }

    /// Index of the Euclidean-nearest mode; ties break to the lower index.
    pub fn nearest_mode(&self, x: &DVector<f64>) -> Result<usize> {
        if self.modes.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in self.modes.iter().enumerate() {
            let d = (x - &m.location).norm();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        Ok(best)
    }

    /// Average pairwise distance between mode locations (0 for < 2 modes).
    pub fn average_pairwise_distance(&self) -> f64 {
        let k = self.modes.len();
        if k < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..k {
            for j in (i + 1)..k {
                total += (&self.modes[i].location - &self.modes[j].location).norm();
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: LibraryFile = serde_json::from_str(&text)?;
        file.into_library()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LibraryFile::from(self))?)
    }
}

/// On-disk mode library; Hessians flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibraryFile {
    pub modes: Vec<ModeFile>,
    pub visit_counts: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeFile {
    pub location: Vec<f64>,
    pub hessian: Vec<f64>,
    pub weight: f64,
}

impl From<&ModeLibrary> for LibraryFile {
    fn from(lib: &ModeLibrary) -> Self {
        LibraryFile {
            modes: lib
                .modes
                .iter()
                .map(|m| ModeFile {
                    location: m.location.as_slice().to_vec(),
                    hessian: m.hessian.transpose().as_slice().to_vec(),
                    weight: m.weight,
                })
                .collect(),
            visit_counts: lib.visit_counts.clone(),
        }
    }
}

impl LibraryFile {
    pub fn into_library(self) -> Result<ModeLibrary> {
        let mut modes = Vec::with_capacity(self.modes.len());
        for m in self.modes {
            let d = m.location.len();
            if m.hessian.len() != d * d {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    got: m.hessian.len(),
                });
            }
            modes.push(Mode::new(
                DVector::from_vec(m.location),
                DMatrix::from_row_slice(d, d, &m.hessian),
                m.weight,
            )?);
        }
        let mut lib = ModeLibrary::new(modes);
        if self.visit_counts.len() == lib.modes.len() {
            lib.visit_counts = self.visit_counts;
        }
        Ok(lib)
    }
}

/// Straight tube between two endpoints, with its unit direction and length.
#[derive(Debug, Clone, PartialEq)]
pub struct Wormhole {
    endpoint_a: DVector<f64>,
    endpoint_b: DVector<f64>,
    direction: DVector<f64>,
    length: f64,
}

impl Wormhole {
    pub fn new(endpoint_a: DVector<f64>, endpoint_b: DVector<f64>) -> Result<Self> {
        let v = &endpoint_b - &endpoint_a;
        let length = v.norm();
        if length <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "endpoints",
                reason: "wormhole endpoints must differ".into(),
            });
        }
        Ok(Self {
            endpoint_a,
            endpoint_b,
            direction: v / length,
            length,
        })
    }

    pub fn endpoint_a(&self) -> &DVector<f64> {
        &self.endpoint_a
    }

    pub fn endpoint_b(&self) -> &DVector<f64> {
        &self.endpoint_b
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

/// Wormhole metric `G_W = I − (1−ε) v*v*ᵀ`: eigenvalue ε along the tube
/// direction, 1 on its orthogonal complement, so a straight traversal of the
/// tube has length `√ε · ‖v_W‖`.
pub fn wormhole_metric(direction: &DVector<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if (direction.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "direction",
            reason: "must be a unit vector".into(),
        });
    }
    if epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: "must lie in (0, 1)".into(),
        });
    }
    let d = direction.len();
    Ok(DMatrix::identity(d, d) - direction * direction.transpose() * (1.0 - epsilon))
}

/// Excess-distance mollifier
/// `exp{−(‖θ−a‖ + ‖θ−b‖ − ‖a−b‖)/F}`; equals 1 exactly on the segment.
pub fn segment_mollifier(
    x: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    influence: f64,
) -> f64 {
    let excess = (x - a).norm() + (x - b).norm() - (a - b).norm();
    (-excess.max(0.0) / influence).exp()
}

/// Vicinity function
/// `V(θ) = ⟨θ−a, θ−b⟩ + |⟨θ−a, v*⟩|·|⟨θ−b, v*⟩|`:
/// nonnegative, and zero exactly on the closed segment `[a, b]`.
pub fn vicinity(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let da = x - a;
    let db = x - b;
    let v = b - a;
    let dir = &v / v.norm();
    da.dot(&db) + da.dot(&dir).abs() * db.dot(&dir).abs()
}

/// One-sided gradient of [`vicinity`] with the `sign(0) = 0` convention at
/// the kinks of the absolute values.
pub fn vicinity_gradient(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let da = x - a;
    let db = x - b;
    let v = b - a;
    let dir = &v / v.norm();
    let pa = da.dot(&dir);
    let pb = db.dot(&dir);
    let sgn = |t: f64| {
        if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    &da + &db + &dir * (sgn(pa) * pb.abs() + pa.abs() * sgn(pb))
}

/// `exp{−V(θ)/(D·F)}` with `V` from [`vicinity`].
pub fn vicinity_mollifier(
    x: &DVector<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    dim: usize,
    influence: f64,
) -> f64 {
    (-vicinity(x, a, b) / (dim as f64 * influence)).exp()
}

/// Vector field of a single wormhole:
/// `f(θ, v) = m(θ) ⟨v, v*⟩ v*` with the vicinity mollifier `m`.
pub fn vector_field(
    x: &DVector<f64>,
    v: &DVector<f64>,
    wormhole: &Wormhole,
    dim: usize,
    influence: f64,
) -> DVector<f64> {
    let m = vicinity_mollifier(x, &wormhole.endpoint_a, &wormhole.endpoint_b, dim, influence);
    let proj = v.dot(&wormhole.direction);
    &wormhole.direction * (m * proj)
}

/// Position Jacobian of [`vector_field`]:
/// `∇_θ f = ⟨v, v*⟩ · v* ∇m(θ)ᵀ`, a rank-one matrix.
pub fn vector_field_jacobian(
    x: &DVector<f64>,
    v: &DVector<f64>,
    wormhole: &Wormhole,
    dim: usize,
    influence: f64,
) -> DMatrix<f64> {
    let df = dim as f64 * influence;
    let m = vicinity_mollifier(x, &wormhole.endpoint_a, &wormhole.endpoint_b, dim, influence);
    let grad_m = vicinity_gradient(x, &wormhole.endpoint_a, &wormhole.endpoint_b) * (-m / df);
    let proj = v.dot(&wormhole.direction);
    &wormhole.direction * grad_m.transpose() * proj
}

/// Minimum spanning tree over mode locations (Kruskal). Edges are sorted by
/// `(length, i, j)` so ties break deterministically by lexicographic index
/// pair. Returns `K−1` index pairs with `i < j`.
pub fn mst_edges(locations: &[DVector<f64>]) -> Vec<(usize, usize)> {
    let k = locations.len();
    if k < 2 {
        return Vec::new();
    }
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            all.push(((&locations[i] - &locations[j]).norm(), i, j));
        }
    }
    all.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let mut edges = Vec::with_capacity(k - 1);
    for (_, i, j) in all {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            edges.push((i, j));
            if edges.len() == k - 1 {
                break;
            }
        }
    }
    edges
}

/// Mirror-world network at the sampler's current position.
///
/// The augmented position carries a world coordinate in its last component;
/// its sign selects the current world at `±h`. The nearest mode (in the
/// original coordinates) anchors one end, and a wormhole runs from
/// `(θ̂₀, ±h)` to every `(θ̂ₖ, ∓h)` — including the nearest mode's own mirror
/// image. Returns the nearest-mode index and the `K` wormholes.
pub fn mirror_wormholes(
    position_aug: &DVector<f64>,
    library: &ModeLibrary,
    world_offset: f64,
) -> Result<(usize, Vec<Wormhole>)> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let d = position_aug.len() - 1;
    let x = DVector::from_fn(d, |i, _| position_aug[i]);
    let nearest = library.nearest_mode(&x)?;
    let world = if position_aug[d] >= 0.0 {
        world_offset
    } else {
        -world_offset
    };
    let lift =
        |loc: &DVector<f64>, w: f64| DVector::from_fn(d + 1, |i, _| if i < d { loc[i] } else { w });
    let origin = lift(&library.modes()[nearest].location, world);
    let edges = library
        .modes()
        .iter()
        .map(|m| Wormhole::new(origin.clone(), lift(&m.location, -world)))
        .collect::<Result<Vec<_>>>()?;
    Ok((nearest, edges))
}

/// Arclength of a piecewise-linear curve under a position-dependent metric,
/// by the composite midpoint rule: each consecutive pair contributes
/// `√(ΔᵀG(mid)Δ)`.
pub fn numeric_arclength<G: Fn(&DVector<f64>) -> DMatrix<f64>>(
    points: &[DVector<f64>],
    metric: G,
) -> f64 {
    assert!(points.len() >= 2, "arclength needs at least two points");
    let mut total = 0.0;
    for w in points.windows(2) {
        let delta = &w[1] - &w[0];
        let mid = (&w[0] + &w[1]) * 0.5;
        let g = metric(&mid);
        total += (&g * &delta).dot(&delta).max(0.0).sqrt();
    }
    total
}

/// A static wormhole network over a mode library, with the metric and field
/// parameters attached.
#[derive(Debug, Clone)]
pub struct WormholeNetwork {
    modes: ModeLibrary,
    edges: Vec<Wormhole>,
    world_offset: f64,
    metric_epsilon: f64,
    influence_factor: f64,
}

impl WormholeNetwork {
    /// Network whose edges form the minimum spanning tree of the library.
    pub fn mst(
        library: ModeLibrary,
        metric_epsilon: f64,
        influence_factor: f64,
        world_offset: f64,
    ) -> Result<Self> {
        if metric_epsilon <= 0.0 || metric_epsilon >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "metric_epsilon",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if influence_factor <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "influence_factor",
                reason: "must be positive".into(),
            });
        }
        if world_offset < 0.0 {
            return Err(Error::InvalidParameter {
                name: "world_offset",
                reason: "must be nonnegative".into(),
            });
        }
        let locations: Vec<DVector<f64>> = library
            .modes()
            .iter()
            .map(|m| m.location.clone())
            .collect();
        let edges = mst_edges(&locations)
            .into_iter()
            .map(|(i, j)| Wormhole::new(locations[i].clone(), locations[j].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modes: library,
            edges,
            world_offset,
            metric_epsilon,
            influence_factor,
        })
    }

    /// Empty network (no wormholes): dynamics degenerate to plain HMC.
    pub fn empty() -> Self {
        Self {
            modes: ModeLibrary::default(),
            edges: Vec::new(),
            world_offset: 1.0,
            metric_epsilon: 0.03,
            influence_factor: 0.3,
        }
    }

    pub fn library(&self) -> &ModeLibrary {
        &self.modes
    }

    pub fn edges(&self) -> &[Wormhole] {
        &self.edges
    }

    pub fn world_offset(&self) -> f64 {
        self.world_offset
    }

    pub fn metric_epsilon(&self) -> f64 {
        self.metric_epsilon
    }

    pub fn influence_factor(&self) -> f64 {
        self.influence_factor
    }

    /// Segment mollifier of the most influential edge at `x`, with the edge
    /// index. Multiple edges combine by the max so the weight stays in (0,1].
    pub fn max_mollifier_edge(&self, x: &DVector<f64>) -> Option<(usize, f64)> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, w)| {
                (
                    i,
                    segment_mollifier(x, &w.endpoint_a, &w.endpoint_b, self.influence_factor),
                )
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
    }

    /// Summed vector field over all edges.
    pub fn vector_field(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let dim = x.len();
        let mut f = DVector::zeros(dim);
        for w in &self.edges {
            f += vector_field(x, v, w, dim, self.influence_factor);
        }
        f
    }

    /// Position Jacobian of the summed vector field.
    pub fn vector_field_jacobian(&self, x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let dim = x.len();
        let mut j = DMatrix::zeros(dim, dim);
        for w in &self.edges {
            j += vector_field_jacobian(x, v, w, dim, self.influence_factor);
        }
        j
    }
}

/// Overall metric `G(θ) = (1−m(θ)) G₀ + m(θ) G_W` where `m` is the segment
/// mollifier of the most influential edge and `G_W` that edge's wormhole
/// metric. Far from every edge this is `G₀`; on an edge it is exactly `G_W`.
pub fn overall_metric(
    x: &DVector<f64>,
    network: &WormholeNetwork,
    base_metric: &DMatrix<f64>,
) -> DMatrix<f64> {
    match network.max_mollifier_edge(x) {
        None => base_metric.clone(),
        Some((idx, m)) => {
            let gw = wormhole_metric(network.edges()[idx].direction(), network.metric_epsilon())
                .expect("network edge direction is unit length");
            base_metric * (1.0 - m) + gw * m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fd_jacobian, min_symmetric_eigenvalue, standard_normal_vector};
    use crate::seeding::seeded_rng;
    use proptest::prelude::*;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn wormhole_metric_axis_aligned() {
        let g = wormhole_metric(&vec2(1.0, 0.0), 0.03).unwrap();
        assert!((g[(0, 0)] - 0.03).abs() < 1e-15);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-15);
        assert!(g[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn wormhole_metric_determinant_is_epsilon() {
        let mut rng = seeded_rng(2);
        for dim in [2usize, 3, 7] {
            let v = standard_normal_vector(dim, &mut rng);
            let v = &v / v.norm();
            let g = wormhole_metric(&v, 0.03).unwrap();
            assert!((g.determinant() - 0.03).abs() < 1e-12, "dim {dim}");
        }
    }

    #[test]
    fn wormhole_metric_rejects_non_unit_direction() {
        assert!(wormhole_metric(&vec2(1.0, 1.0), 0.03).is_err());
    }

    #[test]
    fn straight_traversal_arclength_is_sqrt_eps_times_length() {
        let a = vec2(-1.0, 2.0);
        let b = vec2(3.0, -1.0);
        let w = Wormhole::new(a.clone(), b.clone()).unwrap();
        let g = wormhole_metric(w.direction(), 0.03).unwrap();
        let n = 10_000;
        let points: Vec<DVector<f64>> = (0..=n)
            .map(|i| &a + (&b - &a) * (i as f64 / n as f64))
            .collect();
        let len = numeric_arclength(&points, |_| g.clone());
        let expected = 0.03f64.sqrt() * w.length();
        assert!((len - expected).abs() < 1e-6, "len {len} vs {expected}");
    }

    #[test]
    fn arclength_refinement_converges_at_first_order_or_better() {
        // Position-dependent metric so the quadrature error is nonzero.
        let net = two_mode_network();
        let base = DMatrix::identity(2, 2);
        let a = vec2(-1.5, 0.8);
        let b = vec2(1.2, -0.4);
        let curve = |n: usize| -> Vec<DVector<f64>> {
            (0..=n)
                .map(|i| &a + (&b - &a) * (i as f64 / n as f64))
                .collect()
        };
        let metric = |x: &DVector<f64>| overall_metric(x, &net, &base);
        let reference = numeric_arclength(&curve(65536), metric);
        let e1 = (numeric_arclength(&curve(64), metric) - reference).abs();
        let e2 = (numeric_arclength(&curve(128), metric) - reference).abs();
        assert!(e2 <= e1 / 2.0 + 1e-12, "e1={e1} e2={e2}");
    }

    #[test]
    fn segment_mollifier_is_one_on_the_segment() {
        let a = vec2(0.0, 0.0);
        let b = vec2(2.0, 1.0);
        assert_eq!(segment_mollifier(&a, &a, &b, 0.3), 1.0);
        let mid = (&a + &b) * 0.5;
        assert!((segment_mollifier(&mid, &a, &b, 0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_mollifier_hand_value() {
        let a = vec2(0.0, 0.0);
        let b = vec2(1.0, 0.0);
        let x = vec2(0.5, 0.5);
        // excess = 2·√0.5 − 1 = √2 − 1; exp(−(√2−1)/0.3), cross-checked
        // against an independent script evaluation
        let expected = (-(2.0f64.sqrt() - 1.0) / 0.3).exp();
        assert!((segment_mollifier(&x, &a, &b, 0.3) - expected).abs() < 1e-14);
        assert!((expected - 0.25139952441424995).abs() < 1e-15);
    }

    #[test]
    fn vicinity_hand_values() {
        let a = vec2(0.0, 0.0);
        let b = vec2(2.0, 0.0);
        assert!((vicinity(&vec2(1.0, 1.0), &a, &b) - 1.0).abs() < 1e-14);
        assert!((vicinity(&vec2(3.0, 0.0), &a, &b) - 6.0).abs() < 1e-14);
        for t in [0.0, 0.25, 0.5, 1.0] {
            assert!(vicinity(&vec2(2.0 * t, 0.0), &a, &b).abs() < 1e-14);
        }
    }

    #[test]
    fn vicinity_mollifier_hand_values() {
        let a = vec2(0.0, 0.0);
        let b = vec2(2.0, 0.0);
        let m1 = vicinity_mollifier(&vec2(1.0, 1.0), &a, &b, 2, 0.3);
        assert!((m1 - 0.18887560283756183).abs() < 1e-14);
        let m2 = vicinity_mollifier(&vec2(3.0, 0.0), &a, &b, 2, 0.3);
        assert!((m2 - 4.5399929762484854e-05).abs() < 1e-18);
        assert!((vicinity_mollifier(&vec2(1.0, 0.0), &a, &b, 2, 0.3) - 1.0).abs() < 1e-15);
        // decay far away
        assert!(vicinity_mollifier(&vec2(100.0, 100.0), &a, &b, 2, 0.3) < 1e-300);
    }

    #[test]
    fn vector_field_examples() {
        let w = Wormhole::new(vec2(0.0, 0.0), vec2(2.0, 0.0)).unwrap();
        // v perpendicular to the tube direction
        let f = vector_field(&vec2(0.5, 0.0), &vec2(0.0, 3.0), &w, 2, 0.3);
        assert!(f.amax() < 1e-15);
        // on the segment with v = v*
        let f = vector_field(&vec2(1.0, 0.0), w.direction(), &w, 2, 0.3);
        assert!((f - w.direction()).amax() < 1e-12);
        // random case against componentwise hand computation
        let mut rng = seeded_rng(8);
        for _ in 0..10 {
            let x = standard_normal_vector(2, &mut rng) * 2.0;
            let v = standard_normal_vector(2, &mut rng);
            let m = vicinity_mollifier(&x, w.endpoint_a(), w.endpoint_b(), 2, 0.3);
            let proj = v[0] * w.direction()[0] + v[1] * w.direction()[1];
            let expected = vec2(m * proj * w.direction()[0], m * proj * w.direction()[1]);
            assert!((vector_field(&x, &v, &w, 2, 0.3) - expected).amax() < 1e-13);
        }
    }

    #[test]
    fn vector_field_jacobian_matches_finite_differences() {
        let w = Wormhole::new(vec2(-1.0, -0.5), vec2(1.5, 1.0)).unwrap();
        let mut rng = seeded_rng(21);
        for _ in 0..20 {
            let x = standard_normal_vector(2, &mut rng) * 1.5;
            let v = standard_normal_vector(2, &mut rng);
            let j = vector_field_jacobian(&x, &v, &w, 2, 0.3);
            let fd = fd_jacobian(|p: &DVector<f64>| vector_field(p, &v, &w, 2, 0.3), &x, 1e-6);
            let rel = (&j - &fd).amax() / fd.amax().max(1e-10);
            assert!(rel < 1e-4, "rel err {rel}");
        }
    }

    #[test]
    fn vector_field_jacobian_is_zero_for_perpendicular_velocity() {
        let w = Wormhole::new(vec2(0.0, 0.0), vec2(1.0, 0.0)).unwrap();
        let j = vector_field_jacobian(&vec2(0.3, 0.2), &vec2(0.0, 1.0), &w, 2, 0.3);
        assert!(j.amax() < 1e-15);
    }

    #[test]
    fn vector_field_jacobian_has_rank_at_most_one() {
        let w = Wormhole::new(vec2(-2.0, 1.0), vec2(3.0, 0.5)).unwrap();
        let mut rng = seeded_rng(33);
        for _ in 0..10 {
            let x = standard_normal_vector(2, &mut rng) * 3.0;
            let v = standard_normal_vector(2, &mut rng);
            let j = vector_field_jacobian(&x, &v, &w, 2, 0.3);
            let svd = j.svd(false, false);
            let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(
                s[1] <= 1e-12 * s[0].max(1.0),
                "second singular value {}",
                s[1]
            );
        }
    }

    fn library_from_points(points: &[DVector<f64>]) -> ModeLibrary {
        let d = points[0].len();
        ModeLibrary::new(
            points
                .iter()
                .map(|p| Mode::new(p.clone(), DMatrix::identity(d, d), 1.0).unwrap())
                .collect(),
        )
    }

    fn two_mode_network() -> WormholeNetwork {
        let lib = library_from_points(&[vec2(-1.0, 0.0), vec2(1.0, 0.0)]);
        WormholeNetwork::mst(lib, 0.03, 0.3, 1.0).unwrap()
    }

    #[test]
    fn mst_single_mode_has_no_edges() {
        let lib = library_from_points(&[vec2(0.5, 0.5)]);
        let net = WormholeNetwork::mst(lib, 0.03, 0.3, 1.0).unwrap();
        assert!(net.edges().is_empty());
    }

    #[test]
    fn mst_collinear_modes() {
        let pts = vec![
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![3.0]),
        ];
        assert_eq!(mst_edges(&pts), vec![(0, 1), (1, 2)]);
    }

    /// All spanning trees of the complete graph on k nodes via Prüfer
    /// sequences; returns the minimum total weight.
    pub(crate) fn brute_force_mst_weight(points: &[DVector<f64>]) -> f64 {
        let k = points.len();
        if k < 2 {
            return 0.0;
        }
        if k == 2 {
            return (&points[0] - &points[1]).norm();
        }
        let dist = |i: usize, j: usize| (&points[i] - &points[j]).norm();
        let mut best = f64::INFINITY;
        let seq_len = k - 2;
        let total = (k as u64).pow(seq_len as u32);
        for code in 0..total {
            let mut seq = Vec::with_capacity(seq_len);
            let mut c = code;
            for _ in 0..seq_len {
                seq.push((c % k as u64) as usize);
                c /= k as u64;
            }
            // decode the Prüfer sequence into edge weights
            let mut deg = vec![1u32; k];
            for &s in &seq {
                deg[s] += 1;
            }
            let mut weight = 0.0;
            let mut leaves: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..k)
                .filter(|&i| deg[i] == 1)
                .map(std::cmp::Reverse)
                .collect();
            for &s in &seq {
                let leaf = leaves.pop().unwrap().0;
                weight += dist(leaf, s);
                deg[s] -= 1;
                if deg[s] == 1 {
                    leaves.push(std::cmp::Reverse(s));
                }
            }
            let u = leaves.pop().unwrap().0;
            let v = leaves.pop().unwrap().0;
            weight += dist(u, v);
            if weight < best {
                best = weight;
            }
        }
        best
    }

    #[test]
    fn mst_matches_brute_force_enumeration() {
        let mut rng = seeded_rng(55);
        for trial in 0..10 {
            let k = 4 + (trial % 4);
            let pts: Vec<DVector<f64>> = (0..k)
                .map(|_| standard_normal_vector(2, &mut rng) * 3.0)
                .collect();
            let edges = mst_edges(&pts);
            assert_eq!(edges.len(), k - 1);
            let weight: f64 = edges
                .iter()
                .map(|&(i, j)| (&pts[i] - &pts[j]).norm())
                .sum();
            let best = brute_force_mst_weight(&pts);
            assert!(
                (weight - best).abs() < 1e-10,
                "k={k} kruskal={weight} brute={best}"
            );
        }
    }

    #[test]
    fn mst_is_acyclic_and_connected() {
        let mut rng = seeded_rng(56);
        let pts: Vec<DVector<f64>> = (0..7)
            .map(|_| standard_normal_vector(3, &mut rng) * 2.0)
            .collect();
        let edges = mst_edges(&pts);
        assert_eq!(edges.len(), 6);
        let mut parent: Vec<usize> = (0..7).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for &(i, j) in &edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            assert_ne!(ri, rj, "cycle through ({i},{j})");
            parent[ri] = rj;
        }
        let root = find(&mut parent, 0);
        for i in 1..7 {
            assert_eq!(find(&mut parent, i), root, "not connected");
        }
    }

    #[test]
    fn mirror_network_single_mode_is_the_self_mirror() {
        let lib = library_from_points(&[vec2(2.0, -1.0)]);
        let pos = DVector::from_vec(vec![2.0, -1.0, -1.0]);
        let (nearest, edges) = mirror_wormholes(&pos, &lib, 1.0).unwrap();
        assert_eq!(nearest, 0);
        assert_eq!(edges.len(), 1);
        let expected_dir = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!((edges[0].direction() - expected_dir).amax() < 1e-14);
        assert!((edges[0].length() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mirror_network_targets_the_opposite_world() {
        let lib = library_from_points(&[vec2(0.0, 0.0), vec2(4.0, 0.0)]);
        let pos = DVector::from_vec(vec![0.2, 0.1, -0.4]);
        let (nearest, edges) = mirror_wormholes(&pos, &lib, 1.0).unwrap();
        assert_eq!(nearest, 0);
        for e in &edges {
            assert!((e.endpoint_a()[2] - (-1.0)).abs() < 1e-14);
            assert!((e.endpoint_b()[2] - 1.0).abs() < 1e-14);
        }
        // two modes, h=1: cross-edge length is √(‖Δ‖² + 4)
        let expected = (16.0f64 + 4.0).sqrt();
        assert!((edges[1].length() - expected).abs() < 1e-13);
    }

    #[test]
    fn mirror_network_requires_a_library() {
        let lib = ModeLibrary::default();
        let pos = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(mirror_wormholes(&pos, &lib, 1.0).is_err());
    }

    #[test]
    fn overall_metric_limits() {
        let net = two_mode_network();
        let base = DMatrix::identity(2, 2);
        // far away: base metric
        let far = overall_metric(&vec2(500.0, 500.0), &net, &base);
        assert!((far - &base).amax() < 1e-12);
        // on the segment: exactly the wormhole metric
        let on = overall_metric(&vec2(0.0, 0.0), &net, &base);
        let gw = wormhole_metric(net.edges()[0].direction(), 0.03).unwrap();
        assert!((on - gw).amax() < 1e-12);
    }

    #[test]
    fn overall_metric_midpoint_hand_assembly() {
        let lib = library_from_points(&[vec2(0.0, 0.0), vec2(2.0, 2.0)]);
        let net = WormholeNetwork::mst(lib, 0.03, 0.3, 1.0).unwrap();
        let base = DMatrix::identity(2, 2);
        let x = vec2(1.5, 0.5); // off the diagonal segment
        let a = vec2(0.0, 0.0);
        let b = vec2(2.0, 2.0);
        let m = segment_mollifier(&x, &a, &b, 0.3);
        let gw = wormhole_metric(&(&b - &a).normalize(), 0.03).unwrap();
        let expected = &base * (1.0 - m) + &gw * m;
        assert!((overall_metric(&x, &net, &base) - expected).amax() < 1e-13);
    }

    #[test]
    fn overall_metric_stays_spd() {
        let net = two_mode_network();
        let base = DMatrix::identity(2, 2);
        let mut rng = seeded_rng(77);
        for _ in 0..50 {
            let x = standard_normal_vector(2, &mut rng) * 3.0;
            let g = overall_metric(&x, &net, &base);
            assert!(min_symmetric_eigenvalue(&g) >= 0.03 - 1e-12);
        }
    }

    #[test]
    fn library_round_trips_through_json() {
        let mut lib = library_from_points(&[vec2(1.0, 2.0), vec2(-3.0, 0.5)]);
        lib.record_visit(1);
        let json = lib.to_json().unwrap();
        let file: LibraryFile = serde_json::from_str(&json).unwrap();
        let back = file.into_library().unwrap();
        assert_eq!(lib, back);
    }

    proptest! {
        #[test]
        fn vicinity_nonnegative_and_zero_only_on_segment(
            ax in -5.0f64..5.0, ay in -5.0f64..5.0,
            bx in -5.0f64..5.0, by in -5.0f64..5.0,
            t in 0.0f64..1.0,
            off in 0.01f64..4.0,
        ) {
            let a = vec2(ax, ay);
            let b = vec2(bx, by);
            prop_assume!((&a - &b).norm() > 1e-6);
            let on = &a + (&b - &a) * t;
            prop_assert!(vicinity(&on, &a, &b).abs() < 1e-10);
            // perpendicular offset leaves the segment
            let dir = (&b - &a).normalize();
            let perp = vec2(-dir[1], dir[0]);
            let offp = &on + &perp * off;
            prop_assert!(vicinity(&offp, &a, &b) > 0.0);
        }

        #[test]
        fn segment_mollifier_in_unit_interval(
            x in -5.0f64..5.0, y in -5.0f64..5.0,
        ) {
            let a = vec2(-1.0, 0.0);
            let b = vec2(1.0, 0.0);
            let m = segment_mollifier(&vec2(x, y), &a, &b, 0.3);
            prop_assert!(m > 0.0 && m <= 1.0);
        }

        #[test]
        fn segment_mollifier_monotone_in_excess_distance(
            y in 0.05f64..4.0, factor in 1.01f64..3.0,
        ) {
            // moving straight away from the midpoint only grows the excess
            let a = vec2(-1.0, 0.0);
            let b = vec2(1.0, 0.0);
            let near = segment_mollifier(&vec2(0.0, y), &a, &b, 0.3);
            let far = segment_mollifier(&vec2(0.0, y * factor), &a, &b, 0.3);
            prop_assert!(far <= near + 1e-15);
        }
    }
}
