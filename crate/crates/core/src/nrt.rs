//! Non-rigid refinement of an aligned candidate cube.
//!
//! Each candidate point `y_i` gets its own 3x3 linear map `T_i`, acting on
//! offsets from the cube pivot. The maps minimise
//!
//! ```text
//! J = sum_pairs |x - T_j y_j|^2 + lambda sum_edges |T_i - T_j|_F^2 + mu sum_i |T_i - I|_F^2
//! ```
//!
//! where the pairs come from nearest-neighbour matching of template points
//! and the edges from a symmetrised k-nearest-neighbour graph over the
//! candidate. `J` is quadratic, so the minimiser is the solution of sparse
//! normal equations.
//!
//! Unknowns are laid out row-major per map and grouped by map row:
//! entry `(r, c)` of `T_i` sits at `r * 3N + 3i + c`. Rows of different `r`
//! never interact, so the normal matrix is block diagonal.

use nalgebra::{DVector, Matrix3};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::cloud::{Point3, Vector3};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

pub const DEFAULT_GRAPH_K: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MU: f64 = 1e-6;

/// Nearest-candidate assignment for every template point.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPairs {
    /// `(template index, candidate index)`, one entry per template point.
    pub pairs: Vec<(usize, usize)>,
    /// Whether each candidate point was picked by some template point.
    pub matched: Vec<bool>,
}

impl MatchPairs {
    pub fn matched_count(&self) -> usize {
        self.matched.iter().filter(|m| **m).count()
    }

    /// Candidate indices that no template point picked, ascending.
    pub fn unmatched(&self) -> Vec<usize> {
        (0..self.matched.len()).filter(|&i| !self.matched[i]).collect()
    }
}

/// Matches each template point to its Euclidean-nearest candidate point.
pub fn match_points(template: &[Point3], candidate: &[Point3]) -> MatchPairs {
    let mut matched = vec![false; candidate.len()];
    if candidate.is_empty() {
        return MatchPairs {
            pairs: Vec::new(),
            matched,
        };
    }
    let tree = KdTree::new(candidate);
    let pairs = template
        .iter()
        .enumerate()
        .map(|(t, x)| {
            let c = tree.nearest(x).expect("non-empty").index;
            matched[c] = true;
            (t, c)
        })
        .collect();
    MatchPairs { pairs, matched }
}

/// Undirected k-nearest-neighbour graph, edges stored once as `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessGraph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SmoothnessGraph {
    pub fn knn(points: &[Point3], k: usize) -> Self {
        let tree = KdTree::new(points);
        let mut edges = Vec::with_capacity(points.len() * k);
        for (i, p) in points.iter().enumerate() {
            for nb in tree.knn(p, (k + 1).min(points.len())) {
                if nb.index != i {
                    edges.push((i.min(nb.index), i.max(nb.index)));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        SmoothnessGraph {
            vertices: points.len(),
            edges,
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|(a, b)| *a == v || *b == v).count()
    }
}

/// One linear map per candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStack {
    pub transforms: Vec<Matrix3<f64>>,
}

impl AffineStack {
    pub fn identity(n: usize) -> Self {
        AffineStack {
            transforms: vec![Matrix3::identity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn from_vector(t: &DVector<f64>) -> Self {
        let n = t.len() / 9;
        let transforms = (0..n)
            .map(|i| Matrix3::from_fn(|r, c| t[unknown(n, i, r, c)]))
            .collect();
        AffineStack { transforms }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.len();
        let mut t = DVector::zeros(9 * n);
        for (i, m) in self.transforms.iter().enumerate() {
            for r in 0..3 {
                for c in 0..3 {
                    t[unknown(n, i, r, c)] = m[(r, c)];
                }
            }
        }
        t
    }
}

#[inline]
fn unknown(n: usize, i: usize, r: usize, c: usize) -> usize {
    r * 3 * n + 3 * i + c
}

/// Inputs of the refinement cost, in pivot-local coordinates.
#[derive(Debug, Clone)]
pub struct NrtProblem {
    pub template: Vec<Vector3>,
    pub candidate: Vec<Vector3>,
    pub pairs: MatchPairs,
    pub graph: SmoothnessGraph,
    pub lambda: f64,
    pub mu: f64,
}

impl NrtProblem {
    /// Builds the problem for an aligned candidate: matching, graph and local frame.
    pub fn new(template: &[Point3], aligned: &[Point3], pivot: &Point3, k: usize, lambda: f64, mu: f64) -> Self {
        NrtProblem {
            template: template.iter().map(|p| p - pivot).collect(),
            candidate: aligned.iter().map(|p| p - pivot).collect(),
            pairs: match_points(template, aligned),
            graph: SmoothnessGraph::knn(aligned, k),
            lambda,
            mu,
        }
    }

    /// `J` evaluated term by term.
    pub fn cost(&self, stack: &AffineStack) -> f64 {
        let t = &stack.transforms;
        let distortion: f64 = self
            .pairs
            .pairs
            .iter()
            .map(|&(ti, ci)| (self.template[ti] - t[ci] * self.candidate[ci]).norm_squared())
            .sum();
        let smooth: f64 = self.graph.edges.iter().map(|&(i, j)| (t[i] - t[j]).norm_squared()).sum();
        let reg: f64 = t.iter().map(|m| (m - Matrix3::identity()).norm_squared()).sum();
        distortion + self.lambda * smooth + self.mu * reg
    }

    pub fn distortion(&self, stack: &AffineStack) -> f64 {
        let t = &stack.transforms;
        self.pairs
            .pairs
            .iter()
            .map(|&(ti, ci)| (self.template[ti] - t[ci] * self.candidate[ci]).norm_squared())
            .sum()
    }
}

/// Sparse least-squares system whose minimiser minimises `J`: `J(t) = |A t - b|^2`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub a: CsrMatrix<f64>,
    pub b: DVector<f64>,
    pub vertices: usize,
}

impl QuadraticSystem {
    pub fn cost(&self, t: &DVector<f64>) -> f64 {
        (&self.a * t - &self.b).norm_squared()
    }
}

/// Assembles the rows of `A` and `b`.
///
/// Distortion adds 3 rows per pair, smoothness 9 rows per edge with entries
/// `+-sqrt(lambda)`, and the regulariser 9 rows per vertex with `sqrt(mu)`.
pub fn assemble_cost(problem: &NrtProblem) -> Result<QuadraticSystem> {
    if problem.lambda < 0.0 || problem.mu < 0.0 {
        return Err(Error::InvalidArgument("lambda and mu must be non-negative".into()));
    }
    let n = problem.candidate.len();
    let rows = 3 * problem.pairs.pairs.len() + 9 * problem.graph.edges.len() + 9 * n;
    let mut coo = CooMatrix::new(rows, 9 * n);
    let mut b = DVector::zeros(rows);
    let mut row = 0;

    for &(ti, ci) in &problem.pairs.pairs {
        let x = problem.template[ti];
        let y = problem.candidate[ci];
        for r in 0..3 {
            for c in 0..3 {
                if y[c] != 0.0 {
                    coo.push(row, unknown(n, ci, r, c), y[c]);
                }
            }
            b[row] = x[r];
            row += 1;
        }
    }

    let sl = problem.lambda.sqrt();
    for &(i, j) in &problem.graph.edges {
        for r in 0..3 {
            for c in 0..3 {
                if sl != 0.0 {
                    coo.push(row, unknown(n, i, r, c), sl);
                    coo.push(row, unknown(n, j, r, c), -sl);
                }
                row += 1;
            }
        }
    }

    let sm = problem.mu.sqrt();
    for i in 0..n {
        for r in 0..3 {
            for c in 0..3 {
                if sm != 0.0 {
                    coo.push(row, unknown(n, i, r, c), sm);
                }
                if r == c {
                    b[row] = sm;
                }
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, rows);

    Ok(QuadraticSystem {
        a: CsrMatrix::from(&coo),
        b,
        vertices: n,
    })
}

/// Solves the normal equations `A^T A t = A^T b` by sparse Cholesky.
pub fn solve_nrt(system: &QuadraticSystem) -> Result<AffineStack> {
    if system.vertices == 0 {
        return Ok(AffineStack::identity(0));
    }
    let at = system.a.transpose();
    let ata = &at * &system.a;
    let atb = &at * &system.b;
    let csc = CscMatrix::from(&ata);
    let chol = CscCholesky::factor(&csc).map_err(|_| Error::SingularSystem)?;
    let t: DVector<f64> = chol.solve(&atb).column(0).into_owned();

    let residual = (&ata * &t - &atb).amax();
    if !residual.is_finite() || residual >= 1e-8 * (1.0 + atb.amax()) {
        return Err(Error::SingularSystem);
    }
    Ok(AffineStack::from_vector(&t))
}

/// Moves each point to `pivot + T_i (p_i - pivot)`.
pub fn apply_nrt(stack: &AffineStack, points: &[Point3], pivot: &Point3) -> Result<Vec<Point3>> {
    if stack.len() != points.len() {
        return Err(Error::InvalidArgument(format!(
            "{} transforms for {} points",
            stack.len(),
            points.len()
        )));
    }
    Ok(points
        .iter()
        .zip(&stack.transforms)
        .map(|(p, t)| pivot + t * (p - pivot))
        .collect())
}

/// Result of refining an aligned candidate.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub points: Vec<Point3>,
    pub stack: AffineStack,
    pub cost_before: f64,
    pub cost_after: f64,
}

/// Full refinement: match, build graph, solve, apply.
pub fn refine(template: &[Point3], aligned: &[Point3], pivot: &Point3, lambda: f64, mu: f64) -> Result<Refinement> {
    let problem = NrtProblem::new(template, aligned, pivot, DEFAULT_GRAPH_K, lambda, mu);
    let system = assemble_cost(&problem)?;
    let stack = solve_nrt(&system)?;
    let points = apply_nrt(&stack, aligned, pivot)?;
    Ok(Refinement {
        cost_before: problem.cost(&AffineStack::identity(aligned.len())),
        cost_after: problem.cost(&stack),
        points,
        stack,
    })
}
