//! SE(2) pose graphs: construction, Gauss-Newton optimization, per-edge
//! Fisher information and the reduction to a weighted Laplacian whose
//! spectrum approximates the D-optimality of the full information matrix.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::pose::{normalize_angle, Pose2};
use crate::spectral::{d_opt_laplacian, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub tail: usize,
    pub head: usize,
    /// Measured transform from `tail` to `head`.
    pub measurement: Pose2,
    /// Information matrix of the measurement, in the measurement frame.
    pub information: Matrix3<f64>,
    pub kind: EdgeKind,
}

/// Matrix norm used to turn an edge information matrix into a scalar weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixNorm {
    /// Maximum absolute column sum.
    One,
    /// Spectral norm.
    Two,
    /// Maximum absolute row sum.
    Inf,
    Frobenius,
}

impl MatrixNorm {
    pub fn of(&self, m: &DMatrix<f64>) -> f64 {
        match self {
            MatrixNorm::One => (0..m.ncols())
                .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            MatrixNorm::Inf => (0..m.nrows())
                .map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            MatrixNorm::Frobenius => m.norm(),
            MatrixNorm::Two => {
                if m.is_empty() {
                    0.0
                } else {
                    m.singular_values().iter().copied().fold(0.0, f64::max)
                }
            }
        }
    }

    pub fn of3(&self, m: &Matrix3<f64>) -> f64 {
        self.of(&DMatrix::from_column_slice(3, 3, m.as_slice()))
    }
}

impl fmt::Display for MatrixNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixNorm::One => "1",
            MatrixNorm::Two => "2",
            MatrixNorm::Inf => "inf",
            MatrixNorm::Frobenius => "fro",
        })
    }
}

impl std::str::FromStr for MatrixNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(MatrixNorm::One),
            "2" => Ok(MatrixNorm::Two),
            "inf" => Ok(MatrixNorm::Inf),
            "fro" | "frobenius" => Ok(MatrixNorm::Frobenius),
            other => Err(Error::Config(format!("unknown matrix norm '{other}'"))),
        }
    }
}

/// Checks symmetry (1e-12, relative to the largest entry) and positive definiteness.
pub fn check_spd(m: &Matrix3<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Domain("information matrix is not symmetric".into()));
    }
    let min_eig = SymmetricEigen::new(*m).eigenvalues.min();
    if !(min_eig > 0.0) {
        return Err(Error::Domain(format!(
            "information matrix is not positive definite (min eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

/// SE(2) adjoint `[[R, J·t], [0, 1]]` with `J = [[0, 1], [−1, 0]]`.
pub fn adjoint(t: &Pose2) -> Matrix3<f64> {
    let r = t.rotation();
    Matrix3::new(
        r[(0, 0)],
        r[(0, 1)],
        t.y,
        r[(1, 0)],
        r[(1, 1)],
        -t.x,
        0.0,
        0.0,
        1.0,
    )
}

/// Information of an edge after conjugation by the adjoint of its transform.
pub fn edge_fim(edge: &GraphEdge) -> Matrix3<f64> {
    let ad = adjoint(&edge.measurement);
    let fim = ad.transpose() * edge.information * ad;
    // symmetrize rounding noise
    (fim + fim.transpose()) * 0.5
}

/// Scalar weight of an edge; loop edges are multiplied by `loop_boost`.
pub fn edge_weight(edge: &GraphEdge, norm: MatrixNorm, loop_boost: f64) -> f64 {
    let w = norm.of3(&edge_fim(edge));
    match edge.kind {
        EdgeKind::Loop => w * loop_boost,
        EdgeKind::Odometry => w,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    pub nodes: Vec<Pose2>,
    pub edges: Vec<GraphEdge>,
    /// Gauge anchor, held fixed during optimization.
    pub fixed: usize,
}

impl Default for PoseGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of a Gauss-Newton run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            fixed: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn add_node(&mut self, pose: Pose2) -> usize {
        self.nodes.push(pose);
        self.nodes.len() - 1
    }

    fn add_edge(
        &mut self,
        tail: usize,
        head: usize,
        measurement: Pose2,
        information: Matrix3<f64>,
        kind: EdgeKind,
    ) -> Result<()> {
        if tail >= self.nodes.len() || head >= self.nodes.len() {
            return Err(Error::Index(format!(
                "edge ({tail}, {head}) in graph of {} nodes",
                self.nodes.len()
            )));
        }
        if tail == head {
            return Err(Error::Domain(format!("self-loop at node {tail}")));
        }
        check_spd(&information)?;
        self.edges.push(GraphEdge {
            tail,
            head,
            measurement,
            information,
            kind,
        });
        Ok(())
    }

    /// Odometry edges link consecutive nodes and form the backbone chain.
    pub fn add_odometry_edge(
        &mut self,
        tail: usize,
        head: usize,
        measurement: Pose2,
        information: Matrix3<f64>,
    ) -> Result<()> {
        if head != tail + 1 {
            return Err(Error::Domain(format!(
                "odometry edge must join consecutive nodes, got ({tail}, {head})"
            )));
        }
        self.add_edge(tail, head, measurement, information, EdgeKind::Odometry)
    }

    pub fn add_loop_edge(
        &mut self,
        tail: usize,
        head: usize,
        measurement: Pose2,
        information: Matrix3<f64>,
    ) -> Result<()> {
        self.add_edge(tail, head, measurement, information, EdgeKind::Loop)
    }

    pub fn num_loop_edges(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Loop)
            .count()
    }

    /// Residual `t2v(Z⁻¹ · X_i⁻¹ · X_j)` of one edge.
    pub fn edge_error(&self, edge: &GraphEdge) -> Vector3<f64> {
        edge_error(
            &self.nodes[edge.tail],
            &self.nodes[edge.head],
            &edge.measurement,
        )
    }

    /// `½ Σ eᵀ Ω e`.
    pub fn cost(&self) -> f64 {
        0.5 * self
            .edges
            .iter()
            .map(|e| {
                let r = self.edge_error(e);
                (r.transpose() * e.information * r)[0]
            })
            .sum::<f64>()
    }

    /// Gauss-Newton with analytic Jacobians on a copy of the graph.
    ///
    /// Steps that increase the cost are halved (up to 20 times); the run ends
    /// when the step norm drops below `tol`, no halving helps, or after
    /// `max_iters` iterations.
    pub fn optimize(&self, max_iters: usize, tol: f64) -> Result<(PoseGraph, OptimizeReport)> {
        let mut graph = self.clone();
        let initial_cost = graph.cost();
        let mut cost = initial_cost;
        let n = graph.nodes.len();
        let mut iterations = 0;
        if n < 2 || graph.edges.is_empty() {
            return Ok((
                graph,
                OptimizeReport {
                    initial_cost,
                    final_cost: cost,
                    iterations,
                },
            ));
        }
        let free_index = |node: usize, fixed: usize| -> Option<usize> {
            match node.cmp(&fixed) {
                std::cmp::Ordering::Less => Some(3 * node),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(3 * (node - 1)),
            }
        };
        let dim = 3 * (n - 1);
        while iterations < max_iters {
            iterations += 1;
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            let mut b = DVector::<f64>::zeros(dim);
            for edge in &graph.edges {
                let xi = graph.nodes[edge.tail];
                let xj = graph.nodes[edge.head];
                let e = edge_error(&xi, &xj, &edge.measurement);
                let (a, bj) = edge_jacobians(&xi, &xj, &edge.measurement);
                let omega = edge.information;
                let blocks = [(edge.tail, a), (edge.head, bj)];
                for (node_r, jr) in &blocks {
                    let Some(r) = free_index(*node_r, graph.fixed) else {
                        continue;
                    };
                    let g = jr.transpose() * omega * e;
                    for k in 0..3 {
                        b[r + k] += g[k];
                    }
                    for (node_c, jc) in &blocks {
                        let Some(c) = free_index(*node_c, graph.fixed) else {
                            continue;
                        };
                        let blk = jr.transpose() * omega * jc;
                        for p in 0..3 {
                            for q in 0..3 {
                                h[(r + p, c + q)] += blk[(p, q)];
                            }
                        }
                    }
                }
            }
            let Some(chol) = h.clone().cholesky() else {
                let wg = graph.topology();
                return Err(Error::Singular(format!(
                    "{} nodes, {} edges, connected: {}, fixed node {}",
                    n,
                    graph.edges.len(),
                    wg.is_connected(),
                    graph.fixed
                )));
            };
            let dx = -chol.solve(&b);
            let step_norm = dx.norm();
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let mut trial = graph.clone();
                for node in 0..n {
                    let Some(r) = free_index(node, graph.fixed) else {
                        continue;
                    };
                    let p = trial.nodes[node];
                    trial.nodes[node] = Pose2::new(
                        p.x + scale * dx[r],
                        p.y + scale * dx[r + 1],
                        p.theta + scale * dx[r + 2],
                    );
                }
                let trial_cost = trial.cost();
                if trial_cost <= cost {
                    graph = trial;
                    cost = trial_cost;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted || step_norm * scale < tol {
                break;
            }
        }
        Ok((
            graph,
            OptimizeReport {
                initial_cost,
                final_cost: cost,
                iterations,
            },
        ))
    }

    /// Unit-weight topology of the graph.
    pub fn topology(&self) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.nodes.len());
        for e in &self.edges {
            g.add_edge(e.tail, e.head, 1.0)
                .expect("pose graph edges reference existing distinct nodes");
        }
        g
    }

    /// Same topology, edge weights from [`edge_weight`].
    pub fn to_weighted_graph(&self, norm: MatrixNorm, loop_boost: f64) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.nodes.len());
        for e in &self.edges {
            g.add_edge(e.tail, e.head, edge_weight(e, norm, loop_boost))
                .expect("edge weights of SPD information are positive");
        }
        g
    }

    /// D-optimality approximated on the weighted Laplacian; zero when disconnected.
    pub fn d_opt(&self, norm: MatrixNorm, loop_boost: f64) -> f64 {
        d_opt_laplacian(&self.to_weighted_graph(norm, loop_boost))
    }

    /// Full `3n × 3n` Fisher information `Σ_k (a_k a_kᵀ) ⊗ Φ_k`.
    pub fn full_fim(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut f = DMatrix::zeros(3 * n, 3 * n);
        for e in &self.edges {
            let phi = edge_fim(e);
            for (r, sr) in [(e.tail, 1.0), (e.head, -1.0)] {
                for (c, sc) in [(e.tail, 1.0), (e.head, -1.0)] {
                    for p in 0..3 {
                        for q in 0..3 {
                            f[(3 * r + p, 3 * c + q)] += sr * sc * phi[(p, q)];
                        }
                    }
                }
            }
        }
        f
    }

    /// Plain-text dump with `VERTEX_SE2` and `EDGE_SE2` records.
    pub fn write_g2o<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, p) in self.nodes.iter().enumerate() {
            writeln!(out, "VERTEX_SE2 {id} {} {} {}", p.x, p.y, p.theta)?;
        }
        for e in &self.edges {
            let m = &e.measurement;
            let i = &e.information;
            writeln!(
                out,
                "EDGE_SE2 {} {} {} {} {} {} {} {} {} {} {}",
                e.tail,
                e.head,
                m.x,
                m.y,
                m.theta,
                i[(0, 0)],
                i[(0, 1)],
                i[(0, 2)],
                i[(1, 1)],
                i[(1, 2)],
                i[(2, 2)]
            )?;
        }
        Ok(())
    }

    /// Reads the format written by [`PoseGraph::write_g2o`]. Edges between
    /// consecutive nodes are taken as odometry, all others as loops.
    pub fn read_g2o<R: BufRead>(input: R, source: &str) -> Result<PoseGraph> {
        let mut graph = PoseGraph::new();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let nums = |from: usize| -> Result<Vec<f64>> {
                fields[from..]
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|e| parse_err(lineno, format!("bad number '{f}': {e}")))
                    })
                    .collect()
            };
            match fields[0] {
                "VERTEX_SE2" => {
                    let v = nums(1)?;
                    if v.len() != 4 || v[0] as usize != graph.nodes.len() {
                        return Err(parse_err(
                            lineno,
                            "malformed or out-of-order VERTEX_SE2".into(),
                        ));
                    }
                    graph.add_node(Pose2::new(v[1], v[2], v[3]));
                }
                "EDGE_SE2" => {
                    let v = nums(1)?;
                    if v.len() != 11 {
                        return Err(parse_err(lineno, "EDGE_SE2 needs 11 values".into()));
                    }
                    let (i, j) = (v[0] as usize, v[1] as usize);
                    let info = Matrix3::new(v[5], v[6], v[7], v[6], v[8], v[9], v[7], v[9], v[10]);
                    let z = Pose2::new(v[2], v[3], v[4]);
                    let res = if j == i + 1 {
                        graph.add_odometry_edge(i, j, z, info)
                    } else {
                        graph.add_loop_edge(i, j, z, info)
                    };
                    res.map_err(|e| parse_err(lineno, e.to_string()))?;
                }
                other => return Err(parse_err(lineno, format!("unknown record '{other}'"))),
            }
        }
        Ok(graph)
    }
}

pub fn edge_error(xi: &Pose2, xj: &Pose2, z: &Pose2) -> Vector3<f64> {
    let ri = xi.rotation();
    let rz = z.rotation();
    let dt = Vector2::new(xj.x - xi.x, xj.y - xi.y);
    let et = rz.transpose() * (ri.transpose() * dt - z.translation());
    Vector3::new(et[0], et[1], normalize_angle(xj.theta - xi.theta - z.theta))
}

/// Jacobians of [`edge_error`] with respect to `x_i` and `x_j`.
pub fn edge_jacobians(xi: &Pose2, xj: &Pose2, z: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
    let ri = xi.rotation();
    let rz = z.rotation();
    let (s, c) = xi.theta.sin_cos();
    let d_ri_t = Matrix2::new(-s, c, -c, -s);
    let dt = Vector2::new(xj.x - xi.x, xj.y - xi.y);
    let rzri = rz.transpose() * ri.transpose();
    let dtheta = rz.transpose() * d_ri_t * dt;
    let a = Matrix3::new(
        -rzri[(0, 0)],
        -rzri[(0, 1)],
        dtheta[0],
        -rzri[(1, 0)],
        -rzri[(1, 1)],
        dtheta[1],
        0.0,
        0.0,
        -1.0,
    );
    let b = Matrix3::new(
        rzri[(0, 0)],
        rzri[(0, 1)],
        0.0,
        rzri[(1, 0)],
        rzri[(1, 1)],
        0.0,
        0.0,
        0.0,
        1.0,
    );
    (a, b)
}
