//! Weighted graph Laplacians, spanning-tree counts and D-optimality.
//!
//! All products of eigenvalues and determinants are carried in the log
//! domain.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Undirected weighted multigraph over nodes `0..n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(i, j, w) in edges {
            g.add_edge(i, j, w)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, weight: f64) -> Result<()> {
        if i == j {
            return Err(Error::Domain(format!("self-loop at node {i}")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::Index(format!(
                "edge ({i}, {j}) in graph of {} nodes",
                self.n
            )));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Domain(format!(
                "edge weight must be positive, got {weight}"
            )));
        }
        self.edges.push((i, j, weight));
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Incidence generator `a_k` of edge `k` (+1 at the tail, −1 at the head).
    pub fn incidence(&self, k: usize) -> Vec<i8> {
        let (i, j, _) = self.edges[k];
        let mut a = vec![0; self.n];
        a[i] = 1;
        a[j] = -1;
        a
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j, w)| (i, j, w * s)).collect(),
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = self.n;
        for &(i, j, _) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
                components -= 1;
            }
        }
        components == 1
    }
}

/// `L = Σ_k ω_k a_k a_kᵀ`.
pub fn laplacian(graph: &WeightedGraph) -> DMatrix<f64> {
    let n = graph.num_nodes();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in graph.edges() {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

/// Laplacian eigenvalues in increasing order.
pub fn laplacian_spectrum(graph: &WeightedGraph) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(laplacian(graph))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spanning-tree count in log domain, by two independent routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeCount {
    Disconnected,
    Connected {
        /// `Σ_{i≥2} log λ_i − log n`.
        via_spectrum: f64,
        /// log det of the Laplacian with row and column 0 removed.
        via_cofactor: f64,
    },
}

impl TreeCount {
    /// `log S(𝒢)`, or `-inf` when disconnected.
    pub fn log(&self) -> f64 {
        match self {
            TreeCount::Disconnected => f64::NEG_INFINITY,
            TreeCount::Connected { via_cofactor, .. } => *via_cofactor,
        }
    }
}

/// Weighted number of spanning trees (Kirchhoff's matrix-tree theorem).
pub fn spanning_tree_count(graph: &WeightedGraph) -> TreeCount {
    if !graph.is_connected() {
        return TreeCount::Disconnected;
    }
    let n = graph.num_nodes();
    if n == 1 {
        return TreeCount::Connected {
            via_spectrum: 0.0,
            via_cofactor: 0.0,
        };
    }
    let spectrum = laplacian_spectrum(graph);
    let via_spectrum = spectrum[1..].iter().map(|l| l.ln()).sum::<f64>() - (n as f64).ln();
    TreeCount::Connected {
        via_spectrum,
        via_cofactor: log_reduced_determinant(graph).unwrap_or(f64::NEG_INFINITY),
    }
}

/// log det of the reduced Laplacian via Cholesky; `None` if not positive definite.
pub fn log_reduced_determinant(graph: &WeightedGraph) -> Option<f64> {
    let n = graph.num_nodes();
    if n < 2 {
        return Some(0.0);
    }
    let reduced = laplacian(graph).remove_row(0).remove_column(0);
    let chol = reduced.cholesky()?;
    Some(
        2.0 * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>(),
    )
}

/// `(n·S(𝒢))^{1/n}`; zero for disconnected graphs and graphs with fewer than two nodes.
pub fn d_opt_laplacian(graph: &WeightedGraph) -> f64 {
    let n = graph.num_nodes();
    if n < 2 || !graph.is_connected() {
        return 0.0;
    }
    match log_reduced_determinant(graph) {
        Some(log_s) => (((n as f64).ln() + log_s) / n as f64).exp(),
        None => 0.0,
    }
}

/// Geometric mean of a positive spectrum.
pub fn d_opt_eigen(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::Domain("empty spectrum".into()));
    }
    if let Some(bad) = eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Domain(format!("non-positive eigenvalue {bad}")));
    }
    let mean_log = eigenvalues.iter().map(|l| l.ln()).sum::<f64>() / eigenvalues.len() as f64;
    Ok(mean_log.exp())
}

/// Second-smallest Laplacian eigenvalue; exactly zero when disconnected.
pub fn algebraic_connectivity(graph: &WeightedGraph) -> f64 {
    if graph.num_nodes() < 2 || !graph.is_connected() {
        return 0.0;
    }
    laplacian_spectrum(graph)[1]
}
