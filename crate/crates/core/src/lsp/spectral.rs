//! Spectral node embedding from the graph Laplacian.
//!
//! Nodes are mapped to R⁴ using the 2nd through 5th eigenvectors of
//! L = D − A over the undirected, unweighted node/link graph (the first
//! eigenvector is constant and carries no information). The embedding
//! places hydraulically "near" nodes close together, which gives the
//! genetic search a continuous gene space to blend and mutate in.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::NetworkModel;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding {
    /// Per-node coordinates, indexed by global node index.
    pub coords: Vec<[f64; 4]>,
    /// Full Laplacian spectrum, ascending; `eigenvalues[1..5]` are the
    /// ones whose eigenvectors form the embedding.
    pub eigenvalues: Vec<f64>,
}

/// Embed every node of the network into R⁴.
///
/// Requires a connected graph (λ₂ > 0) with at least 5 nodes. Eigenvector
/// signs are fixed by making each vector's largest-magnitude entry
/// positive; with repeated eigenvalues the basis within an eigenspace is
/// whatever the eigensolver produces, which is deterministic for a given
/// input but not canonical.
pub fn spectral_embedding(model: &NetworkModel) -> Result<NodeEmbedding> {
    let n = model.node_count();
    if n < 5 {
        return Err(Error::TooSmall { nodes: n });
    }

    let mut adj = DMatrix::<f64>::zeros(n, n);
    for (u, v) in model.edges_by_index()? {
        if u != v {
            adj[(u, v)] = 1.0;
            adj[(v, u)] = 1.0;
        }
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        lap[(i, i)] = adj.row(i).sum();
    }
    lap -= &adj;

    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    if eigenvalues[1] < 1e-9 {
        return Err(Error::Disconnected {
            lambda2: eigenvalues[1],
        });
    }

    let mut coords = vec![[0.0f64; 4]; n];
    for (dim, &col) in order[1..5].iter().enumerate() {
        let v = eig.eigenvectors.column(col);
        let mut m = 0;
        for i in 1..n {
            if v[i].abs() > v[m].abs() {
                m = i;
            }
        }
        let sign = if v[m] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][dim] = sign * v[i];
        }
    }

    Ok(NodeEmbedding {
        coords,
        eigenvalues,
    })
}

/// Candidate node closest (Euclidean) to `point`; ties break toward the
/// smallest node index. `candidates` must be non-empty.
pub fn nearest_node(emb: &NodeEmbedding, point: &[f64; 4], candidates: &[usize]) -> usize {
    assert!(!candidates.is_empty(), "nearest_node needs candidates");
    let mut best = candidates[0];
    let mut best_d = dist2(&emb.coords[best], point);
    for &c in &candidates[1..] {
        let d = dist2(&emb.coords[c], point);
        if d < best_d || (d == best_d && c < best) {
            best = c;
            best_d = d;
        }
    }
    best
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
