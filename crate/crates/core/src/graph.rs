//! Region adjacency graphs with the spectral data the CAR density needs.
//!
//! The precision of the spatial prior is `Q(α) = D − αW` where `D` holds the
//! row sums of `W`. Its log-determinant is `ln det D + Σ ln(1 − α λ_i)` with
//! `λ` the eigenvalues of `D^{-1/2} W D^{-1/2}`, computed once here.
//!
//! Islands (regions with no neighbours) get `D_ii = 1`; their row of the
//! normalized operator is zero, so they contribute a zero eigenvalue and an
//! independent unit-precision component.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_symmetric, SquareMatrix};
use crate::scalar::Real;

/// One undirected edge, stored once with `i < j` (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialGraph<T> {
    n_regions: usize,
    edges: Vec<Edge<T>>,
    degrees: Vec<T>,
    spectrum: Vec<T>,
    islands: Vec<bool>,
}

impl<T: Real> SpatialGraph<T> {
    /// Builds a graph from 0-based `(i, j, w)` triples.
    ///
    /// Edges are normalized to `i < j` and sorted; self-loops, duplicates
    /// (in either orientation), non-positive weights and out-of-range indices
    /// are rejected.
    pub fn new(n_regions: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        if n_regions == 0 {
            return Err(Error::Graph("graph needs at least one region".into()));
        }
        let mut list = Vec::new();
        for (a, b, w) in edges {
            if a >= n_regions || b >= n_regions {
                return Err(Error::Graph(format!(
                    "edge ({}, {}) out of range for {n_regions} regions",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at region {}", a + 1)));
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::Graph(format!("edge ({}, {}) has non-positive weight {w}", a + 1, b + 1)));
            }
            list.push(Edge { i: a.min(b), j: a.max(b), weight: w });
        }
        list.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = list.windows(2).find(|w| w[0].i == w[1].i && w[0].j == w[1].j) {
            return Err(Error::Graph(format!("duplicate edge ({}, {})", w[0].i + 1, w[0].j + 1)));
        }

        let mut degrees = vec![T::zero(); n_regions];
        for e in &list {
            degrees[e.i] += e.weight;
            degrees[e.j] += e.weight;
        }
        let islands: Vec<bool> = degrees.iter().map(|&d| d == T::zero()).collect();
        for (d, &island) in degrees.iter_mut().zip(&islands) {
            if island {
                *d = T::one();
            }
        }

        let mut normalized = SquareMatrix::zeros(n_regions);
        for e in &list {
            let v = e.weight / (degrees[e.i] * degrees[e.j]).sqrt();
            normalized[(e.i, e.j)] = v;
            normalized[(e.j, e.i)] = v;
        }
        let mut spectrum = eig_symmetric(&normalized)?;
        // Every component with an edge has eigenvalue exactly 1 (and -1 when
        // bipartite); snap round-off so those stay singular at α = 1.
        let snap = T::lit(64.0) * T::epsilon();
        for l in &mut spectrum {
            if (T::one() - l.abs()).abs() <= snap {
                *l = l.signum();
            }
            *l = l.max(-T::one()).min(T::one());
        }

        Ok(Self { n_regions, edges: list, degrees, spectrum, islands })
    }

    /// Graph with no edges: every region is an island.
    pub fn disconnected(n_regions: usize) -> Result<Self> {
        Self::new(n_regions, std::iter::empty())
    }

    /// Cycle `0 - 1 - … - (n-1) - 0` with unit weights.
    pub fn ring(n_regions: usize) -> Result<Self> {
        if n_regions < 3 {
            return Err(Error::Graph("a ring needs at least three regions".into()));
        }
        Self::new(n_regions, (0..n_regions).map(|i| (i, (i + 1) % n_regions, T::one())))
    }

    /// Symmetric 0/1 graph from a possibly asymmetric nonnegative flow matrix:
    /// an edge exists iff there is positive flow in at least one direction.
    pub fn dichotomize(raw: &SquareMatrix<T>) -> Result<Self> {
        let n = raw.dim();
        let mut edges = Vec::new();
        for i in 0..n {
            if raw[(i, i)] != T::zero() {
                return Err(Error::Graph(format!("flow matrix has nonzero diagonal at region {}", i + 1)));
            }
            for j in 0..n {
                let v = raw[(i, j)];
                if !(v >= T::zero()) {
                    return Err(Error::Graph(format!("negative or NaN flow at ({}, {})", i + 1, j + 1)));
                }
            }
            for j in (i + 1)..n {
                if raw[(i, j)] > T::zero() || raw[(j, i)] > T::zero() {
                    edges.push((i, j, T::one()));
                }
            }
        }
        Self::new(n, edges)
    }

    /// Symmetric weighted graph from a dense adjacency matrix.
    pub fn from_dense(w: &SquareMatrix<T>) -> Result<Self> {
        w.check_symmetric(T::lit(1e-12)).map_err(|e| Error::Graph(e.to_string()))?;
        let n = w.dim();
        let mut edges = Vec::new();
        for i in 0..n {
            if w[(i, i)] != T::zero() {
                return Err(Error::Graph(format!("self-loop at region {}", i + 1)));
            }
            for j in (i + 1)..n {
                let v = w[(i, j)];
                if v < T::zero() {
                    return Err(Error::Graph(format!("negative weight at ({}, {})", i + 1, j + 1)));
                }
                if v > T::zero() {
                    edges.push((i, j, v));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    /// Eigenvalues of `D^{-1/2} W D^{-1/2}`, ascending.
    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    pub fn islands(&self) -> &[bool] {
        &self.islands
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    pub fn max_eigenvalue(&self) -> T {
        self.spectrum.last().copied().unwrap_or(T::zero())
    }

    /// Number of neighbours of each region.
    pub fn neighbour_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_regions];
        for e in &self.edges {
            counts[e.i] += 1;
            counts[e.j] += 1;
        }
        counts
    }

    /// Dense `W`.
    pub fn adjacency(&self) -> SquareMatrix<T> {
        let mut w = SquareMatrix::zeros(self.n_regions);
        for e in &self.edges {
            w[(e.i, e.j)] = e.weight;
            w[(e.j, e.i)] = e.weight;
        }
        w
    }

    /// Dense `Q(α) = D − αW`.
    pub fn precision(&self, alpha: T) -> SquareMatrix<T> {
        let mut q = self.adjacency();
        for i in 0..self.n_regions {
            for j in 0..self.n_regions {
                q[(i, j)] = -alpha * q[(i, j)];
            }
            q[(i, i)] = self.degrees[i];
        }
        q
    }

    /// `W x`, touching each stored edge once.
    pub fn mul_adjacency(&self, x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for e in &self.edges {
            out[e.i] += e.weight * x[e.j];
            out[e.j] += e.weight * x[e.i];
        }
    }

    /// `ln det D`.
    pub fn ln_det_degrees(&self) -> T {
        self.degrees.iter().map(|d| d.ln()).sum()
    }
}

/// Reads a graph file.
///
/// Two layouts are accepted, both with a header row:
/// - edge list with header `i,j,weight` and 1-based region indices;
/// - dense `G × G` matrix whose header lists the region names.
///
/// With `dichotomize`, the input is treated as a (possibly asymmetric) flow
/// matrix and thresholded; otherwise it must already be symmetric (an edge
/// list must then name each pair once).
pub fn read_graph_csv(path: &Path, n_regions: usize, dichotomize: bool) -> Result<SpatialGraph<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let is_edge_list = headers.len() == 3
        && headers.iter().map(|h| h.to_ascii_lowercase()).eq(["i", "j", "weight"]);

    let parse = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Graph(format!("{}: line {line}: cannot parse {s:?}", path.display())))
    };

    let mut raw = SquareMatrix::<f64>::zeros(n_regions);
    if is_edge_list {
        let mut triples = Vec::new();
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let line = k + 2;
            let i = parse(&rec[0], line)?;
            let j = parse(&rec[1], line)?;
            let w = parse(&rec[2], line)?;
            if i < 1.0 || j < 1.0 || i.fract() != 0.0 || j.fract() != 0.0 {
                return Err(Error::Graph(format!("{}: line {line}: indices are 1-based integers", path.display())));
            }
            let (i, j) = (i as usize - 1, j as usize - 1);
            if i >= n_regions || j >= n_regions {
                return Err(Error::Graph(format!(
                    "{}: line {line}: index out of range for {n_regions} regions",
                    path.display()
                )));
            }
            triples.push((i, j, w));
        }
        if !dichotomize {
            return SpatialGraph::new(n_regions, triples);
        }
        for (i, j, w) in triples {
            raw[(i, j)] += w;
        }
    } else {
        if headers.len() != n_regions {
            return Err(Error::Graph(format!(
                "{}: dense matrix has {} columns, expected {n_regions}",
                path.display(),
                headers.len()
            )));
        }
        let mut rows = 0;
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if k >= n_regions || rec.len() != n_regions {
                return Err(Error::Graph(format!("{}: dense matrix must be {n_regions}x{n_regions}", path.display())));
            }
            for (j, cell) in rec.iter().enumerate() {
                raw[(k, j)] = parse(cell, k + 2)?;
            }
            rows += 1;
        }
        if rows != n_regions {
            return Err(Error::Graph(format!("{}: dense matrix must be {n_regions}x{n_regions}", path.display())));
        }
    }
    if dichotomize {
        SpatialGraph::dichotomize(&raw)
    } else {
        SpatialGraph::from_dense(&raw)
    }
}

/// Writes the edge list layout accepted by [`read_graph_csv`].
pub fn write_edge_list(path: &Path, graph: &SpatialGraph<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["i", "j", "weight"]).map_err(|e| Error::csv(path, e))?;
    for e in graph.edges() {
        w.write_record([(e.i + 1).to_string(), (e.j + 1).to_string(), e.weight.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn two_node_path() {
        let g = SpatialGraph::new(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(g.degrees(), &[1.0, 1.0]);
        assert!(close(g.spectrum(), &[-1.0, 1.0], 1e-14));
    }

    #[test]
    fn complete_triangle() {
        // Normalized K3 is (J - I)/2: eigenvalues -1/2 (twice) and 1.
        let g = SpatialGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(g.degrees(), &[2.0, 2.0, 2.0]);
        assert!(close(g.spectrum(), &[-0.5, -0.5, 1.0], 1e-14));
    }

    #[test]
    fn single_island() {
        let g = SpatialGraph::<f64>::disconnected(1).unwrap();
        assert_eq!(g.degrees(), &[1.0]);
        assert_eq!(g.spectrum(), &[0.0]);
        assert_eq!(g.islands(), &[true]);
    }

    #[test]
    fn island_gets_unit_degree_and_zero_eigenvalue() {
        let g = SpatialGraph::new(3, [(0, 1, 2.0)]).unwrap();
        assert_eq!(g.degrees(), &[2.0, 2.0, 1.0]);
        assert_eq!(g.islands(), &[false, false, true]);
        assert!(close(g.spectrum(), &[-1.0, 0.0, 1.0], 1e-14));
    }

    #[test]
    fn construction_errors() {
        assert!(SpatialGraph::new(2, [(0, 0, 1.0)]).is_err());
        assert!(SpatialGraph::new(2, [(0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(SpatialGraph::new(2, [(0, 2, 1.0)]).is_err());
        assert!(SpatialGraph::new(2, [(0, 1, 0.0)]).is_err());
        assert!(SpatialGraph::<f64>::new(0, []).is_err());
    }

    #[test]
    fn dichotomize_one_way_flow() {
        let raw = SquareMatrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let g = SpatialGraph::dichotomize(&raw).unwrap();
        assert_eq!(g.edges(), &[Edge { i: 0, j: 1, weight: 1.0 }]);
        let zeros = SquareMatrix::<f64>::zeros(4);
        let g0 = SpatialGraph::dichotomize(&zeros).unwrap();
        assert!(g0.edges().is_empty());
        assert!(g0.islands().iter().all(|&x| x));
    }

    #[test]
    fn dichotomize_matches_symmetrize_then_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let raw = SquareMatrix::from_fn(5, |i, j| {
                if i == j || rng.random_bool(0.6) { 0.0 } else { rng.random_range(0.1..10.0) }
            });
            let g = SpatialGraph::dichotomize(&raw).unwrap();
            let w = g.adjacency();
            assert_eq!(w, w.transpose());
            for i in 0..5 {
                for j in 0..5 {
                    let sym = raw[(i, j)] + raw[(j, i)];
                    let expected = if sym > 0.0 { 1.0 } else { 0.0 };
                    assert_eq!(w[(i, j)], expected);
                }
            }
        }
    }

    #[test]
    fn dichotomize_rejects_bad_input() {
        let neg = SquareMatrix::from_rows(&[vec![0.0, -1.0], vec![0.0, 0.0]]).unwrap();
        assert!(SpatialGraph::dichotomize(&neg).is_err());
        let diag = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(SpatialGraph::dichotomize(&diag).is_err());
    }

    #[test]
    fn spectrum_bounds_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.random_range(2..12);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.4) {
                        edges.push((i, j, rng.random_range(0.2..3.0)));
                    }
                }
            }
            let g = SpatialGraph::new(n, edges).unwrap();
            assert!(g.spectrum().iter().all(|&l| (-1.0..=1.0).contains(&l)));
            for alpha in [0.0, 0.5, 0.99, 0.999_999] {
                assert!(g.spectrum().iter().all(|&l| 1.0 - alpha * l > 0.0));
            }
        }
    }

    #[test]
    fn ring_degrees() {
        let g = SpatialGraph::<f64>::ring(6).unwrap();
        assert_eq!(g.degrees(), &[2.0; 6]);
        assert_eq!(g.edges().len(), 6);
        assert!((g.max_eigenvalue() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip_and_formats() {
        let dir = std::env::temp_dir().join(format!("strich-graph-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = SpatialGraph::new(4, [(0, 1, 1.0), (1, 2, 2.5), (0, 3, 1.0)]).unwrap();
        let p = dir.join("edges.csv");
        write_edge_list(&p, &g).unwrap();
        assert_eq!(read_graph_csv(&p, 4, false).unwrap(), g);

        let dense = dir.join("dense.csv");
        std::fs::write(&dense, "a,b,c\n0,3,0\n0,0,0\n1,0,0\n").unwrap();
        let flows = read_graph_csv(&dense, 3, true).unwrap();
        assert_eq!(flows.edges().len(), 2);
        assert!(read_graph_csv(&dense, 3, false).is_err());
        assert!(read_graph_csv(&dense, 4, true).is_err());
        assert!(read_graph_csv(&dir.join("missing.csv"), 3, false).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
