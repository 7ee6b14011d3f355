//! Simplicial homology over the integers.
//!
//! Boundary matrices use the orientation induced by sorted vertex indices;
//! Smith normal form runs over arbitrary-precision integers (intermediate
//! entries can grow far beyond the input magnitude), with the smallest
//! absolute value as pivot for coefficient control and determinism.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::complex::Complex;

/// Row-major integer matrix with explicit shape (rows or columns may be 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<i64>>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Vec<i64>>) -> IntMatrix {
        assert_eq!(entries.len(), rows);
        assert!(entries.iter().all(|r| r.len() == cols));
        IntMatrix { rows, cols, entries }
    }

    pub fn zero(rows: usize, cols: usize) -> IntMatrix {
        IntMatrix {
            rows,
            cols,
            entries: vec![vec![0; cols]; rows],
        }
    }
}

/// Smith normal form `u * m * v = d` with unimodular `u`, `v` and diagonal
/// `d` whose nonnegative entries satisfy `d[0] | d[1] | ...`.
#[derive(Clone, Debug)]
pub struct Snf {
    pub d: Vec<Vec<BigInt>>,
    pub u: Vec<Vec<BigInt>>,
    pub v: Vec<Vec<BigInt>>,
}

impl Snf {
    /// Diagonal entries, including zeros, up to `min(rows, cols)`.
    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.d.len().min(self.d.first().map_or(0, |r| r.len())))
            .map(|i| self.d[i][i].clone())
            .collect()
    }

    /// Number of nonzero diagonal entries (the rank of the input).
    pub fn rank(&self) -> usize {
        self.diagonal().iter().filter(|x| !x.is_zero()).count()
    }
}

fn identity(n: usize) -> Vec<Vec<BigInt>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::from(1) } else { BigInt::zero() })
                .collect()
        })
        .collect()
}

/// Computes the Smith normal form of an integer matrix.
pub fn smith_normal_form(m: &IntMatrix) -> Snf {
    let rows = m.rows;
    let cols = m.cols;
    let mut a: Vec<Vec<BigInt>> = m
        .entries
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let mut u = identity(rows);
    let mut v = identity(cols);

    let mut t = 0;
    while t < rows.min(cols) {
        if !reduce_pivot(&mut a, &mut u, &mut v, t) {
            break;
        }
        t += 1;
    }
    let limit = t;

    // Enforce the divisibility chain d[i] | d[i+1]. Adding column i+1 into
    // column i plants d[i+1] under the pivot; re-reducing the block turns
    // the pair into (gcd, lcm).
    let mut i = 0;
    while i + 1 < limit {
        let (di, dj) = (a[i][i].clone(), a[i + 1][i + 1].clone());
        if (&dj % &di).is_zero() {
            i += 1;
            continue;
        }
        for r in 0..rows {
            let add = a[r][i + 1].clone();
            a[r][i] += add;
        }
        for r in 0..cols {
            let add = v[r][i + 1].clone();
            v[r][i] += add;
        }
        reduce_pivot(&mut a, &mut u, &mut v, i);
        if i > 0 {
            // The new gcd pivot may break divisibility with its predecessor.
            i -= 1;
        }
    }

    // Normalize diagonal signs.
    for t in 0..limit {
        if a[t][t].is_negative() {
            for j in 0..cols {
                let x = -a[t][j].clone();
                a[t][j] = x;
            }
            for j in 0..rows {
                let x = -u[t][j].clone();
                u[t][j] = x;
            }
        }
    }
    Snf { d: a, u, v }
}

/// Clears row `t` and column `t` of everything but a single entry at
/// `(t, t)`, using Euclidean row/column operations; returns false when the
/// trailing submatrix is entirely zero (no pivot exists).
fn reduce_pivot(
    a: &mut [Vec<BigInt>],
    u: &mut [Vec<BigInt>],
    v: &mut [Vec<BigInt>],
    t: usize,
) -> bool {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    loop {
        // Deterministic pivot: smallest absolute value, ties by (row, col).
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !a[i][j].is_zero()
                    && pivot.map_or(true, |(pi, pj)| a[i][j].abs() < a[pi][pj].abs())
                {
                    pivot = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = pivot else {
            return false;
        };
        if pi != t {
            a.swap(pi, t);
            u.swap(pi, t);
        }
        if pj != t {
            for row in a.iter_mut() {
                row.swap(pj, t);
            }
            for row in v.iter_mut() {
                row.swap(pj, t);
            }
        }
        let mut clean = true;
        for i in 0..rows {
            if i == t || a[i][t].is_zero() {
                continue;
            }
            let q = a[i][t].div_floor(&a[t][t]);
            if !q.is_zero() {
                for j in 0..cols {
                    let s = &a[t][j] * &q;
                    a[i][j] -= s;
                }
                for j in 0..u[0].len() {
                    let s = &u[t][j] * &q;
                    u[i][j] -= s;
                }
            }
            if !a[i][t].is_zero() {
                clean = false;
            }
        }
        for j in 0..cols {
            if j == t || a[t][j].is_zero() {
                continue;
            }
            let q = a[t][j].div_floor(&a[t][t]);
            if !q.is_zero() {
                for i in 0..rows {
                    let s = &a[i][t] * &q;
                    a[i][j] -= s;
                }
                for i in 0..v.len() {
                    let s = &v[i][t] * &q;
                    v[i][j] -= s;
                }
            }
            if !a[t][j].is_zero() {
                clean = false;
            }
        }
        // An off-pivot remainder is strictly smaller than the pivot, so the
        // loop reselects and terminates.
        if clean {
            return true;
        }
    }
}

/// Boundary matrices `∂_k: C_k -> C_{k-1}` for `k = 1..=dim`, rows indexed
/// by the sorted list of `(k-1)`-faces and columns by the sorted `k`-faces.
/// Entry signs alternate with the position of the omitted vertex.
pub fn boundary_matrices(c: &Complex) -> Vec<IntMatrix> {
    let dim = c.dim();
    if dim < 1 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(dim as usize);
    let mut lower = c.faces_of_dim(0);
    for k in 1..=dim as usize {
        let upper = c.faces_of_dim(k);
        let index: BTreeMap<&Vec<u32>, usize> =
            lower.iter().enumerate().map(|(i, f)| (f, i)).collect();
        let mut m = IntMatrix::zero(lower.len(), upper.len());
        for (j, face) in upper.iter().enumerate() {
            for omit in 0..face.len() {
                let mut sub: Vec<u32> = face.clone();
                sub.remove(omit);
                let i = index[&sub];
                m.entries[i][j] = if omit % 2 == 0 { 1 } else { -1 };
            }
        }
        out.push(m);
        lower = upper;
    }
    out
}

/// Integral homology, one entry per dimension `0..=dim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Homology {
    /// Betti numbers by dimension.
    pub betti: Vec<u64>,
    /// Torsion coefficients by dimension (each sorted, each `>= 2`).
    pub torsion: Vec<Vec<u64>>,
}

impl Homology {
    /// True when the reduced homology vanishes: one connected component,
    /// no higher Betti numbers, no torsion.
    pub fn reduced_is_zero(&self) -> bool {
        self.betti.first().copied().unwrap_or(0) == 1
            && self.betti.iter().skip(1).all(|&b| b == 0)
            && self.torsion.iter().all(|t| t.is_empty())
    }
}

/// Computes integral homology from Smith normal forms of the boundary maps.
pub fn integral_homology(c: &Complex) -> Homology {
    let dim = c.dim();
    if dim < 0 {
        return Homology {
            betti: Vec::new(),
            torsion: Vec::new(),
        };
    }
    let dim = dim as usize;
    let counts: Vec<usize> = (0..=dim).map(|k| c.faces_of_dim(k).len()).collect();
    let snfs: Vec<Snf> = boundary_matrices(c).iter().map(smith_normal_form).collect();
    let rank = |k: usize| -> usize {
        // snfs[k-1] is ∂_k; ∂_0 and ∂_{dim+1} are zero maps.
        if k == 0 || k > dim {
            0
        } else {
            snfs[k - 1].rank()
        }
    };
    let mut betti = Vec::with_capacity(dim + 1);
    let mut torsion = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        betti.push((counts[k] - rank(k) - rank(k + 1)) as u64);
        let tor = if k + 1 > dim {
            Vec::new()
        } else {
            snfs[k]
                .diagonal()
                .iter()
                .filter(|d| d.abs() > BigInt::from(1))
                .map(|d| {
                    d.to_u64()
                        .expect("torsion coefficient exceeds u64 range")
                })
                .collect()
        };
        torsion.push(tor);
    }
    Homology { betti, torsion }
}

/// Euler characteristic: alternating sum of face counts.
pub fn euler_characteristic(c: &Complex) -> i64 {
    let mut chi = 0i64;
    for k in 0..=c.dim() {
        let n = c.faces_of_dim(k as usize).len() as i64;
        chi += if k % 2 == 0 { n } else { -n };
    }
    chi
}

/// Vertex partition into connected components, each sorted in label order
/// and the list sorted by first label.
pub fn connected_components(c: &Complex) -> Vec<Vec<String>> {
    let n = c.vertex_count();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }
    for face in c.maximal_faces() {
        for w in face.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for v in 0..n as u32 {
        let root = find(&mut parent, v);
        groups
            .entry(root)
            .or_default()
            .push(c.label(v).to_string());
    }
    groups.into_values().collect()
}

/// Greedy elementary collapses: repeatedly removes the open star of the
/// first free face (graded lexicographic order) until none remains.
/// Returns the collapsed complex and whether it shrank to a single point.
pub fn collapse(c: &Complex) -> (Complex, bool) {
    let mut current = c.clone();
    loop {
        let faces = current.all_faces();
        let maximal = current.maximal_faces().to_vec();
        let free = faces.iter().find_map(|f| {
            let mut containing = maximal
                .iter()
                .filter(|m| m.len() > f.len() && super_contains(m, f));
            match (containing.next(), containing.next()) {
                (Some(m), None) => Some((f.clone(), m.clone())),
                _ => None,
            }
        });
        let Some((f, m)) = free else {
            break;
        };
        // Remove the interval [f, m]: replace m by its facets avoiding f,
        // drop the vertices of f if they become isolated.
        let mut new_faces: Vec<Vec<String>> = Vec::new();
        for other in &maximal {
            if *other != m {
                new_faces.push(other.iter().map(|&v| current.label(v).to_string()).collect());
            }
        }
        for &x in &f {
            let facet: Vec<String> = m
                .iter()
                .filter(|&&v| v != x)
                .map(|&v| current.label(v).to_string())
                .collect();
            if !facet.is_empty() {
                new_faces.push(facet);
            }
        }
        let vertices: Vec<String> = {
            let mut used: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
            for face in &new_faces {
                for v in face {
                    used.insert(v);
                }
            }
            used.into_iter().map(|s| s.to_string()).collect()
        };
        current = Complex::new(vertices, new_faces).expect("collapse preserves validity");
    }
    let fully = current.vertex_count() == 1;
    (current, fully)
}

fn super_contains(sup: &[u32], sub: &[u32]) -> bool {
    sub.iter().all(|x| sup.binary_search(x).is_ok())
}
