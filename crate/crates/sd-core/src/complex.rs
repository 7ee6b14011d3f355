//! Finite abstract simplicial complexes in canonical form.
//!
//! A complex is stored as its shortlex-sorted vertex labels plus the
//! antichain of maximal faces (index sets into the vertex list). Every
//! vertex belongs to at least one maximal face — isolated vertices are
//! singleton maximal faces — and the face family is kept in graded
//! lexicographic order, so structurally equal complexes compare equal.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shortlex order on labels: shorter strings first, ties broken bytewise.
///
/// This is the canonical vertex order everywhere in the crate; for decimal
/// labels it coincides with numeric order (`"2" < "10"`).
pub fn shortlex(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Graded lexicographic order on index faces: shorter faces first.
fn face_order(a: &[u32], b: &[u32]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Sort a face family into graded lexicographic order and drop duplicates
/// and faces contained in another member, leaving an antichain.
fn antichain(mut faces: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    faces.sort_by(|a, b| face_order(a, b));
    faces.dedup();
    let keep: Vec<bool> = faces
        .iter()
        .enumerate()
        .map(|(i, f)| {
            !faces
                .iter()
                .enumerate()
                .any(|(j, g)| i != j && f.len() <= g.len() && is_subset(f, g) && f != g)
        })
        .collect();
    faces
        .into_iter()
        .zip(keep)
        .filter_map(|(f, k)| k.then_some(f))
        .collect()
}

/// Subset test for sorted index slices.
fn is_subset(sub: &[u32], sup: &[u32]) -> bool {
    let mut it = sup.iter();
    'outer: for x in sub {
        for y in it.by_ref() {
            match y.cmp(x) {
                Ordering::Less => continue,
                Ordering::Equal => continue 'outer,
                Ordering::Greater => return false,
            }
        }
        return false;
    }
    true
}

/// Serialized form: vertex labels plus maximal faces as label lists.
#[derive(Serialize, Deserialize)]
struct ComplexJson {
    vertices: Vec<String>,
    maximal_faces: Vec<Vec<String>>,
}

/// A finite abstract simplicial complex in canonical form.
#[derive(Clone, PartialEq, Eq)]
pub struct Complex {
    vertices: Vec<String>,
    maximal_faces: Vec<Vec<u32>>,
}

impl std::fmt::Debug for Complex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Complex")
            .field("vertices", &self.vertices)
            .field("maximal_faces", &self.maximal_face_labels())
            .finish()
    }
}

impl Complex {
    /// Builds a complex from vertex labels and a face family given by labels.
    ///
    /// The face family may be redundant (duplicates, non-maximal members,
    /// unsorted); it is normalized here. Vertices missing from every face
    /// become singleton maximal faces. Errors on duplicate vertex labels or
    /// on a face mentioning an unknown vertex.
    pub fn new<S: AsRef<str>>(vertices: Vec<String>, faces: Vec<Vec<S>>) -> Result<Complex> {
        let mut sorted = vertices.clone();
        sorted.sort_by(|a, b| shortlex(a, b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            let dup = sorted
                .windows(2)
                .find(|w| w[0] == w[1])
                .map(|w| w[0].clone())
                .unwrap_or_default();
            return Err(Error::InvalidComplex(format!(
                "duplicate vertex label {dup:?}"
            )));
        }
        let index: BTreeMap<&str, u32> = sorted
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i as u32))
            .collect();
        let mut index_faces = Vec::with_capacity(faces.len());
        for face in &faces {
            let mut f = Vec::with_capacity(face.len());
            for label in face {
                let label = label.as_ref();
                let Some(&i) = index.get(label) else {
                    return Err(Error::InvalidComplex(format!(
                        "face mentions unknown vertex {label:?}"
                    )));
                };
                f.push(i);
            }
            f.sort_unstable();
            f.dedup();
            if !f.is_empty() {
                index_faces.push(f);
            }
        }
        Ok(Self::from_sorted_parts(sorted, index_faces))
    }

    /// Builds a complex from an already shortlex-sorted vertex list and
    /// index faces (possibly redundant). Internal constructor; callers
    /// guarantee the labels are sorted, unique, and indices are in range.
    fn from_sorted_parts(vertices: Vec<String>, mut faces: Vec<Vec<u32>>) -> Complex {
        let mut covered = vec![false; vertices.len()];
        for f in &faces {
            for &v in f {
                covered[v as usize] = true;
            }
        }
        for (v, c) in covered.iter().enumerate() {
            if !c {
                faces.push(vec![v as u32]);
            }
        }
        Complex {
            vertices,
            maximal_faces: antichain(faces),
        }
    }

    /// The empty complex (no vertices, no faces).
    pub fn empty() -> Complex {
        Complex {
            vertices: Vec::new(),
            maximal_faces: Vec::new(),
        }
    }

    /// Path with vertices `0..=n` and edges `{i, i+1}`; `path(0)` is a point.
    pub fn path(n: usize) -> Complex {
        let vertices: Vec<String> = (0..=n).map(|i| i.to_string()).collect();
        let faces: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32, i as u32 + 1]).collect();
        let mut sorted = vertices.clone();
        sorted.sort_by(|a, b| shortlex(a, b));
        // Decimal labels sort numerically under shortlex, so indices line up.
        debug_assert_eq!(sorted, vertices);
        Complex::from_sorted_parts(vertices, faces)
    }

    /// Cycle with vertices `0..n` and edges `{i, (i+1) mod n}`; needs `n >= 3`.
    pub fn cycle(n: usize) -> Result<Complex> {
        if n < 3 {
            return Err(Error::InvalidComplex(format!(
                "cycle needs at least 3 vertices, got {n}"
            )));
        }
        let vertices: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let faces: Vec<Vec<u32>> = (0..n)
            .map(|i| {
                let mut e = vec![i as u32, ((i + 1) % n) as u32];
                e.sort_unstable();
                e
            })
            .collect();
        Ok(Complex::from_sorted_parts(vertices, faces))
    }

    /// Full simplex on vertices `0..=k` (every subset is a face).
    pub fn full_simplex(k: usize) -> Complex {
        let vertices: Vec<String> = (0..=k).map(|i| i.to_string()).collect();
        let face: Vec<u32> = (0..=k as u32).collect();
        Complex::from_sorted_parts(vertices, vec![face])
    }

    /// Vertex labels in shortlex order.
    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    /// Number of vertices.
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Index of a label, if present.
    pub fn vertex_index(&self, label: &str) -> Option<u32> {
        self.vertices
            .binary_search_by(|v| shortlex(v, label))
            .ok()
            .map(|i| i as u32)
    }

    /// Label of a vertex index.
    pub fn label(&self, v: u32) -> &str {
        &self.vertices[v as usize]
    }

    /// Maximal faces as sorted index sets, in graded lexicographic order.
    pub fn maximal_faces(&self) -> &[Vec<u32>] {
        &self.maximal_faces
    }

    /// Maximal faces as label lists.
    pub fn maximal_face_labels(&self) -> Vec<Vec<String>> {
        self.maximal_faces
            .iter()
            .map(|f| f.iter().map(|&v| self.vertices[v as usize].clone()).collect())
            .collect()
    }

    /// Dimension: largest face size minus one; `-1` for the empty complex.
    pub fn dim(&self) -> i64 {
        self.maximal_faces
            .iter()
            .map(|f| f.len() as i64 - 1)
            .max()
            .unwrap_or(-1)
    }

    /// Face test for an index set (need not be sorted or deduplicated).
    /// The empty set is a face of every complex, including the empty one.
    pub fn is_face(&self, face: &[u32]) -> bool {
        let mut f = face.to_vec();
        f.sort_unstable();
        f.dedup();
        if f.is_empty() {
            return true;
        }
        if f.last().map(|&v| v as usize >= self.vertices.len()) == Some(true) {
            return false;
        }
        self.maximal_faces.iter().any(|m| is_subset(&f, m))
    }

    /// Face test for a label set.
    pub fn is_face_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<bool> {
        let mut f = Vec::with_capacity(labels.len());
        for l in labels {
            let Some(i) = self.vertex_index(l.as_ref()) else {
                return Err(Error::InvalidComplex(format!(
                    "unknown vertex {:?}",
                    l.as_ref()
                )));
            };
            f.push(i);
        }
        Ok(self.is_face(&f))
    }

    /// All faces of dimension `k` (size `k + 1`), sorted lexicographically.
    pub fn faces_of_dim(&self, k: usize) -> Vec<Vec<u32>> {
        let mut out = BTreeSet::new();
        for m in &self.maximal_faces {
            if m.len() >= k + 1 {
                subsets_of_size(m, k + 1, &mut out);
            }
        }
        out.into_iter().collect()
    }

    /// All nonempty faces in graded lexicographic order.
    pub fn all_faces(&self) -> Vec<Vec<u32>> {
        let mut out = BTreeSet::new();
        for m in &self.maximal_faces {
            for size in 1..=m.len() {
                subsets_of_size(m, size, &mut out);
            }
        }
        let mut v: Vec<Vec<u32>> = out.into_iter().collect();
        v.sort_by(|a, b| face_order(a, b));
        v
    }

    /// Categorical product: vertices are pairs, and a set of pairs is a face
    /// exactly when both coordinate projections are faces. Maximal faces are
    /// the products of maximal faces. Pair labels render as `(a,b)`.
    pub fn product(&self, other: &Complex) -> Complex {
        let mut vertices = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        // pair_index[a][b] = index of (a, b) in the shortlex-sorted list.
        let mut labeled: Vec<(String, u32, u32)> = Vec::new();
        for (i, a) in self.vertices.iter().enumerate() {
            for (j, b) in other.vertices.iter().enumerate() {
                labeled.push((format!("({a},{b})"), i as u32, j as u32));
            }
        }
        labeled.sort_by(|x, y| shortlex(&x.0, &y.0));
        let mut pair_index = vec![vec![0u32; other.vertices.len()]; self.vertices.len()];
        for (idx, (label, i, j)) in labeled.iter().enumerate() {
            pair_index[*i as usize][*j as usize] = idx as u32;
            vertices.push(label.clone());
        }
        let mut faces = Vec::with_capacity(self.maximal_faces.len() * other.maximal_faces.len());
        for ma in &self.maximal_faces {
            for mb in &other.maximal_faces {
                let mut f = Vec::with_capacity(ma.len() * mb.len());
                for &a in ma {
                    for &b in mb {
                        f.push(pair_index[a as usize][b as usize]);
                    }
                }
                f.sort_unstable();
                faces.push(f);
            }
        }
        Complex::from_sorted_parts(vertices, faces)
    }

    /// `k`-skeleton: all faces of dimension at most `k`.
    pub fn skeleton(&self, k: usize) -> Complex {
        let mut faces = Vec::new();
        for m in &self.maximal_faces {
            if m.len() <= k + 1 {
                faces.push(m.clone());
            } else {
                let mut subs = BTreeSet::new();
                subsets_of_size(m, k + 1, &mut subs);
                faces.extend(subs);
            }
        }
        Complex::from_sorted_parts(self.vertices.clone(), faces)
    }

    /// Barycentric subdivision: one vertex per nonempty face (labeled
    /// `{a,b,...}` with member labels in shortlex order), with faces the
    /// chains under inclusion. Maximal faces are the complete flags inside
    /// maximal faces of the original complex.
    pub fn subdivision(&self) -> Complex {
        let old_faces = self.all_faces();
        let mut labels: Vec<String> = old_faces.iter().map(|f| self.face_label(f)).collect();
        let face_idx: BTreeMap<&Vec<u32>, usize> =
            old_faces.iter().enumerate().map(|(i, f)| (f, i)).collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| shortlex(&labels[a], &labels[b]));
        let mut new_index = vec![0u32; labels.len()];
        for (pos, &old) in order.iter().enumerate() {
            new_index[old] = pos as u32;
        }
        labels.sort_by(|a, b| shortlex(a, b));

        let mut flags: Vec<Vec<u32>> = Vec::new();
        for m in &self.maximal_faces {
            let mut perm: Vec<u32> = m.clone();
            permutation_flags(&mut perm, 0, &mut |chain: &[u32]| {
                // chain is a permutation of m; its prefixes form a flag.
                let mut flag = Vec::with_capacity(chain.len());
                let mut prefix: Vec<u32> = Vec::with_capacity(chain.len());
                for &v in chain {
                    prefix.push(v);
                    prefix.sort_unstable();
                    let old = face_idx[&prefix];
                    flag.push(new_index[old]);
                }
                flag.sort_unstable();
                flags.push(flag);
            });
        }
        Complex::from_sorted_parts(labels, flags)
    }

    /// Renders a face as `{a,b,...}` with member labels in shortlex order.
    pub fn face_label(&self, face: &[u32]) -> String {
        let mut ls: Vec<&str> = face.iter().map(|&v| self.vertices[v as usize].as_str()).collect();
        ls.sort_by(|a, b| shortlex(a, b));
        format!("{{{}}}", ls.join(","))
    }

    /// Quotient by a partition of the vertex labels. Each class is labeled
    /// by its shortlex-least member; faces are the images of faces, with
    /// non-maximal images dropped. Errors unless the classes are nonempty,
    /// disjoint, and cover every vertex.
    pub fn quotient<S: AsRef<str>>(&self, classes: &[Vec<S>]) -> Result<Complex> {
        let mut class_of: Vec<Option<u32>> = vec![None; self.vertices.len()];
        let mut reps: Vec<String> = Vec::with_capacity(classes.len());
        for (c, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::InvalidComplex("empty class in partition".into()));
            }
            let mut rep: Option<&str> = None;
            for label in class {
                let label = label.as_ref();
                let Some(i) = self.vertex_index(label) else {
                    return Err(Error::InvalidComplex(format!(
                        "partition mentions unknown vertex {label:?}"
                    )));
                };
                if class_of[i as usize].is_some() {
                    return Err(Error::InvalidComplex(format!(
                        "vertex {label:?} appears in two classes"
                    )));
                }
                class_of[i as usize] = Some(c as u32);
                rep = Some(match rep {
                    Some(r) if shortlex(r, label) != Ordering::Greater => r,
                    _ => label,
                });
            }
            reps.push(rep.expect("nonempty class").to_string());
        }
        if let Some(missing) = class_of.iter().position(|c| c.is_none()) {
            return Err(Error::InvalidComplex(format!(
                "partition misses vertex {:?}",
                self.vertices[missing]
            )));
        }

        let mut sorted_reps = reps.clone();
        sorted_reps.sort_by(|a, b| shortlex(a, b));
        if sorted_reps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidComplex(
                "distinct classes share a representative label".into(),
            ));
        }
        let rep_index: BTreeMap<&str, u32> = sorted_reps
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i as u32))
            .collect();
        let class_to_new: Vec<u32> = reps.iter().map(|r| rep_index[r.as_str()]).collect();

        let faces: Vec<Vec<u32>> = self
            .maximal_faces
            .iter()
            .map(|m| {
                let mut img: Vec<u32> = m
                    .iter()
                    .map(|&v| class_to_new[class_of[v as usize].unwrap() as usize])
                    .collect();
                img.sort_unstable();
                img.dedup();
                img
            })
            .collect();
        Ok(Complex::from_sorted_parts(sorted_reps, faces))
    }

    /// Full subcomplex induced on a subset of the vertices: the faces are
    /// exactly the faces of `self` contained in the subset.
    pub fn full_subcomplex<S: AsRef<str>>(&self, subset: &[S]) -> Result<Complex> {
        let mut keep = vec![false; self.vertices.len()];
        let mut labels = Vec::with_capacity(subset.len());
        for l in subset {
            let Some(i) = self.vertex_index(l.as_ref()) else {
                return Err(Error::InvalidComplex(format!(
                    "unknown vertex {:?}",
                    l.as_ref()
                )));
            };
            if !keep[i as usize] {
                labels.push(self.vertices[i as usize].clone());
            }
            keep[i as usize] = true;
        }
        labels.sort_by(|a, b| shortlex(a, b));
        let new_index: BTreeMap<&str, u32> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let faces: Vec<Vec<u32>> = self
            .maximal_faces
            .iter()
            .filter_map(|m| {
                let f: Vec<u32> = m
                    .iter()
                    .filter(|&&v| keep[v as usize])
                    .map(|&v| new_index[self.vertices[v as usize].as_str()])
                    .collect();
                (!f.is_empty()).then_some(f)
            })
            .collect();
        Ok(Complex::from_sorted_parts(labels, faces))
    }

    /// Serializes to the interchange JSON form
    /// `{"vertices": [...], "maximal_faces": [[labels]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ComplexJson {
            vertices: self.vertices.clone(),
            maximal_faces: self.maximal_face_labels(),
        })
        .expect("complex serialization cannot fail")
    }

    /// Parses and validates the interchange JSON form.
    pub fn from_json_str(s: &str) -> Result<Complex> {
        let raw: ComplexJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("complex JSON: {e}")))?;
        Complex::new(raw.vertices, raw.maximal_faces)
    }
}

/// Pushes all sorted `size`-subsets of the sorted slice `face` into `out`.
fn subsets_of_size(face: &[u32], size: usize, out: &mut BTreeSet<Vec<u32>>) {
    let mut current = Vec::with_capacity(size);
    subsets_rec(face, size, 0, &mut current, out);
}

fn subsets_rec(
    face: &[u32],
    size: usize,
    start: usize,
    current: &mut Vec<u32>,
    out: &mut BTreeSet<Vec<u32>>,
) {
    if current.len() == size {
        out.insert(current.clone());
        return;
    }
    let needed = size - current.len();
    for i in start..=face.len().saturating_sub(needed) {
        current.push(face[i]);
        subsets_rec(face, size, i + 1, current, out);
        current.pop();
    }
}

/// Heap-style enumeration of permutations, invoking `visit` on each.
fn permutation_flags(items: &mut [u32], k: usize, visit: &mut impl FnMut(&[u32])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutation_flags(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Checks whether a total vertex map `a -> b` sends every face to a face.
/// The map must assign a `b`-vertex to every `a`-vertex.
pub fn is_simplicial_map(
    a: &Complex,
    b: &Complex,
    map: &BTreeMap<String, String>,
) -> Result<bool> {
    let assignment = vertex_map_indices(a, b, map)?;
    Ok(a.maximal_faces().iter().all(|m| {
        let img: Vec<u32> = m.iter().map(|&v| assignment[v as usize]).collect();
        b.is_face(&img)
    }))
}

/// Resolves a label-level vertex map into an index table, validating
/// totality and codomain membership.
pub fn vertex_map_indices(
    a: &Complex,
    b: &Complex,
    map: &BTreeMap<String, String>,
) -> Result<Vec<u32>> {
    let mut table = Vec::with_capacity(a.vertex_count());
    for v in a.vertices() {
        let Some(target) = map.get(v) else {
            return Err(Error::Incompatible(format!(
                "vertex map misses source vertex {v:?}"
            )));
        };
        let Some(t) = b.vertex_index(target) else {
            return Err(Error::Incompatible(format!(
                "vertex map sends {v:?} to unknown vertex {target:?}"
            )));
        };
        table.push(t);
    }
    for key in map.keys() {
        if a.vertex_index(key).is_none() {
            return Err(Error::Incompatible(format!(
                "vertex map mentions unknown source vertex {key:?}"
            )));
        }
    }
    Ok(table)
}
