//! Homomorphism complexes and polymorphism lifting.
//!
//! Four constructions on the set of simplicial maps `a -> b` (optionally
//! restricted to output coordinates `alpha` and pinned by a partial map
//! `rho`):
//!
//! * the internal-hom complex: the full subcomplex of the power
//!   `b^|alpha|` induced on the restricted assignments, so a set of maps
//!   is a face iff each per-coordinate value set is a face of `b`;
//! * the mix complex: a set of maps is a face iff every mixed assignment
//!   (choosing a member's value independently at each coordinate) is
//!   itself a vertex.
//!
//! Every polymorphism of `b` lifts to a polymorphism of either complex by
//! coordinatewise application, which is the engine behind "the hom
//! complexes inherit every height-1 witness of the target".

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::complex::Complex;
use crate::csp::{self, Mode, Solutions};
use crate::identities::{self, Carrier, WitnessTable};
use crate::structures::{face_relations, RelStructure};
use crate::{Error, Result};

/// Which face condition a [`HomComplexResult`] was built with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomVariant {
    /// Full subcomplex of the power: per-coordinate value sets are faces.
    Hom,
    /// Mix condition: every mixed assignment is a vertex.
    HomSc,
}

/// One vertex of a hom complex: a restricted assignment `alpha -> b`
/// extendable to a full homomorphism that also extends the governing rho.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomVertex {
    pub assignment: BTreeMap<String, String>,
}

/// A hom complex together with the data that produced it.
#[derive(Clone, Debug)]
pub struct HomComplexResult {
    pub complex: Complex,
    pub variant: HomVariant,
    /// Output coordinates, in the source complex's vertex order.
    pub alpha: Vec<String>,
    pub rho: BTreeMap<String, String>,
    /// Restricted assignments, aligned with `complex.vertices()`.
    pub vertices: Vec<HomVertex>,
}

impl HomComplexResult {
    /// The assignment behind a vertex label.
    pub fn assignment_for(&self, label: &str) -> Option<&BTreeMap<String, String>> {
        let idx = self
            .complex
            .vertices()
            .iter()
            .position(|v| v == label)?;
        Some(&self.vertices[idx].assignment)
    }

    /// Complex JSON plus a sidecar mapping vertex labels to assignments.
    pub fn to_json(&self) -> serde_json::Value {
        let assignments: BTreeMap<&String, &BTreeMap<String, String>> = self
            .complex
            .vertices()
            .iter()
            .zip(self.vertices.iter())
            .map(|(label, v)| (label, &v.assignment))
            .collect();
        serde_json::json!({
            "variant": match self.variant {
                HomVariant::Hom => "hom",
                HomVariant::HomSc => "hom_sc",
            },
            "alpha": self.alpha,
            "rho": self.rho,
            "complex": self.complex.to_json(),
            "assignments": assignments,
        })
    }
}

/// Upper bound on materialized homomorphisms.
const HOM_BUDGET: u64 = 500_000;
/// Upper bound on candidate-face tuples and box-lattice nodes.
const FACE_BUDGET: u64 = 200_000;

fn validate_rho(a: &Complex, b: &Complex, rho: &BTreeMap<String, String>) -> Result<()> {
    for (k, v) in rho {
        if a.vertex_index(k).is_none() {
            return Err(Error::Incompatible(format!(
                "pinned vertex {k:?} is not a source vertex"
            )));
        }
        if b.vertex_index(v).is_none() {
            return Err(Error::Incompatible(format!(
                "pinned value {v:?} is not a target vertex"
            )));
        }
    }
    Ok(())
}

/// Alpha as sorted source-vertex indices; rejects unknowns and duplicates.
fn validate_alpha(a: &Complex, alpha: &[String]) -> Result<Vec<u32>> {
    let mut idx = Vec::with_capacity(alpha.len());
    for v in alpha {
        match a.vertex_index(v) {
            Some(i) => idx.push(i),
            None => {
                return Err(Error::Incompatible(format!(
                    "output coordinate {v:?} is not a source vertex"
                )))
            }
        }
    }
    idx.sort_unstable();
    if idx.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Incompatible(
            "duplicate output coordinate in alpha".into(),
        ));
    }
    Ok(idx)
}

/// All simplicial maps `a -> b` extending `rho`, as vectors of target
/// vertex indices in source vertex order, lexicographically sorted.
fn homs_as_vectors(
    a: &Complex,
    b: &Complex,
    rho: &BTreeMap<String, String>,
) -> Result<Vec<Vec<u8>>> {
    if a.vertex_count() == 0 {
        return Ok(vec![Vec::new()]);
    }
    if b.vertex_count() == 0 {
        return Ok(Vec::new());
    }
    // Faces larger than dim(b)+1 vertices can never map onto a face, and
    // a map is simplicial iff all its restrictions to faces of at most
    // dim(b)+2 vertices are, so higher arities add nothing.
    let top = (a.dim().min(b.dim() + 1)) as usize;
    let instance = RelStructure::from_parts(a.vertices().to_vec(), face_relations(a, top)?);
    let template = RelStructure::from_parts(b.vertices().to_vec(), face_relations(b, top)?);
    let Solutions::Count(count) = csp::solve(&instance, &template, rho, Mode::Count)? else {
        unreachable!()
    };
    if count > HOM_BUDGET {
        return Err(Error::TooLarge(format!(
            "{count} homomorphisms exceed the materialization budget"
        )));
    }
    let Solutions::All(maps) = csp::solve(&instance, &template, rho, Mode::All)? else {
        unreachable!()
    };
    let mut vectors: Vec<Vec<u8>> = maps
        .iter()
        .map(|m| {
            a.vertices()
                .iter()
                .map(|v| b.vertex_index(&m[v]).expect("solver stays in the template") as u8)
                .collect()
        })
        .collect();
    vectors.sort_unstable();
    Ok(vectors)
}

/// All simplicial maps `a -> b` extending `rho`, in lexicographic
/// assignment order (source vertices ordered, values by target order).
pub fn enumerate_homomorphisms(
    a: &Complex,
    b: &Complex,
    rho: &BTreeMap<String, String>,
) -> Result<Vec<BTreeMap<String, String>>> {
    validate_rho(a, b, rho)?;
    let vectors = homs_as_vectors(a, b, rho)?;
    Ok(vectors
        .iter()
        .map(|h| {
            h.iter()
                .enumerate()
                .map(|(i, &x)| {
                    (
                        a.vertices()[i].clone(),
                        b.vertices()[x as usize].clone(),
                    )
                })
                .collect()
        })
        .collect())
}

/// Vertex label for a restricted assignment, e.g. `f(0)=1;f(2)=3`.
fn assignment_label(a: &Complex, b: &Complex, alpha_idx: &[u32], values: &[u8]) -> String {
    alpha_idx
        .iter()
        .zip(values.iter())
        .map(|(&av, &x)| format!("f({})={}", a.label(av), b.label(x as u32)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Shared front half of the four constructions: validated alpha indices
/// plus the sorted, deduplicated restricted assignments.
fn restricted_vertices(
    a: &Complex,
    alpha: &[String],
    rho: &BTreeMap<String, String>,
    b: &Complex,
) -> Result<(Vec<u32>, Vec<Vec<u8>>)> {
    validate_rho(a, b, rho)?;
    let alpha_idx = validate_alpha(a, alpha)?;
    let homs = homs_as_vectors(a, b, rho)?;
    let projected: BTreeSet<Vec<u8>> = homs
        .iter()
        .map(|h| alpha_idx.iter().map(|&i| h[i as usize]).collect())
        .collect();
    Ok((alpha_idx, projected.into_iter().collect()))
}

fn assemble(
    a: &Complex,
    b: &Complex,
    alpha_idx: &[u32],
    rho: &BTreeMap<String, String>,
    points: &[Vec<u8>],
    faces: Vec<Vec<String>>,
    variant: HomVariant,
) -> Result<HomComplexResult> {
    let mut by_label: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut labels = Vec::with_capacity(points.len());
    for p in points {
        let label = assignment_label(a, b, alpha_idx, p);
        let assignment: BTreeMap<String, String> = alpha_idx
            .iter()
            .zip(p.iter())
            .map(|(&av, &x)| (a.label(av).to_string(), b.label(x as u32).to_string()))
            .collect();
        by_label.insert(label.clone(), assignment);
        labels.push(label);
    }
    let complex = Complex::new(labels, faces)?;
    let vertices = complex
        .vertices()
        .iter()
        .map(|l| HomVertex {
            assignment: by_label[l].clone(),
        })
        .collect();
    Ok(HomComplexResult {
        complex,
        variant,
        alpha: alpha_idx.iter().map(|&i| a.label(i).to_string()).collect(),
        rho: rho.clone(),
        vertices,
    })
}

/// The restricted internal-hom complex: full subcomplex of `b^|alpha|` on
/// the extendable restricted assignments.
pub fn hom_restricted(
    a: &Complex,
    alpha: &[String],
    rho: &BTreeMap<String, String>,
    b: &Complex,
) -> Result<HomComplexResult> {
    let (alpha_idx, points) = restricted_vertices(a, alpha, rho, b)?;
    let mut faces: Vec<Vec<String>> = Vec::new();
    if !points.is_empty() {
        // Every face lies inside a product of maximal faces of b taken
        // per coordinate, and every such trace is a face, so the traces
        // of maximal-face tuples cover exactly the maximal faces.
        let mf = b.maximal_faces();
        let tuple_count = (mf.len() as u64)
            .checked_pow(alpha_idx.len() as u32)
            .filter(|&t| t <= FACE_BUDGET && t * points.len() as u64 <= 100 * FACE_BUDGET);
        if tuple_count.is_none() {
            return Err(Error::TooLarge(
                "face enumeration over maximal-face tuples exceeds the budget".into(),
            ));
        }
        let member = |m: &Vec<u32>, x: u8| m.binary_search(&(x as u32)).is_ok();
        let mut tuple = vec![0usize; alpha_idx.len()];
        loop {
            let trace: Vec<Vec<u8>> = points
                .iter()
                .filter(|p| {
                    p.iter()
                        .enumerate()
                        .all(|(j, &x)| member(&mf[tuple[j]], x))
                })
                .cloned()
                .collect();
            if !trace.is_empty() {
                faces.push(
                    trace
                        .iter()
                        .map(|p| assignment_label(a, b, &alpha_idx, p))
                        .collect(),
                );
            }
            let mut j = alpha_idx.len();
            let mut done = true;
            while j > 0 {
                j -= 1;
                tuple[j] += 1;
                if tuple[j] < mf.len() {
                    done = false;
                    break;
                }
                tuple[j] = 0;
            }
            if done {
                break;
            }
        }
    }
    assemble(a, b, &alpha_idx, rho, &points, faces, HomVariant::Hom)
}

/// Extension-maximal boxes inside a point set. A box is a per-coordinate
/// sorted value list whose full product lies within `points`; the returned
/// boxes admit no single-coordinate extension with that property. Assumes
/// `width >= 1` and every point has exactly `width` coordinates drawn from
/// `0..target_values`.
pub(crate) fn maximal_mix_boxes(
    points: &[Vec<u8>],
    width: usize,
    target_values: u8,
) -> Result<Vec<Vec<Vec<u8>>>> {
    let point_set: BTreeSet<&Vec<u8>> = points.iter().collect();
    let mut seen: BTreeSet<Vec<Vec<u8>>> = BTreeSet::new();
    let mut queue: VecDeque<Vec<Vec<u8>>> = VecDeque::new();
    for p in points {
        let seed: Vec<Vec<u8>> = p.iter().map(|&x| vec![x]).collect();
        if seen.insert(seed.clone()) {
            queue.push_back(seed);
        }
    }
    let mut maximal = Vec::new();
    while let Some(box_) = queue.pop_front() {
        if seen.len() as u64 > FACE_BUDGET {
            return Err(Error::TooLarge(
                "mix-face enumeration exceeds the box budget".into(),
            ));
        }
        let mut extendable = false;
        for j in 0..width {
            'values: for x in 0..target_values {
                if box_[j].contains(&x) {
                    continue;
                }
                // Only the new combination tuples need checking.
                let mut probe: Vec<u8> = box_.iter().map(|vs| vs[0]).collect();
                probe[j] = x;
                let mut cursor = vec![0usize; width];
                loop {
                    if !point_set.contains(&probe) {
                        continue 'values;
                    }
                    let mut u = width;
                    let mut done = true;
                    while u > 0 {
                        u -= 1;
                        if u == j {
                            continue;
                        }
                        cursor[u] += 1;
                        if cursor[u] < box_[u].len() {
                            probe[u] = box_[u][cursor[u]];
                            done = false;
                            break;
                        }
                        cursor[u] = 0;
                        probe[u] = box_[u][0];
                    }
                    if done {
                        break;
                    }
                }
                extendable = true;
                let mut ext = box_.clone();
                let pos = ext[j].binary_search(&x).unwrap_err();
                ext[j].insert(pos, x);
                if seen.insert(ext.clone()) {
                    queue.push_back(ext);
                }
            }
        }
        if !extendable {
            maximal.push(box_);
        }
    }
    Ok(maximal)
}

/// All members of a box's product, cycling the last coordinate fastest.
pub(crate) fn box_members(box_: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let width = box_.len();
    let mut members = Vec::new();
    let mut cursor = vec![0usize; width];
    loop {
        members.push((0..width).map(|u| box_[u][cursor[u]]).collect());
        let mut u = width;
        let mut done = true;
        while u > 0 {
            u -= 1;
            cursor[u] += 1;
            if cursor[u] < box_[u].len() {
                done = false;
                break;
            }
            cursor[u] = 0;
        }
        if done {
            break;
        }
    }
    members
}

/// The restricted mix complex: faces are the sets all of whose mixed
/// assignments are themselves vertices.
pub fn hom_sc_restricted(
    a: &Complex,
    alpha: &[String],
    rho: &BTreeMap<String, String>,
    b: &Complex,
) -> Result<HomComplexResult> {
    let (alpha_idx, points) = restricted_vertices(a, alpha, rho, b)?;
    let width = alpha_idx.len();
    let mut faces: Vec<Vec<String>> = Vec::new();
    if !points.is_empty() && width == 0 {
        faces.push(vec![String::new()]);
    } else if !points.is_empty() {
        // A set is a face iff the box spanned by its per-coordinate value
        // sets consists of vertices; the box itself is then a face too,
        // so the maximal faces are exactly the extension-maximal boxes.
        for box_ in maximal_mix_boxes(&points, width, b.vertex_count() as u8)? {
            faces.push(
                box_members(&box_)
                    .iter()
                    .map(|p| assignment_label(a, b, &alpha_idx, p))
                    .collect(),
            );
        }
    }
    assemble(a, b, &alpha_idx, rho, &points, faces, HomVariant::HomSc)
}

/// The internal-hom complex over all coordinates with no pins.
pub fn hom_complex(a: &Complex, b: &Complex) -> Result<HomComplexResult> {
    hom_restricted(a, &a.vertices().to_vec(), &BTreeMap::new(), b)
}

/// The mix complex over all coordinates with no pins.
pub fn hom_sc_complex(a: &Complex, b: &Complex) -> Result<HomComplexResult> {
    hom_sc_restricted(a, &a.vertices().to_vec(), &BTreeMap::new(), b)
}

/// Lifts a polymorphism of the target to a polymorphism of the hom
/// complex by coordinatewise application:
/// `P(f_1..f_n)(v) = p(f_1(v), ..., f_n(v))`.
pub fn lift_polymorphism(p: &WitnessTable, h: &HomComplexResult) -> Result<WitnessTable> {
    let Carrier::Complex(b) = &p.carrier else {
        return Err(Error::Incompatible(
            "lifting needs a witness over a complex".into(),
        ));
    };
    let nb = b.vertex_count();
    if nb.checked_pow(p.arity as u32) != Some(p.values.len()) {
        return Err(Error::Incompatible(
            "witness table is not total over its carrier".into(),
        ));
    }
    if let Some(v) = identities::simplicial_table_violations(b, p.arity, &p.values, 1).pop() {
        return Err(Error::Incompatible(format!(
            "input table is not a polymorphism: {v}"
        )));
    }

    let hn = h.complex.vertex_count();
    if hn > 256 {
        return Err(Error::TooLarge(
            "lifted tables support at most 256 hom-complex vertices".into(),
        ));
    }
    let entries = (hn as u64)
        .checked_pow(p.arity as u32)
        .filter(|&e| e <= 1 << 24)
        .ok_or_else(|| Error::TooLarge("lifted table exceeds the size budget".into()))?;

    // Per-vertex assignments as target indices, plus the reverse lookup.
    let mut assign_vectors: Vec<Vec<u8>> = Vec::with_capacity(hn);
    let mut vertex_of: BTreeMap<Vec<u8>, u8> = BTreeMap::new();
    for (i, hv) in h.vertices.iter().enumerate() {
        let mut vec = Vec::with_capacity(h.alpha.len());
        for av in &h.alpha {
            let value = &hv.assignment[av];
            let Some(x) = b.vertex_index(value) else {
                return Err(Error::Incompatible(format!(
                    "hom-complex value {value:?} is not a vertex of the witness carrier"
                )));
            };
            vec.push(x as u8);
        }
        vertex_of.insert(vec.clone(), i as u8);
        assign_vectors.push(vec);
    }

    let width = h.alpha.len();
    let mut values = Vec::with_capacity(entries as usize);
    let mut tuple = vec![0usize; p.arity];
    if hn > 0 {
        loop {
            let mut lifted = Vec::with_capacity(width);
            for j in 0..width {
                let mut idx = 0usize;
                for &f in &tuple {
                    idx = idx * nb + assign_vectors[f][j] as usize;
                }
                lifted.push(p.values[idx]);
            }
            let Some(&v) = vertex_of.get(&lifted) else {
                return Err(Error::Inconsistent(format!(
                    "lifted assignment {lifted:?} is not a vertex of the hom complex; \
                     this falsifies the lifting lemma and signals a bug"
                )));
            };
            values.push(v);
            let mut j = p.arity;
            let mut done = true;
            while j > 0 {
                j -= 1;
                tuple[j] += 1;
                if tuple[j] < hn {
                    done = false;
                    break;
                }
                tuple[j] = 0;
            }
            if done {
                break;
            }
        }
    }

    let lifted = WitnessTable {
        carrier: Carrier::Complex(h.complex.clone()),
        arity: p.arity,
        values,
    };
    let total_members: u64 = h
        .complex
        .maximal_faces()
        .iter()
        .map(|m| m.len() as u64)
        .sum();
    if total_members
        .checked_pow(p.arity as u32)
        .map_or(true, |w| w > 20_000_000)
    {
        return Err(Error::TooLarge(
            "verifying the lifted table exceeds the budget".into(),
        ));
    }
    if let Some(v) =
        identities::simplicial_table_violations(&h.complex, p.arity, &lifted.values, 1).pop()
    {
        return Err(Error::Inconsistent(format!(
            "lifted table is not simplicial: {v}; this falsifies the lifting lemma"
        )));
    }
    Ok(lifted)
}
