//! Finite relational structures and the translations between complex-valued
//! and relational constraint problems.
//!
//! The realization of a complex `B` is the relational structure on its
//! vertices with one relation `F_k` per arity `k + 1 <= dim(B) + 2`
//! (the ordered tuples whose underlying set is a face) and one singleton
//! relation `R_x` per vertex. Homomorphisms into the realization are
//! exactly simplicial maps, because a vertex map is simplicial as soon as
//! images of faces with at most `dim(B) + 2` distinct members are faces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::complex::{shortlex, Complex};
use crate::{Error, Result};

/// A named relation: a set of equal-length tuples of element indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub arity: usize,
    pub tuples: BTreeSet<Vec<u8>>,
}

/// A finite relational structure with shortlex-sorted element labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelStructure {
    domain: Vec<String>,
    relations: BTreeMap<String, Relation>,
}

#[derive(Serialize, Deserialize)]
struct RelationJson {
    arity: usize,
    tuples: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RelStructureJson {
    domain: Vec<String>,
    relations: BTreeMap<String, RelationJson>,
}

impl RelStructure {
    /// Builds a structure from labels and label-level relation tuples.
    pub fn new<S: AsRef<str>>(
        domain: Vec<String>,
        relations: Vec<(String, usize, Vec<Vec<S>>)>,
    ) -> Result<RelStructure> {
        let mut sorted = domain;
        sorted.sort_by(|a, b| shortlex(a, b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidStructure("duplicate element label".into()));
        }
        if sorted.len() > 255 {
            return Err(Error::TooLarge(format!(
                "domains are limited to 255 elements, got {}",
                sorted.len()
            )));
        }
        let mut s = RelStructure {
            domain: sorted,
            relations: BTreeMap::new(),
        };
        for (name, arity, tuples) in relations {
            let mut set = BTreeSet::new();
            for t in tuples {
                if t.len() != arity {
                    return Err(Error::InvalidStructure(format!(
                        "relation {name:?} declared arity {arity} but has a tuple of length {}",
                        t.len()
                    )));
                }
                let mut tup = Vec::with_capacity(arity);
                for l in &t {
                    let Some(i) = s.element_index(l.as_ref()) else {
                        return Err(Error::InvalidStructure(format!(
                            "relation {name:?} mentions unknown element {:?}",
                            l.as_ref()
                        )));
                    };
                    tup.push(i);
                }
                set.insert(tup);
            }
            if s.relations
                .insert(name.clone(), Relation { arity, tuples: set })
                .is_some()
            {
                return Err(Error::InvalidStructure(format!(
                    "relation {name:?} declared twice"
                )));
            }
        }
        Ok(s)
    }

    /// Builds a structure from index-level relations (internal fast path).
    pub(crate) fn from_parts(
        domain: Vec<String>,
        relations: BTreeMap<String, Relation>,
    ) -> RelStructure {
        debug_assert!(domain.windows(2).all(|w| shortlex(&w[0], &w[1]).is_lt()));
        RelStructure { domain, relations }
    }

    /// Element labels in shortlex order.
    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn element_index(&self, label: &str) -> Option<u8> {
        self.domain
            .binary_search_by(|v| shortlex(v, label))
            .ok()
            .map(|i| i as u8)
    }

    pub fn label(&self, i: u8) -> &str {
        &self.domain[i as usize]
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    /// Relations in name order.
    pub fn relations(&self) -> impl Iterator<Item = (&String, &Relation)> {
        self.relations.iter()
    }

    /// True when `other` has the same relation names and arities.
    pub fn same_signature(&self, other: &RelStructure) -> bool {
        self.relations.len() == other.relations.len()
            && self
                .relations
                .iter()
                .zip(other.relations.iter())
                .all(|((n1, r1), (n2, r2))| n1 == n2 && r1.arity == r2.arity)
    }

    /// Serializes to the interchange JSON form.
    pub fn to_json(&self) -> serde_json::Value {
        let relations = self
            .relations
            .iter()
            .map(|(name, rel)| {
                (
                    name.clone(),
                    RelationJson {
                        arity: rel.arity,
                        tuples: rel
                            .tuples
                            .iter()
                            .map(|t| t.iter().map(|&i| self.domain[i as usize].clone()).collect())
                            .collect(),
                    },
                )
            })
            .collect();
        serde_json::to_value(RelStructureJson {
            domain: self.domain.clone(),
            relations,
        })
        .expect("structure serialization cannot fail")
    }

    /// Parses and validates the interchange JSON form.
    pub fn from_json_str(s: &str) -> Result<RelStructure> {
        let raw: RelStructureJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("structure JSON: {e}")))?;
        RelStructure::new(
            raw.domain,
            raw.relations
                .into_iter()
                .map(|(name, r)| (name, r.arity, r.tuples))
                .collect(),
        )
    }
}

/// Enumerates all tuples of the given length over `0..n` whose set of
/// entries passes `set_ok` (checked incrementally on prefixes).
fn tuples_with_face_support(
    n: u8,
    len: usize,
    set_ok: &dyn Fn(&[u8]) -> bool,
) -> BTreeSet<Vec<u8>> {
    let mut out = BTreeSet::new();
    let mut current: Vec<u8> = Vec::with_capacity(len);
    fn rec(
        n: u8,
        len: usize,
        current: &mut Vec<u8>,
        set_ok: &dyn Fn(&[u8]) -> bool,
        out: &mut BTreeSet<Vec<u8>>,
    ) {
        if current.len() == len {
            out.insert(current.clone());
            return;
        }
        for v in 0..n {
            current.push(v);
            let mut support: Vec<u8> = current.clone();
            support.sort_unstable();
            support.dedup();
            if set_ok(&support) {
                rec(n, len, current, set_ok, out);
            }
            current.pop();
        }
    }
    rec(n, len, &mut current, set_ok, &mut out);
    out
}

/// Name of the face relation of tuple length `k + 1`.
pub fn face_relation_name(k: usize) -> String {
    format!("F{k}")
}

/// Name of the singleton point relation for a vertex label.
pub fn point_relation_name(label: &str) -> String {
    format!("R_{label}")
}

/// Face relations `F_0 ..= F_top` of a complex: `F_k` holds the ordered
/// `(k+1)`-tuples whose set of entries is a face.
pub(crate) fn face_relations(c: &Complex, top: usize) -> Result<BTreeMap<String, Relation>> {
    if c.vertex_count() > 255 {
        return Err(Error::TooLarge(
            "face relations need at most 255 vertices".into(),
        ));
    }
    let n = c.vertex_count() as u8;
    let mut relations = BTreeMap::new();
    for k in 0..=top {
        let tuples = tuples_with_face_support(n, k + 1, &|set| {
            c.is_face(&set.iter().map(|&v| v as u32).collect::<Vec<_>>())
        });
        relations.insert(
            face_relation_name(k),
            Relation {
                arity: k + 1,
                tuples,
            },
        );
    }
    Ok(relations)
}

/// The idempotent relational realization of a complex: face relations
/// `F_0 ..= F_{dim + 1}` plus one singleton relation per vertex.
pub fn idempotent_realization(b: &Complex) -> Result<RelStructure> {
    let n = b.vertex_count() as u8;
    let mut relations = face_relations(b, (b.dim().max(0) + 1) as usize)?;
    for v in 0..n {
        let mut tuples = BTreeSet::new();
        tuples.insert(vec![v]);
        relations.insert(
            point_relation_name(b.label(v as u32)),
            Relation { arity: 1, tuples },
        );
    }
    Ok(RelStructure::from_parts(b.vertices().to_vec(), relations))
}

/// The two-element template with both constants, disequality, and ternary
/// disjunction; its polymorphisms are projections only.
pub fn dsat() -> RelStructure {
    let domain = vec!["0".to_string(), "1".to_string()];
    let mut relations = BTreeMap::new();
    relations.insert(
        "0".to_string(),
        Relation {
            arity: 1,
            tuples: BTreeSet::from([vec![0]]),
        },
    );
    relations.insert(
        "1".to_string(),
        Relation {
            arity: 1,
            tuples: BTreeSet::from([vec![1]]),
        },
    );
    relations.insert(
        "NOT".to_string(),
        Relation {
            arity: 2,
            tuples: BTreeSet::from([vec![0, 1], vec![1, 0]]),
        },
    );
    let mut or3 = BTreeSet::new();
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                if a + b + c > 0 {
                    or3.insert(vec![a, b, c]);
                }
            }
        }
    }
    relations.insert(
        "3OR".to_string(),
        Relation {
            arity: 3,
            tuples: or3,
        },
    );
    RelStructure::from_parts(domain, relations)
}

/// Translates a precolored complex problem (find a simplicial map `a -> b`
/// agreeing with `rho` on `alpha`) into a relational instance over the
/// signature of `idempotent_realization(b)`.
pub fn precolored_to_relational(
    a: &Complex,
    alpha: &[String],
    rho: &BTreeMap<String, String>,
    b: &Complex,
) -> Result<RelStructure> {
    let alpha_set: BTreeSet<&str> = alpha.iter().map(|s| s.as_str()).collect();
    if alpha_set.len() != alpha.len() {
        return Err(Error::Incompatible("alpha lists a vertex twice".into()));
    }
    if rho.len() != alpha.len() || !alpha_set.iter().all(|v| rho.contains_key(*v)) {
        return Err(Error::Incompatible(
            "the precoloring must be defined exactly on alpha".into(),
        ));
    }
    for v in alpha {
        if a.vertex_index(v).is_none() {
            return Err(Error::Incompatible(format!(
                "alpha mentions unknown source vertex {v:?}"
            )));
        }
    }
    for (v, x) in rho {
        if b.vertex_index(x).is_none() {
            return Err(Error::Incompatible(format!(
                "precoloring sends {v:?} to unknown target vertex {x:?}"
            )));
        }
    }
    let mut relations = face_relations(a, (b.dim().max(0) + 1) as usize)?;
    for x in b.vertices() {
        let mut tuples = BTreeSet::new();
        for (v, target) in rho {
            if target == x {
                let idx = a.vertex_index(v).expect("validated above") as u8;
                tuples.insert(vec![idx]);
            }
        }
        relations.insert(point_relation_name(x), Relation { arity: 1, tuples });
    }
    Ok(RelStructure::from_parts(a.vertices().to_vec(), relations))
}

/// Result of translating a relational instance back into a precolored
/// complex problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrecoloredReduction {
    /// An equivalent precolored problem: find a simplicial map
    /// `complex -> b` agreeing with `rho` on `alpha`.
    Reduced {
        complex: Complex,
        alpha: Vec<String>,
        rho: BTreeMap<String, String>,
    },
    /// The instance pins some element to two different colors, so it has
    /// no solution and no translation is needed.
    UnsatShortcut,
}

/// Translates a relational instance over the realization signature of `b`
/// into a precolored complex problem. Face tuples become faces; point
/// tuples become the precoloring. Elements in no tuple stay as isolated
/// vertices.
pub fn relational_to_precolored(
    instance: &RelStructure,
    b: &Complex,
) -> Result<PrecoloredReduction> {
    let mut faces: Vec<Vec<String>> = Vec::new();
    let mut rho: BTreeMap<String, String> = BTreeMap::new();
    let max_arity = (b.dim().max(0) + 2) as usize;
    for (name, rel) in instance.relations() {
        if let Some(k) = name.strip_prefix('F').and_then(|s| s.parse::<usize>().ok()) {
            if rel.arity != k + 1 {
                return Err(Error::InvalidStructure(format!(
                    "relation {name:?} must have arity {}, got {}",
                    k + 1,
                    rel.arity
                )));
            }
            if rel.arity > max_arity {
                return Err(Error::InvalidStructure(format!(
                    "relation {name:?} exceeds the realization signature of the target \
                     (largest face arity {max_arity})"
                )));
            }
            for t in &rel.tuples {
                faces.push(t.iter().map(|&i| instance.label(i).to_string()).collect());
            }
        } else if let Some(x) = name.strip_prefix("R_") {
            if b.vertex_index(x).is_none() {
                return Err(Error::InvalidStructure(format!(
                    "point relation {name:?} names no vertex of the target"
                )));
            }
            if rel.arity != 1 {
                return Err(Error::InvalidStructure(format!(
                    "point relation {name:?} must have arity 1"
                )));
            }
            for t in &rel.tuples {
                let v = instance.label(t[0]).to_string();
                match rho.entry(v) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(x.to_string());
                    }
                    std::collections::btree_map::Entry::Occupied(e) => {
                        if e.get() != x {
                            return Ok(PrecoloredReduction::UnsatShortcut);
                        }
                    }
                }
            }
        } else {
            return Err(Error::InvalidStructure(format!(
                "relation {name:?} is not part of a realization signature"
            )));
        }
    }
    let complex = Complex::new(instance.domain().to_vec(), faces)?;
    let mut alpha: Vec<String> = rho.keys().cloned().collect();
    alpha.sort_by(|a, b| shortlex(a, b));
    Ok(PrecoloredReduction::Reduced {
        complex,
        alpha,
        rho,
    })
}

/// Mixed-radix index of an argument tuple, first argument most significant.
pub(crate) fn table_index(args: &[u8], base: usize) -> usize {
    args.iter().fold(0, |acc, &a| acc * base + a as usize)
}

/// The structure-level mix complex. Vertices are the restrictions to
/// `alpha` of the homomorphisms `a -> b`, labeled `f(x)=v;...` with the
/// window elements in domain order; a set of vertices is a face iff every
/// mix of its members — any choice of one member's value per window
/// element — is itself a vertex. An empty window yields a single vertex
/// with an empty label when any homomorphism exists at all.
pub fn hom_sc_structures(
    a: &RelStructure,
    alpha: &[String],
    b: &RelStructure,
) -> Result<Complex> {
    if !a.same_signature(b) {
        return Err(Error::Incompatible(
            "the mix complex needs structures with a shared signature".into(),
        ));
    }
    let mut alpha_idx: Vec<u8> = Vec::with_capacity(alpha.len());
    for e in alpha {
        let Some(i) = a.element_index(e) else {
            return Err(Error::Incompatible(format!(
                "the window mentions unknown element {e:?}"
            )));
        };
        alpha_idx.push(i);
    }
    alpha_idx.sort_unstable();
    if alpha_idx.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Incompatible(
            "the window lists an element twice".into(),
        ));
    }

    let solutions = crate::csp::solve(a, b, &BTreeMap::new(), crate::csp::Mode::All)?;
    let crate::csp::Solutions::All(homs) = solutions else {
        unreachable!("ALL mode yields the All variant");
    };
    let points: Vec<Vec<u8>> = homs
        .iter()
        .map(|h| {
            alpha_idx
                .iter()
                .map(|&i| {
                    b.element_index(&h[&a.domain()[i as usize]])
                        .expect("solver values lie in the template domain")
                })
                .collect::<Vec<u8>>()
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    if points.is_empty() {
        return Complex::new(Vec::new(), Vec::<Vec<String>>::new());
    }
    if alpha_idx.is_empty() {
        return Complex::new(vec![String::new()], vec![vec![String::new()]]);
    }
    let label = |p: &[u8]| -> String {
        alpha_idx
            .iter()
            .zip(p)
            .map(|(&i, &x)| format!("f({})={}", a.domain()[i as usize], b.label(x)))
            .collect::<Vec<_>>()
            .join(";")
    };
    let vertices: Vec<String> = points.iter().map(|p| label(p)).collect();
    let mut faces: Vec<Vec<String>> = Vec::new();
    for box_ in crate::homcomplex::maximal_mix_boxes(
        &points,
        alpha_idx.len(),
        b.domain().len() as u8,
    )? {
        faces.push(
            crate::homcomplex::box_members(&box_)
                .iter()
                .map(|p| label(p))
                .collect(),
        );
    }
    Complex::new(vertices, faces)
}

/// Checks whether every operation of arity `1 ..= max_arity` preserving all
/// relations of `b` is a projection. Errors when the total number of
/// candidate tables exceeds ten million.
pub fn projections_only_check(b: &RelStructure, max_arity: usize) -> Result<bool> {
    let n = b.domain().len();
    if n == 0 {
        return Err(Error::InvalidStructure(
            "projection check needs a nonempty domain".into(),
        ));
    }
    let mut total: f64 = 0.0;
    for arity in 1..=max_arity {
        total += (n as f64).powf((n as f64).powi(arity as i32));
        if total > 1e7 {
            return Err(Error::TooLarge(format!(
                "enumerating operations up to arity {max_arity} over {n} elements \
                 exceeds 10^7 tables"
            )));
        }
    }
    for arity in 1..=max_arity {
        let len = n.pow(arity as u32);
        let mut table = vec![0u8; len];
        loop {
            if !is_projection_table(&table, n, arity) && preserves_all(&table, arity, b) {
                return Ok(false);
            }
            // Odometer step over all tables.
            let mut i = len;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                table[i] += 1;
                if (table[i] as usize) < n {
                    break;
                }
                table[i] = 0;
            }
            if table.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    Ok(true)
}

fn is_projection_table(table: &[u8], n: usize, arity: usize) -> bool {
    'next: for p in 0..arity {
        let mut args = vec![0u8; arity];
        loop {
            if table[table_index(&args, n)] != args[p] {
                continue 'next;
            }
            let mut i = arity;
            loop {
                if i == 0 {
                    return true;
                }
                i -= 1;
                args[i] += 1;
                if (args[i] as usize) < n {
                    break;
                }
                args[i] = 0;
            }
            if args.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    false
}

/// Checks whether `table` (an operation of the given arity) preserves every
/// relation of `b`: applying it coordinatewise to any choice of tuples
/// lands back in the relation.
pub(crate) fn preserves_all(table: &[u8], arity: usize, b: &RelStructure) -> bool {
    let n = b.domain().len();
    for (_, rel) in b.relations() {
        let tuples: Vec<&Vec<u8>> = rel.tuples.iter().collect();
        if tuples.is_empty() {
            continue;
        }
        let mut choice = vec![0usize; arity];
        loop {
            let mut image = Vec::with_capacity(rel.arity);
            for c in 0..rel.arity {
                let args: Vec<u8> = choice.iter().map(|&t| tuples[t][c]).collect();
                image.push(table[table_index(&args, n)]);
            }
            if !rel.tuples.contains(&image) {
                return false;
            }
            let mut i = arity;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                choice[i] += 1;
                if choice[i] < tuples.len() {
                    break;
                }
                choice[i] = 0;
            }
            if choice.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    true
}
