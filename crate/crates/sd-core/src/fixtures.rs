//! Canonical small complexes and relational templates.
//!
//! These are the fixed inputs used by the worked examples, the golden
//! tests, and the `examples` subcommand of the command-line tool.  Every
//! constructor is deterministic and infallible.

use crate::complex::Complex;
use crate::structures::RelStructure;

/// The six-vertex triangulation of the real projective plane: ten
/// triangles pairing antipodal faces of the icosahedron.  Its first
/// homology is pure 2-torsion, making it the smallest fixture whose
/// obstruction is invisible to Betti numbers alone.
pub fn rp2() -> Complex {
    let triangles = [
        ["1", "2", "3"],
        ["1", "3", "4"],
        ["1", "4", "5"],
        ["1", "5", "6"],
        ["1", "6", "2"],
        ["2", "3", "5"],
        ["3", "4", "6"],
        ["4", "5", "2"],
        ["5", "6", "3"],
        ["6", "2", "4"],
    ];
    Complex::new(
        (1..=6).map(|i| i.to_string()).collect(),
        triangles.iter().map(|t| t.to_vec()).collect(),
    )
    .expect("the projective-plane triangulation is well-formed")
}

/// A contractible complex admitting no idempotent witness: two triangles
/// over the spine `v0–m1–m2` plus a closing flap `{v1, v2, m2}`.  The full
/// subcomplex on the closed neighborhood of `v0` is a circle (the triangle
/// `{v1, v2, m1}` is missing), and witnesses restrict to such
/// neighborhoods, so none exist on the whole complex either.
pub fn flap_triangle() -> Complex {
    Complex::new(
        ["m1", "m2", "v0", "v1", "v2"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        vec![
            vec!["v0", "v1", "m1"],
            vec!["v0", "v2", "m1"],
            vec!["v1", "m1", "m2"],
            vec!["v2", "m1", "m2"],
            vec!["v1", "v2", "m2"],
        ],
    )
    .expect("the flap triangle is well-formed")
}

/// The named complex fixtures, in a fixed order: paths, cycles, full
/// simplices, the projective plane, and the flap triangle.
pub fn fixture_complexes() -> Vec<(String, Complex)> {
    let mut out: Vec<(String, Complex)> = Vec::new();
    for n in 1..=4 {
        out.push((format!("path{n}"), Complex::path(n)));
    }
    for n in 3..=5 {
        out.push((
            format!("cycle{n}"),
            Complex::cycle(n).expect("cycles of length >= 3 are well-formed"),
        ));
    }
    for k in 1..=3 {
        out.push((format!("simplex{k}"), Complex::full_simplex(k)));
    }
    out.push(("rp2".to_string(), rp2()));
    out.push(("flap_triangle".to_string(), flap_triangle()));
    out
}

/// Positive not-all-equal satisfiability on `{0, 1}`: the single ternary
/// relation holding all triples except the two constant ones.
pub fn nae() -> RelStructure {
    let mut tuples = Vec::new();
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                if !(a == b && b == c) {
                    tuples.push(vec![a.to_string(), b.to_string(), c.to_string()]);
                }
            }
        }
    }
    RelStructure::new(
        vec!["0".to_string(), "1".to_string()],
        vec![("NAE".to_string(), 3, tuples)],
    )
    .expect("the not-all-equal template is well-formed")
}

/// Controlled satisfiability on `{0, 1}`: an empty ternary relation, a
/// controlled NOT (`CNOT(c, x, y)` forces `y = 1 - x` when `c = 0` and
/// `x = y = 1` when `c = 1`), and ternary disjunction.  The constant-1 map
/// is a polymorphism, so the template is not a core.
pub fn controlled_3sat() -> RelStructure {
    let mut or3 = Vec::new();
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                if a + b + c > 0 {
                    or3.push(vec![a.to_string(), b.to_string(), c.to_string()]);
                }
            }
        }
    }
    RelStructure::new(
        vec!["0".to_string(), "1".to_string()],
        vec![
            ("EMPTY".to_string(), 3, Vec::<Vec<String>>::new()),
            (
                "CNOT".to_string(),
                3,
                vec![
                    vec!["0".into(), "1".into(), "0".into()],
                    vec!["0".into(), "0".into(), "1".into()],
                    vec!["1".into(), "1".into(), "1".into()],
                ],
            ),
            ("3OR".to_string(), 3, or3),
        ],
    )
    .expect("the controlled-satisfiability template is well-formed")
}

/// The four-element widening of the two-constant NOT/OR template: elements
/// `{1, 2}` play the role of false and `{3, 4}` of true, each pinned by a
/// unary singleton.  `NOT` relates the two halves; `3OR` excludes
/// all-false triples.
pub fn wide_not_or() -> RelStructure {
    let label = |v: u8| v.to_string();
    let low = |v: u8| v <= 2;
    let mut not2 = Vec::new();
    for x in 1..=4u8 {
        for y in 1..=4u8 {
            if low(x) != low(y) {
                not2.push(vec![label(x), label(y)]);
            }
        }
    }
    let mut or3 = Vec::new();
    for x in 1..=4u8 {
        for y in 1..=4u8 {
            for z in 1..=4u8 {
                if !(low(x) && low(y) && low(z)) {
                    or3.push(vec![label(x), label(y), label(z)]);
                }
            }
        }
    }
    let mut relations = Vec::new();
    for v in 1..=4u8 {
        relations.push((label(v), 1, vec![vec![label(v)]]));
    }
    relations.push(("NOT".to_string(), 2, not2));
    relations.push(("3OR".to_string(), 3, or3));
    RelStructure::new((1..=4).map(|i| i.to_string()).collect(), relations)
        .expect("the wide NOT/OR template is well-formed")
}

/// Exact-one satisfiability on `{0, 1}`: the ternary relation of triples
/// with exactly one `1`.
pub fn one_in_three() -> RelStructure {
    RelStructure::new(
        vec!["0".to_string(), "1".to_string()],
        vec![(
            "1IN3".to_string(),
            3,
            vec![
                vec!["0", "0", "1"],
                vec!["0", "1", "0"],
                vec!["1", "0", "0"],
            ],
        )],
    )
    .expect("the one-in-three template is well-formed")
}

/// The named relational-template fixtures, in a fixed order.
pub fn fixture_structures() -> Vec<(String, RelStructure)> {
    vec![
        ("dsat".to_string(), crate::structures::dsat()),
        ("nae".to_string(), nae()),
        ("controlled_3sat".to_string(), controlled_3sat()),
        ("wide_not_or".to_string(), wide_not_or()),
        ("one_in_three".to_string(), one_in_three()),
    ]
}
