//! Acceptance gate: one test per shipped guarantee, each timed against an
//! explicit wall-clock budget. Every oracle value asserted here was computed
//! by hand (face enumerations, homology ranks, homomorphism counts) or is
//! re-derived inside the test by an independent brute-force method.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sd_core::classify::{classify, ClassifyOptions, Refutation, Verdict};
use sd_core::complex::{is_simplicial_map, shortlex, Complex};
use sd_core::csp::{eval_pp_formula, precoloring, PpFormula};
use sd_core::fixtures::{fixture_complexes, rp2};
use sd_core::homcomplex::{
    enumerate_homomorphisms, hom_complex, hom_restricted, hom_sc_complex, hom_sc_restricted,
    lift_polymorphism,
};
use sd_core::identities::{
    search_witness, system_by_name, verify_witness, Carrier, SearchResult, WitnessTable,
};
use sd_core::spheres::{
    contract_loop, hypercube_complex, round_vertex, subdivision_approx_map, verify_contraction,
};
use sd_core::structures::{
    dsat, idempotent_realization, precolored_to_relational, projections_only_check,
    relational_to_precolored, PrecoloredReduction, RelStructure,
};
use sd_core::topology::integral_homology;

/// Runs a criterion body, asserts the wall-clock budget, prints a PASS line.
fn gate(criterion: u32, what: &str, budget: Duration, body: impl FnOnce()) {
    let start = Instant::now();
    body();
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "criterion {criterion:02} exceeded its budget: took {elapsed:?}, allowed {budget:?}"
    );
    println!("PASS criterion {criterion:02} ({what}) in {elapsed:?}, budget {budget:?}");
}

/// `"01"` becomes the assignment label `f(0)=0;f(1)=1`.
fn lab(word: &str) -> String {
    word.chars()
        .enumerate()
        .map(|(i, c)| format!("f({i})={c}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Maximal faces as a set of label sets, for order-insensitive comparison.
fn face_set(c: &Complex) -> BTreeSet<BTreeSet<String>> {
    c.maximal_face_labels()
        .into_iter()
        .map(|f| f.into_iter().collect())
        .collect()
}

/// Expected face family from whitespace-separated digit words.
fn named(families: &[&str]) -> BTreeSet<BTreeSet<String>> {
    families
        .iter()
        .map(|f| f.split_whitespace().map(lab).collect())
        .collect()
}

/// The 5-cycle graph on labels 1..=5 with edges i -- (i mod 5)+1.
fn pentagon() -> Complex {
    Complex::new(
        (1..=5).map(|i| i.to_string()).collect(),
        vec![
            vec!["1", "2"],
            vec!["2", "3"],
            vec!["3", "4"],
            vec!["4", "5"],
            vec!["1", "5"],
        ],
    )
    .expect("pentagon is well-formed")
}

#[test]
fn criterion_01_edge_into_path_hom_complexes_are_exact() {
    gate(1, "edge-into-path hom complexes", Duration::from_secs(1), || {
        let a = Complex::path(1);
        let b = Complex::path(2);
        let hom = hom_complex(&a, &b).expect("hom complex fits in budget");
        let homsc = hom_sc_complex(&a, &b).expect("mix complex fits in budget");

        let mut vertices: Vec<String> = ["00", "01", "10", "11", "12", "21", "22"]
            .iter()
            .map(|w| lab(w))
            .collect();
        vertices.sort_by(|x, y| shortlex(x, y));
        assert_eq!(hom.complex.vertices(), &vertices[..]);
        assert_eq!(homsc.complex.vertices(), &vertices[..]);

        assert_eq!(
            face_set(&hom.complex),
            named(&["00 01 10 11", "11 12 21 22", "01 11 12", "10 11 21"]),
            "hom variant maximal faces"
        );
        assert_eq!(
            face_set(&homsc.complex),
            named(&["00 01 10 11", "11 12 21 22", "01 11 21", "10 11 12"]),
            "mix variant maximal faces"
        );
    });
}

#[test]
fn criterion_02_pinned_pentagon_hom_complexes_are_exact() {
    gate(2, "pinned pentagon hom complexes", Duration::from_secs(1), || {
        let a = Complex::path(2);
        let b = pentagon();
        let rho = precoloring(vec![("0", "1")]);
        let all: Vec<String> = a.vertices().to_vec();
        let window = vec!["2".to_string()];

        // Exactly nine homomorphisms extend the pin.
        let homs = enumerate_homomorphisms(&a, &b, &rho).expect("pentagon is small");
        let words: BTreeSet<String> = homs
            .iter()
            .map(|h| a.vertices().iter().map(|v| h[v].clone()).collect())
            .collect();
        let expected: BTreeSet<String> =
            ["111", "112", "115", "121", "122", "123", "151", "154", "155"]
                .iter()
                .map(|w| w.to_string())
                .collect();
        assert_eq!(words, expected, "homomorphisms extending the pin");

        // The windowed hom complex is the pentagon again; {3,4} is a face.
        let window_hom = hom_restricted(&a, &window, &rho, &b).expect("window fits");
        assert_eq!(
            window_hom
                .complex
                .is_face_labels(&["f(2)=3", "f(2)=4"])
                .expect("labels exist"),
            true,
            "{{3,4}} must be a face of the windowed hom complex"
        );
        let pentagon_edges: BTreeSet<BTreeSet<String>> = (1..=5)
            .map(|i| {
                [i, i % 5 + 1]
                    .iter()
                    .map(|v| format!("f(2)={v}"))
                    .collect()
            })
            .collect();
        assert_eq!(face_set(&window_hom.complex), pentagon_edges);

        // The full-window complexes reject {123, 154} as a face.
        let full_hom = hom_restricted(&a, &all, &rho, &b).expect("nine vertices");
        let full_homsc = hom_sc_restricted(&a, &all, &rho, &b).expect("nine vertices");
        for (name, h) in [("hom", &full_hom), ("mix", &full_homsc)] {
            assert_eq!(
                h.complex
                    .is_face_labels(&[lab("123"), lab("154")])
                    .expect("both labels are vertices"),
                false,
                "{{123,154}} must not be a face of the full {name} complex"
            );
        }
        assert_eq!(
            face_set(&full_hom.complex),
            named(&[
                "111 112 121 122",
                "111 115 151 155",
                "112 122 123",
                "115 154 155",
                "111 112 151",
                "111 115 121",
            ]),
        );
        assert_eq!(
            face_set(&full_homsc.complex),
            named(&[
                "111 112 115",
                "111 112 121 122",
                "111 115 151 155",
                "121 122 123",
                "151 154 155",
                "111 121 151",
            ]),
        );

        // The windowed mix complex fills in completely: one 5-vertex face.
        let window_homsc = hom_sc_restricted(&a, &window, &rho, &b).expect("window fits");
        assert_eq!(window_homsc.complex.vertex_count(), 5);
        assert_eq!(window_homsc.complex.maximal_faces().len(), 1);
        assert_eq!(window_homsc.complex.maximal_faces()[0].len(), 5);
    });
}

#[test]
fn criterion_03_homology_suite_matches_known_ranks() {
    gate(3, "homology of the standard suite", Duration::from_secs(5), || {
        for n in 1..=5 {
            let h = integral_homology(&Complex::path(n));
            assert!(h.betti[0] == 1 && h.betti[1..].iter().all(|&b| b == 0), "path({n})");
            assert!(h.torsion.iter().all(Vec::is_empty), "path({n}) torsion");
        }
        for n in 3..=7 {
            let h = integral_homology(&Complex::cycle(n).expect("n >= 3"));
            assert_eq!(h.betti, vec![1, 1], "cycle({n})");
            assert!(h.torsion.iter().all(Vec::is_empty), "cycle({n}) torsion");
        }
        for n in [3, 4] {
            let (sphere, _) = hypercube_complex(2, n, 3).expect("2-sphere parameters");
            let h = integral_homology(&sphere);
            assert!(h.betti.len() >= 3, "2-sphere at resolution {n}");
            assert_eq!(&h.betti[..3], &[1, 0, 1], "2-sphere at resolution {n}");
            assert!(h.betti[3..].iter().all(|&b| b == 0), "resolution {n} tail");
            assert!(h.torsion.iter().all(Vec::is_empty), "resolution {n} torsion");
        }
        let h = integral_homology(&rp2());
        assert_eq!(h.betti, vec![1, 0, 0], "projective plane betti");
        assert_eq!(h.torsion, vec![vec![], vec![2], vec![]], "projective plane torsion");
    });
}

#[test]
fn criterion_04_classifier_splits_paths_simplices_and_cycles() {
    gate(4, "classifier on paths, simplices, cycles", Duration::from_secs(180), || {
        let opts = ClassifyOptions::default();
        let mut contractible: Vec<(String, Complex)> = (1..=4)
            .map(|n| (format!("path({n})"), Complex::path(n)))
            .collect();
        contractible.extend((0..=3).map(|k| (format!("simplex({k})"), Complex::full_simplex(k))));
        for (name, c) in &contractible {
            let report = classify(c, &opts).expect("small complex");
            assert_eq!(report.verdict, Verdict::ContractibleSide, "{name}");
            let w = report.witness.as_ref().expect("verdict carries a witness");
            let sys_name = report.witness_system.as_ref().expect("witness is named");
            let sys = system_by_name(sys_name).expect("classifier names a known system");
            let check = verify_witness(w, &sys).expect("witness fits the verifier");
            assert!(check.ok, "{name}: witness failed independent re-verification");
        }

        for n in [3usize, 4, 5] {
            let started = Instant::now();
            let c = Complex::cycle(n).expect("n >= 3");
            let report = classify(&c, &opts).expect("small complex");
            assert_eq!(report.verdict, Verdict::UniversalSide, "cycle({n})");
            match report.refutation {
                Some(Refutation::HomologyObstruction { dimension, ref group, .. }) => {
                    assert_eq!(dimension, 1, "cycle({n}) obstruction dimension");
                    assert_eq!(group, "Z", "cycle({n}) obstruction group");
                }
                other => panic!("cycle({n}): expected a homology obstruction, got {other:?}"),
            }

            let forced = classify(
                &c,
                &ClassifyOptions {
                    force_search: true,
                    ..ClassifyOptions::default()
                },
            )
            .expect("forced search fits the size bound");
            assert_eq!(forced.verdict, Verdict::UniversalSide, "cycle({n}) forced");
            assert!(
                forced
                    .cross_checks
                    .iter()
                    .any(|(what, pass)| what == "siggers4 search exhausted" && *pass),
                "cycle({n}): forced run must record the exhausted definitive search"
            );
            let per_cycle = started.elapsed();
            assert!(
                per_cycle <= Duration::from_secs(60),
                "cycle({n}) took {per_cycle:?}, allowed 60s"
            );
        }
    });
}

#[test]
fn criterion_05_dsat_admits_only_projections() {
    gate(5, "projection-only check on dsat", Duration::from_secs(10), || {
        assert_eq!(
            projections_only_check(&dsat(), 3).expect("arity 3 fits"),
            true,
            "dsat must admit only projections up to arity 3"
        );
    });
}

/// A random complex on at most `max_vertices` labeled vertices with a few
/// random faces of at most three vertices each.
fn random_complex(rng: &mut StdRng, max_vertices: usize) -> Complex {
    let n = rng.gen_range(1..=max_vertices);
    let vertices: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let mut faces: Vec<Vec<String>> = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let size = rng.gen_range(1..=3.min(n));
        faces.push((0..size).map(|_| rng.gen_range(0..n).to_string()).collect());
    }
    Complex::new(vertices, faces).expect("faces only mention listed vertices")
}

/// Counts maps `V(a) -> V(b)` that respect the pins and send every face to
/// a face, by exhausting all |V(b)|^|V(a)| vertex maps.
fn count_precolored_homs(
    a: &Complex,
    rho: &BTreeMap<String, String>,
    b: &Complex,
) -> u64 {
    let na = a.vertex_count();
    let nb = b.vertex_count();
    let mut count = 0u64;
    let mut pick = vec![0usize; na];
    loop {
        let map: BTreeMap<String, String> = a
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), b.vertices()[pick[i]].clone()))
            .collect();
        if rho.iter().all(|(v, x)| map[v] == *x)
            && is_simplicial_map(a, b, &map).expect("map is total")
        {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == na {
                return count;
            }
            pick[i] += 1;
            if pick[i] < nb {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Counts relational homomorphisms instance -> template by exhausting all
/// element maps and checking every tuple of every relation.
fn count_structure_homs(instance: &RelStructure, template: &RelStructure) -> u64 {
    let ni = instance.domain().len();
    let nt = template.domain().len();
    let mut count = 0u64;
    let mut g = vec![0u8; ni];
    loop {
        let ok = instance.relations().all(|(name, rel)| {
            let trel = template
                .relation(name)
                .expect("instance signature is contained in the template signature");
            rel.tuples.iter().all(|t| {
                let image: Vec<u8> = t.iter().map(|&i| g[i as usize]).collect();
                trel.tuples.contains(&image)
            })
        });
        if ok {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == ni {
                return count;
            }
            g[i] += 1;
            if (g[i] as usize) < nt {
                break;
            }
            g[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn criterion_06_reduction_round_trips_preserve_solution_counts() {
    gate(6, "randomized reduction round-trips", Duration::from_secs(30), || {
        let mut rng = StdRng::seed_from_u64(0x0605_0403);
        for trial in 0..25 {
            let a = random_complex(&mut rng, 5);
            let b = random_complex(&mut rng, 4);
            let mut alpha: Vec<String> = Vec::new();
            let mut rho: BTreeMap<String, String> = BTreeMap::new();
            for v in a.vertices() {
                if rng.gen_bool(0.4) {
                    let x = b.vertices()[rng.gen_range(0..b.vertex_count())].clone();
                    alpha.push(v.clone());
                    rho.insert(v.clone(), x);
                }
            }

            let direct = count_precolored_homs(&a, &rho, &b);

            let instance =
                precolored_to_relational(&a, &alpha, &rho, &b).expect("pins are well-formed");
            let template = idempotent_realization(&b).expect("small target");
            let relational = count_structure_homs(&instance, &template);
            assert_eq!(
                direct, relational,
                "trial {trial}: direct count {direct} vs relational count {relational}\n\
                 source {a:?}\ntarget {b:?}\npins {rho:?}"
            );

            match relational_to_precolored(&instance, &b).expect("instance is well-formed") {
                PrecoloredReduction::Reduced {
                    complex,
                    alpha: _,
                    rho: back_rho,
                } => {
                    let back = count_precolored_homs(&complex, &back_rho, &b);
                    assert_eq!(
                        direct, back,
                        "trial {trial}: round-trip changed the count\nsource {a:?}"
                    );
                }
                PrecoloredReduction::UnsatShortcut => {
                    assert_eq!(direct, 0, "trial {trial}: shortcut on a satisfiable instance");
                }
            }
        }
    });
}

/// All operation tables of the given arity preserving every relation of the
/// template, discovered by plain enumeration. Tables are value vectors in
/// mixed-radix argument order, first argument most significant.
fn brute_force_polymorphisms(template: &RelStructure, arity: usize) -> Vec<Vec<u8>> {
    let n = template.domain().len();
    let entries = n.pow(arity as u32);
    let mut found = Vec::new();
    let mut table = vec![0u8; entries];
    'tables: loop {
        if preserves_all_relations(template, arity, &table) {
            found.push(table.clone());
        }
        let mut i = 0;
        loop {
            if i == entries {
                break 'tables;
            }
            table[i] += 1;
            if (table[i] as usize) < n {
                break;
            }
            table[i] = 0;
            i += 1;
        }
    }
    found
}

fn preserves_all_relations(template: &RelStructure, arity: usize, table: &[u8]) -> bool {
    let n = template.domain().len();
    template.relations().all(|(_, rel)| {
        let tuples: Vec<&Vec<u8>> = rel.tuples.iter().collect();
        if tuples.is_empty() {
            return true;
        }
        let mut pick = vec![0usize; arity];
        loop {
            let mut image = Vec::with_capacity(rel.arity);
            for coord in 0..rel.arity {
                let mut idx = 0usize;
                for &p in &pick {
                    idx = idx * n + tuples[p][coord] as usize;
                }
                image.push(table[idx]);
            }
            if !rel.tuples.contains(&image) {
                return false;
            }
            let mut i = 0;
            loop {
                if i == arity {
                    return true;
                }
                pick[i] += 1;
                if pick[i] < tuples.len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
        }
    })
}

/// A random pp-formula over the template's signature, with its free
/// variable list. Variables are drawn from a pool of at most five.
fn random_pp_formula(rng: &mut StdRng, template: &RelStructure) -> (PpFormula, Vec<String>) {
    let signature: Vec<(String, usize)> = template
        .relations()
        .map(|(name, rel)| (name.clone(), rel.arity))
        .collect();
    let total = rng.gen_range(1..=5);
    let vars: Vec<String> = (0..total).map(|i| format!("v{i}")).collect();
    let free_count = rng.gen_range(1..=3.min(total));
    let free = vars[..free_count].to_vec();
    let bound = vars[free_count..].to_vec();

    let mut parts: Vec<PpFormula> = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let (name, arity) = signature[rng.gen_range(0..signature.len())].clone();
        let args = (0..arity)
            .map(|_| vars[rng.gen_range(0..total)].clone())
            .collect();
        parts.push(PpFormula::Atom { relation: name, args });
    }
    if total >= 2 && rng.gen_bool(0.3) {
        let x = vars[rng.gen_range(0..total)].clone();
        let y = vars[rng.gen_range(0..total)].clone();
        parts.push(PpFormula::Eq(x, y));
    }
    let body = PpFormula::And(parts);
    let formula = if bound.is_empty() {
        body
    } else {
        PpFormula::Exists(bound, Box::new(body))
    };
    (formula, free)
}

#[test]
fn criterion_07_polymorphisms_preserve_pp_definable_relations() {
    gate(7, "closure of pp-definable relations", Duration::from_secs(60), || {
        let mut rng = StdRng::seed_from_u64(0x0706_0504);
        let templates: Vec<(&str, RelStructure, Vec<usize>)> = vec![
            ("dsat", dsat(), vec![1, 2, 3]),
            (
                "realization of path(2)",
                idempotent_realization(&Complex::path(2)).expect("small"),
                vec![1, 2],
            ),
            (
                "realization of cycle(3)",
                idempotent_realization(&Complex::cycle(3).expect("n >= 3")).expect("small"),
                vec![1, 2],
            ),
        ];
        for (name, template, arities) in &templates {
            let n = template.domain().len();
            let polys: Vec<(usize, Vec<u8>)> = arities
                .iter()
                .flat_map(|&m| {
                    brute_force_polymorphisms(template, m)
                        .into_iter()
                        .map(move |t| (m, t))
                })
                .collect();
            assert!(
                !polys.is_empty(),
                "{name}: projections alone should already appear"
            );

            let mut nonempty = 0usize;
            for round in 0..100 {
                let (formula, free) = random_pp_formula(&mut rng, template);
                let solutions = eval_pp_formula(&formula, &free, template)
                    .expect("generated formulas are well-formed");
                let sol_set: BTreeSet<Vec<u8>> = solutions
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|l| {
                                template
                                    .element_index(l)
                                    .expect("solutions use domain labels")
                            })
                            .collect()
                    })
                    .collect();
                if sol_set.is_empty() {
                    continue;
                }
                nonempty += 1;
                let tuples: Vec<&Vec<u8>> = sol_set.iter().collect();
                for (m, table) in &polys {
                    let mut pick = vec![0usize; *m];
                    'picks: loop {
                        let image: Vec<u8> = (0..free.len())
                            .map(|coord| {
                                let mut idx = 0usize;
                                for &p in &pick {
                                    idx = idx * n + tuples[p][coord] as usize;
                                }
                                table[idx]
                            })
                            .collect();
                        assert!(
                            sol_set.contains(&image),
                            "{name}, round {round}: an arity-{m} polymorphism left the \
                             solution set of {formula:?} (free {free:?})"
                        );
                        let mut i = 0;
                        loop {
                            if i == *m {
                                break 'picks;
                            }
                            pick[i] += 1;
                            if pick[i] < tuples.len() {
                                break;
                            }
                            pick[i] = 0;
                            i += 1;
                        }
                    }
                }
            }
            assert!(
                nonempty >= 10,
                "{name}: only {nonempty} of 100 formulas were satisfiable; the check is vacuous"
            );
        }
    });
}

#[test]
fn criterion_08_grid_rounding_and_approximation_maps() {
    gate(8, "grid rounding and approximation maps", Duration::from_secs(5), || {
        // The worked 5x5 grid in dimension 2, row index = coordinate 0.
        #[rustfmt::skip]
        let expected: [[&[&[u8]]; 5]; 5] = [
            [&[&[0, 0]], &[&[0, 0]], &[&[0, 0], &[0, 1]], &[&[0, 1]], &[&[0, 1]]],
            [&[&[0, 0]], &[&[0, 0]], &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], &[&[0, 1]], &[&[0, 1]]],
            [
                &[&[0, 0], &[1, 0]],
                &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]],
                &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]],
                &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]],
                &[&[0, 1], &[1, 1]],
            ],
            [&[&[1, 0]], &[&[1, 0]], &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], &[&[1, 1]], &[&[1, 1]]],
            [&[&[1, 0]], &[&[1, 0]], &[&[1, 0], &[1, 1]], &[&[1, 1]], &[&[1, 1]]],
        ];
        for r0 in 0..5 {
            for r1 in 0..5 {
                let want: Vec<Vec<u8>> = expected[r0][r1].iter().map(|c| c.to_vec()).collect();
                assert_eq!(
                    round_vertex(2, &[r0, r1]),
                    want,
                    "rounding mismatch at offset ({r0}, {r1})"
                );
            }
        }

        // Dimension 3 on the bracket lattice {0, 3, 6}^3: a coordinate at the
        // midpoint 3 stays ambiguous, anything else rounds to its nearer pole.
        for c0 in [0usize, 3, 6] {
            for c1 in [0usize, 3, 6] {
                for c2 in [0usize, 3, 6] {
                    let offset = [c0, c1, c2];
                    let mut want: BTreeSet<Vec<u8>> = BTreeSet::new();
                    let ambiguous = offset.iter().filter(|&&c| c == 3).count();
                    for mask in 0..(1u32 << ambiguous) {
                        let mut corner = Vec::with_capacity(3);
                        let mut bit = 0;
                        for &c in &offset {
                            corner.push(if c == 3 {
                                let v = ((mask >> bit) & 1) as u8;
                                bit += 1;
                                v
                            } else {
                                u8::from(c > 3)
                            });
                        }
                        want.insert(corner);
                    }
                    let got = round_vertex(3, &offset);
                    assert_eq!(got.len(), 1 << ambiguous, "corner count at {offset:?}");
                    assert_eq!(
                        got.into_iter().collect::<BTreeSet<_>>(),
                        want,
                        "corners at {offset:?}"
                    );
                }
            }
        }

        for (d, n, m) in [(1usize, 3usize, 3usize), (2, 3, 3)] {
            let map = subdivision_approx_map(d, n, m).expect("parameters are admissible");
            assert!(
                map.is_simplicial().expect("map is total on the vertices"),
                "approximation map for d={d}, n={n}, m={m} must be simplicial"
            );
        }
    });
}

#[test]
fn criterion_09_loop_contraction_certificates_verify_and_reject_tampering() {
    gate(9, "loop-contraction certificates", Duration::from_secs(10), || {
        let carrier = Complex::full_simplex(2);
        // The 12-ary minimum (under the label order 0 < 1 < 2) is cyclic,
        // so it is eligible padding material for loops of length up to 4.
        let arity = 12usize;
        let size = 3usize;
        let values: Vec<u8> = (0..size.pow(arity as u32))
            .map(|idx| {
                let mut rest = idx;
                let mut min = u8::MAX;
                for _ in 0..arity {
                    min = min.min((rest % size) as u8);
                    rest /= size;
                }
                min
            })
            .collect();
        let table = WitnessTable {
            carrier: Carrier::Complex(carrier.clone()),
            arity,
            values,
        };

        let mut rng = StdRng::seed_from_u64(0x0908_0706);
        for round in 0..10 {
            let k = rng.gen_range(3..=4);
            let labels: Vec<String> = (0..k)
                .map(|_| rng.gen_range(0..3u8).to_string())
                .collect();
            let cert = contract_loop(&carrier, &table, &labels)
                .expect("12-ary table pads loops of length up to 4");
            let report = verify_contraction(&cert);
            assert!(
                report.ok,
                "round {round}: certificate for {labels:?} rejected: {:?}",
                report.violation
            );

            // Corrupting the final stage must break the constant-map check.
            let mut forged = cert.clone();
            let last = forged.stages.last_mut().expect("stages are nonempty");
            last[0] = if last[0] == "0" { "1".into() } else { "0".into() };
            assert!(
                !verify_contraction(&forged).ok,
                "round {round}: corrupted final stage slipped through"
            );

            // Dropping a stage must break the stage-count check.
            let mut truncated = cert.clone();
            truncated.stages.pop();
            assert!(
                !verify_contraction(&truncated).ok,
                "round {round}: truncated certificate slipped through"
            );
        }
    });
}

#[test]
fn criterion_10_witness_lifting_to_hom_complexes() {
    gate(10, "witness lifting to hom complexes", Duration::from_secs(10), || {
        let b = Complex::path(2);
        let majority = system_by_name("majority").expect("builtin");
        let SearchResult::Found(w) =
            search_witness(&Carrier::Complex(b.clone()), &majority).expect("3 vertices")
        else {
            panic!("path(2) must admit a majority polymorphism");
        };

        // Lift onto the unrestricted mix complex of maps path(1) -> path(2).
        let h1 = hom_sc_complex(&Complex::path(1), &b).expect("small");
        let lifted1 = lift_polymorphism(&w, &h1).expect("lift is total");
        let check1 = verify_witness(&lifted1, &majority).expect("lift fits the verifier");
        assert!(check1.ok, "lift onto the unrestricted mix complex: {:?}", check1.violations);

        // Lift onto a pinned window: maps path(2) -> path(2) with f(0) = 1,
        // observed at the output vertex 2 only.
        let rho = precoloring(vec![("0", "1")]);
        let window = vec!["2".to_string()];
        let h2 = hom_sc_restricted(&b, &window, &rho, &b).expect("window fits");
        let lifted2 = lift_polymorphism(&w, &h2).expect("lift is total");
        let check2 = verify_witness(&lifted2, &majority).expect("lift fits the verifier");
        assert!(check2.ok, "lift onto the pinned window: {:?}", check2.violations);

        // The pinned pentagon window fills in to a full simplex, so it also
        // carries a majority witness of its own, found directly.
        let h3 = hom_sc_restricted(&Complex::path(2), &window, &rho, &pentagon())
            .expect("window fits");
        assert_eq!(h3.complex.maximal_faces().len(), 1, "window is a single face");
        let found = search_witness(&Carrier::Complex(h3.complex.clone()), &majority)
            .expect("5 vertices");
        assert!(
            matches!(found, SearchResult::Found(_)),
            "the filled-in pentagon window must admit a majority polymorphism"
        );
    });
}

#[test]
fn criterion_11_small_fixtures_agree_across_identity_systems() {
    gate(11, "identity systems agree on small fixtures", Duration::from_secs(120), || {
        let systems = ["majority", "fs2", "cyclic2", "cyclic3"];
        let mut with_witness = 0usize;
        let mut without_witness = 0usize;
        for (name, c) in fixture_complexes() {
            if c.vertex_count() > 5 {
                continue;
            }
            let carrier = Carrier::Complex(c);
            let found = |spec: &str| -> bool {
                let system = system_by_name(spec).expect("builtin");
                matches!(
                    search_witness(&carrier, &system).expect("small carrier"),
                    SearchResult::Found(_)
                )
            };
            let majority = found("majority");
            let siggers = found("siggers4");
            if majority {
                assert!(siggers, "{name}: majority witness without a siggers4 witness");
            }
            if !siggers {
                for spec in systems {
                    assert!(
                        !found(spec),
                        "{name}: no siggers4 witness, yet a {spec} witness exists"
                    );
                }
            }
            if siggers {
                with_witness += 1;
            } else {
                without_witness += 1;
            }
        }
        assert!(
            with_witness > 0 && without_witness > 0,
            "the fixture set must exercise both sides \
             (found {with_witness} with, {without_witness} without)"
        );
    });
}
