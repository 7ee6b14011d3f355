//! Hypercube models of spheres, the blockwise rounding map into the
//! barycentric subdivision, and loop-contraction certificates driven by a
//! cyclic operation on the carrier.
//!
//! `hypercube_complex(d, n, m)` builds the d-sphere as an iterated
//! suspension: dimension 1 is the n-cycle, and each further dimension is the
//! product with `path(m)` with the two outer layers each collapsed to a
//! point. `subdivision_approx_map` sends a refined hypercube into the
//! barycentric subdivision of a coarse one by rounding block coordinates.
//! `contract_loop` uses a cyclic operation of large arity to produce a
//! step-by-step null-homotopy of a loop, checkable by `verify_contraction`
//! without trusting the generator.

use std::collections::{BTreeMap, BTreeSet};

use crate::complex::{is_simplicial_map, shortlex, Complex};
use crate::identities::{self, Carrier, WitnessTable};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Hypercube complexes
// ---------------------------------------------------------------------------

/// Coordinate bookkeeping for a hypercube complex. Every vertex carries a
/// canonical representative in `{0..n-1} x {0..m}^(d-1)`: the first
/// coordinate is cyclic, and whenever some later coordinate sits on a
/// collapsed layer (0 or m), all earlier coordinates are zeroed because the
/// whole prefix is glued to a point there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypercubeMeta {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    /// Vertex label -> canonical coordinates.
    pub coords: BTreeMap<String, Vec<usize>>,
    /// One entry per suspension step (dimensions 2..=d): the vertex labels
    /// of the collapsed bottom (layer 0) and top (layer m) of that step.
    pub poles: Vec<[String; 2]>,
}

/// Renders canonical coordinates as a vertex label: bare digits in
/// dimension 1 (matching `Complex::cycle`), a parenthesized tuple otherwise.
fn coord_label(coords: &[usize]) -> String {
    if coords.len() == 1 {
        coords[0].to_string()
    } else {
        let parts: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

impl HypercubeMeta {
    /// Canonicalizes a coordinate tuple: wraps the first coordinate modulo
    /// `n`, range-checks the rest against `0..=m`, and zeroes everything
    /// before the last coordinate that sits on a collapsed layer.
    pub fn canonical(&self, coords: &[i64]) -> Result<Vec<usize>> {
        if coords.len() != self.d {
            return Err(Error::Incompatible(format!(
                "expected {} coordinates, got {}",
                self.d,
                coords.len()
            )));
        }
        let mut out = vec![0usize; self.d];
        out[0] = coords[0].rem_euclid(self.n as i64) as usize;
        for i in 1..self.d {
            if coords[i] < 0 || coords[i] > self.m as i64 {
                return Err(Error::Incompatible(format!(
                    "coordinate {i} is {} but must lie in 0..={}",
                    coords[i], self.m
                )));
            }
            out[i] = coords[i] as usize;
        }
        if let Some(j) = (1..self.d).rev().find(|&j| out[j] == 0 || out[j] == self.m) {
            for slot in out.iter_mut().take(j) {
                *slot = 0;
            }
        }
        Ok(out)
    }

    /// The vertex label for a (not necessarily canonical) coordinate tuple.
    pub fn vertex_label(&self, coords: &[i64]) -> Result<String> {
        let label = coord_label(&self.canonical(coords)?);
        if !self.coords.contains_key(&label) {
            return Err(Error::Inconsistent(format!(
                "canonical coordinates {label} are missing from the vertex table"
            )));
        }
        Ok(label)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "d": self.d,
            "n": self.n,
            "m": self.m,
            "coords": self.coords,
            "poles": self.poles,
        })
    }
}

/// Builds the d-dimensional hypercube model of a sphere: the n-cycle for
/// d = 1, and for each further dimension the product with `path(m)` with
/// layer 0 and layer m each collapsed to a single vertex. Vertices are
/// labeled by their canonical coordinates.
pub fn hypercube_complex(d: usize, n: usize, m: usize) -> Result<(Complex, HypercubeMeta)> {
    if d < 1 {
        return Err(Error::InvalidComplex(
            "hypercube dimension must be at least 1".into(),
        ));
    }
    if n < 3 {
        return Err(Error::InvalidComplex(format!(
            "the cyclic direction needs at least 3 layers, got {n}"
        )));
    }
    if m < 3 {
        return Err(Error::InvalidComplex(format!(
            "each suspension direction needs at least 3 layers, got {m}"
        )));
    }
    let mut complex = Complex::cycle(n)?;
    let mut coords: BTreeMap<String, Vec<usize>> =
        (0..n).map(|i| (i.to_string(), vec![i])).collect();
    let mut poles: Vec<[String; 2]> = Vec::new();
    for step in 2..=d {
        let prod = complex.product(&Complex::path(m));
        let prev_labels: Vec<String> = complex.vertices().to_vec();
        // Partition of the product: the two outer layers collapse, every
        // middle vertex stays a singleton.
        let mut classes: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
        let bottom: Vec<String> = prev_labels.iter().map(|l| format!("({l},0)")).collect();
        let top: Vec<String> = prev_labels.iter().map(|l| format!("({l},{m})")).collect();
        let mut top_coords = vec![0usize; step];
        top_coords[step - 1] = m;
        classes.push((bottom, vec![0usize; step]));
        classes.push((top, top_coords));
        for l in &prev_labels {
            for y in 1..m {
                let mut c = coords[l].clone();
                c.push(y);
                classes.push((vec![format!("({l},{y})")], c));
            }
        }
        let class_lists: Vec<Vec<String>> = classes.iter().map(|(ms, _)| ms.clone()).collect();
        let quot = prod.quotient(&class_lists)?;
        // The quotient names each class by its shortlex-least member;
        // translate those names to canonical coordinate labels.
        let mut translate: BTreeMap<String, String> = BTreeMap::new();
        let mut new_coords: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (members, c) in &classes {
            let rep = members
                .iter()
                .min_by(|a, b| shortlex(a, b))
                .expect("partition classes are nonempty")
                .clone();
            let label = coord_label(c);
            translate.insert(rep, label.clone());
            new_coords.insert(label, c.clone());
        }
        let new_vertices: Vec<String> =
            quot.vertices().iter().map(|l| translate[l].clone()).collect();
        let new_faces: Vec<Vec<String>> = quot
            .maximal_face_labels()
            .iter()
            .map(|f| f.iter().map(|l| translate[l].clone()).collect())
            .collect();
        complex = Complex::new(new_vertices, new_faces)?;
        let mut bottom_coords = vec![0usize; step];
        let label0 = coord_label(&bottom_coords);
        bottom_coords[step - 1] = m;
        let label_m = coord_label(&bottom_coords);
        poles.push([label0, label_m]);
        coords = new_coords;
    }
    let meta = HypercubeMeta {
        d,
        n,
        m,
        coords,
        poles,
    };
    Ok((complex, meta))
}

// ---------------------------------------------------------------------------
// Blockwise rounding into the subdivision
// ---------------------------------------------------------------------------

/// Rounds an in-block coordinate tuple to the set of unit-cube corners it
/// approximates: finds the smallest `t >= 0` such that at most `t`
/// coordinates lie in the band `[d-t, d+t]`, leaves those coordinates free
/// over {0,1}, and rounds every other coordinate to its side of the center.
/// The result is the lex-sorted list of corner tuples, always nonempty.
pub fn round_vertex(d: usize, coords: &[usize]) -> Vec<Vec<u8>> {
    assert_eq!(
        coords.len(),
        d,
        "round_vertex expects one coordinate per dimension"
    );
    assert!(
        coords.iter().all(|&c| c <= 2 * d),
        "block coordinates must lie in 0..=2d"
    );
    let in_band = |c: usize, t: usize| c + t >= d && c <= d + t;
    let t = (0..=d)
        .find(|&t| coords.iter().filter(|&&c| in_band(c, t)).count() <= t)
        .expect("t = d admits every coordinate");
    let free: Vec<usize> = (0..d).filter(|&i| in_band(coords[i], t)).collect();
    let base: Vec<u8> = coords.iter().map(|&c| u8::from(c > d)).collect();
    let mut corners = Vec::with_capacity(1 << free.len());
    for mask in 0..(1usize << free.len()) {
        let mut corner = base.clone();
        for (bit, &i) in free.iter().enumerate() {
            corner[i] = ((mask >> bit) & 1) as u8;
        }
        corners.push(corner);
    }
    corners.sort_unstable();
    corners
}

/// A refined hypercube, a coarse hypercube, its barycentric subdivision,
/// and a vertex map `source -> subdivided` produced by blockwise rounding.
#[derive(Clone, Debug)]
pub struct SubdivisionApproxMap {
    pub source: Complex,
    pub source_meta: HypercubeMeta,
    pub target: Complex,
    pub target_meta: HypercubeMeta,
    pub subdivided: Complex,
    /// Source vertex label -> subdivision vertex label (a face label of the
    /// coarse hypercube).
    pub vertex_map: BTreeMap<String, String>,
}

/// Maps `hypercube_complex(d, 2dn, 2dm)` into the barycentric subdivision
/// of `hypercube_complex(d, n, m)`: every source vertex falls into a d-cube
/// block of side 2d, and `round_vertex` of its in-block offset selects the
/// face of the coarse hypercube it approximates.
pub fn subdivision_approx_map(d: usize, n: usize, m: usize) -> Result<SubdivisionApproxMap> {
    let (target, target_meta) = hypercube_complex(d, n, m)?;
    let (source, source_meta) = hypercube_complex(d, 2 * d * n, 2 * d * m)?;
    let subdivided = target.subdivision();
    let width = 2 * d;
    let mut vertex_map = BTreeMap::new();
    for (label, x) in &source_meta.coords {
        // Block index and in-block offset. The first coordinate is cyclic,
        // so its offset stays below 2d; the others clamp the final layer
        // into the last block, giving offsets up to and including 2d.
        let mut block = vec![(x[0] / width) as i64];
        let mut offset = vec![x[0] % width];
        for i in 1..d {
            let q = (x[i] / width).min(m - 1);
            block.push(q as i64);
            offset.push(x[i] - width * q);
        }
        let mut members: BTreeSet<String> = BTreeSet::new();
        for corner in round_vertex(d, &offset) {
            let target_coords: Vec<i64> =
                (0..d).map(|i| block[i] + corner[i] as i64).collect();
            members.insert(target_meta.vertex_label(&target_coords)?);
        }
        let idxs: Vec<u32> = members
            .iter()
            .map(|l| {
                target
                    .vertex_index(l)
                    .expect("vertex_label only returns known labels")
            })
            .collect();
        let face = target.face_label(&idxs);
        if subdivided.vertex_index(&face).is_none() {
            return Err(Error::Inconsistent(format!(
                "image {face} of source vertex {label} is not a face of the coarse hypercube"
            )));
        }
        vertex_map.insert(label.clone(), face);
    }
    Ok(SubdivisionApproxMap {
        source,
        source_meta,
        target,
        target_meta,
        subdivided,
        vertex_map,
    })
}

impl SubdivisionApproxMap {
    /// Checks that the rounding map sends every face to a face.
    pub fn is_simplicial(&self) -> Result<bool> {
        is_simplicial_map(&self.source, &self.subdivided, &self.vertex_map)
    }
}

// ---------------------------------------------------------------------------
// Loop-contraction certificates
// ---------------------------------------------------------------------------

/// A step-by-step null-homotopy of a loop in a complex. The loop is padded
/// to the arity `n` of a cyclic operation on the carrier; `stages` then
/// holds the 2n+1 intermediate loops of the homotopy, from the padded loop
/// down to a constant. Validity is defined entirely by `verify_contraction`
/// and does not trust how the stages were produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionCertificate {
    pub carrier: Complex,
    /// The cyclic operation used to generate the stages (arity n).
    pub witness: WitnessTable,
    pub original_loop: Vec<String>,
    pub padded_loop: Vec<String>,
    /// Stage maps `cycle(n) -> carrier`, one per homotopy level 0..=2n.
    pub stages: Vec<Vec<String>>,
}

/// Outcome of certificate verification: `ok`, or the first violation found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionReport {
    pub ok: bool,
    pub violation: Option<String>,
}

impl ContractionCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "carrier": self.carrier.to_json(),
            "witness": self.witness.to_json(),
            "original_loop": self.original_loop,
            "padded_loop": self.padded_loop,
            "stages": self.stages,
        })
    }

    pub fn from_json_str(s: &str) -> Result<ContractionCertificate> {
        let v: serde_json::Value = serde_json::from_str(s)
            .map_err(|e| Error::Parse(format!("certificate JSON: {e}")))?;
        let field = |key: &str| -> Result<&serde_json::Value> {
            v.get(key)
                .ok_or_else(|| Error::Parse(format!("certificate JSON: missing {key:?}")))
        };
        let carrier = Complex::from_json_str(&field("carrier")?.to_string())?;
        let witness =
            WitnessTable::from_json(Carrier::Complex(carrier.clone()), field("witness")?)?;
        let strings = |key: &str, v: &serde_json::Value| -> Result<Vec<String>> {
            v.as_array()
                .ok_or_else(|| Error::Parse(format!("certificate JSON: {key} must be an array")))?
                .iter()
                .map(|s| {
                    s.as_str().map(str::to_string).ok_or_else(|| {
                        Error::Parse(format!("certificate JSON: {key} must hold strings"))
                    })
                })
                .collect()
        };
        let original_loop = strings("original_loop", field("original_loop")?)?;
        let padded_loop = strings("padded_loop", field("padded_loop")?)?;
        let stages = field("stages")?
            .as_array()
            .ok_or_else(|| Error::Parse("certificate JSON: stages must be an array".into()))?
            .iter()
            .map(|st| strings("stages", st))
            .collect::<Result<Vec<_>>>()?;
        Ok(ContractionCertificate {
            carrier,
            witness,
            original_loop,
            padded_loop,
            stages,
        })
    }
}

/// Contracts a loop using a cyclic operation `c` of arity `n >= 3k`. The
/// loop is padded by repeating each of its k vertices a balanced number of
/// times (so every run has length at least 3), and the homotopy stages are
/// the pointwise `c`-images of progressively rotated argument tuples: stage
/// 2s reads `f(x + min(j, s))` in argument j, and stage 2s+1 switches to
/// depth s+1 exactly at positions where the padded loop repeats its
/// predecessor. The result always passes `verify_contraction`.
pub fn contract_loop(
    a: &Complex,
    c: &WitnessTable,
    loop_labels: &[String],
) -> Result<ContractionCertificate> {
    let k = loop_labels.len();
    if k < 3 {
        return Err(Error::Incompatible(format!(
            "a loop needs at least 3 vertices, got {k}"
        )));
    }
    let n = c.arity;
    if n < 3 * k {
        return Err(Error::Incompatible(
            "insufficient arity for padding".into(),
        ));
    }
    match &c.carrier {
        Carrier::Complex(cc) if cc == a => {}
        _ => {
            return Err(Error::Incompatible(
                "the witness must operate on the loop's carrier complex".into(),
            ))
        }
    }
    let system = identities::builtin_system("cyclic", Some(n))?;
    let report = identities::verify_witness(c, &system)?;
    if !report.ok {
        return Err(Error::Incompatible(format!(
            "claimed cyclic witness fails verification: {}",
            report.violations.first().cloned().unwrap_or_default()
        )));
    }
    let mut loop_idx: Vec<u8> = Vec::with_capacity(k);
    for l in loop_labels {
        let Some(i) = a.vertex_index(l) else {
            return Err(Error::Incompatible(format!(
                "loop mentions unknown vertex {l:?}"
            )));
        };
        loop_idx.push(i as u8);
    }
    for x in 0..k {
        let edge = [loop_idx[x] as u32, loop_idx[(x + 1) % k] as u32];
        if !a.is_face(&edge) {
            return Err(Error::Incompatible(format!(
                "loop step ({}, {}) is not a face of the carrier",
                loop_labels[x],
                loop_labels[(x + 1) % k]
            )));
        }
    }
    // Balanced padding: the first n mod k vertices get one extra repeat.
    let (q, r) = (n / k, n % k);
    let mut padded: Vec<u8> = Vec::with_capacity(n);
    for (i, &v) in loop_idx.iter().enumerate() {
        padded.extend(std::iter::repeat(v).take(if i < r { q + 1 } else { q }));
    }
    // Positions where the padded loop repeats its predecessor; the odd
    // stages advance their rotation depth exactly there.
    let repeats: Vec<bool> = (0..n).map(|x| padded[x] == padded[(x + n - 1) % n]).collect();
    let mut stages: Vec<Vec<String>> = Vec::with_capacity(2 * n + 1);
    for stage in 0..=(2 * n) {
        let s = stage / 2;
        let mut h = Vec::with_capacity(n);
        for x in 0..n {
            let depth = if stage % 2 == 1 && repeats[x] { s + 1 } else { s };
            let args: Vec<u8> = (1..=n).map(|j| padded[(x + j.min(depth)) % n]).collect();
            h.push(a.label(c.eval(&args) as u32).to_string());
        }
        stages.push(h);
    }
    let cert = ContractionCertificate {
        carrier: a.clone(),
        witness: c.clone(),
        original_loop: loop_labels.to_vec(),
        padded_loop: padded.iter().map(|&v| a.label(v as u32).to_string()).collect(),
        stages,
    };
    let checked = verify_contraction(&cert);
    if !checked.ok {
        return Err(Error::Inconsistent(format!(
            "generated certificate fails verification: {}",
            checked.violation.unwrap_or_default()
        )));
    }
    Ok(cert)
}

/// Collapses cyclic runs of equal labels, so a padded loop can be compared
/// with the loop it came from.
fn collapse_runs(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if out.last() != Some(l) {
            out.push(l.clone());
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Checks a contraction certificate from scratch: the original loop and all
/// stage maps must be simplicial on the cycle, every consecutive pair of
/// stages must satisfy the homotopy-square condition (the four values over
/// each cycle edge span a face of the carrier), the first stage must equal
/// the padded loop (which must collapse back to the original), and the
/// final stage must be constant. Reports the first violation found.
pub fn verify_contraction(cert: &ContractionCertificate) -> ContractionReport {
    let fail = |msg: String| ContractionReport {
        ok: false,
        violation: Some(msg),
    };
    let a = &cert.carrier;
    let n = cert.witness.arity;
    if cert.stages.len() != 2 * n + 1 {
        return fail(format!(
            "expected {} stages for arity {n}, found {}",
            2 * n + 1,
            cert.stages.len()
        ));
    }
    if cert.padded_loop.len() != n {
        return fail(format!(
            "padded loop has length {} but the witness arity is {n}",
            cert.padded_loop.len()
        ));
    }
    if cert.original_loop.is_empty() {
        return fail("original loop is empty".into());
    }
    let resolve = |name: &str, labels: &[String]| -> std::result::Result<Vec<u32>, String> {
        labels
            .iter()
            .map(|l| {
                a.vertex_index(l)
                    .ok_or_else(|| format!("{name} mentions unknown vertex {l:?}"))
            })
            .collect()
    };
    let original = match resolve("original loop", &cert.original_loop) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let k = original.len();
    for x in 0..k {
        if !a.is_face(&[original[x], original[(x + 1) % k]]) {
            return fail(format!(
                "original loop step ({}, {}) is not a face",
                cert.original_loop[x],
                cert.original_loop[(x + 1) % k]
            ));
        }
    }
    if cert.stages[0] != cert.padded_loop {
        return fail("stage 0 differs from the padded loop".into());
    }
    if collapse_runs(&cert.padded_loop) != collapse_runs(&cert.original_loop) {
        return fail("padded loop does not collapse to the original loop".into());
    }
    let mut stage_idx: Vec<Vec<u32>> = Vec::with_capacity(cert.stages.len());
    for (i, st) in cert.stages.iter().enumerate() {
        if st.len() != n {
            return fail(format!("stage {i} has length {} instead of {n}", st.len()));
        }
        match resolve(&format!("stage {i}"), st) {
            Ok(v) => stage_idx.push(v),
            Err(e) => return fail(e),
        }
    }
    for (i, st) in stage_idx.iter().enumerate() {
        for x in 0..n {
            if !a.is_face(&[st[x], st[(x + 1) % n]]) {
                return fail(format!(
                    "stage {i} is not simplicial: step ({}, {}) at position {x}",
                    cert.stages[i][x],
                    cert.stages[i][(x + 1) % n]
                ));
            }
        }
    }
    for i in 0..(2 * n) {
        let (cur, nxt) = (&stage_idx[i], &stage_idx[i + 1]);
        for x in 0..n {
            let y = (x + 1) % n;
            let square = [cur[x], cur[y], nxt[x], nxt[y]];
            if !a.is_face(&square) {
                return fail(format!(
                    "homotopy square between stages {i} and {} over edge ({x}, {y}) is not a face",
                    i + 1
                ));
            }
        }
    }
    let last = &cert.stages[2 * n];
    if last.iter().any(|l| l != &last[0]) {
        return fail("final stage is not constant".into());
    }
    ContractionReport {
        ok: true,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::integral_homology;

    fn strings(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    /// The pointwise-minimum operation on a complex whose vertices are
    /// labeled by their own indices (paths, cycles, full simplices).
    fn min_table(complex: Complex, arity: usize) -> WitnessTable {
        let size = complex.vertex_count();
        let total = size.pow(arity as u32);
        let mut values = vec![0u8; total];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rest = idx;
            let mut min = u8::MAX;
            for _ in 0..arity {
                min = min.min((rest % size) as u8);
                rest /= size;
            }
            *slot = min;
        }
        WitnessTable {
            carrier: Carrier::Complex(complex),
            arity,
            values,
        }
    }

    #[test]
    fn parameter_bounds_are_enforced() {
        assert!(hypercube_complex(0, 5, 3).is_err());
        assert!(hypercube_complex(1, 2, 3).is_err());
        assert!(hypercube_complex(2, 4, 2).is_err());
    }

    #[test]
    fn dimension_one_is_the_cycle() {
        let (h, meta) = hypercube_complex(1, 5, 3).unwrap();
        assert_eq!(h, Complex::cycle(5).unwrap());
        assert_eq!(meta.coords["3"], vec![3]);
        assert!(meta.poles.is_empty());
        assert_eq!(meta.vertex_label(&[7]).unwrap(), "2");
        assert_eq!(meta.vertex_label(&[-1]).unwrap(), "4");
    }

    #[test]
    fn dimension_two_counts_and_homology() {
        let (h, meta) = hypercube_complex(2, 4, 3).unwrap();
        assert_eq!(h.vertex_count(), 4 * 2 + 2);
        assert_eq!(meta.poles, vec![["(0,0)".to_string(), "(0,3)".to_string()]]);
        // Collapsed layers swallow the cyclic coordinate.
        assert_eq!(meta.vertex_label(&[2, 0]).unwrap(), "(0,0)");
        assert_eq!(meta.vertex_label(&[3, 3]).unwrap(), "(0,3)");
        assert_eq!(meta.vertex_label(&[-1, 2]).unwrap(), "(3,2)");
        assert!(meta.vertex_label(&[0, 4]).is_err());

        let (s2, _) = hypercube_complex(2, 3, 3).unwrap();
        let hom = integral_homology(&s2);
        let mut betti = hom.betti.clone();
        while betti.last() == Some(&0) {
            betti.pop();
        }
        assert_eq!(betti, vec![1, 0, 1]);
        assert!(hom.torsion.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn dimension_three_has_sphere_homology() {
        let (h, meta) = hypercube_complex(3, 3, 3).unwrap();
        // 8 vertices of the 2-sphere times two middle layers, plus 2 poles.
        assert_eq!(h.vertex_count(), 8 * 2 + 2);
        assert_eq!(meta.vertex_label(&[1, 2, 0]).unwrap(), "(0,0,0)");
        assert_eq!(meta.vertex_label(&[1, 0, 2]).unwrap(), "(0,0,2)");
        let hom = integral_homology(&h);
        let mut betti = hom.betti.clone();
        while betti.last() == Some(&0) {
            betti.pop();
        }
        assert_eq!(betti, vec![1, 0, 0, 1]);
        assert!(hom.torsion.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn rounding_matches_the_worked_two_dimensional_grid() {
        let corner = |bits: &[u8]| bits.to_vec();
        let c = vec![
            corner(&[0, 0]),
            corner(&[0, 1]),
            corner(&[1, 0]),
            corner(&[1, 1]),
        ];
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
                let want: Vec<Vec<u8>> =
                    expected[r0][r1].iter().map(|c| c.to_vec()).collect();
                assert_eq!(
                    round_vertex(2, &[r0, r1]),
                    want,
                    "rounding mismatch at offset ({r0}, {r1})"
                );
            }
        }
        // The center of the block is fully ambiguous.
        assert_eq!(round_vertex(2, &[2, 2]), c);
    }

    #[test]
    fn rounding_on_the_coarse_lattice_is_determined_by_centered_coordinates() {
        // At offsets whose coordinates all lie in {0, d, 2d}, the corner set
        // frees exactly the centered coordinates and rounds the rest.
        for (d, step) in [(1usize, 1usize), (2, 2), (3, 3)] {
            let width = 2 * d;
            let mut offsets = vec![vec![]];
            for _ in 0..d {
                let mut next = Vec::new();
                for prefix in &offsets {
                    for v in [0, step, width] {
                        let mut p: Vec<usize> = prefix.clone();
                        p.push(v);
                        next.push(p);
                    }
                }
                offsets = next;
            }
            for offset in offsets {
                let corners = round_vertex(d, &offset);
                let centered = offset.iter().filter(|&&c| c == d).count();
                assert_eq!(corners.len(), 1 << centered, "size mismatch at {offset:?}");
                for corner in &corners {
                    for i in 0..d {
                        if offset[i] != d {
                            assert_eq!(corner[i], u8::from(offset[i] > d));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rounding_is_chain_compatible_within_blocks() {
        // Any two offsets that can share a face of the refined block (every
        // coordinate within distance 1) round to nested corner sets. This is
        // the per-block core of the approximation map being simplicial, and
        // covers dimension 3 without materializing its subdivision.
        for d in 1..=3usize {
            let width = 2 * d;
            let mut offsets = vec![vec![]];
            for _ in 0..d {
                let mut next = Vec::new();
                for prefix in &offsets {
                    for v in 0..=width {
                        let mut p: Vec<usize> = prefix.clone();
                        p.push(v);
                        next.push(p);
                    }
                }
                offsets = next;
            }
            for a in &offsets {
                for b in &offsets {
                    if a.iter().zip(b).any(|(x, y)| x.abs_diff(*y) > 1) {
                        continue;
                    }
                    let ca: BTreeSet<Vec<u8>> = round_vertex(d, a).into_iter().collect();
                    let cb: BTreeSet<Vec<u8>> = round_vertex(d, b).into_iter().collect();
                    assert!(
                        ca.is_subset(&cb) || cb.is_subset(&ca),
                        "offsets {a:?} and {b:?} round to incomparable sets"
                    );
                }
            }
        }
    }

    #[test]
    fn approximation_map_is_simplicial_in_low_dimensions() {
        let map = subdivision_approx_map(1, 3, 3).unwrap();
        assert_eq!(map.source.vertex_count(), 6);
        // Even source vertices sit on coarse vertices, odd ones on edges.
        assert_eq!(map.vertex_map["0"], "{0}");
        assert_eq!(map.vertex_map["1"], "{0,1}");
        assert_eq!(map.vertex_map["2"], "{1}");
        assert_eq!(map.vertex_map["3"], "{1,2}");
        assert_eq!(map.vertex_map["4"], "{2}");
        assert_eq!(map.vertex_map["5"], "{0,2}");
        assert!(map.is_simplicial().unwrap());

        let map = subdivision_approx_map(2, 3, 3).unwrap();
        assert_eq!(map.source.vertex_count(), 12 * 11 + 2);
        // Poles land on poles, cube centers on the face around them.
        assert_eq!(map.vertex_map["(0,0)"], "{(0,0)}");
        assert_eq!(map.vertex_map["(0,12)"], "{(0,3)}");
        assert!(map.is_simplicial().unwrap());
    }

    #[test]
    fn contracting_a_triangle_loop_on_a_full_simplex() {
        let a = Complex::full_simplex(2);
        let c = min_table(a.clone(), 9);
        let cert = contract_loop(&a, &c, &strings(&["0", "1", "2"])).unwrap();
        assert_eq!(cert.padded_loop.len(), 9);
        assert_eq!(
            cert.padded_loop,
            strings(&["0", "0", "0", "1", "1", "1", "2", "2", "2"])
        );
        assert_eq!(cert.stages.len(), 19);
        assert_eq!(cert.stages[0], cert.padded_loop);
        assert!(cert.stages[18].iter().all(|l| l == "0"));
        assert!(verify_contraction(&cert).ok);
    }

    #[test]
    fn contracting_a_constant_loop_keeps_every_stage_constant() {
        let a = Complex::full_simplex(2);
        let c = min_table(a.clone(), 9);
        let cert = contract_loop(&a, &c, &strings(&["1", "1", "1"])).unwrap();
        for stage in &cert.stages {
            assert!(stage.iter().all(|l| l == "1"));
        }
        assert!(verify_contraction(&cert).ok);
    }

    #[test]
    fn contracting_a_loop_on_a_path_carrier() {
        // The minimum is cyclic and simplicial on a path, and the path has
        // real non-faces, so this exercises the face checks non-trivially.
        let a = Complex::path(2);
        let c = min_table(a.clone(), 9);
        let cert = contract_loop(&a, &c, &strings(&["0", "1", "0"])).unwrap();
        assert!(verify_contraction(&cert).ok);
        assert!(cert.stages[18].iter().all(|l| l == "0"));
    }

    #[test]
    fn contraction_rejects_bad_inputs() {
        let a = Complex::full_simplex(2);
        let low = min_table(a.clone(), 8);
        let err = contract_loop(&a, &low, &strings(&["0", "1", "2"])).unwrap_err();
        assert!(err.to_string().contains("insufficient arity for padding"));

        // A projection on the pentagon is simplicial but not cyclic (and no
        // cyclic operation exists there at all).
        let pentagon = Complex::cycle(5).unwrap();
        let fake = WitnessTable {
            carrier: Carrier::Complex(pentagon.clone()),
            arity: 9,
            values: (0..5usize.pow(9))
                .map(|idx| (idx / 5usize.pow(8)) as u8)
                .collect(),
        };
        let err = contract_loop(&pentagon, &fake, &strings(&["0", "1", "2"])).unwrap_err();
        assert!(err.to_string().contains("fails verification"));

        // The witness must live on the same complex as the loop.
        let path = Complex::path(3);
        let c3 = min_table(Complex::full_simplex(3), 9);
        let err = contract_loop(&path, &c3, &strings(&["0", "1", "2"])).unwrap_err();
        assert!(err.to_string().contains("must operate on the loop's carrier"));

        // Loop labels must exist and consecutive steps must be faces.
        let disk = Complex::full_simplex(3);
        let c4 = min_table(disk.clone(), 12);
        let err = contract_loop(&disk, &c4, &strings(&["0", "2", "5"])).unwrap_err();
        assert!(err.to_string().contains("unknown vertex"));
        let long_path = Complex::path(3);
        let cp = min_table(long_path.clone(), 9);
        let err = contract_loop(&long_path, &cp, &strings(&["0", "2", "0"])).unwrap_err();
        assert!(err.to_string().contains("is not a face"));
    }

    #[test]
    fn tampered_certificates_are_rejected() {
        let a = Complex::path(2);
        let c = min_table(a.clone(), 9);
        let good = contract_loop(&a, &c, &strings(&["0", "1", "0"])).unwrap();

        let mut constant_broken = good.clone();
        constant_broken.stages[18][4] = "1".into();
        let report = verify_contraction(&constant_broken);
        assert!(!report.ok);
        assert!(report.violation.unwrap().contains("not constant"));

        let mut start_broken = good.clone();
        start_broken.stages[0][0] = "1".into();
        let report = verify_contraction(&start_broken);
        assert!(!report.ok);
        assert!(report.violation.unwrap().contains("padded loop"));

        let mut padding_broken = good.clone();
        padding_broken.padded_loop[0] = "1".into();
        padding_broken.stages[0][0] = "1".into();
        let report = verify_contraction(&padding_broken);
        assert!(!report.ok);
        assert!(report
            .violation
            .unwrap()
            .contains("does not collapse to the original"));

        // An interior stage value rewritten to the far end of the path puts
        // the non-face {0,2} into a stage edge or homotopy square.
        let mut interior_broken = good.clone();
        assert_eq!(interior_broken.stages[2][3], "1");
        interior_broken.stages[2][3] = "2".into();
        let report = verify_contraction(&interior_broken);
        assert!(!report.ok);
        assert!(report.violation.unwrap().contains("is not"));

        let mut truncated = good;
        truncated.stages.pop();
        let report = verify_contraction(&truncated);
        assert!(!report.ok);
        assert!(report.violation.unwrap().contains("stages"));
    }

    #[test]
    fn certificates_round_trip_through_json() {
        let a = Complex::full_simplex(2);
        let c = min_table(a.clone(), 9);
        let cert = contract_loop(&a, &c, &strings(&["0", "1", "2"])).unwrap();
        let json = cert.to_json().to_string();
        let back = ContractionCertificate::from_json_str(&json).unwrap();
        assert_eq!(back, cert);
        assert!(verify_contraction(&back).ok);

        let err = ContractionCertificate::from_json_str("{\"carrier\": 3}").unwrap_err();
        assert!(err.to_string().contains("JSON"));
        let err = ContractionCertificate::from_json_str("{}").unwrap_err();
        assert!(err.to_string().contains("missing \"carrier\""));
    }
}
