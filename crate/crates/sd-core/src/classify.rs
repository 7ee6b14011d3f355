//! Two-sided classification of a finite complex.
//!
//! A complex lands on the **contractible side** when an idempotent witness
//! table (majority, cyclic, or the definitive 4-ary rectangle system) exists
//! on it, and on the **universal side** when it provably has none.  The
//! pipeline is:
//!
//! 1. reduced homology of every connected component — any nonzero group is a
//!    sound refutation (a complex carrying such a witness is homotopy
//!    equivalent to a discrete set, so each component must be acyclic);
//! 2. fast positive probes: `majority`, `cyclic2`, `cyclic3`;
//! 3. the definitive `siggers4` search — a witness settles the contractible
//!    side, exhaustion settles the universal side.
//!
//! The converse of step 1 does not hold: a complex can be contractible and
//! still admit no witness, so only the search may conclude the universal
//! side in the absence of a homology obstruction.  `force_search` runs the
//! definitive search even when homology already refutes; finding a witness
//! there would contradict step 1's soundness and aborts as an internal
//! inconsistency.

use serde_json::{json, Value};

use crate::complex::Complex;
use crate::identities::{
    search_witness_jobs, system_by_name, verify_witness, Carrier, SearchResult, WitnessTable,
};
use crate::topology::{connected_components, integral_homology};
use crate::{Error, Result};

/// The two sides of the classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    ContractibleSide,
    UniversalSide,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ContractibleSide => "CONTRACTIBLE_SIDE",
            Verdict::UniversalSide => "UNIVERSAL_SIDE",
        }
    }
}

/// Evidence for a `UniversalSide` verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Refutation {
    /// A connected component whose reduced homology is nonzero, with the
    /// lowest dimension where that happens and the group printed as e.g.
    /// `"Z"`, `"Z^2"`, or `"Z/2"`.
    HomologyObstruction {
        component: Vec<String>,
        dimension: usize,
        group: String,
    },
    /// A witness search that ran to completion without finding a table.
    SearchExhausted { system: String },
}

impl Refutation {
    pub fn to_json(&self) -> Value {
        match self {
            Refutation::HomologyObstruction {
                component,
                dimension,
                group,
            } => json!({
                "kind": "homology_obstruction",
                "component": component,
                "dimension": dimension,
                "group": group,
            }),
            Refutation::SearchExhausted { system } => json!({
                "kind": "search_exhausted",
                "system": system,
            }),
        }
    }
}

/// Outcome of [`classify`].
#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// Present exactly on the contractible side; re-verified before return.
    pub witness: Option<WitnessTable>,
    /// Name of the system the witness satisfies (`majority`, `cyclic2`, ...).
    pub witness_system: Option<String>,
    /// Present exactly on the universal side.
    pub refutation: Option<Refutation>,
    /// Independent re-validations performed along the way, in order.  A
    /// failed check never appears here: conflicts abort with an error.
    pub cross_checks: Vec<(String, bool)>,
}

impl ClassificationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "verdict": self.verdict.as_str(),
            "witness": self.witness.as_ref().map(WitnessTable::to_json),
            "witness_system": self.witness_system,
            "refutation": self.refutation.as_ref().map(Refutation::to_json),
            "cross_checks": self
                .cross_checks
                .iter()
                .map(|(name, pass)| json!({ "name": name, "pass": pass }))
                .collect::<Vec<_>>(),
        })
    }
}

/// Knobs for [`classify`].
#[derive(Clone, Copy, Debug)]
pub struct ClassifyOptions {
    /// Largest vertex count admitted to the witness searches.
    pub size_bound: usize,
    /// Run the definitive search even when homology already refutes, and
    /// cross-check the two answers against each other.
    pub force_search: bool,
    /// Worker threads forwarded to the searches.
    pub jobs: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            size_bound: 6,
            force_search: false,
            jobs: 1,
        }
    }
}

/// Formats a finitely generated abelian group `Z^betti + Z/t1 + Z/t2 + ...`.
fn group_name(betti: u64, torsion: &[u64]) -> String {
    let mut parts = Vec::new();
    match betti {
        0 => {}
        1 => parts.push("Z".to_string()),
        b => parts.push(format!("Z^{b}")),
    }
    for t in torsion {
        parts.push(format!("Z/{t}"));
    }
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join(" + ")
    }
}

/// First connected component (in label order) with nonzero reduced
/// homology, together with the lowest witnessing dimension and the group.
fn homology_obstruction(b: &Complex) -> Result<Option<Refutation>> {
    for component in connected_components(b) {
        let sub = b.full_subcomplex(&component)?;
        let h = integral_homology(&sub);
        for k in 0..h.betti.len() {
            // Reduced: a connected component contributes nothing in
            // dimension 0, so only higher Betti numbers and torsion count.
            let betti = if k == 0 { h.betti[0] - 1 } else { h.betti[k] };
            let torsion = &h.torsion[k];
            if betti > 0 || !torsion.is_empty() {
                return Ok(Some(Refutation::HomologyObstruction {
                    component,
                    dimension: k,
                    group: group_name(betti, torsion),
                }));
            }
        }
    }
    Ok(None)
}

/// Runs one named search on the complex, enforcing the size bound.
fn run_search(b: &Complex, system: &str, opts: &ClassifyOptions) -> Result<SearchResult> {
    if b.vertex_count() > opts.size_bound {
        return Err(Error::TooLarge(format!(
            "classification searches are limited to {} vertices, got {}",
            opts.size_bound,
            b.vertex_count()
        )));
    }
    let sys = system_by_name(system)?;
    search_witness_jobs(&Carrier::Complex(b.clone()), &sys, opts.jobs.max(1))
}

/// Re-verifies a found witness; a failure here means the search and the
/// verifier disagree, which is an internal inconsistency.
fn confirm_witness(w: &WitnessTable, system: &str) -> Result<()> {
    let sys = system_by_name(system)?;
    let report = verify_witness(w, &sys)?;
    if !report.ok {
        return Err(Error::Inconsistent(format!(
            "the {system} witness returned by the search fails re-verification: {}",
            report.violations.join("; ")
        )));
    }
    Ok(())
}

/// Classifies a nonempty finite complex onto one side of the dichotomy.
pub fn classify(b: &Complex, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    if b.vertex_count() == 0 {
        return Err(Error::Incompatible(
            "classification needs a nonempty complex".into(),
        ));
    }

    let mut cross_checks: Vec<(String, bool)> = Vec::new();

    if let Some(refutation) = homology_obstruction(b)? {
        cross_checks.push(("reduced homology is nonzero".to_string(), true));
        if opts.force_search {
            match run_search(b, "siggers4", opts)? {
                SearchResult::Found(_) => {
                    return Err(Error::Inconsistent(
                        "a siggers4 witness was found on a complex with a homology \
                         obstruction; the two sides of the classification disagree"
                            .into(),
                    ));
                }
                SearchResult::Exhausted => {
                    cross_checks.push(("siggers4 search exhausted".to_string(), true));
                }
            }
        }
        return Ok(ClassificationReport {
            verdict: Verdict::UniversalSide,
            witness: None,
            witness_system: None,
            refutation: Some(refutation),
            cross_checks,
        });
    }
    cross_checks.push(("reduced homology is zero".to_string(), true));

    // Fast positive probes: each of these systems implies the definitive one
    // exists, so a hit settles the contractible side immediately, while a
    // miss decides nothing.
    for probe in ["majority", "cyclic2", "cyclic3"] {
        match run_search(b, probe, opts)? {
            SearchResult::Found(w) => {
                confirm_witness(&w, probe)?;
                cross_checks.push((format!("{probe} witness re-verifies"), true));
                return Ok(ClassificationReport {
                    verdict: Verdict::ContractibleSide,
                    witness: Some(w),
                    witness_system: Some(probe.to_string()),
                    refutation: None,
                    cross_checks,
                });
            }
            SearchResult::Exhausted => {
                cross_checks.push((format!("{probe} search exhausted"), true));
            }
        }
    }

    // Definitive: exhaustion of this single system is a sound refutation.
    match run_search(b, "siggers4", opts)? {
        SearchResult::Found(w) => {
            confirm_witness(&w, "siggers4")?;
            cross_checks.push(("siggers4 witness re-verifies".to_string(), true));
            Ok(ClassificationReport {
                verdict: Verdict::ContractibleSide,
                witness: Some(w),
                witness_system: Some("siggers4".to_string()),
                refutation: None,
                cross_checks,
            })
        }
        SearchResult::Exhausted => {
            cross_checks.push(("siggers4 search exhausted".to_string(), true));
            Ok(ClassificationReport {
                verdict: Verdict::UniversalSide,
                witness: None,
                witness_system: None,
                refutation: Some(Refutation::SearchExhausted {
                    system: "siggers4".to_string(),
                }),
                cross_checks,
            })
        }
    }
}
