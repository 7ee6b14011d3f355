//! `sd`: command-line surface of the structural dichotomy toolkit.
//!
//! Subcommands load JSON complexes/structures from files, run the library,
//! and print deterministic JSON (or short status lines) to stdout.  Exit
//! codes: 0 success, 1 negative decision (no witness, failed verification,
//! stale fixtures), 2 usage or input error, 3 internal inconsistency.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sd_core::classify::{classify, ClassifyOptions};
use sd_core::complex::Complex;
use sd_core::fixtures;
use sd_core::homcomplex::{
    enumerate_homomorphisms, hom_complex, hom_restricted, hom_sc_complex, hom_sc_restricted,
    HomComplexResult,
};
use sd_core::identities::{
    search_witness_jobs, system_by_name, Carrier, SearchResult, WitnessTable,
};
use sd_core::spheres::{
    contract_loop, hypercube_complex, round_vertex, verify_contraction, ContractionCertificate,
};
use sd_core::structures::{
    idempotent_realization, precolored_to_relational, relational_to_precolored,
    PrecoloredReduction, RelStructure,
};
use sd_core::topology::integral_homology;

#[derive(Parser)]
#[command(
    name = "sd",
    version,
    about = "Simplicial complexes, hom complexes, homology, witness search, \
             and the two-sided dichotomy classifier"
)]
struct Cli {
    /// Worker threads for the parallel engines (default: $SD_JOBS, else 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a complex onto one side of the dichotomy.
    Classify {
        /// Complex JSON file.
        complex: PathBuf,
        /// Largest vertex count admitted to the witness searches.
        #[arg(long, default_value_t = 6)]
        size_bound: usize,
        /// Run the definitive search even when homology already refutes,
        /// and cross-check the two answers.
        #[arg(long)]
        force_search: bool,
    },
    /// Hom complex of simplicial maps a -> b, optionally pinned/windowed.
    Hom {
        /// Source complex JSON file.
        a: PathBuf,
        /// Target complex JSON file.
        b: PathBuf,
        /// Output window: comma-separated source vertices (default: all).
        #[arg(long)]
        alpha: Option<String>,
        /// Pins: comma-separated `vertex=value` pairs.
        #[arg(long)]
        rho: Option<String>,
    },
    /// Mix-condition hom complex, optionally pinned/windowed.
    Homsc {
        /// Source complex JSON file.
        a: PathBuf,
        /// Target complex JSON file.
        b: PathBuf,
        /// Output window: comma-separated source vertices (default: all).
        #[arg(long)]
        alpha: Option<String>,
        /// Pins: comma-separated `vertex=value` pairs.
        #[arg(long)]
        rho: Option<String>,
    },
    /// Integral homology (Betti numbers and torsion) of a complex.
    Homology {
        /// Complex JSON file.
        complex: PathBuf,
    },
    /// Search a carrier for an identity-system witness table.
    Search {
        /// System name: majority, siggers4, siggers6, cyclicN, fsN, nuN.
        #[arg(long)]
        system: String,
        /// Carrier JSON file: a complex (has "maximal_faces") or a
        /// relational structure (has "relations").
        carrier: PathBuf,
    },
    /// Translate between precolored complex problems and relational ones.
    Reduce {
        #[command(subcommand)]
        direction: ReduceCommand,
    },
    /// Contract a loop on a witness-bearing carrier, or verify a
    /// previously produced certificate.
    ContractLoop {
        /// Carrier complex JSON file (omit with --verify).
        carrier: Option<PathBuf>,
        /// Cyclic witness table JSON file over the carrier.
        witness: Option<PathBuf>,
        /// The loop, as comma-separated vertex labels.
        #[arg(long = "loop", value_name = "V0,V1,...")]
        loop_labels: Option<String>,
        /// Verify this certificate file instead of producing one.
        #[arg(long, value_name = "CERT")]
        verify: Option<PathBuf>,
    },
    /// Build the sphere-like hypercube complex of a given dimension.
    Hypercube {
        /// Sphere dimension (1 gives the cycle itself).
        d: usize,
        /// Cycle length of the base dimension (>= 3).
        n: usize,
        /// Layer count of each suspension (>= 3).
        m: usize,
        /// Also print the coordinate metadata and pole labels.
        #[arg(long)]
        meta: bool,
    },
    /// Regenerate every canonical fixture and golden, then diff (or, with
    /// --write, rewrite) the fixture directory.
    Examples {
        /// Rewrite the files instead of diffing.
        #[arg(long)]
        write: bool,
        /// Fixture directory.
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReduceCommand {
    /// Precolored complex problem -> relational template + instance.
    ToRelational {
        /// Instance complex JSON file.
        a: PathBuf,
        /// Target complex JSON file.
        b: PathBuf,
        /// Precolored vertices of a, comma-separated (default: none).
        #[arg(long)]
        alpha: Option<String>,
        /// Precoloring: comma-separated `vertex=value` pairs over alpha.
        #[arg(long)]
        rho: Option<String>,
    },
    /// Relational instance over a realization signature -> precolored
    /// complex problem.
    ToPrecolored {
        /// Instance structure JSON file.
        instance: PathBuf,
        /// Target complex JSON file (fixes the realization signature).
        b: PathBuf,
    },
}

/// Why a run failed, carrying the exit code.
enum Failure {
    /// Bad flags or malformed inputs: exit 2.
    Usage(String),
    /// Library error: exit 3 for internal inconsistencies, 2 otherwise.
    Core(sd_core::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(sd_core::Error::Inconsistent(_)) => 3,
            Failure::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

impl From<sd_core::Error> for Failure {
    fn from(e: sd_core::Error) -> Failure {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let jobs = resolve_jobs(cli.jobs)?;
    match cli.command {
        Command::Classify {
            complex,
            size_bound,
            force_search,
        } => {
            let b = load_complex(&complex)?;
            let opts = ClassifyOptions {
                size_bound,
                force_search,
                jobs,
            };
            let report = classify(&b, &opts)?;
            emit(&report.to_json());
            Ok(0)
        }
        Command::Hom { a, b, alpha, rho } => {
            let result = run_hom(&a, &b, alpha, rho, false)?;
            emit(&result.to_json());
            Ok(0)
        }
        Command::Homsc { a, b, alpha, rho } => {
            let result = run_hom(&a, &b, alpha, rho, true)?;
            emit(&result.to_json());
            Ok(0)
        }
        Command::Homology { complex } => {
            let c = load_complex(&complex)?;
            let h = integral_homology(&c);
            emit(&serde_json::to_value(h).expect("homology serializes"));
            Ok(0)
        }
        Command::Search { system, carrier } => {
            let carrier = load_carrier(&carrier)?;
            let sys = system_by_name(&system)?;
            match search_witness_jobs(&carrier, &sys, jobs)? {
                SearchResult::Found(w) => {
                    emit(&w.to_json());
                    Ok(0)
                }
                SearchResult::Exhausted => {
                    say("no witness (exhausted)");
                    Ok(1)
                }
            }
        }
        Command::Reduce { direction } => run_reduce(direction),
        Command::ContractLoop {
            carrier,
            witness,
            loop_labels,
            verify,
        } => run_contract_loop(carrier, witness, loop_labels, verify),
        Command::Hypercube { d, n, m, meta } => {
            let (c, hmeta) = hypercube_complex(d, n, m)?;
            if meta {
                emit(&json!({ "complex": c.to_json(), "meta": hmeta.to_json() }));
            } else {
                emit(&c.to_json());
            }
            Ok(0)
        }
        Command::Examples { write, dir } => run_examples(write, &dir),
    }
}

/// `--jobs`, else `$SD_JOBS`, else 1.
fn resolve_jobs(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(j) = flag {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be positive".into()));
        }
        return Ok(j);
    }
    match std::env::var("SD_JOBS") {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(j) if j > 0 => Ok(j),
            _ => Err(Failure::Usage(format!(
                "SD_JOBS must be a positive integer, got {raw:?}"
            ))),
        },
        Err(_) => Ok(1),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_complex(path: &Path) -> Result<Complex, Failure> {
    Ok(Complex::from_json_str(&read_file(path)?)?)
}

fn load_structure(path: &Path) -> Result<RelStructure, Failure> {
    Ok(RelStructure::from_json_str(&read_file(path)?)?)
}

/// A carrier file is a complex or a structure, told apart by its fields.
fn load_carrier(path: &Path) -> Result<Carrier, Failure> {
    let text = read_file(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{} is not JSON: {e}", path.display())))?;
    if v.get("maximal_faces").is_some() {
        Ok(Carrier::Complex(Complex::from_json_str(&text)?))
    } else if v.get("relations").is_some() {
        Ok(Carrier::Structure(RelStructure::from_json_str(&text)?))
    } else {
        Err(Failure::Usage(format!(
            "{} must contain \"maximal_faces\" (a complex) or \"relations\" (a structure)",
            path.display()
        )))
    }
}

/// Comma-separated labels, e.g. `0,2`.
fn parse_labels(raw: &str) -> Result<Vec<String>, Failure> {
    let parts: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
    if parts.iter().any(String::is_empty) {
        return Err(Failure::Usage(format!("empty label in list {raw:?}")));
    }
    Ok(parts)
}

/// Comma-separated pins, e.g. `0=1,3=2`.
fn parse_rho(raw: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut rho = BTreeMap::new();
    for part in raw.split(',') {
        let Some((k, v)) = part.split_once('=') else {
            return Err(Failure::Usage(format!(
                "pin {part:?} is not of the form vertex=value"
            )));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() || v.is_empty() {
            return Err(Failure::Usage(format!("pin {part:?} has an empty side")));
        }
        if rho.insert(k.clone(), v).is_some() {
            return Err(Failure::Usage(format!("vertex {k:?} is pinned twice")));
        }
    }
    Ok(rho)
}

/// Prints a line. A closed stdout (e.g. the output piped into a pager that
/// quit) ends the process quietly instead of panicking.
fn say(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").is_err() || out.flush().is_err() {
        std::process::exit(0);
    }
}

fn emit(v: &Value) {
    say(&serde_json::to_string_pretty(v).expect("JSON values print"));
}

fn run_hom(
    a_path: &Path,
    b_path: &Path,
    alpha: Option<String>,
    rho: Option<String>,
    mix: bool,
) -> Result<HomComplexResult, Failure> {
    let a = load_complex(a_path)?;
    let b = load_complex(b_path)?;
    let result = match (&alpha, &rho) {
        (None, None) => {
            if mix {
                hom_sc_complex(&a, &b)?
            } else {
                hom_complex(&a, &b)?
            }
        }
        _ => {
            let alpha = match alpha {
                Some(raw) => parse_labels(&raw)?,
                None => a.vertices().to_vec(),
            };
            let rho = match rho {
                Some(raw) => parse_rho(&raw)?,
                None => BTreeMap::new(),
            };
            if mix {
                hom_sc_restricted(&a, &alpha, &rho, &b)?
            } else {
                hom_restricted(&a, &alpha, &rho, &b)?
            }
        }
    };
    Ok(result)
}

fn run_reduce(direction: ReduceCommand) -> Result<u8, Failure> {
    match direction {
        ReduceCommand::ToRelational { a, b, alpha, rho } => {
            let a = load_complex(&a)?;
            let b = load_complex(&b)?;
            let alpha = match alpha {
                Some(raw) => parse_labels(&raw)?,
                None => Vec::new(),
            };
            let rho = match rho {
                Some(raw) => parse_rho(&raw)?,
                None => BTreeMap::new(),
            };
            let template = idempotent_realization(&b)?;
            let instance = precolored_to_relational(&a, &alpha, &rho, &b)?;
            emit(&json!({
                "template": template.to_json(),
                "instance": instance.to_json(),
            }));
            Ok(0)
        }
        ReduceCommand::ToPrecolored { instance, b } => {
            let instance = load_structure(&instance)?;
            let b = load_complex(&b)?;
            match relational_to_precolored(&instance, &b)? {
                PrecoloredReduction::Reduced {
                    complex,
                    alpha,
                    rho,
                } => {
                    emit(&json!({
                        "complex": complex.to_json(),
                        "alpha": alpha,
                        "rho": rho,
                    }));
                    Ok(0)
                }
                PrecoloredReduction::UnsatShortcut => {
                    emit(&json!({ "unsat_shortcut": true }));
                    Ok(0)
                }
            }
        }
    }
}

fn run_contract_loop(
    carrier: Option<PathBuf>,
    witness: Option<PathBuf>,
    loop_labels: Option<String>,
    verify: Option<PathBuf>,
) -> Result<u8, Failure> {
    match (carrier, witness, loop_labels, verify) {
        (None, None, None, Some(cert_path)) => {
            let cert = ContractionCertificate::from_json_str(&read_file(&cert_path)?)?;
            let report = verify_contraction(&cert);
            if report.ok {
                say("certificate verifies");
                Ok(0)
            } else {
                say(&format!(
                    "certificate rejected: {}",
                    report.violation.unwrap_or_else(|| "unknown".into())
                ));
                Ok(1)
            }
        }
        (Some(carrier_path), Some(witness_path), Some(raw_loop), None) => {
            let carrier = load_complex(&carrier_path)?;
            let witness_value: Value = serde_json::from_str(&read_file(&witness_path)?)
                .map_err(|e| {
                    Failure::Usage(format!("{} is not JSON: {e}", witness_path.display()))
                })?;
            let table =
                WitnessTable::from_json(Carrier::Complex(carrier.clone()), &witness_value)?;
            let labels = parse_labels(&raw_loop)?;
            let cert = contract_loop(&carrier, &table, &labels)?;
            emit(&cert.to_json());
            Ok(0)
        }
        _ => Err(Failure::Usage(
            "pass CARRIER WITNESS --loop V0,V1,... to produce a certificate, \
             or --verify CERT to check one"
                .into(),
        )),
    }
}

/// The pentagon target of the pinned worked example: a five-cycle on
/// one-based labels.
fn pentagon() -> Complex {
    Complex::new(
        (1..=5).map(|i| i.to_string()).collect(),
        (1..=5)
            .map(|i| vec![i.to_string(), (i % 5 + 1).to_string()])
            .collect::<Vec<_>>(),
    )
    .expect("the pentagon is well-formed")
}

/// Every committed fixture and golden, as `(relative path, JSON value)`.
fn example_artifacts() -> Result<Vec<(String, Value)>, Failure> {
    let mut out: Vec<(String, Value)> = Vec::new();
    for (name, c) in fixtures::fixture_complexes() {
        out.push((format!("complexes/{name}.json"), c.to_json()));
    }
    for (name, s) in fixtures::fixture_structures() {
        out.push((format!("structures/{name}.json"), s.to_json()));
    }

    // Worked example: maps from an edge into the two-edge path, where the
    // two face conditions agree on the squares but swap the triangles.
    let edge = Complex::path(1);
    let two_path = Complex::path(2);
    out.push((
        "goldens/hom_edge_into_path.json".into(),
        hom_complex(&edge, &two_path)?.to_json(),
    ));
    out.push((
        "goldens/homsc_edge_into_path.json".into(),
        hom_sc_complex(&edge, &two_path)?.to_json(),
    ));

    // Worked example: maps from a two-edge path into the pentagon with the
    // first vertex pinned, at full output window and at window {2}.
    let source = Complex::path(2);
    let target = pentagon();
    let rho: BTreeMap<String, String> = [("0".to_string(), "1".to_string())].into();
    let homs = enumerate_homomorphisms(&source, &target, &rho)?;
    out.push((
        "goldens/pinned_pentagon_homomorphisms.json".into(),
        serde_json::to_value(&homs).expect("assignments serialize"),
    ));
    let full_window = source.vertices().to_vec();
    out.push((
        "goldens/pinned_pentagon_hom_full.json".into(),
        hom_restricted(&source, &full_window, &rho, &target)?.to_json(),
    ));
    out.push((
        "goldens/pinned_pentagon_homsc_full.json".into(),
        hom_sc_restricted(&source, &full_window, &rho, &target)?.to_json(),
    ));
    let window = vec!["2".to_string()];
    out.push((
        "goldens/pinned_pentagon_hom_window.json".into(),
        hom_restricted(&source, &window, &rho, &target)?.to_json(),
    ));
    out.push((
        "goldens/pinned_pentagon_homsc_window.json".into(),
        hom_sc_restricted(&source, &window, &rho, &target)?.to_json(),
    ));

    // Homology of the projective-plane fixture: pure 2-torsion.
    out.push((
        "goldens/rp2_homology.json".into(),
        serde_json::to_value(integral_homology(&fixtures::rp2())).expect("homology serializes"),
    ));

    // Grid rounding over the full centered two-dimensional block: rows are
    // coordinate 0, columns coordinate 1.
    let grid: Vec<Vec<Value>> = (0..=4)
        .map(|x| {
            (0..=4)
                .map(|y| {
                    serde_json::to_value(round_vertex(2, &[x, y])).expect("corners serialize")
                })
                .collect()
        })
        .collect();
    out.push((
        "goldens/grid_rounding_2d.json".into(),
        json!({ "d": 2, "grid": grid }),
    ));

    // Grid rounding at the coarse lattice points of the three-dimensional
    // block: exactly the centered coordinates stay free.
    let mut entries: Vec<Value> = Vec::new();
    for x in [0usize, 3, 6] {
        for y in [0usize, 3, 6] {
            for z in [0usize, 3, 6] {
                entries.push(json!({
                    "coords": [x, y, z],
                    "corners": serde_json::to_value(round_vertex(3, &[x, y, z]))
                        .expect("corners serialize"),
                }));
            }
        }
    }
    out.push((
        "goldens/grid_rounding_3d_coarse.json".into(),
        json!({ "d": 3, "entries": entries }),
    ));

    Ok(out)
}

fn run_examples(write: bool, dir: &Path) -> Result<u8, Failure> {
    let artifacts = example_artifacts()?;
    if write {
        for (rel, v) in &artifacts {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| {
                    Failure::Usage(format!("cannot create {}: {e}", parent.display()))
                })?;
            }
            let text = serde_json::to_string_pretty(v).expect("JSON values print") + "\n";
            fs::write(&path, text)
                .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        }
        say(&format!("wrote {} files under {}", artifacts.len(), dir.display()));
        return Ok(0);
    }
    let mut stale = 0usize;
    for (rel, v) in &artifacts {
        let path = dir.join(rel);
        let expected = serde_json::to_string_pretty(v).expect("JSON values print") + "\n";
        match fs::read_to_string(&path) {
            Ok(actual) if actual == expected => say(&format!("ok {rel}")),
            Ok(_) => {
                say(&format!("DIFFERS {rel}"));
                stale += 1;
            }
            Err(_) => {
                say(&format!("MISSING {rel}"));
                stale += 1;
            }
        }
    }
    if stale == 0 {
        say(&format!("all {} fixtures match", artifacts.len()));
        Ok(0)
    } else {
        say(&format!("{stale} fixture(s) out of date"));
        Ok(1)
    }
}
