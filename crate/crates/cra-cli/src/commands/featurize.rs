//! Batch featurization: a SMILES file in, a feature container plus a
//! normalization-stats sidecar out.
//!
//! Input lines are `SMILES` or `id SMILES`; blank lines are skipped. Lines
//! that fail to parse are summarized in failures.csv and do not abort the
//! run: the container always carries every successful row. The exit code
//! reports how bad the failures were: 2 when nothing parsed, 1 when more
//! than `--max-fail-frac` of the lines failed, 0 otherwise.

use crate::error::{io_usage, CliError};
use crate::outdir::OutDir;
use cra_core::chem::parse_smiles;
use cra_core::featurize::{
    apply_normalize, circular_fingerprint, descriptors, fit_normalize, write_container,
    RawFeatures, NUM_DESCRIPTORS,
};
use std::path::Path;

struct Failure {
    line: usize,
    message: String,
}

pub fn run(
    input: &Path,
    out: &Path,
    radius: usize,
    nbits: usize,
    max_fail_frac: f64,
) -> Result<(), CliError> {
    if nbits == 0 {
        return Err(CliError::usage("--nbits must be positive"));
    }
    if !(0.0..=1.0).contains(&max_fail_frac) {
        return Err(CliError::usage("--max-fail-frac must lie in [0, 1]"));
    }
    let text = std::fs::read_to_string(input).map_err(|e| io_usage(input, e))?;

    let mut ids: Vec<String> = Vec::new();
    let mut raws: Vec<RawFeatures> = Vec::new();
    let mut failures: Vec<Failure> = Vec::new();
    let mut attempted = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        attempted += 1;
        let (id, smiles) = match line.split_once(char::is_whitespace) {
            Some((id, rest)) => (id.to_string(), rest.trim()),
            None => (format!("m{}", i + 1), line),
        };
        match parse_smiles(smiles) {
            Ok(mol) => {
                ids.push(id);
                raws.push(RawFeatures {
                    bits: circular_fingerprint(&mol.graph, radius, nbits),
                    descriptors: descriptors(&mol.graph),
                });
            }
            Err(e) => failures.push(Failure { line: i + 1, message: e.to_string() }),
        }
    }
    if attempted == 0 {
        return Err(CliError::usage(format!("{}: no molecules found", input.display())));
    }
    if raws.is_empty() {
        return Err(CliError::usage(format!(
            "{}: all {attempted} lines failed to parse",
            input.display()
        )));
    }

    let stats = fit_normalize(&raws).map_err(|e| CliError::domain(e.to_string()))?;
    let rows: Vec<Vec<f64>> =
        raws.iter().map(|raw| apply_normalize(raw, &stats).combined).collect();
    let dim = nbits + NUM_DESCRIPTORS;

    let mut dir = OutDir::create(out)?;
    let container = dir.root().join("features.craf");
    write_container(&container, &rows, dim)?;
    dir.record("features.craf");
    dir.write_json("norm_stats.json", &stats)?;
    let mut id_rows = String::from("row,id\n");
    for (row, id) in ids.iter().enumerate() {
        id_rows.push_str(&format!("{row},{id}\n"));
    }
    dir.write("ids.csv", id_rows)?;
    if !failures.is_empty() {
        let mut report = String::from("line,error\n");
        for f in &failures {
            report.push_str(&format!("{},{:?}\n", f.line, f.message));
        }
        dir.write("failures.csv", report)?;
    }
    dir.finish("featurize", 0)?;

    let fail_frac = failures.len() as f64 / attempted as f64;
    for f in &failures {
        eprintln!("warning: line {}: {}", f.line, f.message);
    }
    println!(
        "featurized {} of {} molecules (dim {}) into {}",
        ids.len(),
        attempted,
        dim,
        out.display()
    );
    if fail_frac > max_fail_frac {
        return Err(CliError::domain(format!(
            "{} of {attempted} lines failed to parse ({:.1}% > {:.1}% tolerated); \
             outputs were still written",
            failures.len(),
            100.0 * fail_frac,
            100.0 * max_fail_frac
        )));
    }
    Ok(())
}
