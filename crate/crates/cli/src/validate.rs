//! Re-reads emitted artifacts and re-checks their invariants: table
//! normalization, curve monotonicity, joint-surface mass, deaggregation
//! bundle mass, and manifest/config agreement.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;

use hazbn::config::StudyConfig;
use hazbn::study::StudyArtifacts;

use crate::commands::{load_manifest, ARTIFACTS_FILE, MANIFEST_FILE, ORACLE_TOL};
use crate::manifest::{read_json, sha256_file};
use crate::products::{
    CaseSummary, ConditionalRow, CurveRow, DeaggSummary, HazardSummary, JointExceedanceRow,
    JointPmfRow, PosteriorRow, StackedRow, TrackRow, PMF_TOL,
};
use crate::CliError;

/// Collects per-file verdicts, printing them as they arrive.
struct Checker {
    failures: usize,
    checked: usize,
}

impl Checker {
    fn new() -> Self {
        Self {
            failures: 0,
            checked: 0,
        }
    }

    fn ok(&mut self, file: &Path, what: &str) {
        self.checked += 1;
        println!("OK   {}: {what}", file.display());
    }

    fn fail(&mut self, file: &Path, what: &str) {
        self.checked += 1;
        self.failures += 1;
        println!("FAIL {}: {what}", file.display());
    }

    fn result(&mut self, file: &Path, outcome: Result<String, String>) {
        match outcome {
            Ok(what) => self.ok(file, &what),
            Err(what) => self.fail(file, &what),
        }
    }
}

fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, String> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| format!("cannot open: {e}"))?;
    reader
        .deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| format!("cannot parse: {e}"))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1.0f64.max(a.abs()).max(b.abs())
}

fn mass_ok(total: f64) -> Result<(), String> {
    if (total - 1.0).abs() > PMF_TOL {
        return Err(format!("probability mass {total} is not 1 within {PMF_TOL:e}"));
    }
    Ok(())
}

fn check_curve(rows: &[CurveRow], annual_scale: f64) -> Result<String, String> {
    if rows.len() < 2 {
        return Err("fewer than two edges".to_string());
    }
    let mut has_direct = false;
    for w in rows.windows(2) {
        if w[0].threshold >= w[1].threshold {
            return Err(format!(
                "thresholds not increasing at {}",
                w[1].threshold
            ));
        }
        if w[1].exceedance_probability > w[0].exceedance_probability {
            return Err(format!(
                "exceedance increases at threshold {}",
                w[1].threshold
            ));
        }
    }
    for row in rows {
        let p = row.exceedance_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("exceedance {p} outside [0, 1]"));
        }
        if !close(row.annual_rate, annual_scale * p, 1e-12) {
            return Err(format!(
                "annual rate {} is not scale x exceedance at threshold {}",
                row.annual_rate, row.threshold
            ));
        }
        if let Some(direct) = row.direct_annual_rate {
            has_direct = true;
            if (direct - row.annual_rate).abs() > ORACLE_TOL {
                return Err(format!(
                    "direct-summation column disagrees by {:e} at threshold {}",
                    (direct - row.annual_rate).abs(),
                    row.threshold
                ));
            }
        }
    }
    let head = rows[0].exceedance_probability;
    let tail = rows[rows.len() - 1].exceedance_probability;
    if (head - 1.0).abs() > PMF_TOL || tail != 0.0 {
        return Err(format!("curve spans [{head}, {tail}], expected [1, 0]"));
    }
    Ok(format!(
        "{} edges, nonincreasing, rate = scale x exceedance{}",
        rows.len(),
        if has_direct {
            ", direct column agrees"
        } else {
            ""
        }
    ))
}

fn check_joint_pmf(rows: &[JointPmfRow]) -> Result<String, String> {
    let total: f64 = rows.iter().map(|r| r.pmf).sum();
    mass_ok(total)?;
    let volume: f64 = rows
        .iter()
        .map(|r| r.pdf * (r.r1_hi - r.r1_lo) * (r.r2_hi - r.r2_lo))
        .sum();
    mass_ok(volume).map_err(|e| format!("PDF volume: {e}"))?;
    for r in rows {
        if r.pmf < 0.0 || r.pdf < 0.0 {
            return Err("negative cell".to_string());
        }
        if !close(r.pdf * (r.r1_hi - r.r1_lo) * (r.r2_hi - r.r2_lo), r.pmf, 1e-12) {
            return Err(format!(
                "pdf x area disagrees with pmf in cell [{}, {}] x [{}, {}]",
                r.r1_lo, r.r1_hi, r.r2_lo, r.r2_hi
            ));
        }
    }
    Ok(format!("{} cells, mass 1, PDF volume 1", rows.len()))
}

fn check_joint_exceedance(rows: &[JointExceedanceRow]) -> Result<String, String> {
    // Recover the edge-grid shape: rows are emitted r2-fastest.
    let n2 = rows
        .iter()
        .position(|r| r.r1 != rows[0].r1)
        .unwrap_or(rows.len());
    if n2 == 0 || rows.len() % n2 != 0 {
        return Err("rows do not form a grid".to_string());
    }
    let n1 = rows.len() / n2;
    let at = |a: usize, b: usize| rows[a * n2 + b].exceedance_probability;
    for a in 0..n1 {
        for b in 0..n2 {
            let p = at(a, b);
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} outside [0, 1]"));
            }
            if a > 0 && p > at(a - 1, b) {
                return Err("increases along the first axis".to_string());
            }
            if b > 0 && p > at(a, b - 1) {
                return Err("increases along the second axis".to_string());
            }
        }
    }
    if (at(0, 0) - 1.0).abs() > PMF_TOL {
        return Err(format!("corner at the bin floor is {}, expected 1", at(0, 0)));
    }
    if at(n1 - 1, n2 - 1) != 0.0 {
        return Err("corner past the last bins is nonzero".to_string());
    }
    Ok(format!(
        "{n1} x {n2} edge grid, jointly nonincreasing, corners pinned"
    ))
}

fn check_posteriors(rows: &[PosteriorRow]) -> Result<String, String> {
    let mut by_param: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in rows {
        if !(0.0..=1.0 + PMF_TOL).contains(&r.posterior) || !(0.0..=1.0 + PMF_TOL).contains(&r.prior)
        {
            return Err(format!(
                "{} bin {}: probability outside [0, 1]",
                r.parameter, r.bin
            ));
        }
        let e = by_param.entry(r.parameter.as_str()).or_insert((0.0, 0.0));
        e.0 += r.prior;
        e.1 += r.posterior;
    }
    for (param, (prior, posterior)) in &by_param {
        mass_ok(*prior).map_err(|e| format!("{param} prior: {e}"))?;
        mass_ok(*posterior).map_err(|e| format!("{param} posterior: {e}"))?;
    }
    Ok(format!(
        "{} parameters, every prior and posterior sums to 1",
        by_param.len()
    ))
}

fn check_track(rows: &[TrackRow]) -> Result<String, String> {
    mass_ok(rows.iter().map(|r| r.probability).sum())?;
    Ok(format!("{} track cells, mass 1", rows.len()))
}

fn check_stacked(rows: &[StackedRow]) -> Result<String, String> {
    mass_ok(rows.iter().map(|r| r.probability).sum())?;
    let groups: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.group.as_str()).collect();
    Ok(format!(
        "{} rows in {} groups, mass 1",
        rows.len(),
        groups.len()
    ))
}

fn check_conditional(rows: &[ConditionalRow]) -> Result<String, String> {
    mass_ok(rows.iter().map(|r| r.posterior).sum())
        .map_err(|e| format!("posterior: {e}"))?;
    mass_ok(rows.iter().map(|r| r.prior).sum()).map_err(|e| format!("prior: {e}"))?;
    Ok(format!("{} bins, prior and posterior sum to 1", rows.len()))
}

fn check_csv<R: DeserializeOwned>(
    checker: &mut Checker,
    path: &Path,
    check: impl Fn(&[R]) -> Result<String, String>,
) {
    match read_csv::<R>(path) {
        Ok(rows) => checker.result(path, check(&rows)),
        Err(e) => checker.fail(path, &e),
    }
}

/// Runs every applicable check over the output directory. Hazard and
/// deaggregation products are validated when present; the build
/// artifacts and manifest are required.
pub fn validate_outputs(
    config: &StudyConfig,
    config_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut checker = Checker::new();

    // Build artifacts: loading revalidates every table, assembling
    // recchecks normalization of every row.
    let artifacts_path = out_dir.join(ARTIFACTS_FILE);
    if !artifacts_path.exists() {
        return Err(CliError::MissingArtifacts(artifacts_path));
    }
    match StudyArtifacts::load(&artifacts_path) {
        Ok(artifacts) => {
            let built: Vec<&str> = artifacts.channels.iter().map(|c| c.label.as_str()).collect();
            let configured: Vec<&str> = config.hazards.iter().map(|h| h.label.as_str()).collect();
            if built != configured {
                checker.fail(
                    &artifacts_path,
                    &format!("channels {built:?} do not match the config's {configured:?}"),
                );
            }
            match artifacts.assemble() {
                Ok(_) => checker.ok(
                    &artifacts_path,
                    "all tables load, validate, and assemble into a network",
                ),
                Err(e) => checker.fail(&artifacts_path, &format!("assembly failed: {e}")),
            }
        }
        Err(e) => checker.fail(&artifacts_path, &format!("load failed: {e}")),
    }

    // Manifest: must agree with the config on disk.
    let manifest_path = out_dir.join(MANIFEST_FILE);
    match load_manifest(out_dir) {
        Ok(manifest) => {
            let hash = sha256_file(config_path)?;
            if manifest.config_sha256 == hash {
                checker.ok(&manifest_path, "config hash matches the config file");
            } else {
                checker.fail(
                    &manifest_path,
                    "artifacts were built from a different config (hash mismatch)",
                );
            }
        }
        Err(e) => checker.fail(&manifest_path, &format!("unreadable: {e}")),
    }

    // Hazard products, when the hazard command has run.
    let summary_path = out_dir.join("hazard_summary.json");
    if summary_path.exists() {
        match read_json::<HazardSummary>(&summary_path) {
            Ok(summary) => {
                checker.ok(&summary_path, "parses");
                for channel in &summary.channels {
                    let path = out_dir.join(format!("hazard_curve_{}.csv", channel.label));
                    check_csv(&mut checker, &path, |rows: &[CurveRow]| {
                        check_curve(rows, summary.annual_scale)
                    });
                }
                if summary.correlation.is_some() {
                    check_csv(&mut checker, &out_dir.join("joint_pmf.csv"), |r| {
                        check_joint_pmf(r)
                    });
                    check_csv(&mut checker, &out_dir.join("joint_exceedance.csv"), |r| {
                        check_joint_exceedance(r)
                    });
                }
                if let Some(oracle) = &summary.oracle {
                    if oracle.passed && oracle.max_abs_delta <= oracle.tolerance {
                        checker.ok(
                            &summary_path,
                            &format!("oracle delta {:e} within tolerance", oracle.max_abs_delta),
                        );
                    } else {
                        checker.fail(
                            &summary_path,
                            &format!("recorded oracle delta {:e} fails", oracle.max_abs_delta),
                        );
                    }
                }
            }
            Err(e) => checker.fail(&summary_path, &format!("unreadable: {e}")),
        }
    } else {
        println!("note: no hazard products in {}", out_dir.display());
    }

    // Deaggregation bundles, when the deagg command has run.
    let deagg_path = out_dir.join("deagg_summary.json");
    if deagg_path.exists() {
        match read_json::<DeaggSummary>(&deagg_path) {
            Ok(summary) => {
                checker.ok(&deagg_path, &format!("parses, {} case(s)", summary.cases.len()));
                for case in &summary.cases {
                    let Some(bundle) = &case.bundle_dir else {
                        continue;
                    };
                    let dir = out_dir.join(bundle);
                    check_csv(&mut checker, &dir.join("posteriors.csv"), |r| {
                        check_posteriors(r)
                    });
                    check_csv(&mut checker, &dir.join("track_joint.csv"), |r| {
                        check_track(r)
                    });
                    for stacked in ["stacked_dp.csv", "stacked_vf.csv", "stacked_rmax.csv"] {
                        check_csv(&mut checker, &dir.join(stacked), |r| check_stacked(r));
                    }
                    let case_summary_path = dir.join("summary.json");
                    match read_json::<CaseSummary>(&case_summary_path) {
                        Ok(cs) => {
                            if cs.evidence_probability > 0.0 && cs.evidence_probability <= 1.0 {
                                checker.ok(
                                    &case_summary_path,
                                    &format!("P(evidence) = {:.6e}", cs.evidence_probability),
                                );
                            } else {
                                checker.fail(
                                    &case_summary_path,
                                    &format!(
                                        "P(evidence) = {} outside (0, 1]",
                                        cs.evidence_probability
                                    ),
                                );
                            }
                            if let Some(cond) = &cs.conditional {
                                let path = dir.join(format!("conditional_{}.csv", cond.label));
                                check_csv(&mut checker, &path, |r| check_conditional(r));
                            }
                        }
                        Err(e) => {
                            checker.fail(&case_summary_path, &format!("unreadable: {e}"))
                        }
                    }
                }
            }
            Err(e) => checker.fail(&deagg_path, &format!("unreadable: {e}")),
        }
    } else {
        println!("note: no deaggregation products in {}", out_dir.display());
    }

    println!(
        "validate: {} check(s), {} failure(s)",
        checker.checked, checker.failures
    );
    if checker.failures > 0 {
        return Err(CliError::Validation(format!(
            "{} of {} validation check(s) failed",
            checker.failures, checker.checked
        )));
    }
    Ok(())
}
