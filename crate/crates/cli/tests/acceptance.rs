//! Workspace acceptance gate: nine numbered criteria, one test each.
//!
//! Every test prints one `ACCEPTANCE <n> PASS/FAIL — <name>: <detail>`
//! line (visible with `cargo test --test acceptance -- --nocapture`) and
//! fails hard when its criterion does not hold. The criteria cross-check
//! the library against independent oracles implemented in this file:
//! brute-force joint enumeration, explicit nested summation, analytic
//! bin masses, a Taylor-series error function, and a merge-sort rank
//! statistic.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hazbn::bn::{query, DiscreteNetwork, Evidence, Factor, VarId};
use hazbn::climatology::{kendall_to_pearson, ClassLabel, Marginal};
use hazbn::config::StudyConfig;
use hazbn::deagg::{deaggregate, pmf_mean, select_threshold, EvidenceCase};
use hazbn::discretize::{discretize_joint, Axis, BinScheme};
use hazbn::hazard::{direct_jpm_sum, hazard_curve, joint_hazard, AssembledNetwork, RateConfig};
use hazbn::nodes;
use hazbn::study::{build_study, StudyArtifacts};

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {verdict} — {name}: {detail}");
    assert!(pass, "ACCEPTANCE {n} {verdict} — {name}: {detail}");
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load_study(name: &str) -> (StudyConfig, PathBuf) {
    StudyConfig::load(&config_path(name)).expect("shipped config must load")
}

fn build(name: &str) -> (StudyConfig, StudyArtifacts) {
    let (config, base) = load_study(name);
    let artifacts = build_study(&config, &base, None)
        .expect("shipped config must build")
        .artifacts;
    (config, artifacts)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------
// Criterion 1 — inference oracle equivalence
// ---------------------------------------------------------------------

/// Decodes a flat row-major index (last scope variable fastest) into a
/// per-variable assignment.
fn decode(flat: usize, cards: &[usize]) -> Vec<usize> {
    let mut a = vec![0usize; cards.len()];
    let mut rest = flat;
    for k in (0..cards.len()).rev() {
        a[k] = rest % cards[k];
        rest /= cards[k];
    }
    a
}

/// Encodes an assignment into a flat row-major index.
fn encode(assignment: &[usize], cards: &[usize]) -> usize {
    let mut flat = 0usize;
    for (a, c) in assignment.iter().zip(cards) {
        flat = flat * c + a;
    }
    flat
}

#[test]
fn criterion_1_inference_matches_enumeration_on_random_networks() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_0001);
    let mut max_delta: f64 = 0.0;

    for _ in 0..200 {
        // Random topology: each variable may take up to three of its
        // predecessors as parents.
        let n_vars: usize = rng.random_range(1..=6);
        let cards: Vec<usize> = (0..n_vars).map(|_| rng.random_range(2..=4)).collect();
        let ids: Vec<VarId> = (0..n_vars).map(|k| VarId::from(format!("v{k}"))).collect();
        let mut net = DiscreteNetwork::new();
        for k in 0..n_vars {
            net.add_variable_with_card(ids[k].clone(), cards[k]);
        }
        for k in 0..n_vars {
            let mut parents: Vec<usize> = (0..k).filter(|_| rng.random::<f64>() < 0.5).collect();
            parents.truncate(3);
            let mut scope: Vec<VarId> = parents.iter().map(|p| ids[*p].clone()).collect();
            let mut dims: Vec<usize> = parents.iter().map(|p| cards[*p]).collect();
            scope.push(ids[k].clone());
            dims.push(cards[k]);
            let rows: usize = dims[..dims.len() - 1].iter().product();
            let mut values = Vec::with_capacity(rows * cards[k]);
            for _ in 0..rows {
                let raw: Vec<f64> = (0..cards[k]).map(|_| 0.05 + rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                values.extend(raw.into_iter().map(|v| v / total));
            }
            let cpt = Factor::new(scope, dims, values).unwrap();
            net.set_cpt(
                ids[k].clone(),
                parents.iter().map(|p| ids[*p].clone()).collect(),
                cpt,
            );
        }
        net.require_valid().unwrap();
        let joint = net.enumerate_joint(100_000).unwrap();

        // Random evidence on a strict subset, then one or two targets
        // among the free variables.
        let mut evidenced: Vec<usize> = (0..n_vars).filter(|_| rng.random::<f64>() < 0.25).collect();
        if evidenced.len() == n_vars {
            evidenced.pop();
        }
        let free: Vec<usize> = (0..n_vars).filter(|k| !evidenced.contains(k)).collect();
        let n_targets = 1 + usize::from(free.len() > 1 && rng.random::<bool>());
        let targets: Vec<usize> = free[..n_targets].to_vec();

        let mut evidence = Evidence::new();
        let mut pinned = vec![usize::MAX; n_vars];
        for &k in &evidenced {
            let state = rng.random_range(0..cards[k]);
            pinned[k] = state;
            evidence = evidence.with(ids[k].clone(), state);
        }

        // Oracle: reduce the enumerated joint by plain loops.
        let scope = joint.scope().to_vec();
        let scope_cards = joint.cards().to_vec();
        let pos_of = |id: &VarId| scope.iter().position(|s| s == id).unwrap();
        let target_pos: Vec<usize> = targets.iter().map(|k| pos_of(&ids[*k])).collect();
        let target_cards: Vec<usize> = targets.iter().map(|k| cards[*k]).collect();
        let evidence_pos: Vec<(usize, usize)> = evidenced
            .iter()
            .map(|k| (pos_of(&ids[*k]), pinned[*k]))
            .collect();
        let mut oracle = vec![0.0; target_cards.iter().product()];
        let mut p_evidence = 0.0;
        for (flat, v) in joint.values().iter().enumerate() {
            let a = decode(flat, &scope_cards);
            if evidence_pos.iter().any(|(p, s)| a[*p] != *s) {
                continue;
            }
            p_evidence += v;
            let cell: Vec<usize> = target_pos.iter().map(|p| a[*p]).collect();
            oracle[encode(&cell, &target_cards)] += v;
        }
        for v in &mut oracle {
            *v /= p_evidence;
        }

        let target_ids: Vec<VarId> = targets.iter().map(|k| ids[*k].clone()).collect();
        let result = query(&net, &target_ids, &evidence).unwrap();
        max_delta = max_delta
            .max((result.evidence_probability - p_evidence).abs())
            .max(max_abs_diff(result.posterior.values(), &oracle));
    }

    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        "inference oracle equivalence",
        max_delta <= 1e-10 && elapsed < 30.0,
        &format!("200 random networks, max |Δ| {max_delta:.3e} (tol 1e-10), {elapsed:.1}s (limit 30s)"),
    );
}

// ---------------------------------------------------------------------
// Criterion 2 — dual-path theorem on both shipped grids
// ---------------------------------------------------------------------

#[test]
fn criterion_2_network_path_equals_direct_summation_on_both_grids() {
    let mut details = Vec::new();
    let mut pass = true;

    for (file, budget_s) in [("reduced_study.json", None), ("full_study.json", Some(600.0))] {
        let started = Instant::now();
        let (config, artifacts) = build(file);
        let assembled = artifacts.assemble().unwrap();
        let combos: usize = artifacts.cpts.theta_given_dp_vf_rmax.cards()[..4]
            .iter()
            .product::<usize>()
            * artifacts.cpts.x0.cards()[0];

        let mut max_delta: f64 = 0.0;
        let mut edges = 0usize;
        for (h, channel) in artifacts.channels.iter().enumerate() {
            let curve = hazard_curve(&assembled, h, &config.rate).unwrap();
            for (k, edge) in curve.thresholds.iter().enumerate() {
                let direct = direct_jpm_sum(
                    &artifacts.cpts,
                    &channel.rhat_cpt,
                    &channel.r_cpt,
                    &channel.eps_prior,
                    &channel.rbins,
                    &config.rate,
                    *edge,
                )
                .unwrap();
                max_delta = max_delta.max((curve.annual_rate[k] - direct).abs());
                edges += 1;
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        pass &= max_delta <= 1e-9;
        if let Some(budget) = budget_s {
            pass &= elapsed < budget;
        }
        details.push(format!(
            "{}: {combos} combinations, {edges} edges, max |Δrate| {max_delta:.3e}, {elapsed:.1}s",
            config.label
        ));
    }

    report(
        2,
        "dual-path exceedance theorem",
        pass,
        &format!("{} (tol 1e-9, full-grid limit 600s)", details.join("; ")),
    );
}

// ---------------------------------------------------------------------
// Criterion 3 — discretization fidelity against analytic bin masses
// ---------------------------------------------------------------------

/// Analytic per-axis bin masses for one class, each conditioned on the
/// draw landing inside the grid (off-grid draws are rejected).
struct AxisMasses {
    dp: Vec<f64>,
    vf: Vec<f64>,
    rmax: Vec<f64>,
    theta: Vec<f64>,
}

fn analytic_masses(
    clim: &hazbn::climatology::StormClimatology,
    bins: &BinScheme,
    label: ClassLabel,
) -> AxisMasses {
    let model = clim.class_model(label);
    let class_bins = bins.class_dp_bins(clim.classes(), label);
    let dp: Vec<f64> = (0..bins.dp().n_bins())
        .map(|d| {
            if !class_bins.contains(&d) {
                return 0.0;
            }
            let (lo, hi) = bins.dp().bounds(d);
            model.dp.cdf(hi) - model.dp.cdf(lo)
        })
        .collect();
    let open = |m: &dyn Marginal, axis: &Axis| -> Vec<f64> {
        let accept = 1.0 - m.cdf(axis.lo());
        (0..axis.n_bins())
            .map(|k| {
                let (lo, hi) = axis.bounds(k);
                let raw = if k + 1 == axis.n_bins() {
                    1.0 - m.cdf(lo)
                } else {
                    m.cdf(hi) - m.cdf(lo)
                };
                raw / accept
            })
            .collect()
    };
    let heading = clim.heading();
    let accept = heading.cdf(bins.theta().hi()) - heading.cdf(bins.theta().lo());
    let theta: Vec<f64> = (0..bins.theta().n_bins())
        .map(|t| {
            let (lo, hi) = bins.theta().bounds(t);
            (heading.cdf(hi) - heading.cdf(lo)) / accept
        })
        .collect();
    AxisMasses {
        dp,
        vf: open(&model.vf, bins.vf()),
        rmax: open(&model.rmax, bins.rmax()),
        theta,
    }
}

#[test]
fn criterion_3_discretization_matches_analytic_masses() {
    let (config, _) = load_study("reduced_study.json");
    let clim = config.climatology.build().unwrap();
    let bins = config.bins.build(config.landfall.n_points).unwrap();
    let n: u64 = 1_000_000;

    let mut max_cell_z: f64 = 0.0;
    let mut max_marginal_z: f64 = 0.0;
    let mut cells = 0usize;

    for label in [ClassLabel::Low, ClassLabel::Medium, ClassLabel::High] {
        let slice = discretize_joint(&clim, &bins, label, n, 424_242).unwrap();
        let accepted = slice.accepted as f64;
        let masses = analytic_masses(&clim, &bins, label);

        // Every 4-D cell against the product of analytic axis masses.
        let (nd, nv, nr, nt) = (
            bins.dp().n_bins(),
            bins.vf().n_bins(),
            bins.rmax().n_bins(),
            bins.theta().n_bins(),
        );
        let mut recovered = AxisMasses {
            dp: vec![0.0; nd],
            vf: vec![0.0; nv],
            rmax: vec![0.0; nr],
            theta: vec![0.0; nt],
        };
        for d in 0..nd {
            for v in 0..nv {
                for r in 0..nr {
                    for t in 0..nt {
                        let p = slice.probs[bins.cell_index(d, v, r, t)];
                        let expected =
                            masses.dp[d] * masses.vf[v] * masses.rmax[r] * masses.theta[t];
                        if expected == 0.0 {
                            assert_eq!(p, 0.0, "mass outside the class at ({d},{v},{r},{t})");
                        } else {
                            let se = (expected * (1.0 - expected) / accepted).sqrt();
                            max_cell_z = max_cell_z.max((p - expected).abs() / se);
                        }
                        recovered.dp[d] += p;
                        recovered.vf[v] += p;
                        recovered.rmax[r] += p;
                        recovered.theta[t] += p;
                        cells += 1;
                    }
                }
            }
        }

        // Recovered 1-D marginals against analytic CDF differences.
        for (got, want) in [
            (&recovered.dp, &masses.dp),
            (&recovered.vf, &masses.vf),
            (&recovered.rmax, &masses.rmax),
            (&recovered.theta, &masses.theta),
        ] {
            for (g, w) in got.iter().zip(want) {
                if *w == 0.0 {
                    assert_eq!(*g, 0.0);
                    continue;
                }
                let se = (w * (1.0 - w) / accepted).sqrt();
                max_marginal_z = max_marginal_z.max((g - w).abs() / se);
            }
        }
    }

    report(
        3,
        "discretization fidelity",
        max_cell_z <= 3.0 && max_marginal_z <= 3.0,
        &format!(
            "3 classes × 10⁶ draws, {cells} cells: max cell |z| {max_cell_z:.2}, max marginal |z| {max_marginal_z:.2} (limit 3 SE)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 4 — copula calibration
// ---------------------------------------------------------------------

/// Kendall rank correlation by merge-sort inversion counting, O(n log n).
/// Assumes continuous data (no ties), which holds for the copula draws.
fn sample_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| x[*a].partial_cmp(&x[*b]).unwrap());
    let mut ys: Vec<f64> = order.iter().map(|i| y[*i]).collect();
    let discordant = count_inversions(&mut ys);
    let pairs = (n * (n - 1) / 2) as f64;
    1.0 - 2.0 * discordant as f64 / pairs
}

fn count_inversions(a: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = a.split_at_mut(mid);
    let mut inv = count_inversions(left) + count_inversions(right);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            merged.push(left[i]);
            i += 1;
        } else {
            inv += (left.len() - i) as u64;
            merged.push(right[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&left[i..]);
    merged.extend_from_slice(&right[j..]);
    a.copy_from_slice(&merged);
    inv
}

#[test]
fn criterion_4_copula_calibration() {
    // Closed-form transform checks.
    let rho_half = kendall_to_pearson(0.5).unwrap();
    let closed_form_ok = kendall_to_pearson(0.0).unwrap().abs() <= 1e-15
        && (rho_half - (0.5 * std::f64::consts::FRAC_PI_2).sin()).abs() <= 1e-12
        && (rho_half - 0.70711).abs() <= 1e-5
        && (kendall_to_pearson(1.0).unwrap() - 1.0).abs() <= 1e-12;

    // Sampled check: draw from a climatology with a nontrivial Kendall
    // matrix and recover every configured τ from the joint draws.
    let tau = vec![
        vec![1.0, 0.5, 0.3, 0.0],
        vec![0.5, 1.0, 0.2, 0.0],
        vec![0.3, 0.2, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    let (config, _) = load_study("reduced_study.json");
    let mut clim_config = config.climatology.clone();
    clim_config.kendall = [Some(tau.clone()), Some(tau.clone()), Some(tau.clone())];
    let clim = clim_config.build().unwrap();
    let draws = clim.sample_joint(ClassLabel::Medium, 100_000, 77);
    let cols: [Vec<f64>; 4] = [
        draws.iter().map(|d| d.dp).collect(),
        draws.iter().map(|d| d.vf).collect(),
        draws.iter().map(|d| d.rmax).collect(),
        draws.iter().map(|d| d.theta_deg).collect(),
    ];
    let mut max_tau_err: f64 = 0.0;
    for a in 0..4 {
        for b in (a + 1)..4 {
            let got = sample_kendall(&cols[a], &cols[b]);
            max_tau_err = max_tau_err.max((got - tau[a][b]).abs());
        }
    }

    report(
        4,
        "copula calibration",
        closed_form_ok && max_tau_err <= 0.02,
        &format!(
            "ρ(τ=0.5) = {rho_half:.6}; sampled τ over 10⁵ draws: max |τ̂ − τ| {max_tau_err:.4} (limit 0.02)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 5 — normalization suite
// ---------------------------------------------------------------------

/// Error function by its Taylor series, accurate to machine precision
/// for the |x| ≤ 1 arguments used here. Independent of the library's
/// normal-CDF implementation.
fn erf_taylor(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..60 {
        let nf = n as f64;
        term *= -x * x / nf;
        let contrib = term / (2.0 * nf + 1.0);
        sum += contrib;
        if contrib.abs() < 1e-18 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn criterion_5_normalization_suite() {
    let (_config, artifacts) = build("reduced_study.json");
    let assembled = artifacts.assemble().unwrap();

    // Every CPT row across the assembled network.
    let mut max_row_err: f64 = 0.0;
    for cpt in assembled.network().cpt_factors() {
        let row = *cpt.cards().last().unwrap();
        for chunk in cpt.values().chunks(row) {
            max_row_err = max_row_err.max((chunk.iter().sum::<f64>() - 1.0).abs());
        }
    }

    // Emitted PMFs and the joint PDF volume.
    let mut max_pmf_err: f64 = 0.0;
    for h in 0..artifacts.channels.len() {
        let marginal = assembled.response_marginal(h).unwrap();
        max_pmf_err = max_pmf_err.max((marginal.values().iter().sum::<f64>() - 1.0).abs());
    }
    let table = joint_hazard(&assembled).unwrap();
    max_pmf_err = max_pmf_err.max((table.pmf.iter().sum::<f64>() - 1.0).abs());
    let w1 = (table.r1_edges[table.r1_edges.len() - 1] - table.r1_edges[0])
        / (table.r1_edges.len() - 1) as f64;
    let w2 = (table.r2_edges[table.r2_edges.len() - 1] - table.r2_edges[0])
        / (table.r2_edges.len() - 1) as f64;
    let volume: f64 = table.pdf.iter().map(|d| d * w1 * w2).sum();
    let max_pdf_err = (volume - 1.0).abs();

    // ε bins: total mass and the [0, 1) bin against an independent
    // erf oracle, Φ(1) − Φ(0) = erf(1/√2)/2.
    let phi_diff = 0.5 * erf_taylor(std::f64::consts::FRAC_1_SQRT_2);
    let mut max_eps_mass_err: f64 = 0.0;
    let mut max_eps_cell_err: f64 = 0.0;
    for channel in &artifacts.channels {
        assert_eq!(channel.eps_prior.len(), 8, "standard ε layout expected");
        max_eps_mass_err =
            max_eps_mass_err.max((channel.eps_prior.iter().sum::<f64>() - 1.0).abs());
        // Bin 4 spans [0, 1) under the standard interior edges.
        max_eps_cell_err = max_eps_cell_err.max((channel.eps_prior[4] - phi_diff).abs());
    }

    report(
        5,
        "normalization suite",
        max_row_err <= 1e-9
            && max_pmf_err <= 1e-9
            && max_pdf_err <= 1e-9
            && max_eps_mass_err <= 1e-9
            && max_eps_cell_err <= 1e-12,
        &format!(
            "max CPT row |Δ| {max_row_err:.2e}, PMF |Δ| {max_pmf_err:.2e}, PDF volume |Δ| {max_pdf_err:.2e} (tol 1e-9); P(ε∈[0,1)) |Δ| {max_eps_cell_err:.2e} vs erf oracle {phi_diff:.10} (tol 1e-12)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 6 — deaggregation consistency
// ---------------------------------------------------------------------

/// Evidence for the generic path: the exceedance indicators pinned true.
fn indicator_evidence(active: &[usize]) -> Evidence {
    let mut e = Evidence::new();
    for &h in active {
        e = e.with(nodes::exceedance(h), 1);
    }
    e
}

#[test]
fn criterion_6_specialized_deaggregation_matches_variable_elimination() {
    let (config, mut artifacts) = build("reduced_study.json");

    // Thresholds from the no-evidence curve; wiring them into the
    // channels makes the network grow indicator nodes so the generic
    // engine can condition on the same events.
    let plain = artifacts.assemble().unwrap();
    let t1 = select_threshold(&plain, 0, config.target_ep).unwrap().threshold;
    let t2 = select_threshold(&plain, 1, config.target_ep).unwrap().threshold;
    artifacts.channels[0].threshold = Some(t1);
    artifacts.channels[1].threshold = Some(t2);
    let assembled = artifacts.assemble().unwrap();
    let net = assembled.network();

    let cases = [
        (EvidenceCase::ec1(t1), vec![0usize]),
        (EvidenceCase::ec2(t2), vec![1usize]),
        (EvidenceCase::ec3(t1, t2), vec![0usize, 1usize]),
    ];

    let param_ids = [
        VarId::from(nodes::INTENSITY),
        VarId::from(nodes::DP),
        VarId::from(nodes::VF),
        VarId::from(nodes::RMAX),
        VarId::from(nodes::THETA),
        VarId::from(nodes::X0),
    ];

    let mut max_posterior_delta: f64 = 0.0;
    let mut max_pe_delta: f64 = 0.0;
    let mut max_bayes_delta: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_0006);

    // Prior joint over the five parameter axes, in the same layout the
    // specialized path reports.
    let five: Vec<VarId> = param_ids[1..].to_vec();
    let prior_joint = query(net, &five, &Evidence::new()).unwrap().posterior;

    for (case, active) in &cases {
        let specialized = deaggregate(&assembled, case).unwrap();
        let evidence = indicator_evidence(active);

        for (id, values) in [
            (&param_ids[0], &specialized.intensity),
            (&param_ids[1], &specialized.dp),
            (&param_ids[2], &specialized.vf),
            (&param_ids[3], &specialized.rmax),
            (&param_ids[4], &specialized.theta),
            (&param_ids[5], &specialized.x0),
        ] {
            let generic = query(net, std::slice::from_ref(id), &evidence).unwrap();
            max_pe_delta = max_pe_delta
                .max((generic.evidence_probability - specialized.evidence_probability).abs());
            max_posterior_delta =
                max_posterior_delta.max(max_abs_diff(generic.posterior.values(), values));
        }

        // Bayes identity p(x | e) · P(e) = p(x) · P(e | x) at random
        // parameter combinations, mixing the two inference paths.
        let d = specialized.dims;
        let e_ids: Vec<VarId> = active.iter().map(|h| nodes::exceedance(*h)).collect();
        for _ in 0..100 {
            let cell = [
                rng.random_range(0..d.nd),
                rng.random_range(0..d.nv),
                rng.random_range(0..d.nr),
                rng.random_range(0..d.nt),
                rng.random_range(0..d.nx),
            ];
            let flat = (((cell[0] * d.nv + cell[1]) * d.nr + cell[2]) * d.nt + cell[3]) * d.nx
                + cell[4];
            let mut x_evidence = Evidence::new();
            for (id, state) in five.iter().zip(cell) {
                x_evidence = x_evidence.with(id.clone(), state);
            }
            let cond = query(net, &e_ids, &x_evidence).unwrap().posterior;
            let p_e_given_x = *cond.values().last().unwrap();
            let lhs = specialized.posterior[flat] * specialized.evidence_probability;
            let rhs = prior_joint.values()[flat] * p_e_given_x;
            max_bayes_delta = max_bayes_delta.max((lhs - rhs).abs());
        }
    }

    report(
        6,
        "deaggregation consistency",
        max_posterior_delta <= 1e-10 && max_pe_delta <= 1e-10 && max_bayes_delta <= 1e-10,
        &format!(
            "EC1–EC3: max posterior |Δ| {max_posterior_delta:.3e}, max P(e) |Δ| {max_pe_delta:.3e}, Bayes identity at 300 random cells max |Δ| {max_bayes_delta:.3e} (tol 1e-10)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 7 — qualitative posterior shifts under the analytic models
// ---------------------------------------------------------------------

#[test]
fn criterion_7_posterior_mean_shifts_follow_the_response_physics() {
    let (config, artifacts) = build("reduced_study.json");
    let assembled = artifacts.assemble().unwrap();
    let net = assembled.network();

    // Threshold selection at the no-evidence target, achieved within one
    // bin's mass.
    let mut threshold_ok = true;
    let mut selected = Vec::new();
    for h in 0..2 {
        let sel = select_threshold(&assembled, h, config.target_ep).unwrap();
        let pmf = assembled.response_marginal(h).unwrap();
        assert!(sel.edge > 0, "threshold should not sit at the axis floor");
        let bin_below = pmf.values()[sel.edge - 1];
        threshold_ok &= (sel.achieved - config.target_ep).abs() <= bin_below;
        selected.push(sel);
    }
    let (t1, t2) = (selected[0].threshold, selected[1].threshold);

    // Prior means of the storm parameters and both responses.
    let prior_mean = |id: &str, edges: &[f64]| -> f64 {
        let p = query(net, &[VarId::from(id)], &Evidence::new()).unwrap().posterior;
        pmf_mean(edges, p.values())
    };
    let dp_edges = config.bins.dp_edges.clone();
    let vf_edges = config.bins.vf_edges.clone();
    let prior_dp = prior_mean(nodes::DP, &dp_edges);
    let prior_vf = prior_mean(nodes::VF, &vf_edges);
    let response_edges = |h: usize| -> Vec<f64> {
        let r = artifacts.channels[h].rbins.r();
        (0..=r.n_bins()).map(|k| r.edge(k)).collect()
    };
    let prior_response = |h: usize| -> f64 {
        pmf_mean(
            &response_edges(h),
            assembled.response_marginal(h).unwrap().values(),
        )
    };
    let prior_surge = prior_response(0);
    let prior_rain = prior_response(1);

    let ec1 = deaggregate(&assembled, &EvidenceCase::ec1(t1)).unwrap();
    let ec2 = deaggregate(&assembled, &EvidenceCase::ec2(t2)).unwrap();
    let ec3 = deaggregate(&assembled, &EvidenceCase::ec3(t1, t2)).unwrap();

    let dp_ec1 = pmf_mean(&dp_edges, &ec1.dp);
    let dp_ec3 = pmf_mean(&dp_edges, &ec3.dp);
    let vf_ec1 = pmf_mean(&vf_edges, &ec1.vf);
    let vf_ec2 = pmf_mean(&vf_edges, &ec2.vf);
    let cond_mean = |r: &hazbn::deagg::DeaggregationResult| -> f64 {
        let c = r.conditional.as_ref().expect("one-channel evidence");
        pmf_mean(&c.edges, &c.pmf)
    };
    let rain_given_surge = cond_mean(&ec1);
    let surge_given_rain = cond_mean(&ec2);

    let shifts = [
        ("E[ΔP|EC1] > E[ΔP]", dp_ec1 > prior_dp),
        ("E[Vf|EC1] > E[Vf]", vf_ec1 > prior_vf),
        ("E[Vf|EC2] < E[Vf]", vf_ec2 < prior_vf),
        ("E[ΔP|EC3] ≥ E[ΔP|EC1]", dp_ec3 >= dp_ec1),
        ("E[rain|EC1] > E[rain]", rain_given_surge > prior_rain),
        ("E[surge|EC2] > E[surge]", surge_given_rain > prior_surge),
    ];
    let failed: Vec<&str> = shifts.iter().filter(|(_, ok)| !ok).map(|(s, _)| *s).collect();

    report(
        7,
        "qualitative posterior shifts",
        threshold_ok && failed.is_empty(),
        &format!(
            "thresholds {t1:.3}/{t2:.1} achieve {:.4}/{:.4} near target {}; ΔP {prior_dp:.1}→{dp_ec1:.1} (EC1) →{dp_ec3:.1} (EC3); Vf {prior_vf:.1}→{vf_ec1:.1} (EC1) / {vf_ec2:.1} (EC2); all 6 direction checks{}",
            selected[0].achieved,
            selected[1].achieved,
            config.target_ep,
            if failed.is_empty() {
                " hold".to_string()
            } else {
                format!(" FAILED: {failed:?}")
            }
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8 — structural properties of the joint surface
// ---------------------------------------------------------------------

/// Correlation of bin midpoints under the given cell weights; scale of
/// the weights cancels, which is the property criterion 8 exercises.
fn midpoint_correlation(table: &hazbn::hazard::joint::JointHazardTable, weights: &[f64]) -> f64 {
    let n1 = table.r1_edges.len() - 1;
    let n2 = table.r2_edges.len() - 1;
    let mid = |edges: &[f64], k: usize| 0.5 * (edges[k] + edges[k + 1]);
    let total: f64 = weights.iter().sum();
    let (mut m1, mut m2) = (0.0, 0.0);
    for a in 0..n1 {
        for b in 0..n2 {
            let w = weights[a * n2 + b] / total;
            m1 += w * mid(&table.r1_edges, a);
            m2 += w * mid(&table.r2_edges, b);
        }
    }
    let (mut v1, mut v2, mut cov) = (0.0, 0.0, 0.0);
    for a in 0..n1 {
        for b in 0..n2 {
            let w = weights[a * n2 + b] / total;
            let d1 = mid(&table.r1_edges, a) - m1;
            let d2 = mid(&table.r2_edges, b) - m2;
            v1 += w * d1 * d1;
            v2 += w * d2 * d2;
            cov += w * d1 * d2;
        }
    }
    cov / (v1 * v2).sqrt()
}

#[test]
fn criterion_8_joint_surface_structure() {
    let (config, artifacts) = build("reduced_study.json");
    let assembled = artifacts.assemble().unwrap();
    let table = joint_hazard(&assembled).unwrap();
    let n1 = table.r1_edges.len() - 1;
    let n2 = table.r2_edges.len() - 1;

    // Joint exceedance never exceeds either marginal exceedance, and the
    // surface is nonincreasing along both axes.
    let curve1 = hazard_curve(&assembled, 0, &config.rate).unwrap();
    let curve2 = hazard_curve(&assembled, 1, &config.rate).unwrap();
    let mut bound_ok = true;
    let mut monotone_ok = true;
    for a in 0..=n1 {
        for b in 0..=n2 {
            let joint = table.exceedance_at_edges(a, b);
            bound_ok &= joint <= curve1.exceedance[a].min(curve2.exceedance[b]) + 1e-12;
            if a > 0 {
                monotone_ok &= joint <= table.exceedance_at_edges(a - 1, b) + 1e-15;
            }
            if b > 0 {
                monotone_ok &= joint <= table.exceedance_at_edges(a, b - 1) + 1e-15;
            }
        }
    }

    // Conditional independence of the two responses given a full
    // parameter combination.
    let net = assembled.network();
    let d = &artifacts.cpts;
    let dims = [
        d.dp_given_i.cards()[1],
        d.vf_given_dp.cards()[1],
        d.rmax_given_dp_vf.cards()[2],
        d.theta_given_dp_vf_rmax.cards()[3],
        d.x0.cards()[0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_0008);
    let mut max_ci_delta: f64 = 0.0;
    let (r1, r2) = (nodes::response(0), nodes::response(1));
    for _ in 0..20 {
        let mut evidence = Evidence::new();
        for (name, n) in nodes::PARAMETERS.iter().zip(dims) {
            evidence = evidence.with(*name, rng.random_range(0..n));
        }
        let joint = query(net, &[r1.clone(), r2.clone()], &evidence).unwrap().posterior;
        let p1 = query(net, std::slice::from_ref(&r1), &evidence).unwrap().posterior;
        let p2 = query(net, std::slice::from_ref(&r2), &evidence).unwrap().posterior;
        for a in 0..n1 {
            for b in 0..n2 {
                let product = p1.values()[a] * p2.values()[b];
                max_ci_delta = max_ci_delta.max((joint.values()[a * n2 + b] - product).abs());
            }
        }
    }

    // Correlation is invariant under recurrence-rate scaling: annualized
    // surfaces are the probability surface times a constant, so the
    // correlation computed from rate-scaled weights matches exactly.
    let scaled: Vec<f64> = {
        let boosted = RateConfig {
            lambda: config.rate.lambda * 37.0,
            s_trk: config.rate.s_trk * 2.0,
        };
        table.pmf.iter().map(|p| p * boosted.annual_scale()).collect()
    };
    let rho_prob = midpoint_correlation(&table, &table.pmf);
    let rho_rate = midpoint_correlation(&table, &scaled);
    let rho_ok = (rho_prob - rho_rate).abs() <= 1e-12 && (rho_prob - table.correlation).abs() <= 1e-9;

    report(
        8,
        "joint-surface structure",
        bound_ok && monotone_ok && max_ci_delta <= 1e-12 && rho_ok,
        &format!(
            "marginal bound and monotonicity over {} edge pairs: {}; conditional independence max |Δ| {max_ci_delta:.3e} (tol 1e-12); ρ {rho_prob:.6} invariant under 74× rate scaling (|Δ| {:.1e})",
            (n1 + 1) * (n2 + 1),
            if bound_ok && monotone_ok { "hold" } else { "VIOLATED" },
            (rho_prob - rho_rate).abs()
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9 — determinism and thread invariance of the binary
// ---------------------------------------------------------------------

fn run_pipeline(config: &Path, out: &Path, threads: Option<&str>) {
    for sub in ["build", "hazard", "deagg"] {
        let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_hazbn"));
        cmd.args([sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        let output = cmd.output().expect("binary should launch");
        assert!(
            output.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
}

fn tree_files(root: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_9_reruns_are_byte_identical_and_thread_invariant() {
    let tmp = tempfile::TempDir::new().unwrap();
    let config = config_path("reduced_study.json");
    let runs = [
        (tmp.path().join("a"), None),
        (tmp.path().join("b"), None),
        (tmp.path().join("c"), Some("1")),
    ];
    for (dir, threads) in &runs {
        run_pipeline(&config, dir, *threads);
    }

    let names = tree_files(&runs[0].0);
    let mut compared = 0usize;
    let mut identical = true;
    for (dir, _) in &runs[1..] {
        assert_eq!(names, tree_files(dir), "output trees list different files");
        for name in &names {
            // The manifest records wall times and the thread cap — run
            // metadata, exercised by the CLI test suite — so the byte
            // comparison here covers every data product.
            if name == Path::new("manifest.json") {
                continue;
            }
            let a = std::fs::read(runs[0].0.join(name)).unwrap();
            let o = std::fs::read(dir.join(name)).unwrap();
            identical &= a == o;
            compared += 1;
        }
    }

    report(
        9,
        "determinism and thread invariance",
        identical,
        &format!(
            "3 pipeline runs (rerun + single-thread), {} of {} data files byte-identical across runs",
            if identical { compared } else { 0 },
            compared
        ),
    );
}
