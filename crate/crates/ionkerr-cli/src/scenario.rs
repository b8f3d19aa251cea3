//! Executes parsed scenarios and writes their output files.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use ionkerr::dynamics::{
    evolve_lindblad, evolve_static, observables, standard_channels, EvolutionSpec, Trajectory,
    TrajectoryStates,
};
use ionkerr::gate::{
    build_level_hamiltonian, effective_vs_full_fidelity, gate_time, ld_gate_time, simulate_gate,
    transition_probability_series, GateReport, GateSimOptions,
};
use ionkerr::hamiltonian::{kerr_coupling, regime_check, shifted_frequency, RegimeReport, Verdict};
use ionkerr::{CompositeSpace, IonLevel, MixedState, PureState};

use crate::config::{resolve_scenario, ConfigError, ScenarioConfig, SweepConfig};
use crate::output::{csv_table, fmt_float, kv_block, metadata_header};

/// Failure classes of a run, mapped onto exit codes by the binary.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Config-class problem discovered while setting up the run (exit 64).
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Engine/physics failure (exit 2).
    #[error("scenario '{label}': {source}")]
    Physics {
        label: String,
        #[source]
        source: ionkerr::Error,
    },
    /// Output could not be written (exit 64; the path came from the user).
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// Files written plus the worst regime verdict encountered.
#[derive(Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub worst: Verdict,
}

/// Reductions a sweep may tabulate.
pub const REDUCTION_NAMES: &[&str] = &[
    "conditional_phase_rad",
    "process_fidelity",
    "max_excited_population",
    "mean_excited_population",
    "purity",
    "t_gate_s",
    "lambda_rad_s",
    "lambda_hz",
    "max_infidelity",
];

fn physics(label: &str) -> impl Fn(ionkerr::Error) -> RunError + '_ {
    move |source| RunError::Physics { label: label.to_string(), source }
}

fn space_of(cfg: &ScenarioConfig) -> Result<CompositeSpace, RunError> {
    CompositeSpace::new(cfg.phonon_cutoff, cfg.photon_cutoff).map_err(|e| RunError::Physics {
        label: cfg.label.clone(),
        source: e,
    })
}

fn initial_state(cfg: &ScenarioConfig, space: CompositeSpace) -> Result<PureState, RunError> {
    let terms: Vec<(C64, IonLevel, usize, usize)> = cfg
        .initial
        .iter()
        .map(|&(c, ion, m, n)| (C64::new(c, 0.0), ion, m, n))
        .collect();
    PureState::superposition(space, &terms).map_err(physics(&cfg.label))
}

fn write(path: PathBuf, content: &str) -> Result<PathBuf, RunError> {
    std::fs::write(&path, content.as_bytes())?;
    Ok(path)
}

fn regime_entries(r: &RegimeReport) -> Vec<(String, String)> {
    vec![
        ("ratio_g_delta".into(), fmt_float(r.ratio_g_delta)),
        ("ratio_delta_nu".into(), fmt_float(r.ratio_delta_nu)),
        ("nearest_resonance_k".into(), r.nearest_resonance_k.to_string()),
        ("resonance_margin".into(), fmt_float(r.resonance_margin)),
        ("verdict_g_delta".into(), r.verdict_g_delta.to_string()),
        ("verdict_delta_nu".into(), r.verdict_delta_nu.to_string()),
        ("verdict_resonance".into(), r.verdict_resonance.to_string()),
        ("verdict_overall".into(), r.overall().to_string()),
    ]
}

fn trajectory_rows(
    traj: &Trajectory,
    space: CompositeSpace,
    amplitude_columns: bool,
) -> Result<(Vec<&'static str>, Vec<String>, Vec<Vec<String>>), ionkerr::Error> {
    let n_a = ionkerr::fock::number_op(space, ionkerr::Mode::Phonon);
    let n_b = ionkerr::fock::number_op(space, ionkerr::Mode::Photon);
    let (_, sp_op, sm_op) = ionkerr::fock::atomic_ops(space);
    let proj_e = &sp_op * &sm_op;
    let series = observables(traj, &[n_a, n_b, proj_e])?;

    let fixed: Vec<&'static str> =
        vec!["t_s", "n_phonon", "n_photon", "p_excited", "norm_or_trace", "purity"];
    let mut extra: Vec<String> = Vec::new();
    if amplitude_columns {
        for (_, s, m, n) in space.basis_iter() {
            let tag = format!("{}_{m}_{n}", if s == IonLevel::Ground { "g" } else { "e" });
            match traj.states() {
                TrajectoryStates::Pure(_) => {
                    extra.push(format!("amp_re_{tag}"));
                    extra.push(format!("amp_im_{tag}"));
                }
                TrajectoryStates::Mixed(_) => extra.push(format!("pop_{tag}")),
            }
        }
    }

    let mut rows = Vec::with_capacity(traj.len());
    for (k, &t) in traj.times().iter().enumerate() {
        let mut row = vec![
            fmt_float(t),
            fmt_float(series[0][k]),
            fmt_float(series[1][k]),
            fmt_float(series[2][k]),
            fmt_float(traj.norm_or_trace(k)),
            fmt_float(traj.purity(k)),
        ];
        if amplitude_columns {
            match traj.states() {
                TrajectoryStates::Pure(states) => {
                    for a in states[k].amplitudes() {
                        row.push(fmt_float(a.re));
                        row.push(fmt_float(a.im));
                    }
                }
                TrajectoryStates::Mixed(states) => {
                    for i in 0..space.total_dim() {
                        row.push(fmt_float(states[k].matrix()[[i, i]].re));
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok((fixed, extra, rows))
}

/// `simulate`: propagate the configured initial state and write the
/// trajectory table.
pub fn run_simulate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let space = space_of(cfg)?;
    let Some(t_final) = cfg.t_final_s else {
        return Err(ConfigError {
            line: None,
            message: "simulate requires t_final_s".into(),
        }
        .into());
    };
    let psi0 = initial_state(cfg, space)?;
    let h = build_level_hamiltonian(cfg.level, &cfg.params, space).map_err(physics(&cfg.label))?;
    let spec = EvolutionSpec::new(t_final, cfg.sample_count)
        .and_then(|s| s.with_tolerances(cfg.rel_tol.unwrap_or(1e-9), cfg.abs_tol.unwrap_or(1e-12)))
        .and_then(|s| match cfg.max_step_s {
            Some(h) => s.with_max_step(h),
            None => Ok(s),
        })
        .map_err(physics(&cfg.label))?;

    let traj = match &cfg.dissipation {
        Some(d) if d.kappa > 0.0 || d.gamma > 0.0 => {
            let channels = standard_channels(space, d.kappa, d.gamma).map_err(physics(&cfg.label))?;
            evolve_lindblad(&h, &channels, &MixedState::from_pure(&psi0), &spec)
                .map_err(physics(&cfg.label))?
        }
        _ => evolve_static(&h, &psi0, &spec).map_err(physics(&cfg.label))?,
    };

    let (fixed, extra, rows) =
        trajectory_rows(&traj, space, cfg.amplitude_columns).map_err(physics(&cfg.label))?;
    let mut header: Vec<&str> = fixed;
    header.extend(extra.iter().map(|s| s.as_str()));
    let content = format!(
        "{}{}",
        metadata_header("simulate", &cfg.echo),
        csv_table(&header, &rows)
    );
    let file = write(out_dir.join(format!("{}_trajectory.csv", cfg.label)), &content)?;
    let worst = regime_check(&cfg.params, &cfg.thresholds).overall();
    Ok(RunOutcome { files: vec![file], worst })
}

fn gate_report_entries(cfg: &ScenarioConfig, report: &GateReport) -> Vec<(String, String)> {
    let p = &cfg.params;
    let mut entries = vec![
        ("label".into(), report.label.clone()),
        ("level".into(), report.level.as_str().into()),
        ("eta".into(), fmt_float(p.eta)),
        ("g_rad_s".into(), fmt_float(p.g)),
        ("g_hz".into(), fmt_float(p.g / TAU)),
        ("delta_rad_s".into(), fmt_float(p.delta)),
        ("nu_rad_s".into(), fmt_float(p.nu)),
        ("omega_c_rad_s".into(), fmt_float(p.omega_c)),
        ("t_gate_s".into(), fmt_float(report.t_gate)),
        ("phi00_rad".into(), fmt_float(report.phases.phi00)),
        ("phi10_rad".into(), fmt_float(report.phases.phi10)),
        ("phi01_rad".into(), fmt_float(report.phases.phi01)),
        ("phi11_rad".into(), fmt_float(report.phases.phi11)),
        ("conditional_phase_rad".into(), fmt_float(report.conditional_phase)),
        ("process_fidelity".into(), fmt_float(report.process_fidelity)),
        ("max_excited_population".into(), fmt_float(report.max_excited_population)),
        ("mean_excited_population".into(), fmt_float(report.mean_excited_population)),
        ("purity".into(), fmt_float(report.purity.unwrap_or(1.0))),
        (
            "overlap_magnitudes".into(),
            report
                .overlap_magnitudes
                .iter()
                .map(|&o| fmt_float(o))
                .collect::<Vec<_>>()
                .join(";"),
        ),
    ];
    // derived constants, both unit conventions
    if let (Ok(lambda), Ok(shift), Ok(tg), Ok(tld)) = (
        kerr_coupling(p),
        shifted_frequency(p),
        gate_time(p),
        ld_gate_time(p),
    ) {
        entries.push(("lambda_rad_s".into(), fmt_float(lambda)));
        entries.push(("lambda_hz".into(), fmt_float(lambda / TAU)));
        entries.push(("shifted_omega_c_rad_s".into(), fmt_float(shift)));
        entries.push(("gate_time_s".into(), fmt_float(tg)));
        entries.push(("ld_gate_time_s".into(), fmt_float(tld)));
        if let Some(d) = &cfg.dissipation {
            if d.kappa > 0.0 {
                entries.push((
                    "ld_gate_time_times_kappa".into(),
                    fmt_float(tld * d.kappa),
                ));
                entries.push((
                    "ld_gate_time_times_kappa_hz_convention".into(),
                    fmt_float(tld * d.kappa / TAU),
                ));
            }
        }
    }
    entries.extend(regime_entries(&report.regime));
    entries
}

/// `gate`: run the phase-gate protocol and write the report (text block and
/// one-row CSV).
pub fn run_gate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let space = space_of(cfg)?;
    let t = match cfg.t_final_s {
        Some(t) => t,
        None => gate_time(&cfg.params).map_err(physics(&cfg.label))?,
    };
    let opts = GateSimOptions {
        label: cfg.label.clone(),
        sample_count: cfg.sample_count,
        rel_tol: cfg.rel_tol.unwrap_or(1e-7),
        abs_tol: cfg.abs_tol.unwrap_or(1e-10),
    };
    let report = simulate_gate(cfg.level, &cfg.params, space, t, cfg.dissipation, &opts)
        .map_err(physics(&cfg.label))?;

    let entries = gate_report_entries(cfg, &report);
    let text = format!("{}{}", metadata_header("gate", &cfg.echo), kv_block(&entries));
    let header: Vec<&str> = entries.iter().map(|(k, _)| k.as_str()).collect();
    let row: Vec<String> = entries.iter().map(|(_, v)| v.clone()).collect();
    let csv = format!("{}{}", metadata_header("gate", &cfg.echo), csv_table(&header, &[row]));

    let f1 = write(out_dir.join(format!("{}_gate.txt", cfg.label)), &text)?;
    let f2 = write(out_dir.join(format!("{}_gate.csv", cfg.label)), &csv)?;
    Ok(RunOutcome { files: vec![f1, f2], worst: report.regime.overall() })
}

/// `validate`: regime report, full-vs-effective infidelity series over the
/// gate basis, and the transition-probability bound check.
pub fn run_validate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let space = space_of(cfg)?;
    if cfg.phonon_cutoff < 2 || cfg.photon_cutoff < 2 {
        return Err(ConfigError {
            line: None,
            message: "validate needs phonon_cutoff and photon_cutoff of at least 2".into(),
        }
        .into());
    }
    let regime = regime_check(&cfg.params, &cfg.thresholds);
    let regime_text = format!(
        "{}{}",
        metadata_header("validate", &cfg.echo),
        kv_block(&regime_entries(&regime))
    );
    let mut files =
        vec![write(out_dir.join(format!("{}_regime.txt", cfg.label)), &regime_text)?];

    if cfg.params.delta == 0.0 {
        return Err(RunError::Physics {
            label: cfg.label.clone(),
            source: ionkerr::Error::ZeroDetuning,
        });
    }
    let window = cfg.t_final_s.unwrap_or(40.0 / cfg.params.delta.abs());

    // full vs effective infidelity over the gate basis
    let spec = EvolutionSpec::new(window, cfg.sample_count).map_err(physics(&cfg.label))?;
    let basis = [(0usize, 0usize), (1, 0), (0, 1), (1, 1)];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for &(m, n) in &basis {
        let ini = PureState::basis(space, IonLevel::Ground, m, n).map_err(physics(&cfg.label))?;
        let (ts, inf) =
            effective_vs_full_fidelity(&cfg.params, space, &spec, &ini).map_err(physics(&cfg.label))?;
        times = ts;
        columns.push(inf);
    }
    let header = ["t_s", "inf_g_0_0", "inf_g_1_0", "inf_g_0_1", "inf_g_1_1"];
    let rows: Vec<Vec<String>> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![fmt_float(t)];
            row.extend(columns.iter().map(|c| fmt_float(c[k])));
            row
        })
        .collect();
    let content = format!(
        "{}{}",
        metadata_header("validate", &cfg.echo),
        csv_table(&header, &rows)
    );
    files.push(write(out_dir.join(format!("{}_infidelity.csv", cfg.label)), &content)?);

    // first-order transition probability against its envelope
    for &(m, m_prime, n) in &cfg.transition_triples {
        if m >= cfg.phonon_cutoff || m_prime >= cfg.phonon_cutoff || n == 0
            || n >= cfg.photon_cutoff
        {
            return Err(ConfigError::plain(format!(
                "triple (m={m}, m'={m_prime}, n={n}) incompatible with cutoffs ({}, {})",
                cfg.phonon_cutoff, cfg.photon_cutoff
            ))
            .into());
        }
    }
    let pt_times: Vec<f64> = (1..=cfg.pt_samples)
        .map(|k| window * k as f64 / cfg.pt_samples as f64)
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for &(m, m_prime, n) in &cfg.transition_triples {
        let series = transition_probability_series(
            &cfg.params,
            space,
            n,
            m,
            m_prime,
            &pt_times,
            cfg.quad_points,
        )
        .map_err(physics(&cfg.label))?;
        for (check, &t) in series.iter().zip(pt_times.iter()) {
            rows.push(vec![
                m.to_string(),
                m_prime.to_string(),
                n.to_string(),
                fmt_float(t),
                fmt_float(check.probability),
                fmt_float(check.envelope),
                if check.probability <= check.envelope { "1".into() } else { "0".into() },
            ]);
        }
    }
    let header = ["m", "m_prime", "n", "t_s", "probability", "envelope", "within_bound"];
    let content = format!(
        "{}{}",
        metadata_header("validate", &cfg.echo),
        csv_table(&header, &rows)
    );
    files.push(write(out_dir.join(format!("{}_pbound.csv", cfg.label)), &content)?);

    Ok(RunOutcome { files, worst: regime.overall() })
}

fn compute_reductions(cfg: &ScenarioConfig) -> Result<(Vec<f64>, Verdict), RunError> {
    let space = space_of(cfg)?;
    let needs_gate = cfg.reductions.iter().any(|r| {
        matches!(
            r.as_str(),
            "conditional_phase_rad"
                | "process_fidelity"
                | "max_excited_population"
                | "mean_excited_population"
                | "purity"
        )
    });
    let report = if needs_gate {
        let t = match cfg.t_final_s {
            Some(t) => t,
            None => gate_time(&cfg.params).map_err(physics(&cfg.label))?,
        };
        let opts = GateSimOptions {
            label: cfg.label.clone(),
            sample_count: cfg.sample_count,
            rel_tol: cfg.rel_tol.unwrap_or(1e-7),
            abs_tol: cfg.abs_tol.unwrap_or(1e-10),
        };
        Some(
            simulate_gate(cfg.level, &cfg.params, space, t, cfg.dissipation, &opts)
                .map_err(physics(&cfg.label))?,
        )
    } else {
        None
    };
    let max_infidelity = if cfg.reductions.iter().any(|r| r == "max_infidelity") {
        let window = 40.0 / if cfg.params.delta != 0.0 {
            cfg.params.delta.abs()
        } else {
            return Err(RunError::Physics {
                label: cfg.label.clone(),
                source: ionkerr::Error::ZeroDetuning,
            });
        };
        let spec = EvolutionSpec::new(window, cfg.sample_count).map_err(physics(&cfg.label))?;
        let mut worst = 0.0_f64;
        for (m, n) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
            let ini = PureState::basis(space, IonLevel::Ground, m, n).map_err(physics(&cfg.label))?;
            let (_, inf) = effective_vs_full_fidelity(&cfg.params, space, &spec, &ini)
                .map_err(physics(&cfg.label))?;
            worst = inf.iter().cloned().fold(worst, f64::max);
        }
        Some(worst)
    } else {
        None
    };

    let mut values = Vec::with_capacity(cfg.reductions.len());
    for name in &cfg.reductions {
        let v = match name.as_str() {
            "conditional_phase_rad" => report.as_ref().unwrap().conditional_phase,
            "process_fidelity" => report.as_ref().unwrap().process_fidelity,
            "max_excited_population" => report.as_ref().unwrap().max_excited_population,
            "mean_excited_population" => report.as_ref().unwrap().mean_excited_population,
            "purity" => report.as_ref().unwrap().purity.unwrap_or(1.0),
            "t_gate_s" => match cfg.t_final_s {
                Some(t) => t,
                None => gate_time(&cfg.params).map_err(physics(&cfg.label))?,
            },
            "lambda_rad_s" => kerr_coupling(&cfg.params).map_err(physics(&cfg.label))?,
            "lambda_hz" => kerr_coupling(&cfg.params).map_err(physics(&cfg.label))? / TAU,
            "max_infidelity" => max_infidelity.unwrap(),
            other => {
                return Err(ConfigError::plain(format!("unknown reduction '{other}'")).into())
            }
        };
        values.push(v);
    }
    let worst = match &report {
        Some(r) => r.regime.overall(),
        None => regime_check(&cfg.params, &cfg.thresholds).overall(),
    };
    Ok((values, worst))
}

/// `sweep`: run the cartesian product of the axes in parallel and write one
/// long-format CSV, rows sorted by the axis values.
pub fn run_sweep(sweep: &SweepConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let count = sweep.point_count();
    println!(
        "sweep '{}': {} point(s) over {} axis/axes",
        sweep.base.label,
        count,
        sweep.axes.len()
    );
    if count > sweep.base.max_sweep_points {
        return Err(ConfigError::plain(format!(
            "sweep size {count} exceeds max_sweep_points = {}",
            sweep.base.max_sweep_points
        ))
        .into());
    }

    // enumerate the cartesian product in file order of the axis values
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for (_, values) in &sweep.axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for prefix in &points {
            for &v in values {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        points = next;
    }

    let lines = std::collections::BTreeMap::new();
    let results: Result<Vec<(Vec<f64>, Vec<f64>, Verdict)>, RunError> = points
        .par_iter()
        .map(|coords| {
            let overrides: Vec<(&str, f64)> = sweep
                .axes
                .iter()
                .zip(coords.iter())
                .map(|((name, _), &v)| (name.as_str(), v))
                .collect();
            let cfg = resolve_scenario(&sweep.raw, &lines, &overrides)?;
            let (values, worst) = compute_reductions(&cfg)?;
            Ok((coords.clone(), values, worst))
        })
        .collect();
    let mut results = results?;
    results.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0.iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut header: Vec<&str> = sweep.axes.iter().map(|(name, _)| name.as_str()).collect();
    header.extend(sweep.base.reductions.iter().map(|s| s.as_str()));
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(coords, values, _)| {
            coords.iter().chain(values.iter()).map(|&v| fmt_float(v)).collect()
        })
        .collect();
    let content = format!(
        "{}{}",
        metadata_header("sweep", &sweep.base.echo),
        csv_table(&header, &rows)
    );
    let file = write(out_dir.join(format!("{}_sweep.csv", sweep.base.label)), &content)?;
    let worst = results
        .iter()
        .map(|(_, _, w)| *w)
        .max()
        .unwrap_or(Verdict::Pass);
    Ok(RunOutcome { files: vec![file], worst })
}
