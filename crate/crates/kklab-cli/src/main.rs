//! kklab command line: every report embeds the tool version, the
//! fully resolved configuration, the seed, and the tolerances, so a
//! run can be reproduced bit for bit from the report alone.
//!
//! Exit codes: 0 = verdict PASS/SUCCESS, 2 = verdict FAIL with a
//! valid report written, 1 = usage or parse error.

mod problem;

use clap::{Parser, Subcommand};
use kklab::matrix::{op_norm, random_gaussian, C64};
use kklab::{
    audit_chain, build_similarity, canonical_diagonal, cb_norm_interval, check_diagonal,
    conditional_expectation, derivation_residual, generate_instance, homomorphize,
    inner_derivation, kk_distance_interval, near_inclusion_gamma, op_norm_interval, run_batch,
    run_pipeline, solve_derivation, BallGeometry, BatchConfig, JohnsonOptions, LinearOperatorMap,
    PipelineMode, Representation, SearchParams, Tolerances, Verdict,
};
use problem::ProblemFile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kklab", version, about = "Operator-algebra perturbation laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify that the named families span unital matrix algebras.
    CheckAlgebra {
        #[arg(long)]
        file: PathBuf,
        /// Restrict to one named algebra (default: all in the file).
        #[arg(long)]
        algebra: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify the diagonal stored in the problem file.
    CheckDiagonal {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// cb-norm interval of a standard map attached to a named algebra.
    CbNorm {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        algebra: String,
        /// identity | transpose | expectation
        #[arg(long, default_value = "identity")]
        kind: String,
        /// Fixed ampliation level (default: the Smith level).
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kadison-Kastler distance interval between two named algebras.
    KkDistance {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directed near-inclusion gamma of a in b at one matrix level.
    NearInclusion {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Homomorphize (1+eta) id on a named algebra and report the schedule.
    Johnson {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        algebra: String,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Averaging similarity between a conjugated representation and the identity.
    Similarity {
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long)]
        ambient: Option<usize>,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an inner derivation against the identity representation.
    Derivation {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        algebra: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the proof-chain bounds at a given gamma.
    AuditChain {
        #[arg(long)]
        gamma: f64,
        #[arg(long = "u-norm", default_value_t = 1.0)]
        u_norm: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One end-to-end run on a generated instance or a problem file.
    Pipeline {
        /// Problem file with a generator spec or two algebras M, N.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
        #[arg(long)]
        ambient: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// certified | heuristic
        #[arg(long, default_value = "certified")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep a t-grid by a seed range and summarize to CSV.
    Batch {
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long)]
        ambient: Option<usize>,
        /// Repeatable or comma-separated t values.
        #[arg(long = "t", value_delimiter = ',')]
        t: Vec<f64>,
        /// Inclusive range "0..24" or comma list "0,3,7".
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = "certified")]
        mode: String,
        /// Output directory for per-instance reports and summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Envelope {
    tool_version: &'static str,
    command: String,
    config: Value,
    tolerances: Tolerances,
    search: SearchParams,
    verdict: String,
    report: Value,
}

fn write_atomic(path: &Path, text: &str) -> Result<(), String> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
        None => PathBuf::from(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
    };
    std::fs::write(&tmp, text).map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
    std::fs::rename(&tmp, path).map_err(|e| format!("cannot move into {}: {e}", path.display()))
}

fn emit(out: &Path, command: &str, config: Value, tol: &Tolerances, pass: bool, report: Value)
    -> Result<bool, String>
{
    let envelope = Envelope {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config,
        tolerances: *tol,
        search: SearchParams::default(),
        verdict: if pass { "PASS" } else { "FAIL" }.to_string(),
        report,
    };
    let text = serde_json::to_string_pretty(&envelope).map_err(|e| e.to_string())? + "\n";
    write_atomic(out, &text)?;
    Ok(pass)
}

fn parse_mode(mode: &str) -> Result<PipelineMode, String> {
    match mode {
        "certified" => Ok(PipelineMode::Certified),
        "heuristic" => Ok(PipelineMode::Heuristic),
        other => Err(format!("unknown mode {other:?} (certified|heuristic)")),
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        let hi: u64 = b.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        if hi < lo {
            return Err(format!("empty seed range {spec:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad seed {s:?}")))
        .collect()
}

fn interval_json(iv: &kklab::NormInterval) -> Value {
    json!({
        "lower": iv.lower,
        "upper": iv.upper,
        "width": iv.width(),
        "converged": iv.converged,
        "method_tags": iv.method_tags,
    })
}

fn verdict_str(v: Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|x| x.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{v:?}"))
}

/// Ok(true) -> exit 0, Ok(false) -> exit 2, Err -> exit 1.
fn run(cmd: Cmd) -> Result<bool, String> {
    let params = SearchParams::default();
    match cmd {
        Cmd::CheckAlgebra { file, algebra, out } => {
            let pf = ProblemFile::load(&file)?;
            let names: Vec<String> = match algebra {
                Some(n) => vec![n],
                None => pf.algebras.keys().cloned().collect(),
            };
            let mut entries = Vec::new();
            let mut pass = !names.is_empty();
            for name in &names {
                match pf.algebra(name) {
                    Ok(a) => entries.push(json!({
                        "name": name,
                        "ok": true,
                        "dim": a.dim(),
                        "ambient_dim": a.ambient_dim(),
                        "selfadjoint": a.is_selfadjoint(),
                        "block_sizes": a.block_structure().map(|b| b.block_sizes.clone()),
                        "structure_residual": a.structure_residual(),
                    })),
                    Err(e) => {
                        pass = false;
                        entries.push(json!({ "name": name, "ok": false, "error": e }));
                    }
                }
            }
            emit(
                &out,
                "check-algebra",
                json!({ "file": file, "algebras": names }),
                &pf.tolerances(),
                pass,
                json!({ "algebras": entries }),
            )
        }
        Cmd::CheckDiagonal { file, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let (algebra, u) = pf.diagonal_element()?;
            let cert = check_diagonal(&u, &algebra, &params);
            let pass = cert.passes(tol.diag_tol);
            emit(
                &out,
                "check-diagonal",
                json!({ "file": file, "algebra": pf.diagonal.as_ref().map(|d| d.algebra.clone()) }),
                &tol,
                pass,
                json!({
                    "c1_residual": cert.c1_residual,
                    "c2_residual": cert.c2_residual,
                    "h_norm": interval_json(&cert.h_norm),
                    "threshold": tol.diag_tol,
                    "margin": tol.diag_tol - cert.c1_residual.max(cert.c2_residual),
                }),
            )
        }
        Cmd::CbNorm { file, algebra, kind, level, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let a = pf.algebra(&algebra)?;
            let map = match kind.as_str() {
                "identity" => LinearOperatorMap::identity_on_algebra(&a),
                "transpose" => LinearOperatorMap::transpose_on_full(a.ambient_dim())
                    .restrict_to_algebra(&a),
                "expectation" => conditional_expectation(&a).map_err(|e| e.to_string())?,
                other => return Err(format!("unknown map kind {other:?}")),
            };
            let iv = match level {
                Some(n) => op_norm_interval(&map, n, &params),
                None => cb_norm_interval(&map, &params),
            };
            emit(
                &out,
                "cb-norm",
                json!({ "file": file, "algebra": algebra, "kind": kind, "level": level }),
                &tol,
                true,
                json!({ "interval": interval_json(&iv) }),
            )
        }
        Cmd::KkDistance { file, a, b, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let aa = pf.algebra(&a)?;
            let bb = pf.algebra(&b)?;
            let iv = kk_distance_interval(
                aa.space(),
                bb.space(),
                BallGeometry::from_algebra(&aa).as_ref(),
                BallGeometry::from_algebra(&bb).as_ref(),
                None,
                tol.dist_tol,
                &params,
            )
            .map_err(|e| e.to_string())?;
            emit(
                &out,
                "kk-distance",
                json!({ "file": file, "a": a, "b": b }),
                &tol,
                true,
                json!({ "interval": interval_json(&iv) }),
            )
        }
        Cmd::NearInclusion { file, a, b, level, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let aa = pf.algebra(&a)?;
            let bb = pf.algebra(&b)?;
            let iv = near_inclusion_gamma(
                aa.space(),
                bb.space(),
                level,
                BallGeometry::from_algebra(&aa).as_ref(),
                tol.dist_tol,
                &params,
            )
            .map_err(|e| e.to_string())?;
            emit(
                &out,
                "near-inclusion",
                json!({ "file": file, "a": a, "b": b, "level": level }),
                &tol,
                true,
                json!({ "interval": interval_json(&iv) }),
            )
        }
        Cmd::Johnson { file, algebra, eta, eps, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let a = pf.algebra(&algebra)?;
            let (u, cert) = canonical_diagonal(&a, &params).map_err(|e| e.to_string())?;
            let l = LinearOperatorMap::identity_on_algebra(&a)
                .scale(C64::new(1.0 + eta, 0.0));
            let config = json!({
                "file": file, "algebra": algebra, "eta": eta, "eps": eps,
            });
            match homomorphize(&l, &u, cert.h_norm.upper, eps, &JohnsonOptions::new(), &params)
            {
                Ok((pi, schedule)) => {
                    let residual = kklab::basis_defect_residual(&pi);
                    let pass = residual <= tol.hom_tol;
                    emit(
                        &out,
                        "johnson",
                        config,
                        &tol,
                        pass,
                        json!({
                            "schedule": schedule,
                            "final_defect": residual,
                            "threshold": tol.hom_tol,
                            "steps": schedule_len(&schedule),
                        }),
                    )
                }
                Err(e) => emit(
                    &out,
                    "johnson",
                    config,
                    &tol,
                    false,
                    json!({ "error": e.to_string() }),
                ),
            }
        }
        Cmd::Similarity { blocks, ambient, t, seed, out } => {
            let tol = Tolerances::default();
            let k = ambient.unwrap_or_else(|| blocks.iter().sum());
            let inst = generate_instance(&blocks, k, t, seed, &params).map_err(|e| e.to_string())?;
            let pi1 = Representation::conjugated(&inst.n, &inst.s0).map_err(|e| e.to_string())?;
            let pi2 = Representation::identity(&inst.n);
            let config = json!({
                "blocks": blocks, "ambient_dim": k, "t": t, "seed": seed,
            });
            let outcome = build_similarity(&pi1, &pi2, &inst.u_n, inst.u_n_cert.h_norm.upper, &params)
                .map_err(|e| e.to_string())?;
            let pass = outcome.invertible && outcome.intertwining_residual <= tol.sim_tol;
            emit(
                &out,
                "similarity",
                config,
                &tol,
                pass,
                json!({
                    "outcome": outcome,
                    "intertwining_threshold": tol.sim_tol,
                    "s_minus_identity_bound": outcome.sufficient_condition_value,
                }),
            )
        }
        Cmd::Derivation { file, algebra, seed, out } => {
            let pf = ProblemFile::load(&file)?;
            let tol = pf.tolerances();
            let a = pf.algebra(&algebra)?;
            let (u, cert) = canonical_diagonal(&a, &params).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_gaussian(&mut rng, a.ambient_dim(), a.ambient_dim());
            let d = inner_derivation(&x, &a);
            let pi = Representation::identity(&a);
            let config = json!({ "file": file, "algebra": algebra, "seed": seed });
            match solve_derivation(&d, &u, &pi) {
                Ok(phi) => {
                    let residual = derivation_residual(&d, &phi, &pi);
                    let d_norm = cb_norm_interval(&d, &params);
                    let bound = cert.h_norm.upper * d_norm.upper;
                    let pass = residual <= tol.der_tol && op_norm(&phi) <= bound + tol.der_tol;
                    emit(
                        &out,
                        "derivation",
                        config,
                        &tol,
                        pass,
                        json!({
                            "residual": residual,
                            "threshold": tol.der_tol,
                            "phi_norm": op_norm(&phi),
                            "bound": bound,
                            "margin": bound - op_norm(&phi),
                        }),
                    )
                }
                Err(e) => emit(
                    &out,
                    "derivation",
                    config,
                    &tol,
                    false,
                    json!({ "error": e.to_string() }),
                ),
            }
        }
        Cmd::AuditChain { gamma, u_norm, out } => {
            let tol = Tolerances::default();
            let audit = audit_chain(gamma, u_norm).map_err(|e| e.to_string())?;
            let pass = audit.feasible;
            emit(
                &out,
                "audit-chain",
                json!({ "gamma": gamma, "u_norm": u_norm }),
                &tol,
                pass,
                serde_json::to_value(&audit).map_err(|e| e.to_string())?,
            )
        }
        Cmd::Pipeline { file, blocks, ambient, t, seed, mode, out } => {
            let mode = parse_mode(&mode)?;
            let tol;
            let report;
            let config;
            if let Some(path) = file {
                let pf = ProblemFile::load(&path)?;
                tol = pf.tolerances();
                // A mode recorded in the file wins over the flag default.
                let mode = if pf.mode.is_some() { pf.pipeline_mode()? } else { mode };
                if let Some(g) = &pf.generator {
                    let k = g.ambient_dim.unwrap_or_else(|| g.block_sizes.iter().sum());
                    let inst = generate_instance(&g.block_sizes, k, g.t, g.seed, &params)
                        .map_err(|e| e.to_string())?;
                    config = json!({
                        "file": path, "blocks": g.block_sizes, "ambient_dim": k,
                        "t": g.t, "seed": g.seed, "mode": mode,
                    });
                    report = run_pipeline(
                        &inst.m,
                        &inst.n,
                        Some(&inst.u_m_cert),
                        Some(inst.gamma_analytic),
                        mode,
                        &params,
                        &tol,
                    );
                } else {
                    let m = pf.algebra("M")?;
                    let n = pf.algebra("N")?;
                    config = json!({ "file": path, "mode": mode });
                    report = run_pipeline(&m, &n, None, None, mode, &params, &tol);
                }
            } else {
                let blocks = blocks.ok_or("either --file or --blocks is required")?;
                let t = t.ok_or("--t is required with --blocks")?;
                let seed = seed.ok_or("--seed is required with --blocks")?;
                let k = ambient.unwrap_or_else(|| blocks.iter().sum());
                tol = Tolerances::default();
                let inst =
                    generate_instance(&blocks, k, t, seed, &params).map_err(|e| e.to_string())?;
                config = json!({
                    "blocks": blocks, "ambient_dim": k, "t": t, "seed": seed, "mode": mode,
                });
                report = run_pipeline(
                    &inst.m,
                    &inst.n,
                    Some(&inst.u_m_cert),
                    Some(inst.gamma_analytic),
                    mode,
                    &params,
                    &tol,
                );
            }
            let pass = report.verdict == Verdict::Success;
            emit(
                &out,
                "pipeline",
                config,
                &tol,
                pass,
                serde_json::to_value(&report).map_err(|e| e.to_string())?,
            )
        }
        Cmd::Batch { blocks, ambient, t, seeds, mode, out } => {
            let tol = Tolerances::default();
            let seeds = parse_seeds(&seeds)?;
            let cfg = BatchConfig {
                block_sizes: blocks,
                ambient_dim: ambient,
                t_grid: t,
                seeds,
                mode: parse_mode(&mode)?,
            };
            std::fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {e}", out.display()))?;
            let (summary, reports) =
                run_batch(&cfg, &params, &tol).map_err(|e| e.to_string())?;
            for (record, report) in summary.records.iter().zip(&reports) {
                let name = format!("report_t{:e}_s{}.json", record.t, record.seed);
                let body = serde_json::to_string_pretty(report).map_err(|e| e.to_string())? + "\n";
                write_atomic(&out.join(name), &body)?;
            }
            let mut csv_text = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut csv_text);
                w.write_record(["seed", "gamma_analytic", "u_norm_ub", "S_minus_I", "bound_656", "verdict"])
                    .map_err(|e| e.to_string())?;
                for r in &summary.records {
                    w.write_record([
                        r.seed.to_string(),
                        format!("{:.17e}", r.gamma_analytic),
                        format!("{:.17e}", r.u_norm_ub),
                        format!("{:.17e}", r.s_minus_i),
                        format!("{:.17e}", r.bound_656),
                        verdict_str(r.verdict),
                    ])
                    .map_err(|e| e.to_string())?;
                }
                w.flush().map_err(|e| e.to_string())?;
            }
            write_atomic(&out.join("summary.csv"), &String::from_utf8_lossy(&csv_text))?;
            let pass = summary
                .records
                .iter()
                .all(|r| r.verdict == Verdict::Success);
            emit(
                &out.join("summary.json"),
                "batch",
                serde_json::to_value(&cfg).map_err(|e| e.to_string())?,
                &tol,
                pass,
                serde_json::to_value(&summary).map_err(|e| e.to_string())?,
            )
        }
    }
}

fn schedule_len(s: &kklab::IterationSchedule) -> usize {
    s.steps.len()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
