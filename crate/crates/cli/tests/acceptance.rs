//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use parreg_core::gauss::{sample_covariance, GaussianMeasure};
use parreg_core::Matrix;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_parreg");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    code: i32,
    out: PathBuf,
    _dir: tempfile::TempDir,
}

fn run(command: &str, config: &str, extra: &[&str]) -> Result<Run, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_path_buf();
    let status = Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(configs().join(config))
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(Run {
        code: status.status.code().unwrap_or(-1),
        out,
        _dir: dir,
    })
}

fn json(run: &Run, name: &str) -> Result<Value, String> {
    let text = std::fs::read_to_string(run.out.join(name)).map_err(|e| format!("{name}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
}

fn num(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("expected a number, got {v}"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Independent oracle for the heat-case `L^2` multiplier norm
/// `sup |xi_i xi_j| / |xi|^2`, by scanning directions in the (i, j) plane.
fn multiplier_sup(diagonal: bool) -> f64 {
    (0..=20000)
        .map(|k| {
            let th = std::f64::consts::PI * k as f64 / 20000.0;
            let (c, s) = (th.cos(), th.sin());
            if diagonal {
                c * c
            } else {
                (c * s).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Result<String, String> {
    let r = run("certify", "certify-exa.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "certify.json")?;
    let lambda = num(&v["lambda"])?;
    ensure((lambda - 0.75).abs() <= 1e-6, format!("lambda = {lambda}"))?;
    Ok(format!("lambda = {lambda}"))
}

fn check_family(config: &str) -> Result<Vec<(usize, usize, f64)>, String> {
    let r = run("estimate", config, &[])?;
    ensure(r.code == 0, format!("{config}: exit code {}", r.code))?;
    let v = json(&r, "estimate.json")?;
    let reports = v["reports"].as_array().ok_or("no reports")?;
    let mut sups: Vec<(usize, usize, f64)> = Vec::new();
    for rep in reports {
        let i = rep["i"].as_u64().ok_or("bad i")? as usize;
        let j = rep["j"].as_u64().ok_or("bad j")? as usize;
        let ratio = num(&rep["ratio"])?;
        let bound = multiplier_sup(i == j);
        ensure(
            ratio <= bound * 1.05,
            format!("{config}: ratio {ratio} for ({i},{j}) exceeds {}", bound * 1.05),
        )?;
        match sups.iter_mut().find(|(a, b, _)| (*a, *b) == (i, j)) {
            Some(e) => e.2 = e.2.max(ratio),
            None => sups.push((i, j, ratio)),
        }
    }
    ensure(reports.len() >= 16, format!("{config}: only {} reports", reports.len()))?;
    Ok(sups)
}

fn criterion_2() -> Result<String, String> {
    let d1 = check_family("estimate-heat-1d.json")?;
    let d2 = check_family("estimate-heat-2d.json")?;
    ensure(d1.len() == 1 && d2.len() == 3, "missing pairs")?;
    let r = run("estimate", "estimate-near-extremal.json", &[])?;
    ensure(r.code == 0, format!("near-extremal: exit code {}", r.code))?;
    let v = json(&r, "estimate.json")?;
    let best = num(&v["pairs"][0]["sup_ratio"])?;
    let target = 0.85 * multiplier_sup(false);
    ensure(best >= target, format!("near-extremal ratio {best} < {target}"))?;
    ensure(best <= 1.05 * multiplier_sup(false), format!("near-extremal ratio {best} above bound"))?;
    let fmt = |s: &[(usize, usize, f64)]| {
        s.iter()
            .map(|(i, j, r)| format!("({i},{j}) {r:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(format!("d=1: {}; d=2: {}; near-extremal {best:.4}", fmt(&d1), fmt(&d2)))
}

fn criterion_3() -> Result<String, String> {
    let r = run("sweep-lambda", "sweep-heat.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "sweep-lambda.json")?;
    let rows = v["rows"].as_array().ok_or("no rows")?;
    let mut scaled = Vec::new();
    let mut lambdas = Vec::new();
    for row in rows {
        let lambda = num(&row["lambda"])?;
        lambdas.push(lambda);
        scaled.push(lambda * num(&row["sup_ratio"])?);
    }
    ensure(lambdas == [0.25, 1.0, 4.0], format!("lambdas {lambdas:?}"))?;
    let reference = scaled[1];
    let dev = scaled
        .iter()
        .map(|s| (s - reference).abs() / reference)
        .fold(0.0, f64::max);
    ensure(dev <= 0.02, format!("max deviation {dev}"))?;
    Ok(format!("lambda N(lambda) = {reference:.6}, max deviation {dev:.2e}"))
}

fn criterion_4() -> Result<String, String> {
    let r = run("solve", "solve-heat-triangle.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "solve.json")?;
    ensure(v["samples"].as_u64() == Some(100_000), "sample count")?;
    let probes = v["probes"].as_array().ok_or("no probes")?;
    ensure(probes.len() == 5, "five probes")?;
    let (mut worst_rel, mut worst_z) = (0.0f64, 0.0f64);
    for p in probes {
        let spectral = num(&p["spectral"])?;
        let oracle = num(&p["space_oracle"])?;
        let mc = num(&p["mc_estimate"])?;
        let se = num(&p["mc_stderr"])?;
        let rel = (spectral - oracle).abs() / oracle.abs();
        let z = (mc - spectral).abs() / se;
        worst_rel = worst_rel.max(rel);
        worst_z = worst_z.max(z);
    }
    ensure(worst_rel <= 1e-3, format!("spectral vs oracle {worst_rel}"))?;
    ensure(worst_z <= 3.0, format!("MC z-score {worst_z}"))?;
    Ok(format!("max rel diff {worst_rel:.2e}, max MC z {worst_z:.3}"))
}

fn criterion_5() -> Result<String, String> {
    let r = run("mc-validate", "mc-law.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "mc-validate.json")?;
    let n = v["n"].as_u64().ok_or("no n")? as f64;
    ensure(n == 1e5, "sample count")?;
    // Closed form for F(s) = diag(1, s) on [0, 1].
    let gamma = [[1.0, 0.0], [0.0, 1.0 / 3.0]];
    let target = [[2.0 * gamma[0][0], 0.0], [0.0, 2.0 * gamma[1][1]]];
    let mut max_z = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let est = num(&v["estimate"][a][b])?;
            let se = ((target[a][a] * target[b][b] + target[a][b] * target[a][b]) / n).sqrt();
            max_z = max_z.max((est - target[a][b]).abs() / se);
        }
    }
    ensure(max_z <= 3.0, format!("max z {max_z}"))?;
    let checks = v["char_checks"].as_array().ok_or("no char checks")?;
    ensure(checks.len() == 5, "five probes")?;
    let mut max_dev = 0.0f64;
    for c in checks {
        let xi = [num(&c["xi"][0])?, num(&c["xi"][1])?];
        let phi = (-(gamma[0][0] * xi[0] * xi[0] + gamma[1][1] * xi[1] * xi[1])).exp();
        max_dev = max_dev.max((num(&c["estimate"])? - phi).abs());
    }
    let tol = 3.0 / n.sqrt();
    ensure(max_dev <= tol, format!("char deviation {max_dev} > {tol}"))?;
    Ok(format!("max z {max_z:.3}, char deviation {max_dev:.2e} <= {tol:.2e}"))
}

fn criterion_6() -> Result<String, String> {
    let q = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let r = Matrix::from_row_slice(2, 2, &[0.25, -0.125, -0.125, 0.75]);
    let gq = GaussianMeasure::new(q.clone()).map_err(|e| e.to_string())?;
    let gr = GaussianMeasure::new(r.clone()).map_err(|e| e.to_string())?;
    let conv = gq.convolve(&gr).map_err(|e| e.to_string())?;
    let sum = &q + &r;
    ensure(conv.q() == &sum, format!("convolution parameter {} != {}", conv.q(), sum))?;
    // The characteristic functions multiply.
    for xi in [[0.3, -0.7], [1.1, 0.4], [-0.2, 0.0]] {
        let lhs = conv.char_fn(&xi);
        let rhs = gq.char_fn(&xi) * gr.char_fn(&xi);
        ensure((lhs - rhs).abs() <= 1e-14, format!("char fn mismatch at {xi:?}"))?;
    }
    let n = 100_000;
    let samples = gq.sample(n, 2024);
    let s = sample_covariance(&samples);
    let cov = &q * 2.0;
    let mut max_z = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let se = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)] * cov[(a, b)]) / n as f64).sqrt();
            max_z = max_z.max((s[(a, b)] - cov[(a, b)]).abs() / se);
        }
    }
    ensure(max_z <= 3.0, format!("sampling z {max_z}"))?;
    Ok(format!("convolution exact, sampling max z {max_z:.3}"))
}

fn criterion_7() -> Result<String, String> {
    let r = run("ou-solve", "ou-exa1.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "ou-solve.json")?;
    ensure(v["invariance"] == Value::Bool(true), "invariance")?;
    let base = num(&v["runs"][0]["relative_residual"])?;
    let fine = num(&v["runs"][1]["relative_residual"])?;
    ensure(base <= 2e-2, format!("residual {base}"))?;
    ensure(fine <= 0.5 * base, format!("refined residual {fine} vs {base}"))?;
    let ko = run("ou-solve", "ou-ko.json", &[])?;
    ensure(ko.code == 2, format!("remark-ko exit code {}", ko.code))?;
    let kv = json(&ko, "ou-solve.json")?;
    ensure(kv["hypothesis_violated"] == Value::Bool(true), "remark-ko not rejected")?;
    Ok(format!("residual {base:.2e} -> {fine:.2e}; remark-ko rejected"))
}

fn criterion_8() -> Result<String, String> {
    let r = run("elliptic-check", "elliptic-1d.json", &[])?;
    ensure(r.code == 0, format!("exit code {}", r.code))?;
    let v = json(&r, "elliptic-check.json")?;
    let pair = &v["pairs"][0];
    let base = num(&pair["base"]["ratio"])?;
    ensure(base.is_finite() && base > 0.0, format!("ratio {base}"))?;
    let fine = num(&pair["refined_ratio"])?;
    let change = (fine - base).abs() / base;
    ensure(change <= 0.05, format!("refinement change {change}"))?;
    let mut worst = 0.0f64;
    for row in pair["scaling"].as_array().ok_or("no scaling rows")? {
        let lambda = num(&row["lambda"])?;
        let ratio = num(&row["ratio"])?;
        worst = worst.max((lambda * ratio - base).abs() / base);
    }
    ensure(worst <= 0.05, format!("scaling deviation {worst}"))?;
    Ok(format!("ratio {base:.6}, refinement change {change:.2e}, scaling deviation {worst:.2e}"))
}

fn outputs(run: &Run) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&run.out)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let bytes = std::fs::read(e.path()).unwrap_or_default();
            (name, bytes)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn criterion_9() -> Result<String, String> {
    let cases = [
        ("estimate", "estimate-heat-1d.json"),
        ("sweep-lambda", "sweep-heat.json"),
        ("solve", "solve-heat-triangle.json"),
        ("mc-validate", "mc-law.json"),
    ];
    for (cmd, cfg) in cases {
        let a = run(cmd, cfg, &["--threads", "4"])?;
        let b = run(cmd, cfg, &["--threads", "4"])?;
        let c = run(cmd, cfg, &["--threads", "1"])?;
        let (oa, ob, oc) = (outputs(&a)?, outputs(&b)?, outputs(&c)?);
        ensure(!oa.is_empty() && oa.iter().any(|(n, _)| n.ends_with(".json")), format!("{cmd}: no JSON"))?;
        ensure(oa == ob, format!("{cmd}: repeated runs differ"))?;
        ensure(oa == oc, format!("{cmd}: --threads 1 vs 4 differ"))?;
    }
    Ok(format!("{} seeded commands byte-identical", cases.len()))
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let suite: [(usize, &str, Criterion, Duration); 9] = [
        (1, "parabolicity certificate", criterion_1, Duration::from_secs(1)),
        (2, "L2 sharp constants", criterion_2, Duration::from_secs(120)),
        (3, "lambda scaling", criterion_3, Duration::from_secs(180)),
        (4, "oracle triangle", criterion_4, Duration::from_secs(120)),
        (5, "stochastic law", criterion_5, Duration::from_secs(60)),
        (6, "Gaussian algebra", criterion_6, Duration::from_secs(30)),
        (7, "OU reduction", criterion_7, Duration::from_secs(180)),
        (8, "elliptic check", criterion_8, Duration::from_secs(60)),
        (9, "determinism", criterion_9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in suite {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|msg| {
            if elapsed <= limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; runtime {:.1}s over {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
        });
        match result {
            Ok(msg) => println!("PASS criterion {id} ({name}): {msg} [{:.1}s]", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {msg} [{:.1}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
