//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Uses every available core for the experiment runs.

use std::process::ExitCode;
use std::time::Instant;

use jsdrazor::experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, RateRow, TrueParam,
};
use jsdrazor::razor::Criterion;
use jsdrazor::validate::{check_calculus, check_divergences, check_evidence, check_razor, check_volume, CheckResult};

const SEED: u64 = 20_190_601;
const RATE_TOL: f64 = 0.07;
// saturated-model selection rates at n_o = 1000, λXY = −0.5 … 0.5
const REFERENCE_SIC: [f64; 11] = [1.00, 1.00, 1.00, 0.96, 0.41, 0.00, 0.43, 0.95, 1.00, 1.00, 1.00];
const REFERENCE_SIC_JSD: [f64; 11] = [1.00, 1.00, 1.00, 0.95, 0.39, 0.00, 0.41, 0.95, 1.00, 1.00, 1.00];
const DESK_AGREEMENT: f64 = 0.80;
const AGREEMENT_REPLICATES: usize = 5;

struct Outcome {
    passed: bool,
    detail: String,
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn checks_outcome(checks: &[CheckResult], limit_s: Option<f64>, secs: f64) -> Outcome {
    let mut passed = checks.iter().all(|c| c.passed);
    let mut parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {}/{} ok (margin {:.2e})", c.name, c.instances - c.violations, c.instances, c.margin))
        .collect();
    if let Some(l) = limit_s {
        passed &= secs < l;
        parts.push(format!("{secs:.1}s (limit {l}s)"));
    } else {
        parts.push(format!("{secs:.1}s"));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn rows<'a>(out: &'a ExperimentOutput, n: u64, c: Criterion) -> Vec<&'a RateRow> {
    out.rates.iter().filter(|r| r.n_obs == n && r.criterion == c).collect()
}

fn model_index(out: &ExperimentOutput, name: &str) -> usize {
    out.model_names.iter().position(|m| m == name).expect("model name")
}

fn fmt_rates(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

fn c1() -> Outcome {
    let (r, s) = timed(|| check_divergences(10_000, SEED).expect("divergence suite"));
    checks_outcome(&r, Some(10.0), s)
}

fn c2() -> Outcome {
    let (r, s) = timed(|| check_calculus(100, SEED).expect("calculus suite"));
    checks_outcome(&r, Some(30.0), s)
}

fn c3() -> Outcome {
    let (r, s) = timed(|| check_volume(50, SEED).expect("volume"));
    checks_outcome(&r, None, s)
}

fn c4() -> Outcome {
    let (r, s) = timed(|| check_razor(1000, SEED).expect("razor"));
    checks_outcome(&[r], None, s)
}

fn c5() -> Outcome {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Loglinear, true).expect("preset");
    cfg.criteria = vec![Criterion::Sic, Criterion::SicJsd];
    let (out, secs) = timed(|| run_experiment(&cfg, jobs()).expect("experiment 2"));
    let sat = model_index(&out, "saturated");
    let pick = |n, c| rows(&out, n, c).iter().map(|r| r.rates[sat]).collect::<Vec<f64>>();
    let (sic_b, jsd_b) = (pick(1000, Criterion::Sic), pick(1000, Criterion::SicJsd));
    let dev = |got: &[f64], want: &[f64]| got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (d_sic, d_jsd) = (dev(&sic_b, &REFERENCE_SIC), dev(&jsd_b, &REFERENCE_SIC_JSD));
    let (sic_a, jsd_a) = (pick(100, Criterion::Sic), pick(100, Criterion::SicJsd));
    let grid = jsdrazor::experiment::lambda_xy_grid();
    let mut followup = Vec::new();
    for (i, l) in grid.iter().enumerate() {
        for (c, got, want) in [(Criterion::Sic, &sic_b, &REFERENCE_SIC), (Criterion::SicJsd, &jsd_b, &REFERENCE_SIC_JSD)] {
            if (got[i] - want[i]).abs() > RATE_TOL {
                let r = large_sample_rate(*l, c);
                followup.push(format!("{} at {l:.1}: {FOLLOWUP_REPLICATES}-replicate rate {r:.3} vs reference {:.2}", c.as_str(), want[i]));
            }
        }
    }
    let small_ok = grid.iter().zip(sic_a.iter().zip(&jsd_a)).all(|(l, (s, j))| *l == 0.0 || j > s);
    Outcome {
        passed: sic_b.len() == 11 && d_sic <= RATE_TOL && d_jsd <= RATE_TOL && small_ok,
        detail: format!(
            "n=1000 SIC [{}] max dev {d_sic:.2}; SIC-JSD [{}] max dev {d_jsd:.2} (tol {RATE_TOL}); \
             n=100 SIC [{}] SIC-JSD [{}] SIC-JSD higher at all nonzero cells: {small_ok}; {secs:.0}s{}",
            fmt_rates(&sic_b),
            fmt_rates(&jsd_b),
            fmt_rates(&sic_a),
            fmt_rates(&jsd_a),
            if followup.is_empty() { String::new() } else { format!("; diagnostic: {}", followup.join(", ")) }
        ),
    }
}

const FOLLOWUP_REPLICATES: usize = 2000;

// Saturated-model rate of one λXY cell at n_o = 1000 with many replicates;
// reported for out-of-tolerance cells, does not change the verdict.
fn large_sample_rate(lambda_xy: f64, c: Criterion) -> f64 {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Loglinear, true).expect("preset");
    cfg.true_params = vec![TrueParam { model: None, theta: vec![lambda_xy] }];
    cfg.n_obs = vec![1000];
    cfg.replicates = FOLLOWUP_REPLICATES;
    cfg.criteria = vec![c];
    let out = run_experiment(&cfg, jobs()).expect("follow-up");
    out.rates[0].rates[model_index(&out, "saturated")]
}

fn c6() -> Outcome {
    let cfg = ExperimentConfig::preset(ExperimentKind::NestedMultilogit, false).expect("preset");
    let (out, secs) = timed(|| run_experiment(&cfg, jobs()).expect("experiment 1"));
    let mut passed = true;
    let mut parts = Vec::new();
    for &c in &cfg.criteria {
        let (small, large) = (rows(&out, 100, c), rows(&out, 1000, c));
        let mut cells = Vec::new();
        for (a, b) in small.iter().zip(&large) {
            let t = model_index(&out, &a.true_model);
            let ok = b.rates[t] >= a.rates[t];
            passed &= ok;
            cells.push(format!("{:.2}->{:.2}{}", a.rates[t], b.rates[t], if ok { "" } else { "!" }));
        }
        passed &= small.len() == cfg.true_params.len() && large.len() == small.len();
        parts.push(format!("{}: {}", c.as_str(), cells.join(" ")));
    }
    Outcome { passed, detail: format!("true-model rate n=100->1000, {} replicates; {}; {secs:.0}s", cfg.replicates, parts.join("; ")) }
}

fn c7() -> Outcome {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Loglinear, false).expect("preset");
    cfg.n_obs = vec![1000];
    cfg.replicates = AGREEMENT_REPLICATES;
    cfg.criteria = vec![Criterion::SicJsd, Criterion::SicBolfi];
    let (out, secs) = timed(|| run_experiment(&cfg, jobs()).expect("experiment 2 bolfi"));
    let jsd: Vec<_> = out.selections.iter().filter(|s| s.criterion == Criterion::SicJsd).collect();
    let bolfi: Vec<_> = out.selections.iter().filter(|s| s.criterion == Criterion::SicBolfi).collect();
    let mut agree = 0;
    for a in &jsd {
        let b = bolfi.iter().find(|b| b.condition == a.condition && b.replicate == a.replicate).expect("paired row");
        agree += usize::from(a.selected == b.selected);
    }
    let frac = agree as f64 / jsd.len() as f64;
    Outcome {
        passed: !jsd.is_empty() && frac >= DESK_AGREEMENT,
        detail: format!(
            "budget {}: agreement {agree}/{} = {frac:.3} (need {DESK_AGREEMENT}); budget 2000 not run; {secs:.0}s",
            cfg.bolfi.budget,
            jsd.len()
        ),
    }
}

fn c8() -> Outcome {
    let (r, s) = timed(|| check_evidence(100, SEED).expect("evidence"));
    checks_outcome(&r, None, s)
}

fn c9() -> Outcome {
    let cfg = ExperimentConfig::preset(ExperimentKind::Nfds, false).expect("preset");
    let (out, secs) = timed(|| run_experiment(&cfg, jobs()).expect("nfds"));
    let mut passed = true;
    let mut parts = Vec::new();
    for r in rows(&out, 500, Criterion::SicBolfi) {
        let t = model_index(&out, &r.true_model);
        if r.true_model != "heterogeneous" {
            let ok = r.rates[t] > 0.5;
            passed &= ok;
            parts.push(format!("{} data: true-model rate {:.2} [{}]", r.true_model, r.rates[t], fmt_rates(&r.rates)));
        } else {
            let neutral = model_index(&out, "neutral");
            let ok = r.median_objectives[t] < r.median_objectives[neutral];
            passed &= ok;
            parts.push(format!(
                "heterogeneous data: median E[JSD] heterogeneous {:.5} vs neutral {:.5}",
                r.median_objectives[t], r.median_objectives[neutral]
            ));
        }
    }
    passed &= parts.len() == 3;
    Outcome { passed, detail: format!("{} replicates; {}; {secs:.0}s", cfg.replicates, parts.join("; ")) }
}

fn csvs(cfg: &ExperimentConfig, jobs: usize) -> Vec<u8> {
    let out = run_experiment(cfg, jobs).expect("run");
    let dir = tempfile::tempdir().expect("tempdir");
    out.write_to(dir.path()).expect("write");
    let mut bytes = std::fs::read(dir.path().join("selections.csv")).expect("selections");
    bytes.extend(std::fs::read(dir.path().join("rates.csv")).expect("rates"));
    bytes
}

fn c10() -> Outcome {
    let mut ll = ExperimentConfig::preset(ExperimentKind::Loglinear, false).expect("preset");
    ll.true_params = vec![TrueParam { model: None, theta: vec![0.0] }, TrueParam { model: None, theta: vec![0.3] }];
    ll.replicates = 2;
    ll.bolfi.budget = 40;
    let mut nf = ExperimentConfig::preset(ExperimentKind::Nfds, false).expect("preset");
    nf.replicates = 1;
    nf.bolfi.budget = 25;
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, cfg) in [("loglinear", &ll), ("nfds", &nf)] {
        let a = csvs(cfg, 1);
        let same = a == csvs(cfg, 1) && a == csvs(cfg, jobs().max(2));
        passed &= same;
        parts.push(format!("{name}: {} bytes identical across 3 runs: {same}", a.len()));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("divergence properties", c1),
        ("calculus", c2),
        ("volume integral", c3),
        ("razor inequality", c4),
        ("experiment 2 reproduction", c5),
        ("experiment 1 trend", c6),
        ("BOLFI fidelity", c7),
        ("evidence oracles", c8),
        ("NFDS self-consistency", c9),
        ("determinism", c10),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let o = f();
        failed += usize::from(!o.passed);
        println!("criterion {k:>2} {}: {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
