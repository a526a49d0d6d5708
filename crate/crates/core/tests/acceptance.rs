//! Acceptance criteria, one line per criterion. Runs as a plain binary so the
//! verdict lines are always printed; exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use limitrd::estimators::{estimate_event_study, miscoding_rd_test, rd_gap, BootstrapOptions};
use limitrd::fe::{fit_with_fixed_effects, twoway_cluster_vcov, wls_fit, AbsorbOptions, ClusterAssignment};
use limitrd::montecarlo::{logistic_cdf, run_study, sample_size_sweep, McDgpParams};
use limitrd::synth::{
    generate_panel, inject_anomalies, AnomalySpec, DummyClass, DummyCorruption, WrongYearRule,
};
use limitrd::validator::{
    check_event_year_consistency, check_time_dummy_partition, validate_panel, ValidateOptions,
    RULE_MULTIPLE_DUMMIES, RULE_NO_DUMMY, RULE_WRONG_YEAR,
};
use limitrd::{is_conforming, round_hmda, tau_name, ClassificationScheme, KernelSpec, ModelSpec, Outcome};
use rand::Rng;

use ClassificationScheme::*;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Verdict {
    let elapsed = start.elapsed();
    let detail = format!(
        "{detail}; {:.1}s (limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    check(elapsed < limit, detail)
}

const SCENARIOS: [(&str, f64); 2] = [("clay", 424.1), ("collier", 450.8)];

fn logistic_plim() -> Verdict {
    let start = Instant::now();
    let s = 2000;
    let plim = 1.0 / (1.0 + (-0.3f64).exp()) - 1.0 / (1.0 + (-0.2f64).exp());
    if (plim - 0.024609).abs() > 5e-7 {
        return Err(format!("closed form {plim} is not 0.024609"));
    }
    let params = McDgpParams::new(1000, 424.1, 20_240_101);
    if params.plim_beta() != logistic_cdf(0.3) - logistic_cdf(0.2) {
        return Err("plim helper disagrees with the logistic cdf".into());
    }
    let study = run_study(&params, s).map_err(|e| e.to_string())?;
    let sm = study.summary(TrueAmount);
    let bound = 3.0 * sm.sd_beta / (s as f64).sqrt();
    let dev = (sm.mean_beta - plim).abs();
    if dev >= bound {
        return Err(format!("|mean - plim| = {dev:.6} >= {bound:.6}"));
    }
    within_time(
        start,
        Duration::from_secs(60),
        format!(
            "mean {:.6}, plim {plim:.6}, |dev| {dev:.6} < {bound:.6}",
            sm.mean_beta
        ),
    )
}

fn scheme_ordering() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, limit) in SCENARIOS {
        let study = run_study(&McDgpParams::new(1000, limit, 7), 2000).map_err(|e| e.to_string())?;
        let (h, ll) = (study.summary(ReportedAmount), study.summary(RoundedLimit));
        ok &= ll.mean_abs_dev > h.mean_abs_dev && ll.sd_dev > h.sd_dev;
        parts.push(format!(
            "{name}: mad LL {:.5} vs H {:.5}, sd LL {:.5} vs H {:.5}",
            ll.mean_abs_dev, h.mean_abs_dev, ll.sd_dev, h.sd_dev
        ));
    }
    let detail = parts.join("; ");
    if !ok {
        return Err(detail);
    }
    within_time(start, Duration::from_secs(120), detail)
}

fn sample_size_dominance() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, limit) in SCENARIOS {
        let rows = sample_size_sweep(&McDgpParams::new(0, limit, 11), &[50, 500, 2000], 1000)
            .map_err(|e| e.to_string())?;
        for n in [50, 500, 2000] {
            let at = |s| rows.iter().find(|r| r.n == n && r.scheme == s).unwrap();
            let (h, ll) = (at(ReportedAmount), at(RoundedLimit));
            let dominates = ll.mean_abs_dev > h.mean_abs_dev && ll.sd_dev > h.sd_dev;
            ok &= dominates;
            if !dominates {
                parts.push(format!(
                    "{name} n={n}: LL {:?} vs H {:?}",
                    (ll.mean_abs_dev, ll.sd_dev),
                    (h.mean_abs_dev, h.sd_dev)
                ));
            }
        }
    }
    if parts.is_empty() {
        parts.push("LL above H in mean |dev| and sd(dev) at n = 50, 500, 2000 for both limits".into());
    }
    check(ok, parts.join("; "))
}

fn dominance() -> Verdict {
    let mut r = rng(4);
    let mut violations = 0usize;
    for i in 0..1_000_000u32 {
        let base = r.random_range(100..1000) as f64;
        let limit = if i % 10 == 0 {
            base
        } else {
            base + r.random_range(0.0..1.0)
        };
        let true_amount = limit + r.random_range(-3.0..3.0);
        let reported = round_hmda(true_amount * 1000.0).map_err(|e| e.to_string())?;
        let c = |s| is_conforming(Some(true_amount), reported, limit, s).unwrap();
        if !c(RoundedLimit) && (c(TrueAmount) || c(ReportedAmount)) {
            violations += 1;
        }
    }
    // Both directions of the reported/true disagreement.
    let h_above = !is_conforming(Some(424.3), 424, 424.1, TrueAmount).unwrap()
        && is_conforming(Some(424.3), 424, 424.1, ReportedAmount).unwrap();
    let t_above = is_conforming(Some(450.6), 451, 450.8, TrueAmount).unwrap()
        && !is_conforming(Some(450.6), 451, 450.8, ReportedAmount).unwrap();
    check(
        violations == 0 && h_above && t_above,
        format!(
            "{violations} violations in 10^6 records; C^H > C* at (424.3, 424.1): {h_above}; C* > C^H at (450.6, 450.8): {t_above}"
        ),
    )
}

fn rounding_exact() -> Verdict {
    let cases = [(152_500.0, 153), (152_499.0, 152), (95_000.0, 95)];
    let got: Vec<u32> = cases.iter().map(|(d, _)| round_hmda(*d).unwrap()).collect();
    let ok = cases.iter().zip(&got).all(|((_, want), g)| want == g);
    check(
        ok,
        format!("152500 -> {}, 152499 -> {}, 95000 -> {}", got[0], got[1], got[2]),
    )
}

fn fwl_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = fe_instance(seed, 500);
        let fit = fit_with_fixed_effects(
            &inst.design(),
            &inst.y,
            &inst.groups(),
            &inst.weights(),
            &inst.clusters(),
            &AbsorbOptions::default(),
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        if fit.coefficients.len() != inst.columns.len() {
            return Err(format!(
                "seed {seed}: {} coefficients dropped",
                inst.columns.len() - fit.coefficients.len()
            ));
        }
        let oracle = dense_dummy_fit(&inst);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        worst < 1e-8,
        format!("max |absorbed - dummy| over 50 instances = {worst:.2e}"),
    )
}

fn clustering_oracle() -> Verdict {
    let mut worst_twoway: f64 = 0.0;
    let mut worst_hc0: f64 = 0.0;
    for seed in 0..50 {
        let inst = fe_instance(1000 + seed, 60);
        let design = inst.design();
        let w = inst.weights();
        let fit = wls_fit(&design, &inst.y, &w).map_err(|e| e.to_string())?;
        let v =
            twoway_cluster_vcov(&design, &fit.residuals, &w, &inst.clusters()).map_err(|e| e.to_string())?;
        let oracle = brute_force_twoway(&inst.columns, &fit.residuals, &inst.w, &inst.a, &inst.b);
        worst_twoway = worst_twoway.max(max_abs_diff(&v.raw, &oracle));

        let n = inst.n() as u32;
        let singles = ClusterAssignment::from_keys(("row", "row_again"), 0..n, (0..n).map(|i| i + 7))
            .map_err(|e| e.to_string())?;
        let v = twoway_cluster_vcov(&design, &fit.residuals, &w, &singles).map_err(|e| e.to_string())?;
        worst_hc0 = worst_hc0.max(max_abs_diff(&v.raw, &hc0(&inst.columns, &fit.residuals, &inst.w)));
    }
    check(
        worst_twoway <= 1e-12 && worst_hc0 <= 1e-12,
        format!("max diff vs brute force {worst_twoway:.2e}; singleton clusters vs HC0 {worst_hc0:.2e}"),
    )
}

fn weight_scale() -> Verdict {
    let root = |v: f64| v.signum() * v.abs().sqrt();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let inst = fe_instance(2000 + seed, 400);
        let fit = |c: f64| {
            fit_with_fixed_effects(
                &inst.design(),
                &inst.y,
                &inst.groups(),
                &inst.weights().scaled(c).unwrap(),
                &inst.clusters(),
                &AbsorbOptions::default(),
            )
            .unwrap()
        };
        let base = fit(1.0);
        for c in [1e-3, 1.0, 1e3] {
            let f = fit(c);
            for i in 0..base.coefficients.len() {
                worst = worst.max((f.coefficients[i] - base.coefficients[i]).abs());
                worst = worst.max((root(f.vcov.raw[i][i]) - root(base.vcov.raw[i][i])).abs());
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("max change in coefficients and clustered s.e. = {worst:.2e}"),
    )
}

const PLANTED: [(i32, f64); 2] = [(1, 0.03), (3, 0.06)];
const Z95: f64 = 1.959_963_984_540_054;

fn planted_recovery() -> Verdict {
    let start = Instant::now();
    let spec = ModelSpec::new(Outcome::Approved);
    let bandwidths = [0.01, 0.05];
    let mut covered: BTreeMap<(usize, i32), usize> = BTreeMap::new();
    let mut null_clean = [0usize; 2];
    let mut rows = 0usize;
    for seed in 0..20u64 {
        let planted = generate_panel(&event_study_config(seed, &PLANTED)).map_err(|e| e.to_string())?;
        let null = generate_panel(&event_study_config(500 + seed, &[])).map_err(|e| e.to_string())?;
        rows = planted.len();
        for (k, &h) in bandwidths.iter().enumerate() {
            let est =
                estimate_event_study(&planted, &spec, &KernelSpec::gaussian(h)).map_err(|e| e.to_string())?;
            for (t, truth) in PLANTED {
                let b = est.get(&tau_name(t)).ok_or("missing planted coefficient")?;
                let se = est.std_error(&tau_name(t)).unwrap();
                if (b - truth).abs() <= Z95 * se {
                    *covered.entry((k, t)).or_default() += 1;
                }
            }
            let est =
                estimate_event_study(&null, &spec, &KernelSpec::gaussian(h)).map_err(|e| e.to_string())?;
            let clean = spec.event_times().into_iter().all(|t| {
                let name = tau_name(t);
                match (est.get(&name), est.std_error(&name)) {
                    (Some(b), Some(se)) => b.abs() < 3.0 * se,
                    _ => false,
                }
            });
            null_clean[k] += clean as usize;
        }
    }
    let mut ok = true;
    let mut parts = vec![format!("{rows} rows per panel")];
    for (k, h) in bandwidths.iter().enumerate() {
        for (t, _) in PLANTED {
            let c = covered.get(&(k, t)).copied().unwrap_or(0);
            ok &= c >= 18;
            parts.push(format!("h={h} tau_{t} covered {c}/20"));
        }
        ok &= null_clean[k] >= 18;
        parts.push(format!("h={h} null all |tau|<3se {}/20", null_clean[k]));
    }
    let detail = parts.join(", ");
    if !ok {
        return Err(detail);
    }
    within_time(start, Duration::from_secs(300), detail)
}

fn rd_gap_recovery() -> Verdict {
    let spec = ModelSpec::new(Outcome::Approved);
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let panel = generate_panel(&rd_config(seed, &PLANTED)).map_err(|e| e.to_string())?;
        let gaps = rd_gap(&panel, &spec, 0.01, None).map_err(|e| e.to_string())?;
        let g = gaps.iter().find(|g| g.time == 3).ok_or("no gap at t=3")?;
        ok &= (g.tau_rd - 0.06).abs() <= 0.015;
        parts.push(format!("{:.4}", g.tau_rd));
    }
    let mut detail = format!("tau_rd(3) on five 100k-row panels: {}", parts.join(", "));
    let null = generate_panel(&rd_config(99, &[])).map_err(|e| e.to_string())?;
    let gaps = rd_gap(&null, &spec, 0.01, Some(BootstrapOptions::default())).map_err(|e| e.to_string())?;
    let worst = gaps
        .iter()
        .map(|g| g.tau_rd.abs() / g.std_error.unwrap_or(f64::NAN))
        .fold(0.0f64, |a, z| if z.is_nan() { f64::INFINITY } else { a.max(z) });
    ok &= gaps.len() == spec.event_times().len() && worst < 3.0;
    detail.push_str(&format!(
        "; null max |tau_rd|/boot se = {worst:.2} over {} gaps",
        gaps.len()
    ));
    check(ok, detail)
}

fn validator_closure() -> Verdict {
    let mut parts = Vec::new();
    let (base, spec) = histogram_fixture();
    let corrupt = inject_anomalies(&base, &spec).map_err(|e| e.to_string())?;
    let audit = check_time_dummy_partition(&corrupt, 4, -1);
    let expected: BTreeMap<usize, usize> = HISTOGRAM_TENTH.into_iter().collect();
    let report = validate_panel(&corrupt, &ValidateOptions::default()).map_err(|e| e.to_string())?;
    let hist_ok = audit.histogram == expected
        && report.finding(RULE_NO_DUMMY).map(|f| f.count) == Some(HISTOGRAM_DROPPED)
        && report.finding(RULE_MULTIPLE_DUMMIES).map(|f| f.count) == Some(621);
    parts.push(format!("histogram {:?}", audit.histogram));

    let (config, spec) = katrina_fixture();
    let panel = inject_anomalies(&generate_panel(&config).map_err(|e| e.to_string())?, &spec)
        .map_err(|e| e.to_string())?;
    let years = check_event_year_consistency(&panel, 4).map_err(|e| e.to_string())?;
    let k = years
        .events
        .iter()
        .find(|e| e.event_id == "katrina")
        .ok_or("no katrina row")?;
    let report = validate_panel(&panel, &ValidateOptions::default()).map_err(|e| e.to_string())?;
    let katrina_ok = k.n_wrong == 590
        && k.wrong_share == Some(0.295)
        && report.finding(RULE_WRONG_YEAR).map(|f| f.count) == Some(590);
    parts.push(format!(
        "katrina wrong share {:?} ({} of {})",
        k.wrong_share, k.n_wrong, k.n_records
    ));

    let base = generate_panel(&small_config(8, 100, 100)).map_err(|e| e.to_string())?;
    let band = (-0.05, 0.05);
    let spec = AnomalySpec {
        wrong_year_rules: vec![
            WrongYearRule {
                event_id: "ev01".into(),
                wrong_year: 1999,
                share: 0.2,
                band: None,
            },
            WrongYearRule {
                event_id: "ev04".into(),
                wrong_year: 2000,
                share: 0.05,
                band: Some(band),
            },
        ],
        dummy_corruptions: vec![
            DummyCorruption {
                class: DummyClass::DropAll,
                count: 37,
            },
            DummyCorruption {
                class: DummyClass::DuplicatePair,
                count: 21,
            },
            DummyCorruption {
                class: DummyClass::Triple,
                count: 4,
            },
        ],
        seed: 9,
        ..AnomalySpec::default()
    };
    let panel = inject_anomalies(&base, &spec).map_err(|e| e.to_string())?;
    let pool = |ev: &str, band: Option<(f64, f64)>| {
        base.records()
            .iter()
            .filter(|r| r.event_id.as_deref() == Some(ev))
            .filter(|r| band.is_none_or(|(lo, hi)| (lo..hi).contains(&r.log_distance().unwrap())))
            .count() as f64
    };
    let wrong =
        (0.2 * pool("ev01", None)).round() as usize + (0.05 * pool("ev04", Some(band))).round() as usize;
    let outside = panel
        .records()
        .iter()
        .filter(|r| r.treated && r.time_rel.is_some_and(|t| t.abs() > 4))
        .count();
    let report = validate_panel(&panel, &ValidateOptions::default()).map_err(|e| e.to_string())?;
    let count = |rule| report.finding(rule).map(|f| f.count);
    let kinds_ok = count(RULE_WRONG_YEAR) == Some(wrong)
        && count(RULE_NO_DUMMY) == Some(37 + outside)
        && count(RULE_MULTIPLE_DUMMIES) == Some(25)
        && report.histogram.get(&3) == Some(&4);
    parts.push(format!(
        "mixed injection: wrong year {:?}/{wrong}, no dummy {:?}/{}, multiple {:?}/25",
        count(RULE_WRONG_YEAR),
        count(RULE_NO_DUMMY),
        37 + outside,
        count(RULE_MULTIPLE_DUMMIES)
    ));
    check(hist_ok && katrina_ok && kinds_ok, parts.join("; "))
}

fn miscoding_test() -> Verdict {
    let panel = generate_panel(&small_config(31, 200, 250)).map_err(|e| e.to_string())?;
    let mut r = rng(31);
    let flags: Vec<bool> = panel
        .records()
        .iter()
        .map(|rec| r.random::<f64>() < 0.10 + if rec.below_limit() { 0.05 } else { 0.0 })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for order in 0..=3 {
        let est = miscoding_rd_test(&panel, &flags, order).map_err(|e| e.to_string())?;
        let b = est.get("below_limit").ok_or("missing below_limit")?;
        let se = est.std_error("below_limit").unwrap();
        ok &= (b - 0.05).abs() <= 2.0 * se && b > 0.0 && b / se > Z95;
        parts.push(format!("p={order}: {b:.4} (se {se:.4})"));
    }
    check(ok, parts.join(", "))
}

fn run_cli(args: &[&str], threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_limitrd"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Verdict {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = rd_config(12, &PLANTED);
    config.n_units = 40;
    config.records_per_unit = 250;
    let cfg = root.path().join("synth.json");
    fs::write(&cfg, serde_json::to_string(&config).unwrap()).map_err(|e| e.to_string())?;
    let mc = root.path().join("mc.json");
    fs::write(
        &mc,
        r#"{"n": 500, "replications": 200, "seed": 9, "n_grid": [50, 500], "sweep_replications": 50}"#,
    )
    .map_err(|e| e.to_string())?;

    let run = |tag: &str, threads: usize| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let dir = root.path().join(tag);
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let p = |f: &str| dir.join(f).to_str().unwrap().to_string();
        let (panel, cal) = (p("panel.csv"), p("calendar.json"));
        run_cli(
            &[
                "synth",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                &panel,
                "--calendar-out",
                &cal,
            ],
            threads,
        )?;
        let io = ["--panel", panel.as_str(), "--calendar", cal.as_str()];
        run_cli(
            &[
                &["estimate"],
                &io[..],
                &["--out", &p("estimates.csv"), "--json", &p("estimates.json")],
            ]
            .concat(),
            threads,
        )?;
        run_cli(
            &[
                &["rd-gap"],
                &io[..],
                &["--bootstrap", "30", "--seed", "2", "--out", &p("gaps.csv")],
            ]
            .concat(),
            threads,
        )?;
        run_cli(
            &[&["curve"], &io[..], &["--points", "8", "--out", &p("curve.csv")]].concat(),
            threads,
        )?;
        run_cli(
            &["mc", "--config", mc.to_str().unwrap(), "--out-dir", &p("mc")],
            threads,
        )?;
        let mut files = BTreeMap::new();
        for entry in walk(&dir) {
            let key = entry.strip_prefix(&dir).unwrap().display().to_string();
            files.insert(key, fs::read(&entry).map_err(|e| e.to_string())?);
        }
        Ok(files)
    };
    let a = run("one_thread", 1)?;
    let b = run("four_threads", 4)?;
    let c = run("four_threads_again", 4)?;
    let differing: Vec<&String> = a
        .keys()
        .filter(|k| a.get(*k) != b.get(*k) || b.get(*k) != c.get(*k))
        .collect();
    check(
        differing.is_empty() && a.len() == b.len() && a.len() >= 10,
        format!(
            "{} output files compared across 1/4/4 threads; differing: {differing:?}",
            a.len()
        ),
    )
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("logistic plim", logistic_plim),
        ("scheme ordering", scheme_ordering),
        ("sample-size sweep", sample_size_dominance),
        ("conforming dominance", dominance),
        ("rounding bit-exactness", rounding_exact),
        ("FWL oracle", fwl_oracle),
        ("two-way clustering oracle", clustering_oracle),
        ("weight-scale invariance", weight_scale),
        ("planted-effect recovery", planted_recovery),
        ("RD gap", rd_gap_recovery),
        ("validator closure", validator_closure),
        ("miscoding RD test", miscoding_test),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|p| id.contains(p.as_str()) || name.contains(p.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {id} PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
