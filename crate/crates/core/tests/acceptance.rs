//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use energy_calib::bench::{parse_methods, run_bench, BenchConfig, BenchMethod, BenchReport};
use energy_calib::calibrators::{
    Calibrator, CalibratorKind, EnergyCalibratorParams, TemperatureParams,
};
use energy_calib::metrics::{aupr, auroc, bin_predictions, ece, mce, sce, OodScores, Positive};
use energy_calib::scores::{argmax, energy, nll_identity_residual};
use energy_calib::synthetic::{generate, severity_suite, ShiftKind, ShiftScenario, SplitMix64};
use energy_calib::{GaussianPdf, LogitDataset, Prediction};

const ORACLE_TOL: f64 = 1e-12;
const REDUCTION_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-9;
const ECE_SETS: usize = 500;
const ECE_MAX_N: usize = 64;
const ECE_MAX_K: usize = 5;
const ECE_BINS: [usize; 3] = [1, 5, 15];
const OOD_SETS: usize = 200;
const OOD_MAX_N: usize = 200;
const PRESERVATION_SETS: usize = 100;
const REDUCTION_SAMPLES: usize = 2000;
const IDENTITY_SAMPLES: usize = 10_000;
const IDENTITY_RANGE: f64 = 100.0;
const BENCH_K: usize = 10;
const BENCH_N: usize = 5000;
const BENCH_SEEDS: usize = 5;
const ID_ECE_REDUCTION: f64 = 0.5;
const SEVERITY_ECE_SLACK: f64 = 0.1;
const OPTIMIZER_TOL: f64 = 1e-6;
const LIMIT_ORACLE: Duration = Duration::from_secs(5);
const LIMIT_SEPARABILITY: Duration = Duration::from_secs(10);
const LIMIT_ID_CALIBRATION: Duration = Duration::from_secs(30);
const LIMIT_BENCH: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal_logits(rng: &mut SplitMix64, k: usize, scale: f64) -> Vec<f64> {
    (0..k).map(|_| scale * rng.next_normal()).collect()
}

/// Probability rows that sometimes land exactly on bin edges or tie.
fn random_probabilities(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
    match rng.below(3) {
        0 => {
            let w: Vec<f64> = (0..k).map(|_| rng.below(5) as f64).collect();
            let s: f64 = w.iter().sum();
            if s == 0.0 {
                vec![1.0 / k as f64; k]
            } else {
                w.iter().map(|v| v / s).collect()
            }
        }
        _ => {
            let scale = 0.5 + 4.0 * rng.next_open01();
            Prediction::from_probabilities(
                energy_calib::scores::softmax(&normal_logits(rng, k, scale)).unwrap(),
            )
            .probabilities
        }
    }
}

fn in_bin(c: f64, b: usize, m: usize) -> bool {
    let lo = b as f64 / m as f64;
    let hi = (b + 1) as f64 / m as f64;
    c >= lo && (c < hi || (b == m - 1 && c <= 1.0))
}

/// Per-bin weighted gaps, computed by scanning every sample for every bin.
fn gap_oracle(values: &[f64], hits: &[bool], m: usize) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mut weighted = 0.0;
    let mut worst: Option<f64> = None;
    for b in 0..m {
        let members: Vec<usize> = (0..values.len())
            .filter(|&i| in_bin(values[i], b, m))
            .collect();
        if members.is_empty() {
            continue;
        }
        let len = members.len() as f64;
        let conf = members.iter().map(|&i| values[i]).sum::<f64>() / len;
        let acc = members.iter().filter(|&&i| hits[i]).count() as f64 / len;
        let gap = (acc - conf).abs();
        weighted += len / n * gap;
        worst = Some(worst.map_or(gap, |w: f64| w.max(gap)));
    }
    (weighted * 100.0, worst.map(|w| w * 100.0))
}

fn first_max(p: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..p.len() {
        if p[j] > p[best] {
            best = j;
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let mut rng = SplitMix64::new(0xEC3);
    let mut worst = 0.0f64;
    for set in 0..ECE_SETS {
        let n = 1 + rng.below(ECE_MAX_N);
        let k = 2 + rng.below(ECE_MAX_K - 1);
        let m = ECE_BINS[set % ECE_BINS.len()];
        let probs: Vec<Vec<f64>> = (0..n).map(|_| random_probabilities(&mut rng, k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();

        let preds: Vec<Prediction> = probs
            .iter()
            .cloned()
            .map(Prediction::from_probabilities)
            .collect();
        let bins = bin_predictions(&preds, &labels, m).unwrap();
        let got_ece = ece(&bins, n).unwrap();
        let got_mce = mce(&bins).unwrap();
        let got_sce = sce(&probs, &labels, m).unwrap();

        let conf: Vec<f64> = probs.iter().map(|p| p[first_max(p)]).collect();
        let hits: Vec<bool> = probs
            .iter()
            .zip(&labels)
            .map(|(p, &y)| first_max(p) == y)
            .collect();
        let (want_ece, want_mce) = gap_oracle(&conf, &hits, m);
        let want_sce = (0..k)
            .map(|c| {
                let v: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let h: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                gap_oracle(&v, &h, m).0
            })
            .sum::<f64>()
            / k as f64;

        for (got, want) in [
            (got_ece, want_ece),
            (got_mce, want_mce.unwrap()),
            (got_sce, want_sce),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    outcome(
        worst <= ORACLE_TOL,
        format!("max deviation {worst:.3e} over {ECE_SETS} sets"),
    )
}

fn random_scores(rng: &mut SplitMix64, n: usize, tied: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if tied {
                rng.below(4) as f64
            } else {
                rng.next_normal()
            }
        })
        .collect()
}

fn auroc_oracle(ins: &[f64], outs: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in ins {
        for &b in outs {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (ins.len() * outs.len()) as f64
}

/// Average precision by sweeping every distinct threshold from high to low.
fn aupr_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / pos.len() as f64;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

fn criterion_2() -> Outcome {
    let mut rng = SplitMix64::new(0xA0C);
    let mut worst = 0.0f64;
    for set in 0..OOD_SETS {
        let total = 2 + rng.below(OOD_MAX_N - 1);
        let n_in = 1 + rng.below(total - 1);
        let tied = set % 2 == 0;
        let ins = random_scores(&mut rng, n_in, tied);
        let outs = random_scores(&mut rng, total - n_in, tied);
        let s = OodScores::new(ins.clone(), outs.clone()).unwrap();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let pairs = [
            (auroc(&s).unwrap(), auroc_oracle(&ins, &outs)),
            (aupr(&s, Positive::In).unwrap(), aupr_oracle(&ins, &outs)),
            (
                aupr(&s, Positive::Out).unwrap(),
                aupr_oracle(&neg(&outs), &neg(&ins)),
            ),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs());
        }
    }
    outcome(
        worst <= ORACLE_TOL,
        format!("max deviation {worst:.3e} over {OOD_SETS} sets"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = SplitMix64::new(0xACC);
    let mut rows = 0usize;
    let mut changed = 0usize;
    for set in 0..PRESERVATION_SETS {
        let sc = ShiftScenario {
            k: 2 + rng.below(9),
            n: 100 + rng.below(300),
            margin: 1.0 + 4.0 * rng.next_open01(),
            noise: 0.5 + rng.next_open01(),
            overconfidence: 1.0 + 3.0 * rng.next_open01(),
            severity: rng.below(6) as u32,
            kind: ShiftKind::Covariate,
            seed: set as u64,
        };
        let val = generate(&sc).unwrap();
        let ood = generate(&ShiftScenario {
            n: sc.n / 5,
            kind: ShiftKind::Semantic,
            seed: sc.seed + 10_000,
            ..sc.clone()
        })
        .unwrap();
        let test = generate(&ShiftScenario {
            seed: sc.seed + 20_000,
            ..sc.clone()
        })
        .unwrap();
        let cal = Calibrator::fit(CalibratorKind::Energy, &val, Some(&ood)).unwrap();
        let preds = cal.apply(&test).unwrap();
        for (z, p) in test.rows().zip(&preds) {
            rows += 1;
            if p.predicted_label != argmax(z) {
                changed += 1;
            }
        }
    }
    outcome(
        changed == 0,
        format!("{changed} of {rows} labels changed over {PRESERVATION_SETS} fits"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = SplitMix64::new(0x7E5);
    let mut worst = 0.0f64;
    for _ in 0..REDUCTION_SAMPLES / 20 {
        let k = 2 + rng.below(9);
        let t = 0.05 + 9.95 * rng.next_open01();
        let ts = TemperatureParams::new(t, k).unwrap();
        let pc =
            GaussianPdf::new(-20.0 * rng.next_open01(), 0.1 + 5.0 * rng.next_open01()).unwrap();
        let pi =
            GaussianPdf::new(-20.0 * rng.next_open01(), 0.1 + 5.0 * rng.next_open01()).unwrap();
        let energy_cal =
            Calibrator::Energy(EnergyCalibratorParams::new(&ts, (0.0, 0.0), pc, pi).unwrap());
        let rows: Vec<Vec<f64>> = (0..20).map(|_| normal_logits(&mut rng, k, 10.0)).collect();
        let ds = LogitDataset::from_rows(&rows, vec![-1; rows.len()]).unwrap();
        let a = energy_cal.apply(&ds).unwrap();
        let b = Calibrator::Temperature(ts).apply(&ds).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            worst = worst.max((pa.confidence - pb.confidence).abs());
            for (x, y) in pa.probabilities.iter().zip(&pb.probabilities) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    outcome(
        worst <= REDUCTION_TOL,
        format!("max deviation {worst:.3e} over {REDUCTION_SAMPLES} rows"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = SplitMix64::new(0xE07);
    let mut worst = 0.0f64;
    for _ in 0..IDENTITY_SAMPLES {
        let k = 2 + rng.below(19);
        let z: Vec<f64> = (0..k)
            .map(|_| IDENTITY_RANGE * (2.0 * rng.next_open01() - 1.0))
            .collect();
        let y = rng.below(k);
        worst = worst.max(nll_identity_residual(&z, y).unwrap());
    }
    outcome(
        worst <= IDENTITY_TOL,
        format!("max residual {worst:.3e} over {IDENTITY_SAMPLES} samples"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let base = ShiftScenario {
        k: BENCH_K,
        n: BENCH_N,
        ..ShiftScenario::default()
    };
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    let mut neg_energy = [0.0f64; 6];
    for seed in 0..BENCH_SEEDS as u64 {
        let suite = severity_suite(&base.with_seed(seed * 1000)).unwrap();
        for (s, ds) in suite.iter().enumerate() {
            let mut total = 0.0;
            for (i, z) in ds.rows().enumerate() {
                let f = energy(z).unwrap().value();
                total -= f;
                if s == 0 {
                    if Some(argmax(z)) == ds.class(i) {
                        sum_c += f;
                        n_c += 1;
                    } else {
                        sum_i += f;
                        n_i += 1;
                    }
                }
            }
            neg_energy[s] += total / ds.n() as f64 / BENCH_SEEDS as f64;
        }
    }
    let elapsed = start.elapsed();
    let (mean_c, mean_i) = (sum_c / n_c as f64, sum_i / n_i as f64);
    let separable = mean_c < mean_i;
    let decreasing = neg_energy.windows(2).all(|w| w[1] < w[0]);
    let trend: Vec<String> = neg_energy.iter().map(|v| format!("{v:.3}")).collect();
    outcome(
        separable && decreasing && elapsed < LIMIT_SEPARABILITY,
        format!(
            "mean F correct {mean_c:.3} vs incorrect {mean_i:.3} ({}); mean -F by severity [{}] ({}); {:.2}s",
            if separable { "separable" } else { "not separable" },
            trend.join(", "),
            if decreasing { "decreasing" } else { "not decreasing" },
            elapsed.as_secs_f64()
        ),
    )
}

fn bench_row<'a>(report: &'a BenchReport, method: &str) -> &'a energy_calib::bench::BenchRow {
    report.row(method.parse::<BenchMethod>().unwrap()).unwrap()
}

fn criterion_7(report: &BenchReport, elapsed: Duration) -> Outcome {
    let none = bench_row(report, "none").ece[0];
    let ts = bench_row(report, "ts").ece[0];
    let en = bench_row(report, "energy").ece[0];
    let limit = none * (1.0 - ID_ECE_REDUCTION);
    outcome(
        ts <= limit && en <= limit && elapsed < LIMIT_ID_CALIBRATION,
        format!(
            "severity-0 ECE none {none:.3}, ts {ts:.3} ({:+.1}%), energy {en:.3} ({:+.1}%); required <= {limit:.3}; {:.2}s",
            100.0 * (ts / none - 1.0),
            100.0 * (en / none - 1.0),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8(report: &BenchReport, elapsed: Duration) -> Outcome {
    let ts = bench_row(report, "ts").ece_average;
    let en = bench_row(report, "energy").ece_average;
    outcome(
        en <= ts + SEVERITY_ECE_SLACK && elapsed < LIMIT_BENCH,
        format!(
            "severity-averaged ECE energy {en:.3} vs ts {ts:.3}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_9(report: &BenchReport) -> Outcome {
    let ts = bench_row(report, "ts").ood_confidence;
    let en = bench_row(report, "energy").ood_confidence;
    outcome(
        en < ts,
        format!("mean OOD confidence energy {en:.4} vs ts {ts:.4}"),
    )
}

fn criterion_10(report: &BenchReport) -> Outcome {
    let mut fits = 0;
    let mut worst_origin = f64::NEG_INFINITY;
    let mut worst_grid = f64::NEG_INFINITY;
    for fit in report.energy_fits() {
        fits += 1;
        worst_origin = worst_origin.max(fit.loss - fit.loss_at_origin);
        worst_grid = worst_grid.max(fit.loss - fit.grid_min_loss);
    }
    outcome(
        fits == BENCH_SEEDS && worst_origin <= 0.0 && worst_grid <= OPTIMIZER_TOL,
        format!("{fits} fits; max(loss - origin) {worst_origin:.3e}, max(loss - grid min) {worst_grid:.3e}"),
    )
}

/// Runs the binary twice per command and compares every output file.
fn criterion_11() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_energy-calib");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let run = |dir: &Path, args: &[&str]| -> bool {
        let args: Vec<String> = args
            .iter()
            .map(|a| {
                a.strip_prefix('@')
                    .map_or(a.to_string(), |f| dir.join(f).display().to_string())
            })
            .collect();
        Command::new(exe)
            .args(&args)
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    };
    let commands: [&[&str]; 6] = [
        &[
            "gen-synthetic",
            "--k",
            "10",
            "--n",
            "2000",
            "--severity",
            "2",
            "--kind",
            "covariate",
            "--seed",
            "7",
            "--out",
            "@val.csv",
        ],
        &[
            "gen-synthetic",
            "--k",
            "10",
            "--n",
            "300",
            "--kind",
            "semantic",
            "--seed",
            "8",
            "--out",
            "@ood.csv",
        ],
        &[
            "fit", "--method", "ts", "--val", "@val.csv", "--out", "@ts.json",
        ],
        &[
            "fit",
            "--method",
            "energy",
            "--val",
            "@val.csv",
            "--ood",
            "@ood.csv",
            "--out",
            "@energy.json",
        ],
        &[
            "fit",
            "--method",
            "ets",
            "--val",
            "@val.csv",
            "--out",
            "@ets.json",
        ],
        &[
            "bench",
            "--k",
            "5",
            "--n",
            "1000",
            "--seeds",
            "2",
            "--methods",
            "none,ts,energy,hb",
            "--out",
            "@bench.csv",
        ],
    ];
    for dir in &dirs {
        for args in commands {
            if !run(dir.path(), args) {
                return outcome(false, format!("command failed: {}", args.join(" ")));
            }
        }
    }
    let files = [
        "val.csv",
        "ood.csv",
        "ts.json",
        "energy.json",
        "ets.json",
        "bench.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            std::fs::read(dirs[0].path().join(f)).unwrap()
                != std::fs::read(dirs[1].path().join(f)).unwrap()
        })
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical across reruns", files.len())
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if elapsed >= limit {
        o.pass = false;
    }
    o.detail = format!("{}; {:.2}s", o.detail, elapsed.as_secs_f64());
    o
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (
            1,
            "ECE/MCE/SCE oracle equivalence",
            timed(LIMIT_ORACLE, criterion_1),
        ),
        (
            2,
            "AUROC/AUPR oracle equivalence",
            timed(LIMIT_ORACLE, criterion_2),
        ),
        (3, "accuracy preservation", criterion_3()),
        (4, "reduction to temperature scaling", criterion_4()),
        (5, "NLL energy identity", criterion_5()),
        (6, "energy separability and severity trend", criterion_6()),
    ];

    let cfg = BenchConfig::new(
        BENCH_K,
        BENCH_N,
        BENCH_SEEDS,
        parse_methods("none,ts,energy").unwrap(),
    );
    let start = Instant::now();
    let report = run_bench(&cfg).unwrap();
    let elapsed = start.elapsed();
    results.push((
        7,
        "ID calibration improvement",
        criterion_7(&report, elapsed),
    ));
    results.push((8, "severity-averaged ECE", criterion_8(&report, elapsed)));
    results.push((9, "semantic-OOD confidence", criterion_9(&report)));
    results.push((10, "optimizer soundness", criterion_10(&report)));
    results.push((11, "CLI determinism", criterion_11()));

    for (id, name, o) in &results {
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
