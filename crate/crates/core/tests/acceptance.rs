//! Acceptance checks, one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use blindpaint::blind::verify_coordinatewise_min;
use blindpaint::energy::masked_fidelity;
use blindpaint::experiments::{run_experiment, ExperimentConfig, ExperimentOutput, Method, Row};
use blindpaint::noise::simulate_mixed_nll;
use blindpaint::pgm::{read_pgm, write_pgm, PgmMode};
use blindpaint::rng::PinnedRng;
use blindpaint::synthetic::test_pattern;
use blindpaint::{
    acwmf, eliminated_penalty_energy, penalty_energy, psnr, solve_aop, solve_penalty, update_mask_constraint,
    update_mask_penalty, AcwmfConfig, DynamicRange, Error, Image, ImpulseKind, Mask, NoiseSpec, RestoreResult,
    SolverConfig, TieRule,
};

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

fn grid(rows: usize, cols: usize, rng: &mut PinnedRng, scale: f64) -> Image<f64> {
    Image::from_fn(rows, cols, |_, _| scale * (2.0 * rng.uniform() - 1.0))
}

fn masks_with_bits(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << n).map(move |code| (0..n).map(|k| code >> k & 1 == 1).collect())
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = PinnedRng::new(101);
    let zero = Image::zeros(2, 3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let u = grid(2, 3, &mut rng, 20.0);
        for budget in 0..=6 {
            let mask = update_mask_constraint(&u, &zero, budget, TieRule::Keep).unwrap();
            let got = masked_fidelity(&u, &mask, &zero).unwrap();
            let best = masks_with_bits(6)
                .filter(|bits| bits.iter().filter(|b| !**b).count() <= budget)
                .map(|bits| masked_fidelity(&u, &Mask::new(2, 3, bits).unwrap(), &zero).unwrap())
                .fold(f64::INFINITY, f64::min);
            if got != best || mask.zeros_count() != budget {
                mismatches += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("7000 cases, {mismatches} mismatches, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = PinnedRng::new(202);
    let zero = Image::zeros(3, 4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let lambda2 = 1.0 + 99.0 * rng.uniform();
        // resample any entry within 1e-6 of the threshold so no ties occur
        let mut u = grid(3, 4, &mut rng, 20.0);
        for v in u.data_mut() {
            while (0.5 * *v * *v - lambda2).abs() < 1e-6 {
                *v = 20.0 * (2.0 * rng.uniform() - 1.0);
            }
        }
        for tie in [TieRule::Keep, TieRule::Drop] {
            let mask = update_mask_penalty(&u, &zero, lambda2, tie).unwrap();
            for (k, &v) in u.data().iter().enumerate() {
                let keep_cost = 0.5 * v * v;
                let brute = keep_cost < lambda2;
                if mask.bits()[k] != brute {
                    mismatches += 1;
                }
            }
        }
    }
    // exact ties under each rule: residual 2 against lambda2 = 2
    let u = Image::filled(2, 2, 2.0);
    let zero = Image::zeros(2, 2);
    let keep = update_mask_penalty(&u, &zero, 2.0, TieRule::Keep).unwrap();
    let drop = update_mask_penalty(&u, &zero, 2.0, TieRule::Drop).unwrap();
    let rand = update_mask_penalty(&u, &zero, 2.0, TieRule::Randomized { tau: 1e-8, seed: 9 }).unwrap();
    let ties_ok = keep == Mask::ones(2, 2) && drop == Mask::zeros(2, 2) && rand == Mask::zeros(2, 2);
    // every tie outcome is still a per-pixel minimizer: both bits cost lambda2
    let tie_energy_equal = [keep, drop, rand]
        .iter()
        .map(|m| penalty_energy(&u, m, &zero, 1.0, 2.0).unwrap())
        .all(|e| e == 4.0 * 2.0);
    outcome(
        mismatches == 0 && ties_ok && tie_energy_equal,
        format!("{mismatches} mismatches over 1000 grids x 2 rules; tie rules keep/drop/randomized ok: {}", ties_ok && tie_energy_equal),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = PinnedRng::new(303);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u = Image::from_fn(4, 4, |_, _| 255.0 * rng.uniform());
        let f = Image::from_fn(4, 4, |_, _| 255.0 * rng.uniform());
        let lambda1 = 10.0 * rng.uniform();
        let lambda2 = 1.0 + 5000.0 * rng.uniform();
        let e0 = eliminated_penalty_energy(&u, &f, lambda1, lambda2).unwrap();
        let mask = update_mask_penalty(&u, &f, lambda2, TieRule::Keep).unwrap();
        let f1 = penalty_energy(&u, &mask, &f, lambda1, lambda2).unwrap();
        worst = worst.max((e0 - f1).abs());
    }
    outcome(worst <= 1e-10, format!("max |E0 - F1(u, mask*(u))| = {worst:.3e} over 100 instances"))
}

fn descent_ok(res: &RestoreResult<f64>, rel_tol: f64) -> bool {
    let mut prev = res.initial_energy;
    for r in &res.trace {
        let slack = 10.0 * rel_tol * r.energy_after_image_step.abs().max(r.energy.abs());
        let image_ok = prev.is_infinite() || r.energy_after_image_step <= prev + slack;
        if !image_ok || r.energy > r.energy_after_image_step + slack {
            return false;
        }
        prev = r.energy;
    }
    true
}

fn criterion_4() -> Outcome {
    let clean = test_pattern::<f64>(32, 32);
    let mut failures = Vec::new();
    let mut max_iters = 0;
    for seed in 0..20u64 {
        let spec = NoiseSpec {
            sigma: 5.0,
            impulse: ImpulseKind::RandomValued,
            level: 0.25,
            seed: 1000 + seed,
            clip: false,
        };
        let (f, _) = spec.apply(&clean, DynamicRange::default()).unwrap();
        let (_, mask0) = acwmf(&f, &AcwmfConfig::default()).unwrap();
        let budget = (0.25f64 * 1024.0).round() as usize;
        let runs = [
            ("penalty", solve_penalty(&f, &SolverConfig::penalty(2.0, 450.0), &mask0).unwrap()),
            ("aop", solve_aop(&f, &SolverConfig::constraint(2.0, budget), &mask0).unwrap()),
        ];
        for (name, res) in runs {
            let cfg = if name == "aop" {
                SolverConfig::constraint(2.0, budget)
            } else {
                SolverConfig::penalty(2.0, 450.0)
            };
            max_iters = max_iters.max(res.outer_iterations());
            let descent = descent_ok(&res, cfg.inner.rel_tol);
            let terminated = res.converged && res.outer_iterations() < 50;
            let certified = verify_coordinatewise_min(&res.image, &res.mask, &f, &cfg).unwrap().certified;
            if !(descent && terminated && certified) {
                failures.push(format!("{name}/seed{seed}: descent={descent} terminated={terminated} certified={certified}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("40 runs, max outer iterations {max_iters}; failures: {:?}", failures),
    )
}

fn rows_for<'a>(out: &'a ExperimentOutput, level: f64, seed: u64, method: Method) -> &'a Row {
    out.rows
        .iter()
        .find(|r| r.level == level && r.seed == seed && r.method == method)
        .expect("row present")
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let cfg = ExperimentConfig {
        impulse: ImpulseKind::SaltPepper,
        levels: vec![0.3],
        methods: vec![Method::Noisy, Method::Amf, Method::Tvl1, Method::Aop],
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg).unwrap();
    let elapsed = started.elapsed();
    let p = |m| rows_for(&out, 0.3, 1, m).psnr;
    let (noisy, amf, tvl1, aop) = (p(Method::Noisy), p(Method::Amf), p(Method::Tvl1), p(Method::Aop));
    let pass = aop > amf && amf >= noisy && aop > tvl1 && aop - amf >= 1.0 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "noisy {noisy:.2} amf {amf:.2} tvl1 {tvl1:.2} aop {aop:.2} dB (aop-amf {:+.2}), {:.1}s",
            aop - amf,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_valued_runs() -> ExperimentOutput {
    let cfg = ExperimentConfig {
        impulse: ImpulseKind::RandomValued,
        levels: vec![0.25, 0.4],
        methods: vec![Method::Acwmf, Method::Tvl1, Method::TwoStage, Method::Aop],
        seeds: vec![1, 2, 3],
        ..ExperimentConfig::default()
    };
    run_experiment(&cfg).unwrap()
}

fn criterion_6(out: &ExperimentOutput) -> Outcome {
    let mut passed = 0;
    let mut detail = Vec::new();
    for seed in [1, 2, 3] {
        let p = |level, m| rows_for(out, level, seed, m).psnr;
        let (aop, ts, filt) = (p(0.25, Method::Aop), p(0.25, Method::TwoStage), p(0.25, Method::Acwmf));
        let (tvl1_40, ts_40) = (p(0.4, Method::Tvl1), p(0.4, Method::TwoStage));
        let ok = aop >= ts && ts >= filt && tvl1_40 >= ts_40;
        passed += usize::from(ok);
        detail.push(format!(
            "seed{seed} {}: 25% aop {aop:.2} >= two-stage {ts:.2} >= acwmf {filt:.2}; 40% tvl1 {tvl1_40:.2} >= two-stage {ts_40:.2}",
            if ok { "pass" } else { "fail" }
        ));
    }
    outcome(passed >= 2, format!("{passed}/3 seeds [{}]", detail.join("; ")))
}

fn criterion_7(out: &ExperimentOutput) -> Outcome {
    let mut passed = 0;
    let mut detail = Vec::new();
    for seed in [1, 2, 3] {
        let init = rows_for(out, 0.4, seed, Method::Acwmf).recall.unwrap();
        let aop = rows_for(out, 0.4, seed, Method::Aop).recall.unwrap();
        passed += usize::from(aop > init);
        detail.push(format!("seed{seed} recall {init:.3} -> {aop:.3}"));
    }
    outcome(passed >= 2, format!("{passed}/3 seeds [{}]", detail.join("; ")))
}

fn criterion_8() -> Outcome {
    let (value, sigma) = (128.0, 10.0);
    let hist = simulate_mixed_nll(value, sigma, 0.3, 1_000_000, 256, 8, DynamicRange::default()).unwrap();
    let spread = hist.tail_spread(value, 5.0 * sigma).unwrap_or(f64::INFINITY);
    let r2 = hist.parabola_r2(value, 2.0 * sigma).unwrap_or(0.0);
    outcome(
        spread <= 0.05 && r2 > 0.99,
        format!("tail NLL spread {:.2}% (<= 5%), parabola R^2 {r2:.5} (> 0.99)", 100.0 * spread),
    )
}

fn criterion_9() -> Outcome {
    let black = Image::<f64>::zeros(8, 8);
    let white = Image::<f64>::filled(8, 8, 255.0);
    let zero_db = psnr(&black, &white).unwrap();
    let off_by_one = Image::<f64>::filled(8, 8, 101.0);
    let one_mse = psnr(&off_by_one, &Image::filled(8, 8, 100.0)).unwrap();
    outcome(
        zero_db.abs() <= 1e-3 && (one_mse - 48.1308).abs() <= 1e-3,
        format!("{zero_db:.4} dB (expect 0), {one_mse:.4} dB (expect 48.1308)"),
    )
}

const MALFORMED: [(&str, &[u8]); 10] = [
    ("empty", b""),
    ("bad_magic", b"P6\n2 2\n255\n\x00\x01\x02\x03"),
    ("missing_height", b"P5\n2\n"),
    ("zero_width", b"P5\n0 2\n255\n"),
    ("maxval_16bit", b"P5\n2 2\n65535\n\x00\x01\x02\x03\x04\x05\x06\x07"),
    ("truncated_binary", b"P5\n2 2\n255\n\x00\x01"),
    ("truncated_ascii", b"P2\n2 2\n255\n1 2 3\n"),
    ("sample_over_maxval", b"P2\n2 2\n255\n1 2 3 300\n"),
    ("width_overflow", b"P5\n99999999999 2\n255\n"),
    ("garbage_token", b"P2\n2 x2\n255\n1 2 3 4\n"),
];

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = PinnedRng::new(1010);
    let mut roundtrip_failures = 0;
    for k in 0..100 {
        let rows = 1 + rng.below(40) as usize;
        let cols = 1 + rng.below(40) as usize;
        let im = Image::from_fn(rows, cols, |_, _| rng.below(256) as f64);
        for mode in [PgmMode::Ascii, PgmMode::Binary] {
            let path = dir.path().join(format!("rt{k}_{mode:?}.pgm"));
            write_pgm(&im, &path, mode).unwrap();
            match read_pgm::<f64>(&path) {
                Ok(back) if back == im => {}
                _ => roundtrip_failures += 1,
            }
        }
    }
    let mut structured = 0;
    let mut notes = Vec::new();
    for (name, bytes) in MALFORMED {
        let path = dir.path().join(format!("{name}.pgm"));
        std::fs::write(&path, bytes).unwrap();
        let result = std::panic::catch_unwind(|| read_pgm::<f64>(Path::new(&path)));
        match result {
            Ok(Err(Error::Pgm { source, .. })) => {
                structured += 1;
                notes.push(format!("{name}: byte {} {:?}", source.offset, source.kind));
            }
            Ok(other) => notes.push(format!("{name}: unexpected {:?}", other.map(|im| im.dims()))),
            Err(_) => notes.push(format!("{name}: panicked")),
        }
    }
    outcome(
        roundtrip_failures == 0 && structured == MALFORMED.len(),
        format!(
            "200 roundtrips, {roundtrip_failures} failures; {structured}/10 malformed files rejected with parse errors [{}]",
            notes.join("; ")
        ),
    )
}

fn main() -> ExitCode {
    let rv = random_valued_runs();
    let checks: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(&rv))),
        (7, Box::new(|| criterion_7(&rv))),
        (8, Box::new(criterion_8)),
        (9, Box::new(criterion_9)),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (id, check) in checks {
        let result = check();
        println!("criterion {id:>2}: {} {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        failed += usize::from(!result.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
