use blindpaint::blind::{equivalent_lambda2, solve_from};
use blindpaint::energy::halved_squared_residuals;
use blindpaint::noise::impulse_count;
use blindpaint::synthetic::test_pattern;
use blindpaint::{
    acwmf, amf, solve_aop, solve_penalty, tv_inpaint, two_stage, update_mask_penalty, verify_coordinatewise_min,
    AcwmfConfig, AmfConfig, Detector, DynamicRange, Image, ImpulseKind, Mask, NoiseSpec, SolverConfig, TieRule,
};

fn corrupted(side: usize, sigma: f64, kind: ImpulseKind, level: f64, seed: u64) -> (Image<f64>, Image<f64>, Mask) {
    let clean = test_pattern::<f64>(side, side);
    let spec = NoiseSpec {
        sigma,
        impulse: kind,
        level,
        seed,
        clip: false,
    };
    let (f, truth) = spec.apply(&clean, DynamicRange::default()).unwrap();
    (clean, f, truth)
}

#[test]
fn two_stage_is_first_aop_iterate() {
    let (_, f, _) = corrupted(40, 0.0, ImpulseKind::SaltPepper, 0.3, 5);
    let detector = Detector::Amf(AmfConfig::default());
    let cfg = SolverConfig::constraint(1.0, impulse_count(0.3, f.len()));
    let ts = two_stage(&f, &detector, 1.0, &cfg.inner).unwrap();
    let (_, mask0) = amf(&f, &AmfConfig::default()).unwrap();
    let aop = solve_aop(&f, &cfg, &mask0).unwrap();
    assert_eq!(ts.trace[0].image_digest, aop.trace[0].image_digest);
    let one = solve_aop(&f, &SolverConfig { max_outer: 1, ..cfg }, &mask0).unwrap();
    assert_eq!(one.image, ts.image);
}

#[test]
fn mixed_noise_descent_and_fixed_point() {
    for seed in 0..4 {
        let (_, f, _) = corrupted(32, 10.0, ImpulseKind::RandomValued, 0.3, 40 + seed);
        let (_, mask0) = acwmf(&f, &AcwmfConfig::default()).unwrap();
        let cfg = SolverConfig::constraint(4.0, impulse_count(0.3, f.len()));
        let res = solve_aop(&f, &cfg, &mask0).unwrap();
        assert!(res.converged && res.outer_iterations() < 50);
        assert!(res.coordinatewise_certified, "{:?}", res.report);
        for pair in res.trace.windows(2) {
            let slack = 10.0 * cfg.inner.rel_tol * pair[0].energy.abs();
            assert!(pair[1].energy_after_image_step <= pair[0].energy + slack);
            assert!(pair[1].energy <= pair[1].energy_after_image_step + slack);
        }
        // at the mask fixed point a further image step gains less than the slack
        let again = tv_inpaint(&f, &res.mask, cfg.lambda1, &cfg.inner, Some(&res.image)).unwrap();
        let e_then = cfg.energy(&res.image, &res.mask, &f).unwrap();
        let e_now = cfg.energy(&again.image, &res.mask, &f).unwrap();
        assert!(e_then - e_now <= 10.0 * cfg.inner.rel_tol * e_then.abs());
    }
}

#[test]
fn penalty_form_reproduces_aop_mask_at_fixed_point() {
    for seed in [3u64, 4, 5] {
        let (_, f, _) = corrupted(32, 5.0, ImpulseKind::RandomValued, 0.25, seed);
        let (_, mask0) = acwmf(&f, &AcwmfConfig::default()).unwrap();
        let budget = impulse_count(0.25, f.len());
        let aop = solve_aop(&f, &SolverConfig::constraint(2.0, budget), &mask0).unwrap();

        // the L-th largest halved residual as threshold, ties dropped
        let mut scores = halved_squared_residuals(&aop.image, &f).unwrap();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lth = scores[budget - 1];
        let pen_mask = update_mask_penalty(&aop.image, &f, lth, TieRule::Drop).unwrap();
        assert_eq!(pen_mask, aop.mask);

        // a full penalty run started at the AOP fixed point stays there
        let lambda2 = equivalent_lambda2(&aop.image, &f, budget).unwrap().unwrap();
        let pen = solve_from(&f, &SolverConfig::penalty(2.0, lambda2), &aop.mask, &aop.image).unwrap();
        assert_eq!(pen.mask, aop.mask);
    }
}

#[test]
fn randomized_ties_never_leave_boundary_pixels() {
    // an image with many exact ties: flat patches and integer impulses
    let (_, f, _) = corrupted(24, 0.0, ImpulseKind::SaltPepper, 0.2, 77);
    let (_, mask0) = amf(&f, &AmfConfig::default()).unwrap();
    let budget = impulse_count(0.2, f.len());
    for seed in 0..100u64 {
        let tie = TieRule::Randomized { tau: 1e-8, seed };
        let (cfg, form) = if seed % 2 == 0 {
            (SolverConfig { tie_rule: tie, max_outer: 5, ..SolverConfig::constraint(2.0, budget) }, "aop")
        } else {
            (SolverConfig { tie_rule: tie, max_outer: 5, ..SolverConfig::penalty(2.0, 800.0) }, "penalty")
        };
        let res = if form == "aop" { solve_aop(&f, &cfg, &mask0) } else { solve_penalty(&f, &cfg, &mask0) }.unwrap();
        let report = verify_coordinatewise_min(&res.image, &res.mask, &f, &cfg).unwrap();
        assert_eq!(report.boundary_pixels, 0, "{form} seed {seed}");
        assert!(report.unique_mask);
    }
}

#[test]
fn keep_rule_reports_exact_ties() {
    // residuals 0, 2, 2, 0 with budget 1: the two 2s tie at the boundary
    let f = Image::new(1, 4, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
    let u = Image::new(1, 4, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
    let cfg = SolverConfig::constraint(1e-9, 1);
    let report = verify_coordinatewise_min(&u, &Mask::new(1, 4, vec![true, true, false, true]).unwrap(), &f, &cfg).unwrap();
    assert!(report.mask_optimal);
    assert_eq!(report.boundary_pixels, 2);
    assert!(!report.unique_mask);
}

#[test]
fn single_and_double_precision_agree() {
    let (_, f, _) = corrupted(24, 0.0, ImpulseKind::SaltPepper, 0.3, 9);
    let (_, mask0) = amf(&f, &AmfConfig::default()).unwrap();
    let budget = impulse_count(0.3, f.len());
    let r64 = solve_aop(&f, &SolverConfig::constraint(2.0, budget), &mask0).unwrap();
    let f32_img: Image<f32> = f.cast();
    let r32 = solve_aop(&f32_img, &SolverConfig::constraint(2.0f32, budget), &mask0).unwrap();
    let diff = r64
        .image
        .data()
        .iter()
        .zip(r32.image.data())
        .map(|(a, b)| (a - f64::from(*b)).abs())
        .fold(0.0, f64::max);
    assert!(diff < 0.5, "max pixel difference {diff}");
    assert!(r64.mask.hamming(&r32.mask).unwrap() <= f.len() / 100);
}

#[test]
fn restoration_beats_observation() {
    let (clean, f, truth) = corrupted(48, 0.0, ImpulseKind::RandomValued, 0.3, 12);
    let (_, mask0) = acwmf(&f, &AcwmfConfig::default()).unwrap();
    let res = solve_aop(&f, &SolverConfig::constraint(2.0, truth.zeros_count()), &mask0).unwrap();
    let before = blindpaint::psnr(&f, &clean).unwrap();
    let after = blindpaint::psnr(&res.image, &clean).unwrap();
    assert!(after > before + 5.0, "{before} -> {after}");
}
