//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line. The reference digits are the published level values
//! and limit estimates for the two Cantor families.

use std::time::Instant;

use num_complex::Complex64;

use logcap::capacity::{
    capacity_of_level, capacity_sweep, error_bound, extrapolate_reports, recover_charges,
    two_disk_csm, two_disk_error_bound_closed_form, two_disk_exact, BackendChoice, CapacityOptions,
    PrecondChoice,
};
use logcap::extrapolate::{
    extrapolate_values, fit_log_differences, MIDDLE_THIRD_DUST_REFERENCE, MIDDLE_THIRD_REFERENCE,
};
use logcap::fastsum::{log_potential_direct, log_potential_fast, SummationConfig};
use logcap::geometry::{
    cantor_dust_points, cantor_interval_points, charge_configuration, reduce_by_symmetry,
    CantorParameters, ChargeConfiguration, Family,
};
use logcap::krylov;
use logcap::operator::{assemble_dense_b, check_structure, BOperator};
use logcap::precond::build_preconditioner;

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

fn lcg(n: usize, mut state: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        out.push((state >> 11) as f64 / (1u64 << 53) as f64);
    }
    out
}

fn unit_l1_charges(n: usize, seed: u64) -> Vec<f64> {
    let mut y: Vec<f64> = lcg(n, seed).into_iter().map(|u| 2.0 * u - 1.0).collect();
    let norm1: f64 = y.iter().map(|v| v.abs()).sum();
    y.iter_mut().for_each(|v| *v /= norm1);
    y
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Criterion 1: two-disk analytic suite.
#[test]
fn criterion_01_two_disk_analytic_suite() {
    let start = Instant::now();
    let opts = CapacityOptions::default();
    let mut worst_rel: f64 = 0.0;
    for r in [1e-7, 1e-5, 1e-3, 1e-2] {
        let rep = two_disk_csm(r, &opts).unwrap();
        let csm = (2.0 * r / 3.0).sqrt();
        let rel = rel_err(rep.capacity, csm);
        assert!(rel <= 1e-13, "r={r}: pipeline off by {rel:.2e}");
        worst_rel = worst_rel.max(rel);
    }
    let tiny = two_disk_exact(1e-7).unwrap();
    let tiny_gap = (tiny.capacity_exact - tiny.capacity_csm).abs();
    assert!(tiny_gap <= 1e-10, "r=1e-7 gap {tiny_gap:.2e}");
    let worst = two_disk_exact(1.0 / 6.0).unwrap();
    let worst_gap = (worst.capacity_exact - worst.capacity_csm).abs();
    assert!(
        (0.007..=0.013).contains(&worst_gap),
        "r=1/6 gap {worst_gap:.4} should be about 0.01"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed:.2}s, budget 1s");
    pass(
        "criterion 1 (two-disk analytic suite)",
        format!(
            "pipeline matches sqrt(2r/3) to {worst_rel:.1e}; exact-vs-estimate gap {tiny_gap:.2e} at r=1e-7, {worst_gap:.4} at r=1/6; {elapsed:.2}s"
        ),
    );
}

const TABLE1: [(u32, f64, usize); 9] = [
    (5, 0.227457816902705, 4),
    (6, 0.224254487425132, 7),
    (7, 0.222633059381908, 10),
    (8, 0.221808427761487, 15),
    (9, 0.221387991441743, 19),
    (10, 0.221173357505459, 22),
    (11, 0.221063713734092, 25),
    (12, 0.221007684178946, 32),
    (13, 0.220979047273590, 39),
];

/// Criterion 2: published middle-third level values, direct backend.
#[test]
fn criterion_02_middle_third_levels() {
    let start = Instant::now();
    let opts = CapacityOptions {
        backend: BackendChoice::Direct,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for (k, want, _) in TABLE1 {
        let rep =
            capacity_of_level(&CantorParameters::interval(1.0 / 3.0, k).unwrap(), &opts).unwrap();
        let rel = rel_err(rep.capacity, want);
        assert!(rel <= 5e-10, "k={k}: relative error {rel:.2e}");
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s, budget 60s");
    pass(
        "criterion 2 (middle-third levels k=5..13)",
        format!("worst relative error {worst:.2e} (tolerance 5e-10); {elapsed:.1}s"),
    );
}

/// Criterion 3: preconditioned iteration counts and the preconditioning gain.
#[test]
fn criterion_03_iteration_counts() {
    let opts = CapacityOptions {
        backend: BackendChoice::Auto,
        precond: PrecondChoice::Exponent(4),
        ..Default::default()
    };
    let mut counts = Vec::new();
    for (k, _, want_iter) in TABLE1.iter().skip(3) {
        let rep =
            capacity_of_level(&CantorParameters::interval(1.0 / 3.0, *k).unwrap(), &opts).unwrap();
        let lo = (*want_iter as f64 * 0.5).floor() as usize;
        let hi = (*want_iter as f64 * 1.5).ceil() as usize;
        assert!(
            (lo..=hi).contains(&rep.iterations),
            "k={k}: {} iterations outside [{}, {}]",
            rep.iterations,
            lo,
            hi
        );
        counts.push((*k, rep.iterations, *want_iter));
    }

    let fast = CapacityOptions {
        backend: BackendChoice::Hierarchical,
        precond: PrecondChoice::Exponent(4),
        ..Default::default()
    };
    let params = CantorParameters::interval(1.0 / 3.0, 14).unwrap();
    let preconditioned = capacity_of_level(&params, &fast).unwrap();
    let unpreconditioned = capacity_of_level(
        &params,
        &CapacityOptions {
            backend: BackendChoice::Hierarchical,
            precond: PrecondChoice::Off,
            ..Default::default()
        },
    )
    .unwrap();
    let reduction = 1.0 - preconditioned.iterations as f64 / unpreconditioned.iterations as f64;
    assert!(
        reduction >= 0.40,
        "preconditioning reduced iterations only by {:.0}% ({} vs {})",
        100.0 * reduction,
        preconditioned.iterations,
        unpreconditioned.iterations
    );
    pass(
        "criterion 3 (iteration counts)",
        format!(
            "preconditioned counts k=8..13 {:?} vs published {:?}; k=14 reduction {}->{} ({:.0}%)",
            counts.iter().map(|c| c.1).collect::<Vec<_>>(),
            counts.iter().map(|c| c.2).collect::<Vec<_>>(),
            unpreconditioned.iterations,
            preconditioned.iterations,
            100.0 * reduction
        ),
    );
}

/// Criterion 4: extrapolated middle-third limit from computed levels 5..16.
#[test]
fn criterion_04_middle_third_limit() {
    let start = Instant::now();
    let opts = CapacityOptions::default();
    let reports = capacity_sweep(Family::IntervalSet, 1.0 / 3.0, 1.0, 5..=16, &opts).unwrap();
    let ex = extrapolate_reports(&reports, None).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        (0.22094810685..=0.22095089228).contains(&ex.limit),
        "limit {:.15} outside the proven enclosure",
        ex.limit
    );
    let dev = (ex.limit - 0.220949103628452).abs();
    assert!(dev <= 5e-8, "limit {:.15} off by {dev:.2e}", ex.limit);
    assert!(elapsed <= 300.0, "took {elapsed:.0}s, budget 300s");
    pass(
        "criterion 4 (middle-third limit)",
        format!(
            "limit {:.15}, deviation {dev:.2e} (tolerance 5e-8), inside enclosure; {elapsed:.0}s",
            ex.limit
        ),
    );
}

/// Criterion 5: generalized Cantor limits to six significant digits.
#[test]
fn criterion_05_generalized_cantor_limits() {
    let cases = [
        (4.0 / 24.0, 0.138437531550946),
        (8.0 / 24.0, 0.220949103628452),
        (11.0 / 24.0, 0.247930030139435),
    ];
    let opts = CapacityOptions::default();
    let mut details = Vec::new();
    for (q, want) in cases {
        let reports = capacity_sweep(Family::IntervalSet, q, 1.0, 5..=16, &opts).unwrap();
        let ex = extrapolate_reports(&reports, None).unwrap();
        let rel = rel_err(ex.limit, want);
        assert!(
            rel <= 5e-7,
            "q={q:.4}: limit {:.15} vs {want:.15}, rel {rel:.2e}",
            ex.limit
        );
        details.push(format!("q={q:.4}: rel {rel:.1e}"));
    }
    pass(
        "criterion 5 (generalized Cantor limits, 6 digits)",
        details.join("; "),
    );
}

/// Criterion 6: dust levels and the dust limit.
#[test]
fn criterion_06_dust_levels_and_limit() {
    let opts = CapacityOptions::default();
    let mut worst: f64 = 0.0;
    let reports = capacity_sweep(Family::Dust, 1.0 / 3.0, 1.0, 1..=8, &opts).unwrap();
    for (k, want) in MIDDLE_THIRD_DUST_REFERENCE.iter().take(7) {
        let rep = &reports[(*k as usize) - 1];
        let rel = rel_err(rep.capacity, *want);
        assert!(rel <= 5e-10, "dust k={k}: relative error {rel:.2e}");
        worst = worst.max(rel);
    }
    let ex = extrapolate_reports(&reports, None).unwrap();
    assert!(
        (0.573550..=0.575095).contains(&ex.limit),
        "dust limit {:.15} outside the proven enclosure",
        ex.limit
    );
    let dev = (ex.limit - 0.574345031687538).abs();
    assert!(dev <= 2e-6, "dust limit off by {dev:.2e}");
    pass(
        "criterion 6 (dust levels and limit)",
        format!(
            "levels 1..7 worst rel {worst:.1e}; limit {:.15}, deviation {dev:.2e} (tolerance 2e-6)",
            ex.limit
        ),
    );
}

/// Criterion 7: generalized dust limits to five significant digits.
///
/// The first difference sits visibly off the asymptotic decay line for the
/// dust family, so the fit drops it and uses difference indices 2..6 of the
/// computed levels 1..7.
#[test]
fn criterion_07_generalized_dust_limits() {
    let cases = [
        (1.0 / 20.0, 0.393193419290132),
        (4.0 / 20.0, 0.539195036874426),
        (8.0 / 20.0, 0.583884621972929),
    ];
    let opts = CapacityOptions::default();
    let mut details = Vec::new();
    for (q, want) in cases {
        let reports = capacity_sweep(Family::Dust, q, 1.0, 1..=7, &opts).unwrap();
        let ex = extrapolate_reports(&reports, Some((2, 6))).unwrap();
        let rel = rel_err(ex.limit, want);
        assert!(
            rel <= 5e-6,
            "q={q:.3}: limit {:.15} vs {want:.15}, rel {rel:.2e}",
            ex.limit
        );
        details.push(format!("q={q:.3}: rel {rel:.1e}"));
    }
    pass(
        "criterion 7 (generalized dust limits, 5 digits)",
        details.join("; "),
    );
}

/// Criterion 8: structural bounds and decay, fixed grid plus random samples.
#[test]
fn criterion_08_structural_properties() {
    for q in [0.1, 1.0 / 3.0, 0.45] {
        for k in 2..=8 {
            let cfg = cantor_interval_points(&CantorParameters::interval(q, k).unwrap()).unwrap();
            check_structure(&cfg).unwrap_or_else(|e| panic!("q={q} k={k}: {e}"));
        }
    }
    let us = lcg(100, 0xC0FFEE);
    let mut tested = 0;
    let mut i = 0;
    while tested < 50 {
        let q = 0.05 + 0.40 * us[i % 100];
        let k = 2 + (us[(i + 1) % 100] * 7.0) as u32;
        i += 2;
        // Stay inside the f64-resolvable region.
        if q.powi(k as i32 - 1) * (1.0 - 2.0 * q) <= 1e-12 {
            continue;
        }
        let cfg = cantor_interval_points(&CantorParameters::interval(q, k).unwrap()).unwrap();
        check_structure(&cfg).unwrap_or_else(|e| panic!("random q={q:.4} k={k}: {e}"));
        tested += 1;
    }
    pass(
        "criterion 8 (structural properties)",
        format!("grid 3x7 plus {tested} random (q, k) all satisfy bounds and decay"),
    );
}

/// Criterion 9: matrix-free solutions against dense oracles, both families.
#[test]
fn criterion_09_oracle_equivalence() {
    let mut details = Vec::new();
    for (family, k) in [(Family::IntervalSet, 12u32), (Family::Dust, 6u32)] {
        let params = match family {
            Family::IntervalSet => CantorParameters::interval(1.0 / 3.0, k).unwrap(),
            Family::Dust => CantorParameters::dust(1.0 / 3.0, k).unwrap(),
        };
        let cfg = charge_configuration(&params).unwrap();
        let red = reduce_by_symmetry(cfg).unwrap();
        let n = red.len();
        assert_eq!(n, 2048);
        let b = assemble_dense_b(&red).unwrap();

        // Matrix-free product against the dense product.
        let y = unit_l1_charges(n, 0xABCD + k as u64);
        let op = BOperator::new(&red, SummationConfig::hierarchical()).unwrap();
        let got = op.apply(&y).unwrap();
        let want = &b * nalgebra::DVector::from_column_slice(&y);
        let apply_dev = got
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            apply_dev <= 1e-11,
            "{family:?}: apply deviation {apply_dev:.2e}"
        );

        // Matrix-free solve against a dense direct solve.
        let rep = capacity_of_level(&params, &CapacityOptions::default()).unwrap();
        let rhs = nalgebra::DVector::from_element(n, 1.0);
        let dense = b.lu().solve(&rhs).expect("dense solve");
        let solve_dev = rep
            .reduced_solution
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            solve_dev <= 1e-9,
            "{family:?}: solve deviation {solve_dev:.2e}"
        );
        details.push(format!(
            "{}: apply {apply_dev:.1e}, solve {solve_dev:.1e}",
            params.family.as_str()
        ));
    }
    pass(
        "criterion 9 (oracle equivalence, n=2048 both families)",
        details.join("; "),
    );
}

/// Criterion 10: backend agreement on clustered points and the measured
/// scaling exponent of the fast backend.
#[test]
fn criterion_10_backend_contract() {
    // Full direct comparison on a mid-size clustered set.
    let red14 = reduce_by_symmetry(
        cantor_interval_points(&CantorParameters::interval(1.0 / 3.0, 14).unwrap()).unwrap(),
    )
    .unwrap();
    let y = unit_l1_charges(red14.len(), 0xFEED);
    let direct = log_potential_direct(&red14.zpoints, &y).unwrap();
    let fast = log_potential_fast(&red14.zpoints, &y, &SummationConfig::hierarchical()).unwrap();
    let dev14 = direct
        .iter()
        .zip(&fast)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(dev14 <= 1e-11, "level-14 deviation {dev14:.2e}");

    // Large clustered set: the direct oracle is evaluated on a random subset
    // of targets.
    let red17 = reduce_by_symmetry(
        cantor_interval_points(&CantorParameters::interval(1.0 / 3.0, 17).unwrap()).unwrap(),
    )
    .unwrap();
    let n = red17.len();
    let y = unit_l1_charges(n, 0xBEEF);
    let fast = log_potential_fast(&red17.zpoints, &y, &SummationConfig::hierarchical()).unwrap();
    let picks = lcg(1200, 0x1234);
    let mut dev17: f64 = 0.0;
    for u in picks {
        let j = (u * n as f64) as usize % n;
        let mut want = Complex64::new(0.0, 0.0);
        for (l, zl) in red17.zpoints.iter().enumerate() {
            if l != j {
                want += y[l] * (red17.zpoints[j] - zl).ln();
            }
        }
        dev17 = dev17.max((fast[j] - want).norm());
    }
    assert!(dev17 <= 1e-11, "level-17 sampled deviation {dev17:.2e}");

    // Scaling exponent of the operator matvec path, 1e4 vs 1e5 points.
    let time_matvec = |n: usize, seed: u64| {
        let re = lcg(n, seed);
        let im = lcg(n, seed ^ 0xA5A5);
        let z: Vec<Complex64> = re
            .into_iter()
            .zip(im)
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        let y = lcg(n, seed ^ 0x777);
        let engine =
            logcap::fastsum::PotentialEngine::new(z, SummationConfig::hierarchical()).unwrap();
        let start = Instant::now();
        let _ = engine.mutual_real(&y).unwrap();
        start.elapsed().as_secs_f64()
    };
    let _ = time_matvec(10_000, 3); // warm-up
    let t1 = time_matvec(10_000, 3).min(time_matvec(10_000, 5));
    let t2 = time_matvec(100_000, 7);
    let exponent = (t2 / t1).ln() / 10.0f64.ln();
    assert!(
        exponent < 1.3,
        "scaling exponent {exponent:.2} (t1={t1:.3}s, t2={t2:.3}s)"
    );
    pass(
        "criterion 10 (backend contract)",
        format!(
            "deviations {dev14:.1e} (n=8192, full), {dev17:.1e} (n=65536, sampled); scaling exponent {exponent:.2}"
        ),
    );
}

/// Criterion 11: preconditioned spectrum and the growth of the condition
/// number.
#[test]
fn criterion_11_preconditioner_spectrum() {
    let cond = |mat: &nalgebra::DMatrix<f64>| -> f64 {
        let sv = mat.clone().svd(false, false).singular_values;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for s in sv.iter() {
            lo = lo.min(*s);
            hi = hi.max(*s);
        }
        hi / lo
    };

    // Condition ratio at m = 2^10, j = 4.
    let cfg = cantor_interval_points(&CantorParameters::interval(1.0 / 3.0, 10).unwrap()).unwrap();
    let pre = build_preconditioner(&cfg, 4).unwrap();
    let red = reduce_by_symmetry(cfg).unwrap();
    let b = assemble_dense_b(&red).unwrap();
    let n = b.nrows();
    let mut pinv_b = nalgebra::DMatrix::zeros(n, n);
    for col in 0..n {
        let v: Vec<f64> = (0..n).map(|row| b[(row, col)]).collect();
        let solved = pre.apply_inverse(&v).unwrap();
        for row in 0..n {
            pinv_b[(row, col)] = solved[row];
        }
    }
    let ratio = cond(&pinv_b) / cond(&b);
    assert!(ratio <= 0.06, "condition ratio {ratio:.4} > 0.06");

    // kappa(B) grows about linearly in m over k = 4..10.
    let mut logs = Vec::new();
    for k in 4..=10 {
        let red = reduce_by_symmetry(
            cantor_interval_points(&CantorParameters::interval(1.0 / 3.0, k).unwrap()).unwrap(),
        )
        .unwrap();
        let kb = cond(&assemble_dense_b(&red).unwrap());
        logs.push((((1u64 << k) as f64).ln(), kb.ln()));
    }
    let n = logs.len() as f64;
    let xbar = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = logs
        .iter()
        .map(|p| (p.0 - xbar) * (p.1 - ybar))
        .sum::<f64>()
        / logs
            .iter()
            .map(|p| (p.0 - xbar) * (p.0 - xbar))
            .sum::<f64>();
    assert!(
        (0.5..=2.0).contains(&slope),
        "kappa(B) log-log slope {slope:.3} not within a factor 2 of linear"
    );
    pass(
        "criterion 11 (preconditioner spectrum)",
        format!("condition ratio {ratio:.4} (<= 0.06); kappa growth slope {slope:.3} in [0.5, 2]"),
    );
}

/// Criterion 12: the a-posteriori bound is sound on the two-disk family.
#[test]
fn criterion_12_error_bound_soundness() {
    let opts = CapacityOptions::default();
    let mut worst_margin = f64::INFINITY;
    for r in [1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 1.0 / 6.0] {
        let rep = two_disk_csm(r, &opts).unwrap();
        let charges = recover_charges(&rep).unwrap();
        let cfg = ChargeConfiguration::two_disks(r).unwrap();
        let eb = error_bound(&cfg, &charges, rep.c, 128, &SummationConfig::direct()).unwrap();
        let exact = two_disk_exact(r).unwrap().capacity_exact;
        let err = (exact - rep.capacity).abs();
        assert!(
            err <= eb.bound,
            "r={r}: error {err:.3e} exceeds bound {:.3e}",
            eb.bound
        );
        worst_margin = worst_margin.min(eb.bound / err.max(1e-300));
    }
    let rep = two_disk_csm(0.01, &opts).unwrap();
    let charges = recover_charges(&rep).unwrap();
    let cfg = ChargeConfiguration::two_disks(0.01).unwrap();
    let eb = error_bound(&cfg, &charges, rep.c, 256, &SummationConfig::direct()).unwrap();
    let closed = two_disk_error_bound_closed_form(0.01);
    let factor = (eb.bound / closed).max(closed / eb.bound);
    assert!(
        factor <= 3.0,
        "bound {:.3e} vs closed form {closed:.3e}: factor {factor:.2}",
        eb.bound
    );
    pass(
        "criterion 12 (error-bound soundness)",
        format!(
            "bound holds on the radius scan (min bound/error {worst_margin:.1e}); r=0.01 bound within factor {factor:.2} of the closed form"
        ),
    );
}

/// Criterion 13: extrapolation against the published sequence and an exact
/// geometric series.
#[test]
fn criterion_13_extrapolation_fit() {
    let fit = fit_log_differences(&MIDDLE_THIRD_REFERENCE, None, None).unwrap();
    let dev_p1 = (fit.p1 - (-0.671894676421546)).abs();
    assert!(dev_p1 <= 1e-6, "p1 {:.15} off by {dev_p1:.2e}", fit.p1);

    let synthetic: Vec<(u32, f64)> = (0..14)
        .map(|k| (k, 0.2 + (0.5f64).powi(k as i32)))
        .collect();
    let ex = extrapolate_values(&synthetic, None).unwrap();
    let dev_limit = (ex.limit - 0.2).abs();
    assert!(dev_limit <= 1e-12, "synthetic limit off by {dev_limit:.2e}");
    pass(
        "criterion 13 (extrapolation fit)",
        format!("published-sequence p1 deviation {dev_p1:.1e}; synthetic-limit deviation {dev_limit:.1e}"),
    );
}

/// Companion checks from the invariants: monotonicity per family and backend
/// invariance of the pipeline.
#[test]
fn pipeline_invariants() {
    let opts = CapacityOptions::default();

    // Interval capacities decrease level over level.
    let caps = capacity_sweep(Family::IntervalSet, 1.0 / 3.0, 1.0, 1..=13, &opts).unwrap();
    for w in caps.windows(2) {
        assert!(
            w[1].capacity < w[0].capacity,
            "interval sequence must decrease"
        );
    }

    // Dust at unit radius factor increases; the enlarged radius decreases.
    let up = capacity_sweep(Family::Dust, 1.0 / 3.0, 1.0, 1..=6, &opts).unwrap();
    for w in up.windows(2) {
        assert!(w[1].capacity > w[0].capacity, "dust sequence must increase");
    }
    let (lo, hi) = logcap::capacity::dust_bounds(1.0 / 3.0);
    for rep in &up {
        assert!(
            rep.capacity > lo && rep.capacity < hi,
            "dust level outside bounds"
        );
    }
    let down = capacity_sweep(Family::Dust, 1.0 / 3.0, 1.25, 1..=6, &opts).unwrap();
    for w in down.windows(2) {
        assert!(
            w[1].capacity < w[0].capacity,
            "enlarged dust sequence must decrease"
        );
    }

    // The capacity is backend-invariant.
    let params = CantorParameters::dust(1.0 / 3.0, 5).unwrap();
    let d = capacity_of_level(
        &params,
        &CapacityOptions {
            backend: BackendChoice::Direct,
            ..Default::default()
        },
    )
    .unwrap();
    let h = capacity_of_level(
        &params,
        &CapacityOptions {
            backend: BackendChoice::Hierarchical,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((d.capacity - h.capacity).abs() <= 1e-11);

    // Unpreconditioned and preconditioned solves agree.
    let params = CantorParameters::interval(1.0 / 3.0, 9).unwrap();
    let with = capacity_of_level(&params, &opts).unwrap();
    let without = capacity_of_level(
        &params,
        &CapacityOptions {
            precond: PrecondChoice::Off,
            ..Default::default()
        },
    )
    .unwrap();
    let dev = with
        .reduced_solution
        .iter()
        .zip(&without.reduced_solution)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 1e-9, "solutions differ by {dev:.2e}");

    // Dust structure checks run in the reduced mode.
    let cfg = cantor_dust_points(&CantorParameters::dust(0.3, 3).unwrap()).unwrap();
    let report = check_structure(&cfg).unwrap();
    assert!(report.block_identity_dev.is_some());

    // GMRES through the library solves the same system as the operator's
    // dense oracle (spot check at a level with a preconditioner).
    let params = CantorParameters::interval(1.0 / 3.0, 8).unwrap();
    let red = reduce_by_symmetry(charge_configuration(&params).unwrap()).unwrap();
    let op = BOperator::new(&red, SummationConfig::direct()).unwrap();
    let cfgk = krylov::SolverConfig {
        preconditioner: Some(build_preconditioner(&red.source, 4).unwrap()),
        ..Default::default()
    };
    let res = krylov::gmres(&op, &vec![1.0; red.len()], &cfgk).unwrap();
    assert!(res.converged);
    assert!(res.true_relative_residual <= 1e-10);

    pass(
        "pipeline invariants",
        "monotonicity, backend invariance, preconditioning invariance all hold".into(),
    );
}
