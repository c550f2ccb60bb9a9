//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and fails
//! if any criterion fails.

mod common;

use std::time::Instant;

use common::naive;
use fdx::distributions::{pbin_tail, CdfFamily, NullCdf};
use fdx::fisher::{FisherMargins, FisherSupport, Sided};
use fdx::simharness::{mc_fdx_oracle, run_scenario, NullGenerator, SimConfig, SimProcedure};
use fdx::stepdown::{critical_values, reject, stepdown_explicit};
use fdx::transforms::{make_transform, xi_pointwise_dominates, Alpha, ProcedureKind, ProcedureSpec};
use fdx::weighting::{wgr_gm_critical_values, WeightProfile};
use rand::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn grid_1e3() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 / 1000.0).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = common::rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(0..=15usize);
        let probs: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..6) {
                0 => 0.0,
                1 => 1.0,
                2 => rng.random_range(0.0..1e-3),
                _ => rng.random(),
            })
            .collect();
        // exhaustive enumeration of all 2^n outcomes
        let mut by_count = vec![0.0f64; n + 1];
        for mask in 0u32..(1u32 << n) {
            let mut pr = 1.0;
            for (i, &p) in probs.iter().enumerate() {
                pr *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
            }
            by_count[mask.count_ones() as usize] += pr;
        }
        for k in 0..=n + 1 {
            let exact: f64 = by_count.iter().skip(k).sum();
            let got = pbin_tail(&probs, k).unwrap();
            worst = worst.max((got - exact).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |error| = {worst:.3e} over 500 vectors"))
}

fn criterion_2() -> Outcome {
    let mut rng = common::rng(2);
    let mut mismatches = 0;
    let mut step_instances = 0;
    for i in 0..1000 {
        let kind = ProcedureKind::ALL[i % ProcedureKind::ALL.len()];
        let m = rng.random_range(1..=50);
        let (spec, p) = common::random_instance(&mut rng, kind, m);
        let xi = make_transform(&spec, m).unwrap();
        if !xi.domain().is_continuum() {
            step_instances += 1;
        }
        let by_adjusted = reject(&p, &xi, spec.zeta).unwrap().rejected;
        let tau = critical_values(&xi, spec.zeta).unwrap();
        let by_scan = stepdown_explicit(&p, &tau).unwrap().rejected;
        if by_adjusted != by_scan {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 instances ({step_instances} on step families)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = common::rng(3);
    let grid = grid_1e3();
    let mut set_violations = 0;
    let mut xi_violations = 0;
    let subset = |a: &[usize], b: &[usize]| a.iter().all(|i| b.contains(i));
    for _ in 0..500 {
        let m = rng.random_range(2..=20);
        let family = common::random_step_family(&mut rng, m);
        let p = common::pvalues_on_support(&mut rng, &family);
        let alpha = Alpha::new(*[0.05, 0.1, 0.25].choose(&mut rng).unwrap()).unwrap();
        let zeta = *[0.05, 0.2, 0.5].choose(&mut rng).unwrap();
        let run = |kind: ProcedureKind| {
            let mut spec = ProcedureSpec::new(kind, alpha, zeta).unwrap();
            if kind.needs_family() {
                spec = spec.with_family(family.clone());
            }
            let xi = make_transform(&spec, m).unwrap();
            let rejected = reject(&p, &xi, zeta).unwrap().rejected;
            (xi, rejected)
        };
        let (_, lr) = run(ProcedureKind::Lr);
        let (_, gr) = run(ProcedureKind::Gr);
        let (hlr_xi, hlr) = run(ProcedureKind::Hlr);
        let (hgr_xi, hgr) = run(ProcedureKind::Hgr);
        let (pb_xi, pb) = run(ProcedureKind::Pb);
        for (a, b) in [(&lr, &hlr), (&hlr, &pb), (&gr, &hgr), (&hgr, &pb)] {
            if !subset(a, b) {
                set_violations += 1;
            }
        }
        for other in [&hlr_xi, &hgr_xi] {
            if !xi_pointwise_dominates(&pb_xi, other, &grid, 1e-12).unwrap() {
                xi_violations += 1;
            }
        }
    }
    outcome(
        set_violations == 0 && xi_violations == 0,
        format!("{set_violations} set-inclusion and {xi_violations} pointwise violations in 500 families"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = common::rng(4);
    let grid = grid_1e3();
    let mut violations = 0;
    for i in 0..100 {
        let m = rng.random_range(2..=30);
        let family = if i % 2 == 0 {
            common::random_step_family(&mut rng, m)
        } else {
            common::random_continuous_family(&mut rng, m)
        };
        let alpha = Alpha::new(rng.random_range(0.01..0.5)).unwrap();
        let spec = ProcedureSpec::new(ProcedureKind::Hgr, alpha, 0.5)
            .unwrap()
            .with_family(family);
        let xi = make_transform(&spec, m).unwrap();
        let mut ev = xi.evaluator();
        for &t in &grid {
            let mut prev = ev.eval(1, t);
            for ell in 2..=m {
                let cur = ev.eval(ell, t);
                if cur > prev + 1e-12 {
                    violations += 1;
                }
                prev = cur;
            }
        }
    }
    outcome(violations == 0, format!("{violations} increases in l over 100 families"))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut rng = common::rng(5);
    let mut worst: f64 = 0.0;
    let tau = |spec: &ProcedureSpec, m: usize| {
        critical_values(&make_transform(spec, m).unwrap(), spec.zeta)
            .unwrap()
            .tau()
            .to_vec()
    };
    for _ in 0..40 {
        let m = rng.random_range(1..=60);
        let alpha = Alpha::new(rng.random_range(0.01..0.4)).unwrap();
        let zeta = rng.random_range(0.02..0.95);
        let spec = |kind| ProcedureSpec::new(kind, alpha, zeta).unwrap();
        let uniform = CdfFamily::uniform(m).unwrap();
        let ones = vec![1.0; m];
        let lr = tau(&spec(ProcedureKind::Lr), m);
        let gr = tau(&spec(ProcedureKind::Gr), m);
        let hlr = tau(&spec(ProcedureKind::Hlr).with_family(uniform.clone()), m);
        let hgr = tau(&spec(ProcedureKind::Hgr).with_family(uniform), m);
        worst = worst.max(max_gap(&hlr, &lr)).max(max_gap(&hgr, &gr));
        for (kind, base) in [
            (ProcedureKind::WlrAm, &lr),
            (ProcedureKind::WlrGm, &lr),
            (ProcedureKind::WgrAm, &gr),
            (ProcedureKind::WgrGm, &gr),
        ] {
            worst = worst.max(max_gap(&tau(&spec(kind).with_weights(ones.clone()), m), base));
        }
        let weights = common::random_weights(&mut rng, m);
        let generic = tau(&spec(ProcedureKind::WgrGm).with_weights(weights.clone()), m);
        let closed = wgr_gm_critical_values(m, alpha, zeta, &WeightProfile::new(weights).unwrap()).unwrap();
        worst = worst.max(max_gap(&generic, closed.tau()));
    }
    outcome(worst <= 1e-9, format!("max critical-value gap = {worst:.3e}"))
}

fn criterion_6() -> Outcome {
    let m = 50;
    let reps = 10_000;
    let alpha = Alpha::new(0.1).unwrap();
    let zeta = 0.2;
    let mut rng = common::rng(6);
    let margins: Vec<FisherMargins> = (0..m)
        .map(|_| FisherMargins::new(25, 25, rng.random_range(1..=12)).unwrap())
        .collect();
    let weights = common::random_weights(&mut rng, m);
    let uniform = NullGenerator::Uniform {
        m,
        m_false: 10,
        alt_scale: 1e-4,
    };
    let fisher = NullGenerator::Fisher {
        margins,
        sided: Sided::Two,
        m_false: 10,
    };
    let weighted = NullGenerator::Weighted {
        weights: weights.clone(),
        m_false: 10,
        alt_scale: 1e-4,
    };
    use ProcedureKind as K;
    let plain = [K::Lr, K::Gr, K::Hlr, K::Hgr, K::HgrNonAdaptive, K::Pb];
    let weighted_kinds = [K::WlrAm, K::WlrGm, K::WpbAm, K::WpbGm, K::WgrAm, K::WgrGm];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, generator, kinds) in [
        ("uniform", &uniform, &plain),
        ("fisher", &fisher, &plain),
        ("weighted", &weighted, &weighted_kinds),
    ] {
        let start = Instant::now();
        let family = generator.family().unwrap();
        let mut worst_margin = f64::NEG_INFINITY;
        for (j, &kind) in kinds.iter().enumerate() {
            let mut spec = ProcedureSpec::new(kind, alpha, zeta).unwrap();
            if kind.needs_family() {
                spec = spec.with_family(family.clone().unwrap());
            }
            if kind.weighting().is_some() {
                spec = spec.with_weights(weights.clone());
            }
            let est = mc_fdx_oracle(generator, &spec, reps, 600 + j as u64).unwrap();
            let margin = est.estimate - (zeta + 3.0 * est.se);
            worst_margin = worst_margin.max(margin);
            if margin > 0.0 {
                ok = false;
                lines.push(format!("{name}/{kind}: {:.4} exceeds bound", est.estimate));
            }
        }
        lines.push(format!(
            "{name}: worst estimate - bound = {worst_margin:.4} ({:.1}s)",
            start.elapsed().as_secs_f64()
        ));
    }
    outcome(ok, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let config = SimConfig::study(800, 80, 144, 0.4, 200, 20_240_611);
    let summary = run_scenario(&config, &SimProcedure::study_set()).unwrap();
    let expected = [
        ("bh", 0.0803),
        ("lr", 0.0),
        ("hlr", 0.3328),
        ("gr", 0.1195),
        ("pb", 0.4412),
        ("hgr", 0.4406),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, want) in expected {
        let got = summary
            .procedures
            .iter()
            .find(|p| p.label == label)
            .unwrap()
            .mean_tdp;
        if (got - want).abs() > 0.05 {
            ok = false;
        }
        parts.push(format!("{label} {got:.4} (ref {want})"));
    }
    outcome(ok, format!("mean TDP: {}", parts.join(", ")))
}

struct Fixture {
    pvals: Vec<f64>,
    family: CdfFamily,
}

fn fixture() -> Fixture {
    let rows = common::read_counts(common::SYNTHETIC_COUNTS);
    let supports: Vec<FisherSupport> = rows
        .iter()
        .map(|r| FisherSupport::new(r.table.margins, Sided::One))
        .collect();
    let pvals = rows
        .iter()
        .zip(&supports)
        .map(|(r, s)| s.pvalue(r.table.x))
        .collect();
    let family = CdfFamily::new(supports.iter().map(|s| NullCdf::Step(s.cdf().clone())).collect()).unwrap();
    Fixture { pvals, family }
}

// Rejection counts on the synthetic count fixture, one-sided Fisher tests,
// alpha = 0.05, produced by the naive explicit step-down in `common::naive`.
const FIXTURE_EXPECTED: [(f64, [(ProcedureKind, usize); 5]); 2] = [
    (
        0.5,
        [
            (ProcedureKind::Lr, 15),
            (ProcedureKind::Hlr, 19),
            (ProcedureKind::Gr, 16),
            (ProcedureKind::Pb, 19),
            (ProcedureKind::Hgr, 19),
        ],
    ),
    (
        0.05,
        [
            (ProcedureKind::Lr, 12),
            (ProcedureKind::Hlr, 14),
            (ProcedureKind::Gr, 12),
            (ProcedureKind::Pb, 14),
            (ProcedureKind::Hgr, 14),
        ],
    ),
];

fn criterion_8() -> Vec<Outcome> {
    let mut out = vec![Outcome {
        status: Status::Skip,
        detail: "pharmacovigilance counts not available offline; synthetic fixture substitutes".into(),
    }];
    let fx = fixture();
    let alpha = Alpha::new(0.05).unwrap();
    let m = fx.pvals.len();
    let mut parts = Vec::new();
    let mut ok = true;
    for (zeta, expected) in FIXTURE_EXPECTED {
        for (kind, want) in expected {
            let mut spec = ProcedureSpec::new(kind, alpha, zeta).unwrap();
            if kind.needs_family() {
                spec = spec.with_family(fx.family.clone());
            }
            let xi = make_transform(&spec, m).unwrap();
            let got = reject(&fx.pvals, &xi, zeta).unwrap().count();
            let (oracle, _) = naive::stepdown_on_support(kind, fx.family.cdfs(), 0.05, zeta, &fx.pvals);
            if got != want || oracle != want {
                ok = false;
            }
            parts.push(format!("{kind}@{zeta}: {got} (oracle {oracle}, frozen {want})"));
        }
    }
    out.push(outcome(ok, format!("synthetic fixture: {}", parts.join(", "))));
    out
}

fn criterion_9() -> Outcome {
    let fx = fixture();
    let alpha = Alpha::new(0.05).unwrap();
    let m = fx.pvals.len();
    let mut worst_ratio: f64 = 1.0;
    let mut below_one = false;
    for zeta in [0.5, 0.05] {
        let tau = |kind| {
            let spec = ProcedureSpec::new(kind, alpha, zeta)
                .unwrap()
                .with_family(fx.family.clone());
            critical_values(&make_transform(&spec, m).unwrap(), zeta).unwrap()
        };
        let pb = tau(ProcedureKind::Pb);
        let hgr = tau(ProcedureKind::Hgr);
        for (&a, &b) in pb.tau().iter().zip(hgr.tau()) {
            if a < b {
                below_one = true;
            }
            if b > 0.0 {
                worst_ratio = worst_ratio.max(a / b);
            } else if a > 0.0 {
                worst_ratio = f64::INFINITY;
            }
        }
    }
    let detail = format!("max tau_PB / tau_HGR = {worst_ratio:.4}");
    if below_one || worst_ratio > 1.25 {
        return outcome(false, format!("{detail} (hard bound [1, 1.25] violated)"));
    }
    outcome(worst_ratio <= 1.1, detail)
}

fn main() {
    let mut failed = false;
    let mut report = |n: usize, name: &str, run: &dyn Fn() -> Vec<Outcome>| {
        let start = Instant::now();
        let outcomes = run();
        let secs = start.elapsed().as_secs_f64();
        for o in outcomes {
            let tag = match o.status {
                Status::Pass => "PASS",
                Status::Fail => {
                    failed = true;
                    "FAIL"
                }
                Status::Skip => "SKIP",
            };
            println!("criterion {n} [{name}]: {tag}: {} ({secs:.1}s)", o.detail);
        }
    };
    report(1, "poisson-binomial oracle", &|| vec![criterion_1()]);
    report(2, "shortcut equivalence", &|| vec![criterion_2()]);
    report(3, "domination", &|| vec![criterion_3()]);
    report(4, "hgr monotonicity", &|| vec![criterion_4()]);
    report(5, "identity reductions", &|| vec![criterion_5()]);
    report(6, "monte-carlo fdx control", &|| vec![criterion_6()]);
    report(7, "two-sample study power", &|| vec![criterion_7()]);
    report(8, "pharmacovigilance counts", &criterion_8);
    report(9, "pb vs hgr critical values", &|| vec![criterion_9()]);
    if failed {
        std::process::exit(1);
    }
}
