//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use gridsurv::cases::ieee30_augmented;
use gridsurv::runtime::{StdClock, ThreadExecutor};
use gridsurv_core::clock::{Clock, Sequential};
use gridsurv_core::contingency::{count_states, enumerate_states};
use gridsurv_core::model::{fixtures, Contingency, Design, Element, PowerSystem, SurvivabilityPolicy};
use gridsurv_core::opf::{evaluate_cut, extract_feasibility_cut, solve_psp, BigM, FeasibilityCut};
use gridsurv_core::planner::{plan_with, Algorithm, PlanReport, PlannerConfig, Runtime, Termination};
use gridsurv_core::separation::{brute_force_worst_case_with, solve_separation_with, SeparationOptions, SeparationResult};
use gridsurv_core::solver::{Backend, BuiltinSolver, LinearProgram, LpSolution, MipOptions, MipSolution, MixedIntegerProgram, SolverError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const AGREEMENT_REL: f64 = 1e-3;
const RUN_SECONDS: f64 = 60.0;
const ORACLE_ABS: f64 = 1e-5;
const ORACLE_SECONDS: f64 = 600.0;
const DUALITY_REL: f64 = 1e-6;
const CUT_ABS: f64 = 1e-6;
const FIXTURE_ABS: f64 = 1e-6;
const CUT_SHARE: f64 = 0.01;
const IEEE_SECONDS: f64 = 600.0;
const BIG_M_REL: f64 = 1e-5;
/// Master gap for suite 1; far below the agreement tolerances so that
/// optimal objectives are compared, not incumbents.
const SUITE_GAP: f64 = 1e-7;

const ALGORITHMS: [Algorithm; 3] = [Algorithm::Extensive, Algorithm::Benders, Algorithm::CuttingPlane];

/// Built-in solver that records the duality gap of every LP it solves.
#[derive(Default)]
struct Audited {
    inner: BuiltinSolver,
    gaps: Mutex<(usize, f64)>,
}

impl Audited {
    fn record(&self, gap: f64) {
        let mut g = self.gaps.lock().unwrap();
        g.0 += 1;
        g.1 = g.1.max(gap);
    }
}

impl Backend for Audited {
    fn solve_lp(&self, lp: &LinearProgram) -> Result<LpSolution, SolverError> {
        let sol = self.inner.solve_lp(lp)?;
        if sol.is_optimal() {
            self.record(sol.duality_gap());
        }
        Ok(sol)
    }

    fn solve_milp(&self, mip: &MixedIntegerProgram, options: &MipOptions, clock: &dyn Clock) -> Result<MipSolution, SolverError> {
        self.inner.solve_milp(mip, options, clock)
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Instance {
    name: String,
    sys: PowerSystem,
}

fn suite_instances() -> Vec<Instance> {
    let mut out = vec![
        Instance {
            name: "t2".into(),
            sys: fixtures::t2(),
        },
        Instance {
            name: "t3-cand".into(),
            sys: fixtures::t3_with_candidates(),
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..8 {
        out.push(Instance {
            name: format!("random-{i}"),
            sys: common::random_system(&mut rng, 12),
        });
    }
    out
}

struct Run {
    instance: usize,
    k: usize,
    algorithm: Algorithm,
    report: PlanReport,
    seconds: f64,
}

fn suite_config(algorithm: Algorithm, k: usize, big_m: BigM) -> PlannerConfig {
    let mut cfg = PlannerConfig::new(algorithm, SurvivabilityPolicy::table_one(k));
    cfg.gap = SUITE_GAP;
    cfg.big_m = big_m;
    cfg.separation.big_m = big_m;
    cfg
}

fn run_suite(instances: &[Instance], backend: &dyn Backend, big_m: BigM) -> Vec<Run> {
    let executor = ThreadExecutor::available();
    let mut runs = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for k in 0..=2 {
            for algorithm in ALGORITHMS {
                let clock = StdClock::new();
                let rt = Runtime {
                    backend,
                    clock: &clock,
                    executor: &executor,
                };
                let t0 = Instant::now();
                let report = plan_with(&rt, &inst.sys, &suite_config(algorithm, k, big_m))
                    .unwrap_or_else(|e| panic!("{} k={k} {algorithm:?}: {e}", inst.name));
                runs.push(Run {
                    instance: i,
                    k,
                    algorithm,
                    report,
                    seconds: t0.elapsed().as_secs_f64(),
                });
            }
        }
    }
    runs
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_1(instances: &[Instance], runs: &[Run]) -> Verdict {
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    for group in runs.chunks(ALGORITHMS.len()) {
        let name = &instances[group[0].instance].name;
        let k = group[0].k;
        let first = &group[0].report;
        for r in &group[1..] {
            if r.report.termination != first.termination {
                problems.push(format!("{name} k={k}: {:?} vs {:?}", first.termination, r.report.termination));
            }
            if let (Some(a), Some(b)) = (first.objective(), r.report.objective()) {
                worst = worst.max(rel_diff(a, b));
            }
        }
        for r in group {
            if !matches!(r.report.termination, Termination::Optimal | Termination::Infeasible) {
                problems.push(format!("{name} k={k} {:?} stopped: {:?}", r.algorithm, r.report.termination));
            }
        }
    }
    let optimal = runs.iter().filter(|r| r.report.termination == Termination::Optimal).count();
    let pass = problems.is_empty() && worst <= AGREEMENT_REL && slowest < RUN_SECONDS;
    let mut detail = format!(
        "{} instances x k=0..2 x ef/bd/cpa = {} runs ({optimal} optimal), max relative difference {worst:.1e} (limit {AGREEMENT_REL:.0e}), slowest run {slowest:.2}s (limit {RUN_SECONDS}s)",
        instances.len(),
        runs.len()
    );
    if !problems.is_empty() {
        detail += &format!("; {}", problems.join("; "));
    }
    verdict(pass, detail)
}

fn criterion_2(backend: &Audited) -> (Verdict, Vec<(SeparationResult, PowerSystem)>) {
    let opts = SeparationOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut results = Vec::new();
    for k in 1..=3 {
        for _ in 0..25 {
            let sys = common::random_system(&mut rng, 12);
            let design = common::random_design(&mut rng, &sys);
            let thr = 0.05 * sys.total_demand();
            let milp = solve_separation_with(backend, &StdClock::new(), &sys, &design, k, thr, &opts).unwrap();
            let brute = brute_force_worst_case_with(backend, &Sequential, &sys, &design, k, thr, &opts).unwrap();
            worst = worst.max((milp.worst_shed - brute.worst_shed).abs());
            pairs += 1;
            results.push((milp, sys.clone()));
            results.push((brute, sys));
        }
    }
    let seconds = t0.elapsed().as_secs_f64();
    let v = verdict(
        worst <= ORACLE_ABS && seconds < ORACLE_SECONDS,
        format!("{pairs} (system, plan) pairs over k=1..3, max |MILP - brute force| {worst:.1e} (limit {ORACLE_ABS:.0e}), {seconds:.1}s (limit {ORACLE_SECONDS}s)"),
    );
    (v, results)
}

/// Duality gaps of every LP solved in suites 1 and 2, plus the dual value
/// rebuilt from the extracted prices for each separation result.
fn criterion_3(backend: &Audited, separations: &[(SeparationResult, PowerSystem)]) -> Verdict {
    let (solves, lp_gap) = *backend.gaps.lock().unwrap();
    let mut price_gap = 0.0f64;
    for (r, sys) in separations {
        let cut = FeasibilityCut::from_duals(sys, &r.psp.contingency, r.psp.duals.clone(), BigM::default(), 0.0);
        let dual = evaluate_cut(&cut, &r.psp.design);
        price_gap = price_gap.max((r.psp.shed - dual).abs() / (1.0 + r.psp.shed.abs()));
    }
    verdict(
        solves > 0 && lp_gap <= DUALITY_REL && price_gap <= DUALITY_REL,
        format!(
            "{solves} subproblem solves, max relative gap {lp_gap:.1e}; dual value from extracted prices max gap {price_gap:.1e} (limit {DUALITY_REL:.0e})"
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut cuts_checked = 0usize;
    let mut compliant_checked = 0usize;
    let mut problems = Vec::new();
    let policies = [
        SurvivabilityPolicy::table_one(1),
        SurvivabilityPolicy::table_one(2),
        SurvivabilityPolicy::with_epsilon(2, 0.2).unwrap(),
    ];
    for case in 0..8 {
        let sys = common::random_system(&mut rng, 10);
        let designs = common::all_designs(&sys);
        for policy in &policies {
            let compliant: Vec<&Design> = designs.iter().filter(|d| common::compliant(&sys, d, policy)).collect();
            compliant_checked += compliant.len();
            let mut cuts: Vec<FeasibilityCut> = Vec::new();
            // cuts the planners generate
            for algorithm in [Algorithm::Benders, Algorithm::CuttingPlane] {
                let mut cfg = PlannerConfig::new(algorithm, policy.clone());
                cfg.gap = SUITE_GAP;
                cuts.extend(plan_with(&Runtime::basic(), &sys, &cfg).unwrap().cuts);
            }
            // and a cut from every violated state of every plan
            for x_hat in &designs {
                for c in enumerate_states(&sys, policy.k) {
                    let thr = policy.threshold(c.cardinality(), &sys).unwrap();
                    let r = solve_psp(&sys, x_hat, &c, BigM::default()).unwrap();
                    let Ok(cut) = extract_feasibility_cut(&r, &sys, BigM::default(), thr) else {
                        continue;
                    };
                    let margin = evaluate_cut(&cut, x_hat) - thr;
                    if margin < (r.shed - thr) - CUT_ABS {
                        problems.push(format!("case {case}: cut at {} misses its own plan", c.describe(&sys)));
                    }
                    cuts.push(cut);
                }
            }
            for cut in &cuts {
                cuts_checked += 1;
                if let Some(x) = compliant.iter().find(|x| evaluate_cut(cut, x) > cut.rhs + CUT_ABS) {
                    problems.push(format!(
                        "case {case}: cut for {} excludes compliant {:?}",
                        cut.contingency.describe(&sys),
                        x.builds(&sys)
                    ));
                }
            }
        }
    }
    let mut detail = format!("{cuts_checked} cuts checked against {compliant_checked} compliant plans found by enumeration");
    if !problems.is_empty() {
        detail += &format!("; {} problems, first: {}", problems.len(), problems[0]);
    }
    verdict(problems.is_empty() && cuts_checked > 0, detail)
}

fn criterion_5() -> Verdict {
    let expected: [(usize, [u64; 4]); 2] = [(152, [152, 11_628, 585_428, 21_959_478]), (110, [110, 6_105, 221_925, 5_995_110])];
    let t0 = Instant::now();
    let mut got = Vec::new();
    let mut pass = true;
    for (n, counts) in expected {
        for (k, want) in (1..=4).zip(counts) {
            let c = count_states(n, k).unwrap();
            pass &= c == want;
            got.push(format!("({n},{k})={c}"));
        }
    }
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    verdict(pass && ms < 100.0, format!("{} in {ms:.3}ms", got.join(" ")))
}

fn criterion_6() -> Verdict {
    let t2 = fixtures::t2();
    let t3 = fixtures::t3();
    let mut checks = Vec::new();
    let mut pass = true;
    let mut check = |label: String, ok: bool| {
        pass &= ok;
        checks.push(format!("{label} {}", if ok { "ok" } else { "WRONG" }));
    };
    let solve = |algorithm, policy: SurvivabilityPolicy| plan_with(&Runtime::basic(), &t2, &PlannerConfig::new(algorithm, policy)).unwrap();

    let ef0 = solve(Algorithm::Extensive, SurvivabilityPolicy::table_one(0));
    check(
        format!("EF(T2,k=0)={:.3}", ef0.objective().unwrap_or(f64::NAN)),
        ef0.objective().is_some_and(|o| (o - 80.0).abs() <= FIXTURE_ABS),
    );

    // k = 1: value and plan frozen from exhaustive search over all plans
    let k1 = SurvivabilityPolicy::table_one(1);
    let (oracle, oracle_design) = common::brute_force_plan(&t2, &k1).unwrap();
    let oracle_builds = oracle_design.builds(&t2);
    let named: Vec<&str> = oracle_builds.iter().map(|&e| t2.element_name(e)).collect();
    check(
        format!("oracle(T2,k=1)={oracle:.3} building {{{}}}", named.join(",")),
        (oracle - 100.0).abs() <= FIXTURE_ABS && oracle_builds == [Element::Generator(1)],
    );
    for algorithm in ALGORITHMS {
        let r = solve(algorithm, k1.clone());
        let builds = r.plan.as_ref().map(|p| p.design.builds(&t2));
        let ok = r.objective().is_some_and(|o| (o - oracle).abs() <= FIXTURE_ABS) && builds.as_deref() == Some(&oracle_builds[..]);
        check(
            format!("{}(T2,k=1)={:.3}", algorithm.short_name(), r.objective().unwrap_or(f64::NAN)),
            ok,
        );
    }

    let k2 = SurvivabilityPolicy::with_epsilon(2, 0.05).unwrap();
    check(
        "oracle(T2,k=2,eps=0.05)=infeasible".into(),
        common::brute_force_plan(&t2, &k2).is_none(),
    );
    for algorithm in ALGORITHMS {
        let r = solve(algorithm, k2.clone());
        check(
            format!("{}(T2,k=2,eps=0.05)={}", algorithm.short_name(), r.termination.as_str()),
            r.termination == Termination::Infeasible,
        );
    }

    let all = Design::all_built(&t3);
    for (c, want) in [
        (Contingency::none(), 0.0),
        (Contingency::from_elements([Element::Branch(0)]), 50.0),
        (Contingency::from_elements([Element::Generator(0)]), 100.0),
    ] {
        let shed = solve_psp(&t3, &all, &c, BigM::default()).unwrap().shed;
        check(
            format!("PSP(T3,{{{}}})={shed:.3}", c.describe(&t3)),
            (shed - want).abs() <= FIXTURE_ABS,
        );
    }
    verdict(pass, checks.join(", "))
}

struct IeeeRuns {
    m: u64,
    cpa: (PlanReport, f64),
    bd: (PlanReport, f64),
}

fn ieee_runs() -> IeeeRuns {
    let sys = ieee30_augmented();
    let policy = SurvivabilityPolicy::with_epsilon(2, 0.05).unwrap();
    let solver = BuiltinSolver::default();
    let executor = ThreadExecutor::available();
    let run = |algorithm| {
        let clock = StdClock::new();
        let rt = Runtime {
            backend: &solver,
            clock: &clock,
            executor: &executor,
        };
        let mut cfg = PlannerConfig::new(algorithm, policy.clone());
        cfg.time_limit = Some(IEEE_SECONDS);
        let t0 = Instant::now();
        let r = plan_with(&rt, &sys, &cfg).unwrap();
        (r, t0.elapsed().as_secs_f64())
    };
    IeeeRuns {
        m: count_states(sys.num_elements(), 2).unwrap(),
        cpa: run(Algorithm::CuttingPlane),
        bd: run(Algorithm::Benders),
    }
}

fn criterion_7(ieee: &IeeeRuns, runs: &[Run]) -> Verdict {
    let m = ieee.m;
    let (cpa, cpa_s) = (&ieee.cpa.0, ieee.cpa.1);
    let (bd, bd_s) = (&ieee.bd.0, ieee.bd.1);
    let finished = |r: &PlanReport| matches!(r.termination, Termination::Optimal | Termination::Infeasible);
    let cpa_ok = finished(cpa) && (cpa.cuts.len() as f64) <= CUT_SHARE * m as f64 && cpa_s < IEEE_SECONDS;

    let mut compared = 0;
    let mut worse = Vec::new();
    if finished(cpa) && finished(bd) {
        compared += 1;
        if cpa.cuts.len() > bd.cuts.len() {
            worse.push(format!("ieee30-aug ({} > {})", cpa.cuts.len(), bd.cuts.len()));
        }
    }
    for pair in runs.chunks(ALGORITHMS.len()) {
        let bd = &pair[1].report;
        let cpa = &pair[2].report;
        if finished(bd) && finished(cpa) && pair[0].k > 0 {
            compared += 1;
            if cpa.cuts.len() > bd.cuts.len() {
                worse.push(format!(
                    "suite instance {} k={} ({} > {})",
                    pair[0].instance,
                    pair[0].k,
                    cpa.cuts.len(),
                    bd.cuts.len()
                ));
            }
        }
    }
    let mut detail = format!(
        "ieee30-aug k=2 eps=0.05, m={m}: cpa {} with {} cuts (limit {:.2}) in {cpa_s:.1}s (limit {IEEE_SECONDS}s), objective {:.3}; bd {} with {} cuts in {bd_s:.1}s; cpa cuts <= bd cuts on {}/{compared} finished pairs",
        cpa.termination.as_str(),
        cpa.cuts.len(),
        CUT_SHARE * m as f64,
        cpa.objective().unwrap_or(f64::NAN),
        bd.termination.as_str(),
        bd.cuts.len(),
        compared - worse.len()
    );
    if !worse.is_empty() {
        detail += &format!("; more cpa cuts on {}", worse.join(", "));
    }
    verdict(cpa_ok && worse.is_empty(), detail)
}

fn criterion_8(instances: &[Instance], base: &[Run]) -> Verdict {
    let scaled = run_suite(instances, &BuiltinSolver::default(), BigM::scaled(10.0));
    let mut worst = 0.0f64;
    let mut mismatched = Vec::new();
    for (a, b) in base.iter().zip(&scaled) {
        match (a.report.objective(), b.report.objective()) {
            (Some(x), Some(y)) => worst = worst.max(rel_diff(x, y)),
            (None, None) => {}
            _ => mismatched.push(format!("{} k={} {:?}", instances[a.instance].name, a.k, a.algorithm)),
        }
    }
    let mut detail = format!(
        "{} runs re-solved with M x10, max relative change {worst:.1e} (limit {BIG_M_REL:.0e})",
        scaled.len()
    );
    if !mismatched.is_empty() {
        detail += &format!("; status changed on {}", mismatched.join(", "));
    }
    verdict(worst <= BIG_M_REL && mismatched.is_empty(), detail)
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let instances = suite_instances();
    let audited = Audited::default();

    let (ieee, runs, v2, v3) = std::thread::scope(|s| {
        // the IEEE-30 runs are the long pole; the small suites overlap them
        let ieee = s.spawn(ieee_runs);
        let runs = run_suite(&instances, &audited, BigM::default());
        let (v2, separations) = criterion_2(&audited);
        let v3 = criterion_3(&audited, &separations);
        (ieee.join().unwrap(), runs, v2, v3)
    });
    let verdicts = [
        criterion_1(&instances, &runs),
        v2,
        v3,
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(&ieee, &runs),
        criterion_8(&instances, &runs),
    ];
    let names = [
        "cross-algorithm agreement",
        "oracle equivalence",
        "strong duality",
        "cut validity",
        "combinatorial counts",
        "fixture regression",
        "iteration economy",
        "big-M robustness",
    ];
    let mut failed = 0;
    for (i, (name, v)) in names.iter().zip(&verdicts).enumerate() {
        failed += !v.pass as usize;
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
