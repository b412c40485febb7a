mod common;

use gridsurv_core::contingency::enumerate_states;
use gridsurv_core::model::{fixtures, Branch, Bus, Contingency, Design, Element, Generator, PowerSystem};
use gridsurv_core::opf::{evaluate_cut, extract_feasibility_cut, solve_psp, BigM, FeasibilityCut, PspResult, SHED_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_primal(sys: &PowerSystem, r: &PspResult) {
    let pos = sys.bus_positions();
    let mut net: Vec<f64> = sys.buses.iter().map(|b| -b.demand).collect();
    for (i, b) in sys.buses.iter().enumerate() {
        assert!(r.shed_by_bus[i] >= -1e-9 && r.shed_by_bus[i] <= b.demand + 1e-9);
        net[i] += r.shed_by_bus[i];
    }
    for (g, gen) in sys.generators.iter().enumerate() {
        let a = r.design.generators[g] && !r.contingency.generator_failed(g);
        let cap = if a { gen.pmax } else { 0.0 };
        assert!(r.generation[g] >= -1e-9 && r.generation[g] <= cap + 1e-6);
        net[pos[&gen.bus]] += r.generation[g];
    }
    for (e, br) in sys.branches.iter().enumerate() {
        let a = r.design.branches[e] && !r.contingency.branch_failed(e);
        let cap = if a { br.capacity } else { 0.0 };
        assert!(r.flows[e].abs() <= cap + 1e-6);
        net[pos[&br.from_bus]] -= r.flows[e];
        net[pos[&br.to_bus]] += r.flows[e];
        if a {
            let th = r.angles[pos[&br.from_bus]] - r.angles[pos[&br.to_bus]];
            assert!((r.flows[e] - br.susceptance * th).abs() <= 1e-5, "Kirchhoff on {}", br.id);
        }
    }
    assert!(net.iter().all(|v| v.abs() <= 1e-6), "balance {net:?}");
}

#[test]
fn psp_solutions_are_consistent_and_dual_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..25 {
        let sys = common::random_system(&mut rng, 10);
        let design = common::random_design(&mut rng, &sys);
        for c in std::iter::once(Contingency::none()).chain(enumerate_states(&sys, 2)) {
            let r = solve_psp(&sys, &design, &c, BigM::default()).unwrap();
            check_primal(&sys, &r);
            assert!(r.duality_gap() <= 1e-6, "gap {} on {c:?}", r.duality_gap());
            let cut = FeasibilityCut::from_duals(&sys, &c, r.duals.clone(), BigM::default(), 0.0);
            assert!((evaluate_cut(&cut, &r.design) - r.shed).abs() <= 1e-6 * (1.0 + r.shed));
            let big = solve_psp(&sys, &design, &c, BigM::scaled(10.0)).unwrap();
            assert!(
                (big.shed - r.shed).abs() <= 1e-6,
                "big-M x10 changed shed {} -> {}",
                r.shed,
                big.shed
            );
        }
    }
}

#[test]
fn generator_failures_never_reduce_shed() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..25 {
        let sys = common::random_system(&mut rng, 10);
        let design = common::random_design(&mut rng, &sys);
        for c in enumerate_states(&sys, 2) {
            let base = solve_psp(&sys, &design, &c, BigM::default()).unwrap().shed;
            let extra = Element::Generator(rng.gen_range(0..sys.generators.len()));
            let bigger = Contingency::from_elements(c.elements().chain([extra]));
            let more = solve_psp(&sys, &design, &bigger, BigM::default()).unwrap().shed;
            assert!(more >= base - 1e-6, "{c:?} + {extra:?}: {base} -> {more}");
        }
    }
}

/// Losing a line can relieve a loop flow: with e3 in service the loop
/// 1-3-2 pushes power away from bus 2, without it bus 2 is served better.
#[test]
fn line_failures_can_reduce_shed() {
    let bus = |id, demand| Bus { id, demand };
    let line = |id: &str, from_bus, to_bus, susceptance, capacity| Branch {
        id: id.into(),
        from_bus,
        to_bus,
        susceptance,
        capacity,
        invest_cost: 0.0,
        existing: true,
    };
    let sys = PowerSystem {
        buses: vec![bus(1, 0.0), bus(2, 60.0), bus(3, 60.0)],
        generators: vec![Generator {
            id: "g1".into(),
            bus: 1,
            pmax: 200.0,
            invest_cost: 0.0,
            marginal_cost: 1.0,
            existing: true,
        }],
        branches: vec![
            line("e1", 1, 3, 10.0, 60.0),
            line("e2", 3, 2, 20.0, 50.0),
            line("e3", 2, 1, 10.0, 40.0),
        ],
        sigma: 1.0,
    };
    let design = Design::all_built(&sys);
    let shed = |c: &Contingency| solve_psp(&sys, &design, c, BigM::default()).unwrap().shed;
    assert!((shed(&Contingency::none()) - 100.0 / 3.0).abs() < 1e-6);
    assert!((shed(&Contingency::from_elements([Element::Branch(1)])) - 20.0).abs() < 1e-6);
}

#[test]
fn cuts_are_valid_for_every_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut cuts_checked = 0;
    for _ in 0..12 {
        let sys = common::random_system(&mut rng, 10);
        let designs = common::all_designs(&sys);
        let total = sys.total_demand();
        let eps = [0.0, 0.05, 0.2][rng.gen_range(0..3)];
        let thr = eps * total;
        let x_hat = common::random_design(&mut rng, &sys);
        for c in enumerate_states(&sys, 2) {
            let r = solve_psp(&sys, &x_hat, &c, BigM::default()).unwrap();
            let Ok(cut) = extract_feasibility_cut(&r, &sys, BigM::default(), thr) else {
                continue;
            };
            cuts_checked += 1;
            assert!(evaluate_cut(&cut, &x_hat) - thr >= (r.shed - thr) - 1e-6);
            for x in &designs {
                let shed = solve_psp(&sys, x, &c, BigM::default()).unwrap().shed;
                // the cut is a lower bound on the shed of every plan
                assert!(
                    evaluate_cut(&cut, x) <= shed + 1e-6,
                    "cut {} above shed {}",
                    evaluate_cut(&cut, x),
                    shed
                );
                if shed <= thr + SHED_TOL {
                    assert!(!cut.is_violated_by(x));
                }
            }
        }
    }
    assert!(cuts_checked > 20, "only {cuts_checked} cuts exercised");
}

/// Shed on a two-bus system with all load at bus 2, from first principles:
/// parallel lines share flow in proportion to susceptance, so the transfer
/// limit is the total susceptance times the tightest F/B.
fn two_bus_shed(sys: &PowerSystem, design: &Design, c: &Contingency) -> f64 {
    let avail_g = |g: usize| design.generators[g] && !c.generator_failed(g);
    let avail_e = |e: usize| design.branches[e] && !c.branch_failed(e);
    let supply = |bus: u32| -> f64 {
        (0..sys.generators.len())
            .filter(|&g| avail_g(g) && sys.generators[g].bus == bus)
            .map(|g| sys.generators[g].pmax)
            .sum()
    };
    let active: Vec<_> = (0..sys.branches.len()).filter(|&e| avail_e(e)).collect();
    let transfer = if active.is_empty() {
        0.0
    } else {
        let b: f64 = active.iter().map(|&e| sys.branches[e].susceptance).sum();
        let ratio = active
            .iter()
            .map(|&e| sys.branches[e].capacity / sys.branches[e].susceptance)
            .fold(f64::INFINITY, f64::min);
        b * ratio
    };
    (sys.buses[1].demand - supply(2) - supply(1).min(transfer)).max(0.0)
}

#[test]
fn t2_shed_matches_closed_form() {
    let t2 = fixtures::t2();
    let cands = [Element::Generator(1), Element::Branch(1)];
    for mask in 0..4 {
        let design = Design::with_builds(&t2, cands.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e));
        for c in std::iter::once(Contingency::none()).chain(enumerate_states(&t2, 4)) {
            let r = solve_psp(&t2, &design, &c, BigM::default()).unwrap();
            assert!((r.shed - two_bus_shed(&t2, &design, &c)).abs() < 1e-6, "{design:?} {c:?}");
        }
    }
}
