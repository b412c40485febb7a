#![allow(dead_code)]

use gridsurv_core::contingency::enumerate_states;
use gridsurv_core::model::{Branch, Bus, Contingency, Design, Generator, PowerSystem, SurvivabilityPolicy};
use gridsurv_core::opf::{add_state_block, solve_psp, BigM, BlockSpec, Build, ShedRule, SHED_TOL};
use gridsurv_core::solver::{solve_lp, LinearProgram, Sense};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random system with 2..=5 buses and at most `max_elements` failable
/// elements; a spanning tree of existing lines, one existing generator and
/// a mix of candidates.
pub fn random_system(rng: &mut ChaCha8Rng, max_elements: usize) -> PowerSystem {
    let nb = rng.gen_range(2..=5usize);
    let buses: Vec<Bus> = (0..nb)
        .map(|i| Bus {
            id: i as u32 + 1,
            demand: if i == 0 || rng.gen_bool(0.25) {
                0.0
            } else {
                rng.gen_range(1..=6) as f64 * 10.0
            },
        })
        .collect();
    let total: f64 = buses.iter().map(|b| b.demand).sum();
    let mut generators = vec![Generator {
        id: "g1".into(),
        bus: 1,
        pmax: (total * rng.gen_range(1.0..1.6)).max(20.0).round(),
        invest_cost: 0.0,
        marginal_cost: rng.gen_range(1..=3) as f64,
        existing: true,
    }];
    let mut branches = Vec::new();
    for i in 1..nb {
        let j = rng.gen_range(0..i);
        branches.push(Branch {
            id: format!("e{}", branches.len() + 1),
            from_bus: j as u32 + 1,
            to_bus: i as u32 + 1,
            susceptance: [5.0, 10.0, 20.0][rng.gen_range(0..3)],
            capacity: rng.gen_range(4..=12) as f64 * 10.0,
            invest_cost: 0.0,
            existing: true,
        });
    }
    let lo = (generators.len() + branches.len() + 2).max(4).min(max_elements);
    let budget = rng.gen_range(lo..=max_elements.max(lo));
    while generators.len() + branches.len() < budget {
        if rng.gen_bool(0.5) {
            generators.push(Generator {
                id: format!("g{}", generators.len() + 1),
                bus: rng.gen_range(1..=nb) as u32,
                pmax: rng.gen_range(4..=14) as f64 * 10.0,
                invest_cost: rng.gen_range(5..=40) as f64,
                marginal_cost: rng.gen_range(1..=5) as f64,
                existing: false,
            });
        } else {
            let a = rng.gen_range(0..nb);
            let mut b = rng.gen_range(0..nb);
            if a == b {
                b = (a + 1) % nb;
            }
            branches.push(Branch {
                id: format!("e{}", branches.len() + 1),
                from_bus: a as u32 + 1,
                to_bus: b as u32 + 1,
                susceptance: [5.0, 10.0, 20.0][rng.gen_range(0..3)],
                capacity: rng.gen_range(3..=12) as f64 * 10.0,
                invest_cost: rng.gen_range(5..=30) as f64,
                existing: false,
            });
        }
    }
    PowerSystem {
        buses,
        generators,
        branches,
        sigma: 1.0,
    }
}

/// Random design: existing elements built, candidates with probability 1/2.
pub fn random_design(rng: &mut ChaCha8Rng, sys: &PowerSystem) -> Design {
    Design {
        generators: sys.generators.iter().map(|g| g.existing || rng.gen_bool(0.5)).collect(),
        branches: sys.branches.iter().map(|b| b.existing || rng.gen_bool(0.5)).collect(),
    }
}

/// Every design over the candidate elements, existing ones always built.
pub fn all_designs(sys: &PowerSystem) -> Vec<Design> {
    let cands: Vec<_> = (0..sys.num_elements())
        .map(|i| sys.element(i))
        .filter(|&e| match e {
            gridsurv_core::model::Element::Generator(g) => !sys.generators[g].existing,
            gridsurv_core::model::Element::Branch(b) => !sys.branches[b].existing,
        })
        .collect();
    (0..1u32 << cands.len())
        .map(|mask| Design::with_builds(sys, cands.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e)))
        .collect()
}

/// Minimum state-0 dispatch cost of a fixed design, `None` if it cannot
/// serve all demand.
pub fn base_cost(sys: &PowerSystem, design: &Design) -> Option<f64> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let gens: Vec<Build> = design.generators.iter().map(|&b| Build::Fixed(b)).collect();
    let branches: Vec<Build> = design.branches.iter().map(|&b| Build::Fixed(b)).collect();
    let m = BigM::default().values(sys);
    add_state_block(
        &mut lp,
        sys,
        &BlockSpec {
            generators: &gens,
            branches: &branches,
            contingency: &Contingency::none(),
            big_m: &m,
            shed: ShedRule::Forbidden,
            dispatch_weight: sys.sigma,
        },
    );
    let sol = solve_lp(&lp).unwrap();
    sol.is_optimal().then_some(sol.objective)
}

/// True when every state of `S(k)` sheds within its allowance.
pub fn compliant(sys: &PowerSystem, design: &Design, policy: &SurvivabilityPolicy) -> bool {
    enumerate_states(sys, policy.k).all(|c| {
        let limit = policy.threshold(c.cardinality(), sys).unwrap();
        solve_psp(sys, design, &c, BigM::default()).unwrap().shed <= limit + SHED_TOL
    })
}

/// Cheapest compliant design by exhaustive search over designs.
pub fn brute_force_plan(sys: &PowerSystem, policy: &SurvivabilityPolicy) -> Option<(f64, Design)> {
    let mut best: Option<(f64, Design)> = None;
    for d in all_designs(sys) {
        let Some(op) = base_cost(sys, &d) else { continue };
        let cost = d.investment_cost(sys) + op;
        if best.as_ref().is_some_and(|(b, _)| cost >= *b) {
            continue;
        }
        if compliant(sys, &d, policy) {
            best = Some((cost, d));
        }
    }
    best
}
