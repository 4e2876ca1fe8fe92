use criterion::{black_box, criterion_group, criterion_main, Criterion};

use atomip::bnb::{solve_bnb, BnbConfig};
use atomip::control::Evaluator;
use atomip::dynamics::{initial_state, InitialState, ParameterBounds, ProtocolParams, SegmentParams};
use atomip::encoding::{build_level_scheme, build_templates, CouplingPolicy};
use atomip::instances;
use atomip::objective::{AccumulatorConfig, CostTable};
use atomip::relaxation::solve_lp_relaxation;

fn classical(c: &mut Criterion) {
    let p4 = instances::p4();
    c.bench_function("simplex_p4", |b| b.iter(|| solve_lp_relaxation(black_box(&p4), &[]).unwrap()));
    c.bench_function("bnb_p4", |b| b.iter(|| solve_bnb(black_box(&p4), &BnbConfig::default()).unwrap()));
}

fn protocol(c: &mut Criterion) {
    for (name, p) in [("p1", instances::p1()), ("p3", instances::p3())] {
        let scheme = build_level_scheme(&p);
        let templates = build_templates(&p, &scheme, &CouplingPolicy::default()).unwrap();
        let table = CostTable::new(&p).unwrap();
        let evaluator = Evaluator {
            scheme: &scheme,
            templates: &templates,
            table: &table,
            bounds: ParameterBounds::default(),
            dt_us: 0.01,
            initial: initial_state(&scheme, &templates, InitialState::Auto),
            accumulator: AccumulatorConfig::default(),
        };
        // Three layers of 5 µs segments: a 15·n µs protocol.
        let params = ProtocolParams {
            layers: (0..3)
                .map(|l| {
                    templates
                        .iter()
                        .map(|t| SegmentParams {
                            tau_us: 5.0,
                            amplitudes: (0..t.slots.len()).map(|i| 1.0 + ((i + l) % 7) as f64).collect(),
                        })
                        .collect()
                })
                .collect(),
        };
        c.bench_function(&format!("evaluate_{name}"), |b| b.iter(|| evaluator.evaluate(black_box(&params)).unwrap()));
    }
}

criterion_group!(benches, classical, protocol);
criterion_main!(benches);
