use proptest::prelude::*;

use cryochain::coherence::{pure_dephasing, series_stats};
use cryochain::data::DataStore;
use cryochain::noise::{
    bose_einstein_occupation, cascade_forward, effective_temperature, infer_source_temperature,
    NoiseChain, NoiseElement, OccupationState,
};
use cryochain::report::{compare, run_report, ReportBundle};
use cryochain::scenario::{FractionInput, Overrides, ScenarioDocument};
use cryochain::thermal::{rf_dissipation_profile, SolverOptions};

fn bundle_with(name: &str, overrides: &Overrides) -> ReportBundle {
    let store = DataStore::bundled();
    let mut doc = store.scenario_document(name).unwrap();
    doc.apply(overrides).unwrap();
    let scenario = doc.validate(&store).unwrap();
    run_report(&scenario, &store, &SolverOptions::default()).unwrap()
}

fn elements() -> impl Strategy<Value = Vec<NoiseElement>> {
    prop::collection::vec((0.0..25.0f64, 0.007..300.0f64), 1..5).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (attenuation, physical_temperature))| NoiseElement {
                label: format!("e{i}"),
                attenuation,
                physical_temperature,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn occupation_and_temperature_are_inverses(t in 1e-3..1e3f64, f in 1e8..2e10f64) {
        let n = bose_einstein_occupation(t, f).unwrap();
        let back = effective_temperature(&OccupationState::new(n, f).unwrap()).unwrap().kelvin();
        prop_assert!((back - t).abs() / t < 1e-12, "{t} -> {back}");
    }

    #[test]
    fn inference_undoes_the_forward_cascade(
        elements in elements(),
        t in 1e-2..1e3f64,
        f in 2e9..12e9f64,
    ) {
        let chain = NoiseChain::from_elements(elements, f);
        let target = cascade_forward(&OccupationState::thermal(t, f).unwrap(), &chain).unwrap();
        let inf = infer_source_temperature(&target, &chain).unwrap();
        let again = cascade_forward(&OccupationState::new(inf.source_occupation, f).unwrap(), &chain).unwrap();
        prop_assert!((again.occupation - target.occupation).abs() <= 1e-9 * target.occupation);
        prop_assert!(inf.floor_occupation <= target.occupation);
    }

    #[test]
    fn pure_dephasing_satisfies_its_defining_identity(t1 in 1e-6..1e-2f64, r in 1e-3..1.999f64) {
        let t2 = t1 * r;
        let tphi = pure_dephasing(t1, t2).unwrap().seconds().unwrap();
        let lhs = 1.0 / t2;
        let rhs = 1.0 / (2.0 * t1) + 1.0 / tphi;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn series_statistics_ignore_input_order(
        mut values in prop::collection::vec(-1e3..1e3f64, 2..60),
        seed in any::<u64>(),
    ) {
        let a = series_stats(&values).unwrap();
        let n = values.len();
        values.rotate_left((seed as usize) % n);
        values.reverse();
        let b = series_stats(&values).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn conduction_grows_with_the_hot_end(lo in 0.02..1.0f64, step in 0.0..50.0f64, extra in 0.0..50.0f64) {
        let store = DataStore::bundled();
        let scenario = store.load_scenario("all_coax").unwrap();
        let segment = &scenario.wiring.lines[0].segments[0];
        let mats = store.materials();
        let t1 = lo + step;
        let t2 = t1 + extra;
        let q1 = mats.conduction_load(segment, t1, lo).unwrap();
        let q2 = mats.conduction_load(segment, t2, lo).unwrap();
        prop_assert!(q2 >= q1);
        prop_assert_eq!(mats.conduction_load(segment, lo, lo).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rf_energy_is_conserved_along_every_line(
        duty in 0.01..1.0f64,
        att in prop::collection::vec(0u32..=30, 3),
    ) {
        let store = DataStore::bundled();
        let mut doc = store.scenario_document("all_coax").unwrap();
        let overrides = Overrides {
            duty_cycle: Some(FractionInput::Number(duty)),
            attenuators: Some(
                ["4K", "CP", "MXC"]
                    .iter()
                    .zip(&att)
                    .map(|(s, a)| (s.to_string(), format!("{a} dB")))
                    .collect(),
            ),
            ..Default::default()
        };
        doc.apply(&overrides).unwrap();
        let scenario = doc.validate(&store).unwrap();
        for line in scenario.wiring.lines.iter().filter(|l| l.rf_plan.is_some()) {
            let p = rf_dissipation_profile(line).unwrap();
            let input = p.average_input();
            let booked = p.total_dissipation() + p.average_delivered();
            prop_assert!((booked - input).abs() <= 1e-9 * input, "{booked} vs {input}");
        }
    }

    #[test]
    fn document_round_trip_keeps_the_hash(
        control in 1i64..=840,
        readout in 0i64..=168,
        duty in 0.0..=1.0f64,
    ) {
        let store = DataStore::bundled();
        let mut doc = store.scenario_document("optical_coax_sc").unwrap();
        doc.apply(&Overrides {
            control_count: Some(control),
            readout_count: Some(readout),
            duty_cycle: Some(FractionInput::Number(duty)),
            ..Default::default()
        })
        .unwrap();
        let first = doc.validate(&store).unwrap();
        let reparsed = ScenarioDocument::parse(&doc.to_toml()).unwrap().validate(&store).unwrap();
        prop_assert_eq!(first.hash(), reparsed.hash());
        prop_assert_eq!(first.hash(), doc.validate(&store).unwrap().hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn comparison_deltas_are_antisymmetric(
        a in 100i64..=840,
        b in 100i64..=840,
        duty in 0.05..=0.9f64,
    ) {
        let left = bundle_with("optical_coax_sc", &Overrides {
            control_count: Some(a),
            ..Default::default()
        });
        let right = bundle_with("optical_coax_sc", &Overrides {
            control_count: Some(b),
            duty_cycle: Some(FractionInput::Number(duty)),
            ..Default::default()
        });
        let ab = compare(&[&left, &right]).unwrap();
        let ba = compare(&[&right, &left]).unwrap();
        for (x, y) in ab.rows.iter().zip(&ba.rows) {
            prop_assert_eq!(x.stage, y.stage);
            prop_assert_eq!(x.load_deltas[0], -y.load_deltas[0]);
            prop_assert_eq!(x.temperature_deltas[0], -y.temperature_deltas[0]);
        }
    }
}
