use cryochain::data::DataStore;
use cryochain::error::ScenarioError;
use cryochain::scenario::{parse_scenario, FractionInput, Overrides, ScenarioDocument};
use cryochain::thermal::{LineRole, Stage};

fn text(name: &str) -> String {
    DataStore::bundled().scenario_text(name).unwrap()
}

fn validation_path(text: &str) -> String {
    match parse_scenario(text, &DataStore::bundled()) {
        Err(ScenarioError::Validation { path, .. }) => path,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn all_coax_has_the_documented_wiring() {
    let s = DataStore::bundled().load_scenario("all_coax").unwrap();
    let control: u32 = s
        .wiring
        .lines
        .iter()
        .filter(|l| l.role == LineRole::Control)
        .map(|l| l.count)
        .sum();
    let readout: u32 = s
        .wiring
        .lines
        .iter()
        .filter(|l| l.role == LineRole::Readout)
        .map(|l| l.count)
        .sum();
    assert_eq!((control, readout), (840, 168));
    let p = s.parameters();
    for stage in [Stage::Flange4K, Stage::ColdPlate, Stage::MixingChamber] {
        assert_eq!(p.attenuators.get(&stage), Some(&20.0), "{stage}");
    }
}

#[test]
fn empty_document_is_a_parse_error() {
    assert!(matches!(
        parse_scenario("", &DataStore::bundled()),
        Err(ScenarioError::Parse { .. })
    ));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let broken = text("empty").replace("capacity = ", "capacity = = ");
    match ScenarioDocument::parse(&broken) {
        Err(ScenarioError::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duty_cycle_above_one_names_the_field() {
    let t = text("all_coax").replace("duty_cycle = \"33 %\"", "duty_cycle = 1.5");
    assert_eq!(validation_path(&t), "lines[1].rf_plan.duty_cycle");
}

#[test]
fn bare_number_where_a_unit_is_required() {
    let t = text("all_coax").replace("temperature = \"1.4 K\"", "temperature = \"1.4\"");
    assert_eq!(validation_path(&t), "stages.Still.temperature");
}

#[test]
fn wrong_dimension_is_rejected() {
    let t = text("all_coax").replace("\"14 uW\"", "\"14 dB\"");
    assert_eq!(validation_path(&t), "stages.MXC.static_load");
}

#[test]
fn unknown_material_and_capacity() {
    let t = text("all_coax").replacen("SCuNi_086", "Unobtainium", 1);
    assert!(validation_path(&t).starts_with("lines[0].segments[0]"));
    let t = text("empty").replace("xld1000s_2xpt420", "nope");
    assert_eq!(validation_path(&t), "capacity");
}

#[test]
fn segments_must_reach_the_mixing_chamber() {
    let t = text("optical_coax_sc").replace(
        "    { material = \"NbTi_086\", from = \"CP\", to = \"MXC\", rf_loss = \"0 dB\" },\n]\nattenuators",
        "]\nattenuators",
    );
    assert!(validation_path(&t).starts_with("lines[1].segments"));
}

#[test]
fn attenuator_above_the_feed_is_rejected() {
    let t = text("optical_coax_sc").replace(
        "{ stage = \"CP\", value = \"10 dB\" }",
        "{ stage = \"4K\", value = \"10 dB\" }",
    );
    assert!(validation_path(&t).starts_with("lines[1].attenuators[0]"));
}

#[test]
fn defaulted_values_are_flagged_once() {
    let s = DataStore::bundled().load_scenario("experiment").unwrap();
    assert!(s.assumptions.iter().any(|a| a.contains("insertion loss")));
    assert!(s
        .assumptions
        .iter()
        .any(|a| a.contains("fibre") || a.contains("fiber")));
    let flags: Vec<&String> = s.assumptions.iter().collect();
    let mut dedup = flags.clone();
    dedup.dedup();
    assert_eq!(flags, dedup);
}

#[test]
fn hash_ignores_formatting_and_key_order() {
    let store = DataStore::bundled();
    let original = text("optical_coax_sc");
    let doc = ScenarioDocument::parse(&original).unwrap();
    let reserialised = doc.to_toml();
    assert_ne!(original, reserialised);
    let a = parse_scenario(&original, &store).unwrap();
    let b = parse_scenario(&reserialised, &store).unwrap();
    assert_eq!(a.hash(), b.hash());

    // Same content with the description moved to the end and spans reordered.
    let moved = original
        .replace(
            "description = \"(3) photodiodes at the Still feeding 840 NbTi lines with 10 dB at CP and 20 dB at MXC\"\n",
            "",
        )
        .replace(
            "[spans]\n\"RT-50K\" = \"0.22 m\"\n\"50K-4K\" = \"0.20 m\"",
            "[spans]\n\"50K-4K\" = \"0.20 m\"\n\"RT-50K\" = \"0.22 m\"",
        )
        .replacen(
            "capacity = ",
            "description = \"(3) photodiodes at the Still feeding 840 NbTi lines with 10 dB at CP and 20 dB at MXC\"\ncapacity = ",
            1,
        );
    assert_ne!(moved, original);
    assert_eq!(parse_scenario(&moved, &store).unwrap().hash(), a.hash());

    let changed = original.replace("\"50 uW\"", "\"51 uW\"");
    assert_ne!(parse_scenario(&changed, &store).unwrap().hash(), a.hash());
}

fn with(overrides: Overrides, name: &str) -> Result<cryochain::scenario::Scenario, ScenarioError> {
    let store = DataStore::bundled();
    let mut doc = store.scenario_document(name).unwrap();
    doc.apply(&overrides)?;
    doc.validate(&store)
}

#[test]
fn overrides_change_the_parameters() {
    let s = with(
        Overrides {
            control_count: Some(100),
            duty_cycle: Some(FractionInput::Text("10 %".into())),
            optical_power: Some("20 uW".into()),
            attenuators: Some([("CP".to_string(), "0 dB".to_string())].into()),
            ..Default::default()
        },
        "optical_coax_sc",
    )
    .unwrap();
    let p = s.parameters();
    assert_eq!(p.control_count, 100);
    assert_eq!(p.duty_cycle, Some(0.1));
    assert!((p.optical_power.unwrap() - 20e-6).abs() < 1e-18);
    assert!(!p.attenuators.contains_key(&Stage::ColdPlate));
    assert_eq!(p.attenuators.get(&Stage::MixingChamber), Some(&20.0));
    assert_eq!(s.wiring.optical_links[0].count, 100);
}

#[test]
fn override_errors_use_override_paths() {
    let e = with(
        Overrides {
            duty_cycle: Some(FractionInput::Number(1.5)),
            ..Default::default()
        },
        "optical_coax_sc",
    )
    .unwrap_err();
    assert_eq!(e.field_path(), Some("overrides.duty_cycle"));
    let e = with(
        Overrides {
            photodiode_stage: Some("Attic".into()),
            ..Default::default()
        },
        "optical_coax_sc",
    )
    .unwrap_err();
    assert_eq!(e.field_path(), Some("overrides.photodiode_stage"));
    let e = with(
        Overrides {
            control_count: Some(-1),
            ..Default::default()
        },
        "all_coax",
    )
    .unwrap_err();
    assert_eq!(e.field_path(), Some("overrides.control_count"));
}

#[test]
fn zero_control_lines_removes_their_fibres() {
    let s = with(
        Overrides {
            control_count: Some(0),
            ..Default::default()
        },
        "optical_coax_sc",
    )
    .unwrap();
    assert!(s.wiring.optical_links.is_empty());
    assert!(s.wiring.lines.iter().all(|l| l.role == LineRole::Readout));
}

#[test]
fn moving_photodiodes_to_4k_matches_the_4k_variant() {
    let store = DataStore::bundled();
    let moved = with(
        Overrides {
            photodiode_stage: Some("4K".into()),
            ..Default::default()
        },
        "optical_coax_sc",
    )
    .unwrap();
    let variant = store.load_scenario("optical_coax_sc_4k").unwrap();
    assert_eq!(moved.wiring.lines, variant.wiring.lines);
    assert_eq!(
        moved.wiring.optical_links[0].photodiode_stage,
        Stage::Flange4K
    );
}
