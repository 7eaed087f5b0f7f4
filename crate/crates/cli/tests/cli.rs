use std::path::Path;
use std::process::{Command, Output};

fn cryochain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cryochain"))
        .args(args)
        .env_remove("CRYOCHAIN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn bundled(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join(format!("../core/data/scenarios/{name}.scenario")),
    )
    .unwrap()
}

#[test]
fn solve_prints_both_tables_in_display_units() {
    let o = cryochain(&["solve", "optical_coax_sc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Flange loads"));
    assert!(out.contains("Flange temperatures"));
    let row = |stage: &str, table: usize| {
        out.split("Flange")
            .nth(table)
            .unwrap()
            .lines()
            .find(|l| l.starts_with(stage))
            .unwrap()
            .to_string()
    };
    assert!(row("50K", 1).ends_with(" W"));
    assert!(row("Still", 1).ends_with(" mW"));
    assert!(row("CP", 1).ends_with(" µW"));
    assert!(row("4K", 2).ends_with(" K"));
    assert!(row("MXC", 2).ends_with(" mK"));
}

#[test]
fn machine_output_is_stable_across_runs_and_formatting() {
    let a = cryochain(&["solve", "optical_coax_sc", "--format", "machine"]);
    let b = cryochain(&["solve", "optical_coax_sc", "--format", "machine"]);
    assert_eq!(a.stdout, b.stdout);

    let dir = tempfile::tempdir().unwrap();
    let text = bundled("optical_coax_sc");
    let shuffled: String = {
        // Reverse the order of the stage tables; content is unchanged.
        let head_end = text.find("[stages.RT]").unwrap();
        let spans_start = text.find("[spans]").unwrap();
        let mut blocks: Vec<&str> = text[head_end..spans_start]
            .split("\n\n")
            .filter(|b| !b.trim().is_empty())
            .collect();
        blocks.reverse();
        format!(
            "{}{}\n\n{}",
            &text[..head_end],
            blocks.join("\n\n"),
            &text[spans_start..]
        )
    };
    assert_ne!(shuffled, text);
    let path = dir.path().join("mine.scenario");
    std::fs::write(&path, shuffled).unwrap();
    let c = cryochain(&["solve", path.to_str().unwrap(), "--format", "machine"]);
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn compare_shows_deltas_and_the_attenuator_note() {
    let o = cryochain(&["compare", "optical_coax_normal", "optical_coax_sc"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("optical_coax_normal - optical_coax_sc"));
    assert!(out.contains("note: MXC: attenuators dominate"));

    let o = cryochain(&["compare", "all_coax"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noise_inference_and_its_floor() {
    let o = cryochain(&[
        "noise",
        "experiment",
        "--chain",
        "feedline",
        "--target",
        "100mK@6GHz",
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: f64 = stdout(&o)
        .lines()
        .find(|l| l.contains(",source_temperature,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((17.0..=31.0).contains(&t), "{t}");

    let o = cryochain(&[
        "noise",
        "experiment",
        "--chain",
        "feedline",
        "--target",
        "0.001@6",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("floor"));

    let o = cryochain(&[
        "noise",
        "experiment",
        "--chain",
        "nope",
        "--target",
        "0.1@6",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("feedline"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        cryochain(&["solve", "no_such_scenario"]).status.code(),
        Some(4)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(
        &bad,
        bundled("all_coax").replace("duty_cycle = \"33 %\"", "duty_cycle = 1.5"),
    )
    .unwrap();
    let o = cryochain(&["solve", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lines[1].rf_plan.duty_cycle"));

    std::fs::write(&bad, "name = \n").unwrap();
    let o = cryochain(&["solve", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"));

    std::fs::write(&bad, bundled("all_coax").replace("\"14 uW\"", "\"5 W\"")).unwrap();
    let o = cryochain(&["solve", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("scenario `all_coax`"));
}

#[test]
fn overrides_file_moves_the_photodiodes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.toml");
    std::fs::write(&path, "photodiode_stage = \"4K\"\n").unwrap();
    let o = cryochain(&[
        "solve",
        "optical_coax_sc",
        "--overrides",
        path.to_str().unwrap(),
        "--format",
        "machine",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t4: f64 = stdout(&o)
        .lines()
        .find(|l| l.starts_with("temperature,4K,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((t4 - 3.012).abs() / 3.012 < 0.05, "{t4}");

    std::fs::write(&path, "duty_cycle = 2\n").unwrap();
    let o = cryochain(&[
        "solve",
        "optical_coax_sc",
        "--overrides",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("overrides.duty_cycle"));
}

#[test]
fn data_dir_adds_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("scenarios")).unwrap();
    std::fs::write(
        dir.path().join("scenarios/extra.scenario"),
        bundled("empty"),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cryochain"))
        .args(["solve", "extra"])
        .env("CRYOCHAIN_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cryochain(&["--data-dir", dir.path().to_str().unwrap(), "solve", "extra"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn synth_then_fit_with_an_exclusion_and_a_corrupt_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("batch.toml");
    std::fs::write(
        &spec,
        "label = \"optical\"\nduration = 7200.0\ncycle = 240.0\nstart_timestamp = 1.7e9\n\
         t1_mean = 120e-6\nt1_sd = 10e-6\ntphi_mean = 65e-6\ntphi_sd = 5e-6\ndetuning = 50e3\n\
         noise_sigma = 0.02\nseed = 11\nt1_points = 41\nramsey_points = 101\n",
    )
    .unwrap();
    let traces = dir.path().join("traces");
    let o = cryochain(&[
        "synth",
        spec.to_str().unwrap(),
        "--out",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("wrote 60 traces"));
    std::fs::write(traces.join("broken.csv"), "not a trace").unwrap();

    let o = cryochain(&[
        "fit",
        traces.to_str().unwrap(),
        "--exclude",
        "1700000000..1700000300",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: skipped broken.csv"));
    let out = stdout(&o);
    assert!(
        out.starts_with("61 files, 1 skipped, 3 excluded by 1 window(s)"),
        "{out}"
    );
    assert!(out.contains("optical: 57 fits"));

    let o = cryochain(&["fit", traces.to_str().unwrap(), "--format", "machine"]);
    let csv = stdout(&o);
    assert!(csv.starts_with("label,timestamp,quantity,unit,value\n"));
    assert!(csv.lines().any(|l| l.contains(",tphi,s,")));

    let single = dir.path().join("one.toml");
    std::fs::write(
        &single,
        "model = \"t1\"\na = 1.0\nt1 = 50e-6\nc = 0.0\ndelays = [0.0, 1e-5, 2e-5, 4e-5, 8e-5, 1.6e-4]\nnoise_sigma = 0.0\nseed = 1\n",
    )
    .unwrap();
    let o = cryochain(&[
        "synth",
        single.to_str().unwrap(),
        "-o",
        dir.path().join("one").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let empty = dir.path().join("nothing");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(
        cryochain(&["fit", empty.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn calibrate_reproduces_the_shipped_capacity_file() {
    let o = cryochain(&[
        "calibrate",
        "all_coax",
        "--targets",
        "36.038K,3.590K,245.354mK,22.735mK",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let shipped = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/capacity/xld1000s_2xpt420.cap"),
    )
    .unwrap();
    let directives = |s: &str| -> Vec<String> {
        s.lines()
            .filter(|l| l.starts_with('@'))
            .map(String::from)
            .collect()
    };
    assert_eq!(directives(&stdout(&o)), directives(&shipped));
}
