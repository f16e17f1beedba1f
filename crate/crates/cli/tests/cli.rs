use std::path::Path;

use fesim::app::{main_with_args, parse_invocation, replay, run_to, Invocation};
use fesim::presets::{preset, NAMES};
use finite_energy::qamc::EnergyGrid;
use fesim::RunConfig;
use proptest::prelude::*;

fn manifest(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.conf"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn presets_match_the_manifest() {
    for name in NAMES {
        let cfg = preset(name).unwrap();
        assert_eq!(cfg.to_text(), manifest(name), "preset {name}");
        assert_eq!(RunConfig::from_text(&manifest(name)).unwrap(), cfg);
    }
}

#[test]
fn presets_carry_the_figure_parameters() {
    let f1 = preset("fig1").unwrap();
    assert_eq!((f1.n, f1.g, f1.h, f1.states, f1.x), (100, 1.0, 2.0, 50, 3.0));
    assert_eq!(f1.variants, ["0.1@full", "0.1@opt:0.4", "0.1@opt:1"]);
    let f2 = preset("fig2").unwrap();
    assert_eq!(f2.variants, ["0.1@full", "1@full", "1@opt:1"]);
    assert_eq!(f2.observables, ["energy_density"]);
    for (name, g, h) in [("fig3a", 1.0, 2.0), ("fig3b", 2.0, 1.0)] {
        let c = preset(name).unwrap();
        assert_eq!((c.n, c.g, c.h, c.samples), (20, g, h, 100_000));
        assert_eq!(c.variants, ["1@full", "4@full"]);
        assert_eq!(EnergyGrid::new(c.e_min, c.e_max, c.e_step).unwrap().len(), 8);
        assert!(c.exhaustive);
    }
    for (name, g, h) in [("fig4a", 1.0, 2.0), ("fig4b", 2.0, 1.0)] {
        let c = preset(name).unwrap();
        assert_eq!((c.n, c.g, c.h, c.samples), (100, g, h, 100_000));
        assert_eq!(c.cutoffs, [0.0, 1e-2]);
        assert!(c.shifted);
    }
    let f5 = preset("fig5").unwrap();
    assert_eq!(f5.couplings, ["0.3:0.8", "0.4:0.4"]);
    assert_eq!((f5.n, f5.e_min, f5.e_max, f5.e_step, f5.samples), (100, -100.0, 100.0, 0.5, 100_000));
    assert_eq!(f5.cutoffs, [0.0, 1e-2]);
    let d = preset("appD").unwrap();
    assert_eq!((d.model.as_str(), d.j, d.h, d.g), ("tilted", 1.0, 0.5, -1.05));
    assert_eq!(d.sizes, [10, 12, 14]);
    assert_eq!(d.observables, ["zz", "x"]);
    assert!(preset("fig6").is_err());
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        prop::collection::vec(-1e6f64..1e6, 0..5),
        prop::collection::vec(1usize..64, 0..4),
        any::<u64>(),
        "[a-z0-9_.:@-]{0,12}",
        any::<bool>(),
    )
        .prop_map(|(g, energies, sizes, seed, out, exhaustive)| RunConfig {
            g,
            energies,
            sizes,
            seed,
            out,
            exhaustive,
            ..RunConfig::default()
        })
}

proptest! {
    #[test]
    fn config_text_round_trips(cfg in arb_config()) {
        let text = cfg.to_text();
        let back = RunConfig::from_text(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn overrides_layer_over_presets_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    std::fs::write(&file, "# sweep\nstates = 3\nvariants = 0.5@full\n").unwrap();
    let inv = parse_invocation([
        "ldos",
        "--preset",
        "fig1",
        "--config",
        file.to_str().unwrap(),
        "--n",
        "20",
        "--seed=9",
    ])
    .unwrap();
    let Invocation::Run { config, out } = inv else { panic!("expected a run") };
    assert_eq!((config.n, config.states, config.seed), (20, 3, 9));
    assert_eq!(config.variants, ["0.5@full"]);
    assert_eq!(out, Path::new("fig1.csv"));
    assert!(parse_invocation(["filtered", "--preset", "fig1"]).is_err());
    assert!(parse_invocation(["ldos", "--bogus", "1"]).is_err());
    assert!(parse_invocation(["run"]).is_err());
}

fn run_args(dir: &Path, name: &str, args: &[&str]) -> (i32, String) {
    let out = dir.join(name);
    let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    all.extend(["--out".into(), out.to_string_lossy().into_owned()]);
    let code = main_with_args(all);
    (code, std::fs::read_to_string(&out).unwrap_or_default())
}

#[test]
fn replay_regenerates_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["ldos", "--n", "20", "--states", "3", "--variants", "0.5@full,0.5@opt:1"],
        &["double-filtered", "--n", "8", "--states", "2", "--observables", "energy_density"],
        &["qamc-micro", "--n", "12", "--energies", "-2,3", "--samples", "2000", "--burn-in", "10", "--shots", "100"],
        &["sign-reconstruct", "--model", "xy", "--n", "6", "--t-max", "5", "--zero-tol", "1e-3"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let name = format!("run{i}.csv");
        let (code, csv) = run_args(dir.path(), &name, args);
        assert_eq!(code, 0, "{args:?}");
        assert!(csv.lines().count() > 1);
        let again = dir.path().join(format!("replay{i}.csv"));
        replay(&dir.path().join(format!("run{i}.json")), Some(&again)).unwrap();
        assert_eq!(std::fs::read_to_string(&again).unwrap(), csv, "{args:?}");
    }
}

#[test]
fn exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run_args(d, "a.csv", &["run", "--preset", "nope"]).0, 1);
    let bad = d.join("bad.conf");
    std::fs::write(&bad, "n = twenty\n").unwrap();
    assert_eq!(run_args(d, "b.csv", &["run", "--config", bad.to_str().unwrap()]).0, 1);
    let (code, csv) = run_args(d, "c.csv", &["filtered", "--n", "8", "--labels", "3333", "--energies", "40"]);
    assert_eq!(code, 2);
    assert!(csv.lines().nth(1).unwrap().ends_with(",unresolvable"));
    let cold = ["qamc-micro", "--n", "8", "--energies", "-500", "--samples", "64", "--cutoffs", "0.01"];
    let (code, csv) = run_args(d, "d.csv", &cold);
    assert_eq!(code, 3);
    assert!(csv.lines().nth(1).unwrap().ends_with(",cold_start"));
    assert_eq!(run_args(d, "e.csv", &["crosscheck", "--n", "8"]).0, 0);
    assert_eq!(run_args(d, "f.csv", &["bounds-check", "--samples", "500"]).0, 0);
    let (code, csv) = run_args(d, "g.csv", &["find-energy", "--n", "8", "--states", "4", "--variants", "0.5@full"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn preset_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("fig1").unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_to(cfg.clone(), &a).unwrap();
    run_to(cfg, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 51);
}
