//! End-to-end runs through the library entry point the binary uses:
//! every artifact must be re-parseable by the tool's own readers, byte
//! layout must be independent of the worker count, and failure paths must
//! carry actionable diagnostics.

use std::path::Path;

use msalab_cli::config::RunConfig;
use msalab_cli::run::{read_assertions, read_config, read_ledger, read_meta, read_summary, read_trials, run_to_dir};

fn base_config(probe: &str, extra: &str) -> RunConfig {
    let text = format!(
        r#"
schema = 1
probe = "{probe}"
trials = 12
master_seed = 424242

[model]
big_n = 2
d = 1
n = 1

[model.disorder]
family = "uniform"
support_bound = 5.0

[msa]
m = 0.05
p = 2.0
theta = 0.1
l0 = 8

[probe_options]
{extra}
"#
    );
    RunConfig::parse(&text).expect("test config parses")
}

fn run_in_temp(config: &RunConfig) -> (tempfile::TempDir, msalab_cli::run::RunOutcome) {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_to_dir(config, dir.path(), false).expect("run succeeds");
    (dir, outcome)
}

fn assert_artifacts_reparse(dir: &Path) {
    let config = read_config(&dir.join("config_snapshot.toml")).expect("snapshot re-parses");
    let snapshot = config.to_toml().unwrap();
    let reparsed = RunConfig::parse(&snapshot).unwrap().to_toml().unwrap();
    assert_eq!(snapshot, reparsed, "snapshot round-trip not byte-identical");
    read_summary(&dir.join("summary.csv")).expect("summary re-parses");
    read_trials(&dir.join("trials.jsonl")).expect("trials re-parse");
    let meta = read_meta(&dir.join("meta.json")).expect("meta re-parses");
    assert_eq!(meta["tool"], "msalab");
    read_assertions(&dir.join("assertions.json")).expect("assertions re-parse");
}

#[test]
fn wegner_run_writes_reparseable_artifacts() {
    let config = base_config("wegner", "energies = [-9.0]\nscales = [4, 6]");
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());

    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 2, "one row per scale");
    assert!(summary.iter().all(|row| row.probe == "wegner"));
    assert!(summary.iter().all(|row| row.seed == 424242));
    let trials = read_trials(&dir.path().join("trials.jsonl")).unwrap();
    assert_eq!(trials.len(), 2 * 12, "one verdict per scale per trial");
    let curve = std::fs::read_to_string(dir.path().join("decay_curve.csv")).unwrap();
    assert!(curve.starts_with("e,l,sqrt_l,p_hat,ci_lo,ci_hi,ln_p_smoothed"));
}

#[test]
fn summary_csv_has_the_fixed_header() {
    let config = base_config("wegner", "energies = [-9.0]\nscales = [4]");
    let (dir, _) = run_in_temp(&config);
    let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "probe,L,n,h,E_or_grid,estimate,ci_lo,ci_hi,trials,seed");
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let mut config = base_config("wegner", "energies = [-9.0]\nscales = [4, 6]");
    config.workers = 1;
    let (dir1, _) = run_in_temp(&config);
    config.workers = 4;
    let (dir2, _) = run_in_temp(&config);
    // every result artifact is a pure function of (config minus workers, seed)
    for name in ["summary.csv", "trials.jsonl", "decay_curve.csv", "assertions.json"] {
        let a = std::fs::read(dir1.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between worker counts");
    }
    // the snapshot records the requested worker count and nothing else changes
    let strip = |dir: &Path| {
        std::fs::read_to_string(dir.join("config_snapshot.toml"))
            .unwrap()
            .lines()
            .filter(|line| !line.starts_with("workers"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(dir1.path()), strip(dir2.path()));
}

#[test]
fn ct_check_passes_with_default_cubes() {
    let config = base_config("ct-check", "");
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok, "decay-ratio hard assertion failed");
    assert_eq!(outcome.hard.len(), 1);
    assert!(outcome.hard[0].passed);
    assert_artifacts_reparse(dir.path());
    let assertions = read_assertions(&dir.path().join("assertions.json")).unwrap();
    assert_eq!(assertions["report"]["violations"], 0);
}

#[test]
fn stability_run_checks_resolvent_inequality() {
    let config = base_config(
        "stability",
        "energies = [-9.0]\nh_list = [0.01, 0.1]",
    );
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());
    let curve = std::fs::read_to_string(dir.path().join("stability_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2, "header plus one row per coupling");
}

#[test]
fn recursion_run_writes_ledger() {
    let mut config = base_config("recursion", "energies = [-9.0]\nstride = 2\ns_stride = 2");
    config.trials = 6;
    config.msa.l0 = 3; // 3 -> 5 keeps the test fast
    config.model.n = 2;
    let (dir, outcome) = run_in_temp(&config);
    assert_artifacts_reparse(dir.path());
    let ledger = read_ledger(&dir.path().join("ledger.csv")).unwrap();
    assert_eq!(ledger.len(), 2, "two scales per energy");
    assert_eq!(ledger[0].k, 0);
    assert!(ledger[0].rhs_bound.is_none());
    assert_eq!(ledger[1].k, 1);
    assert!(ledger[1].rhs_bound.is_some());
    assert_eq!(outcome.summary_rows, 4, "P at both scales, Q and S at scale 1");
}

#[test]
fn cover_run_reports_uncovered_count() {
    let mut config = base_config("cover", "energy_interval = [-7.0, -5.0]\ncover_l = 4");
    config.trials = 5;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok, "uncovered bad energies: {:?}", outcome.hard);
    let assertions = read_assertions(&dir.path().join("assertions.json")).unwrap();
    assert_eq!(assertions["report"]["total_uncovered"], 0);
    assert_artifacts_reparse(dir.path());
}

#[test]
fn dynloc_run_writes_moment_curve() {
    let mut config = base_config(
        "dynloc",
        "energy_interval = [-2.0, 0.0]\nscales = [4, 6]\nmoment_order = 2.0",
    );
    config.trials = 8;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());
    let curve = std::fs::read_to_string(dir.path().join("moment_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2);
    assert_eq!(outcome.summary_rows, 2);
}

#[test]
fn eigdecay_run_writes_profiles_and_fits() {
    let mut config = base_config("eigdecay", "energy_interval = [-2.0, 0.0]\nradius = 8");
    config.trials = 4;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());
    assert!(dir.path().join("profiles.csv").exists());
    assert!(dir.path().join("profile_fits.csv").exists());
    assert_eq!(outcome.summary_rows, 1);
}

#[test]
fn correlator_run_writes_decay_curve() {
    let mut config = base_config(
        "correlator",
        "energy_interval = [-2.0, 2.0]\nradius = 12\nmax_r = 8",
    );
    config.model.big_n = 1;
    config.trials = 10;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());
    let curve = std::fs::read_to_string(dir.path().join("decay_curve.csv")).unwrap();
    assert!(curve.starts_with("r,mean,sem,ln_mean"));
    assert_eq!(curve.lines().count(), 1 + 4, "separations 2, 4, 6, 8");
}

#[test]
fn pair_run_needs_separable_centers() {
    let mut config = base_config("pair", "energy_interval = [-10.0, -9.0]\npair_l = 2\npair_center = [40, 40]");
    config.model.n = 2;
    config.trials = 3;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());

    let mut bad = config.clone();
    bad.probe_options.pair_center = vec![1, 1];
    let err = run_to_dir(&bad, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    assert!(format!("{err:#}").contains("separable"), "unexpected: {err:#}");
}

#[test]
fn initial_run_requires_mu_tilde() {
    let config = base_config("initial", "energies = [-9.0]");
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    assert!(format!("{err:#}").contains("mu_tilde"), "unexpected: {err:#}");

    let mut config = base_config("initial", "energies = [-9.0]\nmu_tilde = 0.4");
    config.msa.l0 = 4;
    let (dir, outcome) = run_in_temp(&config);
    assert!(outcome.ok);
    assert_artifacts_reparse(dir.path());
}

#[test]
fn resource_cap_error_names_the_cube() {
    let mut config = base_config("wegner", "energies = [-9.0]\nscales = [200]");
    config.model.n = 2;
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("resource cap exceeded"), "unexpected: {msg}");
    assert!(msg.contains("radius 200"), "cube not named: {msg}");
    assert!(msg.contains("MSALAB_DIM_CAP"), "override not mentioned: {msg}");
}

#[test]
fn strict_mode_refuses_desk_parameters() {
    let config = base_config("wegner", "energies = [-9.0]\nscales = [4]");
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), true).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("--paper-strict"), "unexpected: {msg}");
    assert!(msg.contains("p ="), "violations not listed: {msg}");
}

#[test]
fn missing_probe_is_a_config_error() {
    let mut config = base_config("wegner", "scales = [4]\nenergies = [-9.0]");
    config.probe = None;
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    assert!(format!("{err:#}").contains("--probe"));
}

#[test]
fn wegner_without_scales_names_the_field() {
    let config = base_config("wegner", "energies = [-9.0]");
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    assert!(format!("{err:#}").contains("probe_options.scales"));
}

#[test]
fn interval_probe_without_interval_names_the_field() {
    let config = base_config("dynloc", "scales = [4]");
    let err = run_to_dir(&config, tempfile::tempdir().unwrap().path(), false).unwrap_err();
    assert!(format!("{err:#}").contains("probe_options.energy_interval"));
}

#[test]
fn default_energies_come_from_the_interval() {
    // No explicit energies: wegner takes 5 equispaced interior points.
    let mut config = base_config("wegner", "energy_interval = [-9.5, -8.5]\nscales = [4]");
    config.trials = 4;
    let (dir, _) = run_in_temp(&config);
    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 5, "5 interior energies, one scale each");
}
