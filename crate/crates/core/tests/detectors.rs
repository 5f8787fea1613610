mod common;

use std::collections::{BTreeSet, HashSet};

use common::{poll, shares_dataset, traffic_dataset};
use forensics_core::association::{
    cross_election_correlation, residual_correlation_from_shares, residual_correlation_test,
    signature_share_correlation, GroupOutcome, Grouping,
};
use forensics_core::audit::{plan_sample_size, sample_randomness_check, Covariate};
use forensics_core::dataset::{read_records, write_dataset};
use forensics_core::digits::{benford_pmf, chi_square_digit_test, digit_histogram};
use forensics_core::metadata::{bytes_vs_votes_test, traffic_class_compare, PairOutcome, TrafficMeasure};
use forensics_core::permutation::{
    center_permutation_test, permutation_test, sample_allocation, CenterAllocation, DispersionKind, VoteCounts,
};
use forensics_core::polling::{aggregate_poll_pvalues, AggregationMethod, PollAggregate};
use forensics_core::report::{plot_rows, render_report, run_battery, BatteryConfig, PlotRow, ReportFormat};
use forensics_core::stats::{binomial_central_interval, ks_uniform, Alternative};
use forensics_core::synth::{generate, inject_fraud, FraudScheme, FraudScope, SynthConfig};
use forensics_core::{ElectionDataset, TrafficClass};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- digits

#[test]
fn products_of_uniforms_reject_at_nominal_rate() {
    let benford = benford_pmf(1).unwrap();
    let mut r = rng(1);
    let mut rejections = 0;
    for _ in 0..200 {
        let values: Vec<u64> = (0..1000)
            .map(|_| {
                let product: f64 = (0..10).map(|_| r.random::<f64>()).product();
                (product * 1e15) as u64
            })
            .filter(|&v| v > 0)
            .collect();
        let test = chi_square_digit_test(&digit_histogram(&values, 1).unwrap(), &benford).unwrap();
        if test.p_value < 0.05 {
            rejections += 1;
        }
    }
    assert!((2..=20).contains(&rejections), "{rejections} of 200");
}

// ---------------------------------------------------------------- permutation

#[test]
fn concentrated_yes_is_detected() {
    let center = CenterAllocation::new(
        "C",
        vec![
            VoteCounts::new(100, 0, 0),
            VoteCounts::new(0, 100, 0),
            VoteCounts::new(0, 100, 0),
            VoteCounts::new(0, 100, 0),
        ],
    );
    let r = center_permutation_test(&center, DispersionKind::YesShareVariance, 9999, 3).unwrap();
    assert!(r.p_value < 0.01, "{}", r.p_value);
    assert_eq!(r.p_value, 1.0 / 10_000.0);
}

#[test]
fn null_allocations_give_uniform_pvalues() {
    // Machines of a few hundred votes. Much smaller centers make the statistic
    // lumpy, and the add-one p-value is then visibly conservative.
    let mut r = rng(2);
    let p_values: Vec<f64> = (0..500u64)
        .map(|i| {
            let machines = r.random_range(2..=6);
            let sizes: Vec<u64> = (0..machines).map(|_| r.random_range(200..600)).collect();
            let total: u64 = sizes.iter().sum();
            let yes = (total as f64 * r.random_range(0.2..0.8)) as u64;
            let out = r.random_range(0..=total / 50);
            let totals = VoteCounts::new(yes, total - yes - out, out);
            let observed = sample_allocation(&sizes, totals, 1000 + i).unwrap();
            let center = CenterAllocation::new(format!("C{i}"), observed);
            center_permutation_test(&center, DispersionKind::YesShareVariance, 999, i).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform(&p_values);
    assert!(ks.p_value > 0.01, "KS p {}", ks.p_value);
}

#[test]
fn permutation_report_is_reproducible() {
    let ds = generate(&SynthConfig { centers: 40, ..SynthConfig::default() }, 8).unwrap();
    let a = permutation_test(&ds, DispersionKind::YesShareVariance, 999, 5, &[0.05, 0.01]).unwrap();
    let b = permutation_test(&ds, DispersionKind::YesShareVariance, 999, 5, &[0.05, 0.01]).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

// ---------------------------------------------------------------- polling

#[test]
fn count_below_stays_in_binomial_band() {
    let (lo, hi) = binomial_central_interval(100, 0.02, 0.99);
    let mut r = rng(3);
    let mut outside = 0;
    for _ in 0..200 {
        let ps: Vec<f64> = (0..100).map(|_| r.random::<f64>()).collect();
        let agg = aggregate_poll_pvalues(&ps, AggregationMethod::CountBelow { tau: 0.02 }).unwrap();
        let PollAggregate::CountBelow { count, .. } = agg else { unreachable!() };
        if (count as u64) < lo || count as u64 > hi {
            outside += 1;
        }
    }
    // at most 1% expected outside; 6 of 200 has probability below 0.5%
    assert!(outside <= 6, "{outside} of 200 outside [{lo}, {hi}]");
}

// ---------------------------------------------------------------- association

fn affine_dataset() -> ElectionDataset {
    let sig: Vec<f64> = (0..30).map(|i| (100.0 + 10.0 * i as f64) / 2000.0).collect();
    let yes: Vec<f64> = sig.iter().map(|s| 0.4 + 4.0 * (s - 0.05)).collect();
    shares_dataset("affine", &sig, &yes)
}

#[test]
fn exact_affine_relation_has_unit_correlation() {
    let ds = affine_dataset();
    for grouping in [Grouping::None, Grouping::SignatureSplit(None), Grouping::ComputerizedVsManual] {
        let groups = signature_share_correlation(&ds, grouping, 199, 1).unwrap();
        assert!(groups.len() >= 1);
        for g in &groups {
            let r = g.tested().unwrap_or_else(|| panic!("{grouping}: {g:?}"));
            assert!((r.r - 1.0).abs() < 1e-12, "{grouping} {}: r = {}", r.group, r.r);
            assert!(r.permutation_p >= 1.0 / 200.0);
        }
    }
}

#[test]
fn identical_signature_share_is_untestable() {
    let yes: Vec<f64> = (0..12).map(|i| 0.3 + 0.02 * i as f64).collect();
    let ds = shares_dataset("flat", &[0.2; 12], &yes);
    let groups = signature_share_correlation(&ds, Grouping::None, 199, 1).unwrap();
    assert!(matches!(&groups[0], GroupOutcome::Untestable { reason, .. } if reason.contains("variance")));
}

#[test]
fn independent_shares_rarely_correlate() {
    let config = SynthConfig {
        centers: 200,
        signature_slope: 0.0,
        signature_intercept: 0.3,
        signature_noise_sd: 0.08,
        transmissions: false,
        ..SynthConfig::default()
    };
    let mut passing = 0;
    for seed in 0..100 {
        let ds = generate(&config, seed).unwrap();
        let r = signature_share_correlation(&ds, Grouping::None, 99, seed).unwrap();
        let r = r[0].tested().unwrap();
        if r.r.abs() < 0.2 && r.analytic_p > 0.01 {
            passing += 1;
        }
    }
    assert!(passing >= 95, "{passing} of 100");
}

#[test]
fn duplicated_measurement_gives_identical_residuals() {
    let sig: Vec<f64> = (0..15).map(|i| 0.1 + 0.03 * i as f64 + 0.01 * ((i * 7 % 5) as f64)).collect();
    let yes: Vec<f64> = (0..15).map(|i| 0.2 + 0.025 * ((i * 11 % 15) as f64)).collect();
    let mut ds = shares_dataset("dup", &sig, &yes);
    for c in &ds.centers {
        ds.exit_polls.push(poll(&c.center_id, c.registered, c.signatures));
    }
    let res = residual_correlation_test(&ds, 999, 4, Alternative::Greater).unwrap();
    assert_eq!(res.n, 15);
    assert!((res.r - 1.0).abs() < 1e-12, "{}", res.r);
    assert_eq!(res.signature_residuals, res.poll_residuals);
    assert!(res.signature_residuals.iter().sum::<f64>().abs() < 1e-10);
}

fn residual_null_pvalues(noise: &dyn Fn(&mut ChaCha8Rng) -> f64) -> Vec<f64> {
    (0..100u64)
        .map(|rep| {
            let mut r = rng(100 + rep);
            let n = 500;
            let official: Vec<f64> = (0..n).map(|_| 0.4 + noise(&mut r)).collect();
            let sig: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let poll: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            residual_correlation_from_shares(&official, &sig, &poll, 199, rep, Alternative::TwoSided)
                .unwrap()
                .permutation_p
        })
        .collect()
}

#[test]
fn residual_permutation_pvalues_are_uniform_under_null() {
    let normal = Normal::new(0.0, 0.05).unwrap();
    let ps = residual_null_pvalues(&|r| normal.sample(r));
    assert!(ks_uniform(&ps).p_value > 0.01, "{:?}", ks_uniform(&ps));
}

#[test]
fn residual_calibration_survives_heavy_tails() {
    let lognormal = LogNormal::new(-3.0, 1.0).unwrap();
    let ps = residual_null_pvalues(&|r| lognormal.sample(r));
    assert!(ks_uniform(&ps).p_value > 0.01, "{:?}", ks_uniform(&ps));
}

#[test]
fn common_shock_is_detected() {
    let mut r = rng(6);
    let n = 500;
    let intent = Normal::new(0.5, 0.1).unwrap();
    let idio = Normal::new(0.0, 0.02).unwrap();
    let shock = Normal::new(0.0, 0.04).unwrap();
    let (mut official, mut sig, mut pollv) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let t: f64 = intent.sample(&mut r);
        sig.push(0.1 + 0.6 * t + idio.sample(&mut r));
        pollv.push(t + idio.sample(&mut r));
        official.push(t + shock.sample(&mut r));
    }
    let res = residual_correlation_from_shares(&official, &sig, &pollv, 999, 1, Alternative::Greater).unwrap();
    assert!(res.r > 0.0);
    assert!(res.permutation_p < 0.01, "r {} p {}", res.r, res.permutation_p);
}

fn coupling_pair() -> (ElectionDataset, ElectionDataset) {
    let mut r = rng(7);
    let n = 200;
    let sig: Vec<f64> = (0..n).map(|_| r.random_range(0.05..0.6)).collect();
    let std = Normal::new(0.0, 1.0).unwrap();
    let clean: Vec<f64> = sig
        .iter()
        .map(|&s| 0.1 + s + 0.3 * (0.6 - s) * std.sample(&mut r))
        .collect();
    let tight: Vec<f64> = sig.iter().map(|&s| 0.1 + s + 0.005 * std.sample(&mut r)).collect();
    (shares_dataset("clean", &sig, &clean), shares_dataset("tight", &sig, &tight))
}

#[test]
fn tight_coupling_is_flagged() {
    let (clean, tight) = coupling_pair();
    let table = cross_election_correlation(&[&clean, &tight], Grouping::SignatureSplit(None), 199, 1).unwrap();
    assert_eq!(table.shared_centers, 200);
    let clean_row = &table.rows[0];
    let tight_row = &table.rows[1];
    let rs = |row: &forensics_core::association::ElectionRow| -> Vec<f64> {
        row.groups.iter().map(|g| g.tested().unwrap().r).collect()
    };
    let (c, t) = (rs(clean_row), rs(tight_row));
    assert!(c[0] < 0.8 && c[1] >= 0.8, "clean {c:?}");
    assert!(t.iter().all(|&r| r >= 0.8), "tight {t:?}");
    assert!(!clean_row.all_groups_high && tight_row.all_groups_high);
    assert_eq!(table.flagged, vec!["tight".to_string()]);
}

#[test]
fn identical_elections_give_identical_rows() {
    let (clean, _) = coupling_pair();
    let table = cross_election_correlation(&[&clean, &clean], Grouping::SignatureSplit(None), 199, 3).unwrap();
    assert_eq!(table.rows[0].groups, table.rows[1].groups);
    assert!(table.flagged.is_empty());
}

#[test]
fn disjoint_elections_are_rejected() {
    let (clean, _) = coupling_pair();
    let mut other = clean.clone();
    for c in &mut other.centers {
        c.center_id = format!("X{}", c.center_id);
    }
    for m in &mut other.machines {
        m.center_id = format!("X{}", m.center_id);
    }
    assert!(cross_election_correlation(&[&clean, &other], Grouping::None, 199, 1).is_err());
}

// ---------------------------------------------------------------- metadata

#[test]
fn identical_class_distributions_give_uniform_pvalues() {
    let config = SynthConfig {
        centers: 60,
        high_traffic_fraction: 0.5,
        cellular_fraction: 0.0,
        ..SynthConfig::default()
    };
    let ps: Vec<f64> = (0..200)
        .map(|seed| {
            let ds = generate(&config, seed).unwrap();
            let cmp = traffic_class_compare(&ds, TrafficMeasure::BytesOut, false).unwrap();
            cmp.pairs.iter().find_map(PairOutcome::p_value).unwrap()
        })
        .collect();
    assert!(ks_uniform(&ps).p_value > 0.01, "{:?}", ks_uniform(&ps));
}

#[test]
fn separated_classes_reach_the_exact_minimum() {
    let classes: Vec<TrafficClass> = (0..20)
        .map(|i| if i < 10 { TrafficClass::Low } else { TrafficClass::High })
        .collect();
    let bytes: Vec<u64> = (1..=20).map(|i| i * 1000).collect();
    let ds = traffic_dataset(&classes, &[300; 20], &bytes);
    let cmp = traffic_class_compare(&ds, TrafficMeasure::BytesOut, false).unwrap();
    let p = cmp.pairs.iter().find_map(PairOutcome::p_value).unwrap();
    assert!((p - 2.0 / 184_756.0).abs() < 1e-15, "{p}");
}

#[test]
fn small_class_is_untestable() {
    let mut classes = vec![TrafficClass::High; 8];
    classes.extend([TrafficClass::Cellular; 3]);
    let ds = traffic_dataset(&classes, &[300; 11], &(1..=11).map(|i| i * 10).collect::<Vec<_>>());
    let cmp = traffic_class_compare(&ds, TrafficMeasure::BytesOut, false).unwrap();
    assert_eq!(cmp.pairs.len(), 1);
    assert!(matches!(&cmp.pairs[0], PairOutcome::Untestable { n_second: 3, .. } | PairOutcome::Untestable { n_first: 3, .. }));
    assert!(!cmp.caveats.is_empty());
}

#[test]
fn constant_bytes_give_zero_slope() {
    let votes: Vec<u64> = (0..20).map(|i| 100 + 13 * i).collect();
    let ds = traffic_dataset(&[TrafficClass::High; 20], &votes, &[4096; 20]);
    let res = bytes_vs_votes_test(&ds, TrafficMeasure::BytesOut, 999, 1).unwrap();
    assert_eq!(res.slope, 0.0);
    assert_eq!(res.permutation_p, 1.0);
}

#[test]
fn shuffled_rows_change_nothing() {
    let ds = generate(&SynthConfig { centers: 80, ..SynthConfig::default() }, 12).unwrap();
    let mut shuffled = ds.clone();
    let mut r = rng(13);
    shuffled.centers.shuffle(&mut r);
    shuffled.machines.shuffle(&mut r);
    shuffled.transmissions.shuffle(&mut r);
    shuffled.exit_polls.shuffle(&mut r);
    for measure in [TrafficMeasure::BytesOut, TrafficMeasure::BytesPerSession] {
        assert_eq!(
            traffic_class_compare(&ds, measure, false).unwrap(),
            traffic_class_compare(&shuffled, measure, false).unwrap()
        );
        assert_eq!(
            bytes_vs_votes_test(&ds, measure, 499, 2).unwrap(),
            bytes_vs_votes_test(&shuffled, measure, 499, 2).unwrap()
        );
    }
    let a = run_battery(&ds, &BatteryConfig::full(), 3).unwrap();
    let b = run_battery(&shuffled, &BatteryConfig::full(), 3).unwrap();
    assert_eq!(
        render_report(&a, ReportFormat::Json).unwrap(),
        render_report(&b, ReportFormat::Json).unwrap()
    );
}

// ---------------------------------------------------------------- audit

fn audit_population() -> ElectionDataset {
    generate(&SynthConfig { centers: 200, transmissions: false, ..SynthConfig::default() }, 21).unwrap()
}

#[test]
fn uniform_audit_samples_look_random() {
    let ds = audit_population();
    let ids: Vec<String> = ds.centers.iter().map(|c| c.center_id.clone()).collect();
    let mut r = rng(22);
    let mut ps = Vec::new();
    for rep in 0..200u64 {
        let audited: BTreeSet<String> = ids.choose_multiple(&mut r, 20).cloned().collect();
        let report = sample_randomness_check(&ds, &audited, &[Covariate::Size], 199, rep).unwrap();
        ps.push(report.results[0].p_value);
    }
    assert!(ks_uniform(&ps).p_value > 0.01, "{:?}", ks_uniform(&ps));
}

#[test]
fn largest_centers_are_not_a_random_sample() {
    let ds = audit_population();
    let mut centers = ds.centers.clone();
    centers.sort_by(|a, b| b.registered.cmp(&a.registered));
    let audited: BTreeSet<String> = centers.iter().take(20).map(|c| c.center_id.clone()).collect();
    let report = sample_randomness_check(&ds, &audited, &Covariate::ALL, 9999, 1).unwrap();
    let size = report.results.iter().find(|c| c.covariate == Covariate::Size).unwrap();
    assert!(size.p_value <= 1.0 / 10_000.0 + 1e-12, "{}", size.p_value);
    assert_eq!(report.results.len(), 4);
}

#[test]
fn audit_set_must_be_a_proper_subset() {
    let ds = audit_population();
    let all: BTreeSet<String> = ds.centers.iter().map(|c| c.center_id.clone()).collect();
    assert!(sample_randomness_check(&ds, &all, &[Covariate::Size], 99, 1).is_err());
    assert!(sample_randomness_check(&ds, &BTreeSet::new(), &[Covariate::Size], 99, 1).is_err());
}

#[test]
fn one_percent_rule_is_dominated() {
    let plan = plan_sample_size(100, 5, 0.9).unwrap();
    assert_eq!(plan.baseline.sample_size, 1);
    assert!(plan.baseline.detection_probability < 0.5);
    assert!(plan.detection_probability >= 0.9);
}

// ---------------------------------------------------------------- synth

#[test]
fn fixed_propensity_recovers_share() {
    let config = SynthConfig {
        centers: 300,
        propensity_mean: 0.41,
        propensity_sd: 0.0,
        out_rate: 0.0,
        ..SynthConfig::default()
    };
    let ds = generate(&config, 31).unwrap();
    let yes: u64 = ds.machines.iter().map(|m| m.yes).sum();
    let valid: u64 = ds.machines.iter().map(|m| m.yes + m.no).sum();
    let share = yes as f64 / valid as f64;
    let sigma = (0.41f64 * 0.59 / valid as f64).sqrt();
    assert!((share - 0.41).abs() < 3.0 * sigma, "{share} (sigma {sigma})");
}

#[test]
fn same_seed_same_bytes() {
    let config = SynthConfig { centers: 50, ..SynthConfig::default() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(&generate(&config, 77).unwrap(), a.path()).unwrap();
    write_dataset(&generate(&config, 77).unwrap(), b.path()).unwrap();
    for file in ["centers.csv", "machines.csv", "exitpoll.csv", "transmissions.csv", "dataset.toml"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn shave_applies_floor_on_every_machine() {
    let ds = generate(&SynthConfig { centers: 40, ..SynthConfig::default() }, 5).unwrap();
    let (tampered, manifest) = inject_fraud(&ds, &FraudScheme::proportional_shave(0.2, FraudScope::All, 1.0), 1).unwrap();
    for (a, b) in ds.machines.iter().zip(&tampered.machines) {
        let shaved = (0.2 * a.yes as f64).floor() as u64;
        assert_eq!(b.yes, a.yes - shaved);
        assert_eq!(b.no, a.no + shaved);
        assert_eq!(b.nu, a.nu);
    }
    assert_eq!(manifest.affected_centers.len(), 40);
}

#[test]
fn cap_matches_the_affected_set() {
    let config = SynthConfig {
        centers: 60,
        votes_min: 200,
        votes_max: 600,
        propensity_mean: 0.5,
        ..SynthConfig::default()
    };
    let ds = generate(&config, 9).unwrap();
    let over: HashSet<String> = ds
        .machines
        .iter()
        .filter(|m| m.yes > 150)
        .map(|m| format!("{}/{}", m.center_id, m.machine_id))
        .collect();
    assert!(!over.is_empty());
    let (tampered, manifest) = inject_fraud(&ds, &FraudScheme::cap_yes(150), 1).unwrap();
    let max_affected = tampered
        .machines
        .iter()
        .filter(|m| over.contains(&format!("{}/{}", m.center_id, m.machine_id)))
        .map(|m| m.yes)
        .max()
        .unwrap();
    assert_eq!(max_affected, 150);
    let listed: HashSet<String> = manifest.affected_machines.iter().cloned().collect();
    assert_eq!(listed, over);
}

// ---------------------------------------------------------------- report

fn battery_dataset() -> ElectionDataset {
    generate(&SynthConfig { centers: 60, ..SynthConfig::default() }, 40).unwrap()
}

#[test]
fn missing_transmissions_skip_only_metadata() {
    let mut ds = battery_dataset();
    ds.transmissions.clear();
    let report = run_battery(&ds, &BatteryConfig::full(), 1).unwrap();
    for entry in &report.entries {
        let metadata = entry.test().starts_with("metadata");
        assert_eq!(entry.result().is_none(), metadata, "{}", entry.test());
    }
    let json = render_report(&report, ReportFormat::Json).unwrap();
    assert!(json.contains("\"status\": \"skipped\""));
    assert!(json.contains("transmission"));
}

#[test]
fn plot_csv_round_trips() {
    let report = run_battery(&battery_dataset(), &BatteryConfig::full(), 2).unwrap();
    let csv = render_report(&report, ReportFormat::PlotCsv).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.csv");
    std::fs::write(&path, &csv).unwrap();
    let rows: Vec<PlotRow> = read_records(&path).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows, plot_rows(&report));
}

#[test]
fn per_test_seeds_are_independent_of_selection() {
    let ds = battery_dataset();
    let full = run_battery(&ds, &BatteryConfig::full(), 9).unwrap();
    let only = BatteryConfig {
        permutation: BatteryConfig::full().permutation,
        ..BatteryConfig::default()
    };
    let single = run_battery(&ds, &only, 9).unwrap();
    assert_eq!(single.entries.len(), 1);
    assert_eq!(single.entry("permutation"), full.entry("permutation"));
}

#[test]
fn reports_carry_no_verdicts() {
    let mut ds = battery_dataset();
    ds = inject_fraud(&ds, &FraudScheme::proportional_shave(0.3, FraudScope::All, 1.0), 1).unwrap().0;
    let report = run_battery(&ds, &BatteryConfig::full(), 4).unwrap();
    for format in [ReportFormat::Json, ReportFormat::Text, ReportFormat::PlotCsv] {
        let text = render_report(&report, format).unwrap().to_lowercase();
        for banned in ["fraud proven", "verdict", "fraudulent", "rigged", "conclusion"] {
            assert!(!text.contains(banned), "{format:?} contains {banned:?}");
        }
    }
    let text = render_report(&report, ReportFormat::Json).unwrap();
    let top_level: Vec<usize> = [
        "schema_version",
        "tool_version",
        "dataset_label",
        "dataset_fingerprint",
        "master_seed",
        "thresholds",
        "entries",
        "summary",
    ]
    .iter()
    .map(|k| text.find(&format!("\n  \"{k}\":")).unwrap_or_else(|| panic!("{k} missing")))
    .collect();
    assert!(top_level.windows(2).all(|w| w[0] < w[1]));
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json.as_object().unwrap().len(), 8);
    for entry in json["entries"].as_array().unwrap() {
        if entry["status"] == "completed" {
            let stochastic = entry.get("reps").is_some();
            assert_eq!(stochastic, entry.get("seed").is_some(), "{}", entry["test"]);
            let module = entry["module"].as_str().unwrap();
            if module == "polling" || module == "metadata" {
                assert!(!entry["caveats"].as_array().unwrap().is_empty());
            }
        }
    }
}

#[test]
fn center_ids_in_plot_rows_exist() {
    let ds = battery_dataset();
    let report = run_battery(&ds, &BatteryConfig::full(), 5).unwrap();
    let ids: HashSet<String> = (0..60).map(forensics_core::synth::center_id).collect();
    assert!(plot_rows(&report).iter().all(|r| ids.contains(&r.center_id)));
}

#[test]
fn json_report_matches_published_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/battery-report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();

    let ds = battery_dataset();
    let mut config = BatteryConfig::full();
    config.audit_randomness = Some(forensics_core::report::AuditRandomnessSection {
        audited: ds.centers.iter().take(6).map(|c| c.center_id.clone()).collect(),
        ..Default::default()
    });
    config.record_timing = true;
    let mut without_traffic = ds.clone();
    without_traffic.transmissions.clear();
    for dataset in [&ds, &without_traffic] {
        let report = run_battery(dataset, &config, 6).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&render_report(&report, ReportFormat::Json).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&json).map(|e| format!("{e} at {}", e.instance_path())).collect();
        assert!(errors.is_empty(), "{errors:#?}");

        let mut tampered = json.clone();
        tampered["verdict"] = serde_json::json!("fraud proven");
        assert!(!validator.is_valid(&tampered));
    }
}
