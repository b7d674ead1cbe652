use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use repheur_core::survey::{
    apply_reversal, ingest_empirical_csv, ingest_response_log, write_response_log, Group, Registry,
    Regime, ResponseRecord, Source,
};
use repheur_core::{
    coefficient_of_variation, epsilon_reference, epsilon_target, gamma_kernel_of_truth,
    representativeness, right_tail_mass_ratio, AttributeScale, MeanPair, ParseMode,
    ResponseCounts,
};

fn counts_strategy() -> impl Strategy<Value = Vec<u64>> {
    (2usize..=9).prop_flat_map(|n| prop::collection::vec(0u64..200, n))
}

fn counts_pair() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
    (2usize..=9).prop_flat_map(|n| {
        (
            prop::collection::vec(0u64..200, n),
            prop::collection::vec(0u64..200, n),
        )
    })
}

fn tally(counts: &[u64]) -> ResponseCounts {
    ResponseCounts::from_counts(AttributeScale::new(counts.len()).unwrap(), counts.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn smoothing_normalizes(counts in counts_strategy()) {
        let d = tally(&counts).smooth_add_one();
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(d.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn equal_inputs_have_unit_representativeness(counts in counts_strategy()) {
        let d = tally(&counts).smooth_add_one();
        let rv = representativeness(&d, &d).unwrap();
        prop_assert!(rv.ratios().iter().all(|&r| (r - 1.0).abs() <= 1e-12));
        prop_assert_eq!(rv.exemplar(), counts.len());
    }

    #[test]
    fn right_tail_grows_with_n((t, r) in counts_pair()) {
        let rv = representativeness(&tally(&t).smooth_add_one(), &tally(&r).smooth_add_one()).unwrap();
        for n_top in 1..t.len() {
            let small = rv.right_tail_attributes(n_top).unwrap();
            let big = rv.right_tail_attributes(n_top + 1).unwrap();
            prop_assert!(small.is_subset(&big));
            prop_assert!(small.len() >= n_top);
            prop_assert!(small.contains(&rv.exemplar()));
        }
    }

    #[test]
    fn tail_ratio_at_least_one_when_target_dominates((t, r) in counts_pair()) {
        let td = tally(&t).smooth_add_one();
        let rd = tally(&r).smooth_add_one();
        let p = right_tail_mass_ratio(&td, &rd, 1).unwrap();
        let rv = representativeness(&td, &rd).unwrap();
        prop_assert!((p - rv.ratio(rv.exemplar())).abs() <= 1e-9 * p.max(1.0));
    }

    #[test]
    fn reversal_is_an_involution(n in 2usize..=9, v in 1i64..=9, reversed: bool) {
        prop_assume!(v as usize <= n);
        let mut spec = Registry::builtin_anes().get("liberal_conservative").unwrap().clone();
        spec.scale = AttributeScale::new(n).unwrap();
        spec.reversed = reversed;
        let once = apply_reversal(v, &spec).unwrap();
        prop_assert_eq!(apply_reversal(once as i64, &spec).unwrap(), v as usize);
    }

    #[test]
    fn reversed_mean_is_reflected(counts in prop::collection::vec(0u64..50, 7)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let d = tally(&counts).to_distribution().unwrap();
        let r = d.reversed();
        prop_assert!((r.mean() - (8.0 - d.mean())).abs() <= 1e-9);
    }

    #[test]
    fn gamma_round_trip(
        e_plus in 1.0f64..7.0,
        gap in 0.05f64..5.0,
        gamma0 in -3.0f64..3.0,
    ) {
        let e_minus = e_plus - gap;
        let eb_plus = e_plus + gamma0 * (e_plus - e_minus);
        let m = MeanPair::empirical(e_plus, e_minus).with_predicted(Some(eb_plus), Some(e_minus));
        let g = gamma_kernel_of_truth(&m, 1e-6).unwrap();
        prop_assert!((g - gamma0).abs() <= 1e-12 * (1.0 + gamma0.abs()) * 10.0);
    }

    #[test]
    fn epsilon_round_trip(
        e_plus in 1.0f64..7.0,
        e_minus in 1.0f64..7.0,
        p in 1.01f64..20.0,
        eps0 in -3.0f64..3.0,
    ) {
        let m = MeanPair::empirical(e_plus, e_minus).with_predicted(
            Some(e_plus + eps0 * (p - 1.0)),
            Some(e_minus - eps0 * (p - 1.0)),
        );
        prop_assert!((epsilon_target(&m, p, 1e-6).unwrap() - eps0).abs() <= 1e-11);
        prop_assert!((epsilon_reference(&m, p, 1e-6).unwrap() - eps0).abs() <= 1e-11);
    }

    #[test]
    fn cv_is_scale_invariant(values in prop::collection::vec(0.5f64..10.0, 1..30), c in 0.1f64..10.0) {
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let a = coefficient_of_variation(&values).unwrap();
        let b = coefficient_of_variation(&scaled).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn empirical_ingest_conserves_rows(
        rows in prop::collection::vec(
            (
                prop::sample::select(vec!["liberal_conservative", "abortion", "mfq_harm_1", "unknown"]),
                prop::sample::select(vec!["R", "D", "I", "other"]),
                -1i64..10,
            ),
            0..200,
        )
    ) {
        let mut text = String::from("topic_id,group,value\n");
        for (t, g, v) in &rows {
            text.push_str(&format!("{t},{g},{v}\n"));
        }
        let out = ingest_empirical_csv(text.as_bytes(), &Registry::builtin()).unwrap();
        prop_assert_eq!(out.rows, rows.len());
        prop_assert_eq!(out.tallied() + out.dropped + out.rejects.len(), rows.len());
    }

    #[test]
    fn response_log_round_trips(
        entries in prop::collection::vec(
            (any::<bool>(), 0usize..4, 0u32..40, prop::option::of(1usize..=7), "[ -~]{0,40}", 0i64..1_000_000_000),
            0..30,
        )
    ) {
        let records: Vec<ResponseRecord> = entries
            .into_iter()
            .map(|(target, regime, run, value, text, secs)| ResponseRecord {
                topic_id: "liberal_conservative".into(),
                group: if target { Group::Target } else { Group::Reference },
                source: Source::Model,
                model_name: Some("gpt-x".into()),
                regime: Regime::ALL[regime],
                run_index: run,
                raw_text: text,
                scale_value: value,
                timestamp: Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap(),
                request_params: serde_json::json!({"temperature": 0.7}),
            })
            .collect();
        let mut buf = Vec::new();
        write_response_log(&mut buf, &records).unwrap();
        let back = ingest_response_log(&buf[..], &Registry::builtin(), ParseMode::Lenient).unwrap();
        prop_assert!(back.rejects.is_empty());
        prop_assert_eq!(back.records, records);
    }
}
