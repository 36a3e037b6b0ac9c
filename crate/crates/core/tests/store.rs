use std::io::BufReader;

use cascadesim_core::store::*;
use cascadesim_core::Layer;
use proptest::prelude::*;

fn write(dir: &std::path::Path, scenario: u32, day: u32, recs: &[Record]) {
    let mut w = PartitionWriter::new(partition_path(dir, scenario, day));
    for r in recs {
        w.push_record(r).unwrap();
    }
    w.finish().unwrap();
}

fn sample() -> Vec<Record> {
    let mut v = Vec::new();
    for s in 0..3 {
        for h in 0..48 {
            for (layer, off) in [(Layer::DayAhead, 0.0), (Layer::TrueUp, 1.0)] {
                for u in ["T1", "T2"] {
                    v.push(Record::new(s, layer, h, u, "thermal_generation", (s * 100 + h) as f64 + off + 0.1));
                }
            }
        }
    }
    v
}

#[test]
fn round_trip_preserves_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let recs = sample();
    for s in 0..3u32 {
        for d in 0..2u32 {
            let part: Vec<Record> = recs
                .iter()
                .filter(|r| r.scenario == s && r.hour / 24 == d)
                .cloned()
                .collect();
            write(dir.path(), s, d, &part);
        }
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.num_partitions(), 6);
    assert_eq!(store.count().unwrap(), recs.len() as u64);
    let mut back = store.query(&Query::default()).unwrap();
    let mut expect = recs.clone();
    let key = |r: &Record| (r.scenario, r.layer, r.hour, r.entity.clone(), r.metric.clone());
    expect.sort_by_key(key);
    back.sort_by_key(key);
    assert_eq!(back, expect);
}

#[test]
fn duplicate_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = PartitionWriter::new(partition_path(dir.path(), 0, 0));
    w.push(0, Layer::TrueUp, 3, "T1", "thermal_generation", 1.0).unwrap();
    w.push(0, Layer::HourAhead, 3, "T1", "thermal_generation", 1.0).unwrap();
    let err = w.push(0, Layer::TrueUp, 3, "T1", "thermal_generation", 2.0).unwrap_err();
    assert!(matches!(err, StoreError::DuplicateKey { hour: 3, .. }));
}

#[test]
fn blocks_split_at_row_limit() {
    let dir = tempfile::tempdir().unwrap();
    let n = BLOCK_ROWS as u32 * 2 + 17;
    let mut w = PartitionWriter::new(partition_path(dir.path(), 0, 0));
    for i in 0..n {
        w.push(0, Layer::TrueUp, i, "X", "m", i as f64).unwrap();
    }
    w.finish().unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.count().unwrap(), n as u64);
    let q = Query {
        hours: Some((BLOCK_ROWS as u32 - 2, BLOCK_ROWS as u32 + 3)),
        ..Query::default()
    };
    let got: Vec<f64> = store.query(&q).unwrap().iter().map(|r| r.value).collect();
    let lo = BLOCK_ROWS as f64 - 2.0;
    assert_eq!(got, vec![lo, lo + 1.0, lo + 2.0, lo + 3.0, lo + 4.0]);
}

#[test]
fn sum_of_constant_output_over_ten_hours() {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<Record> = (0..10).map(|h| Record::new(0, Layer::TrueUp, h, "T1", "thermal_generation", 5.0)).collect();
    write(dir.path(), 0, 0, &recs);
    let store = Store::open(dir.path()).unwrap();
    let got = store.query(&Query::metric("thermal_generation")).unwrap();
    let vals: Vec<f64> = got.iter().map(|r| r.value).collect();
    assert_eq!(Aggregate::Sum.apply(&vals), Some(50.0));
    assert_eq!(Aggregate::Mean.apply(&vals), Some(5.0));
}

#[test]
fn filters_by_scenario_layer_entity_and_hours() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), 0, 0, &sample());
    let store = Store::open(dir.path()).unwrap();
    let q = Query {
        scenarios: Some(vec![1]),
        layers: Some(vec![Layer::TrueUp]),
        hours: Some((10, 12)),
        entities: Some(vec!["T2".into()]),
        metrics: None,
    };
    let got = store.query(&q).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[0].value, 111.1);
    assert_eq!(got[1].value, 112.1);
    let none = store
        .query(&Query {
            entities: Some(vec!["nope".into()]),
            ..Query::default()
        })
        .unwrap();
    assert!(none.is_empty());
}

#[test]
fn empty_result_exports_header_only() {
    let mut buf = Vec::new();
    write_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn csv_reimport_is_exact() {
    let mut recs = sample();
    recs.push(Record::new(9, Layer::Meta, 0, "odd,\"name\"", "x", 1.0 / 3.0));
    recs.push(Record::new(9, Layer::Meta, 1, "tiny", "x", -1.234e-300));
    let mut buf = Vec::new();
    write_csv(&recs, &mut buf).unwrap();
    let back = read_csv(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back, recs);
}

#[test]
fn svg_has_one_polyline_per_layer() {
    let mut recs = Vec::new();
    for layer in [Layer::WeekAhead, Layer::DayAhead, Layer::HourAhead, Layer::TrueUp] {
        for s in 0..2 {
            for h in 0..24 {
                recs.push(Record::new(s, layer, h, "H1", "hydro_generation", (h + s) as f64));
                recs.push(Record::new(s, layer, h, "H2", "hydro_generation", 1.0));
            }
        }
    }
    let series = layer_series(&recs, Aggregate::Mean);
    assert_eq!(series.len(), 4);
    // Sum over entities, mean over scenarios: (h + 0 + 1 + h + 1 + 1) / 2.
    assert_eq!(series[&Layer::DayAhead][5], (5, 6.5));
    let svg = render_svg(&series, "hydro_generation", "MW");
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert!(svg.starts_with("<svg"));
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write(a.path(), 0, 0, &sample());
    write(b.path(), 0, 0, &sample());
    let fa = std::fs::read(partition_path(a.path(), 0, 0)).unwrap();
    let fb = std::fs::read(partition_path(b.path(), 0, 0)).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn truncated_file_is_reported_as_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), 0, 0, &sample());
    let p = partition_path(dir.path(), 0, 0);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert!(matches!(store.count(), Err(StoreError::Corrupt { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_matches_order_statistics(values in prop::collection::vec(-1e6f64..1e6, 1..200), k in 0usize..200) {
        let n = values.len();
        let k = k % n;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        // At q = k/(n-1) the interpolated quantile is exactly the k-th order statistic.
        let q = if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
        let expect = if n == 1 { sorted[0] } else { sorted[k] };
        let got = Aggregate::Quantile(q).apply(&values).unwrap();
        prop_assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        let mid = Aggregate::Quantile(0.37).apply(&values).unwrap();
        prop_assert!((mid - cascadesim_testkit::sorted_quantile(&values, 0.37)).abs() <= 1e-9 * mid.abs().max(1.0));
        prop_assert!(sorted[0] <= mid && mid <= sorted[n - 1]);
    }

    #[test]
    fn stored_values_round_trip_bit_exact(values in prop::collection::vec(any::<f64>(), 1..300)) {
        let dir = tempfile::tempdir().unwrap();
        let mut w = PartitionWriter::new(partition_path(dir.path(), 0, 0));
        for (i, v) in values.iter().enumerate() {
            w.push(0, Layer::TrueUp, i as u32, "e", "m", *v).unwrap();
        }
        w.finish().unwrap();
        let got = Store::open(dir.path()).unwrap().query(&Query::default()).unwrap();
        prop_assert_eq!(got.len(), values.len());
        for (r, v) in got.iter().zip(&values) {
            prop_assert_eq!(r.value.to_bits(), v.to_bits());
        }
    }
}
