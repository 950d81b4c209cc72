use std::io::Cursor;

use hewe::sample::{load_sample, ColumnSelector};
use hewe::simulator::sample_pareto;
use hewe::HeweError;

const QUAKES: &str = include_str!("../data/earthquake_fatalities.csv");

#[test]
fn earthquake_file_has_125_rows() {
    let by_name = load_sample(Cursor::new(QUAKES), &ColumnSelector::Name("deaths".into())).unwrap();
    assert_eq!(by_name.sample.n_original(), 125);
    assert_eq!(by_name.sample.len(), 125);
    assert!(by_name.non_numeric_rows.is_empty());
    assert!(by_name.sample.min() >= 1000.0);
    let by_index = load_sample(Cursor::new(QUAKES), &ColumnSelector::Index(2)).unwrap();
    assert_eq!(by_name.sample, by_index.sample);
}

#[test]
fn one_column_file() {
    let s = load_sample(Cursor::new("3\n1\n2"), &ColumnSelector::default()).unwrap().sample;
    assert_eq!(s.values(), &[3.0, 2.0, 1.0]);
    assert_eq!(s.n_original(), 3);
    assert_eq!(s.order_statistic(1).unwrap(), 3.0);
    assert_eq!(s.order_statistic(3).unwrap(), 1.0);
    let r = s.remove_top(1).unwrap();
    assert_eq!(r.values(), &[2.0, 1.0]);
    assert_eq!(r.removed_top(), 1);
    assert_eq!(r.order_statistic(1).unwrap(), 2.0);
    assert_eq!(s.remove_top(0).unwrap(), s);
}

#[test]
fn zero_is_rejected() {
    let err = load_sample(Cursor::new("3\n0\n2"), &ColumnSelector::default()).unwrap_err();
    assert!(matches!(err, HeweError::NonPositiveValue { .. }));
}

#[test]
fn large_removal() {
    let s = sample_pareto(1.0, 5000, 1).unwrap();
    let r = s.remove_top(400).unwrap();
    assert_eq!(r.len(), 4600);
    assert_eq!(r.len() + r.removed_top(), r.n_original());
    assert!(matches!(s.remove_top(5000), Err(HeweError::RemovalExhaustsSample { .. })));
}

#[test]
fn sorted_file_loads_identically() {
    let s = sample_pareto(1.0, 200, 2).unwrap();
    let text: String = s.values().iter().map(|v| format!("{}\n", hewe::report::fmt_g17(*v))).collect();
    let again = load_sample(Cursor::new(text), &ColumnSelector::default()).unwrap().sample;
    assert_eq!(again.values(), s.values());
}
