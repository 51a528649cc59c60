//! Small built-in datasets used by the tests, the examples in the README and
//! the acceptance suite. The same files live under `fixtures/` in this crate.

use std::path::PathBuf;
use std::sync::Arc;

use crate::formula::{Formula, Schema, TRelation};
use crate::taxonomy::Taxonomy;

pub const WINE_TAXONOMY: &str = include_str!("../fixtures/wines/wine.csv");
pub const WINERY_TAXONOMY: &str = include_str!("../fixtures/wines/winery.csv");
pub const YEAR_TAXONOMY: &str = include_str!("../fixtures/wines/year.csv");
pub const WINES_DATA: &str = include_str!("../fixtures/wines/wines.csv");
pub const WINES_PREFS: &str = include_str!("../fixtures/wines/prefs.txt");
pub const CYCLE_DATA: &str = include_str!("../fixtures/wines/cycle.csv");
pub const CYCLE_PREFS: &str = include_str!("../fixtures/wines/cycle_prefs.txt");
pub const TIME_TAXONOMY: &str = include_str!("../fixtures/time/time.csv");
pub const TIME_PREFS: &str = include_str!("../fixtures/time/prefs.txt");

/// Row labels of [`wines_relation`].
pub const WINES_LABELS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
/// Row labels of [`cycle_relation`].
pub const CYCLE_LABELS: [&str; 4] = ["g", "h", "l", "m"];

/// Directory holding the fixture files on disk.
pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn tax(name: &str, text: &str) -> Arc<Taxonomy> {
    Arc::new(Taxonomy::from_csv_str(name, text).expect("fixture taxonomy"))
}

/// Attributes `Wine`, `Winery` and `Year`.
pub fn wines_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new([
            ("Wine".to_string(), tax("wine", WINE_TAXONOMY)),
            ("Winery".to_string(), tax("winery", WINERY_TAXONOMY)),
            ("Year".to_string(), tax("year", YEAR_TAXONOMY)),
        ])
        .expect("fixture schema"),
    )
}

pub fn wines_relation(schema: &Arc<Schema>) -> TRelation {
    TRelation::from_reader(schema.clone(), WINES_DATA.as_bytes()).expect("fixture data")
}

pub fn wines_formula(schema: &Arc<Schema>) -> Formula {
    Formula::parse(schema.clone(), WINES_PREFS).expect("fixture formula")
}

pub fn cycle_relation(schema: &Arc<Schema>) -> TRelation {
    TRelation::from_reader(schema.clone(), CYCLE_DATA.as_bytes()).expect("fixture data")
}

pub fn cycle_formula(schema: &Arc<Schema>) -> Formula {
    Formula::parse(schema.clone(), CYCLE_PREFS).expect("fixture formula")
}

/// A single `Time` attribute: seasons, months and a few days.
pub fn time_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new([("Time".to_string(), tax("time", TIME_TAXONOMY))]).expect("fixture schema"),
    )
}

pub fn time_formula(schema: &Arc<Schema>) -> Formula {
    Formula::parse(schema.clone(), TIME_PREFS).expect("fixture formula")
}
