//! Canonical record schema: the twelve telemetry features, in fixed column
//! order. `pathloss` is the regression target; the remaining eleven are model
//! inputs.

/// Column names in canonical order. This order is load-bearing: CSV artifacts,
/// model documents and the text codec all follow it.
pub const RECORD_COLUMNS: [&str; 12] = [
    "x",
    "y",
    "distance",
    "pathloss",
    "doa_phi",
    "doa_theta",
    "dod_phi",
    "dod_theta",
    "phase",
    "power",
    "toa",
    "los",
];

/// Index of the regression target within [`RECORD_COLUMNS`].
pub const PATHLOSS_INDEX: usize = 3;

/// Number of model-input features (all columns except `pathloss`).
pub const INPUT_DIM: usize = 11;

/// Input feature names in canonical order (pathloss removed).
pub fn input_feature_names() -> Vec<String> {
    RECORD_COLUMNS
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != PATHLOSS_INDEX)
        .map(|(_, n)| n.to_string())
        .collect()
}

/// Splits a 12-value record row into (11 inputs, pathloss target).
pub fn split_row(row: &[f64; 12]) -> (Vec<f64>, f64) {
    let mut x = Vec::with_capacity(INPUT_DIM);
    for (i, v) in row.iter().enumerate() {
        if i != PATHLOSS_INDEX {
            x.push(*v);
        }
    }
    (x, row[PATHLOSS_INDEX])
}

/// Reassembles a record row from the 11 inputs and the pathloss target.
pub fn assemble_row(x: &[f64], pathloss: f64) -> [f64; 12] {
    assert_eq!(x.len(), INPUT_DIM, "expected {INPUT_DIM} input features");
    let mut row = [0.0; 12];
    let mut k = 0;
    for (i, slot) in row.iter_mut().enumerate() {
        if i == PATHLOSS_INDEX {
            *slot = pathloss;
        } else {
            *slot = x[k];
            k += 1;
        }
    }
    row
}
