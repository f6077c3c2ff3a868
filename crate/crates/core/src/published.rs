//! Reference quantile tables of `Z` computed with 1e8 simulations.
//!
//! Rows are the error levels in [`DELTAS`]; each column is one border `alpha`.

use crate::calibration::{CalibrationTable, QuantileEntry};
use crate::error::{Error, Result};

pub const DELTAS: [f64; 7] = [0.1, 0.05, 0.01, 1e-3, 1e-4, 1e-5, 1e-6];

/// Simulation count behind the reference values.
pub const N_SIMS: u64 = 100_000_000;

struct Column {
    window: usize,
    alpha: usize,
    h: [f64; 7],
}

const COLUMNS: &[Column] = &[
    Column {
        window: 30,
        alpha: 5,
        h: [10.024, 11.909, 16.089, 21.837, 27.464, 33.124, 38.882],
    },
    Column {
        window: 30,
        alpha: 7,
        h: [9.245, 11.084, 15.173, 20.786, 26.273, 31.706, 37.244],
    },
    Column {
        window: 50,
        alpha: 5,
        h: [10.661, 12.518, 16.633, 22.283, 27.824, 33.200, 38.841],
    },
    Column {
        window: 50,
        alpha: 10,
        h: [9.318, 11.095, 15.043, 20.454, 25.721, 30.771, 35.969],
    },
    Column {
        window: 50,
        alpha: 12,
        h: [8.948, 10.711, 14.635, 20.018, 25.253, 30.429, 35.716],
    },
    Column {
        window: 100,
        alpha: 5,
        h: [11.270, 13.099, 17.143, 22.705, 28.152, 33.576, 38.957],
    },
    Column {
        window: 100,
        alpha: 10,
        h: [10.303, 12.069, 15.971, 21.315, 26.500, 31.591, 36.549],
    },
    Column {
        window: 100,
        alpha: 15,
        h: [9.726, 11.471, 15.334, 20.628, 25.769, 30.852, 35.712],
    },
    Column {
        window: 100,
        alpha: 20,
        h: [9.244, 10.976, 14.818, 20.088, 25.180, 30.249, 35.165],
    },
    Column {
        window: 100,
        alpha: 25,
        h: [8.789, 10.507, 14.332, 19.578, 24.676, 29.740, 34.720],
    },
    Column {
        window: 200,
        alpha: 5,
        h: [11.780, 13.587, 17.588, 23.080, 28.482, 33.874, 38.938],
    },
    Column {
        window: 200,
        alpha: 20,
        h: [10.257, 11.989, 15.817, 21.057, 26.173, 31.153, 35.961],
    },
    Column {
        window: 200,
        alpha: 35,
        h: [9.505, 11.223, 15.028, 20.248, 25.320, 30.254, 35.187],
    },
    Column {
        window: 200,
        alpha: 50,
        h: [8.833, 10.537, 14.323, 19.516, 24.611, 29.514, 34.499],
    },
    Column {
        window: 300,
        alpha: 5,
        h: [12.023, 13.823, 17.799, 23.271, 28.667, 34.061, 39.142],
    },
    Column {
        window: 300,
        alpha: 25,
        h: [10.466, 12.194, 16.007, 21.214, 26.270, 31.411, 36.424],
    },
    Column {
        window: 300,
        alpha: 45,
        h: [9.769, 11.486, 15.285, 20.471, 25.498, 30.528, 35.684],
    },
    Column {
        window: 300,
        alpha: 65,
        h: [9.171, 10.879, 14.666, 19.848, 24.868, 29.960, 35.072],
    },
    Column {
        window: 300,
        alpha: 75,
        h: [8.877, 10.578, 14.357, 19.534, 24.546, 29.650, 34.756],
    },
    Column {
        window: 400,
        alpha: 5,
        h: [12.182, 13.974, 17.935, 23.389, 28.729, 34.091, 39.388],
    },
    Column {
        window: 400,
        alpha: 35,
        h: [10.431, 12.154, 15.957, 21.160, 26.232, 31.130, 35.642],
    },
    Column {
        window: 400,
        alpha: 65,
        h: [9.682, 11.396, 15.187, 20.378, 25.423, 30.309, 35.106],
    },
    Column {
        window: 400,
        alpha: 95,
        h: [9.017, 10.721, 14.496, 19.681, 24.730, 29.661, 34.543],
    },
    Column {
        window: 400,
        alpha: 100,
        h: [8.907, 10.609, 14.382, 19.567, 24.621, 29.568, 34.319],
    },
];

/// `(T, alpha)` pairs with a reference column.
pub fn available() -> impl Iterator<Item = (usize, usize)> {
    COLUMNS.iter().map(|c| (c.window, c.alpha))
}

/// The reference quantiles for `(window, alpha)` as `(delta, h)` entries.
pub fn entries(window: usize, alpha: usize) -> Option<Vec<QuantileEntry>> {
    COLUMNS
        .iter()
        .find(|c| c.window == window && c.alpha == alpha)
        .map(|c| {
            DELTAS
                .iter()
                .zip(c.h)
                .map(|(&delta, h)| QuantileEntry { delta, h })
                .collect()
        })
}

/// A calibration table built from the reference column, with its line fit.
pub fn table(window: usize, alpha: usize) -> Result<CalibrationTable> {
    let entries = entries(window, alpha)
        .ok_or_else(|| Error::InvalidConfig(format!("no reference quantiles for T = {window}, alpha = {alpha}")))?;
    let mut t = CalibrationTable::from_entries(window, alpha, entries)?;
    t.n_sims = N_SIMS;
    t.rng_name = "reference".to_string();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_column_is_a_valid_table() {
        for (w, a) in available() {
            let t = table(w, a).unwrap();
            assert!(t.fit.slope > 0.0);
        }
        assert!(table(100, 26).is_err());
    }

    #[test]
    fn thresholds_drop_as_border_grows() {
        for w in [30, 50, 100, 200, 300, 400] {
            let cols: Vec<_> = available().filter(|&(t, _)| t == w).collect();
            for pair in cols.windows(2) {
                let lo = entries(pair[0].0, pair[0].1).unwrap();
                let hi = entries(pair[1].0, pair[1].1).unwrap();
                for (x, y) in lo.iter().zip(&hi) {
                    assert!(x.h > y.h);
                }
            }
        }
    }

    #[test]
    fn line_fit_residual_for_default_border() {
        let t = table(100, 25).unwrap();
        let worst = t
            .entries
            .iter()
            .map(|e| (t.fit.eval(e.delta) - e.h).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.6, "max residual {worst}");
    }
}
