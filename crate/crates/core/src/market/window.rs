use nalgebra::DMatrix;

use super::PriceTable;
use crate::error::{Error, Result};

/// Raw prices for one window: `A x (wb + wf + 1)`. Column 0 is the day before
/// the first backward day, so every one of the `wb + wf` days has a variation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWindow {
    pub prices: DMatrix<f64>,
    /// Table index of the last backward day.
    pub anchor: usize,
    pub wb: usize,
    pub wf: usize,
}

impl RawWindow {
    pub fn n_assets(&self) -> usize {
        self.prices.nrows()
    }
}

/// One normalized window.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketWindow {
    /// `A x wb` daily variations of the scaled price.
    pub backward: DMatrix<f64>,
    /// `A x wf` daily variations, scaled with the backward affine map.
    pub forward: DMatrix<f64>,
    pub pmin: Vec<f64>,
    pub pmax: Vec<f64>,
    /// `(pmax - pmin) / pmean` over the backward days.
    pub analysis: Vec<f64>,
    /// Scaled price on the anchor (last backward) day.
    pub anchor_scaled: Vec<f64>,
    pub anchor_price: Vec<f64>,
    pub anchor: usize,
    /// Per asset: backward prices were constant.
    pub degenerate: Vec<bool>,
}

impl MarketWindow {
    pub fn n_assets(&self) -> usize {
        self.backward.nrows()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// Backward variations followed by forward variations: `A x (wb + wf)`.
    pub fn full_variations(&self) -> DMatrix<f64> {
        let (a, wb, wf) = (self.n_assets(), self.backward.ncols(), self.forward.ncols());
        let mut m = DMatrix::zeros(a, wb + wf);
        m.columns_mut(0, wb).copy_from(&self.backward);
        m.columns_mut(wb, wf).copy_from(&self.forward);
        m
    }
}

/// Sliding windows of `wb + wf + 1` prices, shifted by `stride` days.
pub fn make_windows(table: &PriceTable, wb: usize, wf: usize, stride: usize) -> Result<Vec<RawWindow>> {
    if wb == 0 || stride == 0 {
        return Err(Error::Config(format!("wb = {wb} and stride = {stride} must be positive")));
    }
    let span = wb + wf + 1;
    let t = table.n_days();
    if t < span {
        return Err(Error::Data(format!(
            "{t} days is shorter than one window of {span} prices"
        )));
    }
    let count = (t - span) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            RawWindow {
                prices: table.prices().columns(start, span).into_owned(),
                anchor: start + wb,
                wb,
                wf,
            }
        })
        .collect())
}

/// The latest `wb` backward days ending at table index `anchor`, with no
/// forward part. Used to condition scenario generation.
pub fn conditioning_window(table: &PriceTable, anchor: usize, wb: usize) -> Result<RawWindow> {
    if anchor < wb || anchor >= table.n_days() {
        return Err(Error::Data(format!(
            "conditioning window of {wb} days ending at day {anchor} does not fit in {} days",
            table.n_days()
        )));
    }
    Ok(RawWindow {
        prices: table.prices().columns(anchor - wb, wb + 1).into_owned(),
        anchor,
        wb,
        wf: 0,
    })
}

pub fn normalize_window(raw: &RawWindow) -> Result<MarketWindow> {
    let (a, wb, wf) = (raw.n_assets(), raw.wb, raw.wf);
    if raw.prices.ncols() != wb + wf + 1 {
        return Err(Error::Dimension(format!(
            "raw window has {} columns, expected {}",
            raw.prices.ncols(),
            wb + wf + 1
        )));
    }
    if raw.prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::Data("window contains non-positive prices".into()));
    }
    let mut w = MarketWindow {
        backward: DMatrix::zeros(a, wb),
        forward: DMatrix::zeros(a, wf),
        pmin: vec![0.0; a],
        pmax: vec![0.0; a],
        analysis: vec![0.0; a],
        anchor_scaled: vec![0.0; a],
        anchor_price: vec![0.0; a],
        anchor: raw.anchor,
        degenerate: vec![false; a],
    };
    for i in 0..a {
        let row = raw.prices.row(i);
        let back = row.columns(1, wb);
        let pmin = back.min();
        let pmax = back.max();
        let pmean = back.mean();
        w.pmin[i] = pmin;
        w.pmax[i] = pmax;
        w.anchor_price[i] = row[wb];
        if pmax == pmin {
            w.degenerate[i] = true;
            continue;
        }
        w.analysis[i] = (pmax - pmin) / pmean;
        let scale = |p: f64| 2.0 * (p - pmin) / (pmax - pmin) - 1.0;
        let scaled: Vec<f64> = row.iter().map(|&p| scale(p)).collect();
        for t in 0..wb {
            w.backward[(i, t)] = scaled[t + 1] - scaled[t];
        }
        for t in 0..wf {
            w.forward[(i, t)] = scaled[wb + t + 1] - scaled[wb + t];
        }
        w.anchor_scaled[i] = scaled[wb];
    }
    Ok(w)
}

/// Inverts the normalization for a generated `A x wf` block of variations:
/// cumulative sum from the anchor's scaled price, then the inverse affine map.
pub fn denormalize_path(variations: &DMatrix<f64>, window: &MarketWindow) -> Result<DMatrix<f64>> {
    let a = window.n_assets();
    if variations.nrows() != a {
        return Err(Error::Dimension(format!(
            "{} rows of variations for {a} assets",
            variations.nrows()
        )));
    }
    let mut out = DMatrix::zeros(a, variations.ncols());
    for i in 0..a {
        if window.degenerate[i] {
            out.row_mut(i).fill(window.anchor_price[i]);
            continue;
        }
        let (pmin, pmax) = (window.pmin[i], window.pmax[i]);
        let mut level = window.anchor_scaled[i];
        for t in 0..variations.ncols() {
            level += variations[(i, t)];
            out[(i, t)] = (level + 1.0) / 2.0 * (pmax - pmin) + pmin;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Days, NaiveDate};
    use proptest::prelude::*;

    fn table(n: usize) -> PriceTable {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..n).map(|i| start + Days::new(i as u64)).collect();
        let prices = DMatrix::from_fn(2, n, |a, t| 10.0 + a as f64 + (t as f64 * 0.3).sin());
        PriceTable::new(vec!["A".into(), "B".into()], dates, prices).unwrap()
    }

    fn raw(rows: &[&[f64]], wb: usize) -> RawWindow {
        let cols = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        RawWindow {
            prices: DMatrix::from_row_slice(rows.len(), cols, &data),
            anchor: wb,
            wb,
            wf: cols - wb - 1,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&table(61), 40, 20, 1).unwrap().len(), 1);
        assert_eq!(make_windows(&table(70), 40, 20, 1).unwrap().len(), 10);
        assert_eq!(make_windows(&table(70), 40, 20, 3).unwrap().len(), 4);
        assert!(matches!(make_windows(&table(60), 40, 20, 1), Err(Error::Data(_))));
    }

    #[test]
    fn windows_tile_the_table() {
        let t = table(90);
        let ws = make_windows(&t, 10, 5, 2).unwrap();
        for (k, w) in ws.iter().enumerate() {
            assert_eq!(w.anchor, 2 * k + 10);
            assert_eq!(w.prices, t.prices().columns(2 * k, 16).into_owned());
        }
    }

    #[test]
    fn affine_scaling_and_analysis_value() {
        // leading price 12, backward [10, 20, 15]
        let w = normalize_window(&raw(&[&[12.0, 10.0, 20.0, 15.0]], 3)).unwrap();
        let scaled_levels = [-1.0, 1.0, 0.0];
        let lead = 2.0 * (12.0 - 10.0) / 10.0 - 1.0;
        assert!((w.backward[(0, 0)] - (scaled_levels[0] - lead)).abs() < 1e-15);
        assert!((w.backward[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((w.backward[(0, 2)] + 1.0).abs() < 1e-15);
        assert!((w.analysis[0] - 10.0 / 15.0).abs() < 1e-15);
        assert_eq!(w.anchor_scaled[0], 0.0);
    }

    #[test]
    fn constant_backward_window_is_degenerate() {
        let w = normalize_window(&raw(&[&[5.0, 5.0, 5.0, 5.0, 6.0]], 3)).unwrap();
        assert!(w.is_degenerate());
        assert_eq!(w.analysis[0], 0.0);
        assert!(w.backward.iter().chain(w.forward.iter()).all(|&v| v == 0.0));
        let path = denormalize_path(&DMatrix::from_element(1, 3, 0.7), &w).unwrap();
        assert!(path.iter().all(|&p| p == 5.0));
    }

    #[test]
    fn forward_values_may_leave_unit_range() {
        // ramp 10..20 over the backward days, then 30
        let mut prices: Vec<f64> = vec![10.0];
        prices.extend((0..11).map(|i| 10.0 + i as f64));
        prices.push(30.0);
        let w = normalize_window(&raw(&[&prices], 11)).unwrap();
        let level = w.anchor_scaled[0] + w.forward[(0, 0)];
        assert!((w.anchor_scaled[0] - 1.0).abs() < 1e-15);
        assert!((level - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variations_hold_anchor_price() {
        let w = normalize_window(&raw(&[&[11.0, 10.0, 20.0, 14.0]], 3)).unwrap();
        let path = denormalize_path(&DMatrix::zeros(1, 4), &w).unwrap();
        assert!(path.iter().all(|&p| (p - 14.0).abs() < 1e-12));
    }

    #[test]
    fn single_variation_moves_by_half_range() {
        let w = normalize_window(&raw(&[&[11.0, 10.0, 20.0, 15.0]], 3)).unwrap();
        let path = denormalize_path(&DMatrix::from_element(1, 1, 0.2), &w).unwrap();
        assert!((path[(0, 0)] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn conditioning_window_has_no_forward_part() {
        let t = table(50);
        let raw = conditioning_window(&t, 45, 40).unwrap();
        let w = normalize_window(&raw).unwrap();
        assert_eq!(w.forward.ncols(), 0);
        assert_eq!(w.anchor_price[1], t.price(1, 45));
        assert!(conditioning_window(&t, 39, 40).is_err());
    }

    proptest! {
        #[test]
        fn backward_levels_span_unit_interval(prices in prop::collection::vec(1.0f64..100.0, 8)) {
            let w = normalize_window(&raw(&[&prices], 5)).unwrap();
            prop_assume!(!w.is_degenerate());
            // Rebuild levels from the anchor backwards.
            let mut levels = vec![w.anchor_scaled[0]];
            for t in (1..5).rev() {
                let prev = levels[levels.len() - 1] - w.backward[(0, t)];
                levels.push(prev);
            }
            let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }

        #[test]
        fn analysis_value_is_scale_invariant(prices in prop::collection::vec(1.0f64..100.0, 8), c in 0.01f64..100.0) {
            let w = normalize_window(&raw(&[&prices], 5)).unwrap();
            let scaled: Vec<f64> = prices.iter().map(|p| p * c).collect();
            let ws = normalize_window(&raw(&[&scaled], 5)).unwrap();
            prop_assert!((w.analysis[0] - ws.analysis[0]).abs() < 1e-12);
            prop_assert!(w.analysis[0] >= 0.0);
        }
    }
}
