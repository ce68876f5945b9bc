//! Price histories, training windows and their normalization.

mod csv_io;
mod synth;
mod window;

pub use csv_io::{find_spikes, load_csv, read_csv, write_csv, Spike};
pub use synth::{synth_correlated_gbm, SynthConfig};
pub use window::{
    conditioning_window, denormalize_path, make_windows, normalize_window, MarketWindow, RawWindow,
};

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Adjusted close prices, one row per asset and one column per trading day.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceTable {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: DMatrix<f64>,
}

impl PriceTable {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, prices: DMatrix<f64>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Data("price table has no assets".into()));
        }
        if prices.nrows() != tickers.len() || prices.ncols() != dates.len() {
            return Err(Error::Data(format!(
                "price matrix is {}x{} for {} tickers and {} dates",
                prices.nrows(),
                prices.ncols(),
                tickers.len(),
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "dates not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        for (i, ticker) in tickers.iter().enumerate() {
            for (t, date) in dates.iter().enumerate() {
                let p = prices[(i, t)];
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::Data(format!(
                        "{ticker} on {date}: price {p} is not a positive number"
                    )));
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            prices,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn price(&self, asset: usize, day: usize) -> f64 {
        self.prices[(asset, day)]
    }

    /// Index of the first date on or after `date`.
    pub fn index_on_or_after(&self, date: NaiveDate) -> Option<usize> {
        let i = self.dates.partition_point(|d| *d < date);
        (i < self.dates.len()).then_some(i)
    }

    /// Index of the last date on or before `date`.
    pub fn index_on_or_before(&self, date: NaiveDate) -> Option<usize> {
        self.dates.partition_point(|d| *d <= date).checked_sub(1)
    }

    /// Columns `start..end` as a new table.
    pub fn slice_days(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_days() {
            return Err(Error::Data(format!(
                "day range {start}..{end} outside table of {} days",
                self.n_days()
            )));
        }
        Ok(Self {
            tickers: self.tickers.clone(),
            dates: self.dates[start..end].to_vec(),
            prices: self.prices.columns(start, end - start).into_owned(),
        })
    }

    /// Training part (dates up to and including `split`) and the full table
    /// index where the test part starts.
    pub fn split_at_date(&self, split: NaiveDate) -> Result<(Self, usize)> {
        let end = self.dates.partition_point(|d| *d <= split);
        if end == 0 || end == self.n_days() {
            return Err(Error::Data(format!(
                "split date {split} leaves an empty train or test period ({} .. {})",
                self.dates[0],
                self.dates[self.n_days() - 1]
            )));
        }
        Ok((self.slice_days(0, end)?, end))
    }
}
