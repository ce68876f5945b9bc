use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use super::PriceTable;
use crate::error::{Error, Result};

/// Reads a wide CSV (`date,<ticker1>,...,<tickerA>`, ISO dates, decimal prices).
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string())
}

pub fn read_csv(reader: impl Read, source: &str) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{source}: unreadable header: {e}")))?
        .clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Data(format!(
            "{source}: header must be `date,<ticker>,...`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if let Some(t) = tickers.iter().find(|t| t.is_empty()) {
        return Err(Error::Data(format!("{source}: empty ticker name `{t}` in header")));
    }

    let mut dates = Vec::new();
    let mut columns: Vec<f64> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Data(format!("{source}: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "{source}, line {line}: expected {} cells, found {}",
                header.len(),
                record.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| {
            Error::Data(format!("{source}, line {line}: bad date `{}`", &record[0]))
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Data(format!(
                    "{source}, line {line}: date {date} does not follow {prev}"
                )));
            }
        }
        for (cell, ticker) in record.iter().skip(1).zip(&tickers) {
            let value = match cell {
                "" => None,
                s => s.parse::<f64>().ok().filter(|v| v.is_finite()),
            };
            let value = value.ok_or_else(|| {
                Error::Data(format!(
                    "{source}, line {line}, ticker {ticker}: missing or invalid price `{cell}`"
                ))
            })?;
            if value <= 0.0 {
                return Err(Error::Data(format!(
                    "{source}, line {line}, ticker {ticker}: non-positive price {value}"
                )));
            }
            columns.push(value);
        }
        dates.push(date);
    }
    if dates.is_empty() {
        return Err(Error::Data(format!("{source}: no price rows")));
    }
    // `columns` is day-major; the table is asset-major.
    let prices = DMatrix::from_column_slice(tickers.len(), dates.len(), &columns);
    PriceTable::new(tickers, dates, prices)
}

pub fn write_csv(table: &PriceTable, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "date,{}", table.tickers().join(","))?;
    for (t, date) in table.dates().iter().enumerate() {
        write!(out, "{}", date.format("%Y-%m-%d"))?;
        for a in 0..table.n_assets() {
            // `{}` prints the shortest representation that parses back exactly.
            write!(out, ",{}", table.price(a, t))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// A day-over-day price ratio outside `[1/max_ratio, max_ratio]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spike {
    pub ticker: String,
    pub date: NaiveDate,
    pub ratio: f64,
}

pub fn find_spikes(table: &PriceTable, max_ratio: f64) -> Vec<Spike> {
    let mut out = Vec::new();
    for (a, ticker) in table.tickers().iter().enumerate() {
        for t in 1..table.n_days() {
            let ratio = table.price(a, t) / table.price(a, t - 1);
            if ratio > max_ratio || ratio < 1.0 / max_ratio {
                out.push(Spike {
                    ticker: ticker.clone(),
                    date: table.dates()[t],
                    ratio,
                });
            }
        }
    }
    out
}
