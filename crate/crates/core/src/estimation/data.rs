//! Bid records and their CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spec::{AuctionSpec, Format};

pub const CSV_HEADER: [&str; 6] = ["subject_id", "round", "treatment", "format", "value", "bid"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BidRecord {
    pub subject_id: String,
    pub round: u32,
    pub treatment: String,
    pub format: Format,
    pub value: u32,
    pub bid: u32,
}

/// How bids are tied to a single behavioural type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One type per subject for all of their bids.
    Subject,
    /// A type per subject and round.
    SubjectRound,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subject" => Ok(Grouping::Subject),
            "round" | "subject_round" | "subject-round" => Ok(Grouping::SubjectRound),
            other => Err(Error::Parameter(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BidDataset {
    records: Vec<BidRecord>,
    /// Source line of each record (1-based, header is line 1), when read
    /// from a file.
    lines: Vec<u64>,
    source: String,
}

impl BidDataset {
    pub fn new(records: Vec<BidRecord>) -> Self {
        let lines = (0..records.len() as u64).map(|i| i + 2).collect();
        BidDataset { records, lines, source: "<memory>".into() }
    }

    pub fn records(&self) -> &[BidRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Record indices per group, in a deterministic (sorted key) order.
    pub fn groups(&self, grouping: Grouping) -> Vec<Vec<usize>> {
        let mut map: BTreeMap<(String, u32), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let round = match grouping {
                Grouping::Subject => 0,
                Grouping::SubjectRound => r.round,
            };
            map.entry((r.subject_id.clone(), round)).or_default().push(i);
        }
        map.into_values().collect()
    }

    /// Records satisfying `keep`, with their source lines.
    pub fn filter(&self, keep: impl Fn(&BidRecord) -> bool) -> BidDataset {
        let (records, lines) = self
            .records
            .iter()
            .zip(&self.lines)
            .filter(|(r, _)| keep(r))
            .map(|(r, l)| (r.clone(), *l))
            .unzip();
        BidDataset { records, lines, source: self.source.clone() }
    }

    pub fn without_subject(&self, subject: &str) -> BidDataset {
        self.filter(|r| r.subject_id != subject)
    }

    /// Checks that values lie in `0..=x` and bids on the grid, naming the
    /// offending source line.
    pub fn validate(&self, spec: &AuctionSpec) -> Result<()> {
        for (r, &line) in self.records.iter().zip(&self.lines) {
            let err = |message: String| Error::Ingest { source_name: self.source.clone(), line, message };
            if r.value > spec.x() {
                return Err(err(format!("value {} outside 0..={}", r.value, spec.x())));
            }
            if spec.grid_index(r.bid).is_none() {
                return Err(err(format!("bid {} is not on the bid grid", r.bid)));
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, source_name: &str) -> Result<Self> {
        let ingest = |line: u64, message: String| Error::Ingest { source_name: source_name.into(), line, message };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(ingest(1, format!("expected header {}", CSV_HEADER.join(","))));
        }
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                ingest(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<u32> {
                rec[i].parse().map_err(|_| ingest(line, format!("field {name}: cannot parse {:?}", &rec[i])))
            };
            let format = rec[3]
                .parse::<Format>()
                .map_err(|_| ingest(line, format!("field format: unknown format {:?}", &rec[3])))?;
            records.push(BidRecord {
                subject_id: rec[0].to_string(),
                round: field(1, "round")?,
                treatment: rec[2].to_string(),
                format,
                value: field(4, "value")?,
                bid: field(5, "bid")?,
            });
            lines.push(line);
        }
        Ok(BidDataset { records, lines, source: source_name.into() })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        for r in &self.records {
            writeln!(out, "{},{},{},{},{},{}", r.subject_id, r.round, r.treatment, r.format, r.value, r.bid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "subject_id,round,treatment,format,value,bid\n\
        s1,1,T1,first_price,50,20\n\
        s1,2,T1,first_price,10,3\n\
        s2,1,T1,first_price,90,41\n";

    #[test]
    fn round_trip_and_groups() {
        let d = BidDataset::read_csv(SAMPLE.as_bytes(), "bids.csv").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.groups(Grouping::Subject), vec![vec![0, 1], vec![2]]);
        assert_eq!(d.groups(Grouping::SubjectRound).len(), 3);
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), SAMPLE);
    }

    #[test]
    fn off_grid_bid_names_its_line() {
        let d = BidDataset::read_csv(SAMPLE.as_bytes(), "bids.csv").unwrap();
        let spec = AuctionSpec::first_price(2, 100, crate::rational::ratio(1, 2))
            .unwrap()
            .with_bid_step(5)
            .unwrap();
        let err = d.validate(&spec).unwrap_err().to_string();
        assert!(err.starts_with("bids.csv:3:"), "{err}");
    }

    #[test]
    fn malformed_field_names_line_and_field() {
        let bad = "subject_id,round,treatment,format,value,bid\ns1,1,T1,first_price,5x,2\n";
        let err = BidDataset::read_csv(bad.as_bytes(), "b.csv").unwrap_err().to_string();
        assert!(err.contains("b.csv:2") && err.contains("value"), "{err}");
    }
}
