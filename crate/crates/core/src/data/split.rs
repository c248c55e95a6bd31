use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::manifest::Period;
use super::sample::Sample;
use crate::error::{Error, Result};

/// Inclusive range of season starting years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    fn contains(&self, y: i32) -> bool {
        (self.first..=self.last).contains(&y)
    }

    fn overlaps(&self, other: &YearRange) -> bool {
        self.first <= other.last && other.first <= self.last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitProtocol {
    /// Past seasons only, split 22/7/7 in chronological order.
    PastOnly,
    /// Past seasons split 30/6 into train/val; every future season is test.
    FuturePeriod,
    /// Every season is test; nothing to train on.
    AllYear,
    /// Explicit year ranges.
    Ranges {
        train: YearRange,
        val: YearRange,
        test: YearRange,
    },
}

impl std::str::FromStr for SplitProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "past_only" => Ok(SplitProtocol::PastOnly),
            "future_period" => Ok(SplitProtocol::FuturePeriod),
            "all_year" => Ok(SplitProtocol::AllYear),
            _ => Err(Error::InvalidProtocol(format!("unknown split protocol {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSplit {
    pub train: Vec<i32>,
    pub val: Vec<i32>,
    pub test: Vec<i32>,
}

fn proportional(n: usize, num: usize, den: usize) -> usize {
    ((n * num) as f64 / den as f64).round() as usize
}

/// Assigns season years to train/val/test.
pub fn split_years(seasons: &[(i32, Period)], protocol: &SplitProtocol) -> Result<YearSplit> {
    let mut past: Vec<i32> = seasons.iter().filter(|s| s.1 == Period::Past).map(|s| s.0).collect();
    let mut future: Vec<i32> = seasons.iter().filter(|s| s.1 == Period::Future).map(|s| s.0).collect();
    past.sort_unstable();
    future.sort_unstable();
    let split = match protocol {
        SplitProtocol::PastOnly => {
            let n = past.len();
            let n_train = proportional(n, 22, 36).min(n);
            let n_val = proportional(n, 7, 36).min(n - n_train);
            YearSplit {
                train: past[..n_train].to_vec(),
                val: past[n_train..n_train + n_val].to_vec(),
                test: past[n_train + n_val..].to_vec(),
            }
        }
        SplitProtocol::FuturePeriod => {
            if future.is_empty() {
                return Err(Error::InvalidProtocol("future_period needs future seasons in the dataset".into()));
            }
            let n_train = proportional(past.len(), 30, 36).min(past.len());
            YearSplit {
                train: past[..n_train].to_vec(),
                val: past[n_train..].to_vec(),
                test: future,
            }
        }
        SplitProtocol::AllYear => {
            let mut all: Vec<i32> = seasons.iter().map(|s| s.0).collect();
            all.sort_unstable();
            YearSplit {
                test: all,
                ..YearSplit::default()
            }
        }
        SplitProtocol::Ranges { train, val, test } => {
            for (a, b) in [(train, val), (train, test), (val, test)] {
                if a.overlaps(b) {
                    return Err(Error::InvalidProtocol(format!(
                        "year ranges {}..={} and {}..={} overlap",
                        a.first, a.last, b.first, b.last
                    )));
                }
            }
            let mut all: Vec<i32> = seasons.iter().map(|s| s.0).collect();
            all.sort_unstable();
            let pick = |r: &YearRange| all.iter().copied().filter(|&y| r.contains(y)).collect::<Vec<_>>();
            YearSplit {
                train: pick(train),
                val: pick(val),
                test: pick(test),
            }
        }
    };
    if split.test.is_empty() {
        return Err(Error::InvalidProtocol("protocol leaves the test split empty".into()));
    }
    Ok(split)
}

#[derive(Debug, Clone, Default)]
pub struct SampleSplits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Distributes samples by season year; samples of unassigned years are dropped.
pub fn split_samples(samples: Vec<Sample>, years: &YearSplit) -> SampleSplits {
    let train: BTreeSet<i32> = years.train.iter().copied().collect();
    let val: BTreeSet<i32> = years.val.iter().copied().collect();
    let test: BTreeSet<i32> = years.test.iter().copied().collect();
    let mut out = SampleSplits::default();
    for s in samples {
        if train.contains(&s.season) {
            out.train.push(s);
        } else if val.contains(&s.season) {
            out.val.push(s);
        } else if test.contains(&s.season) {
            out.test.push(s);
        }
    }
    out
}
