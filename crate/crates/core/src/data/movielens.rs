use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::objectives::{Rating, RatingSet};

/// Line layout of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingsFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (100K).
    Tab,
    /// `user::item::rating::timestamp` (1M, 10M).
    DoubleColon,
}

impl RatingsFormat {
    /// Guesses the format from the first non-empty line.
    pub fn detect(first_line: &str) -> RatingsFormat {
        if first_line.contains("::") {
            RatingsFormat::DoubleColon
        } else {
            RatingsFormat::Tab
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            RatingsFormat::Tab => line.split_whitespace().collect(),
            RatingsFormat::DoubleColon => line.split("::").map(str::trim).collect(),
        }
    }
}

/// Ratings with dense indices and the original IDs they came from.
#[derive(Debug, Clone)]
pub struct ParsedRatings {
    pub ratings: RatingSet,
    /// `user_ids[u]` is the file ID of dense user `u`.
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
    /// Repeated `(user, item)` lines; the last one wins.
    pub duplicates: usize,
}

/// Parses a MovieLens ratings file. IDs are remapped to dense 0-based indices
/// in increasing ID order. Ratings are not normalized.
pub fn parse_movielens(reader: impl BufRead, format: Option<RatingsFormat>) -> Result<ParsedRatings> {
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut duplicates = 0;
    let mut format = format;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = *format.get_or_insert_with(|| RatingsFormat::detect(&line));
        let fields = fmt.split(&line);
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let parse_id = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {what} id {s:?}"),
            })
        };
        let user = parse_id(fields[0], "user")?;
        let item = parse_id(fields[1], "item")?;
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad rating {:?}", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite rating".into(),
            });
        }
        match index.get(&(user, item)) {
            Some(&k) => {
                raw[k].2 = value;
                duplicates += 1;
            }
            None => {
                index.insert((user, item), raw.len());
                raw.push((user, item, value));
            }
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate ratings; kept the last occurrence of each");
    }

    let user_ids: Vec<u64> = raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let item_ids: Vec<u64> = raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let user_of: BTreeMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let item_of: BTreeMap<u64, usize> = item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let entries = raw
        .into_iter()
        .map(|(u, i, value)| Rating {
            user: user_of[&u],
            item: item_of[&i],
            value,
        })
        .collect();
    let ratings = RatingSet::new(user_ids.len(), item_ids.len(), entries)?;
    Ok(ParsedRatings {
        ratings,
        user_ids,
        item_ids,
        duplicates,
    })
}

/// Writes ratings with 1-based IDs (`index + 1`) and a zero timestamp.
pub fn write_movielens(ratings: &RatingSet, format: RatingsFormat, mut out: impl Write) -> Result<()> {
    for r in ratings.entries() {
        let (u, i) = (r.user + 1, r.item + 1);
        match format {
            RatingsFormat::Tab => writeln!(out, "{u}\t{i}\t{}\t0", r.value)?,
            RatingsFormat::DoubleColon => writeln!(out, "{u}::{i}::{}::0", r.value)?,
        }
    }
    Ok(())
}

/// A train / test partition of a rating set.
#[derive(Debug, Clone)]
pub struct SplitRatings {
    pub train: RatingSet,
    pub test: RatingSet,
    pub seed: u64,
    /// Users with a single rating, all of which went to train.
    pub single_rating_users: usize,
}

/// Per-user split: each user's ratings are shuffled and the first
/// `floor(count · train_frac)` (at least 1 when `count ≥ 2`) go to train.
pub fn split_per_user(ratings: &RatingSet, train_frac: f64, seed: u64) -> Result<SplitRatings> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0, 1), got {train_frac}"
        )));
    }
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); ratings.users()];
    for (k, r) in ratings.entries().iter().enumerate() {
        by_user[r.user].push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ratings.len()];
    let mut single = 0;
    for idx in &mut by_user {
        let count = idx.len();
        if count == 0 {
            continue;
        }
        idx.shuffle(&mut rng);
        let take = if count == 1 {
            single += 1;
            1
        } else {
            ((count as f64 * train_frac).floor() as usize).max(1)
        };
        for &k in &idx[..take] {
            in_train[k] = true;
        }
    }
    if single > 0 {
        log::warn!("{single} users have a single rating; placed in train");
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, r) in ratings.entries().iter().enumerate() {
        if in_train[k] {
            train.push(*r);
        } else {
            test.push(*r);
        }
    }
    Ok(SplitRatings {
        train: RatingSet::new(ratings.users(), ratings.items(), train)?,
        test: RatingSet::new(ratings.users(), ratings.items(), test)?,
        seed,
        single_rating_users: single,
    })
}

/// Prediction range used when scoring.
pub const RATING_RANGE: (f64, f64) = (1.0, 5.0);

/// Test RMSE of the predictions `⟨V_u, V_{m+i}⟩`, clipped to [`RATING_RANGE`].
pub fn rmse(test: &RatingSet, v: &Factor) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if v.rows() != test.embedded_dim() {
        return Err(Error::invalid(format!(
            "factor has {} rows, expected {}",
            v.rows(),
            test.embedded_dim()
        )));
    }
    let (lo, hi) = RATING_RANGE;
    let sse: f64 = test
        .entries()
        .iter()
        .map(|r| {
            let p = test.predict(v, r.user, r.item).clamp(lo, hi);
            (p - r.value).powi(2)
        })
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn tab_line() {
        let p = parse_movielens("196\t242\t3\t881250949\n".as_bytes(), None).unwrap();
        assert_eq!(p.user_ids, vec![196]);
        assert_eq!(p.item_ids, vec![242]);
        assert_eq!(
            p.ratings.entries()[0],
            Rating {
                user: 0,
                item: 0,
                value: 3.0
            }
        );
    }

    #[test]
    fn double_colon_line() {
        let p = parse_movielens("1::1193::5::978300760\n".as_bytes(), None).unwrap();
        assert_eq!((p.user_ids[0], p.item_ids[0]), (1, 1193));
        assert_eq!(p.ratings.entries()[0].value, 5.0);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_movielens("1\t2\t3\t0\n1\tx\t3\t0\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_movielens("1\t2\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicates_last_wins() {
        let p = parse_movielens("1\t2\t3\t0\n1\t2\t4\t0\n".as_bytes(), None).unwrap();
        assert_eq!(p.duplicates, 1);
        assert_eq!(p.ratings.len(), 1);
        assert_eq!(p.ratings.entries()[0].value, 4.0);
    }

    #[test]
    fn ids_sorted() {
        let p = parse_movielens("9\t5\t1\t0\n3\t7\t2\t0\n".as_bytes(), None).unwrap();
        assert_eq!(p.user_ids, vec![3, 9]);
        assert_eq!(p.ratings.entries()[0].user, 1);
        assert_eq!(p.ratings.entries()[1].item, 1);
    }

    fn user_ratings(counts: &[usize]) -> RatingSet {
        let items = *counts.iter().max().unwrap();
        let mut e = Vec::new();
        for (u, &c) in counts.iter().enumerate() {
            for i in 0..c {
                e.push(Rating {
                    user: u,
                    item: i,
                    value: 3.0,
                });
            }
        }
        RatingSet::new(counts.len(), items, e).unwrap()
    }

    #[test]
    fn split_counts() {
        let r = user_ratings(&[10, 1]);
        let s = split_per_user(&r, 0.8, 1).unwrap();
        let tr = s.train.entries().iter().filter(|x| x.user == 0).count();
        assert_eq!(tr, 8);
        assert_eq!(s.test.len(), 2);
        assert_eq!(s.single_rating_users, 1);
        assert!(s.train.entries().iter().any(|x| x.user == 1));
    }

    #[test]
    fn split_deterministic() {
        let r = user_ratings(&[7, 5, 9]);
        let a = split_per_user(&r, 0.8, 42).unwrap();
        let b = split_per_user(&r, 0.8, 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert!(split_per_user(&r, 1.0, 0).is_err());
    }

    #[test]
    fn rmse_arithmetic() {
        // One user, four items; V = [1; 1; 3; 3; 3] predicts 1, 3, 3, 3.
        let e: Vec<Rating> = [2.0, 3.0, 3.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &value)| Rating {
                user: 0,
                item: i,
                value,
            })
            .collect();
        let test = RatingSet::new(1, 4, e).unwrap();
        let mut v = DMatrix::from_element(5, 1, 3.0);
        v[(0, 0)] = 1.0;
        v[(1, 0)] = 1.0 / 3.0;
        let got = rmse(&test, &Factor::new(v)).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmse_clips() {
        let test = RatingSet::new(
            1,
            1,
            vec![Rating {
                user: 0,
                item: 0,
                value: 5.0,
            }],
        )
        .unwrap();
        let v = Factor::new(DMatrix::from_element(2, 1, 10.0));
        assert_eq!(rmse(&test, &v).unwrap(), 0.0);
        let empty = RatingSet::new(1, 1, vec![]).unwrap();
        assert!(rmse(&empty, &v).is_err());
    }
}
