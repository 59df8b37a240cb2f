//! MovieLens-1M conversion into the canonical CSV layout.
//!
//! Scenarios come from the user's age bucket; tasks are click
//! (`rating >= 4`) and like (`rating >= 5`).

use std::collections::HashMap;
use std::path::Path;

use super::{RawTable, Rejection, LABEL_PREFIX, SCENARIO_COLUMN};
use crate::error::{Error, Result};

pub const CLICK_THRESHOLD: u8 = 4;
pub const LIKE_THRESHOLD: u8 = 5;

/// `(click, like)` for a 1..=5 star rating.
pub fn derive_labels(rating: u8) -> Result<(u8, u8)> {
    if !(1..=5).contains(&rating) {
        return Err(Error::Input(format!("rating {rating} outside 1..=5")));
    }
    Ok((
        u8::from(rating >= CLICK_THRESHOLD),
        u8::from(rating >= LIKE_THRESHOLD),
    ))
}

/// Maps MovieLens age codes onto scenario ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBuckets {
    buckets: Vec<Vec<u32>>,
}

impl Default for AgeBuckets {
    /// `{1, 18}`, `{25}`, `{35, 45, 50, 56}`: roughly 21% / 40% / 39% of ratings.
    fn default() -> Self {
        AgeBuckets {
            buckets: vec![vec![1, 18], vec![25], vec![35, 45, 50, 56]],
        }
    }
}

impl AgeBuckets {
    pub fn new(buckets: Vec<Vec<u32>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for age in buckets.iter().flatten() {
            if !seen.insert(*age) {
                return Err(Error::Config(format!("age {age} appears in two buckets")));
            }
        }
        if buckets.is_empty() || buckets.iter().any(Vec::is_empty) {
            return Err(Error::Config("age buckets must be non-empty".into()));
        }
        Ok(AgeBuckets { buckets })
    }

    /// Parses `"1,18;25;35,45,50,56"`.
    pub fn parse(text: &str) -> Result<Self> {
        let buckets = text
            .split(';')
            .map(|b| {
                b.split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<u32>()
                            .map_err(|_| Error::Config(format!("bad age `{a}` in `{text}`")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(buckets)
    }

    pub fn scenario(&self, age: u32) -> Option<usize> {
        self.buckets.iter().position(|b| b.contains(&age))
    }

    pub fn num_scenarios(&self) -> usize {
        self.buckets.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingRow {
    pub line: u64,
    pub user_id: String,
    pub movie_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRow {
    pub gender: String,
    pub age: u32,
    pub occupation: String,
    pub zip: String,
}

/// Joins ratings with user (and optional movie genre) attributes and emits the
/// canonical table `scenario,label_0,label_1,user_id,movie_id,gender,age,occupation,zip,genres`.
pub fn derive_movielens(
    ratings: &[RatingRow],
    users: &HashMap<String, UserRow>,
    genres: &HashMap<String, String>,
    buckets: &AgeBuckets,
) -> (RawTable, Vec<Rejection>) {
    let header = [
        SCENARIO_COLUMN.to_string(),
        format!("{LABEL_PREFIX}0"),
        format!("{LABEL_PREFIX}1"),
    ]
    .into_iter()
    .chain(
        ["user_id", "movie_id", "gender", "age", "occupation", "zip", "genres"]
            .iter()
            .map(|s| s.to_string()),
    )
    .collect();
    let mut table = RawTable::new(header);
    let mut rejections = Vec::new();
    for r in ratings {
        let reject = |reason: String| Rejection {
            line: r.line,
            reason,
        };
        let (click, like) = match derive_labels(r.rating) {
            Ok(l) => l,
            Err(e) => {
                rejections.push(reject(e.to_string()));
                continue;
            }
        };
        let Some(user) = users.get(&r.user_id) else {
            rejections.push(reject(format!("unknown user {}", r.user_id)));
            continue;
        };
        let Some(scenario) = buckets.scenario(user.age) else {
            rejections.push(reject(format!("age {} not in any bucket", user.age)));
            continue;
        };
        let genre = genres.get(&r.movie_id).cloned().unwrap_or_default();
        table.push(vec![
            scenario.to_string(),
            click.to_string(),
            like.to_string(),
            r.user_id.clone(),
            r.movie_id.clone(),
            user.gender.clone(),
            user.age.to_string(),
            user.occupation.clone(),
            user.zip.clone(),
            genre.replace(',', " "),
        ]);
    }
    (table, rejections)
}

fn read_dat(path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    // movies.dat is latin-1; lossy conversion keeps ids intact
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i as u64 + 1, l.split("::").map(str::to_string).collect()))
        .collect())
}

/// Reads `ratings.dat`, `users.dat` and (optionally) `movies.dat` from an
/// extracted `ml-1m` directory.
pub fn load_movielens_dir(dir: &Path, buckets: &AgeBuckets) -> Result<(RawTable, Vec<Rejection>)> {
    let mut users = HashMap::new();
    for (line, parts) in read_dat(&dir.join("users.dat"))? {
        if parts.len() < 5 {
            return Err(Error::Row {
                line,
                reason: "users.dat rows need 5 fields".into(),
            });
        }
        let age = parts[2].parse().map_err(|_| Error::Row {
            line,
            reason: format!("bad age `{}`", parts[2]),
        })?;
        users.insert(
            parts[0].clone(),
            UserRow {
                gender: parts[1].clone(),
                age,
                occupation: parts[3].clone(),
                zip: parts[4].clone(),
            },
        );
    }
    let mut genres = HashMap::new();
    let movies = dir.join("movies.dat");
    if movies.exists() {
        for (_, parts) in read_dat(&movies)? {
            if parts.len() >= 3 {
                genres.insert(parts[0].clone(), parts[2].clone());
            }
        }
    }
    let mut ratings = Vec::new();
    let mut rejections = Vec::new();
    for (line, parts) in read_dat(&dir.join("ratings.dat"))? {
        let rating = parts.get(2).and_then(|r| r.trim().parse::<u8>().ok());
        match (parts.len() >= 3, rating) {
            (true, Some(rating)) => ratings.push(RatingRow {
                line,
                user_id: parts[0].clone(),
                movie_id: parts[1].clone(),
                rating,
            }),
            _ => rejections.push(Rejection {
                line,
                reason: "unparseable rating row".into(),
            }),
        }
    }
    let (table, mut more) = derive_movielens(&ratings, &users, &genres, buckets);
    rejections.append(&mut more);
    Ok((table, rejections))
}
