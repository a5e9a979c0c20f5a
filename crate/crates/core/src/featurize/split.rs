use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Partition::Train),
            "val" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            _ => Err(format!("unknown partition `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub tags: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn get(&self, patient_id: &str) -> Option<Partition> {
        self.tags.get(patient_id).copied()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.tags.values().filter(|p| **p == part).count()
    }

    pub fn ids(&self, part: Partition) -> impl Iterator<Item = &str> {
        self.tags
            .iter()
            .filter(move |(_, p)| **p == part)
            .map(|(id, _)| id.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# seed = {}\npatient_id,partition\n", self.seed);
        for (id, p) in &self.tags {
            s.push_str(&format!("{id},{p}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file = "split";
        let mut seed = None;
        let mut tags = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    if k.trim() == "seed" {
                        seed = Some(v.trim().parse().map_err(|_| Error::parse(file, line_no, "bad seed"))?);
                    }
                }
                continue;
            }
            if line.is_empty() || line == "patient_id,partition" {
                continue;
            }
            let (id, part) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(file, line_no, "expected `patient_id,partition`"))?;
            let part = part.parse().map_err(|e: String| Error::parse(file, line_no, e))?;
            tags.insert(id.to_string(), part);
        }
        Ok(SplitAssignment {
            seed: seed.ok_or_else(|| Error::parse(file, 0, "missing `# seed = ` line"))?,
            tags,
        })
    }
}

/// Largest-remainder allocation of `total` across the class sizes.
fn allocate(sizes: [usize; 2], total: usize) -> [usize; 2] {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return [0, 0];
    }
    let mut out = [0usize; 2];
    let mut rema = [0f64; 2];
    for c in 0..2 {
        let q = sizes[c] as f64 * total as f64 / n as f64;
        out[c] = q.floor() as usize;
        rema[c] = q - q.floor();
    }
    let mut left = total - out.iter().sum::<usize>();
    let order = if rema[1] > rema[0] { [1, 0] } else { [0, 1] };
    for c in order {
        if left > 0 && out[c] < sizes[c] {
            out[c] += 1;
            left -= 1;
        }
    }
    out
}

/// Seeded, label-stratified 75/25 train/test split, then 75/25 of train
/// into train/val. Input order does not matter.
pub fn split(episodes: &[(String, bool)], seed: u64) -> Result<SplitAssignment> {
    if episodes.len() < 4 {
        return Err(Error::Invalid(format!(
            "need at least 4 episodes to split, got {}",
            episodes.len()
        )));
    }
    let mut sorted: Vec<&(String, bool)> = episodes.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut classes: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for (id, positive) in sorted {
        classes[usize::from(*positive)].push(id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in classes.iter_mut() {
        c.shuffle(&mut rng);
    }
    let n = episodes.len();
    let n_test = (n as f64 * 0.25).round() as usize;
    let n_val = ((n - n_test) as f64 * 0.25).round() as usize;
    let test = allocate([classes[0].len(), classes[1].len()], n_test);
    let pool = [classes[0].len() - test[0], classes[1].len() - test[1]];
    let val = allocate(pool, n_val);
    let mut tags = BTreeMap::new();
    for c in 0..2 {
        for (i, id) in classes[c].iter().enumerate() {
            let part = if i < test[c] {
                Partition::Test
            } else if i < test[c] + val[c] {
                Partition::Val
            } else {
                Partition::Train
            };
            if tags.insert(id.to_string(), part).is_some() {
                return Err(Error::DuplicatePatient(id.to_string()));
            }
        }
    }
    Ok(SplitAssignment { seed, tags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episodes(n: usize, prevalence: f64) -> Vec<(String, bool)> {
        let pos = (n as f64 * prevalence).round() as usize;
        (0..n).map(|i| (format!("P{i:05}"), i < pos)).collect()
    }

    #[test]
    fn proportions_1600() {
        let s = split(&episodes(1600, 0.37), 3).unwrap();
        assert_eq!(s.count(Partition::Train), 900);
        assert_eq!(s.count(Partition::Val), 300);
        assert_eq!(s.count(Partition::Test), 400);
    }

    #[test]
    fn same_seed_same_assignment() {
        let e = episodes(123, 0.5);
        assert_eq!(split(&e, 9).unwrap(), split(&e, 9).unwrap());
        assert_ne!(split(&e, 9).unwrap(), split(&e, 10).unwrap());
    }

    #[test]
    fn order_independent() {
        let e = episodes(101, 0.3);
        let mut rev = e.clone();
        rev.reverse();
        assert_eq!(split(&e, 1).unwrap(), split(&rev, 1).unwrap());
    }

    #[test]
    fn too_few_episodes() {
        assert!(split(&episodes(3, 0.5), 1).is_err());
    }

    #[test]
    fn stratified_prevalence() {
        for (n, prev) in [(1000usize, 0.6), (2000, 0.5), (357, 0.23)] {
            let e = episodes(n, prev);
            let s = split(&e, 42).unwrap();
            let label: BTreeMap<&str, bool> = e.iter().map(|(i, l)| (i.as_str(), *l)).collect();
            let global = e.iter().filter(|(_, l)| *l).count() as f64 / n as f64;
            for part in [Partition::Train, Partition::Val, Partition::Test] {
                let ids: Vec<&str> = s.ids(part).collect();
                let p = ids.iter().filter(|i| label[**i]).count() as f64 / ids.len() as f64;
                assert!((p - global).abs() < 0.02, "{part}: {p} vs {global}");
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let s = split(&episodes(20, 0.5), 5).unwrap();
        assert_eq!(SplitAssignment::from_text(&s.to_text()).unwrap(), s);
    }
}
