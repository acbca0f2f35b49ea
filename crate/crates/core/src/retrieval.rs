//! Hamming ranking and retrieval metrics (MAP, precision@K, PR by radius).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::{Matrix, PscaError, Result};

/// Sign codes packed into 64-bit words, bit `k` set iff entry `k` is `+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

impl PackedCodes {
    /// Packs an `r x n` matrix of signs (positive entries, including `+0`,
    /// count as `+1`).
    pub fn from_signs(signs: &Matrix) -> Self {
        let bits = signs.nrows();
        let words_per_code = bits.div_ceil(64).max(1);
        let mut words = vec![0u64; words_per_code * signs.ncols()];
        for (j, col) in signs.column_iter().enumerate() {
            for (k, &v) in col.iter().enumerate() {
                if v >= 0.0 {
                    words[j * words_per_code + k / 64] |= 1u64 << (k % 64);
                }
            }
        }
        PackedCodes {
            bits,
            words_per_code,
            words,
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.words_per_code
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn code(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    /// Unpacks back to a `+-1` matrix.
    pub fn to_signs(&self) -> Matrix {
        Matrix::from_fn(self.bits, self.len(), |k, j| {
            if self.code(j)[k / 64] >> (k % 64) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
    }
}

#[inline]
pub fn hamming_distance(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Database ordering for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub db_indices: Vec<usize>,
    pub distances: Vec<u32>,
}

/// Sorts the database by Hamming distance to `query`, ties by ascending
/// database index.
pub fn hamming_rank(query: &[u64], db: &PackedCodes) -> RankedList {
    let dist: Vec<u32> = (0..db.len()).map(|i| hamming_distance(query, db.code(i))).collect();
    // Counting sort keeps equal distances in index order.
    let mut buckets = vec![0usize; db.bits() + 2];
    for &d in &dist {
        buckets[d as usize + 1] += 1;
    }
    for k in 1..buckets.len() {
        buckets[k] += buckets[k - 1];
    }
    let mut db_indices = vec![0usize; dist.len()];
    for (i, &d) in dist.iter().enumerate() {
        db_indices[buckets[d as usize]] = i;
        buckets[d as usize] += 1;
    }
    let distances = db_indices.iter().map(|&i| dist[i]).collect();
    RankedList {
        db_indices,
        distances,
    }
}

/// Average precision over the full ranking; `relevant[i]` refers to database
/// index `i`.
pub fn average_precision(ranked: &RankedList, relevant: &[bool]) -> Result<f64> {
    let total = relevant.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(PscaError::UndefinedQuery);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &idx) in ranked.db_indices.iter().enumerate() {
        if relevant[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Target queries against the source database.
    CrossDomain,
    /// Target queries against the target training database.
    SingleDomain,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::CrossDomain => "cross-domain",
            Scenario::SingleDomain => "single-domain",
        })
    }
}

impl FromStr for Scenario {
    type Err = PscaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-domain" | "cross" => Ok(Scenario::CrossDomain),
            "single-domain" | "single" => Ok(Scenario::SingleDomain),
            other => Err(PscaError::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub radius: u32,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub precision_at_k: Vec<(usize, f64)>,
    /// One point per Hamming radius `0..=r`.
    pub pr_points: Vec<PrPoint>,
    /// Queries with at least one relevant database item.
    pub num_queries: usize,
    /// Queries excluded because nothing in the database is relevant.
    pub skipped_queries: usize,
    pub scenario: Scenario,
}

/// `{1, 5, 10, 50, 100} U {ceil(N/10) * i : i = 1..10}`, capped at `N`.
pub fn k_grid(n: usize) -> Vec<usize> {
    let step = n.div_ceil(10);
    let mut ks: Vec<usize> = [1, 5, 10, 50, 100]
        .into_iter()
        .chain((1..=10).map(|i| step * i))
        .filter(|&k| k >= 1 && k <= n)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

struct QueryStats {
    ap: f64,
    precision_at_k: Vec<f64>,
    /// `(relevant retrieved, retrieved)` within each radius.
    within_radius: Vec<(usize, usize)>,
    relevant: usize,
}

fn query_stats(query: &[u64], db: &PackedCodes, relevant: &[bool], ks: &[usize]) -> Option<QueryStats> {
    let ranked = hamming_rank(query, db);
    let ap = average_precision(&ranked, relevant).ok()?;
    let mut prefix = Vec::with_capacity(ranked.db_indices.len() + 1);
    prefix.push(0usize);
    for &i in &ranked.db_indices {
        prefix.push(prefix.last().unwrap() + relevant[i] as usize);
    }
    let precision_at_k = ks.iter().map(|&k| prefix[k] as f64 / k as f64).collect();

    let mut within_radius = vec![(0usize, 0usize); db.bits() + 1];
    for (&i, &d) in ranked.db_indices.iter().zip(&ranked.distances) {
        let slot = &mut within_radius[d as usize];
        slot.0 += relevant[i] as usize;
        slot.1 += 1;
    }
    for k in 1..within_radius.len() {
        within_radius[k].0 += within_radius[k - 1].0;
        within_radius[k].1 += within_radius[k - 1].1;
    }
    Some(QueryStats {
        ap,
        precision_at_k,
        within_radius,
        relevant: *prefix.last().unwrap(),
    })
}

/// Evaluates `queries` (`r x m` signs) against `db` (`r x N` signs) with
/// exact-label relevance.
///
/// PR points average recall and precision over valid queries at each Hamming
/// radius; precision at a radius only counts queries that retrieve something
/// there (and is 0 if none do).
pub fn map_score(
    queries: &Matrix,
    db: &Matrix,
    query_labels: &[usize],
    db_labels: &[usize],
    scenario: Scenario,
) -> Result<EvalReport> {
    if queries.nrows() != db.nrows() {
        return Err(PscaError::Shape(format!(
            "query codes have {} bits, database codes {}",
            queries.nrows(),
            db.nrows()
        )));
    }
    if query_labels.len() != queries.ncols() || db_labels.len() != db.ncols() {
        return Err(PscaError::Shape("label vectors do not match code matrices".into()));
    }
    if db.ncols() == 0 {
        return Err(PscaError::Data("empty retrieval database".into()));
    }
    let q = PackedCodes::from_signs(queries);
    let d = PackedCodes::from_signs(db);
    let ks = k_grid(d.len());

    let per_query: Vec<Option<QueryStats>> = (0..q.len())
        .into_par_iter()
        .map(|i| {
            let relevant: Vec<bool> = db_labels.iter().map(|&l| l == query_labels[i]).collect();
            query_stats(q.code(i), &d, &relevant, &ks)
        })
        .collect();

    let valid: Vec<&QueryStats> = per_query.iter().flatten().collect();
    let skipped = per_query.len() - valid.len();
    let m = valid.len();
    if m == 0 {
        return Err(PscaError::Data("no query has a relevant database item".into()));
    }
    let map = valid.iter().map(|s| s.ap).sum::<f64>() / m as f64;
    let precision_at_k = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| (k, valid.iter().map(|s| s.precision_at_k[j]).sum::<f64>() / m as f64))
        .collect();
    let pr_points = (0..=d.bits())
        .map(|radius| {
            let recall = valid
                .iter()
                .map(|s| s.within_radius[radius].0 as f64 / s.relevant as f64)
                .sum::<f64>()
                / m as f64;
            let (mut psum, mut pcount) = (0.0, 0usize);
            for s in &valid {
                let (hit, got) = s.within_radius[radius];
                if got > 0 {
                    psum += hit as f64 / got as f64;
                    pcount += 1;
                }
            }
            PrPoint {
                radius: radius as u32,
                recall,
                precision: if pcount > 0 { psum / pcount as f64 } else { 0.0 },
            }
        })
        .collect();
    Ok(EvalReport {
        map,
        precision_at_k,
        pr_points,
        num_queries: m,
        skipped_queries: skipped,
        scenario,
    })
}

impl EvalReport {
    pub fn write_map_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "scenario,num_queries,skipped_queries,map")?;
        writeln!(w, "{},{},{},{}", self.scenario, self.num_queries, self.skipped_queries, self.map)
    }

    pub fn write_topk_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "K,precision")?;
        for (k, p) in &self.precision_at_k {
            writeln!(w, "{k},{p}")?;
        }
        Ok(())
    }

    pub fn write_pr_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "radius,recall,precision")?;
        for p in &self.pr_points {
            writeln!(w, "{},{},{}", p.radius, p.recall, p.precision)?;
        }
        Ok(())
    }

    /// Writes `map.csv`, `topk.csv` and `pr.csv` into `dir`.
    /// Writes `map.csv`, `topk.csv` and `pr.csv` into `dir`, creating it.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| PscaError::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf).map_err(|e| PscaError::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| PscaError::io(&path, e))
        };
        write("map.csv", &|b| self.write_map_csv(b))?;
        write("topk.csv", &|b| self.write_topk_csv(b))?;
        write("pr.csv", &|b| self.write_pr_csv(b))
    }
}
