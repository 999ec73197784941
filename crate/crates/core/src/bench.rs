//! Benchmark grid over sort algorithm, market size and bid width.
//!
//! Every cell runs full sessions over loopback TCP with seeded random bids
//! and `M = N = n`, and reports the mean over its repetitions.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::auction::{PlainBid, SessionConfig};
use crate::error::{Error, Result};
use crate::net::run_loopback_session;
use crate::sorting::SortAlgorithm;

pub const CSV_HEADER: &str = "algorithm,n,bitlen,key_bits,wall_time_ms,and_gates,rounds,bytes_transferred";

#[derive(Clone, Debug)]
pub struct BenchmarkGrid {
    pub algorithms: Vec<SortAlgorithm>,
    pub sizes: Vec<usize>,
    pub bitlens: Vec<usize>,
    pub id_bits: usize,
    pub key_bits: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchmarkGrid {
    fn default() -> Self {
        Self {
            algorithms: SortAlgorithm::ALL.to_vec(),
            sizes: vec![8, 16, 32],
            bitlens: vec![8],
            id_bits: 16,
            key_bits: 64,
            reps: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchmarkRow {
    pub algorithm: SortAlgorithm,
    pub n: usize,
    pub bitlen: usize,
    pub key_bits: usize,
    /// Mean wall time of the sort, comparison and release steps.
    pub wall_time_ms: u64,
    /// AND gates of one side's private sort.
    pub and_gates: u64,
    pub rounds: u64,
    pub bytes_transferred: u64,
}

/// `n` bids with values below `2^bitlen` and IDs `1..=n`.
pub fn random_bids<R: Rng + ?Sized>(n: usize, bitlen: usize, rng: &mut R) -> Vec<PlainBid> {
    (1..=n as u64).map(|id| PlainBid::new(rng.gen_range(0..1u64 << bitlen), id)).collect()
}

pub fn run_cell(grid: &BenchmarkGrid, alg: SortAlgorithm, n: usize, bitlen: usize) -> Result<BenchmarkRow> {
    if grid.reps == 0 {
        return Err(Error::Precondition("at least one repetition is needed".into()));
    }
    let mut wall = 0u128;
    let (mut gates, mut rounds, mut bytes) = (0u64, 0u64, 0u64);
    for rep in 0..grid.reps {
        let cfg = SessionConfig {
            bid_bits: bitlen,
            id_bits: grid.id_bits,
            key_bits: grid.key_bits,
            sort: alg,
            seed: grid.seed ^ ((n as u64) << 32) ^ ((bitlen as u64) << 24) ^ rep as u64,
        };
        let mut rng = cfg.rng(0);
        let sellers = random_bids(n, bitlen, &mut rng);
        let buyers = random_bids(n, bitlen, &mut rng);
        let report = run_loopback_session(&cfg, &sellers, &buyers)?;
        wall += report.elapsed.as_micros();
        gates += report.seller_sort_and_gates;
        rounds += report.rounds;
        bytes += report.bytes_transferred;
    }
    let reps = grid.reps as u64;
    Ok(BenchmarkRow {
        algorithm: alg,
        n,
        bitlen,
        key_bits: grid.key_bits,
        wall_time_ms: (wall / (grid.reps as u128 * 1000)) as u64,
        and_gates: gates / reps,
        rounds: rounds / reps,
        bytes_transferred: bytes / reps,
    })
}

/// Runs the cells in order (algorithm, then bit width, then size), one at a
/// time, calling `on_row` after each.
pub fn run_benchmark(grid: &BenchmarkGrid, mut on_row: impl FnMut(&BenchmarkRow)) -> Result<Vec<BenchmarkRow>> {
    // one untimed session so the first cell does not pay for warm-up
    if let (Some(&alg), Some(&n), Some(&bitlen)) = (grid.algorithms.first(), grid.sizes.first(), grid.bitlens.first()) {
        run_cell(&BenchmarkGrid { reps: 1, ..grid.clone() }, alg, n, bitlen)?;
    }
    let mut rows = Vec::new();
    for &alg in &grid.algorithms {
        for &bitlen in &grid.bitlens {
            for &n in &grid.sizes {
                let row = run_cell(grid, alg, n, bitlen)?;
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(',')).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sorting::comparator_count;

    #[test]
    fn csv_header_and_rows() {
        let row = BenchmarkRow {
            algorithm: SortAlgorithm::SeSort,
            n: 8,
            bitlen: 8,
            key_bits: 64,
            wall_time_ms: 12,
            and_gates: 896,
            rounds: 40,
            bytes_transferred: 1000,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\nsesort,8,8,64,12,896,40,1000\n"));
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn measured_gates_follow_the_count_law() {
        let grid = BenchmarkGrid { reps: 1, ..Default::default() };
        for alg in SortAlgorithm::ALL {
            let row = run_cell(&grid, alg, 8, 8).unwrap();
            assert_eq!(row.and_gates, comparator_count(alg, 8).unwrap() * (2 * 8 + 16), "{alg}");
        }
    }
}
