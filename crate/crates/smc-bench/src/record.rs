//! Benchmark observations, their CSV form, and the median/speed-up summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// One benchmark observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub algo: String,
    pub n: u64,
    pub m: u64,
    pub p: u64,
    pub t: u64,
    pub d: u64,
    pub seed: u64,
    pub rep: u64,
    pub wall_time_s: f64,
    pub resamples: u64,
    /// Final estimate, one entry per state dimension; empty when the
    /// experiment produces none.
    pub estimate: Vec<f64>,
    /// Per-run error against the known truth; NaN when no truth exists.
    pub rmse: f64,
    /// Wall time of the importance-sampling section (not serialised).
    pub is_seconds: f64,
    /// Wall time of the resampling section (not serialised).
    pub resample_seconds: f64,
}

impl RunRecord {
    pub fn new(experiment: &str, algo: &str) -> Self {
        RunRecord {
            experiment: experiment.to_string(),
            algo: algo.to_string(),
            n: 0,
            m: 0,
            p: 0,
            t: 0,
            d: 0,
            seed: 0,
            rep: 0,
            wall_time_s: 0.0,
            resamples: 0,
            estimate: Vec::new(),
            rmse: f64::NAN,
            is_seconds: 0.0,
            resample_seconds: 0.0,
        }
    }
}

/// Exact column order of the emitted CSV.
pub const CSV_HEADER: &str =
    "experiment,algo,N,M,P,T,D,seed,rep,wall_time_s,resamples,estimate,rmse";

fn format_estimate(estimate: &[f64]) -> String {
    estimate
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Serialises records in a bit-stable column order.
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let rmse = if r.rmse.is_nan() {
            String::new()
        } else {
            r.rmse.to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.algo,
            r.n,
            r.m,
            r.p,
            r.t,
            r.d,
            r.seed,
            r.rep,
            r.wall_time_s,
            r.resamples,
            format_estimate(&r.estimate),
            rmse
        );
    }
    out
}

/// Writes the records CSV to `path`.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> io::Result<()> {
    std::fs::write(path, records_to_csv(records))
}

/// Parses a records CSV produced by [`emit_csv`].
pub fn parse_csv(content: &str) -> io::Result<Vec<RunRecord>> {
    let mut lines = content.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unexpected header: {other:?}"),
            ))
        }
    }
    let bad =
        |field: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad field {field}"));
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 13 {
            return Err(bad(line));
        }
        let estimate = if cols[11].is_empty() {
            Vec::new()
        } else {
            cols[11]
                .split(';')
                .map(|v| v.parse::<f64>().map_err(|_| bad(v)))
                .collect::<io::Result<Vec<f64>>>()?
        };
        records.push(RunRecord {
            experiment: cols[0].to_string(),
            algo: cols[1].to_string(),
            n: cols[2].parse().map_err(|_| bad(cols[2]))?,
            m: cols[3].parse().map_err(|_| bad(cols[3]))?,
            p: cols[4].parse().map_err(|_| bad(cols[4]))?,
            t: cols[5].parse().map_err(|_| bad(cols[5]))?,
            d: cols[6].parse().map_err(|_| bad(cols[6]))?,
            seed: cols[7].parse().map_err(|_| bad(cols[7]))?,
            rep: cols[8].parse().map_err(|_| bad(cols[8]))?,
            wall_time_s: cols[9].parse().map_err(|_| bad(cols[9]))?,
            resamples: cols[10].parse().map_err(|_| bad(cols[10]))?,
            estimate,
            rmse: if cols[12].is_empty() {
                f64::NAN
            } else {
                cols[12].parse().map_err(|_| bad(cols[12]))?
            },
            is_seconds: 0.0,
            resample_seconds: 0.0,
        });
    }
    Ok(records)
}

/// Median of a sample; the two middle values are averaged for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Medians of bootstrap resamples (drawn with replacement) of a sample.
pub fn bootstrap_medians(values: &[f64], draws: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let resample: Vec<f64> = (0..values.len())
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            median(&resample)
        })
        .collect()
}

/// One line of the summary: medians per experiment cell plus the derived
/// speed-up and section shares.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub algo: String,
    pub n: u64,
    pub m: u64,
    pub p: u64,
    pub t: u64,
    pub d: u64,
    pub runs: u64,
    pub median_wall_time_s: f64,
    /// time(P=1) / time(P) within the same cell; NaN without a baseline.
    pub speedup: f64,
    /// sqrt(mean of squared per-run errors); NaN when no truth exists.
    pub rmse: f64,
    /// Median share of wall time spent in importance sampling.
    pub is_share: f64,
}

/// Groups records by experiment cell and derives medians, speed-ups against
/// the P=1 baseline, aggregate RMSE and importance-sampling shares.
pub fn summarise(records: &[RunRecord]) -> Vec<SummaryRow> {
    type Key = (String, String, u64, u64, u64, u64, u64);
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.experiment.clone(),
                r.algo.clone(),
                r.n,
                r.m,
                r.p,
                r.t,
                r.d,
            ))
            .or_default()
            .push(r);
    }

    let median_of = |key: &Key| {
        groups
            .get(key)
            .map(|rs| median(&rs.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()))
    };

    let mut rows = Vec::new();
    for (key, rs) in &groups {
        let walls: Vec<f64> = rs.iter().map(|r| r.wall_time_s).collect();
        let med = median(&walls);
        let baseline_key = (
            key.0.clone(),
            key.1.clone(),
            key.2,
            key.3,
            1u64,
            key.5,
            key.6,
        );
        let speedup = match median_of(&baseline_key) {
            Some(base) if key.4 >= 1 => base / med,
            _ => f64::NAN,
        };
        let errors: Vec<f64> = rs
            .iter()
            .filter(|r| !r.rmse.is_nan())
            .map(|r| r.rmse)
            .collect();
        let rmse = if errors.is_empty() {
            f64::NAN
        } else {
            (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
        };
        let shares: Vec<f64> = rs
            .iter()
            .filter(|r| r.is_seconds > 0.0 && r.wall_time_s > 0.0)
            .map(|r| r.is_seconds / r.wall_time_s)
            .collect();
        let is_share = if shares.is_empty() {
            f64::NAN
        } else {
            median(&shares)
        };
        rows.push(SummaryRow {
            experiment: key.0.clone(),
            algo: key.1.clone(),
            n: key.2,
            m: key.3,
            p: key.4,
            t: key.5,
            d: key.6,
            runs: rs.len() as u64,
            median_wall_time_s: med,
            speedup,
            rmse,
            is_share,
        });
    }
    rows
}

/// Serialises the summary (plot-ready columns).
pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("experiment,algo,N,M,P,T,D,runs,median_wall_time_s,speedup,rmse,is_share\n");
    for r in rows {
        let fmt = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.algo,
            r.n,
            r.m,
            r.p,
            r.t,
            r.d,
            r.runs,
            r.median_wall_time_s,
            fmt(r.speedup),
            fmt(r.rmse),
            fmt(r.is_share)
        );
    }
    out
}
