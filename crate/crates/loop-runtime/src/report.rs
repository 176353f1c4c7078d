//! Output artifacts: the per-step trajectory log and the operation-timing
//! report, each with a frozen CSV schema.

use std::fmt::Write;
use std::path::Path;

pub const TRAJECTORY_CSV_HEADER: &str =
    "step,x1,x2,x3,x4,xhat1,xhat2,xhat3,xhat4,y1,y2,u1,u2,channel_status,latency_us";

pub const TIMING_CSV_HEADER: &str =
    "operation,n,batch,mean_us,min_us,max_us,stddev_us,corrected_mean_us,direct_mean_us";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub x: [f64; 4],
    pub x_hat: [f64; 4],
    pub y: [f64; 2],
    pub u: [f64; 2],
    pub channel_status: &'static str,
    pub latency_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn max_deviation_from(&self, x_eq: &[f64; 4]) -> f64 {
        self.records
            .iter()
            .flat_map(|r| (0..4).map(move |i| (r.x[i] - x_eq[i]).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV rendering. Every column except `latency_us` is a pure function of
    /// (config, seed); wall-clock time is isolated in that final column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1}\n",
                r.step,
                r.x[0], r.x[1], r.x[2], r.x[3],
                r.x_hat[0], r.x_hat[1], r.x_hat[2], r.x_hat[3],
                r.y[0], r.y[1],
                r.u[0], r.u[1],
                r.channel_status,
                r.latency_us,
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

#[derive(Debug, Clone)]
pub struct TimingRow {
    pub operation: &'static str,
    /// Number of samples behind the statistics.
    pub n: u32,
    /// In-enclave repetitions per stopwatch window (1 when not batched).
    pub batch: u32,
    pub mean_us: f64,
    pub min_us: f64,
    pub max_us: f64,
    pub stddev_us: f64,
    /// Mean with the boundary-crossing delta-t share removed.
    pub corrected_mean_us: Option<f64>,
    /// Same operation timed directly outside the boundary.
    pub direct_mean_us: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub delta_t_estimate_us: f64,
    pub ts_us: f64,
    /// Boundary crossings per secure loop step (one E-Call in, one out).
    pub crossings_per_loop: u32,
    pub batch: u32,
    pub windows: u32,
}

impl TimingReport {
    pub fn row(&self, operation: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.operation == operation)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TIMING_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3},{:.3},{:.3},{},{}\n",
                r.operation,
                r.n,
                r.batch,
                r.mean_us,
                r.min_us,
                r.max_us,
                r.stddev_us,
                opt(r.corrected_mean_us),
                opt(r.direct_mean_us),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Human-readable table in the shape of the published measurement table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "Operation", "mean (us)", "min (us)", "max (us)", "stddev (us)", "corrected"
        );
        let _ = writeln!(out, "{}", "-".repeat(90));
        for r in &self.rows {
            let corrected = r
                .corrected_mean_us
                .map_or(String::from("-"), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<24} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12}",
                r.operation, r.mean_us, r.min_us, r.max_us, r.stddev_us, corrected
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(90));
        let _ = writeln!(
            out,
            "delta-t estimate: {:.3} us; crossings per loop: {}; batch {}; windows {}; Ts {:.0} us",
            self.delta_t_estimate_us, self.crossings_per_loop, self.batch, self.windows, self.ts_us
        );
        out
    }
}

pub(crate) fn stats_us(samples: &[f64]) -> (f64, f64, f64, f64) {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, min, max, var.sqrt())
}
