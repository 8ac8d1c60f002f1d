//! Reporting helpers: a simple service-time model for comparing device
//! configurations, and CSV emission for measured numbers. Deterministic
//! results (counts, verdicts) belong in the JSON report; wall-clock numbers
//! go to CSV so reruns diff cleanly.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::path::Path;

/// Nominal NAND operation latencies. The simulator executes instantly, so
/// comparisons between configurations are made on modeled device service
/// time: flash time from the op counts each run actually performed, plus
/// the measured host-path compute time (mapping, hashing, logging).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ServiceModel {
    pub read_ns: u64,
    pub program_ns: u64,
    pub erase_ns: u64,
}

impl Default for ServiceModel {
    fn default() -> Self {
        // Typical datasheet-order latencies for NAND flash.
        ServiceModel {
            read_ns: 50_000,
            program_ns: 200_000,
            erase_ns: 2_000_000,
        }
    }
}

/// Flash operations performed during a run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct OpCounts {
    pub reads: u64,
    pub programs: u64,
    pub erases: u64,
}

impl ServiceModel {
    pub fn flash_ns(&self, ops: &OpCounts) -> u64 {
        ops.reads * self.read_ns + ops.programs * self.program_ns + ops.erases * self.erase_ns
    }
}

/// Modeled service time of one run: flash time plus measured host compute.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ServiceTime {
    pub flash_ns: u64,
    pub host_compute_ns: u64,
}

impl ServiceTime {
    pub fn total_ns(&self) -> u64 {
        self.flash_ns + self.host_compute_ns
    }
}

/// Relative overhead of `instrumented` over `baseline` on modeled service
/// time, e.g. 0.04 for 4% slower.
pub fn overhead(baseline: &ServiceTime, instrumented: &ServiceTime) -> f64 {
    let b = baseline.total_ns() as f64;
    let i = instrumented.total_ns() as f64;
    if b == 0.0 {
        return 0.0;
    }
    (i - b) / b
}

/// Writes a CSV file; all cells are written verbatim (callers quote if
/// needed — the values here are numbers and plain identifiers).
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_math() {
        let b = ServiceTime {
            flash_ns: 1_000_000,
            host_compute_ns: 0,
        };
        let i = ServiceTime {
            flash_ns: 1_000_000,
            host_compute_ns: 50_000,
        };
        assert!((overhead(&b, &i) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn flash_time_counts() {
        let m = ServiceModel::default();
        let t = m.flash_ns(&OpCounts {
            reads: 2,
            programs: 1,
            erases: 1,
        });
        assert_eq!(t, 2 * 50_000 + 200_000 + 2_000_000);
    }
}
