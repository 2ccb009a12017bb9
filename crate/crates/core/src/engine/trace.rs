use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub v_out: f64,
    pub n_on: usize,
    pub i_load: f64,
    pub period_eff: f64,
}

/// Charge bookkeeping of one run, integrated in closed form alongside the
/// voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChargeLedger {
    pub q_supply: f64,
    pub q_load: f64,
    pub c_load: f64,
    pub v_start: f64,
    pub v_end: f64,
}

impl ChargeLedger {
    /// `|Q_supply - Q_load - C*dV|` relative to the largest charge involved.
    pub fn relative_error(&self) -> f64 {
        let stored = self.c_load * (self.v_end - self.v_start);
        let scale = stored.abs().max(self.q_supply.abs()).max(self.q_load.abs());
        if scale == 0.0 {
            return 0.0;
        }
        (self.q_supply - self.q_load - stored).abs() / scale
    }
}

/// Sampled output waveform of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub charge: ChargeLedger,
}

pub const CSV_HEADER: &str = "t,v_out,n_on,i_load,period_eff";

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn t_start(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    /// Samples with `t >= t0`, as a new trace. The charge ledger is dropped.
    pub fn since(&self, t0: f64) -> Trace {
        let i = self.samples.partition_point(|s| s.t < t0);
        Trace { samples: self.samples[i..].to_vec(), charge: ChargeLedger::default() }
    }

    /// Copy with times shifted so that `t0` becomes zero.
    pub fn rebased(&self, t0: f64) -> Trace {
        let samples = self.samples.iter().map(|s| Sample { t: s.t - t0, ..*s }).collect();
        Trace { samples, charge: self.charge }
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.v_out)
    }

    /// Peak-to-peak of `v_out` over samples with `t >= t0`.
    pub fn peak_to_peak_since(&self, t0: f64) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .filter(|s| s.t >= t0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.v_out), hi.max(s.v_out)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn max_period(&self) -> f64 {
        self.samples.iter().map(|s| s.period_eff).fold(0.0, f64::max)
    }

    /// CSV with header `t,v_out,n_on,i_load,period_eff`; floats are written
    /// with round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(w, "{:e},{:e},{},{:e},{:e}", s.t, s.v_out, s.n_on, s.i_load, s.period_eff)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(v: &[f64]) -> Trace {
        let samples = v
            .iter()
            .enumerate()
            .map(|(i, &v_out)| Sample { t: i as f64 * 1e-9, v_out, n_on: 0, i_load: 0.0, period_eff: 1e-9 })
            .collect();
        Trace { samples, charge: ChargeLedger::default() }
    }

    #[test]
    fn csv_header_and_precision() {
        let t = trace_of(&[0.1, 0.123_456_789_012_345_67]);
        let csv = t.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.123_456_789_012_345_67);
        assert_eq!(row.len(), 5);
    }

    #[test]
    fn since_and_peak_to_peak() {
        let t = trace_of(&[0.0, 0.5, 0.9, 0.91, 0.89]);
        assert_eq!(t.since(2e-9).len(), 3);
        assert!((t.peak_to_peak_since(2e-9) - 0.02).abs() < 1e-12);
        assert_eq!(Trace::default().peak_to_peak_since(0.0), 0.0);
    }

    #[test]
    fn ledger_relative_error() {
        let l = ChargeLedger { q_supply: 2.0, q_load: 1.0, c_load: 1.0, v_start: 0.0, v_end: 1.0 };
        assert_eq!(l.relative_error(), 0.0);
        let bad = ChargeLedger { q_supply: 2.1, ..l };
        assert!(bad.relative_error() > 0.04);
    }
}
