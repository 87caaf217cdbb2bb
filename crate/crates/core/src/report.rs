//! Clock description and labeled cost reports (JSON, CSV, text).

use std::fmt::Write as _;

use serde::Serialize;

/// A clock given either by its period or by its frequency. Both forms are
/// kept exact so integer throughput figures do not pick up rounding noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Period in femtoseconds.
    Period { fs: u64 },
    /// Frequency in hertz.
    Frequency { hz: u64 },
}

impl Clock {
    /// 29.4 ps, the synthesized cycle time.
    pub const DESIGN_PERIOD: Clock = Clock::Period { fs: 29_400 };
    /// 34 GHz, the quoted operating frequency.
    pub const DESIGN_FREQUENCY: Clock = Clock::Frequency { hz: 34_000_000_000 };

    pub fn from_period_ps(ps: f64) -> Self {
        Clock::Period { fs: (ps * 1e3).round() as u64 }
    }

    pub fn from_ghz(ghz: f64) -> Self {
        Clock::Frequency { hz: (ghz * 1e9).round() as u64 }
    }

    pub fn period_ps(&self) -> f64 {
        match *self {
            Clock::Period { fs } => fs as f64 / 1e3,
            Clock::Frequency { hz } => 1e12 / hz as f64,
        }
    }

    pub fn freq_hz(&self) -> f64 {
        match *self {
            Clock::Period { fs } => 1e15 / fs as f64,
            Clock::Frequency { hz } => hz as f64,
        }
    }

    /// Wall-clock time of `cycles` cycles, in nanoseconds.
    pub fn ns(&self, cycles: u64) -> f64 {
        cycles as f64 * self.period_ps() / 1e3
    }

    /// Operations per second when one operation takes `cycles` cycles.
    pub fn rate(&self, cycles: u64) -> f64 {
        self.freq_hz() / cycles as f64
    }

    /// floor(operations per second), in exact integer arithmetic.
    pub fn rate_floor(&self, cycles: u64) -> u64 {
        match *self {
            Clock::Period { fs } => (1_000_000_000_000_000u128 / (u128::from(cycles) * u128::from(fs))) as u64,
            Clock::Frequency { hz } => hz / cycles,
        }
    }

    /// Same clock stretched by `factor` (period multiplied).
    pub fn slowed(&self, factor: u64) -> Self {
        match *self {
            Clock::Period { fs } => Clock::Period { fs: fs * factor },
            Clock::Frequency { hz } => Clock::Frequency { hz: hz / factor },
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Clock::Period { .. } => format!("{} ps", trim_float(self.period_ps())),
            Clock::Frequency { .. } => format!("{} GHz", trim_float(self.freq_hz() / 1e9)),
        }
    }
}

impl Default for Clock {
    fn default() -> Self {
        Clock::DESIGN_PERIOD
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
    pub unit: String,
    /// Human-readable rendering, e.g. "531.25M NTT/s".
    pub display: String,
}

/// A titled list of metrics with free-form notes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

impl CostReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn row(mut self, metric: &str, value: f64, unit: &str, display: impl Into<String>) -> Self {
        self.rows.push(ReportRow {
            metric: metric.to_string(),
            value,
            unit: unit.to_string(),
            display: display.into(),
        });
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn get(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn merge(mut self, other: CostReport) -> Self {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,unit\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.metric, r.value, r.unit);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.title);
        let width = self.rows.iter().map(|r| r.metric.len()).max().unwrap_or(0);
        for r in &self.rows {
            let _ = writeln!(out, "  {:width$}  {}", r.metric, r.display);
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

/// "1,634,614"-style thousands grouping.
pub fn group_thousands(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_conversions() {
        assert!((Clock::DESIGN_PERIOD.freq_hz() - 34.0136e9).abs() < 1e6);
        assert_eq!(Clock::DESIGN_FREQUENCY.rate(64), 531_250_000.0);
        assert_eq!(Clock::DESIGN_PERIOD.rate_floor(20_800), 1_635_269);
        assert_eq!(Clock::DESIGN_FREQUENCY.rate_floor(20_800), 1_634_615);
        assert!((Clock::DESIGN_PERIOD.ns(16_384) - 481.6896).abs() < 1e-9);
        assert_eq!(Clock::from_period_ps(29.4), Clock::DESIGN_PERIOD);
        assert_eq!(Clock::from_ghz(34.0), Clock::DESIGN_FREQUENCY);
        assert_eq!(Clock::DESIGN_PERIOD.describe(), "29.4 ps");
        assert_eq!(Clock::DESIGN_FREQUENCY.describe(), "34 GHz");
    }

    #[test]
    fn formats() {
        let r = CostReport::new("t").row("a", 1.5, "x", "1.5 x").note("n");
        assert_eq!(r.to_csv(), "metric,value,unit\na,1.5,x\n");
        assert!(r.to_text().contains("1.5 x"));
        assert!(r.to_json().contains("\"metric\": \"a\""));
        assert_eq!(group_thousands(1_634_614), "1,634,614");
        assert_eq!(group_thousands(482), "482");
    }
}
