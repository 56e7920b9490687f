use serde::{Deserialize, Serialize};

use crate::decimal::Centi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: u64,
    pub total: u64,
    pub elapsed_ms: u64,
}

/// `H:MM:SS`, seconds truncated.
pub fn format_hms(ms: u64) -> String {
    let secs = ms / 1000;
    format!("{}:{:02}:{:02}", secs / 3600, (secs / 60) % 60, secs % 60)
}

impl Progress {
    pub fn percent(&self) -> Centi {
        if self.total == 0 {
            return Centi(10_000);
        }
        Centi::percent(self.done, self.total)
    }

    /// Remaining time extrapolated from the mean time per finished item.
    pub fn eta_ms(&self) -> Option<u64> {
        if self.done == 0 {
            return None;
        }
        let remaining = self.total.saturating_sub(self.done);
        Some((u128::from(self.elapsed_ms) * u128::from(remaining) / u128::from(self.done)) as u64)
    }
}

/// `{label} {done}/{total} ({pct}%) elapsed={H:MM:SS} eta={H:MM:SS}`
pub fn progress_line(p: &Progress, label: &str) -> String {
    let eta = p
        .eta_ms()
        .map(format_hms)
        .unwrap_or_else(|| "--:--:--".to_string());
    format!(
        "{label} {}/{} ({}%) elapsed={} eta={eta}",
        p.done,
        p.total,
        p.percent(),
        format_hms(p.elapsed_ms)
    )
}
