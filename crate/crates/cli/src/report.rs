use std::fmt::Display;

/// Collects `key=value` lines and `# ` summary lines for stdout.
#[derive(Default)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn kv(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key}={value}"));
        self
    }

    pub fn note(&mut self, text: impl Display) -> &mut Self {
        self.lines.push(format!("# {text}"));
        self
    }

    /// Writes the report to stdout, stopping quietly if the reader hangs up.
    pub fn print(&self) {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        for l in &self.lines {
            if writeln!(out, "{l}").is_err() {
                return;
            }
        }
    }
}

/// Shortest round-trip text, in scientific notation for very small or very
/// large magnitudes.
pub fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}
