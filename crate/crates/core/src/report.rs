use serde::{Deserialize, Serialize};

/// One pass/fail line of a verification report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (worst violation, fitted constant, error, ...).
    pub measured: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, passed: bool, measured: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            measured,
            threshold,
            detail: String::new(),
        });
    }

    pub fn push_detail(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            measured,
            threshold,
            detail: detail.into(),
        });
    }

    /// `measured <= threshold` passes.
    pub fn push_le(&mut self, name: impl Into<String>, measured: f64, threshold: f64) {
        let passed = measured <= threshold;
        self.push(name, passed, measured, threshold);
    }

    /// `measured >= threshold` passes.
    pub fn push_ge(&mut self, name: impl Into<String>, measured: f64, threshold: f64) {
        let passed = measured >= threshold;
        self.push(name, passed, measured, threshold);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn extend(&mut self, other: Report) {
        for mut c in other.checks {
            if !other.title.is_empty() {
                c.name = format!("{}/{}", other.title, c.name);
            }
            self.checks.push(c);
        }
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.title)?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<48} measured={:.6e} threshold={:.6e} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            )?;
        }
        Ok(())
    }
}
