use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The theorem's hypothesis does not hold for this input.
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// 0 for pass or not-applicable, 1 for fail.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass | Verdict::NotApplicable => 0,
            Verdict::Fail => 1,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotApplicable => "N-A",
        })
    }
}

/// Common surface of the checker reports.
pub trait Report: Serialize {
    /// Short name used for `<name>_report.json`.
    fn name(&self) -> &'static str;
    fn verdict(&self) -> Verdict;
    /// One line with the verdict and its margins.
    fn summary(&self) -> String;
}
