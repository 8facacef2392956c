//! Verifier reports: {check, status, location, witness}.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub check: String,
    pub status: Status,
    pub location: String,
    pub witness: Option<String>,
}

impl Report {
    pub fn pass(check: impl Into<String>, location: impl Into<String>) -> Self {
        Report {
            check: check.into(),
            status: Status::Pass,
            location: location.into(),
            witness: None,
        }
    }

    pub fn fail(
        check: impl Into<String>,
        location: impl Into<String>,
        witness: impl Into<String>,
    ) -> Self {
        Report {
            check: check.into(),
            status: Status::Fail,
            location: location.into(),
            witness: Some(witness.into()),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

pub fn all_pass(reports: &[Report]) -> bool {
    reports.iter().all(Report::passed)
}

pub fn first_failure(reports: &[Report]) -> Option<&Report> {
    reports.iter().find(|r| !r.passed())
}
