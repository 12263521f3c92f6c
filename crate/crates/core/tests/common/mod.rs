//! Checks shared by the property suites and the acceptance target.

#![allow(dead_code)]

pub mod metric_examples;
pub mod solver;

/// Outcome of one named check.
#[derive(Debug)]
pub struct Check {
    pub name: String,
    pub result: Result<(), String>,
}

impl Check {
    pub fn new(name: impl Into<String>, result: Result<(), String>) -> Self {
        Check { name: name.into(), result }
    }

    pub fn passed(&self) -> bool {
        self.result.is_ok()
    }
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn close(got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("got {got}, want {want} (tol {tol:e})"))
}
