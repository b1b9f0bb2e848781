//! Synthetic 2-D objectives whose maxima form curves (or, for `Func3`, a ridge
//! leading to a single point). Scores lie in `(0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestFunctionId {
    Func1,
    Func2,
    Func3,
    Func4,
}

impl TestFunctionId {
    pub const ALL: [TestFunctionId; 4] = [
        TestFunctionId::Func1,
        TestFunctionId::Func2,
        TestFunctionId::Func3,
        TestFunctionId::Func4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunctionId::Func1 => "Func1",
            TestFunctionId::Func2 => "Func2",
            TestFunctionId::Func3 => "Func3",
            TestFunctionId::Func4 => "Func4",
        }
    }

    /// Window the functions are designed for; samplers draw from it.
    pub fn plot_range() -> ([f64; 2], [f64; 2]) {
        ([0.0, 0.0], [2.0, 2.0])
    }
}

impl std::fmt::Display for TestFunctionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TestFunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "func1" | "1" => Ok(TestFunctionId::Func1),
            "func2" | "2" => Ok(TestFunctionId::Func2),
            "func3" | "3" => Ok(TestFunctionId::Func3),
            "func4" | "4" => Ok(TestFunctionId::Func4),
            _ => Err(Error::invalid(format!("unknown test function `{s}`"))),
        }
    }
}

fn dist(x1: f64, x2: f64, c1: f64, c2: f64) -> f64 {
    ((x2 - c2).powi(2) + (x1 - c1).powi(2)).sqrt()
}

/// Piecewise distance for `Func1`: point, slanted segment, point.
/// Ties on a breakpoint go to the middle branch.
fn func1_distance(x1: f64, x2: f64) -> f64 {
    if x1 < 0.5 {
        dist(x1, x2, 0.5, 1.05)
    } else if x1 < 1.5 {
        // Normaliser kept exactly as the published definition writes it.
        (-0.3 * x1 - x2 + 1.2).abs() / (0.09f64 + 1.0).powi(2)
    } else {
        dist(x1, x2, 1.5, 0.75)
    }
}

fn func3_distance(x1: f64, x2: f64) -> f64 {
    if x1 < 0.7 {
        dist(x1, x2, 0.7, 0.94)
    } else if x1 < 1.4 {
        (0.2 * x1 - x2 + 0.8).abs() / (0.04f64 + 1.0).powi(2)
    } else {
        dist(x1, x2, 1.4, 1.08)
    }
}

/// Evaluates `R(x)` for one of the four functions.
///
/// `Func3` tilts its ridge by `0.2 (x1 - 0.7)` so the unique maximum
/// `R = 1` sits at the ridge's left end `(0.7, 0.94)`.
pub fn eval_test_function(id: TestFunctionId, x: [f64; 2]) -> Result<f64> {
    let [x1, x2] = x;
    if !x1.is_finite() || !x2.is_finite() {
        return Err(Error::invalid(format!("non-finite input ({x1}, {x2})")));
    }
    let exponent = match id {
        TestFunctionId::Func1 => func1_distance(x1, x2),
        TestFunctionId::Func2 => ((x2 - 1.5).powi(2) + (x1 + 1.0).powi(2) - 2.5).abs(),
        TestFunctionId::Func3 => func3_distance(x1, x2) + 0.2 * (x1 - 0.7),
        TestFunctionId::Func4 => ((x2 - 1.0).powi(2) + (x1 - 1.0).powi(2) - 0.5).abs(),
    };
    Ok((-2.0 * exponent).exp())
}
