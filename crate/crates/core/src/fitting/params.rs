use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DesignProblem, RidgeSolution};
use crate::docfmt;
use crate::error::{Error, Result};
use crate::run_model::{ExampleId, TestId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulatorVariant {
    /// `L_t = α(c_t)·L_{t-1} + β(c_t)`.
    Linear,
    /// `α ≡ 1`.
    Additive,
    /// `β ≡ 0`.
    Multiplicative,
}

impl SimulatorVariant {
    pub const ALL: [SimulatorVariant; 3] =
        [SimulatorVariant::Linear, SimulatorVariant::Additive, SimulatorVariant::Multiplicative];

    /// Width of the design matrix for `n` training examples.
    pub fn columns(self, n: usize) -> usize {
        match self {
            SimulatorVariant::Linear => 2 * n,
            _ => n,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimulatorVariant::Linear => "linear",
            SimulatorVariant::Additive => "additive",
            SimulatorVariant::Multiplicative => "multiplicative",
        }
    }
}

impl fmt::Display for SimulatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimulatorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SimulatorVariant::Linear),
            "additive" => Ok(SimulatorVariant::Additive),
            "multiplicative" => Ok(SimulatorVariant::Multiplicative),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rows: usize,
    pub columns: usize,
    pub rss: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Fitted weights of one test example's simulator.
///
/// `multiplicative` (`A`) and `additive` (`B`) always have length `n`. The
/// vector a variant does not use is kept at zero and ignored: the additive
/// ablation runs with `α ≡ 1`, the multiplicative one with `β ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorParams {
    pub test_example_id: TestId,
    pub variant: SimulatorVariant,
    pub lambda: f64,
    pub multiplicative: Vec<f64>,
    pub additive: Vec<f64>,
    pub diagnostics: Option<FitDiagnostics>,
}

impl SimulatorParams {
    /// Hand-specified parameters (no fit diagnostics).
    pub fn new(
        test_example_id: TestId,
        variant: SimulatorVariant,
        multiplicative: Vec<f64>,
        additive: Vec<f64>,
    ) -> Result<Self> {
        if multiplicative.len() != additive.len() {
            return Err(Error::DimensionMismatch { expected: multiplicative.len(), found: additive.len() });
        }
        if multiplicative.iter().chain(&additive).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("simulator weights must be finite".into()));
        }
        let n = multiplicative.len();
        let (multiplicative, additive) = match variant {
            SimulatorVariant::Linear => (multiplicative, additive),
            SimulatorVariant::Additive => (vec![0.0; n], additive),
            SimulatorVariant::Multiplicative => (multiplicative, vec![0.0; n]),
        };
        Ok(SimulatorParams { test_example_id, variant, lambda: 0.0, multiplicative, additive, diagnostics: None })
    }

    pub fn linear(test_example_id: TestId, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        SimulatorParams::new(test_example_id, SimulatorVariant::Linear, a, b)
    }

    pub fn additive_only(test_example_id: TestId, b: Vec<f64>) -> Result<Self> {
        SimulatorParams::new(test_example_id, SimulatorVariant::Additive, vec![0.0; b.len()], b)
    }

    pub fn multiplicative_only(test_example_id: TestId, a: Vec<f64>) -> Result<Self> {
        let n = a.len();
        SimulatorParams::new(test_example_id, SimulatorVariant::Multiplicative, a, vec![0.0; n])
    }

    pub(crate) fn from_weights(problem: &DesignProblem, lambda: f64, solution: &RidgeSolution, rank: usize) -> Self {
        let n = problem.n;
        let w = solution.weights.as_slice();
        let (multiplicative, additive) = match problem.variant {
            SimulatorVariant::Linear => (w[..n].to_vec(), w[n..].to_vec()),
            SimulatorVariant::Additive => (vec![0.0; n], w.to_vec()),
            SimulatorVariant::Multiplicative => (w.to_vec(), vec![0.0; n]),
        };
        SimulatorParams {
            test_example_id: problem.test_example_id,
            variant: problem.variant,
            lambda,
            multiplicative,
            additive,
            diagnostics: Some(FitDiagnostics {
                rows: problem.rows_len(),
                columns: problem.columns(),
                rss: solution.rss,
                rank,
                rank_deficient: rank < problem.columns(),
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.additive.len()
    }

    /// `α(c) = Σ_{i∈c} A_i` (with multiplicity), or 1 for the additive ablation.
    pub fn alpha(&self, batch: &[ExampleId]) -> f64 {
        match self.variant {
            SimulatorVariant::Additive => 1.0,
            _ => batch.iter().map(|&i| self.multiplicative[i as usize - 1]).sum(),
        }
    }

    /// `β(c) = Σ_{i∈c} B_i` (with multiplicity), or 0 for the multiplicative ablation.
    pub fn beta(&self, batch: &[ExampleId]) -> f64 {
        match self.variant {
            SimulatorVariant::Multiplicative => 0.0,
            _ => batch.iter().map(|&i| self.additive[i as usize - 1]).sum(),
        }
    }
}

pub const PARAMS_FORMAT: &str = "trajsim-params";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulatorDoc {
    test_example_id: TestId,
    variant: SimulatorVariant,
    lambda: f64,
    #[serde(rename = "A")]
    a: Option<Vec<f64>>,
    #[serde(rename = "B")]
    b: Option<Vec<f64>>,
    diagnostics: Option<FitDiagnostics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    format: String,
    version: u32,
    n: usize,
    simulators: Vec<SimulatorDoc>,
}

/// A versioned bundle of fitted simulators (typically one per test id)
/// sharing the same `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsDocument {
    pub n: usize,
    pub simulators: Vec<SimulatorParams>,
}

impl ParamsDocument {
    pub fn new(simulators: Vec<SimulatorParams>) -> Result<Self> {
        let n = simulators.first().map_or(0, SimulatorParams::n);
        if let Some(bad) = simulators.iter().find(|p| p.n() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.n() });
        }
        Ok(ParamsDocument { n, simulators })
    }

    pub fn get(&self, test_id: TestId) -> Option<&SimulatorParams> {
        self.simulators.iter().find(|p| p.test_example_id == test_id)
    }

    /// Single-line JSON document, newline-terminated.
    pub fn to_bytes(&self) -> Vec<u8> {
        let doc = ParamsDoc {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            n: self.n,
            simulators: self
                .simulators
                .iter()
                .map(|p| SimulatorDoc {
                    test_example_id: p.test_example_id,
                    variant: p.variant,
                    lambda: p.lambda,
                    a: (p.variant != SimulatorVariant::Additive).then(|| p.multiplicative.clone()),
                    b: (p.variant != SimulatorVariant::Multiplicative).then(|| p.additive.clone()),
                    diagnostics: p.diagnostics.clone(),
                })
                .collect(),
        };
        let mut out = docfmt::to_bytes(&doc);
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: ParamsDoc =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        if doc.format != PARAMS_FORMAT || doc.version != PARAMS_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported format {} v{}", doc.format, doc.version),
            });
        }
        let n = doc.n;
        let mut simulators = Vec::with_capacity(doc.simulators.len());
        for (k, s) in doc.simulators.into_iter().enumerate() {
            let ctx = format!("simulators[{k}]");
            let need = |v: Option<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
                let v = v.ok_or_else(|| Error::validation(format!("{ctx}.{name}"), "missing weights"))?;
                if v.len() != n {
                    return Err(Error::validation(format!("{ctx}.{name}"), format!("length {} != n = {n}", v.len())));
                }
                Ok(v)
            };
            let (a, b) = match s.variant {
                SimulatorVariant::Linear => (need(s.a, "A")?, need(s.b, "B")?),
                SimulatorVariant::Additive => (vec![0.0; n], need(s.b, "B")?),
                SimulatorVariant::Multiplicative => (need(s.a, "A")?, vec![0.0; n]),
            };
            if !(s.lambda.is_finite() && s.lambda >= 0.0) {
                return Err(Error::validation(format!("{ctx}.lambda"), "must be finite and nonnegative"));
            }
            let mut p = SimulatorParams::new(s.test_example_id, s.variant, a, b)
                .map_err(|e| Error::validation(ctx.clone(), e.to_string()))?;
            p.lambda = s.lambda;
            p.diagnostics = s.diagnostics;
            simulators.push(p);
        }
        Ok(ParamsDocument { n, simulators })
    }
}
