//! JSON model files.
//!
//! ```json
//! {
//!   "states": 2,
//!   "h": [0.0, 1.0],
//!   "sigma": 0.5,
//!   "param_grid": {"lo": 0.05, "hi": 0.95, "points": 21},
//!   "kernel_template": {"name": "two_state_flip", "return_prob": 0.3},
//!   "prior": "uniform",
//!   "initial": [0.5, 0.5],
//!   "alpha": 10
//! }
//! ```
//!
//! `param_grid` is either an explicit list of points or a `{lo, hi, points}`
//! range for one-dimensional grids. Exactly one of `kernels` (one matrix per
//! grid point) and `kernel_template` is required. `prior` and `initial` accept
//! `"uniform"`. `alpha` is an optional default for the true grid index.
//! Validation collects every problem it can find, each tagged with a JSON
//! pointer.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::kernel::{FiniteKernel, STOCHASTIC_TOL};
use crate::measure::{DiscreteMeasure, PROBABILITY_TOL};
use crate::model::{AugmentedModel, KernelFamily, KernelTemplate, ObservationModel};

const KNOWN_FIELDS: [&str; 10] = [
    "states",
    "h",
    "sigma",
    "param_grid",
    "kernels",
    "kernel_template",
    "prior",
    "initial",
    "alpha",
    "description",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// RFC 6901 pointer into the model file.
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub model: AugmentedModel,
    pub alpha: Option<usize>,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, pointer: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            pointer: pointer.into(),
            message: message.into(),
        });
    }

    fn number(&mut self, v: &Value, ptr: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.push(ptr, "expected a finite number");
                None
            }
        }
    }

    fn numbers(&mut self, v: &Value, ptr: &str) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.push(ptr, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.number(item, &format!("{ptr}/{i}")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn count(&mut self, v: &Value, ptr: &str) -> Option<usize> {
        match v.as_u64() {
            Some(n) => Some(n as usize),
            None => {
                self.push(ptr, "expected a non-negative integer");
                None
            }
        }
    }

    fn distribution(&mut self, v: &Value, ptr: &str, len: Option<usize>) -> Option<DiscreteMeasure> {
        if v.as_str() == Some("uniform") {
            return len.and_then(|n| DiscreteMeasure::uniform(n).ok());
        }
        let w = self.numbers(v, ptr)?;
        let mut ok = true;
        if let Some(n) = len {
            if w.len() != n {
                self.push(ptr, format!("expected {n} entries, found {}", w.len()));
                ok = false;
            }
        }
        for (i, x) in w.iter().enumerate() {
            if *x < 0.0 {
                self.push(format!("{ptr}/{i}"), format!("negative weight {x}"));
                ok = false;
            }
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            self.push(ptr, format!("weights sum to {total}, expected 1"));
            ok = false;
        }
        if !ok {
            return None;
        }
        DiscreteMeasure::probability(w).ok()
    }

    fn grid(&mut self, v: &Value) -> Option<Vec<Vec<f64>>> {
        let ptr = "/param_grid";
        if v.is_object() {
            let lo = self.field(v, ptr, "lo").and_then(|x| self.number(x, "/param_grid/lo"));
            let hi = self.field(v, ptr, "hi").and_then(|x| self.number(x, "/param_grid/hi"));
            let n = self
                .field(v, ptr, "points")
                .and_then(|x| self.count(x, "/param_grid/points"));
            let (lo, hi, n) = (lo?, hi?, n?);
            if n == 0 {
                self.push("/param_grid/points", "grid needs at least one point");
                return None;
            }
            if n > 1 && !(hi > lo) {
                self.push("/param_grid/hi", "hi must exceed lo");
                return None;
            }
            return Some(KernelFamily::uniform_grid(lo, hi, n));
        }
        let Some(items) = v.as_array() else {
            self.push(ptr, "expected an array of points or {lo, hi, points}");
            return None;
        };
        if items.is_empty() {
            self.push(ptr, "grid needs at least one point");
            return None;
        }
        let mut points = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let p = if item.is_number() {
                self.number(item, &format!("{ptr}/{i}")).map(|x| vec![x])
            } else {
                self.numbers(item, &format!("{ptr}/{i}"))
            };
            match p {
                Some(p) => points.push(p),
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        let dim = points[0].len();
        if dim == 0 {
            self.push("/param_grid/0", "parameter points need at least one coordinate");
            return None;
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                self.push(format!("{ptr}/{i}"), format!("expected {dim} coordinates, found {}", p.len()));
                ok = false;
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    self.push(format!("{ptr}/{i}"), format!("duplicate of grid point {j}"));
                    ok = false;
                    break;
                }
            }
        }
        ok.then_some(points)
    }

    fn field<'a>(&mut self, v: &'a Value, ptr: &str, key: &str) -> Option<&'a Value> {
        let found = v.get(key);
        if found.is_none() {
            self.push(format!("{ptr}/{}", escape(key)), "missing field");
        }
        found
    }

    fn explicit_kernels(&mut self, v: &Value, states: Option<usize>, grid_len: Option<usize>) -> Option<Vec<FiniteKernel>> {
        let Some(items) = v.as_array() else {
            self.push("/kernels", "expected an array of matrices");
            return None;
        };
        if let Some(n) = grid_len {
            if items.len() != n {
                self.push("/kernels", format!("expected {n} kernels (one per grid point), found {}", items.len()));
            }
        }
        let mut kernels = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.kernel_matrix(item, &format!("/kernels/{i}"), states) {
                Some(k) => kernels.push(k),
                None => ok = false,
            }
        }
        (ok && grid_len.map_or(true, |n| n == kernels.len())).then_some(kernels)
    }

    fn kernel_matrix(&mut self, v: &Value, ptr: &str, states: Option<usize>) -> Option<FiniteKernel> {
        let Some(rows) = v.as_array() else {
            self.push(ptr, "expected a square matrix");
            return None;
        };
        let size = states.unwrap_or(rows.len());
        let mut ok = true;
        if rows.len() != size {
            self.push(ptr, format!("expected {size} rows, found {}", rows.len()));
            ok = false;
        }
        let mut parsed = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            let rptr = format!("{ptr}/{r}");
            let Some(vals) = self.numbers(row, &rptr) else {
                ok = false;
                continue;
            };
            if vals.len() != size {
                self.push(&rptr, format!("expected {size} entries, found {}", vals.len()));
                ok = false;
                continue;
            }
            for (c, x) in vals.iter().enumerate() {
                if *x < 0.0 {
                    self.push(format!("{rptr}/{c}"), format!("negative transition probability {x}"));
                    ok = false;
                }
            }
            let sum: f64 = vals.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                self.push(&rptr, format!("row {r} sums to {sum:.12}, expected 1"));
                ok = false;
            }
            parsed.push(vals);
        }
        if !ok {
            return None;
        }
        match FiniteKernel::from_rows(&parsed) {
            Ok(k) => Some(k),
            Err(e) => {
                self.push(ptr, e.to_string());
                None
            }
        }
    }

    fn template_kernels(
        &mut self,
        v: &Value,
        states: Option<usize>,
        grid: Option<&[Vec<f64>]>,
    ) -> Option<KernelFamily> {
        let template: KernelTemplate = match serde_json::from_value(v.clone()) {
            Ok(t) => t,
            Err(e) => {
                self.push("/kernel_template", e.to_string());
                return None;
            }
        };
        if let Some(s) = states {
            if template.states() != s {
                self.push(
                    "/kernel_template",
                    format!("template has {} states, model declares {s}", template.states()),
                );
                return None;
            }
        }
        let grid = grid?;
        let mut ok = true;
        for (i, p) in grid.iter().enumerate() {
            if p.len() != template.dim() {
                self.push(
                    format!("/param_grid/{i}"),
                    format!("template takes {} coordinates, point has {}", template.dim(), p.len()),
                );
                ok = false;
            } else if let Err(e) = template.kernel(p) {
                self.push(format!("/param_grid/{i}"), format!("template kernel is invalid here: {e}"));
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        match KernelFamily::from_template(template, grid.to_vec()) {
            Ok(f) => Some(f),
            Err(e) => {
                self.push("/kernel_template", e.to_string());
                None
            }
        }
    }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<LoadedModel, Vec<Violation>> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        vec![Violation {
            pointer: String::new(),
            message: format!("invalid JSON: {e}"),
        }]
    })?;
    let mut c = Checker { violations: Vec::new() };
    let Some(obj) = root.as_object() else {
        return Err(vec![Violation {
            pointer: String::new(),
            message: "expected a JSON object".into(),
        }]);
    };
    let unknown: BTreeSet<&String> = obj.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())).collect();
    for k in unknown {
        c.push(format!("/{}", escape(k)), "unknown field");
    }

    let states = c.field(&root, "", "states").and_then(|v| c.count(v, "/states"));
    let states = match states {
        Some(0) => {
            c.push("/states", "need at least one state");
            None
        }
        s => s,
    };
    let h = c.field(&root, "", "h").and_then(|v| c.numbers(v, "/h"));
    if let (Some(h), Some(s)) = (&h, states) {
        if h.len() != s {
            c.push("/h", format!("expected {s} entries, found {}", h.len()));
        }
    }
    let sigma = c.field(&root, "", "sigma").and_then(|v| c.number(v, "/sigma"));
    if let Some(s) = sigma {
        if s <= 0.0 {
            c.push("/sigma", format!("noise scale must be positive, got {s}"));
        }
    }
    let grid = c.field(&root, "", "param_grid").and_then(|v| c.grid(v));
    let family = match (root.get("kernels"), root.get("kernel_template")) {
        (Some(_), Some(_)) => {
            c.push("/kernel_template", "give either \"kernels\" or \"kernel_template\", not both");
            None
        }
        (None, None) => {
            c.push("", "missing field \"kernels\" or \"kernel_template\"");
            None
        }
        (Some(k), None) => {
            let kernels = c.explicit_kernels(k, states, grid.as_ref().map(Vec::len));
            match (grid.clone(), kernels) {
                (Some(g), Some(k)) => match KernelFamily::new(g, k) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        c.push("/kernels", e.to_string());
                        None
                    }
                },
                _ => None,
            }
        }
        (None, Some(t)) => c.template_kernels(t, states, grid.as_deref()),
    };
    let grid_len = grid.as_ref().map(Vec::len);
    let prior = c
        .field(&root, "", "prior")
        .and_then(|v| c.distribution(v, "/prior", grid_len));
    let initial = c
        .field(&root, "", "initial")
        .and_then(|v| c.distribution(v, "/initial", states));
    let alpha = match root.get("alpha") {
        None => None,
        Some(v) => {
            let a = c.count(v, "/alpha");
            if let (Some(a), Some(n)) = (a, grid_len) {
                if a >= n {
                    c.push("/alpha", format!("index {a} is outside the {n}-point grid"));
                }
            }
            a
        }
    };

    if !c.violations.is_empty() {
        return Err(c.violations);
    }
    let (Some(family), Some(prior), Some(initial), Some(h), Some(sigma)) = (family, prior, initial, h, sigma) else {
        return Err(vec![Violation {
            pointer: String::new(),
            message: "incomplete model".into(),
        }]);
    };
    let obs = ObservationModel::new(h, sigma).map_err(|e| vec![Violation {
        pointer: "/h".into(),
        message: e.to_string(),
    }])?;
    let model = AugmentedModel::new(family, prior, obs, initial).map_err(|e| vec![Violation {
        pointer: String::new(),
        message: e.to_string(),
    }])?;
    Ok(LoadedModel { model, alpha })
}

/// Reads and validates a model file, reporting every violation found.
pub fn validate_model(path: &Path) -> Result<LoadedModel, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Violation {
            pointer: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    parse_model(&text)
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}
