//! Serves a built-in regression model over the NDJSON black-box protocol,
//! so the subprocess path can be exercised without other tooling.

use std::io::{BufRead, Write};

use linex_core::blackbox::{builtin_linear, builtin_piecewise_sign, BlackBox};
use ndarray::{Array1, Array2};
use serde::Deserialize;
use serde_json::json;

use crate::config::ModelSpec;
use crate::failure::{Class, Failure};

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum Request {
    Meta,
    Predict { id: u64, x: Vec<Vec<f64>> },
}

pub fn serve(model: &ModelSpec, dim: Option<usize>) -> Result<(), Failure> {
    let bb: Box<dyn BlackBox<f64>> = match model {
        ModelSpec::Linear { weights, intercept } => Box::new(builtin_linear(Array1::from(weights.clone()), *intercept)?),
        ModelSpec::PiecewiseSign { axis, magnitude } => {
            let d = dim.ok_or_else(|| Failure::config("piecewise_sign needs --dim"))?;
            Box::new(builtin_piecewise_sign(d, *axis, *magnitude)?)
        }
        _ => return Err(Failure::config("serve-builtin supports linear and piecewise_sign")),
    };
    let d = bb.dimension();
    let protocol = |m: String| Failure { class: Class::Model, message: m };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in std::io::stdin().lock().lines() {
        let line = line.map_err(|e| Failure::io(e.to_string()))?;
        let reply = match serde_json::from_str::<Request>(&line).map_err(|e| protocol(format!("bad request {line:?}: {e}")))? {
            Request::Meta => json!({ "d": d, "task": "regression" }),
            Request::Predict { id, x } => {
                if x.iter().any(|r| r.len() != d) {
                    return Err(protocol(format!("request {id} has rows of the wrong width")));
                }
                let xs = Array2::from_shape_vec((x.len(), d), x.concat()).expect("checked widths");
                json!({ "id": id, "y": bb.predict_batch(xs.view())?.to_vec() })
            }
        };
        writeln!(out, "{reply}").and_then(|_| out.flush()).map_err(|e| Failure::io(e.to_string()))?;
    }
    Ok(())
}
