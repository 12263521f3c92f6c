//! Output files. Everything except the report header is a pure function of
//! the config, so repeated runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use linex_core::bench::{BenchReport, Metric, SweepRow};
use linex_core::explain::Explanation;
use linex_core::Method;
use serde::Serialize;
use serde_json::Value;

use crate::failure::Failure;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| Failure::io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_owned() })
    }

    fn open(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        Ok((path, BufWriter::new(file)))
    }

    fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
        let (path, file) = self.open(name)?;
        let err = |e: csv::Error| Failure::io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }

    pub fn report(&self, command: &str, timing: Value, config: &impl Serialize, result: Value) -> Result<(), Failure> {
        let doc = serde_json::json!({
            "header": {
                "tool": "linex",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "timestamp": chrono::Utc::now().to_rfc3339(),
                "timing": timing,
            },
            "config": config,
            "result": result,
        });
        let (path, mut file) = self.open("report.json")?;
        let text = serde_json::to_string_pretty(&doc).expect("serializable");
        writeln!(file, "{text}").and_then(|_| file.flush()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }

    /// One JSON object per explanation, in test-set order.
    pub fn explanations<'a>(
        &self,
        feature_names: &[String],
        runs: impl IntoIterator<Item = (Option<f64>, &'a [Explanation<f64>])>,
    ) -> Result<(), Failure> {
        let (path, mut file) = self.open("explanations.jsonl")?;
        for (tau, explanations) in runs {
            for (index, e) in explanations.iter().enumerate() {
                let a = &e.attribution;
                let record = ExplanationRecord {
                    index,
                    method: e.method,
                    tau,
                    class_of_interest: e.class_of_interest,
                    feature_names,
                    coefficients: a.coefficients.to_vec(),
                    intercept: a.intercept,
                    support: &a.support,
                    converged: e.converged,
                    rounds: e.rounds,
                    gamma: e.gamma,
                    query_count: a.query_count,
                };
                let line = serde_json::to_string(&record).expect("serializable");
                writeln!(file, "{line}").map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            }
        }
        file.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }

    /// Aggregate table (mean and SEM over τ per method), plus per-τ rows and
    /// per-example coefficient inconsistency.
    pub fn benchmark_tables(&self, report: &BenchReport, methods: &[Method]) -> Result<(), Failure> {
        let metrics: Vec<Metric> = Metric::ALL.into_iter().filter(|m| methods.iter().any(|me| report.summary_of(*me, *m).is_some())).collect();
        let tested = methods.len() > 1 && methods.contains(&Method::Linex);

        let mut header = vec!["method".to_string()];
        for m in &metrics {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_sem"));
        }
        header.push("non_converged".into());
        if tested {
            header.extend(metrics.iter().map(|m| format!("{m}_p_vs_linex")));
        }
        let rows: Vec<Vec<String>> = methods
            .iter()
            .map(|&method| {
                let mut row = vec![method.to_string()];
                for &m in &metrics {
                    let s = report.summary_of(method, m);
                    row.push(s.map_or(String::new(), |s| num(s.mean)));
                    row.push(s.map_or(String::new(), |s| num(s.sem)));
                }
                row.push(report.runs.iter().filter(|r| r.method == method).map(|r| r.non_converged()).sum::<usize>().to_string());
                if tested {
                    for &m in &metrics {
                        let p = report.comparison(Method::Linex, method, m).and_then(|c| c.p_value);
                        row.push(p.map_or(String::new(), num));
                    }
                }
                row
            })
            .collect();
        self.csv("metrics.csv", &header, &rows)?;

        let mut header = vec!["method".to_string(), "tau".to_string()];
        header.extend(metrics.iter().map(|m| m.to_string()));
        header.push("non_converged".into());
        let rows: Vec<Vec<String>> = report
            .runs
            .iter()
            .map(|r| {
                let mut row = vec![r.method.to_string(), num(r.tau)];
                row.extend(metrics.iter().map(|m| m.value(&r.metrics).map_or(String::new(), num)));
                row.push(r.non_converged().to_string());
                row
            })
            .collect();
        self.csv("runs.csv", &header, &rows)?;

        let header: Vec<String> = ["method", "tau", "example", "ci"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = report
            .runs
            .iter()
            .flat_map(|r| r.metrics.per_example.ci.iter().enumerate().map(move |(i, v)| vec![r.method.to_string(), num(r.tau), i.to_string(), num(*v)]))
            .collect();
        self.csv("ci_per_example.csv", &header, &rows)
    }

    pub fn sweep_table(&self, rows: &[SweepRow]) -> Result<(), Failure> {
        let header: Vec<String> = ["method", "axis", "value", "metric", "mean", "sem"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.method.to_string(), r.axis.to_string(), num(r.value), r.metric.to_string(), num(r.mean), num(r.sem)])
            .collect();
        self.csv("sweep.csv", &header, &rows)
    }
}

#[derive(Serialize)]
struct ExplanationRecord<'a> {
    index: usize,
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    class_of_interest: Option<usize>,
    feature_names: &'a [String],
    coefficients: Vec<f64>,
    intercept: f64,
    support: &'a [usize],
    converged: bool,
    rounds: usize,
    gamma: Option<f64>,
    query_count: u64,
}

fn num(v: f64) -> String {
    format!("{v}")
}
