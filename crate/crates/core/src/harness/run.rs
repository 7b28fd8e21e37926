use serde::Serialize;
use serde_json::{json, Value};

use crate::coupling::{simulate_coupling, wasserstein_from, CouplingOptions};
use crate::error::{Error, Result};
use crate::frame_sde::{simulate_path, terminal_ensemble, write_paths_csv};
use crate::geometry::MetricFlow;
use crate::gradient::{bismut_integrated, bismut_local, bismut_pair, bismut_pathwise, recovery_samples};
use crate::inequalities::{
    nonexplosion_check, verify_contraction, verify_entropy_bound, verify_gradient_inequality, verify_harnack,
    verify_hyperbound_with, verify_log_harnack, verify_reverse_bound_with, HyperboundConfig, Verdict,
};
use crate::noise::{derive_seed, NoiseStream};
use crate::stats::{Estimate, McConfig};

use super::config::{point, CheckSpec, ExperimentConfig, GradientEstimator, TaskSpec};
use super::report::{Plot, Table};

/// A named scalar produced alongside the results.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub name: String,
    pub value: f64,
}

/// Everything one experiment produced.
#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    /// Crate version that produced the report.
    pub version: String,
    pub seed: u64,
    pub task: String,
    pub config: ExperimentConfig,
    pub results: Vec<Value>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub plots: Vec<Plot>,
}

impl ReportBundle {
    pub fn new(config: ExperimentConfig) -> Self {
        ReportBundle {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.mc.seed,
            task: config.task.name().to_string(),
            config,
            results: Vec::new(),
            diagnostics: Vec::new(),
            tables: Vec::new(),
            plots: Vec::new(),
        }
    }

    /// Results recorded as failures.
    pub fn errors(&self) -> Vec<&Value> {
        self.results.iter().filter(|r| r.get("error").is_some()).collect()
    }

    fn diag(&mut self, name: impl Into<String>, value: f64) {
        self.diagnostics.push(Diagnostic { name: name.into(), value });
    }

    fn push<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut v = serde_json::to_value(value).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut v {
            map.entry("name").or_insert_with(|| Value::String(name.to_string()));
        } else {
            v = json!({ "name": name, "value": v });
        }
        self.results.push(v);
    }

    fn push_error(&mut self, name: &str, err: &Error) {
        self.results.push(json!({ "name": name, "error": err.to_string() }));
    }
}

fn to_csv(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Validates `config`, runs its task and collects the results.
///
/// Only configuration problems are returned as errors; failures inside a task
/// are recorded as `{name, error}` results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle> {
    config.validate()?;
    let flow = config.flow.build()?;
    let mut bundle = ReportBundle::new(config.clone());
    let mc = config.mc;
    let outcome = match &config.task {
        TaskSpec::Simulate { x, s, t, record_paths } => simulate(&mut bundle, &flow, x, *s, *t, *record_paths, &mc),
        TaskSpec::Gradient { f, x, s, t, estimator, h, radius, local } => {
            let (f, x) = (f.build(), point(x));
            let name = "gradient";
            match estimator {
                GradientEstimator::Pathwise => bismut_pathwise(&flow, &f, *s, *t, &x, None, &mc).map(|e| bundle.push(name, &e)),
                GradientEstimator::Integrated => {
                    bismut_integrated(&flow, &f, *s, *t, &x, None, h, &mc).map(|e| bundle.push(name, &e))
                }
                GradientEstimator::Pair => bismut_pair(&flow, &f, *s, *t, &x, None, h, &mc).map(|e| bundle.push(name, &e)),
                GradientEstimator::Local => {
                    bismut_local(&flow, &f, *s, *t, &x, None, radius.unwrap_or(f64::NAN), &mc, local).map(|e| {
                        bundle.diag("local.exits", e.exits as f64);
                        bundle.diag("local.inner_stderr", e.inner_stderr);
                        bundle.push(name, &e)
                    })
                }
            }
        }
        TaskSpec::Couple { x, y, s, t, mode, drift_u, p } => couple(&mut bundle, &flow, x, y, *s, *t, *mode, *drift_u, *p, &mc),
        TaskSpec::Verify { checks } => {
            for (i, check) in checks.iter().enumerate() {
                let seeded = mc.with_seed(derive_seed(mc.seed, &format!("check:{i}")));
                match run_check(&flow, check, &seeded) {
                    Ok(v) => {
                        for (k, val) in &v.diagnostics {
                            bundle.diag(format!("checks[{i}].{k}"), *val);
                        }
                        bundle.push(check.name(), &v);
                    }
                    Err(e) => bundle.push_error(check.name(), &e),
                }
            }
            Ok(())
        }
        TaskSpec::Recover { x, v, s, p, recovery } => {
            let cfg = recovery.with_mc(&mc);
            recovery_samples(&flow, *s, &point(x), &point(v), &cfg).and_then(|samples| {
                bundle.push("recover_grad", &samples.grad(*p)?);
                bundle.push("recover_variance", &samples.variance(*p)?);
                bundle.push("recover_entropy", &samples.entropy());
                Ok(())
            })
        }
        TaskSpec::Nonexplosion { spec } => {
            let report = nonexplosion_check(spec);
            if let Some(g) = &report.growth {
                bundle.tables.push(Table { name: "grigoryan".into(), csv: to_csv(|b| g.write_csv(b))? });
                bundle.plots.push(Plot {
                    name: "grigoryan".into(),
                    title: "growth integral F(R)".into(),
                    x_label: "R".into(),
                    y_label: "F".into(),
                    series: vec![g.table.clone()],
                });
                bundle.diag("grigoryan.tail_ratio", g.tail_ratio);
                bundle.diag("grigoryan.tail_exponent", g.tail_exponent);
            }
            bundle.push("nonexplosion", &report);
            Ok(())
        }
    };
    if let Err(e) = outcome {
        bundle.push_error(config.task.name(), &e);
    }
    Ok(bundle)
}

fn simulate(
    bundle: &mut ReportBundle,
    flow: &MetricFlow,
    x: &[f64],
    s: f64,
    t: f64,
    record_paths: usize,
    mc: &McConfig,
) -> Result<()> {
    let x0 = point(x);
    let ends = terminal_ensemble(flow, &x0, s, t, mc.step, mc.n_paths, mc.seed)?;
    for i in 0..x0.len() {
        let coords: Vec<f64> = ends.iter().map(|e| e.x[i]).collect();
        let mean = Estimate::from_samples(&coords)?;
        let sq: Vec<f64> = coords.iter().map(|c| (c - mean.mean).powi(2)).collect();
        let var = Estimate::from_samples(&sq)?;
        let n = coords.len() as f64;
        let var = var.map_linear(n / (n - 1.0), 0.0);
        bundle.push("terminal_mean", &json!({ "coordinate": i, "estimate": mean }));
        bundle.push("terminal_variance", &json!({ "coordinate": i, "estimate": var }));
    }
    let msd: Vec<f64> = ends.iter().map(|e| flow.rho(t, &x0, &e.x).powi(2)).collect();
    bundle.push("mean_square_distance", &json!({ "estimate": Estimate::from_samples(&msd)? }));

    let kept = record_paths.min(mc.n_paths);
    let paths = (0..kept as u64)
        .map(|i| simulate_path(flow, &x0, None, s, t, mc.step, &NoiseStream::new(mc.seed, i), &[]))
        .collect::<Result<Vec<_>>>()?;
    let max_defect = paths.iter().flat_map(|p| p.frame_defects.iter().copied()).fold(0.0, f64::max);
    bundle.diag("frame_defect_max", max_defect);
    let indexed: Vec<(u64, &_)> = paths.iter().enumerate().map(|(i, p)| (i as u64, p)).collect();
    bundle.tables.push(Table { name: "paths".into(), csv: to_csv(|b| write_paths_csv(b, &indexed))? });
    bundle.plots.push(Plot {
        name: "paths".into(),
        title: "first coordinate of recorded paths".into(),
        x_label: "t".into(),
        y_label: "x0".into(),
        series: paths.iter().map(|p| p.states.iter().map(|st| (st.t, st.x[0])).collect()).collect(),
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn couple(
    bundle: &mut ReportBundle,
    flow: &MetricFlow,
    x: &[f64],
    y: &[f64],
    s: f64,
    t: f64,
    mode: crate::coupling::CouplingMode,
    drift_u: crate::coupling::CouplingDrift,
    p: f64,
    mc: &McConfig,
) -> Result<()> {
    let opts = CouplingOptions::new(mode).with_drift(drift_u);
    let ens = simulate_coupling(flow, &point(x), &point(y), s, t, opts, mc)?;
    bundle.push("wasserstein_upper", &json!({ "p": p, "estimate": wasserstein_from(&ens, p)? }));
    bundle.push("coupled_by_t", &json!({ "t": t, "estimate": ens.coupled_by(t)? }));
    bundle.diag("regularized_fraction", ens.regularized_fraction());
    bundle.tables.push(Table { name: "coupling".into(), csv: to_csv(|b| ens.write_csv(b))? });
    let h = (ens.grid_t - ens.grid_s) / ens.steps as f64;
    bundle.plots.push(Plot {
        name: "coupling".into(),
        title: "distance between coupled marginals".into(),
        x_label: "t".into(),
        y_label: "rho".into(),
        series: ens
            .paths
            .iter()
            .map(|p| p.record_steps.iter().zip(&p.rho).map(|(&k, &r)| (ens.grid_s + h * k as f64, r)).collect())
            .collect(),
    });
    Ok(())
}

fn run_check(flow: &MetricFlow, check: &CheckSpec, mc: &McConfig) -> Result<Verdict> {
    match check {
        CheckSpec::Gradient { f, x, s, t, p, k } => {
            verify_gradient_inequality(flow, &f.build(), *s, *t, &point(x), *p, &k.build(flow)?, mc)
        }
        CheckSpec::Entropy { f, x, s, t, p, k } => verify_entropy_bound(flow, &f.build(), *s, *t, &point(x), *p, &k.build(flow)?, mc),
        CheckSpec::Reverse { f, x, s, t, p, k, nested } => {
            verify_reverse_bound_with(flow, &f.build(), *s, *t, &point(x), *p, &k.build(flow)?, mc, nested)
        }
        CheckSpec::Harnack { f, x, y, s, t, p, k } => {
            verify_harnack(flow, &f.build(), *s, *t, &point(x), &point(y), *p, &k.build(flow)?, mc)
        }
        CheckSpec::LogHarnack { f, x, y, s, t, k } => {
            verify_log_harnack(flow, &f.build(), *s, *t, &point(x), &point(y), &k.build(flow)?, mc)
        }
        CheckSpec::Hyperbound { f, x, s, t, q1, r, q2, k, nested } => {
            let kb = k.build(flow)?;
            let cfg = match (r, q2) {
                (Some(r), _) => HyperboundConfig::from_r(*s, *r, *t, *q1, kb)?,
                (None, Some(q2)) => HyperboundConfig::from_exponents(*s, *t, *q1, *q2, kb)?,
                (None, None) => return Err(Error::InvalidArgument("hyperbound needs r or q2".into())),
            };
            verify_hyperbound_with(flow, &f.build(), &point(x), &cfg, mc, nested)
        }
        CheckSpec::Contraction { x, y, s, t, p, k } => verify_contraction(flow, &point(x), &point(y), *s, *t, *p, &k.build(flow)?, mc),
    }
}
