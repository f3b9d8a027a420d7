use crate::render::Table;
use crate::{ClearMethod, Command, FitMode, OracleMode, ReportFormat, RunConfig};
use permclear_core::clearing::{
    certify, clear_barrier, clear_lp, lp_dual_objective, trace_homotopy, CertificationReport,
    ClearingResult, HomotopyTrace,
};
use permclear_core::combinatorics::{bvn_decompose, BvnDecomposition};
use permclear_core::market::{load_market, matrix_from_rows, MarketFormat};
use permclear_core::maxent::{fit_ellipsoid, fit_exact, ml_check, sample, MaxEntModel};
use permclear_core::parallel::Parallelism;
use permclear_core::pipeline::{end_to_end, MaxEntMode, PipelineConfig, PipelineReport, Stage};
use permclear_core::reforacle::{
    decompose_feasibility, oracle_clear_fixed, oracle_clear_proportional, oracle_maxent,
    permanent_by_enumeration, OracleBudget,
};
use permclear_core::{MarketInstance, Matrix, PriceMatrix, Tolerances, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

/// Tolerance on row/column sums when a matrix is read as a price matrix.
const INPUT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Passed,
    CertificationFailed(String),
}

pub struct Output {
    pub text: String,
    pub outcome: Outcome,
}

type CmdResult<T> = Result<T, String>;

trait Report: Serialize {
    fn table(&self) -> String;
}

fn emit<R: Report>(config: &RunConfig, report: &R, outcome: Outcome) -> CmdResult<Output> {
    let text = match config.format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| e.to_string())? + "\n"
        }
        ReportFormat::Table => report.table(),
    };
    Ok(Output { text, outcome })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn tolerances(config: &RunConfig) -> CmdResult<Tolerances> {
    let mut tol = Tolerances::default();
    if let Some(t) = config.tol {
        tol.certification = t;
    }
    tol.validate().map_err(err)?;
    Ok(tol)
}

fn load_instance(path: &Path, theta_scale: Option<f64>, config: &RunConfig) -> CmdResult<MarketInstance> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let mut inst = load_market(BufReader::new(file), MarketFormat::Json)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = theta_scale {
        inst = inst.with_theta_scale(s).map_err(err)?;
    }
    Ok(inst.with_tolerances(tolerances(config)?))
}

fn read_value(path: &Path) -> CmdResult<Value> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

/// A matrix given either bare (`[[..], ..]`) or under a `q`, `limit` or
/// `target` key.
fn read_matrix(path: &Path) -> CmdResult<Matrix> {
    let v = read_value(path)?;
    let inner = match &v {
        Value::Array(_) => &v,
        Value::Object(map) => ["q", "limit", "target"]
            .iter()
            .find_map(|k| map.get(*k))
            .ok_or_else(|| format!("{}: no matrix found", path.display()))?,
        _ => return Err(format!("{}: expected a matrix", path.display())),
    };
    let rows: Vec<Vec<f64>> =
        serde_json::from_value(inner.clone()).map_err(|e| format!("{}: {e}", path.display()))?;
    let m = matrix_from_rows(&rows).map_err(err)?;
    if !m.is_square() || m.nrows() == 0 {
        return Err(format!("{}: expected a nonempty square matrix", path.display()));
    }
    Ok(m)
}

fn read_prices(path: &Path) -> CmdResult<PriceMatrix> {
    PriceMatrix::new(read_matrix(path)?, INPUT_SUM_TOL).map_err(err)
}

/// A model given bare or under a `model` key.
fn read_model(path: &Path) -> CmdResult<MaxEntModel> {
    let v = read_value(path)?;
    let inner = v.get("model").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn execute(config: &RunConfig) -> CmdResult<Output> {
    match &config.command {
        Command::Clear {
            orders,
            theta_scale,
            method,
        } => clear(config, orders, *theta_scale, *method),
        Command::Prices {
            orders,
            theta_scale,
        } => prices(config, orders, *theta_scale),
        Command::Decompose { q } => decompose(config, q),
        Command::Maxent { q, mode, epsilon } => maxent(config, q, *mode, *epsilon),
        Command::Sample { model, count } => sample_cmd(config, model, *count),
        Command::Verify { orders, report } => verify(config, orders, report),
        Command::Oracle { mode, orders, q } => oracle(config, *mode, orders.as_deref(), q.as_deref()),
        Command::Pipeline {
            orders,
            theta_scale,
            mode,
            epsilon,
            count,
        } => pipeline(config, orders, *theta_scale, *mode, *epsilon, *count),
    }
}

fn certification_outcome(report: &CertificationReport) -> Outcome {
    if report.passed {
        return Outcome::Passed;
    }
    let mut why = vec![format!(
        "kkt {:.3e}, parimutuel {:.3e}, gap {:.3e}, tolerance {:.1e}",
        report.kkt_max_residual, report.parimutuel_residual, report.duality_gap, report.tolerance
    )];
    for v in &report.consistency_violations {
        why.push(format!("order {} {:?} by {:.3e}", v.order_id, v.class, v.amount));
    }
    Outcome::CertificationFailed(why.join("; "))
}

fn certification_rows(t: &mut Table, c: &CertificationReport) {
    t.row("certified", c.passed)
        .num("kkt residual", c.kkt_max_residual)
        .num("parimutuel residual", c.parimutuel_residual)
        .num("doubly stochastic residual", c.doubly_stochastic_residual)
        .num("duality gap", c.duality_gap)
        .row("consistency violations", c.consistency_violations.len());
    for v in &c.consistency_violations {
        t.line(format!("  {} {:?} {:.3e}", v.order_id, v.class, v.amount));
    }
}

#[derive(Serialize, Deserialize)]
struct ClearReport {
    schema_version: u32,
    seed: u64,
    theta_scale: f64,
    clearing: ClearingResult,
    certification: CertificationReport,
    /// Worst-case payout to the submitted orders alone, starting orders excluded.
    order_payout: f64,
    worst_case_profit: f64,
}

impl Report for ClearReport {
    fn table(&self) -> String {
        let c = &self.clearing;
        let mut t = Table::new("clearing");
        t.row("method", format!("{:?}", c.method).to_lowercase())
            .num("worst-case payout r", c.r)
            .num("payout to orders", self.order_payout)
            .num("worst-case profit", self.worst_case_profit)
            .num("objective", c.objective_primal)
            .row("iterations", c.iterations);
        t.matrix("prices Q", c.q.matrix());
        t.line(format!("{:<16} {:>12} {:>12} {:>12}  branch", "order", "filled", "limit", "unit price"));
        for o in &self.certification.orders {
            t.line(format!(
                "{:<16} {:>12.6} {:>12.6} {:>12.6}  {:?}",
                o.id, o.x, o.limit_price, o.unit_price, o.branch
            ));
        }
        certification_rows(&mut t, &self.certification);
        t.finish()
    }
}

fn clear(config: &RunConfig, orders: &Path, theta_scale: Option<f64>, method: ClearMethod) -> CmdResult<Output> {
    let inst = load_instance(orders, theta_scale, config)?;
    let clearing = match method {
        ClearMethod::Barrier => clear_barrier(&inst),
        ClearMethod::Lp => clear_lp(&inst),
    }
    .map_err(err)?;
    let certification = certify(&inst, &clearing).map_err(err)?;
    let outcome = certification_outcome(&certification);
    let order_payout = match method {
        ClearMethod::Barrier => clearing.r - inst.theta().sum(),
        ClearMethod::Lp => clearing.r,
    };
    let report = ClearReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        theta_scale: theta_scale.unwrap_or(1.0),
        order_payout,
        worst_case_profit: clearing.worst_case_profit(&inst),
        clearing,
        certification,
    };
    emit(config, &report, outcome)
}

#[derive(Serialize)]
struct PricesReport {
    schema_version: u32,
    seed: u64,
    limit: PriceMatrix,
    trace: HomotopyTrace,
    tail_decreasing: bool,
    lp_objective: f64,
    limit_dual_objective: f64,
}

impl Report for PricesReport {
    fn table(&self) -> String {
        let mut t = Table::new("limit prices");
        t.matrix("Q", self.limit.matrix());
        for (s, d) in self.trace.scales.iter().skip(1).zip(&self.trace.differences) {
            t.line(format!("  scale {s:>8.1e}  step {d:.3e}"));
        }
        t.row("differences decreasing", self.tail_decreasing)
            .num("LP objective", self.lp_objective)
            .num("dual objective at limit", self.limit_dual_objective)
            .finish()
    }
}

fn prices(config: &RunConfig, orders: &Path, theta_scale: Option<f64>) -> CmdResult<Output> {
    let inst = load_instance(orders, theta_scale, config)?;
    let trace = trace_homotopy(&inst, &inst.tolerances.homotopy_schedule, Parallelism::Parallel)
        .map_err(err)?;
    let lp = clear_lp(&inst).map_err(err)?;
    let limit = trace.limit().clone();
    let report = PricesReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        tail_decreasing: trace.tail_decreasing(3),
        lp_objective: lp.objective_primal,
        limit_dual_objective: lp_dual_objective(&inst, &limit),
        limit,
        trace,
    };
    let gap = (report.limit_dual_objective - report.lp_objective).abs();
    let outcome = if !report.tail_decreasing {
        Outcome::CertificationFailed("homotopy differences are not decreasing".into())
    } else if gap > 1e-5 {
        Outcome::CertificationFailed(format!("limit prices miss the LP optimum by {gap:.3e}"))
    } else {
        Outcome::Passed
    };
    emit(config, &report, outcome)
}

#[derive(Serialize)]
struct DecomposeReport {
    schema_version: u32,
    seed: u64,
    n: usize,
    decomposition: BvnDecomposition,
    reconstruction_residual: f64,
    term_bound: usize,
}

impl Report for DecomposeReport {
    fn table(&self) -> String {
        let mut t = Table::new("Birkhoff-von Neumann decomposition");
        for term in &self.decomposition.terms {
            t.line(format!("  {:>10.6}  {:?}", term.weight, term.outcome.one_based()));
        }
        t.row("terms", self.decomposition.terms.len())
            .row("term bound", self.term_bound)
            .num("reconstruction residual", self.reconstruction_residual)
            .finish()
    }
}

fn decompose(config: &RunConfig, q: &Path) -> CmdResult<Output> {
    let q = read_prices(q)?;
    let n = q.n();
    let decomposition = bvn_decompose(q.matrix(), 1e-9).map_err(err)?;
    let report = DecomposeReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        n,
        reconstruction_residual: (decomposition.reconstruct(n) - q.matrix()).amax(),
        term_bound: n * n - 2 * n + 2,
        decomposition,
    };
    let outcome = if report.reconstruction_residual > 1e-9 {
        Outcome::CertificationFailed(format!(
            "reconstruction residual {:.3e}",
            report.reconstruction_residual
        ))
    } else {
        Outcome::Passed
    };
    emit(config, &report, outcome)
}

#[derive(Serialize)]
struct MaxEntReport {
    schema_version: u32,
    seed: u64,
    model: MaxEntModel,
    #[serde(with = "permclear_core::market::rows")]
    marginals: Matrix,
    entropy: f64,
    ml_residual: f64,
    /// Largest violation of `(1 − ε) Q ≤ marginals ≤ Q` (ellipsoid fits only).
    bound_violation: Option<f64>,
}

impl Report for MaxEntReport {
    fn table(&self) -> String {
        let f = &self.model.fit;
        let mut t = Table::new("maximum-entropy model");
        t.row("method", format!("{:?}", f.method).to_lowercase())
            .num("entropy", self.entropy)
            .num("ML residual", self.ml_residual)
            .num("marginal residual", f.marginal_residual)
            .row("iterations", f.iterations);
        if let Some(v) = self.bound_violation {
            t.num("bound violation", v);
        }
        t.matrix("Y", &self.model.y).matrix("marginals", &self.marginals).finish()
    }
}

fn maxent(config: &RunConfig, q: &Path, mode: FitMode, epsilon: f64) -> CmdResult<Output> {
    let q = read_prices(q)?;
    let tol = tolerances(config)?.certification;
    let model = match mode {
        FitMode::Exact => fit_exact(&q),
        FitMode::Ellipsoid => fit_ellipsoid(&q, epsilon),
    }
    .map_err(err)?
    .canonicalized();
    let marginals = model.marginals().map_err(err)?;
    let ml_residual = ml_check(&model, &q).map_err(err)?;
    let bound_violation = (mode == FitMode::Ellipsoid).then(|| {
        marginals
            .iter()
            .zip(q.matrix().iter())
            .map(|(f, q)| ((1.0 - epsilon) * q - f).max(f - q).max(0.0))
            .fold(0.0, f64::max)
    });
    let outcome = match bound_violation {
        Some(v) if v > tol => Outcome::CertificationFailed(format!("marginal bounds violated by {v:.3e}")),
        None if ml_residual > tol => Outcome::CertificationFailed(format!("ML residual {ml_residual:.3e}")),
        _ => Outcome::Passed,
    };
    let report = MaxEntReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        entropy: model.entropy().map_err(err)?,
        model,
        marginals,
        ml_residual,
        bound_violation,
    };
    emit(config, &report, outcome)
}

#[derive(Serialize)]
struct SampleLine {
    schema_version: u32,
    seed: u64,
    index: usize,
    /// One-based position of each candidate.
    outcome: Vec<usize>,
}

fn sample_cmd(config: &RunConfig, model: &Path, count: usize) -> CmdResult<Output> {
    let model = read_model(model)?;
    let draws = sample(&model, count, config.seed).map_err(err)?;
    let mut text = String::new();
    for (index, d) in draws.iter().enumerate() {
        match config.format {
            ReportFormat::Json => {
                let line = SampleLine {
                    schema_version: SCHEMA_VERSION,
                    seed: config.seed,
                    index,
                    outcome: d.one_based(),
                };
                text += &serde_json::to_string(&line).map_err(err)?;
            }
            ReportFormat::Table => {
                text += &format!("{index:>6}  {:?}", d.one_based());
            }
        }
        text.push('\n');
    }
    Ok(Output {
        text,
        outcome: Outcome::Passed,
    })
}

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    seed: u64,
    certification: CertificationReport,
}

impl Report for VerifyReport {
    fn table(&self) -> String {
        let mut t = Table::new("verification");
        certification_rows(&mut t, &self.certification);
        t.finish()
    }
}

fn verify(config: &RunConfig, orders: &Path, report: &Path) -> CmdResult<Output> {
    let v = read_value(report)?;
    let theta_scale = v.get("theta_scale").and_then(Value::as_f64);
    let inst = load_instance(orders, theta_scale, config)?;
    let inner = v.get("clearing").cloned().unwrap_or(v);
    let clearing: ClearingResult =
        serde_json::from_value(inner).map_err(|e| format!("{}: {e}", report.display()))?;
    let certification = certify(&inst, &clearing).map_err(err)?;
    let outcome = certification_outcome(&certification);
    let report = VerifyReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        certification,
    };
    emit(config, &report, outcome)
}

#[derive(Serialize)]
struct OracleReport {
    schema_version: u32,
    seed: u64,
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permanent: Option<f64>,
    /// Outcomes with nonzero weight, one-based, with their weight.
    distribution: Vec<(Vec<usize>, f64)>,
}

impl Report for OracleReport {
    fn table(&self) -> String {
        let mut t = Table::new(&format!("oracle: {}", self.mode));
        for (k, v) in [
            ("objective", self.objective),
            ("worst-case payout r", self.r),
            ("entropy", self.entropy),
            ("permanent", self.permanent),
        ] {
            if let Some(v) = v {
                t.num(k, v);
            }
        }
        if let Some(x) = &self.x {
            t.row("x", format!("{x:?}"));
        }
        for (o, w) in &self.distribution {
            t.line(format!("  {w:>10.6}  {o:?}"));
        }
        t.finish()
    }
}

fn oracle(config: &RunConfig, mode: OracleMode, orders: Option<&Path>, q: Option<&Path>) -> CmdResult<Output> {
    let budget = OracleBudget::default();
    let need_orders = || orders.ok_or_else(|| "this oracle needs --orders".to_string());
    let need_q = || q.ok_or_else(|| "this oracle needs --q".to_string());
    let mut report = OracleReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        mode: format!("{mode:?}").to_lowercase(),
        objective: None,
        x: None,
        r: None,
        entropy: None,
        permanent: None,
        distribution: Vec::new(),
    };
    let keep = |outcomes: &[permclear_core::PermutationOutcome], p: &[f64]| {
        outcomes
            .iter()
            .zip(p)
            .filter(|(_, w)| **w > 1e-12)
            .map(|(o, w)| (o.one_based(), *w))
            .collect()
    };
    match mode {
        OracleMode::Proportional | OracleMode::Fixed => {
            let inst = load_instance(need_orders()?, None, config)?;
            let res = if mode == OracleMode::Fixed {
                oracle_clear_fixed(&inst, &budget)
            } else {
                oracle_clear_proportional(&inst, &budget)
            }
            .map_err(err)?;
            report.objective = Some(res.objective);
            report.r = Some(res.r);
            report.distribution = keep(&res.outcomes, &res.p);
            report.x = Some(res.x);
        }
        OracleMode::Maxent | OracleMode::Decompose => {
            let q = read_prices(need_q()?)?;
            let d = if mode == OracleMode::Maxent {
                oracle_maxent(&q, &budget)
            } else {
                decompose_feasibility(&q, &budget)
            }
            .map_err(err)?;
            report.entropy = Some(d.entropy());
            report.distribution = keep(&d.outcomes, &d.p);
        }
        OracleMode::Permanent => {
            let m = read_matrix(need_q()?)?;
            report.permanent = Some(permanent_by_enumeration(&m, &budget).map_err(err)?);
        }
    }
    emit(config, &report, Outcome::Passed)
}

impl Report for PipelineReport {
    fn table(&self) -> String {
        let mut t = Table::new("pipeline");
        t.row("n", self.n)
            .row("passed", self.passed)
            .num("worst-case payout r", self.clearing.r)
            .row("certified", self.certification.passed)
            .row("homotopy decreasing", self.homotopy.tail_decreasing)
            .num("LP objective", self.homotopy.lp_objective)
            .num("dual objective at limit", self.homotopy.limit_dual_objective)
            .row("BvN terms", self.decomposition.decomposition.terms.len());
        t.matrix("limit prices", self.homotopy.trace.limit().matrix());
        match &self.maxent {
            Stage::Done(m) => {
                t.num("max-entropy entropy", m.entropy).num("ML residual", m.ml_residual);
            }
            Stage::Skipped { reason } => {
                t.row("max-entropy", format!("skipped ({reason})"));
            }
        }
        if let Stage::Done(s) = &self.samples {
            for (k, d) in s.iter().enumerate() {
                t.line(format!("  sample {k:>3}  {d:?}"));
            }
        }
        t.finish()
    }
}

fn pipeline(
    config: &RunConfig,
    orders: &Path,
    theta_scale: Option<f64>,
    mode: FitMode,
    epsilon: f64,
    count: usize,
) -> CmdResult<Output> {
    let inst = load_instance(orders, theta_scale, config)?;
    let cfg = PipelineConfig {
        seed: config.seed,
        maxent_mode: match mode {
            FitMode::Exact => MaxEntMode::Exact,
            FitMode::Ellipsoid => MaxEntMode::Ellipsoid,
        },
        epsilon,
        samples: count,
        parallelism: Parallelism::Parallel,
    };
    let report = end_to_end(&inst, &cfg).map_err(err)?;
    let outcome = if report.passed {
        Outcome::Passed
    } else {
        Outcome::CertificationFailed("one or more pipeline checks failed".into())
    };
    emit(config, &report, outcome)
}
