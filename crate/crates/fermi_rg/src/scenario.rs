//! Scenario runners with a fixed exit-code contract: 0 ok, 1 configuration,
//! 2 budget or identity violation, 3 numerical tolerance.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FamilySpec, HoelderSpec, JumpSweepSpec, LadderDemoSpec, RunConfig};
use crate::emit::{diagnostic, Table};
use crate::error::{Error, Result};
use crate::hoelder::{dyadic_pairs, empirical_exponent, report_json, sine_family, verify_family, FamilyMember};
use crate::ladder_engine::{
    d7_form, delta_ladder_telescope, ladder_recursion, ladder_values_table, random_family, CountertermFamily, LadderConfig,
    LadderGrid, Shift,
};
use crate::model_scales::{QuadraticModel, ScaleParams, Scales};
use crate::occupation::{fermi_sweep, GProfile, LinearSelfEnergy, SweepConfig};
use crate::quadrature::QuadConfig;
use crate::selfenergy::{check_q_budget, off_shell_samples, proper_sigma, sigma_k0_derivative, ScaleFamily};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    JumpSweep,
    LadderDemo,
    Resum,
    HoelderCheck,
    NormBudget,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::JumpSweep => "jump-sweep",
            ScenarioKind::LadderDemo => "ladder-demo",
            ScenarioKind::Resum => "resum",
            ScenarioKind::HoelderCheck => "hoelder-check",
            ScenarioKind::NormBudget => "norm-budget",
        }
    }

    /// Column schema of the primary CSV output; empty for JSON reports.
    pub fn schema(&self) -> &'static [&'static str] {
        match self {
            ScenarioKind::JumpSweep => &["theta", "n_in", "n_out", "jump_measured", "jump_predicted", "abs_err", "flag"],
            ScenarioKind::LadderDemo => &[
                "j",
                "ladder_sup",
                "closed_form_residual",
                "inversion_residual",
                "delta_sup",
                "telescope_residual",
            ],
            ScenarioKind::Resum => &[
                "k0", "k1", "k2", "e", "p_re", "p_im", "q_re", "q_im", "sigma_re", "sigma_im", "dsigma_re", "dsigma_im",
            ],
            ScenarioKind::NormBudget => &["i", "l", "d0", "d1", "d2", "measured", "allowed", "ratio", "pass"],
            ScenarioKind::HoelderCheck => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSpec {
    JumpSweep(JumpSweepSpec),
    LadderDemo(LadderDemoSpec),
    Resum { family: FamilySpec, check_budget: bool },
    NormBudget(FamilySpec),
    HoelderCheck(HoelderSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub params: ScaleParams,
    pub seed: u64,
    pub spec: ScenarioSpec,
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self.spec {
            ScenarioSpec::JumpSweep(_) => ScenarioKind::JumpSweep,
            ScenarioSpec::LadderDemo(_) => ScenarioKind::LadderDemo,
            ScenarioSpec::Resum { .. } => ScenarioKind::Resum,
            ScenarioSpec::NormBudget(_) => ScenarioKind::NormBudget,
            ScenarioSpec::HoelderCheck(_) => ScenarioKind::HoelderCheck,
        }
    }

    /// Scenario from the section of `kind` in a parsed config, or its defaults.
    pub fn from_config(cfg: &RunConfig, kind: ScenarioKind, seed: u64) -> Self {
        let spec = match kind {
            ScenarioKind::JumpSweep => ScenarioSpec::JumpSweep(cfg.jump_sweep.clone().unwrap_or_default()),
            ScenarioKind::LadderDemo => ScenarioSpec::LadderDemo(cfg.ladder_demo.clone().unwrap_or_default()),
            ScenarioKind::Resum => ScenarioSpec::Resum {
                family: cfg.resum.clone().unwrap_or_default(),
                check_budget: false,
            },
            ScenarioKind::NormBudget => ScenarioSpec::NormBudget(cfg.norm_budget.clone().unwrap_or_default()),
            ScenarioKind::HoelderCheck => ScenarioSpec::HoelderCheck(cfg.hoelder_check.clone().unwrap_or_default()),
        };
        Scenario {
            params: cfg.params.clone(),
            seed: cfg.seed.unwrap_or(seed),
            spec,
        }
    }
}

/// Result of one scenario: primary output, named side outputs, stdout summary
/// and failure records.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Outcome {
    pub exit_code: i32,
    pub primary: String,
    /// Table behind a CSV `primary`, for alternative renderings.
    pub table: Option<Table>,
    pub extra: Vec<(String, String)>,
    pub summary: String,
    pub diagnostics: Vec<String>,
}

impl Outcome {
    fn fail(&mut self, kind: &str, message: String, code: i32) {
        self.diagnostics.push(diagnostic(kind, &message, code));
        self.exit_code = self.exit_code.max(code);
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::ScaleRange { .. } | Error::Io(_) | Error::NotInSupport => EXIT_CONFIG,
        Error::Hypothesis(_) | Error::DivergentSeries(_) | Error::LadderDivergence(_) => EXIT_VIOLATION,
        Error::NonFinite(_)
        | Error::Singular(_)
        | Error::Conditioning(_)
        | Error::Resolution(_)
        | Error::Quadrature(_)
        | Error::Extrapolation(_)
        | Error::DegenerateFit(_) => EXIT_TOLERANCE,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::ScaleRange { .. } => "scale-range",
        Error::NotInSupport => "not-in-support",
        Error::NonFinite(_) => "non-finite",
        Error::Hypothesis(_) => "hypothesis",
        Error::DivergentSeries(_) => "divergent-series",
        Error::Singular(_) => "singular",
        Error::Conditioning(_) => "conditioning",
        Error::Resolution(_) => "resolution",
        Error::LadderDivergence(_) => "ladder-divergence",
        Error::Quadrature(_) => "quadrature",
        Error::Extrapolation(_) => "extrapolation",
        Error::DegenerateFit(_) => "degenerate-fit",
        Error::Config(_) => "config",
        Error::Shape(_) => "shape",
        Error::Io(_) => "io",
    }
}

pub fn run(s: &Scenario) -> Outcome {
    let res = s.params.validate().and_then(|_| match &s.spec {
        ScenarioSpec::JumpSweep(spec) => run_jump_sweep(spec),
        ScenarioSpec::LadderDemo(spec) => run_ladder_demo(&s.params, spec, s.seed),
        ScenarioSpec::Resum { family, check_budget } => run_resum(&s.params, family, *check_budget),
        ScenarioSpec::NormBudget(spec) => run_norm_budget(&s.params, spec),
        ScenarioSpec::HoelderCheck(spec) => run_hoelder(spec, s.seed),
    });
    match res {
        Ok(o) => o,
        Err(e) => {
            let mut o = Outcome::default();
            o.fail(error_kind(&e), e.to_string(), exit_code_for(&e));
            o
        }
    }
}

fn run_jump_sweep(spec: &JumpSweepSpec) -> Result<Outcome> {
    let model = LinearSelfEnergy {
        lambda: spec.lambda,
        profile: GProfile::parse(&spec.g_profile)?,
    };
    if spec.n_points == 0 || spec.deltas.len() < 2 {
        return Err(Error::Config("jump-sweep needs nPoints >= 1 and at least two deltas".into()));
    }
    model.validate().map_err(|e| Error::Config(e.to_string()))?;
    let cfg = SweepConfig {
        n_points: spec.n_points,
        deltas: spec.deltas.clone(),
        tolerance: spec.tolerance,
    };
    let table = fermi_sweep(&QuadraticModel::default(), Arc::new(model), &cfg, QuadConfig::default())?;
    let mut out = Outcome {
        primary: table.to_csv()?,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for r in &table.rows {
        let flag = r[6].as_text().unwrap_or("");
        let err = r[5].as_f64().unwrap_or(f64::NAN);
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        if flag != "ok" {
            let theta = r[0].as_f64().unwrap_or(f64::NAN);
            out.fail("tolerance", format!("theta {theta}: {flag}, |jump error| {err}"), EXIT_TOLERANCE);
        }
    }
    out.summary = format!("points {} max_abs_err {worst:e}", table.rows.len());
    out.table = Some(table);
    Ok(out)
}

/// Ladder grid, rung family and counterterms of the ladder demo.
pub fn ladder_setup(
    params: &ScaleParams,
    spec: &LadderDemoSpec,
    seed: u64,
) -> Result<(LadderGrid, std::collections::BTreeMap<i32, crate::kernel_algebra::Kernel4>, CountertermFamily, i32)> {
    if spec.scales < 1 {
        return Err(Error::Config("ladder-demo needs at least one scale".into()));
    }
    let mut params = params.clone();
    let top = params.j0 + spec.scales - 1;
    params.jmax = params.jmax.max(top + 1);
    let scales = Scales::quadratic(params)?;
    let grid = LadderGrid::new(scales, spec.grid, top)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_family(&grid, top, spec.amplitude, &mut rng)?;
    let p = CountertermFamily::geometric(&grid.scales, spec.counterterm_total);
    Ok((grid, f, p, top))
}

fn run_ladder_demo(params: &ScaleParams, spec: &LadderDemoSpec, seed: u64) -> Result<Outcome> {
    let (grid, f, p, top) = ladder_setup(params, spec, seed)?;
    let cfg = LadderConfig {
        lmax: spec.lmax,
        ..Default::default()
    };
    let j0 = grid.scales.params.j0;
    let v = p.total(&grid.scales);
    let compound = ladder_recursion(&grid, &f, &Shift::Compound(v.clone()), top, &cfg)?;
    let closed = d7_form(&grid, &f, &v, top, &cfg)?;
    let mut table = Table::new(ScenarioKind::LadderDemo.schema());
    let mut out = Outcome::default();
    for j in j0..=top {
        let tel = delta_ladder_telescope(&grid, &p, &f, j, &cfg)?;
        let l = &compound.ladders[&(j + 1)];
        let closed_res = l.max_abs_diff(&closed[&(j + 1)])?;
        let inv = [
            l.inversion_residual(),
            closed[&(j + 1)].inversion_residual(),
            tel.iterated.ladders[&(j + 1)].inversion_residual(),
            tel.compound.ladders[&(j + 1)].inversion_residual(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        table.push(vec![
            j.into(),
            l.sup_norm().into(),
            closed_res.into(),
            inv.into(),
            tel.delta_norms[&j].into(),
            tel.residual.into(),
        ])?;
        for (name, val) in [("closed-form", closed_res), ("inversion", inv), ("telescope", tel.residual)] {
            if !(val <= spec.tolerance) {
                out.fail("identity", format!("scale {j}: {name} residual {val:e}"), EXIT_VIOLATION);
            }
        }
    }
    let last = &compound.ladders[&(top + 1)];
    out.extra.push(("values".into(), ladder_values_table(&grid, last)?.to_csv()?));
    out.summary = format!("scales {j0}..={top} grid {} lmax {}", grid.n, spec.lmax);
    out.primary = table.to_csv()?;
    out.table = Some(table);
    Ok(out)
}

/// Family from a descriptor: `saturating`, `saturating:<factor>`, `zero` or a file.
pub fn load_family(params: &ScaleParams, spec: &FamilySpec) -> Result<ScaleFamily> {
    let top = spec.top.unwrap_or(params.jmax.min(params.j0 + 6));
    if top < params.j0 || top > params.jmax {
        return Err(Error::Config(format!("family top {top} outside [{}, {}]", params.j0, params.jmax)));
    }
    let d = spec.family.trim();
    if d == "zero" {
        return Ok(ScaleFamily::zero());
    }
    if d == "saturating" {
        return Ok(ScaleFamily::saturating(params, top, 1.0));
    }
    if let Some(f) = d.strip_prefix("saturating:") {
        let factor: f64 = f.parse().map_err(|_| Error::Config(format!("bad family factor {f}")))?;
        return Ok(ScaleFamily::saturating(params, top, factor));
    }
    let path = Path::new(d);
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("family {d}: {e}")))?;
    ScaleFamily::from_toml(&text)
}

fn run_resum(params: &ScaleParams, spec: &FamilySpec, check_budget: bool) -> Result<Outcome> {
    let family = load_family(params, spec)?;
    let scales = Scales::quadratic(params.clone())?;
    let samples = off_shell_samples(&scales, spec.samples);
    let mut table = Table::new(ScenarioKind::Resum.schema());
    for k in &samples {
        let e = scales.model.e(k.kvec);
        let p = family.resum_p(&scales, *k);
        let q = family.resum_q(&scales, *k, None);
        let sigma = proper_sigma(k.k0, e, p, q)?;
        let ds = sigma_k0_derivative(k.k0, e, p, q, family.dp_dk0(&scales, *k), family.dq_dk0(&scales, *k))?;
        table.push(vec![
            k.k0.into(),
            k.kvec[0].into(),
            k.kvec[1].into(),
            e.into(),
            p.re.into(),
            p.im.into(),
            q.re.into(),
            q.im.into(),
            sigma.re.into(),
            sigma.im.into(),
            ds.re.into(),
            ds.im.into(),
        ])?;
    }
    let (rp, rq) = family.resum_bound_ratios(&scales, &samples);
    let mut out = Outcome {
        primary: table.to_csv()?,
        table: Some(table),
        summary: format!("samples {} p_bound_ratio {rp:e} q_bound_ratio {rq:e}", samples.len()),
        ..Default::default()
    };
    if check_budget {
        let report = check_q_budget(&family, &scales)?;
        out.extra.push(("budget".into(), report.table()?.to_csv()?));
        out.summary.push_str(&format!(" budget_max_ratio {:e}", report.max_ratio));
        budget_failures(&mut out, &report);
    }
    Ok(out)
}

fn budget_failures(out: &mut Outcome, report: &crate::selfenergy::BudgetReport) {
    if let Some(r) = report.rows.iter().filter(|r| !r.pass).max_by(|a, b| a.ratio.total_cmp(&b.ratio)) {
        let n = report.rows.iter().filter(|r| !r.pass).count();
        out.fail(
            "budget",
            format!(
                "{n} entries over budget; worst i {} l {} delta {:?} ratio {:e}",
                r.i, r.l, r.delta, r.ratio
            ),
            EXIT_VIOLATION,
        );
    }
    if report.reality_residual > 1e-12 {
        out.fail(
            "budget",
            format!("reflection residual {:e}", report.reality_residual),
            EXIT_VIOLATION,
        );
    }
}

fn run_norm_budget(params: &ScaleParams, spec: &FamilySpec) -> Result<Outcome> {
    let family = load_family(params, spec)?;
    let scales = Scales::quadratic(params.clone())?;
    let report = check_q_budget(&family, &scales)?;
    let table = report.table()?;
    let mut out = Outcome {
        primary: table.to_csv()?,
        table: Some(table),
        summary: format!("entries {} max_ratio {:e}", report.rows.len(), report.max_ratio),
        ..Default::default()
    };
    budget_failures(&mut out, &report);
    Ok(out)
}

fn run_hoelder(spec: &HoelderSpec, seed: u64) -> Result<Outcome> {
    let b = spec.bounds();
    b.validate()?;
    if spec.m_max <= spec.m_min {
        return Err(Error::Config("hoelder-check needs mMax > mMin".into()));
    }
    let pairs = dyadic_pairs(spec.m_min, spec.m_max, spec.per_m, seed);
    let family = sine_family(&b, 2f64.powi(-(spec.m_max as i32)));
    let report = verify_family(&b, &family, &pairs)?;
    let f = |t: f64| family.iter().map(|m| m.value(t)).sum::<f64>();
    let fit = empirical_exponent(&f, &pairs)?;
    let mut out = Outcome {
        primary: report_json(&report, Some(&fit)),
        summary: format!("exponent {} fitted {} constant {}", report.exponent, fit.slope, report.constant),
        ..Default::default()
    };
    if !report.hypotheses_hold {
        out.fail(
            "hypothesis",
            format!("scale bounds violated, ratio {:e}", report.hypothesis_ratio),
            EXIT_VIOLATION,
        );
    } else if let Some(r) = report.max_ratio.filter(|r| *r > 1.0) {
        out.fail("certificate", format!("Hoelder ratio {r:e} exceeds 1"), EXIT_VIOLATION);
    }
    if (fit.slope - report.exponent).abs() > spec.exponent_tolerance {
        out.fail(
            "tolerance",
            format!("fitted exponent {} vs {}", fit.slope, report.exponent),
            EXIT_TOLERANCE,
        );
    }
    Ok(out)
}
