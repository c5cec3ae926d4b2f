use crate::report::{digest, Residual, RunReport};
use crate::{Cli, Command, EtfCommand, OptArgs, Verdict};
use anyhow::{Context, Result};
use projconst::constants::{delta_bound, gerzon_bound, rescale_constant, welch_angle};
use projconst::etf::parse_tag;
use projconst::geometry::{
    absconv_contains, extremal_family, inclusion_check, minimal_generator_count, norm_ratio, sandwich_test,
    strictness_witness_with, zonotope_contains, Certificate, DualBallSpec, SandwichSide, ZonotopeSpec,
    WITNESS_SAMPLES,
};
use projconst::io;
use projconst::optimize::{divisibility_check, maximize_lambda_rel, mu, OptResult, OptimizerConfig};
use projconst::projconst::{cm_build, cm_verify, embed_norm, min_projection_lp, min_projection_program};
use projconst::{build_maximal_etf, verify_etf, Error, KMatrix, MaximalETF, ScalarField, ToleranceConfig};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// Collects the human summary and the report fields of one command.
struct Out {
    text: String,
    results: Map<String, Value>,
    residuals: Map<String, Value>,
    inputs: Vec<Vec<u8>>,
    seed: Option<u64>,
    verdict: Verdict,
}

impl Out {
    fn new() -> Self {
        Out {
            text: String::new(),
            results: Map::new(),
            residuals: Map::new(),
            inputs: Vec::new(),
            seed: None,
            verdict: Verdict::Ok,
        }
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key:<24} {value}");
    }

    fn set(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    /// Records a residual; a value above its tolerance fails the run.
    fn check(&mut self, key: &str, value: f64, tolerance: f64) -> bool {
        let ok = value <= tolerance;
        self.residuals.insert(
            key.to_string(),
            serde_json::to_value(Residual { value, tolerance }).expect("plain struct"),
        );
        self.line(key, format!("{value:.3e} (tol {tolerance:.0e}) {}", if ok { "ok" } else { "FAIL" }));
        if !ok {
            self.verdict = Verdict::Failed;
        }
        ok
    }

    fn fail(&mut self) {
        self.verdict = Verdict::Failed;
    }

    fn read(&mut self, path: &Path) -> Result<Value> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Parse(format!("{}: not UTF-8", path.display())))?;
        self.inputs.push(bytes);
        Ok(io::parse_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?)
    }
}

fn seed_or_env(seed: Option<u64>) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var("PROJCONST_SEED") {
        Ok(v) => Ok(v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("PROJCONST_SEED={v:?} is not an integer")))?),
        Err(_) => Ok(0),
    }
}

fn parse_field(s: &str) -> Result<ScalarField> {
    Ok(ScalarField::parse(s)?)
}

fn load_etf(tag: &str) -> Result<MaximalETF> {
    let (field, n) = parse_tag(tag)?;
    Ok(build_maximal_etf(field, n)?)
}

fn fmt_scalar(z: projconst::Scalar, field: ScalarField) -> String {
    match field {
        ScalarField::Real => format!("{:>10.6}", z.re),
        ScalarField::Complex => format!("{:>9.5}{:+.5}i", z.re, z.im),
    }
}

fn fmt_matrix(m: &KMatrix) -> String {
    let mut s = String::new();
    for row in m.to_rows() {
        let cells: Vec<String> = row.iter().map(|&z| fmt_scalar(z, m.field())).collect();
        let _ = writeln!(s, "  {}", cells.join(" "));
    }
    s
}

fn certificate_json(c: &Certificate) -> Value {
    match c {
        Certificate::Membership { coefficients, residual } => json!({
            "kind": "membership",
            "coefficients": coefficients.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
            "residual": residual,
        }),
        Certificate::Separation { functional, margin } => json!({
            "kind": "separation",
            "functional": io::vector_to_json(functional, functional.field()),
            "margin": margin,
        }),
    }
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<Verdict> {
    let tol = ToleranceConfig::new(cli.residual_tol, cli.identity_tol, cli.lp_tol)?;
    let start = Instant::now();
    let mut out = Out::new();
    dispatch(&cli.command, &tol, &mut out)?;
    let elapsed = start.elapsed();

    // report-only flags do not change the digest
    let mut words = Vec::new();
    let mut skip = false;
    for a in &argv {
        if skip {
            skip = false;
            continue;
        }
        match a.as_str() {
            "--json" | "--timing" => {}
            "--report" => skip = true,
            s if s.starts_with("--report=") => {}
            _ => words.push(a.clone()),
        }
    }
    let report = RunReport {
        tool: "projconst",
        version: env!("CARGO_PKG_VERSION"),
        inputs_digest: digest(&words, &out.inputs),
        command: words,
        seed: out.seed,
        status: match out.verdict {
            Verdict::Ok => "ok",
            Verdict::Failed => "verification_failed",
        },
        results: Value::Object(std::mem::take(&mut out.results)),
        residuals: std::mem::take(&mut out.residuals),
        timing_ms: cli.timing.then_some(elapsed.as_secs_f64() * 1e3),
    };
    let report_json = serde_json::to_value(&report)?;
    if let Some(path) = &cli.report {
        io::save_json(path, &report_json)?;
    }
    if cli.json {
        print!("{}", io::to_canonical_string(&report_json));
    } else {
        print!("{}", out.text);
        if let Some(t) = report.timing_ms {
            println!("{:<24} {t:.1} ms", "time");
        }
    }
    Ok(out.verdict)
}

fn dispatch(cmd: &Command, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    match cmd {
        Command::Constants(a) => constants(&a.field, a.n, out),
        Command::Etf(EtfCommand::Build { tag, out: path }) => etf_build(tag, path.as_deref(), tol, out),
        Command::Etf(EtfCommand::Verify { input }) => etf_verify(input, tol, out),
        Command::Phi { input } => phi(input, tol, out),
        Command::EqualityCheck { input } => equality_check(input, tol, out),
        Command::Maximize(a) => optimize(a, false, out),
        Command::Mu(a) => optimize(a, true, out),
        Command::Divisibility(a) => divisibility(a, out),
        Command::Contains { etf, point, set } => contains(etf, point, set, tol, out),
        Command::Sandwich { ball, etf, transform } => sandwich(ball, etf, transform.as_deref(), tol, out),
        Command::Family { etf, count, seed, out_dir } => family(etf, *count, *seed, out_dir.as_deref(), tol, out),
        Command::Minproj { input, dump_lp } => minproj(input, dump_lp.as_deref(), tol, out),
        Command::Cm { etf, coeffs } => cm(etf, coeffs.as_deref(), tol, out),
        Command::Inclusion { etf } => inclusion(etf, tol, out),
        Command::Witness { etf, samples, seed } => witness(etf, *samples, *seed, tol, out),
    }
}

fn constants(field: &str, n: usize, out: &mut Out) -> Result<()> {
    let field = parse_field(field)?;
    let d = gerzon_bound(field, n)?;
    let delta = delta_bound(field, n)?;
    out.line("field", field.symbol());
    out.line("n", n);
    out.line("d", d);
    out.set("field", json!(field.symbol()));
    out.set("n", json!(n));
    out.set("d", json!(d));
    out.line("delta", format!("{delta:.10}"));
    out.set("delta", json!(delta));
    if n >= 2 {
        let phi = welch_angle(field, n)?;
        let c = rescale_constant(field, n)?;
        out.line("phi", format!("{phi:.10}"));
        out.line("C = n/(d delta)", format!("{c:.10}"));
        out.set("phi", json!(phi));
        out.set("C", json!(c));
        let (df, nf) = (d as f64, n as f64);
        let identity = (df - nf + nf * phi) / (df * delta * phi);
        out.check("closing_identity", (identity - 1.0).abs(), 1e-12);
    }
    out.line("sqrt(n)", format!("{:.10}", (n as f64).sqrt()));
    Ok(())
}

fn etf_build(tag: &str, path: Option<&Path>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let report = etf.verify(tol)?;
    let frame = projconst::WeightedFrame::new(
        etf.field(),
        etf.n(),
        etf.vectors().to_vec(),
        vec![1.0 / (etf.len() as f64).sqrt(); etf.len()],
    )?;
    let doc = io::frame_to_json(&frame);
    if let Some(p) = path {
        io::save_json(p, &doc)?;
        out.line("written", p.display());
    }
    out.line("vectors", etf.len());
    out.line("angle", format!("{:.12}", etf.angle()));
    out.set("frame", doc);
    etf_residuals(&report, etf.field(), tol, out);
    Ok(())
}

fn etf_residuals(r: &projconst::EtfReport, field: ScalarField, tol: &ToleranceConfig, out: &mut Out) {
    out.line("count", r.count);
    out.line("dim", r.dim);
    out.line("maximal", r.is_maximal);
    out.line("angle_value", format!("{:.12}", r.angle_value));
    out.set("count", json!(r.count));
    out.set("dim", json!(r.dim));
    out.set("maximal", json!(r.is_maximal));
    out.set("angle_value", json!(r.angle_value));
    out.set("angle_spread", json!(r.angle_spread));
    out.check("unit_residual", r.unit_residual, tol.residual_tol);
    out.check("angle_spread", r.angle_spread, tol.residual_tol);
    out.check("tightness_residual", r.tightness_residual, tol.residual_tol);
    if let Ok(phi) = welch_angle(field, r.dim) {
        if r.is_maximal {
            out.check("welch_angle_residual", (r.angle_value - phi).abs(), tol.residual_tol);
        }
    }
}

fn etf_verify(input: &Path, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let doc = out.read(input)?;
    let (field, _, vectors) = io::vectors_from_json(&doc, "vectors")?;
    let report = verify_etf(&vectors)?;
    etf_residuals(&report, field, tol, out);
    Ok(())
}

fn load_frame(input: &Path, out: &mut Out) -> Result<projconst::WeightedFrame> {
    let doc = out.read(input)?;
    Ok(io::frame_from_json(&doc)?)
}

fn phi(input: &Path, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let frame = load_frame(input, out)?;
    let value = frame.objective_phi_with(tol)?;
    let delta = delta_bound(frame.field(), frame.n())?;
    let tight = frame.tightness_residual();
    out.line("phi", format!("{value:.12}"));
    out.line("delta", format!("{delta:.12}"));
    out.set("phi", json!(value));
    out.set("delta", json!(delta));
    out.set("tightness_residual", json!(tight));
    if tight <= tol.residual_tol {
        out.line("tight", "yes");
        out.check("excess_over_delta", (value - delta).max(0.0), tol.residual_tol);
    } else {
        out.line("tight", format!("no (residual {tight:.3e}); the δ bound does not apply"));
    }
    Ok(())
}

fn equality_check(input: &Path, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let frame = load_frame(input, out)?;
    let r = frame.check_equality_conditions(tol)?;
    let oks = [r.condition1_ok, r.condition2_ok, r.condition3_ok, r.condition4_ok];
    let names = ["zero_weights", "maximal_etf", "group_sums", "norms"];
    for ((name, ok), res) in names.iter().zip(oks).zip(r.residuals) {
        out.line(name, format!("{} (residual {res:.3e})", if ok { "ok" } else { "FAIL" }));
    }
    out.line("groups", r.groups.len());
    out.line("phi", format!("{:.12}", r.phi));
    out.line("delta", format!("{:.12}", r.delta));
    out.set("conditions", json!(oks));
    out.set("residuals", json!(r.residuals));
    out.set("groups", json!(r.groups));
    out.set("group_sums", json!(r.group_sums));
    out.set("zero_indices", json!(r.zero_indices));
    out.set("phi", json!(r.phi));
    out.set("delta", json!(r.delta));
    out.residuals.insert(
        "phi_minus_delta".into(),
        json!({"value": (r.phi - r.delta).abs(), "tolerance": tol.residual_tol}),
    );
    if !r.all_ok() {
        out.fail();
    }
    Ok(())
}

fn opt_config(a: &OptArgs, out: &mut Out) -> Result<OptimizerConfig> {
    let seed = seed_or_env(a.seed)?;
    out.seed = Some(seed);
    let mut cfg = OptimizerConfig::with_seed(seed);
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;
    if let Some(t) = a.threads {
        // ignore a second initialization within one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(cfg)
}

fn report_opt(res: &OptResult, field: ScalarField, n: usize, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let delta = delta_bound(field, n)?;
    out.line("value", format!("{:.12}", res.best_value));
    out.line("delta", format!("{delta:.12}"));
    out.line("best_restart", res.best_restart);
    out.line("converged", res.converged);
    let _ = writeln!(out.text, "{:<8} {:>16}", "restart", "value");
    for (i, v) in res.per_restart.iter().enumerate() {
        let _ = writeln!(out.text, "{i:<8} {v:>16.12}");
    }
    out.set("value", json!(res.best_value));
    out.set("delta", json!(delta));
    out.set("frame", io::frame_to_json(&res.best_frame));
    out.set("weights", json!(res.best_frame.weights()));
    out.set("per_restart", json!(res.per_restart));
    out.set("best_restart", json!(res.best_restart));
    out.set("converged", json!(res.converged));
    out.check("tightness_residual", res.best_frame.tightness_residual(), tol.residual_tol);
    out.check("excess_over_delta", (res.best_value - delta).max(0.0), tol.residual_tol);
    Ok(())
}

fn optimize(a: &OptArgs, uniform: bool, out: &mut Out) -> Result<()> {
    let field = parse_field(&a.field)?;
    let cfg = opt_config(a, out)?;
    let res = if uniform {
        mu(field, a.n, a.big_n, &cfg)?
    } else {
        maximize_lambda_rel(field, a.n, a.big_n, &cfg)?
    };
    if let Some(p) = &a.out {
        io::save_json(p, &io::frame_to_json(&res.best_frame))?;
    }
    out.line("restarts", cfg.restarts);
    report_opt(&res, field, a.n, &ToleranceConfig::default(), out)
}

fn divisibility(a: &OptArgs, out: &mut Out) -> Result<()> {
    let field = parse_field(&a.field)?;
    let cfg = opt_config(a, out)?;
    let r = divisibility_check(field, a.n, a.big_n, &cfg)?;
    out.line("mu", format!("{:.12}", r.mu_value));
    out.line("delta", format!("{:.12}", r.delta));
    out.line("equality", r.equality);
    out.line("divisible", r.divisible);
    out.line("restarts", r.restarts);
    out.set("mu", json!(r.mu_value));
    out.set("delta", json!(r.delta));
    out.set("equality", json!(r.equality));
    out.set("divisible", json!(r.divisible));
    out.set("restarts", json!(r.restarts));
    Ok(())
}

fn contains(tag: &str, point: &Path, set: &str, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let doc = out.read(point)?;
    let (_, _, mut vs) = io::vectors_from_json(&json!({"field": doc["field"], "v": [doc["vector"]]}), "v")?;
    let x = vs.pop().expect("one vector").promote(etf.field());
    if x.dim() != etf.n() {
        return Err(Error::DimensionMismatch { expected: etf.n(), found: x.dim() }.into());
    }
    let cert = if set == "zonotope" {
        zonotope_contains(&ZonotopeSpec::rescaled_etf(&etf)?, &x, tol)?
    } else {
        absconv_contains(etf.vectors(), &x, tol)?
    };
    out.line("set", set);
    out.line("member", cert.is_membership());
    match &cert {
        Certificate::Membership { residual, .. } => {
            out.check("membership_residual", *residual, tol.residual_tol.max(tol.lp_tol) * 10.0);
        }
        Certificate::Separation { margin, .. } => out.line("separation_margin", format!("{margin:.6e}")),
    }
    out.set("member", json!(cert.is_membership()));
    out.set("certificate", certificate_json(&cert));
    Ok(())
}

fn sandwich(ball: &Path, tag: &str, transform: Option<&Path>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let doc = out.read(ball)?;
    let ball = io::ball_from_json(&doc)?;
    let t = match transform {
        Some(p) => {
            let d = out.read(p)?;
            io::matrix_from_json(&d)?
        }
        None => KMatrix::identity(ball.field().join(etf.field()), etf.n()),
    };
    let ball = DualBallSpec::new(
        ball.field().join(etf.field()),
        ball.n(),
        ball.functionals().iter().map(|f| f.promote(ball.field().join(etf.field()))).collect(),
    )?;
    let r = sandwich_test(&ball, &etf, &t, tol)?;
    out.line("extremal_for_T", r.is_extremal_for_t);
    out.set("extremal_for_T", json!(r.is_extremal_for_t));
    if let Some((side, idx, cert)) = &r.failing_item {
        let side = match side {
            SandwichSide::Left => "absconv{w} ⊆ T(B)",
            SandwichSide::Right => "T(B) ⊆ C·Z(w)",
        };
        out.line("failing_inclusion", side);
        out.line("failing_index", idx);
        out.set("failing", json!({"inclusion": side, "index": idx, "certificate": certificate_json(cert)}));
        out.fail();
    }
    Ok(())
}

fn family(tag: &str, count: usize, seed: Option<u64>, dir: Option<&Path>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let seed = seed_or_env(seed)?;
    out.seed = Some(seed);
    let balls = extremal_family(&etf, count, seed, tol)?;
    let id = KMatrix::identity(etf.field(), etf.n());
    let mut counts = Vec::new();
    let mut docs = Vec::new();
    for (k, b) in balls.iter().enumerate() {
        let g = minimal_generator_count(b.functionals(), tol)?;
        let ok = sandwich_test(b, &etf, &id, tol)?.is_extremal_for_t;
        out.line(&format!("ball_{}", k + 1), format!("{g} generators, sandwich {}", if ok { "ok" } else { "FAIL" }));
        if !ok {
            out.fail();
        }
        if let Some(d) = dir {
            io::save_json(&d.join(format!("ball_{}.json", k + 1)), &io::ball_to_json(b))?;
        }
        counts.push(g);
        docs.push(io::ball_to_json(b));
    }
    if counts.windows(2).any(|w| w[1] <= w[0]) {
        out.line("generator_counts", "not strictly increasing");
        out.fail();
    }
    out.set("generator_counts", json!(counts));
    out.set("balls", Value::Array(docs));
    Ok(())
}

fn minproj(input: &Path, dump: Option<&Path>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let doc = out.read(input)?;
    let ball = io::ball_from_json(&doc)?;
    let s = embed_norm(&ball)?;
    if let Some(p) = dump {
        std::fs::write(p, min_projection_program(&s)?.to_text())?;
    }
    let mp = min_projection_lp(&s, tol)?;
    out.line("N", s.big_n());
    out.line("n", s.n());
    out.line("lambda", format!("{:.9}", mp.lambda_rel));
    out.line("lp_lower_bound", format!("{:.12}", mp.lp_objective));
    let _ = write!(out.text, "projection P:\n{}", fmt_matrix(&mp.projection));
    out.set("lambda", json!(mp.lambda_rel));
    out.set("lp_lower_bound", json!(mp.lp_objective));
    out.set("projection", io::matrix_to_json(&mp.projection));
    let scale = 10.0 * tol.lp_tol * (1.0 + mp.lambda_rel);
    out.check("idempotence_residual", mp.idempotence_residual, scale);
    out.check("invariance_residual", mp.invariance_residual, scale);
    out.check("optimality_gap", (mp.lambda_rel - mp.lp_objective).abs(), scale);
    Ok(())
}

fn cm(tag: &str, coeffs: Option<&Path>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let grid = match coeffs {
        Some(p) => {
            let d = out.read(p)?;
            io::coeffs_from_json(&d)?
        }
        None => Vec::new(),
    };
    let b = cm_build(&etf, &grid)?;
    let r = cm_verify(&b.operator, &b.subspace)?;
    let delta = delta_bound(etf.field(), etf.n())?;
    let _ = write!(out.text, "operator E:\n{}", fmt_matrix(&b.operator.e));
    out.line("trace_on_X", format!("{:.12}", r.trace_on_x.re));
    out.line("delta", format!("{delta:.12}"));
    out.line("column_sum", format!("{:.12}", r.column_sum));
    out.set("E", io::matrix_to_json(&b.operator.e));
    out.set("trace_on_X", json!([r.trace_on_x.re, r.trace_on_x.im]));
    out.set("column_sum", json!(r.column_sum));
    out.set("restriction", io::matrix_to_json(&r.restriction));
    out.check("invariance_residual", r.invariance_residual, tol.residual_tol);
    out.check("trace_minus_delta", (r.trace_on_x - delta).norm(), tol.residual_tol);
    out.check("column_sum_minus_one", (r.column_sum - 1.0).abs(), tol.residual_tol);
    Ok(())
}

fn inclusion(tag: &str, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let r = inclusion_check(&etf, tol);
    out.line("all_contained", r.all_contained);
    out.set("all_contained", json!(r.all_contained));
    out.check("max_residual", r.max_residual, tol.residual_tol);
    Ok(())
}

fn witness(tag: &str, samples: Option<usize>, seed: Option<u64>, tol: &ToleranceConfig, out: &mut Out) -> Result<()> {
    let etf = load_etf(tag)?;
    let seed = seed_or_env(seed)?;
    out.seed = Some(seed);
    let w = strictness_witness_with(&etf, samples.unwrap_or(WITNESS_SAMPLES), seed, tol);
    match w {
        Some(x) => {
            let ratio = norm_ratio(&etf, &x);
            out.line("witness", x.entries().iter().map(|&z| fmt_scalar(z, x.field())).collect::<Vec<_>>().join(" "));
            out.line("norm_ratio", format!("{ratio:.12}"));
            out.set("witness", io::vector_to_json(&x, x.field()));
            out.set("norm_ratio", json!(ratio));
        }
        None => {
            out.line("witness", "none found");
            out.set("witness", Value::Null);
            out.fail();
        }
    }
    Ok(())
}
