use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shtr::airy::verify_w_constraints;
use shtr::curve::Curve;
use shtr::exec::Exec;
use shtr::io::{parse_config, read_table, to_document, write_table, CurveConfig, Format};
use shtr::qcurve::{
    build_quantum_operator, pretty_words, quantum_operator_words, resolvent, verify_quantum_curve,
};
use shtr::report::{all_pass, Report};
use shtr::series::CorrelatorTable;
use shtr::tr::{run, run_partial, verify_loop_equations, verify_symmetry_and_identity};
use shtr::wkb::{
    amplitude_w1, amplitude_w2, build_connection_data, check_bergman, cross_check,
    determinant_diagnostic, nonzero_shift_series, solve_formal_gauge,
};

#[derive(Parser)]
#[command(
    name = "shtr",
    version,
    about = "Shifted topological recursion on (r,s) curves, with verifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Curve spec document (TOML, or JSON for *.json)
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Euler characteristic bound for the table
    #[arg(long, default_value_t = 3)]
    chi: u32,
    /// ℏ-order N for the quantum curve and WKB checks
    #[arg(long, default_value_t = 4)]
    order: u32,
    /// Directory for the output documents
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print operators and amplitudes in full
    #[arg(long)]
    pretty: bool,
    /// Honour the test hooks in the curve document
    #[arg(long)]
    fixtures: bool,
    /// Run everything on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the correlator table through χ
    Compute(Common),
    /// Symmetry, identity, loop equations and W-constraints
    Verify {
        #[command(flatten)]
        common: Common,
        /// Verify a stored table instead of computing one
        #[arg(long)]
        table: Option<PathBuf>,
        /// Mode cutoff K for the W-constraints
        #[arg(long, default_value_t = 3)]
        modes: i64,
    },
    /// Build the quantum curve and check it annihilates the wave function
    Qc(Common),
    /// Formal gauge, amplitudes, Bergman check, diagnostic and cross-check
    Wkb(Common),
    /// Compute, verify, qc and wkb
    All {
        #[command(flatten)]
        common: Common,
        /// Mode cutoff K for the W-constraints
        #[arg(long, default_value_t = 3)]
        modes: i64,
    },
}

/// Input problems map to exit code 2, verifier failures to 1.
enum Outcome {
    Pass,
    Fail,
}

struct Ctx {
    common: Common,
    exec: Exec,
    summary: Vec<String>,
    docs: Vec<(String, String)>,
    engine_failed: bool,
}

impl Ctx {
    fn new(common: Common) -> Self {
        let exec = if common.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        };
        Ctx {
            common,
            exec,
            summary: vec![],
            docs: vec![],
            engine_failed: false,
        }
    }

    fn config(&self) -> anyhow::Result<CurveConfig> {
        let path = self
            .common
            .curve
            .as_ref()
            .ok_or_else(|| anyhow!("--curve is required"))?;
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(parse_config(&text, Format::from_path(path)).context("curve document")?)
    }

    fn curve(&self, cfg: &CurveConfig) -> anyhow::Result<std::sync::Arc<Curve>> {
        Ok(cfg.build(self.common.fixtures).context("curve")?)
    }

    fn table(
        &mut self,
        cfg: &CurveConfig,
        curve: &std::sync::Arc<Curve>,
        chi: u32,
    ) -> anyhow::Result<CorrelatorTable> {
        let mut t = if curve.is_unchecked() {
            // an unchecked curve may stop producing rational values; keep what was computed
            let (t, err) = run_partial(curve, chi, self.exec);
            if let Some((c, e)) = err {
                let rep = Report::fail("tr-engine", format!("χ = {c}"), e.to_string());
                self.reports("recursion", &[rep]);
                self.engine_failed = true;
            }
            t
        } else {
            run(curve, chi, self.exec).context("tr")?
        };
        cfg.perturb(&mut t, self.common.fixtures)
            .context("fixtures")?;
        Ok(t)
    }

    fn reports(&mut self, title: &str, reps: &[Report]) -> bool {
        let ok = all_pass(reps);
        let failed = reps.iter().filter(|r| !r.passed()).count();
        self.summary.push(format!(
            "{title}: {} ({} checks, {failed} failed)",
            if ok { "PASS" } else { "FAIL" },
            reps.len()
        ));
        for r in reps.iter().filter(|r| !r.passed()).take(5) {
            self.summary.push(format!(
                "  FAIL {} at {}: {}",
                r.check,
                r.location,
                r.witness.as_deref().unwrap_or("")
            ));
        }
        ok
    }

    fn finish(self) -> anyhow::Result<()> {
        let text = self.summary.join("\n") + "\n";
        print!("{text}");
        if let Some(dir) = &self.common.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, body) in &self.docs {
                write(dir, name, body)?;
            }
            write(dir, "summary.txt", &text)?;
        }
        Ok(())
    }
}

fn write(dir: &Path, name: &str, body: &str) -> anyhow::Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
}

fn compute(cx: &mut Ctx) -> anyhow::Result<bool> {
    let cfg = cx.config()?;
    let curve = cx.curve(&cfg)?;
    let t = cx.table(&cfg, &curve, cx.common.chi)?;
    let entries = t.canonical_entries().len();
    cx.summary.push(format!(
        "compute ({},{}): {entries} entries through χ = {}",
        curve.r(),
        curve.s(),
        t.chi_max()
    ));
    let doc = write_table(&t);
    if cx.common.out.is_none() {
        print!("{doc}");
    }
    cx.docs.push(("table.json".into(), doc));
    Ok(true)
}

fn verify_table(cx: &mut Ctx, t: &CorrelatorTable, modes: i64) -> bool {
    let mut reps = verify_symmetry_and_identity(t, cx.exec);
    let mut ok = cx.reports("symmetry + identity", &reps);
    let loops = verify_loop_equations(t, cx.exec);
    ok &= cx.reports("loop equations", &loops);
    reps.extend(loops);
    if t.curve().spec().is_undeformed() {
        let order = t.chi_max() as i32 + 1;
        let w = verify_w_constraints(t, order, modes, cx.exec);
        ok &= cx.reports(&format!("W-constraints (ℏ^{order}, K = {modes})"), &w);
        reps.extend(w);
    } else {
        cx.summary
            .push("W-constraints: skipped (deformed curve)".into());
    }
    cx.docs.push(("verify.json".into(), to_document(&reps)));
    ok
}

fn verify(cx: &mut Ctx, table: Option<&PathBuf>, modes: i64) -> anyhow::Result<bool> {
    let t = match table {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            read_table(&text, cx.common.fixtures).context("table document")?
        }
        None => {
            let cfg = cx.config()?;
            let curve = cx.curve(&cfg)?;
            cx.table(&cfg, &curve, cx.common.chi)?
        }
    };
    Ok(verify_table(cx, &t, modes))
}

fn qc(cx: &mut Ctx) -> anyhow::Result<bool> {
    let cfg = cx.config()?;
    let curve = cx.curve(&cfg)?;
    let n = cx.common.order as i64;
    let words = quantum_operator_words(&curve, n).context("qcurve")?;
    let op = build_quantum_operator(&curve, n).context("qcurve")?;
    let t = cx.table(&cfg, &curve, n.saturating_sub(1).max(0) as u32)?;
    let f = resolvent(&t, n).context("qcurve")?;
    let v = verify_quantum_curve(&op, &f, n).context("qcurve")?;
    cx.summary
        .push(format!("operator: {}", pretty_words(&words)));
    if cx.common.pretty {
        cx.summary.push(format!("normal form: {}", op.pretty()));
    }
    let ok = cx.reports(
        &format!("quantum curve (vanishing order {})", v.order_str()),
        &[v.report()],
    );
    let doc = json!({
        "operator": pretty_words(&words),
        "normal_form": op.pretty(),
        "terms": op.to_doc(),
        "vanishing_order": v.order_str(),
        "report": v.report(),
    });
    cx.docs.push(("operator.json".into(), to_document(&doc)));
    Ok(ok)
}

fn wkb(cx: &mut Ctx) -> anyhow::Result<bool> {
    let cfg = cx.config()?;
    let curve = cx.curve(&cfg)?;
    let l = cx.common.order as usize;
    let data = build_connection_data(&curve, l).context("wkb")?;
    let gauge = solve_formal_gauge(&data).context("wkb")?;
    let r = curve.r();
    let w1 = amplitude_w1(&data, &gauge, r);
    let w2 = amplitude_w2(&gauge, r, r);
    let t = cx.table(&cfg, &curve, l.saturating_sub(1) as u32)?;
    let mut reps = vec![check_bergman(&data, &w2)];
    reps.extend(cross_check(&t, &w1, &w2));
    let mut ok = cx.reports("Bergman + cross-check", &reps);
    let classification = if curve.s() < r {
        let d = determinant_diagnostic(r, curve.s()).context("wkb")?;
        let c = d.classify(&nonzero_shift_series(&curve));
        let agrees = c.agrees();
        cx.summary.push(format!(
            "diagnostic: shifts {}, min exponent {}, holomorphic {}, condition {}",
            c.shifts,
            c.min_exponent.map_or("none".into(), |e| e.to_string()),
            c.holomorphic,
            c.condition_str()
        ));
        let rep = if agrees && d.constant_matches() {
            Report::pass("wkb-diagnostic", format!("({r},{})", curve.s()))
        } else {
            Report::fail(
                "wkb-diagnostic",
                format!("({r},{})", curve.s()),
                format!("{c:?}"),
            )
        };
        ok &= cx.reports("diagnostic", std::slice::from_ref(&rep));
        reps.push(rep);
        Some(c)
    } else {
        cx.summary.push("diagnostic: skipped (s = r+1)".into());
        None
    };
    if cx.common.pretty {
        for (p, f) in w1.iter() {
            cx.summary.push(format!("W1 ℏ^{p}: {f}"));
        }
    }
    let doc = json!({
        "order": l,
        "y_hat": gauge.y_hat.iter().map(|d| d.iter().map(|f| f.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "w1": w1.iter().map(|(p, f)| json!({"hpow": p, "form": f.to_string()})).collect::<Vec<_>>(),
        "w2": w2.iter().enumerate().map(|(p, b)| json!({"hpow": p, "numerator": b.to_string()})).collect::<Vec<_>>(),
        "classification": classification,
        "reports": reps,
    });
    cx.docs.push(("wkb.json".into(), to_document(&doc)));
    Ok(ok)
}

fn all(cx: &mut Ctx, modes: i64) -> anyhow::Result<bool> {
    let cfg = cx.config()?;
    let curve = cx.curve(&cfg)?;
    let t = cx.table(&cfg, &curve, cx.common.chi)?;
    cx.docs.push(("table.json".into(), write_table(&t)));
    let mut ok = verify_table(cx, &t, modes);
    let qc_ok = curve.s() < curve.r() && curve.spec().is_undeformed();
    if qc_ok {
        ok &= qc(cx)?;
    } else {
        cx.summary
            .push("quantum curve: skipped (needs undeformed s < r)".into());
    }
    if curve.spec().is_undeformed() {
        ok &= wkb(cx)?;
    } else {
        cx.summary.push("wkb: skipped (deformed curve)".into());
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    let (mut cx, f): (Ctx, Box<dyn FnOnce(&mut Ctx) -> anyhow::Result<bool>>) = match cli.command {
        Command::Compute(c) => (Ctx::new(c), Box::new(compute)),
        Command::Verify {
            common,
            table,
            modes,
        } => (
            Ctx::new(common),
            Box::new(move |cx| verify(cx, table.as_ref(), modes)),
        ),
        Command::Qc(c) => (Ctx::new(c), Box::new(qc)),
        Command::Wkb(c) => (Ctx::new(c), Box::new(wkb)),
        Command::All { common, modes } => (Ctx::new(common), Box::new(move |cx| all(cx, modes))),
    };
    let ok = f(&mut cx)? && !cx.engine_failed;
    cx.finish()?;
    Ok(if ok { Outcome::Pass } else { Outcome::Fail })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
