//! `hda`: batch symbolic computations for the canonical constraint algebra
//! of general relativity.
//!
//! Every command echoes the active convention-profile hash on stderr, keeps
//! stdout machine-readable, and is deterministic for fixed inputs and seed.
//! Exit codes: 0 success (including inconclusive closure verdicts), 1
//! computation failure, 2 usage error.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hda_core::bracket::{poisson_bracket_density, ConstraintManifest};
use hda_core::calculus::{simplify_deep, strip_derivs_off};
use hda_core::classify::{check_linear_term_conditions, classify, closure_report, reduce_weakly};
use hda_core::oracle::{evaluate_at, sample_points, Chart, ChartSpec};
use hda_core::profile::{ConventionProfile, default_profile};
use hda_core::variation::{functional_derivative, vary_metric, vary_momentum, VariationMode, Wrt};
use hda_core::expr::Expression;
use hda_core::Context;

#[derive(Parser)]
#[command(name = "hda", version, about = "Symbolic constraint-algebra engine")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Numeric spatial dimension binding.
    #[arg(long, global = true)]
    dim: Option<u32>,
    /// Output format for expressions and reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Convention profile file (defaults to the built-in validated set).
    #[arg(long, global = true)]
    profile: Option<PathBuf>,
    /// Cap on expression size during expansion.
    #[arg(long, global = true)]
    max_terms: Option<usize>,
    /// Random seed for oracle charts and sample points.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Vary Ricci through the Riemann tensor route.
    #[arg(long, global = true)]
    via_riemann: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Latex,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum WrtArg {
    Metric,
    Momentum,
}

#[derive(Args)]
struct ExprInput {
    /// Inline expression source.
    #[arg(long, conflicts_with = "input")]
    expr: Option<String>,
    /// File containing an expression (UTF-8 text in the grammar, or
    /// expression JSON when the file ends in .json).
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Canonicalize an expression.
    Canon(ExprInput),
    /// First variation of a density with respect to g_ab or pi^ab.
    Vary {
        #[command(flatten)]
        input: ExprInput,
        #[arg(long, value_enum, default_value_t = WrtArg::Metric)]
        wrt: WrtArg,
    },
    /// Functional derivative kernel of a density.
    Fderiv {
        #[command(flatten)]
        input: ExprInput,
        #[arg(long, value_enum, default_value_t = WrtArg::Metric)]
        wrt: WrtArg,
        /// Free labels of the kernel, comma separated.
        #[arg(long, default_value = "zzk,zzl")]
        labels: String,
    },
    /// Poisson-bracket integrand of two scalar-density functionals.
    Bracket {
        /// Density of the first functional.
        #[arg(long)]
        lhs: String,
        /// Density of the second functional.
        #[arg(long)]
        rhs: String,
        /// Move derivatives off the named smearing by parts and drop the
        /// integral sign, leaving the local coefficient.
        #[arg(long)]
        localize: Option<String>,
    },
    /// Partition an expression into grading buckets.
    Classify(ExprInput),
    /// Reduce an expression modulo the momentum constraint.
    Reduce(ExprInput),
    /// Closure analysis of a constraint system manifest.
    Closure {
        /// Constraint manifest JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// First smearing symbol.
        #[arg(long, default_value = "f")]
        f: String,
        /// Second smearing symbol.
        #[arg(long, default_value = "h")]
        h: String,
    },
    /// Admissibility conditions for a momentum-linear constraint term.
    CheckLinear {
        /// beta_ab as an expression with free lower labels za, zb.
        #[arg(long)]
        beta: String,
    },
    /// Evaluate an expression numerically on a randomized chart.
    Oracle {
        #[command(flatten)]
        input: ExprInput,
        /// Second expression to compare against.
        #[arg(long)]
        rhs: Option<String>,
        /// Chart specification JSON file (defaults derive from --dim/--seed).
        #[arg(long)]
        chart: Option<PathBuf>,
        /// Number of sample points.
        #[arg(long, default_value_t = 4)]
        points: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn load_profile(common: &Common) -> Result<ConventionProfile> {
    match &common.profile {
        Some(p) => ConventionProfile::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(default_profile()),
    }
}

fn make_ctx(common: &Common) -> Context {
    let mut ctx = match common.dim {
        Some(d) => Context::with_dim(d),
        None => Context::new(),
    };
    if let Some(m) = common.max_terms {
        ctx.max_terms = m;
    }
    ctx
}

fn read_expr(ctx: &Context, input: &ExprInput) -> Result<Expression> {
    let src = match (&input.expr, &input.input) {
        (Some(s), None) => s.clone(),
        (None, Some(p)) => std::fs::read_to_string(p)?,
        _ => bail!("provide exactly one of --expr or --in"),
    };
    let is_json = input
        .input
        .as_ref()
        .map(|p| p.extension().is_some_and(|x| x == "json"))
        .unwrap_or(false)
        || src.trim_start().starts_with('{');
    let e = if is_json {
        hda_core::jsonio::from_json_string(ctx, &src)?
    } else {
        hda_core::parse::parse(ctx, &src)?
    };
    Ok(e)
}

fn render_expr(e: &Expression, fmt: Format) -> String {
    match fmt {
        Format::Text => hda_core::render::to_text(e),
        Format::Latex => hda_core::render::to_latex(e),
        Format::Json => hda_core::jsonio::to_json_string(e),
    }
}

fn emit(common: &Common, s: &str) -> Result<()> {
    match &common.out {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            writeln!(f, "{s}")?;
        }
        None => println!("{s}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let profile = load_profile(&cli.common)?;
    eprintln!("profile {} {}", profile.name, profile.hash());
    let ctx = make_ctx(&cli.common);
    let mode = VariationMode {
        ricci_via_riemann: cli.common.via_riemann,
        ..VariationMode::default()
    };
    let fmt = cli.common.format;

    match &cli.cmd {
        Cmd::Canon(input) => {
            let e = read_expr(&ctx, input)?;
            let out = simplify_deep(&ctx, &e)?;
            emit(&cli.common, &render_expr(&out, fmt))
        }
        Cmd::Vary { input, wrt } => {
            let e = read_expr(&ctx, input)?;
            let out = match wrt {
                WrtArg::Metric => vary_metric(&ctx, mode, &e)?,
                WrtArg::Momentum => vary_momentum(&ctx, &e)?,
            };
            let out = simplify_deep(&ctx, &out)?;
            emit(&cli.common, &render_expr(&out, fmt))
        }
        Cmd::Fderiv { input, wrt, labels } => {
            let e = read_expr(&ctx, input)?;
            let (la, lb) = labels
                .split_once(',')
                .context("--labels must be two comma-separated labels")?;
            let w = match wrt {
                WrtArg::Metric => Wrt::Metric,
                WrtArg::Momentum => Wrt::Momentum,
            };
            let out = functional_derivative(&ctx, mode, &e, w, la.trim(), lb.trim())?;
            emit(&cli.common, &render_expr(&out, fmt))
        }
        Cmd::Bracket { lhs, rhs, localize } => {
            let a = hda_core::parse::parse(&ctx, lhs)?;
            let b = hda_core::parse::parse(&ctx, rhs)?;
            let mut out = poisson_bracket_density(&ctx, mode, &a, &b)?;
            if let Some(sym) = localize {
                let stripped = strip_derivs_off(&ctx, &out, sym)?;
                let stripped = simplify_deep(&ctx, &stripped)?;
                out = hda_core::bracket::localize(&ctx, &stripped, sym)?;
            } else {
                out = simplify_deep(&ctx, &out)?;
            }
            emit(&cli.common, &render_expr(&out, fmt))
        }
        Cmd::Classify(input) => {
            let e = read_expr(&ctx, input)?;
            let e = simplify_deep(&ctx, &e)?;
            let buckets = classify(&ctx, &e)?;
            let mut lines = vec![];
            for b in &buckets {
                match fmt {
                    Format::Json => lines.push(format!(
                        "{{\"momentum_power\":{},\"derivative_degree\":{},\"smearing_derivs\":{},\"terms\":{}}}",
                        b.momentum_power,
                        b.derivative_degree,
                        b.smearing_derivs,
                        hda_core::jsonio::to_json_string(&b.terms)
                    )),
                    _ => lines.push(format!(
                        "[p={} d={} s={}] {}",
                        b.momentum_power,
                        b.derivative_degree,
                        b.smearing_derivs,
                        render_expr(&b.terms, fmt)
                    )),
                }
            }
            let body = match fmt {
                Format::Json => format!("[{}]", lines.join(",")),
                _ => lines.join("\n"),
            };
            emit(&cli.common, &body)
        }
        Cmd::Reduce(input) => {
            let e = read_expr(&ctx, input)?;
            let (out, log) = reduce_weakly(&ctx, &e)?;
            for l in &log {
                eprintln!("{l}");
            }
            emit(&cli.common, &render_expr(&out, fmt))
        }
        Cmd::Closure { spec, f, h } => {
            let manifest = ConstraintManifest::from_json(&std::fs::read_to_string(spec)?)?;
            let specs: Vec<_> = manifest.constraints.values().cloned().collect();
            let report = closure_report(&ctx, mode, &specs, f, h)?;
            let body = match fmt {
                Format::Json => report.to_json()?,
                Format::Latex => report.latex_certificate(),
                Format::Text => {
                    let mut s = format!("verdict: {:?}\nnote: {}\n", report.verdict, report.note);
                    for b in &report.buckets {
                        s.push_str(&format!(
                            "bucket p={} d={} s={}: {} terms, {} matched, {} dropped, {} residual\n",
                            b.momentum_power,
                            b.derivative_degree,
                            b.smearing_derivs,
                            b.term_count,
                            b.matched_terms,
                            b.dropped_terms,
                            b.residue_terms
                        ));
                    }
                    s.trim_end().to_string()
                }
            };
            emit(&cli.common, &body)
        }
        Cmd::CheckLinear { beta } => {
            let report = check_linear_term_conditions(&ctx, mode, beta)?;
            let body = match fmt {
                Format::Json => report.to_json()?,
                _ => format!(
                    "divergence_free: {}\ncurl_free: {}\npasses: {}\ndivergence residue: {}\ncurl residue: {}",
                    report.divergence_free,
                    report.curl_free,
                    report.passes,
                    report.divergence_residue,
                    report.curl_residue
                ),
            };
            emit(&cli.common, &body)
        }
        Cmd::Oracle {
            input,
            rhs,
            chart,
            points,
        } => {
            let e = read_expr(&ctx, input)?;
            let dim = ctx.require_dim().map_err(|_| {
                anyhow::anyhow!("oracle requires --dim")
            })?;
            let spec = match chart {
                Some(p) => serde_json::from_str::<ChartSpec>(&std::fs::read_to_string(p)?)?,
                None => ChartSpec::new(dim, cli.common.seed),
            };
            let chart = Chart::new(spec)?;
            let pts = sample_points(dim as usize, cli.common.seed ^ 0x5eed, *points);
            let rhs_expr = rhs
                .as_ref()
                .map(|s| hda_core::parse::parse(&ctx, s))
                .transpose()?;
            let mut lines = vec![];
            let mut worst: f64 = 0.0;
            for x in &pts {
                let lv = evaluate_at(&ctx, &chart, &e, x)?;
                match &rhs_expr {
                    Some(r) => {
                        let rv = evaluate_at(&ctx, &chart, r, x)?;
                        let d = lv.max_abs_diff(&rv);
                        worst = worst.max(d);
                        lines.push(format!("{x:?} max_abs_diff {d:.3e}"));
                    }
                    None => {
                        let m = lv.max_abs();
                        worst = worst.max(m);
                        lines.push(format!("{x:?} max_abs {m:.3e}"));
                    }
                }
            }
            lines.push(format!("worst {worst:.3e}"));
            emit(&cli.common, &lines.join("\n"))
        }
    }
}
