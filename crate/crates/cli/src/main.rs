//! `linrv`: check traces and verify models against the built-in
//! specifications.
//!
//! Exit codes: 0 linearizable, 1 violation, 2 inconclusive or a limit was
//! hit, 64 usage or input error.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use linrv::automata::{self, Automaton};
use linrv::gen::{self, GeneratorConfig, Variant};
use linrv::model::{Execution, History, Method, Value};
use linrv::modelcheck::{self, Threads, Verdict as ModelVerdict, VerifyOptions};
use linrv::monitor::{self, Violation};
use linrv::oracle::{Oracle, DEFAULT_BOUND};
use linrv::spec::{builtin, SpecKind, Specification};
use linrv::trace;

use report::{Counts, Outcome, RunReport};

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "linrv", version, about = "Linearizability monitoring and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TraceArgs {
    /// Specification: queue, stack, register or mutex.
    #[arg(long)]
    spec: SpecKind,
    /// Trace file, one JSON action per line.
    trace: PathBuf,
    /// Include the elapsed time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trace with the polynomial monitor.
    Check(TraceArgs),
    /// Check a trace by enumerating linearizations.
    Oracle {
        #[command(flatten)]
        args: TraceArgs,
        /// Largest number of operations accepted.
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: usize,
    },
    /// Check a trace with the violation automata, or print an automaton.
    Match {
        #[arg(long)]
        spec: SpecKind,
        /// Print the transition listing of a rule automaton (or `union`) and exit.
        #[arg(long, value_name = "RULE", conflicts_with = "trace")]
        emit_automaton: Option<String>,
        #[arg(required_unless_present = "emit_automaton")]
        trace: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Generate a trace from a simulated implementation.
    Gen {
        #[arg(long)]
        spec: SpecKind,
        /// `reference` or a faulty variant of the same specification.
        #[arg(long, default_value = "reference")]
        variant: Variant,
        #[arg(long, default_value_t = 8)]
        ops: usize,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Size of the pool of input values.
        #[arg(long, default_value_t = 8)]
        values: u32,
        /// Write the trace here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a finite-state model.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to the `spec` line of the model.
        #[arg(long)]
        spec: Option<SpecKind>,
        /// Thread count; defaults to the `threads` line of the model, else 2.
        #[arg(long, conflicts_with = "unbounded")]
        threads: Option<usize>,
        /// Any number of threads, via Petri-net coverability.
        #[arg(long)]
        unbounded: bool,
        /// With --unbounded: most operations open at the same time.
        #[arg(long, default_value_t = 2, requires = "unbounded")]
        pending: usize,
        #[arg(long, default_value_t = modelcheck::DEFAULT_MAX_STATES)]
        max_states: usize,
        #[arg(long, default_value_t = modelcheck::DEFAULT_MAX_BASIS)]
        max_basis: usize,
        /// Write the counterexample trace here.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Describe why a trace is or is not linearizable.
    Explain {
        #[arg(long)]
        spec: SpecKind,
        trace: PathBuf,
    },
}

/// Failure that ends the command with a message.
struct Fail {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Fail {
    Fail {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("linrv: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Fail> {
    match command {
        Command::Check(args) => check(&args),
        Command::Oracle { args, bound } => oracle(&args, bound),
        Command::Match {
            spec,
            emit_automaton: Some(rule),
            ..
        } => emit(&builtin(spec), &rule),
        Command::Match {
            spec,
            trace,
            timing,
            ..
        } => {
            let args = TraceArgs {
                spec,
                trace: trace.expect("required by clap"),
                timing,
            };
            match_trace(&args)
        }
        Command::Gen {
            spec,
            variant,
            ops,
            threads,
            seed,
            values,
            output,
        } => {
            let cfg = GeneratorConfig {
                spec,
                variant,
                ops,
                threads,
                seed,
                values,
            };
            let e = gen::generate(&cfg).map_err(|e| usage(e.to_string()))?;
            match output {
                Some(path) => trace::write_trace(&e, &path).map_err(|e| usage(e.to_string()))?,
                None => print!("{}", trace::to_string(&e)),
            }
            Ok(0)
        }
        Command::Verify {
            model,
            spec,
            threads,
            unbounded,
            pending,
            max_states,
            max_basis,
            output,
            timing,
        } => {
            let threads = if unbounded {
                Threads::Unbounded { pending }
            } else {
                Threads::Fixed(threads.unwrap_or(0))
            };
            let opts = VerifyOptions {
                threads,
                max_states,
                max_basis,
                max_threads: modelcheck::DEFAULT_MAX_THREADS,
            };
            verify(&model, spec, opts, output.as_deref(), timing)
        }
        Command::Explain { spec, trace } => explain(builtin(spec), &trace),
    }
}

/// A complete, differentiated trace of the specification.
fn load(path: &Path, spec: &Specification) -> Result<(Execution, History), Fail> {
    let mut e = trace::parse_trace(path).map_err(|e| usage(e.to_string()))?;
    if !e.is_complete() {
        let n = e.complete().len() - e.len();
        eprintln!("linrv: warning: {n} pending operation(s) completed with returns at the end");
        e = e.complete();
    }
    if let Some(a) = e.actions().iter().find(|a| !spec.methods.contains(&a.method)) {
        return Err(usage(format!("{} is not a {} method", a.method, spec.name)));
    }
    if let Some((m, v)) = repeated_input(&e, &spec.input_methods) {
        return Err(Fail {
            code: 2,
            message: format!(
                "trace is not differentiated: {m}({v}) is called more than once. Verdicts are \
                 only given for traces whose input values are distinct; by data independence \
                 every execution is a renaming of such a trace"
            ),
        });
    }
    let h = e.history().map_err(|e| usage(e.to_string()))?;
    Ok((e, h))
}

fn repeated_input(e: &Execution, inputs: &[Method]) -> Option<(Method, u32)> {
    let mut seen = std::collections::BTreeSet::new();
    e.actions()
        .iter()
        .filter(|a| a.kind == linrv::ActionKind::Call && inputs.contains(&a.method))
        .filter_map(|a| match a.value {
            Value::Data(v) => Some((a.method, v)),
            Value::Ignored => None,
        })
        .find(|&(m, v)| !seen.insert((m, v)))
}

fn counts(h: &History, projections: usize) -> Counts {
    Counts {
        ops: h.len(),
        values: h.dom().len(),
        projections,
    }
}

fn emit_report(r: &RunReport) -> u8 {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(r).expect("plain report"));
    r.outcome.exit_code()
}

fn elapsed(start: Instant, timing: bool) -> Option<f64> {
    timing.then(|| start.elapsed().as_secs_f64() * 1000.0)
}

fn check(args: &TraceArgs) -> Result<u8, Fail> {
    let spec = builtin(args.spec);
    let (_, h) = load(&args.trace, &spec)?;
    let start = Instant::now();
    let verdict = monitor::check(&h, &spec).map_err(|e| usage(e.to_string()))?;
    Ok(emit_report(&RunReport {
        command: "check",
        spec: spec.name.clone(),
        outcome: Outcome::of(verdict.violation.is_some()),
        violation: verdict.violation,
        counts: counts(&h, spec.rules.len()),
        note: None,
        elapsed_ms: elapsed(start, args.timing),
        counterexample: None,
    }))
}

fn oracle(args: &TraceArgs, bound: usize) -> Result<u8, Fail> {
    let spec = builtin(args.spec);
    let (_, h) = load(&args.trace, &spec)?;
    if bound > 64 {
        return Err(usage("the oracle bound is at most 64"));
    }
    let start = Instant::now();
    let oracle = Oracle::with_bound(bound);
    let mut report = RunReport {
        command: "oracle",
        spec: spec.name.clone(),
        outcome: Outcome::Linearizable,
        violation: None,
        counts: counts(&h, 0),
        note: None,
        elapsed_ms: None,
        counterexample: None,
    };
    match oracle.is_linearizable(&h, &spec) {
        Err(e) => {
            report.outcome = Outcome::Inconclusive;
            report.note = Some(e.to_string());
        }
        Ok(Some(lin)) => {
            let order: Vec<String> = lin.seq.events.iter().map(|e| e.to_string()).collect();
            report.note = Some(format!("linearization {}", order.join(" ")));
        }
        Ok(None) => {
            report.outcome = Outcome::Violation;
            let bad = oracle
                .violating_projections(&h, &spec)
                .map_err(|e| usage(e.to_string()))?;
            report.counts.projections = 1usize << h.keys().len();
            if let Some((keys, r)) = bad.into_iter().min_by_key(|(k, _)| k.len()) {
                let witnesses = keys
                    .iter()
                    .filter_map(|k| match k {
                        linrv::Key::Data(v) => Some(*v),
                        linrv::Key::Solo(_) => None,
                    })
                    .collect();
                report.violation = Some(Violation {
                    rule: spec.rules[r].name.clone(),
                    witnesses,
                    op: None,
                    evidence: vec![],
                    reason: format!(
                        "no linearization of the projection on {} keys lies in the matching set",
                        keys.len()
                    ),
                });
            }
        }
    }
    report.elapsed_ms = elapsed(start, args.timing);
    Ok(emit_report(&report))
}

fn rule_automata(spec: &Specification) -> Vec<Automaton> {
    spec.rules
        .iter()
        .filter_map(|r| automata::build(spec, &r.name).ok())
        .filter(|a| !a.initial.is_empty())
        .collect()
}

fn emit(spec: &Specification, rule: &str) -> Result<u8, Fail> {
    let a = if rule == "union" {
        automata::build_union(spec)
    } else {
        automata::build(spec, rule).map_err(|e| usage(e.to_string()))?
    };
    print!("{}", a.listing());
    Ok(0)
}

fn match_trace(args: &TraceArgs) -> Result<u8, Fail> {
    let spec = builtin(args.spec);
    let (e, h) = load(&args.trace, &spec)?;
    let start = Instant::now();
    let mut report = RunReport {
        command: "match",
        spec: spec.name.clone(),
        outcome: Outcome::Linearizable,
        violation: None,
        counts: counts(&h, 0),
        note: None,
        elapsed_ms: None,
        counterexample: None,
    };
    for a in rule_automata(&spec) {
        report.counts.projections += 1;
        match automata::match_execution(&a, &e, &spec.input_methods) {
            Err(err) => {
                report.outcome = Outcome::Inconclusive;
                report.note = Some(err.to_string());
                break;
            }
            Ok(None) => {}
            Ok(Some(m)) => {
                let mut witnesses: Vec<(u32, u32)> =
                    m.renaming.pairs().filter(|&(_, to)| to != 3).collect();
                witnesses.sort_by_key(|&(from, to)| (std::cmp::Reverse(to), from));
                let shown: Vec<String> =
                    witnesses.iter().map(|(from, to)| format!("{from}->{to}")).collect();
                report.outcome = Outcome::Violation;
                report.violation = Some(Violation {
                    rule: a.name.clone(),
                    witnesses: witnesses.iter().map(|&(from, _)| from).collect(),
                    op: m.marked,
                    evidence: vec![],
                    reason: format!("accepted after renaming {}", shown.join(", ")),
                });
                break;
            }
        }
    }
    report.elapsed_ms = elapsed(start, args.timing);
    Ok(emit_report(&report))
}

fn verify(
    model: &Path,
    spec: Option<SpecKind>,
    mut opts: VerifyOptions,
    output: Option<&Path>,
    timing: bool,
) -> Result<u8, Fail> {
    let text = fs::read_to_string(model).map_err(|e| usage(format!("{}: {e}", model.display())))?;
    let p = modelcheck::parse_program(&text).map_err(|e| usage(format!("{}: {e}", model.display())))?;
    let kind = match (spec, p.spec) {
        (Some(a), Some(b)) if a != b => {
            return Err(usage(format!("the model is written for {b}, not {a}")))
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(usage("the model has no `spec` line; pass --spec")),
    };
    if let Threads::Fixed(0) = opts.threads {
        opts.threads = Threads::Fixed(p.threads.unwrap_or(2));
    }
    let spec = builtin(kind);
    let start = Instant::now();
    let verdict = modelcheck::verify(&p, &spec, &opts).map_err(|e| usage(e.to_string()))?;
    let scope = match opts.threads {
        Threads::Fixed(k) => format!("{k} threads"),
        Threads::Unbounded { pending } => {
            format!("any number of threads, at most {pending} operations open at once")
        }
    };
    let mut report = RunReport {
        command: "verify",
        spec: spec.name.clone(),
        outcome: Outcome::Linearizable,
        violation: None,
        counts: Counts::default(),
        note: Some(scope),
        elapsed_ms: None,
        counterexample: None,
    };
    match verdict {
        ModelVerdict::Linearizable => {}
        ModelVerdict::Inconclusive(why) => {
            report.outcome = Outcome::Inconclusive;
            report.note = Some(format!("{}: {why}", report.note.unwrap_or_default()));
        }
        ModelVerdict::Violation {
            execution,
            violation,
            ..
        } => {
            report.outcome = Outcome::Violation;
            report.violation = Some(violation);
            if let Ok(h) = execution.history() {
                report.counts = counts(&h, 0);
            }
            match output {
                Some(path) => trace::write_trace(&execution, path).map_err(|e| usage(e.to_string()))?,
                None => {
                    report.counterexample = Some(
                        trace::to_string(&execution)
                            .lines()
                            .map(|l| serde_json::from_str(l).expect("trace line"))
                            .collect(),
                    )
                }
            }
        }
    }
    report.elapsed_ms = elapsed(start, timing);
    Ok(emit_report(&report))
}

fn describe(h: &History, op: &linrv::OpId) -> String {
    match h.index_of(op) {
        Some(i) => format!("{} {}", op, h.ops()[i].event),
        None => op.to_string(),
    }
}

fn explain(spec: Specification, path: &Path) -> Result<u8, Fail> {
    let (_, h) = load(path, &spec)?;
    let found = monitor::check_all(&h, &spec).map_err(|e| usage(e.to_string()))?;
    let mut out = String::new();
    let rules: Vec<&str> = spec.rules.iter().map(|r| r.name.as_str()).collect();
    out.push_str(&format!(
        "{} operations over {} values, checked against the {} rules {}.\n",
        h.len(),
        h.dom().len(),
        spec.name,
        rules.join(", ")
    ));
    if found.is_empty() {
        out.push_str("Linearizable: no rule is violated by any projection of the trace.\n");
        print!("{out}");
        return Ok(0);
    }
    for v in &found {
        let values: Vec<String> = v.witnesses.iter().map(|w| w.to_string()).collect();
        out.push_str(&format!(
            "\nRule {} is violated on values {}.\n",
            v.rule,
            values.join(" and ")
        ));
        if let Some(o) = &v.op {
            out.push_str(&format!("  Operation {} cannot be placed.\n", describe(&h, o)));
        }
        out.push_str(&format!("  {}\n", v.reason));
        for e in &v.evidence {
            out.push_str(&format!(
                "  {} returns before {} is called.\n",
                describe(&h, &e.from_op),
                describe(&h, &e.to_op)
            ));
        }
    }
    print!("{out}");
    Ok(1)
}
