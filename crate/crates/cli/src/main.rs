//! `privft`: key generation, per-op benchmarks, error sweeps and federated fine-tuning.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use priv_ft_core::dealer::bundle::{to_bytes, write_bundle};
use priv_ft_core::fedtune::{self, Dataset, FedConfig, FedError, TruncSchedule};
use priv_ft_core::nn;
use priv_ft_core::oracle::mean_rel_err;
use priv_ft_core::runner::{self, Backend, Op, RunConfig, RunError};
use priv_ft_core::transport::tcp_channel;
use priv_ft_core::{RingConfig, RingTensor, RingWord, TruncMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "privft", version, about = "Two-party secure fine-tuning toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the two parties' key bundles for one operation.
    Keygen(Common),
    /// Run one operation, check it against the plaintext reference and report bits.
    Bench(Common),
    /// Mean relative error sweeps over iteration counts and truncation modes.
    Error(Common),
    /// Federated fine-tuning of the classification head.
    Finetune(FinetuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TruncArg {
    Lt,
    It,
    Staged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mem,
    Tcp,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Mem => Backend::Mem,
            BackendArg::Tcp => Backend::Tcp,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "exp")]
    op: String,
    /// Element count (rows for softmax).
    #[arg(long, alias = "count", default_value_t = 1000)]
    size: usize,
    #[arg(long, default_value_t = 64)]
    l: u32,
    #[arg(long, default_value_t = 16)]
    s: u32,
    /// Iterations (exp, power, softmax); the column count M for tp; 0 picks the default.
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long = "m-recip", default_value_t = 0)]
    m_recip: usize,
    /// Softmax row length.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Dropout probability.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Row count N for tp.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, value_enum)]
    trunc: Option<TruncArg>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mem")]
    backend: BackendArg,
    /// Run as party 0, listening on host:port.
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    /// Run as party 1, connecting to host:port.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct FinetuneArgs {
    /// CSV dataset (`f1,...,fd,label`); synthetic two-class data when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `key = value` run manifest; flags given on the command line override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Head definition file.
    #[arg(long)]
    head: Option<PathBuf>,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Synthetic raw input dimension.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    trunc: Option<TruncArg>,
    /// First interactive round for --trunc staged.
    #[arg(long)]
    switch: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "m-recip")]
    m_recip: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "mem")]
    backend: BackendArg,
    /// Print per-round accuracy of the current parameters.
    #[arg(long = "debug-restore")]
    debug_restore: bool,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Fail {
    Usage(String),
    Verify(String),
    Transport(String),
}

impl From<RunError> for Fail {
    fn from(e: RunError) -> Fail {
        if e.is_transport() {
            Fail::Transport(e.to_string())
        } else {
            Fail::Usage(e.to_string())
        }
    }
}

impl From<FedError> for Fail {
    fn from(e: FedError) -> Fail {
        if e.is_transport() {
            Fail::Transport(e.to_string())
        } else {
            Fail::Usage(e.to_string())
        }
    }
}

/// Ordered key=value report.
#[derive(Default)]
struct Report {
    fields: Vec<(String, Value)>,
}

impl Report {
    fn put(&mut self, k: &str, v: impl Into<Value>) -> &mut Self {
        self.fields.push((k.to_string(), v.into()));
        self
    }

    fn line(&self) -> String {
        let mut s = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            let v = match v {
                Value::String(t) => t.clone(),
                other => other.to_string(),
            };
            let _ = write!(s, "{}{k}={v}", if i == 0 { "" } else { " " });
        }
        s
    }

    fn json(&self) -> Value {
        Value::Object(self.fields.iter().cloned().collect::<Map<_, _>>())
    }
}

fn emit(lines: &[Report], json: bool, out: Option<&Path>) -> Result<(), Fail> {
    let text = if json {
        let v: Vec<Value> = lines.iter().map(Report::json).collect();
        serde_json::to_string_pretty(&Value::Array(v)).expect("json") + "\n"
    } else {
        lines.iter().map(|r| r.line() + "\n").collect()
    };
    print!("{text}");
    if let Some(p) = out {
        std::fs::write(p, &text).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn mode(t: TruncArg) -> TruncMode {
    if t == TruncArg::Lt {
        TruncMode::Local
    } else {
        TruncMode::Interactive
    }
}

fn mode_name(m: TruncMode) -> &'static str {
    if m == TruncMode::Local {
        "lt"
    } else {
        "it"
    }
}

fn ring(c: &Common) -> Result<RingConfig, Fail> {
    RingConfig::new(c.l, c.s).map_err(|e| Fail::Usage(e.to_string()))
}

fn parse_op(c: &Common) -> Result<Op, Fail> {
    let m = if c.op == "tp" { 0 } else { c.m };
    Op::parse(&c.op, m, c.m_recip, c.p).ok_or_else(|| Fail::Usage(format!("unknown op {}", c.op)))
}

fn run_config(c: &Common, trunc: TruncMode) -> Result<RunConfig, Fail> {
    let mut rc = RunConfig::new(ring(c)?, trunc, c.seed);
    rc.backend = c.backend.into();
    rc.baseline = c.baseline;
    Ok(rc)
}

/// Input shapes of an operation.
fn shapes(op: &Op, c: &Common) -> (Vec<usize>, Option<Vec<usize>>) {
    match op {
        Op::Tp => (vec![c.n], Some(vec![if c.m == 0 { c.n } else { c.m }])),
        Op::Mul => (vec![c.size], Some(vec![c.size])),
        Op::Softmax { .. } => (vec![c.size, c.k], None),
        _ => (vec![c.size], None),
    }
}

/// Input range used by the benchmarks.
fn input_range(op: &Op) -> (f64, f64) {
    match op {
        Op::Exp { .. } | Op::Power { .. } => (0.0, 1.0),
        Op::Recip { init: None, .. } => (0.05, 1.0),
        Op::Recip { .. } => (0.5, 1.5),
        Op::Sigmoid { .. } => (-4.0, 4.0),
        Op::Tanh { .. } | Op::Softmax { .. } | Op::DropoutStatic { .. } | Op::DropoutDynamic { .. } | Op::LessThan | Op::Relu => (-2.0, 2.0),
        Op::Mul | Op::Square | Op::Tp => (-1.0, 1.0),
    }
}

/// Float tolerance for the baselines, which do not share the gate schedule.
fn baseline_tol(op: &Op) -> f64 {
    match op {
        Op::Exp { .. } => 1e-2,
        Op::Recip { .. } | Op::Sigmoid { .. } => 2e-2,
        Op::Tanh { .. } => 3e-2,
        Op::Softmax { .. } => 5e-2,
        _ => 1e-3,
    }
}

fn uniform(n: usize, (lo, hi): (f64, f64), seed: u64) -> Vec<f64> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

fn keygen<W: RingWord>(c: &Common) -> Result<Vec<Report>, Fail> {
    let op = parse_op(c)?;
    let rc = run_config(c, TruncMode::Interactive)?;
    let (xs, ys) = shapes(&op, c);
    let (b0, b1) = runner::deal_bundles::<W>(&op, &rc, &xs, ys.as_deref().unwrap_or(&[]))?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Fail::Usage(format!("{}: {e}", dir.display())))?;
    let mut rep = Report::default();
    rep.put("op", op.name()).put("count", xs.iter().product::<usize>() as u64).put("l", c.l).put("s", c.s);
    match op {
        Op::Softmax { m } => {
            rep.put("k", c.k as u64).put("m", m as u64);
        }
        Op::Exp { m } | Op::Power { m } => {
            rep.put("m", m as u64);
        }
        Op::Recip { m, m_exp, .. } => {
            rep.put("m_recip", m as u64).put("m_exp", m_exp as u64);
        }
        Op::Sigmoid { m_exp, m_recip } | Op::Tanh { m_exp, m_recip } => {
            rep.put("m_exp", m_exp as u64).put("m_recip", m_recip as u64);
        }
        Op::Tp => {
            rep.put("n", xs[0] as u64).put("m", ys.as_ref().map_or(0, |y| y[0]) as u64);
        }
        _ => {}
    }
    rep.put("baseline", c.baseline).put("seed", c.seed);
    for b in [&b0, &b1] {
        let path = dir.join(format!("party{}.keys", b.party));
        write_bundle(b, &path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
        rep.put(&format!("party{}_gates", b.party), b.keys.len() as u64);
        rep.put(&format!("party{}_bytes", b.party), to_bytes(b).len() as u64);
        rep.put(&format!("party{}_file", b.party), path.display().to_string());
    }
    Ok(vec![rep])
}

fn bench<W: RingWord>(c: &Common) -> Result<Vec<Report>, Fail> {
    let op = parse_op(c)?;
    let trunc = mode(c.trunc.unwrap_or(TruncArg::It));
    let mut rc = run_config(c, trunc)?;
    let (xs, ys) = shapes(&op, c);
    let nx: usize = xs.iter().product();
    rc.forced_r = matches!(op, Op::DropoutStatic { .. } | Op::DropoutDynamic { .. }).then(|| uniform(nx, (0.0, 1.0), c.seed ^ 0xd0));
    let range = input_range(&op);
    let xt = RingTensor::<W>::from_reals(&uniform(nx, range, c.seed), &xs, rc.cfg).map_err(|e| Fail::Usage(e.to_string()))?;
    let yt = match &ys {
        Some(s) => Some(RingTensor::<W>::from_reals(&uniform(s.iter().product(), range, c.seed + 1), s, rc.cfg).map_err(|e| Fail::Usage(e.to_string()))?),
        None => None,
    };
    let start = Instant::now();
    let party = match (&c.listen, &c.connect) {
        (Some(_), _) => Some(0u8),
        (_, Some(_)) => Some(1u8),
        _ => None,
    };
    let (output, report, backend) = match party {
        None => {
            let o = runner::run_op_ring(&op, &rc, &xt, yt.as_ref())?;
            (Some(o.output), o.report, if rc.backend == Backend::Tcp { "tcp" } else { "mem" })
        }
        Some(p) => {
            let addr = c.listen.as_deref().or(c.connect.as_deref()).unwrap_or_default();
            let chan = tcp_channel(p, addr).map_err(|e| Fail::Transport(e.to_string()))?;
            let (o, rep, _) = runner::run_party(&op, &rc, p, chan, &xt, yt.as_ref())?;
            (o, rep, "tcp")
        }
    };
    let elapsed = start.elapsed();
    let measured = report.total_excluding(op.name(), priv_ft_core::proto::CMP).payload_bits();
    let total = report.total(op.name());
    let y_shape = ys.clone().unwrap_or_default();
    let formula = op.cost(c.baseline, &xs, &y_shape).map(|k| k.bits(c.l, trunc));
    let mut rep = Report::default();
    rep.put("op", op.name())
        .put("size", nx as u64)
        .put("trunc", mode_name(trunc))
        .put("backend", backend)
        .put("baseline", c.baseline)
        .put("measured_bits", measured)
        .put("formula_bits", formula.map_or(Value::Null, Value::from))
        .put("total_bits", total.payload_bits())
        .put("header_bits", total.header_bits())
        .put("messages", total.messages())
        .put("rounds", total.rounds)
        .put("time_ms", (elapsed.as_secs_f64() * 1e3 * 1000.0).round() / 1000.0);
    if let Some(p) = party {
        rep.put("party", p as u64);
    }
    let mut failures = Vec::new();
    if formula.is_some_and(|f| f != measured) {
        failures.push("bits");
    }
    if let Some(out) = &output {
        let v = runner::verify(&op, &rc, &xt, yt.as_ref(), out, baseline_tol(&op))?;
        rep.put("verified", v.passed as u64).put("max_floor_dev_lsb", v.max_floor_dev as i64);
        if !v.ok() {
            failures.push("oracle");
        }
    }
    rep.put("status", if failures.is_empty() { "pass".to_string() } else { format!("fail:{}", failures.join(",")) });
    let lines = vec![rep];
    if failures.is_empty() {
        Ok(lines)
    } else {
        emit(&lines, c.json, c.out.as_deref())?;
        Err(Fail::Verify(format!("{} violated", failures.join(" and "))))
    }
}

/// Exact reference of the swept functions.
fn exact(op: &Op, x: f64) -> f64 {
    match op {
        Op::Exp { .. } => x.exp(),
        Op::Recip { .. } => 1.0 / x,
        Op::Sigmoid { .. } => 1.0 / (1.0 + (-x).exp()),
        Op::Tanh { .. } => x.tanh(),
        _ => f64::NAN,
    }
}

fn error_sweep<W: RingWord>(c: &Common) -> Result<Vec<Report>, Fail> {
    let base = parse_op(c)?;
    let modes: Vec<TruncMode> = match c.trunc {
        Some(t) => vec![mode(t)],
        None => vec![TruncMode::Interactive, TruncMode::Local],
    };
    let ops: Vec<Op> = match base {
        Op::Exp { m } => (1..=m).map(|m| Op::Exp { m }).collect(),
        Op::Recip { init: None, m_exp, .. } => (1..=if c.m_recip == 0 { 15 } else { c.m_recip }).map(|m| Op::Recip { m, init: None, m_exp }).collect(),
        Op::Sigmoid { .. } | Op::Tanh { .. } | Op::Softmax { .. } => vec![base.clone()],
        _ => return Err(Fail::Usage(format!("error sweeps cover exp, recip, sigmoid, tanh and softmax, not {}", base.name()))),
    };
    let n = c.size;
    let mut reps = Vec::new();
    for trunc in modes {
        for op in &ops {
            let mut rc = run_config(c, trunc)?;
            rc.baseline = false;
            let (x, shape): (Vec<f64>, Vec<usize>) = match op {
                Op::Softmax { .. } => (uniform(n * c.k, (0.0, 1.0), c.seed), vec![n, c.k]),
                _ => (uniform(n, (0.0, 1.0), c.seed).into_iter().map(|v| if v == 0.0 { f64::MIN_POSITIVE } else { v }).collect(), vec![n]),
            };
            let start = Instant::now();
            let out = runner::run_op::<W>(op, &rc, &x, &shape, None)?;
            let got = out.reals();
            let want: Vec<f64> = match op {
                Op::Softmax { .. } => x
                    .chunks(c.k)
                    .flat_map(|row| {
                        let z: f64 = row.iter().map(|v| v.exp()).sum();
                        row.iter().map(move |v| v.exp() / z).collect::<Vec<_>>()
                    })
                    .collect(),
                _ => x.iter().map(|&v| exact(op, v)).collect(),
            };
            let mut rep = Report::default();
            rep.put("op", op.name());
            match op {
                Op::Exp { m } | Op::Softmax { m } => {
                    rep.put("m", *m as u64);
                }
                Op::Recip { m, m_exp, .. } => {
                    rep.put("m_recip", *m as u64).put("m_exp", *m_exp as u64);
                }
                Op::Sigmoid { m_exp, m_recip } | Op::Tanh { m_exp, m_recip } => {
                    rep.put("m_exp", *m_exp as u64).put("m_recip", *m_recip as u64);
                }
                _ => {}
            }
            rep.put("trunc", mode_name(trunc))
                .put("samples", n as u64)
                .put("mean_rel_err", mean_rel_err(&got, &want, 1e-12))
                .put("time_ms", (start.elapsed().as_secs_f64() * 1e3).round());
            reps.push(rep);
        }
    }
    Ok(reps)
}

fn read(p: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(p).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))
}

fn finetune(a: &FinetuneArgs) -> Result<Vec<Report>, Fail> {
    let mut c = match &a.manifest {
        Some(p) => FedConfig::parse_manifest(&read(p)?)?,
        None => FedConfig::default(),
    };
    if let Some(v) = a.clients {
        c.clients = v;
    }
    if let Some(v) = a.rounds {
        c.rounds = v;
    }
    if let Some(v) = a.batch {
        c.batch = v;
    }
    if let Some(v) = a.lr {
        c.lr = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.m {
        c.approx.m_exp = v;
    }
    if let Some(v) = a.m_recip {
        c.approx.m_recip = v;
    }
    let switch = a.switch.unwrap_or(match c.trunc {
        TruncSchedule::Staged { switch } => switch,
        _ => c.rounds / 2,
    });
    c.trunc = match a.trunc {
        Some(TruncArg::Staged) => TruncSchedule::Staged { switch },
        Some(t) => TruncSchedule::Fixed(mode(t)),
        None => match c.trunc {
            TruncSchedule::Staged { .. } => TruncSchedule::Staged { switch },
            t => t,
        },
    };
    c.backend = a.backend.into();
    let data = match &a.data {
        Some(p) => Dataset::parse_csv(&read(p)?)?,
        None => Dataset::synthetic(a.size, a.n, c.seed),
    };
    if let Some(p) = &a.head {
        let dims = nn::head_dims(&nn::parse_head(&read(p)?).map_err(Fail::Usage)?).map_err(Fail::Usage)?;
        if dims.classes != data.classes() {
            return Err(Fail::Usage(format!("head has {} classes, dataset {}", dims.classes, data.classes())));
        }
        c.feat_dim = dims.d_in;
        c.hidden = dims.hidden;
    }
    let start = Instant::now();
    let run = fedtune::run_secure::<u64>(&c, &data)?;
    let secure_time = start.elapsed();
    let plain = fedtune::run_plain::<u64>(&c, &data)?;
    let mut reps = Vec::new();
    for (log, p) in run.logs.iter().zip(&plain.logs) {
        let mut r = Report::default();
        r.put("round", log.round as u64).put("trunc", mode_name(log.trunc));
        r.put("upload_bytes", log.upload_bytes.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","));
        r.put("session_bits", log.session_bits.iter().sum::<u64>());
        if a.debug_restore {
            r.put("accuracy", log.accuracy).put("plain_accuracy", p.accuracy);
        }
        reps.push(r);
    }
    let mut r = Report::default();
    r.put("clients", c.clients as u64)
        .put("rounds", c.rounds as u64)
        .put("samples", data.len() as u64)
        .put("final_accuracy", run.final_accuracy)
        .put("plain_final_accuracy", plain.final_accuracy)
        .put("gap_points", ((run.final_accuracy - plain.final_accuracy) * 100.0).abs())
        .put("time_ms", (secure_time.as_secs_f64() * 1e3).round());
    reps.push(r);
    Ok(reps)
}

fn dispatch<F32, F64>(c: &Common, f32: F32, f64: F64) -> Result<Vec<Report>, Fail>
where
    F32: Fn(&Common) -> Result<Vec<Report>, Fail>,
    F64: Fn(&Common) -> Result<Vec<Report>, Fail>,
{
    match c.l {
        32 => f32(c),
        64 => f64(c),
        l => Err(Fail::Usage(format!("--l must be 32 or 64, got {l}"))),
    }
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Verify(_) => 1,
            Fail::Usage(_) => 2,
            Fail::Transport(_) => 3,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Fail> {
    let (res, json, out) = match &cli.cmd {
        Cmd::Keygen(c) => (dispatch(c, keygen::<u32>, keygen::<u64>), c.json, None),
        Cmd::Bench(c) => (dispatch(c, bench::<u32>, bench::<u64>), c.json, c.out.clone()),
        Cmd::Error(c) => (dispatch(c, error_sweep::<u32>, error_sweep::<u64>), c.json, c.out.clone()),
        Cmd::Finetune(a) => (finetune(a), a.json, a.out.clone()),
    };
    res.and_then(|lines| emit(&lines, json, out.as_deref()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Fail::Verify(m) => eprintln!("verification failed: {m}"),
                Fail::Usage(m) => eprintln!("error: {m}"),
                Fail::Transport(m) => eprintln!("transport error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &str) -> Cli {
        Cli::try_parse_from(std::iter::once("privft").chain(args.split_whitespace())).unwrap()
    }

    fn lines(args: &str) -> Result<Vec<String>, u8> {
        let c = cli(args);
        let r = match &c.cmd {
            Cmd::Keygen(c) => dispatch(c, keygen::<u32>, keygen::<u64>),
            Cmd::Bench(c) => dispatch(c, bench::<u32>, bench::<u64>),
            Cmd::Error(c) => dispatch(c, error_sweep::<u32>, error_sweep::<u64>),
            Cmd::Finetune(a) => finetune(a),
        };
        r.map(|v| v.iter().map(Report::line).collect()).map_err(|f| f.code())
    }

    fn field<'a>(line: &'a str, key: &str) -> &'a str {
        line.split(' ').find_map(|kv| kv.strip_prefix(&format!("{key}="))).unwrap_or_else(|| panic!("{key} missing in {line}"))
    }

    #[test]
    fn keygen_is_byte_identical_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for d in [&a, &b] {
            let l = lines(&format!("keygen --op exp --count 200 --m 8 --seed 7 --out {}", d.display())).unwrap();
            assert_eq!(field(&l[0], "m"), "8");
        }
        for f in ["party0.keys", "party1.keys"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
        let l = lines(&format!("keygen --op softmax --count 10 --k 4 --m 16 --out {}", a.display())).unwrap();
        assert_eq!((field(&l[0], "k"), field(&l[0], "m")), ("4", "16"));
    }

    #[test]
    fn bench_reports_formula_bits() {
        let l = lines("bench --op exp --size 1000").unwrap();
        assert_eq!(field(&l[0], "measured_bits"), "1600000");
        assert_eq!((field(&l[0], "verified"), field(&l[0], "status")), ("1000", "pass"));
        let l = lines("bench --op tp --n 32 --m 32 --baseline").unwrap();
        assert_eq!(field(&l[0], "measured_bits"), "327680");
        let l = lines("bench --op square --size 64 --l 32 --s 8").unwrap();
        assert_eq!(field(&l[0], "measured_bits"), (64 * 3 * 32).to_string());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(lines("bench --op nope").unwrap_err(), 2);
        assert_eq!(lines("error --op mul --size 10").unwrap_err(), 2);
        assert_eq!(lines("bench --op exp --l 48").unwrap_err(), 2);
        assert!(Cli::try_parse_from(["privft", "bench", "--trunc", "xx"]).is_err());
    }

    #[test]
    fn refused_connection_exits_three() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        assert_eq!(lines(&format!("bench --op square --size 4 --connect 127.0.0.1:{port}")).unwrap_err(), 3);
    }

    #[test]
    fn error_sweep_lists_each_iteration_count() {
        let l = lines("error --op exp --size 500 --m 3 --trunc it").unwrap();
        assert_eq!(l.len(), 3);
        let e: Vec<f64> = l.iter().map(|s| field(s, "mean_rel_err").parse().unwrap()).collect();
        assert!(e[0] > e[1] && e[1] > e[2]);
    }

    #[test]
    fn finetune_reads_manifest_head_and_data() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        std::fs::write(p("m.txt"), "clients = 2\nrounds = 4\nlr = 1.0\ntrunc = staged\nswitch = 2\n").unwrap();
        std::fs::write(p("head.txt"), "linear 8 6\ntanh\nlinear 6 2\nsoftmax\n").unwrap();
        let rows: String = (0..40)
            .map(|i| {
                let y = i % 2;
                let v = if y == 1 { 0.8 } else { -0.8 };
                format!("{v},{},{},{},{y}\n", 0.1 * (i % 5) as f64, -0.2, v / 2.0)
            })
            .collect();
        std::fs::write(p("d.csv"), format!("# f1,f2,f3,f4,label\n{rows}")).unwrap();
        let args = format!("finetune --data {} --manifest {} --head {} --debug-restore", p("d.csv").display(), p("m.txt").display(), p("head.txt").display());
        let l = lines(&args).unwrap();
        assert_eq!(l.len(), 5);
        assert!(l[0].contains("trunc=lt") && l[3].contains("trunc=it"), "{l:?}");
        assert!(l[0].contains("accuracy="));
        let acc: f64 = field(&l[4], "final_accuracy").parse().unwrap();
        assert!(acc >= 0.9, "{acc}");
        let l = lines(&format!("{args} --rounds 2")).unwrap();
        assert_eq!(l.len(), 3);

        std::fs::write(p("bad.txt"), "colour = red\n").unwrap();
        assert_eq!(lines(&format!("finetune --manifest {}", p("bad.txt").display())).unwrap_err(), 2);
        std::fs::write(p("bad_head.txt"), "linear 8 6\nsoftmax\n").unwrap();
        assert_eq!(lines(&format!("finetune --head {}", p("bad_head.txt").display())).unwrap_err(), 2);
        assert_eq!(lines("finetune --clients 1").unwrap_err(), 2);
    }
}
