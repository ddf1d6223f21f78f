//! Cross-evaluation of component pools in child processes.
//!
//! Candidate components never run inside this process. Each execution
//! launches `<runner> <role> <component-path>`, writes one JSON document to
//! the child's stdin and reads exactly one line back. Every failure mode
//! (launch failure, nonzero exit, timeout, oversized or malformed output)
//! becomes a non-interpretable cell rather than an error.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wait_timeout::ChildExt;

use crate::domain::{parse_report, Component, ComponentKind, FailureReason, PairOutcome, Pools, RawResults, TripleOutcome};
use crate::wscp::WscpInstance;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecLimits {
    #[serde(with = "secs")]
    pub solver_timeout: Duration,
    #[serde(with = "secs")]
    pub test_timeout: Duration,
    pub max_output: usize,
    pub max_workers: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            solver_timeout: Duration::from_secs(10),
            test_timeout: Duration::from_secs(5),
            max_output: 1 << 20,
            max_workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<()> {
        if self.solver_timeout.is_zero() || self.test_timeout.is_zero() || self.max_output == 0 || self.max_workers == 0 {
            return Err(Error::InvalidInput("execution limits must be positive".into()));
        }
        Ok(())
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

/// The program that adapts a component script to the runner protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Runner {
    pub program: PathBuf,
    /// Arguments placed before `<role> <component-path>`.
    #[serde(default)]
    pub args: Vec<String>,
}

impl Runner {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }

    /// Parses a whitespace-separated command line such as `python3 runner.py`.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidInput("empty runner command".into()))?;
        Ok(Self {
            program: program.into(),
            args: parts.map(str::to_string).collect(),
        })
    }
}

/// Structural check applied to instance payloads before any solver runs.
pub trait InstanceSchema: Send + Sync {
    fn accepts(&self, payload: &[u8]) -> bool;
}

/// Accepts any JSON document.
#[derive(Debug, Default, Clone, Copy)]
pub struct AnyJson;

impl InstanceSchema for AnyJson {
    fn accepts(&self, payload: &[u8]) -> bool {
        serde_json::from_slice::<Value>(payload).is_ok()
    }
}

/// K-robust weighted set cover instance documents.
#[derive(Debug, Default, Clone, Copy)]
pub struct WscpSchema;

impl InstanceSchema for WscpSchema {
    fn accepts(&self, payload: &[u8]) -> bool {
        WscpInstance::decode(payload).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Solve,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Solve => "solve",
            Role::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ChildOutcome {
    Exited { success: bool, stdout: Vec<u8> },
    TimedOut,
    LaunchFailed,
    Overflow,
}

/// Executes components through a [`Runner`] under [`ExecLimits`].
pub struct Harness {
    runner: Runner,
    limits: ExecLimits,
    schema: Arc<dyn InstanceSchema>,
    workdir: tempfile::TempDir,
}

impl Harness {
    pub fn new(runner: Runner, limits: ExecLimits) -> Result<Self> {
        limits.validate()?;
        Ok(Self {
            runner,
            limits,
            schema: Arc::new(AnyJson),
            workdir: tempfile::tempdir()?,
        })
    }

    pub fn with_schema(mut self, schema: impl InstanceSchema + 'static) -> Self {
        self.schema = Arc::new(schema);
        self
    }

    pub fn limits(&self) -> &ExecLimits {
        &self.limits
    }

    /// Writes the component payload to the work directory (once) and returns its path.
    fn stage(&self, c: &Component) -> Result<PathBuf> {
        let mut h = DefaultHasher::new();
        c.id.hash(&mut h);
        c.payload.hash(&mut h);
        let ext = c.extension.as_deref().unwrap_or("txt");
        let name = format!("{}-{:016x}.{ext}", c.kind, h.finish());
        let path = self.workdir.path().join(name);
        if !path.exists() {
            let mut tmp = tempfile::NamedTempFile::new_in(self.workdir.path())?;
            tmp.write_all(&c.payload)?;
            tmp.persist(&path).map_err(|e| e.error)?;
        }
        Ok(path)
    }

    fn run(&self, role: Role, path: &Path, input: &[u8], timeout: Duration) -> ChildOutcome {
        run_child(&self.runner, role, path, input, timeout, self.limits.max_output)
    }

    /// Runs `solver` on `instance`.
    pub fn evaluate_pair(&self, solver: &Component, instance: &Component) -> PairOutcome {
        debug_assert_eq!(solver.kind, ComponentKind::Solver);
        debug_assert_eq!(instance.kind, ComponentKind::Instance);
        if solver.is_placeholder() || instance.is_placeholder() || !self.schema.accepts(&instance.payload) {
            return PairOutcome::failed(FailureReason::CompileError);
        }
        let Ok(instance_doc) = serde_json::from_slice::<Value>(&instance.payload) else {
            return PairOutcome::failed(FailureReason::CompileError);
        };
        let Ok(path) = self.stage(solver) else {
            return PairOutcome::failed(FailureReason::RuntimeError);
        };
        let input = json!({ "instance": instance_doc }).to_string();
        match self.run(Role::Solve, &path, input.as_bytes(), self.limits.solver_timeout) {
            ChildOutcome::Exited { success: true, stdout } => match parse_report(&stdout) {
                Ok(report) => PairOutcome::reported(report),
                Err(reason) => PairOutcome::failed(reason),
            },
            ChildOutcome::Exited { success: false, .. } | ChildOutcome::LaunchFailed => {
                PairOutcome::failed(FailureReason::RuntimeError)
            }
            ChildOutcome::TimedOut => PairOutcome::failed(FailureReason::Timeout),
            ChildOutcome::Overflow => PairOutcome::failed(FailureReason::MalformedReport),
        }
    }

    /// Runs `test` on the solution of an interpretable pair.
    pub fn evaluate_triple(&self, test: &Component, instance: &Component, pair: &PairOutcome) -> TripleOutcome {
        debug_assert_eq!(test.kind, ComponentKind::Test);
        if !pair.interpretable {
            return TripleOutcome::BROKEN;
        }
        let Some(report) = pair.report.as_ref().filter(|r| r.has_solution()) else {
            return TripleOutcome::NO_SOLUTION;
        };
        if test.is_placeholder() {
            return TripleOutcome::BROKEN;
        }
        let (Ok(instance_doc), Ok(path)) = (serde_json::from_slice::<Value>(&instance.payload), self.stage(test)) else {
            return TripleOutcome::BROKEN;
        };
        let input = json!({
            "instance": instance_doc,
            "solution": report.solution(),
            "objective": report.objective(),
        })
        .to_string();
        match self.run(Role::Test, &path, input.as_bytes(), self.limits.test_timeout) {
            ChildOutcome::Exited { success: true, stdout } => match std::str::from_utf8(&stdout).map(str::trim) {
                Ok("true") => TripleOutcome::verdict(true),
                Ok("false") => TripleOutcome::verdict(false),
                _ => TripleOutcome::BROKEN,
            },
            _ => TripleOutcome::BROKEN,
        }
    }
}

fn run_child(runner: &Runner, role: Role, path: &Path, input: &[u8], timeout: Duration, max_output: usize) -> ChildOutcome {
    let mut cmd = Command::new(&runner.program);
    cmd.args(&runner.args)
        .arg(role.as_str())
        .arg(path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let Ok(mut child) = cmd.spawn() else {
        return ChildOutcome::LaunchFailed;
    };

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let input = input.to_vec();
    // A child that never reads its input must not block us; write errors (EPIPE) are irrelevant.
    std::thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });

    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let res = (&mut stdout).take(max_output as u64 + 1).read_to_end(&mut buf);
        let _ = tx.send(res.map(|_| buf));
    });

    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) | Err(_) => {
            kill_tree(&mut child);
            return ChildOutcome::TimedOut;
        }
    };
    // Grandchildren may still hold the pipe open; give the reader a short grace period.
    let out = match rx.recv_timeout(Duration::from_millis(500)) {
        Ok(Ok(buf)) => buf,
        _ => {
            kill_tree(&mut child);
            return ChildOutcome::TimedOut;
        }
    };
    if out.len() > max_output {
        return ChildOutcome::Overflow;
    }
    ChildOutcome::Exited {
        success: status.success(),
        stdout: out,
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    unsafe {
        // The child leads its own process group.
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Executes every solver on every instance, then every test on every
/// reported solution. Cells are independent and evaluated on a bounded
/// worker pool; the result does not depend on scheduling.
pub fn cross_evaluate(pools: &Pools, harness: &Harness) -> Result<RawResults> {
    let (ns, ni, nt) = pools.sizes();
    for (n, what) in [(ns, "solvers"), (ni, "instances"), (nt, "tests")] {
        if n == 0 {
            return Err(Error::EmptyPool(what));
        }
    }
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(harness.limits.max_workers)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;

    let pairs: Vec<PairOutcome> = workers.install(|| {
        (0..ns * ni)
            .into_par_iter()
            .map(|k| harness.evaluate_pair(&pools.solvers[k / ni], &pools.instances[k % ni]))
            .collect()
    });

    let jobs: Vec<(usize, usize)> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.has_solution())
        .flat_map(|(k, _)| (0..nt).map(move |t| (k, t)))
        .collect();
    let verdicts: Vec<TripleOutcome> = workers.install(|| {
        jobs.par_iter()
            .map(|&(k, t)| harness.evaluate_triple(&pools.tests[t], &pools.instances[k % ni], &pairs[k]))
            .collect()
    });

    let mut triples: Vec<Option<Vec<TripleOutcome>>> = vec![None; ns * ni];
    for (chunk, &(k, _)) in verdicts.chunks(nt).zip(jobs.iter().step_by(nt)) {
        triples[k] = Some(chunk.to_vec());
    }
    RawResults::new(pools.ids(), pairs, triples)
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::domain::{Origin, SolveStatus};

    // Components are shell scripts; the runner is `sh -c 'exec sh "$1"' runner <role> <path>`.
    fn sh_harness(limits: ExecLimits) -> Harness {
        let runner = Runner {
            program: "/bin/sh".into(),
            args: vec!["-c".into(), r#"ROLE="$0" exec /bin/sh "$1""#.into()],
        };
        Harness::new(runner, limits).unwrap()
    }

    fn fast_limits() -> ExecLimits {
        ExecLimits {
            solver_timeout: Duration::from_millis(1500),
            test_timeout: Duration::from_millis(1500),
            max_output: 4096,
            max_workers: 4,
        }
    }

    fn script(id: &str, kind: ComponentKind, body: &str) -> Component {
        Component::new(id, kind, body, Origin::Fixture).unwrap().with_extension("sh")
    }

    fn instance() -> Component {
        Component::new("i0", ComponentKind::Instance, r#"{"n":3}"#, Origin::Fixture).unwrap()
    }

    const GOOD: &str = r#"cat >/dev/null; echo '{"status":"OPTIMAL","objective":4.0,"solution":[0,2]}'"#;

    #[test]
    fn good_solver_reports() {
        let h = sh_harness(fast_limits());
        let p = h.evaluate_pair(&script("s", ComponentKind::Solver, GOOD), &instance());
        assert!(p.interpretable && p.r);
        assert_eq!(p.z, Some(4.0));
        assert_eq!(p.report.unwrap().status(), SolveStatus::Optimal);
    }

    #[test]
    fn failure_modes_classify() {
        let h = sh_harness(fast_limits());
        let inst = instance();
        let cases = [
            ("cat >/dev/null; exit 3", FailureReason::RuntimeError),
            ("sleep 5", FailureReason::Timeout),
            ("cat >/dev/null; echo hello", FailureReason::MalformedReport),
            ("yes '{}' | head -c 100000", FailureReason::MalformedReport),
            ("this is not shell (", FailureReason::RuntimeError),
        ];
        for (body, want) in cases {
            let p = h.evaluate_pair(&script("s", ComponentKind::Solver, body), &inst);
            assert!(!p.interpretable, "{body}");
            assert_eq!(p.failure, Some(want), "{body}");
        }
    }

    #[test]
    fn undecodable_instance_and_placeholder_do_not_launch() {
        let h = sh_harness(fast_limits());
        let bad = Component::new("i", ComponentKind::Instance, "not json", Origin::Fixture).unwrap();
        let p = h.evaluate_pair(&script("s", ComponentKind::Solver, GOOD), &bad);
        assert_eq!(p.failure, Some(FailureReason::CompileError));
        let ph = Component::placeholder("s", ComponentKind::Solver, Origin::Remote, "timeout");
        assert_eq!(h.evaluate_pair(&ph, &instance()).failure, Some(FailureReason::CompileError));
    }

    #[test]
    fn missing_runner_is_runtime_error() {
        let h = Harness::new(Runner::new("/nonexistent/runner"), fast_limits()).unwrap();
        let p = h.evaluate_pair(&script("s", ComponentKind::Solver, GOOD), &instance());
        assert_eq!(p.failure, Some(FailureReason::RuntimeError));
    }

    #[test]
    fn triple_verdicts() {
        let h = sh_harness(fast_limits());
        let inst = instance();
        let pair = h.evaluate_pair(&script("s", ComponentKind::Solver, GOOD), &inst);
        let t_true = script("t", ComponentKind::Test, "cat >/dev/null; echo true");
        let t_false = script("t", ComponentKind::Test, "cat >/dev/null; echo false");
        let t_maybe = script("t", ComponentKind::Test, "cat >/dev/null; echo maybe");
        let t_crash = script("t", ComponentKind::Test, "exit 1");
        // the test sees the solution and objective on stdin
        let t_grep = script("t", ComponentKind::Test, r#"grep -q '"objective":4.0' && echo true || echo false"#);
        assert_eq!(h.evaluate_triple(&t_true, &inst, &pair), TripleOutcome::verdict(true));
        assert_eq!(h.evaluate_triple(&t_false, &inst, &pair), TripleOutcome::verdict(false));
        assert_eq!(h.evaluate_triple(&t_maybe, &inst, &pair), TripleOutcome::BROKEN);
        assert_eq!(h.evaluate_triple(&t_crash, &inst, &pair), TripleOutcome::BROKEN);
        assert_eq!(h.evaluate_triple(&t_grep, &inst, &pair), TripleOutcome::verdict(true));

        let no_sol = h.evaluate_pair(
            &script("s", ComponentKind::Solver, r#"cat >/dev/null; echo '{"status":"INFEASIBLE"}'"#),
            &inst,
        );
        assert!(no_sol.interpretable && !no_sol.r);
        assert_eq!(h.evaluate_triple(&t_crash, &inst, &no_sol), TripleOutcome::NO_SOLUTION);
    }

    #[test]
    fn cross_evaluate_is_complete_and_worker_independent() {
        let pools = Pools {
            solvers: vec![
                script("good", ComponentKind::Solver, GOOD),
                script("crash", ComponentKind::Solver, "exit 1"),
                script("inf", ComponentKind::Solver, r#"cat >/dev/null; echo '{"status":"INFEASIBLE"}'"#),
            ],
            instances: vec![instance(), Component::new("i1", ComponentKind::Instance, "[1]", Origin::Fixture).unwrap()],
            tests: vec![
                script("t0", ComponentKind::Test, "cat >/dev/null; echo true"),
                script("t1", ComponentKind::Test, "cat >/dev/null; echo nope"),
            ],
        };
        let mut one = fast_limits();
        one.max_workers = 1;
        let a = cross_evaluate(&pools, &sh_harness(one)).unwrap();
        let b = cross_evaluate(&pools, &sh_harness(fast_limits())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs().len(), 6);
        assert_eq!(a.triple_count(), 4);
        assert_eq!(a.triple(0, 1, 0), Some(TripleOutcome::verdict(true)));
        assert_eq!(a.triple(0, 1, 1), Some(TripleOutcome::BROKEN));
        assert_eq!(a.triple(1, 0, 0), None);
        assert_eq!(a.triple(2, 0, 1), Some(TripleOutcome::NO_SOLUTION));
    }

    #[test]
    fn empty_pool_rejected() {
        let pools = Pools {
            solvers: vec![],
            instances: vec![instance()],
            tests: vec![],
        };
        assert!(matches!(cross_evaluate(&pools, &sh_harness(fast_limits())), Err(Error::EmptyPool("solvers"))));
    }
}
