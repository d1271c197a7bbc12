//! Differential runner: random scenarios executed both by the encrypted
//! pipeline and by the plaintext oracle, compared after decryption.
//!
//! Every scenario is generated from its own 64-bit seed, which also seeds
//! the encryption randomness, so a counterexample replays exactly from the
//! run seed (for the key) and the scenario seed.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use hedb_core::circuits::noise::{plan_params, Workload};
use hedb_core::circuits::Fault;
use hedb_core::data::{ColumnKind, ColumnSpec, EncryptedRecord, EncryptedTable, TableSchema, Value};
use hedb_core::he::{keygen, seeded_rng, HeError, PublicKey, SecretKey};
use hedb_core::query::{execute, EvalContext, QueryKind, QueryOutput};
use hedb_core::sql::{self, CmpOp, Condition, Literal, QueryAst, QueryResult};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::oracle::{oracle_execute, PlainTable};

pub const MAX_ROWS: usize = 16;
/// Widest predicate column the generator emits: a four-character string.
pub const MAX_PREDICATE_BITS: usize = 32;
const ALPHABET: &[u8] = b"abc";
const KINDS: [QueryKind; 5] = [
    QueryKind::Select,
    QueryKind::Update,
    QueryKind::Delete,
    QueryKind::Count,
    QueryKind::Avg,
];

/// One table, one statement and the match number for SELECT.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub table: PlainTable,
    pub query: QueryAst,
    pub n: u64,
}

impl Scenario {
    pub fn generate(seed: u64) -> Scenario {
        let mut rng = seeded_rng(seed);
        let schema = random_schema(&mut rng);
        let rows = if rng.gen_ratio(1, 25) { 0 } else { rng.gen_range(1..=MAX_ROWS) };
        let mut table = PlainTable::new(schema.clone());
        for _ in 0..rows {
            let row = schema.columns().iter().map(|c| random_value(c, &mut rng)).collect();
            table.push(row).expect("generated values fit");
        }
        let kind = *KINDS.choose(&mut rng).expect("non-empty");
        let predicate = random_condition(&table, &mut rng);
        let mut assignments = Vec::new();
        if kind == QueryKind::Update {
            for c in schema.columns() {
                let v = pick_value(&table, c, &mut rng);
                assignments.push((c.name().to_string(), to_literal(v)));
            }
            assignments.shuffle(&mut rng);
        }
        let target = (kind == QueryKind::Avg).then(|| {
            let uints: Vec<&ColumnSpec> = schema.columns().iter().filter(|c| c.kind() == ColumnKind::Uint).collect();
            uints.choose(&mut rng).expect("schema has a uint column").name().to_string()
        });
        let n = if kind == QueryKind::Select {
            rng.gen_range(1..=rows as u64 + 1)
        } else {
            1
        };
        Scenario {
            seed,
            table,
            query: QueryAst {
                kind,
                table: schema.table_name().to_string(),
                predicate,
                assignments,
                target,
            },
            n,
        }
    }

    pub fn sql(&self) -> String {
        sql::render(&self.query)
    }
}

/// Two to four columns with at least one 4-8 bit uint and one 2-4
/// character string, in random order.
fn random_schema(rng: &mut impl Rng) -> TableSchema {
    let extra = rng.gen_range(0..=2);
    let mut kinds = vec![ColumnKind::Uint, ColumnKind::Str];
    for _ in 0..extra {
        kinds.push(if rng.gen() { ColumnKind::Uint } else { ColumnKind::Str });
    }
    kinds.shuffle(rng);
    let columns = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let name = format!("c{i}");
            match k {
                ColumnKind::Uint => ColumnSpec::uint(&name, rng.gen_range(4..=8)),
                ColumnKind::Str => ColumnSpec::string(&name, rng.gen_range(2..=4)),
            }
            .expect("valid column")
        })
        .collect();
    TableSchema::new("t", columns).expect("valid schema")
}

fn random_value(spec: &ColumnSpec, rng: &mut impl Rng) -> Value {
    match spec.kind() {
        ColumnKind::Uint => Value::Uint(rng.gen_range(0..1u64 << spec.bit_width())),
        ColumnKind::Str => {
            let len = rng.gen_range(0..=spec.chars());
            let s: String = (0..len).map(|_| *ALPHABET.choose(rng).expect("non-empty") as char).collect();
            Value::Str(s)
        }
    }
}

/// A value already in the column most of the time, so predicates match.
fn pick_value(t: &PlainTable, spec: &ColumnSpec, rng: &mut impl Rng) -> Value {
    let (col, _) = t.schema.column(spec.name()).expect("own column");
    if !t.rows.is_empty() && rng.gen_ratio(3, 5) {
        t.rows.choose(rng).expect("non-empty")[col].clone()
    } else {
        random_value(spec, rng)
    }
}

fn to_literal(v: Value) -> Literal {
    match v {
        Value::Uint(u) => Literal::Uint(u),
        Value::Str(s) => Literal::Str(s),
    }
}

/// A wildcard pattern derived from `base`: some characters become `?`,
/// the tail may be cut and replaced by `*`. Positions past the end of
/// `base` are padding and can only be matched by `?`.
fn random_pattern(base: &str, chars: usize, rng: &mut impl Rng) -> String {
    let bytes = base.as_bytes();
    let len = rng.gen_range(0..=chars);
    let mut p: Vec<u8> = (0..len)
        .map(|i| match bytes.get(i) {
            Some(&b) if !rng.gen_ratio(1, 3) => b,
            _ => b'?',
        })
        .collect();
    let star = rng.gen();
    if star {
        p.push(b'*');
    } else if !p.contains(&b'?') {
        match p.len() {
            0 => p.push(b'*'),
            n => p[rng.gen_range(0..n)] = b'?',
        }
    }
    String::from_utf8(p).expect("ascii")
}

fn random_condition(t: &PlainTable, rng: &mut impl Rng) -> Condition {
    let spec = t.schema.columns().choose(rng).expect("non-empty").clone();
    let base = pick_value(t, &spec, rng);
    if let (ColumnKind::Str, true, Value::Str(s)) = (spec.kind(), rng.gen_ratio(1, 3), &base) {
        return Condition {
            column: spec.name().to_string(),
            op: CmpOp::Eq,
            literal: Literal::Str(random_pattern(s, spec.chars(), rng)),
        };
    }
    let op = *[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt].choose(rng).expect("non-empty");
    Condition {
        column: spec.name().to_string(),
        op,
        literal: to_literal(base),
    }
}

/// A disagreement between the encrypted path and the oracle.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub run_seed: u64,
    pub lambda: u32,
    pub fault: Option<Fault>,
    pub scenario_seed: u64,
    pub sql: String,
    pub n: u64,
    pub schema: String,
    pub rows: Vec<Vec<Value>>,
    pub expected: String,
    pub got: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "statement: {} (n = {})", self.sql, self.n)?;
        writeln!(f, "schema:    {}", self.schema)?;
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "row {i:>2}:    {}", cells.join(", "))?;
        }
        writeln!(f, "expected:  {}", self.expected)?;
        writeln!(f, "got:       {}", self.got)?;
        write!(
            f,
            "replay:    hedb-bench diff --seed {} --lambda {} --only {}",
            self.run_seed, self.lambda, self.scenario_seed
        )?;
        if let Some(fault) = self.fault {
            write!(f, " --fault {fault:?}")?;
        }
        Ok(())
    }
}

/// Key material shared by every scenario of a run.
pub struct RunKeys {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

impl RunKeys {
    /// Keys sized for every scenario the generator can emit.
    pub fn generate(seed: u64, lambda: u32) -> Result<Self, HeError> {
        let params = plan_params(
            lambda,
            &Workload {
                rows: MAX_ROWS,
                predicate_bits: MAX_PREDICATE_BITS,
                mutations: 0,
            },
        )?;
        let (sk, pk, _) = keygen(&params, &mut seeded_rng(seed))?;
        Ok(RunKeys { sk, pk })
    }

    fn context(&self) -> EvalContext {
        EvalContext {
            reduction: Some(self.pk.x0().clone()),
            noise_limit: Some(self.pk.params().noise_limit()),
        }
    }
}

fn describe_rows(rows: &[Vec<Value>]) -> String {
    let rows: Vec<String> = rows
        .iter()
        .map(|r| r.iter().map(ToString::to_string).collect::<Vec<_>>().join("|"))
        .collect();
    format!("[{}]", rows.join("; "))
}

/// What a statement leaves behind: its answer, plus the table for mutations.
#[derive(Debug, PartialEq, Eq)]
enum Observed {
    Answer(QueryResult),
    Table(Vec<Vec<Value>>),
}

impl Observed {
    fn describe(&self) -> String {
        match self {
            Observed::Answer(QueryResult::Record(v)) => format!("record {v:?}"),
            Observed::Answer(r) => format!("{r:?}"),
            Observed::Table(rows) => format!("table {}", describe_rows(rows)),
        }
    }
}

fn encrypted_path(s: &Scenario, keys: &RunKeys, fault: Option<Fault>) -> Result<Observed, String> {
    let text = s.sql();
    let ast = sql::parse(&text).map_err(|e| format!("parse: {e}"))?;
    if ast != s.query {
        return Err(format!("parse(render(ast)) differs: {ast:?}"));
    }
    let checked = sql::validate(&ast, &s.table.schema).map_err(|e| format!("validate: {e}"))?;
    let mut rng: ChaCha20Rng = seeded_rng(s.seed.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15);
    let rows = s
        .table
        .rows
        .iter()
        .map(|r| EncryptedRecord::encrypt(r, &s.table.schema, &keys.pk, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("encrypt: {e}"))?;
    let table = EncryptedTable::with_rows(s.table.schema.clone(), rows).map_err(|e| e.to_string())?;
    let q = sql::compile(&checked, s.n, &keys.pk, keys.context(), table.len(), &mut rng)
        .map_err(|e| format!("compile: {e}"))?;
    let ev = keys.context().evaluator().with_fault(fault);
    let out = execute(&table, &q, &ev).map_err(|e| format!("execute: {e}"))?;
    match out {
        QueryOutput::Table(t) => t.decrypt(&keys.sk).map(Observed::Table).map_err(|e| e.to_string()),
        other => sql::decrypt_output(&checked, &other.result_bits(), &keys.sk)
            .map(Observed::Answer)
            .map_err(|e| format!("decrypt: {e}")),
    }
}

fn oracle_path(s: &Scenario) -> Result<Observed, String> {
    let mut t = s.table.clone();
    let r = oracle_execute(&mut t, &s.query, s.n).map_err(|e| e.to_string())?;
    Ok(if s.query.kind.is_mutation() {
        Observed::Table(t.rows)
    } else {
        Observed::Answer(r)
    })
}

/// Runs one scenario through both paths.
pub fn run_scenario(s: &Scenario, keys: &RunKeys, run_seed: u64, fault: Option<Fault>) -> Result<(), Mismatch> {
    let expected = oracle_path(s);
    let got = encrypted_path(s, keys, fault);
    if expected.is_ok() && expected == got {
        return Ok(());
    }
    let show = |r: &Result<Observed, String>| match r {
        Ok(o) => o.describe(),
        Err(e) => format!("error: {e}"),
    };
    Err(Mismatch {
        run_seed,
        lambda: keys.pk.params().lambda(),
        fault,
        scenario_seed: s.seed,
        sql: s.sql(),
        n: s.n,
        schema: s.table.schema.to_lines().trim_end().replace('\n', ", "),
        rows: s.table.rows.clone(),
        expected: show(&expected),
        got: show(&got),
    })
}

#[derive(Debug, Clone)]
pub struct DiffConfig {
    pub seed: u64,
    pub scenarios: usize,
    pub lambda: u32,
    pub fault: Option<Fault>,
    /// Skip the remaining scenarios once one fails.
    pub stop_at_first: bool,
}

impl DiffConfig {
    pub fn new(seed: u64, scenarios: usize) -> Self {
        DiffConfig {
            seed,
            scenarios,
            lambda: 2,
            fault: None,
            stop_at_first: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffReport {
    pub config: DiffConfig,
    /// Scenarios executed, per statement kind: (passed, run).
    pub per_kind: BTreeMap<&'static str, (usize, usize)>,
    pub mismatches: Vec<Mismatch>,
    pub elapsed: Duration,
}

impl DiffReport {
    pub fn run_count(&self) -> usize {
        self.per_kind.values().map(|&(_, r)| r).sum()
    }

    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "differential run: seed {}, lambda {}, {} scenarios, {} mismatches, {:.1} s",
            self.config.seed,
            self.config.lambda,
            self.run_count(),
            self.mismatches.len(),
            self.elapsed.as_secs_f64()
        );
        if let Some(f) = self.config.fault {
            out.push_str(&format!(", injected fault {f:?}"));
        }
        for (kind, (pass, run)) in &self.per_kind {
            out.push_str(&format!("\n  {kind:<7} {pass:>4} / {run:<4} passed"));
        }
        if let Some(m) = self.mismatches.first() {
            out.push_str("\nfirst counterexample:\n");
            out.push_str(&m.to_string());
        }
        out
    }
}

/// The scenario seeds of a run, derived from its seed.
pub fn scenario_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = seeded_rng(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Runs `config.scenarios` random scenarios in parallel and reports every
/// disagreement, in scenario order.
pub fn differential_run(config: &DiffConfig) -> Result<DiffReport, HeError> {
    let start = Instant::now();
    let mut per_kind: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    if config.scenarios == 0 {
        return Ok(DiffReport {
            config: config.clone(),
            per_kind,
            mismatches: Vec::new(),
            elapsed: start.elapsed(),
        });
    }
    let keys = RunKeys::generate(config.seed, config.lambda)?;
    let stop = AtomicBool::new(false);
    let outcomes: Vec<Option<(QueryKind, Result<(), Mismatch>)>> = scenario_seeds(config.seed, config.scenarios)
        .into_par_iter()
        .map(|s| {
            if stop.load(Ordering::Relaxed) {
                return None;
            }
            let sc = Scenario::generate(s);
            let r = run_scenario(&sc, &keys, config.seed, config.fault);
            if r.is_err() && config.stop_at_first {
                stop.store(true, Ordering::Relaxed);
            }
            Some((sc.query.kind, r))
        })
        .collect();
    let mut mismatches = Vec::new();
    for (kind, r) in outcomes.into_iter().flatten() {
        let e = per_kind.entry(kind.name()).or_default();
        e.1 += 1;
        match r {
            Ok(()) => e.0 += 1,
            Err(m) => mismatches.push(m),
        }
    }
    Ok(DiffReport {
        config: config.clone(),
        per_kind,
        mismatches,
        elapsed: start.elapsed(),
    })
}

/// Replays one scenario of a run.
pub fn replay(run_seed: u64, scenario_seed: u64, lambda: u32, fault: Option<Fault>) -> Result<Result<(), Mismatch>, HeError> {
    let keys = RunKeys::generate(run_seed, lambda)?;
    Ok(run_scenario(&Scenario::generate(scenario_seed), &keys, run_seed, fault))
}

/// Runs the differential suite once per seeded fault, stopping each run at
/// its first counterexample. A fault that survives every scenario means the
/// oracle cannot see that part of the circuit.
pub fn mutation_catalog(seed: u64, scenarios: usize, lambda: u32) -> Result<Vec<(Fault, DiffReport)>, HeError> {
    Fault::ALL
        .iter()
        .map(|&f| {
            let cfg = DiffConfig {
                seed,
                scenarios,
                lambda,
                fault: Some(f),
                stop_at_first: true,
            };
            differential_run(&cfg).map(|r| (f, r))
        })
        .collect()
}

pub fn parse_fault(name: &str) -> Option<Fault> {
    Fault::ALL
        .into_iter()
        .find(|f| format!("{f:?}").eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_valid() {
        for s in scenario_seeds(5, 300) {
            let a = Scenario::generate(s);
            let b = Scenario::generate(s);
            assert_eq!(a.sql(), b.sql());
            assert_eq!(a.table, b.table);
            let cols = a.table.schema.columns();
            assert!((2..=4).contains(&cols.len()));
            assert!(cols.iter().any(|c| c.kind() == ColumnKind::Uint));
            assert!(cols.iter().any(|c| c.kind() == ColumnKind::Str));
            assert!(a.table.rows.len() <= MAX_ROWS);
            sql::validate(&a.query, &a.table.schema).unwrap_or_else(|e| panic!("{}: {e}", a.sql()));
        }
    }

    #[test]
    fn generator_covers_every_kind_and_operator() {
        let mut kinds = std::collections::HashSet::new();
        let mut patterns = 0;
        let mut ops = std::collections::HashSet::new();
        for s in scenario_seeds(1, 200) {
            let sc = Scenario::generate(s);
            kinds.insert(sc.query.kind);
            ops.insert(sc.query.predicate.op);
            if matches!(&sc.query.predicate.literal, Literal::Str(l) if l.contains(['?', '*'])) {
                patterns += 1;
            }
        }
        assert_eq!(kinds.len(), 5);
        assert_eq!(ops.len(), 3);
        assert!(patterns > 10, "{patterns}");
    }

    #[test]
    fn fault_names_round_trip() {
        for f in Fault::ALL {
            assert_eq!(parse_fault(&format!("{f:?}")), Some(f));
        }
        assert_eq!(parse_fault("nope"), None);
    }
}
