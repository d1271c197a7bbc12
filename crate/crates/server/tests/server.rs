use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::Arc;
use std::thread;

use hedb_core::circuits::noise::{plan_params, Workload};
use hedb_core::circuits::OpCounts;
use hedb_core::data::{ColumnSpec, EncryptedRecord, TableSchema, Value};
use hedb_core::he::{keygen, seeded_rng, Ciphertext, PublicKey, SecretKey, SecurityParams};
use hedb_core::query::{encode_query, CompiledQuery, EvalContext};
use hedb_core::sql::{compile, decrypt_output, parse, validate, QueryResult};
use hedb_core::wire::{self, read_frame, ErrorCode, Frame, MsgType, DEFAULT_MAX_PAYLOAD};
use hedb_server::{net, store, BootstrapMaterial, ServerConfig, ServerState};
use rand_chacha::ChaCha20Rng;

struct Client {
    sk: SecretKey,
    pk: PublicKey,
    rng: ChaCha20Rng,
}

impl Client {
    fn new(seed: u64) -> Self {
        let params = plan_params(
            2,
            &Workload {
                rows: 6,
                predicate_bits: 16,
                mutations: 1,
            },
        )
        .unwrap();
        let mut rng = seeded_rng(seed);
        let (sk, pk, _) = keygen(&params, &mut rng).unwrap();
        Client { sk, pk, rng }
    }

    fn context(&self) -> EvalContext {
        EvalContext {
            reduction: Some(self.pk.x0().clone()),
            noise_limit: Some(self.pk.params().noise_limit()),
        }
    }

    fn row(&mut self, schema: &TableSchema, name: &str, age: u64) -> Vec<Ciphertext> {
        let rec = EncryptedRecord::encrypt(
            &[Value::Str(name.into()), Value::Uint(age)],
            schema,
            &self.pk,
            &mut self.rng,
        )
        .unwrap();
        rec.bits().cloned().collect()
    }

    fn compile(&mut self, schema: &TableSchema, sql: &str, n: u64, rows: usize) -> CompiledQuery {
        let checked = validate(&parse(sql).unwrap(), schema).unwrap();
        let ctx = self.context();
        compile(&checked, n, &self.pk, ctx, rows, &mut self.rng).unwrap()
    }

    fn decrypt(&self, schema: &TableSchema, sql: &str, bits: &[Ciphertext]) -> QueryResult {
        let checked = validate(&parse(sql).unwrap(), schema).unwrap();
        decrypt_output(&checked, bits, &self.sk).unwrap()
    }
}

fn schema(name: &str) -> TableSchema {
    TableSchema::new(
        name,
        vec![
            ColumnSpec::string("name", 2).unwrap(),
            ColumnSpec::uint("age", 8).unwrap(),
        ],
    )
    .unwrap()
}

fn open(dir: &Path) -> ServerState {
    ServerState::open(ServerConfig::new(dir)).unwrap()
}

fn populated(dir: &Path, c: &mut Client) -> ServerState {
    let state = open(dir);
    let s = schema("people");
    state.create_table(s.clone()).unwrap();
    for (name, age) in [("Al", 30), ("Bo", 41), ("Cy", 30)] {
        state.insert("people", c.row(&s, name, age)).unwrap();
    }
    state
}

#[test]
fn server_sources_never_touch_secret_keys() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        for banned in ["SecretKey", "decrypt", "parse_key_file", "keygen", "with_modulus"] {
            assert!(!text.contains(banned), "{} mentions {banned}", path.display());
        }
    }
}

#[test]
fn server_binary_rejects_key_flags() {
    let dir = tempfile::tempdir().unwrap();
    for flag in ["--key", "--secret-key", "--key-file"] {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_hedb-server"))
            .args(["--port", "0", "--data-dir"])
            .arg(dir.path())
            .args([flag, "x"])
            .output()
            .unwrap();
        assert!(!out.status.success(), "{flag} was accepted");
    }
}

#[test]
fn create_insert_and_select() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(1);
    let state = populated(dir.path(), &mut c);
    let s = schema("people");
    assert_eq!(state.describe("people").unwrap().1, 3);
    let sql = "SELECT * FROM people WHERE age = 30";
    for (n, want) in [(1, "Al | 30"), (2, "Cy | 30"), (3, "(no match)")] {
        let q = c.compile(&s, sql, n, 3);
        let reply = state.query(&q).unwrap();
        assert!(!reply.mutation);
        assert_eq!(c.decrypt(&s, sql, &reply.result).to_string(), want);
        assert!(reply.counts.multiplications > 0);
    }
}

#[test]
fn request_errors_have_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(2);
    let state = populated(dir.path(), &mut c);
    let s = schema("people");
    assert_eq!(state.create_table(s.clone()).unwrap_err().code, ErrorCode::DuplicateTable);
    assert_eq!(state.insert("nobody", Vec::new()).unwrap_err().code, ErrorCode::UnknownTable);
    let mut short = c.row(&s, "Al", 1);
    short.pop();
    assert_eq!(state.insert("people", short).unwrap_err().code, ErrorCode::SchemaMismatch);
    let mut q = c.compile(&s, "SELECT * FROM people WHERE age = 30", 1, 3);
    q.operand.pop();
    assert_eq!(state.query(&q).unwrap_err().code, ErrorCode::ShapeMismatch);
    let mut q = c.compile(&s, "SELECT COUNT(*) FROM people WHERE age = 30", 1, 3);
    q.shape.table = "ghost".into();
    assert_eq!(state.query(&q).unwrap_err().code, ErrorCode::UnknownTable);
    // a tiny declared limit is exceeded by the estimates alone
    let mut q = c.compile(&s, "SELECT COUNT(*) FROM people WHERE age = 30", 1, 3);
    q.context.noise_limit = Some(8);
    assert_eq!(state.query(&q).unwrap_err().code, ErrorCode::NoiseBudget);
    let bad = Frame::new(MsgType::CreateTable, vec![1, 2, 3]);
    let reply = state.handle(&bad);
    assert_eq!(wire::decode_error(&reply[0].payload).unwrap().0, ErrorCode::InvalidSchema);
    let stray = Frame::new(MsgType::Result, Vec::new());
    let reply = state.handle(&stray);
    assert_eq!(wire::decode_error(&reply[0].payload).unwrap().0, ErrorCode::MalformedFrame);
}

#[test]
fn tables_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(3);
    let before = populated(dir.path(), &mut c).snapshot("people").unwrap();
    let reopened = open(dir.path());
    assert_eq!(reopened.table_names(), vec!["people".to_string()]);
    assert_eq!(reopened.snapshot("people").unwrap(), before);
    assert_eq!(before.decrypt(&c.sk).unwrap()[1], vec![Value::Str("Bo".into()), Value::Uint(41)]);
}

#[test]
fn mutations_persist_and_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(4);
    let state = populated(dir.path(), &mut c);
    let s = schema("people");
    let q = c.compile(&s, "DELETE FROM people WHERE name = 'Bo'", 1, 3);
    let reply = state.query(&q).unwrap();
    assert!(reply.mutation && reply.result.is_empty());
    let q = c.compile(&s, "UPDATE people SET name = 'Zz', age = 9 WHERE age = 30", 1, 3);
    state.query(&q).unwrap();
    let rows = open(dir.path()).snapshot("people").unwrap().decrypt(&c.sk).unwrap();
    let z = |n: &str, a| vec![Value::Str(n.into()), Value::Uint(a)];
    assert_eq!(rows, vec![z("Zz", 9), z("", 0), z("Zz", 9)]);
}

#[test]
fn failed_persist_leaves_old_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(5);
    let state = populated(dir.path(), &mut c);
    let s = schema("people");
    let before = state.snapshot("people").unwrap();
    let on_disk = std::fs::read(store::table_path(dir.path(), "people")).unwrap();
    // a directory squatting on the temporary name makes the write fail
    let tmp = dir.path().join("people.tbl.tmp");
    std::fs::create_dir(&tmp).unwrap();
    let q = c.compile(&s, "DELETE FROM people WHERE age = 30", 1, 3);
    assert_eq!(state.query(&q).unwrap_err().code, ErrorCode::Internal);
    assert_eq!(state.snapshot("people").unwrap(), before);
    assert_eq!(std::fs::read(store::table_path(dir.path(), "people")).unwrap(), on_disk);
    std::fs::remove_dir(&tmp).unwrap();
    state.query(&q).unwrap();
    assert_ne!(state.snapshot("people").unwrap(), before);
}

#[test]
fn crash_between_write_and_rename_is_invisible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(6);
    let before = populated(dir.path(), &mut c).snapshot("people").unwrap();
    let path = store::table_path(dir.path(), "people");
    let old = std::fs::read(&path).unwrap();
    let err = store::write_atomic_with(&path, b"torn", |_| Err(std::io::Error::other("crash")));
    assert!(err.is_err());
    assert_eq!(std::fs::read(&path).unwrap(), old);
    assert!(dir.path().join("people.tbl.tmp").exists());
    // the leftover is cleaned up and the old table served
    let reopened = open(dir.path());
    assert_eq!(reopened.snapshot("people").unwrap(), before);
    assert!(!dir.path().join("people.tbl.tmp").exists());
}

#[test]
fn identical_requests_get_identical_replies() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Client::new(7);
    let state = populated(dir.path(), &mut c);
    let q = c.compile(&schema("people"), "SELECT AVG(age) FROM people WHERE name > 'B'", 1, 3);
    let frame = Frame::new(MsgType::Query, encode_query(&q));
    let a = state.handle(&frame);
    let b = state.handle(&frame);
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    let got = c.decrypt(&schema("people"), "SELECT AVG(age) FROM people WHERE name > 'B'", &wire::decode_result(&a[0].payload).unwrap());
    assert_eq!(got, QueryResult::Avg { sum: 71, count: 2 });
}

#[test]
fn counters_do_not_depend_on_data() {
    let mut counts = Vec::new();
    for seed in 0..3u64 {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Client::new(10 + seed);
        let state = open(dir.path());
        let s = schema("people");
        state.create_table(s.clone()).unwrap();
        for i in 0..3 {
            let age = (seed * 7 + i * 13) % 256;
            state.insert("people", c.row(&s, "Xy", age)).unwrap();
        }
        let q = c.compile(&s, "SELECT * FROM people WHERE age < 20", 2, 3);
        counts.push(state.query(&q).unwrap().counts.to_bytes());
    }
    assert!(counts.windows(2).all(|w| w[0] == w[1]));
}

fn spawn_server(dir: &Path, max_payload: usize) -> std::net::SocketAddr {
    let mut config = ServerConfig::new(dir);
    config.max_payload = max_payload;
    let state = Arc::new(ServerState::open(config).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || net::serve(listener, state));
    addr
}

fn round_trip(stream: &mut TcpStream, reader: &mut BufReader<TcpStream>, t: MsgType, payload: &[u8]) -> Frame {
    wire::write_frame(stream, t, payload).unwrap();
    read_frame(reader, DEFAULT_MAX_PAYLOAD).unwrap().unwrap()
}

#[test]
fn framing_errors_close_the_connection() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), 64);
    let mut s = TcpStream::connect(addr).unwrap();
    let mut r = BufReader::new(s.try_clone().unwrap());
    assert_eq!(round_trip(&mut s, &mut r, MsgType::Ping, &[]).msg_type, MsgType::Ack);
    s.write_all(b"JUNKJUNKJUNK").unwrap();
    let f = read_frame(&mut r, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
    assert_eq!(wire::decode_error(&f.payload).unwrap().0, ErrorCode::MalformedFrame);
    assert!(read_frame(&mut r, DEFAULT_MAX_PAYLOAD).unwrap().is_none());

    let mut s = TcpStream::connect(addr).unwrap();
    let mut r = BufReader::new(s.try_clone().unwrap());
    let f = round_trip(&mut s, &mut r, MsgType::Ping, &[0u8; 65]);
    assert_eq!(wire::decode_error(&f.payload).unwrap().0, ErrorCode::PayloadTooLarge);

    let mut s = TcpStream::connect(addr).unwrap();
    let mut r = BufReader::new(s.try_clone().unwrap());
    s.write_all(b"HEDB\x09\x07\0\0\0\0").unwrap();
    let f = read_frame(&mut r, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
    assert_eq!(wire::decode_error(&f.payload).unwrap().0, ErrorCode::UnsupportedVersion);
}

#[test]
fn concurrent_clients_on_separate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn_server(dir.path(), DEFAULT_MAX_PAYLOAD);
    let workers: Vec<_> = ["left", "right"]
        .into_iter()
        .enumerate()
        .map(|(i, table)| {
            thread::spawn(move || {
                let mut c = Client::new(20 + i as u64);
                let s = schema(table);
                let mut stream = TcpStream::connect(addr).unwrap();
                let mut r = BufReader::new(stream.try_clone().unwrap());
                let ack = round_trip(&mut stream, &mut r, MsgType::CreateTable, &wire::encode_schema(&s));
                assert_eq!(ack.msg_type, MsgType::Ack);
                for age in [5, 6, 5, 7] {
                    let row = c.row(&s, "Qq", age + i as u64);
                    let ack = round_trip(&mut stream, &mut r, MsgType::InsertRow, &wire::encode_insert(table, &row));
                    assert_eq!(ack.msg_type, MsgType::Ack);
                }
                let sql = format!("SELECT COUNT(*) FROM {table} WHERE age = {}", 5 + i);
                let q = c.compile(&s, &sql, 1, 4);
                let res = round_trip(&mut stream, &mut r, MsgType::Query, &encode_query(&q));
                let counters = read_frame(&mut r, DEFAULT_MAX_PAYLOAD).unwrap().unwrap();
                assert_eq!(counters.msg_type, MsgType::Counters);
                let counts = OpCounts::from_bytes(&counters.payload.try_into().unwrap());
                assert!(counts.total() > 0);
                let bits = wire::decode_result(&res.payload).unwrap();
                assert_eq!(c.decrypt(&s, &sql, &bits), QueryResult::Count(2));
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
}

#[test]
fn recrypt_mode_refreshes_past_the_budget() {
    let params = SecurityParams::bootstrappable(2).unwrap();
    let mut rng = seeded_rng(30);
    let (sk, pk, bk) = keygen(&params, &mut rng).unwrap();
    let s = TableSchema::new("t", vec![ColumnSpec::uint("v", 8).unwrap()]).unwrap();
    let ctx = EvalContext {
        reduction: Some(pk.x0().clone()),
        noise_limit: Some(params.noise_limit()),
    };
    let sql = "SELECT COUNT(*) FROM t WHERE v < 100";
    let checked = validate(&parse(sql).unwrap(), &s).unwrap();
    let rows = [(160u64, false), (2, true), (99, true), (100, false), (255, false), (7, true)];
    let load = |state: &ServerState, rng: &mut ChaCha20Rng| {
        state.create_table(s.clone()).unwrap();
        for (v, _) in rows {
            let rec = EncryptedRecord::encrypt(&[Value::Uint(v)], &s, &pk, rng).unwrap();
            state.insert("t", rec.bits().cloned().collect()).unwrap();
        }
    };
    let q = compile(&checked, 1, &pk, ctx, rows.len(), &mut rng).unwrap();

    let plain_dir = tempfile::tempdir().unwrap();
    let plain = open(plain_dir.path());
    load(&plain, &mut rng);
    assert_eq!(plain.query(&q).unwrap_err().code, ErrorCode::NoiseBudget);

    let dir = tempfile::tempdir().unwrap();
    let mut config = ServerConfig::new(dir.path());
    config.bootstrap = Some(BootstrapMaterial {
        pk: Arc::new(pk.clone()),
        bk: Arc::new(bk),
    });
    let state = ServerState::open(config).unwrap();
    assert!(state.recrypt_enabled());
    load(&state, &mut rng);
    let reply = state.query(&q).unwrap();
    assert!(reply.counts.recrypts > 0);
    assert_eq!(decrypt_output(&checked, &reply.result, &sk).unwrap(), QueryResult::Count(3));
}
