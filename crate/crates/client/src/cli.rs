//! The `hedb` command line, callable in-process with explicit streams.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use hedb_core::circuits::noise::{plan_params, Workload};
use hedb_core::data::TableSchema;
use hedb_core::he::keyfile::{parse_key_file, write_bootstrap_file, write_key_file};
use hedb_core::he::{keygen, rng_from_seed, PublicKey, SecretKey, SecurityParams};
use rand_chacha::ChaCha20Rng;

use crate::render::render_answer;
use crate::shell::run_shell;
use crate::{describe_error, ClientError, Connection, Session, DEFAULT_SERVER};

/// Client for the encrypted database: keys, tables, rows and queries.
#[derive(Debug, Parser)]
#[command(name = "hedb", version)]
struct Cli {
    /// Server address.
    #[arg(long, global = true, default_value = DEFAULT_SERVER)]
    server: String,
    /// Secret key file.
    #[arg(long, global = true, default_value = "hedb.key")]
    key: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a secret key sized for a workload.
    Keygen {
        #[arg(long)]
        lambda: u32,
        #[arg(long)]
        out: PathBuf,
        /// Largest table the key must serve.
        #[arg(long, default_value_t = 16)]
        max_rows: usize,
        /// Widest predicate column, in bits.
        #[arg(long, default_value_t = 32)]
        max_width: usize,
        /// UPDATE/DELETE statements a row may pass through before being read.
        #[arg(long, default_value_t = 0)]
        mutations: usize,
    },
    /// Create a table from a schema file of `name:kind:bits` lines.
    CreateTable {
        #[arg(long)]
        schema: PathBuf,
        /// Table name; defaults to the schema file's stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Encrypt and append one row, values in schema order.
    Insert { table: String, values: Vec<String> },
    /// Run one statement and print the decrypted result.
    Query {
        sql: String,
        /// Which match a SELECT returns, from 1.
        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Interactive statement loop.
    Shell,
    /// Write the public bootstrap file a recrypt-enabled server needs.
    ExportBootstrap {
        #[arg(long)]
        out: PathBuf,
    },
}

fn seed() -> anyhow::Result<Option<u64>> {
    match std::env::var("HEDB_SEED") {
        Ok(s) => Ok(Some(s.parse().with_context(|| format!("HEDB_SEED={s:?} is not a u64"))?)),
        Err(_) => Ok(None),
    }
}

fn write_private(path: &Path, text: &str) -> io::Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
        opts.mode(0o600);
        // an existing file keeps its mode on open, so tighten it explicitly
        if path.exists() {
            fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
        }
    }
    let mut f = opts.open(path)?;
    f.write_all(text.as_bytes())
}

fn load_key(path: &Path) -> anyhow::Result<(SecretKey, PublicKey)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading key file {}", path.display()))?;
    parse_key_file(&text).with_context(|| format!("parsing key file {}", path.display()))
}

fn session(cli: &Cli, rng: ChaCha20Rng) -> anyhow::Result<Session<std::net::TcpStream>> {
    let (sk, pk) = load_key(&cli.key)?;
    let conn = Connection::connect(&cli.server).with_context(|| format!("connecting to {}", cli.server))?;
    Ok(Session::new(conn, sk, pk, rng))
}

enum Failure {
    Client(Option<String>, ClientError),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn client(text: Option<&str>) -> impl FnOnce(ClientError) -> Failure + '_ {
    move |e| Failure::Client(text.map(str::to_string), e)
}

fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), Failure> {
    let mut rng = rng_from_seed(seed()?);
    match &cli.cmd {
        Command::Keygen {
            lambda,
            out: path,
            max_rows,
            max_width,
            mutations,
        } => {
            SecurityParams::new(*lambda).map_err(|e| anyhow!(e))?;
            let workload = Workload {
                rows: *max_rows,
                predicate_bits: *max_width,
                mutations: *mutations,
            };
            let params = plan_params(*lambda, &workload).map_err(|e| anyhow!(e))?;
            let (sk, pk, _) = keygen(&params, &mut rng).map_err(|e| anyhow!(e))?;
            write_private(path, &write_key_file(&sk, &pk))
                .with_context(|| format!("writing {}", path.display()))?;
            writeln!(
                out,
                "wrote {} (lambda {}, {}-bit modulus, noise limit {} bits)",
                path.display(),
                lambda,
                params.p_bits(),
                params.noise_limit()
            )
            .context("writing output")?;
        }
        Command::CreateTable { schema, name } => {
            let text = fs::read_to_string(schema).with_context(|| format!("reading {}", schema.display()))?;
            let table = match name {
                Some(n) => n.clone(),
                None => schema
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| anyhow!("cannot derive a table name from {}", schema.display()))?
                    .to_string(),
            };
            let schema = TableSchema::parse_lines(&table, &text).map_err(|e| anyhow!(e))?;
            let mut conn = Connection::connect(&cli.server).with_context(|| format!("connecting to {}", cli.server))?;
            conn.create_table(&schema).map_err(client(None))?;
            writeln!(out, "created table {table} ({} bits per row)", schema.record_bits()).context("writing output")?;
        }
        Command::Insert { table, values } => {
            let mut s = session(cli, rng)?;
            s.insert_text(table, values).map_err(client(None))?;
            writeln!(out, "inserted 1 row into {table}").context("writing output")?;
        }
        Command::Query { sql, n } => {
            // parse first so malformed text never opens a connection
            hedb_core::sql::parse(sql).map_err(|e| Failure::Client(Some(sql.clone()), e.into()))?;
            let mut s = session(cli, rng)?;
            let answer = s.query(sql, *n).map_err(client(Some(sql)))?;
            writeln!(out, "{}", render_answer(&answer)).context("writing output")?;
        }
        Command::Shell => {
            let mut s = session(cli, rng)?;
            run_shell(&mut s, input, out).context("shell i/o")?;
        }
        Command::ExportBootstrap { out: path } => {
            let (sk, pk) = load_key(&cli.key)?;
            let bk = sk.derive_bootstrap_key(&mut rng);
            fs::write(path, write_bootstrap_file(&pk, &bk)).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {}", path.display()).context("writing output")?;
        }
    }
    Ok(())
}

/// Runs `hedb` with `args` (including the program name) and returns the
/// process exit code. Usage errors and `--help` are written to `err`/`out`.
pub fn run_cli<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return e.exit_code();
        }
    };
    let outcome = run(&cli, input, out);
    let _ = out.flush();
    match outcome {
        Ok(()) => 0,
        Err(Failure::Client(text, e)) => {
            let _ = writeln!(err, "{}", describe_error(text.as_deref(), &e));
            1
        }
        Err(Failure::Other(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}
