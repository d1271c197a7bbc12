use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::Parser;
use hedb_core::he::keyfile::parse_bootstrap_file;
use hedb_core::wire::DEFAULT_MAX_PAYLOAD;
use hedb_server::{net, BootstrapMaterial, ServerConfig, ServerState};

/// Stores encrypted tables and evaluates queries over them without keys.
#[derive(Debug, Parser)]
#[command(name = "hedb-server", version)]
struct Args {
    /// TCP port; 0 picks a free one.
    #[arg(long)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long)]
    data_dir: PathBuf,
    /// Refresh ciphertexts by recryption; needs --bootstrap.
    #[arg(long)]
    enable_recrypt: bool,
    /// Bootstrap file exported by `hedb export-bootstrap`.
    #[arg(long)]
    bootstrap: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_PAYLOAD)]
    max_payload: usize,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let bootstrap = match (args.enable_recrypt, &args.bootstrap) {
        (false, None) => None,
        (true, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let (pk, bk) = parse_bootstrap_file(&text).context("parsing bootstrap file")?;
            Some(BootstrapMaterial {
                pk: Arc::new(pk),
                bk: Arc::new(bk),
            })
        }
        (true, None) => bail!("--enable-recrypt needs --bootstrap <file>"),
        (false, Some(_)) => bail!("--bootstrap is only used with --enable-recrypt"),
    };
    let state = ServerState::open(ServerConfig {
        data_dir: args.data_dir,
        max_payload: args.max_payload,
        bootstrap,
    })?;
    let listener = TcpListener::bind((args.bind.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
    // tests and scripts read the bound address from this line
    println!("listening on {}", listener.local_addr()?);
    net::serve(listener, Arc::new(state))?;
    Ok(())
}
