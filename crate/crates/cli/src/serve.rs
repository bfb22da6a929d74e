//! Transports for the step protocol: stdio, or TCP with one thread and one
//! session per connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::Arc;

use sad_sim_core::env::{ActionMode, EnvConfig};
use sad_sim_core::factory::{load_manifest_scenarios, Split};
use sad_sim_core::protocol::{Catalog, Session};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ServeArgs;

/// Answer requests line by line until EOF or a `close` request.
pub fn serve_stream(
    session: &mut Session,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        output.write_all(reply.text.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if reply.close {
            break;
        }
    }
    Ok(())
}

fn handle_connection(
    stream: TcpStream,
    catalog: Arc<Catalog>,
    base: EnvConfig,
) -> std::io::Result<()> {
    let mut session = Session::new(catalog, base).map_err(std::io::Error::other)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(&mut session, reader, stream)
}

/// Accept connections forever, each on its own thread.
pub fn run_listener(
    listener: TcpListener,
    catalog: Arc<Catalog>,
    base: EnvConfig,
) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let catalog = catalog.clone();
        std::thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = handle_connection(stream, catalog, base) {
                eprintln!("session {peer:?}: {e}");
            }
        });
    }
    Ok(())
}

/// Every scenario of both splits of a manifest.
pub fn load_catalog(manifest: &Path) -> CliResult<Catalog> {
    let mut all = load_manifest_scenarios(manifest, Split::Train)?;
    all.extend(load_manifest_scenarios(manifest, Split::Test)?);
    Ok(Catalog::new(all)?)
}

pub fn serve(a: &ServeArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.env.mode = ActionMode::Hierarchical;
    let catalog = Arc::new(load_catalog(&a.manifest)?);
    if a.stdio {
        let mut session = Session::new(catalog, cfg.env)?;
        let stdin = std::io::stdin();
        serve_stream(&mut session, stdin.lock(), out)?;
        return Ok(());
    }
    let port = a
        .port
        .ok_or_else(|| CliError::usage("give --port or --stdio"))?;
    let listener = TcpListener::bind((a.host.as_str(), port))?;
    writeln!(out, "listening on {}", listener.local_addr()?)?;
    out.flush()?;
    run_listener(listener, catalog, cfg.env)?;
    Ok(())
}
