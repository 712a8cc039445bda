use std::io::{IsTerminal as _, Write as _};
use std::process::ExitCode;

use edgefaas_gateway::cli::{self, Command, EXIT_BACKEND, EXIT_USAGE};
use edgefaas_gateway::config::{GatewayConfig, Runtime};
use tracing_subscriber::EnvFilter;

fn serve(config: Option<std::path::PathBuf>) -> anyhow::Result<()> {
    let config = match config {
        Some(path) => GatewayConfig::load(&path)?,
        None => GatewayConfig::from_env()?,
    };
    let runtime = Runtime::build(&config)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "gateway listening");
        edgefaas_gateway::serve(listener, runtime.plane).await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let args = match cli::parse(std::env::args_os()) {
        Ok(a) => a,
        Err((code, text)) => {
            if code == 0 {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            return ExitCode::from(code as u8);
        }
    };
    match args.command {
        Command::Serve { config } => match serve(config) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("edgefaas: {e:#}");
                let code = if e.is::<edgefaas_gateway::config::ConfigError>() { EXIT_USAGE } else { EXIT_BACKEND };
                ExitCode::from(code as u8)
            }
        },
        command => match cli::run_client(&args.gateway, command) {
            Ok(out) => {
                let mut stdout = std::io::stdout();
                let _ = stdout.write_all(&out);
                if !out.is_empty() && !out.ends_with(b"\n") {
                    let _ = stdout.write_all(b"\n");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("edgefaas: {}", e.message);
                ExitCode::from(e.code as u8)
            }
        },
    }
}
