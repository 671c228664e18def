use std::process::ExitCode;

use clap::Parser;
use peakvol_service::cli::{self, exit, Cli, CliError, Command};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("peakvol: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Render(args) => cli::render_once(&args),
        Command::Phantom(args) => {
            let raw = cli::write_phantom(&args)?;
            println!("wrote {} and {}", args.out.display(), raw.display());
            Ok(())
        }
        Command::Simulate(args) => {
            let report = cli::run_simulate(&args)?;
            println!("{report}");
            Ok(())
        }
        Command::Serve(args) => serve(&args),
    }
}

fn serve(args: &cli::ServeArgs) -> Result<(), CliError> {
    let config = cli::serve_config(args)?;
    let handle = peakvol_service::start(config).map_err(|e| CliError {
        code: match e {
            peakvol_service::ServiceError::Volume(peakvol_core::volume::VolumeError::Io { .. })
            | peakvol_service::ServiceError::TfIo { .. } => exit::INPUT_MISSING,
            peakvol_service::ServiceError::Volume(_) | peakvol_service::ServiceError::Tf { .. } => {
                exit::INPUT_INVALID
            }
            _ => exit::STARTUP,
        },
        message: e.to_string(),
    })?;
    println!("http://{}  udp {}", handle.http_addr(), handle.udp_addr());
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError {
            code: exit::STARTUP,
            message: e.to_string(),
        })?;
    rt.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    tracing::info!("shutting down");
    handle.shutdown();
    Ok(())
}
