use clap::Parser;
use gogiskip_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(err) = gogiskip_cli::run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(gogiskip_cli::exit_code(&err));
    }
}
