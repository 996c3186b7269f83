use clap::Parser;

fn main() {
    let cli = banditlab_cli::Cli::parse();
    if let Err(e) = banditlab_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
