use clap::Parser;

fn main() {
    let cli = boxfield::Cli::parse();
    if let Err(e) = boxfield::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
