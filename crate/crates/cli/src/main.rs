use clap::Parser;

fn main() {
    let cli = bindesc_cli::Cli::parse();
    match bindesc_cli::run(cli) {
        Ok(report) => print!("{}", report.to_csv()),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
