use clap::{CommandFactory, FromArgMatches};
use mlfdr_cli::{defaulted_options, run, Cli};

fn main() {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(&cli, &defaulted_options(&matches)) {
        Ok(summary) => println!("{}", summary.text),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
