use clap::error::ErrorKind;
use clap::Parser;
use fakedist::cli::{run, Cli, EXIT_IO};

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_IO,
            }
        }
    };
    std::process::exit(code);
}
