use clap::error::ErrorKind;
use clap::Parser;

use psylm::run::{execute, Cli};

fn main() {
    std::process::exit(run());
}

/// Exit codes: 0 success, 1 usage error, 2 data error.
fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; anything else clap rejects is
            // a usage error
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
