use clap::Parser;

use fmqed::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}  {}", o.sha256, cli.out.join(&o.path).display());
            }
        }
        Err(e) => {
            eprintln!("fmqed: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
