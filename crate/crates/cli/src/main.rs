use clap::Parser;

fn main() {
    let cli = conserved_cli::Cli::parse();
    match conserved_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(conserved_cli::exit_code_for(&err));
        }
    }
}
