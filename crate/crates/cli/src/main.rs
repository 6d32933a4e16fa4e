use clap::Parser;

fn main() {
    let cli = gp_hierarchy_cli::Cli::parse();
    std::process::exit(gp_hierarchy_cli::main_with(&cli));
}
