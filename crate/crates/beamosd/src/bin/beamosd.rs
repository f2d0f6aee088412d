use clap::Parser;

fn main() {
    let cli = beamosd::cli::Cli::parse();
    if let Err(e) = beamosd::cli::run(cli) {
        eprintln!("beamosd: {e}");
        std::process::exit(e.exit_code());
    }
}
