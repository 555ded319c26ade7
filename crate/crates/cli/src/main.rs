fn main() {
    geoha_cli::init_logging();
    std::process::exit(geoha_cli::run(std::env::args_os()));
}
