fn main() {
    std::process::exit(ecctlin::cli::cli_main(std::env::args_os()));
}
