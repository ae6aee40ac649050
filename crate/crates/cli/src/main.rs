fn main() {
    std::process::exit(fednoniid_cli::run(std::env::args_os()));
}
