fn main() {
    std::process::exit(qfusion::cli::main_with(std::env::args_os()));
}
