fn main() {
    std::process::exit(tabext_cli::run(std::env::args_os()));
}
