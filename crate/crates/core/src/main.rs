fn main() {
    std::process::exit(varexp_cir::cli::run(std::env::args_os()));
}
