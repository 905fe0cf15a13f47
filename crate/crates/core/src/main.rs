fn main() {
    std::process::exit(mamba_dsse::cli::run(std::env::args_os()));
}
