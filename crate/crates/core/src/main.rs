fn main() {
    std::process::exit(vib_vit::cli::main_with_args(std::env::args_os()));
}
