fn main() {
    std::process::exit(spinrelax::cli::main_from_env());
}
