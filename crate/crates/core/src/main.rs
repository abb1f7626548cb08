fn main() {
    std::process::exit(planar_conley::cli::main_entry());
}
