fn main() {
    let code = edge_atlas::cli::run(std::env::args_os());
    edge_atlas::cli::flush();
    std::process::exit(code);
}
