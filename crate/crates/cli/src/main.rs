fn main() {
    std::process::exit(pareto_filter_cli::run(std::env::args_os()));
}
