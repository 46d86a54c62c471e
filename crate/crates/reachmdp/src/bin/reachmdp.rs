fn main() {
    std::process::exit(reachmdp::cli::run());
}
