fn main() {
    std::process::exit(gripper_twin::cli::run(std::env::args_os()));
}
