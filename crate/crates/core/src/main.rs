fn main() {
    std::process::exit(energy_calib::cli::run(std::env::args_os()));
}
