fn main() {
    std::process::exit(mlmc_varfn::main_with_args(std::env::args_os()));
}
