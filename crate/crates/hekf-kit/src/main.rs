fn main() {
    hekf_kit::cli_main();
}
