fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(softcp_cli::dispatch(std::env::args_os()))
}
