//! Writes a phantom dataset and a matching config: `phantom DIR [N] [SIZE]`.
fn main() -> softcp_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "phantom".into()));
    let n = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    let size = args.next().and_then(|a| a.parse().ok()).unwrap_or(256);
    softcp_core::phantom::write_phantom_dataset(&dir.join("data"), n, size, size, 0)?;
    let cfg = softcp_core::phantom::phantom_config("data".as_ref(), "out".as_ref(), size);
    std::fs::write(dir.join("run.toml"), cfg.to_toml_string()).map_err(|e| softcp_core::Error::Config(e.to_string()))?;
    Ok(())
}
