//! Run the built-in consistency checks on an instance described in JSON.

use rdd::cli::{cmd_check, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig::from_json_str(
        r#"{
          "source": {"family": "laplacian", "sigma": 1.0, "dim": 1, "h": 4.0, "K": 12},
          "y_space": {"dim": 1, "h": 4.0, "K": 12},
          "sweep": {"lambda_end": 1.0, "lambda_count": 5}
        }"#,
    )?;
    let status = cmd_check(&config, &mut std::io::stdout().lock());
    std::process::exit(status.code());
}
