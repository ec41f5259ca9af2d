use std::process::ExitCode;

use resil_bench::campaign::{run_campaign, Workload};
use resil_bench::cli::parse_args;
use resil_bench::report::{emit, write_field_dump};

fn main() -> ExitCode {
    let campaign = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let out = run_campaign(&campaign);
    for row in out.rows.iter().filter(|r| !r.is_ok()) {
        eprintln!("resil: {} {} p={}: {}", row.bench, row.variant, row.error_p, row.status);
    }
    if let Err(e) = emit(&out.rows, campaign.format, campaign.out.as_deref()) {
        eprintln!("resil: {e}");
        return ExitCode::FAILURE;
    }
    if let (Some(path), Some(field), Workload::Stencil { shape, .. }) =
        (&campaign.dump_field, &out.field, &campaign.workload)
    {
        if let Err(e) = write_field_dump(path, field, shape.subdomains, shape.points, campaign.dump_format) {
            eprintln!("resil: {e}");
            return ExitCode::FAILURE;
        }
    }
    if out.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
