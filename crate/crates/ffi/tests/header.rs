//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "degensim.h"

int main(void) {
    DsPhi *phi = NULL;
    if (ds_phi_porous_medium(2.0, &phi) != DS_STATUS_OK) return 10;
    double w = 0.0, z = 0.0;
    if (ds_phi_value(phi, -0.5, &w) != DS_STATUS_OK) return 11;
    if (fabs(w + 0.25) > 1e-15) return 12;
    if (ds_phi_inverse(phi, w, &z) != DS_STATUS_OK) return 13;
    if (fabs(z + 0.5) > 1e-12) return 14;
    ds_phi_free(phi);

    DsPhi *bad = NULL;
    if (ds_phi_linear(-1.0, &bad) != DS_STATUS_CONFIG) return 20;
    char msg[256];
    if (ds_last_error_message(msg, sizeof msg) == 0) return 21;

    DsConfig *cfg = NULL;
    const char *text = "[domain]\ncells = 4\n[bc]\nu = 0\n[ic]\nu = 0.5\n[time]\nT = 0.01\ntau = 0.005\n";
    if (ds_config_from_str(text, NULL, &cfg) != DS_STATUS_OK) return 30;
    DsSimulation *sim = NULL;
    if (ds_simulate(cfg, &sim) != DS_STATUS_OK) return 31;
    size_t n = ds_simulation_cells(sim);
    double u[4];
    if (n != 4 || ds_simulation_states(sim) != 3) return 32;
    if (ds_simulation_u(sim, 2, u, n) != DS_STATUS_OK) return 33;
    printf("%.6f %.6f %s\n", u[0], u[3], ds_version());
    ds_simulation_free(sim);
    ds_config_free(cfg);
    return 0;
}
"#;

/// Builds the static library into a private target directory, so the outer
/// cargo invocation's lock is not contended.
fn static_library() -> PathBuf {
    let target = Path::new(env!("CARGO_TARGET_TMPDIR")).join("c-link");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args([
            "build",
            "--offline",
            "--lib",
            "-p",
            "degensim-ffi",
            "--target-dir",
        ])
        .arg(&target)
        .status()
        .unwrap();
    assert!(status.success(), "building the static library failed");
    target.join("debug").join("libdegensim_ffi.a")
}

fn compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(str::to_string)
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/degensim.h"))
            .unwrap();
    for name in [
        "typedef struct DsPhi DsPhi;",
        "typedef struct DsConfig DsConfig;",
        "typedef struct DsSimulation DsSimulation;",
        "DS_STATUS_NOT_CONVERGED = 5",
        "ds_last_error_message",
        "ds_simulate",
        "ds_simulation_v",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib = static_library();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    let (u0, u3): (f64, f64) = (fields[0].parse().unwrap(), fields[1].parse().unwrap());
    // The default Dirichlet face is the right end.
    assert!(u3 > 0.0 && u3 < u0 && u0 < 0.5, "{text}");
    assert_eq!(fields[2], env!("CARGO_PKG_VERSION"));
}
