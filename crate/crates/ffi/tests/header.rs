//! The generated header must compile as C and as C++.

use std::path::Path;
use std::process::Command;

#[test]
fn header_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/ddmpc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["ddmpc_synthesize", "ddmpc_verify", "ddmpc_simulate", "ddmpc_last_error", "DDMPC_STATUS_OK", "typedef struct DdmpcController DdmpcController"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(&src, "#include \"ddmpc.h\"\nint main(void) { DdmpcSimSummary s = {0}; return (int)s.steps + (int)DDMPC_STATUS_OK; }\n").unwrap();
    for (cc, extra) in [("cc", &["-std=c99"][..]), ("c++", &["-x", "c++"][..])] {
        let out = match Command::new(cc).args(extra).arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(dir.join("include")).arg(&src).output() {
            Ok(o) => o,
            Err(_) => {
                eprintln!("{cc} not available; skipping");
                continue;
            }
        };
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
