//! End-to-end determinism check: every command, run twice with different
//! worker counts, must leave byte-identical files behind.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// One numbered criterion with an optional wall-clock budget in seconds.
struct Criterion {
    number: u32,
    deadline_s: Option<f64>,
    start: Instant,
}

impl Criterion {
    fn begin(number: u32, deadline_s: Option<f64>) -> Self {
        Criterion { number, deadline_s, start: Instant::now() }
    }

    fn finish(self, ok: bool) {
        let elapsed = self.start.elapsed().as_secs_f64();
        let within = self.deadline_s.map_or(true, |limit| elapsed <= limit);
        let verdict = if ok && within { "PASS" } else { "FAIL" };
        println!("ACCEPTANCE {} {verdict} ({elapsed:.2} s)", self.number);
        assert!(ok, "criterion {} check failed", self.number);
        assert!(
            within,
            "criterion {} exceeded its {:.0} s budget ({elapsed:.2} s)",
            self.number,
            self.deadline_s.unwrap_or(f64::NAN)
        );
    }
}

const CONFIG: &str = "\
resolution_hint_m = 0.4

[links]
tx_positions_m = [[9.0, -15.0, 1.5]]
rx_positions_m = [[3.0, 2.0, 1.5], [15.0, 2.0, 1.5]]

[model]
max_bounces = 2
";

/// Runs the binary with a pinned worker count, failing loudly on error.
fn run(dir: &Path, threads: &str, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_cloudrt"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "{args:?} with {threads} workers failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output directory exists") {
        let entry = entry.expect("directory entry");
        map.insert(
            entry.file_name().into_string().expect("utf-8 file name"),
            std::fs::read(entry.path()).expect("output file readable"),
        );
    }
    map
}

/// Same file names with the same bytes in both directories.
fn identical(root: &Path, a: &str, b: &str) -> bool {
    let left = dir_bytes(&root.join(a));
    let right = dir_bytes(&root.join(b));
    left.keys().eq(right.keys()) && left.iter().all(|(name, bytes)| right[name] == *bytes)
}

#[test]
fn criterion_11_outputs_do_not_depend_on_worker_count() {
    let criterion = Criterion::begin(11, None);
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("config.toml"), CONFIG).unwrap();

    // Inputs are referenced by identical relative paths in both legs; only
    // the output directory differs, and no output records it. Later
    // commands consume files produced by earlier single-worker legs.
    let commands: [(&str, &str, &[&str]); 7] = [
        ("sa", "sb", &["synth-scene", "--spacing", "0.4"]),
        (
            "oa",
            "ob",
            &[
                "synth-obs",
                "--scene",
                "sa/scene.xyz",
                "--config",
                "config.toml",
                "--noise-db",
                "1",
                "--seed",
                "7",
            ],
        ),
        ("ta", "tb", &["trace", "--scene", "sa/scene.xyz", "--config", "config.toml"]),
        ("ca", "cb", &["curves", "--config", "config.toml"]),
        (
            "ka",
            "kb",
            &[
                "calibrate",
                "--scene",
                "sa/scene.xyz",
                "--config",
                "config.toml",
                "--observations",
                "oa/observations.csv",
                "--film-grid-nm",
                "0:40:8",
                "--canopy-grid",
                "0:3:0.5",
            ],
        ),
        ("la", "lb", &["lsp", "--scene", "sa/scene.xyz", "--config", "config.toml"]),
        (
            "ra",
            "rb",
            &[
                "lsp",
                "--scene",
                "sa/scene.xyz",
                "--config",
                "config.toml",
                "--reference",
                "la/lsp.csv",
            ],
        ),
    ];

    let mut ok = true;
    for (a, b, args) in commands {
        let mut first = args.to_vec();
        first.extend(["--out-dir", a]);
        run(root, "1", &first);
        let mut second = args.to_vec();
        second.extend(["--out-dir", b]);
        run(root, "4", &second);
        ok &= identical(root, a, b);
    }
    criterion.finish(ok);
}
