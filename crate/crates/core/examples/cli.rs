// Driving the command-line frontend in-process: the wells command and its manifest.

use twowell::cli::main_with_args;

pub fn run_example() -> i32 {
    let dir = std::env::temp_dir().join(format!("twowell-example-{}", std::process::id()));
    let out = dir.to_string_lossy().to_string();
    let code = main_with_args(["twowell", "wells", "--a", "1.4142135623730951", "--out", &out]);
    let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    println!("exit {code}\n{manifest}");
    let _ = std::fs::remove_dir_all(&dir);
    code
}

#[allow(dead_code)]
fn main() {
    run_example();
}
