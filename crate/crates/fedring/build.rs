use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/refs");
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok());
    if let Some(d) = describe {
        let d = d.trim();
        let d = if d.starts_with('v') {
            d.to_string()
        } else {
            format!("v{}-g{d}", env!("CARGO_PKG_VERSION"))
        };
        println!("cargo:rustc-env=FEDRING_GIT_DESCRIBE={d}");
    }
}
