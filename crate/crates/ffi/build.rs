use std::env;
use std::fs;
use std::path::Path;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(Path::new(&crate_dir).join("cbindgen.toml")).unwrap();
    let mut raw = Vec::new();
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generate C header")
        .write(&mut raw);

    // enum constants are prefixed with the typedef name; drop its _t
    let header: String = String::from_utf8(raw)
        .unwrap()
        .lines()
        .map(|line| {
            if line.trim_start().starts_with("HP_") {
                line.replacen("_T_", "_", 1)
            } else {
                line.to_string()
            }
        })
        .map(|line| line + "\n")
        .collect();

    let dir = Path::new(&crate_dir).join("include");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("hetpref.h");
    if fs::read_to_string(&path).ok().as_deref() != Some(header.as_str()) {
        fs::write(&path, header).unwrap();
    }
}
