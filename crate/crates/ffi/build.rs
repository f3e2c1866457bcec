use std::env;
use std::fs;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("manifest dir"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml");
    let header = dir.join("include").join("ctxknow.h");
    match cbindgen::generate_with_config(&dir, config) {
        Ok(bindings) => {
            let mut out = Vec::new();
            bindings.write(&mut out);
            // leave the file untouched when nothing changed
            if fs::read(&header).ok().as_deref() != Some(out.as_slice()) {
                fs::create_dir_all(header.parent().expect("include dir")).expect("create include dir");
                fs::write(&header, out).expect("write header");
            }
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
