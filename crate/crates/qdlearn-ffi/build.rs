use std::env;
use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(crate_dir.join("include").join("qdlearn.h"));
        }
        // header generation failing should not break the library build
        Err(e) => println!("cargo:warning=cbindgen failed, header not regenerated: {e}"),
    }
}
