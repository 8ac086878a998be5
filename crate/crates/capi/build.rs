use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = PathBuf::from(&crate_dir).join("include/p2dfit.h");

    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.include_guard = Some("P2DFIT_H".into());
    config.cpp_compat = true;
    // C has no enum namespacing; qualify the variants.
    config.enumeration.rename_variants = cbindgen::RenameRule::QualifiedScreamingSnakeCase;
    config.documentation = true;

    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        Err(err) => {
            // Keep the committed header when generation is unavailable.
            println!("cargo:warning=cbindgen failed, keeping committed header: {err}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
