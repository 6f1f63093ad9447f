//! Assemble the golden prompts from their pinned states and compare them to
//! the shipped fixture files, printing the period-2 pricing prompt.
//!
//! Run with: cargo run --example prompt_goldens

use collab::agent::{assemble_prompt, goldens, ChatSettings};

fn main() {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for case in goldens::all() {
        let request = assemble_prompt(&case.state, &case.window, &ChatSettings::default());
        let expected = std::fs::read_to_string(fixtures.join(case.user_file)).expect("fixture");
        let status = if request.user_text == expected {
            "BYTE-IDENTICAL"
        } else {
            "DIVERGED"
        };
        println!("{}: {status}", case.user_file);
    }
    let period2 = goldens::pricing_period2();
    let request = assemble_prompt(&period2.state, &period2.window, &ChatSettings::default());
    println!("\n----- assembled period-2 pricing prompt -----\n");
    println!("{}", request.user_text);
}
