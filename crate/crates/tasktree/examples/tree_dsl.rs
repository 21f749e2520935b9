//! Parse, pretty-print, and cross-validate mission trees.
//!
//!     cargo run --example tree_dsl

use std::collections::BTreeSet;
use std::path::Path;

use tasktree::dsl;
use tasktree::scenario;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");

    // The shipped mission tree, from source to canonical form. Node ids
    // are label slugs deduplicated in pre-order, so files need no
    // explicit id syntax.
    let src = std::fs::read_to_string(dir.join("pick_and_place.bt")).expect("tree file");
    let parsed = dsl::parse(&src).expect("shipped tree parses");
    let ids = parsed.root.node_ids();
    println!("{} nodes, root '{}'", ids.len(), parsed.root.id);

    let canonical = dsl::print(&parsed.root);
    println!("\ncanonical form:\n{}", canonical);

    // Printing is an inverse of parsing: the canonical text maps back
    // to the identical tree.
    let reparsed = dsl::parse(&canonical).expect("canonical form parses");
    assert_eq!(parsed.root, reparsed.root);
    println!("print -> parse round-trip: identical tree");

    // Malformed input comes back as positioned diagnostics, not a
    // panic.
    let bad = r#"seq { cond "At C"  act "Move to B" "#;
    match dsl::parse(bad) {
        Ok(_) => unreachable!(),
        Err(diags) => {
            println!("\nmissing brace:");
            for d in &diags {
                println!("  {}", d);
            }
        }
    }

    // Leaves are labels into the scenario's catalogs; validation
    // catches references that do not resolve.
    let bundle = scenario::load(&dir.join("pick_and_place.toml")).expect("scenario loads");
    let predicates: BTreeSet<String> = bundle.config.predicates.keys().cloned().collect();
    let commands: BTreeSet<String> = bundle.config.commands.keys().cloned().collect();
    let tasks: BTreeSet<String> = bundle.config.tasks.keys().cloned().collect();

    let stray = dsl::parse(r#"seq { cond "Sky Is Green"  sot_act "Reach Cube" }"#).unwrap();
    let diags = dsl::validate_tree(&stray, &predicates, &commands, &tasks);
    println!("\nunknown leaf labels:");
    for d in &diags {
        println!("  {}", d);
    }

    let clean = dsl::validate_tree(&parsed, &predicates, &commands, &tasks);
    println!(
        "\nshipped tree against shipped catalogs: {} problems",
        clean.len()
    );
}
