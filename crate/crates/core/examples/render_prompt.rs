//! Renders the structure prompt from the built-in templates and shows the
//! failure-excerpt truncation used by repair prompts.
//!
//! ```sh
//! cargo run --example render_prompt
//! ```

use onx::prompt::{truncate_tail, PromptContext, TemplateId, TemplateRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = TemplateRegistry::defaults();
    for id in TemplateId::ALL {
        let vars: Vec<_> = registry.get(id).required_vars.iter().cloned().collect();
        println!("{:<22} {}", id.as_str(), vars.join(", "));
    }

    let ctx = PromptContext::new()
        .with("project_name", "wordcount")
        .with("language", "Python")
        .with("project_description", "- Count words in the files given on the command line.")
        .with("dependencies", "(none)")
        .with("outputs", "- One line per file: `<count> <path>`.")
        .with("acceptance_tests", "- Counting an empty file prints 0.")
        .with("identifier_pattern", "^[A-Za-z_][A-Za-z0-9_]*$")
        .with("feedback", "");
    println!("\n{}", registry.render(TemplateId::StructureGen, &ctx)?);

    let missing = registry.render(TemplateId::MainGen, &ctx).unwrap_err();
    println!("rendering main_gen with the same context: {missing}");

    let output: String = (1..=200).map(|i| format!("line {i}: assert False\n")).collect();
    let excerpt = truncate_tail(&output, 120);
    println!("\ntail excerpt of {} characters:\n{excerpt}", output.len());
    Ok(())
}
