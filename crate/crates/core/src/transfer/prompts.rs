//! Prompt templates for transfer, verification and from-scratch synthesis.
//!
//! Section bodies are inserted verbatim. Output is byte-stable and has no
//! trailing newline.

use super::TransferError;
use crate::corpus::Demonstration;

pub(crate) const DELIMITER: &str = "\n\n---\n\n";

/// `Input:` / `Reason:` / `Answer:` block.
pub(crate) fn demo_block(input: &str, reason: &str, answer: &str) -> String {
    format!("Input:\n{input}\nReason:\n{reason}\nAnswer:\n{answer}")
}

fn require(text: &str, what: &str) -> Result<(), TransferError> {
    if text.trim().is_empty() {
        Err(TransferError::Render(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

/// The transfer prompt: rewrite `source_demo` from task A into task B,
/// showing one paired example of each task.
pub fn render_transfer_prompt(
    source_definition: &str,
    target_definition: &str,
    example_pair: Option<(&Demonstration, &Demonstration)>,
    source_demo: &Demonstration,
) -> Result<String, TransferError> {
    require(source_definition, "source task definition")?;
    require(target_definition, "target task definition")?;
    let (example_a, example_b) =
        example_pair.ok_or_else(|| TransferError::Render("missing example pair".into()))?;
    require(&source_demo.question, "source demonstration input")?;
    require(&source_demo.answer, "source demonstration answer")?;

    let rationale = |d: &Demonstration| d.rationale.clone().unwrap_or_default();
    Ok(format!(
        "Convert an example from Task A into an example for Task B, ensuring that both examples are consistent in terms of domain and knowledge. A sample for Task A is provided below. Please create a corresponding example for Task B, while maintaining the same domain and knowledge context.\n\
The definition of Task A: {source_definition}\n\
The definition of Task B: {target_definition}\n\
\n\
---\n\
\n\
For example, given the following example for Task A:\n\
{block_a}\n\
\n\
The corresponding example for Task B could be:\n\
{block_b}\n\
\n\
---\n\
\n\
Based on the above example, please transfer the following example from Task A to Task B:\n\
Input:\n\
{question}\n\
Answer:\n\
{answer}\n\
\n\
Your output format should be as follows:\n\
Input:\n\
<Converted input of Task B>\n\
Reason:\n\
<Explanation of the converted>\n\
Answer:\n\
<Converted answer of Task B>",
        block_a = demo_block(&example_a.question, &rationale(example_a), &example_a.answer),
        block_b = demo_block(&example_b.question, &rationale(example_b), &example_b.answer),
        question = source_demo.question,
        answer = source_demo.answer,
    ))
}

/// The verification prompt: judge a synthesized example against the task
/// description and labeled examples.
pub fn render_verify_prompt(
    definition: &str,
    examples: &[Demonstration],
    input: &str,
    reason: &str,
    answer: &str,
) -> Result<String, TransferError> {
    require(definition, "task definition")?;
    if examples.is_empty() {
        return Err(TransferError::Render(
            "verification needs at least one example".into(),
        ));
    }
    let blocks: Vec<String> = examples
        .iter()
        .map(|e| demo_block(&e.question, e.rationale.as_deref().unwrap_or(""), &e.answer))
        .collect();
    Ok(format!(
        "Given a task description, several examples, and a pre-synthesized example, evaluate whether the pre-synthesized example matches the format and functionality of the provided examples and aligns with the task description. Based on the evaluation, determine whether the pre-synthesized example is \"Qualified\"\n\
You should check the pre-synthesized example based on the following criteria:\n\
1. Format Consistency: Does the pre-synthesized example follow the format of the provided examples?\n\
2. Task Fulfillment: Does the pre-synthesized example fulfill the requirements of the task description?\n\
3. Functional Accuracy: Are the input and output in the pre-synthesized example consistent with those in the provided examples?\n\
If the pre-synthesized example meets all the criteria above, return: \"Qualified.\"\n\
If the pre-synthesized example fails to meet any of the criteria, return: \"Unqualified.\"\n\
Think it step by step.\n\
\n\
Task Description:\n\
{definition}\n\
\n\
Examples:\n\
\n\
{examples}{DELIMITER}\
Pre-synthesized Example:\n\
{candidate}",
        examples = blocks.join(DELIMITER),
        candidate = demo_block(input, reason, answer),
    ))
}

/// From-scratch synthesis prompt: the transfer prompt without any task-A
/// content. `variant` makes each request distinct so that repeated samples
/// are not collapsed by the response cache.
pub fn render_synthesis_prompt(
    target_definition: &str,
    example: &Demonstration,
    variant: usize,
) -> Result<String, TransferError> {
    require(target_definition, "target task definition")?;
    require(&example.question, "example input")?;
    Ok(format!(
        "Create a new example for Task B that is consistent with the definition of Task B. An example for Task B is provided below. Please create a different example for Task B with the same format.\n\
The definition of Task B: {target_definition}\n\
\n\
---\n\
\n\
For example, an example for Task B could be:\n\
{block}\n\
\n\
---\n\
\n\
Please create new example number {number} for Task B.\n\
\n\
Your output format should be as follows:\n\
Input:\n\
<Input of Task B>\n\
Reason:\n\
<Explanation of the answer>\n\
Answer:\n\
<Answer of Task B>",
        block = demo_block(
            &example.question,
            example.rationale.as_deref().unwrap_or(""),
            &example.answer
        ),
        number = variant + 1,
    ))
}
