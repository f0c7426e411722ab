//! Prompt templates. These strings are part of the trained model's input
//! distribution; any byte change invalidates previously emitted datasets.

/// Everything before the email body in the summarization prompt.
pub const SUMMARIZATION_PREFIX: &str = "Summarize the following email that I wrote, in an imperative form, \
in one or two or maximum three sentences, and make sure to include relevant information, without copying \
the email content itself. The summary should look like an instruction directing someone to write the same \
email, and start with Instruction:\nHere is the email text:\n";

/// Role-setting text that opens every generation prompt.
pub const SYSTEM_PREAMBLE: &str = "Your role is that of a helpful automated email assistant. I will provide \
you with a short instruction, and you have to write a well-formed email in my style following this \
instruction. Be sure to follow my email writing style!  In case you see a nonsensical instruction, you \
should not reply with an email, but with the expression \"Sorry, but I don't get it.\"";

/// A filled-in example of the user preamble slot.
pub const EXAMPLE_USER_PREAMBLE: &str = "My name is Jane Doe. I work as a manager at Acme Corp. My address \
is 123 Main Street, Springfield, IL, USA. My boss's name is Alex Burns. My children's names are Elsa, Anna, \
and Olaf. I am deeply committed to my hobby of underwater basket weaving, for which we meet every Thursday \
at noon.";

pub const RAG_HEADER: &str = "Extract specific information from these previous e-mails only if it is \
relevant to the current e-mail you have to write.\n\nPrevious e-mails:\n\n";

pub const RAG_EMAIL_LABEL: &str = "EMAIL CONTENT:\n";

pub const RAG_SEPARATOR: &str = "\n\n---\n";

pub const INSTRUCTION_MARKER: &str = "Instruction:";

/// Minimal user preamble naming the user.
pub fn name_preamble(first_name: &str, last_name: &str) -> String {
    format!("My name is {first_name} {last_name}")
}

/// The summarization prompt for one email. The body is inserted verbatim.
pub fn summarization_prompt(email_body: &str) -> String {
    let mut out = String::with_capacity(SUMMARIZATION_PREFIX.len() + email_body.len());
    out.push_str(SUMMARIZATION_PREFIX);
    out.push_str(email_body);
    out
}

/// Renders retrieved email bodies as the RAG context block. Empty input
/// renders as the empty string.
pub fn rag_block<'a>(bodies: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, body) in bodies.into_iter().enumerate() {
        if i == 0 {
            out.push_str(RAG_HEADER);
        } else {
            out.push('\n');
        }
        out.push_str(RAG_EMAIL_LABEL);
        out.push_str(body);
        out.push_str(RAG_SEPARATOR);
    }
    out
}
