//! Constrained-English front end: grammar, parser, digester and compiler.

pub mod compile;
pub mod digest;
pub mod grammar;
pub mod kb;
pub mod parse;

use thiserror::Error;

pub use compile::{compile, compile_command, compile_fact, compile_operator, compile_rule, CompileError, Compiled};
pub use digest::{digest, AItem, AList, Segment};
pub use grammar::{Grammar, GrammarError, UtteranceClass, DEFAULT_GRAMMAR};
pub use kb::{Kb, KbError};
pub use parse::{parse, parse_any, tokenize, ParseError, ParseTree, Token};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum UnderstandError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Everything the pipeline produced for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Understood {
    pub class: UtteranceClass,
    pub alist: AList,
    pub compiled: Compiled,
}

/// Tokenize, parse, digest and compile one utterance.
pub fn understand(text: &str, g: &Grammar, speaker: &str) -> Result<Understood, UnderstandError> {
    let tokens = tokenize(text);
    let (class, tree) = parse_any(&tokens, g)?;
    let alist = digest(&tree, g);
    let compiled = compile(&alist, class, g, speaker)?;
    Ok(Understood {
        class,
        alist,
        compiled,
    })
}
