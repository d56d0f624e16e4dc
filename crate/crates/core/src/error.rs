use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid formula: {0}")]
    Formula(String),

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("stream block {block}, line {line}: {msg}")]
    Stream {
        block: usize,
        line: usize,
        msg: String,
    },

    #[error("exact inference refused: {hidden} hidden atoms exceeds the bound of {max}")]
    TooManyHidden { hidden: usize, max: usize },

    #[error("stream exhausted after {got} subgraphs; {needed} required")]
    StreamExhausted { got: usize, needed: usize },

    #[error("model file: {0}")]
    Model(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn syntax(line: usize, msg: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            msg: msg.into(),
        }
    }
}
