//! Input formats: the return/macro panel CSV, the `CVEM` embedding store,
//! and look-back window assembly.

mod embeddings;
mod returns;
mod window;

pub use embeddings::{
    load_embeddings, read_embeddings, save_embeddings, write_embeddings, Article, ArticleId,
    EmbeddingStore, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use returns::{load_returns, save_returns, LoadedPanel, ReturnPanel, MACRO_PREFIX, MAX_FORWARD_FILL};
pub use window::{assemble_window, window_days, AssembledWindow, WindowDay, WindowSpec, DEFAULT_WINDOW_DAYS};
