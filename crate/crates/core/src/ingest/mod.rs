//! Loading embeddings, votes, authorship and triplets, and deriving
//! participant splits and pooled anchors.

pub mod authors;
pub mod embeddings;
pub mod remote;
pub mod split;
pub mod triplets;
pub mod votes;

pub use authors::{load_authorship, pool_anchor, AuthoredText, Authorship, Participant};
pub use embeddings::{load_embeddings, manifest_path, EmbeddingStore, LoadReport, Manifest};
pub use remote::{fetch_embeddings_remote, RemoteConfig};
pub use split::{parse_fractions, split_participants, Split, DEFAULT_FRACTIONS};
pub use triplets::{build_triplets, Triplet, TripletSet};
pub use votes::{load_votes, save_votes, Vote, VoteKind, VoteTable};
