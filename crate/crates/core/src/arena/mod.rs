//! Multiple-choice exam grading and the pairwise Elo arena.

pub mod elo;
mod exam;
mod tournament;

use thiserror::Error;

pub use elo::{elo_update, expected_scores, EloRating, DEFAULT_K_FACTOR, INITIAL_RATING};
pub use exam::{
    grade, load_exam, load_sheet, save_exam, save_sheet, AnswerSheet, Exam, ExamQuestion,
    GradeReport, Label, LabelSet, QuestionResult,
};
pub use tournament::{
    battle, export_matrix, export_matrix_records, export_ratings, export_ratings_records,
    parse_matrix_records, parse_ratings_records, run_tournament, BattleOutcome, BattleRecord,
    MatrixTable, Outcome, PairCounts, Tournament, WinRateMatrix,
};

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("question {question:?}: {reason}")]
    Validation { question: String, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ArenaError {
    pub(crate) fn validation(question: &str, reason: impl Into<String>) -> Self {
        ArenaError::Validation {
            question: question.to_owned(),
            reason: reason.into(),
        }
    }
}
