use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elo::{elo_update, EloRating};
use super::exam::{AnswerSheet, Exam, ExamQuestion};
use super::ArenaError;
use crate::Scalar;

/// Result of one battle from model A's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    WinA,
    Draw,
    WinB,
}

impl Outcome {
    /// A wins iff only A is exactly correct; B symmetrically; otherwise draw.
    pub fn decide(question: &ExamQuestion, a: &AnswerSheet, b: &AnswerSheet) -> Self {
        match (a.is_correct(question), b.is_correct(question)) {
            (true, false) => Outcome::WinA,
            (false, true) => Outcome::WinB,
            _ => Outcome::Draw,
        }
    }

    pub fn score_a(self) -> f64 {
        match self {
            Outcome::WinA => 1.0,
            Outcome::Draw => 0.5,
            Outcome::WinB => 0.0,
        }
    }

    pub fn from_score_a(score: f64) -> Option<Self> {
        match score {
            1.0 => Some(Outcome::WinA),
            0.5 => Some(Outcome::Draw),
            0.0 => Some(Outcome::WinB),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BattleOutcome {
    pub question_id: String,
    pub model_a: String,
    pub model_b: String,
    pub score_a: f64,
}

pub fn battle(question: &ExamQuestion, a: &AnswerSheet, b: &AnswerSheet) -> BattleOutcome {
    BattleOutcome {
        question_id: question.id.clone(),
        model_a: a.model_name.clone(),
        model_b: b.model_name.clone(),
        score_a: Outcome::decide(question, a, b).score_a(),
    }
}

/// One line of the battle log, with both ratings after the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleRecord<T = f64> {
    pub seq: usize,
    pub question_id: String,
    pub model_a: String,
    pub model_b: String,
    pub score_a: f64,
    pub rating_a: T,
    pub rating_b: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub win: u64,
    pub draw: u64,
    pub loss: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.win + self.draw + self.loss
    }

    fn mirrored(self) -> Self {
        Self {
            win: self.loss,
            draw: self.draw,
            loss: self.win,
        }
    }
}

/// Battle counts between every ordered pair of models, viewed from the row
/// model. `counts[i][j]` and `counts[j][i]` are mirror images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinRateMatrix {
    models: Vec<String>,
    counts: Vec<Vec<PairCounts>>,
}

impl WinRateMatrix {
    pub fn new(models: Vec<String>) -> Self {
        let n = models.len();
        Self {
            models,
            counts: vec![vec![PairCounts::default(); n]; n],
        }
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn counts(&self, i: usize, j: usize) -> PairCounts {
        self.counts[i][j]
    }

    pub fn record(&mut self, a: usize, b: usize, outcome: Outcome) {
        let c = &mut self.counts[a][b];
        match outcome {
            Outcome::WinA => c.win += 1,
            Outcome::Draw => c.draw += 1,
            Outcome::WinB => c.loss += 1,
        }
        self.counts[b][a] = self.counts[a][b].mirrored();
    }

    /// `(win%, draw%, loss%)` of row model `i` against `j`; `None` if they
    /// never met.
    pub fn percentages(&self, i: usize, j: usize) -> Option<(f64, f64, f64)> {
        let c = self.counts[i][j];
        let total = c.total();
        if total == 0 {
            return None;
        }
        let pct = |n: u64| 100.0 * n as f64 / total as f64;
        Some((pct(c.win), pct(c.draw), pct(c.loss)))
    }

    pub fn win(&self, i: usize, j: usize) -> Option<f64> {
        self.percentages(i, j).map(|p| p.0)
    }

    pub fn draw(&self, i: usize, j: usize) -> Option<f64> {
        self.percentages(i, j).map(|p| p.1)
    }

    pub fn loss(&self, i: usize, j: usize) -> Option<f64> {
        self.percentages(i, j).map(|p| p.2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tournament<T = f64> {
    /// In sheet order.
    pub ratings: Vec<EloRating<T>>,
    pub matrix: WinRateMatrix,
    pub log: Vec<BattleRecord<T>>,
}

/// Every unordered model pair meets on every question, in an order fixed by
/// a seeded shuffle; Elo ratings are updated after each battle. The lower
/// sheet index always plays side A.
pub fn run_tournament<T: Scalar>(
    sheets: &[AnswerSheet],
    exam: &Exam,
    schedule_seed: u64,
    k_factor: T,
) -> Result<Tournament<T>, ArenaError> {
    if sheets.len() < 2 {
        return Err(ArenaError::InvalidInput(format!(
            "a tournament needs at least 2 answer sheets, got {}",
            sheets.len()
        )));
    }
    if !(k_factor.is_finite() && k_factor >= T::zero()) {
        return Err(ArenaError::InvalidInput(format!("K-factor must be finite and >= 0, got {k_factor}")));
    }
    let mut names = HashSet::new();
    for sheet in sheets {
        sheet.validate(exam)?;
        if !names.insert(sheet.model_name.as_str()) {
            return Err(ArenaError::InvalidInput(format!(
                "model {:?} has more than one answer sheet",
                sheet.model_name
            )));
        }
    }

    let mut schedule: Vec<(usize, usize, usize)> =
        Vec::with_capacity(sheets.len() * (sheets.len() - 1) / 2 * exam.len());
    for a in 0..sheets.len() {
        for b in a + 1..sheets.len() {
            schedule.extend((0..exam.len()).map(|q| (a, b, q)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule_seed);
    schedule.shuffle(&mut rng);

    let mut ratings: Vec<EloRating<T>> = sheets.iter().map(|s| EloRating::new(&s.model_name)).collect();
    let mut matrix = WinRateMatrix::new(sheets.iter().map(|s| s.model_name.clone()).collect());
    let mut log = Vec::with_capacity(schedule.len());
    for (seq, (a, b, q)) in schedule.into_iter().enumerate() {
        let question = &exam.questions()[q];
        let outcome = Outcome::decide(question, &sheets[a], &sheets[b]);
        let (ra, rb) = elo_update(
            ratings[a].rating,
            ratings[b].rating,
            T::lit(outcome.score_a()),
            k_factor,
        )?;
        ratings[a].rating = ra;
        ratings[b].rating = rb;
        ratings[a].games_played += 1;
        ratings[b].games_played += 1;
        matrix.record(a, b, outcome);
        log.push(BattleRecord {
            seq,
            question_id: question.id.clone(),
            model_a: sheets[a].model_name.clone(),
            model_b: sheets[b].model_name.clone(),
            score_a: outcome.score_a(),
            rating_a: ra,
            rating_b: rb,
        });
    }
    Ok(Tournament { ratings, matrix, log })
}

/// Rendered win-rate table: one row and column per model, each cell
/// `win/draw/loss` percentages of the row model, `-` where the pair never met.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTable {
    pub models: Vec<String>,
    pub cells: Vec<Vec<Option<(f64, f64, f64)>>>,
}

impl MatrixTable {
    pub fn from_matrix(m: &WinRateMatrix) -> Self {
        let n = m.models().len();
        let round = |x: f64| (x * 10.0).round() / 10.0;
        Self {
            models: m.models().to_vec(),
            cells: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| m.percentages(i, j).map(|(w, d, l)| (round(w), round(d), round(l))))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model".to_owned()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (model, row) in self.models.iter().zip(&self.cells) {
            let mut rec = vec![model.clone()];
            rec.extend(row.iter().map(|c| match c {
                Some((w, d, l)) => format!("{w:.1}/{d:.1}/{l:.1}"),
                None => "-".to_owned(),
            }));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn parse(text: &str) -> Result<Self, ArenaError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let perr = |line: usize, reason: String| ArenaError::Parse { line, reason };
        let header = r.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        if header.get(0) != Some("model") {
            return Err(perr(1, "first column must be `model`".into()));
        }
        let models: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut cells = Vec::with_capacity(models.len());
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| perr(line, e.to_string()))?;
            if rec.len() != models.len() + 1 || rec.get(0) != models.get(i).map(String::as_str) {
                return Err(perr(line, "row does not match header model order".into()));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|cell| {
                    if cell == "-" {
                        return Ok(None);
                    }
                    let parts: Vec<f64> = cell
                        .split('/')
                        .map(|p| p.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| perr(line, format!("cell {cell:?}: {e}")))?;
                    match parts[..] {
                        [w, d, l] => Ok(Some((w, d, l))),
                        _ => Err(perr(line, format!("cell {cell:?} is not win/draw/loss"))),
                    }
                })
                .collect::<Result<_, _>>()?;
            cells.push(row);
        }
        if cells.len() != models.len() {
            return Err(perr(cells.len() + 2, "missing rows".into()));
        }
        Ok(Self { models, cells })
    }
}

/// Human-readable CSV win-rate table (1 decimal place).
pub fn export_matrix(m: &WinRateMatrix) -> String {
    MatrixTable::from_matrix(m).render()
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixLine {
    Models { models: Vec<String> },
    Pair {
        model: String,
        opponent: String,
        win: u64,
        draw: u64,
        loss: u64,
        win_pct: Option<f64>,
        draw_pct: Option<f64>,
        loss_pct: Option<f64>,
    },
}

/// Machine-readable variant: a `{models}` line, then one line per ordered
/// pair with exact counts and percentages.
pub fn export_matrix_records(m: &WinRateMatrix) -> String {
    let mut out = String::new();
    let mut push = |line: &MatrixLine| {
        out.push_str(&serde_json::to_string(line).expect("serializable"));
        out.push('\n');
    };
    push(&MatrixLine::Models { models: m.models().to_vec() });
    let n = m.models().len();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let c = m.counts(i, j);
            let p = m.percentages(i, j);
            push(&MatrixLine::Pair {
                model: m.models()[i].clone(),
                opponent: m.models()[j].clone(),
                win: c.win,
                draw: c.draw,
                loss: c.loss,
                win_pct: p.map(|p| p.0),
                draw_pct: p.map(|p| p.1),
                loss_pct: p.map(|p| p.2),
            });
        }
    }
    out
}

pub fn parse_matrix_records(text: &str) -> Result<WinRateMatrix, ArenaError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let perr = |line: usize, reason: String| ArenaError::Parse { line: line + 1, reason };
    let mut matrix = match lines.next() {
        Some((i, l)) => match serde_json::from_str(l).map_err(|e| perr(i, e.to_string()))? {
            MatrixLine::Models { models } => WinRateMatrix::new(models),
            MatrixLine::Pair { .. } => return Err(perr(i, "expected the models line first".into())),
        },
        None => return Err(perr(0, "empty input".into())),
    };
    let index = |name: &str| matrix.models().iter().position(|m| m == name);
    let mut pairs = Vec::new();
    for (i, l) in lines {
        match serde_json::from_str(l).map_err(|e| perr(i, e.to_string()))? {
            MatrixLine::Pair { model, opponent, win, draw, loss, .. } => {
                let (Some(a), Some(b)) = (index(&model), index(&opponent)) else {
                    return Err(perr(i, format!("unknown model in pair {model:?} vs {opponent:?}")));
                };
                pairs.push((i, a, b, PairCounts { win, draw, loss }));
            }
            MatrixLine::Models { .. } => return Err(perr(i, "duplicate models line".into())),
        }
    }
    for (i, a, b, c) in pairs {
        if matrix.counts[b][a] != PairCounts::default() && matrix.counts[b][a] != c.mirrored() {
            return Err(perr(i, "pair counts are not mirror images".into()));
        }
        matrix.counts[a][b] = c;
        matrix.counts[b][a] = c.mirrored();
    }
    Ok(matrix)
}

/// Ranking table sorted by rating (ties keep sheet order).
pub fn export_ratings<T: Scalar>(ratings: &[EloRating<T>]) -> String {
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    order.sort_by(|&a, &b| {
        ratings[b]
            .rating
            .partial_cmp(&ratings[a].rating)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let width = ratings.iter().map(|r| r.model_name.chars().count()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    writeln!(out, "{:<4}  {:<width$}  {:>9}  {:>6}", "rank", "model", "rating", "games").unwrap();
    for (rank, &i) in order.iter().enumerate() {
        let r = &ratings[i];
        writeln!(
            out,
            "{:<4}  {:<width$}  {:>9.2}  {:>6}",
            rank + 1,
            r.model_name,
            r.rating.to_f64_lossy(),
            r.games_played
        )
        .unwrap();
    }
    out
}

/// One JSON line per model in sheet order, full precision.
pub fn export_ratings_records<T: Scalar>(ratings: &[EloRating<T>]) -> String {
    ratings
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

pub fn parse_ratings_records<T: Scalar>(text: &str) -> Result<Vec<EloRating<T>>, ArenaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ArenaError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
