use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::ArenaError;

/// Option label of a multiple-choice question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::A, Label::B, Label::C, Label::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
            Label::C => "C",
            Label::D => "D",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Label::A),
            "B" | "b" => Ok(Label::B),
            "C" | "c" => Ok(Label::C),
            "D" | "d" => Ok(Label::D),
            other => Err(format!("unknown option label {other:?}")),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type LabelSet = BTreeSet<Label>;

fn parse_labels(raw: &[String], qid: &str, what: &str) -> Result<LabelSet, ArenaError> {
    raw.iter()
        .map(|l| {
            l.parse::<Label>()
                .map_err(|reason| ArenaError::validation(qid, format!("{what}: {reason}")))
        })
        .collect()
}

/// Multi-select question; correct only when the answer equals `gold` exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamQuestion {
    pub id: String,
    pub stem: String,
    pub options: BTreeMap<Label, String>,
    pub gold: LabelSet,
}

#[derive(Serialize, Deserialize)]
struct RawQuestion {
    id: String,
    stem: String,
    options: BTreeMap<String, String>,
    gold: Vec<String>,
}

impl ExamQuestion {
    pub fn new(
        id: impl Into<String>,
        stem: impl Into<String>,
        options: BTreeMap<Label, String>,
        gold: LabelSet,
    ) -> Result<Self, ArenaError> {
        let q = Self {
            id: id.into(),
            stem: stem.into(),
            options,
            gold,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<(), ArenaError> {
        if self.id.trim().is_empty() {
            return Err(ArenaError::validation("", "question id is empty"));
        }
        if self.options.is_empty() {
            return Err(ArenaError::validation(&self.id, "question has no options"));
        }
        if self.gold.is_empty() {
            return Err(ArenaError::validation(&self.id, "gold answer set is empty"));
        }
        if let Some(l) = self.gold.iter().find(|l| !self.options.contains_key(l)) {
            return Err(ArenaError::validation(
                &self.id,
                format!("gold label {l} is not one of the options"),
            ));
        }
        Ok(())
    }

    pub fn is_correct(&self, answer: &LabelSet) -> bool {
        *answer == self.gold
    }

    fn from_raw(raw: RawQuestion) -> Result<Self, ArenaError> {
        let options = raw
            .options
            .into_iter()
            .map(|(k, v)| {
                k.parse::<Label>()
                    .map(|l| (l, v))
                    .map_err(|reason| ArenaError::validation(&raw.id, format!("options: {reason}")))
            })
            .collect::<Result<_, _>>()?;
        let gold = parse_labels(&raw.gold, &raw.id, "gold")?;
        Self::new(raw.id, raw.stem, options, gold)
    }

    fn to_raw(&self) -> RawQuestion {
        RawQuestion {
            id: self.id.clone(),
            stem: self.stem.clone(),
            options: self
                .options
                .iter()
                .map(|(l, t)| (l.to_string(), t.clone()))
                .collect(),
            gold: self.gold.iter().map(Label::to_string).collect(),
        }
    }
}

/// Ordered question list with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Exam {
    questions: Vec<ExamQuestion>,
    by_id: HashMap<String, usize>,
}

impl Exam {
    pub fn new(questions: Vec<ExamQuestion>) -> Result<Self, ArenaError> {
        let mut by_id = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            q.validate()?;
            if by_id.insert(q.id.clone(), i).is_some() {
                return Err(ArenaError::validation(&q.id, "duplicate question id"));
            }
        }
        Ok(Self { questions, by_id })
    }

    pub fn questions(&self) -> &[ExamQuestion] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ExamQuestion> {
        self.by_id.get(id).map(|&i| &self.questions[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }
}

/// One `{id, stem, options, gold}` record per line.
pub fn load_exam<R: BufRead>(source: R) -> Result<Exam, ArenaError> {
    let mut questions = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawQuestion = serde_json::from_str(&line).map_err(|e| ArenaError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        questions.push(ExamQuestion::from_raw(raw)?);
    }
    Exam::new(questions)
}

pub fn save_exam<W: Write>(exam: &Exam, mut out: W) -> Result<(), ArenaError> {
    for q in exam.questions() {
        serde_json::to_writer(&mut out, &q.to_raw()).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// A model's answers. Missing questions and empty sets both count as wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSheet {
    pub model_name: String,
    pub answers: BTreeMap<String, LabelSet>,
}

#[derive(Serialize, Deserialize)]
struct RawSheet {
    model: String,
    answers: BTreeMap<String, Vec<String>>,
}

impl AnswerSheet {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            answers: BTreeMap::new(),
        }
    }

    pub fn answer(&self, question_id: &str) -> Option<&LabelSet> {
        self.answers.get(question_id)
    }

    pub fn validate(&self, exam: &Exam) -> Result<(), ArenaError> {
        if self.model_name.trim().is_empty() {
            return Err(ArenaError::InvalidInput("answer sheet has an empty model name".into()));
        }
        if let Some(qid) = self.answers.keys().find(|id| !exam.contains(id)) {
            return Err(ArenaError::validation(
                qid,
                format!("sheet for {:?} answers a question not in the exam", self.model_name),
            ));
        }
        Ok(())
    }

    /// Whether the answer to `q` matches its gold set exactly.
    pub fn is_correct(&self, q: &ExamQuestion) -> bool {
        self.answer(&q.id).is_some_and(|a| q.is_correct(a))
    }
}

/// Reads a `{model, answers: {qid: [labels]}}` document and validates it
/// against `exam`.
pub fn load_sheet<R: Read>(source: R, exam: &Exam) -> Result<AnswerSheet, ArenaError> {
    let raw: RawSheet = serde_json::from_reader(source).map_err(|e| ArenaError::Parse {
        line: e.line(),
        reason: e.to_string(),
    })?;
    let answers = raw
        .answers
        .iter()
        .map(|(qid, labels)| Ok((qid.clone(), parse_labels(labels, qid, "answer")?)))
        .collect::<Result<_, ArenaError>>()?;
    let sheet = AnswerSheet {
        model_name: raw.model,
        answers,
    };
    sheet.validate(exam)?;
    Ok(sheet)
}

pub fn save_sheet<W: Write>(sheet: &AnswerSheet, mut out: W) -> Result<(), ArenaError> {
    let raw = RawSheet {
        model: sheet.model_name.clone(),
        answers: sheet
            .answers
            .iter()
            .map(|(q, ls)| (q.clone(), ls.iter().map(Label::to_string).collect()))
            .collect(),
    };
    serde_json::to_writer(&mut out, &raw).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeReport {
    pub model: String,
    pub correct: usize,
    pub total: usize,
    /// `correct / total`; 0 for an empty exam.
    pub accuracy: f64,
    pub per_question: Vec<QuestionResult>,
}

/// Exact-set grading: no partial credit, unanswered counts as wrong.
pub fn grade(sheet: &AnswerSheet, exam: &Exam) -> Result<GradeReport, ArenaError> {
    sheet.validate(exam)?;
    let per_question: Vec<QuestionResult> = exam
        .questions()
        .iter()
        .map(|q| QuestionResult {
            question_id: q.id.clone(),
            correct: sheet.is_correct(q),
        })
        .collect();
    let correct = per_question.iter().filter(|r| r.correct).count();
    let total = exam.len();
    Ok(GradeReport {
        model: sheet.model_name.clone(),
        correct,
        total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_question,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn labels(s: &str) -> LabelSet {
        s.chars().map(|c| c.to_string().parse().unwrap()).collect()
    }

    const PUBLIC_INTEREST_SUIT: &str = r#"{"id":"bar-001","stem":"红星中学采用伪劣产品铺设足球场，致使刺激性气味四处散发，并严重污染了场地底下土壤。于是，甲环保协会向市中级人民法院提起诉讼，请求判令红星中学拆除新建的足球场，并对污染的土壤采取修复措施。法院在受理后第7日书面告知市环保局。此时，市人民检察院也就此向法院提起公益诉讼，法院将其列为共同原告。双方当事人经协商达成的和解协议，法院未予审查即发出公告。公告期满后，应双方当事人请求，法院未制作调解书。关于本案，市中级人民法院的下列哪些做法是不合法的？","options":{"A":"受理后第7日书面告知市环保局","B":"对和解协议未经审查即发出公告","C":"将市人民检察院列为共同原告","D":"应双方当事人请求未制作调解书"},"gold":["C","D"]}"#;

    #[test]
    fn loads_multi_answer_bar_question() {
        let exam = load_exam(PUBLIC_INTEREST_SUIT.as_bytes()).unwrap();
        let q = exam.get("bar-001").unwrap();
        assert_eq!(q.gold, labels("CD"));
        assert_eq!(q.options.len(), 4);
        assert!(q.is_correct(&labels("DC")));
        assert!(!q.is_correct(&labels("C")));
    }

    #[test]
    fn gold_label_outside_options_rejected() {
        let line = r#"{"id":"q9","stem":"s","options":{"A":"a","B":"b","C":"c","D":"d"},"gold":["E"]}"#;
        let err = load_exam(line.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("q9"), "{err}");
        let line = r#"{"id":"q8","stem":"s","options":{"A":"a","B":"b"},"gold":["C"]}"#;
        assert!(matches!(load_exam(line.as_bytes()), Err(ArenaError::Validation { .. })));
        let line = r#"{"id":"q7","stem":"s","options":{"A":"a"},"gold":[]}"#;
        assert!(load_exam(line.as_bytes()).is_err());
    }

    #[test]
    fn sheet_with_unknown_question_rejected() {
        let exam = load_exam(PUBLIC_INTEREST_SUIT.as_bytes()).unwrap();
        let sheet = r#"{"model":"m","answers":{"bar-001":["C","D"],"bar-999":["A"]}}"#;
        let err = load_sheet(sheet.as_bytes(), &exam).unwrap_err();
        assert!(err.to_string().contains("bar-999"), "{err}");
        let bad_label = r#"{"model":"m","answers":{"bar-001":["Z"]}}"#;
        assert!(load_sheet(bad_label.as_bytes(), &exam).is_err());
    }

    fn four_question_exam() -> Exam {
        let opts: BTreeMap<Label, String> = Label::ALL.iter().map(|l| (*l, format!("opt {l}"))).collect();
        Exam::new(
            ["A", "CD", "B", "ABD"]
                .iter()
                .enumerate()
                .map(|(i, g)| ExamQuestion::new(format!("q{i}"), "stem", opts.clone(), labels(g)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_set_grading() {
        let exam = four_question_exam();
        let mut sheet = AnswerSheet::new("m");
        sheet.answers.insert("q0".into(), labels("A"));
        sheet.answers.insert("q1".into(), labels("CD"));
        sheet.answers.insert("q2".into(), labels("B"));
        sheet.answers.insert("q3".into(), labels("AB"));
        let r = grade(&sheet, &exam).unwrap();
        assert_eq!((r.correct, r.total), (3, 4));
        assert_eq!(r.accuracy, 0.75);

        sheet.answers.insert("q1".into(), labels("C"));
        sheet.answers.remove("q2");
        sheet.answers.insert("q0".into(), LabelSet::new());
        assert_eq!(grade(&sheet, &exam).unwrap().correct, 0);
    }

    #[test]
    fn exam_and_sheet_roundtrip() {
        let exam = four_question_exam();
        let mut bytes = Vec::new();
        save_exam(&exam, &mut bytes).unwrap();
        assert_eq!(load_exam(bytes.as_slice()).unwrap(), exam);

        let mut sheet = AnswerSheet::new("模型-1");
        sheet.answers.insert("q1".into(), labels("DC"));
        sheet.answers.insert("q2".into(), LabelSet::new());
        let mut bytes = Vec::new();
        save_sheet(&sheet, &mut bytes).unwrap();
        assert_eq!(load_sheet(bytes.as_slice(), &exam).unwrap(), sheet);
    }

    #[test]
    fn duplicate_question_ids_rejected() {
        let q = r#"{"id":"q1","stem":"s","options":{"A":"a"},"gold":["A"]}"#;
        let two = format!("{q}\n{q}\n");
        assert!(load_exam(two.as_bytes()).is_err());
    }
}
