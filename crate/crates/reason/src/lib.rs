//! Question generation over 3D scenes and symbolic or probabilistic
//! execution of the resulting programs.

pub mod audit;
pub mod executor;
pub mod facts;
pub mod oracle;
pub mod program;
pub mod templates;

pub use audit::{one_hot_reduction, ReductionReport};
pub use executor::{execute, AnswerDistribution, Attention, Execution, TraceStep, NO_REFERENT};
pub use facts::{FactObject, FactPart, SceneFacts};
pub use oracle::{check_no_redundancy, check_well_posed, oracle_execute, oracle_run, Domain, ExecError, OracleRun};
pub use program::{chain, without_op, Family, Op, Program, ProgramOp, Question, QuestionMetadata};
pub use templates::{all_templates, generate_for_scene, instantiate, question_metadata, templates_for, GeneratedQuestions, Template};
