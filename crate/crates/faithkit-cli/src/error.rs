//! CLI error split: usage problems exit 1, data/contract problems exit 2.

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

macro_rules! data_error_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })+
    };
}

data_error_from!(
    faithkit::corpus::CorpusError,
    faithkit::experiment::ExperimentError,
    faithkit::fakeref::FakeRefError,
    faithkit::genprob::GenProbError,
    faithkit::metaeval::MetaEvalError,
    faithkit::models::ModelError,
    faithkit::negatives::NegativesError,
    faithkit::similarity::SimilarityError,
    faithkit::training::TrainingError,
    std::io::Error,
);
