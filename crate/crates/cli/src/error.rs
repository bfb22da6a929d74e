use sad_sim_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Data(e) | CliError::Runtime(e) => e,
        }
    }

    pub fn context(self, ctx: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        match self {
            CliError::Usage(e) => CliError::Usage(e.context(ctx)),
            CliError::Data(e) => CliError::Data(e.context(ctx)),
            CliError::Runtime(e) => CliError::Runtime(e.context(ctx)),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.inner())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_)
            | CoreError::InvalidParam { .. }
            | CoreError::Schema { .. }
            | CoreError::Invariant(_)
            | CoreError::Unsupported(_)
            | CoreError::Xml(_)
            | CoreError::Empty(_)
            | CoreError::Config(_)
            | CoreError::Json(_) => CliError::Data(e.into()),
            CoreError::GenerationExhausted { .. }
            | CoreError::Contract(_)
            | CoreError::NonFiniteLoss(_)
            | CoreError::Io(_) => CliError::Runtime(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
