use std::any::Any;
use std::fmt;

/// Message carried by faults raised by the fault injector.
pub const INJECTED_FAULT: &str = "injected fault";

/// Classification of a task failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// The task function itself failed (returned an error or panicked).
    TaskFault,
    /// Results were computed but none passed the validator.
    ValidationExhausted,
    /// Every replay attempt faulted.
    ReplayExhausted,
    /// Every replica faulted.
    AllReplicasFailed,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::TaskFault => "task_fault",
            ErrorKind::ValidationExhausted => "validation_exhausted",
            ErrorKind::ReplayExhausted => "replay_exhausted",
            ErrorKind::AllReplicasFailed => "all_replicas_failed",
        })
    }
}

/// Failure payload carried by a [`TaskHandle`](crate::TaskHandle).
///
/// Resiliency combinators wrap the last underlying fault as `cause`, so a
/// chain is at most a few links deep.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct ErrorPayload {
    pub kind: ErrorKind,
    pub message: String,
    #[source]
    pub cause: Option<Box<ErrorPayload>>,
}

impl ErrorPayload {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            cause: None,
        }
    }

    /// A plain task fault, the error user task functions return.
    pub fn fault(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::TaskFault, message)
    }

    /// The fault raised by the injector for a loud failure.
    pub fn injected() -> Self {
        Self::fault(INJECTED_FAULT)
    }

    pub fn with_cause(mut self, cause: ErrorPayload) -> Self {
        self.cause = Some(Box::new(cause));
        self
    }

    pub fn cause(&self) -> Option<&ErrorPayload> {
        self.cause.as_deref()
    }

    /// The innermost payload of the cause chain.
    pub fn root(&self) -> &ErrorPayload {
        let mut cur = self;
        while let Some(next) = cur.cause() {
            cur = next;
        }
        cur
    }

    /// True if the root of the chain is a fault raised by the injector.
    pub fn is_injected(&self) -> bool {
        let root = self.root();
        root.kind == ErrorKind::TaskFault && root.message == INJECTED_FAULT
    }

    pub(crate) fn from_panic(panic: Box<dyn Any + Send>) -> Self {
        let message = if let Some(s) = panic.downcast_ref::<&str>() {
            (*s).to_string()
        } else if let Some(s) = panic.downcast_ref::<String>() {
            s.clone()
        } else {
            "task panicked".to_string()
        };
        Self::fault(message)
    }
}

/// Outcome of a task: its value or a failure payload.
pub type TaskResult<V> = Result<V, ErrorPayload>;
