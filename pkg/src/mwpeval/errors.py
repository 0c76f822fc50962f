"""Error types shared across the package.

The CLI maps these onto exit codes: UsageError family to 1, DataError
to 2, VerificationError to 3. BackendError is special: inside a run it
is recorded on the affected cell instead of aborting the run.
"""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(HarnessError):
    """Bad invocation: unknown flags, missing arguments, bad config values."""


class ConfigurationError(UsageError):
    """A config value cannot be used, e.g. a named credential env var is unset."""


class DataError(HarnessError):
    """Input data violates the documented schema or an internal consistency check."""


class VerificationError(HarnessError):
    """A verification command found results that do not check out."""


class BackendError(HarnessError):
    """A model backend failed to produce a completion after all retries."""


class ScriptedLookupError(BackendError):
    """A scripted backend has no response mapped for the requested prompt."""
