"""Error taxonomy for the AIP library.

Two layers live here:

* ``ErrorCode`` — the nine structured wire codes every verification failure
  maps to, each with a fixed HTTP status class (401 for authentication
  failures, 403 for authorization failures).
* Exception classes — raised by library operations. ``VerificationError``
  subclasses carry one of the nine codes; the remaining classes are
  construction-time errors (bad arguments, illegal attenuation) that never
  cross the wire.
"""

from __future__ import annotations

from enum import Enum


class ErrorCode(str, Enum):
    """The nine structured error codes surfaced by transport bindings."""

    TOKEN_MISSING = "TOKEN_MISSING"
    TOKEN_MALFORMED = "TOKEN_MALFORMED"
    TOKEN_EXPIRED = "TOKEN_EXPIRED"
    SIGNATURE_INVALID = "SIGNATURE_INVALID"
    IDENTITY_UNRESOLVABLE = "IDENTITY_UNRESOLVABLE"
    KEY_REVOKED = "KEY_REVOKED"
    SCOPE_INSUFFICIENT = "SCOPE_INSUFFICIENT"
    BUDGET_EXCEEDED = "BUDGET_EXCEEDED"
    DEPTH_EXCEEDED = "DEPTH_EXCEEDED"

    @property
    def status(self) -> int:
        """HTTP status class for this code: 401 (authn) or 403 (authz)."""
        return STATUS_BY_CODE[self]


# Total, fixed code -> status-class mapping.
STATUS_BY_CODE = {
    ErrorCode.TOKEN_MISSING: 401,
    ErrorCode.TOKEN_MALFORMED: 401,
    ErrorCode.TOKEN_EXPIRED: 401,
    ErrorCode.SIGNATURE_INVALID: 401,
    ErrorCode.IDENTITY_UNRESOLVABLE: 401,
    ErrorCode.KEY_REVOKED: 401,
    ErrorCode.SCOPE_INSUFFICIENT: 403,
    ErrorCode.BUDGET_EXCEEDED: 403,
    ErrorCode.DEPTH_EXCEEDED: 403,
}


class AipError(Exception):
    """Base class for every error raised by this package."""

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(detail or self.__class__.__name__)


# ---------------------------------------------------------------------------
# Verification failures: each maps to exactly one wire code.
# ---------------------------------------------------------------------------

class VerificationError(AipError):
    """A token was presented and rejected; ``code`` names the wire code."""

    code: ErrorCode

    @property
    def status(self) -> int:
        return self.code.status


class TokenMissing(VerificationError):
    code = ErrorCode.TOKEN_MISSING


class TokenMalformed(VerificationError):
    code = ErrorCode.TOKEN_MALFORMED


class TokenExpired(VerificationError):
    code = ErrorCode.TOKEN_EXPIRED


class SignatureInvalid(VerificationError):
    code = ErrorCode.SIGNATURE_INVALID


class IdentityUnresolvable(VerificationError):
    code = ErrorCode.IDENTITY_UNRESOLVABLE


class KeyRevoked(VerificationError):
    code = ErrorCode.KEY_REVOKED


class ScopeInsufficient(VerificationError):
    code = ErrorCode.SCOPE_INSUFFICIENT


class BudgetExceeded(VerificationError):
    code = ErrorCode.BUDGET_EXCEEDED


class DepthExceeded(VerificationError):
    code = ErrorCode.DEPTH_EXCEEDED


class KeyRevokedOrInvalid(KeyRevoked):
    """No key in the identity document is valid at the requested instant."""


# ---------------------------------------------------------------------------
# Crypto / encoding errors.
# ---------------------------------------------------------------------------

class InvalidSeedLength(AipError):
    """Ed25519 seed must be exactly 32 bytes."""


class NonCanonicalizable(AipError):
    """Value cannot be canonically serialized (non-finite number, bad type)."""


class MalformedEncoding(AipError):
    """base64url / base58 / multibase input is not a canonical encoding."""


# ---------------------------------------------------------------------------
# Identity errors.
# ---------------------------------------------------------------------------

class MalformedId(AipError):
    """Agent identifier text does not parse."""


class NotWebId(AipError):
    """Operation requires a web-form identifier."""


class SigningKeyNotListed(AipError):
    """The signing key's public half is not listed (or not valid) in the document."""


# ---------------------------------------------------------------------------
# Token construction errors (never produced by verification).
# ---------------------------------------------------------------------------

class InvalidClaims(AipError):
    """Compact claim set violates its invariants."""


class InvalidPayload(AipError):
    """Chained block payload violates its invariants."""


class InvalidParams(AipError):
    """Bad arguments to a policy compiler or helper."""


class ParseError(AipError):
    """Check string does not parse under any supported profile."""


class ScopeWidened(AipError):
    """Delegation attempted to grant scope beyond its parent."""


class BudgetIncreased(AipError):
    """Delegation attempted to raise the budget ceiling."""


class ExpiryExtended(AipError):
    """Delegation attempted to outlive its parent grant."""


class EmptyContext(AipError):
    """Delegation context is empty after trimming whitespace."""


class SealedToken(AipError):
    """Token proof is sealed; no further blocks may be appended."""


class ExecutorMismatch(AipError):
    """Completion signer is not the agent the chain delegated to."""


class NoSuchCompletion(AipError):
    """Attestation references a block that is not a completion block."""


class NotIssuer(AipError):
    """Upgrade requires the original compact issuer's key."""


class NotRepresentable(AipError):
    """USD amount does not convert to whole cents."""
