"""AIP: agent identities and invocation-bound capability tokens.

Compact mode is an EdDSA JWT for single-hop grants; chained mode is an
append-only signed block chain supporting offline attenuation, completion
records, and attestations. Transport bindings map verification outcomes to
nine structured error codes.
"""

from .bindings import (
    BindingConfig,
    Mode,
    VerifiedContext,
    detect_mode,
    embed_agent_card,
    error_response,
    extract_task_token,
    extract_token,
    verify_request,
)
from .chained import (
    AttestationPayload,
    AuthorityPayload,
    ChainedToken,
    CompletionPayload,
    DelegationPayload,
    RequestFacts,
    append_attestation,
    append_completion,
    attenuate,
    deserialize,
    mint_authority,
    seal_token,
    serialize,
    upgrade_compact_to_chained,
    verify_chain,
)
from .compact import CompactClaims, VerifiedCompact, create_compact, verify_compact
from .crypto import KeyPair, canonicalize, keygen, sign, verify
from .errors import AipError, ErrorCode, VerificationError
from .identity import (
    AipId,
    IdentityDocument,
    Resolver,
    ResolverConfig,
    format_aip_id,
    parse_aip_id,
    sign_document,
    verify_document,
    well_known_url,
)
from .policy import (
    CheckExpr,
    Profile,
    compile_simple_policy,
    evaluate_checks,
    parse_check,
    profile_of,
)

__version__ = "0.1.0"
