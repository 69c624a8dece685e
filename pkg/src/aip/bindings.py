"""Transport bindings: token extraction, mode detection, the verification
pipeline, structured error responses, and A2A agent-card helpers.

Headers: ``X-AIP-Token`` (inline token), ``Authorization: AIP <token>``,
``X-AIP-Token-Ref`` (token by reference), optional ``X-AIP-Challenge``
(presenter possession proof for sealed chained tokens). Error bodies are
``{"error": "<CODE>", "detail": "..."}`` with HTTP status 401 or 403.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional, Tuple

from . import chained, compact, crypto
from .errors import (
    ErrorCode,
    ScopeInsufficient,
    TokenMalformed,
    TokenMissing,
    VerificationError,
)
from .identity import Resolver

DEFAULT_TOKEN_HEADER = "X-AIP-Token"
DEFAULT_TOKEN_REF_HEADER = "X-AIP-Token-Ref"
CHALLENGE_HEADER = "X-AIP-Challenge"
AUTH_SCHEME = "AIP"
MAX_INLINE_TOKEN_BYTES = 4096


class Mode(Enum):
    COMPACT = "compact"
    CHAINED = "chained"


@dataclass(frozen=True)
class BindingConfig:
    header_name: str = DEFAULT_TOKEN_HEADER
    allow_authorization_scheme: bool = True
    token_ref_header: str = DEFAULT_TOKEN_REF_HEADER
    max_inline_token_bytes: int = MAX_INLINE_TOKEN_BYTES
    require_aip: bool = True


@dataclass(frozen=True)
class Extracted:
    """Result of header extraction: an inline token or an opaque reference."""

    kind: str  # "inline" | "ref"
    value: str

    @property
    def is_ref(self) -> bool:
        return self.kind == "ref"


@dataclass(frozen=True)
class VerifiedContext:
    """Identity context injected into a request after acceptance."""

    presented_id: str
    mode: Mode
    effective_scope: tuple
    delegation_chain: tuple  # of (delegator, delegatee, context)
    completion: Optional[chained.CompletionSummary] = None
    root_id: Optional[str] = None


def detect_mode(token_text: str) -> Mode:
    """Chained iff the wire magic prefix; compact iff the first segment
    decodes to the fixed aip+jwt header."""
    if not isinstance(token_text, str) or not token_text:
        raise TokenMalformed("empty token")
    if token_text.startswith(chained.WIRE_MAGIC):
        return Mode.CHAINED
    head = token_text.split(".", 1)[0]
    try:
        header = json.loads(crypto.b64url_decode(head).decode("utf-8"))
    except Exception as exc:
        raise TokenMalformed(f"token is neither chained nor compact: {exc}") from exc
    if isinstance(header, dict) and header.get("typ") == "aip+jwt":
        return Mode.COMPACT
    raise TokenMalformed("first segment is not an aip+jwt header")


def _lookup_header(headers: Mapping[str, str], name: str) -> Optional[str]:
    """Case-insensitive lookup; values are stripped of surrounding whitespace."""
    lowered = name.lower()
    for key, value in headers.items():
        if isinstance(key, str) and key.lower() == lowered and value is not None:
            return str(value).strip()
    return None


def extract_token(
    headers: Mapping[str, str],
    cfg: BindingConfig = BindingConfig(),
) -> Optional[Extracted]:
    """Pull the token (or its reference) out of a header map.

    Precedence: inline header, then Authorization with the AIP scheme, then
    the reference header. Returns None when nothing is present and the
    binding does not require AIP; raises TokenMissing when it does.
    """
    inline = _lookup_header(headers, cfg.header_name)
    if inline:
        if len(inline.encode("utf-8")) > cfg.max_inline_token_bytes:
            raise TokenMalformed(
                f"inline token exceeds {cfg.max_inline_token_bytes} bytes; "
                f"use {cfg.token_ref_header} (token by reference)"
            )
        return Extracted("inline", inline)

    if cfg.allow_authorization_scheme:
        auth = _lookup_header(headers, "Authorization")
        if auth:
            scheme, _, rest = auth.partition(" ")
            if scheme.upper() == AUTH_SCHEME:
                rest = rest.strip()
                if not rest:
                    raise TokenMalformed("Authorization: AIP carries no token")
                if len(rest.encode("utf-8")) > cfg.max_inline_token_bytes:
                    raise TokenMalformed(
                        f"inline token exceeds {cfg.max_inline_token_bytes} bytes; "
                        f"use {cfg.token_ref_header} (token by reference)"
                    )
                return Extracted("inline", rest)

    ref = _lookup_header(headers, cfg.token_ref_header)
    if ref:
        return Extracted("ref", ref)

    if cfg.require_aip:
        raise TokenMissing("no AIP token in request headers")
    return None


def verify_request(
    headers: Mapping[str, str],
    requested_tool: str,
    cfg: BindingConfig,
    resolver: Resolver,
    now: int,
    dereference: Optional[Callable[[str], str]] = None,
) -> Optional[VerifiedContext]:
    """Extract, detect, and verify; returns the identity context on success.

    Raises a VerificationError carrying one of the nine codes otherwise.
    Returns None only when the binding allows anonymous calls and no token
    was presented.
    """
    extracted = extract_token(headers, cfg)
    if extracted is None:
        return None
    if extracted.is_ref:
        if dereference is None:
            raise TokenMalformed("token reference presented but no dereferencer configured")
        try:
            token_text = str(dereference(extracted.value))
        except Exception as exc:
            raise TokenMalformed(f"token reference did not dereference: {exc}") from exc
    else:
        token_text = extracted.value

    mode = detect_mode(token_text)
    if mode is Mode.COMPACT:
        verified = compact.verify_compact(token_text, resolver, now)
        if not chained.scope_covers(verified.claims.scope, requested_tool):
            raise ScopeInsufficient(
                f"{requested_tool!r} not in granted scope {list(verified.claims.scope)}"
            )
        return VerifiedContext(
            presented_id=verified.claims.sub,
            mode=Mode.COMPACT,
            effective_scope=tuple(verified.claims.scope),
            delegation_chain=(),
            completion=None,
            root_id=verified.claims.iss,
        )

    token = chained.deserialize(token_text)
    challenge = _lookup_header(headers, CHALLENGE_HEADER)
    facts = chained.RequestFacts(
        tool=requested_tool,
        time=now,
        presenter_challenge=challenge.encode("utf-8") if challenge else None,
    )
    result = chained.verify_chain(
        token, resolver, facts, now, requested_scope=requested_tool
    )
    presented = (
        result.delegation_chain[-1][1] if result.delegation_chain else result.root_id
    )
    return VerifiedContext(
        presented_id=presented,
        mode=Mode.CHAINED,
        effective_scope=result.effective_scope,
        delegation_chain=result.delegation_chain,
        completion=result.completion,
        root_id=result.root_id,
    )


def error_response(err: VerificationError) -> Tuple[int, dict]:
    """(HTTP status, JSON body) for a verification failure."""
    return err.status, {"error": err.code.value, "detail": err.detail}


# ---------------------------------------------------------------------------
# A2A binding
# ---------------------------------------------------------------------------

AGENT_CARD_FIELD = "aip_identity"
TASK_TOKEN_FIELD = "aip_token"


def embed_agent_card(card: dict, aid) -> dict:
    """Copy of the agent card with the identity field set; other fields kept."""
    if not isinstance(card, dict):
        raise TokenMalformed("agent card must be a JSON object")
    out = dict(card)
    out[AGENT_CARD_FIELD] = str(aid)
    return out


def read_agent_card(card: dict) -> str:
    if not isinstance(card, dict) or AGENT_CARD_FIELD not in card:
        raise TokenMissing(f"agent card has no {AGENT_CARD_FIELD} field")
    return str(card[AGENT_CARD_FIELD])


def extract_task_token(task_metadata: dict) -> str:
    """Token text from A2A task metadata."""
    if not isinstance(task_metadata, dict):
        raise TokenMalformed("task metadata must be a JSON object")
    token = task_metadata.get(TASK_TOKEN_FIELD)
    if not token:
        raise TokenMissing(f"task metadata has no {TASK_TOKEN_FIELD} field")
    return str(token)
