"""Account and session handling for the query service.

Passwords are salted scrypt digests; plaintext never touches the store.
Sessions are opaque random 128-bit tokens with a 24-hour expiry.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from datetime import datetime, timedelta
from typing import Optional

from .clock import Clock, parse_iso_ts
from .db import Store

SESSION_TTL_S = 24 * 3600

_SCRYPT_N = 2**14
_SCRYPT_R = 8
_SCRYPT_P = 1


class AuthError(Exception):
    """Bad credentials or an invalid token."""


class SessionExpiredError(AuthError):
    pass


def hash_password(password: str, salt: Optional[bytes] = None) -> tuple[str, str]:
    if salt is None:
        salt = secrets.token_bytes(16)
    digest = hashlib.scrypt(
        password.encode(), salt=salt, n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P
    )
    return salt.hex(), digest.hex()


def verify_password(password: str, salt_hex: str, digest_hex: str) -> bool:
    digest = hashlib.scrypt(
        password.encode(), salt=bytes.fromhex(salt_hex), n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P
    )
    return hmac.compare_digest(digest.hex(), digest_hex)


# verifying against this burns the same work as a real check, so login timing
# does not reveal whether the username exists
_DUMMY_SALT, _DUMMY_DIGEST = hash_password("*")


class SessionManager:
    def __init__(self, store: Store, clock: Clock, ttl_s: float = SESSION_TTL_S):
        self.store = store
        self.clock = clock
        self.ttl_s = ttl_s

    def signup(self, username: str, password: str) -> str:
        if not username or not password:
            raise AuthError("username and password are required")
        if self.store.get_user(username) is not None:
            raise AuthError(f"username {username!r} is taken")
        salt_hex, digest_hex = hash_password(password)
        self.store.create_user(username, salt_hex, digest_hex, self.clock.now())
        return username

    def login(self, username: str, password: str) -> tuple[str, datetime]:
        row = self.store.get_user(username)
        if row is None:
            verify_password(password, _DUMMY_SALT, _DUMMY_DIGEST)
            raise AuthError("bad credentials")
        if not verify_password(password, row["password_salt"], row["password_digest"]):
            raise AuthError("bad credentials")
        token = secrets.token_hex(16)
        now = self.clock.now()
        expires = now + timedelta(seconds=self.ttl_s)
        self.store.create_session(token, username, now, expires)
        return token, expires

    def require(self, token: Optional[str]) -> str:
        """Resolve a session token to its principal or raise."""
        if not token:
            raise AuthError("missing session token")
        row = self.store.get_session(token)
        if row is None:
            raise AuthError("unknown session token")
        if self.clock.now() >= parse_iso_ts(row["expires_at"]):
            raise SessionExpiredError("session expired")
        return row["username"]
