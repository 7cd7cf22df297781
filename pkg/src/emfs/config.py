"""Provider profiles from flat ``key = value`` config files or the environment.

Example file::

    preset = gmail
    username = me@gmail.com
    credential_ref = EMFS_PASSWORD

The password itself is only ever read from the environment variable named
by ``credential_ref``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .errors import BadConfig, MissingCredential
from .transport import MiB, Endpoint, ProviderProfile

PRESETS = {
    "gmail": {
        "smtp_host": "smtp.gmail.com", "smtp_port": "587",
        "imap_host": "imap.gmail.com", "imap_port": "993",
        "size_limit": str(25 * MiB),
    },
    "outlook": {
        "smtp_host": "smtp.office365.com", "smtp_port": "587",
        "imap_host": "outlook.office365.com", "imap_port": "993",
        "size_limit": str(20 * MiB),
    },
}

KEYS = ("preset", "smtp_host", "smtp_port", "imap_host", "imap_port",
        "username", "credential_ref", "size_limit", "root_folder", "use_tls",
        "delivery_timeout")
SECRET_KEYS = ("password", "passwd", "secret", "token")
ENV_PREFIX = "EMFS_"
DEFAULT_CREDENTIAL_REF = "EMFS_PASSWORD"


@dataclass
class CliConfig:
    profile: ProviderProfile
    verbosity: int = logging.WARNING
    source: str = "environment"
    delivery_timeout: float = 60.0


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BadConfig("line %d: expected key = value" % lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key in SECRET_KEYS:
            raise BadConfig("line %d: secrets do not belong in the config file; "
                            "set credential_ref to an environment variable" % lineno)
        if key not in KEYS:
            raise BadConfig("line %d: unknown key %r" % (lineno, key))
        values[key] = value
    return values


def _from_environ(environ: Mapping[str, str]) -> dict:
    return {k: environ[ENV_PREFIX + k.upper()] for k in KEYS
            if ENV_PREFIX + k.upper() in environ}


def _int(values, key, default=None):
    raw = values.get(key, default)
    if raw is None:
        raise BadConfig("missing required key %r" % key)
    try:
        return int(raw)
    except ValueError:
        raise BadConfig("%s must be an integer, got %r" % (key, raw)) from None


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise BadConfig("use_tls must be a boolean, got %r" % raw)


def build_profile(values: Mapping[str, str]) -> ProviderProfile:
    merged = {}
    preset = values.get("preset")
    if preset:
        try:
            merged.update(PRESETS[preset.lower()])
        except KeyError:
            raise BadConfig("unknown preset %r (known: %s)"
                            % (preset, ", ".join(sorted(PRESETS)))) from None
    merged.update({k: v for k, v in values.items() if k != "preset"})
    for key in ("smtp_host", "imap_host", "username"):
        if not merged.get(key):
            raise BadConfig("missing required key %r" % key)
    try:
        return ProviderProfile(
            smtp_endpoint=Endpoint(merged["smtp_host"], _int(merged, "smtp_port", 587)),
            imap_endpoint=Endpoint(merged["imap_host"], _int(merged, "imap_port", 143)),
            username=merged["username"],
            credential_ref=merged.get("credential_ref", DEFAULT_CREDENTIAL_REF),
            size_limit_s=_int(merged, "size_limit"),
            root_folder=merged.get("root_folder", "EMFS"),
            use_tls=_bool(merged.get("use_tls", "true")),
        )
    except ValueError as exc:
        raise BadConfig(str(exc)) from exc


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None,
                verbosity: int = logging.WARNING, require_credential: bool = True) -> CliConfig:
    """Load a profile from ``path``, ``$EMFS_CONFIG``, or ``EMFS_*`` variables.

    Raises :class:`MissingCredential` when the variable named by
    ``credential_ref`` is unset.
    """
    environ = os.environ if environ is None else environ
    path = path or environ.get(ENV_PREFIX + "CONFIG")
    if path:
        try:
            values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise BadConfig("cannot read config %s: %s" % (path, exc)) from exc
        source = str(path)
    else:
        values = _from_environ(environ)
        if not values:
            raise BadConfig("no configuration: pass --config or set EMFS_CONFIG")
        source = "environment"
    profile = build_profile(values)
    if require_credential and profile.credential_ref not in environ:
        raise MissingCredential("environment variable %s is not set" % profile.credential_ref)
    try:
        timeout = float(values.get("delivery_timeout", 60.0))
    except ValueError:
        raise BadConfig("delivery_timeout must be a number") from None
    return CliConfig(profile, verbosity, source, timeout)
