"""Line-based ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Values are parsed as int,
then float, then ``true``/``false``, falling back to the raw string.
Dotted keys (``min_power_db.Acv``) are kept verbatim; callers split them.
"""

import os
from pathlib import Path

ENV_VAR = "FASTZIP_CONFIG"
DEFAULT_NAME = "fastzip.conf"


def _coerce(raw):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return raw


def parse_config(text):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = _coerce(value)
    return out


def load_config(path):
    return parse_config(Path(path).read_text())


def dump_config(values):
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def resolve_config_path(flag=None, cwd=None):
    """Pick the config file: explicit flag, then $FASTZIP_CONFIG, then ./fastzip.conf.

    Returns ``None`` when nothing applies.
    """
    if flag:
        return Path(flag)
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    local = Path(cwd or ".") / DEFAULT_NAME
    return local if local.exists() else None


def section(values, prefix):
    """Collect ``prefix.<name> = v`` entries into ``{name: v}``."""
    dot = prefix + "."
    return {k[len(dot):]: v for k, v in values.items() if k.startswith(dot)}
