import functools
import hashlib
import logging
import re
from datetime import datetime

import pytz


class CountParseError(ValueError):
    pass


_UNITS = {
    '': 1,
    'k': 1_000,
    'm': 1_000_000,
    'g': 1_000_000_000,
}

# Reuse floating number regex to reduce verbosity
_F = r'(\d+(?:\.\d+)?(?:e\d+)?)'

_COUNT_PARSE = re.compile(
    fr'\s*{_F}\s*'
    r'(k(?:ilo)?'
    r'|m(?:ill?(?:ion)?)?'
    r'|g(?:iga)?)?'
    r'\s*$',
    re.IGNORECASE
)


def parse_count(text):
    """
    Parse a step count such as ``200000``, ``200k``, ``2e5`` or ``1.5M``.
    """
    if isinstance(text, int):
        return text

    m = _COUNT_PARSE.match(str(text))
    if not m:
        raise CountParseError(f'not a count: {text!r}')

    unit = (m.group(2) or '')[:1].lower()
    value = float(m.group(1)) * _UNITS[unit]
    if value != int(value):
        raise CountParseError(f'count must be whole: {text!r}')

    return int(value)


def spell_count(n):
    # e.g. spell_count(1_234_567) -> '1.23M'
    for unit, size in (('G', 1e9), ('M', 1e6), ('k', 1e3)):
        if abs(n) >= size:
            return f'{n / size:.3g}{unit}'
    return str(n)


def derive_seed(*parts):
    """
    Derive a 63-bit seed from any number of printable parts.

    Every stochastic choice in a run is keyed this way, so two choices
    never share a stream and the same parts always give the same seed.
    """
    digest = hashlib.sha256(
        '\x1f'.join(str(p) for p in parts).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') >> 1


def short_digest(text, size=10):
    return hashlib.sha1(text.encode('utf-8')).hexdigest()[:size]


def utc_now():
    # CAUTION: keep it aware, the manifest stamps it in ISO format.
    return datetime.now(tz=pytz.UTC)


def utc_stamp():
    return utc_now().strftime('%Y-%m-%dT%H:%M:%SZ')


def log_exc(f):
    """
    Log whatever escapes ``f`` with the call that failed, then re-raise.

    Training jobs may run on worker threads, where an exception would
    otherwise only surface once its future is collected.
    """
    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except Exception:
            logging.exception('Unhandled exception in %s', f.__qualname__)
            raise

    return wrapped
