"""Breach-dump ingestion: parsing, filtering, graph pruning, reuse rates.

Input is line-delimited ``site<TAB>email<TAB>password``.  Emails are
salted-hashed immediately so no raw address survives into any artifact;
the salt comes from the caller (the CLI reads it from an environment
variable and never persists it).  Exact duplicate lines and entries whose
password looks like a hash digest are dropped, then only the largest
connected component of the user-site graph is retained, since sites that
share no users face no stuffing risk.
"""

from __future__ import annotations

import hashlib
import random
import re
import statistics
from dataclasses import dataclass
from fractions import Fraction

from .ecosystem import PSI, Ecosystem, vulnerable_users

HEX_DIGEST_LENGTHS = frozenset({32, 40, 64, 128})
_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")
_CRYPT_PREFIX_RE = re.compile(r"^\$[A-Za-z0-9./-]{1,12}\$")

QUARTILE_LABELS = ("S", "M", "L", "XL")


@dataclass(frozen=True)
class CredentialEntry:
    site: str
    user: str
    password: str


@dataclass
class IngestSummary:
    lines: int = 0
    malformed: int = 0
    duplicates: int = 0
    hashed_dropped: int = 0
    conflicting_dropped: int = 0
    entries_kept: int = 0
    sites_total: int = 0
    users_total: int = 0
    sites_kept: int = 0
    users_kept: int = 0


class ReuseTable:
    """Per unordered site pair: shared users, same-password users, rate."""

    def __init__(self):
        self.shared: dict = {}
        self.same: dict = {}

    @staticmethod
    def _key(s, s2):
        return (s, s2) if s <= s2 else (s2, s)

    def record(self, s, s2, same_password: bool):
        key = self._key(s, s2)
        self.shared[key] = self.shared.get(key, 0) + 1
        if same_password:
            self.same[key] = self.same.get(key, 0) + 1

    def pairs(self) -> list:
        return sorted(self.shared)

    def rate(self, s, s2) -> Fraction:
        key = self._key(s, s2)
        shared = self.shared.get(key, 0)
        if shared == 0:
            raise ValueError(f"no shared users between {s!r} and {s2!r}")
        return Fraction(self.same.get(key, 0), shared)


def reuse_rate(table: ReuseTable, s, s2) -> Fraction:
    """Exact ratio of same-password shared users to shared users."""
    return table.rate(s, s2)


def looks_hashed(password: str, hex_lengths=HEX_DIGEST_LENGTHS) -> bool:
    """Heuristic for stored-hash rather than plaintext passwords.

    Flags full hex strings at common digest lengths and modular-crypt
    style ``$id$...`` prefixes.  Documented and overridable; the original
    corpus rule is unknown.
    """
    if len(password) in hex_lengths and _HEX_RE.match(password):
        return True
    return bool(_CRYPT_PREFIX_RE.match(password))


def anonymize(email: str, salt: str) -> str:
    return hashlib.sha256((salt + email).encode("utf-8")).hexdigest()[:24]


def ingest(lines, salt: str, hex_lengths=HEX_DIGEST_LENGTHS):
    """Parse a credential dump into an Ecosystem plus reuse statistics.

    Returns ``(ecosystem, reuse_table, summary)``.  Malformed lines are
    counted and skipped.  A user holding several distinct passwords at
    one site keeps the first; later conflicting entries are counted as
    dropped.  The returned ecosystem carries privacy level psi (the full
    sets are known offline) and capacities equal to the user counts
    (capacity coefficient 1); reuse rates are attached per pair.
    """
    summary = IngestSummary()
    passwords: dict = {}
    seen: set = set()
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        summary.lines += 1
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            summary.malformed += 1
            continue
        site, email, password = parts
        key = (site, email, password)
        if key in seen:
            summary.duplicates += 1
            continue
        seen.add(key)
        if looks_hashed(password, hex_lengths):
            summary.hashed_dropped += 1
            continue
        user = anonymize(email, salt)
        if (site, user) in passwords:
            summary.conflicting_dropped += 1
            continue
        passwords[(site, user)] = password
    members: dict = {}
    user_sites: dict = {}
    for site, user in passwords:
        members.setdefault(site, set()).add(user)
        user_sites.setdefault(user, set()).add(site)
    summary.sites_total = len(members)
    summary.users_total = len(user_sites)
    kept_sites = _largest_component(members, user_sites)
    members = {s: us for s, us in members.items() if s in kept_sites}
    kept_users = set()
    for us in members.values():
        kept_users.update(us)
    summary.sites_kept = len(members)
    summary.users_kept = len(kept_users)
    summary.entries_kept = sum(len(us) for us in members.values())

    table = ReuseTable()
    for u in kept_users:
        sites = sorted(s for s in user_sites[u] if s in kept_sites)
        for i, s in enumerate(sites):
            for s2 in sites[i + 1 :]:
                table.record(s, s2, passwords[(s, u)] == passwords[(s2, u)])

    capacities = {s: len(us) for s, us in members.items()}
    pair_reuse = {pair: float(table.rate(*pair)) for pair in table.pairs()}
    eco = Ecosystem(PSI, members, capacities, pair_reuse=pair_reuse)
    return eco, table, summary


def _largest_component(members: dict, user_sites: dict) -> set:
    """Sites of the largest connected component of the user-site graph.

    Components are compared by total node count, then site count, then
    smallest site id for determinism.
    """
    unvisited = set(members)
    best = (0, 0, "", set())
    while unvisited:
        root = min(unvisited)
        comp_sites = set()
        stack = [root]
        comp_users = set()
        while stack:
            s = stack.pop()
            if s in comp_sites:
                continue
            comp_sites.add(s)
            for u in members[s]:
                if u in comp_users:
                    continue
                comp_users.add(u)
                for s2 in user_sites[u]:
                    if s2 not in comp_sites:
                        stack.append(s2)
        unvisited -= comp_sites
        score = (len(comp_sites) + len(comp_users), len(comp_sites), min(comp_sites))
        if (score[0], score[1]) > (best[0], best[1]) or (
            (score[0], score[1]) == (best[0], best[1]) and score[2] < best[2]
        ):
            best = (score[0], score[1], score[2], comp_sites)
    return best[3]


def quartile_boundaries(eco: Ecosystem) -> tuple:
    """25/50/75th percentiles of site sizes (inclusive interpolation)."""
    sizes = sorted(eco.site_size(s) for s in eco.sites)
    if len(sizes) < 4:
        raise ValueError("quartiles need at least 4 sites")
    q1, q2, q3 = statistics.quantiles(sizes, n=4, method="inclusive")
    return q1, q2, q3


def quartile_assignments(eco: Ecosystem) -> dict:
    """Label each site S, M, L or XL by its user-count quartile."""
    q1, q2, q3 = quartile_boundaries(eco)
    out = {}
    for s in eco.sites:
        size = eco.site_size(s)
        if size <= q1:
            out[s] = "S"
        elif size <= q2:
            out[s] = "M"
        elif size <= q3:
            out[s] = "L"
        else:
            out[s] = "XL"
    return out


def quartile_sample(eco: Ecosystem, quartile: str, count: int, seed) -> list:
    """Uniform site sample without replacement from one size quartile."""
    if quartile not in QUARTILE_LABELS:
        raise ValueError(f"quartile must be one of {QUARTILE_LABELS}")
    assignments = quartile_assignments(eco)
    bucket = sorted((s for s, q in assignments.items() if q == quartile), key=str)
    if count > len(bucket):
        raise ValueError(f"requested {count} sites from a quartile of {len(bucket)}")
    rng = random.Random(seed)
    return sorted(rng.sample(bucket, count), key=str)


def site_statistics(eco: Ecosystem) -> list:
    """Per-site totals, shared-user counts, and capturable-user counts.

    These columns reproduce the scatter inputs of the dataset appendix
    (total vs shared and total vs capturable users).
    """
    rows = []
    for s in eco.sites:
        shared = set()
        for s2 in eco.peers(s):
            shared.update(eco.attacker_shared_users(s, s2))
        rows.append(
            {
                "site": s,
                "total_users": eco.site_size(s),
                "shared_users": len(shared),
                "capturable_users": len(vulnerable_users(eco, s)),
            }
        )
    return rows
