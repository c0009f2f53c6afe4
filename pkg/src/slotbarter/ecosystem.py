"""User-site membership model and synthetic placement generators.

An ecosystem is a bipartite structure between sites and users plus per-site
monitoring capacities.  Sites operate under one of two privacy levels:

* ``psi``   - a site knows the membership of its user intersection with
              every peer.
* ``psica`` - a site knows only the cardinality of each intersection.

Privacy is enforced by accessor discipline, not data erasure: strategy code
must go through :meth:`Ecosystem.shared_users` (which refuses set access
under ``psica``), while attacker code uses
:meth:`Ecosystem.attacker_shared_users`, which always sees full sets.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

PSI = "psi"
PSICA = "psica"

PRIVACY_LEVELS = (PSI, PSICA)


class PrivacyViolation(RuntimeError):
    """Strategy code tried to read an intersection set under psica."""


def _pair_key(s, s2):
    return (s, s2) if repr(s) <= repr(s2) else (s2, s)


@dataclass(frozen=True)
class PlacementParams:
    """Parameters for synthetic user placement.

    ``popularity`` skews membership toward (1.0) or away from (0.0) the
    target site, which always carries popularity rank 1.  Remaining sites
    receive ranks 2..n in ascending id order, reproducing a linear
    popularity gradient.  ``capacity_coefficients`` maps each site to the
    multiplier applied to its realized user count; a single float applies
    to every site.
    """

    popularity: float
    capacity_coefficients: dict | float = 1.0
    site_ids: dict | None = None

    def coefficient(self, site) -> float:
        if isinstance(self.capacity_coefficients, dict):
            return self.capacity_coefficients[site]
        return float(self.capacity_coefficients)


class Ecosystem:
    """Immutable site/user membership structure with capacities.

    ``members`` maps each site id to the set of user ids with an account
    there.  The inverse index (user -> sites) is derived at construction,
    so membership consistency holds by construction.  Password reuse
    defaults to 1.0 for every (user, site, site) triple; per-pair rates
    and per-(user, pair) indicators may override it.
    """

    def __init__(
        self,
        privacy: str,
        members: dict,
        capacities: dict,
        n_users: int | None = None,
        pair_reuse: dict | None = None,
        user_reuse: dict | None = None,
    ):
        if privacy not in PRIVACY_LEVELS:
            raise ValueError(f"unknown privacy level {privacy!r}")
        if len(members) < 3:
            raise ValueError("an ecosystem needs at least 3 sites")
        if set(capacities) != set(members):
            raise ValueError("capacities must cover exactly the member sites")
        for s, cap in capacities.items():
            if cap < 0:
                raise ValueError(f"negative capacity for site {s!r}")
        self.privacy = privacy
        self.members = {s: frozenset(us) for s, us in members.items()}
        self.capacities = dict(capacities)
        self.sites = sorted(self.members)
        self.user_sites: dict = {}
        for s, us in self.members.items():
            for u in us:
                self.user_sites.setdefault(u, set()).add(s)
        self.user_sites = {u: frozenset(ss) for u, ss in self.user_sites.items()}
        self.n_users = len(self.user_sites) if n_users is None else n_users
        if self.n_users < len(self.user_sites):
            raise ValueError("declared user count below realized membership")
        self.pair_reuse = {}
        for (s, s2), rate in (pair_reuse or {}).items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"reuse rate out of [0,1] for pair ({s},{s2})")
            self.pair_reuse[_pair_key(s, s2)] = float(rate)
        self.user_reuse = {}
        for (u, s, s2), rate in (user_reuse or {}).items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError("per-user reuse out of [0,1]")
            self.user_reuse[(u,) + _pair_key(s, s2)] = float(rate)
        self._shared_cache: dict = {}

    def with_privacy(self, privacy: str) -> "Ecosystem":
        """Same memberships and capacities under another privacy level."""
        if privacy == self.privacy:
            return self
        return Ecosystem(
            privacy,
            {s: set(us) for s, us in self.members.items()},
            dict(self.capacities),
            n_users=self.n_users,
            pair_reuse=dict(self.pair_reuse),
            user_reuse=dict(self.user_reuse),
        )

    def with_capacities(self, capacities: dict) -> "Ecosystem":
        """Same memberships under different per-site capacities."""
        return Ecosystem(
            self.privacy,
            {s: set(us) for s, us in self.members.items()},
            dict(capacities),
            n_users=self.n_users,
            pair_reuse=dict(self.pair_reuse),
            user_reuse=dict(self.user_reuse),
        )

    # -- basic accessors ---------------------------------------------------

    def peers(self, s) -> list:
        self._check_site(s)
        return [x for x in self.sites if x != s]

    def site_users(self, s) -> frozenset:
        self._check_site(s)
        return self.members[s]

    def site_size(self, s) -> int:
        self._check_site(s)
        return len(self.members[s])

    def cap(self, s) -> int:
        self._check_site(s)
        return self.capacities[s]

    def _check_site(self, s):
        if s not in self.members:
            raise KeyError(f"unknown site {s!r}")

    def _shared(self, s, s2) -> frozenset:
        key = _pair_key(s, s2)
        got = self._shared_cache.get(key)
        if got is None:
            got = self.members[s] & self.members[s2]
            self._shared_cache[key] = got
        return got

    def shared_count(self, s, s2) -> int:
        """Intersection cardinality; readable at both privacy levels."""
        self._check_site(s)
        self._check_site(s2)
        return len(self._shared(s, s2))

    def shared_users(self, s, s2) -> frozenset:
        """Intersection membership for site-strategy code (psi only)."""
        self._check_site(s)
        self._check_site(s2)
        if self.privacy == PSICA:
            raise PrivacyViolation(
                "intersection sets are not readable by strategy code under psica"
            )
        return self._shared(s, s2)

    def attacker_shared_users(self, s, s2) -> frozenset:
        """Full-knowledge intersection access for attacker code."""
        self._check_site(s)
        self._check_site(s2)
        return self._shared(s, s2)

    # -- password reuse ----------------------------------------------------

    def reuse(self, u, s, s2) -> float:
        """Reuse weight of user ``u`` between sites ``s`` and ``s2``.

        Per-user overrides win over per-pair rates; the default is 1.0.
        """
        key = (u,) + _pair_key(s, s2)
        if key in self.user_reuse:
            return self.user_reuse[key]
        return self.pair_reuse.get(_pair_key(s, s2), 1.0)

    # -- serialization -----------------------------------------------------

    def dump(self) -> str:
        """Line-oriented text form; see :func:`load` for the grammar."""
        lines = [f"sites {len(self.sites)} users {self.n_users} privacy {self.privacy}"]
        for s in self.sites:
            ids = ",".join(str(u) for u in sorted(self.members[s], key=str))
            lines.append(f"site {s} cap {self.capacities[s]} users {ids}")
        for (a, b), rate in sorted(self.pair_reuse.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
            lines.append(f"reuse {a} {b} {rate}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "Ecosystem":
        """Parse the text format written by :meth:`dump`.

        Grammar: a header ``sites <n> users <l> privacy <psi|psica>``, one
        ``site <id> cap <c> users <comma-separated ids>`` line per site,
        then optional ``reuse <s> <s'> <rate>`` lines.  Numeric tokens are
        parsed as ints, everything else stays a string.
        """
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty ecosystem file")
        head = lines[0].split()
        if len(head) != 6 or head[0] != "sites" or head[2] != "users" or head[4] != "privacy":
            raise ValueError(f"bad header: {lines[0]!r}")
        n_sites, n_users, privacy = int(head[1]), int(head[3]), head[5]
        members: dict = {}
        capacities: dict = {}
        pair_reuse: dict = {}
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "site":
                if len(parts) not in (5, 6) or parts[2] != "cap" or parts[4] != "users":
                    raise ValueError(f"bad site line: {ln!r}")
                site = _token(parts[1])
                cap = int(parts[3])
                ids = parts[5] if len(parts) == 6 else ""
                members[site] = frozenset(_token(t) for t in ids.split(",") if t)
                capacities[site] = cap
            elif parts[0] == "reuse":
                if len(parts) != 4:
                    raise ValueError(f"bad reuse line: {ln!r}")
                pair_reuse[(_token(parts[1]), _token(parts[2]))] = float(parts[3])
            else:
                raise ValueError(f"unrecognized line: {ln!r}")
        if len(members) != n_sites:
            raise ValueError("site count does not match header")
        return cls(privacy, members, capacities, n_users=n_users, pair_reuse=pair_reuse)


def _token(t: str):
    return int(t) if t.isdigit() else t


def membership_probability(site_id: int, n: int, popularity: float) -> float:
    """Chance that a user holds an account at the site with the given rank."""
    return (1.0 - popularity) * site_id / n + popularity * (1.0 - (site_id - 1) / n)


def generate_placement(params: PlacementParams, n: int, n_users: int, seed) -> Ecosystem:
    """Draw a synthetic ecosystem of ``n`` sites and ``n_users`` users.

    Site 1 is the target and carries popularity rank 1; remaining sites
    carry ranks 2..n in id order unless ``params.site_ids`` overrides the
    assignment.  Each user's membership at each site is an independent
    Bernoulli draw, and capacities are ``floor(capC(s) * |U_s|)``.
    Deterministic for a fixed seed.
    """
    if n < 3:
        raise ValueError("placement requires at least 3 sites")
    if n_users < 1:
        raise ValueError("placement requires at least 1 user")
    if not 0.0 <= params.popularity <= 1.0:
        raise ValueError("popularity must lie in [0,1]")
    sites = list(range(1, n + 1))
    ids = params.site_ids or {s: s for s in sites}
    if ids.get(1) != 1:
        raise ValueError("the target site must carry popularity rank 1")
    probs = {s: membership_probability(ids[s], n, params.popularity) for s in sites}
    rng = random.Random(seed)
    members: dict = {s: set() for s in sites}
    for u in range(n_users):
        for s in sites:
            if rng.random() < probs[s]:
                members[s].add(u)
    capacities = {}
    for s in sites:
        coeff = params.coefficient(s)
        if coeff < 0:
            raise ValueError("capacity coefficients must be non-negative")
        capacities[s] = math.floor(coeff * len(members[s]))
    return Ecosystem("psi", members, capacities, n_users=n_users)


def vulnerable_users(eco: Ecosystem, s) -> frozenset:
    """Users of ``s`` stuffable via a shared account at some other site.

    A user qualifies when it holds an account at a peer with nonzero reuse
    toward ``s``.  With the default reuse of 1.0 this is every user of
    ``s`` holding at least one other account.
    """
    eco._check_site(s)
    out = set()
    for u in eco.members[s]:
        for s2 in eco.user_sites[u]:
            if s2 != s and eco.reuse(u, s, s2) > 0.0:
                out.add(u)
                break
    return frozenset(out)
