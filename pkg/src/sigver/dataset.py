"""Dataset organisation: directory loading, dev/eval splits, and pair lists.

The verification protocol enrols the first-session genuine signatures of
each user and probes them with later-session genuine signatures and with
skilled forgeries. Development and evaluation user sets are disjoint and
formed deterministically by sorted user id, so a split needs no seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .svc import SignatureKind, SignatureRecord, parse_svc


class ProtocolError(ValueError):
    """Dataset cannot satisfy the configured protocol."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Per-user signature counts the protocol requires."""

    enrollment_per_user: int = 4
    test_genuine_per_user: int = 12
    forgeries_per_user: int = 12


DEFAULT_PROTOCOL = ProtocolConfig()

DEVELOPMENT = "development"
EVALUATION = "evaluation"


@dataclass
class DatasetSplit:
    development_users: list[str]
    evaluation_users: list[str]
    enrollment: dict[str, list[SignatureRecord]]
    test_genuine: dict[str, list[SignatureRecord]]
    test_forgeries: dict[str, list[SignatureRecord]]
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def users(self, partition: str) -> list[str]:
        if partition == DEVELOPMENT:
            return self.development_users
        if partition == EVALUATION:
            return self.evaluation_users
        raise ValueError(f"unknown partition {partition!r}")

    def records(self, partition: str):
        """All records of one partition, in deterministic order."""
        for user in self.users(partition):
            yield from self.enrollment[user]
            yield from self.test_genuine[user]
            yield from self.test_forgeries[user]


@dataclass(frozen=True)
class Pair:
    """One enrollment-vs-probe comparison.

    label 1 = genuine probe of the same user, label 0 = impostor probe.
    enroll_index / probe_index are positions within the user's
    enrollment and probe lists, which is what 4vs1 aggregation groups by.
    """

    user_id: str
    enroll_index: int
    probe_index: int
    enroll_key: str
    probe_key: str
    label: int


PairList = list


def _sig_sort_key(rec: SignatureRecord):
    return (rec.session, rec.sample_index, rec.key)


def build_split(
    records: list[SignatureRecord],
    n_dev_users: int,
    protocol: ProtocolConfig = DEFAULT_PROTOCOL,
) -> DatasetSplit:
    """Partition records into a development/evaluation split.

    Users are ordered lexicographically by id; the first ``n_dev_users``
    form the development set. Per user: enrollment = first
    ``enrollment_per_user`` session-1 genuine records, test genuine =
    first ``test_genuine_per_user`` genuine records from sessions >= 2,
    forgeries = first ``forgeries_per_user`` skilled forgeries, each in
    (session, sample_index) order.
    """
    by_user: dict[str, list[SignatureRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    users = sorted(by_user)
    if n_dev_users < 0:
        raise ProtocolError("n_dev_users must be non-negative")
    if n_dev_users > len(users):
        raise ProtocolError(
            f"n_dev_users={n_dev_users} exceeds the {len(users)} available users"
        )

    enrollment, test_genuine, test_forgeries = {}, {}, {}
    for user in users:
        recs = by_user[user]
        session1 = sorted(
            (r for r in recs if r.kind is SignatureKind.GENUINE and r.session == 1),
            key=_sig_sort_key,
        )
        later = sorted(
            (r for r in recs if r.kind is SignatureKind.GENUINE and r.session >= 2),
            key=_sig_sort_key,
        )
        forgeries = sorted(
            (r for r in recs if r.kind is SignatureKind.SKILLED_FORGERY),
            key=_sig_sort_key,
        )
        if len(session1) < protocol.enrollment_per_user:
            raise ProtocolError(
                f"user {user!r}: {len(session1)} session-1 genuine signatures, "
                f"protocol needs {protocol.enrollment_per_user}"
            )
        if len(later) < protocol.test_genuine_per_user:
            raise ProtocolError(
                f"user {user!r}: {len(later)} later-session genuine signatures, "
                f"protocol needs {protocol.test_genuine_per_user}"
            )
        if len(forgeries) < protocol.forgeries_per_user:
            raise ProtocolError(
                f"user {user!r}: {len(forgeries)} skilled forgeries, "
                f"protocol needs {protocol.forgeries_per_user}"
            )
        enrollment[user] = session1[: protocol.enrollment_per_user]
        test_genuine[user] = later[: protocol.test_genuine_per_user]
        test_forgeries[user] = forgeries[: protocol.forgeries_per_user]

    return DatasetSplit(
        development_users=users[:n_dev_users],
        evaluation_users=users[n_dev_users:],
        enrollment=enrollment,
        test_genuine=test_genuine,
        test_forgeries=test_forgeries,
        protocol=protocol,
    )


def build_pairs(split: DatasetSplit, partition: str) -> list[Pair]:
    """Enrollment x probe comparisons for one partition.

    Per user: every enrollment signature against every test genuine
    (label 1) and against every skilled forgery (label 0), ordered by
    (user, enrollment index, probe index). With E enrollment and P
    probes per class this yields E*P pairs of each label per user.
    """
    pairs: list[Pair] = []
    for user in split.users(partition):
        for label, probes in ((1, split.test_genuine[user]), (0, split.test_forgeries[user])):
            for ei, enroll in enumerate(split.enrollment[user]):
                for pi, probe in enumerate(probes):
                    pairs.append(
                        Pair(
                            user_id=user,
                            enroll_index=ei,
                            probe_index=pi,
                            enroll_key=enroll.key,
                            probe_key=probe.key,
                            label=label,
                        )
                    )
    return pairs


def build_random_impostor_pairs(split: DatasetSplit, partition: str) -> list[Pair]:
    """Impostor pairs for the random-forgery protocol variant.

    Each user's enrollment signatures are compared with one genuine
    signature of every other user in the partition (their first test
    genuine). Labels are all 0; combine with the label-1 pairs from
    build_pairs for a full random-forgery score set.
    """
    users = split.users(partition)
    pairs: list[Pair] = []
    for user in users:
        others = [u for u in users if u != user]
        for ei, enroll in enumerate(split.enrollment[user]):
            for pi, other in enumerate(others):
                probe = split.test_genuine[other][0]
                pairs.append(
                    Pair(
                        user_id=user,
                        enroll_index=ei,
                        probe_index=pi,
                        enroll_key=enroll.key,
                        probe_key=probe.key,
                        label=0,
                    )
                )
    return pairs


_KIND_BY_NAME = {k.value: k for k in SignatureKind}


def record_filename(record: SignatureRecord) -> str:
    return f"{record.kind.value}_{record.session}_{record.sample_index:02d}.svc"


def _parse_record_filename(name: str) -> tuple[SignatureKind, int, int]:
    stem = name[: -len(".svc")] if name.endswith(".svc") else name
    parts = stem.split("_")
    if len(parts) != 3 or parts[0] not in _KIND_BY_NAME:
        raise ProtocolError(
            f"file name {name!r} does not match <kind>_<session>_<index>.svc"
        )
    return _KIND_BY_NAME[parts[0]], int(parts[1]), int(parts[2])


def load_dataset(root: str | Path, manifest: str | Path | None = None) -> list[SignatureRecord]:
    """Load every signature under ``root``.

    Default layout: ``<root>/<user_id>/<kind>_<session>_<index>.svc``.
    A manifest file overrides the layout: one record per line,
    tab-separated ``path  user_id  kind  session  index`` with paths
    relative to the manifest's directory (or absolute).
    """
    records: list[SignatureRecord] = []
    if manifest is not None:
        manifest = Path(manifest)
        base = manifest.parent
        for ln, raw in enumerate(manifest.read_text().splitlines(), start=1):
            if not raw.strip() or raw.startswith("#"):
                continue
            fields = raw.rstrip("\n").split("\t")
            if len(fields) != 5:
                raise ProtocolError(f"{manifest}:{ln}: expected 5 tab-separated fields")
            path, user_id, kind_name, session, index = fields
            if kind_name not in _KIND_BY_NAME:
                raise ProtocolError(f"{manifest}:{ln}: unknown kind {kind_name!r}")
            p = Path(path)
            if not p.is_absolute():
                p = base / p
            records.append(
                parse_svc(
                    p.read_bytes(),
                    user_id=user_id,
                    kind=_KIND_BY_NAME[kind_name],
                    session=int(session),
                    sample_index=int(index),
                )
            )
        return records

    root = Path(root)
    if not root.is_dir():
        raise ProtocolError(f"dataset root {root} is not a directory")
    for user_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for svc_path in sorted(user_dir.glob("*.svc")):
            kind, session, index = _parse_record_filename(svc_path.name)
            records.append(
                parse_svc(
                    svc_path.read_bytes(),
                    user_id=user_dir.name,
                    kind=kind,
                    session=session,
                    sample_index=index,
                )
            )
    return records
