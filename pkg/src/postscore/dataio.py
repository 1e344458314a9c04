"""File formats: posts JSONL, the CSV family, model JSON, run manifests.

All writers are deterministic: floats are serialized with repr (shortest
round-trip), rows follow a defined order, and nothing embeds timestamps, so
identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataFormatError
from .model import CurvePoint, LinearModel, UserPrediction
from .stats import CorrelationReport
from .textproc import FEATURE_COLUMNS, RawPost, UserSurfaceFeatures
from .transfer import InstitutionScore

MANIFEST_NAME = "manifest.json"

PREDICTIONS_HEADER = ["user_id", "predicted", "n_posts_used"]
FEATURES_HEADER = ["user_id"] + FEATURE_COLUMNS
REPORT_HEADER = ["metric", "r", "n", "p", "r_squared"]
INSTITUTIONS_HEADER = ["institution_id", "n_users", "n_posts", "predicted_mean", "reference"]
RANKING_HEADER = ["word", "score", "freq", "percentile"]
PLOT_HEADER = ["word", "x", "y", "score"]
CURVE_HEADER = ["n_posts", "r", "ci_low", "ci_high"]
LABELS_HEADER = ["user_id", "score"]
MAPPING_HEADER = ["user_id", "institution_id"]
REFERENCE_HEADER = ["institution_id", "score"]
FREQ_HEADER = ["word", "count"]


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------- posts JSONL


def iter_posts_jsonl(path) -> Iterator[RawPost]:
    """Stream posts from a JSON-lines file, one object per line."""
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", path=path, line=lineno) from None
            if not isinstance(obj, dict):
                raise DataFormatError("post must be a JSON object", path=path, line=lineno)
            try:
                user_id = obj["user_id"]
                post_id = obj["post_id"]
                text = obj["text"]
            except KeyError as exc:
                raise DataFormatError(f"missing field {exc.args[0]!r}", path=path, line=lineno) from None
            is_repost = obj.get("is_repost", False)
            if (
                not isinstance(user_id, str)
                or not isinstance(post_id, str)
                or not isinstance(text, str)
                or not isinstance(is_repost, bool)
            ):
                raise DataFormatError("field has the wrong type", path=path, line=lineno)
            yield RawPost(user_id=user_id, post_id=post_id, text=text, is_repost=is_repost)


def write_posts_jsonl(path, posts: Iterable[RawPost]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for post in posts:
            record = {"user_id": post.user_id, "post_id": post.post_id, "text": post.text}
            if post.is_repost:
                record["is_repost"] = True
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            f.write("\n")


# ------------------------------------------------------------------ CSV files


def _open_csv_writer(path):
    f = open(path, "w", encoding="utf-8", newline="")
    return f, csv.writer(f, lineterminator="\n")


def _read_csv_rows(path, header: list[str]):
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        first = next(reader, None)
        if first != header:
            raise DataFormatError(f"expected header `{','.join(header)}`", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields", path=path, line=lineno)
            yield lineno, row


def read_labels_csv(path) -> dict[str, float]:
    """user_id -> target score."""
    labels: dict[str, float] = {}
    for lineno, row in _read_csv_rows(path, LABELS_HEADER):
        try:
            value = float(row[1])
        except ValueError:
            raise DataFormatError("score must be a number", path=path, line=lineno) from None
        if row[0] in labels:
            raise DataFormatError(f"duplicate user {row[0]!r}", path=path, line=lineno)
        labels[row[0]] = value
    if not labels:
        raise DataFormatError("labels file has no rows", path=path, line=1)
    return labels


def write_labels_csv(path, labels: dict) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(LABELS_HEADER)
        for user_id in sorted(labels):
            writer.writerow([user_id, _fmt(labels[user_id])])


def read_mapping_pairs(path) -> list[tuple[str, str]]:
    return [(row[0], row[1]) for _, row in _read_csv_rows(path, MAPPING_HEADER)]


def write_mapping_csv(path, mapping: dict) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(MAPPING_HEADER)
        for user_id in sorted(mapping):
            writer.writerow([user_id, mapping[user_id]])


def read_reference_csv(path) -> dict[str, float]:
    reference: dict[str, float] = {}
    for lineno, row in _read_csv_rows(path, REFERENCE_HEADER):
        try:
            reference[row[0]] = float(row[1])
        except ValueError:
            raise DataFormatError("score must be a number", path=path, line=lineno) from None
    return reference


def write_reference_csv(path, reference: dict) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(REFERENCE_HEADER)
        for inst in sorted(reference):
            writer.writerow([inst, _fmt(reference[inst])])


def write_freq_csv(path, freq: dict) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(FREQ_HEADER)
        for word in sorted(freq):
            writer.writerow([word, int(freq[word])])


def write_features_csv(path, features: Iterable[UserSurfaceFeatures]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(FEATURES_HEADER)
        for u in features:
            writer.writerow(
                [
                    u.user_id,
                    _fmt(u.caps_rate),
                    _fmt(u.emoji_rate),
                    _fmt(u.exclaim_rate),
                    _fmt(u.latin_rate),
                    _fmt(u.avg_post_len),
                    _fmt(u.avg_word_len),
                    u.vocab_size,
                    _fmt(u.entropy_bits),
                ]
            )


def read_features_csv(path) -> list[dict]:
    """Rows as dicts with float feature values (vocab_size included)."""
    rows = []
    for lineno, row in _read_csv_rows(path, FEATURES_HEADER):
        try:
            values = {name: float(v) for name, v in zip(FEATURE_COLUMNS, row[1:])}
        except ValueError:
            raise DataFormatError("bad feature value", path=path, line=lineno) from None
        values["user_id"] = row[0]
        rows.append(values)
    return rows


def write_predictions_csv(path, predictions: Iterable[UserPrediction]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(PREDICTIONS_HEADER)
        for p in predictions:
            writer.writerow([p.user_id, _fmt(p.predicted), p.n_posts_used])


def read_predictions_csv(path) -> list[UserPrediction]:
    out = []
    for lineno, row in _read_csv_rows(path, PREDICTIONS_HEADER):
        try:
            out.append(UserPrediction(row[0], float(row[1]), int(row[2])))
        except ValueError:
            raise DataFormatError("bad prediction row", path=path, line=lineno) from None
    return out


def write_report_csv(path, rows: Iterable[tuple[str, CorrelationReport]]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(REPORT_HEADER)
        for metric, rep in rows:
            writer.writerow([metric, _fmt(rep.r), rep.n, _fmt(rep.p_two_sided), _fmt(rep.r_squared)])


def write_institutions_csv(path, scores: Iterable[InstitutionScore]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(INSTITUTIONS_HEADER)
        for s in scores:
            writer.writerow(
                [
                    s.institution_id,
                    s.n_users,
                    s.n_posts,
                    _fmt(s.predicted_mean),
                    "" if s.reference is None else _fmt(s.reference),
                ]
            )


def write_excluded_csv(path, excluded: Iterable[tuple[str, int]]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(["institution_id", "n_users"])
        for inst, n_users in excluded:
            writer.writerow([inst, n_users])


def write_ranking_csv(path, word_scores: Iterable) -> int:
    """Stream WordScore rows; returns the number of rows written."""
    n = 0
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(RANKING_HEADER)
        for ws in word_scores:
            writer.writerow(
                [ws.word, _fmt(ws.score), "" if ws.freq is None else ws.freq, _fmt(ws.percentile)]
            )
            n += 1
    return n


def write_plot_csv(path, rows: Iterable[tuple[str, float, float, float]]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(PLOT_HEADER)
        for word, x, y, score in rows:
            writer.writerow([word, _fmt(x), _fmt(y), _fmt(score)])


def write_curve_csv(path, points: Iterable[CurvePoint]) -> None:
    f, writer = _open_csv_writer(path)
    with f:
        writer.writerow(CURVE_HEADER)
        for p in points:
            writer.writerow([p.n_posts, _fmt(p.r), _fmt(p.ci_low), _fmt(p.ci_high)])


# ------------------------------------------------------------------ model JSON


def save_model_json(path, model: LinearModel, extra: dict | None = None) -> None:
    payload = model.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def load_model_json(path) -> tuple[LinearModel, dict]:
    """Returns (model, full payload) so callers can read extension fields."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    try:
        model = LinearModel.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad model file: {exc}", path=path) from None
    return model, payload


# -------------------------------------------------------------------- manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, params: dict, inputs: dict, outputs: dict, seed) -> Path:
    """Record provenance beside the outputs: input/output hashes, parameters,
    the seed, and the package version. Deliberately timestamp-free so reruns
    are byte-identical.
    """
    from . import __version__

    manifest = {
        "format_version": 1,
        "tool": "postscore",
        "version": __version__,
        "command": command,
        "seed": seed,
        "params": {k: v for k, v in sorted(params.items())},
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted(inputs.items())
        },
        "outputs": {
            name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted(outputs.items())
        },
    }
    path = Path(out_dir) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return path
